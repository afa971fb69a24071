//! Independent reference computations checked against the library: dense
//! Kronecker-product assembly, dense implicit Euler, a lumped-capacitance
//! limit, closed-form bar solutions and dense least squares.

#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use heatrecon_core::inverse::{gn_iterate, ncg_iterate, GnWorkspace, NcgState};
use heatrecon_core::multichoice::total_heat;
use heatrecon_core::{
    assemble_flux_load, assemble_global, build_box_mesh, build_reconstruction_stack, classify_boundary,
    reconstruct_step, recover_fq, run_forward, steady_solve, BoxFace, LossWeights, MaterialProperties,
    ReconstructionConfig,
};

fn steel() -> MaterialProperties {
    MaterialProperties {
        k: 25.84,
        rho: 7760.0,
        cp: 416.8,
        h: 135.0,
        t_ambient: 20.0,
    }
}

struct DenseModel {
    c: Dense,
    k_base: Dense,
    convection: Dense,
    /// Heated-face boundary mass operator; `flux · 1 · q` is the flux load.
    flux: Dense,
}

fn face_operator(face: BoxFace, lengths: [f64; 3], div: [usize; 3]) -> Dense {
    let m: Vec<Dense> = (0..3).map(|a| mass_1d(div[a], lengths[a])).collect();
    let (axis, high) = face.axis();
    let p = unit_projector(div[axis] + 1, if high { div[axis] } else { 0 });
    match axis {
        0 => kron3(&m[2], &m[1], &p),
        1 => kron3(&m[2], &p, &m[0]),
        _ => kron3(&p, &m[1], &m[0]),
    }
}

fn dense_model(lengths: [f64; 3], div: [usize; 3], heated: BoxFace, props: &MaterialProperties) -> DenseModel {
    let m: Vec<Dense> = (0..3).map(|a| mass_1d(div[a], lengths[a])).collect();
    let k: Vec<Dense> = (0..3).map(|a| stiff_1d(div[a], lengths[a])).collect();
    let c = scale(&kron3(&m[2], &m[1], &m[0]), props.rho * props.cp);
    let mut kb = kron3(&m[2], &m[1], &k[0]);
    kb = add(&kb, &kron3(&m[2], &k[1], &m[0]), 1.0);
    kb = add(&kb, &kron3(&k[2], &m[1], &m[0]), 1.0);
    let n = c.len();
    let mut conv = vec![vec![0.0; n]; n];
    for face in BoxFace::ALL.into_iter().filter(|&f| f != heated) {
        conv = add(&conv, &face_operator(face, lengths, div), props.h);
    }
    DenseModel {
        c,
        k_base: scale(&kb, props.k),
        convection: conv,
        flux: face_operator(heated, lengths, div),
    }
}

#[test]
fn global_matrices_match_kronecker_products() {
    let cases = [
        ([1.0, 1.0, 1.0], [1, 1, 1], BoxFace::ZMax),
        ([0.3, 0.2, 0.05], [2, 3, 1], BoxFace::ZMax),
        ([0.1, 0.4, 0.2], [3, 2, 4], BoxFace::XMin),
        ([0.2, 0.2, 0.025], [4, 4, 2], BoxFace::YMax),
    ];
    let props = steel();
    for (lengths, div, heated) in cases {
        let mesh = build_box_mesh(lengths, div).unwrap();
        let sets = classify_boundary(&mesh, heated);
        let sys = assemble_global(&mesh, &sets, &props).unwrap();
        let oracle = dense_model(lengths, div, heated, &props);
        for (name, got, want) in [
            ("C", to_dense(&sys.c), &oracle.c),
            ("K_base", to_dense(&sys.k_base), &oracle.k_base),
            ("H", to_dense(&sys.convection), &oracle.convection),
        ] {
            let err = max_diff_dense(&got, want) / max_abs_dense(want);
            assert!(err <= 1e-13, "{name} on {div:?}: relative error {err:e}");
        }
        let ones = vec![1.0; sys.n_nodes];
        let f_h: Vec<f64> = matvec(&oracle.convection, &ones)
            .iter()
            .map(|v| v * props.t_ambient)
            .collect();
        let fq_want: Vec<f64> = matvec(&oracle.flux, &ones).iter().map(|v| v * 5e4).collect();
        let fq = assemble_flux_load(&mesh, &sets, 5e4).unwrap();
        let scale_h = f_h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale_q = fq_want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..sys.n_nodes {
            assert!((sys.f_h[i] - f_h[i]).abs() <= 1e-13 * scale_h, "f_h[{i}] on {div:?}");
            assert!((fq[i] - fq_want[i]).abs() <= 1e-13 * scale_q, "f_q[{i}] on {div:?}");
        }
    }
}

#[test]
fn implicit_euler_matches_dense_march() {
    let (lengths, div) = ([0.06, 0.04, 0.02], [3, 2, 2]);
    let props = steel();
    let mesh = build_box_mesh(lengths, div).unwrap();
    let sets = classify_boundary(&mesh, BoxFace::ZMax);
    let sys = assemble_global(&mesh, &sets, &props).unwrap();
    let oracle = dense_model(lengths, div, BoxFace::ZMax, &props);
    let n = sys.n_nodes;
    let dt = 0.5;
    let q = |t: f64| 6e5 * t / 180.0;

    let unit = assemble_flux_load(&mesh, &sets, 1.0).unwrap();
    let got = run_forward(&sys, &vec![props.t_ambient; n], dt, 3.0, |t| {
        unit.iter().map(|u| u * q(t)).collect()
    })
    .unwrap();

    let lhs = add(&add(&oracle.k_base, &oracle.convection, 1.0), &oracle.c, 1.0 / dt);
    let flux = matvec(&oracle.flux, &vec![1.0; n]);
    let f_h: Vec<f64> = matvec(&oracle.convection, &vec![props.t_ambient; n]);
    let mut t = vec![props.t_ambient; n];
    for s in 1..got.len() {
        let time = s as f64 * dt;
        let ct = matvec(&oracle.c, &t);
        let rhs: Vec<f64> = (0..n).map(|i| ct[i] / dt + f_h[i] + q(time) * flux[i]).collect();
        t = dense_solve(&lhs, &rhs);
        assert!((got.times[s] - time).abs() < 1e-12);
        // The iterative solve is converged relative to the whole field, not the rise,
        // and its error accumulates over steps.
        let scale = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            assert!(
                (got.fields[s][i] - t[i]).abs() <= 1e-8 * scale,
                "step {s} node {i}: {} vs {}",
                got.fields[s][i],
                t[i]
            );
        }
    }
}

#[test]
fn highly_conductive_body_follows_lumped_model() {
    let props = MaterialProperties { k: 1e5, ..steel() };
    let lengths = [0.02, 0.02, 0.005];
    let mesh = build_box_mesh(lengths, [4, 4, 2]).unwrap();
    let sets = classify_boundary(&mesh, BoxFace::ZMax);
    let sys = assemble_global(&mesh, &sets, &props).unwrap();
    let q = 1e4;
    let load = assemble_flux_load(&mesh, &sets, q).unwrap();
    let dt = 1.0;
    let sol = run_forward(&sys, &vec![props.t_ambient; sys.n_nodes], dt, 20.0, |_| load.clone()).unwrap();

    let [a, b, c] = lengths;
    let heat_capacity = props.rho * props.cp * a * b * c;
    let heated_area = a * b;
    let cooled_area = a * b + 2.0 * (a * c + b * c);
    let mut lumped = props.t_ambient;
    for s in 1..sol.len() {
        lumped = (heat_capacity / dt * lumped + q * heated_area + props.h * cooled_area * props.t_ambient)
            / (heat_capacity / dt + props.h * cooled_area);
        let rise = lumped - props.t_ambient;
        for &v in &sol.fields[s] {
            assert!((v - lumped).abs() <= 1e-3 * rise, "step {s}: {v} vs lumped {lumped}");
        }
    }
}

#[test]
fn steady_bar_reconstruction_is_exact() {
    let sys = three_node_bar();
    let cfg = ReconstructionConfig {
        dt_rec: 1.0,
        s_ncg: 2,
        s_gn: 1,
        weights: LossWeights {
            c1: 1.0,
            c2: 1.0,
            c3: 0.0,
            c4: 0.0,
        },
    };
    let mut ws = GnWorkspace::new();
    let res = reconstruct_step(&sys, &cfg, &[(1, 2.0)], &[0.0; 3], f64::INFINITY, &mut ws).unwrap();
    for (got, want) in res.field.iter().zip([3.0, 2.0, 1.0]) {
        assert!((got - want).abs() <= 1e-12, "{:?}", res.field);
    }
    assert!((res.fq[0] - 1.0).abs() <= 1e-12);
    assert_eq!(&res.fq[1..], &[0.0, 0.0]);
}

#[test]
fn transient_bar_step_solves_the_square_system() {
    // Residual rows at nodes 1 and 2 plus one measurement determine T exactly:
    //   (1/dt + 2) T1 − T0 − T2 = T1_prev / dt
    //   (1/dt + 2) T2 − T1      = T2_prev / dt
    //   T2 = m
    let sys = three_node_bar();
    let (dt, prev, m) = (0.5, [4.0, 3.0, 1.5], 1.2);
    let t1 = (1.0 / dt + 2.0) * m - prev[2] / dt;
    let t0 = (1.0 / dt + 2.0) * t1 - m - prev[1] / dt;
    let cfg = ReconstructionConfig {
        dt_rec: dt,
        s_ncg: 0,
        s_gn: 1,
        weights: LossWeights {
            c1: 1.0,
            c2: 1.0,
            c3: 0.0,
            c4: 0.0,
        },
    };
    let mut ws = GnWorkspace::new();
    let res = reconstruct_step(&sys, &cfg, &[(2, m)], &prev, dt, &mut ws).unwrap();
    for (got, want) in res.field.iter().zip([t0, t1, m]) {
        assert!(
            (got - want).abs() <= 1e-10 * want.abs().max(1.0),
            "{:?} vs {:?}",
            res.field,
            [t0, t1, m]
        );
    }
    // Node-0 equation: (1/dt + 1) T0 − T1 − T0_prev/dt = f_q,0
    let fq = recover_fq(&sys, &res.field, &prev, dt).unwrap();
    let want = (1.0 / dt + 1.0) * t0 - t1 - prev[0] / dt;
    assert!((fq[0] - want).abs() <= 1e-9 * want.abs(), "{} vs {want}", fq[0]);
}

#[test]
fn conjugate_gradient_terminates_on_three_unknowns() {
    let sys = three_node_bar();
    let w = LossWeights {
        c1: 1.0,
        c2: 1.0,
        c3: 0.0,
        c4: 0.0,
    };
    let stack = build_reconstruction_stack(&sys, &[(1, 2.0)], &[0.0; 3], f64::INFINITY, &w).unwrap();
    let mut t = vec![0.0; 3];
    let mut state = NcgState::fresh();
    let initial = stack.loss(&t);
    let mut last = initial;
    for _ in 0..3 {
        let (next, s) = ncg_iterate(&stack, &t, state);
        t = next;
        state = s;
        let loss = stack.loss(&t);
        assert!(loss <= last * (1.0 + 1e-12));
        last = loss;
    }
    assert!(last <= 1e-20 * initial, "loss after three iterations {last:e}");
    for (got, want) in t.iter().zip([3.0, 2.0, 1.0]) {
        assert!((got - want).abs() <= 1e-9);
    }
}

#[test]
fn gauss_newton_matches_dense_normal_equations() {
    let props = steel();
    let mesh = build_box_mesh([0.06, 0.06, 0.02], [3, 3, 2]).unwrap();
    let sets = classify_boundary(&mesh, BoxFace::ZMax);
    let sys = assemble_global(&mesh, &sets, &props).unwrap();
    let n = sys.n_nodes;
    let prev: Vec<f64> = (0..n).map(|i| 20.0 + (i as f64 * 0.37).sin() * 5.0).collect();
    let measured: Vec<(usize, f64)> = (0..n).step_by(3).map(|i| (i, 25.0 + (i as f64 * 0.71).cos())).collect();
    let w = LossWeights {
        c1: 1.0,
        c2: 1.0,
        c3: 1.0,
        c4: 0.0,
    };
    let stack = build_reconstruction_stack(&sys, &measured, &prev, 1.0, &w).unwrap();

    let j = stack.jacobian().to_dense();
    let r0 = stack.residual(&vec![0.0; n]);
    let jt = |v: &[f64]| -> Vec<f64> { (0..n).map(|c| (0..j.len()).map(|r| j[r][c] * v[r]).sum()).collect() };
    let normal: Dense = (0..n)
        .map(|a| (0..n).map(|b| (0..j.len()).map(|r| j[r][a] * j[r][b]).sum()).collect())
        .collect();
    let rhs: Vec<f64> = jt(&r0).iter().map(|v| -v).collect();
    let want = dense_solve(&normal, &rhs);

    let mut ws = GnWorkspace::new();
    let start: Vec<f64> = (0..n).map(|i| 40.0 + (i % 7) as f64).collect();
    let got = gn_iterate(&stack, &start, &mut ws).unwrap();
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        assert!(
            (got[i] - want[i]).abs() <= 1e-8 * scale,
            "node {i}: {} vs {}",
            got[i],
            want[i]
        );
    }
}

#[test]
fn total_heat_is_net_boundary_input_for_forward_fields() {
    let props = steel();
    let lengths = [0.04, 0.03, 0.01];
    let mesh = build_box_mesh(lengths, [4, 3, 2]).unwrap();
    let sets = classify_boundary(&mesh, BoxFace::ZMax);
    let sys = assemble_global(&mesh, &sets, &props).unwrap();
    let q = 2e4;
    let load = assemble_flux_load(&mesh, &sets, q).unwrap();
    let dt = 2.0;
    let sol = run_forward(&sys, &vec![props.t_ambient; sys.n_nodes], dt, 10.0, |_| load.clone()).unwrap();

    // Bilinear temperature on a rectangle integrates to area × mean of its corners.
    let convective_loss = |t: &[f64]| -> f64 {
        sets.gamma_h_faces
            .iter()
            .map(|&f| {
                let face = &mesh.boundary_faces()[f];
                let area = mesh.face_area(face.label) / face_count(&mesh, face.label);
                let mean = face.nodes.iter().map(|&v| t[v]).sum::<f64>() / 4.0;
                props.h * area * (mean - props.t_ambient)
            })
            .sum()
    };
    let input = q * lengths[0] * lengths[1];
    for s in 1..sol.len() {
        let got = total_heat(&sys, &sol.fields[s], &sol.fields[s - 1], dt).unwrap();
        let want = input - convective_loss(&sol.fields[s]);
        assert!((got - want).abs() <= 1e-7 * input, "step {s}: {got} vs {want}");
    }

    let steady = steady_solve(&sys, &load).unwrap();
    assert!((convective_loss(&steady) - input).abs() <= 1e-7 * input);
}

fn face_count(mesh: &heatrecon_core::Mesh, label: BoxFace) -> f64 {
    mesh.boundary_faces().iter().filter(|f| f.label == label).count() as f64
}
