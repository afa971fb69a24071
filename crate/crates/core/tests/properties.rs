#![allow(clippy::needless_range_loop)]

mod common;

use common::norm2;
use heatrecon_core::inverse::{ncg_iterate, NcgState};
use heatrecon_core::io::{format_g, read_measurements, write_measurements};
use heatrecon_core::{
    assemble_flux_load, assemble_global, build_box_mesh, build_reconstruction_stack, classify_boundary,
    loss_and_gradient, random_initial_field, transient_step, BoxFace, FluxSchedule, LossWeights, MaterialProperties,
    MeasurementSeries,
};
use proptest::prelude::*;

fn face() -> impl Strategy<Value = BoxFace> {
    prop::sample::select(BoxFace::ALL.to_vec())
}

fn material() -> impl Strategy<Value = MaterialProperties> {
    (
        1.0..400.0f64,
        1.0..500.0f64,
        500.0..20000.0f64,
        100.0..2000.0f64,
        -50.0..200.0f64,
    )
        .prop_map(|(k, h, rho, cp, t_ambient)| MaterialProperties {
            k,
            h,
            rho,
            cp,
            t_ambient,
        })
}

fn is_sorted_unique(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mesh_counts_and_boundary_set_algebra(
        div in (1usize..=8, 1usize..=8, 1usize..=8),
        lengths in (0.01..1.0f64, 0.01..1.0f64, 0.01..1.0f64),
        heated in face(),
    ) {
        let div = [div.0, div.1, div.2];
        let mesh = build_box_mesh([lengths.0, lengths.1, lengths.2], div).unwrap();
        let [nx, ny, nz] = div;
        prop_assert_eq!(mesh.n_nodes(), (nx + 1) * (ny + 1) * (nz + 1));
        prop_assert_eq!(mesh.hexes().len(), nx * ny * nz);
        prop_assert_eq!(mesh.boundary_faces().len(), 2 * (nx * ny + ny * nz + nx * nz));

        let sets = classify_boundary(&mesh, heated);
        let n = mesh.n_nodes();
        for v in [&sets.gamma_q_nodes, &sets.gamma_h_nodes, &sets.gamma_edge_nodes, &sets.gamma_corner_nodes,
                  &sets.interior_and_h_only_nodes, &sets.boundary_nodes] {
            prop_assert!(is_sorted_unique(v));
        }
        for i in 0..n {
            let q = sets.gamma_q_nodes.binary_search(&i).is_ok();
            let h = sets.gamma_h_nodes.binary_search(&i).is_ok();
            let e = sets.gamma_edge_nodes.binary_search(&i).is_ok();
            let b = sets.boundary_nodes.binary_search(&i).is_ok();
            let rest = sets.interior_and_h_only_nodes.binary_search(&i).is_ok();
            prop_assert_eq!(e, q && h);
            prop_assert_eq!(b, q || h);
            prop_assert_eq!(rest, !q);
        }
        // The heated face is a full grid face, and Γh reaches all of its perimeter.
        let (axis, _) = heated.axis();
        let (a, b) = match axis { 0 => (ny, nz), 1 => (nx, nz), _ => (nx, ny) };
        prop_assert_eq!(sets.gamma_q_nodes.len(), (a + 1) * (b + 1));
        prop_assert_eq!(sets.gamma_edge_nodes.len(), 2 * (a + b));
        prop_assert_eq!(sets.gamma_q_faces.len(), a * b);
        prop_assert_eq!(sets.gamma_q_faces.len() + sets.gamma_h_faces.len(), mesh.boundary_faces().len());
        for &c in &sets.gamma_corner_nodes {
            prop_assert!(sets.gamma_edge_nodes.binary_search(&c).is_ok());
            let touching = sets.gamma_q_faces.iter().filter(|&&f| mesh.boundary_faces()[f].nodes.contains(&c)).count();
            prop_assert_eq!(touching, 1);
        }
        if a >= 2 && b >= 2 {
            prop_assert_eq!(sets.gamma_corner_nodes.len(), 4);
        }
        for (i, &p) in mesh.nodes().iter().enumerate() {
            prop_assert_eq!(mesh.nearest_node(p), i);
        }
    }

    #[test]
    fn assembly_invariants(
        div in (1usize..=5, 1usize..=5, 1usize..=4),
        lengths in (0.01..0.5f64, 0.01..0.5f64, 0.005..0.1f64),
        heated in face(),
        props in material(),
        probe in prop::collection::vec(-100.0..100.0f64, 216),
    ) {
        let lengths = [lengths.0, lengths.1, lengths.2];
        let mesh = build_box_mesh(lengths, [div.0, div.1, div.2]).unwrap();
        let sets = classify_boundary(&mesh, heated);
        let sys = assemble_global(&mesh, &sets, &props).unwrap();
        let n = sys.n_nodes;
        let ones = vec![1.0; n];

        for m in [&sys.c, &sys.k, &sys.k_base, &sys.convection] {
            prop_assert!(m.as_csr().max_asymmetry() <= 1e-14 * m.as_csr().max_abs());
        }
        let kb1 = sys.k_base.mul_vec(&ones);
        prop_assert!(kb1.iter().all(|v| v.abs() <= 1e-12 * sys.k_base.as_csr().max_abs()));

        let hta = sys.convection.mul_vec(&vec![props.t_ambient; n]);
        let fh_scale = hta.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n {
            prop_assert!((sys.f_h[i] - hta[i]).abs() <= 1e-12 * fh_scale);
        }

        let volume = lengths.iter().product::<f64>();
        let total_c: f64 = sys.c.mul_vec(&ones).iter().sum();
        prop_assert!((total_c - props.rho * props.cp * volume).abs() <= 1e-10 * props.rho * props.cp * volume);

        let cooled: f64 = BoxFace::ALL.iter().filter(|&&f| f != heated).map(|&f| mesh.face_area(f)).sum();
        let total_h: f64 = sys.convection.mul_vec(&ones).iter().sum();
        prop_assert!((total_h - props.h * cooled).abs() <= 1e-10 * props.h * cooled);

        let flux: f64 = assemble_flux_load(&mesh, &sets, 3.0).unwrap().iter().sum();
        prop_assert!((flux - 3.0 * mesh.face_area(heated)).abs() <= 1e-12 * 3.0 * mesh.face_area(heated));

        let x = &probe[..n];
        let energy: f64 = sys.k_base.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum();
        let mass: f64 = sys.c.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum();
        let bound = 1e-12 * sys.k_base.as_csr().max_abs() * x.iter().map(|v| v * v).sum::<f64>();
        prop_assert!(energy >= -bound);
        prop_assert!(mass > 0.0 || x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_field_has_zero_loss_and_gradient_is_consistent(
        div in (2usize..=4, 2usize..=4, 1usize..=3),
        dt in 0.1..10.0f64,
        q in 0.0..1e5f64,
        prev_seed in any::<u64>(),
        perturb_seed in any::<u64>(),
        stride in 2usize..=5,
    ) {
        let props = MaterialProperties { k: 25.84, h: 135.0, rho: 7760.0, cp: 416.8, t_ambient: 20.0 };
        let mesh = build_box_mesh([0.1, 0.08, 0.02], [div.0, div.1, div.2]).unwrap();
        let sets = classify_boundary(&mesh, BoxFace::ZMax);
        let sys = assemble_global(&mesh, &sets, &props).unwrap();
        let n = sys.n_nodes;
        let prev = random_initial_field(n, 20.0, 60.0, prev_seed, 0).unwrap();
        let load = assemble_flux_load(&mesh, &sets, q).unwrap();
        let t = transient_step(&sys, &prev, dt, &load).unwrap();

        let measured: Vec<(usize, f64)> = (0..n).step_by(stride).map(|i| (i, t[i])).collect();
        let w = LossWeights { c1: 1.0, c2: 1.0, c3: 1.0, c4: 0.0 };
        let stack = build_reconstruction_stack(&sys, &measured, &prev, dt, &w).unwrap();

        let delta = random_initial_field(n, -1.0, 1.0, perturb_seed, 1).unwrap();
        let moved: Vec<f64> = t.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let (loss_moved, g) = loss_and_gradient(&stack, &moved);
        prop_assert!(loss_moved > 0.0);
        prop_assert!(stack.loss(&t) <= 1e-12 * loss_moved, "loss at the forward field {:e} vs {:e}", stack.loss(&t), loss_moved);

        let r = stack.residual(&moved);
        prop_assert!((loss_moved - r.iter().map(|v| v * v).sum::<f64>()).abs() <= 1e-12 * loss_moved);
        let jt_r = stack.jacobian().mul_transpose_vec(&r);
        let diff: Vec<f64> = g.iter().zip(&jt_r).map(|(a, b)| a - 2.0 * b).collect();
        prop_assert!(norm2(&diff) <= 1e-10 * norm2(&g));

        // NCG never increases the loss.
        let mut x = moved;
        let mut state = NcgState::fresh();
        let mut last = loss_moved;
        for _ in 0..4 {
            let (next, s) = ncg_iterate(&stack, &x, state);
            x = next;
            state = s;
            let l = stack.loss(&x);
            prop_assert!(l <= last * (1.0 + 1e-12));
            last = l;
        }
    }

    #[test]
    fn measurement_csv_round_trips_bitwise(
        values in prop::collection::vec(prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 3), 1..6),
        nodes in prop::sample::subsequence((0usize..50).collect::<Vec<_>>(), 3),
    ) {
        let times: Vec<f64> = (0..values.len()).map(|s| s as f64 * 0.1).collect();
        let series = MeasurementSeries { node_ids: nodes.clone(), times: times.clone(), values: values.clone(), noise_stddev: None };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_measurements(&p, &series).unwrap();
        let back = read_measurements(&p).unwrap();
        prop_assert_eq!(&back.node_ids, &nodes);
        prop_assert_eq!(&back.times, &times);
        for (a, b) in back.values.iter().flatten().zip(values.iter().flatten()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn random_fields_respect_bounds_and_are_reproducible(
        n in 1usize..500,
        lo in -100.0..100.0f64,
        width in 1e-6..100.0f64,
        seed in any::<u64>(),
        step in any::<u64>(),
    ) {
        let a = random_initial_field(n, lo, lo + width, seed, step).unwrap();
        prop_assert!(a.iter().all(|&v| v >= lo && v < lo + width));
        prop_assert_eq!(a, random_initial_field(n, lo, lo + width, seed, step).unwrap());
    }

    #[test]
    fn ramp_flux_is_monotone_and_capped(peak in 0.0..1e6f64, ramp in 1.0..500.0f64, t1 in 0.0..1000.0f64, t2 in 0.0..1000.0f64) {
        let f = FluxSchedule::Ramp { peak, ramp_time: ramp };
        let (a, b) = (t1.min(t2), t1.max(t2));
        prop_assert!(f.q_inward(a) <= f.q_inward(b));
        prop_assert!(f.q_inward(b) <= peak);
        prop_assert!(f.q_inward(0.0) == 0.0);
    }

    #[test]
    fn g_format_reads_back_to_six_digits(x in prop::num::f64::NORMAL) {
        let s = format_g(x, 6);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs(), "{} -> {}", x, s);
    }
}
