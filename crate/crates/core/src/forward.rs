//! Implicit-Euler forward solver, used to produce reference solutions and
//! synthetic measurements.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::assembly::{inv_dt, AssembledSystem};
use crate::error::{Error, Result};
use crate::solvers::pcg_jacobi;
use crate::sparse::SparseSymmetricMatrix;

/// Relative residual target of every forward linear solve.
pub const FORWARD_TOLERANCE: f64 = 1e-10;

/// Nodal temperature history, optionally with the boundary load recovered
/// from it. `recovered_fq[s]` is a full nodal vector, zero off Γq.
#[derive(Clone, Debug, PartialEq)]
pub struct TransientSolution {
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    pub recovered_fq: Option<Vec<Vec<f64>>>,
}

impl TransientSolution {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the stored time equal to `t` (within 1e-9 s).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.times.partition_point(|&s| s < t - 1e-9);
        (i < self.times.len() && (self.times[i] - t).abs() <= 1e-9).then_some(i)
    }

    /// Uniform step of the stored series, if there are at least two samples.
    pub fn step(&self) -> Option<f64> {
        (self.times.len() >= 2).then(|| self.times[1] - self.times[0])
    }
}

/// Point temperatures at a fixed set of nodes. `values[s][m]` is the reading
/// of `node_ids[m]` at `times[s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSeries {
    pub node_ids: Vec<usize>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Standard deviation of the additive noise, if any was applied.
    pub noise_stddev: Option<f64>,
}

impl MeasurementSeries {
    /// Readings at time `t` (within 1e-9 s) as `(node, value)` pairs.
    pub fn at_time(&self, t: f64) -> Option<Vec<(usize, f64)>> {
        let s = self.times.iter().position(|&x| (x - t).abs() <= 1e-9)?;
        Some(
            self.node_ids
                .iter()
                .copied()
                .zip(self.values[s].iter().copied())
                .collect(),
        )
    }
}

/// Inward heat flux over Γq as a function of time, W/m².
#[derive(Clone, Debug, PartialEq)]
pub enum FluxSchedule {
    /// Linear growth from zero to `peak` at `ramp_time`, constant afterwards.
    Ramp { peak: f64, ramp_time: f64 },
    /// Piecewise-linear interpolation of `(time, flux)` samples, held constant
    /// beyond the last sample.
    Samples(Vec<(f64, f64)>),
}

impl FluxSchedule {
    pub fn q_inward(&self, t: f64) -> f64 {
        match self {
            FluxSchedule::Ramp { peak, ramp_time } => peak * (t / ramp_time).min(1.0),
            FluxSchedule::Samples(s) => {
                if s.is_empty() {
                    return 0.0;
                }
                let i = s.partition_point(|&(ts, _)| ts <= t);
                if i == 0 {
                    s[0].1
                } else if i == s.len() {
                    s[s.len() - 1].1
                } else {
                    let (t0, q0) = s[i - 1];
                    let (t1, q1) = s[i];
                    q0 + (q1 - q0) * (t - t0) / (t1 - t0)
                }
            }
        }
    }
}

fn check_rhs(system: &AssembledSystem, v: &[f64], what: &str) -> Result<()> {
    if v.len() != system.n_nodes {
        return Err(Error::InvalidArgument(format!(
            "{what} has length {} but the system has {} nodes",
            v.len(),
            system.n_nodes
        )));
    }
    Ok(())
}

/// Solves `K T = f_q + f_h`.
pub fn steady_solve(system: &AssembledSystem, f_q: &[f64]) -> Result<Vec<f64>> {
    check_rhs(system, f_q, "f_q")?;
    let n = system.n_nodes;
    let null = system.k.mul_vec(&vec![1.0; n]);
    let scale = system.k.as_csr().max_abs().max(f64::MIN_POSITIVE);
    if null.iter().all(|v| v.abs() <= 1e-12 * scale) {
        return Err(Error::SingularSystem(
            "stiffness annihilates constant fields (no convection anywhere)".into(),
        ));
    }
    let rhs: Vec<f64> = f_q.iter().zip(&system.f_h).map(|(a, b)| a + b).collect();
    let x0 = vec![system.t_ambient; n];
    let (t, _) = pcg_jacobi(system.k.as_csr(), &rhs, Some(&x0), FORWARD_TOLERANCE, 10 * n)?;
    Ok(t)
}

/// Reusable implicit-Euler stepper for a fixed `dt`.
pub struct TransientStepper<'a> {
    system: &'a AssembledSystem,
    matrix: SparseSymmetricMatrix,
    inv_dt: f64,
}

impl<'a> TransientStepper<'a> {
    pub fn new(system: &'a AssembledSystem, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            system,
            matrix: system.step_matrix(dt)?,
            inv_dt: inv_dt(dt),
        })
    }

    /// Solves `(C/dt + K) T = f_q + f_h + (C/dt) T_prev`.
    pub fn step(&self, t_prev: &[f64], f_q_next: &[f64]) -> Result<Vec<f64>> {
        check_rhs(self.system, t_prev, "T_prev")?;
        check_rhs(self.system, f_q_next, "f_q")?;
        let ct = self.system.c.mul_vec(t_prev);
        let rhs: Vec<f64> = (0..self.system.n_nodes)
            .map(|i| f_q_next[i] + self.system.f_h[i] + self.inv_dt * ct[i])
            .collect();
        let n = self.system.n_nodes;
        let (t, _) = pcg_jacobi(self.matrix.as_csr(), &rhs, Some(t_prev), FORWARD_TOLERANCE, 10 * n)?;
        Ok(t)
    }
}

/// One fully implicit step.
pub fn transient_step(system: &AssembledSystem, t_prev: &[f64], dt: f64, f_q_next: &[f64]) -> Result<Vec<f64>> {
    TransientStepper::new(system, dt)?.step(t_prev, f_q_next)
}

/// Number of `dt` steps that make up `span`, requiring an integer multiple.
pub(crate) fn step_count(span: f64, dt: f64, what: &str) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{what}: time step must be positive, got {dt}"
        )));
    }
    if !(span >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{what}: end time must be non-negative, got {span}"
        )));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 {
        return Err(Error::Misaligned(format!(
            "{what}: {span} s is not a multiple of {dt} s"
        )));
    }
    Ok(n as usize)
}

/// Marches from `t_init` at `t = 0` to `t_end`. The flux load is evaluated at
/// the end of each step.
pub fn run_forward<F>(
    system: &AssembledSystem,
    t_init: &[f64],
    dt: f64,
    t_end: f64,
    mut load_at: F,
) -> Result<TransientSolution>
where
    F: FnMut(f64) -> Vec<f64>,
{
    check_rhs(system, t_init, "T_init")?;
    let steps = step_count(t_end, dt, "forward run")?;
    let stepper = TransientStepper::new(system, dt)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut fields = Vec::with_capacity(steps + 1);
    times.push(0.0);
    fields.push(t_init.to_vec());
    for s in 1..=steps {
        let t = s as f64 * dt;
        let next = stepper.step(&fields[s - 1], &load_at(t))?;
        times.push(t);
        fields.push(next);
    }
    Ok(TransientSolution {
        times,
        fields,
        recovered_fq: None,
    })
}

/// Copies nodal values at every `sample_dt` and optionally adds seeded
/// Gaussian noise.
pub fn sample_measurements(
    solution: &TransientSolution,
    node_ids: &[usize],
    sample_dt: f64,
    noise_stddev: f64,
    noise_seed: u64,
) -> Result<MeasurementSeries> {
    if solution.is_empty() {
        return Err(Error::InvalidArgument("cannot sample an empty solution".into()));
    }
    let n_nodes = solution.fields[0].len();
    if let Some(&bad) = node_ids.iter().find(|&&i| i >= n_nodes) {
        return Err(Error::UnknownNode { node: bad, n_nodes });
    }
    let mut sorted = node_ids.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("measurement node ids must be distinct".into()));
    }
    if !(noise_stddev >= 0.0) || !noise_stddev.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise standard deviation must be >= 0, got {noise_stddev}"
        )));
    }
    let stride = match solution.step() {
        Some(dt) => step_count(sample_dt, dt, "sampling interval")?,
        None => 1,
    };
    if stride == 0 {
        return Err(Error::Misaligned(
            "sampling interval must be at least one solution step".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = (noise_stddev > 0.0).then(|| Normal::new(0.0, noise_stddev).expect("validated standard deviation"));
    let mut times = Vec::new();
    let mut values = Vec::new();
    for s in (0..solution.len()).step_by(stride) {
        times.push(solution.times[s]);
        values.push(
            node_ids
                .iter()
                .map(|&i| {
                    let v = solution.fields[s][i];
                    match &noise {
                        Some(d) => v + d.sample(&mut rng),
                        None => v,
                    }
                })
                .collect(),
        );
    }
    Ok(MeasurementSeries {
        node_ids: node_ids.to_vec(),
        times,
        values,
        noise_stddev: (noise_stddev > 0.0).then_some(noise_stddev),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundarySets;
    use crate::sparse::SparseSymmetricMatrix;

    /// Three-node bar: unit couplings, convection h = 1 at the far node.
    fn bar() -> AssembledSystem {
        let k_base = SparseSymmetricMatrix::from_triplets(
            3,
            vec![
                (0, 0, 1.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 1.0),
            ],
        )
        .unwrap();
        let h = SparseSymmetricMatrix::from_triplets(3, vec![(2, 2, 1.0)]).unwrap();
        let c = SparseSymmetricMatrix::from_triplets(3, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let sets = BoundarySets::from_node_sets(3, &[0], &[2], &[]).unwrap();
        AssembledSystem::from_matrices(c, k_base, h, vec![0.0; 3], sets, 0.0).unwrap()
    }

    #[test]
    fn bar_steady_state() {
        let t = steady_solve(&bar(), &[1.0, 0.0, 0.0]).unwrap();
        for (a, b) in t.iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn no_convection_is_singular() {
        let mut sys = bar();
        sys.k = sys.k_base.clone();
        assert!(matches!(
            steady_solve(&sys, &[1.0, 0.0, 0.0]),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn ramp_schedule() {
        let r = FluxSchedule::Ramp {
            peak: 600000.0,
            ramp_time: 180.0,
        };
        assert_eq!(r.q_inward(0.0), 0.0);
        assert!((r.q_inward(90.0) - 300000.0).abs() < 1e-9);
        assert_eq!(r.q_inward(200.0), 600000.0);
        let s = FluxSchedule::Samples(vec![(0.0, 0.0), (10.0, 100.0)]);
        assert_eq!(s.q_inward(5.0), 50.0);
        assert_eq!(s.q_inward(20.0), 100.0);
    }

    #[test]
    fn misaligned_end_time() {
        let sys = bar();
        assert!(matches!(
            run_forward(&sys, &[0.0; 3], 0.3, 1.0, |_| vec![0.0; 3]),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn sampling_alignment_and_noise() {
        let sys = bar();
        let sol = run_forward(&sys, &[0.0; 3], 0.5, 2.0, |_| vec![1.0, 0.0, 0.0]).unwrap();
        let m = sample_measurements(&sol, &[1], 1.0, 0.0, 0).unwrap();
        assert_eq!(m.times, vec![0.0, 1.0, 2.0]);
        assert_eq!(m.values[2][0], sol.fields[4][1]);
        assert!(matches!(
            sample_measurements(&sol, &[1], 0.75, 0.0, 0),
            Err(Error::Misaligned(_))
        ));
        let a = sample_measurements(&sol, &[0, 2], 0.5, 0.1, 7).unwrap();
        let b = sample_measurements(&sol, &[0, 2], 0.5, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.values,
            sample_measurements(&sol, &[0, 2], 0.5, 0.0, 7).unwrap().values
        );
    }
}
