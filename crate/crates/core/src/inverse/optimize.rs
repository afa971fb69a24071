//! Stage-1 nonlinear conjugate gradient and Stage-2 Gauss–Newton on a
//! residual stack.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::inverse::stack::{loss_and_gradient, ResidualStack};
use crate::solvers::{pcg_unchecked, EnvelopeCholesky};
use crate::sparse::{dot, norm2};

/// Memory carried between NCG iterations.
#[derive(Clone, Debug, Default)]
pub struct NcgState {
    prev_grad: Option<Vec<f64>>,
    prev_dir: Option<Vec<f64>>,
}

impl NcgState {
    pub fn fresh() -> Self {
        Self::default()
    }
}

/// One Polak–Ribière+ iteration with an exact line search.
///
/// Falls back to steepest descent whenever the conjugate direction is not a
/// descent direction. A zero gradient or a direction the stack cannot see
/// (`J d = 0`) leaves `T` unchanged.
pub fn ncg_iterate(stack: &ResidualStack, t: &[f64], state: NcgState) -> (Vec<f64>, NcgState) {
    let (_, g) = loss_and_gradient(stack, t);
    let gg = dot(&g, &g);
    if gg == 0.0 {
        return (t.to_vec(), NcgState::fresh());
    }
    let mut d: Vec<f64> = g.iter().map(|x| -x).collect();
    if let (Some(gp), Some(dp)) = (&state.prev_grad, &state.prev_dir) {
        let gp2 = dot(gp, gp);
        if gp2 > 0.0 {
            let beta = (dot(&g, &g) - dot(&g, gp)) / gp2;
            if beta > 0.0 {
                d.iter_mut().zip(dp).for_each(|(di, pi)| *di += beta * pi);
            }
        }
        if dot(&g, &d) >= 0.0 {
            d = g.iter().map(|x| -x).collect();
        }
    }
    let jd = stack.apply(&d);
    let jd2 = dot(&jd, &jd);
    if jd2 == 0.0 {
        return (t.to_vec(), NcgState::fresh());
    }
    let alpha = -dot(&g, &d) / (2.0 * jd2);
    let next: Vec<f64> = t.iter().zip(&d).map(|(ti, di)| ti + alpha * di).collect();
    (
        next,
        NcgState {
            prev_grad: Some(g),
            prev_dir: Some(d),
        },
    )
}

/// Target and ceiling for the relative residual of the Gauss–Newton normal equations.
const GN_TARGET: f64 = 1e-13;
const GN_CEILING: f64 = 1e-10;
const GN_MAX_ITER: usize = 500;
const CACHE_SLOTS: usize = 4;

/// Cache of preconditioner factorizations keyed by stack structure. A run
/// with a fixed time step reuses the same factor for every step.
#[derive(Default)]
pub struct GnWorkspace {
    cache: Vec<(u64, Arc<EnvelopeCholesky>)>,
    /// Number of factorizations performed so far.
    pub factorizations: usize,
    /// PCG iterations spent in the most recent Gauss–Newton solve.
    pub last_iterations: usize,
}

impl GnWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn preconditioner(&mut self, stack: &ResidualStack) -> Result<Arc<EnvelopeCholesky>> {
        let key = stack.structure_key();
        if let Some((_, f)) = self.cache.iter().find(|(k, _)| *k == key) {
            return Ok(f.clone());
        }
        let local = stack.local_rows();
        let normal = local.transpose().matmul(&local)?;
        let factor = Arc::new(EnvelopeCholesky::factor(
            &normal,
            EnvelopeCholesky::DEFAULT_PIVOT_TOLERANCE,
        )?);
        self.factorizations += 1;
        if self.cache.len() == CACHE_SLOTS {
            self.cache.remove(0);
        }
        self.cache.push((key, factor.clone()));
        Ok(factor)
    }
}

/// One Gauss–Newton step: solves `JᵀJ ΔT = −Jᵀ r(T)` and returns `T + ΔT`.
///
/// The normal equations are solved by conjugate gradients preconditioned with
/// a Cholesky factor of the sparse rows' normal matrix; the group-mean, link
/// and heat rows only add a low-rank correction on top of it. A singular
/// sparse part means the loss does not pin down the field and is reported as
/// [`Error::RankDeficient`].
pub fn gn_iterate(stack: &ResidualStack, t: &[f64], workspace: &mut GnWorkspace) -> Result<Vec<f64>> {
    let factor = workspace.preconditioner(stack)?;
    let r = stack.residual(t);
    let rhs: Vec<f64> = stack.apply_transpose(&r).iter().map(|x| -x).collect();
    let (delta, stats) = pcg_unchecked(
        |p, q| {
            let jp = stack.apply(p);
            q.copy_from_slice(&stack.apply_transpose(&jp));
        },
        |r, z| factor.solve_into(r, z),
        &rhs,
        vec![0.0; t.len()],
        GN_TARGET,
        GN_MAX_ITER,
    );
    workspace.last_iterations = stats.iterations;
    if !stats.relative_residual.is_finite() || stats.relative_residual > GN_CEILING {
        return Err(Error::SolverBreakdown {
            iterations: stats.iterations,
            residual: stats.relative_residual,
        });
    }
    Ok(t.iter().zip(&delta).map(|(a, b)| a + b).collect())
}

/// Loss after each stage iteration plus the final gradient norm.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTrace {
    /// Loss at the initial guess followed by the loss after every iteration.
    pub losses: Vec<f64>,
    pub gradient_norm: f64,
}

impl StageTrace {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("trace holds the initial loss")
    }
}

/// Runs `s_ncg` NCG iterations followed by `s_gn` Gauss–Newton iterations.
pub fn minimize(
    stack: &ResidualStack,
    init: Vec<f64>,
    s_ncg: usize,
    s_gn: usize,
    workspace: &mut GnWorkspace,
) -> Result<(Vec<f64>, StageTrace)> {
    let mut t = init;
    let mut losses = vec![stack.loss(&t)];
    let mut state = NcgState::fresh();
    for _ in 0..s_ncg {
        let (next, s) = ncg_iterate(stack, &t, state);
        t = next;
        state = s;
        losses.push(stack.loss(&t));
    }
    for _ in 0..s_gn {
        t = gn_iterate(stack, &t, workspace)?;
        losses.push(stack.loss(&t));
    }
    let (_, g) = loss_and_gradient(stack, &t);
    Ok((
        t,
        StageTrace {
            losses,
            gradient_norm: norm2(&g),
        },
    ))
}
