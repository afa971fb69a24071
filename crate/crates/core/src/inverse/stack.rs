//! Affine residual stacks `r(T) = J T + offset` whose squared norm is the
//! per-step loss.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::ops::Range;

use crate::assembly::{inv_dt, AssembledSystem};
use crate::error::{Error, Result};
use crate::mesh::BoundarySets;
use crate::sparse::{dot, CsrMatrix};

/// Loss term weights. Each residual row carries the square root of its weight
/// so that the loss is exactly `‖r‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// FE-equation residual at nodes off Γq.
    pub c1: f64,
    /// Point measurements.
    pub c2: f64,
    /// Boundary-load smoothing.
    pub c3: f64,
    /// Total-heat goal.
    pub c4: f64,
}

impl LossWeights {
    fn check_common(&self) -> Result<()> {
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3), ("c4", self.c4)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "weight {name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if self.c1 <= 0.0 {
            return Err(Error::InvalidArgument("weight c1 must be positive".into()));
        }
        Ok(())
    }

    pub fn validate_reconstruction(&self) -> Result<()> {
        self.check_common()?;
        if self.c2 <= 0.0 {
            return Err(Error::InvalidArgument(
                "reconstruction needs a positive measurement weight c2".into(),
            ));
        }
        Ok(())
    }

    pub fn validate_generation(&self) -> Result<()> {
        self.check_common()?;
        if self.c4 <= 0.0 {
            return Err(Error::InvalidArgument(
                "generation needs a positive heat-goal weight c4".into(),
            ));
        }
        Ok(())
    }
}

/// What a residual row measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowKind {
    /// FE equation at a node off Γq.
    Residual,
    Measurement,
    /// Load deviation from the Γq-interior mean.
    RegFace,
    /// Load deviation from the edge mean (corners excluded).
    RegEdge,
    /// Load deviation from the corner mean.
    RegCorner,
    /// Edge mean minus twice the corner mean.
    RegLink,
    /// Total boundary heat minus its goal.
    HeatGoal,
}

impl RowKind {
    /// Rows that make up the sparse part used to precondition Gauss–Newton.
    pub(crate) fn is_local(self) -> bool {
        !matches!(self, RowKind::RegLink | RowKind::HeatGoal)
    }
}

/// Which loss a stack represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StackMode {
    Reconstruction,
    Generation,
}

/// Residual rows of one time step.
///
/// Internally the rows are stored uncentered together with index ranges whose
/// entries are replaced by their deviation from the range mean. Applying the
/// Jacobian is `P (R x)` with `P` that centering projector, which keeps every
/// row sparse even though a group-mean row is dense within its group.
#[derive(Clone, Debug)]
pub struct ResidualStack {
    rows: CsrMatrix,
    offset: Vec<f64>,
    labels: Vec<RowKind>,
    centered: Vec<Range<usize>>,
    key: u64,
}

impl ResidualStack {
    fn new(rows: CsrMatrix, raw_offset: Vec<f64>, labels: Vec<RowKind>, centered: Vec<Range<usize>>) -> Self {
        let mut offset = raw_offset;
        for g in &centered {
            center(&mut offset[g.clone()]);
        }
        let mut hasher = DefaultHasher::new();
        rows.ncols().hash(&mut hasher);
        for (i, kind) in labels.iter().enumerate() {
            if kind.is_local() {
                let (cols, vals) = rows.row(i);
                cols.hash(&mut hasher);
                for v in vals {
                    v.to_bits().hash(&mut hasher);
                }
            }
        }
        Self {
            rows,
            offset,
            labels,
            centered,
            key: hasher.finish(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.rows.ncols()
    }

    pub fn labels(&self) -> &[RowKind] {
        &self.labels
    }

    /// The constant part `r(0)`.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Identifies the sparse part of the Jacobian; equal keys mean the Gauss–Newton
    /// preconditioner can be reused.
    pub fn structure_key(&self) -> u64 {
        self.key
    }

    fn center_groups(&self, y: &mut [f64]) {
        for g in &self.centered {
            center(&mut y[g.clone()]);
        }
    }

    /// `J x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.rows.mul_vec(x);
        self.center_groups(&mut y);
        y
    }

    /// `Jᵀ y`
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut yc = y.to_vec();
        self.center_groups(&mut yc);
        self.rows.mul_transpose_vec(&yc)
    }

    /// `r(T) = J T + offset`
    pub fn residual(&self, t: &[f64]) -> Vec<f64> {
        let mut r = self.apply(t);
        r.iter_mut().zip(&self.offset).for_each(|(ri, oi)| *ri += oi);
        r
    }

    pub fn loss(&self, t: &[f64]) -> f64 {
        let r = self.residual(t);
        dot(&r, &r)
    }

    /// The Jacobian as an explicit sparse matrix, with group-mean rows expanded.
    pub fn jacobian(&self) -> CsrMatrix {
        let n = self.n_nodes();
        let mut dense_groups: Vec<(Range<usize>, Vec<f64>)> = Vec::new();
        for g in &self.centered {
            let mut sum = vec![0.0; n];
            for i in g.clone() {
                let (cols, vals) = self.rows.row(i);
                for (c, v) in cols.iter().zip(vals) {
                    sum[*c] += v;
                }
            }
            let len = g.len() as f64;
            sum.iter_mut().for_each(|s| *s /= len);
            dense_groups.push((g.clone(), sum));
        }
        let mut triplets = Vec::new();
        for i in 0..self.n_rows() {
            let (cols, vals) = self.rows.row(i);
            for (c, v) in cols.iter().zip(vals) {
                triplets.push((i, *c, *v));
            }
            if let Some((_, mean)) = dense_groups.iter().find(|(g, _)| g.contains(&i)) {
                for (c, m) in mean.iter().enumerate() {
                    if *m != 0.0 {
                        triplets.push((i, c, -m));
                    }
                }
            }
        }
        CsrMatrix::from_triplets(self.n_rows(), n, triplets).expect("indices in range by construction")
    }

    /// Rows that enter the Gauss–Newton preconditioner, uncentered.
    pub(crate) fn local_rows(&self) -> CsrMatrix {
        let keep = self
            .labels
            .iter()
            .enumerate()
            .filter(|(_, k)| k.is_local())
            .map(|(i, _)| {
                let (c, v) = self.rows.row(i);
                c.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>()
            });
        CsrMatrix::from_rows(self.n_nodes(), keep).expect("rows taken from a valid matrix")
    }
}

fn center(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Loss value and its exact gradient `2 Jᵀ r`.
pub fn loss_and_gradient(stack: &ResidualStack, t: &[f64]) -> (f64, Vec<f64>) {
    let r = stack.residual(t);
    let mut g = stack.apply_transpose(&r);
    g.iter_mut().for_each(|x| *x *= 2.0);
    (dot(&r, &r), g)
}

/// Boundary load implied by a field: `C (T − T_prev)/dt + K T − f_h` on Γq.
///
/// The result is indexed like `sets.gamma_q_nodes`. `dt = ∞` gives the
/// steady-state load.
pub fn recover_fq(system: &AssembledSystem, t_next: &[f64], t_prev: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = system.n_nodes;
    if t_next.len() != n || t_prev.len() != n {
        return Err(Error::InvalidArgument("field length does not match the system".into()));
    }
    let w = inv_dt(dt);
    let diff: Vec<f64> = t_next.iter().zip(t_prev).map(|(a, b)| a - b).collect();
    Ok(system
        .boundary
        .gamma_q_nodes
        .iter()
        .map(|&i| {
            let cap = if w == 0.0 { 0.0 } else { w * system.c.row_dot(i, &diff) };
            cap + system.k.row_dot(i, t_next) - system.f_h[i]
        })
        .collect())
}

/// Scatters a Γq-indexed load into a full nodal vector.
pub fn fq_to_nodal(sets: &BoundarySets, fq: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; sets.n_nodes];
    for (&i, &v) in sets.gamma_q_nodes.iter().zip(fq) {
        out[i] = v;
    }
    out
}

/// Accumulates sparse rows, raw offsets, labels and centered ranges.
struct StackBuilder {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    offset: Vec<f64>,
    labels: Vec<RowKind>,
    centered: Vec<Range<usize>>,
}

impl StackBuilder {
    fn new(n: usize) -> Self {
        Self {
            n,
            rows: Vec::new(),
            offset: Vec::new(),
            labels: Vec::new(),
            centered: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<(usize, f64)>, offset: f64, kind: RowKind) {
        self.rows.push(row);
        self.offset.push(offset);
        self.labels.push(kind);
    }

    fn finish(self) -> ResidualStack {
        let rows = CsrMatrix::from_rows(self.n, self.rows).expect("rows built with sorted columns");
        ResidualStack::new(rows, self.offset, self.labels, self.centered)
    }
}

/// Per-step affine data shared by all stack builders: `A = C/dt + K` and
/// `b = f_h + C T_prev / dt`, so that `f_q = A T − b` on Γq.
struct StepAffine {
    a: CsrMatrix,
    b: Vec<f64>,
}

impl StepAffine {
    fn new(system: &AssembledSystem, t_prev: &[f64], dt: f64) -> Result<Self> {
        let n = system.n_nodes;
        if t_prev.len() != n {
            return Err(Error::InvalidArgument("T_prev length does not match the system".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let w = inv_dt(dt);
        let a = system.step_matrix(dt)?.as_csr().clone();
        let b = if w == 0.0 {
            system.f_h.clone()
        } else {
            let ct = system.c.mul_vec(t_prev);
            system.f_h.iter().zip(&ct).map(|(f, c)| f + w * c).collect()
        };
        Ok(Self { a, b })
    }

    fn scaled_row(&self, i: usize, s: f64) -> Vec<(usize, f64)> {
        let (c, v) = self.a.row(i);
        c.iter().zip(v).map(|(&c, &v)| (c, s * v)).collect()
    }

    /// `s · mean_{i∈group} A_i`, as a sparse row, and the matching `s · mean b`.
    fn mean_row(&self, group: &[usize], s: f64) -> (Vec<(usize, f64)>, f64) {
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for &i in group {
            let (c, v) = self.a.row(i);
            acc.extend(c.iter().copied().zip(v.iter().copied()));
        }
        let scale = s / group.len() as f64;
        let b = scale * group.iter().map(|&i| self.b[i]).sum::<f64>();
        (merge_sorted(acc, scale), b)
    }
}

fn merge_sorted(mut entries: Vec<(usize, f64)>, scale: f64) -> Vec<(usize, f64)> {
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (c, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out.iter_mut().for_each(|e| e.1 *= scale);
    out
}

fn add_rows(a: &[(usize, f64)], b: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut all = a.to_vec();
    all.extend_from_slice(b);
    merge_sorted(all, 1.0)
}

fn push_residual_rows(builder: &mut StackBuilder, sets: &BoundarySets, step: &StepAffine, c1: f64) {
    let s = c1.sqrt();
    for &i in &sets.interior_and_h_only_nodes {
        builder.push(step.scaled_row(i, s), -s * step.b[i], RowKind::Residual);
    }
}

/// Pushes the group-deviation rows (and in generation mode the edge/corner
/// link row). Returns without rows when `c3 == 0`.
fn push_regularization_rows(
    builder: &mut StackBuilder,
    sets: &BoundarySets,
    step: &StepAffine,
    c3: f64,
    mode: StackMode,
) -> Result<()> {
    if c3 == 0.0 {
        return Ok(());
    }
    let s = c3.sqrt();
    let face = sets.face_interior_nodes();
    let edge = sets.edge_only_nodes();
    let corners = &sets.gamma_corner_nodes;
    let groups: [(&[usize], RowKind, &'static str); 3] = [
        (&face, RowKind::RegFace, "heated-surface interior"),
        (&edge, RowKind::RegEdge, "heated-surface edge"),
        (corners, RowKind::RegCorner, "heated-surface corners"),
    ];
    for (nodes, kind, name) in groups {
        if nodes.is_empty() {
            if mode == StackMode::Generation && kind == RowKind::RegCorner {
                log::warn!("no corner nodes on the heated surface; corner smoothing and edge/corner link rows omitted");
                continue;
            }
            return Err(Error::EmptyGroup(name));
        }
        let start = builder.labels.len();
        for &i in nodes {
            builder.push(step.scaled_row(i, s), -s * step.b[i], kind);
        }
        builder.centered.push(start..builder.labels.len());
    }
    if mode == StackMode::Generation && !corners.is_empty() {
        let (edge_row, edge_b) = step.mean_row(&edge, s);
        let (corner_row, corner_b) = step.mean_row(corners, -2.0 * s);
        builder.push(add_rows(&edge_row, &corner_row), -(edge_b + corner_b), RowKind::RegLink);
    }
    Ok(())
}

/// Group-deviation rows evaluated at a field, as a plain vector (unweighted).
///
/// The order is Γq interior, edge, corners, then the link value in generation
/// mode.
pub fn regularization_rows(
    system: &AssembledSystem,
    t_next: &[f64],
    t_prev: &[f64],
    dt: f64,
    mode: StackMode,
) -> Result<Vec<f64>> {
    let step = StepAffine::new(system, t_prev, dt)?;
    let mut builder = StackBuilder::new(system.n_nodes);
    push_regularization_rows(&mut builder, &system.boundary, &step, 1.0, mode)?;
    Ok(builder.finish().residual(t_next))
}

/// Loss rows for reconstructing one step from point measurements.
pub fn build_reconstruction_stack(
    system: &AssembledSystem,
    measurements: &[(usize, f64)],
    t_prev: &[f64],
    dt: f64,
    weights: &LossWeights,
) -> Result<ResidualStack> {
    weights.validate_reconstruction()?;
    let sets = &system.boundary;
    let n = system.n_nodes;
    let step = StepAffine::new(system, t_prev, dt)?;
    let mut builder = StackBuilder::new(n);
    push_residual_rows(&mut builder, sets, &step, weights.c1);

    let s2 = weights.c2.sqrt();
    let mut seen = vec![false; n];
    for &(node, value) in measurements {
        if node >= n {
            return Err(Error::UnknownNode { node, n_nodes: n });
        }
        if std::mem::replace(&mut seen[node], true) {
            return Err(Error::InvalidArgument(format!(
                "node {node} measured twice in one step"
            )));
        }
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite measurement at node {node}")));
        }
        if sets.is_gamma_q(node) && !sets.is_edge(node) {
            log::warn!("measurement node {node} lies inside the heated surface");
        }
        builder.push(vec![(node, s2)], -s2 * value, RowKind::Measurement);
    }
    push_regularization_rows(&mut builder, sets, &step, weights.c3, StackMode::Reconstruction)?;
    Ok(builder.finish())
}

/// Loss rows for generating a field whose total boundary heat tracks `heat_goal`.
pub fn build_generation_stack(
    system: &AssembledSystem,
    heat_goal: f64,
    t_prev: &[f64],
    dt: f64,
    weights: &LossWeights,
) -> Result<ResidualStack> {
    weights.validate_generation()?;
    if !heat_goal.is_finite() {
        return Err(Error::InvalidArgument("heat goal must be finite".into()));
    }
    let sets = &system.boundary;
    let step = StepAffine::new(system, t_prev, dt)?;
    let mut builder = StackBuilder::new(system.n_nodes);
    push_residual_rows(&mut builder, sets, &step, weights.c1);
    push_regularization_rows(&mut builder, sets, &step, weights.c3, StackMode::Generation)?;
    let (row, constant) = heat_row(system, t_prev, dt)?;
    let s4 = weights.c4.sqrt();
    builder.push(
        row.into_iter().map(|(c, v)| (c, s4 * v)).collect(),
        s4 * (constant - heat_goal),
        RowKind::HeatGoal,
    );
    Ok(builder.finish())
}

/// `Σ_{i∈Γ} (C_i/dt + K_base,i)` as a sparse row plus the constant
/// `−Σ_{i∈Γ} C_i T_prev / dt`, so that total heat = row · T + constant.
pub(crate) fn heat_row(system: &AssembledSystem, t_prev: &[f64], dt: f64) -> Result<(Vec<(usize, f64)>, f64)> {
    if t_prev.len() != system.n_nodes {
        return Err(Error::InvalidArgument("T_prev length does not match the system".into()));
    }
    let w = inv_dt(dt);
    let mut acc = Vec::new();
    let mut constant = 0.0;
    for &i in &system.boundary.boundary_nodes {
        let (c, v) = system.k_base.row(i);
        acc.extend(c.iter().copied().zip(v.iter().copied()));
        if w != 0.0 {
            let (c, v) = system.c.row(i);
            acc.extend(c.iter().copied().zip(v.iter().map(|&v| w * v)));
            constant -= w * system.c.row_dot(i, t_prev);
        }
    }
    Ok((merge_sorted(acc, 1.0), constant))
}
