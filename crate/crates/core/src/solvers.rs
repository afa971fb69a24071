//! Linear solvers for the symmetric positive definite systems that show up in
//! forward stepping and in the Gauss–Newton normal equations.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm2, CsrMatrix};

/// Outcome of an iterative solve.
#[derive(Clone, Copy, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradient for an SPD matrix.
///
/// Stops once `‖b − A x‖ ≤ tol · ‖b‖`. A zero right-hand side returns zero.
pub fn pcg_jacobi(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precondition = |r: &[f64], z: &mut [f64]| {
        z.iter_mut()
            .zip(r)
            .zip(&inv_diag)
            .for_each(|((zi, ri), di)| *zi = ri * di)
    };
    pcg(
        |p, q| a.mul_vec_into(p, q),
        precondition,
        b,
        x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; n]),
        tol,
        max_iter,
    )
}

/// Preconditioned conjugate gradient on an abstract operator.
///
/// `apply(p, q)` writes `A p` into `q`; `precondition(r, z)` writes `M⁻¹ r` into `z`.
/// Fails with [`Error::SolverBreakdown`] unless the true relative residual
/// reaches `tol`.
pub fn pcg<A, P>(
    apply: A,
    precondition: P,
    b: &[f64],
    x: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)>
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]),
{
    let (x, stats) = pcg_unchecked(apply, precondition, b, x, tol, max_iter);
    if !stats.relative_residual.is_finite() || stats.relative_residual > tol {
        return Err(Error::SolverBreakdown {
            iterations: stats.iterations,
            residual: stats.relative_residual,
        });
    }
    Ok((x, stats))
}

/// Same iteration as [`pcg`], returning the final iterate and its true
/// residual whether or not `tol` was reached.
pub(crate) fn pcg_unchecked<A, P>(
    mut apply: A,
    mut precondition: P,
    b: &[f64],
    mut x: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveStats)
where
    A: FnMut(&[f64], &mut [f64]),
    P: FnMut(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return (
            vec![0.0; n],
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        );
    }
    let mut q = vec![0.0; n];
    apply(&x, &mut q);
    let mut r: Vec<f64> = b.iter().zip(&q).map(|(bi, qi)| bi - qi).collect();
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = norm2(&r) / b_norm;

    let mut iterations = 0;
    while rel > tol && iterations < max_iter {
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        iterations += 1;
        rel = norm2(&r) / b_norm;
        if rel <= tol {
            break;
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }

    // Report the true residual, not the recursively updated one.
    apply(&x, &mut q);
    let true_rel = b.iter().zip(&q).map(|(bi, qi)| (bi - qi).powi(2)).sum::<f64>().sqrt() / b_norm;
    (
        x,
        SolveStats {
            iterations,
            relative_residual: true_rel,
        },
    )
}

/// Reverse Cuthill–McKee ordering of a symmetric sparsity pattern.
///
/// Returns `perm` with `perm[new] = old`. Each connected component starts from
/// a pseudo-peripheral node; neighbours are visited by increasing degree, ties
/// by index, so the ordering is deterministic.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree = |i: usize| adjacency[i].len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, seen: &mut Vec<bool>| -> Vec<Vec<usize>> {
        let mut levels = vec![vec![start]];
        let mut mark = seen.clone();
        mark[start] = true;
        loop {
            let mut next = Vec::new();
            for &u in levels.last().unwrap() {
                for &v in &adjacency[u] {
                    if !mark[v] {
                        mark[v] = true;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            levels.push(next);
        }
        levels
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        // Find a pseudo-peripheral start node within this component.
        let mut start = seed;
        let mut best_depth = 0;
        let mut component: Vec<usize> = bfs_levels(seed, &mut visited).concat();
        component.sort_unstable();
        if let Some(&min_deg) = component.iter().min_by_key(|&&i| (degree(i), i)) {
            start = min_deg;
        }
        for _ in 0..8 {
            let levels = bfs_levels(start, &mut visited);
            if levels.len() <= best_depth {
                break;
            }
            best_depth = levels.len();
            let last = levels.last().unwrap();
            let candidate = *last.iter().min_by_key(|&&i| (degree(i), i)).unwrap();
            if candidate == start {
                break;
            }
            let deeper = bfs_levels(candidate, &mut visited).len();
            if deeper <= best_depth {
                break;
            }
            start = candidate;
        }

        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        let mut neighbours = Vec::new();
        while let Some(u) = queue.pop_front() {
            order.push(u);
            neighbours.clear();
            neighbours.extend(adjacency[u].iter().copied().filter(|&v| !visited[v]));
            neighbours.sort_unstable_by_key(|&v| (degree(v), v));
            for &v in &neighbours {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (profile) Cholesky factorization `P A Pᵀ = L Lᵀ` with an RCM permutation.
///
/// Row `i` of `L` is stored contiguously from its first structural nonzero
/// up to the diagonal.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Relative pivot floor below which the matrix is treated as rank deficient.
    pub const DEFAULT_PIVOT_TOLERANCE: f64 = 1e-10;

    /// Factors a symmetric positive definite CSR matrix.
    ///
    /// A pivot that falls to `pivot_tol` times its original diagonal (or below)
    /// is reported as [`Error::RankDeficient`], naming the original row.
    pub fn factor(a: &CsrMatrix, pivot_tol: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidArgument("cholesky: matrix is not square".into()));
        }
        let adjacency: Vec<Vec<usize>> = (0..n)
            .map(|i| a.row(i).0.iter().copied().filter(|&j| j != i).collect())
            .collect();
        let perm = reverse_cuthill_mckee(&adjacency);
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv_perm[old];
            for &c in a.row(old).0 {
                let j = inv_perm[c];
                if j < first[i] {
                    first[i] = j;
                }
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        let mut diag = vec![0.0; n];
        for old in 0..n {
            let i = inv_perm[old];
            let (cols, vals) = a.row(old);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = inv_perm[c];
                if j <= i {
                    values[offset[i] + j - first[i]] = v;
                }
                if j == i {
                    diag[i] = v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let s = {
                    let li = &values[offset[i] + k0 - fi..offset[i] + j - fi];
                    let lj = &values[offset[j] + k0 - fj..offset[j] + j - fj];
                    dot(li, lj)
                };
                let ljj = values[offset[j + 1] - 1];
                let idx = offset[i] + j - fi;
                values[idx] = (values[idx] - s) / ljj;
            }
            let row = &values[offset[i]..offset[i + 1] - 1];
            let d = values[offset[i + 1] - 1] - dot(row, row);
            let scale = diag[i].abs().max(f64::MIN_POSITIVE);
            if !(d > pivot_tol * scale) {
                return Err(Error::RankDeficient {
                    node: perm[i],
                    ratio: d / scale,
                });
            }
            values[offset[i + 1] - 1] = d.sqrt();
        }

        Ok(Self {
            perm,
            inv_perm,
            first,
            offset,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; b.len()];
        self.solve_into(b, &mut y);
        y
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        let n = self.dim();
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1] - 1];
            let s = dot(row, &y[fi..i]);
            y[i] = (y[i] - s) / self.values[self.offset[i + 1] - 1];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.values[self.offset[i + 1] - 1];
            let yi = y[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1] - 1];
            for (yj, l) in y[fi..i].iter_mut().zip(row) {
                *yj -= l * yi;
            }
        }
        for old in 0..n {
            x[old] = y[self.inv_perm[old]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, shift: f64) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 + shift));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t).unwrap()
    }

    #[test]
    fn pcg_solves_spd_system() {
        let a = laplacian_1d(50, 0.01);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let (x, stats) = pcg_jacobi(&a, &b, None, 1e-12, 500).unwrap();
        assert!(stats.relative_residual <= 1e-12);
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-8);
        }
    }

    #[test]
    fn pcg_reports_breakdown_when_starved() {
        let a = laplacian_1d(200, 0.0);
        let b = vec![1.0; 200];
        let err = pcg_jacobi(&a, &b, None, 1e-12, 3).unwrap_err();
        assert!(matches!(err, Error::SolverBreakdown { iterations: 3, .. }));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplacian_1d(30, 0.0);
        let adj: Vec<Vec<usize>> = (0..30)
            .map(|i| a.row(i).0.iter().copied().filter(|&j| j != i).collect())
            .collect();
        let mut p = reverse_cuthill_mckee(&adj);
        p.sort_unstable();
        assert_eq!(p, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_matches_pcg() {
        // 2D 5-point Laplacian on an 8x8 grid with a mass shift.
        let m = 8;
        let n = m * m;
        let mut t = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let p = i * m + j;
                t.push((p, p, 4.1));
                if i + 1 < m {
                    t.push((p, p + m, -1.0));
                    t.push((p + m, p, -1.0));
                }
                if j + 1 < m {
                    t.push((p, p + 1, -1.0));
                    t.push((p + 1, p, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, n, t).unwrap();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let chol = EnvelopeCholesky::factor(&a, EnvelopeCholesky::DEFAULT_PIVOT_TOLERANCE).unwrap();
        let x = chol.solve(&b);
        let r = a.mul_vec(&x);
        let res: f64 = r.iter().zip(&b).map(|(ri, bi)| (ri - bi).powi(2)).sum::<f64>().sqrt();
        assert!(res < 1e-12 * norm2(&b));
    }

    #[test]
    fn cholesky_flags_singular_matrix() {
        let a = laplacian_1d(10, 0.0);
        // Pure Neumann Laplacian: make the last diagonal match so rows sum to zero.
        let mut t = Vec::new();
        for i in 0..10 {
            let (cols, vals) = a.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let v = if c == i && (i == 0 || i == 9) { 1.0 } else { v };
                t.push((i, c, v));
            }
        }
        let singular = CsrMatrix::from_triplets(10, 10, t).unwrap();
        let err = EnvelopeCholesky::factor(&singular, 1e-10).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }
}
