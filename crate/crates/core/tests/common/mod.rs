#![allow(dead_code, clippy::needless_range_loop)]

use heatrecon_core::{AssembledSystem, BoundarySets, SparseSymmetricMatrix};

pub type Dense = Vec<Vec<f64>>;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(a: &Dense, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Dense = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| row.iter().copied().chain([bi]).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        assert!(m[col][col].abs() > 1e-300, "singular dense system");
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            if f != 0.0 {
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

pub fn kron(a: &Dense, b: &Dense) -> Dense {
    let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; ca * cb]; ra * rb];
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[i * rb + k][j * cb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

/// `kron(z, kron(y, x))`, matching node ids `i + (nx+1)(j + (ny+1)k)`.
pub fn kron3(z: &Dense, y: &Dense, x: &Dense) -> Dense {
    kron(z, &kron(y, x))
}

pub fn add(a: &Dense, b: &Dense, s: f64) -> Dense {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + s * y).collect())
        .collect()
}

pub fn scale(a: &Dense, s: f64) -> Dense {
    a.iter().map(|r| r.iter().map(|x| x * s).collect()).collect()
}

pub fn matvec(a: &Dense, x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// 1D linear-element mass matrix on `n` uniform elements of total length `l`.
pub fn mass_1d(n: usize, l: f64) -> Dense {
    let h = l / n as f64;
    let mut m = vec![vec![0.0; n + 1]; n + 1];
    for e in 0..n {
        m[e][e] += h / 3.0;
        m[e + 1][e + 1] += h / 3.0;
        m[e][e + 1] += h / 6.0;
        m[e + 1][e] += h / 6.0;
    }
    m
}

/// 1D linear-element stiffness matrix on `n` uniform elements of total length `l`.
pub fn stiff_1d(n: usize, l: f64) -> Dense {
    let h = l / n as f64;
    let mut k = vec![vec![0.0; n + 1]; n + 1];
    for e in 0..n {
        k[e][e] += 1.0 / h;
        k[e + 1][e + 1] += 1.0 / h;
        k[e][e + 1] -= 1.0 / h;
        k[e + 1][e] -= 1.0 / h;
    }
    k
}

/// `e_i e_iᵀ` of size `n`.
pub fn unit_projector(n: usize, i: usize) -> Dense {
    let mut p = vec![vec![0.0; n]; n];
    p[i][i] = 1.0;
    p
}

pub fn to_dense(m: &SparseSymmetricMatrix) -> Dense {
    m.as_csr().to_dense()
}

pub fn max_abs_dense(a: &Dense) -> f64 {
    a.iter().flatten().fold(0.0, |m: f64, v| m.max(v.abs()))
}

pub fn max_diff_dense(a: &Dense, b: &Dense) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Three-node bar with `k/L = 1`, unit cross-section, convection `h = 1` to
/// `Ta = 0` at node 2 and the heated end at node 0. Capacitance is the identity.
pub fn three_node_bar() -> AssembledSystem {
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
