//! Element integration and global assembly of the heat conduction system
//! `C dT/dt + K T = f_q + f_h`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{BoundarySets, Mesh};
use crate::sparse::SparseSymmetricMatrix;

/// Isotropic, temperature-independent material and convection data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialProperties {
    /// Thermal conductivity, W/(m·°C).
    pub k: f64,
    /// Density, kg/m³.
    pub rho: f64,
    /// Specific heat, J/(kg·°C).
    pub cp: f64,
    /// Convection coefficient on Γh, W/(m²·°C).
    pub h: f64,
    /// Ambient temperature, °C.
    pub t_ambient: f64,
}

impl MaterialProperties {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.k, self.rho, self.cp, self.h, self.t_ambient]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("material properties must be finite".into()));
        }
        if self.k <= 0.0 || self.rho <= 0.0 || self.cp <= 0.0 {
            return Err(Error::InvalidArgument("k, rho and cp must be positive".into()));
        }
        if self.h < 0.0 {
            return Err(Error::InvalidArgument("h must be non-negative".into()));
        }
        Ok(())
    }
}

const GAUSS_2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Reference-cube coordinates of the eight hex vertices.
const HEX_VERTS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

const QUAD_VERTS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Trilinear shape functions and their physical gradients at one point.
#[derive(Clone, Copy, Debug)]
pub struct HexEval {
    pub n: [f64; 8],
    /// `b[d][a] = ∂N_a/∂x_d`
    pub b: [[f64; 8]; 3],
    pub det_j: f64,
}

pub fn hex_shape_eval(local: [f64; 3], coords: &[[f64; 3]; 8]) -> Result<HexEval> {
    let [xi, eta, zeta] = local;
    let mut n = [0.0; 8];
    let mut dn = [[0.0; 8]; 3];
    for (a, v) in HEX_VERTS.iter().enumerate() {
        let (fx, fy, fz) = (1.0 + xi * v[0], 1.0 + eta * v[1], 1.0 + zeta * v[2]);
        n[a] = 0.125 * fx * fy * fz;
        dn[0][a] = 0.125 * v[0] * fy * fz;
        dn[1][a] = 0.125 * fx * v[1] * fz;
        dn[2][a] = 0.125 * fx * fy * v[2];
    }
    // jac[r][c] = ∂x_c/∂ξ_r
    let mut jac = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            jac[r][c] = (0..8).map(|a| dn[r][a] * coords[a][c]).sum();
        }
    }
    let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
        - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
        + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
    if !(det > 0.0) {
        return Err(Error::DegenerateElement {
            element: usize::MAX,
            det,
        });
    }
    let inv = [
        [
            (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1]) / det,
            (jac[0][2] * jac[2][1] - jac[0][1] * jac[2][2]) / det,
            (jac[0][1] * jac[1][2] - jac[0][2] * jac[1][1]) / det,
        ],
        [
            (jac[1][2] * jac[2][0] - jac[1][0] * jac[2][2]) / det,
            (jac[0][0] * jac[2][2] - jac[0][2] * jac[2][0]) / det,
            (jac[0][2] * jac[1][0] - jac[0][0] * jac[1][2]) / det,
        ],
        [
            (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]) / det,
            (jac[0][1] * jac[2][0] - jac[0][0] * jac[2][1]) / det,
            (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]) / det,
        ],
    ];
    // ∇x N = J⁻¹ ∇ξ N
    let mut b = [[0.0; 8]; 3];
    for d in 0..3 {
        for a in 0..8 {
            b[d][a] = (0..3).map(|r| inv[d][r] * dn[r][a]).sum();
        }
    }
    Ok(HexEval { n, b, det_j: det })
}

/// Dense 8×8 matrix of one hex element.
pub type ElementMatrix = [[f64; 8]; 8];

/// Element conduction stiffness (no convection) and capacitance, 2×2×2 Gauss rule.
pub fn hex_element_matrices(
    coords: &[[f64; 3]; 8],
    props: &MaterialProperties,
) -> Result<(ElementMatrix, ElementMatrix)> {
    let mut ke = [[0.0; 8]; 8];
    let mut ce = [[0.0; 8]; 8];
    let rho_cp = props.rho * props.cp;
    for &gz in &GAUSS_2 {
        for &gy in &GAUSS_2 {
            for &gx in &GAUSS_2 {
                let ev = hex_shape_eval([gx, gy, gz], coords)?;
                for a in 0..8 {
                    for c in a..8 {
                        let grad = ev.b[0][a] * ev.b[0][c] + ev.b[1][a] * ev.b[1][c] + ev.b[2][a] * ev.b[2][c];
                        ke[a][c] += props.k * grad * ev.det_j;
                        ce[a][c] += rho_cp * ev.n[a] * ev.n[c] * ev.det_j;
                    }
                }
            }
        }
    }
    for a in 0..8 {
        for c in 0..a {
            ke[a][c] = ke[c][a];
            ce[a][c] = ce[c][a];
        }
    }
    Ok((ke, ce))
}

/// Bilinear quad shape values and the surface metric `|∂x/∂ξ × ∂x/∂η|`.
fn quad_eval(local: [f64; 2], coords: &[[f64; 3]; 4]) -> ([f64; 4], f64) {
    let [xi, eta] = local;
    let mut n = [0.0; 4];
    let mut t1 = [0.0; 3];
    let mut t2 = [0.0; 3];
    for (a, v) in QUAD_VERTS.iter().enumerate() {
        n[a] = 0.25 * (1.0 + xi * v[0]) * (1.0 + eta * v[1]);
        let dxi = 0.25 * v[0] * (1.0 + eta * v[1]);
        let deta = 0.25 * (1.0 + xi * v[0]) * v[1];
        for c in 0..3 {
            t1[c] += dxi * coords[a][c];
            t2[c] += deta * coords[a][c];
        }
    }
    let cross = [
        t1[1] * t2[2] - t1[2] * t2[1],
        t1[2] * t2[0] - t1[0] * t2[2],
        t1[0] * t2[1] - t1[1] * t2[0],
    ];
    (n, (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt())
}

/// `∫ N dΓ` over a bilinear quad, 2×2 Gauss rule.
pub fn quad_shape_integrals(coords: &[[f64; 3]; 4]) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for &gy in &GAUSS_2 {
        for &gx in &GAUSS_2 {
            let (n, det) = quad_eval([gx, gy], coords);
            if !(det > 0.0) {
                return Err(Error::DegenerateFace { face: usize::MAX, det });
            }
            for a in 0..4 {
                out[a] += n[a] * det;
            }
        }
    }
    Ok(out)
}

/// Convection surface matrix `∫ h NᵀN dΓ` and load `∫ h Ta Nᵀ dΓ` for one quad.
pub fn quad_face_matrices(coords: &[[f64; 3]; 4], props: &MaterialProperties) -> Result<([[f64; 4]; 4], [f64; 4])> {
    let mut he = [[0.0; 4]; 4];
    let mut fe = [0.0; 4];
    for &gy in &GAUSS_2 {
        for &gx in &GAUSS_2 {
            let (n, det) = quad_eval([gx, gy], coords);
            if !(det > 0.0) {
                return Err(Error::DegenerateFace { face: usize::MAX, det });
            }
            for a in 0..4 {
                for c in a..4 {
                    he[a][c] += props.h * n[a] * n[c] * det;
                }
                fe[a] += props.h * props.t_ambient * n[a] * det;
            }
        }
    }
    for a in 0..4 {
        for c in 0..a {
            he[a][c] = he[c][a];
        }
    }
    Ok((he, fe))
}

/// Global matrices of the linear transient problem.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    /// Capacitance (mass) matrix.
    pub c: SparseSymmetricMatrix,
    /// Conduction plus convection stiffness, `K = K_base + H`.
    pub k: SparseSymmetricMatrix,
    /// Conduction-only stiffness.
    pub k_base: SparseSymmetricMatrix,
    /// Convection surface matrix `H`.
    pub convection: SparseSymmetricMatrix,
    /// Convection load `f_h = H · (Ta·1)`.
    pub f_h: Vec<f64>,
    pub boundary: BoundarySets,
    pub n_nodes: usize,
    pub t_ambient: f64,
}

impl AssembledSystem {
    /// Wraps externally produced matrices. `k` is derived as `k_base + convection`.
    pub fn from_matrices(
        c: SparseSymmetricMatrix,
        k_base: SparseSymmetricMatrix,
        convection: SparseSymmetricMatrix,
        f_h: Vec<f64>,
        boundary: BoundarySets,
        t_ambient: f64,
    ) -> Result<Self> {
        let n = c.dim();
        if k_base.dim() != n || convection.dim() != n || f_h.len() != n || boundary.n_nodes != n {
            return Err(Error::InvalidArgument(
                "system components have inconsistent sizes".into(),
            ));
        }
        let k = k_base.combine(1.0, &convection, 1.0)?;
        Ok(Self {
            c,
            k,
            k_base,
            convection,
            f_h,
            boundary,
            n_nodes: n,
            t_ambient,
        })
    }

    /// `C/dt + K`. An infinite `dt` drops the capacitance (steady state).
    pub fn step_matrix(&self, dt: f64) -> Result<SparseSymmetricMatrix> {
        self.c.combine(inv_dt(dt), &self.k, 1.0)
    }
}

/// `1/dt`, with `dt = ∞` meaning steady state.
pub(crate) fn inv_dt(dt: f64) -> f64 {
    if dt.is_infinite() {
        0.0
    } else {
        1.0 / dt
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Scatter-adds element contributions into the global sparse system.
pub fn assemble_global(mesh: &Mesh, sets: &BoundarySets, props: &MaterialProperties) -> Result<AssembledSystem> {
    props.validate()?;
    let n = mesh.n_nodes();
    if sets.n_nodes != n {
        return Err(Error::InvalidArgument(
            "boundary sets belong to a different mesh".into(),
        ));
    }

    // Element integration in parallel; collected in element order so the
    // scatter below is identical for any thread count.
    let hex_mats: Vec<_> = (0..mesh.hexes().len())
        .into_par_iter()
        .map(|e| {
            hex_element_matrices(&mesh.hex_coords(e), props).map_err(|err| match err {
                Error::DegenerateElement { det, .. } => Error::DegenerateElement { element: e, det },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let face_mats: Vec<_> = sets
        .gamma_h_faces
        .iter()
        .map(|&f| {
            quad_face_matrices(&mesh.face_coords(f), props).map_err(|err| match err {
                Error::DegenerateFace { det, .. } => Error::DegenerateFace { face: f, det },
                other => other,
            })
        })
        .collect::<Result<_>>()?;

    let mut kt = Vec::with_capacity(64 * mesh.hexes().len());
    let mut ct = Vec::with_capacity(64 * mesh.hexes().len());
    for (hex, (ke, ce)) in mesh.hexes().iter().zip(&hex_mats) {
        for a in 0..8 {
            for c in 0..8 {
                kt.push((hex[a], hex[c], ke[a][c]));
                ct.push((hex[a], hex[c], ce[a][c]));
            }
        }
    }
    let mut ht = Vec::with_capacity(16 * face_mats.len());
    let mut f_h = vec![0.0; n];
    for (&f, (he, fe)) in sets.gamma_h_faces.iter().zip(&face_mats) {
        let nodes = mesh.boundary_faces()[f].nodes;
        for a in 0..4 {
            for c in 0..4 {
                ht.push((nodes[a], nodes[c], he[a][c]));
            }
            f_h[nodes[a]] += fe[a];
        }
    }

    let k_base = SparseSymmetricMatrix::from_triplets(n, kt)?;
    let c = SparseSymmetricMatrix::from_triplets(n, ct)?;
    let convection = SparseSymmetricMatrix::from_triplets(n, ht)?;
    let system = AssembledSystem::from_matrices(c, k_base, convection, f_h, sets.clone(), props.t_ambient)?;

    let expected = system.convection.mul_vec(&vec![props.t_ambient; n]);
    let gap = max_abs(&expected.iter().zip(&system.f_h).map(|(a, b)| a - b).collect::<Vec<_>>());
    if gap > 1e-12 * max_abs(&expected).max(f64::MIN_POSITIVE) {
        return Err(Error::SingularSystem(format!(
            "convection load inconsistent with convection matrix (gap {gap:e})"
        )));
    }
    Ok(system)
}

/// Nodal load of a uniform inward flux `q_inward` (W/m², positive = heating) on Γq.
pub fn assemble_flux_load(mesh: &Mesh, sets: &BoundarySets, q_inward: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.n_nodes()];
    for &f in &sets.gamma_q_faces {
        let w = quad_shape_integrals(&mesh.face_coords(f)).map_err(|err| match err {
            Error::DegenerateFace { det, .. } => Error::DegenerateFace { face: f, det },
            other => other,
        })?;
        for (a, &node) in mesh.boundary_faces()[f].nodes.iter().enumerate() {
            out[node] += q_inward * w[a];
        }
    }
    Ok(out)
}
