//! Structured hexahedral box meshes and the boundary node/face sets the loss
//! terms are defined over.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// One of the six faces of an axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoxFace {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl BoxFace {
    pub const ALL: [BoxFace; 6] = [
        BoxFace::XMin,
        BoxFace::XMax,
        BoxFace::YMin,
        BoxFace::YMax,
        BoxFace::ZMin,
        BoxFace::ZMax,
    ];

    /// Axis index (0 = x, 1 = y, 2 = z) and whether the face sits at the upper end.
    pub fn axis(self) -> (usize, bool) {
        match self {
            BoxFace::XMin => (0, false),
            BoxFace::XMax => (0, true),
            BoxFace::YMin => (1, false),
            BoxFace::YMax => (1, true),
            BoxFace::ZMin => (2, false),
            BoxFace::ZMax => (2, true),
        }
    }
}

impl fmt::Display for BoxFace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoxFace::XMin => "-x",
            BoxFace::XMax => "+x",
            BoxFace::YMin => "-y",
            BoxFace::YMax => "+y",
            BoxFace::ZMin => "-z",
            BoxFace::ZMax => "+z",
        };
        f.write_str(s)
    }
}

impl FromStr for BoxFace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "-x" | "x-" | "xmin" => Ok(BoxFace::XMin),
            "+x" | "x+" | "xmax" => Ok(BoxFace::XMax),
            "-y" | "y-" | "ymin" => Ok(BoxFace::YMin),
            "+y" | "y+" | "ymax" => Ok(BoxFace::YMax),
            "-z" | "z-" | "zmin" => Ok(BoxFace::ZMin),
            "+z" | "z+" | "zmax" => Ok(BoxFace::ZMax),
            other => Err(Error::InvalidArgument(format!(
                "unknown box face `{other}` (expected one of -x, +x, -y, +y, -z, +z)"
            ))),
        }
    }
}

/// A boundary quadrilateral, nodes ordered counterclockwise seen from outside.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryFace {
    pub nodes: [usize; 4],
    pub label: BoxFace,
    /// The single hexahedron this face belongs to.
    pub hex: usize,
}

/// Structured hexahedral mesh of an axis-aligned box.
///
/// Hex vertex order is the bottom face counterclockwise, then the top face
/// counterclockwise, both viewed from +z. Node `(i, j, k)` has id
/// `i + (nx + 1) * (j + (ny + 1) * k)`.
#[derive(Clone, Debug)]
pub struct Mesh {
    nodes: Vec<[f64; 3]>,
    hexes: Vec<[usize; 8]>,
    boundary_faces: Vec<BoundaryFace>,
    lengths: [f64; 3],
    divisions: [usize; 3],
}

impl Mesh {
    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    pub fn hexes(&self) -> &[[usize; 8]] {
        &self.hexes
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn divisions(&self) -> [usize; 3] {
        self.divisions
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Area of one whole box face.
    pub fn face_area(&self, face: BoxFace) -> f64 {
        let (axis, _) = face.axis();
        let l = self.lengths;
        match axis {
            0 => l[1] * l[2],
            1 => l[0] * l[2],
            _ => l[0] * l[1],
        }
    }

    /// Total count of volume plus surface elements.
    pub fn element_count(&self) -> usize {
        self.hexes.len() + self.boundary_faces.len()
    }

    pub fn hex_coords(&self, e: usize) -> [[f64; 3]; 8] {
        self.hexes[e].map(|n| self.nodes[n])
    }

    pub fn face_coords(&self, f: usize) -> [[f64; 3]; 4] {
        self.boundary_faces[f].nodes.map(|n| self.nodes[n])
    }

    /// Node closest to `point`; ties go to the lowest id.
    pub fn nearest_node(&self, point: [f64; 3]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.nodes.iter().enumerate() {
            let d = (p[0] - point[0]).powi(2) + (p[1] - point[1]).powi(2) + (p[2] - point[2]).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }
}

/// Generates a uniform structured box mesh with one corner at the origin.
pub fn build_box_mesh(lengths: [f64; 3], divisions: [usize; 3]) -> Result<Mesh> {
    for (axis, &l) in lengths.iter().enumerate() {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "length along axis {axis} must be positive, got {l}"
            )));
        }
    }
    if let Some(axis) = divisions.iter().position(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!(
            "divisions along axis {axis} must be at least 1"
        )));
    }
    let [nx, ny, nz] = divisions;
    let id = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                nodes.push([
                    i as f64 / nx as f64 * lengths[0],
                    j as f64 / ny as f64 * lengths[1],
                    k as f64 / nz as f64 * lengths[2],
                ]);
            }
        }
    }

    let hex_id = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut hexes = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                hexes.push([
                    id(i, j, k),
                    id(i + 1, j, k),
                    id(i + 1, j + 1, k),
                    id(i, j + 1, k),
                    id(i, j, k + 1),
                    id(i + 1, j, k + 1),
                    id(i + 1, j + 1, k + 1),
                    id(i, j + 1, k + 1),
                ]);
            }
        }
    }

    let mut faces = Vec::with_capacity(2 * (nx * ny + ny * nz + nx * nz));
    for label in BoxFace::ALL {
        match label {
            BoxFace::XMin | BoxFace::XMax => {
                let (i, hi) = if label == BoxFace::XMin { (0, 0) } else { (nx, nx - 1) };
                for k in 0..nz {
                    for j in 0..ny {
                        let nodes = if label == BoxFace::XMin {
                            [id(i, j, k), id(i, j, k + 1), id(i, j + 1, k + 1), id(i, j + 1, k)]
                        } else {
                            [id(i, j, k), id(i, j + 1, k), id(i, j + 1, k + 1), id(i, j, k + 1)]
                        };
                        faces.push(BoundaryFace {
                            nodes,
                            label,
                            hex: hex_id(hi, j, k),
                        });
                    }
                }
            }
            BoxFace::YMin | BoxFace::YMax => {
                let (j, hj) = if label == BoxFace::YMin { (0, 0) } else { (ny, ny - 1) };
                for k in 0..nz {
                    for i in 0..nx {
                        let nodes = if label == BoxFace::YMin {
                            [id(i, j, k), id(i + 1, j, k), id(i + 1, j, k + 1), id(i, j, k + 1)]
                        } else {
                            [id(i, j, k), id(i, j, k + 1), id(i + 1, j, k + 1), id(i + 1, j, k)]
                        };
                        faces.push(BoundaryFace {
                            nodes,
                            label,
                            hex: hex_id(i, hj, k),
                        });
                    }
                }
            }
            BoxFace::ZMin | BoxFace::ZMax => {
                let (k, hk) = if label == BoxFace::ZMin { (0, 0) } else { (nz, nz - 1) };
                for j in 0..ny {
                    for i in 0..nx {
                        let nodes = if label == BoxFace::ZMin {
                            [id(i, j, k), id(i, j + 1, k), id(i + 1, j + 1, k), id(i + 1, j, k)]
                        } else {
                            [id(i, j, k), id(i + 1, j, k), id(i + 1, j + 1, k), id(i, j + 1, k)]
                        };
                        faces.push(BoundaryFace {
                            nodes,
                            label,
                            hex: hex_id(i, j, hk),
                        });
                    }
                }
            }
        }
    }

    Ok(Mesh {
        nodes,
        hexes,
        boundary_faces: faces,
        lengths,
        divisions,
    })
}

/// Node and face sets of the boundary split into the heated surface Γq and the
/// convective remainder Γh. All node lists are sorted ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySets {
    pub n_nodes: usize,
    pub gamma_q_faces: Vec<usize>,
    pub gamma_h_faces: Vec<usize>,
    pub gamma_q_nodes: Vec<usize>,
    pub gamma_h_nodes: Vec<usize>,
    /// Γq ∩ Γh: the perimeter of the heated surface.
    pub gamma_edge_nodes: Vec<usize>,
    /// Perimeter nodes that belong to a single heated face.
    pub gamma_corner_nodes: Vec<usize>,
    /// Every node not on Γq (interior plus convection-only boundary nodes).
    pub interior_and_h_only_nodes: Vec<usize>,
    pub boundary_nodes: Vec<usize>,
}

impl BoundarySets {
    /// Builds the sets from explicit node lists, for systems that do not come
    /// from a box mesh. Γedge is derived as Γq ∩ Γh; corners must lie on it.
    pub fn from_node_sets(
        n_nodes: usize,
        gamma_q_nodes: &[usize],
        gamma_h_nodes: &[usize],
        gamma_corner_nodes: &[usize],
    ) -> Result<Self> {
        let q = sorted_unique(gamma_q_nodes);
        let h = sorted_unique(gamma_h_nodes);
        let corners = sorted_unique(gamma_corner_nodes);
        if let Some(&bad) = q.iter().chain(&h).find(|&&i| i >= n_nodes) {
            return Err(Error::UnknownNode { node: bad, n_nodes });
        }
        let edge = intersect(&q, &h);
        if let Some(&bad) = corners.iter().find(|c| edge.binary_search(c).is_err()) {
            return Err(Error::InvalidArgument(format!(
                "corner node {bad} is not on the heated-surface edge"
            )));
        }
        let boundary = union(&q, &h);
        let interior = difference(&(0..n_nodes).collect::<Vec<_>>(), &q);
        Ok(Self {
            n_nodes,
            gamma_q_faces: Vec::new(),
            gamma_h_faces: Vec::new(),
            gamma_q_nodes: q,
            gamma_h_nodes: h,
            gamma_edge_nodes: edge,
            gamma_corner_nodes: corners,
            interior_and_h_only_nodes: interior,
            boundary_nodes: boundary,
        })
    }

    /// Γq \ Γedge
    pub fn face_interior_nodes(&self) -> Vec<usize> {
        difference(&self.gamma_q_nodes, &self.gamma_edge_nodes)
    }

    /// Γedge \ Γcorners
    pub fn edge_only_nodes(&self) -> Vec<usize> {
        difference(&self.gamma_edge_nodes, &self.gamma_corner_nodes)
    }

    pub fn is_gamma_q(&self, node: usize) -> bool {
        self.gamma_q_nodes.binary_search(&node).is_ok()
    }

    pub fn is_edge(&self, node: usize) -> bool {
        self.gamma_edge_nodes.binary_search(&node).is_ok()
    }

    /// Position of `node` within `gamma_q_nodes`.
    pub fn gamma_q_index(&self, node: usize) -> Option<usize> {
        self.gamma_q_nodes.binary_search(&node).ok()
    }
}

/// Splits the boundary of a box mesh into the heated face and the rest.
pub fn classify_boundary(mesh: &Mesh, heated: BoxFace) -> BoundarySets {
    let n = mesh.n_nodes();
    let mut q_faces = Vec::new();
    let mut h_faces = Vec::new();
    let mut q_count = vec![0u32; n];
    let mut on_q = vec![false; n];
    let mut on_h = vec![false; n];
    for (f, face) in mesh.boundary_faces().iter().enumerate() {
        if face.label == heated {
            q_faces.push(f);
            for &v in &face.nodes {
                on_q[v] = true;
                q_count[v] += 1;
            }
        } else {
            h_faces.push(f);
            for &v in &face.nodes {
                on_h[v] = true;
            }
        }
    }
    let select = |pred: &dyn Fn(usize) -> bool| (0..n).filter(|&i| pred(i)).collect::<Vec<_>>();
    BoundarySets {
        n_nodes: n,
        gamma_q_faces: q_faces,
        gamma_h_faces: h_faces,
        gamma_q_nodes: select(&|i| on_q[i]),
        gamma_h_nodes: select(&|i| on_h[i]),
        gamma_edge_nodes: select(&|i| on_q[i] && on_h[i]),
        gamma_corner_nodes: select(&|i| on_q[i] && on_h[i] && q_count[i] == 1),
        interior_and_h_only_nodes: select(&|i| !on_q[i]),
        boundary_nodes: select(&|i| on_q[i] || on_h[i]),
    }
}

fn sorted_unique(v: &[usize]) -> Vec<usize> {
    let mut out = v.to_vec();
    out.sort_unstable();
    out.dedup();
    out
}

pub(crate) fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_ok()).collect()
}

pub(crate) fn difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.binary_search(x).is_err()).collect()
}

fn union(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = a.to_vec();
    out.extend_from_slice(b);
    sorted_unique(&out)
}
