//! Legacy ASCII VTK output of nodal fields on a hex mesh.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// VTK cell type of the 8-node hexahedron.
const VTK_HEXAHEDRON: u8 = 12;

/// C `printf("%.{digits}g")` formatting.
pub fn format_g(x: f64, digits: usize) -> String {
    let p = digits.max(1);
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // The exponent after rounding to `p` significant digits decides the style.
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn g9(x: f64) -> String {
    format_g(x, 9)
}

/// Renders the mesh with one `SCALARS` array per `(name, values)` pair.
/// Names must be non-empty and free of whitespace.
pub fn render_vtk(mesh: &Mesh, title: &str, fields: &[(&str, &[f64])]) -> Result<String> {
    let n = mesh.n_nodes();
    for (name, values) in fields {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid VTK array name `{name}`")));
        }
        if values.len() != n {
            return Err(Error::InvalidArgument(format!(
                "field `{name}` has {} values but the mesh has {n} nodes",
                values.len()
            )));
        }
    }
    let title: String = title.chars().filter(|c| *c != '\n' && *c != '\r').take(255).collect();
    let hexes = mesh.hexes();
    let mut s = String::with_capacity(64 * n + 48 * hexes.len());
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str(&title);
    s.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in mesh.nodes() {
        let _ = writeln!(s, "{} {} {}", g9(p[0]), g9(p[1]), g9(p[2]));
    }
    let _ = writeln!(s, "CELLS {} {}", hexes.len(), 9 * hexes.len());
    for h in hexes {
        s.push('8');
        for v in h {
            let _ = write!(s, " {v}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {}", hexes.len());
    for _ in hexes {
        let _ = writeln!(s, "{VTK_HEXAHEDRON}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {n}");
        for (name, values) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in values.iter() {
                s.push_str(&g9(*v));
                s.push('\n');
            }
        }
    }
    Ok(s)
}

/// Writes [`render_vtk`] output to `path`.
pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, title: &str, fields: &[(&str, &[f64])]) -> Result<()> {
    let path = path.as_ref();
    let text = render_vtk(mesh, title, fields)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
