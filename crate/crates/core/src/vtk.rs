//! Legacy ASCII VTK writer for deformed tetrahedral meshes.

use std::fmt::Write;

/// VTK cell type id of a linear tetrahedron.
pub const VTK_TETRA: u8 = 10;

/// Writes an unstructured grid with point positions `positions` (flat xyz),
/// the given tetrahedra and one cell scalar `von_mises`.
///
/// Numbers use Rust's shortest round-trip formatting, so identical inputs give
/// identical bytes.
pub fn write_vtk(title: &str, positions: &[f64], tets: &[[usize; 4]], von_mises: &[f64]) -> String {
    assert_eq!(positions.len() % 3, 0, "positions must be xyz triples");
    assert_eq!(tets.len(), von_mises.len(), "one stress value per cell");
    let n = positions.len() / 3;
    let mut out = String::with_capacity(64 * (n + tets.len()) + 256);
    let title: String = title.chars().filter(|c| *c != '\n' && *c != '\r').take(255).collect();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(if title.is_empty() { "magsim" } else { &title });
    out.push_str("\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {n} double");
    for p in positions.chunks_exact(3) {
        let _ = writeln!(out, "{:?} {:?} {:?}", p[0], p[1], p[2]);
    }
    let _ = writeln!(out, "CELLS {} {}", tets.len(), tets.len() * 5);
    for t in tets {
        let _ = writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {}", tets.len());
    for _ in tets {
        let _ = writeln!(out, "{VTK_TETRA}");
    }
    let _ = writeln!(out, "CELL_DATA {}", tets.len());
    out.push_str("SCALARS von_mises double 1\nLOOKUP_TABLE default\n");
    for v in von_mises {
        let _ = writeln!(out, "{v:?}");
    }
    out
}
