//! Gmsh ASCII reader (format 2.2 and 4.1) and writers.

use std::collections::HashMap;
use std::fmt::Write;

use super::{MeshError, TetMesh};
use crate::Vec3;

const TET4: u32 = 4;

struct Line<'a> {
    number: usize,
    tokens: Vec<&'a str>,
}

fn malformed(line: usize, message: impl Into<String>) -> MeshError {
    MeshError::MalformedMsh {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(line: &Line<'_>, idx: usize, what: &str) -> Result<T, MeshError> {
    let tok = line
        .tokens
        .get(idx)
        .ok_or_else(|| malformed(line.number, format!("missing {what}")))?;
    tok.parse()
        .map_err(|_| malformed(line.number, format!("invalid {what} '{tok}'")))
}

/// Body lines of `$name ... $Endname`, if present.
fn section<'a, 'b>(lines: &'b [Line<'a>], name: &str) -> Option<&'b [Line<'a>]> {
    let open = format!("${name}");
    let close = format!("$End{name}");
    let start = lines.iter().position(|l| l.tokens[0] == open)?;
    let end = lines[start + 1..]
        .iter()
        .position(|l| l.tokens[0] == close)
        .map(|e| start + 1 + e)?;
    Some(&lines[start + 1..end])
}

struct Cursor<'a, 'b> {
    lines: &'b [Line<'a>],
    pos: usize,
    fallback_line: usize,
}

impl<'a, 'b> Cursor<'a, 'b> {
    fn next(&mut self) -> Result<&'b Line<'a>, MeshError> {
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| malformed(self.fallback_line, "section ends early"))?;
        self.pos += 1;
        Ok(line)
    }
}

/// Parses a Gmsh ASCII mesh and keeps its 4-node tetrahedra.
///
/// Nodes not used by any tetrahedron are dropped; the rest are numbered densely
/// in file order.
pub fn parse_msh(bytes: &[u8]) -> Result<TetMesh, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed(1, format!("not valid UTF-8: {e}")))?;
    let lines: Vec<Line<'_>> = text
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let tokens: Vec<&str> = l.split_whitespace().collect();
            (!tokens.is_empty()).then_some(Line {
                number: i + 1,
                tokens,
            })
        })
        .collect();

    let format = section(&lines, "MeshFormat").ok_or(MeshError::MissingSection("$MeshFormat"))?;
    let header = format
        .first()
        .ok_or_else(|| malformed(1, "empty $MeshFormat"))?;
    let version = header.tokens[0];
    let file_type: u32 = field(header, 1, "file type")?;
    if file_type != 0 {
        return Err(MeshError::UnsupportedVersion(format!("{version} (binary)")));
    }
    let (nodes, elements) = match version {
        "2.2" => {
            let nodes = section(&lines, "Nodes").ok_or(MeshError::MissingSection("$Nodes"))?;
            let elements = section(&lines, "Elements").ok_or(MeshError::MissingSection("$Elements"))?;
            (read_nodes_v2(nodes, header.number)?, read_elements_v2(elements, header.number)?)
        }
        "4.1" => {
            let nodes = section(&lines, "Nodes").ok_or(MeshError::MissingSection("$Nodes"))?;
            let elements = section(&lines, "Elements").ok_or(MeshError::MissingSection("$Elements"))?;
            (read_nodes_v4(nodes, header.number)?, read_elements_v4(elements, header.number)?)
        }
        other => return Err(MeshError::UnsupportedVersion(other.to_string())),
    };
    build(nodes, elements)
}

type RawNodes = Vec<(u64, Vec3)>;
/// (node tags, line number) per tetrahedron.
type RawTets = Vec<([u64; 4], usize)>;

fn read_nodes_v2(body: &[Line<'_>], at: usize) -> Result<RawNodes, MeshError> {
    let mut cur = Cursor {
        lines: body,
        pos: 0,
        fallback_line: at,
    };
    let count: usize = field(cur.next()?, 0, "node count")?;
    let mut nodes = Vec::with_capacity(count);
    for _ in 0..count {
        let line = cur.next()?;
        let tag: u64 = field(line, 0, "node tag")?;
        let p = Vec3::new(field(line, 1, "x")?, field(line, 2, "y")?, field(line, 3, "z")?);
        nodes.push((tag, p));
    }
    Ok(nodes)
}

fn read_elements_v2(body: &[Line<'_>], at: usize) -> Result<RawTets, MeshError> {
    let mut cur = Cursor {
        lines: body,
        pos: 0,
        fallback_line: at,
    };
    let count: usize = field(cur.next()?, 0, "element count")?;
    let mut tets = Vec::new();
    for _ in 0..count {
        let line = cur.next()?;
        let kind: u32 = field(line, 1, "element type")?;
        if kind != TET4 {
            continue;
        }
        let ntags: usize = field(line, 2, "tag count")?;
        let mut tags = [0u64; 4];
        for (k, t) in tags.iter_mut().enumerate() {
            *t = field(line, 3 + ntags + k, "element node")?;
        }
        tets.push((tags, line.number));
    }
    Ok(tets)
}

fn read_nodes_v4(body: &[Line<'_>], at: usize) -> Result<RawNodes, MeshError> {
    let mut cur = Cursor {
        lines: body,
        pos: 0,
        fallback_line: at,
    };
    let header = cur.next()?;
    let blocks: usize = field(header, 0, "entity block count")?;
    let total: usize = field(header, 1, "node count")?;
    let mut nodes = Vec::with_capacity(total);
    for _ in 0..blocks {
        let block = cur.next()?;
        let parametric: u32 = field(block, 2, "parametric flag")?;
        let dim: u32 = field(block, 0, "entity dimension")?;
        let in_block: usize = field(block, 3, "block node count")?;
        // Tags may be spread over several lines; gather exactly `in_block` of them.
        let mut tags = Vec::with_capacity(in_block);
        while tags.len() < in_block {
            let line = cur.next()?;
            for idx in 0..line.tokens.len() {
                tags.push(field::<u64>(line, idx, "node tag")?);
            }
        }
        if tags.len() != in_block {
            return Err(malformed(block.number, "node tag count mismatch"));
        }
        let extra = if parametric == 1 { dim as usize } else { 0 };
        for tag in tags {
            let line = cur.next()?;
            if line.tokens.len() < 3 + extra {
                return Err(malformed(line.number, "expected node coordinates"));
            }
            let p = Vec3::new(field(line, 0, "x")?, field(line, 1, "y")?, field(line, 2, "z")?);
            nodes.push((tag, p));
        }
    }
    if nodes.len() != total {
        return Err(malformed(header.number, format!("declared {total} nodes, found {}", nodes.len())));
    }
    Ok(nodes)
}

fn read_elements_v4(body: &[Line<'_>], at: usize) -> Result<RawTets, MeshError> {
    let mut cur = Cursor {
        lines: body,
        pos: 0,
        fallback_line: at,
    };
    let header = cur.next()?;
    let blocks: usize = field(header, 0, "entity block count")?;
    let mut tets = Vec::new();
    for _ in 0..blocks {
        let block = cur.next()?;
        let kind: u32 = field(block, 2, "element type")?;
        let in_block: usize = field(block, 3, "block element count")?;
        for _ in 0..in_block {
            let line = cur.next()?;
            if kind != TET4 {
                continue;
            }
            let mut tags = [0u64; 4];
            for (k, t) in tags.iter_mut().enumerate() {
                *t = field(line, 1 + k, "element node")?;
            }
            tets.push((tags, line.number));
        }
    }
    Ok(tets)
}

fn build(nodes: RawNodes, tets: RawTets) -> Result<TetMesh, MeshError> {
    if tets.is_empty() {
        return Err(MeshError::NoTetrahedra);
    }
    let mut slot_of_tag: HashMap<u64, usize> = HashMap::with_capacity(nodes.len());
    for (i, (tag, _)) in nodes.iter().enumerate() {
        slot_of_tag.insert(*tag, i);
    }
    let mut used = vec![false; nodes.len()];
    let mut raw = Vec::with_capacity(tets.len());
    for (tags, line) in &tets {
        let mut idx = [0usize; 4];
        for (k, tag) in tags.iter().enumerate() {
            let slot = *slot_of_tag
                .get(tag)
                .ok_or(MeshError::DanglingNodeTag { tag: *tag, line: *line })?;
            used[slot] = true;
            idx[k] = slot;
        }
        raw.push(idx);
    }
    let mut dense = vec![usize::MAX; nodes.len()];
    let mut coords = Vec::new();
    for (slot, (_, p)) in nodes.iter().enumerate() {
        if used[slot] {
            dense[slot] = coords.len();
            coords.push(*p);
        }
    }
    let tets = raw.into_iter().map(|t| t.map(|s| dense[s])).collect();
    Ok(TetMesh::new(coords, tets))
}

fn coord(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the mesh as Gmsh ASCII 2.2 with 17 significant digits.
pub fn write_msh22(mesh: &TetMesh) -> String {
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(out, "{}", mesh.nodes.len());
    for (i, p) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(out, "{} {} {} {}", i + 1, coord(p.x), coord(p.y), coord(p.z));
    }
    out.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(out, "{}", mesh.tets.len());
    for (i, t) in mesh.tets.iter().enumerate() {
        let _ = writeln!(out, "{} 4 2 0 1 {} {} {} {}", i + 1, t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1);
    }
    out.push_str("$EndElements\n");
    out
}

/// Writes the mesh as Gmsh ASCII 4.1 with a single volume entity.
pub fn write_msh41(mesh: &TetMesh) -> String {
    let n = mesh.nodes.len();
    let m = mesh.tets.len();
    let mut out = String::new();
    out.push_str("$MeshFormat\n4.1 0 8\n$EndMeshFormat\n$Nodes\n");
    let _ = writeln!(out, "1 {n} 1 {n}");
    let _ = writeln!(out, "3 1 0 {n}");
    for i in 0..n {
        let _ = writeln!(out, "{}", i + 1);
    }
    for p in &mesh.nodes {
        let _ = writeln!(out, "{} {} {}", coord(p.x), coord(p.y), coord(p.z));
    }
    out.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(out, "1 {m} 1 {m}");
    let _ = writeln!(out, "3 1 4 {m}");
    for (i, t) in mesh.tets.iter().enumerate() {
        let _ = writeln!(out, "{} {} {} {} {}", i + 1, t[0] + 1, t[1] + 1, t[2] + 1, t[3] + 1);
    }
    out.push_str("$EndElements\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const UNIT_TET_22: &str = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n4\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n$EndNodes\n$Elements\n1\n1 4 2 0 1 1 2 3 4\n$EndElements\n";

    #[test]
    fn unit_tet_v22() {
        let mesh = parse_msh(UNIT_TET_22.as_bytes()).unwrap();
        assert_eq!(mesh.tets.len(), 1);
        assert_eq!(mesh.surface_tris.len(), 4);
        assert!((mesh.tet_volume(0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn missing_sections() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
        assert_eq!(parse_msh(text.as_bytes()), Err(MeshError::MissingSection("$Nodes")));
        assert_eq!(parse_msh(b"hello"), Err(MeshError::MissingSection("$MeshFormat")));
    }

    #[test]
    fn unsupported_versions() {
        let text = UNIT_TET_22.replace("2.2 0 8", "3.0 0 8");
        assert_eq!(parse_msh(text.as_bytes()), Err(MeshError::UnsupportedVersion("3.0".into())));
        let binary = UNIT_TET_22.replace("2.2 0 8", "2.2 1 8");
        assert!(matches!(parse_msh(binary.as_bytes()), Err(MeshError::UnsupportedVersion(_))));
    }

    #[test]
    fn non_tet_elements_only() {
        let text = UNIT_TET_22.replace("1 4 2 0 1 1 2 3 4", "1 2 2 0 1 1 2 3");
        assert_eq!(parse_msh(text.as_bytes()), Err(MeshError::NoTetrahedra));
    }

    #[test]
    fn dangling_tag() {
        let text = UNIT_TET_22.replace("1 4 2 0 1 1 2 3 4", "1 4 2 0 1 1 2 3 9");
        assert_eq!(
            parse_msh(text.as_bytes()),
            Err(MeshError::DanglingNodeTag { tag: 9, line: 13 })
        );
    }

    #[test]
    fn truncated_node_list() {
        let text = UNIT_TET_22.replace("4\n1 0 0 0", "5\n1 0 0 0");
        assert!(matches!(parse_msh(text.as_bytes()), Err(MeshError::MalformedMsh { .. })));
    }

    #[test]
    fn unused_nodes_are_dropped_and_tags_compacted() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n5\n10 0 0 0\n20 1 0 0\n30 5 5 5\n40 0 1 0\n50 0 0 1\n$EndNodes\n$Elements\n2\n1 15 2 0 1 30\n2 4 2 0 1 10 20 40 50\n$EndElements\n";
        let mesh = parse_msh(text.as_bytes()).unwrap();
        assert_eq!(mesh.nodes.len(), 4);
        assert_eq!(mesh.tets, vec![[0, 1, 2, 3]]);
    }
}
