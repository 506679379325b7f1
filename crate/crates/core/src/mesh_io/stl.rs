use std::collections::HashMap;

use super::{MeshError, RenderSurface};
use crate::Vec3;

/// Grid spacing (meters) used to weld coincident STL vertices.
pub const WELD_GRID: f64 = 1e-9;

/// Parses an ASCII or binary STL file into a welded, indexed surface.
///
/// Stored facet normals are discarded.
pub fn parse_stl(bytes: &[u8]) -> Result<RenderSurface, MeshError> {
    let soup = if looks_binary(bytes) {
        read_binary(bytes)?
    } else if is_ascii_stl(bytes) {
        read_ascii(bytes)?
    } else {
        read_binary(bytes)?
    };
    if soup.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    Ok(weld(&soup))
}

fn is_ascii_stl(bytes: &[u8]) -> bool {
    let start = bytes.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(bytes.len());
    bytes[start..].starts_with(b"solid")
}

// Binary files frequently start with "solid" too, so an exact size match wins.
fn looks_binary(bytes: &[u8]) -> bool {
    if bytes.len() < 84 {
        return false;
    }
    let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    84usize.checked_add(count.saturating_mul(50)) == Some(bytes.len())
}

fn read_binary(bytes: &[u8]) -> Result<Vec<[Vec3; 3]>, MeshError> {
    if bytes.len() < 84 {
        return Err(MeshError::TruncatedFile {
            expected: 84,
            actual: bytes.len(),
        });
    }
    let count = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let expected = 84 + 50 * count;
    if bytes.len() != expected {
        return Err(MeshError::TruncatedFile {
            expected,
            actual: bytes.len(),
        });
    }
    let read_f32 = |off: usize| {
        f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]) as f64
    };
    let mut soup = Vec::with_capacity(count);
    for facet in 0..count {
        // 12 bytes of normal, then three vertices, then a u16 attribute.
        let base = 84 + 50 * facet + 12;
        let mut tri = [Vec3::zeros(); 3];
        for (k, v) in tri.iter_mut().enumerate() {
            let o = base + 12 * k;
            *v = Vec3::new(read_f32(o), read_f32(o + 4), read_f32(o + 8));
        }
        soup.push(tri);
    }
    Ok(soup)
}

struct Tokens<'a> {
    inner: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let inner = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| line.split_whitespace().map(move |t| (i + 1, t)))
            .collect();
        Self { inner, pos: 0 }
    }

    fn line(&self) -> usize {
        self.inner
            .get(self.pos)
            .or_else(|| self.inner.last())
            .map_or(1, |t| t.0)
    }

    fn next(&mut self) -> Option<&'a str> {
        let tok = self.inner.get(self.pos).map(|t| t.1);
        self.pos += 1;
        tok
    }

    fn peek(&self) -> Option<&'a str> {
        self.inner.get(self.pos).map(|t| t.1)
    }

    fn error(&self, message: impl Into<String>) -> MeshError {
        MeshError::MalformedAscii {
            line: self.line(),
            message: message.into(),
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<(), MeshError> {
        match self.peek() {
            Some(t) if t.eq_ignore_ascii_case(keyword) => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.error(format!("expected '{keyword}', found '{t}'"))),
            None => Err(self.error(format!("expected '{keyword}', found end of file"))),
        }
    }

    fn number(&mut self) -> Result<f64, MeshError> {
        let line = self.line();
        let tok = self.next().ok_or_else(|| self.error("unexpected end of file"))?;
        tok.parse::<f64>().map_err(|_| MeshError::MalformedAscii {
            line,
            message: format!("invalid number '{tok}'"),
        })
    }

    fn vec3(&mut self) -> Result<Vec3, MeshError> {
        Ok(Vec3::new(self.number()?, self.number()?, self.number()?))
    }
}

fn read_ascii(bytes: &[u8]) -> Result<Vec<[Vec3; 3]>, MeshError> {
    let text = std::str::from_utf8(bytes).map_err(|e| MeshError::MalformedAscii {
        line: 1,
        message: format!("not valid UTF-8: {e}"),
    })?;
    let mut tokens = Tokens::new(text);
    tokens.expect("solid")?;
    // Skip the free-form solid name.
    while let Some(t) = tokens.peek() {
        if t.eq_ignore_ascii_case("facet") || t.eq_ignore_ascii_case("endsolid") {
            break;
        }
        tokens.pos += 1;
    }
    let mut soup = Vec::new();
    loop {
        match tokens.peek() {
            Some(t) if t.eq_ignore_ascii_case("facet") => {
                tokens.expect("facet")?;
                tokens.expect("normal")?;
                tokens.vec3()?;
                tokens.expect("outer")?;
                tokens.expect("loop")?;
                let mut tri = [Vec3::zeros(); 3];
                for v in &mut tri {
                    tokens.expect("vertex")?;
                    *v = tokens.vec3()?;
                }
                tokens.expect("endloop")?;
                tokens.expect("endfacet")?;
                soup.push(tri);
            }
            Some(t) if t.eq_ignore_ascii_case("endsolid") => break,
            Some(t) => return Err(tokens.error(format!("expected 'facet' or 'endsolid', found '{t}'"))),
            None => return Err(tokens.error("missing 'endsolid'")),
        }
    }
    Ok(soup)
}

fn weld(soup: &[[Vec3; 3]]) -> RenderSurface {
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(soup.len());
    for tri in soup {
        let mut out = [0usize; 3];
        for (k, p) in tri.iter().enumerate() {
            let key = [p.x, p.y, p.z].map(|c| (c / WELD_GRID).round() as i64);
            out[k] = *index.entry(key).or_insert_with(|| {
                vertices.push(*p);
                vertices.len() - 1
            });
        }
        triangles.push(out);
    }
    RenderSurface {
        vertices,
        triangles,
        embedding: None,
    }
}
