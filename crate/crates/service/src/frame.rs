//! Binary frame layout (little-endian):
//!
//! | offset | type | field |
//! |---|---|---|
//! | 0 | u8 | message type, always `0x01` |
//! | 1 | u32 | frame index |
//! | 5 | f32 | simulated time (s) |
//! | 9 | u32 | vertex count `n` |
//! | 13 | `3n` x f32 | deformed vertex positions (m) |
//! | 13 + 12n | `n` x f32 | von Mises stress per vertex (Pa) |
//! | 13 + 16n | f32, f32 | global stress min and max (Pa) |
//!
//! Total length is `21 + 16 n` bytes.

use thiserror::Error;

use magsim_core::fem::{RestData, SimState};
use magsim_core::models::Model;
use magsim_core::stress::{element_stress, map_to_surface, StressField};
use magsim_core::Mat3;

pub const FRAME_TYPE: u8 = 0x01;
pub const FRAME_OVERHEAD: usize = 21;
pub const BYTES_PER_VERTEX: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u32,
    pub sim_time: f32,
    pub positions: Vec<[f32; 3]>,
    pub von_mises: Vec<f32>,
    pub stress_min: f32,
    pub stress_max: f32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame too short: {0} bytes")]
    TooShort(usize),
    #[error("unexpected message type 0x{0:02x}")]
    WrongType(u8),
    #[error("frame declares {count} vertices ({expected} bytes) but has {actual} bytes")]
    LengthMismatch { count: usize, expected: usize, actual: usize },
}

pub fn frame_len(vertex_count: usize) -> usize {
    FRAME_OVERHEAD + BYTES_PER_VERTEX * vertex_count
}

pub fn encode_frame(frame: &Frame) -> Vec<u8> {
    assert_eq!(frame.positions.len(), frame.von_mises.len(), "one stress value per vertex");
    let n = frame.positions.len();
    let mut out = Vec::with_capacity(frame_len(n));
    out.push(FRAME_TYPE);
    out.extend_from_slice(&frame.index.to_le_bytes());
    out.extend_from_slice(&frame.sim_time.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for p in &frame.positions {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for v in &frame.von_mises {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&frame.stress_min.to_le_bytes());
    out.extend_from_slice(&frame.stress_max.to_le_bytes());
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_frame(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < FRAME_OVERHEAD {
        return Err(FrameError::TooShort(bytes.len()));
    }
    if bytes[0] != FRAME_TYPE {
        return Err(FrameError::WrongType(bytes[0]));
    }
    let n = u32_at(bytes, 9) as usize;
    let expected = n
        .checked_mul(BYTES_PER_VERTEX)
        .and_then(|v| v.checked_add(FRAME_OVERHEAD));
    if expected != Some(bytes.len()) {
        return Err(FrameError::LengthMismatch {
            count: n,
            expected: expected.unwrap_or(usize::MAX),
            actual: bytes.len(),
        });
    }
    let positions = (0..n)
        .map(|i| {
            let at = 13 + 12 * i;
            [f32_at(bytes, at), f32_at(bytes, at + 4), f32_at(bytes, at + 8)]
        })
        .collect();
    let stress_at = 13 + 12 * n;
    let von_mises = (0..n).map(|i| f32_at(bytes, stress_at + 4 * i)).collect();
    let tail = 13 + 16 * n;
    Ok(Frame {
        index: u32_at(bytes, 1),
        sim_time: f32_at(bytes, 5),
        positions,
        von_mises,
        stress_min: f32_at(bytes, tail),
        stress_max: f32_at(bytes, tail + 4),
    })
}

/// Builds the frame for `state`: embedded surface vertices when the model has
/// an embedding, tet nodes otherwise. Stress uses `rotations` (one per element).
pub fn build_frame(index: u32, model: &Model, state: &SimState, rest: &RestData, rotations: &[Mat3]) -> Frame {
    let field = element_stress(&state.positions, rest, rotations);
    frame_from_field(index, model, state, &field)
}

/// Frame from an already computed stress field.
pub fn frame_from_field(
    index: u32,
    model: &Model,
    state: &SimState,
    field: &StressField,
) -> Frame {
    let clean = |v: f64| if v.is_finite() { v as f32 } else { 0.0 };
    let (positions, von_mises) = match (
        model.surface.deformed_vertices(&model.mesh, &state.positions),
        map_to_surface(field, &model.surface, None),
    ) {
        (Some(vertices), Ok(stress)) => (
            vertices.iter().map(|p| [clean(p.x), clean(p.y), clean(p.z)]).collect(),
            stress.values.iter().map(|&v| clean(v)).collect(),
        ),
        _ => {
            // No embedding: stream the tet nodes with the largest adjacent element stress.
            let mut node_stress = vec![0.0f64; model.mesh.node_count()];
            for (e, tet) in model.mesh.tets.iter().enumerate() {
                let v = field.von_mises.get(e).copied().unwrap_or(0.0);
                for &n in tet {
                    node_stress[n] = node_stress[n].max(v);
                }
            }
            (
                state
                    .positions
                    .chunks_exact(3)
                    .map(|p| [clean(p[0]), clean(p[1]), clean(p[2])])
                    .collect(),
                node_stress.into_iter().map(clean).collect(),
            )
        }
    };
    Frame {
        index,
        sim_time: state.time as f32,
        positions,
        von_mises,
        stress_min: clean(field.min),
        stress_max: clean(field.max),
    }
}
