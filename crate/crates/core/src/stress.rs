//! Stress recovery and display mapping.
//!
//! The stress is the corotational small-strain estimate used by the force
//! model: `eps = sym(R^T F - I)`, `sigma = lambda tr(eps) I + 2 mu eps`.

use thiserror::Error;

use crate::fem::RestData;
use crate::mesh_io::RenderSurface;
use crate::Mat3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StressError {
    #[error("render surface has no embedding")]
    MissingEmbedding,
}

/// Per-element strain, stress and von Mises values.
#[derive(Debug, Clone, PartialEq)]
pub struct StressField {
    pub strain: Vec<Mat3>,
    /// Pa
    pub cauchy: Vec<Mat3>,
    /// Pa
    pub von_mises: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl StressField {
    pub fn element_count(&self) -> usize {
        self.von_mises.len()
    }

    /// Index of the element with the largest von Mises stress.
    pub fn argmax(&self) -> Option<usize> {
        self.von_mises
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

pub fn element_stress(positions: &[f64], rest: &RestData, rotations: &[Mat3]) -> StressField {
    let n = rest.elements.len();
    let mut strain = Vec::with_capacity(n);
    let mut cauchy = Vec::with_capacity(n);
    let mut von = Vec::with_capacity(n);
    for (e, r) in rotations.iter().enumerate().take(n) {
        let f = rest.deformation_gradient(e, positions);
        let g = r.transpose() * f - Mat3::identity();
        let eps = (g + g.transpose()) * 0.5;
        let sigma = Mat3::identity() * (rest.lambda * eps.trace()) + eps * (2.0 * rest.mu);
        von.push(von_mises(&sigma));
        strain.push(eps);
        cauchy.push(sigma);
    }
    let (min, max) = von
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (min, max) = if von.is_empty() { (0.0, 0.0) } else { (min, max) };
    StressField {
        strain,
        cauchy,
        von_mises: von,
        min,
        max,
    }
}

/// `sqrt(3/2 dev(s):dev(s))` for a symmetric tensor.
pub fn von_mises(s: &Mat3) -> f64 {
    let mean = s.trace() / 3.0;
    let dev = s - Mat3::identity() * mean;
    (1.5 * dev.component_mul(&dev).sum()).max(0.0).sqrt()
}

/// Per-vertex stress and the normalized color parameter in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceStress {
    pub values: Vec<f64>,
    pub color_param: Vec<f64>,
    pub range: (f64, f64),
}

impl SurfaceStress {
    /// Blue (0) to red (1) RGB colors.
    pub fn colors(&self) -> Vec<[f32; 3]> {
        self.color_param.iter().map(|&t| blue_to_red(t)).collect()
    }
}

pub fn blue_to_red(t: f64) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0) as f32;
    [t, 0.0, 1.0 - t]
}

/// Maps element von Mises values to surface vertices (piecewise constant).
///
/// Colors are normalized over `fixed_range` when given, otherwise over the
/// field's own `[min, max]`. A zero-width range maps everything to 0.5.
pub fn map_to_surface(
    field: &StressField,
    surface: &RenderSurface,
    fixed_range: Option<(f64, f64)>,
) -> Result<SurfaceStress, StressError> {
    let embedding = surface.embedding.as_ref().ok_or(StressError::MissingEmbedding)?;
    let values: Vec<f64> = embedding.iter().map(|e| field.von_mises[e.tet]).collect();
    let (lo, hi) = fixed_range.unwrap_or((field.min, field.max));
    let span = hi - lo;
    let color_param = values
        .iter()
        .map(|&v| {
            if span > 0.0 {
                ((v - lo) / span).clamp(0.0, 1.0)
            } else {
                0.5
            }
        })
        .collect();
    Ok(SurfaceStress {
        values,
        color_param,
        range: (lo, hi),
    })
}
