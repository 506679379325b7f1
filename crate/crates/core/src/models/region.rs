use serde::{Deserialize, Serialize};

use crate::Vec3;

/// Axis-aligned box as written in descriptors (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl BoxSpec {
    pub fn has_positive_extent(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i])
    }

    pub fn region(&self) -> Region {
        Region::aabb(Vec3::from(self.min), Vec3::from(self.max))
    }
}

/// Convex region given as an intersection of half-spaces `n . x <= d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    planes: Vec<(Vec3, f64)>,
}

impl Region {
    pub fn from_planes(planes: Vec<(Vec3, f64)>) -> Self {
        Self { planes }
    }

    pub fn aabb(min: Vec3, max: Vec3) -> Self {
        let mut planes = Vec::with_capacity(6);
        for i in 0..3 {
            let mut e = Vec3::zeros();
            e[i] = 1.0;
            planes.push((e, max[i]));
            planes.push((-e, -min[i]));
        }
        Self { planes }
    }

    /// Box centered at `center` with orthonormal `axes` and half extents.
    pub fn oriented_box(center: Vec3, axes: [Vec3; 3], half: [f64; 3]) -> Self {
        let mut planes = Vec::with_capacity(6);
        for (a, h) in axes.iter().zip(half) {
            let c = a.dot(&center);
            planes.push((*a, c + h));
            planes.push((-a, -c + h));
        }
        Self { planes }
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.planes.iter().all(|(n, d)| n.dot(p) <= *d)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            planes: self.planes.iter().map(|(n, d)| (*n, d * factor)).collect(),
        }
    }
}

/// Region with a uniform remanence (T).
#[derive(Debug, Clone, PartialEq)]
pub struct MagnetRegion {
    pub region: Region,
    pub remanence: Vec3,
}
