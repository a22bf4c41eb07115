use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::PosedMesh;

/// Weak-perspective camera: uniform scale plus a 2D translation in
/// normalized screen units, looking down −z (larger z is nearer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(scale: f64, tx: f64, ty: f64, width: usize, height: usize) -> Result<Self> {
        let camera = Self { scale, tx, ty, width, height };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid(format!("camera scale must be positive, got {}", self.scale)));
        }
        if !(self.tx.is_finite() && self.ty.is_finite()) {
            return Err(Error::invalid("camera translation must be finite"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!("image size must be at least 1×1, got {}×{}", self.width, self.height)));
        }
        Ok(())
    }

    /// Pixel coordinates (x right, y down) and pass-through z.
    pub fn project_point(&self, p: [f64; 3]) -> [f64; 3] {
        let w = self.width as f64;
        let h = self.height as f64;
        [(self.scale * p[0] + self.tx + 1.0) * w / 2.0, (1.0 - (self.scale * p[1] + self.ty)) * h / 2.0, p[2]]
    }
}

/// Projects every vertex of `mesh`.
pub fn project(camera: &Camera, mesh: &PosedMesh<'_>) -> Vec<[f64; 3]> {
    mesh.vertices.outer_iter().map(|v| camera.project_point([v[0], v[1], v[2]])).collect()
}
