//! Head model assets: the in-memory model, per-frame parameters, and their
//! on-disk forms.
//!
//! A [`FlameModel`] carries `k' = k + 1` joints: joint 0 is the root, which
//! receives the global rotation, followed by the `k` articulated joints
//! (neck, jaw and the two eyeballs for the published model, so `k = 4`).

mod container;
mod params;
mod synthetic;

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use container::{load_model, read_model, save_model, write_model, MAGIC, VERSION};
pub use params::{load_sequence, parse_sequence, save_sequence, sequence_to_string};
pub use synthetic::{generate_test_model, random_params, random_sequence};

/// Tolerance for skinning-weight and joint-regressor row sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Vertex count of the published FLAME release.
pub const FLAME_VERTEX_COUNT: usize = 5023;
/// Articulated joints of the published FLAME release (neck, jaw, two eyes).
pub const FLAME_JOINT_COUNT: usize = 4;

/// A parametric head model: template mesh, linear bases, joint regressor and
/// skinning weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FlameModel {
    /// n×3 rest-pose template, y up.
    pub template: Array2<f64>,
    /// Triangle vertex-index triples, outward-facing counter-clockwise.
    pub faces: Vec<[u32; 3]>,
    /// n×3×|β| identity basis.
    pub shape_basis: Array3<f64>,
    /// n×3×|ψ| expression basis.
    pub expression_basis: Array3<f64>,
    /// n×3×9k pose-corrective basis. Feature `9j + 3r + c` is entry (r, c) of
    /// `R_j - I` for articulated joint `j` (0-based, root excluded).
    pub pose_corrective_basis: Array3<f64>,
    /// k'×n row-stochastic regressor from shaped vertices to rest joints.
    pub joint_regressor: Array2<f64>,
    /// n×k' per-vertex skinning weights.
    pub skinning_weights: Array2<f64>,
    /// Parent joint of every joint; `None` only for the root at index 0.
    pub parents: Vec<Option<usize>>,
}

impl FlameModel {
    pub fn vertex_count(&self) -> usize {
        self.template.nrows()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Number of articulated joints `k` (the root is not counted).
    pub fn articulated_joints(&self) -> usize {
        self.parents.len().saturating_sub(1)
    }

    /// Number of joints including the root, `k' = k + 1`.
    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_basis.len_of(Axis(2))
    }

    pub fn expression_dim(&self) -> usize {
        self.expression_basis.len_of(Axis(2))
    }

    /// Length of a pose vector, `3k + 3`.
    pub fn pose_dim(&self) -> usize {
        3 * self.joint_count()
    }

    /// Checks every structural and numeric invariant of the model.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertex_count();
        let joints = self.joint_count();
        if n == 0 {
            return Err(Error::Validation("model has no vertices".into()));
        }
        if self.template.ncols() != 3 {
            return Err(Error::Validation(format!("template must be n×3, got n×{}", self.template.ncols())));
        }
        if joints < 2 {
            return Err(Error::Validation("model needs a root and at least one articulated joint".into()));
        }

        let check_basis = |name: &str, basis: &Array3<f64>, width: usize| -> Result<()> {
            let dim = basis.dim();
            if dim.0 != n || dim.1 != 3 || dim.2 != width {
                return Err(Error::Validation(format!("{name} has shape {dim:?}, expected ({n}, 3, {width})")));
            }
            Ok(())
        };
        check_basis("shape basis", &self.shape_basis, self.shape_dim())?;
        check_basis("expression basis", &self.expression_basis, self.expression_dim())?;
        check_basis("pose-corrective basis", &self.pose_corrective_basis, 9 * self.articulated_joints())?;

        if self.joint_regressor.dim() != (joints, n) {
            return Err(Error::Validation(format!(
                "joint regressor has shape {:?}, expected ({joints}, {n})",
                self.joint_regressor.dim()
            )));
        }
        if self.skinning_weights.dim() != (n, joints) {
            return Err(Error::Validation(format!(
                "skinning weights have shape {:?}, expected ({n}, {joints})",
                self.skinning_weights.dim()
            )));
        }

        let all_finite = self.template.iter().all(|v| v.is_finite())
            && self.shape_basis.iter().all(|v| v.is_finite())
            && self.expression_basis.iter().all(|v| v.is_finite())
            && self.pose_corrective_basis.iter().all(|v| v.is_finite())
            && self.joint_regressor.iter().all(|v| v.is_finite())
            && self.skinning_weights.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Validation("non-finite value in model arrays".into()));
        }

        for (v, row) in self.skinning_weights.outer_iter().enumerate() {
            if row.iter().any(|&w| w < 0.0) {
                return Err(Error::Validation(format!("skinning weights negative at vertex {v}")));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "skinning weights not normalized at vertex {v} (row sum {sum})"
                )));
            }
        }
        for (j, row) in self.joint_regressor.outer_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "joint regressor not row-stochastic at joint {j} (row sum {sum})"
                )));
            }
        }

        for (i, face) in self.faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&idx| idx as usize >= n) {
                return Err(Error::Validation(format!("face {i} references vertex {bad}, model has {n}")));
            }
        }

        self.joint_order().map(|_| ())
    }

    /// Joints ordered so that every parent precedes its children.
    ///
    /// Fails when the parent array is not a tree rooted at joint 0.
    pub fn joint_order(&self) -> Result<Vec<usize>> {
        let joints = self.parents.len();
        if self.parents.first() != Some(&None) {
            return Err(Error::Validation("joint 0 must be the root".into()));
        }
        let mut children = vec![Vec::new(); joints];
        for (j, parent) in self.parents.iter().enumerate().skip(1) {
            match *parent {
                None => return Err(Error::Validation(format!("joint {j} has no parent; only joint 0 may be a root"))),
                Some(p) if p >= joints => {
                    return Err(Error::Validation(format!("joint {j} has parent {p}, out of range")))
                }
                Some(p) => children[p].push(j),
            }
        }
        let mut order = Vec::with_capacity(joints);
        let mut stack = vec![0usize];
        while let Some(j) = stack.pop() {
            order.push(j);
            stack.extend(children[j].iter().rev());
        }
        if order.len() != joints {
            return Err(Error::Validation("cyclic parent array: not every joint reaches the root".into()));
        }
        Ok(order)
    }
}

/// One frame of model coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlameParams {
    /// Identity coefficients β.
    pub shape: Vec<f64>,
    /// Expression coefficients ψ.
    pub expression: Vec<f64>,
    /// Axis-angle triples in radians: global rotation first, then one per
    /// articulated joint.
    pub pose: Vec<f64>,
}

impl FlameParams {
    /// All-zero coefficients sized for `model`.
    pub fn zeros(model: &FlameModel) -> Self {
        Self {
            shape: vec![0.0; model.shape_dim()],
            expression: vec![0.0; model.expression_dim()],
            pose: vec![0.0; model.pose_dim()],
        }
    }

    /// Errors unless every vector width matches `model`.
    pub fn check_against(&self, model: &FlameModel) -> Result<()> {
        if self.shape.len() != model.shape_dim() {
            return Err(Error::shape("shape coefficients", model.shape_dim(), self.shape.len()));
        }
        if self.expression.len() != model.expression_dim() {
            return Err(Error::shape("expression coefficients", model.expression_dim(), self.expression.len()));
        }
        if self.pose.len() != model.pose_dim() {
            return Err(Error::shape("pose vector", model.pose_dim(), self.pose.len()));
        }
        Ok(())
    }

    /// (|β|, |ψ|, |θ|)
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.shape.len(), self.expression.len(), self.pose.len())
    }
}

/// An ordered run of frames sharing parameter widths.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSequence {
    pub frames: Vec<FlameParams>,
    /// Frames per second; carried as metadata only.
    pub fps: f64,
}

impl ParamSequence {
    pub fn new(frames: Vec<FlameParams>, fps: f64) -> Result<Self> {
        let seq = Self { frames, fps };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Parameter widths shared by every frame, `None` for an empty sequence.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.frames.first().map(FlameParams::dims)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fps.is_finite() || self.fps <= 0.0 {
            return Err(Error::invalid(format!("fps must be positive, got {}", self.fps)));
        }
        let Some(dims) = self.dims() else {
            return Ok(());
        };
        if dims.2 < 3 || dims.2 % 3 != 0 {
            return Err(Error::invalid(format!("pose length {} is not a positive multiple of 3", dims.2)));
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.dims() != dims {
                return Err(Error::shape(
                    format!("frame {i} parameter widths (shape, expression, pose)"),
                    format!("{dims:?}"),
                    format!("{:?}", frame.dims()),
                ));
            }
            let finite = frame.shape.iter().chain(&frame.expression).chain(&frame.pose).all(|v| v.is_finite());
            if !finite {
                return Err(Error::invalid(format!("frame {i} has non-finite values")));
            }
        }
        Ok(())
    }
}
