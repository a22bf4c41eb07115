//! Structured face alignment: the identity's shape coefficients combined
//! with each driving frame's expression and pose.
//!
//! Alignment happens purely in parameter space. The full driving pose is
//! transferred, including neck and eyeball rotations.

use crate::assets::{FlameParams, ParamSequence};
use crate::error::{Error, Result};

/// A driving sequence re-targeted onto one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSequence {
    pub identity_shape: Vec<f64>,
    /// Every frame's `shape` equals `identity_shape`.
    pub frames: ParamSequence,
}

impl AlignedSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Frame `i` of the result is `(β_id, ψ_d^i, θ_d^i)`.
///
/// Widths must match exactly: a driving sequence fitted with a different
/// number of shape or expression coefficients is rejected, never truncated.
pub fn align(identity: &FlameParams, driving: &ParamSequence) -> Result<AlignedSequence> {
    driving.validate()?;
    if let Some((shape, expression, pose)) = driving.dims() {
        let (id_shape, id_expression, id_pose) = identity.dims();
        if (shape, expression, pose) != (id_shape, id_expression, id_pose) {
            return Err(Error::shape(
                "identity vs driving widths (shape, expression, pose)",
                format!("identity ({id_shape}, {id_expression}, {id_pose})"),
                format!("driving ({shape}, {expression}, {pose})"),
            ));
        }
    }
    let frames = driving
        .frames
        .iter()
        .map(|frame| FlameParams {
            shape: identity.shape.clone(),
            expression: frame.expression.clone(),
            pose: frame.pose.clone(),
        })
        .collect();
    Ok(AlignedSequence { identity_shape: identity.shape.clone(), frames: ParamSequence { frames, fps: driving.fps } })
}

/// Replaces every frame's expression with the matching frame of
/// `replacement`, keeping shape and pose from `base`. Used to swap in
/// expression coefficients from a more expressive fitter.
pub fn substitute_expression(base: &ParamSequence, replacement: &ParamSequence) -> Result<ParamSequence> {
    if base.len() != replacement.len() {
        return Err(Error::shape("frame count", base.len(), replacement.len()));
    }
    if let (Some(b), Some(r)) = (base.dims(), replacement.dims()) {
        if b.1 != r.1 {
            return Err(Error::shape("expression width", b.1, r.1));
        }
    }
    let frames = base
        .frames
        .iter()
        .zip(&replacement.frames)
        .map(|(b, r)| FlameParams { shape: b.shape.clone(), expression: r.expression.clone(), pose: b.pose.clone() })
        .collect();
    ParamSequence::new(frames, base.fps)
}
