//! Binary model container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      "FLMF"
//! version    u16 (= 1)
//! dims       u32 × 5: n, f, k, |β|, |ψ|      (k excludes the root joint)
//! template             f32 × n·3
//! faces                u32 × f·3
//! shape_basis          f32 × n·3·|β|          (vertex, coord, coefficient)
//! expression_basis     f32 × n·3·|ψ|
//! pose_corrective      f32 × n·3·9k
//! joint_regressor      f32 × (k+1)·n          (joint-major)
//! skinning_weights     f32 × n·(k+1)          (vertex-major)
//! parents              u32 × (k+1)            (root = 0xFFFF_FFFF)
//! ```
//!
//! Nothing may follow the last array.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};

use super::FlameModel;
use crate::binio::Reader;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FLMF";
pub const VERSION: u16 = 1;
const ROOT_SENTINEL: u32 = u32::MAX;
const HEADER_LEN: usize = 4 + 2 + 5 * 4;

/// Reads and validates a model container.
pub fn load_model(path: impl AsRef<Path>) -> Result<FlameModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

/// Writes `model` in canonical container form.
pub fn save_model(model: &FlameModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_model(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_model(model: &FlameModel) -> Result<Vec<u8>> {
    model.validate()?;
    let n = model.vertex_count();
    let k = model.articulated_joints();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * model.template.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [n, model.face_count(), k, model.shape_dim(), model.expression_dim()] {
        let dim = u32::try_from(dim).map_err(|_| Error::invalid(format!("dimension {dim} exceeds container range")))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }

    let put_f32 = |values: &mut dyn Iterator<Item = f64>, out: &mut Vec<u8>| {
        for v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    put_f32(&mut model.template.iter().copied(), &mut out);
    for idx in model.faces.iter().flatten() {
        out.extend_from_slice(&idx.to_le_bytes());
    }
    put_f32(&mut model.shape_basis.iter().copied(), &mut out);
    put_f32(&mut model.expression_basis.iter().copied(), &mut out);
    put_f32(&mut model.pose_corrective_basis.iter().copied(), &mut out);
    put_f32(&mut model.joint_regressor.iter().copied(), &mut out);
    put_f32(&mut model.skinning_weights.iter().copied(), &mut out);
    for parent in &model.parents {
        let raw = parent.map_or(ROOT_SENTINEL, |p| p as u32);
        out.extend_from_slice(&raw.to_le_bytes());
    }
    Ok(out)
}

/// Parses and validates a container held in memory.
pub fn read_model(bytes: &[u8]) -> Result<FlameModel> {
    let mut r = Reader::new(bytes, "model container");
    if r.take(4)? != MAGIC {
        return Err(Error::format("model container", "bad magic, expected \"FLMF\""));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::format("model container", format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = r.u32()? as usize;
    }
    let [n, f, k, nb, ne] = dims;
    let joints = k + 1;

    // Validate the declared sizes against the payload before allocating.
    let floats = [n * 3, n * 3 * nb, n * 3 * ne, n * 3 * 9 * k, joints * n, n * joints];
    let expected = floats
        .iter()
        .chain(&[f * 3, joints])
        .try_fold(0usize, |acc, &c| acc.checked_add(c.checked_mul(4)?))
        .ok_or_else(|| Error::format("model container", "dimension table overflows"))?;
    let payload = bytes.len() - HEADER_LEN;
    if payload != expected {
        return Err(Error::format(
            "model container",
            format!(
                "dimension mismatch: header (n={n}, f={f}, k={k}, |β|={nb}, |ψ|={ne}) \
                 implies {expected} payload bytes, file has {payload}"
            ),
        ));
    }

    let shape_err = |e: ndarray::ShapeError| Error::format("model container", e.to_string());
    let template = Array2::from_shape_vec((n, 3), r.f32s(n * 3)?).map_err(shape_err)?;
    let faces = r.u32s(f * 3)?.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let shape_basis = Array3::from_shape_vec((n, 3, nb), r.f32s(n * 3 * nb)?).map_err(shape_err)?;
    let expression_basis = Array3::from_shape_vec((n, 3, ne), r.f32s(n * 3 * ne)?).map_err(shape_err)?;
    let pose_corrective_basis = Array3::from_shape_vec((n, 3, 9 * k), r.f32s(n * 3 * 9 * k)?).map_err(shape_err)?;
    let joint_regressor = Array2::from_shape_vec((joints, n), r.f32s(joints * n)?).map_err(shape_err)?;
    let skinning_weights = Array2::from_shape_vec((n, joints), r.f32s(n * joints)?).map_err(shape_err)?;
    let parents = r.u32s(joints)?.into_iter().map(|p| (p != ROOT_SENTINEL).then_some(p as usize)).collect();

    let model = FlameModel {
        template,
        faces,
        shape_basis,
        expression_basis,
        pose_corrective_basis,
        joint_regressor,
        skinning_weights,
        parents,
    };
    model.validate()?;
    Ok(model)
}
