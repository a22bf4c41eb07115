//! Parameter-sequence text format.
//!
//! JSON Lines. The first non-blank line is the header, every following line
//! is one frame:
//!
//! ```text
//! {"fps":25.0}
//! {"shape":[...],"expression":[...],"pose":[...]}
//! {"shape":[...],"expression":[...],"pose":[...]}
//! ```
//!
//! Floats are written in shortest round-trip form, so a load/save cycle
//! preserves every coefficient bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FlameParams, ParamSequence};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    fps: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    shape: Vec<f64>,
    expression: Vec<f64>,
    pose: Vec<f64>,
}

pub fn parse_sequence(text: &str) -> Result<ParamSequence> {
    let mut lines = text.lines().enumerate().filter(|(_, line)| !line.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::format("parameter sequence", "missing header line"))?;
    let header: Header =
        serde_json::from_str(header).map_err(|e| Error::format("parameter sequence", format!("header: {e}")))?;

    let frames = lines
        .map(|(lineno, line)| {
            let rec: FrameRecord = serde_json::from_str(line)
                .map_err(|e| Error::format("parameter sequence", format!("line {}: {e}", lineno + 1)))?;
            Ok(FlameParams { shape: rec.shape, expression: rec.expression, pose: rec.pose })
        })
        .collect::<Result<Vec<_>>>()?;
    ParamSequence::new(frames, header.fps)
}

pub fn sequence_to_string(seq: &ParamSequence) -> Result<String> {
    seq.validate()?;
    let mut out = to_json(&Header { fps: seq.fps })?;
    out.push('\n');
    for frame in &seq.frames {
        out.push_str(&to_json(frame)?);
        out.push('\n');
    }
    Ok(out)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::format("parameter sequence", e.to_string()))
}

pub fn load_sequence(path: impl AsRef<Path>) -> Result<ParamSequence> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sequence(&text)
}

pub fn save_sequence(seq: &ParamSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, sequence_to_string(seq)?).map_err(|e| Error::io(path, e))
}
