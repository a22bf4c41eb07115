//! Temporal aggregation of fixed-length windows.
//!
//! A sequence of `N` frames is covered by windows of `window` frames that
//! step by `window - overlap`; the last window is shifted left so that it
//! ends exactly at `N`. Per-window outputs are blended with linear
//! crossfades that use frame-center weights `(2i+1)/(2·overlap)`.

use ndarray::{ArrayD, Axis, IxDyn, Zip};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowPlan {
    /// Requested window length.
    pub window_length: usize,
    pub overlap: usize,
    pub starts: Vec<usize>,
    pub total: usize,
}

impl WindowPlan {
    /// Frames per window; shorter than requested when the sequence is.
    pub fn effective_length(&self) -> usize {
        self.window_length.min(self.total)
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let len = self.effective_length();
        self.starts.iter().map(move |&s| s..s + len)
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }
}

/// Window starts for `total` frames. A sequence shorter than one window gets
/// a single truncated window.
pub fn plan_windows(total: usize, window: usize, overlap: usize) -> Result<WindowPlan> {
    if total == 0 || window == 0 {
        return Err(Error::invalid("sequence length and window length must be positive"));
    }
    if overlap >= window {
        return Err(Error::invalid(format!("overlap {overlap} must be smaller than window {window}")));
    }
    let len = window.min(total);
    let step = window - overlap;
    let mut starts = vec![0];
    let mut s = 0;
    while s + len < total {
        s = (s + step).min(total - len);
        starts.push(s);
    }
    Ok(WindowPlan { window_length: window, overlap, starts, total })
}

// Unnormalized weight of window `j` at absolute frame `f`.
fn raw_weight(plan: &WindowPlan, j: usize, f: usize) -> f64 {
    let len = plan.effective_length();
    let start = plan.starts[j];
    let mut w = 1.0;
    if j > 0 {
        let prev_end = plan.starts[j - 1] + len;
        if f < prev_end {
            let o = prev_end - start;
            w *= (2 * (f - start) + 1) as f64 / (2 * o) as f64;
        }
    }
    if let Some(&next) = plan.starts.get(j + 1) {
        if f >= next {
            let o = start + len - next;
            w *= 1.0 - (2 * (f - next) + 1) as f64 / (2 * o) as f64;
        }
    }
    w
}

/// Normalized `(window, weight)` contributions for every frame.
pub fn blend_weights(plan: &WindowPlan) -> Vec<Vec<(usize, f64)>> {
    let mut per_frame: Vec<Vec<(usize, f64)>> = vec![Vec::new(); plan.total];
    for (j, range) in plan.ranges().enumerate() {
        for f in range {
            per_frame[f].push((j, raw_weight(plan, j, f)));
        }
    }
    for contributions in &mut per_frame {
        let total: f64 = contributions.iter().map(|(_, w)| w).sum();
        for (_, w) in contributions.iter_mut() {
            *w /= total;
        }
    }
    per_frame
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendedSequence {
    /// Frame axis first, payload axes after.
    pub frames: ArrayD<f64>,
    pub weights: Vec<Vec<(usize, f64)>>,
}

/// Crossfades per-window outputs (each with the frame axis first) into one
/// sequence.
pub fn blend(windows: &[ArrayD<f64>], plan: &WindowPlan) -> Result<BlendedSequence> {
    if windows.len() != plan.len() {
        return Err(Error::shape("window outputs", plan.len(), windows.len()));
    }
    let len = plan.effective_length();
    let payload = windows[0].shape().get(1..).unwrap_or(&[]).to_vec();
    for (j, w) in windows.iter().enumerate() {
        if w.ndim() == 0 || w.shape()[0] != len || w.shape()[1..] != payload[..] {
            let mut want = vec![len];
            want.extend(&payload);
            return Err(Error::shape(format!("window {j} shape"), format!("{want:?}"), format!("{:?}", w.shape())));
        }
    }

    let weights = blend_weights(plan);
    let mut shape = vec![plan.total];
    shape.extend(&payload);
    let mut frames = ArrayD::zeros(IxDyn(&shape));
    for (f, contributions) in weights.iter().enumerate() {
        let mut out = frames.index_axis_mut(Axis(0), f);
        // Running convex combination: identical inputs stay bit-identical.
        let mut seen = 0.0;
        for &(j, w) in contributions {
            let src = windows[j].index_axis(Axis(0), f - plan.starts[j]);
            seen += w;
            if seen == w {
                out.assign(&src);
            } else {
                let t = w / seen;
                Zip::from(&mut out).and(&src).for_each(|acc, &x| *acc += t * (x - *acc));
            }
        }
    }
    Ok(BlendedSequence { frames, weights })
}
