use ndarray::{s, Array2, Array3, ArrayView2};

const QUERY_BLOCK: usize = 256;

use super::FeatureMap;
use crate::error::{Error, Result};

/// Multi-head self-attention over the H·W spatial tokens of a feature map,
/// with a residual connection. Projections are C×C and applied as `W·x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub heads: usize,
}

impl Attention {
    pub fn zeros(channels: usize, heads: usize) -> Self {
        let z = Array2::zeros((channels, channels));
        Self { wq: z.clone(), wk: z.clone(), wv: z.clone(), wo: z, heads }
    }

    pub fn channels(&self) -> usize {
        self.wq.nrows()
    }

    fn check(&self, channels: usize) -> Result<()> {
        for (name, m) in [("query", &self.wq), ("key", &self.wk), ("value", &self.wv), ("output", &self.wo)] {
            if m.dim() != (channels, channels) {
                return Err(Error::shape(
                    "attention projection",
                    format!("{name} {channels}×{channels}"),
                    format!("{}×{}", m.nrows(), m.ncols()),
                ));
            }
        }
        if self.heads == 0 || !channels.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!("{channels} channels cannot be split across {} heads", self.heads)));
        }
        Ok(())
    }
}

// Tokens as rows: N × C.
fn tokens(input: &FeatureMap) -> Array2<f64> {
    let (c, h, w) = input.shape();
    input.data.to_shape((c, h * w)).expect("same element count").t().as_standard_layout().into_owned()
}

fn project(x: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    x.dot(&w.t())
}

fn softmax_row(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

fn head_scores(q: ArrayView2<f64>, k: ArrayView2<f64>, row: usize, lo: usize, hi: usize, scale: f64, out: &mut [f64]) {
    let qi = q.row(row);
    let qi = &qi.as_slice().expect("contiguous")[lo..hi];
    for (j, s) in out.iter_mut().enumerate() {
        let kj = &k.row(j).to_slice().expect("contiguous")[lo..hi];
        *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
    }
}

/// Softmax attention matrices (N×N, one per head) for inspection.
pub fn attention_weights(input: &FeatureMap, attn: &Attention) -> Result<Vec<Array2<f64>>> {
    let (c, h, w) = input.shape();
    attn.check(c)?;
    let n = h * w;
    let x = tokens(input);
    let (q, k) = (project(&x, &attn.wq), project(&x, &attn.wk));
    let d = c / attn.heads;
    let scale = 1.0 / (d as f64).sqrt();
    Ok((0..attn.heads)
        .map(|head| {
            let mut a = Array2::zeros((n, n));
            for i in 0..n {
                let row = a.row_mut(i).into_slice().expect("contiguous");
                head_scores(q.view(), k.view(), i, head * d, (head + 1) * d, scale, row);
                softmax_row(row);
            }
            a
        })
        .collect())
}

/// `x + W_o · concat_h(softmax(Q_h K_hᵀ / √d) V_h)`, computed a block of
/// query rows at a time so memory stays linear in the token count.
pub fn self_attention_forward(input: &FeatureMap, attn: &Attention) -> Result<FeatureMap> {
    let (c, h, w) = input.shape();
    attn.check(c)?;
    let n = h * w;
    let x = tokens(input);
    let (q, k, v) = (project(&x, &attn.wq), project(&x, &attn.wk), project(&x, &attn.wv));
    let d = c / attn.heads;
    let scale = 1.0 / (d as f64).sqrt();

    let mut mixed = Array2::<f64>::zeros((n, c));
    for head in 0..attn.heads {
        let cols = s![.., head * d..(head + 1) * d];
        let (qh, kh, vh) = (q.slice(cols), k.slice(cols), v.slice(cols));
        for start in (0..n).step_by(QUERY_BLOCK) {
            let rows = start..(start + QUERY_BLOCK).min(n);
            let mut scores = qh.slice(s![rows.clone(), ..]).dot(&kh.t());
            scores *= scale;
            for mut row in scores.rows_mut() {
                softmax_row(row.as_slice_mut().expect("contiguous"));
            }
            mixed.slice_mut(s![rows, head * d..(head + 1) * d]).assign(&scores.dot(&vh));
        }
    }
    let y = x + project(&mixed, &attn.wo);
    let data = y.t().to_shape((c, h, w)).expect("same element count").into_owned();
    let data: Array3<f64> = data.as_standard_layout().into_owned();
    Ok(FeatureMap { data, tag: input.tag })
}
