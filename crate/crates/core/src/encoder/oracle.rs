//! Direct reference implementations used by the tests.

use ndarray::{s, Array2, Array3};

use super::{Activation, Attention, ConvLayer};

// Direct six-loop definition with explicit zero padding.
pub(crate) fn conv(input: &Array3<f64>, layer: &ConvLayer) -> Array3<f64> {
    let (cin, h, w) = input.dim();
    let (cout, _, kh, kw) = layer.weight.dim();
    let (ph, pw) = (kh as isize / 2, kw as isize / 2);
    let s = layer.stride;
    let ho = (h + 2 * ph as usize - kh) / s + 1;
    let wo = (w + 2 * pw as usize - kw) / s + 1;
    let mut out = Array3::zeros((cout, ho, wo));
    for o in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = layer.bias[o];
                for i in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * s + ky) as isize - ph;
                            let ix = (ox * s + kx) as isize - pw;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                acc += layer.weight[[o, i, ky, kx]] * input[[i, iy as usize, ix as usize]];
                            }
                        }
                    }
                }
                out[[o, oy, ox]] = match layer.activation {
                    Activation::Silu => acc / (1.0 + (-acc).exp()),
                    Activation::None => acc,
                };
            }
        }
    }
    out
}

// Builds each head's full N×N score matrix explicitly.
pub(crate) fn attention(x: &Array3<f64>, attn: &Attention) -> Array3<f64> {
    let (c, h, w) = x.dim();
    let n = h * w;
    let t: Array2<f64> = x.to_shape((c, n)).unwrap().t().to_owned();
    let (q, k, v) = (t.dot(&attn.wq.t()), t.dot(&attn.wk.t()), t.dot(&attn.wv.t()));
    let d = c / attn.heads;
    let mut mixed = Array2::<f64>::zeros((n, c));
    for head in 0..attn.heads {
        let cols = s![.., head * d..(head + 1) * d];
        let mut a = q.slice(cols).dot(&k.slice(cols).t()) / (d as f64).sqrt();
        for mut row in a.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let total = row.sum();
            row /= total;
        }
        mixed.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
    }
    let y = &t + &mixed.dot(&attn.wo.t());
    y.t().to_shape((c, h, w)).unwrap().to_owned()
}
