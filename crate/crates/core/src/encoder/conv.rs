use ndarray::{Array1, Array3, Array4};

use super::FeatureMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Silu,
}

impl Activation {
    pub fn code(self) -> u32 {
        match self {
            Activation::None => 0,
            Activation::Silu => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::None),
            1 => Some(Activation::Silu),
            _ => None,
        }
    }
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// 2D convolution layer with "same" zero padding (`kernel / 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// out × in × kh × kw
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    pub activation: Activation,
}

impl ConvLayer {
    pub fn zeros(
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    ) -> Self {
        Self {
            weight: Array4::zeros((out_channels, in_channels, kernel, kernel)),
            bias: Array1::zeros(out_channels),
            stride,
            activation,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    /// Spatial output size for an input of `size` pixels along one axis.
    pub fn output_size(&self, size: usize) -> usize {
        let k = self.weight.dim().2;
        let pad = k / 2;
        (size + 2 * pad - k) / self.stride + 1
    }
}

/// Cross-correlation plus bias, followed by the layer's activation.
pub fn conv_forward(input: &FeatureMap, layer: &ConvLayer) -> Result<FeatureMap> {
    let (cin, h, w) = input.shape();
    let (cout, lin, kh, kw) = layer.weight.dim();
    if cin != lin {
        return Err(Error::shape("conv input channels", lin, cin));
    }
    if layer.bias.len() != cout {
        return Err(Error::shape("conv bias length", cout, layer.bias.len()));
    }
    if layer.stride == 0 || kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::invalid("conv needs odd kernels and a positive stride"));
    }
    let (ph, pw) = (kh / 2, kw / 2);
    let s = layer.stride;
    let ho = (h + 2 * ph - kh) / s + 1;
    let wo = (w + 2 * pw - kw) / s + 1;

    let tag = input.tag;
    let input = input.data.as_standard_layout();
    let src = input.as_slice().expect("standard layout");
    let mut out = Array3::<f64>::zeros((cout, ho, wo));
    for (o, mut plane) in out.outer_iter_mut().enumerate() {
        let plane = plane.as_slice_mut().expect("fresh array");
        plane.fill(layer.bias[o]);
        for i in 0..cin {
            let channel = &src[i * h * w..(i + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wt = layer.weight[[o, i, ky, kx]];
                    if wt == 0.0 {
                        continue;
                    }
                    // Output columns whose tap lands inside the row.
                    let lo = pw.saturating_sub(kx).div_ceil(s);
                    let hi = (w + pw).saturating_sub(kx).div_ceil(s).min(wo);
                    if lo >= hi {
                        continue;
                    }
                    let first = lo * s + kx - pw;
                    for oy in 0..ho {
                        let iy = (oy * s + ky) as isize - ph as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = &channel[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut plane[oy * wo + lo..oy * wo + hi];
                        for (d, &x) in dst.iter_mut().zip(row[first..].iter().step_by(s)) {
                            *d += wt * x;
                        }
                    }
                }
            }
        }
    }
    if layer.activation == Activation::Silu {
        out.mapv_inplace(silu);
    }
    Ok(FeatureMap { data: out, tag })
}
