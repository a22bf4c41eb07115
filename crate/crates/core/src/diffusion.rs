//! DDPM kernel: noise schedule, forward noising, the reverse-step mean, an
//! ε-prediction training loss and an ancestral sampling loop around a
//! pluggable denoiser.
//!
//! Steps are 1-based: `t ∈ 1..=T`. The reverse variance is fixed at `β_t·I`.

use ndarray::{Array3, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::{inject, FeatureMap, FeatureTag};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("noise schedule needs at least one step"));
        }
        if let Some((i, b)) = betas.iter().enumerate().find(|(_, &b)| !(b > 0.0 && b < 1.0)) {
            return Err(Error::invalid(format!("beta at step {} is {b}, must lie in (0, 1)", i + 1)));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let alpha_bars: Vec<f64> = alphas
            .iter()
            .scan(1.0, |acc, a| {
                *acc *= a;
                Some(*acc)
            })
            .collect();
        // Long schedules with large betas drive the product into the
        // subnormal range where it stops decreasing.
        let mut prev = 1.0;
        for (i, &ab) in alpha_bars.iter().enumerate() {
            if !(ab > f64::MIN_POSITIVE && ab < prev) {
                return Err(Error::invalid(format!(
                    "cumulative alpha underflows at step {} of {}",
                    i + 1,
                    betas.len()
                )));
            }
            prev = ab;
        }
        Ok(Self { betas, alphas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn index(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(t - 1)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        Ok(self.betas[self.index(t)?])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(self.alphas[self.index(t)?])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bars[self.index(t)?])
    }
}

/// `steps` betas evenly spaced from `beta_start` to `beta_end` inclusive.
pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("schedule needs at least one step"));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::invalid(format!("need 0 < beta_start ≤ beta_end < 1, got ({beta_start}, {beta_end})")));
    }
    let betas =
        (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
    NoiseSchedule::from_betas(betas)
}

/// A latent together with the step it sits at (0 for clean latents).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub z: FeatureMap,
    pub t: usize,
}

/// ε-prediction network `φ(z_t, t, C, z_id)`.
pub trait Denoiser {
    fn predict(&self, z_t: &FeatureMap, t: usize, guidance: &FeatureMap, z_id: &FeatureMap) -> Result<FeatureMap>;
}

/// Predicts zero noise everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn predict(&self, z_t: &FeatureMap, _: usize, _: &FeatureMap, _: &FeatureMap) -> Result<FeatureMap> {
        Ok(FeatureMap::zeros(z_t.shape(), FeatureTag::Latent))
    }
}

/// Knows the clean latent and returns the noise that explains `z_t` under
/// the closed-form marginal. The input it sees includes the injected
/// guidance, so that is subtracted first.
#[derive(Debug, Clone)]
pub struct TeacherForced<'a> {
    pub z0: &'a FeatureMap,
    pub schedule: &'a NoiseSchedule,
}

impl Denoiser for TeacherForced<'_> {
    fn predict(&self, z_t: &FeatureMap, t: usize, guidance: &FeatureMap, _: &FeatureMap) -> Result<FeatureMap> {
        let ab = self.schedule.alpha_bar(t)?;
        check_shape("clean latent", z_t, self.z0)?;
        let mut eps = z_t.data.clone();
        Zip::from(&mut eps)
            .and(&guidance.data)
            .and(&self.z0.data)
            .for_each(|e, &c, &z0| *e = (*e - c - ab.sqrt() * z0) / (1.0 - ab).sqrt());
        Ok(FeatureMap { data: eps, tag: FeatureTag::Latent })
    }
}

fn check_shape(what: &str, expected: &FeatureMap, actual: &FeatureMap) -> Result<()> {
    if expected.shape() != actual.shape() {
        return Err(Error::shape(what, format!("{:?}", expected.shape()), format!("{:?}", actual.shape())));
    }
    Ok(())
}

fn latent(data: Array3<f64>) -> FeatureMap {
    FeatureMap { data, tag: FeatureTag::Latent }
}

/// One forward transition: `√(1−β_t)·z_{t−1} + √β_t·ε`.
pub fn q_step(z_prev: &FeatureMap, t: usize, eps: &FeatureMap, sched: &NoiseSchedule) -> Result<FeatureMap> {
    let beta = sched.beta(t)?;
    check_shape("noise", z_prev, eps)?;
    let (a, b) = ((1.0 - beta).sqrt(), beta.sqrt());
    Ok(latent(Zip::from(&z_prev.data).and(&eps.data).map_collect(|&z, &e| a * z + b * e)))
}

/// Closed-form marginal: `√ᾱ_t·z_0 + √(1−ᾱ_t)·ε`.
pub fn q_sample(z0: &FeatureMap, t: usize, eps: &FeatureMap, sched: &NoiseSchedule) -> Result<LatentState> {
    let ab = sched.alpha_bar(t)?;
    check_shape("noise", z0, eps)?;
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    let z = latent(Zip::from(&z0.data).and(&eps.data).map_collect(|&z, &e| a * z + b * e));
    Ok(LatentState { z, t })
}

/// Reverse-step mean `(z_t − β_t/√(1−ᾱ_t)·ε̂) / √α_t`.
pub fn p_step_mean(z_t: &LatentState, eps_hat: &FeatureMap, sched: &NoiseSchedule) -> Result<FeatureMap> {
    let t = z_t.t;
    let (beta, alpha, ab) = (sched.beta(t)?, sched.alpha(t)?, sched.alpha_bar(t)?);
    check_shape("predicted noise", &z_t.z, eps_hat)?;
    let coef = beta / (1.0 - ab).sqrt();
    let scale = 1.0 / alpha.sqrt();
    Ok(latent(Zip::from(&z_t.z.data).and(&eps_hat.data).map_collect(|&z, &e| scale * (z - coef * e))))
}

fn denoise(
    denoiser: &dyn Denoiser,
    z_t: &FeatureMap,
    t: usize,
    guidance: &FeatureMap,
    z_id: &FeatureMap,
) -> Result<FeatureMap> {
    let input = inject(z_t, guidance)?;
    let eps_hat = denoiser.predict(&input, t, guidance, z_id)?;
    check_shape("denoiser output", z_t, &eps_hat)?;
    Ok(eps_hat)
}

/// Mean squared error between `eps` and the denoiser's prediction at the
/// noised latent (with guidance injected, as during sampling).
pub fn training_loss(
    z0: &FeatureMap,
    t: usize,
    eps: &FeatureMap,
    denoiser: &dyn Denoiser,
    guidance: &FeatureMap,
    z_id: &FeatureMap,
    sched: &NoiseSchedule,
) -> Result<f64> {
    let z_t = q_sample(z0, t, eps, sched)?;
    let eps_hat = denoise(denoiser, &z_t.z, t, guidance, z_id)?;
    let sum: f64 = Zip::from(&eps.data).and(&eps_hat.data).fold(0.0, |acc, &e, &p| acc + (e - p) * (e - p));
    Ok(sum / eps.data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerOptions {
    pub seed: u64,
    /// Adds `√β_t` Gaussian noise after every step except the last.
    pub add_noise: bool,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self { seed: 0, add_noise: true }
    }
}

/// Ancestral sampling from `z_T` down to `z_0`; returns every state,
/// starting with `z_T`.
pub fn sample_trace(
    z_start: &LatentState,
    denoiser: &dyn Denoiser,
    guidance: &FeatureMap,
    z_id: &FeatureMap,
    sched: &NoiseSchedule,
    options: SamplerOptions,
) -> Result<Vec<FeatureMap>> {
    if z_start.t != sched.steps() {
        return Err(Error::invalid(format!(
            "sampling starts at step {} but the schedule has {} steps",
            z_start.t,
            sched.steps()
        )));
    }
    check_shape("guidance", &z_start.z, guidance)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut trace = vec![z_start.z.clone()];
    let mut z = z_start.z.clone();
    for t in (1..=sched.steps()).rev() {
        let eps_hat = denoise(denoiser, &z, t, guidance, z_id)?;
        let mut next = p_step_mean(&LatentState { z, t }, &eps_hat, sched)?;
        if t > 1 && options.add_noise {
            let sigma = sched.beta(t)?.sqrt();
            next.data.mapv_inplace(|v| {
                let n: f64 = StandardNormal.sample(&mut rng);
                v + sigma * n
            });
        }
        trace.push(next.clone());
        z = next;
    }
    Ok(trace)
}

pub fn sample_loop(
    z_start: &LatentState,
    denoiser: &dyn Denoiser,
    guidance: &FeatureMap,
    z_id: &FeatureMap,
    sched: &NoiseSchedule,
    options: SamplerOptions,
) -> Result<LatentState> {
    let trace = sample_trace(z_start, denoiser, guidance, z_id, sched, options)?;
    let z = trace.into_iter().next_back().expect("trace holds at least z_T");
    Ok(LatentState { z, t: 0 })
}

/// Standard-normal latent of the given shape from a seeded stream.
pub fn gaussian_latent(shape: (usize, usize, usize), seed: u64) -> FeatureMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    latent(Array3::from_shape_simple_fn(shape, || StandardNormal.sample(&mut rng)))
}
