use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GsConfig, GsMode, Real};

/// Logistic noise `log U - log(1 - U)` with `U ~ Uniform(0, 1)`.
pub fn logistic_noise<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
    u.ln() - (1.0 - u).ln()
}

#[inline]
pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Gumbel-Sigmoid with an explicit noise sample.
///
/// Returns `(output, d output / d logit)`. In the hard sampled mode the output
/// is thresholded while the derivative is that of the soft sample.
#[inline]
pub(crate) fn gs_forward<F: Real>(logit: F, noise: F, cfg: &GsConfig) -> (F, F) {
    match cfg.mode {
        GsMode::HardDeterministic => (if logit > F::zero() { F::one() } else { F::zero() }, F::zero()),
        GsMode::SampledSoft | GsMode::SampledHard => {
            let t = F::of(cfg.temperature);
            let soft = sigmoid((logit + noise) / t);
            let d = soft * (F::one() - soft) / t;
            let out = if cfg.mode == GsMode::SampledHard {
                if logit + noise > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            } else {
                soft
            };
            (out, d)
        }
    }
}

pub fn gumbel_sigmoid_with_noise(logit: f64, noise: f64, cfg: &GsConfig) -> f64 {
    gs_forward(logit, noise, cfg).0
}

/// Gumbel-Sigmoid whose logistic noise is drawn from `noise_seed`.
pub fn gumbel_sigmoid(logit: f64, cfg: &GsConfig, noise_seed: u64) -> f64 {
    let noise = if cfg.is_sampled() {
        logistic_noise(&mut ChaCha8Rng::seed_from_u64(noise_seed))
    } else {
        0.0
    };
    gumbel_sigmoid_with_noise(logit, noise, cfg)
}
