//! Relational effect-prediction network with binary bottlenecks.
//!
//! Per object, an encoder MLP ends in a Gumbel-Sigmoid unit that yields the
//! unary predicate bits. K attention heads compute query/key vectors per
//! object; the Gumbel-Sigmoid of each query-key dot product is a binary
//! relation between an ordered object pair. Unary bits concatenated with the
//! per-object action vector are embedded by an aggregation MLP, the embeddings
//! are summed over related objects for every head, and a decoder MLP maps the
//! concatenated head sums to the predicted effect.
//!
//! All gradients are written by hand. The network is generic over [`Real`] so
//! training runs in `f32` while gradient checks run in `f64`.

mod checkpoint;
mod gumbel;
mod mlp;
mod model;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use gumbel::{gumbel_sigmoid, gumbel_sigmoid_with_noise, logistic_noise};
pub use mlp::{Linear, Mlp, NormLinear};
pub use model::{action_vector, AttentionHead, Batch, ForwardOutput, GsNoise, RelationalNet, SampleSymbols};
pub use train::{
    clip_gradient, evaluate_mse, rollout_error, train, write_metrics, Adam, EpochMetrics, RolloutError, TrainConfig,
    TrainError, TrainReport,
};

use std::fmt::{Debug, Display};
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

use crate::sim::ObjectFeature;

/// Floating point scalar usable by the network.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + LinalgScalar + ScalarOperand + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + LinalgScalar + ScalarOperand + Debug + Display + FromStr + Default + Send + Sync + 'static
{
}

/// Dimension of the per-object action vector:
/// `[is_pick, is_place, grasp one-hot (3), release one-hot (3)]`.
pub const ACTION_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsMode {
    /// `sigmoid((logit + noise) / T)`, differentiable.
    SampledSoft,
    /// Thresholded noisy sample in the forward pass, soft gradient in the
    /// backward pass (straight-through).
    SampledHard,
    /// `1` if the logit is positive, else `0`. No noise.
    HardDeterministic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsConfig {
    pub temperature: f64,
    pub mode: GsMode,
}

impl GsConfig {
    pub fn new(temperature: f64, mode: GsMode) -> Result<Self, ConfigError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(ConfigError::Temperature(temperature));
        }
        Ok(GsConfig { temperature, mode })
    }

    pub fn hard() -> Self {
        GsConfig { temperature: 1.0, mode: GsMode::HardDeterministic }
    }

    pub fn is_sampled(&self) -> bool {
        self.mode != GsMode::HardDeterministic
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("Gumbel-Sigmoid temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("invalid model configuration: {0}")]
    Model(String),
}

/// How head sums are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// `h_i^k = sum_j alpha^k_ij z_j`
    Neighbors,
    /// `h_i^k = (sum_j alpha^k_ij) z_i`
    SelfScaled,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Neighbors => "neighbors",
            Aggregation::SelfScaled => "self-scaled",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Aggregation::Neighbors, Aggregation::SelfScaled].into_iter().find(|a| a.name() == s)
    }
}

/// Learned relations, or the ablation where every relation is fixed to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Relational,
    AllOnes,
}

impl AttentionKind {
    pub fn name(self) -> &'static str {
        match self {
            AttentionKind::Relational => "relational",
            AttentionKind::AllOnes => "all-ones",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [AttentionKind::Relational, AttentionKind::AllOnes].into_iter().find(|a| a.name() == s)
    }
}

/// Network shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d_o: usize,
    /// Unary symbol bits per object.
    pub d_k: usize,
    /// Number of relation heads.
    pub heads: usize,
    pub d_att: usize,
    pub d_z: usize,
    pub d_a: usize,
    pub hidden: usize,
    /// Norm that inputs and weight vectors feeding Gumbel-Sigmoid are rescaled to.
    pub pre_gs_norm: f64,
    pub aggregation: Aggregation,
    pub attention: AttentionKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_o: ObjectFeature::DIM,
            d_k: 1,
            heads: 3,
            d_att: 32,
            d_z: 32,
            d_a: ACTION_DIM,
            hidden: 128,
            pre_gs_norm: 3.0,
            aggregation: Aggregation::Neighbors,
            attention: AttentionKind::Relational,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let dims = [self.d_o, self.d_k, self.heads, self.d_att, self.d_z, self.d_a, self.hidden];
        if dims.contains(&0) {
            return Err(ConfigError::Model("all dimensions must be positive".into()));
        }
        if self.d_o != ObjectFeature::DIM || self.d_a != ACTION_DIM {
            return Err(ConfigError::Model(format!(
                "feature/action dimensions must be {}/{}",
                ObjectFeature::DIM,
                ACTION_DIM
            )));
        }
        if !(self.pre_gs_norm > 0.0) {
            return Err(ConfigError::Model("pre_gs_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Summed squared error `sum_i |pred_i - obs_i|^2` over the objects of one sample.
pub fn effect_loss(predicted: &[[f64; ObjectFeature::DIM]], observed: &[[f64; ObjectFeature::DIM]]) -> Result<f64, LengthMismatch> {
    if predicted.len() != observed.len() {
        return Err(LengthMismatch { predicted: predicted.len(), observed: observed.len() });
    }
    Ok(predicted
        .iter()
        .zip(observed)
        .map(|(p, o)| p.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum())
}

#[derive(Debug, Error, PartialEq)]
#[error("predicted {predicted} effects but observed {observed}")]
pub struct LengthMismatch {
    pub predicted: usize,
    pub observed: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_examples() {
        let e = [[1.0, 2.0, 3.0, 0.0, 0.0, 0.0], [0.0, -1.0, 0.5, 0.0, 0.0, 0.0]];
        assert_eq!(effect_loss(&e, &e).unwrap(), 0.0);
        let mut p = e;
        p[1][2] += 1.0;
        assert_eq!(effect_loss(&p, &e).unwrap(), 1.0);
        assert!(effect_loss(&p[..1], &e).is_err());
    }

    #[test]
    fn loss_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 5;
        let p: Vec<[f64; 6]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
        let o: Vec<[f64; 6]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect();
        let mut naive = 0.0;
        for i in 0..n {
            for k in 0..6 {
                let d = p[i][k] - o[i][k];
                naive += d * d;
            }
        }
        assert!((effect_loss(&p, &o).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig { heads: 0, ..ModelConfig::default() };
        assert!(bad.validate().is_err());
        assert!(GsConfig::new(0.0, GsMode::SampledSoft).is_err());
        assert!(GsConfig::new(0.5, GsMode::SampledSoft).is_ok());
    }
}
