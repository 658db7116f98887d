use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::model::{Batch, GsNoise, RelationalNet};
use super::{ConfigError, GsConfig, GsMode, ModelConfig, Real};
use crate::sim::{relevant_objects, simulate, Episode, ObjectFeature, ObjectId, Transition};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient norm clip.
    pub grad_clip_norm: f64,
    pub pre_gs_norm: f64,
    pub seed: u64,
    pub gs: GsConfig,
    /// Log progress every this many epochs (0 disables).
    pub log_every: usize,
}

impl TrainConfig {
    pub fn paper() -> Self {
        TrainConfig {
            epochs: 4000,
            batch_size: 128,
            learning_rate: 1e-4,
            grad_clip_norm: 10.0,
            pre_gs_norm: 3.0,
            seed: 0,
            gs: GsConfig { temperature: 1.0, mode: GsMode::SampledHard },
            log_every: 50,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.batch_size == 0 {
            return Err(ConfigError::Model("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError::Model("learning_rate must be positive".into()));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(ConfigError::Model("grad_clip_norm must be positive".into()));
        }
        if !self.gs.is_sampled() {
            return Err(ConfigError::Model("training needs a sampled Gumbel-Sigmoid mode".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch's minibatches
    /// (hard deterministic loss on the full training set for epoch 0).
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: RelationalNet<f32>,
    pub metrics: Vec<EpochMetrics>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("empty training set")]
    EmptyData,
    #[error("loss diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        /// Parameters after the last epoch that finished with a finite loss.
        last_good: Box<RelationalNet<f32>>,
        metrics: Vec<EpochMetrics>,
    },
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(net: &RelationalNet<F>, learning_rate: f64) -> Self {
        let shapes: Vec<usize> = net.named_tensors().iter().map(|(_, t, _)| t.len()).collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut RelationalNet<F>, grad: &RelationalNet<F>) {
        self.step += 1;
        let b1 = F::of(self.beta1);
        let b2 = F::of(self.beta2);
        let c1 = F::of(1.0 - self.beta1.powi(self.step));
        let c2 = F::of(1.0 - self.beta2.powi(self.step));
        let lr = F::of(self.learning_rate);
        let eps = F::of(self.eps);
        let grads = grad.named_tensors();
        for (k, p) in net.tensors_mut().into_iter().enumerate() {
            let g = grads[k].1;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (F::one() - b1) * g[i];
                v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grad` so its global norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_gradient<F: Real>(grad: &mut RelationalNet<F>, max_norm: f64) -> f64 {
    let norm = grad
        .named_tensors()
        .iter()
        .flat_map(|(_, t, _)| t.iter())
        .map(|v| v.to_f64().unwrap_or(f64::NAN).powi(2))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = F::of(max_norm / norm);
        for t in grad.tensors_mut() {
            for v in t.iter_mut() {
                *v = *v * s;
            }
        }
    }
    norm
}

/// Mean per-sample squared effect error with hard deterministic symbols.
pub fn evaluate_mse<F: Real>(net: &RelationalNet<F>, data: &Batch<F>) -> f64 {
    const CHUNK: usize = 1024;
    let n = data.n_samples();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    let gs = GsConfig::hard();
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(CHUNK) {
        let b = data.gather(chunk);
        let out = net.forward(&b, &gs, None);
        total += (&out.effects - &b.effects)
            .iter()
            .map(|v| v.to_f64().unwrap_or(f64::NAN).powi(2))
            .sum::<f64>();
    }
    total / n as f64
}

/// Trains a fresh network on `train_set`, validating on `val_set` after each epoch.
pub fn train(train_set: &[Transition], val_set: &[Transition], model: ModelConfig, cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    let model = ModelConfig { pre_gs_norm: cfg.pre_gs_norm, ..model };
    model.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net: RelationalNet<f32> = RelationalNet::init(model, &mut rng);
    net.fit_input_normalization(train_set);
    let train_batch = Batch::<f32>::from_transitions(train_set);
    let val_batch = Batch::<f32>::from_transitions(val_set);
    let mut adam = Adam::new(&net, cfg.learning_rate);

    let mut metrics = vec![EpochMetrics {
        epoch: 0,
        train_mse: evaluate_mse(&net, &train_batch),
        val_mse: evaluate_mse(&net, &val_batch),
    }];
    let mut last_good = net.clone();
    let mut order: Vec<usize> = (0..train_batch.n_samples()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut diverged = false;
        for chunk in order.chunks(cfg.batch_size) {
            let b = train_batch.gather(chunk);
            let noise = GsNoise::sample(&b, &net.config, &mut rng);
            let (loss, mut grad) = net.loss_and_gradient(&b, &cfg.gs, Some(&noise), 1.0);
            let norm = clip_gradient(&mut grad, cfg.grad_clip_norm);
            if !loss.is_finite() || !norm.is_finite() {
                diverged = true;
                break;
            }
            adam.step(&mut net, &grad);
            loss_sum += f64::from(loss) * chunk.len() as f64;
        }
        let val_mse = evaluate_mse(&net, &val_batch);
        if diverged || !val_mse.is_finite() || !net.all_finite() {
            return Err(TrainError::Diverged { epoch, last_good: Box::new(last_good), metrics });
        }
        let m = EpochMetrics { epoch, train_mse: loss_sum / order.len() as f64, val_mse };
        if cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch == cfg.epochs) {
            log::info!("epoch {epoch}: train {:.4} val {:.4}", m.train_mse, m.val_mse);
        }
        metrics.push(m);
        last_good = net.clone();
    }
    Ok(TrainReport { model: net, metrics })
}

/// Mean cumulative rollout error per step.
///
/// The running state starts at the episode's first true state. Each step
/// predicts the effect of the recorded action on the relevant objects of the
/// current true state, adds it (plus the arm displacement for carried
/// objects) to their predicted feature vectors, and measures the summed
/// squared error over every object against the true next state. Entry `t` is
/// the mean over episodes of that error accumulated over steps `1..=t+1`, so
/// entry 0 equals the per-sample loss of the first transitions.
pub fn rollout_error<F: Real>(net: &RelationalNet<F>, episodes: &[Episode], horizon: usize) -> Result<Vec<f64>, RolloutError> {
    if let Some(short) = episodes.iter().find(|e| e.actions.len() < horizon) {
        return Err(RolloutError::ShortEpisode { length: short.actions.len(), horizon });
    }
    let mut sums = vec![0.0; horizon];
    for ep in episodes {
        let mut predicted: BTreeMap<ObjectId, [f64; ObjectFeature::DIM]> =
            ep.states[0].objects.iter().map(|(id, f)| (*id, f.to_vector())).collect();
        let mut cumulative = 0.0;
        for t in 0..horizon {
            let truth_pre = &ep.states[t];
            let action = &ep.actions[t];
            let (carried, arm_delta) = simulate(truth_pre, action)
                .map_or((BTreeSet::new(), [0.0; 2]), |o| (o.carried, o.arm_delta));
            let ids = relevant_objects(truth_pre, action);
            let rows: Vec<_> = ids.iter().map(|id| predicted[id]).collect();
            let effects = net.predict_effects_rows(&ids, &rows, action);
            for (k, id) in ids.iter().enumerate() {
                let row = predicted.get_mut(id).expect("known object");
                for c in 0..ObjectFeature::DIM {
                    row[c] += effects[k][c];
                }
                if carried.contains(id) {
                    row[0] += arm_delta[0];
                    row[1] += arm_delta[1];
                }
            }
            let step_err: f64 = ep.states[t + 1]
                .objects
                .iter()
                .map(|(id, truth)| {
                    let p = predicted[id];
                    truth.to_vector().iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .sum();
            cumulative += step_err;
            sums[t] += cumulative;
        }
    }
    let n = episodes.len().max(1) as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

#[derive(Debug, Error, PartialEq)]
pub enum RolloutError {
    #[error("episode of length {length} is shorter than the horizon {horizon}")]
    ShortEpisode { length: usize, horizon: usize },
}

/// Writes one JSON object per epoch: `{"epoch":..,"train_mse":..,"val_mse":..}`.
pub fn write_metrics<W: std::io::Write>(metrics: &[EpochMetrics], mut w: W) -> std::io::Result<()> {
    for m in metrics {
        let line = serde_json::json!({"epoch": m.epoch, "train_mse": m.train_mse, "val_mse": m.val_mse});
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::AttentionKind;
    use crate::sim::{collect_dataset, collect_episodes};

    fn tiny_model() -> ModelConfig {
        ModelConfig { hidden: 16, d_att: 8, d_z: 8, ..ModelConfig::default() }
    }

    fn tiny_train() -> TrainConfig {
        TrainConfig { epochs: 3, batch_size: 32, learning_rate: 1e-3, log_every: 0, ..TrainConfig::paper() }
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let data = collect_dataset(300, 4, (2, 4));
        let a = train(&data[..250], &data[250..], tiny_model(), &tiny_train()).unwrap();
        let b = train(&data[..250], &data[250..], tiny_model(), &tiny_train()).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.model, b.model);
        assert_eq!(a.metrics.len(), 4);
        let c = train(&data[..250], &data[250..], tiny_model(), &TrainConfig { seed: 1, ..tiny_train() }).unwrap();
        assert_ne!(a.metrics, c.metrics);
    }

    #[test]
    fn training_reduces_loss() {
        let data = collect_dataset(600, 5, (2, 4));
        for attention in [AttentionKind::Relational, AttentionKind::AllOnes] {
            let model = ModelConfig { attention, ..tiny_model() };
            let r = train(&data[..500], &data[500..], model, &TrainConfig { epochs: 10, ..tiny_train() }).unwrap();
            let first = r.metrics[0].val_mse;
            let last = r.metrics.last().unwrap().val_mse;
            assert!(last < first, "{attention:?}: {first} -> {last}");
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let data = collect_dataset(10, 4, (2, 3));
        assert!(matches!(train(&[], &data, tiny_model(), &tiny_train()), Err(TrainError::EmptyData)));
        let hard = TrainConfig { gs: GsConfig::hard(), ..tiny_train() };
        assert!(matches!(train(&data, &data, tiny_model(), &hard), Err(TrainError::Config(_))));
    }

    #[test]
    fn divergence_returns_last_good_parameters() {
        let mut data = collect_dataset(40, 4, (2, 3));
        data[3].effects[0][0] = f64::INFINITY;
        match train(&data, &data[..5], tiny_model(), &tiny_train()) {
            Err(TrainError::Diverged { epoch, last_good, .. }) => {
                assert_eq!(epoch, 1);
                assert!(last_good.all_finite());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net: RelationalNet<f64> = RelationalNet::init(tiny_model(), &mut rng);
        let mut g = net.clone();
        let before = clip_gradient(&mut g, 1.0);
        assert!(before > 1.0);
        let after = clip_gradient(&mut g, 1.0);
        assert!((after - 1.0).abs() < 1e-9);
        let mut h = net.clone();
        assert_eq!(clip_gradient(&mut h, 1e9), before);
        assert_eq!(h, net);
    }

    #[test]
    fn rollout_first_step_equals_test_loss_and_accumulates() {
        let data = collect_dataset(200, 8, (2, 4));
        let r = train(&data, &data[..20], tiny_model(), &tiny_train()).unwrap();
        let episodes = collect_episodes(30, 4, 9, (2, 4));
        let curve = rollout_error(&r.model, &episodes, 4).unwrap();
        assert_eq!(curve.len(), 4);
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
        let first: Vec<Transition> = episodes
            .iter()
            .map(|e| Transition::record(&e.states[0], e.actions[0], 0, 0).0)
            .collect();
        let mse = evaluate_mse(&r.model, &Batch::from_transitions(&first));
        assert!((curve[0] - mse).abs() < 1e-3 * (1.0 + mse), "{} vs {mse}", curve[0]);
        assert!(matches!(rollout_error(&r.model, &episodes, 5), Err(RolloutError::ShortEpisode { .. })));
    }

    #[test]
    fn metrics_log_is_line_delimited_json() {
        let m = [EpochMetrics { epoch: 0, train_mse: 1.5, val_mse: 2.0 }, EpochMetrics { epoch: 1, train_mse: 1.0, val_mse: 1.25 }];
        let mut buf = Vec::new();
        write_metrics(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1]["val_mse"], 1.25);
    }
}
