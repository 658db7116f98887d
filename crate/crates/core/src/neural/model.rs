use std::ops::Range;

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use super::gumbel::{gs_forward, logistic_noise};
use super::mlp::{normalize_rows, normalize_rows_backward, Mlp, MlpCache, NormLinear, NormLinearCache};
use super::{Aggregation, AttentionKind, GsConfig, ModelConfig, Real, ACTION_DIM};
use crate::sim::{ActionSpec, ObjectFeature, ObjectId, Transition};

/// Per-object action vector `[is_pick, is_place, grasp one-hot, release one-hot]`.
pub fn action_vector(action: &ActionSpec, object: ObjectId) -> [f64; ACTION_DIM] {
    let mut v = [0.0; ACTION_DIM];
    v[0] = f64::from(u8::from(action.pick == object));
    v[1] = f64::from(u8::from(action.place == object));
    v[2 + action.grasp.index()] = 1.0;
    v[5 + action.release.index()] = 1.0;
    v
}

/// Variable-size samples packed row-wise: the objects of sample `s` occupy
/// rows `offsets[s]..offsets[s + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<F> {
    pub features: Array2<F>,
    pub actions: Array2<F>,
    pub effects: Array2<F>,
    pub offsets: Vec<usize>,
}

impl<F: Real> Batch<F> {
    pub fn from_transitions<'a, I: IntoIterator<Item = &'a Transition>>(records: I) -> Self {
        let mut feats = Vec::new();
        let mut acts = Vec::new();
        let mut effs = Vec::new();
        let mut offsets = vec![0];
        for t in records {
            for (k, id) in t.ids.iter().enumerate() {
                feats.extend(t.pre[k].to_vector().map(F::of));
                acts.extend(action_vector(&t.action, *id).map(F::of));
                effs.extend(t.effects[k].map(F::of));
            }
            offsets.push(offsets.last().expect("non-empty") + t.ids.len());
        }
        Self::from_parts(feats, acts, effs, offsets)
    }

    /// Single sample without observed effects.
    pub fn single(features: &[ObjectFeature], actions: &[[f64; ACTION_DIM]]) -> Self {
        let rows: Vec<_> = features.iter().map(ObjectFeature::to_vector).collect();
        Self::single_rows(&rows, actions)
    }

    /// Single sample from raw feature vectors.
    pub fn single_rows(rows: &[[f64; ObjectFeature::DIM]], actions: &[[f64; ACTION_DIM]]) -> Self {
        assert_eq!(rows.len(), actions.len());
        let feats = rows.iter().flat_map(|f| f.map(F::of)).collect();
        let acts = actions.iter().flat_map(|a| a.map(F::of)).collect();
        let effs = vec![F::zero(); rows.len() * ObjectFeature::DIM];
        Self::from_parts(feats, acts, effs, vec![0, rows.len()])
    }

    fn from_parts(feats: Vec<F>, acts: Vec<F>, effs: Vec<F>, offsets: Vec<usize>) -> Self {
        let n = *offsets.last().expect("non-empty");
        Batch {
            features: Array2::from_shape_vec((n, ObjectFeature::DIM), feats).expect("shape"),
            actions: Array2::from_shape_vec((n, ACTION_DIM), acts).expect("shape"),
            effects: Array2::from_shape_vec((n, ObjectFeature::DIM), effs).expect("shape"),
            offsets,
        }
    }

    pub fn n_samples(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn sample(&self, s: usize) -> Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    /// Start of each sample's block in the flattened `n x n` pair arrays.
    pub fn pair_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.offsets.len());
        let mut acc = 0;
        out.push(0);
        for s in 0..self.n_samples() {
            let n = self.sample(s).len();
            acc += n * n;
            out.push(acc);
        }
        out
    }

    /// Copies the given samples into a new batch.
    pub fn gather(&self, samples: &[usize]) -> Self {
        let rows: Vec<usize> = samples.iter().flat_map(|&s| self.sample(s)).collect();
        let mut offsets = Vec::with_capacity(samples.len() + 1);
        offsets.push(0);
        for &s in samples {
            offsets.push(offsets.last().expect("non-empty") + self.sample(s).len());
        }
        Batch {
            features: self.features.select(Axis(0), &rows),
            actions: self.actions.select(Axis(0), &rows),
            effects: self.effects.select(Axis(0), &rows),
            offsets,
        }
    }
}

/// Logistic noise for every Gumbel-Sigmoid unit of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GsNoise<F> {
    /// `rows x d_k`
    pub unary: Array2<F>,
    /// One flattened pair array per relation head.
    pub relational: Vec<Vec<F>>,
}

impl<F: Real> GsNoise<F> {
    pub fn sample<R: Rng + ?Sized>(batch: &Batch<F>, cfg: &ModelConfig, rng: &mut R) -> Self {
        let n_pairs = *batch.pair_offsets().last().expect("non-empty");
        let unary = Array2::from_shape_simple_fn((batch.n_rows(), cfg.d_k), || F::of(logistic_noise(rng)));
        let heads = if cfg.attention == AttentionKind::Relational { cfg.heads } else { 0 };
        let relational = (0..heads)
            .map(|_| (0..n_pairs).map(|_| F::of(logistic_noise(rng))).collect())
            .collect();
        GsNoise { unary, relational }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead<F> {
    pub query: Mlp<F>,
    pub key: Mlp<F>,
}

/// Network output for a batch.
#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    /// Predicted effects, `rows x d_o`.
    pub effects: Array2<F>,
    /// Unary symbol values, `rows x d_k`.
    pub unary: Array2<F>,
    /// Relation values per head, flattened per sample (`pair_offsets`).
    pub relations: Vec<Vec<F>>,
    pub pair_offsets: Vec<usize>,
}

/// Hard symbols of one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSymbols {
    /// `n` bitvectors of length `d_k`.
    pub unary: Vec<Vec<bool>>,
    /// One row-major `n x n` matrix per head.
    pub relations: Vec<Vec<bool>>,
}

struct HeadForward<F> {
    q_cache: MlpCache<F>,
    k_cache: MlpCache<F>,
    q_hat: Array2<F>,
    q_norms: ndarray::Array1<F>,
    k_hat: Array2<F>,
    k_norms: ndarray::Array1<F>,
    deriv: Vec<F>,
}

struct ForwardCache<F> {
    enc_cache: MlpCache<F>,
    enc_out_cache: NormLinearCache<F>,
    unary_deriv: Array2<F>,
    heads: Vec<HeadForward<F>>,
    agg_cache: MlpCache<F>,
    dec_cache: MlpCache<F>,
    out: ForwardOutput<F>,
}

/// Unary encoder, relation heads, aggregation and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalNet<F> {
    pub config: ModelConfig,
    /// Feature standardization applied before every MLP: `(x - mean) / scale`.
    pub input_mean: [f64; ObjectFeature::DIM],
    pub input_scale: [f64; ObjectFeature::DIM],
    pub encoder: Mlp<F>,
    pub encoder_out: NormLinear<F>,
    /// Empty for the all-ones ablation.
    pub heads: Vec<AttentionHead<F>>,
    pub aggregate: Mlp<F>,
    pub decoder: Mlp<F>,
}

impl<F: Real> RelationalNet<F> {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Self {
        let h = config.hidden;
        let encoder = Mlp::init(&[config.d_o, h, h], true, rng);
        let encoder_out = NormLinear::init(h, config.d_k, rng);
        let heads = match config.attention {
            AttentionKind::Relational => (0..config.heads)
                .map(|_| AttentionHead {
                    query: Mlp::init(&[config.d_o, h, h, config.d_att], false, rng),
                    key: Mlp::init(&[config.d_o, h, h, config.d_att], false, rng),
                })
                .collect(),
            AttentionKind::AllOnes => Vec::new(),
        };
        let aggregate = Mlp::init(&[config.d_k + config.d_a, h, h, config.d_z], false, rng);
        let decoder = Mlp::init(&[config.heads * config.d_z, h, h, config.d_o], false, rng);
        RelationalNet {
            config,
            input_mean: [0.0; ObjectFeature::DIM],
            input_scale: [1.0; ObjectFeature::DIM],
            encoder,
            encoder_out,
            heads,
            aggregate,
            decoder,
        }
    }

    /// Same shapes, all parameters zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        RelationalNet {
            config: self.config,
            input_mean: self.input_mean,
            input_scale: self.input_scale,
            encoder: self.encoder.zeros_like(),
            encoder_out: self.encoder_out.zeros_like(),
            heads: self
                .heads
                .iter()
                .map(|h| AttentionHead { query: h.query.zeros_like(), key: h.key.zeros_like() })
                .collect(),
            aggregate: self.aggregate.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    /// Sets the input standardization from the objects of `records`.
    pub fn fit_input_normalization(&mut self, records: &[Transition]) {
        let mut sum = [0.0; ObjectFeature::DIM];
        let mut sq = [0.0; ObjectFeature::DIM];
        let mut n = 0.0;
        for f in records.iter().flat_map(|t| t.pre.iter()) {
            for (k, v) in f.to_vector().iter().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
            n += 1.0;
        }
        if n == 0.0 {
            return;
        }
        for k in 0..ObjectFeature::DIM {
            let mean = sum[k] / n;
            let var = (sq[k] / n - mean * mean).max(0.0);
            self.input_mean[k] = mean;
            self.input_scale[k] = if var.sqrt() > 1e-6 { var.sqrt() } else { 1.0 };
        }
    }

    /// Named parameter tensors in checkpoint order with their shapes.
    pub fn named_tensors(&self) -> Vec<(String, &[F], [usize; 2])> {
        let mut out = Vec::new();
        push_mlp(&mut out, "encoder".into(), &self.encoder);
        let d = &self.encoder_out.direction;
        out.push(("encoder.out.v".into(), d.as_slice().expect("contiguous"), [d.nrows(), d.ncols()]));
        let b = &self.encoder_out.bias;
        out.push(("encoder.out.b".into(), b.as_slice().expect("contiguous"), [1, b.len()]));
        for (k, head) in self.heads.iter().enumerate() {
            push_mlp(&mut out, format!("head{k}.query"), &head.query);
            push_mlp(&mut out, format!("head{k}.key"), &head.key);
        }
        push_mlp(&mut out, "aggregate".into(), &self.aggregate);
        push_mlp(&mut out, "decoder".into(), &self.decoder);
        out
    }

    /// Mutable parameter slices in the same order as [`Self::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = Vec::new();
        push_mlp_mut(&mut out, &mut self.encoder);
        out.push(self.encoder_out.direction.as_slice_mut().expect("contiguous"));
        out.push(self.encoder_out.bias.as_slice_mut().expect("contiguous"));
        for head in &mut self.heads {
            push_mlp_mut(&mut out, &mut head.query);
            push_mlp_mut(&mut out, &mut head.key);
        }
        push_mlp_mut(&mut out, &mut self.aggregate);
        push_mlp_mut(&mut out, &mut self.decoder);
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t, _)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t, _)| t.iter().all(|v| v.is_finite()))
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<G: Real>(&self) -> RelationalNet<G> {
        let mut out = RelationalNet::<G> {
            config: self.config,
            input_mean: self.input_mean,
            input_scale: self.input_scale,
            encoder: cast_mlp(&self.encoder),
            encoder_out: NormLinear {
                direction: self.encoder_out.direction.mapv(|v| G::of(v.to_f64().expect("finite"))),
                bias: self.encoder_out.bias.mapv(|v| G::of(v.to_f64().expect("finite"))),
            },
            heads: Vec::new(),
            aggregate: cast_mlp(&self.aggregate),
            decoder: cast_mlp(&self.decoder),
        };
        out.heads = self
            .heads
            .iter()
            .map(|h| AttentionHead { query: cast_mlp(&h.query), key: cast_mlp(&h.key) })
            .collect();
        out
    }

    fn standardize(&self, x: &Array2<F>) -> Array2<F> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for k in 0..ObjectFeature::DIM {
                row[k] = (row[k] - F::of(self.input_mean[k])) / F::of(self.input_scale[k]);
            }
        }
        out
    }

    fn forward_cached(&self, batch: &Batch<F>, gs: &GsConfig, noise: Option<&GsNoise<F>>) -> ForwardCache<F> {
        assert!(
            !gs.is_sampled() || noise.is_some(),
            "sampled Gumbel-Sigmoid needs a noise buffer"
        );
        let cfg = &self.config;
        let scale = F::of(cfg.pre_gs_norm);
        let xn = self.standardize(&batch.features);
        let pair_offsets = batch.pair_offsets();

        // unary predicates
        let enc_cache = self.encoder.forward(&xn);
        let (logits, enc_out_cache) = self.encoder_out.forward(enc_cache.output(), scale);
        let mut unary = Array2::zeros(logits.raw_dim());
        let mut unary_deriv = Array2::zeros(logits.raw_dim());
        for ((r, c), &l) in logits.indexed_iter() {
            let nz = noise.map_or(F::zero(), |nz| nz.unary[[r, c]]);
            let (y, d) = gs_forward(l, nz, gs);
            unary[[r, c]] = y;
            unary_deriv[[r, c]] = d;
        }

        // relations
        let mut heads = Vec::with_capacity(self.heads.len());
        let mut relations = Vec::with_capacity(cfg.heads);
        for (k, head) in self.heads.iter().enumerate() {
            let q_cache = head.query.forward(&xn);
            let k_cache = head.key.forward(&xn);
            let (q_hat, q_norms) = normalize_rows(q_cache.output(), scale);
            let (k_hat, k_norms) = normalize_rows(k_cache.output(), scale);
            let n_pairs = *pair_offsets.last().expect("non-empty");
            let mut alpha = vec![F::zero(); n_pairs];
            let mut deriv = vec![F::zero(); n_pairs];
            for s in 0..batch.n_samples() {
                let rows = batch.sample(s);
                let n = rows.len();
                let base = pair_offsets[s];
                for i in 0..n {
                    let qi = q_hat.row(rows.start + i);
                    for j in 0..n {
                        let logit = qi.dot(&k_hat.row(rows.start + j));
                        let p = base + i * n + j;
                        let nz = noise.map_or(F::zero(), |nz| nz.relational[k][p]);
                        let (a, d) = gs_forward(logit, nz, gs);
                        alpha[p] = a;
                        deriv[p] = d;
                    }
                }
            }
            relations.push(alpha);
            heads.push(HeadForward { q_cache, k_cache, q_hat, q_norms, k_hat, k_norms, deriv });
        }
        if cfg.attention == AttentionKind::AllOnes {
            let n_pairs = *pair_offsets.last().expect("non-empty");
            relations = vec![vec![F::one(); n_pairs]; cfg.heads];
        }

        // aggregation
        let agg_in = concatenate![Axis(1), unary, batch.actions];
        let agg_cache = self.aggregate.forward(&agg_in);
        let h = aggregate_heads(batch, &pair_offsets, &relations, agg_cache.output(), cfg);

        let dec_cache = self.decoder.forward(&h);
        let out = ForwardOutput { effects: dec_cache.output().clone(), unary, relations, pair_offsets };
        ForwardCache { enc_cache, enc_out_cache, unary_deriv, heads, agg_cache, dec_cache, out }
    }

    pub fn forward(&self, batch: &Batch<F>, gs: &GsConfig, noise: Option<&GsNoise<F>>) -> ForwardOutput<F> {
        self.forward_cached(batch, gs, noise).out
    }

    /// Mean per-sample loss `1/S sum_s sum_i |e_hat_i - e_i|^2` and the
    /// gradient of `loss_scale` times it with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        batch: &Batch<F>,
        gs: &GsConfig,
        noise: Option<&GsNoise<F>>,
        loss_scale: F,
    ) -> (F, RelationalNet<F>) {
        let cfg = &self.config;
        let scale = F::of(cfg.pre_gs_norm);
        let cache = self.forward_cached(batch, gs, noise);
        let n_samples = F::of(batch.n_samples().max(1) as f64);
        let diff = &cache.out.effects - &batch.effects;
        let loss = diff.iter().fold(F::zero(), |acc, v| acc + *v * *v) / n_samples;

        let mut grad = self.zeros_like();
        let g_out = diff.mapv(|v| v * F::of(2.0) * loss_scale / n_samples);
        let g_h = self
            .decoder
            .backward(&cache.dec_cache, g_out, &mut grad.decoder, true)
            .expect("input gradient requested");

        let z = cache.agg_cache.output();
        let dz = cfg.d_z;
        let width = cfg.heads * dz;
        let mut g_z = Array2::<F>::zeros(z.raw_dim());
        let mut g_alpha: Vec<Vec<F>> = cache.out.relations.iter().map(|r| vec![F::zero(); r.len()]).collect();
        {
            let zs = z.as_slice().expect("contiguous");
            let ghs = g_h.as_slice().expect("contiguous");
            let gzs = g_z.as_slice_mut().expect("contiguous");
            for s in 0..batch.n_samples() {
                let rows = batch.sample(s);
                let n = rows.len();
                let base = cache.out.pair_offsets[s];
                for k in 0..cfg.heads {
                    for i in 0..n {
                        let gh = &ghs[(rows.start + i) * width + k * dz..][..dz];
                        for j in 0..n {
                            let p = base + i * n + j;
                            let a = cache.out.relations[k][p];
                            let src = match cfg.aggregation {
                                Aggregation::Neighbors => rows.start + j,
                                Aggregation::SelfScaled => rows.start + i,
                            };
                            let zr = &zs[src * dz..][..dz];
                            let mut acc = F::zero();
                            for t in 0..dz {
                                acc = acc + gh[t] * zr[t];
                            }
                            g_alpha[k][p] = acc;
                            if a != F::zero() {
                                let gz = &mut gzs[src * dz..][..dz];
                                for t in 0..dz {
                                    gz[t] = gz[t] + a * gh[t];
                                }
                            }
                        }
                    }
                }
            }
        }

        let g_agg_in = self
            .aggregate
            .backward(&cache.agg_cache, g_z, &mut grad.aggregate, true)
            .expect("input gradient requested");
        let g_unary = &g_agg_in.slice(s![.., ..cfg.d_k]) * &cache.unary_deriv;
        let g_enc = self
            .encoder_out
            .backward(&cache.enc_out_cache, &g_unary, &mut grad.encoder_out, scale);
        self.encoder.backward(&cache.enc_cache, g_enc, &mut grad.encoder, false);

        for (k, (head, hf)) in self.heads.iter().zip(&cache.heads).enumerate() {
            let mut g_q = Array2::<F>::zeros(hf.q_hat.raw_dim());
            let mut g_k = Array2::<F>::zeros(hf.k_hat.raw_dim());
            for s in 0..batch.n_samples() {
                let rows = batch.sample(s);
                let n = rows.len();
                let base = cache.out.pair_offsets[s];
                for i in 0..n {
                    for j in 0..n {
                        let p = base + i * n + j;
                        let gl = g_alpha[k][p] * hf.deriv[p];
                        if gl == F::zero() {
                            continue;
                        }
                        let (qi, kj) = (rows.start + i, rows.start + j);
                        g_q.row_mut(qi).scaled_add(gl, &hf.k_hat.row(kj));
                        g_k.row_mut(kj).scaled_add(gl, &hf.q_hat.row(qi));
                    }
                }
            }
            let g_q = normalize_rows_backward(hf.q_cache.output(), &hf.q_norms, &g_q, scale);
            let g_k = normalize_rows_backward(hf.k_cache.output(), &hf.k_norms, &g_k, scale);
            head.query.backward(&hf.q_cache, g_q, &mut grad.heads[k].query, false);
            head.key.backward(&hf.k_cache, g_k, &mut grad.heads[k].key, false);
        }
        (loss, grad)
    }

    /// Hard symbols of one set of objects.
    pub fn sample_symbols(&self, objects: &[ObjectFeature]) -> SampleSymbols {
        let n = objects.len();
        let none = vec![[0.0; ACTION_DIM]; n];
        let batch = Batch::<F>::single(objects, &none);
        let out = self.forward(&batch, &GsConfig::hard(), None);
        SampleSymbols {
            unary: out.unary.rows().into_iter().map(|r| r.iter().map(|v| *v > F::of(0.5)).collect()).collect(),
            relations: out.relations.iter().map(|r| r.iter().map(|v| *v > F::of(0.5)).collect()).collect(),
        }
    }

    /// Effects predicted with hard symbols for `action` applied to `objects`.
    pub fn predict_effects(&self, ids: &[ObjectId], objects: &[ObjectFeature], action: &ActionSpec) -> Vec<[f64; ObjectFeature::DIM]> {
        let rows: Vec<_> = objects.iter().map(ObjectFeature::to_vector).collect();
        self.predict_effects_rows(ids, &rows, action)
    }

    /// [`Self::predict_effects`] on raw feature vectors.
    pub fn predict_effects_rows(&self, ids: &[ObjectId], rows: &[[f64; ObjectFeature::DIM]], action: &ActionSpec) -> Vec<[f64; ObjectFeature::DIM]> {
        let acts: Vec<_> = ids.iter().map(|id| action_vector(action, *id)).collect();
        let batch = Batch::<F>::single_rows(rows, &acts);
        let out = self.forward(&batch, &GsConfig::hard(), None);
        out.effects
            .rows()
            .into_iter()
            .map(|r| std::array::from_fn(|k| r[k].to_f64().expect("finite")))
            .collect()
    }
}

fn aggregate_heads<F: Real>(batch: &Batch<F>, pair_offsets: &[usize], relations: &[Vec<F>], z: &Array2<F>, cfg: &ModelConfig) -> Array2<F> {
    let dz = cfg.d_z;
    let width = cfg.heads * dz;
    let mut h = Array2::<F>::zeros((batch.n_rows(), width));
    let zs = z.as_slice().expect("contiguous");
    let hs = h.as_slice_mut().expect("contiguous");
    for s in 0..batch.n_samples() {
        let rows = batch.sample(s);
        let n = rows.len();
        for (k, alpha) in relations.iter().enumerate() {
            for i in 0..n {
                let out = &mut hs[(rows.start + i) * width + k * dz..][..dz];
                for j in 0..n {
                    let a = alpha[pair_offsets[s] + i * n + j];
                    if a == F::zero() {
                        continue;
                    }
                    let src = match cfg.aggregation {
                        Aggregation::Neighbors => rows.start + j,
                        Aggregation::SelfScaled => rows.start + i,
                    };
                    for (o, zv) in out.iter_mut().zip(&zs[src * dz..][..dz]) {
                        *o = *o + a * *zv;
                    }
                }
            }
        }
    }
    h
}

fn push_mlp<'a, F>(out: &mut Vec<(String, &'a [F], [usize; 2])>, prefix: String, m: &'a Mlp<F>) {
    for (l, layer) in m.layers.iter().enumerate() {
        let w = &layer.weight;
        out.push((format!("{prefix}.l{l}.w"), w.as_slice().expect("contiguous"), [w.nrows(), w.ncols()]));
        out.push((format!("{prefix}.l{l}.b"), layer.bias.as_slice().expect("contiguous"), [1, layer.bias.len()]));
    }
}

fn push_mlp_mut<'a, F>(out: &mut Vec<&'a mut [F]>, m: &'a mut Mlp<F>) {
    for layer in &mut m.layers {
        out.push(layer.weight.as_slice_mut().expect("contiguous"));
        out.push(layer.bias.as_slice_mut().expect("contiguous"));
    }
}

fn cast_mlp<F: Real, G: Real>(m: &Mlp<F>) -> Mlp<G> {
    Mlp {
        layers: m
            .layers
            .iter()
            .map(|l| super::Linear {
                weight: l.weight.mapv(|v| G::of(v.to_f64().expect("finite"))),
                bias: l.bias.mapv(|v| G::of(v.to_f64().expect("finite"))),
            })
            .collect(),
        relu_output: m.relu_output,
    }
}
