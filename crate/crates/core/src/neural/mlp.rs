use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;

use super::Real;

/// Dense layer `y = x W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Linear<F> {
    /// Uniform fan-in (He) initialization, zero bias.
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        Linear {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || F::of(rng.random_range(-bound..bound))),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear { weight: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    pub fn forward(&self, x: &Array2<F>) -> Array2<F> {
        x.dot(&self.weight) + &self.bias
    }

    fn accumulate(&self, x: &Array2<F>, g: &Array2<F>, grad: &mut Linear<F>) {
        ndarray::linalg::general_mat_mul(F::one(), &x.t(), g, F::one(), &mut grad.weight);
        grad.bias.scaled_add(F::one(), &g.sum_axis(Axis(0)));
    }
}

/// Multi-layer perceptron with ReLU between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Linear<F>>,
    /// Apply ReLU after the last layer too.
    pub relu_output: bool,
}

/// Layer inputs recorded during the forward pass (plus the final output).
#[derive(Debug, Clone)]
pub struct MlpCache<F> {
    inputs: Vec<Array2<F>>,
    output: Array2<F>,
}

impl<F> MlpCache<F> {
    pub fn output(&self) -> &Array2<F> {
        &self.output
    }
}

fn relu_inplace<F: Real>(a: &mut Array2<F>) {
    a.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

fn relu_mask<F: Real>(g: &mut Array2<F>, activation: &Array2<F>) {
    Zip::from(g).and(activation).for_each(|g, &a| {
        if a <= F::zero() {
            *g = F::zero();
        }
    });
}

impl<F: Real> Mlp<F> {
    /// Layer widths `dims[0] -> dims[1] -> ... -> dims[last]`.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], relu_output: bool, rng: &mut R) -> Self {
        assert!(dims.len() >= 2);
        Mlp {
            layers: dims.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect(),
            relu_output,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self.layers.iter().map(|l| Linear::zeros(l.weight.nrows(), l.weight.ncols())).collect(),
            relu_output: self.relu_output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn forward(&self, x: &Array2<F>) -> MlpCache<F> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = layer.forward(&cur);
            if l < last || self.relu_output {
                relu_inplace(&mut next);
            }
            inputs.push(cur);
            cur = next;
        }
        MlpCache { inputs, output: cur }
    }

    pub fn predict(&self, x: &Array2<F>) -> Array2<F> {
        self.forward(x).output
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the input when `want_input_grad` is set.
    pub fn backward(&self, cache: &MlpCache<F>, mut g: Array2<F>, grad: &mut Mlp<F>, want_input_grad: bool) -> Option<Array2<F>> {
        if self.relu_output {
            relu_mask(&mut g, &cache.output);
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            layer.accumulate(&cache.inputs[l], &g, &mut grad.layers[l]);
            if l == 0 && !want_input_grad {
                return None;
            }
            let mut gx = g.dot(&layer.weight.t());
            if l > 0 {
                relu_mask(&mut gx, &cache.inputs[l]);
            }
            g = gx;
        }
        Some(g)
    }
}

/// Rescales every row of `x` to Euclidean norm `scale`.
/// Returns the scaled rows and the original (regularized) norms.
pub(crate) fn normalize_rows<F: Real>(x: &Array2<F>, scale: F) -> (Array2<F>, Array1<F>) {
    let eps = F::of(1e-12);
    let norms = x.map_axis(Axis(1), |r| (r.dot(&r) + eps).sqrt());
    let mut out = x.clone();
    for (mut row, &n) in out.rows_mut().into_iter().zip(norms.iter()) {
        row.mapv_inplace(|v| v * scale / n);
    }
    (out, norms)
}

/// Backward of [`normalize_rows`]: `gx = (c / r) (g - xhat (xhat . g))` with `xhat = x / r`.
pub(crate) fn normalize_rows_backward<F: Real>(x: &Array2<F>, norms: &Array1<F>, g: &Array2<F>, scale: F) -> Array2<F> {
    let mut out = Array2::zeros(x.raw_dim());
    for (((mut o, xr), gr), &n) in out.rows_mut().into_iter().zip(x.rows()).zip(g.rows()).zip(norms.iter()) {
        let proj = xr.dot(&gr) / (n * n);
        Zip::from(&mut o).and(&xr).and(&gr).for_each(|o, &xv, &gv| {
            *o = scale / n * (gv - xv * proj);
        });
    }
    out
}

/// Weight-normalized dense layer: each output unit's weight column is
/// `scale * v / |v|`, and each input row is rescaled to norm `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormLinear<F> {
    /// Unnormalized directions, `(in, out)`.
    pub direction: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone)]
pub struct NormLinearCache<F> {
    x: Array2<F>,
    x_norms: Array1<F>,
    x_scaled: Array2<F>,
    weight: Array2<F>,
    col_norms: Array1<F>,
}

impl<F: Real> NormLinear<F> {
    pub fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let l = Linear::init(fan_in, fan_out, rng);
        NormLinear { direction: l.weight, bias: l.bias }
    }

    pub fn zeros_like(&self) -> Self {
        NormLinear { direction: Array2::zeros(self.direction.raw_dim()), bias: Array1::zeros(self.bias.len()) }
    }

    pub fn effective_weight(&self, scale: F) -> (Array2<F>, Array1<F>) {
        let t = self.direction.t().to_owned();
        let (w_t, norms) = normalize_rows(&t, scale);
        (w_t.t().to_owned(), norms)
    }

    pub fn forward(&self, x: &Array2<F>, scale: F) -> (Array2<F>, NormLinearCache<F>) {
        let (x_scaled, x_norms) = normalize_rows(x, scale);
        let (weight, col_norms) = self.effective_weight(scale);
        let y = x_scaled.dot(&weight) + &self.bias;
        (y, NormLinearCache { x: x.clone(), x_norms, x_scaled, weight, col_norms })
    }

    pub fn backward(&self, cache: &NormLinearCache<F>, g: &Array2<F>, grad: &mut NormLinear<F>, scale: F) -> Array2<F> {
        grad.bias.scaled_add(F::one(), &g.sum_axis(Axis(0)));
        let g_weight = cache.x_scaled.t().dot(g);
        let g_dir_t = normalize_rows_backward(
            &self.direction.t().to_owned(),
            &cache.col_norms,
            &g_weight.t().to_owned(),
            scale,
        );
        grad.direction.scaled_add(F::one(), &g_dir_t.t());
        let g_scaled = g.dot(&cache.weight.t());
        normalize_rows_backward(&cache.x, &cache.x_norms, &g_scaled, scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_layer_is_affine() {
        let l = Linear { weight: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], bias: array![0.5, -0.5] };
        let m = Mlp { layers: vec![l], relu_output: false };
        let y = m.predict(&array![[1.0, 0.0, -1.0]]);
        // hand computation: [1 - 5 + 0.5, 2 - 6 - 0.5]
        assert_eq!(y, array![[-3.5, -4.5]]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m: Mlp<f64> = Mlp::init(&[4, 8, 8, 3], false, &mut rng);
        let y = m.predict(&Array2::zeros((2, 4)));
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn normalized_rows_have_requested_norm() {
        let x = array![[3.0, 4.0], [0.0, -2.0]];
        let (y, _) = normalize_rows(&x, 3.0f64);
        for r in y.rows() {
            assert!((r.dot(&r).sqrt() - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mlp_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m: Mlp<f64> = Mlp::init(&[3, 5, 2], true, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.7 + j as f64 * 0.3);
        let loss = |m: &Mlp<f64>| m.predict(&x).iter().map(|v| v * v).sum::<f64>();
        let cache = m.forward(&x);
        let mut grad = m.zeros_like();
        let g = cache.output().mapv(|v| 2.0 * v);
        m.backward(&cache, g, &mut grad, false);
        let eps = 1e-6;
        for l in 0..m.layers.len() {
            for idx in 0..m.layers[l].weight.len() {
                let (r, c) = (idx / m.layers[l].weight.ncols(), idx % m.layers[l].weight.ncols());
                let mut p = m.clone();
                p.layers[l].weight[[r, c]] += eps;
                let mut q = m.clone();
                q.layers[l].weight[[r, c]] -= eps;
                let fd = (loss(&p) - loss(&q)) / (2.0 * eps);
                assert!((fd - grad.layers[l].weight[[r, c]]).abs() < 1e-6, "layer {l} ({r},{c})");
            }
        }
    }
}
