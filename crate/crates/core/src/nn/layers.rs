use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::Rng;

use crate::nn::graph::{Graph, Var};
use crate::nn::scalar::Scalar;
use crate::util::Prng;

/// Handle to one named parameter tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

/// Owned model parameters, ordered and named. The same store is reused
/// across training steps; [`ParamStore::attach`] re-exposes every
/// parameter as a leaf of a fresh graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<(String, ArrayD<T>)>,
}

/// Per-graph leaf handles for every parameter, indexed by [`ParamId`].
pub struct Attached {
    vars: Vec<Var>,
}

impl Attached {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, name: &str, value: ArrayD<T>) -> ParamId {
        assert!(
            !self.entries.iter().any(|(n, _)| n == name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name.to_string(), value));
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.entries[id].0
    }

    pub fn value(&self, id: ParamId) -> &ArrayD<T> {
        &self.entries[id.0].1
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut ArrayD<T> {
        &mut self.entries[id.0].1
    }

    pub fn by_index(&self, i: usize) -> (&str, &ArrayD<T>) {
        (&self.entries[i].0, &self.entries[i].1)
    }

    pub fn by_index_mut(&mut self, i: usize) -> &mut ArrayD<T> {
        &mut self.entries[i].1
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|(n, _)| n == name).map(ParamId)
    }

    /// Expose all parameters as graph leaves.
    pub fn attach(&self, g: &mut Graph<T>, requires_grad: bool) -> Attached {
        let vars = self
            .entries
            .iter()
            .map(|(_, v)| g.leaf(v.clone(), requires_grad))
            .collect();
        Attached { vars }
    }

    /// Copy into f64 (for gradient verification against the same
    /// architecture).
    pub fn to_f64(&self) -> ParamStore<f64> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(n, v)| (n.clone(), v.mapv(|x| x.to_f64())))
                .collect(),
        }
    }
}

/// Uniform init on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn fan_in_uniform<T: Scalar>(rng: &mut Prng, shape: &[usize], fan_in: usize) -> ArrayD<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let vals: Vec<T> = (0..n)
        .map(|_| T::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), vals).expect("shape")
}

/// Inverted-scale dropout mask: entries are 0 with probability `rate`,
/// otherwise `1/(1-rate)`.
pub fn dropout_mask<T: Scalar>(rng: &mut Prng, shape: &[usize], rate: f64) -> ArrayD<T> {
    assert!((0.0..1.0).contains(&rate));
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let n: usize = shape.iter().product();
    let vals: Vec<T> = (0..n)
        .map(|_| if rng.gen::<f64>() < rate { T::ZERO } else { keep })
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), vals).expect("shape")
}

/// Fixed sinusoidal positional table: `pe[pos, 2i] = sin(pos / 10000^(2i/d))`,
/// `pe[pos, 2i+1] = cos(...)`.
pub fn sinusoidal_position_encoding(len: usize, dim: usize) -> Array2<f64> {
    let mut pe = Array2::<f64>::zeros((len, dim));
    for pos in 0..len {
        for i in 0..dim / 2 {
            let rate = (pos as f64) / 10000f64.powf(2.0 * i as f64 / dim as f64);
            pe[[pos, 2 * i]] = rate.sin();
            pe[[pos, 2 * i + 1]] = rate.cos();
        }
        if dim % 2 == 1 {
            let i = dim / 2;
            let rate = (pos as f64) / 10000f64.powf(2.0 * i as f64 / dim as f64);
            pe[[pos, dim - 1]] = rate.sin();
        }
    }
    pe
}

/// Sinusoidal embedding of a diffusion step index, log-spaced
/// frequencies over half the width.
pub fn diffusion_step_embedding(k: f64, dim: usize) -> Array1<f64> {
    assert!(dim >= 2 && dim % 2 == 0, "step embedding width must be even");
    let half = dim / 2;
    let mut out = Array1::<f64>::zeros(dim);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / (half as f64 - 1.0)).exp();
        out[i] = (k * freq).sin();
        out[half + i] = (k * freq).cos();
    }
    out
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Prng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = store.add(&format!("{name}.w"), fan_in_uniform(rng, &[in_dim, out_dim], in_dim));
        let b = store.add(&format!("{name}.b"), fan_in_uniform(rng, &[out_dim], in_dim));
        Self { w, b, in_dim, out_dim }
    }

    /// Apply to `[..., in_dim]`, preserving leading axes.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Attached, x: Var) -> Var {
        let shape = g.value(x).shape().to_vec();
        assert_eq!(*shape.last().expect("axes"), self.in_dim, "linear input width");
        let rows: usize = shape[..shape.len() - 1].iter().product();
        let x2 = g.reshape(x, &[rows, self.in_dim]);
        let y = g.matmul(x2, p.var(self.w));
        let y = g.add_bias(y, p.var(self.b));
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.out_dim;
        g.reshape(y, &out_shape)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, dim: usize) -> Self {
        let gamma = store.add(&format!("{name}.gamma"), ArrayD::from_elem(IxDyn(&[dim]), T::ONE));
        let beta = store.add(&format!("{name}.beta"), ArrayD::from_elem(IxDyn(&[dim]), T::ZERO));
        Self { gamma, beta }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Attached, x: Var) -> Var {
        g.layer_norm(x, p.var(self.gamma), p.var(self.beta))
    }
}

#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        groups: usize,
    ) -> Self {
        let gamma =
            store.add(&format!("{name}.gamma"), ArrayD::from_elem(IxDyn(&[channels]), T::ONE));
        let beta =
            store.add(&format!("{name}.beta"), ArrayD::from_elem(IxDyn(&[channels]), T::ZERO));
        Self { gamma, beta, groups }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Attached, x: Var) -> Var {
        g.group_norm(x, p.var(self.gamma), p.var(self.beta), self.groups)
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Prng,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        let fan_in = c_in * kernel;
        let w = store.add(
            &format!("{name}.w"),
            fan_in_uniform(rng, &[c_out, c_in, kernel], fan_in),
        );
        let b = store.add(&format!("{name}.b"), fan_in_uniform(rng, &[c_out], fan_in));
        Self { w, b, stride, pad }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Attached, x: Var) -> Var {
        g.conv1d(x, p.var(self.w), p.var(self.b), self.stride, self.pad)
    }
}

/// Per-call stochastic inputs of one encoder pass. `None` fields mean
/// the corresponding dropout is off (inference without ensemble noise).
pub struct EncoderNoise<T> {
    /// Multiplicative masks for residual branches, shape `[B, L, d]`,
    /// two per layer (attention, feed-forward).
    pub residual: Vec<ArrayD<T>>,
    /// Multiplicative masks on attention probabilities, `[B*H, L, L]`,
    /// one per layer.
    pub attention: Vec<ArrayD<T>>,
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Prng,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        assert_eq!(dim % heads, 0, "dim divisible by heads");
        Self {
            wq: Linear::new(store, rng, &format!("{name}.wq"), dim, dim),
            wk: Linear::new(store, rng, &format!("{name}.wk"), dim, dim),
            wv: Linear::new(store, rng, &format!("{name}.wv"), dim, dim),
            wo: Linear::new(store, rng, &format!("{name}.wo"), dim, dim),
            heads,
            dim,
        }
    }

    /// Self-attention over `[B, L, d]`. `key_bias` is an additive
    /// pre-softmax constant `[B*H, L, L]` (0 for visible keys, a large
    /// negative number for masked keys). `attn_mask` multiplies the
    /// attention probabilities (dropout).
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Attached,
        x: Var,
        key_bias: Option<Var>,
        attn_mask: Option<Var>,
    ) -> Var {
        let shape = g.value(x).shape().to_vec();
        let (bs, l, d) = (shape[0], shape[1], shape[2]);
        assert_eq!(d, self.dim);
        let h = self.heads;
        let dk = d / h;

        let q = self.wq.forward(g, p, x);
        let k = self.wk.forward(g, p, x);
        let v = self.wv.forward(g, p, x);

        let split = |g: &mut Graph<T>, t: Var| {
            let t = g.reshape(t, &[bs, l, h, dk]);
            let t = g.permute(t, &[0, 2, 1, 3]);
            g.reshape(t, &[bs * h, l, dk])
        };
        let q = split(g, q);
        let k = split(g, k);
        let v = split(g, v);

        let scores = g.bmm(q, k, true);
        let mut scores = g.scale(scores, 1.0 / (dk as f64).sqrt());
        if let Some(bias) = key_bias {
            scores = g.add(scores, bias);
        }
        let mut probs = g.softmax_last(scores);
        if let Some(mask) = attn_mask {
            probs = g.mul(probs, mask);
        }
        let ctx = g.bmm(probs, v, false);
        let ctx = g.reshape(ctx, &[bs, h, l, dk]);
        let ctx = g.permute(ctx, &[0, 2, 1, 3]);
        let ctx = g.reshape(ctx, &[bs, l, d]);
        self.wo.forward(g, p, ctx)
    }
}

/// One post-LN transformer encoder layer:
/// `x = LN(x + Drop(Attn(x)))`, then `x = LN(x + Drop(FF(x)))`.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: MultiHeadAttention,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut Prng,
        name: &str,
        dim: usize,
        heads: usize,
        ff_dim: usize,
    ) -> Self {
        Self {
            attn: MultiHeadAttention::new(store, rng, &format!("{name}.attn"), dim, heads),
            ff1: Linear::new(store, rng, &format!("{name}.ff1"), dim, ff_dim),
            ff2: Linear::new(store, rng, &format!("{name}.ff2"), ff_dim, dim),
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &Attached,
        x: Var,
        key_bias: Option<Var>,
        attn_mask: Option<Var>,
        res_mask: Option<(Var, Var)>,
    ) -> Var {
        let a = self.attn.forward(g, p, x, key_bias, attn_mask);
        let a = match res_mask {
            Some((m, _)) => g.mul(a, m),
            None => a,
        };
        let x = g.add(x, a);
        let x = self.ln1.forward(g, p, x);

        let f = self.ff1.forward(g, p, x);
        let f = g.relu(f);
        let f = self.ff2.forward(g, p, f);
        let f = match res_mask {
            Some((_, m)) => g.mul(f, m),
            None => f,
        };
        let x = g.add(x, f);
        self.ln2.forward(g, p, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_grad_rel_error, FD_STEP};
    use crate::util::rng_from;
    use ndarray::{arr1, arr2};

    fn randd(rng: &mut Prng, shape: &[usize]) -> ArrayD<f64> {
        let n: usize = shape.iter().product();
        let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ArrayD::from_shape_vec(IxDyn(shape), vals).unwrap()
    }

    #[test]
    fn linear_zero_input_returns_bias() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = rng_from(0);
        let lin = Linear::new(&mut store, &mut rng, "l", 4, 3);
        let mut g = Graph::new();
        let p = store.attach(&mut g, false);
        let x = g.constant(ArrayD::zeros(IxDyn(&[2, 4])));
        let y = lin.forward(&mut g, &p, x);
        let b = store.value(lin.b).clone();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(g.value(y)[[r, c]], b[[c]]);
            }
        }
    }

    #[test]
    fn elementwise_op_gradients_match_finite_differences() {
        let mut rng = rng_from(1);
        let params = vec![randd(&mut rng, &[3, 4]), randd(&mut rng, &[3, 4])];
        let err = max_grad_rel_error(
            &params,
            |g, vars| {
                let a = g.relu(vars[0]);
                let b = g.mish(vars[1]);
                let c = g.mul(a, b);
                let d = g.sub(c, vars[0]);
                let e = g.add(d, vars[1]);
                let f = g.scale(e, 0.7);
                let s = g.softmax_last(f);
                let sq = g.mul(s, s);
                g.mean_all(sq)
            },
            FD_STEP,
        );
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn matmul_and_bias_gradients_match_finite_differences() {
        let mut rng = rng_from(2);
        let params = vec![
            randd(&mut rng, &[3, 4]),
            randd(&mut rng, &[4, 2]),
            randd(&mut rng, &[2]),
        ];
        let err = max_grad_rel_error(
            &params,
            |g, vars| {
                let y = g.matmul(vars[0], vars[1]);
                let y = g.add_bias(y, vars[2]);
                let y = g.mish(y);
                g.mean_all(y)
            },
            FD_STEP,
        );
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn bmm_gradients_both_orientations() {
        let mut rng = rng_from(3);
        let params = vec![randd(&mut rng, &[2, 3, 4]), randd(&mut rng, &[2, 4, 5])];
        let err = max_grad_rel_error(
            &params,
            |g, vars| {
                let y = g.bmm(vars[0], vars[1], false);
                g.mean_all(y)
            },
            FD_STEP,
        );
        assert!(err < 1e-6, "plain bmm rel err {err}");

        let params = vec![randd(&mut rng, &[2, 3, 4]), randd(&mut rng, &[2, 5, 4])];
        let err = max_grad_rel_error(
            &params,
            |g, vars| {
                let y = g.bmm(vars[0], vars[1], true);
                let y = g.mul(y, y);
                g.mean_all(y)
            },
            FD_STEP,
        );
        assert!(err < 1e-6, "transposed bmm rel err {err}");
    }

    #[test]
    fn norm_gradients_match_finite_differences() {
        let mut rng = rng_from(4);
        let params = vec![
            randd(&mut rng, &[3, 5]),
            randd(&mut rng, &[5]),
            randd(&mut rng, &[5]),
        ];
        let err = max_grad_rel_error(
            &params,
            |g, vars| {
                let y = g.layer_norm(vars[0], vars[1], vars[2]);
                let y = g.mish(y);
                g.mean_all(y)
            },
            FD_STEP,
        );
        assert!(err < 1e-5, "layer norm rel err {err}");

        let params = vec![
            randd(&mut rng, &[2, 4, 3]),
            randd(&mut rng, &[4]),
            randd(&mut rng, &[4]),
        ];
        let err = max_grad_rel_error(
            &params,
            |g, vars| {
                let y = g.group_norm(vars[0], vars[1], vars[2], 2);
                let y = g.mul(y, y);
                g.mean_all(y)
            },
            FD_STEP,
        );
        assert!(err < 1e-5, "group norm rel err {err}");
    }

    #[test]
    fn conv_upsample_concat_gradients() {
        let mut rng = rng_from(5);
        let params = vec![
            randd(&mut rng, &[2, 3, 6]),
            randd(&mut rng, &[4, 3, 3]),
            randd(&mut rng, &[4]),
        ];
        for stride in [1usize, 2] {
            let err = max_grad_rel_error(
                &params,
                |g, vars| {
                    let y = g.conv1d(vars[0], vars[1], vars[2], stride, 1);
                    let y = g.mish(y);
                    let u = g.upsample2x(y);
                    let c = g.concat(&[u, u], 1);
                    let c = g.mul(c, c);
                    g.mean_all(c)
                },
                FD_STEP,
            );
            assert!(err < 1e-6, "conv stride {stride} rel err {err}");
        }
    }

    #[test]
    fn reshape_permute_gradients() {
        let mut rng = rng_from(6);
        let params = vec![randd(&mut rng, &[2, 3, 4])];
        let err = max_grad_rel_error(
            &params,
            |g, vars| {
                let y = g.permute(vars[0], &[2, 0, 1]);
                let y = g.reshape(y, &[4, 6]);
                let y = g.mul(y, y);
                g.mean_all(y)
            },
            FD_STEP,
        );
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn encoder_layer_gradients_match_finite_differences() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = rng_from(7);
        let layer = EncoderLayer::new(&mut store, &mut rng, "enc", 8, 2, 16);
        let x0 = randd(&mut rng, &[2, 3, 8]);
        let params: Vec<ArrayD<f64>> =
            (0..store.len()).map(|i| store.by_index(i).1.clone()).collect();
        let n_params = params.len();
        let mut all = params;
        all.push(x0);
        let err = max_grad_rel_error(
            &all,
            |g, vars| {
                let p = Attached { vars: vars[..n_params].to_vec() };
                let y = layer.forward(g, &p, vars[n_params], None, None, None);
                let y = g.mul(y, y);
                g.mean_all(y)
            },
            FD_STEP,
        );
        assert!(err < 1e-4, "encoder layer rel err {err}");
    }

    #[test]
    fn attention_key_mask_equals_token_removal() {
        // encoding [a, b] with b's key masked must equal encoding [a]
        // alone at position 0, for the surviving token's output
        let mut store = ParamStore::<f64>::new();
        let mut rng = rng_from(8);
        let layer = EncoderLayer::new(&mut store, &mut rng, "enc", 8, 2, 16);

        let mut rng2 = rng_from(99);
        let two = randd(&mut rng2, &[1, 2, 8]);
        let one = two
            .slice_axis(ndarray::Axis(1), ndarray::Slice::from(0..1))
            .to_owned()
            .into_dyn();

        let mut g = Graph::<f64>::new();
        let p = store.attach(&mut g, false);
        let x = g.constant(two);
        let mut bias = ArrayD::<f64>::zeros(IxDyn(&[2, 2, 2]));
        for h in 0..2 {
            for q in 0..2 {
                bias[[h, q, 1]] = crate::nn::graph::MASK_NEG;
            }
        }
        let bias = g.constant(bias);
        let y_masked = layer.forward(&mut g, &p, x, Some(bias), None, None);
        let masked_row = g.value(y_masked).index_axis(ndarray::Axis(1), 0).to_owned();

        let mut g2 = Graph::<f64>::new();
        let p2 = store.attach(&mut g2, false);
        let x1 = g2.constant(one);
        let y_single = layer.forward(&mut g2, &p2, x1, None, None, None);
        let single_row = g2.value(y_single).index_axis(ndarray::Axis(1), 0).to_owned();

        for (a, b) in masked_row.iter().zip(single_row.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn positional_encoding_reference_values() {
        let pe = sinusoidal_position_encoding(4, 6);
        assert_eq!(pe[[0, 0]], 0.0);
        assert_eq!(pe[[0, 1]], 1.0);
        let expected = 1.0f64.sin();
        assert!((pe[[1, 0]] - expected).abs() < 1e-12);
        let rate = 1.0 / 10000f64.powf(2.0 / 6.0);
        assert!((pe[[1, 2]] - rate.sin()).abs() < 1e-12);
        assert!((pe[[1, 3]] - rate.cos()).abs() < 1e-12);
    }

    #[test]
    fn step_embedding_shape_and_range() {
        let e = diffusion_step_embedding(7.0, 64);
        assert_eq!(e.len(), 64);
        assert!(e.iter().all(|v| v.abs() <= 1.0));
        let e1 = diffusion_step_embedding(1.0, 64);
        assert_ne!(e, e1);
    }

    #[test]
    fn dropout_mask_statistics() {
        let mut rng = rng_from(10);
        let m = dropout_mask::<f64>(&mut rng, &[10_000], 0.2);
        let zeros = m.iter().filter(|v| **v == 0.0).count();
        let frac = zeros as f64 / 10_000.0;
        assert!((frac - 0.2).abs() < 0.02, "dropout fraction {frac}");
        let mean = m.mean().unwrap();
        assert!((mean - 1.0).abs() < 0.02, "inverted scale keeps mean {mean}");
    }

    #[test]
    fn param_store_round_trip_and_names() {
        let mut store = ParamStore::<f32>::new();
        let id = store.add("w", ArrayD::from_elem(IxDyn(&[2, 2]), 1.5f32));
        assert_eq!(store.name(0), "w");
        assert_eq!(store.id_of("w"), Some(id));
        assert_eq!(store.num_scalars(), 4);
        let f = store.to_f64();
        assert_eq!(f.value(f.id_of("w").unwrap())[[0, 0]], 1.5f64);
    }

    #[test]
    fn linear_matches_direct_matrix_evaluation() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = rng_from(11);
        let lin = Linear::new(&mut store, &mut rng, "l", 2, 2);
        *store.value_mut(lin.w) = arr2(&[[1.0, 2.0], [3.0, 4.0]]).into_dyn();
        *store.value_mut(lin.b) = arr1(&[0.5, -0.5]).into_dyn();
        let mut g = Graph::new();
        let p = store.attach(&mut g, false);
        let x = g.constant(arr2(&[[1.0, 1.0]]).into_dyn());
        let y = lin.forward(&mut g, &p, x);
        assert_eq!(g.value(y)[[0, 0]], 1.0 + 3.0 + 0.5);
        assert_eq!(g.value(y)[[0, 1]], 2.0 + 4.0 - 0.5);
    }
}
