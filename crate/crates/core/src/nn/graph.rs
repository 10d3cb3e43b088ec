//! Tape-based reverse-mode autodiff over dynamically-shaped tensors.
//!
//! A [`Graph`] is rebuilt for every forward pass; [`Var`] handles index
//! nodes on the tape. Values are kept in standard row-major layout so
//! matrix products hit the gemm backend and elementwise kernels run on
//! flat slices. Everything is single-threaded and evaluation order is
//! fixed, so results are bit-reproducible for a given input.

use ndarray::{ArrayD, Axis, Ix2, Ix3, IxDyn, Slice};

use crate::nn::scalar::Scalar;

/// Additive pre-softmax value that silences masked attention entries.
pub const MASK_NEG: f64 = -1e9;
/// Epsilon inside layer/group normalization.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Bmm { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Mish(Var),
    SoftmaxLast(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var },
    GroupNorm { x: Var, gamma: Var, beta: Var, groups: usize },
    Conv1d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Upsample2x(Var),
    Concat(Vec<Var>, usize),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    MeanAll(Var),
}

struct Node<T> {
    value: ArrayD<T>,
    op: Op,
    requires: bool,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<ArrayD<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn standard<T: Scalar>(a: ArrayD<T>) -> ArrayD<T> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().to_owned()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: ArrayD<T>, op: Op, requires: bool) -> Var {
        debug_assert!(value.is_standard_layout());
        self.nodes.push(Node { value, op, requires });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    pub fn leaf(&mut self, value: ArrayD<T>, requires_grad: bool) -> Var {
        self.push(standard(value), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: ArrayD<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &ArrayD<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&ArrayD<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    // ---- operations ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = self.nodes[a.0].value.view().into_dimensionality::<Ix2>().expect("matmul lhs 2d");
        let bv = self.nodes[b.0].value.view().into_dimensionality::<Ix2>().expect("matmul rhs 2d");
        assert_eq!(av.ncols(), bv.nrows(), "matmul inner dims");
        let out = av.dot(&bv).into_dyn();
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::Matmul(a, b), req)
    }

    /// Batched matmul on [B,m,k]·[B,k,n] (or [B,n,k] with `trans_b`).
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Var {
        let av = self.nodes[a.0].value.view().into_dimensionality::<Ix3>().expect("bmm lhs 3d");
        let bv = self.nodes[b.0].value.view().into_dimensionality::<Ix3>().expect("bmm rhs 3d");
        let (bs, m, k) = av.dim();
        let (bs2, r0, r1) = bv.dim();
        assert_eq!(bs, bs2, "bmm batch");
        let (kk, n) = if trans_b { (r1, r0) } else { (r0, r1) };
        assert_eq!(k, kk, "bmm inner dims");
        let mut out = ndarray::Array3::<T>::zeros((bs, m, n));
        for i in 0..bs {
            let ai = av.index_axis(Axis(0), i);
            let bi = bv.index_axis(Axis(0), i);
            let prod = if trans_b { ai.dot(&bi.t()) } else { ai.dot(&bi) };
            out.index_axis_mut(Axis(0), i).assign(&prod);
        }
        let req = self.requires(a) || self.requires(b);
        self.push(out.into_dyn(), Op::Bmm { a, b, trans_b }, req)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape(), "add shapes");
        let out = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::Add(a, b), req)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape(), "sub shapes");
        let out = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::Sub(a, b), req)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape(), "mul shapes");
        let out = &self.nodes[a.0].value * &self.nodes[b.0].value;
        let req = self.requires(a) || self.requires(b);
        self.push(out, Op::Mul(a, b), req)
    }

    /// `x[..., d] + bias[d]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let xs = self.nodes[x.0].value.shape().to_vec();
        assert_eq!(self.nodes[bias.0].value.ndim(), 1, "bias is one-dimensional");
        assert_eq!(
            *xs.last().expect("input has axes"),
            self.nodes[bias.0].value.len(),
            "bias matches trailing dim"
        );
        let bv = self.nodes[bias.0]
            .value
            .broadcast(IxDyn(&xs))
            .expect("bias broadcast over trailing dim");
        let out = &self.nodes[x.0].value + &bv;
        let req = self.requires(x) || self.requires(bias);
        self.push(out, Op::AddBias(x, bias), req)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let cc = T::from_f64(c);
        let out = self.nodes[x.0].value.mapv(|v| v * cc);
        let req = self.requires(x);
        self.push(out, Op::Scale(x, c), req)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.mapv(|v| v.max(T::ZERO));
        let req = self.requires(x);
        self.push(out, Op::Relu(x), req)
    }

    pub fn mish(&mut self, x: Var) -> Var {
        let out = self.nodes[x.0].value.mapv(|v| v * softplus(v).tanh());
        let req = self.requires(x);
        self.push(out, Op::Mish(x), req)
    }

    pub fn softmax_last(&mut self, x: Var) -> Var {
        let mut out = self.nodes[x.0].value.clone();
        let d = *out.shape().last().expect("softmax input has axes");
        let flat = out.as_slice_mut().expect("standard layout");
        for row in flat.chunks_mut(d) {
            let mut mx = row[0];
            for v in row.iter() {
                mx = mx.max(*v);
            }
            let mut sum = T::ZERO;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum = sum + *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        let req = self.requires(x);
        self.push(out, Op::SoftmaxLast(x), req)
    }

    /// Normalize over the last axis, then apply per-feature gain and
    /// shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let d = *self.nodes[x.0].value.shape().last().expect("axes");
        assert_eq!(self.nodes[gamma.0].value.len(), d, "gamma length");
        assert_eq!(self.nodes[beta.0].value.len(), d, "beta length");
        let eps = T::from_f64(NORM_EPS);
        let mut out = self.nodes[x.0].value.clone();
        {
            let g = self.nodes[gamma.0].value.as_slice().expect("standard");
            let b = self.nodes[beta.0].value.as_slice().expect("standard");
            let flat = out.as_slice_mut().expect("standard layout");
            for row in flat.chunks_mut(d) {
                let (mean, var) = mean_var(row);
                let inv = T::ONE / (var + eps).sqrt();
                for (j, v) in row.iter_mut().enumerate() {
                    *v = (*v - mean) * inv * g[j] + b[j];
                }
            }
        }
        let req = self.requires(x) || self.requires(gamma) || self.requires(beta);
        self.push(out, Op::LayerNorm { x, gamma, beta }, req)
    }

    /// Group normalization on `[B, C, L]` with per-channel gain/shift.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        let shape = self.nodes[x.0].value.shape().to_vec();
        assert_eq!(shape.len(), 3, "group norm input [B, C, L]");
        let (bs, c, l) = (shape[0], shape[1], shape[2]);
        assert!(groups > 0 && c % groups == 0, "channels divisible by groups");
        assert_eq!(self.nodes[gamma.0].value.len(), c);
        assert_eq!(self.nodes[beta.0].value.len(), c);
        let eps = T::from_f64(NORM_EPS);
        let cg = c / groups;
        let mut out = self.nodes[x.0].value.clone();
        {
            let g = self.nodes[gamma.0].value.as_slice().expect("standard");
            let b = self.nodes[beta.0].value.as_slice().expect("standard");
            let flat = out.as_slice_mut().expect("standard layout");
            for bi in 0..bs {
                for gi in 0..groups {
                    let start = bi * c * l + gi * cg * l;
                    let seg = &mut flat[start..start + cg * l];
                    let (mean, var) = mean_var(seg);
                    let inv = T::ONE / (var + eps).sqrt();
                    for (j, v) in seg.iter_mut().enumerate() {
                        let ch = gi * cg + j / l;
                        *v = (*v - mean) * inv * g[ch] + b[ch];
                    }
                }
            }
        }
        let req = self.requires(x) || self.requires(gamma) || self.requires(beta);
        self.push(out, Op::GroupNorm { x, gamma, beta, groups }, req)
    }

    /// 1-D convolution: `x [B, C_in, L]`, `w [C_out, C_in, K]`,
    /// `b [C_out]`, zero padding.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xs = self.nodes[x.0].value.shape().to_vec();
        let ws = self.nodes[w.0].value.shape().to_vec();
        assert_eq!(xs.len(), 3, "conv input [B, C, L]");
        assert_eq!(ws.len(), 3, "conv weight [Cout, Cin, K]");
        assert_eq!(xs[1], ws[1], "conv in-channels");
        assert_eq!(self.nodes[b.0].value.len(), ws[0], "conv bias length");
        let (bs, c_in, l) = (xs[0], xs[1], xs[2]);
        let (c_out, k) = (ws[0], ws[2]);
        assert!(l + 2 * pad >= k, "kernel fits");
        let l_out = (l + 2 * pad - k) / stride + 1;

        let cols = im2col(
            self.nodes[x.0].value.as_slice().expect("standard"),
            bs,
            c_in,
            l,
            k,
            stride,
            pad,
        );
        let w2 = self.nodes[w.0]
            .value
            .view()
            .into_shape_with_order((c_out, c_in * k))
            .expect("weight reshape");
        let prod = cols.dot(&w2.t()); // [B*L_out, C_out]
        let bias = self.nodes[b.0].value.as_slice().expect("standard").to_vec();
        let mut out = ndarray::Array3::<T>::zeros((bs, c_out, l_out));
        {
            let o = out.as_slice_mut().expect("standard");
            for bi in 0..bs {
                for co in 0..c_out {
                    for li in 0..l_out {
                        o[bi * c_out * l_out + co * l_out + li] =
                            prod[[bi * l_out + li, co]] + bias[co];
                    }
                }
            }
        }
        let req = self.requires(x) || self.requires(w) || self.requires(b);
        self.push(out.into_dyn(), Op::Conv1d { x, w, b, stride, pad }, req)
    }

    /// Nearest-neighbor upsampling by 2 along the last axis of
    /// `[B, C, L]`.
    pub fn upsample2x(&mut self, x: Var) -> Var {
        let xs = self.nodes[x.0].value.shape().to_vec();
        assert_eq!(xs.len(), 3, "upsample input [B, C, L]");
        let (bs, c, l) = (xs[0], xs[1], xs[2]);
        let mut out = ndarray::Array3::<T>::zeros((bs, c, 2 * l));
        {
            let src = self.nodes[x.0].value.as_slice().expect("standard");
            let dst = out.as_slice_mut().expect("standard");
            for row in 0..bs * c {
                for li in 0..l {
                    let v = src[row * l + li];
                    dst[row * 2 * l + 2 * li] = v;
                    dst[row * 2 * l + 2 * li + 1] = v;
                }
            }
        }
        let req = self.requires(x);
        self.push(out.into_dyn(), Op::Upsample2x(x), req)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|p| self.nodes[p.0].value.view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views).expect("concat shapes");
        let req = parts.iter().any(|p| self.requires(*p));
        self.push(standard(out), Op::Concat(parts.to_vec(), axis), req)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let n: usize = shape.iter().product();
        assert_eq!(n, self.nodes[x.0].value.len(), "reshape preserves element count");
        let out = self.nodes[x.0]
            .value
            .view()
            .into_shape_with_order(IxDyn(shape))
            .expect("standard layout reshape")
            .to_owned();
        let req = self.requires(x);
        self.push(out, Op::Reshape(x), req)
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Var {
        let out = self.nodes[x.0].value.view().permuted_axes(axes.to_vec());
        let out = out.as_standard_layout().to_owned();
        let req = self.requires(x);
        self.push(out, Op::Permute(x, axes.to_vec()), req)
    }

    /// Mean over every element, yielding a 0-dim scalar node.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].value.len();
        let mut sum = T::ZERO;
        for v in self.nodes[x.0].value.iter() {
            sum = sum + *v;
        }
        let mean = sum / T::from_f64(n as f64);
        let out = ArrayD::from_elem(IxDyn(&[]), mean);
        let req = self.requires(x);
        self.push(out, Op::MeanAll(x), req)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let val = &self.nodes[v.0].value;
        assert_eq!(val.len(), 1, "scalar node");
        val.iter().next().unwrap().to_f64()
    }

    // ---- backward ----

    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "loss must be scalar");
        let mut grads: Vec<Option<ArrayD<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(ArrayD::from_elem(self.nodes[loss.0].value.raw_dim(), T::ONE));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires {
                grads[id] = None;
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.grads = grads;
    }

    fn accumulate(&self, grads: &mut [Option<ArrayD<T>>], v: Var, delta: ArrayD<T>) {
        if !self.nodes[v.0].requires {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc = &*acc + &delta,
            slot @ None => *slot = Some(standard(delta)),
        }
    }

    fn propagate(&self, id: usize, g: &ArrayD<T>, grads: &mut [Option<ArrayD<T>>]) {
        match self.nodes[id].op.clone() {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let gv = g.view().into_dimensionality::<Ix2>().unwrap();
                let av = self.nodes[a.0].value.view().into_dimensionality::<Ix2>().unwrap();
                let bv = self.nodes[b.0].value.view().into_dimensionality::<Ix2>().unwrap();
                if self.requires(a) {
                    self.accumulate(grads, a, gv.dot(&bv.t()).into_dyn());
                }
                if self.requires(b) {
                    self.accumulate(grads, b, av.t().dot(&gv).into_dyn());
                }
            }
            Op::Bmm { a, b, trans_b } => {
                let gv = g.view().into_dimensionality::<Ix3>().unwrap();
                let av = self.nodes[a.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let bv = self.nodes[b.0].value.view().into_dimensionality::<Ix3>().unwrap();
                let bs = av.dim().0;
                if self.requires(a) {
                    let mut da = ndarray::Array3::<T>::zeros(av.dim());
                    for i in 0..bs {
                        let gi = gv.index_axis(Axis(0), i);
                        let bi = bv.index_axis(Axis(0), i);
                        let d = if trans_b { gi.dot(&bi) } else { gi.dot(&bi.t()) };
                        da.index_axis_mut(Axis(0), i).assign(&d);
                    }
                    self.accumulate(grads, a, da.into_dyn());
                }
                if self.requires(b) {
                    let mut db = ndarray::Array3::<T>::zeros(bv.dim());
                    for i in 0..bs {
                        let gi = gv.index_axis(Axis(0), i);
                        let ai = av.index_axis(Axis(0), i);
                        let d = if trans_b { gi.t().dot(&ai) } else { ai.t().dot(&gi) };
                        db.index_axis_mut(Axis(0), i).assign(&d);
                    }
                    self.accumulate(grads, b, db.into_dyn());
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, a, g.clone());
                self.accumulate(grads, b, g.mapv(|v| T::ZERO - v));
            }
            Op::Mul(a, b) => {
                if self.requires(a) {
                    self.accumulate(grads, a, g * &self.nodes[b.0].value);
                }
                if self.requires(b) {
                    self.accumulate(grads, b, g * &self.nodes[a.0].value);
                }
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, x, g.clone());
                if self.requires(bias) {
                    let d = self.nodes[bias.0].value.len();
                    let mut db = vec![T::ZERO; d];
                    for (i, v) in g.iter().enumerate() {
                        db[i % d] = db[i % d] + *v;
                    }
                    self.accumulate(grads, bias, ArrayD::from_shape_vec(IxDyn(&[d]), db).unwrap());
                }
            }
            Op::Scale(x, c) => {
                let cc = T::from_f64(c);
                self.accumulate(grads, x, g.mapv(|v| v * cc));
            }
            Op::Relu(x) => {
                let mask = self.nodes[x.0].value.mapv(|v| if v > T::ZERO { T::ONE } else { T::ZERO });
                self.accumulate(grads, x, g * &mask);
            }
            Op::Mish(x) => {
                let deriv = self.nodes[x.0].value.mapv(|v| {
                    let t = softplus(v).tanh();
                    let sig = T::ONE / (T::ONE + (T::ZERO - v).exp());
                    t + v * (T::ONE - t * t) * sig
                });
                self.accumulate(grads, x, g * &deriv);
            }
            Op::SoftmaxLast(x) => {
                let y = &self.nodes[id].value;
                let d = *y.shape().last().unwrap();
                let mut dx = y.clone();
                {
                    let ys = y.as_slice().unwrap();
                    let gs = g.as_slice().expect("standard grad");
                    let out = dx.as_slice_mut().unwrap();
                    for r in 0..ys.len() / d {
                        let yr = &ys[r * d..(r + 1) * d];
                        let gr = &gs[r * d..(r + 1) * d];
                        let mut dot = T::ZERO;
                        for j in 0..d {
                            dot = dot + yr[j] * gr[j];
                        }
                        for j in 0..d {
                            out[r * d + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                }
                self.accumulate(grads, x, dx);
            }
            Op::LayerNorm { x, gamma, beta } => {
                let d = *self.nodes[x.0].value.shape().last().unwrap();
                let eps = T::from_f64(NORM_EPS);
                let xs = self.nodes[x.0].value.as_slice().unwrap();
                let gm = self.nodes[gamma.0].value.as_slice().unwrap();
                let gs = g.as_slice().expect("standard grad");
                let rows = xs.len() / d;
                let mut dx = vec![T::ZERO; xs.len()];
                let mut dgamma = vec![T::ZERO; d];
                let mut dbeta = vec![T::ZERO; d];
                let inv_d = T::ONE / T::from_f64(d as f64);
                for r in 0..rows {
                    let xr = &xs[r * d..(r + 1) * d];
                    let gr = &gs[r * d..(r + 1) * d];
                    let (mean, var) = mean_var(xr);
                    let inv = T::ONE / (var + eps).sqrt();
                    let mut sum_dxhat = T::ZERO;
                    let mut sum_dxhat_xhat = T::ZERO;
                    for j in 0..d {
                        let xhat = (xr[j] - mean) * inv;
                        let dxhat = gr[j] * gm[j];
                        sum_dxhat = sum_dxhat + dxhat;
                        sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                        dgamma[j] = dgamma[j] + gr[j] * xhat;
                        dbeta[j] = dbeta[j] + gr[j];
                    }
                    for j in 0..d {
                        let xhat = (xr[j] - mean) * inv;
                        let dxhat = gr[j] * gm[j];
                        dx[r * d + j] =
                            inv * (dxhat - sum_dxhat * inv_d - xhat * sum_dxhat_xhat * inv_d);
                    }
                }
                let xshape = self.nodes[x.0].value.raw_dim();
                self.accumulate(grads, x, ArrayD::from_shape_vec(xshape, dx).unwrap());
                self.accumulate(grads, gamma, ArrayD::from_shape_vec(IxDyn(&[d]), dgamma).unwrap());
                self.accumulate(grads, beta, ArrayD::from_shape_vec(IxDyn(&[d]), dbeta).unwrap());
            }
            Op::GroupNorm { x, gamma, beta, groups } => {
                let shape = self.nodes[x.0].value.shape().to_vec();
                let (bs, c, l) = (shape[0], shape[1], shape[2]);
                let cg = c / groups;
                let m = cg * l;
                let eps = T::from_f64(NORM_EPS);
                let xs = self.nodes[x.0].value.as_slice().unwrap();
                let gm = self.nodes[gamma.0].value.as_slice().unwrap();
                let gs = g.as_slice().expect("standard grad");
                let mut dx = vec![T::ZERO; xs.len()];
                let mut dgamma = vec![T::ZERO; c];
                let mut dbeta = vec![T::ZERO; c];
                let inv_m = T::ONE / T::from_f64(m as f64);
                for bi in 0..bs {
                    for gi in 0..groups {
                        let start = bi * c * l + gi * m;
                        let xr = &xs[start..start + m];
                        let gr = &gs[start..start + m];
                        let (mean, var) = mean_var(xr);
                        let inv = T::ONE / (var + eps).sqrt();
                        let mut sum_dxhat = T::ZERO;
                        let mut sum_dxhat_xhat = T::ZERO;
                        for j in 0..m {
                            let ch = gi * cg + j / l;
                            let xhat = (xr[j] - mean) * inv;
                            let dxhat = gr[j] * gm[ch];
                            sum_dxhat = sum_dxhat + dxhat;
                            sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                            dgamma[ch] = dgamma[ch] + gr[j] * xhat;
                            dbeta[ch] = dbeta[ch] + gr[j];
                        }
                        for j in 0..m {
                            let ch = gi * cg + j / l;
                            let xhat = (xr[j] - mean) * inv;
                            let dxhat = gr[j] * gm[ch];
                            dx[start + j] =
                                inv * (dxhat - sum_dxhat * inv_m - xhat * sum_dxhat_xhat * inv_m);
                        }
                    }
                }
                let xshape = self.nodes[x.0].value.raw_dim();
                self.accumulate(grads, x, ArrayD::from_shape_vec(xshape, dx).unwrap());
                self.accumulate(grads, gamma, ArrayD::from_shape_vec(IxDyn(&[c]), dgamma).unwrap());
                self.accumulate(grads, beta, ArrayD::from_shape_vec(IxDyn(&[c]), dbeta).unwrap());
            }
            Op::Conv1d { x, w, b, stride, pad } => {
                let xs = self.nodes[x.0].value.shape().to_vec();
                let ws = self.nodes[w.0].value.shape().to_vec();
                let (bs, c_in, l) = (xs[0], xs[1], xs[2]);
                let (c_out, k) = (ws[0], ws[2]);
                let l_out = (l + 2 * pad - k) / stride + 1;
                // [B*L_out, C_out] layout of the output gradient
                let gsl = g.as_slice().expect("standard grad");
                let mut g2 = ndarray::Array2::<T>::zeros((bs * l_out, c_out));
                for bi in 0..bs {
                    for co in 0..c_out {
                        for li in 0..l_out {
                            g2[[bi * l_out + li, co]] = gsl[bi * c_out * l_out + co * l_out + li];
                        }
                    }
                }
                if self.requires(b) {
                    let mut db = vec![T::ZERO; c_out];
                    for row in g2.rows() {
                        for (co, v) in row.iter().enumerate() {
                            db[co] = db[co] + *v;
                        }
                    }
                    self.accumulate(
                        grads,
                        b,
                        ArrayD::from_shape_vec(IxDyn(&[c_out]), db).unwrap(),
                    );
                }
                let cols = im2col(
                    self.nodes[x.0].value.as_slice().unwrap(),
                    bs,
                    c_in,
                    l,
                    k,
                    stride,
                    pad,
                );
                if self.requires(w) {
                    let dw2 = g2.t().dot(&cols); // [C_out, C_in*K]
                    let dw = dw2
                        .into_shape_with_order((c_out, c_in, k))
                        .unwrap()
                        .into_dyn();
                    self.accumulate(grads, w, dw);
                }
                if self.requires(x) {
                    let w2 = self.nodes[w.0]
                        .value
                        .view()
                        .into_shape_with_order((c_out, c_in * k))
                        .unwrap();
                    let dcols = g2.dot(&w2); // [B*L_out, C_in*K]
                    let dx = col2im(&dcols, bs, c_in, l, k, stride, pad);
                    self.accumulate(grads, x, dx);
                }
            }
            Op::Upsample2x(x) => {
                let xs = self.nodes[x.0].value.shape().to_vec();
                let (bs, c, l) = (xs[0], xs[1], xs[2]);
                let gsl = g.as_slice().expect("standard grad");
                let mut dx = vec![T::ZERO; bs * c * l];
                for row in 0..bs * c {
                    for li in 0..l {
                        dx[row * l + li] =
                            gsl[row * 2 * l + 2 * li] + gsl[row * 2 * l + 2 * li + 1];
                    }
                }
                self.accumulate(
                    grads,
                    x,
                    ArrayD::from_shape_vec(IxDyn(&[bs, c, l]), dx).unwrap(),
                );
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for p in parts {
                    let extent = self.nodes[p.0].value.shape()[axis];
                    let dp = g
                        .slice_axis(Axis(axis), Slice::from(offset..offset + extent))
                        .to_owned();
                    self.accumulate(grads, p, dp);
                    offset += extent;
                }
            }
            Op::Reshape(x) => {
                let back = g
                    .view()
                    .into_shape_with_order(self.nodes[x.0].value.raw_dim())
                    .expect("grad reshape")
                    .to_owned();
                self.accumulate(grads, x, back);
            }
            Op::Permute(x, axes) => {
                let mut inverse = vec![0usize; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let back = g.view().permuted_axes(inverse);
                self.accumulate(grads, x, back.as_standard_layout().to_owned());
            }
            Op::MeanAll(x) => {
                let n = self.nodes[x.0].value.len();
                let gv = *g.iter().next().unwrap() / T::from_f64(n as f64);
                let dx = ArrayD::from_elem(self.nodes[x.0].value.raw_dim(), gv);
                self.accumulate(grads, x, dx);
            }
        }
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::ZERO) + (T::ZERO - x.abs()).exp().ln_1p()
}

fn mean_var<T: Scalar>(row: &[T]) -> (T, T) {
    let n = T::from_f64(row.len() as f64);
    let mut sum = T::ZERO;
    for v in row {
        sum = sum + *v;
    }
    let mean = sum / n;
    let mut acc = T::ZERO;
    for v in row {
        let d = *v - mean;
        acc = acc + d * d;
    }
    (mean, acc / n)
}

fn im2col<T: Scalar>(
    x: &[T],
    bs: usize,
    c_in: usize,
    l: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> ndarray::Array2<T> {
    let l_out = (l + 2 * pad - k) / stride + 1;
    let mut cols = ndarray::Array2::<T>::zeros((bs * l_out, c_in * k));
    for bi in 0..bs {
        for li in 0..l_out {
            let row = bi * l_out + li;
            for ci in 0..c_in {
                for t in 0..k {
                    let src = li * stride + t;
                    if src >= pad && src - pad < l {
                        cols[[row, ci * k + t]] = x[bi * c_in * l + ci * l + (src - pad)];
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(
    dcols: &ndarray::Array2<T>,
    bs: usize,
    c_in: usize,
    l: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> ArrayD<T> {
    let l_out = (l + 2 * pad - k) / stride + 1;
    let mut dx = vec![T::ZERO; bs * c_in * l];
    for bi in 0..bs {
        for li in 0..l_out {
            let row = bi * l_out + li;
            for ci in 0..c_in {
                for t in 0..k {
                    let src = li * stride + t;
                    if src >= pad && src - pad < l {
                        let idx = bi * c_in * l + ci * l + (src - pad);
                        dx[idx] = dx[idx] + dcols[[row, ci * k + t]];
                    }
                }
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[bs, c_in, l]), dx).unwrap()
}
