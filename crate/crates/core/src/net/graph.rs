//! Reverse-mode differentiation over a flat tape of tensor ops.
//!
//! Layouts: sequences are `[batch, time, channels]`, vectors `[batch, width]`,
//! conv weights `[kernel, in, out]`, linear weights `[in, out]`.

use rand::Rng;

use super::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        dilation: usize,
    },
    Relu(Var),
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    MeanTime(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Concat(Vec<Var>),
    Sigmoid(Var),
    Softmax(Var),
    Add(Var, Var),
    SumSquares(Var),
    Dot {
        x: Var,
        c: Vec<T>,
    },
    BinaryFocal {
        p: Var,
        target: Vec<T>,
        gamma: f64,
        weights: Vec<T>,
    },
    CategoricalFocal {
        p: Var,
        target: Vec<Option<usize>>,
        gamma: f64,
        weights: Vec<T>,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv1d { .. } => "conv1d",
            Op::Relu(_) => "relu",
            Op::Dropout { .. } => "dropout",
            Op::MeanTime(_) => "mean_time",
            Op::Linear { .. } => "linear",
            Op::Concat(_) => "concat",
            Op::Sigmoid(_) => "sigmoid",
            Op::Softmax(_) => "softmax",
            Op::Add(..) => "add",
            Op::SumSquares(_) => "sum_squares",
            Op::Dot { .. } => "dot",
            Op::BinaryFocal { .. } => "binary_focal",
            Op::CategoricalFocal { .. } => "categorical_focal",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-7;

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    non_finite: Option<&'static str>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients indexed by variable; `None` where no gradient flows.
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            non_finite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Name of the first op that produced a non-finite value (debug builds only).
    pub fn non_finite_op(&self) -> Option<&'static str> {
        self.non_finite
    }

    /// Hash of which ReLU inputs are positive; changes when a perturbation
    /// crosses a kink.
    pub fn relu_signature(&self) -> u64 {
        let mut h = 0u64;
        for node in &self.nodes {
            if let Op::Relu(_) = node.op {
                for &v in &node.value.data {
                    h = crate::util::mix64(h ^ u64::from(v > T::zero()));
                }
            }
        }
        h
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        if cfg!(debug_assertions) && self.non_finite.is_none() && !value.all_finite() {
            log::debug!("non-finite output from {}", op.name());
            self.non_finite = Some(op.name());
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A constant leaf; no gradient is computed for it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Dilated 1-D convolution with symmetric zero padding; kernel size must be odd.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, dilation: usize) -> Var {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let (bsz, t, cin) = (xs[0], xs[1], xs[2]);
        let (k, wcin, cout) = (ws[0], ws[1], ws[2]);
        assert!(
            k % 2 == 1 && dilation >= 1,
            "conv1d needs odd kernel and dilation >= 1"
        );
        assert_eq!(cin, wcin, "conv1d channel mismatch");
        assert_eq!(self.shape(b), [cout], "conv1d bias shape");
        let xv = &self.nodes[x.0].value.data;
        let wv = &self.nodes[w.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let half = (k - 1) / 2;
        let mut y = vec![T::zero(); bsz * t * cout];
        for bi in 0..bsz {
            for ti in 0..t {
                let out = &mut y[(bi * t + ti) * cout..(bi * t + ti + 1) * cout];
                out.copy_from_slice(bv);
                for j in 0..k {
                    let src = ti as isize + (j as isize - half as isize) * dilation as isize;
                    if src < 0 || src >= t as isize {
                        continue;
                    }
                    let xrow =
                        &xv[(bi * t + src as usize) * cin..(bi * t + src as usize + 1) * cin];
                    let wj = &wv[j * cin * cout..(j + 1) * cin * cout];
                    for (c, &xc) in xrow.iter().enumerate() {
                        if xc == T::zero() {
                            continue;
                        }
                        let wrow = &wj[c * cout..(c + 1) * cout];
                        for (o, &wo) in out.iter_mut().zip(wrow) {
                            *o += xc * wo;
                        }
                    }
                }
            }
        }
        let needs = self.needs(&[x, w, b]);
        self.push(
            Tensor {
                shape: vec![bsz, t, cout],
                data: y,
            },
            Op::Conv1d { x, w, b, dilation },
            needs,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let out = Tensor {
            shape: v.shape.clone(),
            data: v
                .data
                .iter()
                .map(|&a| if a > T::zero() { a } else { T::zero() })
                .collect(),
        };
        let needs = self.needs(&[x]);
        self.push(out, Op::Relu(x), needs)
    }

    /// Inverted dropout; the identity when `rate` is 0 or no RNG is given.
    pub fn dropout<R: Rng>(&mut self, x: Var, rate: f64, rng: Option<&mut R>) -> Var {
        let Some(rng) = rng else { return x };
        if rate <= 0.0 {
            return x;
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let v = &self.nodes[x.0].value;
        let mask: Vec<T> = (0..v.len())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let out = Tensor {
            shape: v.shape.clone(),
            data: v.data.iter().zip(&mask).map(|(&a, &m)| a * m).collect(),
        };
        let needs = self.needs(&[x]);
        self.push(out, Op::Dropout { x, mask }, needs)
    }

    /// Mean over the time axis: `[B, T, C] -> [B, C]`.
    pub fn mean_time(&mut self, x: Var) -> Var {
        let s = self.shape(x).to_vec();
        let (bsz, t, c) = (s[0], s[1], s[2]);
        let xv = &self.nodes[x.0].value.data;
        let inv = T::of(1.0 / t as f64);
        let mut y = vec![T::zero(); bsz * c];
        for bi in 0..bsz {
            let out = &mut y[bi * c..(bi + 1) * c];
            for ti in 0..t {
                let row = &xv[(bi * t + ti) * c..(bi * t + ti + 1) * c];
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += a;
                }
            }
            out.iter_mut().for_each(|o| *o *= inv);
        }
        let needs = self.needs(&[x]);
        self.push(
            Tensor {
                shape: vec![bsz, c],
                data: y,
            },
            Op::MeanTime(x),
            needs,
        )
    }

    /// `[B, I] x [I, O] + [O] -> [B, O]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xs, ws) = (self.shape(x), self.shape(w));
        let (bsz, i) = (xs[0], xs[1]);
        let o = ws[1];
        assert_eq!(ws[0], i, "linear input width mismatch");
        assert_eq!(self.shape(b), [o], "linear bias shape");
        let xv = &self.nodes[x.0].value.data;
        let wv = &self.nodes[w.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut y = Vec::with_capacity(bsz * o);
        for bi in 0..bsz {
            let mut out = bv.to_vec();
            for (ii, &xc) in xv[bi * i..(bi + 1) * i].iter().enumerate() {
                if xc == T::zero() {
                    continue;
                }
                for (acc, &wo) in out.iter_mut().zip(&wv[ii * o..(ii + 1) * o]) {
                    *acc += xc * wo;
                }
            }
            y.extend(out);
        }
        let needs = self.needs(&[x, w, b]);
        self.push(
            Tensor {
                shape: vec![bsz, o],
                data: y,
            },
            Op::Linear { x, w, b },
            needs,
        )
    }

    /// Concatenates `[B, C_i]` inputs along the feature axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let bsz = self.shape(parts[0])[0];
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                assert_eq!(self.shape(p)[0], bsz, "concat batch mismatch");
                self.shape(p)[1]
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut y = Vec::with_capacity(bsz * total);
        for bi in 0..bsz {
            for (&p, &w) in parts.iter().zip(&widths) {
                y.extend_from_slice(&self.nodes[p.0].value.data[bi * w..(bi + 1) * w]);
            }
        }
        let needs = self.needs(parts);
        self.push(
            Tensor {
                shape: vec![bsz, total],
                data: y,
            },
            Op::Concat(parts.to_vec()),
            needs,
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let out = Tensor {
            shape: v.shape.clone(),
            data: v
                .data
                .iter()
                .map(|&a| T::one() / (T::one() + (-a).exp()))
                .collect(),
        };
        let needs = self.needs(&[x]);
        self.push(out, Op::Sigmoid(x), needs)
    }

    /// Row-wise softmax over the last axis of `[B, L]`.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = &self.nodes[x.0].value;
        let l = v.shape[1];
        let mut data = Vec::with_capacity(v.len());
        for row in v.data.chunks(l) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let e: Vec<T> = row.iter().map(|&a| (a - m).exp()).collect();
            let s: T = e.iter().copied().sum();
            data.extend(e.into_iter().map(|a| a / s));
        }
        let out = Tensor {
            shape: v.shape.clone(),
            data,
        };
        let needs = self.needs(&[x]);
        self.push(out, Op::Softmax(x), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        let out = Tensor {
            shape: av.shape.clone(),
            data: av.data.iter().zip(&bv.data).map(|(&x, &y)| x + y).collect(),
        };
        let needs = self.needs(&[a, b]);
        self.push(out, Op::Add(a, b), needs)
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.data.iter().map(|&a| a * a).sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::SumSquares(x), needs)
    }

    /// `Σ x·c` for a constant `c`; handy for probing a single layer's gradient.
    pub fn dot(&mut self, x: Var, c: Vec<T>) -> Var {
        assert_eq!(self.nodes[x.0].value.len(), c.len(), "dot length mismatch");
        let s = self.nodes[x.0]
            .value
            .data
            .iter()
            .zip(&c)
            .map(|(&a, &b)| a * b)
            .sum();
        let needs = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Dot { x, c }, needs)
    }

    /// Summed focal binary cross-entropy over `[B, L]` probabilities.
    /// `gamma = 0` gives plain cross-entropy; `weights` scale each label.
    pub fn binary_focal(&mut self, p: Var, target: Vec<T>, gamma: f64, weights: Vec<T>) -> Var {
        let pv = &self.nodes[p.0].value;
        let l = pv.shape[1];
        assert_eq!(pv.len(), target.len(), "binary target length");
        assert_eq!(weights.len(), l, "binary weight length");
        let mut total = T::zero();
        for (idx, (&prob, &y)) in pv.data.iter().zip(&target).enumerate() {
            total += focal_term(prob, y > T::of(0.5), gamma, weights[idx % l]).0;
        }
        let needs = self.needs(&[p]);
        self.push(
            Tensor::scalar(total),
            Op::BinaryFocal {
                p,
                target,
                gamma,
                weights,
            },
            needs,
        )
    }

    /// Summed focal cross-entropy of softmax rows against class indices.
    /// Rows with no target contribute nothing.
    pub fn categorical_focal(
        &mut self,
        p: Var,
        target: Vec<Option<usize>>,
        gamma: f64,
        weights: Vec<T>,
    ) -> Var {
        let pv = &self.nodes[p.0].value;
        let l = pv.shape[1];
        assert_eq!(pv.shape[0], target.len(), "categorical target length");
        assert_eq!(weights.len(), l, "categorical weight length");
        let mut total = T::zero();
        for (row, t) in pv.data.chunks(l).zip(&target) {
            if let Some(c) = *t {
                total += focal_term(row[c], true, gamma, weights[c]).0;
            }
        }
        let needs = self.needs(&[p]);
        self.push(
            Tensor::scalar(total),
            Op::CategoricalFocal {
                p,
                target,
                gamma,
                weights,
            },
            needs,
        )
    }

    /// Backpropagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Grads<T> {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.backprop(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }
        Grads { grads }
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }

    fn backprop(&self, node: &Node<T>, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d { x, w, b, dilation } => {
                let xs = &self.nodes[x.0].value;
                let ws = &self.nodes[w.0].value;
                let (bsz, t, cin) = (xs.shape[0], xs.shape[1], xs.shape[2]);
                let (k, cout) = (ws.shape[0], ws.shape[2]);
                let half = (k - 1) / 2;
                if let Some(db) = self.acc(grads, *b) {
                    for row in dy.chunks(cout) {
                        for (g, &d) in db.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
                if let Some(dw) = self.acc(grads, *w) {
                    for bi in 0..bsz {
                        for ti in 0..t {
                            let drow = &dy[(bi * t + ti) * cout..(bi * t + ti + 1) * cout];
                            for j in 0..k {
                                let src =
                                    ti as isize + (j as isize - half as isize) * *dilation as isize;
                                if src < 0 || src >= t as isize {
                                    continue;
                                }
                                let s = (bi * t + src as usize) * cin;
                                for c in 0..cin {
                                    let xc = xs.data[s + c];
                                    if xc == T::zero() {
                                        continue;
                                    }
                                    let g = &mut dw[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                                    for (gg, &d) in g.iter_mut().zip(drow) {
                                        *gg += xc * d;
                                    }
                                }
                            }
                        }
                    }
                }
                if let Some(dx) = self.acc(grads, *x) {
                    for bi in 0..bsz {
                        for ti in 0..t {
                            let drow = &dy[(bi * t + ti) * cout..(bi * t + ti + 1) * cout];
                            for j in 0..k {
                                let src =
                                    ti as isize + (j as isize - half as isize) * *dilation as isize;
                                if src < 0 || src >= t as isize {
                                    continue;
                                }
                                let s = (bi * t + src as usize) * cin;
                                for c in 0..cin {
                                    let wrow =
                                        &ws.data[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                                    let v: T = wrow.iter().zip(drow).map(|(&a, &d)| a * d).sum();
                                    dx[s + c] += v;
                                }
                            }
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let y = &node.value.data;
                if let Some(dx) = self.acc(grads, *x) {
                    for ((g, &d), &yy) in dx.iter_mut().zip(dy).zip(y) {
                        if yy > T::zero() {
                            *g += d;
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(dx) = self.acc(grads, *x) {
                    for ((g, &d), &m) in dx.iter_mut().zip(dy).zip(mask) {
                        *g += d * m;
                    }
                }
            }
            Op::MeanTime(x) => {
                let s = &self.nodes[x.0].value.shape;
                let (t, c) = (s[1], s[2]);
                let inv = T::of(1.0 / t as f64);
                if let Some(dx) = self.acc(grads, *x) {
                    for (bi, drow) in dy.chunks(c).enumerate() {
                        for ti in 0..t {
                            let g = &mut dx[(bi * t + ti) * c..(bi * t + ti + 1) * c];
                            for (gg, &d) in g.iter_mut().zip(drow) {
                                *gg += d * inv;
                            }
                        }
                    }
                }
            }
            Op::Linear { x, w, b } => {
                let xs = &self.nodes[x.0].value;
                let ws = &self.nodes[w.0].value;
                let (i, o) = (ws.shape[0], ws.shape[1]);
                if let Some(db) = self.acc(grads, *b) {
                    for row in dy.chunks(o) {
                        for (g, &d) in db.iter_mut().zip(row) {
                            *g += d;
                        }
                    }
                }
                if let Some(dw) = self.acc(grads, *w) {
                    for (xrow, drow) in xs.data.chunks(i).zip(dy.chunks(o)) {
                        for (ii, &xc) in xrow.iter().enumerate() {
                            if xc == T::zero() {
                                continue;
                            }
                            for (g, &d) in dw[ii * o..(ii + 1) * o].iter_mut().zip(drow) {
                                *g += xc * d;
                            }
                        }
                    }
                }
                if let Some(dx) = self.acc(grads, *x) {
                    for (bi, drow) in dy.chunks(o).enumerate() {
                        for ii in 0..i {
                            let v: T = ws.data[ii * o..(ii + 1) * o]
                                .iter()
                                .zip(drow)
                                .map(|(&a, &d)| a * d)
                                .sum();
                            dx[bi * i + ii] += v;
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let total = node.value.shape[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.shape[1];
                    if let Some(dp) = self.acc(grads, p) {
                        for (bi, drow) in dy.chunks(total).enumerate() {
                            for (g, &d) in dp[bi * w..(bi + 1) * w]
                                .iter_mut()
                                .zip(&drow[offset..offset + w])
                            {
                                *g += d;
                            }
                        }
                    }
                    offset += w;
                }
            }
            Op::Sigmoid(x) => {
                let y = &node.value.data;
                if let Some(dx) = self.acc(grads, *x) {
                    for ((g, &d), &yy) in dx.iter_mut().zip(dy).zip(y) {
                        *g += d * yy * (T::one() - yy);
                    }
                }
            }
            Op::Softmax(x) => {
                let l = node.value.shape[1];
                let y = &node.value.data;
                if let Some(dx) = self.acc(grads, *x) {
                    for ((g, yr), dr) in dx.chunks_mut(l).zip(y.chunks(l)).zip(dy.chunks(l)) {
                        let dot: T = yr.iter().zip(dr).map(|(&a, &d)| a * d).sum();
                        for ((gg, &yy), &d) in g.iter_mut().zip(yr).zip(dr) {
                            *gg += yy * (d - dot);
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(dv) = self.acc(grads, v) {
                        for (g, &d) in dv.iter_mut().zip(dy) {
                            *g += d;
                        }
                    }
                }
            }
            Op::SumSquares(x) => {
                let xv = &self.nodes[x.0].value.data;
                let two = T::of(2.0) * dy[0];
                if let Some(dx) = self.acc(grads, *x) {
                    for (g, &a) in dx.iter_mut().zip(xv) {
                        *g += two * a;
                    }
                }
            }
            Op::Dot { x, c } => {
                if let Some(dx) = self.acc(grads, *x) {
                    for (g, &cc) in dx.iter_mut().zip(c) {
                        *g += dy[0] * cc;
                    }
                }
            }
            Op::BinaryFocal {
                p,
                target,
                gamma,
                weights,
            } => {
                let pv = &self.nodes[p.0].value;
                let l = pv.shape[1];
                if let Some(dp) = self.acc(grads, *p) {
                    for (idx, ((g, &prob), &y)) in
                        dp.iter_mut().zip(&pv.data).zip(target).enumerate()
                    {
                        let (_, d) = focal_term(prob, y > T::of(0.5), *gamma, weights[idx % l]);
                        *g += dy[0] * d;
                    }
                }
            }
            Op::CategoricalFocal {
                p,
                target,
                gamma,
                weights,
            } => {
                let pv = &self.nodes[p.0].value;
                let l = pv.shape[1];
                if let Some(dp) = self.acc(grads, *p) {
                    for (bi, t) in target.iter().enumerate() {
                        if let Some(c) = *t {
                            let (_, d) = focal_term(pv.data[bi * l + c], true, *gamma, weights[c]);
                            dp[bi * l + c] += dy[0] * d;
                        }
                    }
                }
            }
        }
    }
}

/// Weighted focal term `-w (1 - p_t)^γ ln p_t` and its derivative with respect
/// to the raw probability `p` (zero where the clamp is active).
pub fn focal_term<T: Real>(p: T, positive: bool, gamma: f64, weight: T) -> (T, T) {
    if p.is_nan() {
        return (T::nan(), T::nan());
    }
    let eps = T::of(PROB_EPS);
    let clamped = p < eps || p > T::one() - eps;
    let c = p.max(eps).min(T::one() - eps);
    let pt = if positive { c } else { T::one() - c };
    let ln = pt.ln();
    let q = T::one() - pt;
    let (value, dpt) = if gamma == 0.0 {
        (-ln, -T::one() / pt)
    } else {
        let g = T::of(gamma);
        let qg = q.powf(g);
        (-qg * ln, g * q.powf(g - T::one()) * ln - qg / pt)
    };
    let d = if clamped {
        T::zero()
    } else if positive {
        dpt
    } else {
        -dpt
    };
    (weight * value, weight * d)
}
