//! Tape-based reverse-mode differentiation.
//!
//! Forward calls append nodes (operation, input references, stored outputs)
//! to the tape in execution order; [`Tape::backward`] replays the tape in
//! reverse, accumulating adjoints additively so reused values receive the
//! sum of their downstream gradients.

use crate::{Error, Result};

use super::ops::{self, gelu_derivative, MacCounter};
use super::{ParamId, ParamStore, Tensor};

/// Probabilities are clamped to [PROB_FLOOR, 1 - PROB_FLOOR] inside every
/// cross-entropy evaluation so confident mistakes stay finite.
pub const PROB_FLOOR: f64 = 1e-7;

/// Weighted binary cross entropy on an already-sigmoided probability, with
/// the probability clamped to [1e-7, 1 - 1e-7]. Returns the loss value.
pub(crate) fn weighted_bce_value(p: f64, label: f64, pos_weight: f64, neg_weight: f64) -> f64 {
    let q = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    -(pos_weight * label * q.ln() + neg_weight * (1.0 - label) * (1.0 - q).ln())
}

fn weighted_bce_derivative(p: f64, label: f64, pos_weight: f64, neg_weight: f64) -> f64 {
    if !(PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p) {
        return 0.0; // clamp saturated
    }
    -pos_weight * label / p + neg_weight * (1.0 - label) / (1.0 - p)
}

/// Reference to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    Conv1d { x: NodeId, weight: ParamId, bias: ParamId, stride: usize },
    DepthwiseConv1d { x: NodeId, weight: ParamId, bias: ParamId },
    LayerNorm { x: NodeId, gain: Option<ParamId>, shift: Option<ParamId>, epsilon: f64 },
    Gelu { x: NodeId },
    Add { a: NodeId, b: NodeId },
    AvgPoolFull { x: NodeId },
    Linear { x: NodeId, weight: ParamId, bias: ParamId },
    Sigmoid { x: NodeId },
    WeightedBce { x: NodeId, label: f64, pos_weight: f64, neg_weight: f64 },
}

#[derive(Debug)]
struct Node {
    op: Op,
    out: Tensor,
}

/// Gradients parallel to a [`ParamStore`]'s arrays.
#[derive(Debug, Clone)]
pub struct Gradients {
    arrays: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self { arrays: params.iter().map(|(_, a)| vec![0.0; a.values().len()]).collect() }
    }

    pub fn of(&self, id: ParamId) -> &[f64] {
        &self.arrays[id.0]
    }

    fn of_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.arrays[id.0]
    }

    /// Adds values elementwise into one array's gradient.
    pub fn accumulate_at(&mut self, id: ParamId, values: &[f64]) {
        for (slot, v) in self.arrays[id.0].iter_mut().zip(values) {
            *slot += *v;
        }
    }

    pub fn arrays(&self) -> &[Vec<f64>] {
        &self.arrays
    }

    /// Adds `other` into self (for batch accumulation).
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.arrays.len() != other.arrays.len() {
            return Err(Error::Shape("gradient accumulation across different stores".into()));
        }
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            if a.len() != b.len() {
                return Err(Error::Shape("gradient accumulation across different stores".into()));
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.arrays {
            for v in a.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Euclidean norm over every gradient value.
    pub fn global_norm(&self) -> f64 {
        let mut sq = 0.0;
        for a in &self.arrays {
            for v in a {
                sq += v * v;
            }
        }
        sq.sqrt()
    }
}

/// One differentiable computation over a fixed parameter store.
pub struct Tape<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node>,
    counter: MacCounter,
}

impl<'a> Tape<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Self { params, nodes: Vec::new(), counter: MacCounter::new() }
    }

    /// Registers a constant (non-differentiated) input tensor.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].out
    }

    pub fn scalar_value(&self, id: NodeId) -> Result<f64> {
        self.nodes[id.0].out.item()
    }

    /// Multiply-accumulates executed by conv/linear nodes so far.
    pub fn macs(&self) -> u64 {
        self.counter.total()
    }

    fn push(&mut self, op: Op, out: Tensor) -> NodeId {
        self.nodes.push(Node { op, out });
        NodeId(self.nodes.len() - 1)
    }

    fn param_2d(&self, id: ParamId, what: &str) -> Result<&[usize]> {
        let shape = self.params.get(id).shape();
        if shape.is_empty() {
            return Err(Error::Shape(format!("{what}: scalar parameter where array expected")));
        }
        Ok(shape)
    }

    pub fn conv1d(&mut self, x: NodeId, weight: ParamId, bias: ParamId, stride: usize) -> Result<NodeId> {
        let shape = self.param_2d(weight, "conv1d weight")?;
        if shape.len() != 3 {
            return Err(Error::Shape(format!("conv1d weight must be rank 3, got {shape:?}")));
        }
        let (out_ch, in_ch, kernel) = (shape[0], shape[1], shape[2]);
        if in_ch != self.nodes[x.0].out.channels() {
            return Err(Error::Shape(format!(
                "conv1d input has {} channels, weight expects {in_ch}",
                self.nodes[x.0].out.channels()
            )));
        }
        let out = ops::conv1d(
            &self.nodes[x.0].out,
            self.params.values(weight),
            self.params.values(bias),
            out_ch,
            kernel,
            stride,
            &mut self.counter,
        )?;
        Ok(self.push(Op::Conv1d { x, weight, bias, stride }, out))
    }

    pub fn depthwise_conv1d(&mut self, x: NodeId, weight: ParamId, bias: ParamId) -> Result<NodeId> {
        let shape = self.param_2d(weight, "depthwise weight")?;
        if shape.len() != 2 {
            return Err(Error::Shape(format!("depthwise weight must be rank 2, got {shape:?}")));
        }
        let kernel = shape[1];
        let out = ops::depthwise_conv1d(
            &self.nodes[x.0].out,
            self.params.values(weight),
            self.params.values(bias),
            kernel,
            &mut self.counter,
        )?;
        Ok(self.push(Op::DepthwiseConv1d { x, weight, bias }, out))
    }

    pub fn layer_norm(&mut self, x: NodeId, epsilon: f64) -> Result<NodeId> {
        let out = ops::layer_norm(&self.nodes[x.0].out, None, None, epsilon)?;
        Ok(self.push(Op::LayerNorm { x, gain: None, shift: None, epsilon }, out))
    }

    pub fn layer_norm_affine(
        &mut self,
        x: NodeId,
        gain: ParamId,
        shift: ParamId,
        epsilon: f64,
    ) -> Result<NodeId> {
        let out = ops::layer_norm(
            &self.nodes[x.0].out,
            Some(self.params.values(gain)),
            Some(self.params.values(shift)),
            epsilon,
        )?;
        Ok(self.push(Op::LayerNorm { x, gain: Some(gain), shift: Some(shift), epsilon }, out))
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let out = ops::gelu(&self.nodes[x.0].out);
        self.push(Op::Gelu { x }, out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = ops::add(&self.nodes[a.0].out, &self.nodes[b.0].out)?;
        Ok(self.push(Op::Add { a, b }, out))
    }

    pub fn avg_pool_full(&mut self, x: NodeId) -> Result<NodeId> {
        let out = ops::avg_pool_full(&self.nodes[x.0].out)?;
        Ok(self.push(Op::AvgPoolFull { x }, out))
    }

    pub fn linear(&mut self, x: NodeId, weight: ParamId, bias: ParamId) -> Result<NodeId> {
        let out = ops::linear(
            &self.nodes[x.0].out,
            self.params.values(weight),
            self.params.values(bias),
            &mut self.counter,
        )?;
        Ok(self.push(Op::Linear { x, weight, bias }, out))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = ops::sigmoid(&self.nodes[x.0].out);
        self.push(Op::Sigmoid { x }, out)
    }

    /// Weighted binary cross entropy against a 1x1 probability node.
    pub fn weighted_bce(
        &mut self,
        x: NodeId,
        label: f64,
        pos_weight: f64,
        neg_weight: f64,
    ) -> Result<NodeId> {
        let p = self.nodes[x.0].out.item()?;
        let loss = weighted_bce_value(p, label, pos_weight, neg_weight);
        Ok(self.push(Op::WeightedBce { x, label, pos_weight, neg_weight }, Tensor::scalar(loss)))
    }

    /// Reverse pass from a scalar root. Returns gradients for every
    /// parameter array (zero for parameters the root does not depend on).
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if root.0 >= self.nodes.len() {
            return Err(Error::InvalidArgument("backward root is not on this tape".into()));
        }
        self.nodes[root.0].out.item().map_err(|_| {
            Error::Shape("backward root must be a scalar (1x1) node".into())
        })?;

        let mut adjoints: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[root.0] = Some(Tensor::scalar(1.0));
        let mut grads = Gradients::zeros_like(self.params);

        for idx in (0..=root.0).rev() {
            let Some(d) = adjoints[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Conv1d { x, weight, bias, stride } => {
                    let input = &self.nodes[x.0].out;
                    let w = self.params.values(*weight);
                    let shape = self.params.get(*weight).shape();
                    let (out_ch, in_ch, kernel) = (shape[0], shape[1], shape[2]);
                    let mut dx = Tensor::zeros(input.channels(), input.len());
                    for o in 0..out_ch {
                        for t in 0..d.len() {
                            let g = d.get(o, t);
                            if g == 0.0 {
                                continue;
                            }
                            let start = t * stride;
                            for i in 0..in_ch {
                                for j in 0..kernel {
                                    let wi = (o * in_ch + i) * kernel + j;
                                    dx.add_at(i, start + j, g * w[wi]);
                                    grads.of_mut(*weight)[wi] += g * input.get(i, start + j);
                                }
                            }
                            grads.of_mut(*bias)[o] += g;
                        }
                    }
                    accumulate(&mut adjoints[x.0], dx);
                }
                Op::DepthwiseConv1d { x, weight, bias } => {
                    let input = &self.nodes[x.0].out;
                    let w = self.params.values(*weight);
                    let kernel = self.params.get(*weight).shape()[1];
                    let pad = (kernel - 1) / 2;
                    let len = input.len();
                    let mut dx = Tensor::zeros(input.channels(), len);
                    for c in 0..input.channels() {
                        for t in 0..len {
                            let g = d.get(c, t);
                            if g == 0.0 {
                                continue;
                            }
                            for j in 0..kernel {
                                let u = t + j;
                                if u >= pad && u - pad < len {
                                    let wi = c * kernel + j;
                                    dx.add_at(c, u - pad, g * w[wi]);
                                    grads.of_mut(*weight)[wi] += g * input.get(c, u - pad);
                                }
                            }
                            grads.of_mut(*bias)[c] += g;
                        }
                    }
                    accumulate(&mut adjoints[x.0], dx);
                }
                Op::LayerNorm { x, gain, shift, epsilon } => {
                    let input = &self.nodes[x.0].out;
                    let channels = input.channels();
                    let n = channels as f64;
                    let g = gain.map(|id| self.params.values(id));
                    let mut dx = Tensor::zeros(channels, input.len());
                    for t in 0..input.len() {
                        let mut mean = 0.0;
                        for c in 0..channels {
                            mean += input.get(c, t);
                        }
                        mean /= n;
                        let mut var = 0.0;
                        for c in 0..channels {
                            let dev = input.get(c, t) - mean;
                            var += dev * dev;
                        }
                        var /= n;
                        let inv = 1.0 / (var + epsilon).sqrt();
                        // adjoint w.r.t. the normalized value, folding in the gain
                        let mut dn_mean = 0.0;
                        let mut dnxhat_mean = 0.0;
                        for c in 0..channels {
                            let xhat = (input.get(c, t) - mean) * inv;
                            let dy = d.get(c, t);
                            let dn = match g {
                                Some(gv) => dy * gv[c],
                                None => dy,
                            };
                            dn_mean += dn;
                            dnxhat_mean += dn * xhat;
                            if let Some(id) = gain {
                                grads.of_mut(*id)[c] += dy * xhat;
                            }
                            if let Some(id) = shift {
                                grads.of_mut(*id)[c] += dy;
                            }
                        }
                        dn_mean /= n;
                        dnxhat_mean /= n;
                        for c in 0..channels {
                            let xhat = (input.get(c, t) - mean) * inv;
                            let dn = match g {
                                Some(gv) => d.get(c, t) * gv[c],
                                None => d.get(c, t),
                            };
                            dx.set(c, t, inv * (dn - dn_mean - xhat * dnxhat_mean));
                        }
                    }
                    accumulate(&mut adjoints[x.0], dx);
                }
                Op::Gelu { x } => {
                    let input = &self.nodes[x.0].out;
                    let mut dx = d.clone();
                    for (g, v) in dx.data_mut().iter_mut().zip(input.data()) {
                        *g *= gelu_derivative(*v);
                    }
                    accumulate(&mut adjoints[x.0], dx);
                }
                Op::Add { a, b } => {
                    accumulate(&mut adjoints[a.0], d.clone());
                    accumulate(&mut adjoints[b.0], d);
                }
                Op::AvgPoolFull { x } => {
                    let input = &self.nodes[x.0].out;
                    let len = input.len();
                    let mut dx = Tensor::zeros(input.channels(), len);
                    for c in 0..input.channels() {
                        let g = d.get(c, 0) / len as f64;
                        for t in 0..len {
                            dx.set(c, t, g);
                        }
                    }
                    accumulate(&mut adjoints[x.0], dx);
                }
                Op::Linear { x, weight, bias } => {
                    let input = &self.nodes[x.0].out;
                    let w = self.params.values(*weight);
                    let g = d.item()?;
                    let mut dx = Tensor::zeros(input.channels(), 1);
                    for c in 0..input.channels() {
                        dx.set(c, 0, g * w[c]);
                        grads.of_mut(*weight)[c] += g * input.get(c, 0);
                    }
                    grads.of_mut(*bias)[0] += g;
                    accumulate(&mut adjoints[x.0], dx);
                }
                Op::Sigmoid { x } => {
                    let y = &self.nodes[idx].out;
                    let mut dx = d.clone();
                    for (g, v) in dx.data_mut().iter_mut().zip(y.data()) {
                        *g *= v * (1.0 - v);
                    }
                    accumulate(&mut adjoints[x.0], dx);
                }
                Op::WeightedBce { x, label, pos_weight, neg_weight } => {
                    let p = self.nodes[x.0].out.item()?;
                    let g = d.item()? * weighted_bce_derivative(p, *label, *pos_weight, *neg_weight);
                    accumulate(&mut adjoints[x.0], Tensor::scalar(g));
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        Some(t) => {
            for (a, b) in t.data_mut().iter_mut().zip(delta.data()) {
                *a += *b;
            }
        }
        None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd(
        params: &mut ParamStore,
        id: ParamId,
        index: usize,
        h: f64,
        f: &dyn Fn(&ParamStore) -> f64,
    ) -> f64 {
        let orig = params.get(id).values()[index];
        params.get_mut(id).values_mut()[index] = orig + h;
        let plus = f(params);
        params.get_mut(id).values_mut()[index] = orig - h;
        let minus = f(params);
        params.get_mut(id).values_mut()[index] = orig;
        (plus - minus) / (2.0 * h)
    }

    #[test]
    fn product_rule() {
        // loss = w * x with x = 3 gives d loss / d w = 3
        let mut params = ParamStore::new();
        let w = params.push("w", &[1], vec![2.0], true).unwrap();
        let b = params.push("b", &[1], vec![0.0], false).unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::scalar(3.0));
        let y = tape.linear(x, w, b).unwrap();
        assert_relative_eq!(tape.scalar_value(y).unwrap(), 6.0);
        let grads = tape.backward(y).unwrap();
        assert_relative_eq!(grads.of(w)[0], 3.0);
        assert_relative_eq!(grads.of(b)[0], 1.0);
    }

    #[test]
    fn reused_parameter_accumulates() {
        // loss = w*x + w*y gives d loss / d w = x + y
        let mut params = ParamStore::new();
        let w = params.push("w", &[1], vec![0.5], true).unwrap();
        let b = params.push("b", &[1], vec![0.0], false).unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::scalar(3.0));
        let y = tape.input(Tensor::scalar(4.0));
        let wx = tape.linear(x, w, b).unwrap();
        let wy = tape.linear(y, w, b).unwrap();
        let sum = tape.add(wx, wy).unwrap();
        let grads = tape.backward(sum).unwrap();
        assert_relative_eq!(grads.of(w)[0], 7.0);
        assert_relative_eq!(grads.of(b)[0], 2.0);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let params = ParamStore::new();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::zeros(2, 3));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn unused_parameters_get_zero_gradient() {
        let mut params = ParamStore::new();
        let w = params.push("w", &[1], vec![1.0], true).unwrap();
        let b = params.push("b", &[1], vec![0.0], false).unwrap();
        let unused = params.push("u", &[3], vec![1.0, 2.0, 3.0], true).unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::scalar(2.0));
        let y = tape.linear(x, w, b).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.of(unused), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut params = ParamStore::new();
        let w = params
            .push("w", &[2, 1, 3], vec![0.3, -0.2, 0.5, 0.1, 0.4, -0.6], true)
            .unwrap();
        let b = params.push("b", &[2], vec![0.05, -0.05], false).unwrap();
        let hw = params.push("hw", &[2], vec![0.7, -0.3], true).unwrap();
        let hb = params.push("hb", &[1], vec![0.02], false).unwrap();
        let xs = vec![0.5, -1.0, 0.25, 0.8, -0.3, 0.9, -0.7];

        let run = |params: &ParamStore| -> f64 {
            let mut tape = Tape::new(params);
            let x = tape.input(Tensor::from_row(&xs));
            let c = tape
                .conv1d(x, params.find("w").unwrap(), params.find("b").unwrap(), 2)
                .unwrap();
            let p = tape.avg_pool_full(c).unwrap();
            let l = tape
                .linear(p, params.find("hw").unwrap(), params.find("hb").unwrap())
                .unwrap();
            let s = tape.sigmoid(l);
            tape.scalar_value(s).unwrap()
        };

        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::from_row(&xs));
        let c = tape.conv1d(x, w, b, 2).unwrap();
        let p = tape.avg_pool_full(c).unwrap();
        let l = tape.linear(p, hw, hb).unwrap();
        let s = tape.sigmoid(l);
        let grads = tape.backward(s).unwrap();
        drop(tape);

        for (id, count) in [(w, 6), (b, 2), (hw, 2), (hb, 1)] {
            for i in 0..count {
                let numeric = fd(&mut params, id, i, 1e-6, &run);
                assert_relative_eq!(grads.of(id)[i], numeric, epsilon = 1e-7, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn block_style_graph_matches_finite_differences() {
        // depthwise -> layer norm -> gelu -> residual add, then pool/head/bce
        let mut params = ParamStore::new();
        let dw = params.push("dw", &[3, 3], vec![0.2, -0.1, 0.3, 0.4, 0.1, -0.2, -0.3, 0.2, 0.1], true).unwrap();
        let db = params.push("db", &[3], vec![0.01, -0.02, 0.03], false).unwrap();
        let hw = params.push("hw", &[3], vec![0.6, -0.4, 0.2], true).unwrap();
        let hb = params.push("hb", &[1], vec![0.0], false).unwrap();
        let xs: Vec<f64> = (0..15).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect();

        let run = |params: &ParamStore| -> f64 {
            let mut tape = Tape::new(params);
            let x = tape.input(Tensor::new(3, 5, xs.clone()).unwrap());
            let c = tape
                .depthwise_conv1d(x, params.find("dw").unwrap(), params.find("db").unwrap())
                .unwrap();
            let n = tape.layer_norm(c, 1e-6).unwrap();
            let g = tape.gelu(n);
            let r = tape.add(g, x).unwrap();
            let p = tape.avg_pool_full(r).unwrap();
            let l = tape
                .linear(p, params.find("hw").unwrap(), params.find("hb").unwrap())
                .unwrap();
            let s = tape.sigmoid(l);
            let loss = tape.weighted_bce(s, 1.0, 5.0, 1.0).unwrap();
            tape.scalar_value(loss).unwrap()
        };

        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::new(3, 5, xs.clone()).unwrap());
        let c = tape.depthwise_conv1d(x, dw, db).unwrap();
        let n = tape.layer_norm(c, 1e-6).unwrap();
        let g = tape.gelu(n);
        let r = tape.add(g, x).unwrap();
        let p = tape.avg_pool_full(r).unwrap();
        let l = tape.linear(p, hw, hb).unwrap();
        let s = tape.sigmoid(l);
        let loss = tape.weighted_bce(s, 1.0, 5.0, 1.0).unwrap();
        let grads = tape.backward(loss).unwrap();
        drop(tape);

        for (id, count) in [(dw, 9), (db, 3), (hw, 3), (hb, 1)] {
            for i in 0..count {
                let numeric = fd(&mut params, id, i, 1e-6, &run);
                assert_relative_eq!(grads.of(id)[i], numeric, epsilon = 1e-7, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn affine_layer_norm_gradients_match_finite_differences() {
        let mut params = ParamStore::new();
        let g = params.push("g", &[3], vec![1.2, 0.8, -0.5], true).unwrap();
        let s = params.push("s", &[3], vec![0.1, -0.2, 0.3], false).unwrap();
        let hw = params.push("hw", &[3], vec![0.4, 0.3, -0.6], true).unwrap();
        let hb = params.push("hb", &[1], vec![0.05], false).unwrap();
        let xs: Vec<f64> = (0..12).map(|i| ((i * 5 % 13) as f64 - 6.0) / 3.0).collect();

        let run = |params: &ParamStore| -> f64 {
            let mut tape = Tape::new(params);
            let x = tape.input(Tensor::new(3, 4, xs.clone()).unwrap());
            let n = tape
                .layer_norm_affine(x, params.find("g").unwrap(), params.find("s").unwrap(), 1e-6)
                .unwrap();
            let p = tape.avg_pool_full(n).unwrap();
            let l = tape
                .linear(p, params.find("hw").unwrap(), params.find("hb").unwrap())
                .unwrap();
            let sg = tape.sigmoid(l);
            tape.scalar_value(sg).unwrap()
        };

        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::new(3, 4, xs.clone()).unwrap());
        let n = tape.layer_norm_affine(x, g, s, 1e-6).unwrap();
        let p = tape.avg_pool_full(n).unwrap();
        let l = tape.linear(p, hw, hb).unwrap();
        let sg = tape.sigmoid(l);
        let grads = tape.backward(sg).unwrap();
        drop(tape);

        for (id, count) in [(g, 3), (s, 3), (hw, 3), (hb, 1)] {
            for i in 0..count {
                let numeric = fd(&mut params, id, i, 1e-6, &run);
                assert_relative_eq!(grads.of(id)[i], numeric, epsilon = 1e-7, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn bce_values_match_reference() {
        // -5 ln 0.9 for a positive at p = 0.9 with weight 5
        assert_relative_eq!(weighted_bce_value(0.9, 1.0, 5.0, 1.0), 0.5268025782891315, epsilon = 1e-12);
        // -ln 0.5 for either label at p = 0.5, unit weights
        assert_relative_eq!(weighted_bce_value(0.5, 0.0, 5.0, 1.0), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(weighted_bce_value(0.5, 1.0, 1.0, 1.0), std::f64::consts::LN_2, epsilon = 1e-12);
        // clamp keeps extreme probabilities finite
        assert!(weighted_bce_value(0.0, 1.0, 5.0, 1.0).is_finite());
        assert!(weighted_bce_value(1.0, 0.0, 5.0, 1.0).is_finite());
        assert_relative_eq!(weighted_bce_value(0.0, 1.0, 1.0, 1.0), -(PROB_FLOOR.ln()), epsilon = 1e-9);
    }

    #[test]
    fn gradient_norm_and_scaling() {
        let mut params = ParamStore::new();
        params.push("a", &[2], vec![0.0; 2], true).unwrap();
        let mut g = Gradients::zeros_like(&params);
        g.arrays = vec![vec![3.0, 4.0]];
        assert_relative_eq!(g.global_norm(), 5.0);
        g.scale(0.5);
        assert_relative_eq!(g.global_norm(), 2.5);
        let mut h = g.clone();
        h.accumulate(&g).unwrap();
        assert_relative_eq!(h.global_norm(), 5.0);
    }

    #[test]
    fn taped_macs_are_counted() {
        let mut params = ParamStore::new();
        let w = params.push("w", &[2, 1, 3], vec![0.1; 6], true).unwrap();
        let b = params.push("b", &[2], vec![0.0; 2], false).unwrap();
        let mut tape = Tape::new(&params);
        let x = tape.input(Tensor::from_row(&[0.0; 7]));
        tape.conv1d(x, w, b, 2).unwrap();
        // three output positions, two output channels, kernel 3, one input channel
        assert_eq!(tape.macs(), 2 * 3 * 3);
    }
}
