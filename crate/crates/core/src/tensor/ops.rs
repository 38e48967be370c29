//! Forward implementations of the network's primitive operations.
//!
//! Multiply-accumulate counts are tallied from the loop bounds that actually
//! execute, so instrumented runs double-check the closed-form cost model.
//! Only convolutions and the linear head count towards MACs.

use crate::{Error, Result};

use super::Tensor;

/// Running multiply-accumulate tally for one forward pass.
#[derive(Debug, Default, Clone, Copy)]
pub struct MacCounter {
    macs: u64,
}

impl MacCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, n: u64) {
        self.macs += n;
    }

    pub fn total(&self) -> u64 {
        self.macs
    }
}

/// Valid cross-correlation with stride: `out[o][t] = b[o] + sum_{i,j} w[o][i][j] * x[i][t*s + j]`.
/// Weight layout is `[out_ch][in_ch][kernel]`, flattened.
pub fn conv1d(
    input: &Tensor,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
    kernel: usize,
    stride: usize,
    counter: &mut MacCounter,
) -> Result<Tensor> {
    let in_ch = input.channels();
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidArgument("conv1d kernel and stride must be positive".into()));
    }
    if weight.len() != out_ch * in_ch * kernel {
        return Err(Error::Shape(format!(
            "conv1d weight has {} values, expected {}x{}x{}",
            weight.len(),
            out_ch,
            in_ch,
            kernel
        )));
    }
    if bias.len() != out_ch {
        return Err(Error::Shape(format!(
            "conv1d bias has {} values, expected {out_ch}",
            bias.len()
        )));
    }
    if input.len() < kernel {
        return Err(Error::Shape(format!(
            "conv1d input length {} shorter than kernel {kernel}",
            input.len()
        )));
    }
    let out_len = (input.len() - kernel) / stride + 1;
    let mut out = Tensor::zeros(out_ch, out_len);
    let mut positions: u64 = 0;
    for o in 0..out_ch {
        for t in 0..out_len {
            let start = t * stride;
            let mut acc = bias[o];
            for i in 0..in_ch {
                let row = input.row(i);
                let w = &weight[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
                for j in 0..kernel {
                    acc += w[j] * row[start + j];
                }
            }
            out.set(o, t, acc);
            positions += 1;
        }
    }
    counter.add(positions * (in_ch * kernel) as u64);
    Ok(out)
}

/// Length-preserving depthwise convolution with symmetric zero padding.
/// Weight layout is `[channels][kernel]`; the kernel must be odd.
pub fn depthwise_conv1d(
    input: &Tensor,
    weight: &[f64],
    bias: &[f64],
    kernel: usize,
    counter: &mut MacCounter,
) -> Result<Tensor> {
    let channels = input.channels();
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "depthwise kernel must be odd and positive, got {kernel}"
        )));
    }
    if weight.len() != channels * kernel {
        return Err(Error::Shape(format!(
            "depthwise weight has {} values, expected {channels}x{kernel}",
            weight.len()
        )));
    }
    if bias.len() != channels {
        return Err(Error::Shape(format!(
            "depthwise bias has {} values, expected {channels}",
            bias.len()
        )));
    }
    let len = input.len();
    let pad = (kernel - 1) / 2;
    let mut out = Tensor::zeros(channels, len);
    let mut positions: u64 = 0;
    for c in 0..channels {
        let row = input.row(c);
        let w = &weight[c * kernel..(c + 1) * kernel];
        for t in 0..len {
            let mut acc = bias[c];
            for j in 0..kernel {
                let u = t + j;
                // index into the zero-padded row; out-of-range taps read 0
                let x = if u >= pad && u - pad < len { row[u - pad] } else { 0.0 };
                acc += w[j] * x;
            }
            out.set(c, t, acc);
            positions += 1;
        }
    }
    counter.add(positions * kernel as u64);
    Ok(out)
}

/// Layer normalization across the channel dimension at each time position.
/// Gain and shift are optional; the model family runs without them.
pub fn layer_norm(
    input: &Tensor,
    gain: Option<&[f64]>,
    shift: Option<&[f64]>,
    epsilon: f64,
) -> Result<Tensor> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("layer_norm epsilon must be positive".into()));
    }
    let channels = input.channels();
    for (what, arr) in [("gain", gain), ("shift", shift)] {
        if let Some(a) = arr {
            if a.len() != channels {
                return Err(Error::Shape(format!(
                    "layer_norm {what} has {} values, expected {channels}",
                    a.len()
                )));
            }
        }
    }
    let len = input.len();
    let mut out = Tensor::zeros(channels, len);
    for t in 0..len {
        let mut mean = 0.0;
        for c in 0..channels {
            mean += input.get(c, t);
        }
        mean /= channels as f64;
        let mut var = 0.0;
        for c in 0..channels {
            let d = input.get(c, t) - mean;
            var += d * d;
        }
        var /= channels as f64;
        let inv = 1.0 / (var + epsilon).sqrt();
        for c in 0..channels {
            let mut y = (input.get(c, t) - mean) * inv;
            if let Some(g) = gain {
                y *= g[c];
            }
            if let Some(s) = shift {
                y += s[c];
            }
            out.set(c, t, y);
        }
    }
    Ok(out)
}

/// Exact GELU: `x * Phi(x)` with the Gaussian CDF written via erf.
pub fn gelu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = gelu_scalar(*v);
    }
    out
}

#[inline]
pub(crate) fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

#[inline]
pub(crate) fn gelu_derivative(x: f64) -> f64 {
    let phi = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2)) + x * phi
}

/// Mean over the full time axis, per channel; output is `channels x 1`.
pub fn avg_pool_full(input: &Tensor) -> Result<Tensor> {
    if input.is_empty() {
        return Err(Error::Shape("avg_pool_full on zero-length input".into()));
    }
    let channels = input.channels();
    let len = input.len() as f64;
    let mut out = Tensor::zeros(channels, 1);
    for c in 0..channels {
        let sum: f64 = input.row(c).iter().sum();
        out.set(c, 0, sum / len);
    }
    Ok(out)
}

/// Dot product head: maps a `channels x 1` tensor to a 1x1 logit.
pub fn linear(
    input: &Tensor,
    weight: &[f64],
    bias: &[f64],
    counter: &mut MacCounter,
) -> Result<Tensor> {
    if input.len() != 1 {
        return Err(Error::Shape(format!(
            "linear expects a pooled channels x 1 input, got length {}",
            input.len()
        )));
    }
    let channels = input.channels();
    if weight.len() != channels {
        return Err(Error::Shape(format!(
            "linear weight has {} values, expected {channels}",
            weight.len()
        )));
    }
    if bias.len() != 1 {
        return Err(Error::Shape(format!("linear bias has {} values, expected 1", bias.len())));
    }
    let mut acc = bias[0];
    let mut mults: u64 = 0;
    for (c, w) in weight.iter().enumerate() {
        acc += w * input.get(c, 0);
        mults += 1;
    }
    counter.add(mults);
    Ok(Tensor::scalar(acc))
}

/// Elementwise logistic function.
pub fn sigmoid(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    out
}

/// Elementwise sum of two same-shape tensors (the residual connection).
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "add shapes differ: {}x{} vs {}x{}",
            a.channels(),
            a.len(),
            b.channels(),
            b.len()
        )));
    }
    let mut out = a.clone();
    for (v, w) in out.data_mut().iter_mut().zip(b.data()) {
        *v += *w;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn conv1d_matches_hand_computation() {
        // 1 channel, length 4, kernel 2, stride 2: two output positions
        let x = Tensor::new(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut counter = MacCounter::new();
        let y = conv1d(&x, &[1.0, -1.0], &[0.5], 1, 2, 2, &mut counter).unwrap();
        assert_eq!(y.channels(), 1);
        assert_eq!(y.len(), 2);
        assert_relative_eq!(y.get(0, 0), 1.0 - 2.0 + 0.5);
        assert_relative_eq!(y.get(0, 1), 3.0 - 4.0 + 0.5);
        assert_eq!(counter.total(), 4);
    }

    #[test]
    fn conv1d_stem_shape() {
        // kernel 4, stride 4 over length 1024 gives length 256
        let x = Tensor::zeros(1, 1024);
        let mut counter = MacCounter::new();
        let y = conv1d(&x, &vec![0.0; 6 * 4], &vec![0.0; 6], 6, 4, 4, &mut counter).unwrap();
        assert_eq!((y.channels(), y.len()), (6, 256));
        assert_eq!(counter.total(), 6 * 256 * 4);
    }

    #[test]
    fn conv1d_rejects_short_input() {
        let x = Tensor::new(1, 3, vec![0.0; 3]).unwrap();
        let err = conv1d(&x, &[0.0; 4], &[0.0], 1, 4, 4, &mut MacCounter::new());
        assert!(err.is_err());
    }

    #[test]
    fn depthwise_preserves_length_and_pads_with_zeros() {
        let x = Tensor::new(1, 5, vec![1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let w = vec![1.0, 1.0, 1.0];
        let mut counter = MacCounter::new();
        let y = depthwise_conv1d(&x, &w, &[0.0], 3, &mut counter).unwrap();
        assert_eq!(y.len(), 5);
        // interior positions see all three taps, edges lose one to padding
        assert_relative_eq!(y.get(0, 0), 2.0);
        assert_relative_eq!(y.get(0, 2), 3.0);
        assert_relative_eq!(y.get(0, 4), 2.0);
        assert_eq!(counter.total(), 15);
    }

    #[test]
    fn depthwise_rejects_even_kernel() {
        let x = Tensor::zeros(1, 5);
        assert!(depthwise_conv1d(&x, &[0.0; 4], &[0.0], 4, &mut MacCounter::new()).is_err());
    }

    #[test]
    fn layer_norm_zero_mean_unit_scale() {
        let x = Tensor::new(4, 2, vec![1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0]).unwrap();
        let y = layer_norm(&x, None, None, 1e-6).unwrap();
        for t in 0..2 {
            let mut mean = 0.0;
            let mut var = 0.0;
            for c in 0..4 {
                mean += y.get(c, t);
            }
            mean /= 4.0;
            for c in 0..4 {
                var += (y.get(c, t) - mean).powi(2);
            }
            var /= 4.0;
            assert_relative_eq!(mean, 0.0, epsilon = 1e-12);
            assert_relative_eq!(var, 1.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn layer_norm_constant_column_stays_finite() {
        let x = Tensor::new(3, 1, vec![5.0, 5.0, 5.0]).unwrap();
        let y = layer_norm(&x, None, None, 1e-6).unwrap();
        for c in 0..3 {
            assert!(y.get(c, 0).is_finite());
            assert_relative_eq!(y.get(c, 0), 0.0);
        }
    }

    #[test]
    fn layer_norm_two_channel_reference() {
        // channels [1, 3] at one position normalize to [-1, 1] (population variance)
        let x = Tensor::new(2, 1, vec![1.0, 3.0]).unwrap();
        let y = layer_norm(&x, None, None, 1e-12).unwrap();
        assert_relative_eq!(y.get(0, 0), -1.0, epsilon = 1e-6);
        assert_relative_eq!(y.get(1, 0), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn layer_norm_affine_applies_gain_then_shift() {
        let x = Tensor::new(2, 1, vec![1.0, 3.0]).unwrap();
        let y = layer_norm(&x, Some(&[2.0, 0.5]), Some(&[10.0, -10.0]), 1e-12).unwrap();
        assert_relative_eq!(y.get(0, 0), 8.0, epsilon = 1e-5);
        assert_relative_eq!(y.get(1, 0), -9.5, epsilon = 1e-5);
        assert!(layer_norm(&x, Some(&[1.0]), None, 1e-6).is_err());
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = Tensor::new(2, 5, (0..10).map(|v| v as f64).collect()).unwrap();
        // k=1 identity: each output channel copies its input channel
        let w = vec![1.0, 0.0, 0.0, 1.0];
        let y = conv1d(&x, &w, &[0.0, 0.0], 2, 1, 1, &mut MacCounter::new()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv1d_is_linear_in_input() {
        let w: Vec<f64> = (0..12).map(|i| ((i * 5 % 7) as f64 - 3.0) / 3.0).collect();
        let xs: Vec<f64> = (0..16).map(|i| ((i * 3 % 5) as f64 - 2.0) / 2.0).collect();
        let ys: Vec<f64> = (0..16).map(|i| ((i * 7 % 9) as f64 - 4.0) / 4.0).collect();
        let (a, b) = (0.7, -1.3);
        let mixed: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
        let mut c = MacCounter::new();
        let run = |data: &[f64], c: &mut MacCounter| {
            conv1d(&Tensor::new(2, 8, data.to_vec()).unwrap(), &w, &[0.0, 0.0], 2, 3, 1, c).unwrap()
        };
        let lhs = run(&mixed, &mut c);
        let fx = run(&xs, &mut c);
        let fy = run(&ys, &mut c);
        for t in 0..lhs.len() {
            for ch in 0..2 {
                assert_relative_eq!(
                    lhs.get(ch, t),
                    a * fx.get(ch, t) + b * fy.get(ch, t),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn depthwise_identity_and_averaging_kernels() {
        // centered impulse kernel reproduces the input
        let x = Tensor::new(1, 6, vec![2.0, -1.0, 4.0, 0.5, 3.0, -2.0]).unwrap();
        let y = depthwise_conv1d(&x, &[0.0, 1.0, 0.0], &[0.0], 3, &mut MacCounter::new()).unwrap();
        assert_eq!(y, x);
        // kernel summing to one keeps a constant input constant in the interior
        let c = Tensor::new(1, 8, vec![5.0; 8]).unwrap();
        let z = depthwise_conv1d(&c, &[0.25, 0.5, 0.25], &[0.0], 3, &mut MacCounter::new()).unwrap();
        for t in 1..7 {
            assert_relative_eq!(z.get(0, t), 5.0);
        }
    }

    #[test]
    fn gelu_asymptotes() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(6.0) - 6.0).abs() < 1e-3);
        assert!(gelu_scalar(-6.0).abs() < 1e-3);
    }

    #[test]
    fn sigmoid_symmetry_and_reference() {
        let y = sigmoid(&Tensor::new(1, 2, vec![3.7, -3.7]).unwrap());
        assert_relative_eq!(y.get(0, 0), 1.0 - y.get(0, 1), epsilon = 1e-15);
        let z = sigmoid(&Tensor::scalar(2.0));
        assert_relative_eq!(z.item().unwrap(), 0.8807970779778823, epsilon = 1e-12);
    }

    #[test]
    fn forward_ops_stay_finite_on_extreme_input() {
        let x = Tensor::new(2, 2, vec![1e6, -1e6, 3e5, -7e5]).unwrap();
        for v in layer_norm(&x, None, None, 1e-6).unwrap().data() {
            assert!(v.is_finite());
        }
        for v in gelu(&x).data() {
            assert!(v.is_finite());
        }
        for v in sigmoid(&x).data() {
            assert!(v.is_finite());
        }
    }

    #[test]
    fn gelu_reference_values() {
        // larger magnitudes approach identity / zero; exact values from the
        // erf form evaluated independently
        assert_relative_eq!(gelu_scalar(0.0), 0.0);
        assert_relative_eq!(gelu_scalar(1.0), 0.8413447460685429, epsilon = 1e-12);
        assert_relative_eq!(gelu_scalar(-1.0), -0.15865525393145707, epsilon = 1e-12);
        assert_relative_eq!(gelu_scalar(3.0), 2.9959503059051097, epsilon = 1e-12);
        assert_relative_eq!(gelu_scalar(-3.0), -0.0040496940948903, epsilon = 1e-12);
    }

    #[test]
    fn avg_pool_and_linear() {
        let x = Tensor::new(2, 4, vec![1.0, 2.0, 3.0, 4.0, 10.0, 10.0, 10.0, 10.0]).unwrap();
        let pooled = avg_pool_full(&x).unwrap();
        assert_relative_eq!(pooled.get(0, 0), 2.5);
        assert_relative_eq!(pooled.get(1, 0), 10.0);
        let mut counter = MacCounter::new();
        let logit = linear(&pooled, &[2.0, -1.0], &[0.25], &mut counter).unwrap();
        assert_relative_eq!(logit.item().unwrap(), 2.0 * 2.5 - 10.0 + 0.25);
        assert_eq!(counter.total(), 2);
    }

    #[test]
    fn avg_pool_rejects_empty() {
        let x = Tensor::new(2, 0, vec![]).unwrap();
        assert!(avg_pool_full(&x).is_err());
    }

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        let y = sigmoid(&Tensor::new(1, 3, vec![0.0, 40.0, -40.0]).unwrap());
        assert_relative_eq!(y.get(0, 0), 0.5);
        assert!(y.get(0, 1) > 1.0 - 1e-12);
        assert!(y.get(0, 2) < 1e-12);
    }

    #[test]
    fn add_requires_same_shape() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(3, 2);
        assert!(add(&a, &b).is_err());
        let c = add(&a, &Tensor::zeros(2, 3)).unwrap();
        assert!(c.data().iter().all(|v| *v == 0.0));
    }
}
