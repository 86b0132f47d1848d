use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{Scalar, Tensor};
use super::NnError;

/// A 3x3 valid-padding convolution layer (cross-correlation convention).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `(out, in, 3, 3)` row-major.
    pub weights: Vec<T>,
    /// One bias per output channel.
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![T::ZERO; out_channels * in_channels * 9],
            bias: vec![T::ZERO; out_channels],
        }
    }

    pub fn weight_count(&self) -> usize {
        self.out_channels * self.in_channels * 9
    }
}

/// Gradients produced by [`conv2d_backward`].
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

fn check_conv_input<T: Scalar>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<(), NnError> {
    if x.channels() != layer.in_channels {
        return Err(NnError::ChannelMismatch { a: x.channels(), b: layer.in_channels });
    }
    if x.height() < 3 || x.width() < 3 {
        return Err(NnError::SpatialTooSmall { h: x.height(), w: x.width(), need: 3 });
    }
    Ok(())
}

/// Unfolds 3x3 windows into a `(C*9) x (N*OH*OW)` row-major matrix.
fn im2col<T: Scalar>(x: &Tensor<T>) -> Vec<T> {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h - 2, w - 2);
    let cols = n * oh * ow;
    let mut m = vec![T::ZERO; c * 9 * cols];
    let data = x.data();
    for ci in 0..c {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = (ci * 3 + ky) * 3 + kx;
                let out_row = &mut m[row * cols..(row + 1) * cols];
                let mut j = 0;
                for ni in 0..n {
                    let plane = ((ni * c) + ci) * h * w;
                    for oy in 0..oh {
                        let src = plane + (oy + ky) * w + kx;
                        out_row[j..j + ow].copy_from_slice(&data[src..src + ow]);
                        j += ow;
                    }
                }
            }
        }
    }
    m
}

/// Valid 3x3 convolution; output spatial dims shrink by 2 on each axis.
pub fn conv2d<T: Scalar>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>, NnError> {
    check_conv_input(x, layer)?;
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h - 2, w - 2);
    let (k, cols) = (layer.out_channels, n * oh * ow);
    let b = im2col(x);
    // gemm_out[k][col] = sum_r weights[k][r] * b[r][col]
    let mut gemm_out = vec![T::ZERO; k * cols];
    T::gemm_acc(k, c * 9, cols, &layer.weights, (c * 9) as isize, 1, &b, cols as isize, 1, T::ZERO, &mut gemm_out);
    // Scatter (K, N*OH*OW) -> (N, K, OH, OW) and add bias.
    let mut out = Tensor::zeros([n, k, oh, ow]);
    let plane = oh * ow;
    {
        let out_data = out.data_mut();
        for ki in 0..k {
            let bias = layer.bias[ki];
            for ni in 0..n {
                let src = &gemm_out[ki * cols + ni * plane..ki * cols + (ni + 1) * plane];
                let dst = &mut out_data[(ni * k + ki) * plane..(ni * k + ki + 1) * plane];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = s + bias;
                }
            }
        }
    }
    out.debug_assert_finite();
    Ok(out)
}

/// Backward pass of [`conv2d`]: gradients w.r.t. input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>, NnError> {
    check_conv_input(x, layer)?;
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h - 2, w - 2);
    let k = layer.out_channels;
    let expected = [n, k, oh, ow];
    if grad_out.shape() != expected {
        return Err(NnError::ShapeMismatch { expected, got: grad_out.shape() });
    }
    let cols = n * oh * ow;
    let plane = oh * ow;

    // Gather dOut into (K, N*OH*OW).
    let mut dout = vec![T::ZERO; k * cols];
    for ki in 0..k {
        for ni in 0..n {
            let src = &grad_out.data()[(ni * k + ki) * plane..(ni * k + ki + 1) * plane];
            dout[ki * cols + ni * plane..ki * cols + (ni + 1) * plane].copy_from_slice(src);
        }
    }

    // dW = dOut (K x M) * B^T (M x C9)
    let b = im2col(x);
    let mut grad_w = vec![T::ZERO; k * c * 9];
    T::gemm_acc(k, cols, c * 9, &dout, cols as isize, 1, &b, 1, cols as isize, T::ZERO, &mut grad_w);

    // dBias = row sums of dOut.
    let mut grad_b = vec![T::ZERO; k];
    for ki in 0..k {
        grad_b[ki] = dout[ki * cols..(ki + 1) * cols].iter().copied().sum();
    }

    // dB(col matrix) = W^T (C9 x K) * dOut (K x M), then fold back (col2im).
    let mut dcol = vec![T::ZERO; c * 9 * cols];
    T::gemm_acc(c * 9, k, cols, &layer.weights, 1, (c * 9) as isize, &dout, cols as isize, 1, T::ZERO, &mut dcol);
    let mut grad_x = Tensor::zeros([n, c, h, w]);
    {
        let gx = grad_x.data_mut();
        for ci in 0..c {
            for ky in 0..3 {
                for kx in 0..3 {
                    let row = (ci * 3 + ky) * 3 + kx;
                    let src_row = &dcol[row * cols..(row + 1) * cols];
                    let mut j = 0;
                    for ni in 0..n {
                        let plane_off = ((ni * c) + ci) * h * w;
                        for oy in 0..oh {
                            let dst = plane_off + (oy + ky) * w + kx;
                            let d = &mut gx[dst..dst + ow];
                            let s = &src_row[j..j + ow];
                            for (dv, &sv) in d.iter_mut().zip(s) {
                                *dv += sv;
                            }
                            j += ow;
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads { input: grad_x, weights: grad_w, bias: grad_b })
}

/// Stride-1 valid 3x3 max pooling. Returns the pooled tensor and the flat
/// input index of each window maximum (first maximum in row-major order on
/// ties), which routes the gradient in the backward pass.
pub fn max_pool2d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>), NnError> {
    let [n, c, h, w] = x.shape();
    if h < 3 || w < 3 {
        return Err(NnError::SpatialTooSmall { h, w, need: 3 });
    }
    let (oh, ow) = (h - 2, w - 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = vec![0u32; n * c * oh * ow];
    let data = x.data();
    let mut oi = 0;
    for ni in 0..n {
        for ci in 0..c {
            let plane = (ni * c + ci) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = data[plane + oy * w + ox];
                    let mut best_at = plane + oy * w + ox;
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let at = plane + (oy + ky) * w + (ox + kx);
                            if data[at] > best {
                                best = data[at];
                                best_at = at;
                            }
                        }
                    }
                    out.data_mut()[oi] = best;
                    argmax[oi] = best_at as u32;
                    oi += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each output gradient to its window argmax.
pub fn max_pool2d_backward<T: Scalar>(
    input_shape: [usize; 4],
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    assert_eq!(argmax.len(), grad_out.numel());
    let mut grad_x = Tensor::zeros(input_shape);
    let gx = grad_x.data_mut();
    for (i, &a) in argmax.iter().enumerate() {
        gx[a as usize] += grad_out.data()[i];
    }
    grad_x
}

/// Elementwise `max(0, x)`.
pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.maxs(T::ZERO))
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    assert_eq!(x.shape(), grad_out.shape());
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Elementwise logistic function; output strictly inside (0, 1).
pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let out = x.map(|v| {
        if v >= T::ZERO {
            T::ONE / (T::ONE + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::ONE + e)
        }
    });
    out.debug_assert_finite();
    out
}

/// Backward from the cached *output* of [`sigmoid`].
pub fn sigmoid_backward<T: Scalar>(out: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    assert_eq!(out.shape(), grad_out.shape());
    let data = out
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&o, &g)| g * o * (T::ONE - o))
        .collect();
    Tensor::from_vec(out.shape(), data)
}

fn crop_margins<T: Scalar>(x: &Tensor<T>, skip: &Tensor<T>) -> Result<(usize, usize), NnError> {
    if x.channels() != skip.channels() {
        return Err(NnError::ChannelMismatch { a: x.channels(), b: skip.channels() });
    }
    let (h, w) = (x.height(), x.width());
    let (sh, sw) = (skip.height(), skip.width());
    if sh < h || sw < w || (sh - h) % 2 != 0 || (sw - w) % 2 != 0 || x.batch() != skip.batch() {
        return Err(NnError::SkipDims { skip_h: sh, skip_w: sw, h, w });
    }
    Ok(((sh - h) / 2, (sw - w) / 2))
}

/// Residual addition: `skip` is center-cropped to `x`'s spatial dims, then
/// added elementwise. Requires equal channel counts and matching parity.
pub fn residual_add<T: Scalar>(x: &Tensor<T>, skip: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    let (my, mx) = crop_margins(x, skip)?;
    let [n, c, h, w] = x.shape();
    let mut out = x.clone();
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let i = out.idx(ni, ci, y, xx);
                    out.data_mut()[i] += skip.at(ni, ci, y + my, xx + mx);
                }
            }
        }
    }
    Ok(out)
}

/// Backward of [`residual_add`]: gradient w.r.t. `skip` (the gradient w.r.t.
/// `x` is `grad_out` unchanged).
pub fn residual_add_backward<T: Scalar>(
    skip_shape: [usize; 4],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let [n, c, h, w] = grad_out.shape();
    let my = (skip_shape[2] - h) / 2;
    let mx = (skip_shape[3] - w) / 2;
    let mut grad_skip = Tensor::zeros(skip_shape);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let i = grad_skip.idx(ni, ci, y + my, xx + mx);
                    grad_skip.data_mut()[i] += grad_out.at(ni, ci, y, xx);
                }
            }
        }
    }
    grad_skip
}

#[cfg(test)]
mod tests {
    use super::*;
    
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let data = (0..shape.iter().product::<usize>())
            .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
            .collect();
        Tensor::from_vec(shape, data)
    }

    /// Direct six-loop convolution used as the independent oracle.
    fn conv_oracle(x: &Tensor<f64>, layer: &ConvLayer<f64>) -> Tensor<f64> {
        let [n, c, h, w] = x.shape();
        let (oh, ow) = (h - 2, w - 2);
        let k = layer.out_channels;
        let mut out = Tensor::zeros([n, k, oh, ow]);
        for ni in 0..n {
            for ki in 0..k {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = layer.bias[ki];
                        for ci in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let wv = layer.weights[((ki * c + ci) * 3 + ky) * 3 + kx];
                                    acc += wv * x.at(ni, ci, oy + ky, ox + kx);
                                }
                            }
                        }
                        let i = out.idx(ni, ki, oy, ox);
                        out.data_mut()[i] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_identity_kernel_extracts_center() {
        let x = Tensor::from_vec([1, 1, 3, 3], (1..=9).map(f64::from).collect());
        let mut layer = ConvLayer::zeros(1, 1);
        layer.weights[4] = 1.0; // center tap
        let out = conv2d(&x, &layer).unwrap();
        assert_eq!(out.shape(), [1, 1, 1, 1]);
        assert_eq!(out.data()[0], 5.0);
    }

    #[test]
    fn conv_all_ones_sums_window() {
        let x = Tensor::from_vec([1, 1, 3, 3], vec![1.0f64; 9]);
        let mut layer = ConvLayer::zeros(1, 1);
        layer.weights.iter_mut().for_each(|w| *w = 1.0);
        let out = conv2d(&x, &layer).unwrap();
        assert_eq!(out.data()[0], 9.0);
    }

    #[test]
    fn conv_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_tensor([1, 2, 8, 8], &mut rng);
        let mut layer = ConvLayer::zeros(2, 3);
        for w in layer.weights.iter_mut() {
            *w = rng.gen::<f64>() - 0.5;
        }
        for b in layer.bias.iter_mut() {
            *b = rng.gen::<f64>() - 0.5;
        }
        let got = conv2d(&x, &layer).unwrap();
        let want = conv_oracle(&x, &layer);
        let max_diff = got
            .data()
            .iter()
            .zip(want.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff < 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn conv_is_linear_in_input_with_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_tensor([2, 1, 6, 6], &mut rng);
        let mut layer = ConvLayer::zeros(1, 2);
        for w in layer.weights.iter_mut() {
            *w = rng.gen::<f64>() - 0.5;
        }
        let doubled = Tensor::from_vec(x.shape(), x.data().iter().map(|v| v * 2.0).collect());
        let a = conv2d(&x, &layer).unwrap();
        let b = conv2d(&doubled, &layer).unwrap();
        for (va, vb) in a.data().iter().zip(b.data()) {
            assert!((vb - 2.0 * va).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::<f64>::zeros([1, 2, 5, 5]);
        let layer = ConvLayer::zeros(3, 1);
        assert_eq!(conv2d(&x, &layer).unwrap_err(), NnError::ChannelMismatch { a: 2, b: 3 });
    }

    #[test]
    fn pool_constant_input() {
        let x = Tensor::from_vec([1, 1, 5, 5], vec![0.7f64; 25]);
        let (out, _) = max_pool2d(&x).unwrap();
        assert_eq!(out.shape(), [1, 1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn pool_hot_pixel_spreads_to_neighborhood() {
        let mut x = Tensor::<f64>::zeros([1, 1, 5, 5]);
        let i = x.idx(0, 0, 2, 2);
        x.data_mut()[i] = 1.0;
        let (out, _) = max_pool2d(&x).unwrap();
        for oy in 0..3 {
            for ox in 0..3 {
                // Every 3x3 window of a 5x5 input contains (2,2).
                assert_eq!(out.at(0, 0, oy, ox), 1.0);
            }
        }
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        // Distinct values: gradient must land exactly on each window max.
        let x = Tensor::from_vec([1, 1, 4, 4], (0..16).map(f64::from).collect());
        let (out, argmax) = max_pool2d(&x).unwrap();
        assert_eq!(out.shape(), [1, 1, 2, 2]);
        let grad_out = Tensor::from_vec([1, 1, 2, 2], vec![1.0; 4]);
        let gx = max_pool2d_backward(x.shape(), &argmax, &grad_out);
        // Window maxima are at flat indices 10, 11, 14, 15.
        let mut want = vec![0.0; 16];
        want[10] = 1.0;
        want[11] = 1.0;
        want[14] = 1.0;
        want[15] = 1.0;
        assert_eq!(gx.data(), &want[..]);
    }

    #[test]
    fn pool_tie_takes_first_row_major() {
        let x = Tensor::from_vec([1, 1, 3, 3], vec![1.0f64; 9]);
        let (_, argmax) = max_pool2d(&x).unwrap();
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn relu_and_sigmoid_pointwise_values() {
        let x = Tensor::from_vec([1, 1, 1, 3], vec![-1.0f64, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let s = sigmoid(&Tensor::from_vec([1, 1, 1, 1], vec![0.0f64]));
        assert!((s.data()[0] - 0.5).abs() < 1e-15);
        // Extreme logits stay strictly inside (0, 1) and finite.
        let s = sigmoid(&Tensor::from_vec([1, 1, 1, 2], vec![-500.0f64, 500.0]));
        assert!(s.data()[0] >= 0.0 && s.data()[1] <= 1.0);
        assert!(s.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn residual_equal_shapes_is_plain_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor([1, 2, 4, 4], &mut rng);
        let skip = random_tensor([1, 2, 4, 4], &mut rng);
        let out = residual_add(&x, &skip).unwrap();
        for i in 0..out.numel() {
            assert!((out.data()[i] - (x.data()[i] + skip.data()[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn residual_crops_larger_skip() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![0.0f64; 4]);
        let skip = Tensor::from_vec([1, 1, 6, 6], (0..36).map(f64::from).collect());
        let out = residual_add(&x, &skip).unwrap();
        // Border of 2 cropped away: rows 2..4, cols 2..4.
        assert_eq!(out.data(), &[14.0, 15.0, 20.0, 21.0]);
    }

    #[test]
    fn residual_zero_skip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_tensor([1, 3, 5, 5], &mut rng);
        let out = residual_add(&x, &Tensor::zeros([1, 3, 5, 5])).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn residual_rejects_mismatches() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]);
        assert!(matches!(
            residual_add(&x, &Tensor::zeros([1, 3, 4, 4])).unwrap_err(),
            NnError::ChannelMismatch { .. }
        ));
        assert!(matches!(
            residual_add(&x, &Tensor::zeros([1, 2, 5, 5])).unwrap_err(),
            NnError::SkipDims { .. }
        ));
        assert!(matches!(
            residual_add(&x, &Tensor::zeros([1, 2, 2, 2])).unwrap_err(),
            NnError::SkipDims { .. }
        ));
    }

    /// Finite-difference check for conv/pool/activation backward passes on a
    /// tiny composite function.
    #[test]
    fn backward_passes_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x0 = random_tensor([2, 1, 6, 6], &mut rng);
        let mut layer = ConvLayer::zeros(1, 2);
        for w in layer.weights.iter_mut() {
            *w = rng.gen::<f64>() * 0.5 - 0.25;
        }
        for b in layer.bias.iter_mut() {
            *b = rng.gen::<f64>() * 0.1;
        }

        // f(x, W) = sum(sigmoid(pool(relu(conv(x)))))
        let forward = |x: &Tensor<f64>, layer: &ConvLayer<f64>| -> f64 {
            let c = conv2d(x, layer).unwrap();
            let r = relu(&c);
            let (p, _) = max_pool2d(&r).unwrap();
            let s = sigmoid(&p);
            s.data().iter().sum()
        };

        // Analytic gradients.
        let c = conv2d(&x0, &layer).unwrap();
        let r = relu(&c);
        let (p, argmax) = max_pool2d(&r).unwrap();
        let s = sigmoid(&p);
        let gs = Tensor::from_vec(s.shape(), vec![1.0; s.numel()]);
        let gp = sigmoid_backward(&s, &gs);
        let gr = max_pool2d_backward(r.shape(), &argmax, &gp);
        let gc = relu_backward(&c, &gr);
        let grads = conv2d_backward(&x0, &layer, &gc).unwrap();

        let eps = 1e-6;
        // Sample a few input coordinates.
        for &i in &[0usize, 7, 20, 35, 50] {
            let mut xp = x0.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x0.clone();
            xm.data_mut()[i] -= eps;
            let num = (forward(&xp, &layer) - forward(&xm, &layer)) / (2.0 * eps);
            let ana = grads.input.data()[i];
            assert!((num - ana).abs() < 1e-6, "input grad {i}: {num} vs {ana}");
        }
        // And all weight coordinates.
        for i in 0..layer.weights.len() {
            let mut lp = layer.clone();
            lp.weights[i] += eps;
            let mut lm = layer.clone();
            lm.weights[i] -= eps;
            let num = (forward(&x0, &lp) - forward(&x0, &lm)) / (2.0 * eps);
            let ana = grads.weights[i];
            assert!((num - ana).abs() < 1e-6, "weight grad {i}: {num} vs {ana}");
        }
        for i in 0..layer.bias.len() {
            let mut lp = layer.clone();
            lp.bias[i] += eps;
            let mut lm = layer.clone();
            lm.bias[i] -= eps;
            let num = (forward(&x0, &lp) - forward(&x0, &lm)) / (2.0 * eps);
            let ana = grads.bias[i];
            assert!((num - ana).abs() < 1e-6, "bias grad {i}: {num} vs {ana}");
        }
    }
}
