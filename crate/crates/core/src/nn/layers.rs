use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Non-overlapping square convolution without bias (stride == kernel edge).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvSpec {
    pub const fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn stride(&self) -> usize {
        self.kernel
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [self.kernel, self.kernel, self.in_channels, self.out_channels]
    }

    pub fn param_count(&self) -> usize {
        self.kernel * self.kernel * self.in_channels * self.out_channels
    }
}

/// Bias-free fully connected layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FcSpec {
    pub in_dim: usize,
    pub out_dim: usize,
}

impl FcSpec {
    pub const fn new(in_dim: usize, out_dim: usize) -> Self {
        FcSpec { in_dim, out_dim }
    }

    pub fn weight_dims(&self) -> [usize; 2] {
        [self.in_dim, self.out_dim]
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim
    }
}

/// Slice-level kernels shared by the tensor wrappers and the model code.
///
/// Layouts: feature maps are `H × W × C` row-major, conv weights
/// `k × k × Cin × Cout`, dense weights `in × out`.
pub(crate) mod kernels {
    use super::{ConvSpec, Real};

    pub fn conv_forward<T: Real>(
        input: &[T],
        height: usize,
        width: usize,
        spec: &ConvSpec,
        weights: &[T],
        out: &mut [T],
    ) {
        let k = spec.kernel;
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        let (oh, ow) = (height / k, width / k);
        debug_assert_eq!(out.len(), oh * ow * cout);
        out.iter_mut().for_each(|v| *v = T::zero());
        for oy in 0..oh {
            for ox in 0..ow {
                let o = &mut out[(oy * ow + ox) * cout..][..cout];
                for ky in 0..k {
                    for kx in 0..k {
                        let px = &input[((oy * k + ky) * width + ox * k + kx) * cin..][..cin];
                        let wbase = (ky * k + kx) * cin;
                        for (ci, &x) in px.iter().enumerate() {
                            if x == T::zero() {
                                continue;
                            }
                            let w = &weights[(wbase + ci) * cout..][..cout];
                            for (acc, &wv) in o.iter_mut().zip(w) {
                                *acc += x * wv;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates the weight gradient into `grad_w` and, when requested,
    /// writes the input gradient into `grad_in`.
    #[allow(clippy::too_many_arguments)]
    pub fn conv_backward<T: Real>(
        input: &[T],
        height: usize,
        width: usize,
        spec: &ConvSpec,
        weights: &[T],
        grad_out: &[T],
        grad_w: &mut [T],
        mut grad_in: Option<&mut [T]>,
    ) {
        let k = spec.kernel;
        let (cin, cout) = (spec.in_channels, spec.out_channels);
        let (oh, ow) = (height / k, width / k);
        if let Some(g) = grad_in.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
        for oy in 0..oh {
            for ox in 0..ow {
                let go = &grad_out[(oy * ow + ox) * cout..][..cout];
                if go.iter().all(|&v| v == T::zero()) {
                    continue;
                }
                for ky in 0..k {
                    for kx in 0..k {
                        let pix = ((oy * k + ky) * width + ox * k + kx) * cin;
                        let wbase = (ky * k + kx) * cin;
                        for ci in 0..cin {
                            let row = (wbase + ci) * cout;
                            let x = input[pix + ci];
                            if x != T::zero() {
                                for (gw, &g) in grad_w[row..row + cout].iter_mut().zip(go) {
                                    *gw += x * g;
                                }
                            }
                            if let Some(gi) = grad_in.as_deref_mut() {
                                let w = &weights[row..row + cout];
                                gi[pix + ci] = w.iter().zip(go).map(|(&a, &b)| a * b).sum();
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn fc_forward<T: Real>(input: &[T], weights: &[T], out: &mut [T]) {
        let m = out.len();
        out.iter_mut().for_each(|v| *v = T::zero());
        for (i, &x) in input.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            let row = &weights[i * m..(i + 1) * m];
            for (acc, &w) in out.iter_mut().zip(row) {
                *acc += x * w;
            }
        }
    }

    pub fn fc_backward<T: Real>(
        input: &[T],
        weights: &[T],
        grad_out: &[T],
        grad_w: &mut [T],
        grad_in: Option<&mut [T]>,
    ) {
        let m = grad_out.len();
        for (i, &x) in input.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            let row = &mut grad_w[i * m..(i + 1) * m];
            for (gw, &g) in row.iter_mut().zip(grad_out) {
                *gw += x * g;
            }
        }
        if let Some(gi) = grad_in {
            for (i, g) in gi.iter_mut().enumerate() {
                let row = &weights[i * m..(i + 1) * m];
                *g = row.iter().zip(grad_out).map(|(&w, &d)| w * d).sum();
            }
        }
    }

    pub fn sigmoid<T: Real>(x: T) -> T {
        T::one() / (T::one() + (-x).exp())
    }
}

fn conv_geometry<T: Real>(input: &Tensor<T>, spec: &ConvSpec, weights: &Tensor<T>) -> Result<(usize, usize)> {
    let d = input.dims();
    if d.len() != 3 || d[2] != spec.in_channels {
        return Err(Error::shape(format!("H x W x {}", spec.in_channels), format!("{:?}", d)));
    }
    if spec.kernel == 0 || d[0] % spec.kernel != 0 || d[1] % spec.kernel != 0 {
        return Err(Error::shape(
            format!("spatial extents divisible by {}", spec.kernel),
            format!("{:?}", d),
        ));
    }
    weights.expect_dims(&spec.weight_dims())?;
    Ok((d[0], d[1]))
}

/// Non-overlapping convolution: `H × W × Cin` → `(H/k) × (W/k) × Cout`.
pub fn conv_forward<T: Real>(input: &Tensor<T>, spec: &ConvSpec, weights: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = conv_geometry(input, spec, weights)?;
    let k = spec.kernel;
    let mut out = Tensor::zeros(&[h / k, w / k, spec.out_channels]);
    kernels::conv_forward(input.data(), h, w, spec, weights.data(), out.data_mut());
    Ok(out)
}

/// Returns `(grad_input, grad_weights)` for [`conv_forward`].
pub fn conv_backward<T: Real>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (h, w) = conv_geometry(input, spec, weights)?;
    grad_out.expect_dims(&[h / spec.kernel, w / spec.kernel, spec.out_channels])?;
    let mut gi = Tensor::zeros(input.dims());
    let mut gw = Tensor::zeros(weights.dims());
    kernels::conv_backward(
        input.data(),
        h,
        w,
        spec,
        weights.data(),
        grad_out.data(),
        gw.data_mut(),
        Some(gi.data_mut()),
    );
    Ok((gi, gw))
}

pub fn fc_forward<T: Real>(input: &Tensor<T>, spec: &FcSpec, weights: &Tensor<T>) -> Result<Tensor<T>> {
    if input.len() != spec.in_dim {
        return Err(Error::shape(spec.in_dim, input.len()));
    }
    weights.expect_dims(&spec.weight_dims())?;
    let mut out = Tensor::zeros(&[spec.out_dim]);
    kernels::fc_forward(input.data(), weights.data(), out.data_mut());
    Ok(out)
}

/// Returns `(grad_input, grad_weights)` for [`fc_forward`].
pub fn fc_backward<T: Real>(
    input: &Tensor<T>,
    spec: &FcSpec,
    weights: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if input.len() != spec.in_dim {
        return Err(Error::shape(spec.in_dim, input.len()));
    }
    if grad_out.len() != spec.out_dim {
        return Err(Error::shape(spec.out_dim, grad_out.len()));
    }
    weights.expect_dims(&spec.weight_dims())?;
    let mut gi = Tensor::zeros(&[spec.in_dim]);
    let mut gw = Tensor::zeros(weights.dims());
    kernels::fc_backward(
        input.data(),
        weights.data(),
        grad_out.data(),
        gw.data_mut(),
        Some(gi.data_mut()),
    );
    Ok((gi, gw))
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(kernels::sigmoid)
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zeroes `grad` wherever the ReLU output was not positive.
pub fn relu_backward_inplace<T: Real>(output: &[T], grad: &mut [T]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at training
/// time so inference is a pass-through.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::arg(format!("dropout rate {} outside [0, 1)", rate)));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Applies dropout in place, writing the per-element multiplier to `mask`.
    pub fn apply<T: Real, R: Rng>(&self, x: &mut [T], mask: &mut Vec<T>, rng: &mut R) {
        mask.clear();
        if self.rate == 0.0 {
            mask.resize(x.len(), T::one());
            return;
        }
        let keep = T::of(1.0 / (1.0 - self.rate));
        for v in x.iter_mut() {
            let m = if rng.random::<f64>() < self.rate {
                T::zero()
            } else {
                keep
            };
            *v *= m;
            mask.push(m);
        }
    }
}

/// Training-mode dropout on a tensor. Returns the output and the multiplier
/// mask (0 for dropped elements).
pub fn dropout_train<T: Real, R: Rng>(input: &Tensor<T>, rate: f64, rng: &mut R) -> Result<(Tensor<T>, Tensor<T>)> {
    let d = Dropout::new(rate)?;
    let mut out = input.clone();
    let mut mask = Vec::with_capacity(input.len());
    d.apply(out.data_mut(), &mut mask, rng);
    Ok((out, Tensor::from_vec(input.dims(), mask)?))
}

pub fn dropout_train_seeded<T: Real>(input: &Tensor<T>, rate: f64, seed: u64) -> Result<Tensor<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dropout_train(input, rate, &mut rng).map(|(out, _)| out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(dims, data).unwrap()
    }

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn conv_output_shape_matches_first_layer() {
        let spec = ConvSpec::new(1, 16, 4);
        let x = Tensor::<f32>::zeros(&[16, 16, 1]);
        let w = Tensor::<f32>::filled(&spec.weight_dims(), 0.3);
        let y = conv_forward(&x, &spec, &w).unwrap();
        assert_eq!(y.dims(), &[4, 4, 16]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_sum_of_ones() {
        let spec = ConvSpec::new(1, 1, 2);
        let x = Tensor::<f32>::filled(&[2, 2, 1], 1.0);
        let w = Tensor::<f32>::filled(&[2, 2, 1, 1], 1.0);
        assert_eq!(conv_forward(&x, &spec, &w).unwrap().data(), &[4.0]);
    }

    #[test]
    fn conv_rejects_indivisible_input() {
        let spec = ConvSpec::new(1, 2, 4);
        let x = Tensor::<f32>::zeros(&[6, 8, 1]);
        let w = Tensor::<f32>::zeros(&spec.weight_dims());
        assert!(matches!(conv_forward(&x, &spec, &w), Err(Error::Shape { .. })));
        let x = Tensor::<f32>::zeros(&[8, 8, 2]);
        assert!(conv_forward(&x, &spec, &w).is_err());
    }

    #[test]
    fn conv_matches_naive_window_dot_product() {
        let spec = ConvSpec::new(3, 5, 2);
        let x = t(&[4, 6, 3], lcg(1, 72));
        let w = t(&spec.weight_dims(), lcg(2, spec.param_count()));
        let y = conv_forward(&x, &spec, &w).unwrap();
        for oy in 0..2 {
            for ox in 0..3 {
                for co in 0..5 {
                    let mut acc = 0.0;
                    for ky in 0..2 {
                        for kx in 0..2 {
                            for ci in 0..3 {
                                let xi = ((oy * 2 + ky) * 6 + ox * 2 + kx) * 3 + ci;
                                let wi = ((ky * 2 + kx) * 3 + ci) * 5 + co;
                                acc += x.data()[xi] * w.data()[wi];
                            }
                        }
                    }
                    let got = y.data()[(oy * 3 + ox) * 5 + co];
                    assert!((got - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn fc_mult_count_and_identity() {
        let spec = FcSpec::new(2688, 64);
        assert_eq!(spec.param_count(), 172_032);
        let n = 5;
        let mut w = Tensor::<f32>::zeros(&[n, n]);
        for i in 0..n {
            w.data_mut()[i * n + i] = 1.0;
        }
        let x = Tensor::from_vec(&[n], vec![1.0, -2.0, 3.5, 0.0, 7.0]).unwrap();
        assert_eq!(fc_forward(&x, &FcSpec::new(n, n), &w).unwrap(), x);
        let z = Tensor::<f32>::zeros(&[n]);
        assert!(fc_forward(&z, &FcSpec::new(n, n), &w).unwrap().data().iter().all(|&v| v == 0.0));
        let bad = Tensor::<f32>::zeros(&[n + 1]);
        assert!(fc_forward(&bad, &FcSpec::new(n, n), &w).is_err());
    }

    #[test]
    fn activations() {
        let x = Tensor::<f32>::from_vec(&[3], vec![-1.5, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(sigmoid(&x).data()[1], 0.5);
        for v in lcg(9, 50) {
            let v = v * 10.0;
            let s = kernels::sigmoid(v) + kernels::sigmoid(-v);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    fn finite_diff_check(
        f: impl Fn(&Tensor<f64>, &Tensor<f64>) -> Tensor<f64>,
        x: &Tensor<f64>,
        w: &Tensor<f64>,
        probe: &Tensor<f64>,
        gi: &Tensor<f64>,
        gw: &Tensor<f64>,
    ) {
        // scalar objective: <probe, f(x, w)>
        let obj = |x: &Tensor<f64>, w: &Tensor<f64>| -> f64 {
            f(x, w).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let num = (obj(&xp, w) - obj(&xm, w)) / (2.0 * eps);
            assert!((num - gi.data()[i]).abs() < 1e-6 * (1.0 + num.abs()));
        }
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp.data_mut()[i] += eps;
            let mut wm = w.clone();
            wm.data_mut()[i] -= eps;
            let num = (obj(x, &wp) - obj(x, &wm)) / (2.0 * eps);
            assert!((num - gw.data()[i]).abs() < 1e-6 * (1.0 + num.abs()));
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let spec = ConvSpec::new(2, 3, 2);
        let x = t(&[4, 4, 2], lcg(3, 32));
        let w = t(&spec.weight_dims(), lcg(4, spec.param_count()));
        let probe = t(&[2, 2, 3], lcg(5, 12));
        let (gi, gw) = conv_backward(&x, &spec, &w, &probe).unwrap();
        finite_diff_check(|x, w| conv_forward(x, &spec, w).unwrap(), &x, &w, &probe, &gi, &gw);
    }

    #[test]
    fn fc_backward_matches_finite_differences() {
        let spec = FcSpec::new(7, 4);
        let x = t(&[7], lcg(6, 7));
        let w = t(&[7, 4], lcg(7, 28));
        let probe = t(&[4], lcg(8, 4));
        let (gi, gw) = fc_backward(&x, &spec, &w, &probe).unwrap();
        finite_diff_check(|x, w| fc_forward(x, &spec, w).unwrap(), &x, &w, &probe, &gi, &gw);
    }

    #[test]
    fn dropout_edge_cases() {
        let x = Tensor::<f32>::from_vec(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(dropout_train_seeded(&x, 0.0, 1).unwrap(), x);
        assert!(dropout_train_seeded(&x, 1.0, 1).is_err());
        assert!(dropout_train_seeded(&x, -0.1, 1).is_err());
    }

    #[test]
    fn dropout_rate_is_respected_on_a_million_elements() {
        let x = Tensor::<f32>::filled(&[1_000_000], 1.0);
        let y = dropout_train_seeded(&x, 0.5, 42).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.5).abs() < 0.01, "zero fraction {}", zeros);
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    proptest! {
        #[test]
        fn conv_and_fc_are_linear(seed in 0u64..1000, a in -3.0f64..3.0) {
            let spec = ConvSpec::new(2, 3, 2);
            let w = t(&spec.weight_dims(), lcg(seed, spec.param_count()));
            let x = t(&[4, 4, 2], lcg(seed + 1, 32));
            let y = t(&[4, 4, 2], lcg(seed + 2, 32));
            let fx = conv_forward(&x, &spec, &w).unwrap();
            let fy = conv_forward(&y, &spec, &w).unwrap();
            let mut xy = x.clone();
            xy.axpy(1.0, &y).unwrap();
            let fxy = conv_forward(&xy, &spec, &w).unwrap();
            let mut ax = x.clone();
            ax.scale(a);
            let fax = conv_forward(&ax, &spec, &w).unwrap();
            for i in 0..fx.len() {
                let s = fx.data()[i] + fy.data()[i];
                prop_assert!((fxy.data()[i] - s).abs() <= 1e-5 * (1.0 + s.abs()));
                let sa = a * fx.data()[i];
                prop_assert!((fax.data()[i] - sa).abs() <= 1e-5 * (1.0 + sa.abs()));
            }

            let fspec = FcSpec::new(6, 3);
            let fw = t(&[6, 3], lcg(seed + 3, 18));
            let u = t(&[6], lcg(seed + 4, 6));
            let v = t(&[6], lcg(seed + 5, 6));
            let mut uv = u.clone();
            uv.axpy(1.0, &v).unwrap();
            let fu = fc_forward(&u, &fspec, &fw).unwrap();
            let fv = fc_forward(&v, &fspec, &fw).unwrap();
            let fuv = fc_forward(&uv, &fspec, &fw).unwrap();
            for i in 0..3 {
                let s = fu.data()[i] + fv.data()[i];
                prop_assert!((fuv.data()[i] - s).abs() <= 1e-5 * (1.0 + s.abs()));
            }
        }
    }
}
