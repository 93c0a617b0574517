use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{ParamSet, Real};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Coordinates dropped because a ReLU kink lies inside `±epsilon`.
    pub kinks_skipped: usize,
    /// `(tensor name, flat index, analytic, numeric)` at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Central finite-difference check of `analytic` against `loss`.
///
/// Coordinates are sampled round-robin over the parameter tensors so that
/// small tensors (convolution kernels) are not drowned out by large dense
/// layers. Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
///
/// A coordinate whose forward and backward one-sided differences disagree
/// by more than `KINK_TOL` straddles a non-differentiable point. It is skipped
/// and another coordinate is drawn, up to `4 · samples` draws in total.
const KINK_TOL: f64 = 1e-3;

pub fn grad_check<T: Real, P: ParamSet<T>>(
    params: &mut P,
    analytic: &P,
    mut loss: impl FnMut(&P) -> Result<T>,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-5..=1e-2).contains(&epsilon) {
        return Err(Error::arg(format!("epsilon {} outside [1e-5, 1e-2]", epsilon)));
    }
    let grads: Vec<(String, Vec<T>)> = analytic
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();
    let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
    if sizes.len() != grads.len() || sizes.iter().zip(&grads).any(|(s, (_, g))| *s != g.len()) {
        return Err(Error::shape("gradient set matching parameters", "mismatch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::default();
    let eps = T::of(epsilon);

    let mut eval = |params: &P| -> Result<f64> {
        let l = loss(params)?;
        let l = l.to_f64().unwrap_or(f64::NAN);
        if !l.is_finite() {
            return Err(Error::Verification("non-finite loss during gradient check".into()));
        }
        Ok(l)
    };

    let center = eval(params)?;
    let mut k = 0;
    while report.checked < samples && k < 4 * samples {
        let ti = k % sizes.len();
        k += 1;
        let ci = rng.random_range(0..sizes[ti]);
        let orig = params.tensors()[ti].1.data()[ci];

        params.tensors_mut()[ti].data_mut()[ci] = orig + eps;
        let up = eval(params)?;
        params.tensors_mut()[ti].data_mut()[ci] = orig - eps;
        let down = eval(params)?;
        params.tensors_mut()[ti].data_mut()[ci] = orig;

        let fwd = (up - center) / epsilon;
        let bwd = (center - down) / epsilon;
        if (fwd - bwd).abs() > KINK_TOL * fwd.abs().max(bwd.abs()).max(1e-3) {
            report.kinks_skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * epsilon);
        let a = grads[ti].1[ci].to_f64().unwrap_or(f64::NAN);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        report.checked += 1;
        if report.worst.is_none() || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((grads[ti].0.clone(), ci, a, numeric));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{fc_backward, fc_forward, init, kernels, masked_cross_entropy, FcSpec, Tensor};

    struct Dense(Tensor<f64>);

    impl ParamSet<f64> for Dense {
        fn tensors(&self) -> Vec<(String, &Tensor<f64>)> {
            vec![("w".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor<f64>> {
            vec![&mut self.0]
        }
    }

    fn setup() -> (Dense, Tensor<f64>, Tensor<f64>, Tensor<f64>, FcSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = FcSpec::new(40, 8);
        let w = Dense(init::truncated_normal_tensor(&spec.weight_dims(), 0.3, &mut rng));
        let x = init::truncated_normal_tensor(&[40], 1.0, &mut rng);
        let y = Tensor::from_vec(&[8], (0..8).map(|i| (i % 2) as f64).collect()).unwrap();
        let mut m = Tensor::filled(&[8], 1.0);
        m.data_mut()[3] = 0.0;
        (w, x, y, m, spec)
    }

    fn loss(w: &Dense, x: &Tensor<f64>, y: &Tensor<f64>, m: &Tensor<f64>, spec: &FcSpec) -> f64 {
        let z = fc_forward(x, spec, &w.0).unwrap();
        let p = z.map(kernels::sigmoid);
        masked_cross_entropy(&p, y, m).unwrap().0
    }

    #[test]
    fn single_dense_layer_with_sigmoid_cross_entropy() {
        let (mut w, x, y, m, spec) = setup();
        let z = fc_forward(&x, &spec, &w.0).unwrap();
        let p = z.map(kernels::sigmoid);
        let mut dz = vec![0.0; 8];
        crate::nn::masked_logit_grad(p.data(), y.data(), m.data(), &mut dz);
        let (_, gw) = fc_backward(&x, &spec, &w.0, &Tensor::from_vec(&[8], dz).unwrap()).unwrap();
        let analytic = Dense(gw);
        let report = grad_check(&mut w, &analytic, |w| Ok(loss(w, &x, &y, &m, &spec)), 1e-5, 300, 3).unwrap();
        assert_eq!(report.checked, 300);
        assert!(report.max_rel_error < 1e-3, "{:?}", report);
    }

    #[test]
    fn masked_output_column_has_zero_numeric_gradient() {
        let (mut w, x, y, m, spec) = setup();
        let f = |w: &Dense| loss(w, &x, &y, &m, &spec);
        // column 3 only feeds the masked-out output
        for i in 0..40 {
            let idx = i * 8 + 3;
            let orig = w.0.data()[idx];
            w.0.data_mut()[idx] = orig + 1e-4;
            let up = f(&w);
            w.0.data_mut()[idx] = orig - 1e-4;
            let down = f(&w);
            w.0.data_mut()[idx] = orig;
            assert!(((up - down) / 2e-4).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_epsilon_and_non_finite_loss() {
        let (mut w, ..) = setup();
        let g = Dense(Tensor::zeros(&[40, 8]));
        assert!(grad_check(&mut w, &g, |_| Ok(0.0), 0.5, 1, 0).is_err());
        assert!(matches!(
            grad_check(&mut w, &g, |_| Ok(f64::NAN), 1e-4, 1, 0),
            Err(Error::Verification(_))
        ));
    }
}
