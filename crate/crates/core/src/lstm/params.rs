use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cnn::{HEAD_OUT, HIDDEN1, HIDDEN2};
use crate::nn::{truncated_normal_tensor, ParamSet, Real, Tensor, INIT_STDDEV};

/// QP plus a 4-wide one-hot frame order within the GOP.
pub const SIDE_LEN: usize = 5;
pub const GOP_SIZE: usize = 4;
/// Weight count excluding the gate biases.
pub const LSTM_PARAM_COUNT: usize = 757_929;

/// Gate order inside [`LevelParams::w`] and [`LevelParams::b`].
pub const GATE_I: usize = 0;
pub const GATE_O: usize = 1;
pub const GATE_F: usize = 2;
pub const GATE_C: usize = 3;

/// One level: input, output and forget gates plus the candidate, each
/// `2h × h`, followed by the two-layer head.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelParams<T: Real = f32> {
    pub w: [Tensor<T>; 4],
    pub b: [Tensor<T>; 4],
    /// `(h + 5) × h2`
    pub fc2: Tensor<T>,
    /// `(h2 + 5) × n`
    pub out: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EthLstmParams<T: Real = f32> {
    pub levels: [LevelParams<T>; 3],
    /// Applies `tanh` to the cell state before the output gate. Off by
    /// default: the output is `o ⊙ c`.
    pub output_tanh: bool,
}

impl<T: Real> EthLstmParams<T> {
    fn build(mut weight: impl FnMut(&[usize]) -> Tensor<T>) -> Self {
        let levels = std::array::from_fn(|l| {
            let h = HIDDEN1[l];
            LevelParams {
                w: std::array::from_fn(|_| weight(&[2 * h, h])),
                b: std::array::from_fn(|_| Tensor::zeros(&[h])),
                fc2: weight(&[h + SIDE_LEN, HIDDEN2[l]]),
                out: weight(&[HIDDEN2[l] + SIDE_LEN, HEAD_OUT[l]]),
            }
        });
        EthLstmParams {
            levels,
            output_tanh: false,
        }
    }

    pub fn zeros() -> Self {
        Self::build(Tensor::zeros)
    }

    /// Truncated-normal weights (σ = 0.1), zero biases.
    pub fn init<R: Rng>(rng: &mut R) -> Self {
        Self::build(|d| truncated_normal_tensor(d, INIT_STDDEV, rng))
    }

    pub fn seeded(seed: u64) -> Self {
        Self::init(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn cast<U: Real>(&self) -> EthLstmParams<U> {
        EthLstmParams {
            levels: std::array::from_fn(|l| {
                let p = &self.levels[l];
                LevelParams {
                    w: std::array::from_fn(|g| p.w[g].cast()),
                    b: std::array::from_fn(|g| p.b[g].cast()),
                    fc2: p.fc2.cast(),
                    out: p.out.cast(),
                }
            }),
            output_tanh: self.output_tanh,
        }
    }

    pub fn non_bias_param_count(&self) -> usize {
        self.levels
            .iter()
            .map(|p| p.w.iter().map(|t| t.len()).sum::<usize>() + p.fc2.len() + p.out.len())
            .sum()
    }

    pub fn bias_param_count(&self) -> usize {
        self.levels.iter().map(|p| p.b.iter().map(|t| t.len()).sum::<usize>()).sum()
    }
}

const GATE_NAMES: [&str; 4] = ["i", "o", "f", "c"];

impl<T: Real> ParamSet<T> for EthLstmParams<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::new();
        for (l, p) in self.levels.iter().enumerate() {
            for g in 0..4 {
                v.push((format!("W{}-{}", GATE_NAMES[g], l + 1), &p.w[g]));
            }
            for g in 0..4 {
                v.push((format!("b{}-{}", GATE_NAMES[g], l + 1), &p.b[g]));
            }
            v.push((format!("f'2-{}", l + 1), &p.fc2));
            v.push((format!("y'{}", l + 1), &p.out));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = Vec::new();
        for p in self.levels.iter_mut() {
            v.extend(p.w.iter_mut());
            v.extend(p.b.iter_mut());
            v.push(&mut p.fc2);
            v.push(&mut p.out);
        }
        v
    }
}
