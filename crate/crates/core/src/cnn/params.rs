use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::{truncated_normal_tensor, ConvSpec, Dropout, ParamSet, Real, Tensor, INIT_STDDEV};

/// Conv layers 1–3, shared by all branches.
pub const CONV_SPECS: [ConvSpec; 3] = [ConvSpec::new(1, 16, 4), ConvSpec::new(16, 24, 2), ConvSpec::new(24, 32, 2)];
/// Edge length of each branch's preprocessed input.
pub const BRANCH_INPUT: [usize; 3] = [16, 32, 64];
pub const HIDDEN1: [usize; 3] = [64, 128, 256];
pub const HIDDEN2: [usize; 3] = [48, 96, 192];
pub const HEAD_OUT: [usize; 3] = [1, 4, 16];
pub const CONCAT_LEN: usize = 2688;
pub const CNN_PARAM_COUNT: usize = 1_287_189;
/// Dropout after the first and second hidden layers during training.
pub const DROPOUT_RATES: [f64; 2] = [0.5, 0.2];

pub(crate) fn dropout_layers() -> [Dropout; 2] {
    DROPOUT_RATES.map(|r| Dropout::new(r).expect("valid rate"))
}

/// ETH-CNN weights. No layer has a bias; the QP side input is the only
/// constant feature the heads see.
#[derive(Clone, Debug, PartialEq)]
pub struct EthCnnParams<T: Real = f32> {
    /// `conv[3 * branch + layer]`, dims `k × k × Cin × Cout`.
    pub conv: Vec<Tensor<T>>,
    /// `2688 × h1` per level.
    pub fc1: Vec<Tensor<T>>,
    /// `(h1 + 1) × h2` per level.
    pub fc2: Vec<Tensor<T>>,
    /// `(h2 + 1) × n` per level.
    pub out: Vec<Tensor<T>>,
}

fn layer_dims() -> (Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let conv = (0..9).map(|i| CONV_SPECS[i % 3].weight_dims().to_vec()).collect();
    let fc1 = (0..3).map(|l| vec![CONCAT_LEN, HIDDEN1[l]]).collect();
    let fc2 = (0..3).map(|l| vec![HIDDEN1[l] + 1, HIDDEN2[l]]).collect();
    let out = (0..3).map(|l| vec![HIDDEN2[l] + 1, HEAD_OUT[l]]).collect();
    (conv, fc1, fc2, out)
}

impl<T: Real> EthCnnParams<T> {
    pub fn zeros() -> Self {
        let (c, f1, f2, o) = layer_dims();
        let z = |d: Vec<Vec<usize>>| d.iter().map(|d| Tensor::zeros(d)).collect();
        EthCnnParams {
            conv: z(c),
            fc1: z(f1),
            fc2: z(f2),
            out: z(o),
        }
    }

    /// Truncated-normal initialization, σ = 0.1.
    pub fn init<R: Rng>(rng: &mut R) -> Self {
        let (c, f1, f2, o) = layer_dims();
        let mut g = |d: Vec<Vec<usize>>| {
            d.iter()
                .map(|d| truncated_normal_tensor(d, INIT_STDDEV, rng))
                .collect::<Vec<_>>()
        };
        EthCnnParams {
            conv: g(c),
            fc1: g(f1),
            fc2: g(f2),
            out: g(o),
        }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::init(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn cast<U: Real>(&self) -> EthCnnParams<U> {
        let c = |v: &Vec<Tensor<T>>| v.iter().map(|t| t.cast()).collect();
        EthCnnParams {
            conv: c(&self.conv),
            fc1: c(&self.fc1),
            fc2: c(&self.fc2),
            out: c(&self.out),
        }
    }

    pub fn conv_weights(&self, branch: usize, layer: usize) -> &Tensor<T> {
        &self.conv[3 * branch + layer]
    }
}

impl<T: Real> ParamSet<T> for EthCnnParams<T> {
    fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = Vec::with_capacity(18);
        for (i, t) in self.conv.iter().enumerate() {
            v.push((format!("C{}-{}", i % 3 + 1, i / 3 + 1), t));
        }
        for l in 0..3 {
            v.push((format!("f1-{}", l + 1), &self.fc1[l]));
        }
        for l in 0..3 {
            v.push((format!("f2-{}", l + 1), &self.fc2[l]));
        }
        for l in 0..3 {
            v.push((format!("y{}", l + 1), &self.out[l]));
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.conv
            .iter_mut()
            .chain(self.fc1.iter_mut())
            .chain(self.fc2.iter_mut())
            .chain(self.out.iter_mut())
            .collect()
    }
}
