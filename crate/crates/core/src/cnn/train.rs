use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{qp_feature, Trace};
use super::params::{dropout_layers, EthCnnParams};
use super::preprocess::{preprocess, BranchInputs};
use crate::dataset::CtuSample;
use crate::error::{Error, Result};
use crate::nn::{ParamSet, SgdConfig, SgdState};

#[derive(Clone, Debug, PartialEq)]
pub struct CnnTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub dropout: bool,
    pub seed: u64,
}

impl Default for CnnTrainConfig {
    fn default() -> Self {
        CnnTrainConfig {
            iterations: 2000,
            batch_size: 64,
            sgd: SgdConfig::cnn(),
            dropout: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss per iteration.
    pub loss_curve: Vec<f64>,
}

/// Visits record indices epoch by epoch; each epoch's permutation is drawn
/// from a generator reseeded from the master seed and the epoch number.
#[derive(Clone, Debug)]
pub struct EpochShuffler {
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl EpochShuffler {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut s = EpochShuffler {
            seed,
            epoch: 0,
            order: (0..len).collect(),
            pos: 0,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.order.sort_unstable();
        self.order.shuffle(&mut rng);
        self.pos = 0;
    }

    pub fn next_index(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

pub(crate) struct Prepared {
    pub x: BranchInputs<f32>,
    pub qp: f32,
    pub target: [f32; 21],
    pub mask: [f32; 21],
}

pub(crate) fn prepare(samples: &[CtuSample]) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .map(|s| {
            let (target, mask) = s.labels.targets();
            Ok(Prepared {
                x: preprocess(&s.block)?,
                qp: qp_feature(s.qp)?,
                target,
                mask,
            })
        })
        .collect()
}

/// Mini-batch SGD with momentum on the mean masked cross-entropy.
pub fn train_cnn(params: &mut EthCnnParams, samples: &[CtuSample], cfg: &CnnTrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::arg("empty training database"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    let data = prepare(samples)?;
    let mut shuffler = EpochShuffler::new(data.len(), cfg.seed);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let dropout = dropout_layers();
    let mut sgd = SgdState::new(cfg.sgd, params);
    let mut grads = EthCnnParams::<f32>::zeros();
    let mut trace = Trace::default();
    let mut report = TrainReport::default();
    let scale = 1.0 / cfg.batch_size as f32;
    for it in 0..cfg.iterations {
        grads.zero();
        let mut loss = 0.0f64;
        for _ in 0..cfg.batch_size {
            let p = &data[shuffler.next_index()];
            let d = cfg.dropout.then_some((&dropout, &mut drop_rng));
            loss += params.accumulate(&p.x, p.qp, &p.target, &p.mask, d, &mut trace, &mut grads) as f64;
        }
        for t in grads.tensors_mut() {
            t.scale(scale);
        }
        sgd.step(params, &grads)?;
        let mean = loss / cfg.batch_size as f64;
        if !mean.is_finite() {
            return Err(Error::Data(format!("training diverged at iteration {}", it)));
        }
        report.loss_curve.push(mean);
        if it % 100 == 0 {
            log::debug!("cnn iteration {} loss {:.4} lr {:.5}", it, mean, sgd.learning_rate());
        }
    }
    Ok(report)
}

/// Mean masked loss of `samples` without dropout.
pub fn evaluate_loss(params: &EthCnnParams, samples: &[CtuSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::arg("no samples"));
    }
    let mut total = 0.0;
    for s in samples {
        let x = preprocess::<f32>(&s.block)?;
        let out = params.forward_inputs(&x, s.qp, None)?;
        let (y, m) = s.labels.targets();
        for i in 0..21 {
            if m[i] > 0.0 {
                let p = (out.prob.probs[i] as f64).clamp(crate::nn::PROB_EPS, 1.0 - crate::nn::PROB_EPS);
                let y = y[i] as f64;
                total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
            }
        }
    }
    Ok(total / samples.len() as f64)
}
