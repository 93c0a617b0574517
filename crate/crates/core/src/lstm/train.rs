use super::cell::{FrameInput, HeadCache, LevelState, StepCache};
use super::params::{EthLstmParams, GATE_C, SIDE_LEN};
use crate::cnn::{EpochShuffler, HEAD_OUT, HIDDEN1, HIDDEN2, LEVEL_OFFSET};
use crate::error::{Error, Result};
use crate::nn::{kernels, masked_logit_grad, ParamSet, Real, SgdConfig, SgdState};

pub type Targets<T> = ([T; 21], [T; 21]);

/// Frames of one CTU position with per-frame targets and masks.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample<T = f32> {
    pub inputs: Vec<FrameInput<T>>,
    pub targets: Vec<Targets<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmTrainConfig {
    pub iterations: usize,
    /// Windows per iteration.
    pub batch_size: usize,
    pub window: usize,
    pub overlap: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for LstmTrainConfig {
    fn default() -> Self {
        LstmTrainConfig {
            iterations: 1000,
            batch_size: 64,
            window: 20,
            overlap: 10,
            sgd: SgdConfig::lstm(),
            seed: 0,
        }
    }
}

/// Start frames of the length-`window` training windows of a sequence,
/// advancing by `window − overlap`.
pub fn window_starts(len: usize, window: usize, overlap: usize) -> Result<Vec<usize>> {
    if window == 0 || overlap >= window {
        return Err(Error::arg(format!("window {} with overlap {}", window, overlap)));
    }
    let stride = window - overlap;
    Ok((0..).map(|k| k * stride).take_while(|s| s + window <= len).collect())
}

impl<T: Real> EthLstmParams<T> {
    /// Returns `dL/df'` and accumulates the head's weight gradients.
    fn head_backward(&self, l: usize, hc: &HeadCache<T>, g_logit: &[T], grads: &mut EthLstmParams<T>) -> Vec<T> {
        let p = &self.levels[l];
        let g = &mut grads.levels[l];
        let mut ga = vec![T::zero(); HIDDEN2[l] + SIDE_LEN];
        kernels::fc_backward(&hc.a, p.out.data(), g_logit, g.out.data_mut(), Some(&mut ga));
        ga.truncate(HIDDEN2[l]);
        for (d, &a) in ga.iter_mut().zip(&hc.a) {
            if a <= T::zero() {
                *d = T::zero();
            }
        }
        let mut gu = vec![T::zero(); HIDDEN1[l] + SIDE_LEN];
        kernels::fc_backward(&hc.u, p.fc2.data(), &ga, g.fc2.data_mut(), Some(&mut gu));
        gu.truncate(HIDDEN1[l]);
        gu
    }

    /// Summed masked cross-entropy of one window with full backpropagation
    /// through time from a zero initial state. Levels without any valid label
    /// in the window are skipped: their cells never influence the loss.
    pub fn window_loss_grad(
        &self,
        inputs: &[FrameInput<T>],
        targets: &[Targets<T>],
        grads: &mut EthLstmParams<T>,
    ) -> Result<T> {
        if inputs.len() != targets.len() {
            return Err(Error::shape(inputs.len(), targets.len()));
        }
        let sides: Vec<[T; SIDE_LEN]> = inputs.iter().map(|x| x.side.vector()).collect::<Result<_>>()?;
        let mut loss = T::zero();
        for l in 0..3 {
            let cells = LEVEL_OFFSET[l]..LEVEL_OFFSET[l] + HEAD_OUT[l];
            let active: Vec<bool> = targets
                .iter()
                .map(|(_, m)| m[cells.clone()].iter().any(|&v| v != T::zero()))
                .collect();
            if !active.iter().any(|&a| a) {
                continue;
            }
            let h = HIDDEN1[l];
            let mut state = LevelState {
                c: vec![T::zero(); h],
                out: vec![T::zero(); h],
            };
            let mut steps: Vec<(StepCache<T>, Option<(HeadCache<T>, Vec<T>)>)> = Vec::with_capacity(inputs.len());
            for (t, x) in inputs.iter().enumerate() {
                if x.features.f1[l].len() != h {
                    return Err(Error::shape(h, x.features.f1[l].len()));
                }
                let mut sc = StepCache::default();
                self.cell_forward(l, &x.features.f1[l], &mut state, &mut sc);
                let head = if active[t] {
                    let mut hc = HeadCache::default();
                    self.head_forward(l, &state.out, &sides[t], &mut hc);
                    let mut g = vec![T::zero(); HEAD_OUT[l]];
                    let (y, m) = &targets[t];
                    loss += masked_logit_grad(&hc.p, &y[cells.clone()], &m[cells.clone()], &mut g);
                    Some((hc, g))
                } else {
                    None
                };
                steps.push((sc, head));
            }

            let mut dc_next = vec![T::zero(); h];
            let mut dout_next = vec![T::zero(); h];
            let mut dpre: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); h]);
            let mut dz = vec![T::zero(); 2 * h];
            let mut tmp = vec![T::zero(); 2 * h];
            for (sc, head) in steps.iter().rev() {
                let mut dout = dout_next.clone();
                if let Some((hc, g)) = head {
                    for (d, v) in dout.iter_mut().zip(self.head_backward(l, hc, g, grads)) {
                        *d += v;
                    }
                }
                let [gi, go, gf, gc] = &sc.gates;
                for k in 0..h {
                    let (s, ds) = if self.output_tanh {
                        let s = sc.c[k].tanh();
                        (s, T::one() - s * s)
                    } else {
                        (sc.c[k], T::one())
                    };
                    let d_o = dout[k] * s;
                    let dc = dc_next[k] + dout[k] * go[k] * ds;
                    let di = dc * gc[k];
                    let dcand = dc * gi[k];
                    let df = dc * sc.c_prev[k];
                    dc_next[k] = dc * gf[k];
                    dpre[0][k] = di * gi[k] * (T::one() - gi[k]);
                    dpre[1][k] = d_o * go[k] * (T::one() - go[k]);
                    dpre[2][k] = df * gf[k] * (T::one() - gf[k]);
                    dpre[GATE_C][k] = dcand * (T::one() - gc[k] * gc[k]);
                }
                dz.iter_mut().for_each(|v| *v = T::zero());
                let p = &self.levels[l];
                let g = &mut grads.levels[l];
                for gate in 0..4 {
                    kernels::fc_backward(&sc.z, p.w[gate].data(), &dpre[gate], g.w[gate].data_mut(), Some(&mut tmp));
                    for (a, &b) in dz.iter_mut().zip(&tmp) {
                        *a += b;
                    }
                    for (a, &b) in g.b[gate].data_mut().iter_mut().zip(&dpre[gate]) {
                        *a += b;
                    }
                }
                dout_next.copy_from_slice(&dz[h..]);
            }
        }
        Ok(loss)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LstmTrainReport {
    /// Mean per-frame loss of each iteration's batch.
    pub loss_curve: Vec<f64>,
    pub windows: usize,
}

/// Backpropagation through time over overlapping windows; the CNN that
/// produced the input features is not updated.
pub fn train_lstm(
    params: &mut EthLstmParams,
    sequences: &[SequenceSample],
    cfg: &LstmTrainConfig,
) -> Result<LstmTrainReport> {
    if cfg.batch_size == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    let mut windows = Vec::new();
    for (i, s) in sequences.iter().enumerate() {
        let starts = window_starts(s.inputs.len(), cfg.window, cfg.overlap)?;
        if starts.is_empty() {
            log::warn!("sequence {} has {} frames, shorter than the window {}; skipped", i, s.inputs.len(), cfg.window);
        }
        windows.extend(starts.into_iter().map(|st| (i, st)));
    }
    if windows.is_empty() {
        return Err(Error::arg("no training window fits any sequence"));
    }
    let mut shuffler = EpochShuffler::new(windows.len(), cfg.seed);
    let mut sgd = SgdState::new(cfg.sgd, params);
    let mut grads = EthLstmParams::<f32>::zeros();
    let mut report = LstmTrainReport {
        windows: windows.len(),
        ..Default::default()
    };
    let norm = (cfg.batch_size * cfg.window) as f32;
    for it in 0..cfg.iterations {
        grads.zero();
        let mut loss = 0.0f64;
        for _ in 0..cfg.batch_size {
            let (si, st) = windows[shuffler.next_index()];
            let s = &sequences[si];
            let r = st..st + cfg.window;
            loss += params.window_loss_grad(&s.inputs[r.clone()], &s.targets[r], &mut grads)? as f64;
        }
        for t in grads.tensors_mut() {
            t.scale(1.0 / norm);
        }
        sgd.step(params, &grads)?;
        let mean = loss / norm as f64;
        if !mean.is_finite() {
            return Err(Error::Data(format!("training diverged at iteration {}", it)));
        }
        report.loss_curve.push(mean);
        if it % 50 == 0 {
            log::debug!("lstm iteration {} loss {:.4}", it, mean);
        }
    }
    Ok(report)
}
