use super::params::{EthLstmParams, GATE_C, GOP_SIZE, SIDE_LEN};
use crate::cnn::{mask_beneath_not_split, qp_feature, CnnFeatures, HEAD_OUT, HIDDEN1, HIDDEN2, LEVEL_OFFSET};
use crate::error::{Error, Result};
use crate::hcpm::{Decision, HcpmProb, ThresholdSet};
use crate::nn::{kernels, relu_inplace, Real, Tensor};

/// Cell state `c` and output `f'` of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelState<T = f32> {
    pub c: Vec<T>,
    pub out: Vec<T>,
}

/// Recurrent state of one CTU position across all three levels.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T = f32> {
    pub levels: [LevelState<T>; 3],
}

impl<T: Real> LstmState<T> {
    pub fn zeros() -> Self {
        LstmState {
            levels: std::array::from_fn(|l| LevelState {
                c: vec![T::zero(); HIDDEN1[l]],
                out: vec![T::zero(); HIDDEN1[l]],
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.levels
            .iter()
            .all(|s| s.c.iter().chain(&s.out).all(|v| v.is_finite()))
    }
}

/// QP and position of the frame within its 4-frame GOP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameSideInfo {
    pub qp: u8,
    pub gop_order: usize,
}

impl FrameSideInfo {
    /// `[qp/51, one-hot(gop_order)]`
    pub fn vector<T: Real>(&self) -> Result<[T; SIDE_LEN]> {
        if self.gop_order >= GOP_SIZE {
            return Err(Error::arg(format!("GOP order {} outside [0, {})", self.gop_order, GOP_SIZE)));
        }
        let mut v = [T::zero(); SIDE_LEN];
        v[0] = qp_feature(self.qp)?;
        v[1 + self.gop_order] = T::one();
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameInput<T = f32> {
    pub features: CnnFeatures<T>,
    pub side: FrameSideInfo,
}

/// Activations of one cell step, kept for backpropagation through time.
#[derive(Clone, Debug, Default)]
pub(crate) struct StepCache<T> {
    /// `[f_in, f'_prev]`
    pub z: Vec<T>,
    /// Post-activation i, o, f gates and the tanh candidate.
    pub gates: [Vec<T>; 4],
    pub c_prev: Vec<T>,
    pub c: Vec<T>,
}

#[derive(Clone, Debug, Default)]
pub(crate) struct HeadCache<T> {
    /// `[f', side]`
    pub u: Vec<T>,
    /// `[relu hidden, side]`
    pub a: Vec<T>,
    pub p: Vec<T>,
}

fn gated_update<T: Real>(
    w: &[Tensor<T>; 4],
    b: &[Tensor<T>; 4],
    output_tanh: bool,
    f_in: &[T],
    state: &mut LevelState<T>,
    cache: &mut StepCache<T>,
) {
    let h = state.c.len();
    cache.z.clear();
    cache.z.extend_from_slice(f_in);
    cache.z.extend_from_slice(&state.out);
    for g in 0..4 {
        let mut a = std::mem::take(&mut cache.gates[g]);
        a.clear();
        a.resize(h, T::zero());
        kernels::fc_forward(&cache.z, w[g].data(), &mut a);
        for (v, &bias) in a.iter_mut().zip(b[g].data()) {
            *v += bias;
            *v = if g == GATE_C { v.tanh() } else { kernels::sigmoid(*v) };
        }
        cache.gates[g] = a;
    }
    cache.c_prev.clear();
    cache.c_prev.extend_from_slice(&state.c);
    let [gi, go, gf, gc] = &cache.gates;
    for k in 0..h {
        state.c[k] = gi[k] * gc[k] + gf[k] * cache.c_prev[k];
        let s = if output_tanh { state.c[k].tanh() } else { state.c[k] };
        state.out[k] = go[k] * s;
    }
    cache.c.clear();
    cache.c.extend_from_slice(&state.c);
}

/// One cell update of any hidden size `h = state.c.len()`. `w` holds the
/// i, o, f, c matrices, each `[len(f_in) + h, h]`; `b` the matching biases.
pub fn lstm_cell_update<T: Real>(
    w: &[Tensor<T>; 4],
    b: &[Tensor<T>; 4],
    f_in: &[T],
    state: &mut LevelState<T>,
) -> Result<()> {
    let h = state.c.len();
    if state.out.len() != h {
        return Err(Error::shape(h, state.out.len()));
    }
    for g in 0..4 {
        w[g].expect_dims(&[f_in.len() + h, h])?;
        b[g].expect_dims(&[h])?;
    }
    gated_update(w, b, false, f_in, state, &mut StepCache::default());
    Ok(())
}

impl<T: Real> EthLstmParams<T> {
    pub(crate) fn cell_forward(&self, l: usize, f_in: &[T], state: &mut LevelState<T>, cache: &mut StepCache<T>) {
        let p = &self.levels[l];
        gated_update(&p.w, &p.b, self.output_tanh, f_in, state, cache);
    }

    pub(crate) fn head_forward(&self, l: usize, out: &[T], side: &[T; SIDE_LEN], cache: &mut HeadCache<T>) {
        let p = &self.levels[l];
        cache.u.clear();
        cache.u.extend_from_slice(out);
        cache.u.extend_from_slice(side);
        cache.a.clear();
        cache.a.resize(HIDDEN2[l], T::zero());
        kernels::fc_forward(&cache.u, p.fc2.data(), &mut cache.a);
        relu_inplace(&mut cache.a);
        cache.a.extend_from_slice(side);
        cache.p.clear();
        cache.p.resize(HEAD_OUT[l], T::zero());
        kernels::fc_forward(&cache.a, p.out.data(), &mut cache.p);
        for v in cache.p.iter_mut() {
            *v = kernels::sigmoid(*v);
        }
    }

    /// One step of the level-`level` (0-based) cell.
    pub fn cell_step(&self, level: usize, f_in: &[T], state: &mut LevelState<T>) -> Result<()> {
        let h = HIDDEN1[level];
        if f_in.len() != h || state.c.len() != h || state.out.len() != h {
            return Err(Error::shape(h, format!("input {}, state {}/{}", f_in.len(), state.c.len(), state.out.len())));
        }
        self.cell_forward(level, f_in, state, &mut StepCache::default());
        Ok(())
    }

    /// Advances every level by one frame and evaluates the heads. All cell
    /// states advance even when early termination skips a head.
    pub fn step(
        &self,
        input: &FrameInput<T>,
        state: &mut LstmState<T>,
        early_term: Option<&ThresholdSet>,
    ) -> Result<(HcpmProb, [bool; 3])> {
        let side = input.side.vector::<T>()?;
        for l in 0..3 {
            self.cell_step(l, &input.features.f1[l], &mut state.levels[l])?;
        }
        let not_split = |level: usize, p: f32| early_term.is_some_and(|t| t.decide(level, p as f64) == Decision::NotSplit);
        let mut prob = HcpmProb::default();
        let mut heads = [false; 3];
        let mut hc = HeadCache::default();
        for l in 0..3 {
            let skip = match l {
                0 => false,
                1 => not_split(1, prob.probs[0]),
                _ => !heads[1] || (1..5).all(|c| not_split(2, prob.probs[c])),
            };
            if skip {
                break;
            }
            self.head_forward(l, &state.levels[l].out, &side, &mut hc);
            heads[l] = true;
            for (k, &p) in hc.p.iter().enumerate() {
                prob.probs[LEVEL_OFFSET[l] + k] = p.to_f32().unwrap_or(f32::NAN);
                prob.valid[LEVEL_OFFSET[l] + k] = true;
            }
        }
        if early_term.is_some() {
            mask_beneath_not_split(&mut prob, not_split);
        }
        Ok((prob, heads))
    }

    /// Runs one CTU position's frames in encoding order from a zero state.
    pub fn forward_sequence(&self, inputs: &[FrameInput<T>], early_term: Option<&ThresholdSet>) -> Result<Vec<HcpmProb>> {
        let mut state = LstmState::zeros();
        inputs
            .iter()
            .map(|x| self.step(x, &mut state, early_term).map(|(p, _)| p))
            .collect()
    }
}
