use rand::Rng;

use super::params::{EthCnnParams, BRANCH_INPUT, CONCAT_LEN, CONV_SPECS, HEAD_OUT, HIDDEN1, HIDDEN2};
use super::preprocess::{preprocess, BranchInputs};
use crate::error::{Error, Result};
use crate::hcpm::{Decision, HcpmProb, ThresholdSet};
use crate::nn::{kernels, relu_inplace, Dropout, Real};

/// First cell of each HCPM level.
pub const LEVEL_OFFSET: [usize; 3] = [0, 1, 5];

/// Offsets of (C2 b1, C2 b2, C2 b3, C3 b1, C3 b2, C3 b3) in the
/// concatenated trunk vector.
const CONCAT_PARTS: [(usize, usize, usize); 6] = [
    (0, 1, 96),
    (96, 1, 384),
    (480, 1, 1536),
    (2016, 2, 32),
    (2048, 2, 128),
    (2176, 2, 512),
];

/// First-hidden-layer outputs per level (lengths 64, 128, 256).
#[derive(Clone, Debug, PartialEq)]
pub struct CnnFeatures<T = f32> {
    pub f1: [Vec<T>; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnOutput {
    pub prob: HcpmProb,
    /// Levels whose head was evaluated.
    pub heads_evaluated: [bool; 3],
}

pub(crate) fn qp_feature<T: Real>(qp: u8) -> Result<T> {
    if qp > 51 {
        return Err(Error::arg(format!("qp {} outside [0, 51]", qp)));
    }
    Ok(T::of(qp as f64 / 51.0))
}

/// Activations of one forward pass, kept for backpropagation.
#[derive(Clone, Debug, Default)]
pub(crate) struct Trace<T> {
    /// `act[branch][layer]`, post-ReLU.
    pub act: [[Vec<T>; 3]; 3],
    pub concat: Vec<T>,
    /// Post-ReLU, post-dropout first hidden layer with the QP appended.
    pub h1: [Vec<T>; 3],
    pub mask1: [Vec<T>; 3],
    pub h2: [Vec<T>; 3],
    pub mask2: [Vec<T>; 3],
    pub prob: [Vec<T>; 3],
}

impl<T: Real> EthCnnParams<T> {
    pub(crate) fn trunk(&self, x: &BranchInputs<T>, tr: &mut Trace<T>) {
        tr.concat.clear();
        tr.concat.resize(CONCAT_LEN, T::zero());
        for b in 0..3 {
            let mut side = BRANCH_INPUT[b];
            for (l, spec) in CONV_SPECS.iter().enumerate() {
                let out_side = side / spec.kernel;
                let mut out = std::mem::take(&mut tr.act[b][l]);
                out.clear();
                out.resize(out_side * out_side * spec.out_channels, T::zero());
                let input: &[T] = if l == 0 { x.branch(b) } else { &tr.act[b][l - 1] };
                kernels::conv_forward(input, side, side, spec, self.conv_weights(b, l).data(), &mut out);
                relu_inplace(&mut out);
                tr.act[b][l] = out;
                side = out_side;
            }
        }
        for (k, &(off, layer, len)) in CONCAT_PARTS.iter().enumerate() {
            let src = &tr.act[k % 3][layer];
            debug_assert_eq!(src.len(), len);
            tr.concat[off..off + len].copy_from_slice(src);
        }
    }

    /// Evaluates the level-`l` head (0-based) on the current trunk output.
    /// With `dropout`, rates 0.5 and 0.2 apply after the two hidden layers.
    pub(crate) fn head<R: Rng>(
        &self,
        l: usize,
        qp: T,
        tr: &mut Trace<T>,
        dropout: Option<(&[Dropout; 2], &mut R)>,
    ) {
        let mut h1 = std::mem::take(&mut tr.h1[l]);
        h1.clear();
        h1.resize(HIDDEN1[l], T::zero());
        kernels::fc_forward(&tr.concat, self.fc1[l].data(), &mut h1);
        relu_inplace(&mut h1);
        let mut h2 = std::mem::take(&mut tr.h2[l]);
        h2.clear();
        h2.resize(HIDDEN2[l], T::zero());
        match dropout {
            Some((d, rng)) => {
                d[0].apply(&mut h1, &mut tr.mask1[l], rng);
                h1.push(qp);
                kernels::fc_forward(&h1, self.fc2[l].data(), &mut h2);
                relu_inplace(&mut h2);
                d[1].apply(&mut h2, &mut tr.mask2[l], rng);
            }
            None => {
                tr.mask1[l].clear();
                tr.mask2[l].clear();
                h1.push(qp);
                kernels::fc_forward(&h1, self.fc2[l].data(), &mut h2);
                relu_inplace(&mut h2);
            }
        }
        h2.push(qp);
        let mut p = std::mem::take(&mut tr.prob[l]);
        p.clear();
        p.resize(HEAD_OUT[l], T::zero());
        kernels::fc_forward(&h2, self.out[l].data(), &mut p);
        for v in p.iter_mut() {
            *v = kernels::sigmoid(*v);
        }
        tr.h1[l] = h1;
        tr.h2[l] = h2;
        tr.prob[l] = p;
    }

    /// Backpropagates `dL/dlogit` of the heads listed in `grad_logits` and
    /// accumulates parameter gradients into `grads`.
    pub(crate) fn backward(
        &self,
        x: &BranchInputs<T>,
        tr: &Trace<T>,
        grad_logits: [Option<&[T]>; 3],
        grads: &mut EthCnnParams<T>,
    ) {
        let mut g_concat = vec![T::zero(); CONCAT_LEN];
        let mut tmp = vec![T::zero(); CONCAT_LEN];
        for l in 0..3 {
            let Some(g_out) = grad_logits[l] else { continue };
            let mut g_h2 = vec![T::zero(); HIDDEN2[l] + 1];
            kernels::fc_backward(&tr.h2[l], self.out[l].data(), g_out, grads.out[l].data_mut(), Some(&mut g_h2));
            g_h2.pop();
            gate_back(&mut g_h2, &tr.h2[l], &tr.mask2[l]);

            let mut g_h1 = vec![T::zero(); HIDDEN1[l] + 1];
            kernels::fc_backward(&tr.h1[l], self.fc2[l].data(), &g_h2, grads.fc2[l].data_mut(), Some(&mut g_h1));
            g_h1.pop();
            gate_back(&mut g_h1, &tr.h1[l], &tr.mask1[l]);

            kernels::fc_backward(&tr.concat, self.fc1[l].data(), &g_h1, grads.fc1[l].data_mut(), Some(&mut tmp));
            for (a, &b) in g_concat.iter_mut().zip(&tmp) {
                *a += b;
            }
        }
        for b in 0..3 {
            let (c2, _, n2) = CONCAT_PARTS[b];
            let (c3, _, n3) = CONCAT_PARTS[3 + b];
            let s0 = BRANCH_INPUT[b];
            let s1 = s0 / CONV_SPECS[0].kernel;
            let s2 = s1 / CONV_SPECS[1].kernel;

            let mut g3 = g_concat[c3..c3 + n3].to_vec();
            gate_back(&mut g3, &tr.act[b][2], &[]);
            let mut g2 = vec![T::zero(); tr.act[b][1].len()];
            kernels::conv_backward(
                &tr.act[b][1],
                s2,
                s2,
                &CONV_SPECS[2],
                self.conv_weights(b, 2).data(),
                &g3,
                grads.conv[3 * b + 2].data_mut(),
                Some(&mut g2),
            );
            for (a, &v) in g2.iter_mut().zip(&g_concat[c2..c2 + n2]) {
                *a += v;
            }
            gate_back(&mut g2, &tr.act[b][1], &[]);
            let mut g1 = vec![T::zero(); tr.act[b][0].len()];
            kernels::conv_backward(
                &tr.act[b][0],
                s1,
                s1,
                &CONV_SPECS[1],
                self.conv_weights(b, 1).data(),
                &g2,
                grads.conv[3 * b + 1].data_mut(),
                Some(&mut g1),
            );
            gate_back(&mut g1, &tr.act[b][0], &[]);
            kernels::conv_backward(
                x.branch(b),
                s0,
                s0,
                &CONV_SPECS[0],
                self.conv_weights(b, 0).data(),
                &g1,
                grads.conv[3 * b].data_mut(),
                None,
            );
        }
    }

    /// Forward pass plus masked cross-entropy over all 21 cells; adds the
    /// sample's gradient to `grads` and returns its loss. Heads whose level
    /// carries no valid label are skipped entirely.
    pub(crate) fn accumulate<R: Rng>(
        &self,
        x: &BranchInputs<T>,
        qp: T,
        target: &[T; 21],
        mask: &[T; 21],
        dropout: Option<(&[Dropout; 2], &mut R)>,
        tr: &mut Trace<T>,
        grads: &mut EthCnnParams<T>,
    ) -> T {
        self.trunk(x, tr);
        let active: [bool; 3] =
            std::array::from_fn(|l| mask[LEVEL_OFFSET[l]..LEVEL_OFFSET[l] + HEAD_OUT[l]].iter().any(|&m| m != T::zero()));
        let mut dropout = dropout;
        for l in 0..3 {
            if active[l] {
                match dropout.as_mut() {
                    Some((d, rng)) => self.head(l, qp, tr, Some((*d, &mut **rng))),
                    None => self.head::<R>(l, qp, tr, None),
                }
            }
        }
        let mut loss = T::zero();
        let mut g: [Vec<T>; 3] = std::array::from_fn(|l| vec![T::zero(); HEAD_OUT[l]]);
        for l in 0..3 {
            if active[l] {
                let r = LEVEL_OFFSET[l]..LEVEL_OFFSET[l] + HEAD_OUT[l];
                loss += crate::nn::masked_logit_grad(&tr.prob[l], &target[r.clone()], &mask[r], &mut g[l]);
            }
        }
        let gl: [Option<&[T]>; 3] = std::array::from_fn(|l| active[l].then_some(&g[l][..]));
        self.backward(x, tr, gl, grads);
        loss
    }

    /// Loss and full gradient of one sample. With `dropout_seed`, dropout
    /// masks are drawn from a fresh generator with that seed, so repeated
    /// calls see identical masks.
    pub fn loss_and_grad(
        &self,
        block: &[u8],
        qp: u8,
        labels: &crate::hcpm::Hcpm,
        dropout_seed: Option<u64>,
    ) -> Result<(T, EthCnnParams<T>)> {
        let x = preprocess::<T>(block)?;
        let qpf = qp_feature::<T>(qp)?;
        let (y, m) = labels.targets();
        let y: [T; 21] = std::array::from_fn(|i| T::of(y[i] as f64));
        let m: [T; 21] = std::array::from_fn(|i| T::of(m[i] as f64));
        let mut grads = EthCnnParams::zeros();
        let mut tr = Trace::default();
        let loss = match dropout_seed {
            Some(seed) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let d = super::params::dropout_layers();
                self.accumulate(&x, qpf, &y, &m, Some((&d, &mut rng)), &mut tr, &mut grads)
            }
            None => self.accumulate::<rand_chacha::ChaCha8Rng>(&x, qpf, &y, &m, None, &mut tr, &mut grads),
        };
        Ok((loss, grads))
    }

    /// Inference. With `early_term`, level-2/3 heads are skipped beneath
    /// `NotSplit` decisions under the given thresholds and the cells below
    /// such decisions are reported invalid.
    pub fn forward(&self, block: &[u8], qp: u8, early_term: Option<&ThresholdSet>) -> Result<CnnOutput> {
        let x = preprocess::<T>(block)?;
        self.forward_inputs(&x, qp, early_term)
    }

    pub fn forward_inputs(&self, x: &BranchInputs<T>, qp: u8, early_term: Option<&ThresholdSet>) -> Result<CnnOutput> {
        let qpf = qp_feature::<T>(qp)?;
        let mut tr = Trace::default();
        self.trunk(x, &mut tr);
        let mut heads = [true, false, false];
        self.head::<rand_chacha::ChaCha8Rng>(0, qpf, &mut tr, None);
        let not_split = |level: usize, p: T| {
            early_term.is_some_and(|t| t.decide(level, p.to_f32().unwrap_or(0.0) as f64) == Decision::NotSplit)
        };
        if !not_split(1, tr.prob[0][0]) {
            self.head::<rand_chacha::ChaCha8Rng>(1, qpf, &mut tr, None);
            heads[1] = true;
            if !tr.prob[1].iter().all(|&p| not_split(2, p)) {
                self.head::<rand_chacha::ChaCha8Rng>(2, qpf, &mut tr, None);
                heads[2] = true;
            }
        }
        let mut prob = HcpmProb::default();
        for l in 0..3 {
            if !heads[l] {
                continue;
            }
            for (k, &p) in tr.prob[l].iter().enumerate() {
                let cell = LEVEL_OFFSET[l] + k;
                prob.probs[cell] = p.to_f32().unwrap_or(f32::NAN);
                prob.valid[cell] = true;
            }
        }
        if early_term.is_some() {
            mask_beneath_not_split(&mut prob, |level, p| not_split(level, T::of(p as f64)));
        }
        Ok(CnnOutput {
            prob,
            heads_evaluated: heads,
        })
    }

    /// First-hidden-layer features of every level (no early termination).
    pub fn features(&self, block: &[u8]) -> Result<CnnFeatures<T>> {
        let x = preprocess::<T>(block)?;
        Ok(self.features_inputs(&x))
    }

    pub fn features_inputs(&self, x: &BranchInputs<T>) -> CnnFeatures<T> {
        let mut tr = Trace::default();
        self.trunk(x, &mut tr);
        CnnFeatures {
            f1: std::array::from_fn(|l| {
                let mut h = vec![T::zero(); HIDDEN1[l]];
                kernels::fc_forward(&tr.concat, self.fc1[l].data(), &mut h);
                relu_inplace(&mut h);
                h
            }),
        }
    }
}

/// Invalidates every cell whose parent is missing or decided `NotSplit`.
pub(crate) fn mask_beneath_not_split(prob: &mut HcpmProb, not_split: impl Fn(usize, f32) -> bool) {
    for cell in 1..21 {
        let parent = crate::hcpm::parent_of(cell).expect("non-root cell");
        let level = crate::hcpm::level_of(parent);
        if !prob.valid[parent] || not_split(level, prob.probs[parent]) {
            prob.valid[cell] = false;
            prob.probs[cell] = 0.0;
        }
    }
}

/// Gradient through `dropout(relu(z))` given the stored post-dropout output.
fn gate_back<T: Real>(g: &mut [T], out: &[T], mask: &[T]) {
    for (i, gv) in g.iter_mut().enumerate() {
        if out[i] > T::zero() {
            if let Some(&m) = mask.get(i) {
                *gv *= m;
            }
        } else {
            *gv = T::zero();
        }
    }
}
