use cupart::cnn::{CnnFeatures, EthCnnParams, HIDDEN1};
use cupart::codec::CodingMode;
use cupart::dataset::{gen_synthetic, SourceKind, SynthConfig};
use cupart::hcpm::{ThresholdSet, HCPM_CELLS};
use cupart::lstm::*;
use cupart::nn::{grad_check, truncated_normal_tensor, ParamSet, Tensor};
use cupart::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_features<T: cupart::nn::Real>(rng: &mut ChaCha8Rng, scale: f64) -> CnnFeatures<T> {
    let mut v = |n: usize| (0..n).map(|_| T::of(rng.random_range(-scale..scale))).collect::<Vec<T>>();
    CnnFeatures {
        f1: [v(HIDDEN1[0]), v(HIDDEN1[1]), v(HIDDEN1[2])],
    }
}

fn random_sequence(seed: u64, len: usize) -> SequenceSample<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..len)
        .map(|t| FrameInput {
            features: random_features(&mut rng, 1.0),
            side: FrameSideInfo {
                qp: 32,
                gop_order: t % GOP_SIZE,
            },
        })
        .collect();
    let targets = (0..len)
        .map(|_| {
            let mut y = [0.0; 21];
            for v in y.iter_mut() {
                *v = rng.random_range(0..2) as f64;
            }
            (y, [1.0; 21])
        })
        .collect();
    SequenceSample { inputs, targets }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn parameter_counts() {
    let p = EthLstmParams::<f32>::zeros();
    assert_eq!(p.non_bias_param_count(), LSTM_PARAM_COUNT);
    assert_eq!(LSTM_PARAM_COUNT, 757_929);
    assert_eq!(p.bias_param_count(), 4 * (64 + 128 + 256));
    assert_eq!(p.param_count(), LSTM_PARAM_COUNT + p.bias_param_count());
}

#[test]
fn zero_weights_keep_zero_state() {
    let p = EthLstmParams::<f64>::zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random_features::<f64>(&mut rng, 1.0);
    let mut s = LstmState::<f64>::zeros();
    for l in 0..3 {
        p.cell_step(l, &x.f1[l], &mut s.levels[l]).unwrap();
        assert!(s.levels[l].c.iter().all(|&v| v == 0.0));
        assert!(s.levels[l].out.iter().all(|&v| v == 0.0));
    }
    let input = FrameInput {
        features: x,
        side: FrameSideInfo { qp: 22, gop_order: 1 },
    };
    let (prob, heads) = p.step(&input, &mut LstmState::zeros(), None).unwrap();
    assert_eq!(heads, [true; 3]);
    assert!(prob.probs.iter().all(|&v| v == 0.5));
}

#[test]
fn cell_step_rejects_bad_lengths() {
    let p = EthLstmParams::<f32>::zeros();
    let mut s = LstmState::<f32>::zeros();
    assert!(matches!(p.cell_step(0, &[0.0; 63], &mut s.levels[0]), Err(Error::Shape { .. })));
    assert!(matches!(p.cell_step(1, &[0.0; 64], &mut s.levels[1]), Err(Error::Shape { .. })));
}

#[test]
fn two_unit_cell_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n_in, h) = (3, 2);
    let w: [Tensor<f64>; 4] = std::array::from_fn(|_| truncated_normal_tensor(&[n_in + h, h], 0.8, &mut rng));
    let b: [Tensor<f64>; 4] = std::array::from_fn(|_| truncated_normal_tensor(&[h], 0.5, &mut rng));
    let mut state = LevelState {
        c: vec![0.0; h],
        out: vec![0.0; h],
    };
    let (mut c, mut f) = ([0.0f64; 2], [0.0f64; 2]);
    for _ in 0..20 {
        let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-2.0..2.0)).collect();
        let z = [x[0], x[1], x[2], f[0], f[1]];
        let pre = |g: usize, k: usize| -> f64 {
            let mut s = b[g].data()[k];
            for (j, zj) in z.iter().enumerate() {
                s += zj * w[g].data()[j * h + k];
            }
            s
        };
        let mut next_c = [0.0; 2];
        let mut next_f = [0.0; 2];
        for k in 0..h {
            let i = sigmoid(pre(GATE_I, k));
            let o = sigmoid(pre(GATE_O, k));
            let g = sigmoid(pre(GATE_F, k));
            next_c[k] = i * pre(GATE_C, k).tanh() + g * c[k];
            next_f[k] = o * next_c[k];
        }
        c = next_c;
        f = next_f;
        lstm_cell_update(&w, &b, &x, &mut state).unwrap();
        for k in 0..h {
            assert!((state.c[k] - c[k]).abs() < 1e-6);
            assert!((state.out[k] - f[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn level_cell_matches_scalar_oracle() {
    let p = EthLstmParams::<f32>::seeded(9).cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let lp = &p.levels[0];
    let h = 64;
    let mut state = LevelState {
        c: vec![0.0; h],
        out: vec![0.0; h],
    };
    let (mut c, mut f) = (vec![0.0f64; h], vec![0.0f64; h]);
    for _ in 0..5 {
        let x = random_features::<f64>(&mut rng, 1.0).f1[0].clone();
        let z: Vec<f64> = x.iter().chain(&f).copied().collect();
        let pre = |g: usize, k: usize| -> f64 { (0..2 * h).map(|j| z[j] * lp.w[g].data()[j * h + k]).sum::<f64>() };
        let nc: Vec<f64> = (0..h)
            .map(|k| sigmoid(pre(GATE_I, k)) * pre(GATE_C, k).tanh() + sigmoid(pre(GATE_F, k)) * c[k])
            .collect();
        f = (0..h).map(|k| sigmoid(pre(GATE_O, k)) * nc[k]).collect();
        c = nc;
        p.cell_step(0, &x, &mut state).unwrap();
        for k in 0..h {
            assert!((state.c[k] - c[k]).abs() < 1e-6);
            assert!((state.out[k] - f[k]).abs() < 1e-6);
        }
    }
}

#[test]
fn forced_gates_give_perfect_memory() {
    let mut p = EthLstmParams::<f64>::seeded(3);
    for lp in p.levels.iter_mut() {
        lp.b[GATE_F].fill(60.0);
        lp.b[GATE_I].fill(-60.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = LstmState::<f64>::zeros();
    s.levels[0].c = (0..64).map(|k| k as f64 * 0.1 - 3.0).collect();
    let before = s.levels[0].c.clone();
    for _ in 0..10 {
        let x = random_features::<f64>(&mut rng, 0.5);
        p.cell_step(0, &x.f1[0], &mut s.levels[0]).unwrap();
        for (a, b) in s.levels[0].c.iter().zip(&before) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn states_stay_bounded_over_long_runs() {
    let p = EthLstmParams::<f32>::seeded(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = LstmState::<f32>::zeros();
    for t in 0..1000 {
        let prev: Vec<f32> = s.levels[2].c.clone();
        let input = FrameInput {
            features: random_features::<f32>(&mut rng, 5.0),
            side: FrameSideInfo {
                qp: rng.random_range(0..=51),
                gop_order: t % GOP_SIZE,
            },
        };
        let (prob, _) = p.step(&input, &mut s, None).unwrap();
        assert!(s.is_finite());
        assert!(prob.probs.iter().all(|&v| v > 0.0 && v < 1.0));
        for (c, q) in s.levels[2].c.iter().zip(&prev) {
            // |c(t)| < 1 + |c(t−1)| since i, g ∈ (0, 1) and |tanh| < 1
            assert!(c.abs() < 1.0 + q.abs() + 1e-6);
        }
    }
}

fn constant_residue_run(gop: Option<usize>, frames: usize) -> Vec<cupart::hcpm::HcpmProb> {
    let cnn = EthCnnParams::<f32>::seeded(1);
    let lstm = EthLstmParams::<f32>::seeded(2);
    let block = vec![128u8; 4096];
    let list: Vec<(u32, &[u8], FrameSideInfo)> = (0..frames)
        .map(|t| {
            let side = FrameSideInfo {
                qp: 27,
                gop_order: gop.unwrap_or(t % GOP_SIZE),
            };
            (t as u32 + 1, block.as_slice(), side)
        })
        .collect();
    forward_blocks(&cnn, &lstm, &list, None).unwrap()
}

#[test]
fn repeated_frames_reach_a_fixed_point() {
    let out = constant_residue_run(Some(2), 16);
    for t in 10..15 {
        for c in 0..HCPM_CELLS {
            assert!((out[t + 1].probs[c] - out[t].probs[c]).abs() < 1e-4);
        }
    }
    let cyc = constant_residue_run(None, 24);
    for t in 10..20 {
        for c in 0..HCPM_CELLS {
            assert!((cyc[t + 4].probs[c] - cyc[t].probs[c]).abs() < 1e-4);
        }
    }
}

#[test]
fn sequences_start_from_a_zero_state() {
    let lstm = EthLstmParams::<f64>::seeded(6);
    let a = random_sequence(1, 7);
    let b = random_sequence(2, 5);
    let alone = lstm.forward_sequence(&b.inputs, None).unwrap();
    lstm.forward_sequence(&a.inputs, None).unwrap();
    let after = lstm.forward_sequence(&b.inputs, None).unwrap();
    assert_eq!(alone, after);
}

#[test]
fn out_of_order_frames_are_rejected() {
    let cnn = EthCnnParams::<f32>::zeros();
    let lstm = EthLstmParams::<f32>::zeros();
    let block = vec![128u8; 4096];
    let side = FrameSideInfo { qp: 22, gop_order: 0 };
    let list = vec![(3, block.as_slice(), side), (2, block.as_slice(), side)];
    assert!(matches!(forward_blocks(&cnn, &lstm, &list, None), Err(Error::Sequence(_))));
    let side = FrameSideInfo { qp: 22, gop_order: 4 };
    assert!(forward_blocks(&cnn, &lstm, &[(1, block.as_slice(), side)], None).is_err());
}

#[test]
fn early_termination_matches_full_output_when_nothing_is_cut() {
    let mut lstm = EthLstmParams::<f64>::seeded(8);
    for l in 0..2 {
        let n = lstm.levels[l].out.dims()[1];
        let rows = lstm.levels[l].out.dims()[0];
        // the QP side input feeds the last-but-four row
        for k in 0..n {
            lstm.levels[l].out.data_mut()[(rows - 5) * n + k] = 100.0;
        }
    }
    let seq = random_sequence(8, 6);
    let single = ThresholdSet::single();
    let full = lstm.forward_sequence(&seq.inputs, None).unwrap();
    let et = lstm.forward_sequence(&seq.inputs, Some(&single)).unwrap();
    assert_eq!(full, et);

    let lstm = EthLstmParams::<f64>::seeded(10);
    let full = lstm.forward_sequence(&seq.inputs, None).unwrap();
    let et = lstm.forward_sequence(&seq.inputs, Some(&single)).unwrap();
    for (f, e) in full.iter().zip(&et) {
        for c in 0..HCPM_CELLS {
            if e.valid[c] {
                assert_eq!(e.probs[c], f.probs[c]);
            }
        }
    }
}

#[test]
fn window_stride_arithmetic() {
    assert_eq!(window_starts(30, 20, 10).unwrap(), vec![0, 10]);
    assert_eq!(window_starts(20, 20, 10).unwrap(), vec![0]);
    assert!(window_starts(15, 20, 10).unwrap().is_empty());
    assert!(window_starts(30, 20, 20).is_err());
    assert_eq!(gop_order(1, 0), 0);
    assert_eq!(gop_order(5, 0), 0);
    assert_eq!(gop_order(12, 10), 1);
}

#[test]
fn bptt_matches_finite_differences() {
    for (seed, len) in [(1u64, 5usize), (2, 3)] {
        let mut p = EthLstmParams::<f32>::seeded(seed).cast::<f64>();
        for lp in p.levels.iter_mut() {
            for b in lp.b.iter_mut() {
                b.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = ((i % 7) as f64 - 3.0) * 0.05);
            }
        }
        let s = random_sequence(seed, len);
        let mut g = EthLstmParams::zeros();
        p.window_loss_grad(&s.inputs, &s.targets, &mut g).unwrap();
        let report = grad_check(
            &mut p,
            &g,
            |q| q.window_loss_grad(&s.inputs, &s.targets, &mut EthLstmParams::zeros()),
            1e-5,
            240,
            seed,
        )
        .unwrap();
        assert_eq!(report.checked, 240);
        assert!(report.max_rel_error < 1e-3, "{:?}", report.worst);
    }
}

#[test]
fn single_frame_window_has_no_recurrent_gradient() {
    let mut p = EthLstmParams::<f32>::seeded(12).cast::<f64>();
    let s = random_sequence(12, 1);
    let mut g = EthLstmParams::zeros();
    p.window_loss_grad(&s.inputs, &s.targets, &mut g).unwrap();
    for l in 0..3 {
        let h = HIDDEN1[l];
        for gate in 0..4 {
            let w = g.levels[l].w[gate].data();
            // the forget gate multiplies c(0) = 0
            assert_eq!(w[..h * h].iter().any(|&v| v != 0.0), gate != GATE_F);
            assert!(w[h * h..].iter().all(|&v| v == 0.0));
        }
    }
    let report = grad_check(
        &mut p,
        &g,
        |q| q.window_loss_grad(&s.inputs, &s.targets, &mut EthLstmParams::zeros()),
        1e-5,
        200,
        1,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-3, "{:?}", report.worst);
}

#[test]
fn single_window_is_memorized() {
    let s64 = random_sequence(21, 20);
    let s = SequenceSample {
        inputs: s64
            .inputs
            .iter()
            .map(|x| FrameInput {
                features: CnnFeatures {
                    f1: x.features.f1.clone().map(|v| v.iter().map(|&a| a as f32).collect()),
                },
                side: x.side,
            })
            .collect(),
        targets: s64
            .targets
            .iter()
            .map(|(y, m)| (y.map(|v| v as f32), m.map(|v| v as f32)))
            .collect(),
    };
    let mut p = EthLstmParams::<f32>::seeded(21);
    let cfg = LstmTrainConfig {
        iterations: 400,
        batch_size: 1,
        ..Default::default()
    };
    let report = train_lstm(&mut p, std::slice::from_ref(&s), &cfg).unwrap();
    assert_eq!(report.windows, 1);
    let mut g = EthLstmParams::zeros();
    let loss = p.window_loss_grad(&s.inputs, &s.targets, &mut g).unwrap() / 20.0;
    assert!(loss < 0.01, "loss {}", loss);
}

#[test]
fn short_sequences_are_skipped() {
    let s = random_sequence(1, 10);
    let s = SequenceSample {
        inputs: s.inputs.iter().map(|x| FrameInput { features: CnnFeatures { f1: x.features.f1.clone().map(|v| v.iter().map(|&a| a as f32).collect()) }, side: x.side }).collect(),
        targets: s.targets.iter().map(|(y, m)| (y.map(|v| v as f32), m.map(|v| v as f32))).collect(),
    };
    let mut p = EthLstmParams::<f32>::zeros();
    assert!(train_lstm(&mut p, &[s], &LstmTrainConfig::default()).is_err());
}

#[test]
fn flop_rows_match_table() {
    let r = lstm_flop_report(&LstmArch::default());
    let g1 = r.row("i/o/g-1").unwrap();
    assert_eq!((g1.count, g1.params, g1.adds, g1.mults), (3, 8_192, 8_128, 8_192));
    let c1 = r.row("c-1").unwrap();
    assert_eq!((c1.params, c1.adds, c1.mults), (8_192, 8_255, 8_320));
    assert_eq!(r.row("f'2-2").unwrap().params, 12_768);
    assert_eq!(r.row("f'2-1").unwrap().params, 3_312);
    assert_eq!((r.total_params, r.total_adds, r.total_mults), (757_929, 757_118, 759_273));
}

#[test]
fn depth_correlation_oracles() {
    let map: DepthMap = (0..64).map(|i| (i % 4) as u8).collect();
    let pts = depth_correlation(&[vec![map.clone(); 9]], &[1, 2]).unwrap();
    for p in &pts {
        assert!((p.cc.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(p.mse, 0.0);
    }
    assert_eq!(pts[1].frame_distance, 8);

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let seq: Vec<DepthMap> = (0..5).map(|_| (0..2000).map(|_| rng.random_range(0..4)).collect()).collect();
    let p = &depth_correlation(&[seq], &[1]).unwrap()[0];
    assert!(p.pairs >= 1000);
    assert!(p.cc.unwrap().abs() < 0.1);

    let flat = vec![vec![2u8; 64]; 6];
    let p = &depth_correlation(&[flat], &[1]).unwrap()[0];
    assert!(p.cc.is_none());
    assert!(depth_correlation(&[vec![map.clone()]], &[1]).is_err());
    assert!(depth_correlation(&[vec![map.clone(); 5]], &[0]).is_err());
}

#[test]
fn depth_correlation_falls_with_distance() {
    let cfg = SynthConfig {
        frames: 41,
        ..SynthConfig::default()
    };
    let seqs = gen_synthetic(4, 3, SourceKind::Sequence, &cfg).unwrap();
    let maps: Vec<Vec<DepthMap>> = seqs
        .iter()
        .map(|f| oracle_depth_maps(f, 32, CodingMode::Intra).unwrap())
        .collect();
    let pts = depth_correlation(&maps, &[1, 2, 3, 4, 5]).unwrap();
    for w in pts.windows(2) {
        assert!(w[1].cc.unwrap() <= w[0].cc.unwrap() + 1e-9, "{:?}", pts);
    }
}
