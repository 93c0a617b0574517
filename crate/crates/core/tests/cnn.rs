use cupart::cnn::*;
use cupart::codec::CodingMode;
use cupart::dataset::CtuSample;
use cupart::hcpm::{tree_to_hcpm, Hcpm, Label, PartitionTree, ThresholdSet, HCPM_CELLS};
use cupart::nn::{grad_check, ParamSet, Tensor};
use cupart::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn textured_block(seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split_x = rng.random_range(8..56);
    (0..4096)
        .map(|i| {
            let (x, y) = (i % 64, i / 64);
            let base = if x < split_x { 60.0 } else { 170.0 };
            let wave = 40.0 * ((x as f64) * 0.7 + (y as f64) * 0.3).sin();
            (base + wave + rng.random_range(-10.0..10.0f64)).clamp(0.0, 255.0) as u8
        })
        .collect()
}

fn full_labels() -> Hcpm {
    let mut cells = [Label::Split; HCPM_CELLS];
    for (i, c) in cells.iter_mut().enumerate() {
        if i % 3 == 0 {
            *c = Label::NotSplit;
        }
    }
    // keep the level-1 CTU split so every level is labelled
    cells[0] = Label::Split;
    cells[1] = Label::Split;
    Hcpm::from_cells(fix_nesting(cells)).unwrap()
}

fn fix_nesting(mut cells: [Label; HCPM_CELLS]) -> [Label; HCPM_CELLS] {
    for i in 1..HCPM_CELLS {
        let parent = cupart::hcpm::parent_of(i).unwrap();
        if cells[parent] != Label::Split {
            cells[i] = Label::Null;
        }
    }
    cells
}

#[test]
fn parameter_count_matches_table() {
    assert_eq!(EthCnnParams::<f32>::zeros().param_count(), CNN_PARAM_COUNT);
    assert_eq!(CNN_PARAM_COUNT, 1_287_189);
    assert_eq!(CONCAT_LEN, 96 + 384 + 1536 + 32 + 128 + 512);
}

#[test]
fn flop_rows_and_totals() {
    let r = flop_report(&CnnArch::default());
    let c11 = r.row("C1-1").unwrap();
    assert_eq!((c11.params, c11.adds, c11.mults), (256, 3_840, 4_096));
    let f23 = r.row("f2-3").unwrap();
    assert_eq!((f23.params, f23.adds, f23.mults), (49_344, 49_152, 49_344));
    let c21 = r.row("C2-1").unwrap();
    assert_eq!(c21.adds, 4_608);
    assert_eq!((r.total_params, r.total_adds, r.total_mults), (1_287_189, 1_497_584, 1_552_149));
    assert_eq!(r.total_params, r.rows.iter().map(|x| x.params).sum::<u64>());
}

#[test]
fn zero_weights_give_one_half_everywhere() {
    let p = EthCnnParams::<f32>::zeros();
    let out = p.forward(&textured_block(1), 32, None).unwrap();
    assert!(out.prob.valid.iter().all(|&v| v));
    assert!(out.prob.probs.iter().all(|&v| v == 0.5));
    assert_eq!(out.heads_evaluated, [true; 3]);
}

#[test]
fn features_have_level_widths() {
    let p = EthCnnParams::<f32>::seeded(2);
    let f = p.features(&textured_block(2)).unwrap();
    assert_eq!([f.f1[0].len(), f.f1[1].len(), f.f1[2].len()], [64, 128, 256]);
}

#[test]
fn argument_and_shape_errors() {
    let p = EthCnnParams::<f32>::zeros();
    assert!(matches!(p.forward(&textured_block(0), 52, None), Err(Error::Argument(_))));
    assert!(matches!(p.forward(&[0u8; 10], 22, None), Err(Error::Shape { .. })));
    assert!(matches!(
        train_cnn(&mut EthCnnParams::zeros(), &[], &CnnTrainConfig::default()),
        Err(Error::Argument(_))
    ));
}

#[test]
fn initial_loss_is_ln2_per_valid_cell() {
    let p = EthCnnParams::<f64>::zeros();
    let block = textured_block(3);
    let unsplit = tree_to_hcpm(&PartitionTree::unsplit()).unwrap();
    let (l, _) = p.loss_and_grad(&block, 27, &unsplit, None).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    let full = tree_to_hcpm(&PartitionTree::full_depth()).unwrap();
    let (l, _) = p.loss_and_grad(&block, 27, &full, None).unwrap();
    assert!((l - 21.0 * std::f64::consts::LN_2).abs() < 1e-10);
}

#[test]
fn early_termination_only_hides_cells_below_not_split() {
    let single = ThresholdSet::single();
    for seed in 0..40u64 {
        let p = EthCnnParams::<f32>::seeded(seed);
        let block = textured_block(seed + 100);
        let qp = [22, 27, 32, 37][seed as usize % 4];
        let full = p.forward(&block, qp, None).unwrap().prob;
        let et = p.forward(&block, qp, Some(&single)).unwrap().prob;
        for c in 0..HCPM_CELLS {
            if et.valid[c] {
                assert_eq!(et.probs[c], full.probs[c]);
            }
            let hidden = match cupart::hcpm::parent_of(c) {
                None => false,
                Some(par) => {
                    let grand = cupart::hcpm::parent_of(par);
                    full.probs[par] < 0.5 || grand.is_some_and(|g| full.probs[g] < 0.5)
                }
            };
            assert_eq!(et.valid[c], !hidden, "seed {} cell {}", seed, c);
        }
    }
}

fn forced(l1: f32, l2: f32) -> EthCnnParams {
    let mut p = EthCnnParams::<f32>::zeros();
    let set = |t: &mut Tensor, v: f32| {
        let n = t.dims()[1];
        let rows = t.dims()[0];
        for k in 0..n {
            t.data_mut()[(rows - 1) * n + k] = v;
        }
    };
    set(&mut p.out[0], l1);
    set(&mut p.out[1], l2);
    p
}

#[test]
fn early_termination_savings_bounds() {
    let samples: Vec<CtuSample> = (0..4)
        .map(|i| CtuSample {
            block: textured_block(i),
            qp: 37,
            labels: Hcpm::unsplit(),
            frame_index: i as u32,
            ctu_index: 0,
            mode: CodingMode::Intra,
        })
        .collect();
    let report = flop_report(&CnnArch::default());
    let heads = head_flops(&report);
    let bound = (heads[1] + heads[2]) as f64 / report.total_flops() as f64;
    let single = ThresholdSet::single();
    let s = measure_early_term_savings(&forced(-200.0, 0.0), &samples, &single).unwrap();
    assert!((s[&37] - bound).abs() < 1e-12);
    let s = measure_early_term_savings(&forced(200.0, 200.0), &samples, &single).unwrap();
    assert_eq!(s[&37], 0.0);
    let s = measure_early_term_savings(&forced(200.0, -200.0), &samples, &single).unwrap();
    assert!((s[&37] - heads[2] as f64 / report.total_flops() as f64).abs() < 1e-12);
}

#[test]
fn full_model_gradient_matches_finite_differences() {
    let mut p = EthCnnParams::<f32>::seeded(7).cast::<f64>();
    let block = textured_block(7);
    let labels = full_labels();
    for dropout in [None, Some(99u64)] {
        let (_, g) = p.loss_and_grad(&block, 32, &labels, dropout).unwrap();
        let report = grad_check(
            &mut p,
            &g,
            |q| q.loss_and_grad(&block, 32, &labels, dropout).map(|(l, _)| l),
            1e-5,
            216,
            5,
        )
        .unwrap();
        assert_eq!(report.checked, 216);
        assert!(report.max_rel_error < 1e-3, "{:?}", report.worst);
    }
}

#[test]
fn single_sample_is_memorized() {
    let s = CtuSample {
        block: textured_block(11),
        qp: 27,
        labels: full_labels(),
        frame_index: 0,
        ctu_index: 0,
        mode: CodingMode::Intra,
    };
    let mut p = EthCnnParams::seeded(1);
    let cfg = CnnTrainConfig {
        iterations: 400,
        batch_size: 1,
        ..Default::default()
    };
    let r = train_cnn(&mut p, std::slice::from_ref(&s), &cfg).unwrap();
    assert_eq!(r.loss_curve.len(), 400);
    let loss = evaluate_loss(&p, &[s]).unwrap();
    assert!(loss < 0.01, "loss {}", loss);
}

#[test]
fn shuffler_covers_each_epoch() {
    let mut s = EpochShuffler::new(10, 3);
    let mut first: Vec<usize> = (0..10).map(|_| s.next_index()).collect();
    let second: Vec<usize> = (0..10).map(|_| s.next_index()).collect();
    assert_ne!(first, second);
    first.sort();
    assert_eq!(first, (0..10).collect::<Vec<_>>());
}

