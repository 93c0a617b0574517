use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::params::{EthCnnParams, BRANCH_INPUT, CONCAT_LEN, CONV_SPECS, HEAD_OUT, HIDDEN1, HIDDEN2};
use crate::dataset::CtuSample;
use crate::error::Result;
use crate::hcpm::ThresholdSet;
use crate::nn::{FlopReport, FlopRow};

/// Layer sizes that determine the accounting; `bias` adds one bias per
/// output unit to every layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArch {
    pub hidden1: [usize; 3],
    pub hidden2: [usize; 3],
    pub bias: bool,
}

impl Default for CnnArch {
    fn default() -> Self {
        CnnArch {
            hidden1: HIDDEN1,
            hidden2: HIDDEN2,
            bias: false,
        }
    }
}

/// Per-layer parameters and arithmetic. Convolutions count
/// `out·k²·Cin` multiplications and `out·(k²−1)·Cin` additions, i.e. the
/// products of one input channel are summed but channels are not
/// accumulated, which is the convention of the reference table.
pub fn flop_report(arch: &CnnArch) -> FlopReport {
    let mut rows = Vec::new();
    for (layer, spec) in CONV_SPECS.iter().enumerate() {
        for (b, &input) in BRANCH_INPUT.iter().enumerate() {
            let mut side = input;
            for s in &CONV_SPECS[..=layer] {
                side /= s.kernel;
            }
            let out = (side * side * spec.out_channels) as u64;
            let k2 = (spec.kernel * spec.kernel) as u64;
            let cin = spec.in_channels as u64;
            let bias = if arch.bias { spec.out_channels as u64 } else { 0 };
            rows.push(FlopRow::new(
                format!("C{}-{}", layer + 1, b + 1),
                spec.param_count() as u64 + bias,
                out * (k2 - 1) * cin + if arch.bias { out } else { 0 },
                out * k2 * cin,
            ));
        }
    }
    for l in 0..3 {
        rows.push(FlopRow::dense(format!("f1-{}", l + 1), CONCAT_LEN, arch.hidden1[l], arch.bias));
    }
    for l in 0..3 {
        rows.push(FlopRow::dense(format!("f2-{}", l + 1), arch.hidden1[l] + 1, arch.hidden2[l], arch.bias));
    }
    for l in 0..3 {
        rows.push(FlopRow::dense(format!("y{}", l + 1), arch.hidden2[l] + 1, HEAD_OUT[l], arch.bias));
    }
    FlopReport::from_rows(rows)
}

/// Additions plus multiplications of the three fully connected layers of
/// each level's head.
pub fn head_flops(report: &FlopReport) -> [u64; 3] {
    std::array::from_fn(|l| {
        ["f1", "f2", "y"]
            .iter()
            .map(|p| {
                let name = if *p == "y" {
                    format!("y{}", l + 1)
                } else {
                    format!("{}-{}", p, l + 1)
                };
                report.row(&name).map_or(0, |r| r.adds + r.mults)
            })
            .sum()
    })
}

/// Mean fraction of per-CTU FLOPs skipped by early termination, per QP.
pub fn measure_early_term_savings(
    params: &EthCnnParams,
    samples: &[CtuSample],
    thresholds: &ThresholdSet,
) -> Result<BTreeMap<u8, f64>> {
    let report = flop_report(&CnnArch::default());
    let heads = head_flops(&report);
    let total = report.total_flops() as f64;
    let mut acc: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    for s in samples {
        let out = params.forward(&s.block, s.qp, Some(thresholds))?;
        let skipped: u64 = (0..3).filter(|&l| !out.heads_evaluated[l]).map(|l| heads[l]).sum();
        let e = acc.entry(s.qp).or_insert((0.0, 0));
        e.0 += skipped as f64 / total;
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(qp, (s, n))| (qp, s / n as f64)).collect())
}
