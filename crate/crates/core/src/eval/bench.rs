use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::report::{Predictor, REPORT_SCHEMA};
use crate::codec::{encode_ctu_with_prediction, oracle_rdo, CodingMode, CostModel, SignalPlane};
use crate::dataset::{CtuSample, DatabaseManifest};
use crate::error::{Error, Result};
use crate::hcpm::ThresholdSet;

/// Per-CTU microseconds over repeated runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingStat {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    /// Standard deviation over mean.
    pub cv: f64,
}

impl TimingStat {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len().max(1) as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        let median = match sorted.len() {
            0 => 0.0,
            k if k % 2 == 1 => sorted[k / 2],
            k => 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]),
        };
        TimingStat {
            cv: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
            samples,
            mean,
            median,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: u32,
    pub predictor: String,
    pub ctus: usize,
    pub repeats: usize,
    /// Network inference per CTU.
    pub inference_us: TimingStat,
    /// Exhaustive 85-CU RDO per CTU.
    pub oracle_us: TimingStat,
    /// Prediction-guided encoding per CTU, inference excluded.
    pub guided_us: TimingStat,
    /// Inference share of the prediction-guided total (inference + encode).
    pub inference_share: f64,
    /// Prediction-guided encoding alone is faster than the oracle.
    pub guided_faster_than_oracle: bool,
}

/// Times inference, oracle RDO and prediction-guided encoding over
/// `records`, `repeats` times each. Blocks must be the coded signal.
pub fn cmd_bench(
    predictor: Predictor,
    records: &[CtuSample],
    manifest: &DatabaseManifest,
    thresholds: &ThresholdSet,
    early_term: bool,
    repeats: usize,
) -> Result<BenchReport> {
    if records.is_empty() || repeats == 0 {
        return Err(Error::arg("bench needs at least one record and one repeat"));
    }
    if !manifest.blocks_are_coded_signal() {
        return Err(Error::arg("bench needs a database whose blocks are the coded signal"));
    }
    let model = CostModel::default();
    let residue = manifest.mode == CodingMode::Inter;
    let planes = records
        .iter()
        .map(|r| SignalPlane::from_ctu_block(&r.block, residue))
        .collect::<Result<Vec<_>>>()?;
    let n = records.len() as f64;
    let et = early_term.then_some(thresholds);
    let (mut inf, mut ora, mut gui) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..repeats {
        let t = Instant::now();
        let probs = predictor.predict(records, manifest, et)?;
        inf.push(1e6 * t.elapsed().as_secs_f64() / n);

        let t = Instant::now();
        for (r, p) in records.iter().zip(&planes) {
            std::hint::black_box(oracle_rdo(&model, p, 0, r.qp)?);
        }
        ora.push(1e6 * t.elapsed().as_secs_f64() / n);

        let t = Instant::now();
        for ((r, p), prob) in records.iter().zip(&planes).zip(&probs) {
            std::hint::black_box(encode_ctu_with_prediction(&model, p, 0, r.qp, prob, thresholds)?);
        }
        gui.push(1e6 * t.elapsed().as_secs_f64() / n);
    }
    let (inference_us, oracle_us, guided_us) = (
        TimingStat::from_samples(inf),
        TimingStat::from_samples(ora),
        TimingStat::from_samples(gui),
    );
    let total = inference_us.median + guided_us.median;
    Ok(BenchReport {
        schema: REPORT_SCHEMA,
        predictor: predictor.name(),
        ctus: records.len(),
        repeats,
        inference_share: if total > 0.0 { inference_us.median / total } else { 0.0 },
        guided_faster_than_oracle: guided_us.median < oracle_us.median,
        inference_us,
        oracle_us,
        guided_us,
    })
}
