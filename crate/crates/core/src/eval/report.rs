use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cnn::{mask_beneath_not_split, EthCnnParams};
use crate::codec::{encode_ctu_with_prediction, oracle_rdo, CodingMode, CostModel, SignalPlane, CU_COUNT};
use crate::dataset::{BlockInput, CtuSample, DatabaseManifest};
use crate::error::{Error, Result};
use crate::hcpm::{level_of, tree_to_hcpm, Decision, Hcpm, HcpmProb, Label, ThresholdSet, HCPM_CELLS};
use crate::lstm::{predict_records, EthLstmParams};

/// Version of the JSON and CSV report layouts.
pub const REPORT_SCHEMA: u32 = 1;

/// Source of split probabilities for an evaluation.
#[derive(Clone, Copy, Debug)]
pub enum Predictor<'a> {
    /// The database's own oracle labels as hard probabilities.
    Oracle,
    /// The same probability for every cell.
    Constant(f32),
    Cnn(&'a EthCnnParams),
    /// CNN features fed step-wise through the LSTM (inter databases only).
    CnnLstm(&'a EthCnnParams, &'a EthLstmParams),
}

impl Predictor<'_> {
    pub fn name(&self) -> String {
        match self {
            Predictor::Oracle => "oracle".into(),
            Predictor::Constant(p) => format!("constant-{}", p),
            Predictor::Cnn(_) => "cnn".into(),
            Predictor::CnnLstm(..) => "cnn-lstm".into(),
        }
    }

    /// Predictions aligned with `records`. With `early_term` the networks
    /// skip heads beneath `NotSplit` decisions.
    pub fn predict(
        &self,
        records: &[CtuSample],
        manifest: &DatabaseManifest,
        early_term: Option<&ThresholdSet>,
    ) -> Result<Vec<HcpmProb>> {
        let mask = |mut p: HcpmProb| {
            if let Some(t) = early_term {
                apply_early_term(&mut p, t);
            }
            p
        };
        match self {
            Predictor::Oracle => Ok(records.iter().map(|r| mask(HcpmProb::from_labels(&r.labels))).collect()),
            Predictor::Constant(p) => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::arg(format!("constant probability {} outside [0, 1]", p)));
                }
                Ok(vec![mask(HcpmProb::constant(*p)); records.len()])
            }
            Predictor::Cnn(cnn) => records
                .iter()
                .map(|r| cnn.forward(&r.block, r.qp, early_term).map(|o| o.prob))
                .collect(),
            Predictor::CnnLstm(cnn, lstm) => {
                if manifest.mode != CodingMode::Inter {
                    return Err(Error::arg("the LSTM model needs an inter-mode database"));
                }
                predict_records(cnn, lstm, records, manifest, early_term)
            }
        }
    }
}

/// Invalidates the cells an early-terminated network would not emit.
pub fn apply_early_term(prob: &mut HcpmProb, thresholds: &ThresholdSet) {
    mask_beneath_not_split(prob, |level, p| thresholds.decide(level, p as f64) == Decision::NotSplit);
}

/// Aggregates over one QP (`qp = Some`) or the whole database.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub qp: Option<u8>,
    pub ctus: usize,
    /// Per-level accuracy over non-null ground-truth cells; invalid
    /// predictions count as `NotSplit`, probabilities ≥ 0.5 as `Split`.
    pub accuracy: [Option<f64>; 3],
    pub valid_cells: [u64; 3],
    pub rd_total_oracle: f64,
    pub rd_total_pred: f64,
    /// `(rd_total_pred − rd_total_oracle) / rd_total_oracle`, in percent.
    pub rd_delta: f64,
    pub precoded_cus: u64,
    /// Pre-coded CUs avoided relative to 85 per CTU, in percent.
    pub cu_reduction: f64,
    pub min_precoded_per_ctu: usize,
    pub max_precoded_per_ctu: usize,
}

#[derive(Clone, Debug, Default)]
struct Acc {
    ctus: usize,
    correct: [u64; 3],
    valid: [u64; 3],
    oracle: f64,
    pred: f64,
    precoded: u64,
    min: Option<usize>,
    max: usize,
}

impl Acc {
    fn add(&mut self, prob: &HcpmProb, labels: &Hcpm, oracle: f64, pred: f64, precoded: usize) {
        self.ctus += 1;
        for c in 0..HCPM_CELLS {
            let truth = labels.cells()[c];
            if truth == Label::Null {
                continue;
            }
            let l = level_of(c) - 1;
            let split = prob.valid[c] && prob.probs[c] >= 0.5;
            self.valid[l] += 1;
            self.correct[l] += (split == (truth == Label::Split)) as u64;
        }
        self.oracle += oracle;
        self.pred += pred;
        self.precoded += precoded as u64;
        self.min = Some(self.min.map_or(precoded, |m| m.min(precoded)));
        self.max = self.max.max(precoded);
    }

    fn summary(&self, qp: Option<u8>) -> Summary {
        let full = (CU_COUNT * self.ctus) as f64;
        Summary {
            qp,
            ctus: self.ctus,
            accuracy: std::array::from_fn(|l| (self.valid[l] > 0).then(|| self.correct[l] as f64 / self.valid[l] as f64)),
            valid_cells: self.valid,
            rd_total_oracle: self.oracle,
            rd_total_pred: self.pred,
            rd_delta: if self.oracle > 0.0 {
                100.0 * (self.pred - self.oracle) / self.oracle
            } else {
                0.0
            },
            precoded_cus: self.precoded,
            cu_reduction: if full > 0.0 {
                100.0 * (1.0 - self.precoded as f64 / full)
            } else {
                0.0
            },
            min_precoded_per_ctu: self.min.unwrap_or(0),
            max_precoded_per_ctu: self.max,
        }
    }
}

/// Wall-clock fields; excluded from reproducibility comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub inference_secs: f64,
    pub oracle_secs: f64,
    pub guided_secs: f64,
    pub inference_us_per_ctu: f64,
    pub oracle_us_per_ctu: f64,
    pub guided_us_per_ctu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    pub predictor: String,
    pub mode: CodingMode,
    pub block_input: BlockInput,
    /// Uncertain-zone width the thresholds were derived from, if any.
    pub d: Option<f64>,
    pub thresholds: ThresholdSet,
    pub early_term: bool,
    pub overall: Summary,
    pub per_qp: Vec<Summary>,
    pub timing: Option<Timing>,
}

impl EvalReport {
    /// The report with wall-clock fields removed.
    pub fn without_timing(&self) -> Self {
        EvalReport {
            timing: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Predictions and oracle results for a test database, computed once and
/// reused across threshold settings.
pub struct EvalContext {
    pub predictor: String,
    pub mode: CodingMode,
    pub block_input: BlockInput,
    model: CostModel,
    qps: Vec<u8>,
    labels: Vec<Hcpm>,
    probs: Vec<HcpmProb>,
    planes: Vec<SignalPlane>,
    oracle: Vec<f64>,
    inference_secs: f64,
    oracle_secs: f64,
}

impl EvalContext {
    /// Runs the predictor (without early termination) and the oracle on every
    /// record. When the records' blocks are not the coded signal (inter
    /// databases storing original luma), `coded` must supply the matching
    /// residue database for encoding.
    pub fn new(
        predictor: Predictor,
        records: &[CtuSample],
        manifest: &DatabaseManifest,
        coded: Option<&[CtuSample]>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("empty test database".into()));
        }
        if let Some(r) = records.iter().find(|r| r.mode != manifest.mode) {
            return Err(Error::Data(format!(
                "record of frame {} has mode {:?}, database is {:?}",
                r.frame_index, r.mode, manifest.mode
            )));
        }
        let coded = match (manifest.blocks_are_coded_signal(), coded) {
            (true, _) => records,
            (false, Some(c)) => {
                check_aligned(records, c)?;
                c
            }
            (false, None) => {
                return Err(Error::arg(
                    "database stores original inter blocks; a matching residue database is needed for encoding",
                ))
            }
        };
        let start = Instant::now();
        let probs = predictor.predict(records, manifest, None)?;
        let inference_secs = start.elapsed().as_secs_f64();

        let model = CostModel::default();
        let residue = manifest.mode == CodingMode::Inter;
        let planes = coded
            .iter()
            .map(|r| SignalPlane::from_ctu_block(&r.block, residue))
            .collect::<Result<Vec<_>>>()?;
        let start = Instant::now();
        let mut oracle = Vec::with_capacity(records.len());
        for (r, plane) in coded.iter().zip(&planes) {
            let o = oracle_rdo(&model, plane, 0, r.qp)?;
            if tree_to_hcpm(&o.tree)? != r.labels {
                return Err(Error::Data(format!(
                    "stored labels of frame {} CTU {} disagree with the oracle",
                    r.frame_index, r.ctu_index
                )));
            }
            oracle.push(o.cost.cost);
        }
        let oracle_secs = start.elapsed().as_secs_f64();
        Ok(EvalContext {
            predictor: predictor.name(),
            mode: manifest.mode,
            block_input: manifest.block_input,
            model,
            qps: records.iter().map(|r| r.qp).collect(),
            labels: records.iter().map(|r| r.labels).collect(),
            probs,
            planes,
            oracle,
            inference_secs,
            oracle_secs,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn probs(&self) -> &[HcpmProb] {
        &self.probs
    }

    /// Encodes every CTU under `thresholds` and compares with the oracle.
    pub fn evaluate(&self, thresholds: &ThresholdSet, d: Option<f64>, early_term: bool) -> Result<EvalReport> {
        thresholds.validate()?;
        let mut all = Acc::default();
        let mut per_qp: BTreeMap<u8, Acc> = BTreeMap::new();
        let start = Instant::now();
        for i in 0..self.len() {
            let mut prob = self.probs[i];
            if early_term {
                apply_early_term(&mut prob, thresholds);
            }
            let qp = self.qps[i];
            let enc = encode_ctu_with_prediction(&self.model, &self.planes[i], 0, qp, &prob, thresholds)?;
            let args = (&prob, &self.labels[i], self.oracle[i], enc.cost.cost, enc.precoded_cu_count);
            all.add(args.0, args.1, args.2, args.3, args.4);
            per_qp.entry(qp).or_default().add(args.0, args.1, args.2, args.3, args.4);
        }
        let guided_secs = start.elapsed().as_secs_f64();
        let n = self.len() as f64;
        Ok(EvalReport {
            schema: REPORT_SCHEMA,
            predictor: self.predictor.clone(),
            mode: self.mode,
            block_input: self.block_input,
            d,
            thresholds: *thresholds,
            early_term,
            overall: all.summary(None),
            per_qp: per_qp.iter().map(|(&qp, a)| a.summary(Some(qp))).collect(),
            timing: Some(Timing {
                inference_secs: self.inference_secs,
                oracle_secs: self.oracle_secs,
                guided_secs,
                inference_us_per_ctu: 1e6 * self.inference_secs / n,
                oracle_us_per_ctu: 1e6 * self.oracle_secs / n,
                guided_us_per_ctu: 1e6 * guided_secs / n,
            }),
        })
    }
}

fn check_aligned(records: &[CtuSample], coded: &[CtuSample]) -> Result<()> {
    if records.len() != coded.len() {
        return Err(Error::Data(format!(
            "residue database has {} records, expected {}",
            coded.len(),
            records.len()
        )));
    }
    for (a, b) in records.iter().zip(coded) {
        if (a.frame_index, a.ctu_index, a.qp, a.labels) != (b.frame_index, b.ctu_index, b.qp, b.labels) {
            return Err(Error::Data(format!(
                "residue database differs at frame {} CTU {} qp {}",
                a.frame_index, a.ctu_index, a.qp
            )));
        }
    }
    Ok(())
}

/// Predicts, encodes and reports in one call.
pub fn cmd_eval(
    predictor: Predictor,
    records: &[CtuSample],
    manifest: &DatabaseManifest,
    coded: Option<&[CtuSample]>,
    thresholds: &ThresholdSet,
    d: Option<f64>,
    early_term: bool,
) -> Result<EvalReport> {
    EvalContext::new(predictor, records, manifest, coded)?.evaluate(thresholds, d, early_term)
}
