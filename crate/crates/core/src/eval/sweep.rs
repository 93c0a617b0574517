use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::report::{EvalContext, Summary, REPORT_SCHEMA};
use crate::error::{Error, Result};
use crate::hcpm::ThresholdSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub d: f64,
    pub overall: Summary,
    pub per_qp: Vec<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: u32,
    pub predictor: String,
    pub early_term: bool,
    /// Points in increasing `d`.
    pub points: Vec<SweepPoint>,
    pub monotone: bool,
    pub violations: Vec<String>,
}

/// Evaluates every uncertain-zone width in `d_values` and checks that
/// widening the zone never raises the RD total nor lowers the pre-coded CU
/// count, overall and at every QP.
pub fn cmd_sweep(ctx: &EvalContext, d_values: &[f64], early_term: bool) -> Result<SweepReport> {
    if d_values.is_empty() {
        return Err(Error::arg("empty d list"));
    }
    let mut ds = d_values.to_vec();
    if let Some(bad) = ds.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(Error::arg(format!("d = {} outside [0, 1]", bad)));
    }
    ds.sort_by(f64::total_cmp);
    ds.dedup();
    let points = ds
        .iter()
        .map(|&d| {
            let r = ctx.evaluate(&ThresholdSet::from_width(d)?, Some(d), early_term)?;
            Ok(SweepPoint {
                d,
                overall: r.overall,
                per_qp: r.per_qp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = monotonicity_violations(&points);
    Ok(SweepReport {
        schema: REPORT_SCHEMA,
        predictor: ctx.predictor.clone(),
        early_term,
        monotone: violations.is_empty(),
        violations,
        points,
    })
}

/// Human-readable list of adjacent point pairs breaking monotonicity.
pub fn monotonicity_violations(points: &[SweepPoint]) -> Vec<String> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let pairs = std::iter::once((&a.overall, &b.overall)).chain(a.per_qp.iter().zip(&b.per_qp));
        for (x, y) in pairs {
            let tag = x.qp.map_or("all".to_string(), |q| format!("qp {}", q));
            if y.rd_delta > x.rd_delta {
                out.push(format!("{}: RD delta rises from d={} to d={}", tag, a.d, b.d));
            }
            if y.precoded_cus < x.precoded_cus {
                out.push(format!("{}: pre-coded CUs fall from d={} to d={}", tag, a.d, b.d));
            }
        }
    }
    out
}

/// One CSV line; `qp` is empty for the all-QP aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d: f64,
    pub qp: Option<u8>,
    pub ctus: usize,
    pub rd_total_oracle: f64,
    pub rd_total_pred: f64,
    pub rd_delta: f64,
    pub precoded_cus: u64,
    pub cu_reduction: f64,
}

pub fn sweep_rows(points: &[SweepPoint]) -> Vec<SweepRow> {
    points
        .iter()
        .flat_map(|p| {
            std::iter::once(&p.overall).chain(&p.per_qp).map(move |s| SweepRow {
                d: p.d,
                qp: s.qp,
                ctus: s.ctus,
                rd_total_oracle: s.rd_total_oracle,
                rd_total_pred: s.rd_total_pred,
                rd_delta: s.rd_delta,
                precoded_cus: s.precoded_cus,
                cu_reduction: s.cu_reduction,
            })
        })
        .collect()
}

/// Plot-ready CSV with a header line.
pub fn write_sweep_csv<W: Write>(w: W, points: &[SweepPoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in sweep_rows(points) {
        wr.serialize(row).map_err(|e| Error::Format(e.to_string()))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(|e| Error::Format(e.to_string())))
        .collect()
}
