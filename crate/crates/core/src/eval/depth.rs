use serde::{Deserialize, Serialize};

use super::report::REPORT_SCHEMA;
use crate::codec::{CodingMode, Frame};
use crate::error::Result;
use crate::lstm::{depth_correlation, oracle_depth_maps, DepthCorrPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthCorrQp {
    pub qp: u8,
    pub points: Vec<DepthCorrPoint>,
    /// Correlation never rises with distance (absent values are skipped).
    pub cc_non_increasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthCorrReport {
    pub schema: u32,
    pub mode: CodingMode,
    pub per_qp: Vec<DepthCorrQp>,
}

/// Oracle depth maps of every sequence at every QP, correlated across
/// `gop_distances` GOPs.
pub fn cmd_depth_corr(
    sequences: &[Vec<Frame>],
    qps: &[u8],
    mode: CodingMode,
    gop_distances: &[usize],
) -> Result<DepthCorrReport> {
    let per_qp = qps
        .iter()
        .map(|&qp| {
            let maps = sequences
                .iter()
                .map(|s| oracle_depth_maps(s, qp, mode))
                .collect::<Result<Vec<_>>>()?;
            let points = depth_correlation(&maps, gop_distances)?;
            let ccs: Vec<f64> = points.iter().filter_map(|p| p.cc).collect();
            Ok(DepthCorrQp {
                qp,
                cc_non_increasing: ccs.windows(2).all(|w| w[1] <= w[0]),
                points,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthCorrReport {
        schema: REPORT_SCHEMA,
        mode,
        per_qp,
    })
}
