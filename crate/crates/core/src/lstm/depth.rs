use serde::{Deserialize, Serialize};

use super::params::GOP_SIZE;
use crate::codec::{oracle_rdo, CodingMode, CostModel, Frame, SignalPlane};
use crate::error::{Error, Result};
use crate::hcpm::PartitionTree;

/// Depths of all 16×16 units of a frame, CTU by CTU.
pub type DepthMap = Vec<u8>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthCorrPoint {
    pub gop_distance: usize,
    pub frame_distance: usize,
    /// Pearson correlation; absent when either side has no variance.
    pub cc: Option<f64>,
    pub mse: f64,
    pub pairs: usize,
}

/// Unit depths of a frame's partition trees (0–2, or 3 where the unit is
/// split into 8×8 CUs).
pub fn frame_depth_map(trees: &[PartitionTree]) -> DepthMap {
    trees.iter().flat_map(|t| t.unit_depths()).collect()
}

/// Oracle depth maps of every coded frame of a sequence. Inter mode codes
/// frames from the second on against their predecessor.
pub fn oracle_depth_maps(frames: &[Frame], qp: u8, mode: CodingMode) -> Result<Vec<DepthMap>> {
    let model = CostModel::default();
    let first = if mode == CodingMode::Inter { 1 } else { 0 };
    (first..frames.len())
        .map(|t| {
            let plane = match mode {
                CodingMode::Intra => SignalPlane::from_frame(&frames[t]),
                CodingMode::Inter => SignalPlane::residual(&frames[t], Some(&frames[t - 1]))?,
            };
            let trees = (0..plane.ctu_count())
                .map(|i| oracle_rdo(&model, &plane, i, qp).map(|r| r.tree))
                .collect::<Result<Vec<_>>>()?;
            Ok(frame_depth_map(&trees))
        })
        .collect()
}

/// Correlation and MSE between co-located unit depths of frames
/// `gop_distance · 4` apart, pooled over all sequences and frame pairs.
pub fn depth_correlation(sequences: &[Vec<DepthMap>], gop_distances: &[usize]) -> Result<Vec<DepthCorrPoint>> {
    if !sequences.iter().any(|s| s.len() >= 2) {
        return Err(Error::arg("depth correlation needs at least two frames"));
    }
    let mut out = Vec::with_capacity(gop_distances.len());
    for &g in gop_distances {
        if g == 0 {
            return Err(Error::arg("GOP distance must be positive"));
        }
        let dist = g * GOP_SIZE;
        let (mut n, mut sa, mut sb, mut saa, mut sbb, mut sab, mut se) = (0usize, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for seq in sequences {
            for t in 0..seq.len().saturating_sub(dist) {
                let (a, b) = (&seq[t], &seq[t + dist]);
                if a.len() != b.len() {
                    return Err(Error::shape(a.len(), b.len()));
                }
                for (&x, &y) in a.iter().zip(b) {
                    let (x, y) = (x as f64, y as f64);
                    n += 1;
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                    se += (x - y) * (x - y);
                }
            }
        }
        let nf = n as f64;
        let (va, vb) = (saa - sa * sa / nf.max(1.0), sbb - sb * sb / nf.max(1.0));
        let cc = (n > 1 && va > 1e-12 && vb > 1e-12).then(|| (sab - sa * sb / nf) / (va * vb).sqrt());
        out.push(DepthCorrPoint {
            gop_distance: g,
            frame_distance: dist,
            cc,
            mse: if n > 0 { se / nf } else { 0.0 },
            pairs: n,
        });
    }
    Ok(out)
}
