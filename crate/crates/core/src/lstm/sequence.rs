use std::collections::BTreeMap;

use super::cell::{FrameInput, FrameSideInfo, LstmState};
use super::params::{EthLstmParams, GOP_SIZE};
use super::train::SequenceSample;
use crate::cnn::EthCnnParams;
use crate::dataset::{CtuSample, DatabaseManifest};
use crate::error::{Error, Result};
use crate::hcpm::{HcpmProb, ThresholdSet};

/// Co-located CTUs of one source at one QP over consecutive frames;
/// `records` index the database in frame order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtuSequence {
    pub source: usize,
    pub ctu_index: u32,
    pub qp: u8,
    pub records: Vec<usize>,
}

/// Frame position within the low-delay GOP. A source's first frame is the
/// intra frame, so inter frames `1, 2, 3, 4, 5, …` map to `0, 1, 2, 3, 0, …`.
pub fn gop_order(frame_index: u32, frame_start: u32) -> usize {
    (frame_index.saturating_sub(frame_start).saturating_sub(1) as usize) % GOP_SIZE
}

/// Groups records by (source, CTU position, QP). A gap in the frame numbers
/// starts a new sequence.
pub fn group_sequences(records: &[CtuSample], manifest: &DatabaseManifest) -> Result<Vec<CtuSequence>> {
    let mut groups: BTreeMap<(usize, u32, u8), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let src = manifest
            .sources
            .iter()
            .position(|s| s.contains(r.frame_index))
            .ok_or_else(|| Error::Data(format!("frame {} belongs to no source", r.frame_index)))?;
        groups.entry((src, r.ctu_index, r.qp)).or_default().push(i);
    }
    let mut out = Vec::new();
    for ((source, ctu_index, qp), mut idx) in groups {
        idx.sort_by_key(|&i| records[i].frame_index);
        let mut run: Vec<usize> = Vec::new();
        for i in idx {
            if let Some(&last) = run.last() {
                let (a, b) = (records[last].frame_index, records[i].frame_index);
                if b == a {
                    return Err(Error::Sequence(format!("frame {} repeated for CTU {} at qp {}", b, ctu_index, qp)));
                }
                if b != a + 1 {
                    out.push(CtuSequence {
                        source,
                        ctu_index,
                        qp,
                        records: std::mem::take(&mut run),
                    });
                }
            }
            run.push(i);
        }
        out.push(CtuSequence {
            source,
            ctu_index,
            qp,
            records: run,
        });
    }
    Ok(out)
}

fn frame_input(cnn: &EthCnnParams, r: &CtuSample, manifest: &DatabaseManifest, source: usize) -> Result<FrameInput> {
    Ok(FrameInput {
        features: cnn.features(&r.block)?,
        side: FrameSideInfo {
            qp: r.qp,
            gop_order: gop_order(r.frame_index, manifest.sources[source].frame_start),
        },
    })
}

/// Features from the frozen CNN plus labels for every sequence.
pub fn sequence_samples(
    cnn: &EthCnnParams,
    records: &[CtuSample],
    manifest: &DatabaseManifest,
) -> Result<Vec<SequenceSample>> {
    group_sequences(records, manifest)?
        .iter()
        .map(|seq| {
            let mut s = SequenceSample {
                inputs: Vec::with_capacity(seq.records.len()),
                targets: Vec::with_capacity(seq.records.len()),
            };
            for &i in &seq.records {
                s.inputs.push(frame_input(cnn, &records[i], manifest, seq.source)?);
                s.targets.push(records[i].labels.targets());
            }
            Ok(s)
        })
        .collect()
}

/// Step-wise prediction for every record, each CTU position starting from a
/// zero state at its first frame. Output order follows `records`.
pub fn predict_records(
    cnn: &EthCnnParams,
    lstm: &EthLstmParams,
    records: &[CtuSample],
    manifest: &DatabaseManifest,
    early_term: Option<&ThresholdSet>,
) -> Result<Vec<HcpmProb>> {
    let mut out = vec![HcpmProb::default(); records.len()];
    for seq in group_sequences(records, manifest)? {
        let mut state = LstmState::zeros();
        for &i in &seq.records {
            let x = frame_input(cnn, &records[i], manifest, seq.source)?;
            out[i] = lstm.step(&x, &mut state, early_term)?.0;
        }
    }
    Ok(out)
}

/// Runs CNN + LSTM over the residue blocks of one CTU position. Frame
/// indices must increase strictly.
pub fn forward_blocks(
    cnn: &EthCnnParams,
    lstm: &EthLstmParams,
    frames: &[(u32, &[u8], FrameSideInfo)],
    early_term: Option<&ThresholdSet>,
) -> Result<Vec<HcpmProb>> {
    for w in frames.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Sequence(format!("frame {} follows frame {}", w[1].0, w[0].0)));
        }
    }
    let mut state = LstmState::zeros();
    frames
        .iter()
        .map(|(_, block, side)| {
            let x = FrameInput {
                features: cnn.features(block)?,
                side: *side,
            };
            lstm.step(&x, &mut state, early_term).map(|(p, _)| p)
        })
        .collect()
}
