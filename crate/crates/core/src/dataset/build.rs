use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{oracle_rdo, precode_residue, CodingMode, CostModel, Frame, SignalPlane};
use crate::error::{Error, Result};
use crate::hcpm::{tree_to_hcpm, Label};

use super::record::{save_records, CtuSample};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Val, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }
}

/// A source's frames occupy `frame_start .. frame_start + frame_count` of the
/// database's global frame numbering.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub name: String,
    pub frame_start: u32,
    pub frame_count: u32,
    pub split: Option<SplitKind>,
}

impl SourceEntry {
    pub fn contains(&self, frame_index: u32) -> bool {
        frame_index >= self.frame_start && frame_index < self.frame_start + self.frame_count
    }
}

/// What the stored 64×64 blocks contain. Intra records always hold original
/// luma; inter records hold the offset-128 residue unless built with
/// `Original`, in which case labels still come from the residue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockInput {
    #[default]
    Residue,
    Original,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    /// Fraction of records whose CTU is split.
    pub level1_split: f64,
    /// Fraction of split labels among all non-null labels.
    pub all_levels_split: f64,
}

impl ClassBalance {
    pub fn measure(records: &[CtuSample]) -> Self {
        if records.is_empty() {
            return ClassBalance::default();
        }
        let l1 = records.iter().filter(|r| r.labels.level1() == Label::Split).count();
        let (mut split, mut valid) = (0usize, 0usize);
        for r in records {
            for &l in r.labels.cells() {
                if l != Label::Null {
                    valid += 1;
                    split += (l == Label::Split) as usize;
                }
            }
        }
        ClassBalance {
            level1_split: l1 as f64 / records.len() as f64,
            all_levels_split: split as f64 / valid as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatabaseManifest {
    pub version: u32,
    pub mode: CodingMode,
    #[serde(default)]
    pub block_input: BlockInput,
    pub qps: Vec<u8>,
    pub record_count: usize,
    pub per_qp_counts: BTreeMap<u8, usize>,
    pub class_balance: ClassBalance,
    pub sources: Vec<SourceEntry>,
}

impl DatabaseManifest {
    pub fn summarize(mode: CodingMode, qps: &[u8], sources: Vec<SourceEntry>, records: &[CtuSample]) -> Self {
        let mut per_qp_counts = BTreeMap::new();
        for r in records {
            *per_qp_counts.entry(r.qp).or_insert(0) += 1;
        }
        DatabaseManifest {
            version: MANIFEST_VERSION,
            mode,
            block_input: match mode {
                CodingMode::Intra => BlockInput::Original,
                CodingMode::Inter => BlockInput::Residue,
            },
            qps: qps.to_vec(),
            record_count: records.len(),
            per_qp_counts,
            class_balance: ClassBalance::measure(records),
            sources,
        }
    }

    /// Whether the stored blocks are the signal the oracle coded, so that
    /// RDO can be rerun on them directly.
    pub fn blocks_are_coded_signal(&self) -> bool {
        self.mode == CodingMode::Intra || self.block_input == BlockInput::Residue
    }

    pub fn source_of(&self, frame_index: u32) -> Option<&SourceEntry> {
        self.sources.iter().find(|s| s.contains(frame_index))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(f, self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Named frame source (one still or one sequence).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Source {
    pub name: String,
    pub frames: Vec<Frame>,
}

/// Labels every CTU of every source at every QP with the oracle RDO.
///
/// Intra databases store original luma for every frame. Inter databases
/// start at each source's second frame (the first is the intra frame of a
/// low-delay GOP) and store the offset-128 residue against the previous
/// frame; labels are computed on exactly that stored residue.
pub fn build_db(sources: &[Source], qps: &[u8], mode: CodingMode) -> Result<(Vec<CtuSample>, DatabaseManifest)> {
    build_db_with(sources, qps, mode, BlockInput::Residue)
}

/// [`build_db`] with a choice of stored block for inter databases.
pub fn build_db_with(
    sources: &[Source],
    qps: &[u8],
    mode: CodingMode,
    input: BlockInput,
) -> Result<(Vec<CtuSample>, DatabaseManifest)> {
    if qps.is_empty() {
        return Err(Error::arg("empty QP list"));
    }
    if let Some(q) = qps.iter().find(|&&q| q > 51) {
        return Err(Error::arg(format!("qp {} outside [0, 51]", q)));
    }
    let model = CostModel::default();
    let mut records = Vec::new();
    let mut entries = Vec::new();
    let mut frame_start = 0u32;
    for src in sources {
        let first = match mode {
            CodingMode::Intra => 0,
            CodingMode::Inter => 1,
        };
        if mode == CodingMode::Inter && src.frames.len() < 2 {
            log::warn!("source {} has fewer than two frames; skipped for inter mode", src.name);
            continue;
        }
        for t in first..src.frames.len() {
            let stored = match mode {
                CodingMode::Intra => src.frames[t].clone(),
                CodingMode::Inter => precode_residue(&src.frames[t], Some(&src.frames[t - 1]))?,
            };
            let plane = match mode {
                CodingMode::Intra => SignalPlane::from_frame(&stored),
                CodingMode::Inter => SignalPlane::from_residue(&stored),
            };
            let shown = match (mode, input) {
                (CodingMode::Inter, BlockInput::Original) => &src.frames[t],
                _ => &stored,
            };
            let blocks: Vec<Vec<u8>> = (0..shown.ctu_count())
                .map(|i| shown.ctu_block(i))
                .collect::<Result<_>>()?;
            for &qp in qps {
                for (i, block) in blocks.iter().enumerate() {
                    let oracle = oracle_rdo(&model, &plane, i, qp)?;
                    let s = CtuSample {
                        block: block.clone(),
                        qp,
                        labels: tree_to_hcpm(&oracle.tree)?,
                        frame_index: frame_start + t as u32,
                        ctu_index: i as u32,
                        mode,
                    };
                    s.validate()?;
                    records.push(s);
                }
            }
        }
        entries.push(SourceEntry {
            name: src.name.clone(),
            frame_start,
            frame_count: src.frames.len() as u32,
            split: None,
        });
        frame_start += src.frames.len() as u32;
    }
    if records.is_empty() {
        return Err(Error::Data("no CTUs in any source".into()));
    }
    let mut manifest = DatabaseManifest::summarize(mode, qps, entries, &records);
    if mode == CodingMode::Inter {
        manifest.block_input = input;
    }
    Ok((records, manifest))
}

/// Reads CPHY files (unreadable ones are skipped with a warning), builds the
/// database and writes `out` plus `out.json`.
pub fn build_db_files(
    paths: &[PathBuf],
    qps: &[u8],
    mode: CodingMode,
    input: BlockInput,
    out: &Path,
) -> Result<(Vec<CtuSample>, DatabaseManifest)> {
    let mut sources = Vec::new();
    for p in paths {
        match Frame::load_sequence(p) {
            Ok(frames) => sources.push(Source {
                name: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string()),
                frames,
            }),
            Err(e) => log::warn!("skipping {}: {}", p.display(), e),
        }
    }
    let (records, manifest) = build_db_with(&sources, qps, mode, input)?;
    save_records(out, mode, &records)?;
    manifest.save(&manifest_path(out))?;
    Ok((records, manifest))
}

/// `db.cphs` → `db.cphs.json`
pub fn manifest_path(db: &Path) -> PathBuf {
    let mut s = db.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, SourceKind, SynthConfig};

    fn stills(n: usize, density: f64) -> Vec<Source> {
        let cfg = SynthConfig {
            texture_density: density,
            ..SynthConfig::default()
        };
        gen_synthetic(1, n, SourceKind::Stills, &cfg)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, frames)| Source {
                name: format!("s{}", i),
                frames,
            })
            .collect()
    }

    #[test]
    fn one_still_four_qps_gives_64_records() {
        let (recs, m) = build_db(&stills(1, 0.5), &crate::DEFAULT_QPS, CodingMode::Intra).unwrap();
        assert_eq!(recs.len(), 64);
        assert_eq!(m.record_count, 64);
        assert!(m.per_qp_counts.values().all(|&c| c == 16));
        assert!(recs.iter().all(|r| r.labels.validate().is_ok()));
    }

    #[test]
    fn flat_content_never_splits() {
        let (recs, m) = build_db(&stills(2, 0.0), &crate::DEFAULT_QPS, CodingMode::Intra).unwrap();
        assert!(recs.iter().all(|r| r.labels.level1() == Label::NotSplit));
        assert_eq!(m.class_balance.level1_split, 0.0);
    }

    #[test]
    fn inter_mode_skips_first_frame() {
        let cfg = SynthConfig {
            width: 128,
            height: 64,
            frames: 3,
            ..SynthConfig::default()
        };
        let seqs: Vec<Source> = gen_synthetic(4, 2, SourceKind::Sequence, &cfg)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, frames)| Source {
                name: format!("q{}", i),
                frames,
            })
            .collect();
        let (recs, m) = build_db(&seqs, &[22], CodingMode::Inter).unwrap();
        assert_eq!(recs.len(), 2 * 2 * 2);
        assert_eq!(m.sources[1].frame_start, 3);
        assert!(recs.iter().all(|r| r.frame_index % 3 != 0));
        assert!(recs.iter().all(|r| r.mode == CodingMode::Inter));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(build_db(&[], &[22], CodingMode::Intra), Err(Error::Data(_))));
        assert!(build_db(&stills(1, 0.5), &[], CodingMode::Intra).is_err());
    }
}
