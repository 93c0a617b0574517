use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::build::{DatabaseManifest, SplitKind};
use super::record::CtuSample;
use crate::error::{Error, Result};

/// Source counts per split: floor of each share, remainders to the largest
/// fractional parts, and at least one source for every non-zero ratio.
fn split_counts(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::arg(format!("split ratios {:?} must be in [0, 1] and sum to 1", ratios)));
    }
    let needed = ratios.iter().filter(|&&r| r > 0.0).count();
    if n < needed {
        return Err(Error::Data(format!("{} sources cannot fill {} splits", n, needed)));
    }
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for i in 0..3 {
        counts[i] = exact[i].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if ratios[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).expect("three splits");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    Ok(counts)
}

/// Assigns every source (never individual samples) to train/val/test.
pub fn split_db(manifest: &DatabaseManifest, ratios: [f64; 3], seed: u64) -> Result<DatabaseManifest> {
    let counts = split_counts(manifest.sources.len(), ratios)?;
    let mut order: Vec<usize> = (0..manifest.sources.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = manifest.clone();
    let mut pos = 0;
    for (kind, &c) in SplitKind::ALL.iter().zip(&counts) {
        for &i in &order[pos..pos + c] {
            out.sources[i].split = Some(*kind);
        }
        pos += c;
    }
    Ok(out)
}

/// Records and a recomputed manifest for one split.
pub fn select_split(
    records: &[CtuSample],
    manifest: &DatabaseManifest,
    kind: SplitKind,
) -> Result<(Vec<CtuSample>, DatabaseManifest)> {
    let sources: Vec<_> = manifest
        .sources
        .iter()
        .filter(|s| s.split == Some(kind))
        .cloned()
        .collect();
    let mut picked = Vec::new();
    for r in records {
        let src = manifest
            .source_of(r.frame_index)
            .ok_or_else(|| Error::Data(format!("frame {} belongs to no source", r.frame_index)))?;
        match src.split {
            None => return Err(Error::Data(format!("source {} has no split assignment", src.name))),
            Some(k) if k == kind => picked.push(r.clone()),
            Some(_) => {}
        }
    }
    let m = DatabaseManifest::summarize(manifest.mode, &manifest.qps, sources, &picked);
    Ok((picked, m))
}
