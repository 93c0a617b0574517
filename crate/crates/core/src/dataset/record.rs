use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::codec::CodingMode;
use crate::error::{Error, Result};
use crate::hcpm::{Hcpm, LABEL_BYTES};
use crate::CTU_SIZE;

pub const CPHS_MAGIC: &[u8; 4] = b"CPHS";
pub const CPHS_VERSION: u16 = 1;
pub const BLOCK_BYTES: usize = CTU_SIZE * CTU_SIZE;
/// block + qp + labels + frame index + CTU index + mode
pub const RECORD_BYTES: usize = BLOCK_BYTES + 1 + LABEL_BYTES + 4 + 4 + 1;

/// One CTU with its oracle partition at one QP. Inter samples hold the
/// offset-128 residue instead of the original luma.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtuSample {
    pub block: Vec<u8>,
    pub qp: u8,
    pub labels: Hcpm,
    pub frame_index: u32,
    pub ctu_index: u32,
    pub mode: CodingMode,
}

fn mode_byte(m: CodingMode) -> u8 {
    match m {
        CodingMode::Intra => 0,
        CodingMode::Inter => 1,
    }
}

fn mode_from(b: u8) -> Result<CodingMode> {
    match b {
        0 => Ok(CodingMode::Intra),
        1 => Ok(CodingMode::Inter),
        _ => Err(Error::Format(format!("unknown mode byte {}", b))),
    }
}

impl CtuSample {
    pub fn validate(&self) -> Result<()> {
        if self.block.len() != BLOCK_BYTES {
            return Err(Error::shape(BLOCK_BYTES, self.block.len()));
        }
        if self.qp > 51 {
            return Err(Error::arg(format!("qp {} outside [0, 51]", self.qp)));
        }
        self.labels.validate()
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.block);
        out.push(self.qp);
        out.extend_from_slice(&self.labels.to_bytes());
        out.extend_from_slice(&self.frame_index.to_le_bytes());
        out.extend_from_slice(&self.ctu_index.to_le_bytes());
        out.push(mode_byte(self.mode));
    }

    fn decode(buf: &[u8]) -> Result<Self> {
        let (block, rest) = buf.split_at(BLOCK_BYTES);
        let qp = rest[0];
        let labels = Hcpm::from_bytes(&rest[1..1 + LABEL_BYTES])?;
        let rest = &rest[1 + LABEL_BYTES..];
        let word = |b: &[u8]| u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        let s = CtuSample {
            block: block.to_vec(),
            qp,
            labels,
            frame_index: word(&rest[0..4]),
            ctu_index: word(&rest[4..8]),
            mode: mode_from(rest[8])?,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Writes a `CPHS` record file. Every record is validated before anything is
/// written and must carry the file's mode.
pub fn write_records<W: Write>(mut w: W, mode: CodingMode, records: &[CtuSample]) -> Result<()> {
    for r in records {
        r.validate()?;
        if r.mode != mode {
            return Err(Error::Data(format!("{:?} record in {:?} database", r.mode, mode)));
        }
    }
    w.write_all(CPHS_MAGIC)?;
    w.write_all(&CPHS_VERSION.to_le_bytes())?;
    w.write_all(&[mode_byte(mode)])?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(RECORD_BYTES);
    for r in records {
        buf.clear();
        r.encode(&mut buf);
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(mut r: R) -> Result<(CodingMode, Vec<CtuSample>)> {
    let mut head = [0u8; 11];
    r.read_exact(&mut head)?;
    if &head[..4] != CPHS_MAGIC {
        return Err(Error::Format(format!("bad CPHS magic {:?}", &head[..4])));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != CPHS_VERSION {
        return Err(Error::Format(format!("unsupported CPHS version {}", version)));
    }
    let mode = mode_from(head[6])?;
    let count = u32::from_le_bytes([head[7], head[8], head[9], head[10]]) as usize;
    let mut buf = vec![0u8; RECORD_BYTES];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut buf)?;
        let s = CtuSample::decode(&buf)?;
        if s.mode != mode {
            return Err(Error::Format("record mode differs from file mode".into()));
        }
        out.push(s);
    }
    Ok((mode, out))
}

pub fn save_records(path: &Path, mode: CodingMode, records: &[CtuSample]) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), mode, records)
}

pub fn load_records(path: &Path) -> Result<(CodingMode, Vec<CtuSample>)> {
    read_records(BufReader::new(File::open(path)?))
}
