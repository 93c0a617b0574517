//! `ETHM` model container: magic, u16 version, u8 kind, u32 tensor count,
//! then per tensor a u16 name length, the name, u8 rank, u32 dims and the
//! f32 payload, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cnn::EthCnnParams;
use crate::error::{Error, Result};
use crate::lstm::EthLstmParams;
use crate::nn::{ParamSet, Tensor};

pub const ETHM_MAGIC: &[u8; 4] = b"ETHM";
pub const ETHM_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Cnn = 0,
    Lstm = 1,
}

impl ModelKind {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(ModelKind::Cnn),
            1 => Ok(ModelKind::Lstm),
            _ => Err(Error::Format(format!("unknown model kind {}", b))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Cnn(EthCnnParams),
    Lstm(EthLstmParams),
}

pub fn write_model<W: Write, P: ParamSet<f32>>(mut w: W, kind: ModelKind, params: &P) -> Result<()> {
    let tensors = params.tensors();
    w.write_all(ETHM_MAGIC)?;
    w.write_all(&ETHM_VERSION.to_le_bytes())?;
    w.write_all(&[kind as u8])?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let name = name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[t.dims().len() as u8])?;
        for &d in t.dims() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(4 * t.len());
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<(ModelKind, Vec<(String, Tensor)>)> {
    let magic: [u8; 4] = read_exact(&mut r)?;
    if &magic != ETHM_MAGIC {
        return Err(Error::Format(format!("bad ETHM magic {:?}", magic)));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != ETHM_VERSION {
        return Err(Error::Format(format!("unsupported ETHM version {}", version)));
    }
    let kind = ModelKind::from_byte(read_exact::<1, _>(&mut r)?[0])?;
    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rank = read_exact::<1, _>(&mut r)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(u32::from_le_bytes(read_exact(&mut r)?) as usize);
        }
        let n: usize = dims.iter().product();
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((name, Tensor::from_vec(&dims, data)?));
    }
    Ok((kind, out))
}

/// Copies named tensors into a parameter set of the expected layout.
fn fill<P: ParamSet<f32>>(mut target: P, tensors: Vec<(String, Tensor)>) -> Result<P> {
    let expected: Vec<(String, Vec<usize>)> = target
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.dims().to_vec()))
        .collect();
    if expected.len() != tensors.len() {
        return Err(Error::Format(format!("{} tensors, expected {}", tensors.len(), expected.len())));
    }
    for ((slot, (name, dims)), (got_name, t)) in target.tensors_mut().into_iter().zip(&expected).zip(tensors) {
        if *name != got_name || dims.as_slice() != t.dims() {
            return Err(Error::Format(format!(
                "tensor {} {:?} where {} {:?} was expected",
                got_name,
                t.dims(),
                name,
                dims
            )));
        }
        *slot = t;
    }
    Ok(target)
}

pub fn read_model<R: Read>(r: R) -> Result<Model> {
    let (kind, tensors) = read_tensors(r)?;
    Ok(match kind {
        ModelKind::Cnn => Model::Cnn(fill(EthCnnParams::zeros(), tensors)?),
        ModelKind::Lstm => Model::Lstm(fill(EthLstmParams::zeros(), tensors)?),
    })
}

pub fn save_cnn(path: &Path, params: &EthCnnParams) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), ModelKind::Cnn, params)
}

pub fn save_lstm(path: &Path, params: &EthLstmParams) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), ModelKind::Lstm, params)
}

pub fn load_model(path: &Path) -> Result<Model> {
    read_model(BufReader::new(File::open(path)?))
}

pub fn load_cnn(path: &Path) -> Result<EthCnnParams> {
    match load_model(path)? {
        Model::Cnn(p) => Ok(p),
        Model::Lstm(_) => Err(Error::Format(format!("{} holds an LSTM, not a CNN", path.display()))),
    }
}

pub fn load_lstm(path: &Path) -> Result<EthLstmParams> {
    match load_model(path)? {
        Model::Lstm(p) => Ok(p),
        Model::Cnn(_) => Err(Error::Format(format!("{} holds a CNN, not an LSTM", path.display()))),
    }
}
