use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::CTU_SIZE;

pub const CPHY_MAGIC: &[u8; 4] = b"CPHY";

/// 8-bit luma plane with CTU-aligned dimensions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    luma: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, luma: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || width % CTU_SIZE != 0 || height % CTU_SIZE != 0 {
            return Err(Error::Geometry(format!(
                "frame {}x{} is not a positive multiple of {}",
                width, height, CTU_SIZE
            )));
        }
        if luma.len() != width * height {
            return Err(Error::shape(width * height, luma.len()));
        }
        Ok(Frame { width, height, luma })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Frame::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn luma(&self) -> &[u8] {
        &self.luma
    }

    pub fn luma_mut(&mut self) -> &mut [u8] {
        &mut self.luma
    }

    pub fn ctu_cols(&self) -> usize {
        self.width / CTU_SIZE
    }

    pub fn ctu_count(&self) -> usize {
        (self.width / CTU_SIZE) * (self.height / CTU_SIZE)
    }

    /// Copies the 64×64 block of CTU `index` (raster order).
    pub fn ctu_block(&self, index: usize) -> Result<Vec<u8>> {
        if index >= self.ctu_count() {
            return Err(Error::Geometry(format!("CTU {} of {}", index, self.ctu_count())));
        }
        let (cx, cy) = ((index % self.ctu_cols()) * CTU_SIZE, (index / self.ctu_cols()) * CTU_SIZE);
        let mut out = Vec::with_capacity(CTU_SIZE * CTU_SIZE);
        for y in 0..CTU_SIZE {
            let row = (cy + y) * self.width + cx;
            out.extend_from_slice(&self.luma[row..row + CTU_SIZE]);
        }
        Ok(out)
    }
}

/// Signed sample plane the cost model operates on: luma for intra, the
/// current-minus-reference residual for inter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignalPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<i16>,
}

impl SignalPlane {
    pub fn from_frame(frame: &Frame) -> Self {
        SignalPlane {
            width: frame.width,
            height: frame.height,
            data: frame.luma.iter().map(|&v| v as i16).collect(),
        }
    }

    /// `current − reference`; a missing reference counts as all zeros.
    pub fn residual(current: &Frame, reference: Option<&Frame>) -> Result<Self> {
        let mut p = SignalPlane::from_frame(current);
        if let Some(r) = reference {
            check_same_dims(current, r)?;
            for (d, &rv) in p.data.iter_mut().zip(&r.luma) {
                *d -= rv as i16;
            }
        }
        Ok(p)
    }

    /// Interprets an offset-128 residue frame as a signed residual.
    pub fn from_residue(residue: &Frame) -> Self {
        SignalPlane {
            width: residue.width,
            height: residue.height,
            data: residue.luma.iter().map(|&v| v as i16 - 128).collect(),
        }
    }

    /// One 64×64 block, offset-128 encoded when `residue` is set.
    pub fn from_ctu_block(block: &[u8], residue: bool) -> Result<Self> {
        if block.len() != CTU_SIZE * CTU_SIZE {
            return Err(Error::shape(CTU_SIZE * CTU_SIZE, block.len()));
        }
        let off = if residue { 128 } else { 0 };
        Ok(SignalPlane {
            width: CTU_SIZE,
            height: CTU_SIZE,
            data: block.iter().map(|&v| v as i16 - off).collect(),
        })
    }

    pub fn ctu_cols(&self) -> usize {
        self.width / CTU_SIZE
    }

    pub fn ctu_count(&self) -> usize {
        (self.width / CTU_SIZE) * (self.height / CTU_SIZE)
    }

    pub fn ctu_origin(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.ctu_count() {
            return Err(Error::Geometry(format!("CTU {} of {}", index, self.ctu_count())));
        }
        Ok(((index % self.ctu_cols()) * CTU_SIZE, (index / self.ctu_cols()) * CTU_SIZE))
    }
}

fn check_same_dims(a: &Frame, b: &Frame) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::shape(
            format!("{}x{}", a.width, a.height),
            format!("{}x{}", b.width, b.height),
        ));
    }
    Ok(())
}

/// Residue of forced 64×64 pre-coding against the co-located previous frame,
/// stored as `clamp(current − previous + 128, 0, 255)`. The first frame of a
/// sequence (`previous == None`) is taken against an all-zero reference.
pub fn precode_residue(current: &Frame, previous: Option<&Frame>) -> Result<Frame> {
    let sig = SignalPlane::residual(current, previous)?;
    let luma = sig.data.iter().map(|&d| (d + 128).clamp(0, 255) as u8).collect();
    Frame::new(current.width, current.height, luma)
}

/// Writes a `CPHY` container: magic, u32 width, u32 height, u32 frame count
/// (little-endian), then the planes.
pub fn write_cphy<W: Write>(mut w: W, frames: &[Frame]) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| Error::arg("CPHY container needs at least one frame"))?;
    for f in frames {
        check_same_dims(first, f)?;
    }
    w.write_all(CPHY_MAGIC)?;
    w.write_all(&(first.width as u32).to_le_bytes())?;
    w.write_all(&(first.height as u32).to_le_bytes())?;
    w.write_all(&(frames.len() as u32).to_le_bytes())?;
    for f in frames {
        w.write_all(&f.luma)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cphy<R: Read>(mut r: R) -> Result<Vec<Frame>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CPHY_MAGIC {
        return Err(Error::Format(format!("bad CPHY magic {:?}", magic)));
    }
    let mut word = [0u8; 4];
    let mut next = |r: &mut R| -> Result<usize> {
        r.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word) as usize)
    };
    let width = next(&mut r)?;
    let height = next(&mut r)?;
    let count = next(&mut r)?;
    let mut frames = Vec::with_capacity(count);
    for _ in 0..count {
        let mut luma = vec![0u8; width * height];
        r.read_exact(&mut luma)?;
        frames.push(Frame::new(width, height, luma)?);
    }
    Ok(frames)
}

impl Frame {
    pub fn save_sequence(path: &Path, frames: &[Frame]) -> Result<()> {
        write_cphy(BufWriter::new(File::create(path)?), frames)
    }

    pub fn load_sequence(path: &Path) -> Result<Vec<Frame>> {
        read_cphy(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, k: u8) -> Frame {
        let luma = (0..w * h).map(|i| ((i * 7) as u8).wrapping_add(k)).collect();
        Frame::new(w, h, luma).unwrap()
    }

    #[test]
    fn geometry_is_ctu_aligned() {
        assert!(Frame::filled(64, 128, 0).is_ok());
        assert!(matches!(Frame::filled(60, 64, 0), Err(Error::Geometry(_))));
        assert!(Frame::new(64, 64, vec![0; 10]).is_err());
        let f = ramp(192, 128, 0);
        assert_eq!(f.ctu_count(), 6);
        let b = f.ctu_block(4).unwrap();
        assert_eq!(b[0], f.luma()[64 * 192 + 64]);
        assert!(f.ctu_block(6).is_err());
    }

    #[test]
    fn residue_of_identical_frames_is_flat() {
        let f = ramp(64, 64, 3);
        let r = precode_residue(&f, Some(&f)).unwrap();
        assert!(r.luma().iter().all(|&v| v == 128));
    }

    #[test]
    fn residue_of_brightened_frame() {
        let prev = Frame::filled(64, 64, 50).unwrap();
        let cur = Frame::filled(64, 64, 60).unwrap();
        let r = precode_residue(&cur, Some(&prev)).unwrap();
        assert!(r.luma().iter().all(|&v| v == 138));
    }

    #[test]
    fn residue_matches_elementwise_clamp() {
        let a = ramp(64, 64, 0);
        let b = ramp(64, 64, 91);
        let r = precode_residue(&a, Some(&b)).unwrap();
        for i in 0..a.luma().len() {
            let want = (a.luma()[i] as i32 - b.luma()[i] as i32 + 128).clamp(0, 255) as u8;
            assert_eq!(r.luma()[i], want);
        }
        let first = precode_residue(&a, None).unwrap();
        for i in 0..a.luma().len() {
            assert_eq!(first.luma()[i] as i32, (a.luma()[i] as i32 + 128).min(255));
        }
        assert!(precode_residue(&a, Some(&Frame::filled(128, 64, 0).unwrap())).is_err());
    }

    #[test]
    fn cphy_round_trip_and_layout() {
        let frames = vec![ramp(128, 64, 0), ramp(128, 64, 9)];
        let mut buf = Vec::new();
        write_cphy(&mut buf, &frames).unwrap();
        assert_eq!(&buf[..4], b"CPHY");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 128);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 64);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 16 + 2 * 128 * 64);
        assert_eq!(read_cphy(&buf[..]).unwrap(), frames);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_cphy(&bad[..]), Err(Error::Format(_))));
        assert!(read_cphy(&buf[..100]).is_err());
    }
}
