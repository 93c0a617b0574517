use crate::error::{Error, Result};
use crate::nn::Real;
use crate::CTU_SIZE;

/// The three branch inputs of one CTU, each single-channel and row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchInputs<T = f32> {
    pub b1: Vec<T>,
    pub b2: Vec<T>,
    pub b3: Vec<T>,
}

impl<T: Real> BranchInputs<T> {
    pub fn branch(&self, b: usize) -> &[T] {
        match b {
            0 => &self.b1,
            1 => &self.b2,
            _ => &self.b3,
        }
    }
}

/// Subtracts the mean of every `unit × unit` tile, then box-averages
/// non-overlapping `factor × factor` windows.
fn mean_removed<T: Real>(x: &[f64], unit: usize, factor: usize) -> Vec<T> {
    let n = CTU_SIZE;
    let mut centered = x.to_vec();
    for ty in (0..n).step_by(unit) {
        for tx in (0..n).step_by(unit) {
            let mut sum = 0.0;
            for y in ty..ty + unit {
                sum += x[y * n + tx..y * n + tx + unit].iter().sum::<f64>();
            }
            let mean = sum / (unit * unit) as f64;
            for y in ty..ty + unit {
                for v in &mut centered[y * n + tx..y * n + tx + unit] {
                    *v -= mean;
                }
            }
        }
    }
    let m = n / factor;
    let mut out = Vec::with_capacity(m * m);
    for oy in 0..m {
        for ox in 0..m {
            let mut s = 0.0;
            for y in oy * factor..(oy + 1) * factor {
                s += centered[y * n + ox * factor..y * n + (ox + 1) * factor].iter().sum::<f64>();
            }
            out.push(T::of(s / (factor * factor) as f64));
        }
    }
    out
}

/// Scales a 64×64 CTU to [0, 1] and produces the 16×16 (global mean
/// removed), 32×32 (quadrant means removed) and 64×64 (16×16-block means
/// removed) branch inputs.
pub fn preprocess<T: Real>(block: &[u8]) -> Result<BranchInputs<T>> {
    if block.len() != CTU_SIZE * CTU_SIZE {
        return Err(Error::shape(CTU_SIZE * CTU_SIZE, block.len()));
    }
    let x: Vec<f64> = block.iter().map(|&v| v as f64 / 255.0).collect();
    Ok(BranchInputs {
        b1: mean_removed(&x, 64, 4),
        b2: mean_removed(&x, 32, 2),
        b3: mean_removed(&x, 16, 1),
    })
}
