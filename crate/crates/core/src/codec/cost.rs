use serde::{Deserialize, Serialize};

use super::frame::{Frame, SignalPlane};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodingMode {
    Intra,
    Inter,
}

/// Aligned square CU inside a frame, in luma samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CuRect {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

/// Lagrangian cost `J = D + λ·R` with its components.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RdCost {
    /// Sum of squared error.
    pub distortion: f64,
    /// Bit estimate.
    pub rate: f64,
    pub lambda: f64,
    pub cost: f64,
}

impl RdCost {
    pub fn new(distortion: f64, rate: f64, lambda: f64) -> Self {
        RdCost {
            distortion,
            rate,
            lambda,
            cost: distortion + lambda * rate,
        }
    }
}

/// Constants of the toy rate-distortion model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub header_bits: f64,
    pub split_flag_bits: f64,
    /// Scale of the `log2(1 + SAD)` coefficient-bit proxy.
    pub coef_scale: f64,
    pub lambda_scale: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            header_bits: 32.0,
            split_flag_bits: 1.0,
            coef_scale: 0.3,
            lambda_scale: 0.85,
        }
    }
}

impl CostModel {
    /// `λ = 0.85 · 2^((QP − 12) / 3)`.
    pub fn lambda(&self, qp: u8) -> f64 {
        self.lambda_scale * 2f64.powf((qp as f64 - 12.0) / 3.0)
    }

    pub fn split_flag_cost(&self, qp: u8) -> f64 {
        self.lambda(qp) * self.split_flag_bits
    }

    /// DC-prediction cost of one square block of `plane`.
    ///
    /// The caller guarantees the block is inside the plane.
    pub fn block_cost(&self, plane: &SignalPlane, x: usize, y: usize, size: usize, qp: u8) -> RdCost {
        let n = (size * size) as i64;
        let (mut sum, mut sumsq) = (0i64, 0i64);
        for row in 0..size {
            let line = &plane.data[(y + row) * plane.width + x..][..size];
            for &v in line {
                let v = v as i64;
                sum += v;
                sumsq += v * v;
            }
        }
        // n is a power of two, so this division is exact in f64
        let distortion = (n * sumsq - sum * sum) as f64 / n as f64;
        let mean = sum as f64 / n as f64;
        let mut sad = 0.0;
        for row in 0..size {
            let line = &plane.data[(y + row) * plane.width + x..][..size];
            for &v in line {
                sad += (v as f64 - mean).abs();
            }
        }
        let rate = self.header_bits + self.coef_scale * (1.0 + sad).log2();
        RdCost::new(distortion, rate, self.lambda(qp))
    }

    pub fn checked_block_cost(&self, plane: &SignalPlane, rect: CuRect, qp: u8) -> Result<RdCost> {
        let ok_size = matches!(rect.size, 8 | 16 | 32 | 64);
        if !ok_size
            || rect.x % rect.size != 0
            || rect.y % rect.size != 0
            || rect.x + rect.size > plane.width
            || rect.y + rect.size > plane.height
        {
            return Err(Error::Geometry(format!(
                "CU {}x{} at ({}, {}) in {}x{} plane",
                rect.size, rect.size, rect.x, rect.y, plane.width, plane.height
            )));
        }
        Ok(self.block_cost(plane, rect.x, rect.y, rect.size, qp))
    }
}

/// Cost of one CU of `frame`; inter mode codes the residual against
/// `reference`.
pub fn cu_cost(
    frame: &Frame,
    rect: CuRect,
    qp: u8,
    mode: CodingMode,
    reference: Option<&Frame>,
) -> Result<RdCost> {
    let plane = match mode {
        CodingMode::Intra => SignalPlane::from_frame(frame),
        CodingMode::Inter => {
            let r = reference.ok_or_else(|| Error::arg("inter mode needs a reference frame"))?;
            SignalPlane::residual(frame, Some(r))?
        }
    };
    CostModel::default().checked_block_cost(&plane, rect, qp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_frame(seed: u64) -> Frame {
        let mut s = seed;
        let luma = (0..64 * 64)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 56) as u8
            })
            .collect();
        Frame::new(64, 64, luma).unwrap()
    }

    #[test]
    fn constant_block_has_no_distortion() {
        let f = Frame::filled(64, 64, 77).unwrap();
        let c = cu_cost(&f, CuRect { x: 0, y: 0, size: 64 }, 32, CodingMode::Intra, None).unwrap();
        assert_eq!(c.distortion, 0.0);
        assert_eq!(c.rate, 32.0);
        assert_eq!(c.cost, c.distortion + c.lambda * c.rate);
    }

    #[test]
    fn lambda_ratio_between_qp22_and_qp37() {
        let m = CostModel::default();
        assert!((m.lambda(37) / m.lambda(22) - 32.0).abs() < 1e-12);
        assert!((m.lambda(12) - 0.85).abs() < 1e-15);
    }

    #[test]
    fn distortion_matches_direct_sse() {
        let f = noise_frame(5);
        for (x, y) in [(0, 0), (8, 24), (56, 56)] {
            let c = cu_cost(&f, CuRect { x, y, size: 8 }, 27, CodingMode::Intra, None).unwrap();
            let block: Vec<f64> = (0..64)
                .map(|i| f.luma()[(y + i / 8) * 64 + x + i % 8] as f64)
                .collect();
            let mean = block.iter().sum::<f64>() / 64.0;
            let sse: f64 = block.iter().map(|v| (v - mean).powi(2)).sum();
            assert!((c.distortion - sse).abs() < 1e-6 * sse.max(1.0));
            let sad: f64 = block.iter().map(|v| (v - mean).abs()).sum();
            assert!((c.rate - (32.0 + 0.3 * (1.0 + sad).log2())).abs() < 1e-9);
        }
    }

    #[test]
    fn inter_cost_uses_residual() {
        let prev = noise_frame(1);
        let cur = prev.clone();
        let r = CuRect { x: 0, y: 0, size: 32 };
        let c = cu_cost(&cur, r, 22, CodingMode::Inter, Some(&prev)).unwrap();
        assert_eq!(c.distortion, 0.0);
        assert!(cu_cost(&cur, r, 22, CodingMode::Inter, None).is_err());
    }

    #[test]
    fn misaligned_rects_rejected() {
        let f = Frame::filled(64, 64, 0).unwrap();
        for r in [
            CuRect { x: 4, y: 0, size: 8 },
            CuRect { x: 0, y: 0, size: 12 },
            CuRect { x: 64, y: 0, size: 8 },
            CuRect { x: 32, y: 32, size: 64 },
        ] {
            assert!(matches!(
                cu_cost(&f, r, 22, CodingMode::Intra, None),
                Err(Error::Geometry(_))
            ));
        }
    }
}
