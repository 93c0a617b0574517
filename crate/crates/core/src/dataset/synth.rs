use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::Frame;
use crate::error::{Error, Result};
use crate::CTU_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Stills,
    Sequence,
}

/// Generator settings. `texture_density` scales how many patches are laid
/// over the flat background: 0 gives a constant frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub texture_density: f64,
    /// Frames per sequence; ignored for stills.
    pub frames: usize,
    /// Largest per-frame patch speed in pixels.
    pub max_speed: f64,
    /// Per-frame positional jitter amplitude in pixels.
    pub jitter: f64,
    /// Patches per CTU area at density 1.
    pub patches_per_ctu: f64,
    /// Patch edge length range in pixels.
    pub patch_size: (f64, f64),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 256,
            height: 256,
            texture_density: 0.4,
            frames: 30,
            max_speed: 2.0,
            jitter: 0.5,
            patches_per_ctu: 0.6,
            patch_size: (32.0, 192.0),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.width % CTU_SIZE != 0 || self.height % CTU_SIZE != 0 {
            return Err(Error::Geometry(format!(
                "{}x{} is not a multiple of {}",
                self.width, self.height, CTU_SIZE
            )));
        }
        if !(self.patch_size.0 >= 4.0 && self.patch_size.0 < self.patch_size.1) || self.patches_per_ctu < 0.0 {
            return Err(Error::arg(format!("bad patch settings {:?}", self.patch_size)));
        }
        if !(0.0..=1.0).contains(&self.texture_density) {
            return Err(Error::arg(format!("texture density {} outside [0, 1]", self.texture_density)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Texture {
    Flat(f64),
    Grating { amp: f64, kx: f64, ky: f64, phase: f64 },
    Noise { field: Vec<f32>, w: usize, h: usize },
}

#[derive(Clone, Debug)]
struct Patch {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    vx: f64,
    vy: f64,
    texture: Texture,
}

fn smoothed_noise<R: Rng>(rng: &mut R, w: usize, h: usize, sigma: f64, radius: usize) -> Vec<f32> {
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let raw: Vec<f64> = (0..w * h).map(|_| normal.sample(rng)).collect();
    if radius == 0 {
        return raw.iter().map(|&v| v as f32).collect();
    }
    let mut out = vec![0f32; w * h];
    let r = radius as isize;
    // box smoothing keeps the variance comparable by rescaling with sqrt(n)
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut acc, mut n) = (0.0f64, 0.0f64);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x + dx, y + dy);
                    if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                        acc += raw[sy as usize * w + sx as usize];
                        n += 1.0;
                    }
                }
            }
            out[y as usize * w + x as usize] = (acc / n.sqrt()) as f32;
        }
    }
    out
}

fn random_patch<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Patch {
    let (lo, hi) = cfg.patch_size;
    let w = rng.random_range(lo..hi);
    let h = rng.random_range(lo..hi);
    let x = rng.random_range(-w / 2.0..cfg.width as f64 - w / 2.0);
    let y = rng.random_range(-h / 2.0..cfg.height as f64 - h / 2.0);
    let speed = if cfg.max_speed > 0.0 {
        rng.random_range(0.0..cfg.max_speed)
    } else {
        0.0
    };
    let dir = rng.random_range(0.0..2.0 * PI);
    let kind = rng.random_range(0..100);
    let texture = if kind < 40 {
        let period = rng.random_range(3.0..40.0f64);
        let theta = rng.random_range(0.0..PI);
        Texture::Grating {
            amp: rng.random_range(10.0..60.0),
            kx: 2.0 * PI * theta.cos() / period,
            ky: 2.0 * PI * theta.sin() / period,
            phase: rng.random_range(0.0..2.0 * PI),
        }
    } else if kind < 75 {
        let (nw, nh) = (w.ceil() as usize + 2, h.ceil() as usize + 2);
        let sigma = rng.random_range(5.0..40.0);
        let radius = rng.random_range(0..3usize);
        Texture::Noise {
            field: smoothed_noise(rng, nw, nh, sigma, radius),
            w: nw,
            h: nh,
        }
    } else {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        Texture::Flat(sign * rng.random_range(15.0..70.0))
    };
    Patch {
        x,
        y,
        w,
        h,
        vx: speed * dir.cos(),
        vy: speed * dir.sin(),
        texture,
    }
}

impl Patch {
    fn sample(&self, u: f64, v: f64) -> f64 {
        match &self.texture {
            Texture::Flat(off) => *off,
            Texture::Grating { amp, kx, ky, phase } => amp * (kx * u + ky * v + phase).sin(),
            Texture::Noise { field, w, h } => {
                // bilinear lookup gives sub-pixel motion
                let (fu, fv) = (u.clamp(0.0, (*w - 2) as f64), v.clamp(0.0, (*h - 2) as f64));
                let (iu, iv) = (fu.floor() as usize, fv.floor() as usize);
                let (au, av) = (fu - iu as f64, fv - iv as f64);
                let at = |x: usize, y: usize| field[y * w + x] as f64;
                (1.0 - av) * ((1.0 - au) * at(iu, iv) + au * at(iu + 1, iv))
                    + av * ((1.0 - au) * at(iu, iv + 1) + au * at(iu + 1, iv + 1))
            }
        }
    }
}

struct Scene {
    background: f64,
    patches: Vec<Patch>,
}

impl Scene {
    fn new<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Scene {
        let background = rng.random_range(40.0..216.0);
        let ctus = (cfg.width / CTU_SIZE) * (cfg.height / CTU_SIZE);
        let count = (cfg.texture_density * cfg.patches_per_ctu * ctus as f64).round() as usize;
        let patches = (0..count).map(|_| random_patch(rng, cfg)).collect();
        Scene { background, patches }
    }

    fn render(&self, cfg: &SynthConfig, offsets: &[(f64, f64)]) -> Frame {
        let mut canvas = vec![self.background; cfg.width * cfg.height];
        for (p, &(ox, oy)) in self.patches.iter().zip(offsets) {
            let (px, py) = (p.x + ox, p.y + oy);
            let x0 = px.floor().max(0.0) as usize;
            let y0 = py.floor().max(0.0) as usize;
            let x1 = ((px + p.w).ceil().max(0.0) as usize).min(cfg.width);
            let y1 = ((py + p.h).ceil().max(0.0) as usize).min(cfg.height);
            for y in y0..y1 {
                let v = y as f64 - py;
                if v < 0.0 || v >= p.h {
                    continue;
                }
                for x in x0..x1 {
                    let u = x as f64 - px;
                    if u < 0.0 || u >= p.w {
                        continue;
                    }
                    canvas[y * cfg.width + x] += p.sample(u, v);
                }
            }
        }
        let luma = canvas.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        Frame::new(cfg.width, cfg.height, luma).expect("validated geometry")
    }
}

/// One still image of flat patches, oriented gratings and noise textures.
pub fn gen_still<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Result<Frame> {
    cfg.validate()?;
    let scene = Scene::new(rng, cfg);
    Ok(scene.render(cfg, &vec![(0.0, 0.0); scene.patches.len()]))
}

/// A sequence in which every patch translates rigidly at its own velocity
/// with sub-pixel jitter, so partitions stay correlated over short distances.
pub fn gen_sequence<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Result<Vec<Frame>> {
    cfg.validate()?;
    if cfg.frames == 0 {
        return Err(Error::arg("sequence needs at least one frame"));
    }
    let scene = Scene::new(rng, cfg);
    let mut frames = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let offsets: Vec<(f64, f64)> = scene
            .patches
            .iter()
            .map(|p| {
                let (jx, jy) = if cfg.jitter > 0.0 {
                    (
                        rng.random_range(-cfg.jitter..cfg.jitter),
                        rng.random_range(-cfg.jitter..cfg.jitter),
                    )
                } else {
                    (0.0, 0.0)
                };
                (p.vx * t as f64 + jx, p.vy * t as f64 + jy)
            })
            .collect();
        frames.push(scene.render(cfg, &offsets));
    }
    Ok(frames)
}

/// `count` sources from one master seed; a still source holds one frame.
pub fn gen_synthetic(seed: u64, count: usize, kind: SourceKind, cfg: &SynthConfig) -> Result<Vec<Vec<Frame>>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| match kind {
            SourceKind::Stills => gen_still(&mut rng, cfg).map(|f| vec![f]),
            SourceKind::Sequence => gen_sequence(&mut rng, cfg),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_density_is_constant() {
        let cfg = SynthConfig {
            texture_density: 0.0,
            ..SynthConfig::default()
        };
        let f = &gen_synthetic(5, 1, SourceKind::Stills, &cfg).unwrap()[0][0];
        assert!(f.luma().iter().all(|&v| v == f.luma()[0]));
    }

    #[test]
    fn same_seed_same_frames() {
        let cfg = SynthConfig {
            frames: 4,
            ..SynthConfig::default()
        };
        let a = gen_synthetic(11, 2, SourceKind::Sequence, &cfg).unwrap();
        let b = gen_synthetic(11, 2, SourceKind::Sequence, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_synthetic(12, 2, SourceKind::Sequence, &cfg).unwrap());
        assert_eq!(a[0].len(), 4);
    }

    #[test]
    fn sequence_frames_change_but_stay_close() {
        let cfg = SynthConfig {
            frames: 3,
            ..SynthConfig::default()
        };
        let s = &gen_synthetic(3, 1, SourceKind::Sequence, &cfg).unwrap()[0];
        let mad = |a: &Frame, b: &Frame| {
            a.luma().iter().zip(b.luma()).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum::<f64>()
                / a.luma().len() as f64
        };
        let d = mad(&s[0], &s[1]);
        assert!(d > 0.0 && d < 20.0, "mean abs diff {}", d);
    }

    #[test]
    fn bad_geometry_rejected() {
        let cfg = SynthConfig {
            width: 100,
            ..SynthConfig::default()
        };
        assert!(matches!(gen_synthetic(0, 1, SourceKind::Stills, &cfg), Err(Error::Geometry(_))));
    }
}
