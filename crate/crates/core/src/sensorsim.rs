//! Synthetic cameras with known PNU and FPN patterns.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, purpose)`
//! and selected by row index, so any row can be rendered independently and
//! in any order with bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ImagePlane, MIN_DIM};

pub const DEFAULT_SIGMA_PNU: f64 = 0.02;
pub const DEFAULT_SIGMA_FPN: f64 = 1.0;
pub const DEFAULT_READ_SIGMA: f64 = 2.0;
/// Shot-noise variance per unit of scene luminance.
pub const DEFAULT_SHOT_GAIN: f64 = 0.15;

const PURPOSE_PNU: u64 = 1;
const PURPOSE_FPN: u64 = 2;
const PURPOSE_SHOT: u64 = 3;
const PURPOSE_READ: u64 = 4;

/// Mixes several words into one; used to derive child seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 finalizer over a running state
    let mut z = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

fn row_stream(seed: u64, purpose: u64, row: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(row as u64);
    rng
}

/// Standard normal field, one independent stream per row.
fn gaussian_field(seed: u64, purpose: u64, width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let mut rng = row_stream(seed, purpose, y);
        for v in row {
            *v = StandardNormal.sample(&mut rng);
        }
    });
    out
}

fn centered_pattern(seed: u64, purpose: u64, width: usize, height: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; width * height];
    }
    let mut f = gaussian_field(seed, purpose, width, height);
    f.iter_mut().for_each(|v| *v *= sigma);
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    f.iter_mut().for_each(|v| *v -= mean);
    f
}

/// Noise parameters of a virtual sensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    pub sigma_pnu: f64,
    pub sigma_fpn: f64,
    pub read_sigma: f64,
    pub shot_gain: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            sigma_pnu: DEFAULT_SIGMA_PNU,
            sigma_fpn: DEFAULT_SIGMA_FPN,
            read_sigma: DEFAULT_READ_SIGMA,
            shot_gain: DEFAULT_SHOT_GAIN,
        }
    }
}

/// Ground truth of one synthetic camera.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraProfile {
    pub camera_id: String,
    pub width: usize,
    pub height: usize,
    /// Multiplicative PNU, zero mean.
    pub k_true: Vec<f64>,
    /// Additive FPN on the 8-bit scale, zero mean.
    pub fpn: Vec<f64>,
    pub params: SensorParams,
    pub seed: u64,
}

pub fn make_camera(
    seed: u64,
    width: usize,
    height: usize,
    params: SensorParams,
    camera_id: impl Into<String>,
) -> Result<CameraProfile> {
    if width < MIN_DIM || height < MIN_DIM {
        return Err(Error::TooSmall {
            width,
            height,
            min: MIN_DIM,
        });
    }
    let sigmas = [
        params.sigma_pnu,
        params.sigma_fpn,
        params.read_sigma,
        params.shot_gain,
    ];
    if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "sensor parameters must be finite and non-negative: {params:?}"
        )));
    }
    Ok(CameraProfile {
        camera_id: camera_id.into(),
        width,
        height,
        k_true: centered_pattern(seed, PURPOSE_PNU, width, height, params.sigma_pnu),
        fpn: centered_pattern(seed, PURPOSE_FPN, width, height, params.sigma_fpn),
        params,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SceneKind {
    Flat {
        level: f64,
    },
    /// Horizontal ramp from 16 to 240.
    Gradient,
    /// 2×5 grid of gray patches with 1-px black separators.
    Testchart,
}

/// Gray levels of the test chart patches, row-major over the 2×5 grid.
pub fn testchart_levels() -> [f64; 10] {
    std::array::from_fn(|k| (26.0 + k as f64 * (230.0 - 26.0) / 9.0).round())
}

/// A noiseless scene rendered onto the sensor grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub kind: SceneKind,
    pub plane: ImagePlane,
}

pub fn make_scene(kind: SceneKind, width: usize, height: usize) -> Result<Scene> {
    let plane = match kind {
        SceneKind::Flat { level } => {
            if !(0.0..=255.0).contains(&level) {
                return Err(Error::InvalidConfig(format!(
                    "flat level {level} outside [0, 255]"
                )));
            }
            ImagePlane::filled(width, height, level)?
        }
        SceneKind::Gradient => {
            let span = (width.max(2) - 1) as f64;
            ImagePlane::from_fn(width, height, |x, _| {
                (16.0 + 224.0 * x as f64 / span).round()
            })?
        }
        SceneKind::Testchart => {
            let levels = testchart_levels();
            ImagePlane::from_fn(width, height, |x, y| {
                let col = (0..5).rev().find(|c| c * width / 5 <= x).unwrap_or(0);
                let row = usize::from(y >= height / 2);
                let on_separator = (col > 0 && x == col * width / 5) || y == height / 2;
                if on_separator {
                    0.0
                } else {
                    levels[row * 5 + col]
                }
            })?
        }
    };
    Ok(Scene { kind, plane })
}

/// Renders one exposure: `round(clamp(I0·(1+K) + FPN + shot + read))`.
pub fn shoot(cam: &CameraProfile, scene: &Scene, shot_seed: u64) -> Result<ImagePlane> {
    if scene.plane.dims() != (cam.width, cam.height) {
        return Err(Error::DimensionMismatch(format!(
            "scene {:?} vs camera {}x{}",
            scene.plane.dims(),
            cam.width,
            cam.height
        )));
    }
    let w = cam.width;
    let key = mix_seed(&[cam.seed, shot_seed]);
    let p = cam.params;
    let mut out = vec![0.0; w * cam.height];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut shot_rng = row_stream(key, PURPOSE_SHOT, y);
        let mut read_rng = row_stream(key, PURPOSE_READ, y);
        for (x, v) in row.iter_mut().enumerate() {
            let i = y * w + x;
            let i0 = scene.plane.get(x, y);
            let zs: f64 = StandardNormal.sample(&mut shot_rng);
            let zr: f64 = StandardNormal.sample(&mut read_rng);
            let signal = i0 * (1.0 + cam.k_true[i]) + cam.fpn[i];
            let noisy = signal + (p.shot_gain * i0).sqrt() * zs + p.read_sigma * zr;
            *v = noisy.clamp(0.0, 255.0).round();
        }
    });
    ImagePlane::new(w, cam.height, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlate::ccn;

    fn std_dev(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn camera_is_deterministic_and_centered() {
        let a = make_camera(9, 64, 48, SensorParams::default(), "a").unwrap();
        let b = make_camera(9, 64, 48, SensorParams::default(), "a").unwrap();
        assert_eq!(a, b);
        let mean = a.k_true.iter().sum::<f64>() / a.k_true.len() as f64;
        assert!(mean.abs() < 1e-6);
        assert!((std_dev(&a.k_true) / DEFAULT_SIGMA_PNU - 1.0).abs() < 0.05);
        assert!((std_dev(&a.fpn) / DEFAULT_SIGMA_FPN - 1.0).abs() < 0.05);
    }

    #[test]
    fn distinct_seeds_are_uncorrelated() {
        let a = make_camera(1, 64, 64, SensorParams::default(), "a").unwrap();
        let b = make_camera(2, 64, 64, SensorParams::default(), "b").unwrap();
        let c = ccn(&a.k_true, &b.k_true, 1).unwrap();
        // ccn of independent white patterns is roughly N(0, 1)
        let r0_corr = c.r0 / (std_dev(&a.k_true) * std_dev(&b.k_true));
        assert!(r0_corr.abs() < 0.05, "{r0_corr}");
    }

    #[test]
    fn zero_pnu_gives_zero_pattern() {
        let p = SensorParams {
            sigma_pnu: 0.0,
            ..SensorParams::default()
        };
        let c = make_camera(3, 16, 16, p, "z").unwrap();
        assert!(c.k_true.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noiseless_shot_equals_scene() {
        let p = SensorParams {
            sigma_pnu: 0.0,
            sigma_fpn: 0.0,
            read_sigma: 0.0,
            shot_gain: 0.0,
        };
        let cam = make_camera(4, 40, 30, p, "n").unwrap();
        let scene = make_scene(SceneKind::Testchart, 40, 30).unwrap();
        assert_eq!(shoot(&cam, &scene, 17).unwrap(), scene.plane);
    }

    #[test]
    fn flat_shot_statistics() {
        let cam = make_camera(5, 64, 64, SensorParams::default(), "f").unwrap();
        let scene = make_scene(SceneKind::Flat { level: 128.0 }, 64, 64).unwrap();
        let shots: Vec<_> = (0..8).map(|s| shoot(&cam, &scene, s).unwrap()).collect();
        for s in &shots {
            assert!((s.mean() - 128.0).abs() < 1.0);
        }
        // temporal std per pixel, averaged over the frame
        let mut acc = 0.0;
        for i in 0..64 * 64 {
            let v: Vec<f64> = shots.iter().map(|s| s.data()[i]).collect();
            acc += std_dev(&v);
        }
        let per_pixel = acc / (64.0 * 64.0);
        assert!((1.0..=10.0).contains(&per_pixel), "{per_pixel}");
    }

    #[test]
    fn shoot_rejects_mismatched_scene() {
        let cam = make_camera(5, 64, 64, SensorParams::default(), "f").unwrap();
        let scene = make_scene(SceneKind::Gradient, 32, 64).unwrap();
        assert!(matches!(
            shoot(&cam, &scene, 0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn scenes() {
        let flat = make_scene(SceneKind::Flat { level: 128.0 }, 16, 16).unwrap();
        assert!(flat.plane.data().iter().all(|&v| v == 128.0));

        let g = make_scene(SceneKind::Gradient, 16, 16).unwrap().plane;
        for y in 0..16 {
            assert_eq!(g.get(0, y), 16.0);
            assert_eq!(g.get(15, y), 240.0);
            assert!((1..16).all(|x| g.get(x, y) > g.get(x - 1, y)));
        }

        let t = make_scene(SceneKind::Testchart, 64, 64).unwrap().plane;
        let mut seen: Vec<f64> = t.data().iter().copied().filter(|&v| v != 0.0).collect();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        assert_eq!(seen.len(), 10);
        assert_eq!(seen, testchart_levels().to_vec());
        assert!(t.data().contains(&0.0));
    }
}
