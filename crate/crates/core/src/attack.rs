//! Counter-forensic attacks: fingerprint removal (single pass and adaptive
//! iterative denoising), fingerprint injection (copy attack) and
//! fingerprint substitution (median filter, then inject).

use serde::{Deserialize, Serialize};

use crate::correlate::{detect, DEFAULT_EXCLUSION_RADIUS};
use crate::denoise::{denoise, residual, DenoiseParams};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::imaging::{normalize_plane, AdaptMode, ImagePlane, NormalizeMode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Injection strength α.
    pub injection_strength: f64,
    pub normalize_mode: NormalizeMode,
    pub adp_max_iters: usize,
    pub adp_ccn_target: f64,
    pub median_kernel: usize,
    /// `None` turns a dimension mismatch into an error.
    pub adapt_mode: Option<AdaptMode>,
    pub denoise: DenoiseParams,
    pub exclusion_radius: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            injection_strength: 1.0,
            normalize_mode: NormalizeMode::Clamp,
            adp_max_iters: 10,
            adp_ccn_target: 0.005,
            median_kernel: 3,
            adapt_mode: Some(AdaptMode::Crop),
            denoise: DenoiseParams::default(),
            exclusion_radius: DEFAULT_EXCLUSION_RADIUS,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.injection_strength >= 0.0) || !self.injection_strength.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "injection strength must be >= 0, got {}",
                self.injection_strength
            )));
        }
        if self.adp_max_iters == 0 {
            return Err(Error::InvalidConfig("adp_max_iters must be >= 1".into()));
        }
        if self.median_kernel < 3 || self.median_kernel % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "median kernel must be odd and >= 3, got {}",
                self.median_kernel
            )));
        }
        Ok(())
    }
}

/// Single-pass removal: the normalized denoised image `F(I)`.
pub fn remove_fingerprint(image: &ImagePlane, cfg: &AttackConfig) -> Result<ImagePlane> {
    Ok(normalize_plane(
        &denoise(image, cfg.denoise)?,
        cfg.normalize_mode,
    ))
}

/// Denoises repeatedly until the image's correlation with its own camera's
/// pattern drops below `cfg.adp_ccn_target`, or `cfg.adp_max_iters` passes.
/// Returns the normalized result and the number of passes applied.
pub fn adp_remove(
    image: &ImagePlane,
    own: &Fingerprint,
    cfg: &AttackConfig,
) -> Result<(ImagePlane, usize)> {
    cfg.validate()?;
    if own.dims() != image.dims() {
        return Err(Error::DimensionMismatch(format!(
            "fingerprint {:?} vs image {:?}",
            own.dims(),
            image.dims()
        )));
    }
    let mut current = image.clone();
    let mut iterations = 0;
    while iterations < cfg.adp_max_iters {
        current = denoise(&current, cfg.denoise)?;
        iterations += 1;
        let x = residual(&current, cfg.denoise)?;
        match detect(&x, own, &current, cfg.exclusion_radius) {
            Ok(r) if r.ccn < cfg.adp_ccn_target => break,
            Ok(_) => {}
            // nothing left to correlate against
            Err(Error::DegenerateEnergy) => break,
            Err(e) => return Err(e),
        }
    }
    Ok((normalize_plane(&current, cfg.normalize_mode), iterations))
}

fn fit_pattern(rp: &Fingerprint, base: &ImagePlane, cfg: &AttackConfig) -> Result<Fingerprint> {
    if rp.dims() == base.dims() {
        return Ok(rp.clone());
    }
    match cfg.adapt_mode {
        Some(mode) => rp.adapted(base.width(), base.height(), mode),
        None => Err(Error::DimensionMismatch(format!(
            "fingerprint {:?} vs image {:?} with adaptation disabled",
            rp.dims(),
            base.dims()
        ))),
    }
}

/// Copy attack: adds `α · rp · mean(base)` and renormalizes.
pub fn inject_fingerprint(
    base: &ImagePlane,
    rp: &Fingerprint,
    cfg: &AttackConfig,
) -> Result<ImagePlane> {
    cfg.validate()?;
    let rp = fit_pattern(rp, base, cfg)?;
    let gain = cfg.injection_strength * base.mean();
    let data = base
        .data()
        .iter()
        .zip(rp.data())
        .map(|(b, k)| b + gain * k)
        .collect();
    let spoofed = ImagePlane::new(base.width(), base.height(), data)?;
    Ok(normalize_plane(&spoofed, cfg.normalize_mode))
}

/// Median over a `kernel`×`kernel` window with periodic wrap.
pub fn median_filter(image: &ImagePlane, kernel: usize) -> Result<ImagePlane> {
    if kernel < 3 || kernel % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "median kernel must be odd and >= 3, got {kernel}"
        )));
    }
    let (w, h) = image.dims();
    let r = (kernel / 2) as isize;
    let mut window = Vec::with_capacity(kernel * kernel);
    ImagePlane::from_fn(w, h, |x, y| {
        window.clear();
        for dy in -r..=r {
            let yy = (y as isize + dy).rem_euclid(h as isize) as usize;
            for dx in -r..=r {
                let xx = (x as isize + dx).rem_euclid(w as isize) as usize;
                window.push(image.get(xx, yy));
            }
        }
        let mid = window.len() / 2;
        *window.select_nth_unstable_by(mid, f64::total_cmp).1
    })
}

/// Anonymization: median-filter away the native pattern, then inject `rp_other`.
pub fn substitute_fingerprint(
    image: &ImagePlane,
    rp_other: &Fingerprint,
    cfg: &AttackConfig,
) -> Result<ImagePlane> {
    cfg.validate()?;
    let filtered = median_filter(image, cfg.median_kernel)?;
    inject_fingerprint(&filtered, rp_other, cfg)
}
