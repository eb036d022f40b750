//! Circular cross-correlation, the CCN detection statistic and source camera
//! identification.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::denoise::{residual, DenoiseParams, ResidualNoise};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::imaging::{adapt, AdaptMode, ImagePlane};

pub const DEFAULT_EXCLUSION_RADIUS: usize = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.01;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(len: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(len), p.plan_fft_inverse(len))
    })
}

fn spectrum(x: &[f64], fft: &dyn Fft<f64>) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf
}

/// `r[m] = (1/L) Σ_l x_l · y_{(l+m) mod L}` for every lag, computed in the
/// frequency domain.
pub fn circular_xcorr(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_lengths(x, y)?;
    Ok(Correlator::new(x).xcorr(y))
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("correlation of empty vectors"));
    }
    Ok(())
}

/// Caches the spectrum of one signal so it can be correlated against many others.
pub struct Correlator {
    x: Vec<f64>,
    x_spec_conj: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Correlator {
    pub fn new(x: &[f64]) -> Self {
        let (forward, inverse) = plans(x.len().max(1));
        let x_spec_conj = spectrum(x, forward.as_ref())
            .into_iter()
            .map(|c| c.conj())
            .collect();
        Self {
            x: x.to_vec(),
            x_spec_conj,
            forward,
            inverse,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Circular cross-correlation against `y`; `y.len()` must equal [`Self::len`].
    pub fn xcorr(&self, y: &[f64]) -> Vec<f64> {
        let l = self.x.len();
        let mut prod = spectrum(y, self.forward.as_ref());
        for (p, xc) in prod.iter_mut().zip(&self.x_spec_conj) {
            *p *= xc;
        }
        self.inverse.process(&mut prod);
        let scale = 1.0 / (l as f64 * l as f64);
        prod.into_iter().map(|c| c.re * scale).collect()
    }

    pub fn ccn(&self, y: &[f64], exclusion_radius: usize) -> Result<CorrelationResult> {
        check_lengths(&self.x, y)?;
        let l = self.x.len();
        if 2 * exclusion_radius + 1 >= l {
            return Err(Error::InvalidRadius {
                radius: exclusion_radius,
                len: l,
            });
        }
        let r = self.xcorr(y);
        let r0 = self.x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / l as f64;
        let outside = l - (2 * exclusion_radius + 1);
        let tail: f64 = r[exclusion_radius + 1..l - exclusion_radius]
            .iter()
            .map(|v| v * v)
            .sum();
        let energy = (tail / outside as f64).sqrt();
        // |r(m)| is bounded by ‖x‖‖y‖/L; anything far below that is rounding noise
        let bound = norm(&self.x) * norm(y) / l as f64;
        if !(energy > 1e-12 * bound) {
            return Err(Error::DegenerateEnergy);
        }
        Ok(CorrelationResult {
            ccn: r0 / energy,
            r0,
            energy,
            exclusion_radius,
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// One evaluation of the CCN statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub ccn: f64,
    /// Zero-lag correlation.
    pub r0: f64,
    /// RMS of the correlation outside the exclusion neighbourhood.
    pub energy: f64,
    pub exclusion_radius: usize,
}

/// Zero-lag correlation normalized by the RMS of the circular correlation
/// outside `{m : dist(m, 0) <= exclusion_radius}`.
pub fn ccn(x: &[f64], y: &[f64], exclusion_radius: usize) -> Result<CorrelationResult> {
    check_lengths(x, y)?;
    Correlator::new(x).ccn(y, exclusion_radius)
}

/// Expected fingerprint signal `K∘I`, row-major.
pub fn expected_signal(k: &Fingerprint, image: &ImagePlane) -> Result<Vec<f64>> {
    if k.dims() != image.dims() {
        return Err(Error::DimensionMismatch(format!(
            "fingerprint {} is {:?}, image is {:?}",
            k.camera_id(),
            k.dims(),
            image.dims()
        )));
    }
    Ok(k.data()
        .iter()
        .zip(image.data())
        .map(|(a, b)| a * b)
        .collect())
}

/// CCN between a residual and the signal a camera's fingerprint predicts for `image`.
pub fn detect(
    x: &ResidualNoise,
    k: &Fingerprint,
    image: &ImagePlane,
    exclusion_radius: usize,
) -> Result<CorrelationResult> {
    if x.dims() != image.dims() {
        return Err(Error::DimensionMismatch(format!(
            "residual {:?} vs image {:?}",
            x.dims(),
            image.dims()
        )));
    }
    let y = expected_signal(k, image)?;
    ccn(x.data(), &y, exclusion_radius)
}

/// Scores one residual against many fingerprints, reusing its spectrum.
pub fn detect_many(
    x: &ResidualNoise,
    image: &ImagePlane,
    candidates: &[Fingerprint],
    exclusion_radius: usize,
) -> Result<Vec<CorrelationResult>> {
    if x.dims() != image.dims() {
        return Err(Error::DimensionMismatch(format!(
            "residual {:?} vs image {:?}",
            x.dims(),
            image.dims()
        )));
    }
    let corr = Correlator::new(x.data());
    candidates
        .iter()
        .map(|k| corr.ccn(&expected_signal(k, image)?, exclusion_radius))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedScore {
    pub camera_id: String,
    pub ccn: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Sorted by descending ccn, ties broken by camera id.
    pub ranking: Vec<RankedScore>,
    /// Top camera when its ccn reaches the threshold.
    pub decision: Option<String>,
}

/// Sorts scores descending by ccn, ascending by camera id on ties.
pub fn rank_scores(scores: &mut [RankedScore]) {
    scores.sort_by(|a, b| {
        b.ccn
            .total_cmp(&a.ccn)
            .then_with(|| a.camera_id.cmp(&b.camera_id))
    });
}

pub fn identify(
    x: &ResidualNoise,
    image: &ImagePlane,
    candidates: &[Fingerprint],
    threshold: f64,
    exclusion_radius: usize,
) -> Result<Identification> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidate fingerprints"));
    }
    let results = detect_many(x, image, candidates, exclusion_radius)?;
    let mut ranking: Vec<RankedScore> = candidates
        .iter()
        .zip(results)
        .map(|(k, r)| RankedScore {
            camera_id: k.camera_id().to_string(),
            ccn: r.ccn,
        })
        .collect();
    rank_scores(&mut ranking);
    let decision = ranking
        .first()
        .filter(|top| top.ccn >= threshold)
        .map(|top| top.camera_id.clone());
    Ok(Identification { ranking, decision })
}

/// Identifies the source of `image` among fingerprints of possibly different
/// sizes. The image is brought onto each fingerprint's geometry (`adapt`
/// `None` makes any mismatch an error) and its residual extracted there.
pub fn identify_image(
    image: &ImagePlane,
    candidates: &[Fingerprint],
    params: DenoiseParams,
    threshold: f64,
    exclusion_radius: usize,
    adapt_mode: Option<AdaptMode>,
) -> Result<Identification> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("no candidate fingerprints"));
    }
    let mut sizes: Vec<(usize, usize)> = Vec::new();
    for k in candidates {
        if !sizes.contains(&k.dims()) {
            sizes.push(k.dims());
        }
    }
    let mut ranking = Vec::with_capacity(candidates.len());
    for (w, h) in sizes {
        let plane = if (w, h) == image.dims() {
            image.clone()
        } else {
            match adapt_mode {
                Some(mode) => adapt(image, w, h, mode)?,
                None => {
                    return Err(Error::DimensionMismatch(format!(
                        "image {:?} vs fingerprint {:?} with adaptation disabled",
                        image.dims(),
                        (w, h)
                    )))
                }
            }
        };
        let x = residual(&plane, params)?;
        let group: Vec<Fingerprint> = candidates
            .iter()
            .filter(|k| k.dims() == (w, h))
            .cloned()
            .collect();
        for (k, r) in group
            .iter()
            .zip(detect_many(&x, &plane, &group, exclusion_radius)?)
        {
            ranking.push(RankedScore {
                camera_id: k.camera_id().to_string(),
                ccn: r.ccn,
            });
        }
    }
    rank_scores(&mut ranking);
    let decision = ranking
        .first()
        .filter(|top| top.ccn >= threshold)
        .map(|top| top.camera_id.clone());
    Ok(Identification { ranking, decision })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xcorr_small_examples() {
        let r = circular_xcorr(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert!((r[0] - 5.5).abs() < 1e-12 && (r[1] - 5.0).abs() < 1e-12);
        let r = circular_xcorr(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0]).unwrap();
        for (got, want) in r.iter().zip([0.0, 0.25, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let v = [0.3, -1.2, 2.5, 0.0, 7.0];
        let r = circular_xcorr(&v, &v).unwrap();
        let msq = v.iter().map(|a| a * a).sum::<f64>() / 5.0;
        assert!((r[0] - msq).abs() < 1e-12);
    }

    #[test]
    fn xcorr_errors() {
        assert!(matches!(
            circular_xcorr(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            circular_xcorr(&[], &[]),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ccn_examples() {
        let a = [1.0, -1.0, 1.0, -1.0];
        let c = ccn(&a, &a, 0).unwrap();
        assert!((c.energy - 1.0).abs() < 1e-12);
        assert!((c.ccn - 1.0).abs() < 1e-12);

        let c = ccn(&[1.0, 0.0, 0.0, 0.0], &[0.0, 1.0, 0.0, 0.0], 0).unwrap();
        assert_eq!(c.ccn, 0.0);
        assert!((c.energy - 1.0 / (4.0 * 3f64.sqrt())).abs() < 1e-12);

        let d = [1.0, 0.0, 0.0, 0.0];
        assert!(matches!(ccn(&d, &d, 0), Err(Error::DegenerateEnergy)));
        assert!(matches!(ccn(&a, &a, 2), Err(Error::InvalidRadius { .. })));
    }

    #[test]
    fn ccn_is_reconstructible() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 7919) % 23) as f64 - 11.0).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 104_729) % 19) as f64 - 9.0).collect();
        let c = ccn(&x, &y, 1).unwrap();
        assert!(c.energy > 0.0);
        assert!((c.ccn - c.r0 / c.energy).abs() < 1e-12);
    }

    fn fp(id: &str, v: f64) -> Fingerprint {
        let data = (0..64)
            .map(|i| v * (((i * 37) % 11) as f64 - 5.0))
            .collect();
        Fingerprint::new(8, 8, data, id, 1).unwrap()
    }

    #[test]
    fn zero_fingerprint_is_degenerate() {
        let img = ImagePlane::filled(8, 8, 100.0).unwrap();
        let x = ResidualNoise::new(8, 8, (0..64).map(|i| (i % 5) as f64).collect()).unwrap();
        let k = Fingerprint::new(8, 8, vec![0.0; 64], "z", 1).unwrap();
        assert!(matches!(
            detect(&x, &k, &img, 1),
            Err(Error::DegenerateEnergy)
        ));
    }

    #[test]
    fn identify_ties_and_threshold() {
        let img = ImagePlane::filled(8, 8, 100.0).unwrap();
        let k = fp("b", 1.0);
        let x = ResidualNoise::new(8, 8, k.data().to_vec()).unwrap();
        // identical patterns under different ids give equal ccn
        let cands = [fp("b", 1.0), fp("a", 2.0)];
        let id = identify(&x, &img, &cands, 0.01, 1).unwrap();
        assert_eq!(id.ranking[0].camera_id, "a");
        assert_eq!(id.ranking[0].ccn, id.ranking[1].ccn);
        assert_eq!(id.decision.as_deref(), Some("a"));

        let id = identify(&x, &img, &cands[..1], 1e9, 1).unwrap();
        assert_eq!(id.decision, None);
        assert_eq!(id.ranking.len(), 1);

        assert!(matches!(
            identify(&x, &img, &[], 0.0, 1),
            Err(Error::EmptyInput(_))
        ));
    }
}
