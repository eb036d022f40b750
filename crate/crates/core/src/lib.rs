//! Sensor pattern noise forensics: residual extraction with a wavelet
//! denoiser, maximum-likelihood camera fingerprints, CCN-based source camera
//! identification, fingerprint removal/injection/substitution attacks, a
//! synthetic sensor simulator and the spoofing experiment built on them.

pub mod attack;
pub mod correlate;
pub mod denoise;
mod error;
pub mod experiment;
pub mod fingerprint;
pub mod imaging;
pub mod sensorsim;
pub mod simulation;
pub mod wavelet;

pub use error::{Error, Result};

pub use attack::{
    adp_remove, inject_fingerprint, remove_fingerprint, substitute_fingerprint, AttackConfig,
};
pub use correlate::{
    ccn, circular_xcorr, detect, identify, identify_image, CorrelationResult, Identification,
};
pub use denoise::{denoise, residual, DenoiseParams, ResidualNoise};
pub use fingerprint::{
    estimate_fingerprint, load_fingerprint, save_fingerprint, zero_mean, Fingerprint,
};
pub use imaging::{load_image, AdaptMode, ImagePlane, LoadedImage, NormalizeMode, RgbImage};
