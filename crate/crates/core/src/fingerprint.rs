//! Maximum-likelihood reference pattern estimation and the PNUF file format.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::denoise::ResidualNoise;
use crate::error::{Error, Result};
use crate::imaging::{adapt, AdaptMode, ImagePlane};

pub const MAGIC: &[u8; 4] = b"PNUF";
pub const FORMAT_VERSION: u16 = 1;
const FLAG_ZERO_MEANED: u16 = 1;

/// Multiplicative sensor pattern `K` of one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    width: usize,
    height: usize,
    data: Vec<f64>,
    camera_id: String,
    n_images: u32,
    zero_meaned: bool,
}

impl Fingerprint {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f64>,
        camera_id: impl Into<String>,
        n_images: u32,
    ) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} fingerprint",
                data.len()
            )));
        }
        if n_images == 0 {
            return Err(Error::EmptyInput("fingerprint built from zero images"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPlane("non-finite fingerprint value".into()));
        }
        Ok(Self {
            width,
            height,
            data,
            camera_id: camera_id.into(),
            n_images,
            zero_meaned: false,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }

    pub fn n_images(&self) -> u32 {
        self.n_images
    }

    pub fn is_zero_meaned(&self) -> bool {
        self.zero_meaned
    }

    pub fn with_camera_id(mut self, id: impl Into<String>) -> Self {
        self.camera_id = id.into();
        self
    }

    /// Crops or resizes the pattern onto `w`×`h`.
    pub fn adapted(&self, w: usize, h: usize, mode: AdaptMode) -> Result<Fingerprint> {
        if self.dims() == (w, h) {
            return Ok(self.clone());
        }
        let plane = ImagePlane::new(self.width, self.height, self.data.clone())?;
        let out = adapt(&plane, w, h, mode)?;
        Ok(Fingerprint {
            width: w,
            height: h,
            data: out.into_data(),
            ..self.clone()
        })
    }
}

/// `K = Σ xⁱ·Iⁱ / Σ (Iⁱ)²`, elementwise. Pixels with a zero denominator get `K = 0`.
pub fn estimate_fingerprint(
    images: &[ImagePlane],
    residuals: &[ResidualNoise],
    camera_id: &str,
) -> Result<Fingerprint> {
    if images.is_empty() || residuals.is_empty() {
        return Err(Error::EmptyInput(
            "no images to estimate a fingerprint from",
        ));
    }
    if images.len() != residuals.len() {
        return Err(Error::LengthMismatch {
            left: images.len(),
            right: residuals.len(),
        });
    }
    let dims = images[0].dims();
    for (i, (img, res)) in images.iter().zip(residuals).enumerate() {
        if img.dims() != dims || res.dims() != dims {
            return Err(Error::DimensionMismatch(format!(
                "image {i}: {:?} / residual {:?}, expected {:?}",
                img.dims(),
                res.dims(),
                dims
            )));
        }
    }
    // parallel over pixels; each pixel sums over the images in input order,
    // so the result does not depend on the thread count
    let mut data = vec![0.0; dims.0 * dims.1];
    data.par_chunks_mut(dims.0)
        .enumerate()
        .for_each(|(row, out)| {
            let start = row * dims.0;
            for (j, k) in out.iter_mut().enumerate() {
                let (mut num, mut den) = (0.0, 0.0);
                for (img, res) in images.iter().zip(residuals) {
                    let v = img.data()[start + j];
                    num += res.data()[start + j] * v;
                    den += v * v;
                }
                *k = if den == 0.0 { 0.0 } else { num / den };
            }
        });
    Fingerprint::new(dims.0, dims.1, data, camera_id, images.len() as u32)
}

/// Removes row means, then column means.
pub fn zero_mean(f: &Fingerprint) -> Fingerprint {
    let (w, h) = f.dims();
    let mut data = f.data.clone();
    for row in data.chunks_exact_mut(w) {
        let m = row.iter().sum::<f64>() / w as f64;
        row.iter_mut().for_each(|v| *v -= m);
    }
    for x in 0..w {
        let m = (0..h).map(|y| data[y * w + x]).sum::<f64>() / h as f64;
        for y in 0..h {
            data[y * w + x] -= m;
        }
    }
    Fingerprint {
        data,
        zero_meaned: true,
        ..f.clone()
    }
}

/// Serializes to the little-endian PNUF layout.
pub fn encode_fingerprint(f: &Fingerprint) -> Result<Vec<u8>> {
    let id = f.camera_id.as_bytes();
    let id_len = u16::try_from(id.len())
        .map_err(|_| Error::InvalidConfig("camera id longer than 65535 bytes".into()))?;
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| Error::InvalidConfig("fingerprint too large".into()))
    };
    let mut out = Vec::with_capacity(22 + id.len() + 4 * f.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let flags = if f.zero_meaned { FLAG_ZERO_MEANED } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&dim(f.width)?.to_le_bytes());
    out.extend_from_slice(&dim(f.height)?.to_le_bytes());
    out.extend_from_slice(&f.n_images.to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    for v in &f.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or(Error::TruncatedFile)?;
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_fingerprint(bytes: &[u8]) -> Result<Fingerprint> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = c.u16()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let flags = c.u16()?;
    let width = c.u32()? as usize;
    let height = c.u32()? as usize;
    let n_images = c.u32()?;
    let id_len = c.u16()? as usize;
    let camera_id = std::str::from_utf8(c.take(id_len)?)
        .map_err(|_| Error::InvalidConfig("camera id is not UTF-8".into()))?
        .to_string();
    let n = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(4))
        .ok_or(Error::TruncatedFile)?;
    let data = c
        .take(n)?
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    let mut f = Fingerprint::new(width, height, data, camera_id, n_images)?;
    f.zero_meaned = flags & FLAG_ZERO_MEANED != 0;
    Ok(f)
}

pub fn save_fingerprint(f: &Fingerprint, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&encode_fingerprint(f)?)?;
    out.flush()?;
    Ok(())
}

pub fn load_fingerprint(path: impl AsRef<Path>) -> Result<Fingerprint> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_fingerprint(&bytes)
}
