//! Pixel containers, decoding, luminance conversion, normalization and
//! geometric adaptation (crop/resize) of planes and patterns.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted width or height.
pub const MIN_DIM: usize = 8;

/// A single-channel image on the nominal `[0, 255]` scale, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::TooSmall {
                width,
                height,
                min: MIN_DIM,
            });
        }
        if data.len() != width * height {
            return Err(Error::InvalidPlane(format!(
                "{} values for a {width}x{height} plane",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPlane(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.data.len() as f64
    }

    /// Applies `f` to every value, re-validating the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Decoded 8-bit RGB image with interleaved samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width < MIN_DIM || height < MIN_DIM {
            return Err(Error::TooSmall {
                width,
                height,
                min: MIN_DIM,
            });
        }
        if samples.len() != width * height * 3 {
            return Err(Error::CorruptImage(format!(
                "{} samples for a {width}x{height} RGB image",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }
}

/// Result of decoding an image file.
#[derive(Clone, Debug, PartialEq)]
pub enum LoadedImage {
    Gray(ImagePlane),
    Rgb(RgbImage),
}

impl LoadedImage {
    /// Collapses to a single plane, converting color input to luminance.
    pub fn into_luminance(self) -> ImagePlane {
        match self {
            LoadedImage::Gray(p) => p,
            LoadedImage::Rgb(rgb) => to_luminance(&rgb),
        }
    }
}

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Loads an 8-bit PNG (gray or RGB) or binary PGM (P5).
pub fn load_image(path: impl AsRef<Path>) -> Result<LoadedImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_image(&bytes)
}

/// Decodes an in-memory PNG or PGM file.
pub fn decode_image(bytes: &[u8]) -> Result<LoadedImage> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes).map(LoadedImage::Gray)
    } else {
        Err(Error::UnsupportedFormat(
            "expected PNG or binary PGM (P5)".into(),
        ))
    }
}

fn decode_png(bytes: &[u8]) -> Result<LoadedImage> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::CorruptImage(e.to_string()))?;
    let (width, height) = {
        let info = reader.info();
        (info.width as usize, info.height as usize)
    };
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat(format!(
            "{depth:?} PNG, only 8-bit is supported"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptImage("image too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::CorruptImage(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    if width < MIN_DIM || height < MIN_DIM {
        return Err(Error::TooSmall {
            width,
            height,
            min: MIN_DIM,
        });
    }
    match color {
        png::ColorType::Grayscale => Ok(LoadedImage::Gray(ImagePlane::new(
            width,
            height,
            buf.iter().map(|&v| f64::from(v)).collect(),
        )?)),
        png::ColorType::Rgb => Ok(LoadedImage::Rgb(RgbImage::new(width, height, buf)?)),
        other => Err(Error::UnsupportedFormat(format!("{other:?} PNG"))),
    }
}

fn decode_pgm(bytes: &[u8]) -> Result<ImagePlane> {
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::CorruptImage("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptImage("bad PGM header field".into()))?;
    }
    let [width, height, maxval] = header;
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::CorruptImage(
            "missing whitespace after PGM header".into(),
        ));
    }
    pos += 1;
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!(
            "PGM maxval {maxval}, only 8-bit is supported"
        )));
    }
    if width < MIN_DIM || height < MIN_DIM {
        return Err(Error::TooSmall {
            width,
            height,
            min: MIN_DIM,
        });
    }
    let pixels = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| Error::CorruptImage("truncated PGM pixel data".into()))?;
    ImagePlane::new(
        width,
        height,
        pixels.iter().map(|&v| f64::from(v)).collect(),
    )
}

/// Writes a plane as binary PGM, clamping and rounding to 8 bits.
pub fn save_pgm(plane: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", plane.width, plane.height)?;
    let bytes: Vec<u8> = plane
        .data
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// BT.601 luma.
pub fn to_luminance(img: &RgbImage) -> ImagePlane {
    let data = img
        .samples
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect();
    ImagePlane {
        width: img.width,
        height: img.height,
        data,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizeMode {
    /// Clip to `[0, 255]`, then round.
    #[default]
    Clamp,
    /// Affine map of `[min, max]` onto `[0, 255]`, then round.
    Rescale,
}

impl std::str::FromStr for NormalizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamp" => Ok(Self::Clamp),
            "rescale" => Ok(Self::Rescale),
            _ => Err(Error::InvalidConfig(format!(
                "unknown normalize mode {s:?}"
            ))),
        }
    }
}

/// Brings a plane back onto integral `[0, 255]` values.
pub fn normalize_plane(p: &ImagePlane, mode: NormalizeMode) -> ImagePlane {
    let data = match mode {
        NormalizeMode::Clamp => p.data.iter().map(|v| v.clamp(0.0, 255.0).round()).collect(),
        NormalizeMode::Rescale => {
            let (lo, hi) = p
                .data
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                });
            if hi > lo {
                let scale = 255.0 / (hi - lo);
                p.data.iter().map(|v| ((v - lo) * scale).round()).collect()
            } else {
                vec![128.0; p.data.len()]
            }
        }
    };
    ImagePlane { data, ..*p }
}

/// Centered window; odd margins leave the extra row/column on the bottom/right,
/// i.e. the window starts at `floor(margin / 2)`.
pub fn crop_center(p: &ImagePlane, w: usize, h: usize) -> Result<ImagePlane> {
    if w > p.width || h > p.height {
        return Err(Error::TargetLargerThanSource {
            source_w: p.width,
            source_h: p.height,
            target_w: w,
            target_h: h,
        });
    }
    let x0 = (p.width - w) / 2;
    let y0 = (p.height - h) / 2;
    ImagePlane::from_fn(w, h, |x, y| p.get(x0 + x, y0 + y))
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(p: &ImagePlane, w: usize, h: usize) -> Result<ImagePlane> {
    if (w, h) == p.dims() {
        return Ok(p.clone());
    }
    let sx = p.width as f64 / w as f64;
    let sy = p.height as f64 / h as f64;
    let sample_axis = |dst: usize, scale: f64, len: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, src - i0 as f64)
    };
    ImagePlane::from_fn(w, h, |x, y| {
        let (x0, x1, fx) = sample_axis(x, sx, p.width);
        let (y0, y1, fy) = sample_axis(y, sy, p.height);
        // a + (b - a)·t keeps constant regions exact
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let top = lerp(p.get(x0, y0), p.get(x1, y0), fx);
        let bottom = lerp(p.get(x0, y1), p.get(x1, y1), fx);
        lerp(top, bottom, fy)
    })
}

/// How a pattern is fitted onto a plane of different dimensions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptMode {
    /// Center-crop every dimension where the source is larger, then
    /// resize whatever dimension is still short.
    #[default]
    Crop,
    /// Bilinear resize straight to the target dimensions.
    Resize,
}

impl std::str::FromStr for AdaptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crop" => Ok(Self::Crop),
            "resize" => Ok(Self::Resize),
            _ => Err(Error::InvalidConfig(format!("unknown adapt mode {s:?}"))),
        }
    }
}

/// Fits `p` onto `w`×`h`. Returns the input unchanged when dimensions already match.
pub fn adapt(p: &ImagePlane, w: usize, h: usize, mode: AdaptMode) -> Result<ImagePlane> {
    if p.dims() == (w, h) {
        return Ok(p.clone());
    }
    match mode {
        AdaptMode::Resize => resize_bilinear(p, w, h),
        AdaptMode::Crop => {
            let cropped = crop_center(p, p.width.min(w), p.height.min(h))?;
            resize_bilinear(&cropped, w, h)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pgm_bytes(w: usize, h: usize, fill: u8) -> Vec<u8> {
        let mut b = format!("P5\n# comment\n{w} {h}\n255\n").into_bytes();
        b.extend(std::iter::repeat_n(fill, w * h));
        b
    }

    fn png_bytes(w: u32, h: u32, color: png::ColorType, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, w, h);
            enc.set_color(color);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().unwrap();
            writer.write_image_data(data).unwrap();
        }
        out
    }

    #[test]
    fn pgm_decodes_exact_values() {
        let LoadedImage::Gray(p) = decode_image(&pgm_bytes(16, 16, 128)).unwrap() else {
            panic!("expected gray");
        };
        assert_eq!(p.dims(), (16, 16));
        assert!(p.data().iter().all(|&v| v == 128.0));
    }

    #[test]
    fn small_pgm_is_rejected() {
        assert!(matches!(
            decode_image(&pgm_bytes(4, 4, 0)),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn truncated_pgm_is_corrupt() {
        let mut b = pgm_bytes(16, 16, 1);
        b.truncate(b.len() - 10);
        assert!(matches!(decode_image(&b), Err(Error::CorruptImage(_))));
    }

    #[test]
    fn png_color_and_gray() {
        let red: Vec<u8> = std::iter::repeat_n([255u8, 0, 0], 8 * 8)
            .flatten()
            .collect();
        let LoadedImage::Rgb(rgb) =
            decode_image(&png_bytes(8, 8, png::ColorType::Rgb, &red)).unwrap()
        else {
            panic!("expected rgb");
        };
        assert!(rgb.samples().chunks(3).all(|p| p == [255, 0, 0]));

        let gray: Vec<u8> = (0..100).collect();
        let LoadedImage::Gray(p) =
            decode_image(&png_bytes(10, 10, png::ColorType::Grayscale, &gray)).unwrap()
        else {
            panic!("expected gray");
        };
        assert_eq!(p.get(3, 2), 23.0);
    }

    #[test]
    fn unknown_format_and_missing_file() {
        assert!(matches!(
            decode_image(b"GIF89a...."),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            load_image("/nonexistent/image.pgm"),
            Err(Error::FileNotFound(_))
        ));
        let broken = &png_bytes(8, 8, png::ColorType::Grayscale, &[0; 64])[..20];
        assert!(matches!(decode_image(broken), Err(Error::CorruptImage(_))));
    }

    #[test]
    fn pgm_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("prnu-imaging-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("p.pgm");
        let p = ImagePlane::from_fn(9, 11, |x, y| (x * 20 + y) as f64).unwrap();
        save_pgm(&p, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), LoadedImage::Gray(p));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn luminance_weights() {
        let mk = |px: [u8; 3]| {
            let s: Vec<u8> = std::iter::repeat_n(px, 64).flatten().collect();
            to_luminance(&RgbImage::new(8, 8, s).unwrap()).get(0, 0)
        };
        assert!((mk([255, 255, 255]) - 255.0).abs() < 1e-9);
        assert!((mk([255, 0, 0]) - 76.245).abs() < 1e-9);
        assert_eq!(mk([0, 0, 0]), 0.0);
    }

    #[test]
    fn normalize_examples() {
        let mut data = vec![100.0; 64];
        data[0] = -3.0;
        data[1] = 300.0;
        let p = ImagePlane::new(8, 8, data).unwrap();
        let c = normalize_plane(&p, NormalizeMode::Clamp);
        assert_eq!(&c.data()[..3], &[0.0, 255.0, 100.0]);

        let mut data = vec![5.0; 64];
        data[0] = 0.0;
        data[1] = 10.0;
        let r = normalize_plane(
            &ImagePlane::new(8, 8, data).unwrap(),
            NormalizeMode::Rescale,
        );
        assert_eq!(&r.data()[..3], &[0.0, 255.0, 128.0]);

        let flat = ImagePlane::filled(8, 8, 42.0).unwrap();
        let r = normalize_plane(&flat, NormalizeMode::Rescale);
        assert!(r.data().iter().all(|&v| v == 128.0));
    }

    #[test]
    fn crop_examples() {
        let p = ImagePlane::from_fn(10, 10, |x, y| (y * 10 + x) as f64).unwrap();
        let c = crop_center(&p, 8, 8).unwrap();
        assert_eq!(c.get(0, 0), 11.0);
        assert_eq!(c.get(7, 7), 88.0);
        let q = ImagePlane::from_fn(16, 16, |x, y| (x ^ y) as f64).unwrap();
        assert_eq!(crop_center(&q, 16, 16).unwrap(), q);
        assert!(matches!(
            crop_center(&q, 32, 32),
            Err(Error::TargetLargerThanSource { .. })
        ));
        // odd margin: 11 -> 8 leaves 3, start at 1
        let r = ImagePlane::from_fn(11, 8, |x, _| x as f64).unwrap();
        assert_eq!(crop_center(&r, 8, 8).unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn resize_examples() {
        let p = ImagePlane::from_fn(16, 16, |x, y| ((x / 2) * 7 + (y / 2) * 31) as f64).unwrap();
        let d = resize_bilinear(&p, 8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert!((d.get(x, y) - (x * 7 + y * 31) as f64).abs() < 1e-12);
            }
        }
        let flat = ImagePlane::filled(12, 9, 77.0).unwrap();
        let r = resize_bilinear(&flat, 31, 17).unwrap();
        assert!(r.data().iter().all(|&v| (v - 77.0).abs() < 1e-12));
        assert_eq!(resize_bilinear(&p, 16, 16).unwrap(), p);
    }

    #[test]
    fn adapt_mixed_dimensions() {
        let p = ImagePlane::from_fn(64, 64, |x, y| (x + y) as f64).unwrap();
        for mode in [AdaptMode::Crop, AdaptMode::Resize] {
            assert_eq!(adapt(&p, 80, 56, mode).unwrap().dims(), (80, 56));
        }
        assert_eq!(
            adapt(&p, 32, 40, AdaptMode::Crop).unwrap(),
            crop_center(&p, 32, 40).unwrap()
        );
    }
}
