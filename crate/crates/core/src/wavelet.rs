//! Separable 2-D discrete wavelet transform with the 8-tap Daubechies
//! filter (db4 in vanishing-moment naming) and periodic boundaries.

use crate::error::{Error, Result};
use crate::imaging::ImagePlane;

/// Daubechies 8-tap scaling filter. Orthonormal: `Σh² = 1`, `Σh = √2`.
pub const DAUB8: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_858,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

/// Quadrature mirror of [`DAUB8`]: `g[j] = (-1)^j h[7 - j]`.
pub fn daub8_highpass() -> [f64; 8] {
    std::array::from_fn(|j| {
        let v = DAUB8[DAUB8.len() - 1 - j];
        if j % 2 == 0 {
            v
        } else {
            -v
        }
    })
}

/// Dense real matrix used for subbands, which may be smaller than an [`ImagePlane`].
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Band {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn is_consistent(&self) -> bool {
        self.width > 0 && self.height > 0 && self.data.len() == self.width * self.height
    }
}

/// Detail subbands produced at one decomposition level.
#[derive(Clone, Debug, PartialEq)]
pub struct DetailLevel {
    /// Dimensions of the approximation this level decomposed, before even-padding.
    pub input_width: usize,
    pub input_height: usize,
    /// Low-pass rows, high-pass columns.
    pub horizontal: Band,
    /// High-pass rows, low-pass columns.
    pub vertical: Band,
    pub diagonal: Band,
}

impl DetailLevel {
    pub fn bands(&self) -> [&Band; 3] {
        [&self.horizontal, &self.vertical, &self.diagonal]
    }

    pub fn bands_mut(&mut self) -> [&mut Band; 3] {
        [&mut self.horizontal, &mut self.vertical, &mut self.diagonal]
    }
}

/// Multi-level decomposition; `details[0]` is the finest level.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPyramid {
    pub details: Vec<DetailLevel>,
    pub approximation: Band,
}

impl WaveletPyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Same structure with every coefficient set to zero.
    pub fn zeroed(&self) -> Self {
        let z = |b: &Band| Band::zeros(b.width, b.height);
        Self {
            details: self
                .details
                .iter()
                .map(|d| DetailLevel {
                    horizontal: z(&d.horizontal),
                    vertical: z(&d.vertical),
                    diagonal: z(&d.diagonal),
                    ..*d
                })
                .collect(),
            approximation: z(&self.approximation),
        }
    }
}

fn analyze_1d(x: &[f64], lo: &mut [f64], hi: &mut [f64], g: &[f64; 8]) {
    let n = x.len();
    for k in 0..n / 2 {
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..DAUB8.len() {
            let v = x[(2 * k + j) % n];
            a += DAUB8[j] * v;
            d += g[j] * v;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

fn synthesize_1d(lo: &[f64], hi: &[f64], x: &mut [f64], g: &[f64; 8]) {
    let n = x.len();
    x.fill(0.0);
    for k in 0..n / 2 {
        for j in 0..DAUB8.len() {
            x[(2 * k + j) % n] += DAUB8[j] * lo[k] + g[j] * hi[k];
        }
    }
}

/// Wraps an odd-sized matrix up to the next even size.
fn pad_even(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (pw, ph) = (w + w % 2, h + h % 2);
    if (pw, ph) == (w, h) {
        return (src.to_vec(), w, h);
    }
    let mut out = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        let row = &src[(y % h) * w..(y % h + 1) * w];
        out.extend_from_slice(row);
        if pw > w {
            out.push(row[0]);
        }
    }
    (out, pw, ph)
}

/// One 2-D analysis step; returns `(ll, lh, hl, hh)`, each `ceil(w/2)`×`ceil(h/2)`.
fn analyze_2d(src: &[f64], w: usize, h: usize, g: &[f64; 8]) -> [Band; 4] {
    let (x, pw, ph) = pad_even(src, w, h);
    let (hw, hh) = (pw / 2, ph / 2);
    // rows: left half low-pass, right half high-pass
    let mut rows = vec![0.0; pw * ph];
    for y in 0..ph {
        let (lo, hi) = rows[y * pw..(y + 1) * pw].split_at_mut(hw);
        analyze_1d(&x[y * pw..(y + 1) * pw], lo, hi, g);
    }
    let mut out = [
        Band::zeros(hw, hh),
        Band::zeros(hw, hh),
        Band::zeros(hw, hh),
        Band::zeros(hw, hh),
    ];
    let mut col = vec![0.0; ph];
    let (mut lo, mut hi) = (vec![0.0; hh], vec![0.0; hh]);
    for cx in 0..pw {
        for y in 0..ph {
            col[y] = rows[y * pw + cx];
        }
        analyze_1d(&col, &mut lo, &mut hi, g);
        let (row_hi, bx) = (cx >= hw, cx % hw);
        // (row filter, column filter): LL, LH (horizontal), HL (vertical), HH
        let (low_dst, high_dst) = if row_hi { (2, 3) } else { (0, 1) };
        for y in 0..hh {
            out[low_dst].data[y * hw + bx] = lo[y];
            out[high_dst].data[y * hw + bx] = hi[y];
        }
    }
    out
}

fn synthesize_2d(
    ll: &Band,
    lh: &Band,
    hl: &Band,
    hh: &Band,
    out_w: usize,
    out_h: usize,
    g: &[f64; 8],
) -> Vec<f64> {
    let (hw, hhgt) = (ll.width, ll.height);
    let (pw, ph) = (hw * 2, hhgt * 2);
    let mut rows = vec![0.0; pw * ph];
    let mut col = vec![0.0; ph];
    let (mut lo, mut hi) = (vec![0.0; hhgt], vec![0.0; hhgt]);
    for cx in 0..pw {
        let (row_hi, bx) = (cx >= hw, cx % hw);
        let (low_src, high_src) = if row_hi { (hl, hh) } else { (ll, lh) };
        for y in 0..hhgt {
            lo[y] = low_src.data[y * hw + bx];
            hi[y] = high_src.data[y * hw + bx];
        }
        synthesize_1d(&lo, &hi, &mut col, g);
        for y in 0..ph {
            rows[y * pw + cx] = col[y];
        }
    }
    let mut x = vec![0.0; pw * ph];
    for y in 0..ph {
        let (lo, hi) = rows[y * pw..(y + 1) * pw].split_at(hw);
        synthesize_1d(lo, hi, &mut x[y * pw..(y + 1) * pw], g);
    }
    if (pw, ph) == (out_w, out_h) {
        return x;
    }
    let mut cropped = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        cropped.extend_from_slice(&x[y * pw..y * pw + out_w]);
    }
    cropped
}

/// Multi-level forward transform. Requires `min(width, height) >= 2^levels`.
pub fn dwt2_forward(p: &ImagePlane, levels: usize) -> Result<WaveletPyramid> {
    let (w, h) = p.dims();
    let needed = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    if levels == 0 || levels >= usize::BITS as usize || w.min(h) < needed {
        return Err(Error::TooManyLevels {
            levels,
            needed,
            width: w,
            height: h,
        });
    }
    let g = daub8_highpass();
    let mut details = Vec::with_capacity(levels);
    let mut current = Band {
        width: w,
        height: h,
        data: p.data().to_vec(),
    };
    for _ in 0..levels {
        let [ll, lh, hl, hh] = analyze_2d(&current.data, current.width, current.height, &g);
        details.push(DetailLevel {
            input_width: current.width,
            input_height: current.height,
            horizontal: lh,
            vertical: hl,
            diagonal: hh,
        });
        current = ll;
    }
    Ok(WaveletPyramid {
        details,
        approximation: current,
    })
}

/// Inverse of [`dwt2_forward`].
pub fn dwt2_inverse(w: &WaveletPyramid) -> Result<ImagePlane> {
    if w.details.is_empty() {
        return Err(Error::MalformedPyramid("no detail levels".into()));
    }
    if !w.approximation.is_consistent() {
        return Err(Error::MalformedPyramid(
            "inconsistent approximation band".into(),
        ));
    }
    let g = daub8_highpass();
    let mut current = w.approximation.clone();
    for (i, level) in w.details.iter().enumerate().rev() {
        let (bw, bh) = (
            level.input_width.div_ceil(2),
            level.input_height.div_ceil(2),
        );
        let ok = (current.width, current.height) == (bw, bh)
            && level
                .bands()
                .iter()
                .all(|b| b.is_consistent() && (b.width, b.height) == (bw, bh));
        if !ok {
            return Err(Error::MalformedPyramid(format!(
                "level {i}: band dimensions do not match input {}x{}",
                level.input_width, level.input_height
            )));
        }
        let data = synthesize_2d(
            &current,
            &level.horizontal,
            &level.vertical,
            &level.diagonal,
            level.input_width,
            level.input_height,
            &g,
        );
        current = Band {
            width: level.input_width,
            height: level.input_height,
            data,
        };
    }
    ImagePlane::new(current.width, current.height, current.data)
        .map_err(|e| Error::MalformedPyramid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(w: usize, h: usize, seed: u64) -> ImagePlane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImagePlane::from_fn(w, h, |_, _| rng.random_range(0.0..255.0)).unwrap()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn filter_is_orthonormal() {
        let s: f64 = DAUB8.iter().sum();
        let s2: f64 = DAUB8.iter().map(|v| v * v).sum();
        assert!((s - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!((s2 - 1.0).abs() < 1e-15);
        // even shifts are orthogonal
        for shift in [2, 4, 6] {
            let dot: f64 = (0..8 - shift).map(|j| DAUB8[j] * DAUB8[j + shift]).sum();
            assert!(dot.abs() < 1e-15, "shift {shift}: {dot}");
        }
        let g = daub8_highpass();
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        // four vanishing moments
        for k in 1..4 {
            let m: f64 = g
                .iter()
                .enumerate()
                .map(|(j, v)| v * (j as f64).powi(k))
                .sum();
            assert!(m.abs() < 1e-12, "moment {k}: {m}");
        }
    }

    #[test]
    fn constant_plane_has_zero_details() {
        let p = ImagePlane::filled(16, 16, 93.0).unwrap();
        let w = dwt2_forward(&p, 2).unwrap();
        for level in &w.details {
            for band in level.bands() {
                assert!(band.data.iter().all(|v| v.abs() < 1e-10));
            }
        }
        let a0 = w.approximation.data[0];
        assert!(w.approximation.data.iter().all(|v| (v - a0).abs() < 1e-10));
    }

    #[test]
    fn round_trip_even_and_odd() {
        for (i, (w, h)) in [(32, 32), (64, 40), (17, 23), (9, 8), (8, 8)]
            .into_iter()
            .enumerate()
        {
            let p = random_plane(w, h, i as u64);
            let levels = if w.min(h) >= 16 { 4 } else { 3 };
            let pyr = dwt2_forward(&p, levels).unwrap();
            let back = dwt2_inverse(&pyr).unwrap();
            assert!(max_abs_diff(p.data(), back.data()) < 1e-9, "{w}x{h}");
        }
    }

    #[test]
    fn band_dims_halve_with_ceil() {
        let pyr = dwt2_forward(&random_plane(23, 17, 3), 4).unwrap();
        let dims: Vec<_> = pyr
            .details
            .iter()
            .map(|d| (d.horizontal.width, d.horizontal.height))
            .collect();
        assert_eq!(dims, vec![(12, 9), (6, 5), (3, 3), (2, 2)]);
        assert_eq!((pyr.approximation.width, pyr.approximation.height), (2, 2));
    }

    #[test]
    fn too_many_levels() {
        let p = random_plane(16, 16, 0);
        assert!(matches!(
            dwt2_forward(&p, 5),
            Err(Error::TooManyLevels { .. })
        ));
        assert!(dwt2_forward(&p, 4).is_ok());
    }

    #[test]
    fn zeroed_pyramid_inverts_to_zero() {
        let pyr = dwt2_forward(&random_plane(32, 32, 1), 3).unwrap().zeroed();
        let z = dwt2_inverse(&pyr).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn approximation_only_is_lower_energy() {
        let p = random_plane(32, 32, 5);
        let mut pyr = dwt2_forward(&p, 3).unwrap();
        for level in &mut pyr.details {
            for band in level.bands_mut() {
                band.data.fill(0.0);
            }
        }
        let low = dwt2_inverse(&pyr).unwrap();
        let energy = |d: &[f64]| d.iter().map(|v| v * v).sum::<f64>();
        // orthogonality: energy of the low-pass part equals the approximation band's energy
        assert!((energy(low.data()) - energy(&pyr.approximation.data)).abs() < 1e-6);
        assert!(energy(low.data()) <= energy(p.data()));
    }

    #[test]
    fn malformed_pyramid_rejected() {
        let mut pyr = dwt2_forward(&random_plane(32, 32, 2), 2).unwrap();
        pyr.details[1].diagonal.data.pop();
        assert!(matches!(
            dwt2_inverse(&pyr),
            Err(Error::MalformedPyramid(_))
        ));
        let empty = WaveletPyramid {
            details: vec![],
            approximation: Band::zeros(4, 4),
        };
        assert!(matches!(
            dwt2_inverse(&empty),
            Err(Error::MalformedPyramid(_))
        ));
    }
}
