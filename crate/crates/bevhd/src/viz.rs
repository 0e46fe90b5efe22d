//! PCA reduction of a C-channel BEV feature map to the 3-channel RGB image
//! fed to planners.
//!
//! The basis is fit per feature map: mean-center, eigendecompose the CxC
//! covariance (divisor H*W), keep the top three components. Each projected
//! score channel is min-max normalized to [0, 255] independently; channels
//! with no signal (zero variance) render as mid-gray 128. A deterministic
//! sign rule and half-up rounding keep images bit-reproducible.

use nalgebra::DMatrix;

use crate::grid::FeatureMap;
use crate::{Error, Result};

/// Gray level used for degenerate (zero-variance) projection channels.
pub const DEGENERATE_GRAY: u8 = 128;

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn filled(height: usize, width: usize, color: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&color);
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, color: [u8; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&color);
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Number of pixels that differ from `other` (same dimensions assumed).
    pub fn diff_count(&self, other: &RgbImage) -> usize {
        (0..self.height * self.width)
            .filter(|i| self.data[i * 3..i * 3 + 3] != other.data[i * 3..i * 3 + 3])
            .count()
    }

    /// Serialize as binary PPM (P6, maxval 255), bit-exact.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    /// Parse a binary PPM produced by [`to_ppm`](Self::to_ppm).
    pub fn from_ppm(bytes: &[u8]) -> Result<RgbImage> {
        let bad = |m: &str| Error::BadImageFile(m.into());
        let mut fields = Vec::new();
        let mut pos = 0usize;
        // Header: magic, width, height, maxval, separated by whitespace
        // (comments starting with '#' allowed).
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(&bytes[start..pos]);
        }
        if fields[0] != b"P6" {
            return Err(bad("not a P6 PPM"));
        }
        let parse = |b: &[u8]| -> Result<usize> {
            std::str::from_utf8(b)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("bad header field"))
        };
        let width = parse(fields[1])?;
        let height = parse(fields[2])?;
        if parse(fields[3])? != 255 {
            return Err(bad("maxval must be 255"));
        }
        // Exactly one whitespace byte after maxval.
        pos += 1;
        let n = width
            .checked_mul(height)
            .and_then(|x| x.checked_mul(3))
            .ok_or_else(|| bad("dimension overflow"))?;
        if bytes.len() < pos + n {
            return Err(bad("truncated payload"));
        }
        Ok(RgbImage {
            height,
            width,
            data: bytes[pos..pos + n].to_vec(),
        })
    }

    /// Write as PNG with identical pixel content (convenience export).
    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::BadImageFile(e.to_string()))
    }
}

/// PCA basis over feature channels: per-channel mean and up to three
/// orthonormal components in descending eigenvalue order. Components with no
/// positive variance are `None` (degenerate).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub components: [Option<Vec<f64>>; 3],
    pub eigenvalues: [f64; 3],
}

/// Fix the component sign so its largest-magnitude entry is positive
/// (ties broken toward the lowest index).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Fit a 3-component PCA basis on a feature map.
pub fn fit_pca(fm: &FeatureMap) -> Result<PcaBasis> {
    if !fm.is_finite() {
        return Err(Error::NonFinite("feature map"));
    }
    let c = fm.channels;
    let n = fm.cells();
    if c < 1 || n < 2 {
        return Err(Error::InvalidParameter(
            "PCA needs >= 1 channel and >= 2 cells".into(),
        ));
    }

    let mut mean = vec![0.0f64; c];
    for ch in 0..c {
        let mut sum = 0.0;
        for row in 0..fm.height {
            for col in 0..fm.width {
                sum += fm.get(ch, row, col) as f64;
            }
        }
        mean[ch] = sum / n as f64;
    }

    // Sample covariance with divisor n (population convention).
    let mut cov = DMatrix::<f64>::zeros(c, c);
    for row in 0..fm.height {
        for col in 0..fm.width {
            for i in 0..c {
                let di = fm.get(i, row, col) as f64 - mean[i];
                for j in i..c {
                    let dj = fm.get(j, row, col) as f64 - mean[j];
                    cov[(i, j)] += di * dj;
                }
            }
        }
    }
    for i in 0..c {
        for j in i..c {
            cov[(i, j)] /= n as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("eigenvalues are finite")
    });
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let degenerate_below = lambda_max * 1e-12;

    let mut components: [Option<Vec<f64>>; 3] = [None, None, None];
    let mut eigenvalues = [0.0f64; 3];
    for k in 0..3 {
        if k >= c {
            break;
        }
        let lambda = eig.eigenvalues[order[k]];
        if lambda <= 0.0 || lambda <= degenerate_below {
            continue;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        fix_sign(&mut v);
        eigenvalues[k] = lambda;
        components[k] = Some(v);
    }
    Ok(PcaBasis {
        mean,
        components,
        eigenvalues,
    })
}

/// Round half-up to an 8-bit channel value.
fn quantize(x: f64) -> u8 {
    (x + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Project a feature map through a basis into an RGB image.
pub fn project_to_rgb(fm: &FeatureMap, basis: &PcaBasis) -> Result<RgbImage> {
    if basis.mean.len() != fm.channels {
        return Err(Error::ChannelMismatch {
            map: fm.channels,
            basis: basis.mean.len(),
        });
    }
    let n = fm.cells();
    let mut img = RgbImage::filled(fm.height, fm.width, [DEGENERATE_GRAY; 3]);
    let mut scores = vec![0.0f64; n];
    for (k, comp) in basis.components.iter().enumerate() {
        let Some(v) = comp else { continue };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in 0..fm.height {
            for col in 0..fm.width {
                let mut s = 0.0;
                for ch in 0..fm.channels {
                    s += (fm.get(ch, row, col) as f64 - basis.mean[ch]) * v[ch];
                }
                scores[row * fm.width + col] = s;
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        if !(hi > lo) {
            continue; // no spread: leave the channel at mid-gray
        }
        let scale = 255.0 / (hi - lo);
        for row in 0..fm.height {
            for col in 0..fm.width {
                let s = scores[row * fm.width + col];
                let mut px = img.get(row, col);
                px[k] = quantize((s - lo) * scale);
                img.set(row, col, px);
            }
        }
    }
    Ok(img)
}

/// Fit PCA on the map and project it: the BEV feature visualization.
pub fn visualize(fm: &FeatureMap) -> Result<RgbImage> {
    let basis = fit_pca(fm)?;
    project_to_rgb(fm, &basis)
}
