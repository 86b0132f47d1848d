//! Filter-bank construction (Gabor, Gaussian, DoG, LoG, Mexican Hat),
//! structure-tensor orientation estimation, convolution, and the
//! filtering-based pore detector built from them.
//!
//! All kernels are `f64`; responses of zero-sum kernels to constant images
//! vanish to rounding. Orientation angles live in `[0, pi)` with `x` to the
//! right and `y` downward.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::image::{centroid, connected_components, BinaryImage, GrayImage, Point, PoreSet, PoreSource};

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("DoG requires 0 < sigma1 < sigma2, got ({0}, {1})")]
    SigmaOrder(f64, f64),
    #[error("kernel size {0} must be odd")]
    EvenSize(usize),
    #[error("wavelength must exceed 1 pixel, got {0}")]
    BadWavelength(f64),
    #[error("kernel size {size} exceeds image dims {width}x{height}")]
    KernelTooLarge { size: usize, width: usize, height: usize },
    #[error("orientation block must be >= 8, got {0}")]
    BlockTooSmall(usize),
    #[error("quantile must lie in (0, 1), got {0}")]
    BadQuantile(f64),
}

/// Square odd-sized convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    fn new(size: usize, weights: Vec<f64>) -> Self {
        debug_assert_eq!(weights.len(), size * size);
        debug_assert!(size % 2 == 1);
        debug_assert!(weights.iter().all(|w| w.is_finite()));
        Self { size, weights }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, ky: usize, kx: usize) -> f64 {
        self.weights[ky * self.size + kx]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn map_radial(size: usize, mut f: impl FnMut(f64, f64) -> f64) -> Vec<f64> {
        let r = (size / 2) as isize;
        let mut weights = Vec::with_capacity(size * size);
        for ky in -r..=r {
            for kx in -r..=r {
                weights.push(f(kx as f64, ky as f64));
            }
        }
        weights
    }

    fn mean_subtracted(mut weights: Vec<f64>) -> Vec<f64> {
        let mean = weights.iter().sum::<f64>() / weights.len() as f64;
        for w in weights.iter_mut() {
            *w -= mean;
        }
        weights
    }
}

fn check_kernel_params(sigma: f64, size: usize) -> Result<(), FilterError> {
    if !(sigma > 0.0) {
        return Err(FilterError::BadSigma(sigma));
    }
    if size % 2 == 0 {
        return Err(FilterError::EvenSize(size));
    }
    Ok(())
}

/// Odd size covering about `6*sigma`, at least `min`.
pub fn default_kernel_size(sigma: f64, min: usize) -> usize {
    let s = (libm::ceil(3.0 * sigma) as usize) * 2 + 1;
    s.max(min | 1)
}

/// Isotropic Gaussian, normalized to sum 1.
pub fn gaussian_kernel(sigma: f64, size: usize) -> Result<Kernel, FilterError> {
    check_kernel_params(sigma, size)?;
    let mut weights = Kernel::map_radial(size, |x, y| libm::exp(-(x * x + y * y) / (2.0 * sigma * sigma)));
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Ok(Kernel::new(size, weights))
}

/// Difference of Gaussians: `G(sigma1) - G(sigma2)` (each normalized), so the
/// total sum is zero and the center is positive for `sigma1 < sigma2`.
pub fn dog_kernel(sigma1: f64, sigma2: f64, size: usize) -> Result<Kernel, FilterError> {
    if !(sigma1 > 0.0 && sigma1 < sigma2) {
        return Err(FilterError::SigmaOrder(sigma1, sigma2));
    }
    let narrow = gaussian_kernel(sigma1, size)?;
    let wide = gaussian_kernel(sigma2, size)?;
    let weights = narrow
        .weights
        .iter()
        .zip(&wide.weights)
        .map(|(a, b)| a - b)
        .collect();
    Ok(Kernel::new(size, weights))
}

/// Laplacian of Gaussian, sign-flipped so bright blobs respond positively,
/// then mean-subtracted to a zero sum.
pub fn log_kernel(sigma: f64, size: usize) -> Result<Kernel, FilterError> {
    check_kernel_params(sigma, size)?;
    let s2 = sigma * sigma;
    let weights = Kernel::map_radial(size, |x, y| {
        let r2 = x * x + y * y;
        // -LoG: (2*sigma^2 - r^2)/sigma^4 * exp(-r^2 / (2 sigma^2))
        (2.0 * s2 - r2) / (s2 * s2) * libm::exp(-r2 / (2.0 * s2))
    });
    Ok(Kernel::new(size, Kernel::mean_subtracted(weights)))
}

/// Mexican Hat wavelet `(1 - r^2/(2 sigma^2)) * exp(-r^2/(2 sigma^2))`,
/// mean-subtracted to a zero sum.
pub fn mexican_hat_kernel(sigma: f64, size: usize) -> Result<Kernel, FilterError> {
    check_kernel_params(sigma, size)?;
    let s2 = sigma * sigma;
    let weights = Kernel::map_radial(size, |x, y| {
        let r2 = x * x + y * y;
        (1.0 - r2 / (2.0 * s2)) * libm::exp(-r2 / (2.0 * s2))
    });
    Ok(Kernel::new(size, Kernel::mean_subtracted(weights)))
}

/// Even-symmetric Gabor tuned to stripes along `theta`:
/// `cos(2 pi u / wavelength) * exp(-(u^2 + v^2) / (2 sigma^2))` where `u` is
/// the coordinate across the stripes. Mean-subtracted to a zero sum; the
/// kernel is identical for `theta` and `theta + pi`.
pub fn gabor_kernel(theta: f64, wavelength: f64, sigma: f64, size: usize) -> Result<Kernel, FilterError> {
    check_kernel_params(sigma, size)?;
    if !(wavelength > 1.0) {
        return Err(FilterError::BadWavelength(wavelength));
    }
    let (sin_t, cos_t) = (libm::sin(theta), libm::cos(theta));
    let weights = Kernel::map_radial(size, |x, y| {
        let u = -x * sin_t + y * cos_t;
        let v = x * cos_t + y * sin_t;
        libm::cos(2.0 * core::f64::consts::PI * u / wavelength)
            * libm::exp(-(u * u + v * v) / (2.0 * sigma * sigma))
    });
    Ok(Kernel::new(size, Kernel::mean_subtracted(weights)))
}

/// Per-block ridge orientation (radians in `[0, pi)`) with a low-coherence
/// flag for degenerate blocks.
#[derive(Debug, Clone)]
pub struct OrientationField {
    block: usize,
    cols: usize,
    rows: usize,
    angles: Vec<f64>,
    coherent: Vec<bool>,
}

impl OrientationField {
    pub fn block(&self) -> usize {
        self.block
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn coherent(&self) -> &[bool] {
        &self.coherent
    }

    /// Angle and coherence flag of the block owning pixel `(x, y)`.
    pub fn at_pixel(&self, x: usize, y: usize) -> (f64, bool) {
        let bx = (x / self.block).min(self.cols - 1);
        let by = (y / self.block).min(self.rows - 1);
        (self.angles[by * self.cols + bx], self.coherent[by * self.cols + bx])
    }
}

/// Structure-tensor orientation over non-overlapping `block`-sized tiles.
///
/// The reported angle is the ridge direction (perpendicular to the dominant
/// gradient). Blocks with vanishing gradient energy are flagged incoherent
/// and report angle 0.
pub fn estimate_orientation(img: &GrayImage, block: usize) -> Result<OrientationField, FilterError> {
    if block < 8 {
        return Err(FilterError::BlockTooSmall(block));
    }
    let (w, h) = (img.width(), img.height());
    // Central-difference gradients, mirror padded.
    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let xi = x as isize;
            let yi = y as isize;
            gx[y * w + x] = (f64::from(img.get_reflect(xi + 1, yi)) - f64::from(img.get_reflect(xi - 1, yi))) / 2.0;
            gy[y * w + x] = (f64::from(img.get_reflect(xi, yi + 1)) - f64::from(img.get_reflect(xi, yi - 1))) / 2.0;
        }
    }
    let cols = w.div_ceil(block);
    let rows = h.div_ceil(block);
    let mut angles = Vec::with_capacity(cols * rows);
    let mut coherent = Vec::with_capacity(cols * rows);
    for by in 0..rows {
        for bx in 0..cols {
            let mut gxx = 0.0;
            let mut gyy = 0.0;
            let mut gxy = 0.0;
            for y in (by * block)..((by + 1) * block).min(h) {
                for x in (bx * block)..((bx + 1) * block).min(w) {
                    let (a, b) = (gx[y * w + x], gy[y * w + x]);
                    gxx += a * a;
                    gyy += b * b;
                    gxy += a * b;
                }
            }
            let energy = gxx + gyy;
            if energy < 1e-12 {
                angles.push(0.0);
                coherent.push(false);
                continue;
            }
            // Dominant gradient direction from averaged squared gradients;
            // the ridge runs perpendicular to it.
            let grad_angle = 0.5 * libm::atan2(2.0 * gxy, gxx - gyy);
            let mut ridge = grad_angle + core::f64::consts::FRAC_PI_2;
            while ridge < 0.0 {
                ridge += core::f64::consts::PI;
            }
            while ridge >= core::f64::consts::PI {
                ridge -= core::f64::consts::PI;
            }
            angles.push(ridge);
            coherent.push(true);
        }
    }
    Ok(OrientationField { block, cols, rows, angles, coherent })
}

/// True convolution (kernel flipped), mirror padded; output has the same
/// dimensions as the input.
pub fn convolve(img: &GrayImage, kernel: &Kernel) -> Result<Vec<f64>, FilterError> {
    let (w, h) = (img.width(), img.height());
    if kernel.size > w || kernel.size > h {
        return Err(FilterError::KernelTooLarge { size: kernel.size, width: w, height: h });
    }
    let r = (kernel.size / 2) as isize;
    let mut out = vec![0.0f64; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in -r..=r {
                for kx in -r..=r {
                    let wv = kernel.at((ky + r) as usize, (kx + r) as usize);
                    acc += wv * f64::from(img.get_reflect(x - kx, y - ky));
                }
            }
            out[(y as usize) * w + x as usize] = acc;
        }
    }
    Ok(out)
}

/// Number of quantized orientations in the Gabor bank.
const GABOR_ORIENTATIONS: usize = 16;

/// Orientation-adaptive Gabor response: each pixel is filtered with the bank
/// kernel closest to its block's ridge orientation. Positive on bright
/// stripes (valleys), negative on dark stripes (ridges).
pub fn gabor_enhance(
    img: &GrayImage,
    wavelength: f64,
    sigma: f64,
    orientation_block: usize,
) -> Result<Vec<f64>, FilterError> {
    let field = estimate_orientation(img, orientation_block)?;
    let size = default_kernel_size(sigma, 9).min((img.width().min(img.height()) - 1) | 1);
    let bank: Vec<Kernel> = (0..GABOR_ORIENTATIONS)
        .map(|i| {
            let theta = i as f64 * core::f64::consts::PI / GABOR_ORIENTATIONS as f64;
            gabor_kernel(theta, wavelength, sigma, size)
        })
        .collect::<Result<_, _>>()?;
    let (w, h) = (img.width(), img.height());
    let r = (size / 2) as isize;
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let (angle, _) = field.at_pixel(x, y);
            let bin = ((angle / core::f64::consts::PI) * GABOR_ORIENTATIONS as f64) as usize
                % GABOR_ORIENTATIONS;
            let k = &bank[bin];
            let mut acc = 0.0;
            for ky in -r..=r {
                for kx in -r..=r {
                    acc += k.at((ky + r) as usize, (kx + r) as usize)
                        * f64::from(img.get_reflect(x as isize - kx, y as isize - ky));
                }
            }
            out[y * w + x] = acc;
        }
    }
    Ok(out)
}

/// Binary ridge map: pixels whose orientation-adaptive Gabor response is
/// negative (dark stripes).
pub fn ridge_mask(
    img: &GrayImage,
    wavelength: f64,
    sigma: f64,
    orientation_block: usize,
) -> Result<BinaryImage, FilterError> {
    let resp = gabor_enhance(img, wavelength, sigma, orientation_block)?;
    let bits = resp.iter().map(|&v| v < 0.0).collect();
    Ok(BinaryImage::new(img.width(), img.height(), bits).expect("dims match"))
}

/// Isotropic pore models from the filtering-based literature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoreFilter {
    Gaussian,
    Dog,
    Log,
    MexicanHat,
}

/// Parameters of [`filter_detect`]; `for_dpi` scales the defaults from their
/// 1200 dpi reference values.
#[derive(Debug, Clone)]
pub struct FilterDetectParams {
    pub pore_filter: PoreFilter,
    /// Pore model scale (sigma of the chosen kernel), pixels.
    pub sigma: f64,
    /// DoG outer sigma (only used by [`PoreFilter::Dog`]).
    pub sigma_outer: f64,
    /// Response quantile used as the binarization threshold.
    pub quantile: f64,
    /// Accepted blob area range, px^2.
    pub min_area: usize,
    pub max_area: usize,
    pub gabor_wavelength: f64,
    pub gabor_sigma: f64,
    pub orientation_block: usize,
}

impl FilterDetectParams {
    pub fn for_dpi(dpi: u32, pore_filter: PoreFilter) -> Self {
        let s = f64::from(dpi) / 1200.0;
        Self {
            pore_filter,
            sigma: 2.0 * s,
            sigma_outer: 4.0 * s,
            quantile: 0.95,
            min_area: ((3.0 * s * s) as usize).max(1),
            max_area: ((120.0 * s * s) as usize).max(2),
            gabor_wavelength: 10.0 * s,
            gabor_sigma: 4.0,
            orientation_block: 16,
        }
    }
}

/// Filtering-based detector: orientation-adaptive Gabor ridge enhancement
/// summed with an isotropic pore-filter response, thresholded at a response
/// quantile; connected blobs within the area gate emit their centroids.
pub fn filter_detect(img: &GrayImage, params: &FilterDetectParams) -> Result<PoreSet, FilterError> {
    if !(params.quantile > 0.0 && params.quantile < 1.0) {
        return Err(FilterError::BadQuantile(params.quantile));
    }
    // Ridge reinforcement: positive on ridges, where pores live.
    let gabor = gabor_enhance(img, params.gabor_wavelength, params.gabor_sigma, params.orientation_block)?;
    let ridge: Vec<f64> = gabor.iter().map(|&v| -v).collect();

    let max_size = (img.width().min(img.height()) - 1) | 1;
    let kernel = match params.pore_filter {
        PoreFilter::Gaussian => gaussian_kernel(params.sigma, default_kernel_size(params.sigma, 3).min(max_size))?,
        PoreFilter::Dog => dog_kernel(
            params.sigma,
            params.sigma_outer,
            default_kernel_size(params.sigma_outer, 3).min(max_size),
        )?,
        PoreFilter::Log => log_kernel(params.sigma, default_kernel_size(params.sigma, 3).min(max_size))?,
        PoreFilter::MexicanHat => mexican_hat_kernel(params.sigma, default_kernel_size(params.sigma, 3).min(max_size))?,
    };
    let pore = convolve(img, &kernel)?;

    // The two responses carry arbitrary kernel-dependent scales; standardize
    // each before summing so neither dominates.
    let ridge = standardized(&ridge);
    let pore = standardized(&pore);
    let combined: Vec<f64> = ridge.iter().zip(&pore).map(|(a, b)| a + b).collect();
    let threshold = quantile(&combined, params.quantile);
    let bits: Vec<bool> = combined.iter().map(|&v| v >= threshold).collect();
    let mask = BinaryImage::new(img.width(), img.height(), bits).expect("dims match");

    let mut points = alloc::collections::BTreeSet::new();
    for comp in connected_components(&mask) {
        if comp.len() >= params.min_area && comp.len() <= params.max_area {
            points.insert(centroid(&comp));
        }
    }
    let points: Vec<Point> = points.into_iter().collect();
    Ok(PoreSet::new(points, PoreSource::Detection).expect("set is deduplicated"))
}

/// Zero-mean, unit-variance copy (identity for a constant signal).
fn standardized(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var < 1e-24 {
        return values.iter().map(|v| v - mean).collect();
    }
    let inv = 1.0 / libm::sqrt(var);
    values.iter().map(|v| (v - mean) * inv).collect()
}

/// Empirical quantile (nearest-rank on the sorted copy).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((sorted.len() - 1) as f64 * q) as usize;
    sorted[idx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;

    const PI: f64 = core::f64::consts::PI;

    fn grating(theta: f64, wavelength: f64, w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, 1200, |x, y| {
            let u = -(x as f64) * libm::sin(theta) + (y as f64) * libm::cos(theta);
            (0.5 + 0.5 * libm::cos(2.0 * PI * u / wavelength)) as f32
        })
    }

    #[test]
    fn gaussian_normalizes_and_is_symmetric() {
        for &sigma in &[0.7, 1.0, 2.5] {
            let k = gaussian_kernel(sigma, 7).unwrap();
            assert!((k.sum() - 1.0).abs() < 1e-9);
            for i in 0..7 {
                for j in 0..7 {
                    assert_eq!(k.at(i, j), k.at(j, i));
                    assert_eq!(k.at(i, j), k.at(6 - i, 6 - j));
                }
            }
        }
    }

    #[test]
    fn gaussian_sigma1_center_weight() {
        // Closed form: exp(0) / sum over the 3x3 grid of exp(-r^2/2).
        let k = gaussian_kernel(1.0, 3).unwrap();
        assert!((k.at(1, 1) - 0.2042).abs() < 1e-4, "center = {}", k.at(1, 1));
    }

    #[test]
    fn gaussian_decreases_with_radius() {
        let k = gaussian_kernel(1.5, 9).unwrap();
        let center = k.at(4, 4);
        assert!(center > k.at(4, 5));
        assert!(k.at(4, 5) > k.at(4, 6));
        assert!(k.at(4, 6) > k.at(4, 7));
        assert!(k.at(4, 7) > k.at(4, 8));
        assert!(k.at(4, 8) > k.at(0, 0));
    }

    #[test]
    fn gaussian_rejects_bad_params() {
        assert_eq!(gaussian_kernel(0.0, 3).unwrap_err(), FilterError::BadSigma(0.0));
        assert_eq!(gaussian_kernel(1.0, 4).unwrap_err(), FilterError::EvenSize(4));
    }

    #[test]
    fn dog_zero_sum_and_sign_structure() {
        let k = dog_kernel(1.0, 3.0, 13).unwrap();
        assert!(k.sum().abs() < 1e-9);
        assert!(k.at(6, 6) > 0.0);
        assert!(k.at(0, 0) < 0.0);
        assert_eq!(dog_kernel(2.0, 1.0, 7).unwrap_err(), FilterError::SigmaOrder(2.0, 1.0));
    }

    #[test]
    fn zero_sum_kernels_ignore_constant_images() {
        let img = GrayImage::from_fn(32, 32, 1200, |_, _| 0.6);
        for k in [
            dog_kernel(1.0, 2.0, 9).unwrap(),
            log_kernel(1.5, 11).unwrap(),
            mexican_hat_kernel(1.5, 11).unwrap(),
            gabor_kernel(0.7, 5.0, 2.0, 11).unwrap(),
        ] {
            let resp = convolve(&img, &k).unwrap();
            assert!(resp.iter().all(|v| v.abs() < 1e-6));
        }
    }

    #[test]
    fn log_peaks_on_matched_blob() {
        let sigma = 2.0;
        let img = GrayImage::from_fn(31, 31, 1200, |x, y| {
            let dx = x as f64 - 15.0;
            let dy = y as f64 - 15.0;
            libm::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) as f32
        });
        let k = log_kernel(sigma, 13).unwrap();
        assert!(k.sum().abs() < 1e-9);
        let resp = convolve(&img, &k).unwrap();
        let (argmax, max) = resp
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert_eq!((argmax % 31, argmax / 31), (15, 15));
        assert!(max > 0.0);
    }

    #[test]
    fn log_is_rotationally_symmetric() {
        let k = log_kernel(1.2, 9).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                assert!((k.at(i, j) - k.at(j, i)).abs() < 1e-12);
                assert!((k.at(i, j) - k.at(8 - i, 8 - j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mexican_hat_shape() {
        let sigma = 2.0;
        let k = mexican_hat_kernel(sigma, 15).unwrap();
        assert!(k.sum().abs() < 1e-9);
        assert!(k.at(7, 7) > 0.0);
        // Scan the center row for the sign change; expect near sigma*sqrt(2).
        let expected = sigma * libm::sqrt(2.0);
        let mut crossing = None;
        for dx in 0..7usize {
            if k.at(7, 7 + dx) > 0.0 && k.at(7, 7 + dx + 1) <= 0.0 {
                crossing = Some(dx as f64 + 0.5);
                break;
            }
        }
        let crossing = crossing.expect("no zero crossing found");
        assert!((crossing - expected).abs() <= 0.6, "crossing {crossing} vs {expected}");
    }

    #[test]
    fn gabor_even_symmetry_and_zero_sum() {
        let a = gabor_kernel(0.3, 6.0, 3.0, 15).unwrap();
        let b = gabor_kernel(0.3 + PI, 6.0, 3.0, 15).unwrap();
        for (x, y) in a.weights().iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(a.sum().abs() < 1e-9);
        assert_eq!(gabor_kernel(0.0, 1.0, 2.0, 9).unwrap_err(), FilterError::BadWavelength(1.0));
    }

    #[test]
    fn gabor_matched_orientation_wins() {
        let wavelength = 8.0;
        let theta = 3.0 * PI / 8.0;
        let img = grating(theta, wavelength, 48, 48);
        let mut best = (f64::MIN, -1.0);
        for i in 0..8 {
            let cand = i as f64 * PI / 8.0;
            let k = gabor_kernel(cand, wavelength, 4.0, 17).unwrap();
            let resp = convolve(&img, &k).unwrap();
            let peak = resp.iter().cloned().fold(f64::MIN, f64::max);
            if peak > best.0 {
                best = (peak, cand);
            }
        }
        assert!((best.1 - theta).abs() < 1e-9, "best orientation {}", best.1);
    }

    #[test]
    fn orientation_of_vertical_ridges() {
        // Stripes along y: intensity varies with x only.
        let img = grating(PI / 2.0, 10.0, 64, 64);
        let field = estimate_orientation(&img, 16).unwrap();
        for (&a, &c) in field.angles().iter().zip(field.coherent()) {
            assert!(c);
            assert!((a - PI / 2.0).abs() < 0.05, "angle {a}");
        }
    }

    #[test]
    fn orientation_rotates_with_the_pattern() {
        let img_v = grating(PI / 2.0, 10.0, 64, 64);
        let img_h = grating(0.0, 10.0, 64, 64);
        let f_v = estimate_orientation(&img_v, 16).unwrap();
        let f_h = estimate_orientation(&img_h, 16).unwrap();
        for (&av, &ah) in f_v.angles().iter().zip(f_h.angles()) {
            // 90 degree rotation mod pi.
            let mut d = av - ah - PI / 2.0;
            while d > PI / 2.0 {
                d -= PI;
            }
            while d < -PI / 2.0 {
                d += PI;
            }
            assert!(d.abs() < 0.05, "{av} vs {ah}");
        }
    }

    #[test]
    fn orientation_constant_image_flagged() {
        let img = GrayImage::from_fn(40, 40, 1200, |_, _| 0.5);
        let field = estimate_orientation(&img, 16).unwrap();
        assert!(field.coherent().iter().all(|&c| !c));
        assert!(field.angles().iter().all(|&a| a == 0.0));
        assert_eq!(estimate_orientation(&img, 4).unwrap_err(), FilterError::BlockTooSmall(4));
    }

    #[test]
    fn convolve_identity_kernel() {
        let img = GrayImage::from_fn(10, 8, 1200, |x, y| ((x * 3 + y * 7) % 13) as f32 / 13.0);
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let k = Kernel::new(3, w);
        let resp = convolve(&img, &k).unwrap();
        for (r, &p) in resp.iter().zip(img.pixels()) {
            assert!((r - f64::from(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_is_linear() {
        let img = GrayImage::from_fn(16, 16, 1200, |x, y| ((x * 5 + y * 11) % 17) as f32 / 34.0);
        let double = GrayImage::from_fn(16, 16, 1200, |x, y| ((x * 5 + y * 11) % 17) as f32 / 17.0);
        let k = mexican_hat_kernel(1.3, 7).unwrap();
        let a = convolve(&img, &k).unwrap();
        let b = convolve(&double, &k).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn convolve_matches_padded_oracle() {
        // Independent oracle: materialize the mirror-padded image, then run
        // the textbook flipped-kernel loops on the interior.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let (w, h, size) = (16usize, 16usize, 5usize);
        let img = GrayImage::from_fn(w, h, 1200, |_, _| rng.gen::<f32>());
        let weights: Vec<f64> = (0..size * size).map(|_| rng.gen::<f64>() - 0.5).collect();
        let k = Kernel::new(size, weights.clone());
        let got = convolve(&img, &k).unwrap();

        let r = size / 2;
        let pw = w + 2 * r;
        let mut padded = vec![0.0f64; pw * (h + 2 * r)];
        for y in 0..h + 2 * r {
            for x in 0..pw {
                padded[y * pw + x] =
                    f64::from(img.get_reflect(x as isize - r as isize, y as isize - r as isize));
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ky in 0..size {
                    for kx in 0..size {
                        // True convolution: flip the kernel.
                        let iv = padded[(y + size - 1 - ky) * pw + (x + size - 1 - kx)];
                        acc += weights[ky * size + kx] * iv;
                    }
                }
                assert!((got[y * w + x] - acc).abs() < 1e-6, "mismatch at ({x}, {y})");
            }
        }
    }

    #[test]
    fn convolve_rejects_oversized_kernel() {
        let img = GrayImage::from_fn(5, 5, 1200, |_, _| 0.5);
        let k = gaussian_kernel(2.0, 7).unwrap();
        assert!(matches!(convolve(&img, &k).unwrap_err(), FilterError::KernelTooLarge { .. }));
    }

    #[test]
    fn filter_detect_blank_image_is_empty() {
        let img = GrayImage::from_fn(64, 64, 1200, |_, _| 0.5);
        let params = FilterDetectParams::for_dpi(1200, PoreFilter::Log);
        let pores = filter_detect(&img, &params).unwrap();
        assert!(pores.is_empty());
    }

    #[test]
    fn filter_detect_points_in_bounds_and_distinct() {
        let img = grating(0.3, 9.0, 72, 60);
        let params = FilterDetectParams::for_dpi(1200, PoreFilter::MexicanHat);
        let pores = filter_detect(&img, &params).unwrap();
        let mut seen = alloc::collections::BTreeSet::new();
        for p in pores.iter() {
            assert!((p.x as usize) < 72 && (p.y as usize) < 60);
            assert!(seen.insert((p.x, p.y)));
        }
    }

    #[test]
    fn quantile_nearest_rank() {
        let vals: Vec<f64> = (0..100).map(f64::from).collect();
        assert_eq!(quantile(&vals, 0.95), 94.0);
        assert_eq!(quantile(&vals, 0.5), 49.0);
    }
}
