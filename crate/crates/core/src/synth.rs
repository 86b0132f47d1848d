//! Seeded synthetic high-resolution fingerprint generator.
//!
//! Renders a ridge pattern as the thresholded sine of a phase field
//! integrated from a smooth random orientation field, plants bright
//! Gaussian pores on ridge centerlines (closed) or offset toward the ridge
//! edge (open), applies smooth contrast modulation plus Gaussian noise, and
//! returns the image together with the exact planted coordinates. Built for
//! desk-scale detector verification, not biometric realism.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::image::{GrayImage, Point, PoreSet, PoreSource};
use crate::rng::normal;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("pore density too high: placed {placed} of {requested} before running out of room")]
    DensityTooHigh { placed: usize, requested: usize },
}

/// Generator parameters. Lengths are in pixels at the configured dpi.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub width: usize,
    pub height: usize,
    pub dpi: u32,
    /// Ridge-to-ridge distance.
    pub ridge_period: f64,
    /// Correlation length of the random orientation field, pixels.
    pub orientation_smoothness: f64,
    /// Pores per pixel of ridge centerline length (total centerline length
    /// is roughly `width * height / ridge_period`).
    pub pore_density: f64,
    /// Sampled uniformly per pore; must stay within `[1, period/2]`.
    pub pore_radius_range: (f64, f64),
    pub open_pore_fraction: f64,
    /// Additive Gaussian pixel noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticParams {
    /// Defaults at the given dpi: period 10 px at 1200 dpi, pore radii
    /// spanning the physical pore-size range (capped at period/2), 30%
    /// open pores.
    pub fn for_dpi(dpi: u32) -> Self {
        let s = f64::from(dpi) / 1200.0;
        let period = 10.0 * s;
        Self {
            width: 320,
            height: 240,
            dpi,
            ridge_period: period,
            orientation_smoothness: 96.0 * s,
            pore_density: 0.008,
            pore_radius_range: (microns_to_px(88.0, dpi) / 2.0, (period / 2.0).min(microns_to_px(220.0, dpi) / 2.0)),
            open_pore_fraction: 0.3,
            noise_sigma: 0.03,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError::BadParams(String::from(m)));
        if self.width < 32 || self.height < 32 {
            return err("image must be at least 32x32");
        }
        if self.dpi == 0 {
            return err("dpi must be positive");
        }
        if !(self.ridge_period > 2.0) {
            return err("ridge period must exceed 2 px");
        }
        let (lo, hi) = self.pore_radius_range;
        if !(lo >= 1.0 && lo <= hi && hi <= self.ridge_period / 2.0) {
            return err("pore radius range must lie within [1, period/2]");
        }
        if !(0.0..=1.0).contains(&self.open_pore_fraction) {
            return err("open pore fraction must lie in [0, 1]");
        }
        if !(self.pore_density >= 0.0) || !(self.noise_sigma >= 0.0) {
            return err("density and noise must be non-negative");
        }
        if !(self.orientation_smoothness >= 8.0) {
            return err("orientation smoothness must be >= 8 px");
        }
        Ok(())
    }
}

/// Physical length to pixels: `um * dpi / 25400`.
pub fn microns_to_px(microns: f64, dpi: u32) -> f64 {
    microns * f64::from(dpi) / 25_400.0
}

/// Coarse-grid random field bilinearly interpolated to full resolution.
struct CoarseField {
    cols: usize,
    rows: usize,
    cell: f64,
    values: Vec<(f64, f64)>,
}

impl CoarseField {
    fn random_unit(w: usize, h: usize, cell: f64, rng: &mut ChaCha8Rng) -> Self {
        let cols = (w as f64 / cell) as usize + 2;
        let rows = (h as f64 / cell) as usize + 2;
        let values = (0..cols * rows)
            .map(|_| {
                let a: f64 = rng.gen::<f64>() * 2.0 * core::f64::consts::PI;
                (libm::cos(a), libm::sin(a))
            })
            .collect();
        Self { cols, rows, cell, values }
    }

    fn random_scalar(w: usize, h: usize, cell: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Self {
        let cols = (w as f64 / cell) as usize + 2;
        let rows = (h as f64 / cell) as usize + 2;
        let values = (0..cols * rows).map(|_| (rng.gen_range(lo..hi), 0.0)).collect();
        Self { cols, rows, cell, values }
    }

    fn sample(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x / self.cell).min(self.cols as f64 - 1.001).max(0.0);
        let fy = (y / self.cell).min(self.rows as f64 - 1.001).max(0.0);
        let (x0, y0) = (fx as usize, fy as usize);
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let at = |cx: usize, cy: usize| self.values[cy.min(self.rows - 1) * self.cols + cx.min(self.cols - 1)];
        let lerp = |a: (f64, f64), b: (f64, f64), t: f64| (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
        let top = lerp(at(x0, y0), at(x0 + 1, y0), tx);
        let bot = lerp(at(x0, y0 + 1), at(x0 + 1, y0 + 1), tx);
        lerp(top, bot, ty)
    }
}

/// Orientation field and integrated phase; returns the generator positioned
/// after the orientation draws so callers continue the same stream.
fn build_phase(params: &SyntheticParams) -> (Vec<f64>, CoarseField, ChaCha8Rng) {
    let (w, h) = (params.width, params.height);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    // Smooth orientation field via a doubled-angle random vector field
    // (doubling keeps the pi-periodic angle interpolable).
    let orient = CoarseField::random_unit(w, h, params.orientation_smoothness, &mut rng);
    let theta_at = |x: f64, y: f64| {
        let (c, s) = orient.sample(x, y);
        0.5 * libm::atan2(s, c)
    };

    // Phase integration: k = (2 pi / period) * n, n perpendicular to the
    // ridge direction; row and column predictions are blended to keep the
    // field approximately consistent with the local wave vector.
    let k0 = 2.0 * core::f64::consts::PI / params.ridge_period;
    let mut phase = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            if x == 0 && y == 0 {
                continue;
            }
            let theta = theta_at(x as f64, y as f64);
            let kx = -k0 * libm::sin(theta);
            let ky = k0 * libm::cos(theta);
            let from_left = if x > 0 { Some(phase[y * w + x - 1] + kx) } else { None };
            let from_top = if y > 0 { Some(phase[(y - 1) * w + x] + ky) } else { None };
            phase[y * w + x] = match (from_left, from_top) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!(),
            };
        }
    }
    (phase, orient, rng)
}

/// Generates one fingerprint and its exact pore ground truth.
pub fn synthesize_fingerprint(params: &SyntheticParams) -> Result<(GrayImage, PoreSet), SynthError> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let (phase, orient, mut rng) = build_phase(params);
    let theta_at = |x: f64, y: f64| {
        let (c, s) = orient.sample(x, y);
        0.5 * libm::atan2(s, c)
    };

    // Plant pores on ridge centerlines (phase troughs).
    let mut centerline: Vec<(usize, usize)> = Vec::new();
    for y in 2..h.saturating_sub(2) {
        for x in 2..w.saturating_sub(2) {
            if libm::sin(phase[y * w + x]) < -0.95 {
                centerline.push((x, y));
            }
        }
    }
    centerline.shuffle(&mut rng);

    let requested = libm::round(params.pore_density * (w * h) as f64 / params.ridge_period) as usize;
    let (r_lo, r_hi) = params.pore_radius_range;
    let min_sep = 2.0 * r_hi;
    let min_sep_sq = min_sep * min_sep;
    let mut pores: Vec<(Point, f64)> = Vec::new(); // (center, radius)
    'candidates: for &(cx, cy) in &centerline {
        if pores.len() >= requested {
            break;
        }
        let radius = rng.gen_range(r_lo..=r_hi);
        let is_open = rng.gen::<f64>() < params.open_pore_fraction;
        let (px, py) = if is_open {
            // Offset toward the ridge edge, along the phase gradient.
            let theta = theta_at(cx as f64, cy as f64);
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let offset = 0.15 * params.ridge_period * sign;
            let ox = cx as f64 - offset * libm::sin(theta);
            let oy = cy as f64 + offset * libm::cos(theta);
            (libm::round(ox) as i64, libm::round(oy) as i64)
        } else {
            (cx as i64, cy as i64)
        };
        if px < 2 || py < 2 || px >= w as i64 - 2 || py >= h as i64 - 2 {
            continue;
        }
        // Stay on the ridge after rounding.
        if libm::sin(phase[py as usize * w + px as usize]) >= -0.05 {
            continue;
        }
        let p = Point::new(px as u32, py as u32);
        for &(q, _) in &pores {
            if p.distance_sq(&q) <= min_sep_sq {
                continue 'candidates;
            }
        }
        pores.push((p, radius));
    }
    if pores.len() < requested {
        return Err(SynthError::DensityTooHigh { placed: pores.len(), requested });
    }

    // Render: ridge sine base, pore bumps, contrast modulation, noise.
    let contrast = CoarseField::random_scalar(w, h, params.orientation_smoothness, 0.75, 1.0, &mut rng);
    let mut intensity = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let base = 0.35 * libm::sin(phase[y * w + x]);
            let (m, _) = contrast.sample(x as f64, y as f64);
            intensity[y * w + x] = (0.5 + base * m) as f32;
        }
    }
    for &(p, radius) in &pores {
        let sigma = radius / 2.0;
        let reach = libm::ceil(2.5 * sigma) as i64;
        let amp = 0.8;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let x = p.x as i64 + dx;
                let y = p.y as i64 + dy;
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let d2 = (dx * dx + dy * dy) as f64;
                let bump = amp * libm::exp(-d2 / (2.0 * sigma * sigma));
                intensity[y as usize * w + x as usize] += bump as f32;
            }
        }
    }
    for v in intensity.iter_mut() {
        let noisy = f64::from(*v) + params.noise_sigma * normal(&mut rng);
        *v = noisy.clamp(0.0, 1.0) as f32;
    }

    let image = GrayImage::new(w, h, params.dpi, intensity).expect("values clamped");
    let points: Vec<Point> = pores.iter().map(|&(p, _)| p).collect();
    let pore_set = PoreSet::new(points, PoreSource::GroundTruth).expect("separation enforces distinctness");
    Ok((image, pore_set))
}

/// Ridge foreground (`sin(phase) < 0`) of the noise-free render; exposed so
/// tests can check that planted pores sit on ridges.
pub fn noise_free_ridge_mask(params: &SyntheticParams) -> Result<crate::image::BinaryImage, SynthError> {
    params.validate()?;
    let (phase, _, _) = build_phase(params);
    let bits = phase.iter().map(|&p| libm::sin(p) < 0.0).collect();
    Ok(crate::image::BinaryImage::new(params.width, params.height, bits).expect("dims match"))
}
