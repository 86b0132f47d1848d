//! Raster types and basic image operations shared by every detector.
//!
//! Conventions used throughout the crate:
//! - intensities are `f32` in `[0, 1]`, row-major, origin at the top-left;
//! - pores and valleys are *bright*, ridges are dark (images with dark pores
//!   must be inverted at ingestion);
//! - all border handling is mirror padding without edge repetition
//!   (`reflect(-1) = 1`, like OpenCV's `BORDER_REFLECT_101`);
//! - coordinates are 0-based pixel centers, `x` = column, `y` = row.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("pixel buffer length {got} does not match {width}x{height}")]
    BadLength { width: usize, height: usize, got: usize },
    #[error("image dimensions must be at least 1x1")]
    EmptyImage,
    #[error("intensity {value} at index {index} outside [0, 1]")]
    IntensityRange { index: usize, value: f32 },
    #[error("dpi must be positive")]
    ZeroDpi,
    #[error("block size {0} must be odd and >= 3")]
    BadBlock(usize),
    #[error("block size {block} exceeds min(width, height) = {limit}")]
    BlockTooLarge { block: usize, limit: usize },
    #[error("patch size {0} must be odd")]
    EvenPatch(usize),
    #[error("duplicate point ({x}, {y}) in pore set")]
    DuplicatePoint { x: u32, y: u32 },
}

/// Mirror index without edge repetition: `-1 -> 1`, `n -> n-2`.
///
/// Well defined for any `i` (folds with period `2n-2`); a 1-wide axis maps
/// everything to 0.
pub fn reflect(i: isize, n: usize) -> usize {
    debug_assert!(n >= 1);
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// 8-bit-origin grayscale raster normalized to `[0, 1]`, with dpi metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    dpi: u32,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, dpi: u32, pixels: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        if dpi == 0 {
            return Err(ImageError::ZeroDpi);
        }
        if pixels.len() != width * height {
            return Err(ImageError::BadLength { width, height, got: pixels.len() });
        }
        if let Some((index, &value)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(ImageError::IntensityRange { index, value });
        }
        Ok(Self { width, height, dpi, pixels })
    }

    /// Builds an image by evaluating `f(x, y)`; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, dpi: u32, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0 && dpi > 0);
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self { width, height, dpi, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dpi(&self) -> u32 {
        self.dpi
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Intensity at a possibly out-of-bounds coordinate, mirror padded.
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f32 {
        self.get(reflect(x, self.width), reflect(y, self.height))
    }

    /// Photometric inversion (`v -> 1 - v`), for inputs with dark pores.
    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            dpi: self.dpi,
            pixels: self.pixels.iter().map(|v| 1.0 - v).collect(),
        }
    }
}

/// Row-major boolean foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyImage);
        }
        if bits.len() != width * height {
            return Err(ImageError::BadLength { width, height, got: bits.len() });
        }
        Ok(Self { width, height, bits })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0);
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// `false` outside the image bounds.
    #[inline]
    pub fn get_checked(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            false
        } else {
            self.bits[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count_foreground(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Morphological dilation with a disc of the given radius (radius 0 is a
    /// no-op copy).
    pub fn dilated(&self, radius: u32) -> Self {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let r2 = (radius * radius) as isize;
        let mut out = Self::blank(self.width, self.height);
        for y in 0..self.height as isize {
            for x in 0..self.width as isize {
                'search: for dy in -r..=r {
                    for dx in -r..=r {
                        if dx * dx + dy * dy <= r2 && self.get_checked(x + dx, y + dy) {
                            out.set(x as usize, y as usize, true);
                            break 'search;
                        }
                    }
                }
            }
        }
        out
    }
}

/// 0-based pixel coordinate; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        libm::sqrt(self.distance_sq(other))
    }

    pub fn distance_sq(&self, other: &Point) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx * dx + dy * dy
    }

    pub fn manhattan(&self, other: &Point) -> f64 {
        let dx = (self.x as f64 - other.x as f64).abs();
        let dy = (self.y as f64 - other.y as f64).abs();
        dx + dy
    }
}

/// Whether a pore list is annotated truth or detector output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoreSource {
    GroundTruth,
    Detection,
}

/// An ordered list of distinct pore coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoreSet {
    points: Vec<Point>,
    source: PoreSource,
}

impl PoreSet {
    pub fn new(points: Vec<Point>, source: PoreSource) -> Result<Self, ImageError> {
        let mut seen = alloc::collections::BTreeSet::new();
        for p in &points {
            if !seen.insert(*p) {
                return Err(ImageError::DuplicatePoint { x: p.x, y: p.y });
            }
        }
        Ok(Self { points, source })
    }

    pub fn empty(source: PoreSource) -> Self {
        Self { points: Vec::new(), source }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn source(&self) -> PoreSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.points.iter()
    }

    /// Copy with the points sorted in row-major order (row, then column).
    pub fn sorted_row_major(&self) -> Self {
        let mut points = self.points.clone();
        points.sort_by_key(|p| (p.y, p.x));
        Self { points, source: self.source }
    }
}

/// Foreground iff intensity exceeds the local mean over a `block`x`block`
/// mirror-padded neighborhood by more than `offset` (strict inequality, so a
/// constant image is all background at offset 0).
pub fn binarize_adaptive(img: &GrayImage, block: usize, offset: f32) -> Result<BinaryImage, ImageError> {
    if block < 3 || block % 2 == 0 {
        return Err(ImageError::BadBlock(block));
    }
    let limit = img.width.min(img.height);
    if block > limit {
        return Err(ImageError::BlockTooLarge { block, limit });
    }
    let mean = local_mean(img, block);
    let mut bits = Vec::with_capacity(img.pixels.len());
    for (i, &v) in img.pixels.iter().enumerate() {
        bits.push(f64::from(v) > mean[i] + f64::from(offset));
    }
    Ok(BinaryImage { width: img.width, height: img.height, bits })
}

/// Separable box mean with mirror padding.
fn local_mean(img: &GrayImage, block: usize) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let r = (block / 2) as isize;
    // Horizontal pass.
    let mut horiz = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dx in -r..=r {
                acc += f64::from(img.get(reflect(x as isize + dx, w), y));
            }
            horiz[y * w + x] = acc;
        }
    }
    // Vertical pass.
    let norm = (block * block) as f64;
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                acc += horiz[reflect(y as isize + dy, h) * w + x];
            }
            out[y * w + x] = acc / norm;
        }
    }
    out
}

/// Zhang-Suen two-subiteration thinning, iterated to a fixpoint.
///
/// The output foreground is a subset of the input and contains no fully-set
/// 2x2 block (1-px-wide skeleton).
pub fn thin(bin: &BinaryImage) -> BinaryImage {
    let mut mask = bin.clone();
    let mut to_delete: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            to_delete.clear();
            for y in 0..mask.height {
                for x in 0..mask.width {
                    if mask.get(x, y) && zhang_suen_removable(&mask, x, y, step) {
                        to_delete.push((x, y));
                    }
                }
            }
            for &(x, y) in &to_delete {
                mask.set(x, y, false);
            }
            changed |= !to_delete.is_empty();
        }
        if !changed {
            return mask;
        }
    }
}

/// Neighbors in the classic P2..P9 order: N, NE, E, SE, S, SW, W, NW.
#[inline]
fn neighbors8(mask: &BinaryImage, x: usize, y: usize) -> [bool; 8] {
    let (x, y) = (x as isize, y as isize);
    [
        mask.get_checked(x, y - 1),
        mask.get_checked(x + 1, y - 1),
        mask.get_checked(x + 1, y),
        mask.get_checked(x + 1, y + 1),
        mask.get_checked(x, y + 1),
        mask.get_checked(x - 1, y + 1),
        mask.get_checked(x - 1, y),
        mask.get_checked(x - 1, y - 1),
    ]
}

fn zhang_suen_removable(mask: &BinaryImage, x: usize, y: usize, step: usize) -> bool {
    let p = neighbors8(mask, x, y);
    let b = p.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    // A(P): 0->1 transitions in the cyclic sequence P2..P9.
    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let (n, e, s, w) = (p[0], p[2], p[4], p[6]);
    if step == 0 {
        !(n && e && s) && !(e && s && w)
    } else {
        !(n && e && w) && !(n && s && w)
    }
}

/// Extracts an odd-sized square patch centered at `center`, mirror padded
/// when it overhangs the image border. Row-major `size*size` intensities.
pub fn extract_patch(img: &GrayImage, center: Point, size: usize) -> Result<Vec<f32>, ImageError> {
    if size % 2 == 0 {
        return Err(ImageError::EvenPatch(size));
    }
    let r = (size / 2) as isize;
    let (cx, cy) = (center.x as isize, center.y as isize);
    let mut patch = Vec::with_capacity(size * size);
    for dy in -r..=r {
        for dx in -r..=r {
            patch.push(img.get_reflect(cx + dx, cy + dy));
        }
    }
    Ok(patch)
}

/// Interleaved 8-bit RGB raster (overlay rendering output).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// `3 * width * height` bytes, row-major RGB.
    pub data: Vec<u8>,
}

/// Unique offsets of the discrete (midpoint) circle of the given radius,
/// ordered by angle starting at east and sweeping clockwise on screen
/// (y grows downward). Radius 0 yields the single center offset.
pub fn circle_perimeter(radius: u32) -> Vec<(i32, i32)> {
    if radius == 0 {
        return vec![(0, 0)];
    }
    let r = radius as i32;
    let mut pts = alloc::collections::BTreeSet::new();
    let mut x = r;
    let mut y = 0;
    let mut err = 1 - r;
    while x >= y {
        for &(px, py) in &[
            (x, y),
            (y, x),
            (-y, x),
            (-x, y),
            (-x, -y),
            (-y, -x),
            (y, -x),
            (x, -y),
        ] {
            pts.insert((px, py));
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
    let mut pts: Vec<(i32, i32)> = pts.into_iter().collect();
    pts.sort_by(|a, b| {
        let aa = angle_from_east(a.0, a.1);
        let ab = angle_from_east(b.0, b.1);
        aa.partial_cmp(&ab).unwrap().then_with(|| a.cmp(b))
    });
    pts
}

fn angle_from_east(dx: i32, dy: i32) -> f64 {
    // y points down, so atan2(dy, dx) in [0, 2pi) sweeps east -> south ->
    // west -> north, i.e. clockwise on screen.
    let a = libm::atan2(dy as f64, dx as f64);
    if a < 0.0 {
        a + 2.0 * core::f64::consts::PI
    } else {
        a
    }
}

/// Renders the grayscale image as RGB with a red circle outline of the given
/// radius around each pore. Circles are clipped at the borders.
pub fn overlay(img: &GrayImage, pores: &PoreSet, radius: u32) -> RgbImage {
    let (w, h) = (img.width, img.height);
    let mut data = Vec::with_capacity(3 * w * h);
    for &v in &img.pixels {
        let g = (v * 255.0 + 0.5) as u8;
        data.extend_from_slice(&[g, g, g]);
    }
    let ring = circle_perimeter(radius);
    for p in pores.iter() {
        for &(dx, dy) in &ring {
            let x = p.x as i64 + dx as i64;
            let y = p.y as i64 + dy as i64;
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                let i = 3 * (y as usize * w + x as usize);
                data[i] = 255;
                data[i + 1] = 0;
                data[i + 2] = 0;
            }
        }
    }
    RgbImage { width: w, height: h, data }
}

/// Connected components of the foreground under 8-connectivity.
///
/// Returns one pixel list per component.
pub fn connected_components(mask: &BinaryImage) -> Vec<Vec<Point>> {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) || seen[y * w + x] {
                continue;
            }
            let mut comp = Vec::new();
            seen[y * w + x] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                comp.push(Point::new(cx as u32, cy as u32));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let nx = cx as i64 + dx;
                        let ny = cy as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if mask.get(nx, ny) && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            components.push(comp);
        }
    }
    components
}

/// Rounded centroid of a pixel list.
pub fn centroid(pixels: &[Point]) -> Point {
    debug_assert!(!pixels.is_empty());
    let n = pixels.len() as f64;
    let sx: f64 = pixels.iter().map(|p| p.x as f64).sum();
    let sy: f64 = pixels.iter().map(|p| p.y as f64).sum();
    Point::new(libm::round(sx / n) as u32, libm::round(sy / n) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(w: usize, h: usize, v: f32) -> GrayImage {
        GrayImage::from_fn(w, h, 1200, |_, _| v)
    }

    #[test]
    fn reflect_folds_without_edge_repeat() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(0, 5), 0);
        assert_eq!(reflect(4, 5), 4);
        assert_eq!(reflect(-3, 1), 0);
        // Far out of range still folds.
        assert_eq!(reflect(13, 5), reflect(13 - 8, 5));
    }

    #[test]
    fn gray_image_validates() {
        assert_eq!(GrayImage::new(0, 4, 1200, vec![]).unwrap_err(), ImageError::EmptyImage);
        assert_eq!(
            GrayImage::new(2, 2, 1200, vec![0.0; 3]).unwrap_err(),
            ImageError::BadLength { width: 2, height: 2, got: 3 }
        );
        assert!(matches!(
            GrayImage::new(2, 2, 1200, vec![0.0, 0.5, 1.0, 1.5]).unwrap_err(),
            ImageError::IntensityRange { index: 3, .. }
        ));
        assert_eq!(GrayImage::new(2, 2, 0, vec![0.0; 4]).unwrap_err(), ImageError::ZeroDpi);
    }

    #[test]
    fn pore_set_rejects_duplicates() {
        let err = PoreSet::new(
            vec![Point::new(1, 2), Point::new(1, 2)],
            PoreSource::GroundTruth,
        )
        .unwrap_err();
        assert_eq!(err, ImageError::DuplicatePoint { x: 1, y: 2 });
    }

    #[test]
    fn binarize_constant_is_background() {
        let img = constant(16, 16, 0.5);
        let bin = binarize_adaptive(&img, 3, 0.0).unwrap();
        assert_eq!(bin.count_foreground(), 0);
    }

    #[test]
    fn binarize_single_bright_pixel() {
        let img = GrayImage::from_fn(9, 9, 1200, |x, y| if (x, y) == (4, 4) { 1.0 } else { 0.0 });
        let bin = binarize_adaptive(&img, 3, 0.0).unwrap();
        assert!(bin.get(4, 4));
        assert_eq!(bin.count_foreground(), 1);
    }

    #[test]
    fn binarize_rejects_bad_blocks() {
        let img = constant(8, 8, 0.5);
        assert_eq!(binarize_adaptive(&img, 4, 0.0).unwrap_err(), ImageError::BadBlock(4));
        assert_eq!(
            binarize_adaptive(&img, 9, 0.0).unwrap_err(),
            ImageError::BlockTooLarge { block: 9, limit: 8 }
        );
    }

    #[test]
    fn binarize_is_local() {
        // Changing a pixel farther than `block` away must not affect the
        // decision at the origin-side pixel.
        let base = GrayImage::from_fn(21, 21, 1200, |x, y| ((x * 7 + y * 13) % 11) as f32 / 11.0);
        let mut pixels = base.pixels().to_vec();
        pixels[20 * 21 + 20] = 1.0 - pixels[20 * 21 + 20];
        let tweaked = GrayImage::new(21, 21, 1200, pixels).unwrap();
        let a = binarize_adaptive(&base, 5, 0.01).unwrap();
        let b = binarize_adaptive(&tweaked, 5, 0.01).unwrap();
        assert_eq!(a.get(2, 2), b.get(2, 2));
        assert_eq!(a.get(10, 10), b.get(10, 10));
    }

    #[test]
    fn thin_empty_mask() {
        let empty = BinaryImage::blank(8, 8);
        assert_eq!(thin(&empty), empty);
    }

    #[test]
    fn thin_keeps_one_px_line() {
        let mut line = BinaryImage::blank(9, 5);
        for x in 1..8 {
            line.set(x, 2, true);
        }
        assert_eq!(thin(&line), line);
    }

    #[test]
    fn thin_square_has_no_2x2_block() {
        let mut sq = BinaryImage::blank(13, 13);
        for y in 2..11 {
            for x in 2..11 {
                sq.set(x, y, true);
            }
        }
        let sk = thin(&sq);
        assert!(sk.count_foreground() > 0);
        // Subset of the input.
        for y in 0..13 {
            for x in 0..13 {
                assert!(!sk.get(x, y) || sq.get(x, y));
            }
        }
        for y in 0..12 {
            for x in 0..12 {
                let full = sk.get(x, y) && sk.get(x + 1, y) && sk.get(x, y + 1) && sk.get(x + 1, y + 1);
                assert!(!full, "2x2 block at ({x}, {y})");
            }
        }
    }

    #[test]
    fn thin_is_idempotent() {
        let blob = GrayImage::from_fn(32, 32, 1200, |x, y| {
            let dx = x as f32 - 16.0;
            let dy = y as f32 - 12.0;
            if dx * dx / 80.0 + dy * dy / 20.0 < 1.0 {
                1.0
            } else {
                0.0
            }
        });
        let bin = binarize_adaptive(&blob, 15, 0.01).unwrap();
        let once = thin(&bin);
        assert_eq!(thin(&once), once);
    }

    #[test]
    fn patch_constant_center() {
        let img = constant(11, 11, 0.25);
        let patch = extract_patch(&img, Point::new(5, 5), 5).unwrap();
        assert_eq!(patch.len(), 25);
        assert!(patch.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn patch_interior_equals_direct_slice() {
        let img = GrayImage::from_fn(12, 10, 1200, |x, y| ((x * 31 + y * 17) % 19) as f32 / 19.0);
        let patch = extract_patch(&img, Point::new(6, 5), 5).unwrap();
        for dy in 0..5usize {
            for dx in 0..5usize {
                assert_eq!(patch[dy * 5 + dx], img.get(6 - 2 + dx, 5 - 2 + dy));
            }
        }
    }

    #[test]
    fn patch_corner_reflects() {
        let img = GrayImage::from_fn(6, 6, 1200, |x, y| (x as f32 * 10.0 + y as f32) / 100.0);
        let patch = extract_patch(&img, Point::new(0, 0), 3).unwrap();
        // Manual mirror around (0, 0): index -1 maps to 1.
        let expect = [
            img.get(1, 1),
            img.get(0, 1),
            img.get(1, 1),
            img.get(1, 0),
            img.get(0, 0),
            img.get(1, 0),
            img.get(1, 1),
            img.get(0, 1),
            img.get(1, 1),
        ];
        assert_eq!(patch, expect);
    }

    #[test]
    fn patch_rejects_even_size() {
        let img = constant(8, 8, 0.0);
        assert_eq!(extract_patch(&img, Point::new(4, 4), 4).unwrap_err(), ImageError::EvenPatch(4));
    }

    #[test]
    fn overlay_empty_set_only_replicates_channels() {
        let img = GrayImage::from_fn(7, 5, 1200, |x, y| (x + y) as f32 / 12.0);
        let rgb = overlay(&img, &PoreSet::empty(PoreSource::Detection), 3);
        for (i, &v) in img.pixels().iter().enumerate() {
            let g = (v * 255.0 + 0.5) as u8;
            assert_eq!(&rgb.data[3 * i..3 * i + 3], &[g, g, g]);
        }
    }

    #[test]
    fn overlay_single_ring() {
        let img = constant(21, 21, 0.0);
        let pores = PoreSet::new(vec![Point::new(10, 10)], PoreSource::Detection).unwrap();
        let radius = 4;
        let rgb = overlay(&img, &pores, radius);
        let tinted = rgb
            .data
            .chunks_exact(3)
            .filter(|px| px[0] == 255 && px[1] == 0)
            .count();
        assert_eq!(tinted, circle_perimeter(radius).len());
        // Ring interior (center pixel) untouched.
        let c = 3 * (10 * 21 + 10);
        assert_eq!(&rgb.data[c..c + 3], &[0, 0, 0]);
    }

    #[test]
    fn overlay_clips_out_of_bounds() {
        let img = constant(8, 8, 0.5);
        let pores = PoreSet::new(vec![Point::new(0, 0), Point::new(7, 7)], PoreSource::Detection).unwrap();
        let rgb = overlay(&img, &pores, 5);
        assert_eq!(rgb.data.len(), 3 * 64);
    }

    #[test]
    fn circle_perimeter_ordering_starts_east() {
        let ring = circle_perimeter(3);
        assert_eq!(ring[0], (3, 0));
        // Strictly increasing angle means a single white-run is contiguous.
        let angles: Vec<f64> = ring.iter().map(|&(x, y)| angle_from_east(x, y)).collect();
        assert!(angles.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn components_and_centroid() {
        let mut mask = BinaryImage::blank(10, 6);
        for &(x, y) in &[(1, 1), (2, 1), (2, 2)] {
            mask.set(x, y, true);
        }
        mask.set(7, 4, true);
        let mut comps = connected_components(&mask);
        comps.sort_by_key(|c| c.len());
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0], vec![Point::new(7, 4)]);
        assert_eq!(centroid(&comps[1]), Point::new(2, 1));
    }
}
