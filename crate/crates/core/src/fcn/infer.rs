use alloc::vec::Vec;

use super::model::Model;
use super::FcnError;
use crate::handcrafted::{ridge_mask_filter, SkeletonParams};
use crate::image::{GrayImage, Point, PoreSet, PoreSource};
use crate::nn::Tensor;

/// Per-pixel pore-center probability, same dimensions as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl IntensityMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Test/tooling constructor; values must lie in (0, 1).
    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), width * height);
        assert!(values.iter().all(|&v| v > 0.0 && v < 1.0), "probabilities must lie in (0,1)");
        Self { width, height, values }
    }
}

/// Dense full-image inference.
///
/// The image is mirror-padded by `(patch_size - 1)/2` on each side and run
/// through the network in one pass; because every layer is valid and
/// stride 1, output pixel `(x, y)` equals the patch-wise forward of the
/// patch centered at `(x, y)`.
pub fn infer_map(model: &Model<f32>, img: &GrayImage) -> Result<IntensityMap, FcnError> {
    let patch = model.patch_size();
    let (w, h) = (img.width(), img.height());
    if w < patch || h < patch {
        return Err(FcnError::ImageSmallerThanPatch { width: w, height: h, patch });
    }
    let pad = (patch - 1) / 2;
    let (pw, ph) = (w + 2 * pad, h + 2 * pad);
    let mut data = Vec::with_capacity(pw * ph);
    for y in 0..ph {
        for x in 0..pw {
            data.push(img.get_reflect(x as isize - pad as isize, y as isize - pad as isize));
        }
    }
    let x = Tensor::from_vec([1, 1, ph, pw], data);
    let out = model.forward(&x)?;
    debug_assert_eq!(out.shape(), [1, 1, h, w]);
    Ok(IntensityMap { width: w, height: h, values: out.data().to_vec() })
}

/// Greedy non-maximum suppression.
///
/// Candidates are pixels with probability at or above `prob_threshold`,
/// visited in descending probability (row-major on ties); a candidate is
/// kept iff its Euclidean distance to every kept detection exceeds
/// `nms_radius`.
pub fn nms(map: &IntensityMap, prob_threshold: f64, nms_radius: f64) -> PoreSet {
    assert!(prob_threshold > 0.0 && prob_threshold < 1.0, "threshold must lie in (0,1)");
    assert!(nms_radius >= 1.0, "nms radius must be >= 1");
    let mut candidates: Vec<(f32, u32, u32)> = Vec::new();
    for y in 0..map.height {
        for x in 0..map.width {
            let p = map.get(x, y);
            if f64::from(p) >= prob_threshold {
                candidates.push((p, y as u32, x as u32));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("probabilities are finite")
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let r2 = nms_radius * nms_radius;
    let mut accepted: Vec<Point> = Vec::new();
    for &(_, y, x) in &candidates {
        let p = Point::new(x, y);
        if accepted.iter().all(|a| a.distance_sq(&p) > r2) {
            accepted.push(p);
        }
    }
    PoreSet::new(accepted, PoreSource::Detection).expect("greedy keeps distinct points")
}

/// Optional ridge-mask post-filter applied after NMS.
#[derive(Debug, Clone)]
pub struct RidgeFilterParams {
    pub dilation: u32,
    pub gabor: SkeletonParams,
}

impl RidgeFilterParams {
    pub fn for_dpi(dpi: u32) -> Self {
        Self { dilation: 1, gabor: SkeletonParams::for_dpi(dpi) }
    }
}

/// Full detector: dense inference, NMS at the configured threshold/radius,
/// and an optional ridge-mask post-filter.
pub fn detect(
    model: &Model<f32>,
    img: &GrayImage,
    prob_threshold: f64,
    nms_radius: f64,
    ridge_filter: Option<&RidgeFilterParams>,
) -> Result<PoreSet, FcnError> {
    let map = infer_map(model, img)?;
    let pores = nms(&map, prob_threshold, nms_radius);
    match ridge_filter {
        Some(rf) => Ok(ridge_mask_filter(&pores, img, rf.dilation, &rf.gabor)?),
        None => Ok(pores),
    }
}
