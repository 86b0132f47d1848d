//! Handcrafted pore detectors: skeleton tracing over the thinned valley
//! map, the adaptive-circle transition-counting detector, and the Gabor
//! ridge-mask post-filter.

use alloc::vec;
use alloc::vec::Vec;

use crate::filters::{self, FilterError};
use crate::image::{
    binarize_adaptive, centroid, circle_perimeter, thin, BinaryImage, GrayImage, Point, PoreSet,
    PoreSource,
};

/// Why a skeleton trace stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceTerminal {
    /// Reached another endpoint: closed pore.
    Endpoint,
    /// Reached a pixel with three or more skeleton neighbors: open pore.
    Bifurcation,
    /// Walked past the maximum distance without terminating.
    Exhausted,
}

/// Outcome of tracing one skeleton segment from an endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceResult {
    pub origin: Point,
    pub terminal: TraceTerminal,
    /// Pixels traversed (0 for an isolated origin).
    pub length: usize,
}

/// Parameters of [`skeleton_detect`] and the ridge-based operations,
/// scaled from their 1200 dpi reference values by `for_dpi`.
#[derive(Debug, Clone)]
pub struct SkeletonParams {
    /// Maximum trace length in pixels.
    pub max_trace: usize,
    pub gabor_wavelength: f64,
    pub gabor_sigma: f64,
    pub orientation_block: usize,
}

impl SkeletonParams {
    pub fn for_dpi(dpi: u32) -> Self {
        let s = f64::from(dpi) / 1200.0;
        Self {
            max_trace: (12.0 * s) as usize,
            gabor_wavelength: 10.0 * s,
            gabor_sigma: 4.0,
            orientation_block: 16,
        }
    }
}

/// Skeleton-tracing detector.
///
/// Pipeline: orientation-adaptive Gabor enhancement, binarization with
/// valleys-and-pores as foreground (positive response), thinning, then a
/// trace from every endpoint (foreground pixel with exactly one foreground
/// neighbor). A trace that reaches another endpoint within `max_trace`
/// pixels emits a closed pore at the segment midpoint; one that reaches a
/// bifurcation (\>= 3 skeleton neighbors) emits an open pore at the origin
/// endpoint. Traced pixels are consumed so each segment emits at most once.
/// Isolated single-pixel segments are treated as degenerate closed pores.
pub fn skeleton_detect(img: &GrayImage, params: &SkeletonParams) -> Result<PoreSet, FilterError> {
    assert!(params.max_trace >= 2, "max_trace must be >= 2");
    let response = filters::gabor_enhance(
        img,
        params.gabor_wavelength,
        params.gabor_sigma,
        params.orientation_block,
    )?;
    let bits: Vec<bool> = response.iter().map(|&v| v > 0.0).collect();
    let mask = BinaryImage::new(img.width(), img.height(), bits).expect("dims match");
    let skeleton = thin(&mask);
    Ok(trace_skeleton(&skeleton, params.max_trace))
}

fn skeleton_neighbors(skel: &BinaryImage, x: usize, y: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(8);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx >= 0
                && ny >= 0
                && (nx as usize) < skel.width()
                && (ny as usize) < skel.height()
                && skel.get(nx as usize, ny as usize)
            {
                out.push((nx as usize, ny as usize));
            }
        }
    }
    out
}

/// Endpoint tracing over an already-thinned mask. Exposed for tests that
/// build skeletons by hand.
pub fn trace_skeleton(skeleton: &BinaryImage, max_trace: usize) -> PoreSet {
    let (w, h) = (skeleton.width(), skeleton.height());
    let mut endpoints = Vec::new();
    let mut isolated = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !skeleton.get(x, y) {
                continue;
            }
            match skeleton_neighbors(skeleton, x, y).len() {
                0 => isolated.push(Point::new(x as u32, y as u32)),
                1 => endpoints.push((x, y)),
                _ => {}
            }
        }
    }

    let mut visited = vec![false; w * h];
    let mut points = alloc::collections::BTreeSet::new();
    for p in isolated {
        points.insert(p);
    }
    for &(ex, ey) in &endpoints {
        if visited[ey * w + ex] {
            continue; // segment already consumed from its other end
        }
        let (trace, path) = trace_from(skeleton, &mut visited, ex, ey, max_trace);
        match trace.terminal {
            TraceTerminal::Endpoint => {
                points.insert(path[path.len() / 2]);
            }
            TraceTerminal::Bifurcation => {
                points.insert(trace.origin);
            }
            TraceTerminal::Exhausted => {}
        }
    }
    let points: Vec<Point> = points.into_iter().collect();
    PoreSet::new(points, PoreSource::Detection).expect("set is deduplicated")
}

fn trace_from(
    skel: &BinaryImage,
    visited: &mut [bool],
    ex: usize,
    ey: usize,
    max_trace: usize,
) -> (TraceResult, Vec<Point>) {
    let w = skel.width();
    let origin = Point::new(ex as u32, ey as u32);
    let mut path = vec![origin];
    visited[ey * w + ex] = true;
    let mut prev = (ex, ey);
    let mut cur = (ex, ey);
    let mut length = 0usize;
    loop {
        let nbrs = skeleton_neighbors(skel, cur.0, cur.1);
        let next: Vec<(usize, usize)> = nbrs.iter().copied().filter(|&n| n != prev).collect();
        if cur != (ex, ey) {
            if nbrs.len() >= 3 {
                let t = TraceResult { origin, terminal: TraceTerminal::Bifurcation, length };
                return (t, path);
            }
            if nbrs.len() == 1 {
                // Only the predecessor: another endpoint.
                let t = TraceResult { origin, terminal: TraceTerminal::Endpoint, length };
                return (t, path);
            }
        }
        if length >= max_trace {
            return (TraceResult { origin, terminal: TraceTerminal::Exhausted, length }, path);
        }
        // Continue along the segment; prefer an unvisited neighbor.
        let step = next
            .iter()
            .copied()
            .find(|&(nx, ny)| !visited[ny * w + nx])
            .or_else(|| next.first().copied());
        let Some(step) = step else {
            return (TraceResult { origin, terminal: TraceTerminal::Exhausted, length }, path);
        };
        prev = cur;
        cur = step;
        visited[cur.1 * w + cur.0] = true;
        path.push(Point::new(cur.0 as u32, cur.1 as u32));
        length += 1;
    }
}

/// Parameters of [`dpf_detect`].
#[derive(Debug, Clone)]
pub struct DpfParams {
    pub r_min: u32,
    pub r_max: u32,
    /// Adaptive binarization block and offset applied to the raw image.
    pub binarize_block: usize,
    pub binarize_offset: f32,
}

impl DpfParams {
    pub fn for_dpi(dpi: u32) -> Self {
        let s = f64::from(dpi) / 1200.0;
        Self {
            r_min: ((2.0 * s) as u32).max(1),
            r_max: ((6.0 * s) as u32).max(2),
            binarize_block: 15,
            binarize_offset: 0.02,
        }
    }
}

/// Adaptive-circle transition-counting detector.
///
/// For every bright pixel the discrete circle grows from `r_min` until its
/// perimeter is no longer fully bright (or `r_max` is reached). At that
/// radius the white/black transitions along the angle-ordered perimeter
/// decide the case: a fully dark perimeter (0 transitions) marks a
/// closed-pore candidate, exactly 2 transitions an open-pore candidate.
/// Candidates within 2 px of each other cluster into one detection at their
/// centroid.
pub fn dpf_detect(img: &GrayImage, params: &DpfParams) -> PoreSet {
    assert!(params.r_min >= 1 && params.r_min <= params.r_max, "need 1 <= r_min <= r_max");
    let block = params.binarize_block.min((img.width().min(img.height()) - 1) | 1).max(3);
    let mask = binarize_adaptive(img, block, params.binarize_offset).expect("valid block");
    let rings: Vec<Vec<(i32, i32)>> =
        (0..=params.r_max).map(|r| circle_perimeter(r)).collect();

    let mut candidates = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if !mask.get(x, y) {
                continue;
            }
            if let Some(_radius) = classify_dpf_pixel(&mask, x, y, params, &rings) {
                candidates.push(Point::new(x as u32, y as u32));
            }
        }
    }
    let points = cluster_candidates(&candidates, 2.0);
    PoreSet::new(points, PoreSource::Detection).expect("set is deduplicated")
}

/// Returns the escape radius when the pixel qualifies as a pore candidate.
fn classify_dpf_pixel(
    mask: &BinaryImage,
    x: usize,
    y: usize,
    params: &DpfParams,
    rings: &[Vec<(i32, i32)>],
) -> Option<u32> {
    for r in params.r_min..=params.r_max {
        let ring = &rings[r as usize];
        let values: Vec<bool> = ring
            .iter()
            .map(|&(dx, dy)| mask.get_checked(x as isize + dx as isize, y as isize + dy as isize))
            .collect();
        if values.iter().all(|&v| v) {
            continue; // fully bright: grow further
        }
        // Escape radius reached: count white<->black transitions cyclically.
        let transitions = values
            .iter()
            .enumerate()
            .filter(|&(i, &v)| v != values[(i + 1) % values.len()])
            .count();
        let fully_dark = values.iter().all(|&v| !v);
        if transitions == 0 && fully_dark {
            return Some(r); // closed pore: blob enclosed by dark ring
        }
        if transitions == 2 {
            // Open pore: a single bright run where the neck meets the
            // perimeter. The run must be a minority of the circle, which
            // separates a neck from a pixel sitting just off a valley
            // centerline (where most of the circle stays bright).
            let bright = values.iter().filter(|&&v| v).count();
            if 2 * bright <= values.len() {
                return Some(r);
            }
        }
        return None;
    }
    None // still fully bright at r_max: interior of a large region
}

/// Single-linkage clustering with the given Euclidean radius; each cluster
/// collapses to its rounded centroid.
fn cluster_candidates(candidates: &[Point], radius: f64) -> Vec<Point> {
    let n = candidates.len();
    let mut assigned = vec![false; n];
    let r2 = radius * radius;
    let mut points = alloc::collections::BTreeSet::new();
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let mut cluster = vec![candidates[i]];
        assigned[i] = true;
        let mut frontier = vec![i];
        while let Some(j) = frontier.pop() {
            for k in 0..n {
                if !assigned[k] && candidates[j].distance_sq(&candidates[k]) <= r2 {
                    assigned[k] = true;
                    cluster.push(candidates[k]);
                    frontier.push(k);
                }
            }
        }
        points.insert(centroid(&cluster));
    }
    points.into_iter().collect()
}

/// Gabor ridge-mask post-filter: keeps only pores whose coordinate lies on
/// the (dilated) ridge map. Output is always a subset of the input.
pub fn ridge_mask_filter(
    pores: &PoreSet,
    img: &GrayImage,
    dilation: u32,
    params: &SkeletonParams,
) -> Result<PoreSet, FilterError> {
    let ridges = filters::ridge_mask(
        img,
        params.gabor_wavelength,
        params.gabor_sigma,
        params.orientation_block,
    )?
    .dilated(dilation);
    let kept: Vec<Point> = pores
        .iter()
        .copied()
        .filter(|p| ridges.get(p.x as usize, p.y as usize))
        .collect();
    Ok(PoreSet::new(kept, PoreSource::Detection).expect("subset of a valid set"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryImage {
        let h = rows.len();
        let w = rows[0].len();
        let mut m = BinaryImage::blank(w, h);
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.chars().enumerate() {
                if c == '1' {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    #[test]
    fn isolated_segment_emits_closed_pore_at_midpoint() {
        let skel = mask_from(&[
            "0000000",
            "0111110",
            "0000000",
        ]);
        let pores = trace_skeleton(&skel, 12);
        assert_eq!(pores.points(), &[Point::new(3, 1)]);
    }

    #[test]
    fn endpoint_into_t_junction_emits_open_pore_at_origin() {
        // Vertical bar with a spur poking left from its middle.
        let skel = mask_from(&[
            "0001000",
            "0001000",
            "0111000",
            "0001000",
            "0001000",
        ]);
        let pores = trace_skeleton(&skel, 12);
        // The spur origin (1, 2) reaches the junction at (3, 2); the bar's
        // own endpoints (3, 0) and (3, 4) also reach it.
        assert!(pores.points().contains(&Point::new(1, 2)));
        for p in pores.iter() {
            assert!(skel.get(p.x as usize, p.y as usize));
        }
    }

    #[test]
    fn empty_skeleton_empty_pores() {
        let skel = BinaryImage::blank(10, 10);
        assert!(trace_skeleton(&skel, 12).is_empty());
    }

    #[test]
    fn segment_emits_once_from_either_end() {
        let skel = mask_from(&[
            "00000",
            "01110",
            "00000",
        ]);
        let pores = trace_skeleton(&skel, 12);
        assert_eq!(pores.len(), 1);
        assert_eq!(pores.points()[0], Point::new(2, 1));
    }

    #[test]
    fn long_segment_is_exhausted() {
        let skel = mask_from(&["0111111111111111110"]);
        // 17 px long, max_trace 5: no pore.
        assert!(trace_skeleton(&skel, 5).is_empty());
    }

    #[test]
    fn isolated_pixel_is_degenerate_closed_pore() {
        let skel = mask_from(&[
            "000",
            "010",
            "000",
        ]);
        let pores = trace_skeleton(&skel, 12);
        assert_eq!(pores.points(), &[Point::new(1, 1)]);
    }

    fn disc_image(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> GrayImage {
        GrayImage::from_fn(w, h, 1200, |x, y| {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            if dx * dx + dy * dy <= r * r {
                0.95
            } else {
                0.05
            }
        })
    }

    #[test]
    fn dpf_detects_disc_center() {
        let img = disc_image(21, 21, 10.0, 10.0, 3.0);
        let params = DpfParams { r_min: 1, r_max: 6, binarize_block: 9, binarize_offset: 0.02 };
        let pores = dpf_detect(&img, &params);
        assert_eq!(pores.len(), 1);
        let p = pores.points()[0];
        assert!(p.distance(&Point::new(10, 10)) <= 1.0, "detected at ({}, {})", p.x, p.y);
    }

    #[test]
    fn dpf_all_dark_is_empty() {
        let img = GrayImage::from_fn(20, 20, 1200, |_, _| 0.02);
        let params = DpfParams::for_dpi(1200);
        assert!(dpf_detect(&img, &params).is_empty());
    }

    #[test]
    fn dpf_open_pore_on_ridge_edge() {
        // Bright bump attached to the side of a bright vertical stripe:
        // two transitions at the escape radius.
        let img = GrayImage::from_fn(24, 24, 1200, |x, y| {
            let on_stripe = (10..=12).contains(&x);
            let on_bump = {
                let dx = x as f64 - 14.0;
                let dy = y as f64 - 12.0;
                dx * dx + dy * dy <= 4.0
            };
            if on_stripe || on_bump {
                0.9
            } else {
                0.1
            }
        });
        let params = DpfParams { r_min: 2, r_max: 6, binarize_block: 11, binarize_offset: 0.02 };
        let pores = dpf_detect(&img, &params);
        assert!(
            pores.iter().any(|p| p.distance(&Point::new(14, 12)) <= 2.5),
            "no detection near the bump: {:?}",
            pores.points()
        );
    }

    #[test]
    fn dpf_detections_lie_on_foreground() {
        let img = disc_image(32, 32, 12.0, 18.0, 3.0);
        let params = DpfParams::for_dpi(1200);
        let mask = binarize_adaptive(&img, 15, 0.02).unwrap();
        for p in dpf_detect(&img, &params).iter() {
            assert!(mask.get(p.x as usize, p.y as usize));
        }
    }

    #[test]
    fn ridge_filter_is_subset_and_idempotent() {
        // Horizontal dark ridges on a bright background.
        let img = GrayImage::from_fn(64, 64, 1200, |_, y| {
            (0.5 + 0.4 * libm::sin(2.0 * core::f64::consts::PI * y as f64 / 10.0)) as f32
        });
        let pores = PoreSet::new(
            (0..30).map(|i| Point::new(2 * i as u32, (i * 7 % 60) as u32)).collect(),
            PoreSource::Detection,
        )
        .unwrap();
        let params = SkeletonParams::for_dpi(1200);
        let once = ridge_mask_filter(&pores, &img, 1, &params).unwrap();
        let twice = ridge_mask_filter(&once, &img, 1, &params).unwrap();
        assert!(once.len() <= pores.len());
        let set: alloc::collections::BTreeSet<_> = pores.iter().copied().collect();
        assert!(once.iter().all(|p| set.contains(p)));
        assert_eq!(once.points(), twice.points());
    }
}
