use alloc::vec;
use alloc::vec::Vec;

use crate::image::PoreSet;

/// Per-pixel training target in `[0, 1]`, same dimensions as its image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl LabelMap {
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

    pub fn positive_count(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Builds the label map for one image.
///
/// Soft labels assign `max(0, (r - d)/r)` over all pores, where `d` is the
/// Euclidean distance to the pore center, so the value 1 occurs exactly at
/// annotated centers and decays linearly to 0 at distance `r`. Hard labels
/// are 1 strictly inside radius `r` and 0 elsewhere.
pub fn make_label_map(pores: &PoreSet, width: usize, height: usize, r: u32, soft: bool) -> LabelMap {
    assert!(r >= 1, "pore radius must be >= 1");
    let mut values = vec![0.0f32; width * height];
    let rf = f64::from(r);
    for p in pores.iter() {
        let (px, py) = (f64::from(p.x), f64::from(p.y));
        let x0 = (p.x as i64 - r as i64).max(0) as usize;
        let x1 = ((p.x as i64 + r as i64) as usize).min(width - 1);
        let y0 = (p.y as i64 - r as i64).max(0) as usize;
        let y1 = ((p.y as i64 + r as i64) as usize).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - px;
                let dy = y as f64 - py;
                let d = libm::sqrt(dx * dx + dy * dy);
                if d >= rf {
                    continue;
                }
                let v = if soft { ((rf - d) / rf) as f32 } else { 1.0 };
                let cell = &mut values[y * width + x];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
    LabelMap { width, height, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{Point, PoreSet, PoreSource};

    fn single_pore(x: u32, y: u32) -> PoreSet {
        PoreSet::new(vec![Point::new(x, y)], PoreSource::GroundTruth).unwrap()
    }

    #[test]
    fn center_is_one() {
        let m = make_label_map(&single_pore(10, 10), 21, 21, 5, true);
        assert_eq!(m.get(10, 10), 1.0);
        let m = make_label_map(&single_pore(10, 10), 21, 21, 5, false);
        assert_eq!(m.get(10, 10), 1.0);
    }

    #[test]
    fn soft_value_at_half_radius() {
        // d = 2.5, r = 5 -> (r - d)/r = 0.5. Use a 3-4-5 style offset: the
        // pixel (13, 14) is exactly 5 away; (12, 10) is exactly 2 away.
        let m = make_label_map(&single_pore(10, 10), 21, 21, 5, true);
        assert!((m.get(12, 10) - 0.6).abs() < 1e-6); // d = 2
        assert!((m.get(10, 15) - 0.0).abs() < 1e-6); // d = 5: boundary is 0
        assert_eq!(m.get(13, 14), 0.0); // d = 5 exactly
    }

    #[test]
    fn hard_labels_are_binary_inside_strict_radius() {
        let m = make_label_map(&single_pore(10, 10), 21, 21, 5, false);
        assert_eq!(m.get(14, 10), 1.0); // d = 4
        assert_eq!(m.get(15, 10), 0.0); // d = 5
        assert!(m.values().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn soft_ones_only_at_centers() {
        let pores = PoreSet::new(
            vec![Point::new(5, 5), Point::new(12, 9)],
            PoreSource::GroundTruth,
        )
        .unwrap();
        let m = make_label_map(&pores, 20, 20, 4, true);
        for y in 0..20 {
            for x in 0..20 {
                if m.get(x, y) == 1.0 {
                    assert!((x, y) == (5, 5) || (x, y) == (12, 9));
                }
            }
        }
    }

    #[test]
    fn soft_map_is_lipschitz() {
        // |label(p) - label(q)| <= |p - q| / r for neighboring pixels.
        let pores = PoreSet::new(
            vec![Point::new(7, 7), Point::new(13, 11), Point::new(4, 15)],
            PoreSource::GroundTruth,
        )
        .unwrap();
        let r = 5u32;
        let m = make_label_map(&pores, 24, 24, r, true);
        let bound = 1.0 / r as f32 + 1e-6;
        for y in 0..24 {
            for x in 0..23 {
                assert!((m.get(x, y) - m.get(x + 1, y)).abs() <= bound);
            }
        }
        for y in 0..23 {
            for x in 0..24 {
                assert!((m.get(x, y) - m.get(x, y + 1)).abs() <= bound);
            }
        }
    }

    #[test]
    fn overlapping_pores_take_max() {
        let pores = PoreSet::new(
            vec![Point::new(10, 10), Point::new(12, 10)],
            PoreSource::GroundTruth,
        )
        .unwrap();
        let m = make_label_map(&pores, 21, 21, 5, true);
        // Pixel (11, 10): distance 1 to both -> 0.8.
        assert!((m.get(11, 10) - 0.8).abs() < 1e-6);
    }

    #[test]
    fn clipped_at_borders_without_panic() {
        let m = make_label_map(&single_pore(0, 0), 10, 10, 5, true);
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.positive_count(), m.values().iter().filter(|&&v| v > 0.0).count());
    }
}
