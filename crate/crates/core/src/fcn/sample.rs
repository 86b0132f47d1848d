use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::label::LabelMap;
use super::FcnConfig;
use crate::image::{extract_patch, GrayImage, Point};
use crate::nn::Tensor;

/// A patch center inside one training image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRef {
    pub image: usize,
    pub x: u32,
    pub y: u32,
}

/// Epoch sample stream: every positive pixel (label > 0) plus
/// `neg_pos_ratio` times as many negatives drawn uniformly from zero-label
/// pixels, reshuffled per epoch, emitted as `(patch, target)` batches.
pub struct BatchStream<'a> {
    images: &'a [GrayImage],
    labels: &'a [LabelMap],
    refs: Vec<PatchRef>,
    cursor: usize,
    batch: usize,
    patch_size: usize,
}

/// Builds the sample stream for one epoch. The `epoch_seed` fully determines
/// negative sampling and batch order. Images without positives contribute
/// negatives only.
pub fn sample_batches<'a>(
    images: &'a [GrayImage],
    labels: &'a [LabelMap],
    cfg: &FcnConfig,
    epoch_seed: u64,
) -> BatchStream<'a> {
    assert_eq!(images.len(), labels.len());
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    let mut refs = Vec::new();
    let mut zero_counts = Vec::with_capacity(labels.len());
    for (i, lm) in labels.iter().enumerate() {
        let mut positives = 0usize;
        for y in 0..lm.height() {
            for x in 0..lm.width() {
                if lm.get(x, y) > 0.0 {
                    refs.push(PatchRef { image: i, x: x as u32, y: y as u32 });
                    positives += 1;
                }
            }
        }
        zero_counts.push(lm.width() * lm.height() - positives);
    }
    let n_pos = refs.len();
    let n_neg = libm::round(cfg.neg_pos_ratio * n_pos as f64) as usize;

    // Uniform over the union of zero-label pixels: pick the image weighted
    // by its zero-pixel count, then rejection-sample a pixel inside it.
    let total_zeros: usize = zero_counts.iter().sum();
    if total_zeros > 0 {
        for _ in 0..n_neg {
            let mut pick = rng.gen_range(0..total_zeros);
            let mut img_idx = 0;
            for (i, &z) in zero_counts.iter().enumerate() {
                if pick < z {
                    img_idx = i;
                    break;
                }
                pick -= z;
            }
            let lm = &labels[img_idx];
            loop {
                let x = rng.gen_range(0..lm.width());
                let y = rng.gen_range(0..lm.height());
                if lm.get(x, y) == 0.0 {
                    refs.push(PatchRef { image: img_idx, x: x as u32, y: y as u32 });
                    break;
                }
            }
        }
    }
    refs.shuffle(&mut rng);
    BatchStream {
        images,
        labels,
        refs,
        cursor: 0,
        batch: cfg.batch,
        patch_size: cfg.patch_size,
    }
}

impl BatchStream<'_> {
    pub fn sample_count(&self) -> usize {
        self.refs.len()
    }

    pub fn refs(&self) -> &[PatchRef] {
        &self.refs
    }
}

impl Iterator for BatchStream<'_> {
    /// `(patches [B,1,s,s], targets [B,1,1,1])`.
    type Item = (Tensor<f32>, Tensor<f32>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.refs.len() {
            return None;
        }
        let end = (self.cursor + self.batch).min(self.refs.len());
        let chunk = &self.refs[self.cursor..end];
        self.cursor = end;
        let s = self.patch_size;
        let mut data = Vec::with_capacity(chunk.len() * s * s);
        let mut targets = Vec::with_capacity(chunk.len());
        for r in chunk {
            let patch = extract_patch(&self.images[r.image], Point::new(r.x, r.y), s)
                .expect("patch size validated");
            data.extend_from_slice(&patch);
            targets.push(self.labels[r.image].get(r.x as usize, r.y as usize));
        }
        Some((
            Tensor::from_vec([chunk.len(), 1, s, s], data),
            Tensor::from_vec([chunk.len(), 1, 1, 1], targets),
        ))
    }
}
