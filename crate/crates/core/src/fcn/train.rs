use alloc::vec::Vec;

use super::checkpoint::Checkpoint;
use super::infer::detect;
use super::label::make_label_map;
use super::model::Model;
use super::sample::sample_batches;
use super::{FcnConfig, FcnError, LossKind};
use crate::eval::{match_bidirectional, metrics_from_counts};
use crate::image::{GrayImage, PoreSet};
use crate::nn::{
    adam_step, loss_bce, loss_bce_backward, loss_focal, loss_focal_backward, OptimizerState,
    Scalar, Tensor,
};
use crate::rng::derive_seed;

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f: f64,
}

/// Result of a training run: the best checkpoint by validation F-score plus
/// the per-epoch log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_f: f64,
}

fn loss_and_grad(
    pred: &Tensor<f32>,
    target: &Tensor<f32>,
    loss: LossKind,
) -> Result<(f64, Tensor<f32>), FcnError> {
    Ok(match loss {
        LossKind::Bce => (
            loss_bce(pred, target)?.to_f64(),
            loss_bce_backward(pred, target)?,
        ),
        LossKind::Focal { gamma, alpha } => {
            let (g, a) = (gamma as f32, alpha as f32);
            (
                loss_focal(pred, target, g, a)?.to_f64(),
                loss_focal_backward(pred, target, g, a)?,
            )
        }
    })
}

/// Fixed batch split for the data-parallel step. The chunking (and thus the
/// floating-point combine order) is identical with and without threads, so
/// results are bit-reproducible either way.
const BATCH_CHUNKS: usize = 2;

fn split_batch(t: &Tensor<f32>, parts: usize) -> Vec<Tensor<f32>> {
    let [n, c, h, w] = t.shape();
    if n < 2 * parts {
        return alloc::vec![t.clone()];
    }
    let stride = c * h * w;
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut at = 0usize;
    for i in 0..parts {
        let len = base + usize::from(i < extra);
        let data = t.data()[at * stride..(at + len) * stride].to_vec();
        out.push(Tensor::from_vec([len, c, h, w], data));
        at += len;
    }
    out
}

type ChunkResult = Result<(f64, super::model::ModelGrads<f32>), FcnError>;

fn chunk_step(model: &Model<f32>, patches: &Tensor<f32>, targets: &Tensor<f32>, loss: LossKind) -> ChunkResult {
    let (pred, cache) = model.forward_train(patches)?;
    let (loss_value, grad) = loss_and_grad(&pred, targets, loss)?;
    let grads = model.backward(&cache, grad)?;
    Ok((loss_value, grads))
}

/// One optimizer step over a batch: forward/backward per chunk (in parallel
/// when built with `std`), gradients combined in chunk order weighted by
/// chunk size. Returns the mean loss over the batch.
fn batch_step(
    model: &Model<f32>,
    patches: &Tensor<f32>,
    targets: &Tensor<f32>,
    loss: LossKind,
) -> Result<(f64, super::model::ModelGrads<f32>), FcnError> {
    let n_total = patches.shape()[0];
    let chunks = split_batch(patches, BATCH_CHUNKS);
    let target_chunks = split_batch(targets, BATCH_CHUNKS);
    debug_assert_eq!(chunks.len(), target_chunks.len());

    #[cfg(feature = "std")]
    let results: Vec<ChunkResult> = if chunks.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .zip(&target_chunks)
                .map(|(p, t)| scope.spawn(|| chunk_step(model, p, t, loss)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("chunk thread panicked")).collect()
        })
    } else {
        chunks.iter().zip(&target_chunks).map(|(p, t)| chunk_step(model, p, t, loss)).collect()
    };
    #[cfg(not(feature = "std"))]
    let results: Vec<ChunkResult> =
        chunks.iter().zip(&target_chunks).map(|(p, t)| chunk_step(model, p, t, loss)).collect();

    let mut total_loss = 0.0f64;
    let mut combined: Option<super::model::ModelGrads<f32>> = None;
    for (chunk, result) in chunks.iter().zip(results) {
        let (loss_value, grads) = result?;
        let weight = chunk.shape()[0] as f32 / n_total as f32;
        total_loss += loss_value * f64::from(weight);
        match combined.as_mut() {
            None => {
                let mut g = grads;
                for buf in g.weights.iter_mut().chain(g.bias.iter_mut()) {
                    for v in buf.iter_mut() {
                        *v *= weight;
                    }
                }
                combined = Some(g);
            }
            Some(acc) => {
                for (a, b) in acc.weights.iter_mut().zip(&grads.weights) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += weight * y;
                    }
                }
                for (a, b) in acc.bias.iter_mut().zip(&grads.bias) {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += weight * y;
                    }
                }
            }
        }
    }
    Ok((total_loss, combined.expect("at least one chunk")))
}

/// Micro F-score of the current model over labeled images, using the
/// bidirectional criterion (images with empty ground truth count as 0).
pub fn validation_f(
    model: &Model<f32>,
    images: &[(GrayImage, PoreSet)],
    cfg: &FcnConfig,
) -> Result<f64, FcnError> {
    let (mut matched, mut n_det, mut n_gt) = (0usize, 0usize, 0usize);
    for (img, gt) in images {
        let det = detect(model, img, cfg.prob_threshold, cfg.nms_radius, None)?;
        let m = match_bidirectional(&det, gt);
        matched += m.pairs.len();
        n_det += det.len();
        n_gt += gt.len();
    }
    if n_gt == 0 {
        return Ok(0.0);
    }
    Ok(metrics_from_counts(matched, n_det, n_gt).expect("n_gt >= 1").f_score)
}

/// Trains the configured network with per-epoch resampling and early
/// stopping on the validation F-score; returns the best checkpoint and the
/// full log. Fully deterministic given `(seed, data, config)`.
pub fn train(
    train_set: &[(GrayImage, PoreSet)],
    val_set: &[(GrayImage, PoreSet)],
    cfg: &FcnConfig,
) -> Result<TrainOutcome, FcnError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(FcnError::MissingImages);
    }
    for (img, _) in train_set.iter().chain(val_set) {
        if img.width() < cfg.patch_size || img.height() < cfg.patch_size {
            return Err(FcnError::ImageSmallerThanPatch {
                width: img.width(),
                height: img.height(),
                patch: cfg.patch_size,
            });
        }
    }

    let images: Vec<GrayImage> = train_set.iter().map(|(i, _)| i.clone()).collect();
    let labels: Vec<_> = train_set
        .iter()
        .map(|(img, pores)| {
            make_label_map(pores, img.width(), img.height(), cfg.pore_radius, cfg.soft_labels)
        })
        .collect();
    if labels.iter().all(|l| l.positive_count() == 0) {
        return Err(FcnError::NoPositiveLabels);
    }

    let mut model = Model::<f32>::build(cfg)?;
    let mut optim = OptimizerState::new(cfg.lr as f32, &model.param_sizes());

    let mut log = Vec::new();
    let mut best_weights = model.convs.clone();
    let mut best_val_f = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        let stream = sample_batches(&images, &labels, cfg, derive_seed(cfg.seed, epoch as u64));
        let mut loss_sum = 0.0f64;
        let mut sample_count = 0usize;
        for (patches, targets) in stream {
            let n = patches.shape()[0];
            let (loss, grads) = batch_step(&model, &patches, &targets, cfg.loss)?;
            if !loss.is_finite() {
                return Err(FcnError::Diverged { epoch });
            }
            loss_sum += loss * n as f64;
            sample_count += n;
            let grad_refs: Vec<&[f32]> = grads
                .weights
                .iter()
                .zip(&grads.bias)
                .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
                .collect();
            let mut param_refs: Vec<&mut [f32]> = Vec::with_capacity(grad_refs.len());
            for layer in model.convs.iter_mut() {
                param_refs.push(&mut layer.weights);
                param_refs.push(&mut layer.bias);
            }
            adam_step(&mut param_refs, &grad_refs, &mut optim);
        }
        let train_loss = if sample_count > 0 { loss_sum / sample_count as f64 } else { 0.0 };
        let val_f = validation_f(&model, val_set, cfg)?;
        log.push(EpochStats { epoch, train_loss, val_f });

        if val_f > best_val_f {
            best_val_f = val_f;
            best_weights = model.convs.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    model.convs = best_weights;
    let mut final_cfg = cfg.clone();
    if cfg.tune_threshold {
        final_cfg.prob_threshold = tune_threshold(&model, val_set, cfg)?;
    }
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_model(final_cfg, &model),
        log,
        best_epoch,
        best_val_f: if best_val_f.is_finite() { best_val_f } else { 0.0 },
    })
}

/// Grid search of the NMS probability threshold over 0.30..=0.90 (step
/// 0.05), maximizing validation F (lowest threshold wins ties).
fn tune_threshold(
    model: &Model<f32>,
    val_set: &[(GrayImage, PoreSet)],
    cfg: &FcnConfig,
) -> Result<f64, FcnError> {
    let mut best = (f64::NEG_INFINITY, cfg.prob_threshold);
    for i in 0..=12 {
        let t = 0.30 + 0.05 * i as f64;
        let probe = FcnConfig { prob_threshold: t, ..cfg.clone() };
        let f = validation_f(model, val_set, &probe)?;
        if f > best.0 {
            best = (f, t);
        }
    }
    Ok(best.1)
}
