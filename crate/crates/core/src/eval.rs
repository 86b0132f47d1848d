//! Detection evaluation: correct-detection criteria (bidirectional
//! correspondence and distance-threshold matching), TDR/FDR/F-score
//! arithmetic, per-dataset aggregation, split-protocol templates, and
//! k-fold cross-validation.
//!
//! Conventions: TDR = matched / ground-truth (percent), FDR = unmatched
//! detections / detections (percent), and the F-score is the harmonic mean
//! of TDR and `100 - FDR`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::fcn::{self, FcnConfig, FcnError};
use crate::image::{GrayImage, Point, PoreSet};
use crate::rng::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ground truth is empty (n_gt must be >= 1)")]
    ZeroGroundTruth,
    #[error("image key {0:?} missing from the other side")]
    MissingKey(String),
    #[error("need at least {need} images, have {have}")]
    TooFewImages { have: usize, need: usize },
    #[error("threshold tau must be positive, got {0}")]
    BadTau(f64),
    #[error("protocol {id} needs {need} images in subset {subset}, manifest has {have}")]
    ManifestTooSmall { id: &'static str, subset: &'static str, need: usize, have: usize },
    #[error(transparent)]
    Fcn(#[from] FcnError),
}

/// One-to-one correspondence between detections and ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// `(detection index, ground-truth index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
}

/// Distance used by threshold matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMetric {
    Euclidean,
    Manhattan,
}

impl DistanceMetric {
    fn distance(self, a: &Point, b: &Point) -> f64 {
        match self {
            DistanceMetric::Euclidean => a.distance(b),
            DistanceMetric::Manhattan => a.manhattan(b),
        }
    }
}

/// Correct-detection criterion selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchCriterion {
    /// Mutual nearest neighbors; no distance threshold.
    Bidirectional,
    /// Greedy one-to-one assignment among pairs within `tau`.
    Threshold { metric: DistanceMetric, tau: f64 },
}

/// Index of the nearest point of `points` to `from`, ties broken by the
/// lowest index (points listed earlier win).
fn nearest(from: &Point, points: &[Point]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = from.distance_sq(p);
        match best {
            Some((bd, _)) if d >= bd => {}
            _ => best = Some((d, i)),
        }
    }
    best.map(|(_, i)| i)
}

/// Bidirectional correspondence: detection `d` matches ground truth `g` iff
/// `g` is the nearest ground truth to `d` and `d` is the nearest detection
/// to `g` (mutual nearest neighbors, ties by lowest index).
pub fn match_bidirectional(det: &PoreSet, gt: &PoreSet) -> MatchResult {
    let dp = det.points();
    let gp = gt.points();
    let mut pairs = Vec::new();
    let mut det_matched = vec![false; dp.len()];
    let mut gt_matched = vec![false; gp.len()];
    for (di, d) in dp.iter().enumerate() {
        let Some(gi) = nearest(d, gp) else { continue };
        let Some(back) = nearest(&gp[gi], dp) else { continue };
        if back == di {
            pairs.push((di, gi));
            det_matched[di] = true;
            gt_matched[gi] = true;
        }
    }
    MatchResult {
        pairs,
        unmatched_detections: (0..dp.len()).filter(|&i| !det_matched[i]).collect(),
        unmatched_gt: (0..gp.len()).filter(|&i| !gt_matched[i]).collect(),
    }
}

/// Greedy one-to-one assignment in ascending distance order over all pairs
/// within `tau` (ties by detection index, then ground-truth index).
pub fn match_threshold(
    det: &PoreSet,
    gt: &PoreSet,
    metric: DistanceMetric,
    tau: f64,
) -> Result<MatchResult, EvalError> {
    if !(tau > 0.0) {
        return Err(EvalError::BadTau(tau));
    }
    let dp = det.points();
    let gp = gt.points();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (di, d) in dp.iter().enumerate() {
        for (gi, g) in gp.iter().enumerate() {
            let dist = metric.distance(d, g);
            if dist <= tau {
                candidates.push((dist, di, gi));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut det_matched = vec![false; dp.len()];
    let mut gt_matched = vec![false; gp.len()];
    let mut pairs = Vec::new();
    for &(_, di, gi) in &candidates {
        if !det_matched[di] && !gt_matched[gi] {
            det_matched[di] = true;
            gt_matched[gi] = true;
            pairs.push((di, gi));
        }
    }
    Ok(MatchResult {
        pairs,
        unmatched_detections: (0..dp.len()).filter(|&i| !det_matched[i]).collect(),
        unmatched_gt: (0..gp.len()).filter(|&i| !gt_matched[i]).collect(),
    })
}

/// Applies the selected criterion.
pub fn match_sets(det: &PoreSet, gt: &PoreSet, criterion: MatchCriterion) -> Result<MatchResult, EvalError> {
    match criterion {
        MatchCriterion::Bidirectional => Ok(match_bidirectional(det, gt)),
        MatchCriterion::Threshold { metric, tau } => match_threshold(det, gt, metric, tau),
    }
}

/// TDR, FDR and F-score, all in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub tdr: f64,
    pub fdr: f64,
    pub f_score: f64,
}

/// Metric arithmetic from matched/detected/ground-truth counts:
/// `tdr = 100*matched/n_gt`, `fdr = 100*(n_det-matched)/max(n_det,1)`,
/// `f = 2*tdr*(100-fdr) / (tdr + (100-fdr))` (0 when the denominator is 0).
pub fn metrics_from_counts(matched: usize, n_det: usize, n_gt: usize) -> Result<Metrics, EvalError> {
    if n_gt == 0 {
        return Err(EvalError::ZeroGroundTruth);
    }
    debug_assert!(matched <= n_det && matched <= n_gt);
    let tdr = 100.0 * matched as f64 / n_gt as f64;
    let fdr = 100.0 * (n_det - matched) as f64 / (n_det.max(1)) as f64;
    Ok(Metrics { tdr, fdr, f_score: f_score(tdr, fdr) })
}

pub fn compute_metrics(m: &MatchResult, n_det: usize, n_gt: usize) -> Result<Metrics, EvalError> {
    metrics_from_counts(m.pairs.len(), n_det, n_gt)
}

/// Harmonic mean of TDR and (100 - FDR).
pub fn f_score(tdr: f64, fdr: f64) -> f64 {
    let precision = 100.0 - fdr;
    let denom = tdr + precision;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tdr * precision / denom
    }
}

/// Per-image evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub id: String,
    pub matched: usize,
    pub n_det: usize,
    pub n_gt: usize,
    pub metrics: Metrics,
}

/// Dataset evaluation: per-image metrics plus the micro-aggregate (counts
/// pooled over all images, then the metric arithmetic applied once).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_image: Vec<ImageEval>,
    pub aggregate: Metrics,
    /// Macro average of per-image F-scores, reported alongside the
    /// micro-aggregated headline number.
    pub macro_f: f64,
}

/// Evaluates keyed detections against keyed ground truth. The key sets must
/// agree exactly.
pub fn evaluate_dataset(
    detections: &BTreeMap<String, PoreSet>,
    ground_truth: &BTreeMap<String, PoreSet>,
    criterion: MatchCriterion,
) -> Result<EvalReport, EvalError> {
    for key in detections.keys() {
        if !ground_truth.contains_key(key) {
            return Err(EvalError::MissingKey(key.clone()));
        }
    }
    for key in ground_truth.keys() {
        if !detections.contains_key(key) {
            return Err(EvalError::MissingKey(key.clone()));
        }
    }
    let mut per_image = Vec::new();
    let (mut tot_matched, mut tot_det, mut tot_gt) = (0usize, 0usize, 0usize);
    for (key, gt) in ground_truth {
        let det = &detections[key];
        let m = match_sets(det, gt, criterion)?;
        let matched = m.pairs.len();
        tot_matched += matched;
        tot_det += det.len();
        tot_gt += gt.len();
        per_image.push(ImageEval {
            id: key.clone(),
            matched,
            n_det: det.len(),
            n_gt: gt.len(),
            metrics: metrics_from_counts(matched, det.len(), gt.len())?,
        });
    }
    let aggregate = metrics_from_counts(tot_matched, tot_det, tot_gt)?;
    let macro_f = per_image.iter().map(|e| e.metrics.f_score).sum::<f64>() / per_image.len().max(1) as f64;
    Ok(EvalReport { per_image, aggregate, macro_f })
}

/// A named image with its ground truth, the unit cross-validation works on.
#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub id: String,
    pub image: GrayImage,
    pub pores: PoreSet,
}

/// Cross-validation outcome: one report per fold plus summary statistics of
/// the per-fold micro F-scores.
#[derive(Debug, Clone)]
pub struct CrossvalOutcome {
    pub folds: Vec<EvalReport>,
    pub fold_test_ids: Vec<Vec<String>>,
    pub mean_f: f64,
    /// Population standard deviation over folds.
    pub stddev_f: f64,
}

/// Deterministic fold assignment: entry order is shuffled with the config
/// seed and chunked into `k` nearly equal folds.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xF01D));
    order.shuffle(&mut rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        folds.push(order[at..at + size].to_vec());
        at += size;
    }
    folds
}

/// k-fold cross-validation of the FCN baseline: fold `i` is the test set,
/// the remainder trains (with its first image held out as the early-stopping
/// validation image).
pub fn crossval(
    entries: &[DatasetEntry],
    k: usize,
    cfg: &FcnConfig,
    criterion: MatchCriterion,
) -> Result<CrossvalOutcome, EvalError> {
    if k < 2 || entries.len() < k {
        return Err(EvalError::TooFewImages { have: entries.len(), need: k.max(2) });
    }
    let folds = assign_folds(entries.len(), k, cfg.seed);
    let mut reports = Vec::with_capacity(k);
    let mut fold_test_ids = Vec::with_capacity(k);
    for (i, test_idx) in folds.iter().enumerate() {
        let test: Vec<&DatasetEntry> = test_idx.iter().map(|&j| &entries[j]).collect();
        let rest: Vec<&DatasetEntry> = (0..entries.len())
            .filter(|j| !test_idx.contains(j))
            .map(|j| &entries[j])
            .collect();
        // First remaining image validates early stopping; the rest train.
        let val: Vec<(GrayImage, PoreSet)> =
            vec![(rest[0].image.clone(), rest[0].pores.clone())];
        let train_set: Vec<(GrayImage, PoreSet)> =
            rest[1..].iter().map(|e| (e.image.clone(), e.pores.clone())).collect();
        let fold_cfg = FcnConfig { seed: derive_seed(cfg.seed, 1000 + i as u64), ..cfg.clone() };
        let outcome = fcn::train(&train_set, &val, &fold_cfg)?;
        let model = outcome.checkpoint.clone().into_model()?;
        let mut dets = BTreeMap::new();
        let mut gts = BTreeMap::new();
        for e in &test {
            let pores = fcn::detect(
                &model,
                &e.image,
                outcome.checkpoint.config.prob_threshold,
                outcome.checkpoint.config.nms_radius,
                None,
            )?;
            dets.insert(e.id.clone(), pores);
            gts.insert(e.id.clone(), e.pores.clone());
        }
        fold_test_ids.push(test.iter().map(|e| e.id.clone()).collect());
        reports.push(evaluate_dataset(&dets, &gts, criterion)?);
    }
    let fs: Vec<f64> = reports.iter().map(|r| r.aggregate.f_score).collect();
    let mean_f = fs.iter().sum::<f64>() / fs.len() as f64;
    let var = fs.iter().map(|f| (f - mean_f) * (f - mean_f)).sum::<f64>() / fs.len() as f64;
    Ok(CrossvalOutcome { folds: reports, fold_test_ids, mean_f, stddev_f: libm::sqrt(var) })
}

/// PolyU-HRF subsets referenced by the published protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subset {
    DbI,
    DbII,
}

impl Subset {
    pub fn label(self) -> &'static str {
        match self {
            Subset::DbI => "DBI",
            Subset::DbII => "DBII",
        }
    }
}

/// A size template for one published data-split protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolTemplate {
    pub id: &'static str,
    pub train: Vec<(Subset, usize)>,
    pub validation: Vec<(Subset, usize)>,
    pub test: Vec<(Subset, usize)>,
}

/// A concrete split instantiated from a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    pub id: String,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// The eight published PolyU-HRF split conventions.
pub fn protocol_registry() -> Vec<ProtocolTemplate> {
    use Subset::{DbI, DbII};
    let t = |id, train: &[(Subset, usize)], validation: &[(Subset, usize)], test: &[(Subset, usize)]| ProtocolTemplate {
        id,
        train: train.to_vec(),
        validation: validation.to_vec(),
        test: test.to_vec(),
    };
    vec![
        t("I", &[], &[], &[(DbI, 24)]),
        t("II", &[], &[], &[(DbI, 30)]),
        t("III", &[(DbI, 20)], &[], &[(DbI, 10)]),
        t("IV", &[(DbI, 18)], &[(DbI, 6)], &[(DbI, 6)]),
        t("V", &[(DbI, 24)], &[], &[(DbI, 6)]),
        t("VI", &[(DbI, 15)], &[(DbI, 5)], &[(DbI, 10)]),
        t("VII", &[(DbII, 70)], &[], &[(DbI, 30)]),
        t("VIII", &[(DbII, 90)], &[], &[(DbI, 30), (DbII, 30)]),
    ]
}

impl ProtocolTemplate {
    /// Instantiates against per-subset stem lists, consuming stems in order;
    /// splits are disjoint by construction.
    pub fn instantiate(&self, mut stems: BTreeMap<Subset, Vec<String>>) -> Result<Protocol, EvalError> {
        let mut cursors: BTreeMap<Subset, usize> = BTreeMap::new();
        let mut take = |needs: &[(Subset, usize)], cursors: &mut BTreeMap<Subset, usize>| {
            let mut out = Vec::new();
            for &(subset, count) in needs {
                let pool = stems.entry(subset).or_default();
                let at = *cursors.entry(subset).or_insert(0);
                if at + count > pool.len() {
                    return Err(EvalError::ManifestTooSmall {
                        id: self.id,
                        subset: subset.label(),
                        need: at + count,
                        have: pool.len(),
                    });
                }
                out.extend_from_slice(&pool[at..at + count]);
                cursors.insert(subset, at + count);
            }
            Ok(out)
        };
        let train = take(&self.train, &mut cursors)?;
        let validation = take(&self.validation, &mut cursors)?;
        let test = take(&self.test, &mut cursors)?;
        Ok(Protocol { id: String::from(self.id), train, validation, test })
    }
}
