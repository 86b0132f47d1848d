use poredet_core::eval::{evaluate_dataset, MatchCriterion};
use poredet_core::fcn::{self, FcnConfig};
use poredet_core::filters::{filter_detect, FilterDetectParams, PoreFilter};
use poredet_core::handcrafted::{dpf_detect, skeleton_detect, DpfParams, SkeletonParams};
use poredet_core::image::{GrayImage, PoreSet};
use poredet_core::rng::derive_seed;
use poredet_core::synth::{synthesize_fingerprint, SyntheticParams};
use std::collections::BTreeMap;
use std::time::Instant;

fn gen_set() -> Vec<(GrayImage, PoreSet)> {
    (0..20)
        .map(|i| {
            let p = SyntheticParams {
                width: 320,
                height: 240,
                seed: derive_seed(42, i),
                ..SyntheticParams::for_dpi(1200)
            };
            synthesize_fingerprint(&p).unwrap()
        })
        .collect()
}

#[test]
fn calibrate_end_to_end() {
    let t0 = Instant::now();
    let set = gen_set();
    eprintln!("gen 20 images: {:.1}s, pores/image ~{}", t0.elapsed().as_secs_f64(), set[0].1.len());

    let train_set = &set[0..14];
    let val_set = &set[14..16];
    let test_set = &set[16..20];

    // Handcrafted detectors on the test images first (fast signal).
    for (name, dets) in [
        ("dpf", test_set.iter().map(|(img, _)| dpf_detect(img, &DpfParams::for_dpi(1200))).collect::<Vec<_>>()),
        ("filter-log", test_set.iter().map(|(img, _)| filter_detect(img, &FilterDetectParams::for_dpi(1200, PoreFilter::Log)).unwrap()).collect::<Vec<_>>()),
        ("skeleton", test_set.iter().map(|(img, _)| skeleton_detect(img, &SkeletonParams::for_dpi(1200)).unwrap()).collect::<Vec<_>>()),
    ] {
        let mut dmap = BTreeMap::new();
        let mut gmap = BTreeMap::new();
        for (i, ((_, gt), det)) in test_set.iter().zip(dets).enumerate() {
            dmap.insert(format!("img{i}"), det);
            gmap.insert(format!("img{i}"), gt.clone());
        }
        let r = evaluate_dataset(&dmap, &gmap, MatchCriterion::Bidirectional).unwrap();
        eprintln!("{name}: F={:.2} TDR={:.2} FDR={:.2} (dets img0: {})", r.aggregate.f_score, r.aggregate.tdr, r.aggregate.fdr, dmap["img0"].len());
    }

    // FCN suggested config, trimmed epochs for calibration.
    let cfg = FcnConfig { seed: derive_seed(1, 0), max_epochs: 4, ..FcnConfig::default() };
    let t1 = Instant::now();
    let out = fcn::train(&train_set.to_vec(), &val_set.to_vec(), &cfg).unwrap();
    eprintln!("train 4 epochs: {:.1}s  log: {:?}", t1.elapsed().as_secs_f64(), out.log);

    let model = out.checkpoint.clone().into_model().unwrap();
    let mut dmap = BTreeMap::new();
    let mut gmap = BTreeMap::new();
    let t2 = Instant::now();
    for (i, (img, gt)) in test_set.iter().enumerate() {
        let det = fcn::detect(&model, img, cfg.prob_threshold, cfg.nms_radius, None).unwrap();
        dmap.insert(format!("img{i}"), det);
        gmap.insert(format!("img{i}"), gt.clone());
    }
    let r = evaluate_dataset(&dmap, &gmap, MatchCriterion::Bidirectional).unwrap();
    eprintln!("fcn: F={:.2} TDR={:.2} FDR={:.2}  detect 4 imgs {:.1}s", r.aggregate.f_score, r.aggregate.tdr, r.aggregate.fdr, t2.elapsed().as_secs_f64());
}
