//! Core algorithms for fingerprint pore detection.
//!
//! Everything in this crate operates on in-memory buffers and is `no_std`
//! compatible (`alloc` required); file formats, image codecs and the CLI
//! live in the companion `poredet` crate. The pipeline stages are:
//!
//! 1. **image** – raster types, adaptive binarization, thinning, patches.
//! 2. **filters** – Gabor/Gaussian/DoG/LoG/Mexican-Hat kernels, orientation
//!    estimation, convolution, and the filtering-based detector.
//! 3. **handcrafted** – skeleton-tracing and transition-counting detectors,
//!    ridge-mask post-filter.
//! 4. **nn** – dense tensor engine (valid 3x3 conv, stride-1 pooling,
//!    activations, losses, Adam) with reverse-mode gradients per layer.
//! 5. **fcn** – patch-classifier model builder, label maps, training loop,
//!    dense full-image inference and NMS.
//! 6. **eval** – point-set matching, TDR/FDR/F-score, split protocols,
//!    k-fold cross-validation.
//! 7. **synth** – seeded synthetic fingerprint generator with exact pore
//!    ground truth.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod annot;
pub mod eval;
pub mod fcn;
pub mod filters;
pub mod handcrafted;
pub mod image;
pub mod nn;
pub mod rng;
pub mod synth;
