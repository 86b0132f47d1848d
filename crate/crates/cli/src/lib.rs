//! File formats, dataset tooling and the command-line driver around
//! `poredet-core`.
