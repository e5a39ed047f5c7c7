//! Sonar automatic target recognition laboratory.
//!
//! The crate covers the whole pipeline on synthetic single-look complex
//! (SLC) chips: generating a chronologically split dataset ([`synth`]),
//! deriving magnitude/phase/PSD representations ([`repr`]), training small
//! multi-path CNNs from scratch ([`nn`], [`trainer`]), comparing them with
//! paired bootstrap AUC ensembles and Wilcoxon signed-rank tests ([`stats`]),
//! and inspecting what they learned ([`latent`]). [`experiment`] wires the
//! stages into the command-line workflow.

pub mod chip;
pub mod error;
pub mod experiment;
pub mod io;
pub mod latent;
pub mod nn;
pub mod plot;
pub mod repr;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use chip::{ComplexChip, RealChip, ReprKind, ReprSet, Representation};
pub use error::{AtrError, Result};
