//! Photon-counting bounds for interferometric scattering with an optional
//! tunable reference arm.
//!
//! A detector sees the coherent state `|α_r + α_s + α_i⟩`. The crate computes
//! the quantum and classical Fisher information for the particle mass and
//! scattering phase, finds reference settings that saturate the quantum bound,
//! and checks the bounds by Monte Carlo.

// `!(x > 0.0)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod field;
pub mod fisher;
pub mod photonstats;
pub mod snr;
pub mod spectrum;
pub mod tuner;

pub use error::{Error, Result};
pub use field::{ComplexAmplitude, EstimationTarget, FieldConfig, ParticleModel, ReferenceArm, Setup};
pub use fisher::{fisher_report, FisherReport};
pub use tuner::{saturating_reference_set, SaturationSolution};
