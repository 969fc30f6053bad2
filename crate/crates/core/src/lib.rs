//! Products of i.i.d. random matrices: projective walks, transfer-operator
//! spectra of the norm cocycle, and Monte Carlo checks of the limit theorems
//! for matrix coefficients `log|⟨f, G_n v⟩|`.
//!
//! Layers, bottom up: [`linalg`] and [`ensemble`] define the objects,
//! [`walk`] simulates them, [`spectral`] computes `κ(s)`, `Λ` and the
//! Cramér series on a grid of the projective line, [`lab`] compares the two,
//! and [`config`], [`manifest`] and [`cli`] tie runs to files.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod lab;
pub mod linalg;
pub mod manifest;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
