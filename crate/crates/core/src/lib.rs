//! Adversarial denoising of distantly supervised relation data.
//!
//! A generator learns which sentences of a noisy positive set are genuine by
//! competing against a discriminator that is reset every epoch; the trained
//! generator then filters the dataset and the effect is measured on a
//! downstream classifier.

pub mod adversary;
pub mod cleaner;
pub mod commands;
pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pretrain;

pub use error::{DsganError, Result};
