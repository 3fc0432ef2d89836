//! Joint in-modal and cross-modal contrastive training.
//!
//! Two dropout-masked forward passes give two representations per modality.
//! Two in-modal and four cross-modal InfoNCE terms are summed into a
//! contrastive objective and blended with a supervised cross-entropy head.
//! Representation quality is audited with alignment and uniformity.

pub mod data;
pub mod encoder;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod trainer;

pub use error::{Error, Result};
