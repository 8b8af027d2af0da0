//! Generalized zero-shot learning with a multi-modal Monte Carlo dropout
//! ensemble.
//!
//! Two modalities score every test sample:
//!
//! * [`semantic`]: a linear regressor from visual features to class
//!   attributes, classified by nearest prototype and averaged over `T`
//!   dropout passes (vote fractions);
//! * [`visual`]: a softmax classifier trained on real seen-class features
//!   plus hallucinated unseen-class features, averaged over `T` dropout
//!   passes.
//!
//! [`ensemble`] fuses the two by agreement voting with weight α and rebalances
//! seen against unseen classes with weight β. [`calibration`] picks (α, β) by
//! maximizing the seen/unseen harmonic mean on a pseudo-unseen split of the
//! training classes, and [`metrics`] implements the evaluation protocol.

pub mod calibration;
pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod linear;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod scores;
pub mod semantic;
pub mod textio;
pub mod train;
pub mod visual;

pub use error::{Error, Result};
