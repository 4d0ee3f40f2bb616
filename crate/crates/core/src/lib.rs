//! Two-user uplink rate-splitting with HARQ: channel model, closed-form
//! next-round error probabilities, power-split selection, a multi-round
//! simulator for RSMA / NOMA / FDMA, and sweep tooling.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod experiment;
pub mod fading;
pub mod harq;
pub mod optimizer;
pub mod quadrature;
pub mod rsma;

pub use analytic::{ErrorPair, HarqKind};
pub use error::{Error, Result};
pub use fading::{ChannelDraw, UserProfile};
