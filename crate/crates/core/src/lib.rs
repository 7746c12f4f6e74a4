//! Schrödinger bridges on SO(2) and SO(3).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridge;
pub mod config;
pub mod error;
pub mod group;
pub mod heat;
pub mod hilbert;
pub mod plot;
pub mod runner;
pub mod sde;
pub mod sinkhorn;
pub mod spectral;
pub mod validation;

pub use error::{Error, Result};
