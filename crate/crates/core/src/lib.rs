//! Flow renormalization for periodically driven quantum systems.
//!
//! A drive `H(t) = H0 + H1 e^{i Omega t} + h.c.` is transformed by a continuous
//! family of unitaries, parameterized by a flow time `lambda`, that integrates
//! the oscillating part `H1` away while preserving the stroboscopic spectrum.
//! The crate integrates that flow for spin chains and a driven oscillator,
//! measures how close the renormalized static part comes to conserving total
//! `Sx`, and checks the results against closed-form references and exact
//! real-time evolution.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod dynamics;
pub mod error;
pub mod flow;
pub mod hilbert;
pub mod io;
pub mod opkernel;
mod optimize;
pub mod oscillator;
pub mod par;
pub mod scan;

pub use error::{Error, Result};
pub use opkernel::{c64, OperatorMatrix, RealOperator, Scalar};
