//! Link-level simulation toolkit for complex quadrature spatial modulation
//! (CQSM) and the SM, GSM and QSM baselines.

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod constellation;
pub mod detector;
pub mod error;
pub mod modem;
pub mod montecarlo;

pub use error::{Error, Result};
