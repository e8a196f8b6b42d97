//! Event-study toolkit: dummy-variable OLS and SUR abnormal returns,
//! cross-correlation adjusted test statistics, CAR determinant regressions
//! and a Monte Carlo harness for the size and power of the tests.

pub mod benchmark;
pub mod data;
pub mod error;
pub mod fixture;
pub mod format;
pub mod linalg;
pub mod panel;
pub mod pipeline;
pub mod sim;
pub mod stats;
pub mod sur;
pub mod window;

pub use error::{Error, Result};
