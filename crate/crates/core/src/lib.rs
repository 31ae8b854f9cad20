//! Path-space measures, transfer operators and infinite-product diagnostics
//! for wavelet filters.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod filter_bank;
pub mod gallery;
pub mod ifs_core;
pub mod numeric;
pub mod path_measure;
pub mod scaling_engine;
pub mod transfer_operator;

pub use error::{Result, WaveError};
pub use filter_bank::FilterSpec;
pub use ifs_core::{DigitWord, PathSystem};
pub use path_measure::{MeasureValue, TruncationPolicy};
