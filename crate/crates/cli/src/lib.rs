//! Library side of the `moka` command-line tool.
//!
//! Every command writes to a caller-supplied writer and returns a
//! [`CliError`] whose [`exit_code`](CliError::exit_code) follows a fixed
//! contract: 0 success, 1 numerical or verification failure, 2 usage or
//! config error.

pub mod bench;
pub mod config;
pub mod count;
pub mod error;
pub mod metrics;
pub mod train;
pub mod verify;

pub use error::{CliError, ConfigError};
