//! File formats, faithfulness evaluation and the `oplrp` command line over
//! [`oplrp_core`].

pub mod error;
pub mod faithfulness;
pub mod io;
pub mod selftest;

pub use error::{CliError, CliResult};
pub use faithfulness::{evaluate, input_relevance, EvalConfig, EvalReport};
pub use selftest::{oracle_suite, SuiteReport};
