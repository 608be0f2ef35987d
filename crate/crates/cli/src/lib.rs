//! Experiment runner: configuration files, the six subcommands, and their
//! output files.

pub mod commands;
pub mod config;
pub mod output;
pub mod table;

use polymerlab_core::fredholm::FredholmError;
use polymerlab_core::polymer::PolymerError;
use polymerlab_core::weights::WeightError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_CHECK: i32 = 4;

fn weight_code(e: &WeightError) -> i32 {
    match e {
        WeightError::Special(_) => EXIT_OTHER,
        _ => EXIT_CONFIG,
    }
}

fn fredholm_code(e: &FredholmError) -> i32 {
    match e {
        FredholmError::InvalidParameter(_) | FredholmError::SmallN(_) => EXIT_CONFIG,
        FredholmError::NonConvergence { .. }
        | FredholmError::ImaginaryPart { .. }
        | FredholmError::ContourCollision { .. }
        | FredholmError::NonFiniteKernel(_) => EXIT_CONVERGENCE,
        FredholmError::Special(_) => EXIT_OTHER,
    }
}

/// Process exit code for an error, from the first recognised cause.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<config::ConfigError>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<FredholmError>() {
            return fredholm_code(e);
        }
        if let Some(e) = cause.downcast_ref::<WeightError>() {
            return weight_code(e);
        }
        if let Some(e) = cause.downcast_ref::<PolymerError>() {
            return match e {
                PolymerError::Weight(w) => weight_code(w),
                PolymerError::Special(_) => EXIT_OTHER,
                _ => EXIT_CONFIG,
            };
        }
    }
    EXIT_OTHER
}
