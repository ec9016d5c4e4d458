//! Experiment runner around `ddmhe-core`: configuration, Monte Carlo trials
//! and the `ddmhe` subcommands.

pub mod commands;
pub mod config;
pub mod experiment;

/// Process exit code for an error: 2 for a violated assumption, 3 for a
/// numerical degeneracy, 4 for a bound-domain error, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use ddmhe_core::Error;
    let core = err.chain().find_map(|e| e.downcast_ref::<Error>());
    match core {
        Some(Error::Assumption { .. }) => 2,
        Some(Error::Degenerate(_)) => 3,
        Some(Error::Domain(_)) => 4,
        _ => 1,
    }
}
