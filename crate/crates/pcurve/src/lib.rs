//! File formats, SVG plots, run manifests and the `pcurve` command line on
//! top of [`pcurve_core`].

use std::fmt;
use std::path::Path;

use pcurve_core::optimizer::{assemble, run_restart, RestartOutcome};
use pcurve_core::{DiscreteMeasure, Error, FitConfig, FitResult};

pub mod cli;
pub mod formats;
pub mod manifest;
pub mod svg;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const REFUSED: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

/// An error with the exit code it maps to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: exit::USAGE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExceeded { .. } => exit::REFUSED,
            Error::Numeric { .. } => exit::NUMERIC,
            _ => exit::USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

pub fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

/// [`pcurve_core::fit`] with restarts spread over up to `threads` threads.
/// The result does not depend on the thread count.
pub fn fit_parallel(mu: &DiscreteMeasure, cfg: &FitConfig, threads: usize) -> Result<FitResult, Error> {
    let r = cfg.resolve(mu)?;
    let starts = cfg.restarts + 1;
    let threads = threads.clamp(1, starts);
    let outcomes: Vec<Result<RestartOutcome, Error>> = if threads == 1 {
        (0..starts).map(|k| run_restart(mu, cfg, k)).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    scope.spawn(move || {
                        (t..starts).step_by(threads).map(|k| run_restart(mu, cfg, k)).collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("restart thread panicked")).collect()
        })
    };
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>, _>>()?;
    assemble(mu, cfg, outcomes, &r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pcurve_core::{fit, synth_measure, SynthFamily, SynthParams};

    #[test]
    fn parallel_restarts_match_sequential() {
        let mu = synth_measure(SynthFamily::GaussianClusters, 50, 8, &SynthParams::default()).unwrap();
        let cfg = FitConfig { restarts: 5, seed: 3, ..FitConfig::new(2.0, 0.05) };
        let seq = fit(&mu, &cfg).unwrap();
        for threads in [1, 2, 4, 16] {
            assert_eq!(fit_parallel(&mu, &cfg, threads).unwrap(), seq);
        }
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::BudgetExceeded { required: 10, budget: 1 }).code, exit::REFUSED);
        assert_eq!(CliError::from(Error::Numeric { iteration: 1, detail: String::new() }).code, exit::NUMERIC);
        assert_eq!(CliError::from(Error::Config("p".into())).code, exit::USAGE);
    }
}
