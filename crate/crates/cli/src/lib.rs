//! Experiment orchestration for the georeid toolkit: configuration, the
//! cross-validated run, saliency audit, report files and their verification.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod report;
pub mod verify;

pub use config::{Arm, ExperimentConfig};
pub use error::{RunError, StageError};
pub use experiment::{run_experiment, Summary};
pub use verify::verify_report;

/// Run `f` on a rayon pool of `jobs` workers (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool starts").install(f)
}
