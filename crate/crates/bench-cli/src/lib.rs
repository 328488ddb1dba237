//! Experiment harness for lampinn: configuration, resumable pipeline stages,
//! result export and plot data.

pub mod config;
pub mod export;
pub mod pipeline;
pub mod plotdata;
pub mod records;
pub mod store;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use pipeline::{Pipeline, Stage};

/// Environment variable that relocates the output root.
pub const OUT_ROOT_ENV: &str = "LAMPINN_OUT_ROOT";

/// Places `out_dir` under `root`, keeping relative paths intact and only the
/// final component of absolute ones.
pub fn rebase_out_dir(out_dir: &Path, root: &Path) -> PathBuf {
    if out_dir.is_absolute() {
        root.join(out_dir.file_name().unwrap_or_default())
    } else {
        root.join(out_dir)
    }
}
