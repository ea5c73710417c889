use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::Task;

/// Environment variable naming the directory that holds the datasets.
pub const DATA_DIR_ENV: &str = "NPGNN_DATA_DIR";

/// Per-dataset defaults for the benchmark experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetPreset {
    pub name: &'static str,
    /// Training iterations used for every task on this dataset.
    pub iterations: usize,
    /// Dense `n x n` reconstruction makes runs take hours on a CPU.
    pub long_running: bool,
    /// Whether few-shot experiments are offered for this dataset.
    pub fewshot: bool,
}

pub const PRESETS: &[DatasetPreset] = &[
    DatasetPreset {
        name: "cora",
        iterations: 500,
        long_running: false,
        fewshot: true,
    },
    DatasetPreset {
        name: "citeseer",
        iterations: 500,
        long_running: false,
        fewshot: true,
    },
    DatasetPreset {
        name: "pubmed",
        iterations: 4000,
        long_running: true,
        fewshot: false,
    },
];

/// Looks up a preset by case-insensitive name.
pub fn preset(name: &str) -> Option<&'static DatasetPreset> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

impl DatasetPreset {
    /// Rejects task / dataset combinations the presets exclude.
    pub fn check_task(&self, task: Task) -> Result<()> {
        if task == Task::FewShot && !self.fewshot {
            return Err(Error::input(format!(
                "few-shot experiments are not offered for {}",
                self.name
            )));
        }
        Ok(())
    }
}

/// Content and cites paths of dataset `name` under `dir`. Both
/// `dir/<name>/<name>.content` and `dir/<name>.content` are accepted, the
/// nested layout first.
pub fn locate_dataset(dir: &Path, name: &str) -> Result<(PathBuf, PathBuf)> {
    let candidates = [dir.join(name), dir.to_path_buf()];
    for base in candidates {
        let content = base.join(format!("{name}.content"));
        let cites = base.join(format!("{name}.cites"));
        if content.is_file() && cites.is_file() {
            return Ok((content, cites));
        }
    }
    Err(Error::input(format!(
        "no {name}.content / {name}.cites pair in {} or {}",
        dir.join(name).display(),
        dir.display()
    )))
}
