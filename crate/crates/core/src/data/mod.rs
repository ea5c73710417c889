//! Citation-network loading, synthetic graphs and persisted artifacts.

mod loader;
mod persist;
mod presets;
mod sbm;

pub use loader::{load_content_cites, row_normalize, ContentCitesDataset, LoadAudit};
pub use persist::{
    load_checkpoint, read_config, read_result, save_checkpoint, write_config, write_history,
    write_result, Checkpoint, ExperimentResult, NamedBlock,
};
pub use presets::{locate_dataset, preset, DatasetPreset, DATA_DIR_ENV, PRESETS};
pub use sbm::{generate_sbm, sbm_blocks};
