//! Run configuration, the search driver behind `bnas search`, stand-alone training
//! and evaluation of a code, and the CSV reports.

mod config;
mod report;
mod run;

pub use config::{DatasetConfig, DatasetFormat, RunConfig};
pub use report::{
    channel_rows, cost_rows, generation_rows, to_csv, write_reports, ChannelRow, CostRow, GenerationRow, CHANNELS_CSV,
    COSTS_CSV, GENERATIONS_CSV,
};
pub use run::{
    evaluate_checkpoint, run_search, train_code, Manifest, SearchSummary, TrainSummary, BEST_CODE_FILE, LOG_FILE,
    MANIFEST_FILE, SUPERNET_FILE,
};
