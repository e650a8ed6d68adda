//! Configuration, dataset files, run orchestration and report tables for the `osp` binary.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::{BackboneConfig, DatasetSource, Overrides, RunConfig};
pub use error::{CliError, CliResult, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_NUMERIC, EXIT_OK};
pub use io::{dataset_to_csv, ingest_csv, load_model, parse_csv, ModelFile, RunWriter};
pub use pipeline::{load_dataset, run_pipeline, RunSummary};
pub use report::MetricsRecord;
