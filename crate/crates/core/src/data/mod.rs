//! Dataset ingestion and preprocessing.
//!
//! The pipeline is `ingest_csv -> fill_gaps (optional) -> standardize ->
//! make_windows`. Scaler statistics come from the rows covered by training
//! windows only, and every split is chronological.

mod gaps;
mod ingest;
mod pipeline;
mod scaler;
mod schema;
mod windows;

pub use gaps::{fill_gaps, GapSummary};
pub use ingest::{ingest_csv, parse_timestamp, RawSeries, SeriesColumn};
pub use pipeline::{prepare, PreparedDataset, PreprocessSummary};
pub use scaler::{standardize, ScalerStats};
pub use schema::{ColumnMapping, DatasetSchema, SplitPlan, SplitRule};
pub use windows::{make_windows, WindowedDataset};
