use serde::Serialize;

use super::gaps::{fill_gaps, GapSummary};
use super::ingest::RawSeries;
use super::scaler::{standardize, ScalerStats};
use super::schema::{DatasetSchema, SplitPlan};
use super::windows::{make_windows, WindowedDataset};
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Counts reported after preprocessing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub dataset: String,
    pub raw_rows: usize,
    pub duplicates_dropped: usize,
    pub gaps: Option<GapSummary>,
    pub clean_rows: usize,
    pub rows_used: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub window: usize,
    pub input_scaler: ScalerStats,
    pub target_scaler: ScalerStats,
}

#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub dataset: WindowedDataset,
    pub summary: PreprocessSummary,
}

fn to_matrix(series: &RawSeries) -> Result<Matrix> {
    let mut m = Matrix::zeros((series.len(), series.columns.len()));
    for (c, col) in series.columns.iter().enumerate() {
        for (r, v) in col.values.iter().enumerate() {
            m[[r, c]] = v.ok_or_else(|| {
                Error::Data(format!(
                    "column {} has a missing value at row {r}; enable fill_gaps in the schema",
                    col.name
                ))
            })?;
        }
    }
    Ok(m)
}

/// Gap handling, head selection, leakage-free standardization and windowing.
/// `scale` shrinks the split for desk-scale runs.
pub fn prepare(series: &RawSeries, schema: &DatasetSchema, scale: f64) -> Result<PreparedDataset> {
    schema.validate()?;
    let (clean, gaps) = if schema.fill_gaps {
        let (s, g) = fill_gaps(series, schema.max_ffill)?;
        (s, Some(g))
    } else {
        (series.clone(), None)
    };
    let SplitPlan {
        rows_used,
        n_train,
        n_test,
    } = schema.split.resolve(clean.len(), schema.window, scale)?;
    let all = to_matrix(&clean)?;
    let head = all.slice(ndarray::s![..rows_used, ..]).to_owned();
    let names: Vec<String> = clean.columns.iter().map(|c| c.name.clone()).collect();
    let (z, scaler) = standardize(&head, &names, n_train + schema.window)?;

    let input_idx = schema
        .inputs
        .iter()
        .map(|n| schema.column_index(n))
        .collect::<Result<Vec<_>>>()?;
    let target_idx = schema
        .targets
        .iter()
        .map(|n| schema.column_index(n))
        .collect::<Result<Vec<_>>>()?;
    let inputs = z.select(ndarray::Axis(1), &input_idx);
    let targets = z.select(ndarray::Axis(1), &target_idx);
    let (x, y) = make_windows(&inputs, &targets, schema.window)?;
    debug_assert_eq!(y.nrows(), n_train + n_test);

    let dataset = WindowedDataset {
        x,
        y,
        n_train,
        window: schema.window,
        input_scaler: scaler.select(&input_idx),
        target_scaler: scaler.select(&target_idx),
    };
    let summary = PreprocessSummary {
        dataset: schema.name.clone(),
        raw_rows: series.len() + series.duplicates_dropped,
        duplicates_dropped: series.duplicates_dropped,
        gaps,
        clean_rows: clean.len(),
        rows_used,
        n_train,
        n_test,
        window: schema.window,
        input_scaler: dataset.input_scaler.clone(),
        target_scaler: dataset.target_scaler.clone(),
    };
    Ok(PreparedDataset { dataset, summary })
}
