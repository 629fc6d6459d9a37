use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Maps a logical column name to the CSV header it is read from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    pub name: String,
    pub header: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitRule {
    /// The first `train` windows train, the next `test` windows test; only
    /// the head of the series is used.
    Fixed { train: usize, test: usize },
    /// Chronological split of all windows at `train_fraction`.
    Fraction { train_fraction: f64 },
}

/// Resolved split: how many head rows are used and how the resulting windows
/// divide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub rows_used: usize,
    pub n_train: usize,
    pub n_test: usize,
}

impl SplitRule {
    /// `scale` in `(0, 1]` shrinks the split for desk-scale runs.
    pub fn resolve(&self, n_rows: usize, window: usize, scale: f64) -> Result<SplitPlan> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Config(format!("device scale must lie in (0, 1], got {scale}")));
        }
        if n_rows <= window {
            return Err(Error::Data(format!(
                "series of {n_rows} rows is shorter than window {window} + 1"
            )));
        }
        let (n_train, n_test) = match *self {
            SplitRule::Fixed { train, test } => {
                let train = ((train as f64) * scale).round() as usize;
                let test = ((test as f64) * scale).round() as usize;
                if train + test + window > n_rows {
                    return Err(Error::Data(format!(
                        "{train} train + {test} test windows need {} rows, series has {n_rows}",
                        train + test + window
                    )));
                }
                (train, test)
            }
            SplitRule::Fraction { train_fraction } => {
                if !(train_fraction > 0.0 && train_fraction < 1.0) {
                    return Err(Error::Config(format!(
                        "train_fraction must lie in (0, 1), got {train_fraction}"
                    )));
                }
                let n = (((n_rows - window) as f64) * scale).floor() as usize;
                let train = (n as f64 * train_fraction).floor() as usize;
                (train, n - train)
            }
        };
        if n_train == 0 || n_test == 0 {
            return Err(Error::Data("split leaves no training or no test windows".into()));
        }
        Ok(SplitPlan {
            rows_used: n_train + n_test + window,
            n_train,
            n_test,
        })
    }
}

fn default_window() -> usize {
    12
}

fn default_max_ffill() -> usize {
    3
}

/// Describes how a CSV file becomes a windowed dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub name: String,
    /// Header of the time column; rows are indexed by position when absent.
    #[serde(default)]
    pub timestamp_column: Option<String>,
    /// Lines preceding the header row.
    #[serde(default)]
    pub skip_rows: usize,
    pub columns: Vec<ColumnMapping>,
    pub inputs: Vec<String>,
    pub targets: Vec<String>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub fill_gaps: bool,
    #[serde(default = "default_max_ffill")]
    pub max_ffill: usize,
    pub split: SplitRule,
}

impl DatasetSchema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let schema: DatasetSchema =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be positive".into()));
        }
        if self.inputs.is_empty() || self.targets.is_empty() {
            return Err(Error::Config("schema needs at least one input and one target".into()));
        }
        for name in self.inputs.iter().chain(&self.targets) {
            self.column_index(name)?;
        }
        for (i, c) in self.columns.iter().enumerate() {
            if self.columns[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Config(format!("duplicate column name {}", c.name)));
            }
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("{name} is not a mapped column")))
    }

    fn mapping(pairs: &[(&str, &str)]) -> Vec<ColumnMapping> {
        pairs
            .iter()
            .map(|(name, header)| ColumnMapping {
                name: name.to_string(),
                header: header.to_string(),
            })
            .collect()
    }

    /// Hourly weather history: four variables in, the same four out.
    pub fn weather() -> Self {
        let names = ["temperature", "humidity", "wind_speed", "pressure"];
        DatasetSchema {
            name: "weather".into(),
            timestamp_column: Some("Formatted Date".into()),
            skip_rows: 0,
            columns: Self::mapping(&[
                ("temperature", "Temperature (C)"),
                ("humidity", "Humidity"),
                ("wind_speed", "Wind Speed (km/h)"),
                ("pressure", "Pressure (millibars)"),
            ]),
            inputs: names.iter().map(|s| s.to_string()).collect(),
            targets: names.iter().map(|s| s.to_string()).collect(),
            window: 12,
            fill_gaps: false,
            max_ffill: 3,
            split: SplitRule::Fixed {
                train: 10_000,
                test: 2_000,
            },
        }
    }

    /// Daily Bangkok air quality: PM10, O3, NO2 in, next-day PM2.5 out.
    pub fn air_quality() -> Self {
        DatasetSchema {
            name: "air_quality".into(),
            timestamp_column: Some("date".into()),
            skip_rows: 0,
            columns: Self::mapping(&[("pm25", "pm25"), ("pm10", "pm10"), ("o3", "o3"), ("no2", "no2")]),
            inputs: vec!["pm10".into(), "o3".into(), "no2".into()],
            targets: vec!["pm25".into()],
            window: 12,
            fill_gaps: true,
            max_ffill: 3,
            split: SplitRule::Fraction { train_fraction: 0.8 },
        }
    }

    /// Hourly wind speed at 100 m, univariate.
    pub fn wind() -> Self {
        DatasetSchema {
            name: "wind".into(),
            timestamp_column: Some("time".into()),
            skip_rows: 0,
            columns: Self::mapping(&[("wind_speed", "wind_speed_100m (km/h)")]),
            inputs: vec!["wind_speed".into()],
            targets: vec!["wind_speed".into()],
            window: 12,
            fill_gaps: false,
            max_ffill: 3,
            split: SplitRule::Fraction { train_fraction: 0.8 },
        }
    }
}
