//! Regression metrics in original units.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::ScalerStats;
use crate::tensor::Matrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableMetrics {
    pub name: String,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Missing when the variable is constant over the evaluated samples.
    pub r2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    /// Squared and absolute errors pooled uniformly over every variable and
    /// sample.
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    /// Unweighted mean of the defined per-variable R² values.
    pub r2_mean: Option<f64>,
    /// `1 - ΣSSE / ΣSST` over all variables.
    pub r2_pooled: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_variable: Vec<VariableMetrics>,
    pub aggregate: AggregateMetrics,
    pub n_samples: usize,
}

/// Metrics of `pred` against `actual`, both already in original units.
pub fn evaluate_raw(pred: &Matrix, actual: &Matrix, names: &[String]) -> Result<MetricsReport> {
    if pred.dim() != actual.dim() {
        return Err(Error::Shape(format!(
            "predictions {:?} vs actuals {:?}",
            pred.dim(),
            actual.dim()
        )));
    }
    let (n, vars) = actual.dim();
    if names.len() != vars {
        return Err(Error::Shape(format!("{} names for {vars} variables", names.len())));
    }
    if n == 0 {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    let mut per_variable = Vec::with_capacity(vars);
    let (mut sse_all, mut sae_all, mut sst_all) = (0.0, 0.0, 0.0);
    for (j, name) in names.iter().enumerate() {
        let p = pred.column(j);
        let a = actual.column(j);
        let mean = a.sum() / n as f64;
        let (mut sse, mut sae, mut sst) = (0.0, 0.0, 0.0);
        for (&pi, &ai) in p.iter().zip(a.iter()) {
            let e = pi - ai;
            sse += e * e;
            sae += e.abs();
            sst += (ai - mean) * (ai - mean);
        }
        sse_all += sse;
        sae_all += sae;
        sst_all += sst;
        let mse = sse / n as f64;
        per_variable.push(VariableMetrics {
            name: name.clone(),
            mse,
            mae: sae / n as f64,
            rmse: mse.sqrt(),
            r2: (sst > 0.0).then(|| 1.0 - sse / sst),
        });
    }
    let total = (n * vars) as f64;
    let defined: Vec<f64> = per_variable.iter().filter_map(|v| v.r2).collect();
    let mse = sse_all / total;
    Ok(MetricsReport {
        aggregate: AggregateMetrics {
            mse,
            mae: sae_all / total,
            rmse: mse.sqrt(),
            r2_mean: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
            r2_pooled: (sst_all > 0.0).then(|| 1.0 - sse_all / sst_all),
        },
        per_variable,
        n_samples: n,
    })
}

/// Inverse-standardizes both inputs with `scaler`, then evaluates.
pub fn evaluate(pred_std: &Matrix, actual_std: &Matrix, scaler: &ScalerStats) -> Result<MetricsReport> {
    evaluate_raw(&scaler.inverse(pred_std)?, &scaler.inverse(actual_std)?, &scaler.names)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per variable plus an `aggregate` row; missing R² is empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,mse,mae,rmse,r2\n");
        for v in &self.per_variable {
            let _ = writeln!(out, "{},{},{},{},{}", v.name, v.mse, v.mae, v.rmse, fmt_opt(v.r2));
        }
        let a = &self.aggregate;
        let _ = writeln!(out, "aggregate,{},{},{},{}", a.mse, a.mae, a.rmse, fmt_opt(a.r2_mean));
        out
    }

    pub fn save(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        std::fs::write(json_path, self.to_json()?).map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))
    }

    pub fn variable(&self, name: &str) -> Option<&VariableMetrics> {
        self.per_variable.iter().find(|v| v.name == name)
    }
}
