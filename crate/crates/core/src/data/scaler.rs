use ndarray::{Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::tensor::Matrix;
use crate::{Error, Result};

/// Per-column mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerStats {
    pub fn fit(x: &Matrix, names: &[String]) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::Shape(format!("{} names for {} columns", names.len(), x.ncols())));
        }
        if x.nrows() == 0 {
            return Err(Error::Data("cannot fit a scaler on zero rows".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0);
        for (name, &s) in names.iter().zip(&std) {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Data(format!("column {name} has zero variance on training rows")));
            }
        }
        Ok(ScalerStats {
            names: names.to_vec(),
            mean: mean.to_vec(),
            std: std.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.len() {
            return Err(Error::Shape(format!("scaler has {} columns, data {}", self.len(), x.ncols())));
        }
        Ok(())
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            Zip::from(&mut row)
                .and(&self.mean)
                .and(&self.std)
                .for_each(|v, m, s| *v = (*v - m) / s);
        }
        Ok(out)
    }

    pub fn inverse(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            Zip::from(&mut row)
                .and(&self.mean)
                .and(&self.std)
                .for_each(|v, m, s| *v = *v * s + m);
        }
        Ok(out)
    }

    /// Statistics of a subset of columns, in the given order.
    pub fn select(&self, idx: &[usize]) -> ScalerStats {
        ScalerStats {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            mean: idx.iter().map(|&i| self.mean[i]).collect(),
            std: idx.iter().map(|&i| self.std[i]).collect(),
        }
    }
}

/// Fits on rows `[0, boundary)` and standardizes every row.
pub fn standardize(x: &Matrix, names: &[String], boundary: usize) -> Result<(Matrix, ScalerStats)> {
    if boundary == 0 || boundary > x.nrows() {
        return Err(Error::Data(format!(
            "train boundary {boundary} outside series of {} rows",
            x.nrows()
        )));
    }
    let stats = ScalerStats::fit(&x.slice(ndarray::s![..boundary, ..]).to_owned(), names)?;
    Ok((stats.transform(x)?, stats))
}
