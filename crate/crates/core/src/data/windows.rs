use std::path::Path;

use ndarray::{s, Array1, Array2, Array3, Ix2, Ix3};

use super::scaler::ScalerStats;
use crate::checkpoint::TensorArchive;
use crate::tensor::{Matrix, Sequence};
use crate::{Error, Result};

/// Supervised windows over a standardized series, split chronologically.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    /// `[n, window, features]`
    pub x: Sequence,
    /// `[n, targets]`
    pub y: Matrix,
    pub n_train: usize,
    pub window: usize,
    pub input_scaler: ScalerStats,
    pub target_scaler: ScalerStats,
}

/// Window `i` covers rows `[i, i + window)` of `inputs` and its target is row
/// `i + window` of `targets`.
pub fn make_windows(inputs: &Matrix, targets: &Matrix, window: usize) -> Result<(Sequence, Matrix)> {
    let rows = inputs.nrows();
    if targets.nrows() != rows {
        return Err(Error::Shape(format!("{rows} input rows but {} target rows", targets.nrows())));
    }
    if window == 0 || rows <= window {
        return Err(Error::Data(format!("{rows} rows cannot hold a window of {window} plus target")));
    }
    let n = rows - window;
    let mut x = Array3::zeros((n, window, inputs.ncols()));
    for i in 0..n {
        x.slice_mut(s![i, .., ..]).assign(&inputs.slice(s![i..i + window, ..]));
    }
    let y = targets.slice(s![window.., ..]).to_owned();
    Ok((x, y))
}

fn scaler_vectors(s: &ScalerStats) -> (Array1<f64>, Array1<f64>) {
    (Array1::from(s.mean.clone()), Array1::from(s.std.clone()))
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_test(&self) -> usize {
        self.len() - self.n_train
    }

    pub fn n_features(&self) -> usize {
        self.x.dim().2
    }

    pub fn n_targets(&self) -> usize {
        self.y.ncols()
    }

    pub fn train(&self) -> (Sequence, Matrix) {
        (
            self.x.slice(s![..self.n_train, .., ..]).to_owned(),
            self.y.slice(s![..self.n_train, ..]).to_owned(),
        )
    }

    pub fn test(&self) -> (Sequence, Matrix) {
        (
            self.x.slice(s![self.n_train.., .., ..]).to_owned(),
            self.y.slice(s![self.n_train.., ..]).to_owned(),
        )
    }

    pub fn to_archive(&self) -> Result<TensorArchive> {
        let mut a = TensorArchive::new();
        a.meta.insert("kind".into(), "windowed_dataset".into());
        a.meta.insert("n_train".into(), self.n_train.to_string());
        a.meta.insert("window".into(), self.window.to_string());
        a.meta.insert("input_names".into(), serde_json::to_string(&self.input_scaler.names)?);
        a.meta.insert("target_names".into(), serde_json::to_string(&self.target_scaler.names)?);
        a.push("x", self.x.clone().into_dyn())?;
        a.push("y", self.y.clone().into_dyn())?;
        for (prefix, sc) in [("input", &self.input_scaler), ("target", &self.target_scaler)] {
            let (m, sd) = scaler_vectors(sc);
            a.push(format!("{prefix}_mean"), m.into_dyn())?;
            a.push(format!("{prefix}_std"), sd.into_dyn())?;
        }
        Ok(a)
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        if a.meta_value("kind")? != "windowed_dataset" {
            return Err(Error::Format("archive does not hold a windowed dataset".into()));
        }
        let parse = |key: &str| -> Result<usize> {
            a.meta_value(key)?
                .parse()
                .map_err(|_| Error::Format(format!("bad {key} in dataset cache")))
        };
        let scaler = |prefix: &str, names_key: &str| -> Result<ScalerStats> {
            let names: Vec<String> = serde_json::from_str(a.meta_value(names_key)?)?;
            let mean = a.require(&format!("{prefix}_mean"))?.iter().copied().collect::<Vec<_>>();
            let std = a.require(&format!("{prefix}_std"))?.iter().copied().collect::<Vec<_>>();
            if mean.len() != names.len() || std.len() != names.len() {
                return Err(Error::Format(format!("{prefix} scaler size mismatch")));
            }
            Ok(ScalerStats { names, mean, std })
        };
        let x = a
            .require("x")?
            .clone()
            .into_dimensionality::<Ix3>()
            .map_err(|e| Error::Format(format!("x: {e}")))?;
        let y: Array2<f64> = a
            .require("y")?
            .clone()
            .into_dimensionality::<Ix2>()
            .map_err(|e| Error::Format(format!("y: {e}")))?;
        let ds = WindowedDataset {
            n_train: parse("n_train")?,
            window: parse("window")?,
            input_scaler: scaler("input", "input_names")?,
            target_scaler: scaler("target", "target_names")?,
            x,
            y,
        };
        let (n, t, f) = ds.x.dim();
        if n != ds.y.nrows()
            || t != ds.window
            || f != ds.input_scaler.len()
            || ds.y.ncols() != ds.target_scaler.len()
            || ds.n_train > n
        {
            return Err(Error::Format("dataset cache is internally inconsistent".into()));
        }
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&TensorArchive::load(path)?)
    }
}
