//! The seven-layer hybrid recurrent forecaster.
//!
//! ```text
//! L1  time-distributed dense (48, relu) + dropout 0.1
//! L2  spiking layer, 48 neurons (QLIF or classical LIF)
//! L3  batch normalization + dropout 0.2
//! L4  LSTM (24 or 48 units), final hidden state only
//! L5  dense (32, relu) + dropout 0.2
//! L6  dense (16, relu)
//! L7  dense (N, linear)
//! ```
//!
//! Both neuron kinds yield identical shapes and parameter counts; only the
//! L2 update rule differs.

use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayViewD, ArrayViewMutD};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::TensorArchive;
use crate::layers::{
    Activation, BatchNorm, BatchNormCache, BatchNormConfig, Dense, DenseCache, Dropout, DropoutCache,
    GradientSet, Lstm, LstmCache, Parameterized, TimeDistributedDense,
};
use crate::neuron::{
    LifCache, LifHyper, LifLayer, LifLayerParams, QlifCache, QlifHyper, QlifLayer, QlifLayerParams,
};
use crate::tensor::{Matrix, Sequence, Tensor};
use crate::{Error, Result};

/// Width of the projection and spiking layers.
pub const PROJECTION_UNITS: usize = 48;
pub const HEAD_UNITS: (usize, usize) = (32, 16);

/// Rows per chunk when predicting in inference mode.
const PREDICT_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    Qlif,
    Lif,
}

impl NeuronKind {
    pub fn label(self) -> &'static str {
        match self {
            NeuronKind::Qlif => "qlif",
            NeuronKind::Lif => "lif",
        }
    }
}

impl fmt::Display for NeuronKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NeuronKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qlif" => Ok(NeuronKind::Qlif),
            "lif" => Ok(NeuronKind::Lif),
            other => Err(Error::Config(format!("unknown neuron kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub neuron_kind: NeuronKind,
    pub n_features: usize,
    pub n_targets: usize,
    pub lstm_units: usize,
    pub window: usize,
    #[serde(default)]
    pub qlif: QlifHyper,
    #[serde(default)]
    pub lif: LifHyper,
    #[serde(default = "default_input_dropout")]
    pub input_dropout: f64,
    #[serde(default = "default_hidden_dropout")]
    pub hidden_dropout: f64,
    #[serde(default)]
    pub batchnorm: BatchNormConfig,
}

fn default_input_dropout() -> f64 {
    0.1
}

fn default_hidden_dropout() -> f64 {
    0.2
}

impl ModelSpec {
    pub fn new(neuron_kind: NeuronKind, n_features: usize, n_targets: usize, lstm_units: usize, window: usize) -> Self {
        ModelSpec {
            neuron_kind,
            n_features,
            n_targets,
            lstm_units,
            window,
            qlif: QlifHyper::default(),
            lif: LifHyper::default(),
            input_dropout: default_input_dropout(),
            hidden_dropout: default_hidden_dropout(),
            batchnorm: BatchNormConfig::default(),
        }
    }

    pub fn with_kind(&self, neuron_kind: NeuronKind) -> Self {
        ModelSpec {
            neuron_kind,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_features", self.n_features),
            ("n_targets", self.n_targets),
            ("lstm_units", self.lstm_units),
            ("window", self.window),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("model {name} must be positive")));
            }
        }
        self.qlif.validate()?;
        self.lif.validate()?;
        Dropout::new(self.input_dropout)?;
        Dropout::new(self.hidden_dropout)?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum SpikingLayer {
    Qlif(QlifLayer),
    Lif(LifLayer),
}

#[derive(Clone, Debug)]
pub enum SpikingCache {
    Qlif(QlifCache),
    Lif(LifCache),
}

impl SpikingLayer {
    pub fn forward(&self, x: &Sequence) -> Result<(Sequence, SpikingCache)> {
        match self {
            SpikingLayer::Qlif(l) => l.forward(x).map(|(y, c)| (y, SpikingCache::Qlif(c))),
            SpikingLayer::Lif(l) => l.forward(x).map(|(y, c)| (y, SpikingCache::Lif(c))),
        }
    }

    pub fn backward(&self, cache: SpikingCache, grad_out: &Sequence) -> Result<(Sequence, Vec<Tensor>)> {
        match (self, cache) {
            (SpikingLayer::Qlif(l), SpikingCache::Qlif(c)) => {
                l.backward(c, grad_out).map(|(dx, g)| (dx, g.into_tensors()))
            }
            (SpikingLayer::Lif(l), SpikingCache::Lif(c)) => {
                l.backward(c, grad_out).map(|(dx, g)| (dx, g.into_tensors()))
            }
            _ => Err(Error::StaleCache("spiking cache belongs to the other neuron kind".into())),
        }
    }

    fn as_params(&self) -> &dyn Parameterized {
        match self {
            SpikingLayer::Qlif(l) => l,
            SpikingLayer::Lif(l) => l,
        }
    }

    fn as_params_mut(&mut self) -> &mut dyn Parameterized {
        match self {
            SpikingLayer::Qlif(l) => l,
            SpikingLayer::Lif(l) => l,
        }
    }
}

/// Everything the backward pass needs from one training-mode forward pass.
pub struct ModelCache {
    l1: DenseCache,
    l1_drop: DropoutCache,
    l2: SpikingCache,
    l3: BatchNormCache,
    l3_drop: DropoutCache,
    l4: LstmCache,
    l5: DenseCache,
    l5_drop: DropoutCache,
    l6: DenseCache,
    l7: DenseCache,
}

#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    l1: TimeDistributedDense,
    l1_drop: Dropout,
    l2: SpikingLayer,
    l3: BatchNorm,
    l3_drop: Dropout,
    l4: Lstm,
    l5: Dense,
    l5_drop: Dropout,
    l6: Dense,
    l7: Dense,
}

/// Layer labels in forward order.
pub const LAYER_NAMES: [&str; 7] = ["l1", "l2", "l3", "l4", "l5", "l6", "l7"];

/// Tensors penalised by the L2 term: the dense kernels of L1, L5, L6, L7.
const REGULARIZED: [&str; 4] = ["l1.kernel", "l5.kernel", "l6.kernel", "l7.kernel"];

impl Model {
    /// Instantiates every layer from a ChaCha8 stream seeded with `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = PROJECTION_UNITS;
        let l1 = TimeDistributedDense::new(Dense::init(&mut rng, spec.n_features, h, Activation::Relu));
        let l2 = match spec.neuron_kind {
            NeuronKind::Qlif => SpikingLayer::Qlif(QlifLayer::new(QlifLayerParams::init(&mut rng, h, h), spec.qlif)?),
            NeuronKind::Lif => SpikingLayer::Lif(LifLayer::new(LifLayerParams::init(&mut rng, h, h), spec.lif)?),
        };
        let l4 = Lstm::init(&mut rng, h, spec.lstm_units);
        let l5 = Dense::init(&mut rng, spec.lstm_units, HEAD_UNITS.0, Activation::Relu);
        let l6 = Dense::init(&mut rng, HEAD_UNITS.0, HEAD_UNITS.1, Activation::Relu);
        let l7 = Dense::init(&mut rng, HEAD_UNITS.1, spec.n_targets, Activation::Linear);
        Ok(Model {
            spec: spec.clone(),
            l1,
            l1_drop: Dropout::new(spec.input_dropout)?,
            l2,
            l3: BatchNorm::new(h, spec.batchnorm),
            l3_drop: Dropout::new(spec.hidden_dropout)?,
            l4,
            l5,
            l5_drop: Dropout::new(spec.hidden_dropout)?,
            l6,
            l7,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn spiking_layer(&self) -> &SpikingLayer {
        &self.l2
    }

    /// Replaces the output layer; used to build zero predictors in tests.
    pub fn set_output_layer(&mut self, layer: Dense) -> Result<()> {
        if layer.n_in() != HEAD_UNITS.1 || layer.units() != self.spec.n_targets {
            return Err(Error::Shape("output layer shape differs from spec".into()));
        }
        self.l7 = layer;
        Ok(())
    }

    fn layers(&self) -> [(&'static str, &dyn Parameterized); 7] {
        [
            ("l1", &self.l1),
            ("l2", self.l2.as_params()),
            ("l3", &self.l3),
            ("l4", &self.l4),
            ("l5", &self.l5),
            ("l6", &self.l6),
            ("l7", &self.l7),
        ]
    }

    /// Trainable tensors as `layer.tensor` names, in gradient order.
    pub fn named_params(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        self.layers()
            .into_iter()
            .flat_map(|(layer, l)| {
                l.params()
                    .into_iter()
                    .map(move |(name, view)| (format!("{layer}.{name}"), view))
            })
            .collect()
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let layers: [(&'static str, &mut dyn Parameterized); 7] = [
            ("l1", &mut self.l1),
            ("l2", self.l2.as_params_mut()),
            ("l3", &mut self.l3),
            ("l4", &mut self.l4),
            ("l5", &mut self.l5),
            ("l6", &mut self.l6),
            ("l7", &mut self.l7),
        ];
        layers
            .into_iter()
            .flat_map(|(layer, l)| {
                l.params_mut()
                    .into_iter()
                    .map(move |(name, view)| (format!("{layer}.{name}"), view))
            })
            .collect()
    }

    pub fn regularized_mask(&self) -> Vec<bool> {
        self.named_params()
            .iter()
            .map(|(name, _)| REGULARIZED.contains(&name.as_str()))
            .collect()
    }

    pub fn layer_param_counts(&self) -> Vec<(&'static str, usize)> {
        self.layers()
            .into_iter()
            .map(|(name, l)| (name, l.param_count()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_param_counts().iter().map(|(_, c)| c).sum()
    }

    /// Names and shapes of every trainable tensor.
    pub fn structure(&self) -> Vec<(String, Vec<usize>)> {
        self.named_params()
            .into_iter()
            .map(|(n, v)| (n, v.shape().to_vec()))
            .collect()
    }

    fn check_input(&self, x: &Sequence) -> Result<()> {
        let (_, t, f) = x.dim();
        if f != self.spec.n_features || t != self.spec.window {
            return Err(Error::Shape(format!(
                "model expects windows of [{}, {}], got [{t}, {f}]",
                self.spec.window, self.spec.n_features
            )));
        }
        Ok(())
    }

    /// Training-mode forward pass (dropout active, batch statistics).
    pub fn forward_train(&self, x: &Sequence, rng: &mut dyn RngCore) -> Result<(Matrix, ModelCache)> {
        self.check_input(x)?;
        let (h, l1) = self.l1.forward(x)?;
        let (h, l1_drop) = self.l1_drop.forward(&h, true, rng);
        let (h, l2) = self.l2.forward(&h)?;
        let (h, l3) = self.l3.forward(&h, true)?;
        let (h, l3_drop) = self.l3_drop.forward(&h, true, rng);
        let (h, l4) = self.l4.forward(&h)?;
        let (h, l5) = self.l5.forward(&h)?;
        let (h, l5_drop) = self.l5_drop.forward(&h, true, rng);
        let (h, l6) = self.l6.forward(&h)?;
        let (y, l7) = self.l7.forward(&h)?;
        let cache = ModelCache {
            l1,
            l1_drop,
            l2,
            l3,
            l3_drop,
            l4,
            l5,
            l5_drop,
            l6,
            l7,
        };
        Ok((y, cache))
    }

    /// Folds the batch statistics of a training pass into the moving averages.
    pub fn update_norm_stats(&mut self, cache: &ModelCache) {
        self.l3.update_moving_stats(&cache.l3);
    }

    /// Gradients of every trainable tensor, aligned with [`Model::named_params`].
    pub fn backward(&self, cache: ModelCache, grad_pred: &Matrix) -> Result<Vec<Tensor>> {
        let (g, g7) = self.l7.backward(cache.l7, grad_pred, true)?;
        let (g, g6) = self.l6.backward(cache.l6, &g.expect("input grad requested"), true)?;
        let g = self.l5_drop.backward(cache.l5_drop, &g.expect("input grad requested"))?;
        let (g, g5) = self.l5.backward(cache.l5, &g, true)?;
        let (g, g4) = self.l4.backward(cache.l4, &g.expect("input grad requested"))?;
        let g = self.l3_drop.backward(cache.l3_drop, &g)?;
        let (g, g3) = self.l3.backward(cache.l3, &g)?;
        let (g, g2) = self.l2.backward(cache.l2, &g)?;
        let g = self.l1_drop.backward(cache.l1_drop, &g)?;
        let (_, g1) = self.l1.backward(cache.l1, &g, false)?;

        let mut grads = g1.into_tensors();
        grads.extend(g2);
        grads.extend(g3.into_tensors());
        grads.extend(g4.into_tensors());
        grads.extend(g5.into_tensors());
        grads.extend(g6.into_tensors());
        grads.extend(g7.into_tensors());
        Ok(grads)
    }

    fn forward_infer(&self, x: &Sequence) -> Result<Matrix> {
        let (h, _) = self.l1.forward(x)?;
        let (h, _) = self.l2.forward(&h)?;
        let (h, _) = self.l3.forward(&h, false)?;
        let (h, _) = self.l4.forward(&h)?;
        let (h, _) = self.l5.forward(&h)?;
        let (h, _) = self.l6.forward(&h)?;
        Ok(self.l7.forward(&h)?.0)
    }

    /// Deterministic inference-mode predictions `[n, n_targets]` in
    /// standardized units.
    pub fn predict(&self, windows: &Sequence) -> Result<Matrix> {
        self.check_input(windows)?;
        let n = windows.dim().0;
        let mut out = Matrix::zeros((n, self.spec.n_targets));
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let chunk = windows.slice(ndarray::s![start..end, .., ..]).to_owned();
            out.slice_mut(ndarray::s![start..end, ..]).assign(&self.forward_infer(&chunk)?);
            start = end;
        }
        Ok(out)
    }

    /// Serializes parameters, normalization statistics and the spec.
    pub fn to_archive(&self) -> Result<TensorArchive> {
        let mut archive = TensorArchive::new();
        archive
            .meta
            .insert("model_spec".into(), serde_json::to_string(&self.spec)?);
        archive.meta.insert("kind".into(), "model".into());
        for (name, view) in self.named_params() {
            archive.push(name, view.to_owned())?;
        }
        for (name, view) in self.l3.buffers() {
            archive.push(format!("l3.{name}"), view.to_owned())?;
        }
        Ok(archive)
    }

    pub fn from_archive(archive: &TensorArchive) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(archive.meta_value("model_spec")?)?;
        let mut model = Model::build(&spec, 0)?;
        for (name, mut view) in model.named_params_mut() {
            let t = archive.require(&name)?;
            if t.shape() != view.shape() {
                return Err(Error::Format(format!(
                    "{name}: checkpoint shape {:?}, model {:?}",
                    t.shape(),
                    view.shape()
                )));
            }
            view.assign(t);
        }
        for (name, mut view) in model.l3.buffers_mut() {
            let t = archive.require(&format!("l3.{name}"))?;
            if t.shape() != view.shape() {
                return Err(Error::Format(format!("l3.{name}: shape mismatch")));
            }
            view.assign(t);
        }
        Ok(model)
    }
}

/// Mean squared error over all elements and its gradient.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    let diff = pred - target;
    let n = diff.len() as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}
