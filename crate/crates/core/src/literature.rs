//! Published results of other models, reported next to our own metrics for
//! context. These numbers are quoted from their original publications and are
//! never recomputed here.

use std::fmt::Write as _;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LiteratureValue {
    pub model: &'static str,
    pub task: &'static str,
    pub metric: &'static str,
    pub value: f64,
    pub unit: &'static str,
    pub source: &'static str,
}

/// QLSTM on next-day Bangkok PM2.5, 100 epochs.
pub const QLSTM_MAE: LiteratureValue = LiteratureValue {
    model: "QLSTM",
    task: "air_quality",
    metric: "mae",
    value: 11.24,
    unit: "ug/m3",
    source: "QLSTM Bangkok PM2.5 study",
};

pub const QLSTM_RMSE: LiteratureValue = LiteratureValue {
    model: "QLSTM",
    task: "air_quality",
    metric: "rmse",
    value: 15.06,
    unit: "ug/m3",
    source: "QLSTM Bangkok PM2.5 study",
};

/// Classical LSTM baseline reported alongside QLSTM.
pub const CLASSICAL_LSTM_MAE: LiteratureValue = LiteratureValue {
    model: "Classical LSTM",
    task: "air_quality",
    metric: "mae",
    value: 21.50,
    unit: "ug/m3",
    source: "QLSTM Bangkok PM2.5 study",
};

/// Hybrid LSTM-QNN on hourly wind speed at 100 m.
pub const LSTM_QNN_RMSE: LiteratureValue = LiteratureValue {
    model: "LSTM-QNN",
    task: "wind",
    metric: "rmse",
    value: 3.92,
    unit: "km/h",
    source: "LSTM-QNN wind forecasting study",
};

pub const LSTM_QNN_MAE: LiteratureValue = LiteratureValue {
    model: "LSTM-QNN",
    task: "wind",
    metric: "mae",
    value: 2.87,
    unit: "km/h",
    source: "LSTM-QNN wind forecasting study",
};

pub const LSTM_QNN_TRAIN_MINUTES: LiteratureValue = LiteratureValue {
    model: "LSTM-QNN",
    task: "wind",
    metric: "train_time",
    value: 65.3,
    unit: "min",
    source: "LSTM-QNN wind forecasting study",
};

pub const ALL: [LiteratureValue; 6] = [
    QLSTM_MAE,
    QLSTM_RMSE,
    CLASSICAL_LSTM_MAE,
    LSTM_QNN_RMSE,
    LSTM_QNN_MAE,
    LSTM_QNN_TRAIN_MINUTES,
];

/// Plain-text footer printed after run reports.
pub fn footer() -> String {
    let mut out = String::from("literature values (published, not reproduced):\n");
    for v in ALL {
        let _ = writeln!(out, "  {:<15} {:<12} {:<10} {} {}", v.model, v.task, v.metric, v.value, v.unit);
    }
    out
}
