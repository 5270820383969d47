//! CSV artifacts: predictions, metrics, comparison tables, round logs,
//! sweep curves and training losses. Every writer has a matching reader.

use std::path::{Path, PathBuf};

use fedload_core::eval::{ComparisonRow, PredictionSeries};
use fedload_core::federated::{RoundLog, SweepCurve};
use fedload_core::metrics::{MetricsReport, Scale};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

/// Serialize `rows` with a header and write them atomically.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::csv(path, e.into_error().into()))?;
    write_atomic(path, &bytes)
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().collect::<std::result::Result<_, _>>().map_err(|e| Error::csv(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub timestamp: i64,
    pub true_watts: f64,
    pub pred_watts: f64,
}

pub fn write_predictions(path: &Path, series: &PredictionSeries) -> Result<()> {
    if series.timestamps.len() != series.truth.len() || series.truth.len() != series.pred.len() {
        return Err(Error::format(path, "prediction series columns differ in length"));
    }
    let rows: Vec<PredictionRecord> = (0..series.truth.len())
        .map(|i| PredictionRecord {
            timestamp: series.timestamps[i],
            true_watts: series.truth[i],
            pred_watts: series.pred[i],
        })
        .collect();
    write_rows(path, &rows)
}

pub fn read_predictions(path: &Path) -> Result<PredictionSeries> {
    let rows: Vec<PredictionRecord> = read_rows(path)?;
    Ok(PredictionSeries {
        timestamps: rows.iter().map(|r| r.timestamp).collect(),
        truth: rows.iter().map(|r| r.true_watts).collect(),
        pred: rows.iter().map(|r| r.pred_watts).collect(),
    })
}

/// One line of a metrics table. `series` names the scored channel, or
/// `total` for the household's summed forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub household: String,
    pub series: String,
    pub scale: Scale,
    pub mae: f64,
    pub rmse: f64,
    pub n_points: usize,
}

impl MetricsRecord {
    pub fn new(household: &str, series: &str, report: &MetricsReport) -> Self {
        MetricsRecord {
            household: household.to_string(),
            series: series.to_string(),
            scale: report.scale,
            mae: report.mae,
            rmse: report.rmse,
            n_points: report.n_points,
        }
    }
}

/// Comparison table row; watt columns are empty on reference rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub household: String,
    pub model: String,
    pub training: String,
    pub mae_norm: f64,
    pub rmse_norm: f64,
    pub mae_watts: Option<f64>,
    pub rmse_watts: Option<f64>,
}

impl From<&ComparisonRow> for ComparisonRecord {
    fn from(r: &ComparisonRow) -> Self {
        ComparisonRecord {
            household: r.household.clone(),
            model: r.model.clone(),
            training: r.training.clone(),
            mae_norm: r.mae_norm,
            rmse_norm: r.rmse_norm,
            mae_watts: r.mae_watts,
            rmse_watts: r.rmse_watts,
        }
    }
}

pub fn write_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let recs: Vec<ComparisonRecord> = rows.iter().map(ComparisonRecord::from).collect();
    write_rows(path, &recs)
}

/// Final-epoch training MSE per trained model, reported next to the
/// comparison table as its loss column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub model: String,
    pub training: String,
    pub final_train_mse: f64,
}

/// One loss line per distinct trained model in `rows`, in first-seen order.
pub fn loss_records(rows: &[ComparisonRow]) -> Vec<LossRecord> {
    let mut out: Vec<LossRecord> = Vec::new();
    for r in rows {
        if let Some(loss) = r.final_train_loss {
            if !out.iter().any(|l| l.model == r.model) {
                out.push(LossRecord {
                    model: r.model.clone(),
                    training: r.training.clone(),
                    final_train_mse: loss,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub client_count: usize,
    pub mean_local_loss: f64,
    pub global_val_loss: f64,
}

impl From<&RoundLog> for RoundRecord {
    fn from(l: &RoundLog) -> Self {
        RoundRecord {
            round: l.round,
            client_count: l.selected.len(),
            mean_local_loss: l.mean_local_loss,
            global_val_loss: l.global_val_loss,
        }
    }
}

pub fn write_round_logs(path: &Path, logs: &[RoundLog]) -> Result<()> {
    let recs: Vec<RoundRecord> = logs.iter().map(RoundRecord::from).collect();
    write_rows(path, &recs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
}

pub fn write_epoch_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let recs: Vec<EpochRecord> = losses
        .iter()
        .enumerate()
        .map(|(i, &l)| EpochRecord {
            epoch: i + 1,
            train_mse: l,
        })
        .collect();
    write_rows(path, &recs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub round: usize,
    pub global_val_loss: f64,
}

/// `sweep_E{E}_C{C}.csv`, with `C` in shortest decimal form (`0.5`, `1`).
pub fn sweep_file_name(local_epochs: usize, client_fraction: f64) -> String {
    format!("sweep_E{local_epochs}_C{client_fraction}.csv")
}

/// Rows of one sweep curve. Round 0 holds the validation loss of the
/// initial model, rounds `1..=R` the loss after each aggregation.
pub fn sweep_records(curve: &SweepCurve) -> Vec<SweepRecord> {
    std::iter::once(curve.initial_val_loss)
        .chain(curve.losses.iter().copied())
        .enumerate()
        .map(|(round, global_val_loss)| SweepRecord { round, global_val_loss })
        .collect()
}

/// Write one CSV per curve into `dir`; returns the paths in curve order.
pub fn write_sweep(dir: &Path, curves: &[SweepCurve]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(curves.len());
    for c in curves {
        let path = dir.join(sweep_file_name(c.local_epochs, c.client_fraction));
        write_rows(&path, &sweep_records(c))?;
        paths.push(path);
    }
    Ok(paths)
}
