//! Experiment harness: integrated (per-appliance, summed) versus direct
//! forecasting, federated versus centralized training, and the
//! multi-household model comparison.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::data::{make_windows, split_train_test, HouseholdDataset, MinMaxStats, PowerTrace, Sample, SplitSpec};
use crate::error::{Error, Result};
use crate::federated::{client_shuffle_seed, run_federated_with, FederatedConfig, LocalClient, RoundLog, UpdateExecutor};
use crate::metrics::{MetricsReport, Scale};
use crate::models::{build_forecaster, disaggregate, Disaggregator, DisaggConfig, ForecastArch, ForecastModel, TrainOptions};
use crate::rng::{derive_seed, hash_str};

/// Channel name used for the whole-house signal.
pub const AGGREGATE: &str = "aggregate";
/// Series name of the summed integrated forecast.
pub const TOTAL: &str = "total";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mode {
    /// One forecaster per appliance; predictions are summed.
    #[default]
    Integrated,
    /// One forecaster on the aggregate signal.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Training {
    /// FedAvg with one client per household.
    #[default]
    Federated,
    /// One model on the pooled training windows of every household, for
    /// `rounds * local_epochs` epochs.
    Centralized,
}

/// Where integrated mode gets its per-appliance training signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ApplianceSource {
    /// Metered appliance channels.
    Truth,
    /// Estimates from a disaggregator trained on each household's training
    /// split; the first and last half-window are padded with the nearest
    /// estimate.
    #[default]
    Disaggregated,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub training: Training,
    pub source: ApplianceSource,
    pub split: SplitSpec,
    /// Rounds, local epochs, client fraction, seed and the forecaster
    /// (including its architecture).
    pub federated: FederatedConfig,
    pub disagg: DisaggConfig,
    pub disagg_epochs: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            mode: Mode::Integrated,
            training: Training::Federated,
            source: ApplianceSource::Disaggregated,
            split: SplitSpec::UKDALE_3_DAYS,
            federated: FederatedConfig::default(),
            disagg: DisaggConfig::default(),
            disagg_epochs: 5,
        }
    }
}

/// Predicted against true watts on the test timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSeries {
    pub timestamps: Vec<i64>,
    pub truth: Vec<f64>,
    pub pred: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdResult {
    pub household_id: String,
    /// Total-load errors after min-max scaling with the household's
    /// aggregate training statistics.
    pub normalized: MetricsReport,
    pub watts: MetricsReport,
    /// One series per forecast channel plus [`TOTAL`] in integrated mode;
    /// only [`AGGREGATE`] in direct mode.
    pub series: BTreeMap<String, PredictionSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub households: Vec<HouseholdResult>,
    /// Mean over channels of the final-epoch training MSE (centralized) or
    /// the last round's mean local loss (federated).
    pub final_train_loss: f64,
    /// Round logs per channel for federated runs.
    pub round_logs: BTreeMap<String, Vec<RoundLog>>,
}

impl ExperimentResult {
    pub fn household(&self, id: &str) -> Result<&HouseholdResult> {
        self.households
            .iter()
            .find(|h| h.household_id == id)
            .ok_or_else(|| Error::Key(format!("no result for household `{id}`")))
    }
}

/// Extend an estimate that covers only window midpoints to the timebase of
/// `like`, repeating its first and last values.
pub fn pad_to(estimate: &PowerTrace, like: &PowerTrace) -> Result<PowerTrace> {
    if estimate.is_empty() || estimate.period != like.period {
        return Err(Error::Alignment("estimate cannot be padded to the reference trace".into()));
    }
    let offset = estimate.start_time - like.start_time;
    if offset < 0 || offset % like.period as i64 != 0 {
        return Err(Error::Alignment(format!("estimate starts {offset} s from the reference")));
    }
    let lead = (offset / like.period as i64) as usize;
    if lead + estimate.len() > like.len() {
        return Err(Error::Alignment("estimate runs past the reference trace".into()));
    }
    let first = estimate.values[0];
    let last = estimate.values[estimate.len() - 1];
    let mut values = Vec::with_capacity(like.len());
    values.resize(lead, first);
    values.extend_from_slice(&estimate.values);
    values.resize(like.len(), last);
    PowerTrace::new(like.start_time, like.period, values)
}

/// One forecast channel of one household, split and min-max scaled with
/// the statistics of its training split.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelData {
    pub household_id: String,
    pub stats: MinMaxStats,
    pub train: Vec<Sample>,
    /// Windows whose targets are the test-split values; the first ones
    /// reach back into the end of the training split.
    pub test: Vec<Sample>,
    pub test_times: Vec<i64>,
    /// Watts the test targets are scored against.
    pub test_truth: Vec<f64>,
}

/// Split `channel` (an appliance name or [`AGGREGATE`]) of a household and
/// build its training and test windows.
pub fn channel_data(
    household: &HouseholdDataset,
    channel: &str,
    split: &SplitSpec,
    window: usize,
    horizon: usize,
) -> Result<ChannelData> {
    household.validate()?;
    let (train, test) = split_train_test(household, split)?;
    let pick = |d: &HouseholdDataset| -> Result<PowerTrace> {
        if channel == AGGREGATE {
            Ok(d.aggregate.clone())
        } else {
            d.appliance(channel).cloned()
        }
    };
    let test = pick(&test)?;
    build_channel(&household.household_id, &pick(&train)?, &test, &test, window, horizon)
}

fn build_channel(
    id: &str,
    train: &PowerTrace,
    test: &PowerTrace,
    truth: &PowerTrace,
    window: usize,
    horizon: usize,
) -> Result<ChannelData> {
    let stats = MinMaxStats::from_values(&train.values)?;
    let norm = |v: &[f64]| -> Vec<f64> { v.iter().map(|&x| stats.normalize(x)).collect() };
    let mut train_samples = make_windows(&norm(&train.values), window, horizon)?;
    for s in &mut train_samples {
        s.target = s.target.clamp(0.0, 1.0);
    }
    let lead = window + horizon - 1;
    if train.len() < lead {
        return Err(Error::Argument(format!(
            "training split of {} samples is shorter than window plus horizon",
            train.len()
        )));
    }
    let mut joined = norm(&train.values[train.len() - lead..]);
    joined.extend(norm(&test.values));
    let mut test_samples = make_windows(&joined, window, horizon)?;
    for s in &mut test_samples {
        s.target = s.target.clamp(0.0, 1.0);
    }
    Ok(ChannelData {
        household_id: id.to_string(),
        stats,
        train: train_samples,
        test: test_samples,
        test_times: (0..truth.len()).map(|i| truth.timestamp(i)).collect(),
        test_truth: truth.values.clone(),
    })
}

struct Split {
    id: String,
    train: HouseholdDataset,
    test: HouseholdDataset,
    /// Training signal per channel over the train and test ranges.
    signals: BTreeMap<String, (PowerTrace, PowerTrace)>,
}

fn prepare(households: &[HouseholdDataset], spec: &ExperimentSpec) -> Result<Vec<Split>> {
    let mut out = Vec::with_capacity(households.len());
    for h in households {
        h.validate()?;
        let (train, test) = split_train_test(h, &spec.split)?;
        let mut signals = BTreeMap::new();
        match spec.mode {
            Mode::Direct => {
                signals.insert(AGGREGATE.to_string(), (train.aggregate.clone(), test.aggregate.clone()));
            }
            Mode::Integrated => {
                if h.appliances.is_empty() {
                    return Err(Error::config(
                        "mode",
                        format!("integrated mode needs appliance channels, `{}` has none", h.household_id),
                    ));
                }
                match spec.source {
                    ApplianceSource::Truth => {
                        for name in h.appliances.keys() {
                            signals.insert(name.clone(), (train.appliances[name].clone(), test.appliances[name].clone()));
                        }
                    }
                    ApplianceSource::Disaggregated => {
                        let cfg = DisaggConfig {
                            seed: derive_seed(spec.disagg.seed, hash_str(&h.household_id)),
                            ..spec.disagg.clone()
                        };
                        let nilm = Disaggregator::fit(&cfg, &train, spec.disagg_epochs)?;
                        let full = h.aggregate.slice(0, train.len() + test.len());
                        for (name, est) in disaggregate(&nilm, &full)? {
                            let padded = pad_to(&est, &full)?;
                            signals.insert(
                                name,
                                (padded.slice(0, train.len()), padded.slice(train.len(), full.len())),
                            );
                        }
                    }
                }
            }
        }
        out.push(Split {
            id: h.household_id.clone(),
            train,
            test,
            signals,
        });
    }
    let mut ids: Vec<&str> = out.iter().map(|s| s.id.as_str()).collect();
    ids.sort();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Argument("household ids must be unique".into()));
    }
    Ok(out)
}

/// A forecaster trained on one channel across households.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTraining {
    pub model: ForecastModel,
    /// Last epoch's training MSE (centralized) or the last round's mean
    /// local loss (federated).
    pub final_train_loss: f64,
    /// Per-round logs of a federated run.
    pub round_logs: Option<Vec<RoundLog>>,
    /// Per-epoch training MSE of a centralized run.
    pub epoch_losses: Option<Vec<f64>>,
}

/// Train one channel's forecaster across households, federated (one client
/// per household, validated on the pooled test windows) or centralized on
/// the pooled training windows. The model seed is derived from the
/// configured seed and the channel name.
pub fn train_channel(
    channel: &str,
    data: &[ChannelData],
    spec: &ExperimentSpec,
    executor: &dyn UpdateExecutor,
) -> Result<ChannelTraining> {
    if data.is_empty() {
        return Err(Error::Argument(format!("no households to train `{channel}` on")));
    }
    let mut forecast = spec.federated.forecast.clone();
    forecast.seed = derive_seed(forecast.seed, hash_str(channel));
    let initial = build_forecaster(&forecast)?;
    let fed = FederatedConfig {
        forecast,
        ..spec.federated.clone()
    };
    match spec.training {
        Training::Federated => {
            let clients: Vec<LocalClient> = data
                .iter()
                .map(|d| LocalClient::new(&d.household_id, d.train.clone(), fed.seed))
                .collect();
            let validation = pooled_test(data);
            let out = run_federated_with(&clients, &fed, &validation, initial, executor)?;
            Ok(ChannelTraining {
                model: out.model,
                final_train_loss: out.logs.last().map(|l| l.mean_local_loss).unwrap_or(0.0),
                round_logs: Some(out.logs),
                epoch_losses: None,
            })
        }
        Training::Centralized => {
            fed.validate()?;
            let pooled: Vec<Sample> = data.iter().flat_map(|d| d.train.iter().cloned()).collect();
            let opts = TrainOptions {
                adam: fed.adam,
                ..TrainOptions::new(
                    fed.rounds * fed.local_epochs,
                    fed.forecast.batch_size,
                    fed.forecast.lr,
                    client_shuffle_seed(fed.seed, channel),
                )
            };
            let out = initial.train(&pooled, &opts, None)?;
            Ok(ChannelTraining {
                model: out.model,
                final_train_loss: out.loss_history.last().copied().unwrap_or(0.0),
                round_logs: None,
                epoch_losses: Some(out.loss_history),
            })
        }
    }
}

/// Test windows of every household, concatenated in input order.
pub fn pooled_test(data: &[ChannelData]) -> Vec<Sample> {
    data.iter().flat_map(|d| d.test.iter().cloned()).collect()
}

/// Run one experiment over all `households`: train per channel, forecast
/// every household's test split and score the total load.
pub fn run_experiment(
    households: &[HouseholdDataset],
    spec: &ExperimentSpec,
    executor: &dyn UpdateExecutor,
) -> Result<ExperimentResult> {
    if households.is_empty() {
        return Err(Error::Argument("an experiment needs at least one household".into()));
    }
    spec.federated.validate()?;
    let splits = prepare(households, spec)?;
    run_prepared(&splits, spec, executor)
}

fn run_prepared(splits: &[Split], spec: &ExperimentSpec, executor: &dyn UpdateExecutor) -> Result<ExperimentResult> {
    spec.federated.validate()?;
    let (w, h) = (spec.federated.forecast.window_len, spec.federated.forecast.horizon);

    let mut channels: BTreeMap<String, Vec<ChannelData>> = BTreeMap::new();
    for s in splits {
        for (name, (train, test)) in &s.signals {
            let truth = match spec.mode {
                Mode::Direct => &s.test.aggregate,
                Mode::Integrated => &s.test.appliances[name],
            };
            channels
                .entry(name.clone())
                .or_default()
                .push(build_channel(&s.id, train, test, truth, w, h)?);
        }
    }

    let mut series: BTreeMap<String, BTreeMap<String, PredictionSeries>> = BTreeMap::new();
    let mut round_logs = BTreeMap::new();
    let mut final_losses = Vec::new();
    for (name, data) in &channels {
        let trained = train_channel(name, data, spec, executor)?;
        final_losses.push(trained.final_train_loss);
        if let Some(l) = trained.round_logs {
            round_logs.insert(name.clone(), l);
        }
        let model = trained.model;
        for d in data {
            let id = &d.household_id;
            let windows: Vec<Vec<f64>> = d.test.iter().map(|s| s.window.clone()).collect();
            let pred = model
                .predict_many(&windows)?
                .into_iter()
                .map(|y| d.stats.denormalize(y))
                .collect();
            series.entry(id.clone()).or_default().insert(
                name.clone(),
                PredictionSeries {
                    timestamps: d.test_times.clone(),
                    truth: d.test_truth.clone(),
                    pred,
                },
            );
        }
    }

    let mut results = Vec::with_capacity(splits.len());
    for s in splits {
        let mut per = series.remove(&s.id).unwrap_or_default();
        let total = match spec.mode {
            Mode::Direct => per[AGGREGATE].clone(),
            Mode::Integrated => {
                let n = s.test.len();
                let mut pred = alloc::vec![0.0; n];
                for p in per.values() {
                    for (a, b) in pred.iter_mut().zip(&p.pred) {
                        *a += b;
                    }
                }
                let total = PredictionSeries {
                    timestamps: (0..n).map(|i| s.test.aggregate.timestamp(i)).collect(),
                    truth: s.test.aggregate.values.clone(),
                    pred,
                };
                per.insert(TOTAL.to_string(), total.clone());
                total
            }
        };
        let agg_stats = MinMaxStats::from_values(&s.train.aggregate.values)?;
        let norm = |v: &[f64]| -> Vec<f64> { v.iter().map(|&x| agg_stats.normalize(x)).collect() };
        results.push(HouseholdResult {
            household_id: s.id.clone(),
            normalized: MetricsReport::compute(&norm(&total.truth), &norm(&total.pred), Scale::Normalized)?,
            watts: MetricsReport::compute(&total.truth, &total.pred, Scale::Watts)?,
            series: per,
        });
    }
    Ok(ExperimentResult {
        households: results,
        final_train_loss: final_losses.iter().sum::<f64>() / final_losses.len().max(1) as f64,
        round_logs,
    })
}

/// Models the comparison harness can build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    /// Federated BiLSTM-Attention.
    #[cfg_attr(feature = "serde", serde(rename = "feddl"))]
    FedDl,
    #[cfg_attr(feature = "serde", serde(rename = "bilstm_attention"))]
    BiLstmAttention,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::FedDl, ModelKind::BiLstmAttention, ModelKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::FedDl => "feddl",
            ModelKind::BiLstmAttention => "bilstm_attention",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::config("models", format!("unknown model `{name}`")))
    }

    fn arch_and_training(self) -> (ForecastArch, Training) {
        match self {
            ModelKind::FedDl => (ForecastArch::BiLstmAttention, Training::Federated),
            ModelKind::BiLstmAttention => (ForecastArch::BiLstmAttention, Training::Centralized),
            ModelKind::Lstm => (ForecastArch::Lstm, Training::Centralized),
        }
    }
}

fn training_name(t: Training) -> &'static str {
    match t {
        Training::Federated => "federated",
        Training::Centralized => "centralized",
    }
}

/// One line of the comparison table. Rows with `training == "reported"`
/// carry published reference numbers and have no watt-scale values.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub household: String,
    pub model: String,
    pub training: String,
    pub mae_norm: f64,
    pub rmse_norm: f64,
    pub mae_watts: Option<f64>,
    pub rmse_watts: Option<f64>,
    /// Final training MSE of the model behind the row; `None` on reference
    /// rows.
    pub final_train_loss: Option<f64>,
}

/// Published normalized MAE/RMSE for the comparison table: the three
/// buildable models and the four external baselines.
pub const REFERENCE_RESULTS: [(&str, f64, f64); 7] = [
    ("feddl", 0.08141, 0.16739),
    ("bilstm_attention", 0.07825, 0.15956),
    ("lstm", 0.10956, 0.18266),
    ("ann", 0.28376, 0.34675),
    ("ffann", 0.27869, 0.50923),
    ("arima", 0.28865, 0.55243),
    ("svm", 0.28914, 0.52826),
];

pub fn reference_rows() -> Vec<ComparisonRow> {
    REFERENCE_RESULTS
        .iter()
        .map(|&(model, mae, rmse)| ComparisonRow {
            household: "reported".to_string(),
            model: model.to_string(),
            training: "reported".to_string(),
            mae_norm: mae,
            rmse_norm: rmse,
            mae_watts: None,
            rmse_watts: None,
            final_train_loss: None,
        })
        .collect()
}

/// Train each requested model on the same inputs (`base` supplies mode,
/// source, split and sizes; disaggregation runs once and is shared) and
/// tabulate per-household errors, followed by the reference rows.
pub fn compare_models(
    households: &[HouseholdDataset],
    base: &ExperimentSpec,
    models: &[ModelKind],
    executor: &dyn UpdateExecutor,
) -> Result<Vec<ComparisonRow>> {
    if models.is_empty() {
        return Err(Error::config("models", "at least one model is required"));
    }
    if households.is_empty() {
        return Err(Error::Argument("a comparison needs at least one household".into()));
    }
    let splits = prepare(households, base)?;
    let mut per_model = Vec::with_capacity(models.len());
    for &m in models {
        let (arch, training) = m.arch_and_training();
        let mut spec = base.clone();
        spec.training = training;
        spec.federated.forecast.arch = arch;
        per_model.push((m, training, run_prepared(&splits, &spec, executor)?));
    }
    let mut rows = Vec::new();
    for h in households {
        for (m, training, result) in &per_model {
            let r = result.household(&h.household_id)?;
            rows.push(ComparisonRow {
                household: h.household_id.clone(),
                model: m.name().to_string(),
                training: training_name(*training).to_string(),
                mae_norm: r.normalized.mae,
                rmse_norm: r.normalized.rmse,
                mae_watts: Some(r.watts.mae),
                rmse_watts: Some(r.watts.rmse),
                final_train_loss: Some(result.final_train_loss),
            });
        }
    }
    rows.extend(reference_rows());
    Ok(rows)
}
