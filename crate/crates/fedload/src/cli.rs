//! Command-line front end.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fedload_core::data::{split_train_test, HouseholdDataset};
use fedload_core::eval::{
    channel_data, compare_models, pad_to, run_experiment, train_channel, ApplianceSource, ChannelData, Mode, Training,
    AGGREGATE,
};
use fedload_core::federated::{robustness_sweep, LocalClient};
use fedload_core::metrics::{MetricsReport, Scale};
use fedload_core::models::{disaggregate, Disaggregator};
use fedload_core::rng::{derive_seed, hash_str};
use rayon::prelude::*;
use serde::de::DeserializeOwned;

use crate::artifacts::{
    loss_records, write_comparison, write_epoch_losses, write_predictions, write_round_logs, write_rows,
    write_sweep, MetricsRecord,
};
use crate::checkpoint::{Checkpoint, DisaggregatorCheckpoint, ForecasterCheckpoint};
use crate::config::AppConfig;
use crate::executor::RayonExecutor;
use crate::io::{load_house, write_dataset};

#[derive(Debug, Parser)]
#[command(name = "fedload", version, about = "Federated household load forecasting with NILM")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; nested seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root (default `out`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Household dataset CSV (repeatable). Without any, households are
    /// synthesized.
    #[arg(long = "data", global = true, value_name = "CSV")]
    pub data: Vec<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

fn enum_arg<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s)).map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic households and write them as dataset CSVs.
    Synth {
        /// Number of households.
        #[arg(long)]
        households: Option<usize>,
        /// Samples per household.
        #[arg(long)]
        length: Option<usize>,
    },
    /// Align a UK-DALE style house directory into a dataset CSV.
    Ingest {
        /// Directory with `labels.dat` and `channel_<n>.dat` files.
        #[arg(long, value_name = "DIR")]
        house: Option<PathBuf>,
        /// Household id; defaults to the directory name.
        #[arg(long)]
        id: Option<String>,
        /// Inclusive start, unix seconds.
        #[arg(long)]
        start: Option<i64>,
        /// Exclusive end, unix seconds.
        #[arg(long)]
        end: Option<i64>,
    },
    /// Train per-appliance disaggregators on each training split and write
    /// the estimated appliance traces.
    Disaggregate {
        /// Training epochs per appliance model.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train a forecaster for one channel across households.
    Train {
        /// Appliance name or `aggregate`.
        #[arg(long)]
        channel: Option<String>,
        /// `federated` or `centralized`.
        #[arg(long, value_parser = enum_arg::<Training>)]
        training: Option<Training>,
    },
    /// Forecast each household's test split with a saved forecaster.
    Forecast {
        /// Forecaster checkpoint written by `train`.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// Channel whose default checkpoint to load when `--model` is absent.
        #[arg(long)]
        channel: Option<String>,
    },
    /// Run the integrated or direct experiment and score the total load.
    Evaluate {
        /// `integrated` or `direct`.
        #[arg(long, value_parser = enum_arg::<Mode>)]
        mode: Option<Mode>,
        /// `federated` or `centralized`.
        #[arg(long, value_parser = enum_arg::<Training>)]
        training: Option<Training>,
        /// `truth` or `disaggregated`.
        #[arg(long, value_parser = enum_arg::<ApplianceSource>)]
        source: Option<ApplianceSource>,
    },
    /// Compare models across households.
    Compare {
        /// Comma-separated: feddl, bilstm_attention, lstm.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
    },
    /// Federated runs over a grid of local epochs and client fractions.
    Sweep {
        /// Comma-separated local epoch counts.
        #[arg(long, value_delimiter = ',')]
        local_epochs: Option<Vec<usize>>,
        /// Comma-separated client fractions in (0, 1].
        #[arg(long, value_delimiter = ',')]
        client_fractions: Option<Vec<f64>>,
        /// Appliance name or `aggregate`.
        #[arg(long)]
        channel: Option<String>,
    },
}

/// Load the config file (if any) and apply flag overrides.
pub fn resolve_config(cli: &Cli) -> anyhow::Result<AppConfig> {
    let mut cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if !cli.data.is_empty() {
        cfg.data.datasets = cli.data.clone();
    }
    match &cli.command {
        Command::Synth { households, length } => {
            set(&mut cfg.synth.households, households);
            set(&mut cfg.synth.length, length);
        }
        Command::Ingest { house, id, start, end } => {
            if house.is_some() {
                cfg.ingest.house = house.clone();
            }
            if id.is_some() {
                cfg.ingest.id = id.clone();
            }
            if start.is_some() {
                cfg.ingest.start = *start;
            }
            if end.is_some() {
                cfg.ingest.end = *end;
            }
        }
        Command::Disaggregate { epochs } => set(&mut cfg.experiment.disagg_epochs, epochs),
        Command::Train { channel, training } => {
            set(&mut cfg.train.channel, channel);
            set(&mut cfg.experiment.training, training);
        }
        Command::Forecast { model, channel } => {
            if model.is_some() {
                cfg.predict.model = model.clone();
            }
            set(&mut cfg.train.channel, channel);
        }
        Command::Evaluate { mode, training, source } => {
            set(&mut cfg.experiment.mode, mode);
            set(&mut cfg.experiment.training, training);
            set(&mut cfg.experiment.source, source);
        }
        Command::Compare { models } => set(&mut cfg.compare.models, models),
        Command::Sweep {
            local_epochs,
            client_fractions,
            channel,
        } => {
            set(&mut cfg.sweep.local_epochs, local_epochs);
            set(&mut cfg.sweep.client_fractions, client_fractions);
            set(&mut cfg.sweep.channel, channel);
        }
    }
    Ok(cfg)
}

fn set<T: Clone>(slot: &mut T, flag: &Option<T>) {
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(cli)?;
    let written = match &cli.command {
        Command::Synth { .. } => synth(&cfg)?,
        Command::Ingest { .. } => ingest(&cfg)?,
        Command::Disaggregate { .. } => disaggregate_cmd(&cfg)?,
        Command::Train { .. } => train(&cfg)?,
        Command::Forecast { .. } => forecast(&cfg)?,
        Command::Evaluate { .. } => evaluate(&cfg)?,
        Command::Compare { .. } => compare(&cfg)?,
        Command::Sweep { .. } => sweep(&cfg)?,
    };
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn synth(cfg: &AppConfig) -> anyhow::Result<Vec<PathBuf>> {
    let dir = cfg.out_dir.join("data");
    let mut out = Vec::new();
    for sc in cfg.synth_configs()? {
        let ds = fedload_core::data::synth_household(&sc)?;
        let path = dir.join(format!("{}.csv", ds.household_id));
        write_dataset(&path, &ds)?;
        out.push(path);
    }
    Ok(out)
}

fn ingest(cfg: &AppConfig) -> anyhow::Result<Vec<PathBuf>> {
    let Some(house) = &cfg.ingest.house else {
        bail!("ingest needs a house directory (--house or ingest.house)");
    };
    let ds = load_house(house, cfg.ingest.id.as_deref(), &cfg.ingest.align, cfg.time_range())?;
    let path = cfg.out_dir.join("data").join(format!("{}.csv", ds.household_id));
    write_dataset(&path, &ds)?;
    Ok(vec![path])
}

fn households(cfg: &AppConfig) -> anyhow::Result<Vec<HouseholdDataset>> {
    cfg.households().context("loading households")
}

fn disaggregate_cmd(cfg: &AppConfig) -> anyhow::Result<Vec<PathBuf>> {
    let dir = cfg.out_dir.join("disagg");
    let hs = households(cfg)?;
    let base = cfg.disagg_config();
    let per: Vec<(Vec<PathBuf>, Vec<MetricsRecord>)> = hs
        .par_iter()
        .map(|h| -> anyhow::Result<_> {
            let id = &h.household_id;
            if h.appliances.is_empty() {
                bail!("household `{id}` has no appliance channels to learn from");
            }
            let (train, test) = split_train_test(h, &cfg.split)?;
            let mut dcfg = base.clone();
            dcfg.seed = derive_seed(base.seed, hash_str(id));
            let nilm = Disaggregator::fit(&dcfg, &train, cfg.experiment.disagg_epochs)
                .with_context(|| format!("training disaggregator for `{id}`"))?;
            let mut est = h.clone();
            let mut metrics = Vec::new();
            for (name, trace) in disaggregate(&nilm, &h.aggregate)? {
                let padded = pad_to(&trace, &h.aggregate)?;
                let from = train.len();
                let to = from + test.len();
                let report = MetricsReport::compute(
                    &h.appliances[&name].values[from..to],
                    &padded.values[from..to],
                    Scale::Watts,
                )?;
                metrics.push(MetricsRecord::new(id, &name, &report));
                est.appliances.insert(name, padded);
            }
            let csv = dir.join(format!("{id}.csv"));
            write_dataset(&csv, &est)?;
            let ckpt = dir.join(format!("{id}.json"));
            Checkpoint::Disaggregator(DisaggregatorCheckpoint {
                household: id.clone(),
                models: nilm.models,
            })
            .save(&ckpt)?;
            Ok((vec![csv, ckpt], metrics))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut written = Vec::new();
    let mut metrics = Vec::new();
    for (p, m) in per {
        written.extend(p);
        metrics.extend(m);
    }
    let mpath = dir.join("metrics.csv");
    write_rows(&mpath, &metrics)?;
    written.push(mpath);
    Ok(written)
}

fn channel_splits(cfg: &AppConfig, hs: &[HouseholdDataset], channel: &str, window: usize, horizon: usize) -> anyhow::Result<Vec<ChannelData>> {
    hs.iter()
        .map(|h| {
            channel_data(h, channel, &cfg.split, window, horizon)
                .with_context(|| format!("preparing `{channel}` of household `{}`", h.household_id))
        })
        .collect()
}

fn train(cfg: &AppConfig) -> anyhow::Result<Vec<PathBuf>> {
    let channel = cfg.train.channel.as_str();
    let spec = cfg.experiment_spec();
    let hs = households(cfg)?;
    let f = &spec.federated.forecast;
    let data = channel_splits(cfg, &hs, channel, f.window_len, f.horizon)?;
    let trained = train_channel(channel, &data, &spec, &RayonExecutor)?;
    let dir = cfg.out_dir.join("models");
    let ckpt = dir.join(format!("{channel}.json"));
    Checkpoint::Forecaster(ForecasterCheckpoint {
        channel: channel.to_string(),
        model: trained.model,
    })
    .save(&ckpt)?;
    let mut out = vec![ckpt];
    if let Some(logs) = &trained.round_logs {
        let p = dir.join(format!("{channel}_rounds.csv"));
        write_round_logs(&p, logs)?;
        out.push(p);
    }
    if let Some(losses) = &trained.epoch_losses {
        let p = dir.join(format!("{channel}_epochs.csv"));
        write_epoch_losses(&p, losses)?;
        out.push(p);
    }
    println!("final training loss {}", trained.final_train_loss);
    Ok(out)
}

fn forecast(cfg: &AppConfig) -> anyhow::Result<Vec<PathBuf>> {
    let path = cfg
        .predict
        .model
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("models").join(format!("{}.json", cfg.train.channel)));
    let ckpt = Checkpoint::load(&path)?.into_forecaster(&path)?;
    let channel = ckpt.channel.as_str();
    let model = &ckpt.model;
    let hs = households(cfg)?;
    let data = channel_splits(cfg, &hs, channel, model.config.window_len, model.config.horizon)?;
    let dir = cfg.out_dir.join("forecast");
    let mut out = Vec::new();
    let mut metrics = Vec::new();
    for d in &data {
        let windows: Vec<Vec<f64>> = d.test.iter().map(|s| s.window.clone()).collect();
        let norm_pred = model.predict_many(&windows)?;
        let pred: Vec<f64> = norm_pred.iter().map(|&y| d.stats.denormalize(y)).collect();
        let norm_truth: Vec<f64> = d.test_truth.iter().map(|&x| d.stats.normalize(x)).collect();
        metrics.push(MetricsRecord::new(
            &d.household_id,
            channel,
            &MetricsReport::compute(&norm_truth, &norm_pred, Scale::Normalized)?,
        ));
        metrics.push(MetricsRecord::new(
            &d.household_id,
            channel,
            &MetricsReport::compute(&d.test_truth, &pred, Scale::Watts)?,
        ));
        let p = dir.join(format!("{}_{channel}.csv", d.household_id));
        write_predictions(
            &p,
            &fedload_core::eval::PredictionSeries {
                timestamps: d.test_times.clone(),
                truth: d.test_truth.clone(),
                pred,
            },
        )?;
        out.push(p);
    }
    let mpath = dir.join("metrics.csv");
    write_rows(&mpath, &metrics)?;
    out.push(mpath);
    Ok(out)
}

fn evaluate(cfg: &AppConfig) -> anyhow::Result<Vec<PathBuf>> {
    let spec = cfg.experiment_spec();
    let hs = households(cfg)?;
    let result = run_experiment(&hs, &spec, &RayonExecutor)?;
    let dir = cfg.out_dir.join("evaluate");
    let mut out = Vec::new();
    let mut metrics = Vec::new();
    for h in &result.households {
        let total = if spec.mode == Mode::Direct { AGGREGATE } else { fedload_core::eval::TOTAL };
        metrics.push(MetricsRecord::new(&h.household_id, total, &h.normalized));
        metrics.push(MetricsRecord::new(&h.household_id, total, &h.watts));
        for (name, s) in &h.series {
            if name != total {
                let r = MetricsReport::compute(&s.truth, &s.pred, Scale::Watts)?;
                metrics.push(MetricsRecord::new(&h.household_id, name, &r));
            }
            let p = dir.join(&h.household_id).join(format!("{name}.csv"));
            write_predictions(&p, s)?;
            out.push(p);
        }
    }
    for (channel, logs) in &result.round_logs {
        let p = dir.join(format!("rounds_{channel}.csv"));
        write_round_logs(&p, logs)?;
        out.push(p);
    }
    let mpath = dir.join("metrics.csv");
    write_rows(&mpath, &metrics)?;
    out.push(mpath);
    Ok(out)
}

fn compare(cfg: &AppConfig) -> anyhow::Result<Vec<PathBuf>> {
    let models = cfg.model_kinds()?;
    let hs = households(cfg)?;
    let rows = compare_models(&hs, &cfg.experiment_spec(), &models, &RayonExecutor)?;
    let dir = cfg.out_dir.join("compare");
    let table = dir.join("comparison.csv");
    write_comparison(&table, &rows)?;
    let loss = dir.join("loss.csv");
    write_rows(&loss, &loss_records(&rows))?;
    Ok(vec![table, loss])
}

fn sweep(cfg: &AppConfig) -> anyhow::Result<Vec<PathBuf>> {
    let channel = cfg.sweep.channel.as_str();
    let mut fed = cfg.federated_config();
    fed.forecast.seed = derive_seed(fed.forecast.seed, hash_str(channel));
    let hs = households(cfg)?;
    let data = channel_splits(cfg, &hs, channel, fed.forecast.window_len, fed.forecast.horizon)?;
    let clients: Vec<LocalClient> = data
        .iter()
        .map(|d| LocalClient::new(&d.household_id, d.train.clone(), fed.seed))
        .collect();
    let validation = fedload_core::eval::pooled_test(&data);
    let curves = robustness_sweep(
        &clients,
        &fed,
        &cfg.sweep.local_epochs,
        &cfg.sweep.client_fractions,
        &validation,
        &RayonExecutor,
    )?;
    Ok(write_sweep(&sweep_dir(&cfg.out_dir), &curves)?)
}

fn sweep_dir(out: &Path) -> PathBuf {
    out.join("sweep")
}
