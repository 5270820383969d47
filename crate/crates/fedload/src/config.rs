//! TOML run configuration. Every CLI flag has a twin key here; flags win.

use std::path::{Path, PathBuf};

use fedload_core::data::{synth_household, AlignPolicy, HouseholdDataset, SplitSpec, SynthAppliance, SynthConfig};
use fedload_core::eval::{ApplianceSource, ExperimentSpec, Mode, ModelKind, Training, AGGREGATE};
use fedload_core::federated::{FederatedConfig, OptimizerSync, Weighting};
use fedload_core::layers::AdamConfig;
use fedload_core::models::{DisaggConfig, ForecastConfig};
use fedload_core::rng::derive_seed;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_dataset, read_text, TimeRange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Seeds synthesis, initialization, shuffling and client sampling.
    /// Nested `seed` keys are overwritten by this one.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub synth: SynthSection,
    pub ingest: IngestSection,
    pub split: SplitSpec,
    pub forecast: ForecastConfig,
    pub federated: FederatedSection,
    pub adam: AdamConfig,
    pub disagg: DisaggConfig,
    pub experiment: ExperimentSection,
    pub train: TrainSection,
    pub predict: PredictSection,
    pub sweep: SweepSection,
    pub compare: CompareSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: DataSection::default(),
            synth: SynthSection::default(),
            ingest: IngestSection::default(),
            split: SplitSpec::default(),
            forecast: ForecastConfig::default(),
            federated: FederatedSection::default(),
            adam: AdamConfig::default(),
            disagg: DisaggConfig::default(),
            experiment: ExperimentSection::default(),
            train: TrainSection::default(),
            predict: PredictSection::default(),
            sweep: SweepSection::default(),
            compare: CompareSection::default(),
        }
    }
}

/// Household dataset CSVs to run on. When empty, households are
/// synthesized from `[synth]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub datasets: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub households: usize,
    /// Samples per household.
    pub length: usize,
    /// Appliance models; empty selects the three-appliance rotation preset.
    pub appliances: Vec<SynthAppliance>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            households: 5,
            length: 43_200,
            appliances: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// House directory with `labels.dat` and `channel_<n>.dat` files.
    pub house: Option<PathBuf>,
    /// Household id; defaults to the directory name.
    pub id: Option<String>,
    /// Inclusive start, unix seconds.
    pub start: Option<i64>,
    /// Exclusive end, unix seconds.
    pub end: Option<i64>,
    pub align: AlignPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederatedSection {
    pub rounds: usize,
    pub local_epochs: usize,
    pub client_fraction: f64,
    pub weighting: Weighting,
    pub optimizer_sync: OptimizerSync,
}

impl Default for FederatedSection {
    fn default() -> Self {
        let d = FederatedConfig::default();
        FederatedSection {
            rounds: d.rounds,
            local_epochs: d.local_epochs,
            client_fraction: d.client_fraction,
            weighting: d.weighting,
            optimizer_sync: d.optimizer_sync,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub mode: Mode,
    pub training: Training,
    pub source: ApplianceSource,
    /// Epochs per appliance disaggregation model.
    pub disagg_epochs: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentSpec::default();
        ExperimentSection {
            mode: d.mode,
            training: d.training,
            source: d.source,
            disagg_epochs: d.disagg_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Appliance name or `aggregate`.
    pub channel: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            channel: AGGREGATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    /// Forecaster checkpoint; defaults to `<out_dir>/models/<channel>.json`.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub local_epochs: Vec<usize>,
    pub client_fractions: Vec<f64>,
    pub channel: String,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            local_epochs: vec![5, 50, 80],
            client_fractions: vec![0.5, 1.0],
            channel: AGGREGATE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub models: Vec<String>,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            models: ModelKind::ALL.iter().map(|m| m.name().to_string()).collect(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml {
            path: path.to_path_buf(),
            source: Box::new(e),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, path)
    }

    pub fn time_range(&self) -> TimeRange {
        TimeRange {
            start: self.ingest.start,
            end: self.ingest.end,
        }
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        ForecastConfig {
            seed: self.seed,
            ..self.forecast.clone()
        }
    }

    pub fn federated_config(&self) -> FederatedConfig {
        FederatedConfig {
            rounds: self.federated.rounds,
            local_epochs: self.federated.local_epochs,
            client_fraction: self.federated.client_fraction,
            seed: self.seed,
            forecast: self.forecast_config(),
            adam: self.adam,
            weighting: self.federated.weighting,
            optimizer_sync: self.federated.optimizer_sync,
        }
    }

    pub fn disagg_config(&self) -> DisaggConfig {
        DisaggConfig {
            seed: self.seed,
            ..self.disagg.clone()
        }
    }

    pub fn experiment_spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            mode: self.experiment.mode,
            training: self.experiment.training,
            source: self.experiment.source,
            split: self.split,
            federated: self.federated_config(),
            disagg: self.disagg_config(),
            disagg_epochs: self.experiment.disagg_epochs,
        }
    }

    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        Ok(self
            .compare
            .models
            .iter()
            .map(|m| ModelKind::parse(m))
            .collect::<fedload_core::Result<_>>()?)
    }

    /// Synthetic household configs `h0..h{n-1}`, each with its own seed.
    pub fn synth_configs(&self) -> Result<Vec<SynthConfig>> {
        if self.synth.households == 0 {
            return Err(Error::Config("synth.households must be at least 1".into()));
        }
        Ok((0..self.synth.households)
            .map(|i| {
                let id = format!("h{i}");
                let seed = derive_seed(self.seed, i as u64);
                let mut cfg = SynthConfig::disjoint_three(&id, seed, self.synth.length);
                if !self.synth.appliances.is_empty() {
                    cfg.appliances = self.synth.appliances.clone();
                }
                cfg
            })
            .collect())
    }

    /// The configured dataset CSVs, or synthetic households when none are
    /// listed.
    pub fn households(&self) -> Result<Vec<HouseholdDataset>> {
        if self.data.datasets.is_empty() {
            return self
                .synth_configs()?
                .iter()
                .map(|c| Ok(synth_household(c)?))
                .collect();
        }
        self.data.datasets.iter().map(|p| read_dataset(p)).collect()
    }
}
