//! Simulated FedAvg: client sampling, local training, weighted parameter
//! averaging, round logs and the robustness sweep.
//!
//! The orchestrator only ever sees [`FederatedClient`], whose methods take
//! and return parameter trees, optimizer moments and scalars. Training
//! samples stay inside the client value.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::layers::{AdamConfig, AdamState};
use crate::models::{build_forecaster, ForecastConfig, ForecastModel, TrainOptions};
use crate::rng::{derive_seed, hash_str, stream_rng};
use crate::tensor::ParamTree;

/// How client updates are weighted in the average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Weighting {
    /// Every selected client counts 1/n.
    #[default]
    Uniform,
    /// Proportional to each client's sample count.
    SampleSize,
}

/// What happens to the Adam moments between rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizerSync {
    /// Moments are averaged like the parameters and broadcast with them;
    /// the step counter is the largest one reported.
    #[default]
    Averaged,
    /// Every local update starts from zero moments.
    Reset,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FederatedConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub client_fraction: f64,
    pub seed: u64,
    pub forecast: ForecastConfig,
    pub adam: AdamConfig,
    pub weighting: Weighting,
    pub optimizer_sync: OptimizerSync,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        FederatedConfig {
            rounds: 20,
            local_epochs: 5,
            client_fraction: 1.0,
            seed: 0,
            forecast: ForecastConfig::desk(),
            adam: AdamConfig::default(),
            weighting: Weighting::Uniform,
            optimizer_sync: OptimizerSync::Averaged,
        }
    }
}

impl FederatedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::config("local_epochs", "must be at least 1"));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::config(
                "client_fraction",
                format!("{} is not in (0, 1]", self.client_fraction),
            ));
        }
        self.forecast.validate()
    }
}

/// What the server sends to each selected client.
#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub round: usize,
    pub model: ForecastModel,
    /// `None` asks the client to start from zero moments.
    pub optimizer: Option<AdamState>,
}

/// Local training settings shared by all clients in a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub adam: AdamConfig,
    /// Global index of the first local epoch; keys the shuffle schedule.
    pub epoch_offset: u64,
}

/// What a client sends back.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub params: ParamTree,
    pub optimizer: AdamState,
    /// Mean loss of the last local epoch.
    pub final_loss: f64,
    pub num_samples: usize,
}

/// A participant in federated training.
pub trait FederatedClient: Sync {
    fn id(&self) -> &str;

    fn num_samples(&self) -> usize;

    fn local_update(&self, broadcast: &Broadcast, settings: &LocalSettings) -> Result<ClientUpdate>;
}

/// In-process client holding one household's normalized training windows.
#[derive(Debug, Clone)]
pub struct LocalClient {
    id: String,
    samples: Vec<Sample>,
    shuffle_seed: u64,
}

/// Shuffle seed a client derives from the run seed and its id.
pub fn client_shuffle_seed(seed: u64, client_id: &str) -> u64 {
    derive_seed(seed, hash_str(client_id))
}

impl LocalClient {
    pub fn new(id: &str, samples: Vec<Sample>, seed: u64) -> Self {
        LocalClient {
            id: String::from(id),
            samples,
            shuffle_seed: client_shuffle_seed(seed, id),
        }
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.shuffle_seed
    }
}

impl FederatedClient for LocalClient {
    fn id(&self) -> &str {
        &self.id
    }

    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn local_update(&self, broadcast: &Broadcast, settings: &LocalSettings) -> Result<ClientUpdate> {
        let opts = TrainOptions {
            epochs: settings.epochs,
            batch_size: settings.batch_size,
            lr: settings.lr,
            shuffle_seed: self.shuffle_seed,
            epoch_offset: settings.epoch_offset,
            adam: settings.adam,
        };
        let out = broadcast.model.train(&self.samples, &opts, broadcast.optimizer.clone())?;
        Ok(ClientUpdate {
            params: out.model.params,
            optimizer: out.optimizer,
            final_loss: out.loss_history.last().copied().unwrap_or(0.0),
            num_samples: self.samples.len(),
        })
    }
}

/// Train a copy of `global` on one client for `settings.epochs` epochs
/// from fresh optimizer moments. Returns the local parameters and the
/// final-epoch loss.
pub fn local_update(
    global: &ForecastModel,
    client: &dyn FederatedClient,
    settings: &LocalSettings,
) -> Result<(ParamTree, f64)> {
    let b = Broadcast {
        round: 0,
        model: global.clone(),
        optimizer: None,
    };
    client.local_update(&b, settings).map(|u| (u.params, u.final_loss))
}

/// Number of clients drawn each round: `ceil(C * N)`, at least one.
pub fn selection_size(fraction: f64, n: usize) -> usize {
    // The small slack keeps products like 0.3 * 10 from rounding up.
    let k = libm::ceil(fraction * n as f64 - 1e-9);
    (k as usize).clamp(1, n)
}

/// Uniform sample without replacement of `ceil(C * N)` ids for `round`,
/// returned sorted.
pub fn sample_clients(client_ids: &[String], fraction: f64, seed: u64, round: usize) -> Result<Vec<String>> {
    if client_ids.is_empty() {
        return Err(Error::Argument("cannot sample from an empty client list".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("client fraction {fraction} is not in (0, 1]")));
    }
    let k = selection_size(fraction, client_ids.len());
    let mut rng = stream_rng(derive_seed(seed, 0x5e1ec7), round as u64);
    let mut picked: Vec<String> = rand::seq::index::sample(&mut rng, client_ids.len(), k)
        .into_iter()
        .map(|i| client_ids[i].clone())
        .collect();
    picked.sort();
    Ok(picked)
}

/// Weighted elementwise mean of parameter trees with identical layouts.
///
/// Computed as `x_0 + sum_i w_i (x_i - x_0)`, so a single set or a list of
/// identical sets comes back bit-exact. Callers fix the order of `sets`
/// (the orchestrator sorts by client id).
pub fn fedavg(sets: &[ParamTree], weights: &[f64]) -> Result<ParamTree> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Argument("fedavg needs at least one parameter set".into()))?;
    if weights.len() != sets.len() {
        return Err(Error::Argument(format!(
            "{} weights for {} parameter sets",
            weights.len(),
            sets.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || libm::fabs(total - 1.0) > 1e-9 {
        return Err(Error::Argument(format!("weights must be non-negative and sum to 1, got {total}")));
    }
    for s in &sets[1..] {
        first.check_layout(s)?;
    }
    let mut out = first.clone();
    for (name, t) in out.entries.iter_mut() {
        let base = &first.entries[name].data;
        for (i, x) in t.data.iter_mut().enumerate() {
            let mut delta = 0.0;
            for (s, w) in sets[1..].iter().zip(&weights[1..]) {
                delta += w * (s.entries[name].data[i] - base[i]);
            }
            *x = base[i] + delta;
        }
    }
    Ok(out)
}

/// [`fedavg`] over `(client_id, params, weight)` triples in any order; the
/// triples are sorted by client id first.
pub fn fedavg_by_id(updates: &[(&str, &ParamTree, f64)]) -> Result<ParamTree> {
    let mut sorted: Vec<&(&str, &ParamTree, f64)> = updates.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let sets: Vec<ParamTree> = sorted.iter().map(|u| u.1.clone()).collect();
    let weights: Vec<f64> = sorted.iter().map(|u| u.2).collect();
    fedavg(&sets, &weights)
}

/// Runs the local updates of one round. Implementations may run jobs in
/// parallel but must return results in job order.
pub trait UpdateExecutor {
    fn execute(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<ClientUpdate> + Sync)) -> Vec<Result<ClientUpdate>>;
}

/// Runs jobs one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl UpdateExecutor for Sequential {
    fn execute(&self, jobs: usize, job: &(dyn Fn(usize) -> Result<ClientUpdate> + Sync)) -> Vec<Result<ClientUpdate>> {
        (0..jobs).map(job).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundLog {
    /// 1-based round index.
    pub round: usize,
    pub selected: Vec<String>,
    pub local_losses: Vec<f64>,
    /// Mean of `local_losses`.
    pub mean_local_loss: f64,
    /// MSE of the aggregated model on the validation samples.
    pub global_val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct FederatedOutcome {
    pub model: ForecastModel,
    pub optimizer: AdamState,
    /// Validation MSE of the initial model.
    pub initial_val_loss: f64,
    pub logs: Vec<RoundLog>,
}

impl FederatedOutcome {
    /// Validation losses starting with the initial model: `R + 1` points.
    pub fn val_curve(&self) -> Vec<f64> {
        core::iter::once(self.initial_val_loss)
            .chain(self.logs.iter().map(|l| l.global_val_loss))
            .collect()
    }
}

/// [`run_federated_with`] on the [`Sequential`] executor.
pub fn run_federated<C: FederatedClient>(
    clients: &[C],
    config: &FederatedConfig,
    validation: &[Sample],
) -> Result<FederatedOutcome> {
    let initial = build_forecaster(&config.forecast)?;
    run_federated_with(clients, config, validation, initial, &Sequential)
}

/// FedAvg from `initial`: each round samples clients, trains them locally
/// from the broadcast model, averages their parameters and logs the global
/// validation loss.
pub fn run_federated_with<C: FederatedClient>(
    clients: &[C],
    config: &FederatedConfig,
    validation: &[Sample],
    initial: ForecastModel,
    executor: &dyn UpdateExecutor,
) -> Result<FederatedOutcome> {
    config.validate()?;
    if clients.is_empty() {
        return Err(Error::Argument("federated training needs at least one client".into()));
    }
    if validation.is_empty() {
        return Err(Error::Argument("federated training needs validation samples".into()));
    }
    if initial.config != config.forecast {
        return Err(Error::Argument("initial model config differs from the federated config".into()));
    }
    let mut order: Vec<usize> = (0..clients.len()).collect();
    order.sort_by(|&a, &b| clients[a].id().cmp(clients[b].id()));
    let ids: Vec<String> = order.iter().map(|&i| String::from(clients[i].id())).collect();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Argument(format!("duplicate client id `{}`", w[0])));
    }

    let mut model = initial;
    let mut optimizer = AdamState::new(&model.params);
    let initial_val_loss = model.mse(validation)?;
    let mut logs = Vec::with_capacity(config.rounds);
    for round in 1..=config.rounds {
        let selected = sample_clients(&ids, config.client_fraction, config.seed, round)?;
        let picked: Vec<&C> = selected
            .iter()
            .map(|id| &clients[order[ids.binary_search(id).unwrap_or(0)]])
            .collect();
        let broadcast = Broadcast {
            round,
            model: model.clone(),
            optimizer: match config.optimizer_sync {
                OptimizerSync::Averaged => Some(optimizer.clone()),
                OptimizerSync::Reset => None,
            },
        };
        let settings = LocalSettings {
            epochs: config.local_epochs,
            batch_size: config.forecast.batch_size,
            lr: config.forecast.lr,
            adam: config.adam,
            epoch_offset: ((round - 1) * config.local_epochs) as u64,
        };
        let results = executor.execute(picked.len(), &|k| picked[k].local_update(&broadcast, &settings));
        let mut updates = Vec::with_capacity(results.len());
        for (r, id) in results.into_iter().zip(&selected) {
            updates.push(r.map_err(|e| Error::Client {
                round,
                client: id.clone(),
                source: Box::new(e),
            })?);
        }

        let weights: Vec<f64> = match config.weighting {
            Weighting::Uniform => updates.iter().map(|_| 1.0 / updates.len() as f64).collect(),
            Weighting::SampleSize => {
                let total: usize = updates.iter().map(|u| u.num_samples).sum();
                updates.iter().map(|u| u.num_samples as f64 / total as f64).collect()
            }
        };
        let params: Vec<ParamTree> = updates.iter().map(|u| u.params.clone()).collect();
        model.params = fedavg(&params, &weights)?;
        if config.optimizer_sync == OptimizerSync::Averaged {
            let ms: Vec<ParamTree> = updates.iter().map(|u| u.optimizer.m.clone()).collect();
            let vs: Vec<ParamTree> = updates.iter().map(|u| u.optimizer.v.clone()).collect();
            optimizer = AdamState {
                m: fedavg(&ms, &weights)?,
                v: fedavg(&vs, &weights)?,
                step_count: updates.iter().map(|u| u.optimizer.step_count).max().unwrap_or(0),
            };
        }

        let local_losses: Vec<f64> = updates.iter().map(|u| u.final_loss).collect();
        logs.push(RoundLog {
            round,
            mean_local_loss: local_losses.iter().sum::<f64>() / local_losses.len() as f64,
            local_losses,
            selected,
            global_val_loss: model.mse(validation)?,
        });
    }
    Ok(FederatedOutcome {
        model,
        optimizer,
        initial_val_loss,
        logs,
    })
}

/// Validation-loss curve of one `(E, C)` cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub local_epochs: usize,
    pub client_fraction: f64,
    pub initial_val_loss: f64,
    /// Global validation loss after each round.
    pub losses: Vec<f64>,
}

/// One federated run per `(E, C)` pair, all from the same initial model.
pub fn robustness_sweep<C: FederatedClient>(
    clients: &[C],
    base: &FederatedConfig,
    local_epochs: &[usize],
    client_fractions: &[f64],
    validation: &[Sample],
    executor: &dyn UpdateExecutor,
) -> Result<Vec<SweepCurve>> {
    if local_epochs.is_empty() || client_fractions.is_empty() {
        return Err(Error::Argument("sweep grids must be non-empty".into()));
    }
    let initial = build_forecaster(&base.forecast)?;
    let mut curves = Vec::with_capacity(local_epochs.len() * client_fractions.len());
    for &e in local_epochs {
        for &c in client_fractions {
            let cfg = FederatedConfig {
                local_epochs: e,
                client_fraction: c,
                ..base.clone()
            };
            let out = run_federated_with(clients, &cfg, validation, initial.clone(), executor)?;
            curves.push(SweepCurve {
                local_epochs: e,
                client_fraction: c,
                initial_val_loss: out.initial_val_loss,
                losses: out.logs.iter().map(|l| l.global_val_loss).collect(),
            });
        }
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;
    use crate::tensor::Tensor;
    use alloc::string::ToString;
    use alloc::vec;

    fn scalar(x: f64) -> ParamTree {
        let mut t = ParamTree::new();
        t.insert("theta", Tensor::scalar(x)).unwrap();
        t
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn tiny_forecast() -> ForecastConfig {
        ForecastConfig {
            window_len: 4,
            layer1_hidden: 3,
            layer2_hidden: 2,
            lr: 0.02,
            batch_size: 4,
            ..ForecastConfig::desk()
        }
    }

    fn client(id: &str, phase: f64, n: usize) -> LocalClient {
        let v: Vec<f64> = (0..n + 4).map(|i| 0.5 + 0.4 * libm::sin(i as f64 * 0.5 + phase)).collect();
        LocalClient::new(id, make_windows(&v, 4, 1).unwrap(), 7)
    }

    #[test]
    fn selection_sizes() {
        assert_eq!(sample_clients(&ids(4), 1.0, 1, 1).unwrap(), ids(4));
        assert_eq!(sample_clients(&ids(4), 0.5, 1, 1).unwrap().len(), 2);
        assert_eq!(selection_size(0.3, 10), 3);
        assert_eq!(selection_size(0.01, 10), 1);
        assert_eq!(sample_clients(&ids(9), 0.5, 3, 2).unwrap(), sample_clients(&ids(9), 0.5, 3, 2).unwrap());
        assert!(sample_clients(&[], 1.0, 0, 0).is_err());
        let s = sample_clients(&ids(9), 0.5, 3, 2).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn fedavg_examples() {
        assert_eq!(fedavg(&[scalar(1.0), scalar(3.0)], &[0.5, 0.5]).unwrap(), scalar(2.0));
        let t = scalar(0.1);
        assert_eq!(fedavg(&[t.clone(), t.clone(), t.clone()], &[1.0 / 3.0; 3]).unwrap(), t);
        assert_eq!(fedavg(&[t.clone()], &[1.0]).unwrap(), t);
        assert!(matches!(fedavg(&[], &[]), Err(Error::Argument(_))));
        let mut other = ParamTree::new();
        other.insert("phi", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(fedavg(&[t.clone(), other], &[0.5, 0.5]), Err(Error::Layout(_))));
        assert!(fedavg(&[t.clone(), t], &[0.5, 0.6]).is_err());
    }

    #[test]
    fn fedavg_by_id_sorts() {
        let (a, b, c) = (scalar(0.1), scalar(0.7), scalar(-2.3));
        let x = fedavg_by_id(&[("a", &a, 0.2), ("b", &b, 0.3), ("c", &c, 0.5)]).unwrap();
        let y = fedavg_by_id(&[("c", &c, 0.5), ("a", &a, 0.2), ("b", &b, 0.3)]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn zero_lr_keeps_global() {
        let mut cfg = FederatedConfig {
            rounds: 1,
            local_epochs: 2,
            forecast: tiny_forecast(),
            ..FederatedConfig::default()
        };
        cfg.forecast.lr = 1e-300;
        let clients = vec![client("a", 0.0, 12), client("b", 1.0, 12)];
        let validation = clients[0].samples.clone();
        let out = run_federated(&clients, &cfg, &validation).unwrap();
        let init = build_forecaster(&cfg.forecast).unwrap();
        let (e, _, _) = crate::tensor::max_relative_error(&out.model.params, &init.params).unwrap();
        assert!(e < 1e-12);
        let settings = LocalSettings {
            epochs: 2,
            batch_size: 4,
            lr: 0.0,
            adam: AdamConfig::default(),
            epoch_offset: 0,
        };
        let (p, loss) = local_update(&init, &clients[0], &settings).unwrap();
        assert_eq!(p, init.params);
        assert!(loss >= 0.0);
    }

    #[test]
    fn local_update_reduces_loss_and_is_deterministic() {
        let init = build_forecaster(&tiny_forecast()).unwrap();
        let c = client("a", 0.0, 24);
        let settings = LocalSettings {
            epochs: 5,
            batch_size: 4,
            lr: 0.02,
            adam: AdamConfig::default(),
            epoch_offset: 0,
        };
        let b = Broadcast {
            round: 1,
            model: init.clone(),
            optimizer: None,
        };
        let u = c.local_update(&b, &settings).unwrap();
        assert_eq!(u, c.local_update(&b, &settings).unwrap());
        let twin = client("a", 0.0, 24);
        assert_eq!(u, twin.local_update(&b, &settings).unwrap());
        let after = ForecastModel::from_params(init.config.clone(), u.params).unwrap();
        assert!(after.mse(&c.samples).unwrap() < init.mse(&c.samples).unwrap());
    }

    #[test]
    fn empty_client_error_has_context() {
        let cfg = FederatedConfig {
            rounds: 1,
            local_epochs: 1,
            forecast: tiny_forecast(),
            ..FederatedConfig::default()
        };
        let clients = vec![client("a", 0.0, 8), LocalClient::new("b", vec![], 1)];
        let validation = clients[0].samples.clone();
        match run_federated(&clients, &cfg, &validation) {
            Err(Error::Client { round, client, .. }) => {
                assert_eq!(round, 1);
                assert_eq!(client, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn runs_are_reproducible_and_sized() {
        let cfg = FederatedConfig {
            rounds: 3,
            local_epochs: 1,
            client_fraction: 0.5,
            forecast: tiny_forecast(),
            ..FederatedConfig::default()
        };
        let clients: Vec<LocalClient> = (0..4).map(|i| client(&format!("h{i}"), i as f64, 10)).collect();
        let validation = clients[0].samples.clone();
        let a = run_federated(&clients, &cfg, &validation).unwrap();
        let b = run_federated(&clients, &cfg, &validation).unwrap();
        assert_eq!(a.logs, b.logs);
        assert_eq!(a.logs.len(), 3);
        assert!(a.logs.iter().all(|l| l.selected.len() == 2 && l.global_val_loss >= 0.0));
        assert_eq!(a.val_curve().len(), 4);
        assert_eq!(a.logs[0].round, 1);
        assert_eq!(a.logs[0].selected, sample_clients(&ids_of(&clients), 0.5, 0, 1).unwrap());
    }

    fn ids_of(c: &[LocalClient]) -> Vec<String> {
        c.iter().map(|c| c.id.to_string()).collect()
    }

    #[test]
    fn single_client_matches_centralized() {
        let cfg = FederatedConfig {
            rounds: 3,
            local_epochs: 2,
            forecast: tiny_forecast(),
            ..FederatedConfig::default()
        };
        let c = client("only", 0.3, 14);
        let validation = c.samples.clone();
        let fed = run_federated(core::slice::from_ref(&c), &cfg, &validation).unwrap();
        let init = build_forecaster(&cfg.forecast).unwrap();
        let opts = TrainOptions::new(6, 4, cfg.forecast.lr, c.shuffle_seed());
        let central = init.train(&c.samples, &opts, None).unwrap();
        let (e, _, _) = crate::tensor::max_relative_error(&fed.model.params, &central.model.params).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn sweep_shape() {
        let base = FederatedConfig {
            rounds: 2,
            forecast: tiny_forecast(),
            ..FederatedConfig::default()
        };
        let clients: Vec<LocalClient> = (0..2).map(|i| client(&format!("h{i}"), i as f64, 8)).collect();
        let validation = clients[1].samples.clone();
        let curves = robustness_sweep(&clients, &base, &[1, 2], &[0.5, 1.0], &validation, &Sequential).unwrap();
        assert_eq!(curves.len(), 4);
        assert!(curves.iter().all(|c| c.losses.len() == 2));
        assert_eq!(curves[0].initial_val_loss, curves[3].initial_val_loss);
    }

    #[test]
    fn config_validation() {
        let mut cfg = FederatedConfig::default();
        cfg.client_fraction = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "client_fraction", .. })));
        cfg.client_fraction = 1.0;
        cfg.rounds = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "rounds", .. })));
    }
}
