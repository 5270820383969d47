use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{fit, mean_squared_error, Network, TrainOptions};
use crate::data::{HouseholdDataset, MinMaxStats, PowerTrace, Sample};
use crate::error::{Error, Result};
use crate::layers::{
    max_pool_raw, pool_out_len, Activation, Conv1dParams, DenseParams, Initializer, LstmCellParams, LstmStepCache,
    ParamGroup,
};
use crate::rng::{derive_seed, hash_str};
use crate::tensor::ParamTree;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DisaggConfig {
    pub window_len: usize,
    pub conv_layers: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    /// Max-pool width and stride after each convolution.
    pub pool: usize,
    pub conv_activation: Activation,
    pub lstm_hidden: usize,
    pub mapping_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DisaggConfig {
    fn default() -> Self {
        DisaggConfig {
            window_len: 64,
            conv_layers: 2,
            conv_filters: 16,
            conv_kernel: 5,
            pool: 2,
            conv_activation: Activation::Relu,
            lstm_hidden: 32,
            mapping_dim: 32,
            lr: 0.001,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl DisaggConfig {
    /// Sequence length after each conv+pool stage, or `None` if the window
    /// is too short for the stack.
    fn stage_lengths(&self) -> Option<Vec<usize>> {
        let mut len = self.window_len;
        let mut out = Vec::with_capacity(self.conv_layers);
        for _ in 0..self.conv_layers {
            let conv = (len + 1).checked_sub(self.conv_kernel).filter(|&l| l >= self.pool)?;
            len = pool_out_len(conv, self.pool, self.pool);
            out.push(len);
        }
        Some(out)
    }

    fn flat_len(&self) -> usize {
        match self.stage_lengths().and_then(|l| l.last().copied()) {
            Some(len) => len * self.conv_filters,
            None => self.window_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("window_len", self.window_len),
            ("conv_filters", self.conv_filters),
            ("conv_kernel", self.conv_kernel),
            ("pool", self.pool),
            ("lstm_hidden", self.lstm_hidden),
            ("mapping_dim", self.mapping_dim),
            ("batch_size", self.batch_size),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.stage_lengths().is_none() {
            return Err(Error::config(
                "window_len",
                format!(
                    "{} samples is too short for {} conv stages of kernel {} and pool {}",
                    self.window_len, self.conv_layers, self.conv_kernel, self.pool
                ),
            ));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr", format!("{} is not a positive learning rate", self.lr)));
        }
        Ok(())
    }
}

/// One appliance's seq2point network with the min-max statistics of the
/// traces it was trained on.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DisaggModel {
    pub config: DisaggConfig,
    pub params: ParamTree,
    pub aggregate_stats: MinMaxStats,
    pub appliance_stats: MinMaxStats,
}

#[derive(Clone)]
pub(crate) struct DisaggNet {
    convs: Vec<Conv1dParams>,
    cnn_map: DenseParams,
    lstm: LstmCellParams,
    lstm_map: DenseParams,
    head: DenseParams,
    act: Activation,
    pool: usize,
}

struct Trace {
    /// Input to each conv stage with its length.
    stage_inputs: Vec<(Vec<f64>, usize)>,
    conv_outputs: Vec<Vec<f64>>,
    pool_indices: Vec<Vec<usize>>,
    flat: Vec<f64>,
    cnn_mapped: Vec<f64>,
    lstm: Vec<LstmStepCache>,
    lstm_mapped: Vec<f64>,
    joined: Vec<f64>,
    out: f64,
}

fn conv_name(i: usize) -> String {
    format!("cnn.conv{i}")
}

impl DisaggNet {
    fn init(cfg: &DisaggConfig, init: &mut Initializer) -> Self {
        let convs = (0..cfg.conv_layers)
            .map(|i| {
                let in_ch = if i == 0 { 1 } else { cfg.conv_filters };
                Conv1dParams::init(in_ch, cfg.conv_filters, cfg.conv_kernel, init)
            })
            .collect();
        DisaggNet {
            convs,
            cnn_map: DenseParams::init(cfg.flat_len(), cfg.mapping_dim, init),
            lstm: LstmCellParams::init(cfg.lstm_hidden, 1, init),
            lstm_map: DenseParams::init(cfg.lstm_hidden, cfg.mapping_dim, init),
            head: DenseParams::init(2 * cfg.mapping_dim, 1, init),
            act: cfg.conv_activation,
            pool: cfg.pool,
        }
    }

    fn read(cfg: &DisaggConfig, tree: &ParamTree) -> Result<Self> {
        Ok(DisaggNet {
            convs: (0..cfg.conv_layers)
                .map(|i| Conv1dParams::read_from(tree, &conv_name(i)))
                .collect::<Result<_>>()?,
            cnn_map: DenseParams::read_from(tree, "cnn.map")?,
            lstm: LstmCellParams::read_from(tree, "lstm.cell")?,
            lstm_map: DenseParams::read_from(tree, "lstm.map")?,
            head: DenseParams::read_from(tree, "head")?,
            act: cfg.conv_activation,
            pool: cfg.pool,
        })
    }

    fn forward(&self, window: &[f64]) -> Trace {
        let mut stage_inputs = Vec::with_capacity(self.convs.len());
        let mut conv_outputs = Vec::with_capacity(self.convs.len());
        let mut pool_indices = Vec::with_capacity(self.convs.len());
        let mut x = window.to_vec();
        let mut len = window.len();
        for conv in &self.convs {
            let y = conv.forward_raw(&x, len, self.act);
            let conv_len = len + 1 - conv.kernel_len();
            let (pooled, idx) = max_pool_raw(&y, conv.out_channels(), conv_len, self.pool, self.pool);
            stage_inputs.push((x, len));
            conv_outputs.push(y);
            pool_indices.push(idx);
            len = pool_out_len(conv_len, self.pool, self.pool);
            x = pooled;
        }
        let flat = x;
        let cnn_mapped = self.cnn_map.forward_vec(&flat, Activation::Tanh);
        let xs: Vec<Vec<f64>> = window.iter().map(|&v| vec![v]).collect();
        let lstm = self.lstm.scan(&xs, false);
        let lstm_mapped = self.lstm_map.forward_vec(&lstm[lstm.len() - 1].hidden, Activation::Tanh);
        let mut joined = cnn_mapped.clone();
        joined.extend_from_slice(&lstm_mapped);
        let out = self.head.forward_vec(&joined, Activation::Identity)[0];
        Trace {
            stage_inputs,
            conv_outputs,
            pool_indices,
            flat,
            cnn_mapped,
            lstm,
            lstm_mapped,
            joined,
            out,
        }
    }

    fn backward(&self, t: &Trace, dy: f64, g: &mut DisaggNet) {
        let dj = self
            .head
            .backward_vec(&t.joined, &[t.out], &[dy], Activation::Identity, &mut g.head);
        let m = t.cnn_mapped.len();
        let mut d = self
            .cnn_map
            .backward_vec(&t.flat, &t.cnn_mapped, &dj[..m], Activation::Tanh, &mut g.cnn_map);
        for s in (0..self.convs.len()).rev() {
            let y = &t.conv_outputs[s];
            let mut dconv = vec![0.0; y.len()];
            for (&i, dv) in t.pool_indices[s].iter().zip(&d) {
                dconv[i] += dv;
            }
            let (x, len) = &t.stage_inputs[s];
            d = self.convs[s].backward_raw(x, *len, y, &dconv, self.act, &mut g.convs[s]);
        }
        let last = &t.lstm[t.lstm.len() - 1].hidden;
        let dlast = self
            .lstm_map
            .backward_vec(last, &t.lstm_mapped, &dj[m..], Activation::Tanh, &mut g.lstm_map);
        let mut dhs = vec![vec![0.0; self.lstm.hidden()]; t.lstm.len()];
        dhs[t.lstm.len() - 1] = dlast;
        self.lstm.scan_backward(&t.lstm, &dhs, &mut g.lstm);
    }
}

impl Network for DisaggNet {
    fn predict(&self, window: &[f64]) -> f64 {
        self.forward(window).out
    }

    fn loss_and_grad(&self, sample: &Sample, scale: f64, grads: &mut Self) -> f64 {
        let t = self.forward(&sample.window);
        let r = t.out - sample.target;
        self.backward(&t, 2.0 * scale * r, grads);
        r * r
    }

    fn zero_grads(&self) -> Self {
        DisaggNet {
            convs: self.convs.iter().map(|c| c.zeros_like()).collect(),
            cnn_map: self.cnn_map.zeros_like(),
            lstm: self.lstm.zeros_like(),
            lstm_map: self.lstm_map.zeros_like(),
            head: self.head.zeros_like(),
            act: self.act,
            pool: self.pool,
        }
    }

    fn to_tree(&self) -> Result<ParamTree> {
        let mut tree = ParamTree::new();
        for (i, c) in self.convs.iter().enumerate() {
            c.write_to(&conv_name(i), &mut tree)?;
        }
        self.cnn_map.write_to("cnn.map", &mut tree)?;
        self.lstm.write_to("lstm.cell", &mut tree)?;
        self.lstm_map.write_to("lstm.map", &mut tree)?;
        self.head.write_to("head", &mut tree)?;
        Ok(tree)
    }
}

const UNIT: MinMaxStats = MinMaxStats { min: 0.0, max: 1.0 };

/// Untrained network seeded from `config.seed`; statistics start as the
/// identity mapping until the first training call.
pub fn build_disaggregator(config: &DisaggConfig) -> Result<DisaggModel> {
    build_disaggregator_with(config, &mut Initializer::from_seed(config.seed))
}

pub fn build_disaggregator_with(config: &DisaggConfig, init: &mut Initializer) -> Result<DisaggModel> {
    config.validate()?;
    Ok(DisaggModel {
        config: config.clone(),
        params: DisaggNet::init(config, init).to_tree()?,
        aggregate_stats: UNIT,
        appliance_stats: UNIT,
    })
}

fn check_len(aggregate: &PowerTrace, window_len: usize) -> Result<()> {
    if aggregate.len() < window_len {
        return Err(Error::shape(
            "disaggregation input",
            format!("trace has {} samples, window needs {window_len}", aggregate.len()),
        ));
    }
    Ok(())
}

impl DisaggModel {
    pub(crate) fn net(&self) -> Result<DisaggNet> {
        DisaggNet::read(&self.config, &self.params)
    }

    /// Seq2point samples: normalized aggregate windows, targets at the
    /// window midpoint clipped to [0, 1].
    pub fn samples(&self, aggregate: &PowerTrace, appliance: &PowerTrace) -> Result<Vec<Sample>> {
        if !aggregate.same_timebase(appliance) {
            return Err(Error::Alignment(format!(
                "aggregate ({} @ {}, {} samples) and appliance ({} @ {}, {} samples) differ",
                aggregate.start_time,
                aggregate.period,
                aggregate.len(),
                appliance.start_time,
                appliance.period,
                appliance.len()
            )));
        }
        let w = self.config.window_len;
        check_len(aggregate, w)?;
        let x: Vec<f64> = aggregate.values.iter().map(|&v| self.aggregate_stats.normalize(v)).collect();
        Ok((0..=x.len() - w)
            .map(|i| Sample {
                window: x[i..i + w].to_vec(),
                target: self.appliance_stats.normalize(appliance.values[i + w / 2]).clamp(0.0, 1.0),
            })
            .collect())
    }

    /// Refit the normalization to these traces and train for `epochs`.
    /// Returns the model and per-epoch mean loss.
    pub fn train(&self, aggregate: &PowerTrace, appliance: &PowerTrace, epochs: usize) -> Result<(DisaggModel, Vec<f64>)> {
        let mut model = self.clone();
        model.aggregate_stats = MinMaxStats::from_values(&aggregate.values)?;
        model.appliance_stats = MinMaxStats::from_values(&appliance.values)?;
        let samples = model.samples(aggregate, appliance)?;
        let opts = TrainOptions::new(epochs, self.config.batch_size, self.config.lr, self.config.seed);
        let cfg = self.config.clone();
        let build = move |tree: &ParamTree| DisaggNet::read(&cfg, tree);
        let (params, _, history) = fit(&model.params, &build, &samples, &opts, None)?;
        model.params = params;
        Ok((model, history))
    }

    /// Normalized-scale MSE on the seq2point samples of these traces.
    pub fn mse(&self, aggregate: &PowerTrace, appliance: &PowerTrace) -> Result<f64> {
        let samples = self.samples(aggregate, appliance)?;
        Ok(mean_squared_error(&self.net()?, &samples))
    }

    /// Mean squared error and parameter gradient over explicit samples.
    pub fn loss_gradient(&self, samples: &[Sample]) -> Result<(f64, ParamTree)> {
        let net = self.net()?;
        let mut grads = net.zero_grads();
        let scale = 1.0 / samples.len().max(1) as f64;
        let total: f64 = samples.iter().map(|s| net.loss_and_grad(s, scale, &mut grads)).sum();
        Ok((total * scale, grads.to_tree()?))
    }

    /// Appliance estimate in watts for each window midpoint; the trace
    /// starts `window_len / 2` samples after the aggregate.
    pub fn estimate(&self, aggregate: &PowerTrace) -> Result<PowerTrace> {
        let w = self.config.window_len;
        check_len(aggregate, w)?;
        let net = self.net()?;
        let x: Vec<f64> = aggregate.values.iter().map(|&v| self.aggregate_stats.normalize(v)).collect();
        let values = (0..=x.len() - w)
            .map(|i| {
                let watts = self.appliance_stats.denormalize(net.predict(&x[i..i + w]));
                if watts > 0.0 {
                    watts
                } else {
                    0.0
                }
            })
            .collect();
        PowerTrace::new(aggregate.timestamp(w / 2), aggregate.period, values)
    }
}

/// Train a copy of `model` on one appliance's aligned trace.
pub fn train_disaggregator(
    model: &DisaggModel,
    aggregate: &PowerTrace,
    appliance: &PowerTrace,
    epochs: usize,
) -> Result<DisaggModel> {
    model.train(aggregate, appliance, epochs).map(|(m, _)| m)
}

/// One trained model per appliance name.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Disaggregator {
    pub models: BTreeMap<String, DisaggModel>,
}

impl Disaggregator {
    /// Train a model for every appliance of `household`. Each appliance's
    /// network is seeded from `config.seed` and its name.
    pub fn fit(config: &DisaggConfig, household: &HouseholdDataset, epochs: usize) -> Result<Self> {
        let mut models = BTreeMap::new();
        for (name, trace) in &household.appliances {
            let cfg = DisaggConfig {
                seed: derive_seed(config.seed, hash_str(name)),
                ..config.clone()
            };
            let model = build_disaggregator(&cfg)?;
            models.insert(name.clone(), train_disaggregator(&model, &household.aggregate, trace, epochs)?);
        }
        Ok(Disaggregator { models })
    }
}

/// Per-appliance watt estimates for `aggregate`, keyed like the models.
pub fn disaggregate(models: &Disaggregator, aggregate: &PowerTrace) -> Result<BTreeMap<String, PowerTrace>> {
    models
        .models
        .iter()
        .map(|(name, m)| Ok((name.clone(), m.estimate(aggregate)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_household, SynthAppliance, SynthConfig};
    use crate::metrics::mae;
    use crate::tensor::{finite_difference_gradient, max_relative_error};

    fn small() -> DisaggConfig {
        DisaggConfig {
            window_len: 16,
            conv_layers: 2,
            conv_filters: 3,
            conv_kernel: 3,
            pool: 2,
            conv_activation: Activation::Relu,
            lstm_hidden: 4,
            mapping_dim: 4,
            lr: 0.01,
            batch_size: 16,
            seed: 1,
        }
    }

    fn trace(values: Vec<f64>) -> PowerTrace {
        PowerTrace::new(1000, 6, values).unwrap()
    }

    #[test]
    fn parameter_layout() {
        let m = build_disaggregator(&small()).unwrap();
        // 16 -> conv 14 -> pool 7 -> conv 5 -> pool 2; flat = 3 * 2
        let expected = (3 * 1 * 3 + 3) + (3 * 3 * 3 + 3) + (6 * 4 + 4) + (4 * 4 * 5 + 16) + (4 * 4 + 4) + (8 + 1);
        assert_eq!(m.params.num_params(), expected);
        assert_eq!(build_disaggregator(&small()).unwrap(), m);
    }

    #[test]
    fn too_short_window_rejected() {
        let cfg = DisaggConfig {
            window_len: 6,
            ..small()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "window_len", .. })));
    }

    #[test]
    fn gradient_matches_fd() {
        let cfg = DisaggConfig {
            conv_activation: Activation::Tanh,
            ..small()
        };
        for seed in 0..3 {
            let m = build_disaggregator(&DisaggConfig { seed, ..cfg.clone() }).unwrap();
            let samples: Vec<Sample> = (0..2)
                .map(|k| Sample {
                    window: (0..16).map(|i| libm::sin((i * (k + 2)) as f64 * 0.7 + seed as f64)).collect(),
                    target: 0.3,
                })
                .collect();
            let (_, g) = m.loss_gradient(&samples).unwrap();
            let fd = finite_difference_gradient(
                |p| {
                    let mm = DisaggModel {
                        params: p.clone(),
                        ..m.clone()
                    };
                    mm.loss_gradient(&samples).unwrap().0
                },
                &m.params,
                1e-5,
            )
            .unwrap();
            let (err, path, _) = max_relative_error(&g, &fd).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err} at {path}");
        }
    }

    #[test]
    fn misaligned_traces_rejected() {
        let m = build_disaggregator(&small()).unwrap();
        let a = trace(vec![1.0; 40]);
        let b = PowerTrace::new(1006, 6, vec![1.0; 40]).unwrap();
        assert!(matches!(train_disaggregator(&m, &a, &b, 1), Err(Error::Alignment(_))));
        assert!(matches!(m.estimate(&trace(vec![1.0; 10])), Err(Error::Shape { .. })));
    }

    #[test]
    fn single_appliance_training_helps() {
        let cfg = SynthConfig {
            household_id: "h".into(),
            start_time: 0,
            period: 6,
            length: 300,
            seed: 4,
            appliances: vec![SynthAppliance::markov("heater", 1000.0, 0.05, 0.1, 5.0)],
        };
        let ds = synth_household(&cfg).unwrap();
        let app = ds.appliance("heater").unwrap();
        let m = build_disaggregator(&small()).unwrap();
        let (_, history) = m.train(&ds.aggregate, app, 0).unwrap();
        assert!(history.is_empty());
        let before = m.train(&ds.aggregate, app, 0).unwrap().0.mse(&ds.aggregate, app).unwrap();
        let (trained, history) = m.train(&ds.aggregate, app, 15).unwrap();
        let after = trained.mse(&ds.aggregate, app).unwrap();
        assert!(after < before, "{before} -> {after}");
        assert_eq!(history.len(), 15);
        assert_eq!(train_disaggregator(&m, &ds.aggregate, app, 2).unwrap(), train_disaggregator(&m, &ds.aggregate, app, 2).unwrap());
    }

    #[test]
    fn zero_appliance_estimates_zero() {
        let agg = trace((0..80).map(|i| (i % 7) as f64 * 50.0).collect());
        let zero = trace(vec![0.0; 80]);
        let m = train_disaggregator(&build_disaggregator(&small()).unwrap(), &agg, &zero, 2).unwrap();
        let est = m.estimate(&agg).unwrap();
        assert!(est.values.iter().all(|&v| v == 0.0));
        assert!(mae(&est.values, &vec![0.0; est.len()]).unwrap() < 0.05 * 300.0);
    }

    #[test]
    fn zero_aggregate_gives_zero_and_timebase() {
        let m = build_disaggregator(&small()).unwrap();
        let mut set = Disaggregator::default();
        let mut zeroed = m.clone();
        zeroed.params = m.params.zeros_like();
        set.models.insert("a".into(), zeroed.clone());
        set.models.insert("b".into(), zeroed);
        let agg = trace(vec![0.0; 40]);
        let out = disaggregate(&set, &agg).unwrap();
        assert_eq!(out.keys().cloned().collect::<Vec<_>>(), vec!["a".to_string(), "b".to_string()]);
        for t in out.values() {
            assert_eq!(t.len(), 40 - 16 + 1);
            assert_eq!(t.start_time, 1000 + 8 * 6);
            assert!(t.values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn estimates_never_negative() {
        let m = build_disaggregator(&small()).unwrap();
        let agg = trace((0..60).map(|i| ((i * 37) % 11) as f64 * 100.0).collect());
        for seed in 0..5 {
            let mm = build_disaggregator(&DisaggConfig { seed, ..small() }).unwrap();
            let est = mm.estimate(&agg).unwrap();
            assert!(est.values.iter().all(|&v| v >= 0.0));
        }
        assert!(m.estimate(&agg).is_ok());
    }
}
