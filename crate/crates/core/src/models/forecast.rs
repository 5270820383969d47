use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{check_samples, fit, mean_squared_error, Network, TrainOptions};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::layers::{
    Activation, AdamState, AttentionParams, BiLstmParams, DenseParams, Initializer, LstmCellParams, ParamGroup,
};
use crate::tensor::ParamTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ForecastArch {
    /// Two stacked BiLSTM layers, temporal attention and a sigmoid head.
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "bilstm_attention"))]
    BiLstmAttention,
    /// Two stacked unidirectional LSTM layers; the last hidden state feeds
    /// the sigmoid head.
    Lstm,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ForecastConfig {
    pub window_len: usize,
    pub layer1_hidden: usize,
    pub layer2_hidden: usize,
    /// Steps between the last window value and the target.
    pub horizon: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub arch: ForecastArch,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig::desk()
    }
}

impl ForecastConfig {
    /// Small sizes that train in seconds on one core.
    pub fn desk() -> Self {
        ForecastConfig {
            window_len: 32,
            layer1_hidden: 16,
            layer2_hidden: 8,
            horizon: 1,
            lr: 0.001,
            batch_size: 32,
            seed: 0,
            arch: ForecastArch::BiLstmAttention,
        }
    }

    /// The full-size setting: 128 units then 68 units, batches of 512.
    pub fn full() -> Self {
        ForecastConfig {
            layer1_hidden: 128,
            layer2_hidden: 68,
            batch_size: 512,
            ..ForecastConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::config("window_len", "must be at least 2"));
        }
        if self.layer1_hidden == 0 {
            return Err(Error::config("layer1_hidden", "must be at least 1"));
        }
        if self.layer2_hidden == 0 {
            return Err(Error::config("layer2_hidden", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config("lr", format!("{} is not a positive learning rate", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        Ok(())
    }

    /// Closed-form parameter count of the architecture.
    pub fn param_count(&self) -> usize {
        let cell = |h: usize, n: usize| 4 * h * (h + n) + 4 * h;
        let (h1, h2) = (self.layer1_hidden, self.layer2_hidden);
        match self.arch {
            ForecastArch::BiLstmAttention => {
                2 * cell(h1, 1) + 2 * h1 * h1 + 2 * cell(h2, h1) + 2 * h2 * h2 + (h2 + 1) + (h2 + 1)
            }
            ForecastArch::Lstm => cell(h1, 1) + cell(h2, h1) + h2 + 1,
        }
    }
}

/// A forecaster: its configuration and flat named parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForecastModel {
    pub config: ForecastConfig,
    pub params: ParamTree,
}

#[derive(Clone)]
pub(crate) enum ForecastNet {
    BiAttn {
        l1: BiLstmParams,
        l2: BiLstmParams,
        attn: AttentionParams,
        head: DenseParams,
    },
    Lstm {
        l1: LstmCellParams,
        l2: LstmCellParams,
        head: DenseParams,
    },
}

impl ForecastNet {
    fn init(cfg: &ForecastConfig, init: &mut Initializer) -> Self {
        let (h1, h2) = (cfg.layer1_hidden, cfg.layer2_hidden);
        match cfg.arch {
            ForecastArch::BiLstmAttention => ForecastNet::BiAttn {
                l1: BiLstmParams::init(h1, 1, h1, init),
                l2: BiLstmParams::init(h2, h1, h2, init),
                attn: AttentionParams::init(h2, init),
                head: DenseParams::init(h2, 1, init),
            },
            ForecastArch::Lstm => ForecastNet::Lstm {
                l1: LstmCellParams::init(h1, 1, init),
                l2: LstmCellParams::init(h2, h1, init),
                head: DenseParams::init(h2, 1, init),
            },
        }
    }

    fn read(cfg: &ForecastConfig, tree: &ParamTree) -> Result<Self> {
        Ok(match cfg.arch {
            ForecastArch::BiLstmAttention => ForecastNet::BiAttn {
                l1: BiLstmParams::read_from(tree, "l1")?,
                l2: BiLstmParams::read_from(tree, "l2")?,
                attn: AttentionParams::read_from(tree, "attn")?,
                head: DenseParams::read_from(tree, "head")?,
            },
            ForecastArch::Lstm => ForecastNet::Lstm {
                l1: LstmCellParams::read_from(tree, "l1")?,
                l2: LstmCellParams::read_from(tree, "l2")?,
                head: DenseParams::read_from(tree, "head")?,
            },
        })
    }

    /// Forward pass; with `grad = Some((target, scale, grads))` also
    /// backpropagates `scale * (y - target)^2` into `grads`.
    fn forward_backward(&self, window: &[f64], grad: Option<(f64, f64, &mut ForecastNet)>) -> f64 {
        let xs: Vec<Vec<f64>> = window.iter().map(|&v| vec![v]).collect();
        match self {
            ForecastNet::BiAttn { l1, l2, attn, head } => {
                let c1 = l1.forward_seq(&xs);
                let c2 = l2.forward_seq(&c1.outputs);
                let a = attn.forward_seq(&c2.outputs);
                let y = head.forward_vec(&a.context, Activation::Sigmoid);
                if let Some((target, scale, ForecastNet::BiAttn { l1: g1, l2: g2, attn: ga, head: gh })) = grad {
                    let dy = 2.0 * scale * (y[0] - target);
                    let dctx = head.backward_vec(&a.context, &y, &[dy], Activation::Sigmoid, gh);
                    let ds2 = attn.backward_seq(&c2.outputs, &a, &dctx, ga);
                    let ds1 = l2.backward_seq(&c2, &ds2, g2);
                    l1.backward_seq(&c1, &ds1, g1);
                }
                y[0]
            }
            ForecastNet::Lstm { l1, l2, head } => {
                let c1 = l1.scan(&xs, false);
                let hs1: Vec<Vec<f64>> = c1.iter().map(|c| c.hidden.clone()).collect();
                let c2 = l2.scan(&hs1, false);
                let last = &c2[c2.len() - 1].hidden;
                let y = head.forward_vec(last, Activation::Sigmoid);
                if let Some((target, scale, ForecastNet::Lstm { l1: g1, l2: g2, head: gh })) = grad {
                    let dy = 2.0 * scale * (y[0] - target);
                    let dlast = head.backward_vec(last, &y, &[dy], Activation::Sigmoid, gh);
                    let mut dhs2 = vec![vec![0.0; l2.hidden()]; c2.len()];
                    dhs2[c2.len() - 1] = dlast;
                    let dhs1 = l2.scan_backward(&c2, &dhs2, g2);
                    l1.scan_backward(&c1, &dhs1, g1);
                }
                y[0]
            }
        }
    }
}

impl Network for ForecastNet {
    fn predict(&self, window: &[f64]) -> f64 {
        self.forward_backward(window, None)
    }

    fn loss_and_grad(&self, sample: &Sample, scale: f64, grads: &mut Self) -> f64 {
        let y = self.forward_backward(&sample.window, Some((sample.target, scale, grads)));
        (y - sample.target) * (y - sample.target)
    }

    fn zero_grads(&self) -> Self {
        match self {
            ForecastNet::BiAttn { l1, l2, attn, head } => ForecastNet::BiAttn {
                l1: l1.zeros_like(),
                l2: l2.zeros_like(),
                attn: attn.zeros_like(),
                head: head.zeros_like(),
            },
            ForecastNet::Lstm { l1, l2, head } => ForecastNet::Lstm {
                l1: l1.zeros_like(),
                l2: l2.zeros_like(),
                head: head.zeros_like(),
            },
        }
    }

    fn to_tree(&self) -> Result<ParamTree> {
        let mut tree = ParamTree::new();
        match self {
            ForecastNet::BiAttn { l1, l2, attn, head } => {
                l1.write_to("l1", &mut tree)?;
                l2.write_to("l2", &mut tree)?;
                attn.write_to("attn", &mut tree)?;
                head.write_to("head", &mut tree)?;
            }
            ForecastNet::Lstm { l1, l2, head } => {
                l1.write_to("l1", &mut tree)?;
                l2.write_to("l2", &mut tree)?;
                head.write_to("head", &mut tree)?;
            }
        }
        Ok(tree)
    }
}

/// Glorot-initialized forecaster seeded from `config.seed`.
pub fn build_forecaster(config: &ForecastConfig) -> Result<ForecastModel> {
    build_forecaster_with(config, &mut Initializer::from_seed(config.seed))
}

pub fn build_forecaster_with(config: &ForecastConfig, init: &mut Initializer) -> Result<ForecastModel> {
    config.validate()?;
    let params = ForecastNet::init(config, init).to_tree()?;
    Ok(ForecastModel {
        config: config.clone(),
        params,
    })
}

/// Training result: the new model, the optimizer state to resume from and
/// the mean training loss of each epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ForecastModel,
    pub optimizer: AdamState,
    pub loss_history: Vec<f64>,
}

impl ForecastModel {
    /// Wrap existing parameters, checking they fit the architecture.
    pub fn from_params(config: ForecastConfig, params: ParamTree) -> Result<Self> {
        let template = build_forecaster(&config)?;
        template.params.check_layout(&params)?;
        if !params.is_finite() {
            return Err(Error::Argument("forecaster parameters contain non-finite values".into()));
        }
        Ok(ForecastModel { config, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    pub(crate) fn net(&self) -> Result<ForecastNet> {
        ForecastNet::read(&self.config, &self.params)
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.config.window_len {
            return Err(Error::shape(
                "forecast input",
                format!("window has {} values, model expects {}", window.len(), self.config.window_len),
            ));
        }
        Ok(())
    }

    /// Normalized next-value prediction in (0, 1).
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        self.check_window(window)?;
        Ok(self.net()?.predict(window))
    }

    pub fn predict_many(&self, windows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let net = self.net()?;
        windows
            .iter()
            .map(|w| {
                self.check_window(w)?;
                Ok(net.predict(w))
            })
            .collect()
    }

    /// Mean squared error over `samples` (0 for an empty set).
    pub fn mse(&self, samples: &[Sample]) -> Result<f64> {
        for s in samples {
            self.check_window(&s.window)?;
        }
        Ok(mean_squared_error(&self.net()?, samples))
    }

    /// Mean squared error and its gradient with respect to every parameter.
    pub fn loss_gradient(&self, samples: &[Sample]) -> Result<(f64, ParamTree)> {
        check_samples(samples, self.config.window_len)?;
        let net = self.net()?;
        let mut grads = net.zero_grads();
        let scale = 1.0 / samples.len() as f64;
        let total: f64 = samples.iter().map(|s| net.loss_and_grad(s, scale, &mut grads)).sum();
        Ok((total * scale, grads.to_tree()?))
    }

    /// Minibatch Adam on the MSE. `optimizer` resumes a previous state;
    /// `None` starts from zero moments.
    pub fn train(&self, samples: &[Sample], opts: &TrainOptions, optimizer: Option<AdamState>) -> Result<TrainOutcome> {
        check_samples(samples, self.config.window_len)?;
        let cfg = self.config.clone();
        let build = move |tree: &ParamTree| ForecastNet::read(&cfg, tree);
        let (params, optimizer, loss_history) = fit(&self.params, &build, samples, opts, optimizer)?;
        Ok(TrainOutcome {
            model: ForecastModel {
                config: self.config.clone(),
                params,
            },
            optimizer,
            loss_history,
        })
    }

    /// Training options taken from the model config.
    pub fn train_options(&self, epochs: usize) -> TrainOptions {
        TrainOptions::new(epochs, self.config.batch_size, self.config.lr, self.config.seed)
    }
}

/// Predict the normalized next value for one window.
pub fn forecast_forward(model: &ForecastModel, window: &[f64]) -> Result<f64> {
    model.predict(window)
}

/// Train with the given epochs, batch size and learning rate, shuffling
/// from the model seed and starting a fresh optimizer.
pub fn train_supervised(
    model: &ForecastModel,
    samples: &[Sample],
    epochs: usize,
    batch_size: usize,
    lr: f64,
) -> Result<TrainOutcome> {
    let opts = TrainOptions::new(epochs, batch_size, lr, model.config.seed);
    model.train(samples, &opts, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;
    use crate::tensor::{finite_difference_gradient, max_relative_error};

    fn tiny(arch: ForecastArch, seed: u64) -> ForecastModel {
        let cfg = ForecastConfig {
            window_len: 4,
            layer1_hidden: 3,
            layer2_hidden: 2,
            horizon: 1,
            lr: 0.01,
            batch_size: 4,
            seed,
            arch,
        };
        build_forecaster(&cfg).unwrap()
    }

    fn sine_samples(n: usize, w: usize) -> Vec<Sample> {
        let values: Vec<f64> = (0..n + w).map(|i| 0.5 + 0.4 * libm::sin(i as f64 * 0.4)).collect();
        make_windows(&values, w, 1).unwrap()
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        for arch in [ForecastArch::BiLstmAttention, ForecastArch::Lstm] {
            for (h1, h2) in [(2, 2), (3, 2), (16, 8)] {
                let cfg = ForecastConfig {
                    layer1_hidden: h1,
                    layer2_hidden: h2,
                    arch,
                    ..ForecastConfig::desk()
                };
                let m = build_forecaster(&cfg).unwrap();
                assert_eq!(m.num_params(), cfg.param_count());
            }
        }
        let cfg = ForecastConfig {
            layer1_hidden: 2,
            layer2_hidden: 2,
            ..ForecastConfig::desk()
        };
        assert_eq!(cfg.param_count(), 166);
    }

    #[test]
    fn output_in_unit_interval_and_deterministic() {
        let a = tiny(ForecastArch::BiLstmAttention, 5);
        let b = tiny(ForecastArch::BiLstmAttention, 5);
        assert_eq!(a, b);
        for s in sine_samples(10, 4) {
            let y = a.predict(&s.window).unwrap();
            assert!(y > 0.0 && y < 1.0);
            assert_eq!(y.to_bits(), b.predict(&s.window).unwrap().to_bits());
        }
        assert_ne!(a, tiny(ForecastArch::BiLstmAttention, 6));
    }

    #[test]
    fn window_length_checked() {
        let m = tiny(ForecastArch::Lstm, 1);
        assert!(matches!(m.predict(&[0.1; 3]), Err(Error::Shape { .. })));
    }

    #[test]
    fn config_errors_name_field() {
        let mut cfg = ForecastConfig::desk();
        cfg.layer2_hidden = 0;
        assert!(matches!(build_forecaster(&cfg), Err(Error::Config { field: "layer2_hidden", .. })));
        let mut cfg = ForecastConfig::desk();
        cfg.lr = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config { field: "lr", .. })));
    }

    #[test]
    fn end_to_end_gradient_matches_fd() {
        let samples = sine_samples(3, 4);
        for arch in [ForecastArch::BiLstmAttention, ForecastArch::Lstm] {
            for seed in 0..4 {
                let m = tiny(arch, seed);
                let (_, g) = m.loss_gradient(&samples).unwrap();
                let fd = finite_difference_gradient(
                    |p| {
                        let mm = ForecastModel {
                            config: m.config.clone(),
                            params: p.clone(),
                        };
                        mm.mse(&samples).unwrap()
                    },
                    &m.params,
                    1e-5,
                )
                .unwrap();
                let (err, path, _) = max_relative_error(&g, &fd).unwrap();
                assert!(err < 1e-4, "{arch:?} seed {seed}: {err} at {path}");
            }
        }
    }

    #[test]
    fn zero_lr_leaves_params() {
        let m = tiny(ForecastArch::BiLstmAttention, 2);
        let out = train_supervised(&m, &sine_samples(12, 4), 2, 4, 0.0).unwrap();
        assert_eq!(out.model.params, m.params);
        assert_eq!(out.loss_history.len(), 2);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let m = tiny(ForecastArch::Lstm, 2);
        let out = train_supervised(&m, &sine_samples(12, 4), 0, 4, 0.1).unwrap();
        assert_eq!(out.model, m);
        assert!(out.loss_history.is_empty());
    }

    #[test]
    fn training_reduces_loss() {
        let m = tiny(ForecastArch::BiLstmAttention, 3);
        let samples = sine_samples(40, 4);
        let out = train_supervised(&m, &samples, 30, 8, 0.02).unwrap();
        let first = out.loss_history[0];
        let last = *out.loss_history.last().unwrap();
        assert!(last < first * 0.5, "{first} -> {last}");
        assert!(out.model.mse(&samples).unwrap() < m.mse(&samples).unwrap());
    }

    #[test]
    fn constant_target_is_learned() {
        let cfg = ForecastConfig {
            window_len: 6,
            layer1_hidden: 8,
            layer2_hidden: 8,
            lr: 0.01,
            batch_size: 8,
            ..ForecastConfig::desk()
        };
        let m = build_forecaster(&cfg).unwrap();
        let samples: Vec<Sample> = (0..32)
            .map(|i| Sample {
                window: (0..6).map(|j| ((i * 7 + j * 3) % 10) as f64 / 10.0).collect(),
                target: 0.5,
            })
            .collect();
        let out = train_supervised(&m, &samples, 20, 8, 0.01).unwrap();
        assert!(out.loss_history.iter().all(|&l| l >= 0.0));
        assert!(out.loss_history[19] < out.loss_history[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let m = tiny(ForecastArch::BiLstmAttention, 3);
        let samples = sine_samples(20, 4);
        let a = train_supervised(&m, &samples, 3, 8, 0.01).unwrap();
        let b = train_supervised(&m, &samples, 3, 8, 0.01).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.optimizer, b.optimizer);
    }

    #[test]
    fn target_outside_unit_interval_rejected() {
        let m = tiny(ForecastArch::Lstm, 1);
        let s = vec![Sample {
            window: vec![0.1; 4],
            target: 1.5,
        }];
        assert!(matches!(train_supervised(&m, &s, 1, 1, 0.1), Err(Error::Argument(_))));
        assert!(matches!(train_supervised(&m, &[], 1, 1, 0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn from_params_checks_layout() {
        let m = tiny(ForecastArch::BiLstmAttention, 1);
        let other = tiny(ForecastArch::Lstm, 1);
        assert!(ForecastModel::from_params(m.config.clone(), other.params).is_err());
        assert!(ForecastModel::from_params(m.config.clone(), m.params.clone()).is_ok());
    }
}
