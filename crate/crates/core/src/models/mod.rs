//! The BiLSTM-Attention forecaster (plus a plain stacked-LSTM baseline),
//! the CNN-LSTM seq2point disaggregator, and the shared minibatch trainer.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::Sample;
use crate::error::{Error, Result};
use crate::layers::{AdamConfig, AdamState};
use crate::rng::stream_rng;
use crate::tensor::ParamTree;

mod disagg;
mod forecast;
mod integrated;

pub use disagg::{
    build_disaggregator, build_disaggregator_with, disaggregate, train_disaggregator, DisaggConfig, DisaggModel,
    Disaggregator,
};
pub use forecast::{
    build_forecaster, build_forecaster_with, forecast_forward, train_supervised, ForecastArch, ForecastConfig,
    ForecastModel, TrainOutcome,
};
pub use integrated::{integrated_forecast, sum_predictions, ApplianceForecaster};

/// Minibatch Adam settings for one call to the trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Shuffle order of epoch `e` is derived from `(shuffle_seed, epoch_offset + e)`.
    pub shuffle_seed: u64,
    pub epoch_offset: u64,
    pub adam: AdamConfig,
}

impl TrainOptions {
    pub fn new(epochs: usize, batch_size: usize, lr: f64, shuffle_seed: u64) -> Self {
        TrainOptions {
            epochs,
            batch_size,
            lr,
            shuffle_seed,
            epoch_offset: 0,
            adam: AdamConfig::default(),
        }
    }
}

/// Model-specific forward/backward over one sample.
pub(crate) trait Network: Sized {
    fn predict(&self, window: &[f64]) -> f64;

    /// Squared error on `sample`; accumulates `scale * d(err^2)/d(params)`
    /// into `grads`.
    fn loss_and_grad(&self, sample: &Sample, scale: f64, grads: &mut Self) -> f64;

    fn zero_grads(&self) -> Self;

    fn to_tree(&self) -> Result<ParamTree>;
}

pub(crate) fn epoch_order(n: usize, shuffle_seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(shuffle_seed, epoch));
    order
}

pub(crate) fn check_samples(samples: &[Sample], window_len: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Argument("training needs at least one sample".into()));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.window.len() != window_len {
            return Err(Error::shape(
                "training sample",
                format!("sample {i} has window {} but the model expects {window_len}", s.window.len()),
            ));
        }
        if !(0.0..=1.0).contains(&s.target) {
            return Err(Error::Argument(format!(
                "sample {i} target {} is outside [0, 1]",
                s.target
            )));
        }
    }
    Ok(())
}

/// Minibatch MSE training. Returns the updated parameters, the optimizer
/// state and the mean per-sample loss of each epoch.
pub(crate) fn fit<N: Network>(
    params: &ParamTree,
    build: &dyn Fn(&ParamTree) -> Result<N>,
    samples: &[Sample],
    opts: &TrainOptions,
    optimizer: Option<AdamState>,
) -> Result<(ParamTree, AdamState, Vec<f64>)> {
    if opts.batch_size == 0 {
        return Err(Error::Argument("batch size must be at least 1".into()));
    }
    if !(opts.lr >= 0.0) {
        return Err(Error::Argument(format!("learning rate {} must be >= 0", opts.lr)));
    }
    let mut params = params.clone();
    let mut adam = optimizer.unwrap_or_else(|| AdamState::new(&params));
    params.check_layout(&adam.m)?;
    let mut history = Vec::with_capacity(opts.epochs);
    for e in 0..opts.epochs {
        let order = epoch_order(samples.len(), opts.shuffle_seed, opts.epoch_offset + e as u64);
        let mut total = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let net = build(&params)?;
            let mut grads = net.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                total += net.loss_and_grad(&samples[i], scale, &mut grads);
            }
            adam.update(&mut params, &grads.to_tree()?, opts.lr, &opts.adam)?;
        }
        history.push(total / samples.len() as f64);
    }
    Ok((params, adam, history))
}

/// Mean squared error of `predict` over `samples`.
pub(crate) fn mean_squared_error<N: Network>(net: &N, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|s| {
            let d = net.predict(&s.window) - s.target;
            d * d
        })
        .sum::<f64>()
        / samples.len() as f64
}
