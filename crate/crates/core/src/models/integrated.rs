use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::ForecastModel;
use crate::data::MinMaxStats;
use crate::error::{Error, Result};

/// A forecaster for one appliance plus the statistics of its training split.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ApplianceForecaster {
    pub model: ForecastModel,
    pub stats: MinMaxStats,
}

impl ApplianceForecaster {
    /// Next-step forecast in watts from the trailing window of `history`.
    pub fn predict_watts(&self, history: &[f64]) -> Result<f64> {
        let w = self.model.config.window_len;
        if history.len() < w {
            return Err(Error::shape(
                "appliance history",
                format!("{} samples given, window needs {w}", history.len()),
            ));
        }
        let window: Vec<f64> = history[history.len() - w..].iter().map(|&v| self.stats.normalize(v)).collect();
        Ok(self.stats.denormalize(self.model.predict(&window)?))
    }
}

/// Sum of per-appliance predictions in lexicographic name order.
pub fn sum_predictions(predictions: &BTreeMap<String, f64>) -> f64 {
    predictions.values().sum()
}

/// Total-load forecast: each appliance forecaster is run on its own
/// history (in watts) and the denormalized predictions are summed.
pub fn integrated_forecast(
    forecasters: &BTreeMap<String, ApplianceForecaster>,
    histories: &BTreeMap<String, Vec<f64>>,
) -> Result<f64> {
    if !forecasters.keys().eq(histories.keys()) {
        let missing: Vec<&String> = forecasters
            .keys()
            .filter(|k| !histories.contains_key(*k))
            .chain(histories.keys().filter(|k| !forecasters.contains_key(*k)))
            .collect();
        return Err(Error::Key(format!("appliance sets differ on {missing:?}")));
    }
    let mut predictions = BTreeMap::new();
    for (name, f) in forecasters {
        predictions.insert(name.clone(), f.predict_watts(&histories[name])?);
    }
    Ok(sum_predictions(&predictions))
}
