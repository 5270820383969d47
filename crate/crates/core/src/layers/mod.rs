//! Differentiable layers with hand-written backward passes, parameter
//! initialization and the Adam optimizer.
//!
//! Public functions taking [`Tensor`]s validate shapes and return errors.
//! Model code goes through the `pub(crate)` slice-based methods on each
//! parameter struct, which skip the checks and accumulate gradients into a
//! caller-owned gradient struct of the same type.

use alloc::format;
use alloc::string::String;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{sigmoid_scalar, ParamTree, Tensor};

mod adam;
mod attention;
mod bilstm;
mod conv;
mod dense;
mod lstm;

pub use adam::{adam_step, adam_step_with, AdamConfig, AdamState};
pub use attention::{attention_backward, attention_forward, AttentionCache, AttentionParams};
pub use bilstm::{bilstm_backward, bilstm_forward, bilstm_hidden_states, BiLstmCache, BiLstmParams};
pub use conv::{
    conv1d_backward, conv1d_forward, max_pool1d, max_pool1d_backward, max_pool1d_with_indices,
    Conv1dParams,
};
pub use dense::{dense_backward, dense_forward, DenseParams};
pub(crate) use conv::{max_pool_raw, pool_out_len};
pub use lstm::{
    lstm_cell_backward, lstm_cell_forward, lstm_cell_forward_cached, LstmCellGrads,
    LstmCellParams, LstmState, LstmStepCache,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid_scalar(x),
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// A struct of named tensors that maps onto a sub-tree of a [`ParamTree`].
pub trait ParamGroup: Default + Clone {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor));

    fn write_to(&self, prefix: &str, tree: &mut ParamTree) -> Result<()> {
        let mut result = Ok(());
        self.visit(prefix, &mut |path, t| {
            if result.is_ok() {
                result = tree.insert(path, t.clone());
            }
        });
        result
    }

    fn read_from(tree: &ParamTree, prefix: &str) -> Result<Self> {
        let mut out = Self::default();
        let mut result = Ok(());
        out.visit_mut(prefix, &mut |path, t| {
            if result.is_ok() {
                match tree.get(&path) {
                    Ok(src) => *t = src.clone(),
                    Err(e) => result = Err(e),
                }
            }
        });
        result.map(|_| out)
    }

    fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.visit_mut("", &mut |_, t| t.fill_zero());
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

/// Seeded Glorot-uniform initializer; biases start at zero.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Initializer { rng }
    }

    pub fn from_seed(seed: u64) -> Self {
        Initializer::new(crate::rng::stream_rng(seed, 0x1917))
    }

    pub fn glorot(&mut self, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
        let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
        let mut t = Tensor::zeros(shape);
        for x in t.data.iter_mut() {
            *x = self.rng.random_range(-limit..limit);
        }
        t
    }

    /// Uniform(lo, hi) fill, used by tests that need arbitrary parameters.
    pub fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for x in t.data.iter_mut() {
            *x = self.rng.random_range(lo..hi);
        }
        t
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

// Row-major dense kernels shared by the layers.

/// `out += W x` for `W` with `cols` columns.
#[inline]
pub(crate) fn gemv_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut s = 0.0;
        for (a, b) in row.iter().zip(x) {
            s += a * b;
        }
        *o += s;
    }
}

/// `out += W^T d`.
#[inline]
pub(crate) fn gemv_t_acc(w: &[f64], cols: usize, d: &[f64], out: &mut [f64]) {
    for (&di, row) in d.iter().zip(w.chunks_exact(cols)) {
        if di == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * di;
        }
    }
}

/// `gw += d x^T`.
#[inline]
pub(crate) fn outer_acc(gw: &mut [f64], cols: usize, d: &[f64], x: &[f64]) {
    for (&di, row) in d.iter().zip(gw.chunks_exact_mut(cols)) {
        if di == 0.0 {
            continue;
        }
        for (g, xv) in row.iter_mut().zip(x) {
            *g += di * xv;
        }
    }
}

pub(crate) fn expect_shape(op: &'static str, t: &Tensor, shape: &[usize]) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Dimension {
            op,
            left: t.shape().to_vec(),
            right: shape.to_vec(),
        });
    }
    Ok(())
}
