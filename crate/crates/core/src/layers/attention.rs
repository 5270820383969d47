use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{expect_shape, join, Initializer, ParamGroup};
use crate::error::{Error, Result};
use crate::tensor::{softmax_slice, Tensor};

/// Additive scoring over time steps: `e_t = tanh(w . s_t + b)`,
/// `alpha = softmax(e)`, context `y = sum_t alpha_t s_t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionParams {
    /// `1 x feat`
    pub w_score: Tensor,
    /// `[1]`
    pub b_score: Tensor,
}

impl ParamGroup for AttentionParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(join(prefix, "b"), &self.b_score);
        f(join(prefix, "w"), &self.w_score);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "b"), &mut self.b_score);
        f(join(prefix, "w"), &mut self.w_score);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionCache {
    pub(crate) scores: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) context: Vec<f64>,
}

impl AttentionCache {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn context(&self) -> &[f64] {
        &self.context
    }
}

impl AttentionParams {
    pub fn zeros(feat: usize) -> Self {
        AttentionParams {
            w_score: Tensor::zeros(&[1, feat]),
            b_score: Tensor::zeros(&[1]),
        }
    }

    pub fn init(feat: usize, init: &mut Initializer) -> Self {
        AttentionParams {
            w_score: init.glorot(&[1, feat], feat, 1),
            b_score: Tensor::zeros(&[1]),
        }
    }

    pub fn features(&self) -> usize {
        self.w_score.cols()
    }

    pub(crate) fn forward_seq(&self, states: &[Vec<f64>]) -> AttentionCache {
        let w = &self.w_score.data;
        let b = self.b_score.data[0];
        let scores: Vec<f64> = states
            .iter()
            .map(|s| libm::tanh(s.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b))
            .collect();
        let weights = softmax_slice(&scores);
        let mut context = vec![0.0; self.features()];
        for (s, &a) in states.iter().zip(&weights) {
            for (c, v) in context.iter_mut().zip(s) {
                *c += a * v;
            }
        }
        AttentionCache {
            scores,
            weights,
            context,
        }
    }

    /// Returns gradients with respect to each state.
    pub(crate) fn backward_seq(
        &self,
        states: &[Vec<f64>],
        cache: &AttentionCache,
        d_context: &[f64],
        grads: &mut AttentionParams,
    ) -> Vec<Vec<f64>> {
        let w = &self.w_score.data;
        let d_alpha: Vec<f64> = states
            .iter()
            .map(|s| s.iter().zip(d_context).map(|(a, b)| a * b).sum())
            .collect();
        let mean: f64 = cache.weights.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        states
            .iter()
            .enumerate()
            .map(|(t, s)| {
                let a = cache.weights[t];
                let de = a * (d_alpha[t] - mean);
                let e = cache.scores[t];
                let dpre = de * (1.0 - e * e);
                grads.b_score.data[0] += dpre;
                for (g, v) in grads.w_score.data.iter_mut().zip(s) {
                    *g += dpre * v;
                }
                d_context
                    .iter()
                    .zip(w)
                    .map(|(dc, wv)| a * dc + dpre * wv)
                    .collect()
            })
            .collect()
    }
}

fn check(states: &[Tensor], p: &AttentionParams) -> Result<Vec<Vec<f64>>> {
    if states.is_empty() {
        return Err(Error::Argument("attention over zero time steps".into()));
    }
    let feat = p.features();
    expect_shape("attention weights", &p.w_score, &[1, feat])?;
    expect_shape("attention bias", &p.b_score, &[1])?;
    states
        .iter()
        .map(|s| expect_shape("attention state", s, &[feat]).map(|_| s.data().to_vec()))
        .collect()
}

/// Returns the context vector and the attention weights.
pub fn attention_forward(states: &[Tensor], p: &AttentionParams) -> Result<(Tensor, Tensor)> {
    let seq = check(states, p)?;
    let cache = p.forward_seq(&seq);
    Ok((Tensor::from_vec(cache.context), Tensor::from_vec(cache.weights)))
}

/// Gradients of a context-vector upstream gradient with respect to the states
/// and the scoring parameters.
pub fn attention_backward(
    states: &[Tensor],
    p: &AttentionParams,
    d_context: &Tensor,
) -> Result<(Vec<Tensor>, AttentionParams)> {
    let seq = check(states, p)?;
    expect_shape("attention context gradient", d_context, &[p.features()])?;
    let cache = p.forward_seq(&seq);
    let mut grads = p.zeros_like();
    let ds = p.backward_seq(&seq, &cache, &d_context.data, &mut grads);
    Ok((ds.into_iter().map(Tensor::from_vec).collect(), grads))
}
