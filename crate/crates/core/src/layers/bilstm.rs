use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::lstm::LstmStepCache;
use super::{expect_shape, gemv_acc, gemv_t_acc, join, outer_acc, Initializer, LstmCellParams, ParamGroup};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bidirectional LSTM layer. Each direction is a full LSTM cell; the
/// per-step output is `tanh(W_fwd s_fwd + W_bwd s_bwd)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BiLstmParams {
    pub forward_cell: LstmCellParams,
    pub backward_cell: LstmCellParams,
    pub w_fwd_out: Tensor,
    pub w_bwd_out: Tensor,
}

impl ParamGroup for BiLstmParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        self.backward_cell.visit(&join(prefix, "bwd"), f);
        self.forward_cell.visit(&join(prefix, "fwd"), f);
        f(join(prefix, "out_bwd"), &self.w_bwd_out);
        f(join(prefix, "out_fwd"), &self.w_fwd_out);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        self.backward_cell.visit_mut(&join(prefix, "bwd"), f);
        self.forward_cell.visit_mut(&join(prefix, "fwd"), f);
        f(join(prefix, "out_bwd"), &mut self.w_bwd_out);
        f(join(prefix, "out_fwd"), &mut self.w_fwd_out);
    }
}

/// Forward-pass record: per-direction step caches (backward direction in
/// its own processing order) and the combined outputs in time order.
#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub(crate) fwd: Vec<LstmStepCache>,
    pub(crate) bwd: Vec<LstmStepCache>,
    pub(crate) outputs: Vec<Vec<f64>>,
}

impl BiLstmCache {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }
}

impl BiLstmParams {
    pub fn zeros(hidden: usize, input: usize, out: usize) -> Self {
        BiLstmParams {
            forward_cell: LstmCellParams::zeros(hidden, input),
            backward_cell: LstmCellParams::zeros(hidden, input),
            w_fwd_out: Tensor::zeros(&[out, hidden]),
            w_bwd_out: Tensor::zeros(&[out, hidden]),
        }
    }

    pub fn init(hidden: usize, input: usize, out: usize, init: &mut Initializer) -> Self {
        BiLstmParams {
            forward_cell: LstmCellParams::init(hidden, input, init),
            backward_cell: LstmCellParams::init(hidden, input, init),
            w_fwd_out: init.glorot(&[out, hidden], hidden, out),
            w_bwd_out: init.glorot(&[out, hidden], hidden, out),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward_cell.hidden()
    }

    pub fn input(&self) -> usize {
        self.forward_cell.input()
    }

    pub fn output(&self) -> usize {
        self.w_fwd_out.rows()
    }

    pub fn validate(&self) -> Result<()> {
        self.forward_cell.validate()?;
        self.backward_cell.validate()?;
        let h = self.hidden();
        if self.backward_cell.hidden() != h || self.backward_cell.input() != self.input() {
            return Err(Error::Dimension {
                op: "bilstm cells",
                left: self.forward_cell.w_input.shape().to_vec(),
                right: self.backward_cell.w_input.shape().to_vec(),
            });
        }
        expect_shape("bilstm forward projection", &self.w_fwd_out, &[self.output(), h])?;
        expect_shape("bilstm backward projection", &self.w_bwd_out, &[self.output(), h])
    }

    pub(crate) fn forward_seq(&self, xs: &[Vec<f64>]) -> BiLstmCache {
        let fwd = self.forward_cell.scan(xs, false);
        let bwd = self.backward_cell.scan(xs, true);
        let n = xs.len();
        let h = self.hidden();
        let outputs = (0..n)
            .map(|t| {
                let mut o = vec![0.0; self.output()];
                gemv_acc(&self.w_fwd_out.data, h, &fwd[t].hidden, &mut o);
                gemv_acc(&self.w_bwd_out.data, h, &bwd[n - 1 - t].hidden, &mut o);
                o.iter_mut().for_each(|v| *v = libm::tanh(*v));
                o
            })
            .collect();
        BiLstmCache { fwd, bwd, outputs }
    }

    /// Returns input gradients in time order.
    pub(crate) fn backward_seq(
        &self,
        cache: &BiLstmCache,
        d_out: &[Vec<f64>],
        grads: &mut BiLstmParams,
    ) -> Vec<Vec<f64>> {
        let n = cache.outputs.len();
        let h = self.hidden();
        let mut dh_fwd = vec![vec![0.0; h]; n];
        let mut dh_bwd = vec![vec![0.0; h]; n];
        for t in 0..n {
            let y = &cache.outputs[t];
            let dpre: Vec<f64> = d_out[t].iter().zip(y).map(|(d, y)| d * (1.0 - y * y)).collect();
            let k = n - 1 - t;
            outer_acc(&mut grads.w_fwd_out.data, h, &dpre, &cache.fwd[t].hidden);
            outer_acc(&mut grads.w_bwd_out.data, h, &dpre, &cache.bwd[k].hidden);
            gemv_t_acc(&self.w_fwd_out.data, h, &dpre, &mut dh_fwd[t]);
            gemv_t_acc(&self.w_bwd_out.data, h, &dpre, &mut dh_bwd[k]);
        }
        let mut dx = self
            .forward_cell
            .scan_backward(&cache.fwd, &dh_fwd, &mut grads.forward_cell);
        let dx_bwd = self
            .backward_cell
            .scan_backward(&cache.bwd, &dh_bwd, &mut grads.backward_cell);
        for (t, d) in dx.iter_mut().enumerate() {
            for (a, b) in d.iter_mut().zip(&dx_bwd[n - 1 - t]) {
                *a += b;
            }
        }
        dx
    }
}

fn check_inputs(xs: &[Tensor], p: &BiLstmParams) -> Result<Vec<Vec<f64>>> {
    if xs.is_empty() {
        return Err(Error::Argument("bilstm needs a non-empty sequence".into()));
    }
    p.validate()?;
    xs.iter()
        .map(|x| expect_shape("bilstm input", x, &[p.input()]).map(|_| x.data().to_vec()))
        .collect()
}

pub fn bilstm_forward(xs: &[Tensor], p: &BiLstmParams) -> Result<Vec<Tensor>> {
    let seq = check_inputs(xs, p)?;
    Ok(p
        .forward_seq(&seq)
        .outputs
        .into_iter()
        .map(Tensor::from_vec)
        .collect())
}

/// Forward and backward direction hidden states, both indexed by time step.
pub fn bilstm_hidden_states(xs: &[Tensor], p: &BiLstmParams) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    let seq = check_inputs(xs, p)?;
    let cache = p.forward_seq(&seq);
    let fwd = cache.fwd.iter().map(|c| Tensor::from_vec(c.hidden.clone())).collect();
    let bwd = cache
        .bwd
        .iter()
        .rev()
        .map(|c| Tensor::from_vec(c.hidden.clone()))
        .collect();
    Ok((fwd, bwd))
}

/// Gradients of per-step upstream gradients `d_outputs` with respect to
/// the inputs (time order) and the parameters.
pub fn bilstm_backward(xs: &[Tensor], p: &BiLstmParams, d_outputs: &[Tensor]) -> Result<(Vec<Tensor>, BiLstmParams)> {
    let seq = check_inputs(xs, p)?;
    if d_outputs.len() != seq.len() {
        return Err(Error::shape(
            "bilstm output gradient",
            format!("{} steps for a sequence of {}", d_outputs.len(), seq.len()),
        ));
    }
    let d: Vec<Vec<f64>> = d_outputs
        .iter()
        .map(|g| expect_shape("bilstm output gradient", g, &[p.output()]).map(|_| g.data().to_vec()))
        .collect::<Result<_>>()?;
    let cache = p.forward_seq(&seq);
    let mut grads = p.zeros_like();
    let dx = p.backward_seq(&cache, &d, &mut grads);
    Ok((dx.into_iter().map(Tensor::from_vec).collect(), grads))
}
