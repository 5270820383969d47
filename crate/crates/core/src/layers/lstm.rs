use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{expect_shape, gemv_acc, gemv_t_acc, join, outer_acc, Initializer, ParamGroup};
use crate::error::Result;
use crate::tensor::{sigmoid_scalar, Tensor};

/// Weights of one LSTM cell. Every gate reads the concatenation
/// `[hidden_prev, input]`, so weights are `hidden x (hidden + input)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LstmCellParams {
    pub w_input: Tensor,
    pub w_forget: Tensor,
    pub w_output: Tensor,
    pub w_cell: Tensor,
    pub b_input: Tensor,
    pub b_forget: Tensor,
    pub b_output: Tensor,
    pub b_cell: Tensor,
}

impl ParamGroup for LstmCellParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(join(prefix, "b_cell"), &self.b_cell);
        f(join(prefix, "b_forget"), &self.b_forget);
        f(join(prefix, "b_input"), &self.b_input);
        f(join(prefix, "b_output"), &self.b_output);
        f(join(prefix, "w_cell"), &self.w_cell);
        f(join(prefix, "w_forget"), &self.w_forget);
        f(join(prefix, "w_input"), &self.w_input);
        f(join(prefix, "w_output"), &self.w_output);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "b_cell"), &mut self.b_cell);
        f(join(prefix, "b_forget"), &mut self.b_forget);
        f(join(prefix, "b_input"), &mut self.b_input);
        f(join(prefix, "b_output"), &mut self.b_output);
        f(join(prefix, "w_cell"), &mut self.w_cell);
        f(join(prefix, "w_forget"), &mut self.w_forget);
        f(join(prefix, "w_input"), &mut self.w_input);
        f(join(prefix, "w_output"), &mut self.w_output);
    }
}

impl LstmCellParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = Tensor::zeros(&[hidden, hidden + input]);
        let b = Tensor::zeros(&[hidden]);
        LstmCellParams {
            w_input: w.clone(),
            w_forget: w.clone(),
            w_output: w.clone(),
            w_cell: w,
            b_input: b.clone(),
            b_forget: b.clone(),
            b_output: b.clone(),
            b_cell: b,
        }
    }

    pub fn init(hidden: usize, input: usize, init: &mut Initializer) -> Self {
        let cols = hidden + input;
        let mut p = LstmCellParams::zeros(hidden, input);
        p.w_input = init.glorot(&[hidden, cols], cols, hidden);
        p.w_forget = init.glorot(&[hidden, cols], cols, hidden);
        p.w_output = init.glorot(&[hidden, cols], cols, hidden);
        p.w_cell = init.glorot(&[hidden, cols], cols, hidden);
        p.b_forget = Tensor::from_vec(alloc::vec![1.0; hidden]);
        p
    }

    pub fn hidden(&self) -> usize {
        self.b_input.len()
    }

    pub fn input(&self) -> usize {
        self.w_input.cols() - self.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, n) = (self.hidden(), self.input());
        for w in [&self.w_input, &self.w_forget, &self.w_output, &self.w_cell] {
            expect_shape("lstm weights", w, &[h, h + n])?;
        }
        for b in [&self.b_input, &self.b_forget, &self.b_output, &self.b_cell] {
            expect_shape("lstm bias", b, &[h])?;
        }
        Ok(())
    }

    /// One time step on raw slices.
    pub(crate) fn step(&self, h_prev: &[f64], c_prev: &[f64], x: &[f64]) -> LstmStepCache {
        let h = self.hidden();
        let cols = self.w_input.cols();
        let mut z = Vec::with_capacity(cols);
        z.extend_from_slice(h_prev);
        z.extend_from_slice(x);

        let mut gi = self.b_input.data.clone();
        let mut gf = self.b_forget.data.clone();
        let mut go = self.b_output.data.clone();
        let mut gc = self.b_cell.data.clone();
        gemv_acc(&self.w_input.data, cols, &z, &mut gi);
        gemv_acc(&self.w_forget.data, cols, &z, &mut gf);
        gemv_acc(&self.w_output.data, cols, &z, &mut go);
        gemv_acc(&self.w_cell.data, cols, &z, &mut gc);

        let mut cell = vec![0.0; h];
        let mut tanh_cell = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        for j in 0..h {
            gi[j] = sigmoid_scalar(gi[j]);
            gf[j] = sigmoid_scalar(gf[j]);
            go[j] = sigmoid_scalar(go[j]);
            gc[j] = libm::tanh(gc[j]);
            cell[j] = gi[j] * gc[j] + gf[j] * c_prev[j];
            tanh_cell[j] = libm::tanh(cell[j]);
            hidden[j] = go[j] * tanh_cell[j];
        }
        LstmStepCache {
            z,
            input_gate: gi,
            forget_gate: gf,
            output_gate: go,
            candidate: gc,
            cell_prev: c_prev.to_vec(),
            cell,
            tanh_cell,
            hidden,
        }
    }

    /// Backward through one step. `dh` and `dc` are the gradients arriving
    /// at this step's hidden and cell outputs. Returns `(dh_prev, dc_prev, dx)`
    /// and accumulates parameter gradients into `grads`.
    pub(crate) fn step_backward(
        &self,
        cache: &LstmStepCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCellParams,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden();
        let cols = self.w_input.cols();
        let mut d_in = vec![0.0; h];
        let mut d_forget = vec![0.0; h];
        let mut d_out = vec![0.0; h];
        let mut d_cand = vec![0.0; h];
        let mut dc_prev = vec![0.0; h];
        for j in 0..h {
            let (i, f, o, g) = (
                cache.input_gate[j],
                cache.forget_gate[j],
                cache.output_gate[j],
                cache.candidate[j],
            );
            let tc = cache.tanh_cell[j];
            let dcell = dc[j] + dh[j] * o * (1.0 - tc * tc);
            d_out[j] = dh[j] * tc * o * (1.0 - o);
            d_in[j] = dcell * g * i * (1.0 - i);
            d_cand[j] = dcell * i * (1.0 - g * g);
            d_forget[j] = dcell * cache.cell_prev[j] * f * (1.0 - f);
            dc_prev[j] = dcell * f;
        }

        let mut dz = vec![0.0; cols];
        for (d, w, gw, gb) in [
            (&d_in, &self.w_input, &mut grads.w_input, &mut grads.b_input),
            (&d_forget, &self.w_forget, &mut grads.w_forget, &mut grads.b_forget),
            (&d_out, &self.w_output, &mut grads.w_output, &mut grads.b_output),
            (&d_cand, &self.w_cell, &mut grads.w_cell, &mut grads.b_cell),
        ] {
            outer_acc(&mut gw.data, cols, d, &cache.z);
            for (b, v) in gb.data.iter_mut().zip(d.iter()) {
                *b += v;
            }
            gemv_t_acc(&w.data, cols, d, &mut dz);
        }
        let dx = dz.split_off(h);
        (dz, dc_prev, dx)
    }

    /// Scan a sequence from zero state. Caches come back in processing
    /// order, which is reversed time order when `reverse` is set.
    pub(crate) fn scan(&self, xs: &[Vec<f64>], reverse: bool) -> Vec<LstmStepCache> {
        let h = self.hidden();
        let mut caches: Vec<LstmStepCache> = Vec::with_capacity(xs.len());
        let zero = vec![0.0; h];
        for k in 0..xs.len() {
            let t = if reverse { xs.len() - 1 - k } else { k };
            let step = match caches.last() {
                Some(prev) => self.step(&prev.hidden, &prev.cell, &xs[t]),
                None => self.step(&zero, &zero, &xs[t]),
            };
            caches.push(step);
        }
        caches
    }

    /// Backpropagation through time for [`scan`](Self::scan). `dhs[k]` is the
    /// upstream gradient on the hidden output of processing step `k`. Returns
    /// input gradients indexed by processing step.
    pub(crate) fn scan_backward(
        &self,
        caches: &[LstmStepCache],
        dhs: &[Vec<f64>],
        grads: &mut LstmCellParams,
    ) -> Vec<Vec<f64>> {
        let h = self.hidden();
        let mut dxs = vec![Vec::new(); caches.len()];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for k in (0..caches.len()).rev() {
            let dh: Vec<f64> = dhs[k].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let (dh_prev, dc_prev, dx) = self.step_backward(&caches[k], &dh, &dc_next, grads);
            dxs[k] = dx;
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        dxs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub cell: Tensor,
    pub hidden: Tensor,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            cell: Tensor::zeros(&[hidden]),
            hidden: Tensor::zeros(&[hidden]),
        }
    }
}

/// Values saved by a forward step for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStepCache {
    pub(crate) z: Vec<f64>,
    pub(crate) input_gate: Vec<f64>,
    pub(crate) forget_gate: Vec<f64>,
    pub(crate) output_gate: Vec<f64>,
    pub(crate) candidate: Vec<f64>,
    pub(crate) cell_prev: Vec<f64>,
    pub(crate) cell: Vec<f64>,
    pub(crate) tanh_cell: Vec<f64>,
    pub(crate) hidden: Vec<f64>,
}

impl LstmStepCache {
    pub fn state(&self) -> LstmState {
        LstmState {
            cell: Tensor::from_vec(self.cell.clone()),
            hidden: Tensor::from_vec(self.hidden.clone()),
        }
    }
}

fn check_step(prev: &LstmState, x: &Tensor, p: &LstmCellParams) -> Result<()> {
    p.validate()?;
    let h = p.hidden();
    expect_shape("lstm cell state", &prev.cell, &[h])?;
    expect_shape("lstm hidden state", &prev.hidden, &[h])?;
    expect_shape("lstm input", x, &[p.input()])
}

pub fn lstm_cell_forward(prev: &LstmState, x: &Tensor, p: &LstmCellParams) -> Result<LstmState> {
    lstm_cell_forward_cached(prev, x, p).map(|(s, _)| s)
}

pub fn lstm_cell_forward_cached(
    prev: &LstmState,
    x: &Tensor,
    p: &LstmCellParams,
) -> Result<(LstmState, LstmStepCache)> {
    check_step(prev, x, p)?;
    let cache = p.step(&prev.hidden.data, &prev.cell.data, &x.data);
    Ok((cache.state(), cache))
}

/// Gradients of one cell step with respect to everything it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellGrads {
    pub input: Tensor,
    pub hidden_prev: Tensor,
    pub cell_prev: Tensor,
    pub params: LstmCellParams,
}

pub fn lstm_cell_backward(
    cache: &LstmStepCache,
    p: &LstmCellParams,
    grad_hidden: &Tensor,
    grad_cell: &Tensor,
) -> Result<LstmCellGrads> {
    p.validate()?;
    let h = p.hidden();
    expect_shape("lstm hidden gradient", grad_hidden, &[h])?;
    expect_shape("lstm cell gradient", grad_cell, &[h])?;
    let mut grads = p.zeros_like();
    let (dh_prev, dc_prev, dx) = p.step_backward(cache, &grad_hidden.data, &grad_cell.data, &mut grads);
    Ok(LstmCellGrads {
        input: Tensor::from_vec(dx),
        hidden_prev: Tensor::from_vec(dh_prev),
        cell_prev: Tensor::from_vec(dc_prev),
        params: grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_difference_gradient, max_relative_error, ParamTree};

    fn random_cell(hidden: usize, input: usize, seed: u64) -> LstmCellParams {
        let mut init = Initializer::from_seed(seed);
        let mut p = LstmCellParams::zeros(hidden, input);
        p.visit_mut("", &mut |_, t| *t = init.uniform(t.shape(), -0.5, 0.5));
        p
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_params_forced_values() {
        let p = LstmCellParams::zeros(3, 2);
        let c = 0.8;
        let prev = LstmState {
            cell: Tensor::from_vec(vec![c; 3]),
            hidden: Tensor::from_vec(vec![0.1, -0.2, 0.3]),
        };
        let x = Tensor::from_vec(vec![1.0, -1.0]);
        let s = lstm_cell_forward(&prev, &x, &p).unwrap();
        for j in 0..3 {
            assert_eq!(s.cell.data()[j], 0.5 * c);
            assert!((s.hidden.data()[j] - 0.5 * (0.5 * c).tanh()).abs() < 1e-15);
        }
        let s = lstm_cell_forward(&LstmState::zeros(3), &x, &p).unwrap();
        assert_eq!(s, LstmState::zeros(3));
    }

    #[test]
    fn matches_scalar_reimplementation() {
        let p = random_cell(2, 1, 11);
        let h_prev = [0.3, -0.6];
        let c_prev = [0.9, -0.1];
        let x = [0.7];
        let s = lstm_cell_forward(
            &LstmState {
                cell: Tensor::from_vec(c_prev.to_vec()),
                hidden: Tensor::from_vec(h_prev.to_vec()),
            },
            &Tensor::from_vec(x.to_vec()),
            &p,
        )
        .unwrap();
        let z = [h_prev[0], h_prev[1], x[0]];
        let lin = |w: &Tensor, b: &Tensor, j: usize| -> f64 {
            let mut s = b.data()[j];
            for k in 0..3 {
                s += w.data()[j * 3 + k] * z[k];
            }
            s
        };
        for j in 0..2 {
            let r = sig(lin(&p.w_input, &p.b_input, j));
            let l = sig(lin(&p.w_forget, &p.b_forget, j));
            let g = lin(&p.w_cell, &p.b_cell, j).tanh();
            let big_g = r * g + l * c_prev[j];
            let pp = sig(lin(&p.w_output, &p.b_output, j));
            let f = pp * big_g.tanh();
            assert!((s.cell.data()[j] - big_g).abs() < 1e-12);
            assert!((s.hidden.data()[j] - f).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = random_cell(3, 2, 5);
        let (_, cache) = lstm_cell_forward_cached(
            &LstmState::zeros(3),
            &Tensor::from_vec(vec![0.2, 0.4]),
            &p,
        )
        .unwrap();
        let g = lstm_cell_backward(&cache, &p, &Tensor::zeros(&[3]), &Tensor::zeros(&[3])).unwrap();
        assert!(g.input.data().iter().all(|&x| x == 0.0));
        assert!(g.hidden_prev.data().iter().all(|&x| x == 0.0));
        assert!(g.cell_prev.data().iter().all(|&x| x == 0.0));
        let mut all_zero = true;
        g.params.visit("", &mut |_, t| all_zero &= t.data().iter().all(|&x| x == 0.0));
        assert!(all_zero);
    }

    #[test]
    fn shape_errors() {
        let p = LstmCellParams::zeros(3, 2);
        let err = lstm_cell_forward(&LstmState::zeros(3), &Tensor::zeros(&[3]), &p);
        assert!(err.is_err());
        let err = lstm_cell_forward(&LstmState::zeros(2), &Tensor::zeros(&[2]), &p);
        assert!(err.is_err());
    }

    /// Loss through one cell step including the incoming state, differentiated
    /// with respect to parameters, input and previous state.
    #[test]
    fn single_step_matches_fd() {
        for seed in 0..20u64 {
            let (h, n) = (3, 2);
            let p = random_cell(h, n, seed);
            let mut init = Initializer::from_seed(seed + 1000);
            let x = init.uniform(&[n], -1.0, 1.0);
            let hp = init.uniform(&[h], -0.9, 0.9);
            let cp = init.uniform(&[h], -1.0, 1.0);
            let wh = init.uniform(&[h], -1.0, 1.0);
            let wc = init.uniform(&[h], -1.0, 1.0);

            let mut tree = ParamTree::new();
            p.write_to("cell", &mut tree).unwrap();
            tree.insert("x", x.clone()).unwrap();
            tree.insert("hp", hp.clone()).unwrap();
            tree.insert("cp", cp.clone()).unwrap();

            let loss = |t: &ParamTree| -> f64 {
                let p = LstmCellParams::read_from(t, "cell").unwrap();
                let prev = LstmState {
                    cell: t.get("cp").unwrap().clone(),
                    hidden: t.get("hp").unwrap().clone(),
                };
                let s = lstm_cell_forward(&prev, t.get("x").unwrap(), &p).unwrap();
                s.hidden.data().iter().zip(wh.data()).map(|(a, b)| a * b).sum::<f64>()
                    + s.cell.data().iter().zip(wc.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let fd = finite_difference_gradient(loss, &tree, 1e-5).unwrap();

            let prev = LstmState {
                cell: cp.clone(),
                hidden: hp.clone(),
            };
            let (_, cache) = lstm_cell_forward_cached(&prev, &x, &p).unwrap();
            let g = lstm_cell_backward(&cache, &p, &wh, &wc).unwrap();
            let mut analytic = ParamTree::new();
            g.params.write_to("cell", &mut analytic).unwrap();
            analytic.insert("x", g.input).unwrap();
            analytic.insert("hp", g.hidden_prev).unwrap();
            analytic.insert("cp", g.cell_prev).unwrap();

            let (err, path, idx) = max_relative_error(&analytic, &fd).unwrap();
            assert!(err < 1e-4, "seed {seed}: {path}[{idx}] rel err {err}");
        }
    }

    #[test]
    fn unrolled_sequence_matches_fd() {
        for seed in 0..20u64 {
            let (h, n, len) = (4, 2, 5);
            let p = random_cell(h, n, seed);
            let mut init = Initializer::from_seed(seed + 77);
            let xs: Vec<Vec<f64>> = (0..len).map(|_| init.uniform(&[n], -1.0, 1.0).into_data()).collect();
            let ws: Vec<Vec<f64>> = (0..len).map(|_| init.uniform(&[h], -1.0, 1.0).into_data()).collect();
            for reverse in [false, true] {
                let loss = |cell: &LstmCellParams| -> f64 {
                    cell.scan(&xs, reverse)
                        .iter()
                        .zip(&ws)
                        .map(|(c, w)| c.hidden.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
                        .sum()
                };
                let mut tree = ParamTree::new();
                p.write_to("", &mut tree).unwrap();
                let fd = finite_difference_gradient(
                    |t| loss(&LstmCellParams::read_from(t, "").unwrap()),
                    &tree,
                    1e-5,
                )
                .unwrap();
                let caches = p.scan(&xs, reverse);
                let mut grads = p.zeros_like();
                p.scan_backward(&caches, &ws, &mut grads);
                let mut analytic = ParamTree::new();
                grads.write_to("", &mut analytic).unwrap();
                let (err, path, idx) = max_relative_error(&analytic, &fd).unwrap();
                assert!(err < 1e-4, "seed {seed}: {path}[{idx}] rel err {err}");
            }
        }
    }
}
