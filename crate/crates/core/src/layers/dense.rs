use alloc::string::String;
use alloc::vec::Vec;

use super::{expect_shape, gemv_acc, gemv_t_acc, join, outer_acc, Activation, Initializer, ParamGroup};
use crate::error::Result;
use crate::tensor::Tensor;

/// Fully connected layer `act(W x + b)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseParams {
    /// `out x in`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl ParamGroup for DenseParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(join(prefix, "b"), &self.bias);
        f(join(prefix, "w"), &self.weight);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "b"), &mut self.bias);
        f(join(prefix, "w"), &mut self.weight);
    }
}

impl DenseParams {
    pub fn zeros(input: usize, out: usize) -> Self {
        DenseParams {
            weight: Tensor::zeros(&[out, input]),
            bias: Tensor::zeros(&[out]),
        }
    }

    pub fn init(input: usize, out: usize, init: &mut Initializer) -> Self {
        DenseParams {
            weight: init.glorot(&[out, input], input, out),
            bias: Tensor::zeros(&[out]),
        }
    }

    pub fn input(&self) -> usize {
        self.weight.cols()
    }

    pub fn output(&self) -> usize {
        self.weight.rows()
    }

    pub(crate) fn forward_vec(&self, x: &[f64], act: Activation) -> Vec<f64> {
        let mut y = self.bias.data.clone();
        gemv_acc(&self.weight.data, self.input(), x, &mut y);
        y.iter_mut().for_each(|v| *v = act.apply(*v));
        y
    }

    /// `y` is this layer's output for `x`. Returns the input gradient.
    pub(crate) fn backward_vec(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        act: Activation,
        grads: &mut DenseParams,
    ) -> Vec<f64> {
        let dpre: Vec<f64> = dy
            .iter()
            .zip(y)
            .map(|(d, &y)| d * act.derivative_from_output(y))
            .collect();
        let cols = self.input();
        outer_acc(&mut grads.weight.data, cols, &dpre, x);
        for (b, d) in grads.bias.data.iter_mut().zip(&dpre) {
            *b += d;
        }
        let mut dx = alloc::vec![0.0; cols];
        gemv_t_acc(&self.weight.data, cols, &dpre, &mut dx);
        dx
    }
}

fn check(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<()> {
    if w.shape().len() != 2 {
        return Err(crate::Error::shape("dense", "weight must be a matrix"));
    }
    expect_shape("dense input", x, &[w.cols()])?;
    expect_shape("dense bias", b, &[w.rows()])
}

pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor, act: Activation) -> Result<Tensor> {
    check(x, w, b)?;
    let p = DenseParams {
        weight: w.clone(),
        bias: b.clone(),
    };
    Ok(Tensor::from_vec(p.forward_vec(&x.data, act)))
}

/// Returns `(dx, grads)` for upstream gradient `dy` on the layer output.
pub fn dense_backward(
    x: &Tensor,
    p: &DenseParams,
    dy: &Tensor,
    act: Activation,
) -> Result<(Tensor, DenseParams)> {
    check(x, &p.weight, &p.bias)?;
    expect_shape("dense output gradient", dy, &[p.output()])?;
    let y = p.forward_vec(&x.data, act);
    let mut grads = p.zeros_like();
    let dx = p.backward_vec(&x.data, &y, &dy.data, act, &mut grads);
    Ok((Tensor::from_vec(dx), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_difference_gradient, max_relative_error, ParamTree};

    #[test]
    fn identity_and_zero_cases() {
        let x = Tensor::from_vec(vec![0.3, -1.2, 4.0]);
        let y = dense_forward(&x, &Tensor::identity(3), &Tensor::zeros(&[3]), Activation::Identity).unwrap();
        assert_eq!(y, x);
        let y = dense_forward(&x, &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2]), Activation::Sigmoid).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
        assert!(dense_forward(&x, &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2]), Activation::Identity).is_err());
    }

    #[test]
    fn dot_product_oracle() {
        let mut init = Initializer::from_seed(12);
        let w = init.uniform(&[3, 4], -1.0, 1.0);
        let b = init.uniform(&[3], -1.0, 1.0);
        let x = init.uniform(&[4], -1.0, 1.0);
        for act in [Activation::Identity, Activation::Sigmoid, Activation::Tanh] {
            let y = dense_forward(&x, &w, &b, act).unwrap();
            for i in 0..3 {
                let mut s = b.data()[i];
                for j in 0..4 {
                    s += w.data()[i * 4 + j] * x.data()[j];
                }
                let expect = match act {
                    Activation::Identity => s,
                    Activation::Sigmoid => 1.0 / (1.0 + (-s).exp()),
                    _ => s.tanh(),
                };
                assert!((y.data()[i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradients_match_fd() {
        for seed in 0..20u64 {
            for act in [Activation::Identity, Activation::Sigmoid, Activation::Tanh] {
                let mut init = Initializer::from_seed(seed);
                let p = DenseParams {
                    weight: init.uniform(&[3, 5], -0.5, 0.5),
                    bias: init.uniform(&[3], -0.5, 0.5),
                };
                let x = init.uniform(&[5], -1.0, 1.0);
                let dy = init.uniform(&[3], -1.0, 1.0);
                let mut tree = ParamTree::new();
                p.write_to("d", &mut tree).unwrap();
                tree.insert("x", x.clone()).unwrap();
                let fd = finite_difference_gradient(
                    |t| {
                        let y = dense_forward(t.get("x").unwrap(), t.get("d.w").unwrap(), t.get("d.b").unwrap(), act)
                            .unwrap();
                        y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
                    },
                    &tree,
                    1e-5,
                )
                .unwrap();
                let (dx, g) = dense_backward(&x, &p, &dy, act).unwrap();
                let mut analytic = ParamTree::new();
                g.write_to("d", &mut analytic).unwrap();
                analytic.insert("x", dx).unwrap();
                let (err, path, idx) = max_relative_error(&analytic, &fd).unwrap();
                assert!(err < 1e-4, "seed {seed} {act:?}: {path}[{idx}] rel err {err}");
            }
        }
    }
}
