use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{expect_shape, join, Activation, Initializer, ParamGroup};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Valid (unpadded), stride-1 1-D convolution.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Conv1dParams {
    /// `out_ch x in_ch x k`
    pub kernels: Tensor,
    /// `[out_ch]`
    pub bias: Tensor,
}

impl ParamGroup for Conv1dParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor)) {
        f(join(prefix, "b"), &self.bias);
        f(join(prefix, "k"), &self.kernels);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor)) {
        f(join(prefix, "b"), &mut self.bias);
        f(join(prefix, "k"), &mut self.kernels);
    }
}

impl Conv1dParams {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize) -> Self {
        Conv1dParams {
            kernels: Tensor::zeros(&[out_ch, in_ch, k]),
            bias: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn init(in_ch: usize, out_ch: usize, k: usize, init: &mut Initializer) -> Self {
        Conv1dParams {
            kernels: init.glorot(&[out_ch, in_ch, k], in_ch * k, out_ch * k),
            bias: Tensor::zeros(&[out_ch]),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_len(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn validate(&self) -> Result<()> {
        if self.kernels.shape().len() != 3 || self.kernel_len() == 0 {
            return Err(Error::shape("conv1d", "kernels must be out x in x k with k >= 1"));
        }
        expect_shape("conv1d bias", &self.bias, &[self.out_channels()])
    }

    /// `x` is `in_ch x len` row-major.
    pub(crate) fn forward_raw(&self, x: &[f64], len: usize, act: Activation) -> Vec<f64> {
        let (oc, ic, k) = (self.out_channels(), self.in_channels(), self.kernel_len());
        let out_len = len + 1 - k;
        let mut y = vec![0.0; oc * out_len];
        for j in 0..oc {
            let row = &mut y[j * out_len..(j + 1) * out_len];
            row.iter_mut().for_each(|v| *v = self.bias.data[j]);
            for i in 0..ic {
                let xi = &x[i * len..(i + 1) * len];
                let kern = &self.kernels.data[(j * ic + i) * k..(j * ic + i + 1) * k];
                for (u, &kv) in kern.iter().enumerate() {
                    for (o, xv) in row.iter_mut().zip(&xi[u..u + out_len]) {
                        *o += kv * xv;
                    }
                }
            }
            row.iter_mut().for_each(|v| *v = act.apply(*v));
        }
        y
    }

    /// `y` is the post-activation output. Returns the input gradient.
    pub(crate) fn backward_raw(
        &self,
        x: &[f64],
        len: usize,
        y: &[f64],
        dy: &[f64],
        act: Activation,
        grads: &mut Conv1dParams,
    ) -> Vec<f64> {
        let (oc, ic, k) = (self.out_channels(), self.in_channels(), self.kernel_len());
        let out_len = len + 1 - k;
        let mut dx = vec![0.0; ic * len];
        for j in 0..oc {
            let dpre: Vec<f64> = (0..out_len)
                .map(|t| dy[j * out_len + t] * act.derivative_from_output(y[j * out_len + t]))
                .collect();
            grads.bias.data[j] += dpre.iter().sum::<f64>();
            for i in 0..ic {
                let xi = &x[i * len..(i + 1) * len];
                let base = (j * ic + i) * k;
                for u in 0..k {
                    let mut g = 0.0;
                    for (d, xv) in dpre.iter().zip(&xi[u..u + out_len]) {
                        g += d * xv;
                    }
                    grads.kernels.data[base + u] += g;
                    let kv = self.kernels.data[base + u];
                    for (dxv, d) in dx[i * len + u..i * len + u + out_len].iter_mut().zip(&dpre) {
                        *dxv += kv * d;
                    }
                }
            }
        }
        dx
    }
}

fn check_conv(x: &Tensor, p: &Conv1dParams) -> Result<usize> {
    p.validate()?;
    if x.shape().len() != 2 || x.shape()[0] != p.in_channels() {
        return Err(Error::Dimension {
            op: "conv1d input",
            left: x.shape().to_vec(),
            right: p.kernels.shape().to_vec(),
        });
    }
    let len = x.shape()[1];
    if len < p.kernel_len() {
        return Err(Error::shape(
            "conv1d",
            format!("input length {len} shorter than kernel {}", p.kernel_len()),
        ));
    }
    Ok(len)
}

/// `x`: `in_ch x L` to `out_ch x (L - k + 1)`.
pub fn conv1d_forward(x: &Tensor, p: &Conv1dParams, act: Activation) -> Result<Tensor> {
    let len = check_conv(x, p)?;
    let y = p.forward_raw(&x.data, len, act);
    Tensor::new(vec![p.out_channels(), len + 1 - p.kernel_len()], y)
}

/// Returns `(dx, param grads)` for upstream gradient `dy` on the output.
pub fn conv1d_backward(
    x: &Tensor,
    p: &Conv1dParams,
    dy: &Tensor,
    act: Activation,
) -> Result<(Tensor, Conv1dParams)> {
    let len = check_conv(x, p)?;
    expect_shape("conv1d output gradient", dy, &[p.out_channels(), len + 1 - p.kernel_len()])?;
    let y = p.forward_raw(&x.data, len, act);
    let mut grads = p.zeros_like();
    let dx = p.backward_raw(&x.data, len, &y, &dy.data, act, &mut grads);
    Ok((Tensor::new(x.shape().to_vec(), dx)?, grads))
}

pub(crate) fn pool_out_len(len: usize, width: usize, stride: usize) -> usize {
    (len - width) / stride + 1
}

/// Windowed maxima per channel; also returns the flat input index of each
/// maximum (first occurrence wins ties).
pub(crate) fn max_pool_raw(x: &[f64], ch: usize, len: usize, width: usize, stride: usize) -> (Vec<f64>, Vec<usize>) {
    let out_len = pool_out_len(len, width, stride);
    let mut y = Vec::with_capacity(ch * out_len);
    let mut idx = Vec::with_capacity(ch * out_len);
    for c in 0..ch {
        for o in 0..out_len {
            let start = c * len + o * stride;
            let mut best = start;
            for p in start + 1..start + width {
                if x[p] > x[best] {
                    best = p;
                }
            }
            y.push(x[best]);
            idx.push(best);
        }
    }
    (y, idx)
}

fn check_pool(x: &Tensor, width: usize, stride: usize) -> Result<(usize, usize)> {
    if x.shape().len() != 2 {
        return Err(Error::shape("max_pool1d", "input must be channels x length"));
    }
    let (ch, len) = (x.shape()[0], x.shape()[1]);
    if width == 0 || stride == 0 {
        return Err(Error::Argument("pool width and stride must be positive".into()));
    }
    if width > len {
        return Err(Error::shape(
            "max_pool1d",
            format!("window {width} wider than input length {len}"),
        ));
    }
    Ok((ch, len))
}

pub fn max_pool1d(x: &Tensor, width: usize, stride: usize) -> Result<Tensor> {
    max_pool1d_with_indices(x, width, stride).map(|(y, _)| y)
}

pub fn max_pool1d_with_indices(x: &Tensor, width: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let (ch, len) = check_pool(x, width, stride)?;
    let (y, idx) = max_pool_raw(&x.data, ch, len, width, stride);
    Ok((Tensor::new(vec![ch, pool_out_len(len, width, stride)], y)?, idx))
}

/// Routes each output gradient to the input position that won the max.
pub fn max_pool1d_backward(input_shape: &[usize], indices: &[usize], dy: &Tensor) -> Result<Tensor> {
    if indices.len() != dy.len() {
        return Err(Error::shape("max_pool1d_backward", "index count differs from gradient size"));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&i, &d) in indices.iter().zip(dy.data()) {
        dx.data[i] += d;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_difference_gradient, max_relative_error, ParamTree};

    fn row(v: &[f64]) -> Tensor {
        Tensor::matrix(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let p = Conv1dParams {
            kernels: Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(),
            bias: Tensor::zeros(&[1]),
        };
        let x = row(&[1.0, -2.0, 3.5]);
        assert_eq!(conv1d_forward(&x, &p, Activation::Identity).unwrap(), x);
    }

    #[test]
    fn sum_kernel_and_bias() {
        let p = Conv1dParams {
            kernels: Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap(),
            bias: Tensor::zeros(&[1]),
        };
        let y = conv1d_forward(&row(&[1.0, 2.0, 3.0]), &p, Activation::Identity).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);

        let p = Conv1dParams {
            kernels: Tensor::zeros(&[2, 1, 3]),
            bias: Tensor::from_vec(vec![0.7, -1.5]),
        };
        let y = conv1d_forward(&row(&[1.0, 2.0, 3.0, 4.0]), &p, Activation::Identity).unwrap();
        assert_eq!(y.data(), &[0.7, 0.7, -1.5, -1.5]);
    }

    #[test]
    fn short_input_rejected() {
        let p = Conv1dParams::zeros(1, 1, 4);
        assert!(matches!(
            conv1d_forward(&row(&[1.0, 2.0]), &p, Activation::Identity),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn pooling_cases() {
        let y = max_pool1d(&row(&[1.0, 3.0, 2.0, 4.0]), 2, 2).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
        let y = max_pool1d(&row(&[2.5; 7]), 3, 2).unwrap();
        assert_eq!(y.data(), &[2.5; 3]);
        let x = row(&[0.1, -0.4, 9.0]);
        assert_eq!(max_pool1d(&x, 1, 1).unwrap(), x);
        assert!(max_pool1d(&x, 4, 1).is_err());
    }

    #[test]
    fn pool_backward_routes_to_argmax() {
        let x = row(&[1.0, 3.0, 2.0, 4.0]);
        let (_, idx) = max_pool1d_with_indices(&x, 2, 2).unwrap();
        let dx = max_pool1d_backward(x.shape(), &idx, &row(&[0.5, -1.0])).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.5, 0.0, -1.0]);
    }

    #[test]
    fn gradients_match_fd() {
        for seed in 0..20u64 {
            for act in [Activation::Identity, Activation::Tanh] {
                let (ic, oc, k, len) = (2, 3, 3, 7);
                let mut init = Initializer::from_seed(seed);
                let p = Conv1dParams {
                    kernels: init.uniform(&[oc, ic, k], -0.5, 0.5),
                    bias: init.uniform(&[oc], -0.5, 0.5),
                };
                let x = init.uniform(&[ic, len], -1.0, 1.0);
                let dy = init.uniform(&[oc, len - k + 1], -1.0, 1.0);
                let mut tree = ParamTree::new();
                p.write_to("c", &mut tree).unwrap();
                tree.insert("x", x.clone()).unwrap();
                let fd = finite_difference_gradient(
                    |t| {
                        let p = Conv1dParams::read_from(t, "c").unwrap();
                        let y = conv1d_forward(t.get("x").unwrap(), &p, act).unwrap();
                        y.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum()
                    },
                    &tree,
                    1e-5,
                )
                .unwrap();
                let (dx, g) = conv1d_backward(&x, &p, &dy, act).unwrap();
                let mut analytic = ParamTree::new();
                g.write_to("c", &mut analytic).unwrap();
                analytic.insert("x", dx).unwrap();
                let (err, path, idx) = max_relative_error(&analytic, &fd).unwrap();
                assert!(err < 1e-4, "seed {seed} {act:?}: {path}[{idx}] rel err {err}");
            }
        }
    }
}
