//! Dense row-major `f64` tensors, named parameter trees and the
//! finite-difference gradient oracle.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {:?} needs {} elements, got {}", shape, expected, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    /// One-dimensional tensor.
    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn scalar(x: f64) -> Self {
        Tensor::from_vec(vec![x])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a matrix view: the first dimension.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Columns of a matrix view: product of the trailing dimensions.
    pub fn cols(&self) -> usize {
        self.shape[1..].iter().product()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return Err(Error::Dimension {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

#[inline]
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn tanh_act(x: &Tensor) -> Tensor {
    x.map(libm::tanh)
}

/// Softmax with max subtraction.
pub fn softmax(scores: &Tensor) -> Result<Tensor> {
    if scores.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    Ok(Tensor {
        shape: scores.shape.clone(),
        data: softmax_slice(&scores.data),
    })
}

pub(crate) fn softmax_slice(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|&s| libm::exp(s - max)).collect();
    let sum: f64 = out.iter().sum();
    for o in out.iter_mut() {
        *o /= sum;
    }
    out
}

/// Ordered description of a [`ParamTree`]: paths and shapes in path order.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Layout {
    pub entries: Vec<(String, Vec<usize>)>,
}

impl Layout {
    pub fn total_len(&self) -> usize {
        self.entries
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Named model parameters, ordered lexicographically by path. This is the
/// unit exchanged between server and clients.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParamTree {
    pub(crate) entries: BTreeMap<String, Tensor>,
}

impl ParamTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, tensor: Tensor) -> Result<()> {
        let path = path.into();
        if self.entries.contains_key(&path) {
            return Err(Error::Layout(format!("duplicate path `{path}`")));
        }
        self.entries.insert(path, tensor);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Result<&Tensor> {
        self.entries
            .get(path)
            .ok_or_else(|| Error::Key(path.to_string()))
    }

    pub fn get_mut(&mut self, path: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(path)
            .ok_or_else(|| Error::Key(path.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Number of named entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn layout(&self) -> Layout {
        Layout {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.shape.clone()))
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ParamTree) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape == vb.shape)
    }

    pub fn check_layout(&self, other: &ParamTree) -> Result<()> {
        if self.same_layout(other) {
            return Ok(());
        }
        for ((ka, va), (kb, vb)) in self.entries.iter().zip(&other.entries) {
            if ka != kb {
                return Err(Error::Layout(format!("path `{ka}` vs `{kb}`")));
            }
            if va.shape != vb.shape {
                return Err(Error::Layout(format!(
                    "`{ka}` has shape {:?} vs {:?}",
                    va.shape, vb.shape
                )));
            }
        }
        Err(Error::Layout(format!(
            "{} entries vs {}",
            self.entries.len(),
            other.entries.len()
        )))
    }

    /// Concatenate all tensors in path order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.entries.values() {
            out.extend_from_slice(&t.data);
        }
        out
    }

    pub fn unflatten(layout: &Layout, values: &[f64]) -> Result<ParamTree> {
        if layout.total_len() != values.len() {
            return Err(Error::Layout(format!(
                "layout holds {} values, vector has {}",
                layout.total_len(),
                values.len()
            )));
        }
        let mut tree = ParamTree::new();
        let mut offset = 0;
        for (path, shape) in &layout.entries {
            let n: usize = shape.iter().product();
            tree.insert(
                path.clone(),
                Tensor {
                    shape: shape.clone(),
                    data: values[offset..offset + n].to_vec(),
                },
            )?;
            offset += n;
        }
        Ok(tree)
    }

    pub fn zeros_like(&self) -> ParamTree {
        ParamTree {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(&v.shape)))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(Tensor::is_finite)
    }
}

/// Central-difference gradient of `f` at `at`, one coordinate at a time.
pub fn finite_difference_gradient<F>(mut f: F, at: &ParamTree, h: f64) -> Result<ParamTree>
where
    F: FnMut(&ParamTree) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Argument(format!("step must be positive, got {h}")));
    }
    let mut probe = at.clone();
    let mut grad = at.zeros_like();
    let paths: Vec<String> = at.entries.keys().cloned().collect();
    for path in &paths {
        let n = at.entries[path].len();
        for i in 0..n {
            let orig = at.entries[path].data[i];
            probe.entries.get_mut(path).unwrap().data[i] = orig + h;
            let plus = f(&probe);
            probe.entries.get_mut(path).unwrap().data[i] = orig - h;
            let minus = f(&probe);
            probe.entries.get_mut(path).unwrap().data[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    path: path.clone(),
                    index: i,
                });
            }
            grad.entries.get_mut(path).unwrap().data[i] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = libm::fabs(a).max(libm::fabs(b)).max(1e-8);
    libm::fabs(a - b) / denom
}

/// Worst coordinate-wise relative error between two trees with the same
/// layout, with the path and index where it occurs.
pub fn max_relative_error(a: &ParamTree, b: &ParamTree) -> Result<(f64, String, usize)> {
    a.check_layout(b)?;
    let mut worst = (0.0, String::new(), 0);
    for ((path, ta), tb) in a.entries.iter().zip(b.entries.values()) {
        for (i, (&x, &y)) in ta.data.iter().zip(&tb.data).enumerate() {
            let e = relative_error(x, y);
            if e > worst.0 || worst.1.is_empty() {
                worst = (e, path.clone(), i);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(entries: &[(&str, Tensor)]) -> ParamTree {
        let mut t = ParamTree::new();
        for (k, v) in entries {
            t.insert(*k, v.clone()).unwrap();
        }
        t
    }

    #[test]
    fn matmul_identity_and_scalar() {
        let m = Tensor::matrix(3, 3, (0..9).map(|x| x as f64 * 0.7 - 2.0).collect()).unwrap();
        assert_eq!(matmul(&Tensor::identity(3), &m).unwrap(), m);
        let a = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        let b = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matmul_triple_loop_oracle() {
        let a: Vec<f64> = (0..20).map(|i| libm::sin(i as f64 * 1.3)).collect();
        let b: Vec<f64> = (0..12).map(|i| libm::cos(i as f64 * 0.7) * 2.0).collect();
        let ta = Tensor::matrix(5, 4, a.clone()).unwrap();
        let tb = Tensor::matrix(4, 3, b.clone()).unwrap();
        let c = matmul(&ta, &tb).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a[i * 4 + k] * b[k * 3 + j];
                }
                assert!((c.data()[i * 3 + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = matmul(&a, &b).unwrap_err();
        assert_eq!(
            err,
            Error::Dimension {
                op: "matmul",
                left: vec![2, 3],
                right: vec![2, 3]
            }
        );
    }

    #[test]
    fn sigmoid_values() {
        let s = sigmoid(&Tensor::from_vec(vec![0.0, libm::log(3.0), 800.0, -800.0]));
        assert_eq!(s.data()[0], 0.5);
        assert!((s.data()[1] - 0.75).abs() < 1e-15);
        assert!(s.is_finite());
        for x in [-30.0, -2.5, -0.1, 0.3, 4.0, 25.0] {
            let p = sigmoid_scalar(x) + sigmoid_scalar(-x);
            assert!((p - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_values() {
        let t = tanh_act(&Tensor::from_vec(vec![0.0, 1.3, -1.3, 40.0]));
        assert_eq!(t.data()[0], 0.0);
        assert_eq!(t.data()[1], -t.data()[2]);
        assert!((t.data()[3] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_cases() {
        let u = softmax(&Tensor::from_vec(vec![0.3; 4])).unwrap();
        for &a in u.data() {
            assert!((a - 0.25).abs() < 1e-15);
        }
        let s = softmax(&Tensor::from_vec(vec![0.0, libm::log(2.0), libm::log(3.0)])).unwrap();
        for (a, e) in s.data().iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert!((a - e).abs() < 1e-15);
        }
        let shifted = softmax(&Tensor::from_vec(vec![5.0, 5.0 + libm::log(2.0), 5.0 + libm::log(3.0)])).unwrap();
        for (a, b) in s.data().iter().zip(shifted.data()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(matches!(
            softmax(&Tensor::from_vec(vec![])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn fd_gradient_simple() {
        let at = tree(&[("theta", Tensor::scalar(3.0))]);
        let g = finite_difference_gradient(
            |p| p.get("theta").unwrap().data()[0].powi(2),
            &at,
            1e-5,
        )
        .unwrap();
        assert!((g.get("theta").unwrap().data()[0] - 6.0).abs() < 1e-8);

        let g = finite_difference_gradient(|_| 4.2, &at, 1e-5).unwrap();
        assert_eq!(g.get("theta").unwrap().data(), &[0.0]);
    }

    #[test]
    fn fd_gradient_reports_non_finite_path() {
        let at = tree(&[("a", Tensor::scalar(1.0)), ("b", Tensor::from_vec(vec![0.0, 0.0]))]);
        let err = finite_difference_gradient(
            |p| {
                if p.get("b").unwrap().data()[1] != 0.0 {
                    f64::NAN
                } else {
                    1.0
                }
            },
            &at,
            1e-5,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::NonFinite {
                path: "b".into(),
                index: 1
            }
        );
    }

    #[test]
    fn flatten_round_trip_and_errors() {
        let t = tree(&[
            ("z.w", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()),
            ("a.b", Tensor::from_vec(vec![-0.5])),
        ]);
        let flat = t.flatten();
        assert_eq!(flat, vec![-0.5, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ParamTree::unflatten(&t.layout(), &flat).unwrap(), t);
        assert_eq!(t.flatten(), flat);
        assert!(matches!(
            ParamTree::unflatten(&t.layout(), &flat[1..]),
            Err(Error::Layout(_))
        ));
        let empty = ParamTree::new();
        assert!(empty.flatten().is_empty());
        assert_eq!(ParamTree::unflatten(&empty.layout(), &[]).unwrap(), empty);
    }

    #[test]
    fn duplicate_path_rejected() {
        let mut t = ParamTree::new();
        t.insert("x", Tensor::scalar(1.0)).unwrap();
        assert!(t.insert("x", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn relative_error_metric() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-10) - 1e-2).abs() < 1e-15);
    }
}
