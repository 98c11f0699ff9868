// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense row-major `f64` tensors and the handful of kernels the toy model needs.
//!
//! There is no broadcasting: every shape adaptation is explicit at the call
//! site. All kernels are pure, so equal inputs give bit-identical outputs.

use crate::error::{Error, Result};

/// A dense tensor with row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data.len()` equals the product of `shape`.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(
                "tensor",
                format!("extents must be positive, got {shape:?}"),
            ));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    /// Builds an `n×n` identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a 2-D tensor from nested rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        Self {
            shape: vec![rows.len(), cols],
            data,
        }
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows when viewed as a matrix over the last axis.
    pub fn rows(&self) -> usize {
        self.data.len() / self.cols()
    }

    /// Extent of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Matrix transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Self> {
        let (m, n) = self.dims2("transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Self::new(&[n, m], out)
    }

    /// Elementwise sum of two tensors of identical shape.
    pub fn add(&self, other: &Tensor) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape("add", format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Adds `row` to every row of a matrix (explicit row broadcast).
    pub fn add_row(&self, row: &[f64]) -> Result<Self> {
        let c = self.cols();
        if row.len() != c {
            return Err(Error::shape("add_row", format!("row of {} vs {c} columns", row.len())));
        }
        let mut out = self.clone();
        for chunk in out.data.chunks_exact_mut(c) {
            for (v, b) in chunk.iter_mut().zip(row) {
                *v += b;
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies columns `start..start + width` of a matrix.
    pub fn column_block(&self, start: usize, width: usize) -> Result<Self> {
        let (m, n) = self.dims2("column_block")?;
        if start + width > n || width == 0 {
            return Err(Error::shape(
                "column_block",
                format!("columns {start}..{} of {n}", start + width),
            ));
        }
        let mut out = Vec::with_capacity(m * width);
        for i in 0..m {
            out.extend_from_slice(&self.data[i * n + start..i * n + start + width]);
        }
        Self::new(&[m, width], out)
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn hconcat(parts: &[Tensor]) -> Result<Self> {
        let m = parts
            .first()
            .ok_or_else(|| Error::shape("hconcat", "no parts"))?
            .dims2("hconcat")?
            .0;
        let mut n = 0;
        for p in parts {
            let (pm, pn) = p.dims2("hconcat")?;
            if pm != m {
                return Err(Error::shape("hconcat", format!("row counts {pm} vs {m}")));
            }
            n += pn;
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for p in parts {
                out.extend_from_slice(p.row(i));
            }
        }
        Self::new(&[m, n], out)
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[m, n] => Ok((m, n)),
            s => Err(Error::shape(op, format!("expected a matrix, got shape {s:?}"))),
        }
    }
}

/// Standard matrix product of an `m×k` and a `k×n` matrix.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, n) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("[{m}×{k}] · [{k2}×{n}]: inner extents differ"),
        ));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bpj) in orow.iter_mut().zip(brow) {
                *o += aip * bpj;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_transposed(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2("matmul_transposed")?;
    let (n, k2) = b.dims2("matmul_transposed")?;
    if k != k2 {
        return Err(Error::shape(
            "matmul_transposed",
            format!("[{m}×{k}] · [{n}×{k2}]ᵀ: inner extents differ"),
        ));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            out.push(arow.iter().zip(brow).map(|(x, y)| x * y).sum());
        }
    }
    Tensor::new(&[m, n], out)
}

/// Numerically stable softmax over the last axis.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = x.clone();
    for row in out.data.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Layer normalization over the last axis followed by an affine map.
pub fn layer_norm(x: &Tensor, gain: &[f64], bias: &[f64], eps: f64) -> Result<Tensor> {
    let d = x.cols();
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape(
            "layer_norm",
            format!("last extent {d}, gain {}, bias {}", gain.len(), bias.len()),
        ));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "layer_norm eps must be > 0, got {eps}"
        )));
    }
    let mut out = x.clone();
    for row in out.data.chunks_exact_mut(d) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    Ok(out)
}
