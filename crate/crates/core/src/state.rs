//! Stacked per-node vectors.
//!
//! A [`StackedState`] holds one `d`-vector per node, stored row-major so that
//! row `i` is the local variable of node `i`. Primal iterates and both dual
//! variables share this shape.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StackedState {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl StackedState {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { n, d, data: vec![0.0; n * d] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidData("stacked state needs at least one row".into()));
        }
        let d = rows[0].len();
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("row length {d}"),
                    got: format!("row {i} of length {}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, d, data })
    }

    pub fn from_vec(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: format!("{} entries", n * d),
                got: format!("{}", data.len()),
            });
        }
        Ok(Self { n, d, data })
    }

    pub fn from_fn(n: usize, d: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                data.push(f(i, j));
            }
        }
        Self { n, d, data }
    }

    /// Every node holds a copy of `v`.
    pub fn consensus(n: usize, v: &[f64]) -> Self {
        let d = v.len();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(v);
        }
        Self { n, d, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.d)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks(self.d.max(1)).take(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.d + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn check_shape(&self, n: usize, d: usize) -> Result<()> {
        if self.n != n || self.d != d {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{d}"),
                got: format!("{}x{}", self.n, self.d),
            });
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        other.check_shape(self.n, self.d)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in dot");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dist_sq(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in dist_sq");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Average of the node rows.
    pub fn mean_row(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.rows() {
            for (acc, v) in m.iter_mut().zip(r) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.n as f64;
        m.iter_mut().for_each(|v| *v *= inv);
        m
    }

    /// Largest Euclidean distance of a node row from the row mean.
    pub fn consensus_error(&self) -> f64 {
        let m = self.mean_row();
        self.rows()
            .map(|r| r.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `a * self + b * other`.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in lincomb");
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Self { n: self.n, d: self.d, data }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { n: self.n, d: self.d, data: self.data.iter().map(|v| a * v).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in zip_map");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect();
        Self { n: self.n, d: self.d, data }
    }
}

impl Add for &StackedState {
    type Output = StackedState;
    fn add(self, rhs: &StackedState) -> StackedState {
        self.lincomb(1.0, rhs, 1.0)
    }
}

impl Sub for &StackedState {
    type Output = StackedState;
    fn sub(self, rhs: &StackedState) -> StackedState {
        self.lincomb(1.0, rhs, -1.0)
    }
}

impl Add for StackedState {
    type Output = StackedState;
    fn add(self, rhs: StackedState) -> StackedState {
        &self + &rhs
    }
}

impl Sub for StackedState {
    type Output = StackedState;
    fn sub(self, rhs: StackedState) -> StackedState {
        &self - &rhs
    }
}

impl Mul<&StackedState> for f64 {
    type Output = StackedState;
    fn mul(self, rhs: &StackedState) -> StackedState {
        rhs.scaled(self)
    }
}

impl Mul<StackedState> for f64 {
    type Output = StackedState;
    fn mul(self, rhs: StackedState) -> StackedState {
        rhs.scaled(self)
    }
}

impl Neg for &StackedState {
    type Output = StackedState;
    fn neg(self) -> StackedState {
        self.scaled(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_and_mean() {
        let s = StackedState::from_rows(&[vec![1.0, 2.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(s.shape(), (2, 2));
        assert_eq!(s.row(1), &[3.0, 6.0]);
        assert_eq!(s.mean_row(), vec![2.0, 4.0]);
        assert!((s.consensus_error() - 5.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(StackedState::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn arithmetic() {
        let a = StackedState::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let b = StackedState::from_rows(&[vec![0.5], vec![-1.0]]).unwrap();
        assert_eq!((&a - &b).as_slice(), &[0.5, 3.0]);
        assert_eq!((2.0 * &a + b).as_slice(), &[2.5, 3.0]);
        assert_eq!(a.dot(&a), 5.0);
    }
}
