//! Closed-form objectives used as oracles for the diagnostics.

use super::Differentiable;
use crate::data::Batch;
use crate::error::{Error, Result};

/// `L(x) = ½ (x - c)ᵀ A (x - c)` for a dense symmetric `A`; ignores the batch.
#[derive(Clone, Debug)]
pub struct Quadratic {
    n: usize,
    a: Vec<f64>,
    center: Vec<f64>,
}

impl Quadratic {
    /// `a` is row-major `n x n` and must be symmetric.
    pub fn new(a: Vec<f64>, n: usize) -> Result<Self> {
        if a.len() != n * n || n == 0 {
            return Err(Error::shape(format!("quadratic needs {n}x{n} entries")));
        }
        for i in 0..n {
            for j in 0..i {
                if a[i * n + j] != a[j * n + i] {
                    return Err(Error::invalid("quadratic matrix must be symmetric"));
                }
            }
        }
        Ok(Self {
            n,
            a,
            center: vec![0.0; n],
        })
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut a = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            a[i * n + i] = d;
        }
        Self {
            n,
            a,
            center: vec![0.0; n],
        }
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        if center.len() != self.n {
            return Err(Error::shape("quadratic center length"));
        }
        self.center = center;
        Ok(self)
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    /// `A v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.a[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(a, x)| a * x)
                    .sum()
            })
            .collect()
    }

    fn shifted(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| a - c).collect()
    }
}

impl Differentiable for Quadratic {
    fn dim(&self) -> usize {
        self.n
    }

    fn loss(&self, params: &[f64], _batch: &Batch) -> Result<f64> {
        let z = self.shifted(params);
        let az = self.apply(&z);
        Ok(0.5 * z.iter().zip(&az).map(|(a, b)| a * b).sum::<f64>())
    }

    fn loss_grad(&self, params: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
        let loss = self.loss(params, batch)?;
        Ok((loss, self.apply(&self.shifted(params))))
    }
}
