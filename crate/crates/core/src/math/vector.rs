//! Flat parameter vectors and double-precision reductions.
//!
//! Storage is `f32`; every reduction (dot products, norms) accumulates in
//! `f64` in index order, so results are reproducible and insensitive to
//! the storage precision.

use crate::error::{Error, Result};

/// Every model parameter laid out in one flat single-precision vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamVector {
    values: Vec<f32>,
}

impl ParamVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    /// Rounds a double-precision vector to storage precision.
    pub fn from_f64(values: &[f64]) -> Self {
        Self {
            values: values.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        dot(&self.values, &other.values)
    }

    /// `self - other`, evaluated in double precision.
    pub fn sub_f64(&self, other: &ParamVector) -> Vec<f64> {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f64::from(a) - f64::from(b))
            .collect()
    }
}

impl From<Vec<f32>> for ParamVector {
    fn from(values: Vec<f32>) -> Self {
        Self::new(values)
    }
}

impl AsRef<[f32]> for ParamVector {
    fn as_ref(&self) -> &[f32] {
        &self.values
    }
}

pub fn dot<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (&x, &y)| acc + x.into() * y.into())
}

pub fn norm<T: Copy + Into<f64>>(a: &[T]) -> f64 {
    a.iter()
        .fold(0.0f64, |acc, &x| {
            let x: f64 = x.into();
            acc + x * x
        })
        .sqrt()
}

/// `a·b / (‖a‖‖b‖)` clamped to `[-1, 1]`; zero-norm inputs are an error.
pub fn cosine_similarity<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "cosine_similarity of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm("cosine_similarity"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}

/// Normalizes in place and returns the original norm.
pub fn normalize(x: &mut [f64]) -> Result<f64> {
    let n = norm(x);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm("normalize"));
    }
    scale(1.0 / n, x);
    Ok(n)
}
