//! Weak quasi-convexity scores and update-gradient agreement.

use rayon::prelude::*;

use super::series::{CosineRecord, SeriesFlag, TauRecord};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::math::vector::{cosine_similarity, dot, norm};
use crate::math::ParamVector;
use crate::models::{grad_f64, loss_f64, Differentiable};

/// Denominators `|L(x_i) - L(x*)|` below this are skipped.
pub const TAU_DELTA: f64 = 1e-8;

/// `τ_i = -∇L(x_i)·(x* - x_i) / (L(x_i) - L(x*))` for each `(step, x_i)`.
pub fn tau_series(
    model: &dyn Differentiable,
    iterates: &[(u64, ParamVector)],
    x_star: &ParamVector,
    probe: &Batch,
    delta: f64,
) -> Result<Vec<TauRecord>> {
    let star = x_star.to_f64();
    let l_star = loss_f64(model, &star, probe)?;
    iterates
        .par_iter()
        .map(|(step, x)| {
            let xi = x.to_f64();
            if xi.len() != star.len() {
                return Err(Error::shape("iterate and x* differ in length"));
            }
            let (l_i, g) = grad_f64(model, &xi, probe)?;
            let den = l_i - l_star;
            if den.abs() < delta {
                return Ok(TauRecord {
                    step: *step,
                    tau: None,
                    flag: SeriesFlag::Skipped,
                });
            }
            let toward: Vec<f64> = star.iter().zip(&xi).map(|(s, x)| s - x).collect();
            let tau = -dot(&g, &toward) / den;
            Ok(TauRecord {
                step: *step,
                tau: Some(tau),
                flag: if den < 0.0 {
                    SeriesFlag::NegativeDenominator
                } else {
                    SeriesFlag::Ok
                },
            })
        })
        .collect()
}

/// `cos(-∇L(x_i), x_{i+1} - x_i)` for consecutive iterates, keyed by the
/// step of `x_i`.
pub fn update_cosine_series(
    model: &dyn Differentiable,
    iterates: &[(u64, ParamVector)],
    probe: &Batch,
) -> Result<Vec<CosineRecord>> {
    iterates
        .par_windows(2)
        .map(|w| {
            let (step, a) = &w[0];
            let (_, b) = &w[1];
            let xa = a.to_f64();
            let disp: Vec<f64> = b.to_f64().iter().zip(&xa).map(|(y, x)| y - x).collect();
            if norm(&disp) == 0.0 {
                return Ok(CosineRecord {
                    step: *step,
                    cos_sim: None,
                    flag: SeriesFlag::ZeroDisplacement,
                });
            }
            let (_, g) = grad_f64(model, &xa, probe)?;
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            match cosine_similarity(&neg, &disp) {
                Ok(s) => Ok(CosineRecord {
                    step: *step,
                    cos_sim: Some(s),
                    flag: SeriesFlag::Ok,
                }),
                Err(Error::ZeroNorm(_)) => Ok(CosineRecord {
                    step: *step,
                    cos_sim: None,
                    flag: SeriesFlag::ZeroGradient,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Fraction of emitted values that are strictly positive.
pub fn positive_fraction(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (mut pos, mut n) = (0usize, 0usize);
    for v in values.into_iter().flatten() {
        n += 1;
        if v > 0.0 {
            pos += 1;
        }
    }
    (n > 0).then(|| pos as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy::Quadratic;

    /// `¼ Σ x⁴`.
    struct Quartic(usize);

    impl Differentiable for Quartic {
        fn dim(&self) -> usize {
            self.0
        }
        fn loss(&self, p: &[f64], _: &Batch) -> Result<f64> {
            Ok(p.iter().map(|x| 0.25 * x.powi(4)).sum())
        }
        fn loss_grad(&self, p: &[f64], b: &Batch) -> Result<(f64, Vec<f64>)> {
            Ok((self.loss(p, b)?, p.iter().map(|x| x.powi(3)).collect()))
        }
    }

    #[test]
    fn tau_closed_forms() {
        let b = Batch::unit();
        let q = Quadratic::diagonal(&[1.0, 1.0]);
        let r = tau_series(&q, &[(3, ParamVector::new(vec![1.0, 1.0]))], &ParamVector::zeros(2), &b, TAU_DELTA).unwrap();
        assert_eq!(r[0].tau, Some(2.0));
        assert_eq!(r[0].flag, SeriesFlag::Ok);
        let r = tau_series(&Quartic(1), &[(0, ParamVector::new(vec![1.0]))], &ParamVector::zeros(1), &b, TAU_DELTA).unwrap();
        assert_eq!(r[0].tau, Some(4.0));
    }

    #[test]
    fn tau_skip_and_negative() {
        let b = Batch::unit();
        let q = Quadratic::diagonal(&[1.0]);
        let star = ParamVector::new(vec![1.0]);
        let its = [(0, ParamVector::new(vec![1.0])), (1, ParamVector::new(vec![0.5]))];
        let r = tau_series(&q, &its, &star, &b, TAU_DELTA).unwrap();
        assert_eq!(r[0].flag, SeriesFlag::Skipped);
        assert_eq!(r[0].tau, None);
        assert_eq!(r[1].flag, SeriesFlag::NegativeDenominator);
        assert!(r[1].tau.is_some());
    }

    #[test]
    fn gradient_descent_has_unit_cosine() {
        let q = Quadratic::diagonal(&[2.0, 0.5]);
        let b = Batch::unit();
        let mut x = vec![1.0f64, -1.0];
        let mut its = Vec::new();
        for t in 0..5u64 {
            its.push((t, ParamVector::from_f64(&x)));
            let g = q.apply(&x);
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi -= 0.125 * gi;
            }
        }
        for r in update_cosine_series(&q, &its, &b).unwrap() {
            assert!((r.cos_sim.unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn orthogonal_and_duplicate_updates() {
        let q = Quadratic::diagonal(&[1.0, 1.0]);
        let b = Batch::unit();
        let its = [
            (0, ParamVector::new(vec![1.0, 0.0])),
            (1, ParamVector::new(vec![1.0, 1.0])),
            (2, ParamVector::new(vec![1.0, 1.0])),
        ];
        let r = update_cosine_series(&q, &its, &b).unwrap();
        assert_eq!(r[0].cos_sim, Some(0.0));
        assert_eq!(r[1].flag, SeriesFlag::ZeroDisplacement);
        assert_eq!(positive_fraction(r.iter().map(|x| x.cos_sim)), Some(0.0));
    }
}
