//! Gaussian-blob classification data.

use rand_distr::{Distribution, StandardNormal};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::math::rng::{derive_seed, SeededRng};

/// `classes` unit-variance Gaussian clusters in `dim` dimensions whose means
/// are pairwise at least `separation` apart.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
}

impl BlobSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("blobs need at least 2 classes"));
        }
        if self.per_class < 1 || self.dim < 1 {
            return Err(Error::invalid("blobs need per_class >= 1 and dim >= 1"));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::invalid("blob separation must be positive"));
        }
        Ok(())
    }

    /// Class means: random Gaussian directions rescaled so the closest pair
    /// sits exactly `separation` apart.
    pub fn means(&self, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let mut rng = SeededRng::new(derive_seed(seed, "blob-means"));
        let mut means: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| {
                (0..self.dim)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            })
            .collect();
        let mut min_dist = f64::INFINITY;
        for i in 0..self.classes {
            for j in (i + 1)..self.classes {
                let d = means[i]
                    .iter()
                    .zip(&means[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(d);
            }
        }
        if min_dist == 0.0 {
            return Err(Error::Degenerate("coincident blob means".into()));
        }
        let s = self.separation / min_dist;
        for m in &mut means {
            for x in m.iter_mut() {
                *x *= s;
            }
        }
        Ok(means)
    }

    /// The training set for `seed`.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        self.sample(seed, "blob-train", self.per_class)
    }

    /// A held-out draw from the same clusters.
    pub fn generate_heldout(&self, seed: u64, per_class: usize) -> Result<Dataset> {
        self.sample(seed, "blob-heldout", per_class.max(1))
    }

    fn sample(&self, seed: u64, tag: &str, per_class: usize) -> Result<Dataset> {
        let means = self.means(seed)?;
        let mut rng = SeededRng::new(derive_seed(seed, tag));
        let mut inputs = Vec::with_capacity(self.classes * per_class * self.dim);
        let mut labels = Vec::with_capacity(self.classes * per_class);
        for (class, mean) in means.iter().enumerate() {
            for _ in 0..per_class {
                for &mu in mean {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    inputs.push((mu + z) as f32);
                }
                labels.push(class as u32);
            }
        }
        Dataset::new(
            inputs,
            labels,
            vec![self.dim],
            self.classes,
            Provenance::Synthetic,
        )
    }
}

pub fn synthetic_blobs(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    BlobSpec {
        classes,
        per_class,
        dim,
        separation,
    }
    .generate(seed)
}
