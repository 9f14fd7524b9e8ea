//! Datasets and deterministic batching.

mod batching;
mod blobs;
#[cfg(feature = "decoder")]
mod chars;
mod cifar;

pub use batching::{epoch_batches, epoch_index_batches, epoch_permutation, probe_indices, BatchPlan};
pub use blobs::{synthetic_blobs, BlobSpec};
#[cfg(feature = "decoder")]
pub use chars::{char_corpus, CharCorpus};
pub use cifar::{load_cifar10, parse_cifar10, Split, CIFAR10_RECORD_LEN};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Cifar10,
    Synthetic,
    Chars,
}

/// An immutable labelled dataset.
///
/// Inputs are stored example-major. Most datasets carry one target per
/// example; sequence data carries one target per position.
#[derive(Clone, Debug)]
pub struct Dataset {
    inputs: Vec<f32>,
    labels: Vec<u32>,
    example_shape: Vec<usize>,
    targets_per_example: usize,
    num_classes: usize,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f32>,
        labels: Vec<u32>,
        example_shape: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        Self::with_targets(inputs, labels, example_shape, 1, num_classes, provenance)
    }

    pub fn with_targets(
        inputs: Vec<f32>,
        labels: Vec<u32>,
        example_shape: Vec<usize>,
        targets_per_example: usize,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let example_len: usize = example_shape.iter().product();
        if example_len == 0 || targets_per_example == 0 {
            return Err(Error::invalid("dataset examples must be non-empty"));
        }
        if labels.is_empty() || labels.len() % targets_per_example != 0 {
            return Err(Error::invalid("dataset must contain at least one example"));
        }
        let n = labels.len() / targets_per_example;
        if inputs.len() != n * example_len {
            return Err(Error::shape(format!(
                "{} inputs for {n} examples of length {example_len}",
                inputs.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(Error::Corrupt(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            example_shape,
            targets_per_example,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len() / self.targets_per_example
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example_shape(&self) -> &[usize] {
        &self.example_shape
    }

    pub fn example_len(&self) -> usize {
        self.example_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> &[f32] {
        let len = self.example_len();
        &self.inputs[i * len..(i + 1) * len]
    }

    pub fn targets(&self, i: usize) -> &[u32] {
        let k = self.targets_per_example;
        &self.labels[i * k..(i + 1) * k]
    }

    /// Copies the listed examples, in order, into a batch.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(indices.len() * self.example_len());
        let mut labels = Vec::with_capacity(indices.len() * self.targets_per_example);
        for &i in indices {
            inputs.extend_from_slice(self.example(i));
            labels.extend_from_slice(self.targets(i));
        }
        Batch {
            inputs,
            labels,
            example_shape: self.example_shape.clone(),
            targets_per_example: self.targets_per_example,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let b = self.batch(indices);
        Dataset {
            inputs: b.inputs,
            labels: b.labels,
            example_shape: self.example_shape.clone(),
            targets_per_example: self.targets_per_example,
            num_classes: self.num_classes,
            provenance: self.provenance,
        }
    }

    pub fn as_batch(&self) -> Batch {
        Batch {
            inputs: self.inputs.clone(),
            labels: self.labels.clone(),
            example_shape: self.example_shape.clone(),
            targets_per_example: self.targets_per_example,
        }
    }
}

/// A contiguous copy of some examples and their targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    inputs: Vec<f32>,
    labels: Vec<u32>,
    example_shape: Vec<usize>,
    targets_per_example: usize,
}

impl Batch {
    pub fn new(inputs: Vec<f32>, labels: Vec<u32>, example_shape: Vec<usize>) -> Result<Self> {
        let example_len: usize = example_shape.iter().product();
        if labels.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if inputs.len() != labels.len() * example_len {
            return Err(Error::shape(format!(
                "{} inputs for {} labels of example length {example_len}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            example_shape,
            targets_per_example: 1,
        })
    }

    /// A single-example placeholder batch for objectives that ignore data.
    pub fn unit() -> Self {
        Self {
            inputs: vec![0.0],
            labels: vec![0],
            example_shape: vec![1],
            targets_per_example: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len() / self.targets_per_example
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example_shape(&self) -> &[usize] {
        &self.example_shape
    }

    pub fn example_len(&self) -> usize {
        self.example_shape.iter().product()
    }

    pub fn targets_per_example(&self) -> usize {
        self.targets_per_example
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn example(&self, i: usize) -> &[f32] {
        let len = self.example_len();
        &self.inputs[i * len..(i + 1) * len]
    }

    pub fn targets(&self, i: usize) -> &[u32] {
        let k = self.targets_per_example;
        &self.labels[i * k..(i + 1) * k]
    }

    /// Examples in a different order; used by permutation tests.
    pub fn permuted(&self, order: &[usize]) -> Batch {
        let mut inputs = Vec::with_capacity(self.inputs.len());
        let mut labels = Vec::with_capacity(self.labels.len());
        for &i in order {
            inputs.extend_from_slice(self.example(i));
            labels.extend_from_slice(self.targets(i));
        }
        Batch {
            inputs,
            labels,
            example_shape: self.example_shape.clone(),
            targets_per_example: self.targets_per_example,
        }
    }
}
