//! CIFAR-10 binary format reader.
//!
//! Each record is one label byte followed by 3072 pixel bytes: the red,
//! green and blue 32x32 planes, each row-major. Pixels are mapped to
//! `byte / 255 - 0.5` and stored channel-major (3x32x32).

use std::fs;
use std::path::{Path, PathBuf};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};

pub const CIFAR10_RECORD_LEN: usize = 1 + 3 * 32 * 32;
const CLASSES: usize = 10;

const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILES: [&str; 1] = ["test_batch.bin"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Decodes a buffer of concatenated CIFAR-10 records.
pub fn parse_cifar10(bytes: &[u8]) -> Result<Dataset> {
    let (inputs, labels) = decode_records(bytes)?;
    Dataset::new(inputs, labels, vec![3, 32, 32], CLASSES, Provenance::Cifar10)
}

fn decode_records(bytes: &[u8]) -> Result<(Vec<f32>, Vec<u32>)> {
    if bytes.is_empty() || bytes.len() % CIFAR10_RECORD_LEN != 0 {
        return Err(Error::Format(format!(
            "{} bytes is not a positive multiple of the {CIFAR10_RECORD_LEN}-byte record",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR10_RECORD_LEN;
    let mut inputs = Vec::with_capacity(n * (CIFAR10_RECORD_LEN - 1));
    let mut labels = Vec::with_capacity(n);
    for (i, record) in bytes.chunks_exact(CIFAR10_RECORD_LEN).enumerate() {
        let label = record[0];
        if usize::from(label) >= CLASSES {
            return Err(Error::Corrupt(format!("record {i} has label byte {label}")));
        }
        labels.push(u32::from(label));
        inputs.extend(record[1..].iter().map(|&b| f32::from(b) / 255.0 - 0.5));
    }
    Ok((inputs, labels))
}

/// Locates the batch directory, accepting either the extracted
/// `cifar-10-batches-bin` folder or its parent.
fn batch_dir(directory: &Path) -> PathBuf {
    let nested = directory.join("cifar-10-batches-bin");
    if nested.is_dir() {
        nested
    } else {
        directory.to_path_buf()
    }
}

pub fn load_cifar10(directory: &Path, split: Split) -> Result<Dataset> {
    let dir = batch_dir(directory);
    let files: &[&str] = match split {
        Split::Train => &TRAIN_FILES,
        Split::Test => &TEST_FILES,
    };
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for name in files {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::DataMissing(path));
        }
        let bytes = fs::read(&path)?;
        let (x, y) = decode_records(&bytes).map_err(|e| match e {
            Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })?;
        inputs.extend(x);
        labels.extend(y);
    }
    Dataset::new(inputs, labels, vec![3, 32, 32], CLASSES, Provenance::Cifar10)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, fill: u8) -> Vec<u8> {
        let mut r = vec![fill; CIFAR10_RECORD_LEN];
        r[0] = label;
        r
    }

    #[test]
    fn scaling_formula() {
        let ds = parse_cifar10(&record(3, 255)).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.example(0)[0], 0.5);
        let ds = parse_cifar10(&record(3, 0)).unwrap();
        assert_eq!(ds.example(0)[100], -0.5);
    }

    #[test]
    fn partial_record_is_format_error() {
        let bytes = vec![0u8; 3072];
        assert!(matches!(parse_cifar10(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_label_is_corruption() {
        assert!(matches!(
            parse_cifar10(&record(10, 0)),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn record_count() {
        let mut bytes = Vec::new();
        for i in 0..10_000u32 {
            bytes.extend(record((i % 10) as u8, (i % 251) as u8));
        }
        let ds = parse_cifar10(&bytes).unwrap();
        assert_eq!(ds.len(), 10_000);
        assert_eq!(ds.example_shape(), &[3, 32, 32]);
    }

    #[test]
    fn plane_order_is_rgb_row_major() {
        let mut r = record(1, 0);
        // red (0,1), green (0,0), blue (31,31)
        r[1 + 1] = 255;
        r[1 + 1024] = 255;
        r[1 + 2048 + 1023] = 255;
        let ds = parse_cifar10(&r).unwrap();
        let x = ds.example(0);
        assert_eq!(x[1], 0.5);
        assert_eq!(x[1024], 0.5);
        assert_eq!(x[2047 + 1024], 0.5);
        assert_eq!(x[0], -0.5);
    }

    #[test]
    fn missing_directory_reports_path() {
        let err = load_cifar10(Path::new("/nonexistent/cifar"), Split::Test).unwrap_err();
        assert!(matches!(err, Error::DataMissing(p) if p.ends_with("test_batch.bin")));
    }
}
