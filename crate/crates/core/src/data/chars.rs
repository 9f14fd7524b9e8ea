//! Character-level next-token corpus for the optional decoder.
//!
//! Text is mapped to a fixed 96-symbol alphabet: newline is 0 and printable
//! ASCII `' '..='~'` is `1..=95`. Tabs become a space; any other byte is an
//! error. The first 90% of the text is training data, the rest held out.
//! Examples are non-overlapping windows of `context + 1` symbols: the first
//! `context` are inputs, the last `context` are targets.

use std::fs;
use std::path::Path;

use super::{Dataset, Provenance};
use crate::error::{Error, Result};

/// Alphabet size.
pub const VOCAB: usize = 96;

#[derive(Clone, Debug)]
pub struct CharCorpus {
    pub train: Dataset,
    heldout_tokens: Vec<u32>,
    context: usize,
}

impl CharCorpus {
    /// Up to `n` windows from the held-out tail.
    pub fn heldout(&self, n: usize) -> Result<Dataset> {
        let ds = windows(&self.heldout_tokens, self.context)?;
        let keep: Vec<usize> = (0..n.min(ds.len())).collect();
        Ok(ds.subset(&keep))
    }
}

pub fn encode(byte: u8) -> Option<u32> {
    match byte {
        b'\n' => Some(0),
        b'\t' => Some(1),
        b' '..=b'~' => Some(u32::from(byte - b' ') + 1),
        _ => None,
    }
}

pub fn char_corpus(path: &Path, context: usize) -> Result<CharCorpus> {
    if context == 0 {
        return Err(Error::invalid("context must be positive"));
    }
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::DataMissing(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let tokens: Vec<u32> = bytes
        .iter()
        .filter(|&&b| b != b'\r')
        .enumerate()
        .map(|(i, &b)| {
            encode(b).ok_or_else(|| {
                Error::Format(format!(
                    "{}: byte {b:#04x} at {i} is outside the character alphabet",
                    path.display()
                ))
            })
        })
        .collect::<Result<_>>()?;
    let split = tokens.len() * 9 / 10;
    let train = windows(&tokens[..split], context)?;
    Ok(CharCorpus {
        train,
        heldout_tokens: tokens[split..].to_vec(),
        context,
    })
}

fn windows(tokens: &[u32], context: usize) -> Result<Dataset> {
    let n = tokens.len().saturating_sub(1) / context;
    if n == 0 {
        return Err(Error::Format(format!(
            "{} symbols do not fill one window of context {context}",
            tokens.len()
        )));
    }
    let mut inputs = Vec::with_capacity(n * context);
    let mut labels = Vec::with_capacity(n * context);
    for w in 0..n {
        let s = &tokens[w * context..w * context + context + 1];
        inputs.extend(s[..context].iter().map(|&t| t as f32));
        labels.extend_from_slice(&s[1..]);
    }
    Dataset::with_targets(inputs, labels, vec![context], context, VOCAB, Provenance::Chars)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet() {
        assert_eq!(encode(b'\n'), Some(0));
        assert_eq!(encode(b' '), Some(1));
        assert_eq!(encode(b'~'), Some(95));
        assert_eq!(encode(0x80), None);
    }

    #[test]
    fn windows_shift_by_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.txt");
        fs::write(&path, "abcdefghijklmnopqrstuvwxyz0123").unwrap();
        let c = char_corpus(&path, 4).unwrap();
        // 27 training symbols give 6 windows of 5
        assert_eq!(c.train.len(), 6);
        let x: Vec<u32> = c.train.example(1).iter().map(|&v| v as u32).collect();
        assert_eq!(x, b"efgh".map(|b| encode(b).unwrap()));
        assert_eq!(c.train.targets(1), b"fghi".map(|b| encode(b).unwrap()));
        assert!(c.heldout(10).is_err());
    }

    #[test]
    fn missing_file() {
        let err = char_corpus(Path::new("/nonexistent/corpus.txt"), 8).unwrap_err();
        assert!(matches!(err, Error::DataMissing(_)));
    }
}
