use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitRule {
    Zero,
    One,
    Uniform { fan_in: usize },
}

/// One named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
    pub init: InitRule,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered, contiguous parameter table covering `[0, dim)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<ParamBlock>,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block at the current end and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, init: InitRule) -> Result<usize> {
        let name = name.into();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!("parameter {name} has empty shape {shape:?}")));
        }
        let offset = self.dim();
        self.blocks.push(ParamBlock {
            name,
            offset,
            shape,
            init,
        });
        Ok(offset)
    }

    pub fn dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.offset + b.len())
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_are_contiguous() {
        let mut l = Layout::new();
        assert_eq!(l.push("a", vec![2, 3], InitRule::Zero).unwrap(), 0);
        assert_eq!(l.push("b", vec![4], InitRule::Zero).unwrap(), 6);
        assert_eq!(l.dim(), 10);
        assert_eq!(l.block("b").unwrap().range(), 6..10);
        assert!(l.push("c", vec![0], InitRule::Zero).is_err());
    }
}
