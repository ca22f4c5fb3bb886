use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    OneHot,
    Dense,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureBlock {
    pub name: String,
    pub size: usize,
    pub kind: BlockKind,
}

/// Names the consecutive blocks of a feature vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureLayout {
    blocks: Vec<FeatureBlock>,
}

impl FeatureLayout {
    pub fn new() -> Self {
        Self { blocks: Vec::new() }
    }

    pub fn one_hot(mut self, name: impl Into<String>, size: usize) -> Self {
        self.blocks.push(FeatureBlock { name: name.into(), size, kind: BlockKind::OneHot });
        self
    }

    pub fn dense(mut self, name: impl Into<String>, size: usize) -> Self {
        self.blocks.push(FeatureBlock { name: name.into(), size, kind: BlockKind::Dense });
        self
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.size).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_one_hot(&self) -> bool {
        self.blocks.iter().all(|b| b.kind == BlockKind::OneHot)
    }

    /// Builds a vector from the hot index of each one-hot block, in order,
    /// and the contents of each dense block.
    pub fn encode(self: &Arc<Self>, hot: &[usize], dense: &[&[f64]]) -> FeatureVector {
        let mut values = vec![0.0; self.len()];
        let (mut offset, mut h, mut d) = (0, 0, 0);
        for block in &self.blocks {
            match block.kind {
                BlockKind::OneHot => {
                    assert!(hot[h] < block.size, "hot index {} outside block {}", hot[h], block.name);
                    values[offset + hot[h]] = 1.0;
                    h += 1;
                }
                BlockKind::Dense => {
                    assert_eq!(dense[d].len(), block.size, "dense block {}", block.name);
                    values[offset..offset + block.size].copy_from_slice(dense[d]);
                    d += 1;
                }
            }
            offset += block.size;
        }
        FeatureVector { values: values.into(), layout: Arc::clone(self) }
    }
}

impl Default for FeatureLayout {
    fn default() -> Self {
        Self::new()
    }
}

/// Shared, immutable input vector for an approximator.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Arc<[f64]>,
    pub layout: Arc<FeatureLayout>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Hot position inside each one-hot block.
    pub fn hot_indices(&self) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut offset = 0;
        for block in self.layout.blocks() {
            if block.kind == BlockKind::OneHot {
                let slice = &self.values[offset..offset + block.size];
                let mut hot = slice.iter().enumerate().filter(|(_, v)| **v != 0.0);
                match (hot.next(), hot.next()) {
                    (Some((i, v)), None) if *v == 1.0 => out.push(i),
                    _ => return Err(Error::NotOneHot(format!("block `{}`", block.name))),
                }
            }
            offset += block.size;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.layout.len() {
            return Err(Error::SizeMismatch { expected: self.layout.len(), got: self.values.len() });
        }
        self.hot_indices().map(|_| ())
    }
}
