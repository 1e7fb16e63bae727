use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// Every factor has exactly one variable.
    CompletelySeparable,
    PartiallySeparable,
}

/// Block/factor decomposition `f = b0 + sum_i b_i prod_j psi_ij(x_Iij)`.
///
/// Blocks combine by addition, factors inside a block by multiplication.
/// Factor variable sets are sorted; factors are ordered by their smallest
/// variable, blocks by the smallest variable they contain. Two structures
/// describing the same partition therefore compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparableStructure {
    dim: usize,
    blocks: Vec<Vec<Vec<usize>>>,
    #[serde(default)]
    degenerate_constant: bool,
}

impl SeparableStructure {
    /// Validates the partition property and canonicalizes the ordering.
    pub fn new(dim: usize, blocks: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidStructure("dimension must be positive".into()));
        }
        if blocks.is_empty() {
            return Err(Error::InvalidStructure("at least one block required".into()));
        }
        let mut seen = vec![false; dim];
        let mut blocks = blocks;
        for block in &mut blocks {
            if block.is_empty() {
                return Err(Error::InvalidStructure("empty block".into()));
            }
            for factor in block.iter_mut() {
                if factor.is_empty() {
                    return Err(Error::InvalidStructure("empty factor".into()));
                }
                factor.sort_unstable();
                for &v in factor.iter() {
                    if v >= dim {
                        return Err(Error::InvalidStructure(format!(
                            "variable x{} outside dimension {dim}",
                            v + 1
                        )));
                    }
                    if std::mem::replace(&mut seen[v], true) {
                        return Err(Error::InvalidStructure(format!(
                            "variable x{} appears twice",
                            v + 1
                        )));
                    }
                }
            }
            block.sort_by_key(|f| f[0]);
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidStructure(format!(
                "variable x{} is not covered",
                v + 1
            )));
        }
        blocks.sort_by_key(|b| b.iter().map(|f| f[0]).min());
        Ok(Self {
            dim,
            blocks,
            degenerate_constant: false,
        })
    }

    /// Structure reported for a target with no measurable variation.
    pub fn constant(dim: usize) -> Self {
        Self {
            dim,
            blocks: vec![vec![(0..dim).collect()]],
            degenerate_constant: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Vec<Vec<usize>>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn factor_count(&self, block: usize) -> usize {
        self.blocks[block].len()
    }

    /// Total number of factors across all blocks.
    pub fn total_factors(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn factor(&self, block: usize, factor: usize) -> &[usize] {
        &self.blocks[block][factor]
    }

    /// Sorted variables of a block.
    pub fn block_variables(&self, block: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.blocks[block].iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn is_degenerate_constant(&self) -> bool {
        self.degenerate_constant
    }

    pub fn classification(&self) -> Classification {
        if self.blocks.iter().flatten().all(|f| f.len() == 1) {
            Classification::CompletelySeparable
        } else {
            Classification::PartiallySeparable
        }
    }

    /// Iterates `(block, factor, variables)`.
    pub fn iter_factors(&self) -> impl Iterator<Item = (usize, usize, &[usize])> {
        self.blocks.iter().enumerate().flat_map(|(i, b)| {
            b.iter()
                .enumerate()
                .map(move |(j, f)| (i, j, f.as_slice()))
        })
    }

    pub fn document(&self, epsilon: f64, seed: u64) -> StructureDocument {
        StructureDocument {
            dim: self.dim,
            blocks: self.blocks.clone(),
            classification: self.classification(),
            degenerate_constant: self.degenerate_constant,
            epsilon,
            seed,
        }
    }
}

impl fmt::Display for SeparableStructure {
    /// `{x1, x3} | {x2} * {x4}` — blocks separated by `|`, factors by `*`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let blocks: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|fac| {
                        let vars: Vec<String> =
                            fac.iter().map(|v| format!("x{}", v + 1)).collect();
                        format!("{{{}}}", vars.join(", "))
                    })
                    .collect::<Vec<_>>()
                    .join(" * ")
            })
            .collect();
        f.write_str(&blocks.join(" | "))
    }
}

/// JSON form of a detected structure. Variable indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureDocument {
    pub dim: usize,
    pub blocks: Vec<Vec<Vec<usize>>>,
    pub classification: Classification,
    pub degenerate_constant: bool,
    pub epsilon: f64,
    pub seed: u64,
}

impl StructureDocument {
    pub fn structure(&self) -> Result<SeparableStructure> {
        if self.degenerate_constant {
            return Ok(SeparableStructure::constant(self.dim));
        }
        SeparableStructure::new(self.dim, self.blocks.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order() {
        let a = SeparableStructure::new(3, vec![vec![vec![1]], vec![vec![2, 0]]]).unwrap();
        let b = SeparableStructure::new(3, vec![vec![vec![0, 2]], vec![vec![1]]]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "{x1, x3} | {x2}");
        assert_eq!(a.classification(), Classification::PartiallySeparable);
    }

    #[test]
    fn partition_violations() {
        assert!(SeparableStructure::new(2, vec![vec![vec![0]]]).is_err());
        assert!(SeparableStructure::new(2, vec![vec![vec![0, 1]], vec![vec![1]]]).is_err());
        assert!(SeparableStructure::new(2, vec![vec![vec![0, 2]]]).is_err());
        assert!(SeparableStructure::new(2, vec![vec![], vec![vec![0, 1]]]).is_err());
        assert!(SeparableStructure::new(2, vec![]).is_err());
    }

    #[test]
    fn eq11_counts() {
        // (x1)(x2,x3) | (x4) | (x5)(x6)
        let s = SeparableStructure::new(
            6,
            vec![
                vec![vec![0], vec![1, 2]],
                vec![vec![3]],
                vec![vec![4], vec![5]],
            ],
        )
        .unwrap();
        assert_eq!(s.block_count(), 3);
        assert_eq!(
            (0..3).map(|i| s.factor_count(i)).collect::<Vec<_>>(),
            vec![2, 1, 2]
        );
        assert_eq!(s.total_factors(), 5);
        assert_eq!(s.to_string(), "{x1} * {x2, x3} | {x4} | {x5} * {x6}");
    }

    #[test]
    fn json_document_round_trip() {
        let s = SeparableStructure::new(2, vec![vec![vec![0], vec![1]]]).unwrap();
        let doc = s.document(1e-6, 9);
        assert_eq!(doc.classification, Classification::CompletelySeparable);
        let text = serde_json::to_string(&doc).unwrap();
        let back: StructureDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.structure().unwrap(), s);
    }
}
