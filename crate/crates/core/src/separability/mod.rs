//! Separability detection and the block/factor structure it produces.

mod bict;
mod detect;
mod structure;
mod union_find;

pub use bict::{
    bict_additive, bict_multiplicative, difference_constancy, zero_intercept_statistic,
    BiCTVerdict, DetectionConfig, VerdictKind, MAX_ANCHOR_ATTEMPTS,
};
pub use detect::{detect_blocks, detect_factors, detect_structure, is_constant, Detection, PairVerdict};
pub use structure::{Classification, SeparableStructure, StructureDocument};
pub use union_find::UnionFind;
