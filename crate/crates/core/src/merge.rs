//! Perfect merge of two HST embeddings that share exactly one point.
//!
//! Both trees are aligned along the path from the shared leaf to their roots.
//! At every height, the off-path children of the second tree's path node are
//! copied under the first tree's path node of the same height. The first
//! tree is left structurally intact apart from the added children, so its
//! distances are preserved; a copied subtree hangs at the same height it had
//! relative to the shared point, so the second tree's distances are
//! preserved too. A cross pair `(x, y)` ends up with its LCA on the first
//! tree's path at or above both `LCA(x, v)` and the graft point of `y`.

use thiserror::Error;

use crate::hst::{HstEmbedding, HstError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MergeError {
    #[error("embeddings must share exactly one point, found {0}")]
    SharedPointCountNotOne(usize),
    #[error("beta mismatch: {0} vs {1}")]
    BetaMismatch(f64, f64),
    #[error("input tree invalid: {0}")]
    InvalidInputTree(String),
    #[error(transparent)]
    Hst(#[from] HstError),
}

pub fn merge_hst(a1: &HstEmbedding, a2: &HstEmbedding) -> Result<HstEmbedding, MergeError> {
    if a1.beta() != a2.beta() {
        return Err(MergeError::BetaMismatch(a1.beta(), a2.beta()));
    }
    let d2 = a2.domain();
    let shared: Vec<usize> = a1.domain().into_iter().filter(|p| d2.binary_search(p).is_ok()).collect();
    if shared.len() != 1 {
        return Err(MergeError::SharedPointCountNotOne(shared.len()));
    }
    for e in [a1, a2] {
        e.tree().validate().map_err(|v| MergeError::InvalidInputTree(v.to_string()))?;
    }
    let v = shared[0];

    let mut t1 = a1.tree().clone();
    let mut t2 = a2.tree().clone();
    let top = t1.root_height().max(t2.root_height());
    t1.raise_root_to(top);
    t2.raise_root_to(top);

    // path[h] is the ancestor of v's leaf at height h
    let p1 = t1.path_to_root(a1.leaf(v)?);
    let p2 = t2.path_to_root(a2.leaf(v)?);
    debug_assert_eq!(p1.len(), p2.len());
    for h in 1..p2.len() {
        let on_path = p2[h - 1];
        let grafts: Vec<usize> = t2.node(p2[h]).children.iter().copied().filter(|&c| c != on_path).collect();
        for c in grafts {
            t1.graft_copy(p1[h], &t2, c);
        }
    }
    Ok(HstEmbedding::from_tree(t1)?)
}
