//! Recursive HST JSON: internal nodes are `{"h": int, "children": [...]}`,
//! leaves are `{"h": 0, "point": "<label>"}`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Hst, HstEmbedding, HstError, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HstJson {
    pub h: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<HstJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<String>,
}

#[derive(Debug, Error)]
pub enum HstJsonError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown point label {0:?}")]
    UnknownLabel(String),
    #[error(transparent)]
    Hst(#[from] HstError),
}

pub fn to_json(e: &HstEmbedding, labels: &[String]) -> HstJson {
    fn go(t: &Hst, id: NodeId, labels: &[String]) -> HstJson {
        let n = t.node(id);
        HstJson {
            h: n.height,
            children: n.children.iter().map(|&c| go(t, c, labels)).collect(),
            point: n.point.map(|p| labels[p].clone()),
        }
    }
    go(e.tree(), e.tree().root(), labels)
}

pub fn to_json_string(e: &HstEmbedding, labels: &[String]) -> String {
    serde_json::to_string(&to_json(e, labels)).expect("plain data")
}

/// Rebuild an embedding; point labels are resolved against `labels`.
pub fn from_json(j: &HstJson, beta: f64, labels: &[String]) -> Result<HstEmbedding, HstJsonError> {
    let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let resolve = |p: &Option<String>| -> Result<Option<usize>, HstJsonError> {
        p.as_ref()
            .map(|l| index.get(l.as_str()).copied().ok_or_else(|| HstJsonError::UnknownLabel(l.clone())))
            .transpose()
    };
    let mut t = Hst::with_root(beta, j.h);
    t.nodes[0].point = resolve(&j.point)?;
    let mut stack: Vec<(&HstJson, NodeId)> = vec![(j, 0)];
    while let Some((node, id)) = stack.pop() {
        let mut kids = Vec::with_capacity(node.children.len());
        for c in &node.children {
            let cid = t.add_child(id, c.h, resolve(&c.point)?);
            kids.push((c, cid));
        }
        stack.extend(kids.into_iter().rev());
    }
    Ok(HstEmbedding::from_tree(t)?)
}

pub fn from_json_str(s: &str, beta: f64, labels: &[String]) -> Result<HstEmbedding, HstJsonError> {
    from_json(&serde_json::from_str(s)?, beta, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hst::tests::sample_tree;

    #[test]
    fn exact_round_trip() {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let e = sample_tree();
        let s = to_json_string(&e, &labels);
        assert!(s.starts_with(r#"{"h":3,"children":["#));
        let back = from_json_str(&s, 2.0, &labels).unwrap();
        assert_eq!(to_json_string(&back, &labels), s);
        assert_eq!(back.distance_matrix(), e.distance_matrix());
    }

    #[test]
    fn unknown_label() {
        let r = from_json_str(r#"{"h":0,"point":"zz"}"#, 2.0, &["a".to_string()]);
        assert!(matches!(r, Err(HstJsonError::UnknownLabel(_))));
    }
}
