use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", rename_all = "lowercase", tag = "kind")]
pub enum Node<T> {
    Split {
        feature: usize,
        /// Rows with bin `<= bin` go left.
        bin: u16,
        /// Raw-value form of the same test: `v < threshold` goes left.
        threshold: T,
        /// Direction taken by missing values.
        default_left: bool,
        left: usize,
        right: usize,
        gain: T,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cover: Option<T>,
    },
    Leaf {
        value: T,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cover: Option<T>,
    },
}

impl<T: Scalar> Node<T> {
    pub fn cover(&self) -> Option<T> {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// Binary tree stored as a node arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn leaf(value: T, cover: Option<T>) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    /// Leaf value for a row given by raw feature values.
    pub fn predict_with(&self, value_of: impl Fn(usize) -> T) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = value_of(*feature);
                    let go_left = if v.is_missing() { *default_left } else { v < *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    /// Leaf value for a binned row.
    pub fn predict_binned(&self, bin_of: impl Fn(usize) -> u16, missing_bin: impl Fn(usize) -> u16) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    bin,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let b = bin_of(*feature);
                    let go_left = if b == missing_bin(*feature) { *default_left } else { b <= *bin };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn d<T: Scalar>(t: &Tree<T>, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + d(t, *left).max(d(t, *right)),
            }
        }
        d(self, 0)
    }

    pub fn features_used(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    /// Cover-weighted mean leaf value: the tree's expectation over the
    /// training distribution. `None` if covers are absent.
    pub fn expected_value(&self) -> Option<T> {
        let root = self.nodes[0].cover()?;
        if !(root > T::zero()) {
            return None;
        }
        let mut acc = T::zero();
        for n in &self.nodes {
            if let Node::Leaf { value, cover } = n {
                acc += *value * (*cover)?;
            }
        }
        Some(acc / root)
    }
}
