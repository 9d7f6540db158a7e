//! Trained model, prediction, and the on-disk model format.
//!
//! A model file is UTF-8 text: a header of `key = value` lines, a `---`
//! separator line, then the body, a JSON object with these fields:
//!
//! ```text
//! sepsis-gbdt-model
//! format_version = 1
//! checksum = sha256:<hex digest of the body bytes>
//! ---
//! {
//!   "format_version": 1,
//!   "base_score": <log-odds>,
//!   "trees": [ { "nodes": [ <node>, ... ] }, ... ],
//!   "feature_names": [ ... ],
//!   "bin_edges": [ [ ... ], ... ],        // per feature, ascending
//!   "params": { <training parameters> },
//!   "meta": { "train_rows", "prevalence", "rounds_completed" }
//! }
//! ```
//!
//! A node is either `{"kind":"split","feature","bin","threshold",
//! "default_left","left","right","gain","cover"}` or
//! `{"kind":"leaf","value","cover"}`. `feature` indexes `feature_names`;
//! `left`/`right` index the tree's `nodes`; node 0 is the root.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::TrainParams;
use super::tree::{Node, Tree};
use super::GbdtError;
use crate::frame::FeatureFrame;
use crate::scalar::{sigmoid, Scalar};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "sepsis-gbdt-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub train_rows: usize,
    pub prevalence: f64,
    pub rounds_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelArtifact<T> {
    pub format_version: u32,
    pub base_score: T,
    pub trees: Vec<Tree<T>>,
    pub feature_names: Vec<String>,
    pub bin_edges: Vec<Vec<T>>,
    pub params: TrainParams,
    pub meta: TrainMeta,
}

impl<T: Scalar> ModelArtifact<T> {
    /// Model with no trees.
    pub fn base_only(base_score: T, feature_names: Vec<String>) -> Self {
        let n = feature_names.len();
        Self {
            format_version: FORMAT_VERSION,
            base_score,
            trees: Vec::new(),
            feature_names,
            bin_edges: vec![Vec::new(); n],
            params: TrainParams {
                rounds: 0,
                ..Default::default()
            },
            meta: TrainMeta {
                train_rows: 0,
                prevalence: sigmoid(base_score).as_f64(),
                rounds_completed: 0,
            },
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Whether any tree splits on feature `f`.
    pub fn uses_feature(&self, f: usize) -> bool {
        self.trees.iter().any(|t| t.features_used().any(|u| u == f))
    }

    pub fn n_splits(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.iter().filter(|n| !n.is_leaf()).count()).sum()
    }

    /// Structural checks: feature and child indices in range, finite leaves.
    pub fn validate(&self) -> Result<(), GbdtError> {
        if self.bin_edges.len() != self.feature_names.len() {
            return Err(GbdtError::Malformed("bin_edges and feature_names differ in length".into()));
        }
        for (ti, t) in self.trees.iter().enumerate() {
            if t.nodes.is_empty() {
                return Err(GbdtError::Malformed(format!("tree {ti} has no nodes")));
            }
            for n in &t.nodes {
                match n {
                    Node::Split { feature, left, right, .. } => {
                        if *feature >= self.feature_names.len() {
                            return Err(GbdtError::Malformed(format!("tree {ti} references feature {feature}")));
                        }
                        if *left >= t.nodes.len() || *right >= t.nodes.len() {
                            return Err(GbdtError::Malformed(format!("tree {ti} has a dangling child")));
                        }
                    }
                    Node::Leaf { value, .. } => {
                        if !value.is_finite() {
                            return Err(GbdtError::Malformed(format!("tree {ti} has a non-finite leaf")));
                        }
                    }
                }
            }
        }
        if !self.base_score.is_finite() {
            return Err(GbdtError::Malformed("non-finite base score".into()));
        }
        Ok(())
    }

    /// Margins for columns already laid out in model feature order.
    pub fn predict_margin_columns(&self, cols: &[&[T]], n_rows: usize) -> Vec<T> {
        (0..n_rows)
            .into_par_iter()
            .map(|r| {
                let mut z = self.base_score;
                for t in &self.trees {
                    z += t.predict_with(|f| cols[f][r]);
                }
                z
            })
            .collect()
    }

    pub fn predict_margin(&self, frame: &FeatureFrame<T>) -> Result<Vec<T>, GbdtError> {
        let cols = frame
            .resolve(&self.feature_names)
            .map_err(|e| GbdtError::FeatureLayout(e.to_string()))?;
        Ok(self.predict_margin_columns(&cols, frame.n_rows()))
    }

    pub fn predict_proba(&self, frame: &FeatureFrame<T>) -> Result<Vec<T>, GbdtError> {
        Ok(self.predict_margin(frame)?.into_iter().map(sigmoid).collect())
    }

    /// Margin for one row in model feature order.
    pub fn margin_of_row(&self, row: &[T]) -> T {
        let mut z = self.base_score;
        for t in &self.trees {
            z += t.predict_with(|f| row[f]);
        }
        z
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, GbdtError> {
        let body = serde_json::to_string_pretty(self).map_err(|e| GbdtError::Malformed(e.to_string()))?;
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        let mut out = format!("{MAGIC}\nformat_version = {}\nchecksum = sha256:{digest}\n---\n", self.format_version);
        out.push_str(&body);
        out.push('\n');
        Ok(out.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GbdtError> {
        let text = std::str::from_utf8(bytes).map_err(|_| GbdtError::Malformed("model file is not UTF-8".into()))?;
        let mut lines = text.split_inclusive('\n');
        let magic = lines.next().unwrap_or("").trim_end();
        if magic != MAGIC {
            return Err(GbdtError::Malformed(format!("bad magic line `{magic}`")));
        }
        let mut version: Option<&str> = None;
        let mut checksum: Option<&str> = None;
        let mut header_len = magic.len() + 1;
        let mut separated = false;
        for line in lines.by_ref() {
            header_len += line.len();
            let l = line.trim_end();
            if l == "---" && line.ends_with('\n') {
                separated = true;
                break;
            }
            if let Some((k, v)) = l.split_once('=') {
                match k.trim() {
                    "format_version" => version = Some(v.trim()),
                    "checksum" => checksum = Some(v.trim()),
                    _ => {}
                }
            }
        }
        if let Some(v) = version {
            if v.parse::<u32>().ok() != Some(FORMAT_VERSION) {
                return Err(GbdtError::UnsupportedVersion(v.to_string()));
            }
        }
        let (Some(sum), true) = (checksum, separated) else {
            return Err(GbdtError::Checksum("header incomplete; file truncated".into()));
        };
        if version.is_none() {
            return Err(GbdtError::Malformed("missing format_version".into()));
        }
        let body = text[header_len..].strip_suffix('\n').unwrap_or(&text[header_len..]);
        let expected = sum.strip_prefix("sha256:").unwrap_or(sum);
        let actual = hex::encode(Sha256::digest(body.as_bytes()));
        if actual != expected {
            return Err(GbdtError::Checksum(format!("expected {expected}, computed {actual}")));
        }
        let model: Self = serde_json::from_str(body).map_err(|e| GbdtError::Malformed(e.to_string()))?;
        if model.format_version != FORMAT_VERSION {
            return Err(GbdtError::UnsupportedVersion(model.format_version.to_string()));
        }
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), GbdtError> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| GbdtError::Io(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, GbdtError> {
        let bytes = std::fs::read(path).map_err(|e| GbdtError::Io(e.to_string()))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{quantile_bin, train};
    use rand::{Rng, SeedableRng};

    fn stump(edge: f64) -> ModelArtifact<f64> {
        let mut m = ModelArtifact::base_only(0.0, vec!["x".into()]);
        m.bin_edges = vec![vec![edge]];
        m.trees.push(Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    bin: 0,
                    threshold: edge,
                    default_left: true,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                    cover: Some(4.0),
                },
                Node::Leaf { value: -1.0, cover: Some(2.0) },
                Node::Leaf { value: 1.0, cover: Some(2.0) },
            ],
        });
        m
    }

    #[test]
    fn stump_hand_evaluation() {
        let m = stump(0.5);
        let f = FeatureFrame::from_columns(3, vec![("x".into(), vec![0.2, 0.9, f64::NAN])]).unwrap();
        let p = m.predict_proba(&f).unwrap();
        assert_eq!(p[0], sigmoid(-1.0));
        assert_eq!(p[1], sigmoid(1.0));
        assert_eq!(p[2], sigmoid(-1.0));
        let wrong = FeatureFrame::from_columns(1, vec![("y".into(), vec![0.0])]).unwrap();
        assert!(matches!(m.predict_proba(&wrong), Err(GbdtError::FeatureLayout(_))));
    }

    fn trained() -> (ModelArtifact<f64>, FeatureFrame<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 400;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v + rng.random_range(-0.5..0.5) > 0.0)).collect();
        let f = FeatureFrame::from_columns(n, vec![("x".into(), x)]).unwrap();
        let b = quantile_bin(&f, 32).unwrap();
        let p = crate::gbdt::TrainParams { rounds: 20, initial_learning_rate: 0.3, ..Default::default() };
        (train(&b, &y, &p, None).unwrap().0, f)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (m, f) = trained();
        let back = ModelArtifact::<f64>::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
        let a = m.predict_proba(&f).unwrap();
        let b = back.predict_proba(&f).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));

        let m32 = ModelArtifact::<f32>::base_only(0.25, vec!["x".into()]);
        assert_eq!(ModelArtifact::<f32>::from_bytes(&m32.to_bytes().unwrap()).unwrap(), m32);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (m, _) = trained();
        let bytes = m.to_bytes().unwrap();
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(ModelArtifact::<f64>::from_bytes(cut), Err(GbdtError::Checksum(_))));
        assert!(matches!(ModelArtifact::<f64>::from_bytes(&bytes[..30]), Err(GbdtError::Checksum(_))));
        let text = String::from_utf8(bytes.clone()).unwrap().replacen("format_version = 1", "format_version = 999", 1);
        assert!(matches!(
            ModelArtifact::<f64>::from_bytes(text.as_bytes()),
            Err(GbdtError::UnsupportedVersion(v)) if v == "999"
        ));
        let flipped = String::from_utf8(bytes).unwrap().replacen("\"base_score\": ", "\"base_score\": 1", 1);
        assert!(matches!(ModelArtifact::<f64>::from_bytes(flipped.as_bytes()), Err(GbdtError::Checksum(_))));
    }
}
