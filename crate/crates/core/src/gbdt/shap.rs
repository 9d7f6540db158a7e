//! Path-dependent tree Shapley values in margin space.
//!
//! Follows the polynomial-time recursion of Lundberg et al. (2018): each
//! root-to-leaf path keeps the fraction of "zero" and
//! "one" paths per unique feature and the permutation weights, which
//! `extend` and `unwind` update incrementally. Expectations over absent
//! features use the training cover of each branch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::ModelArtifact;
use super::tree::{Node, Tree};
use super::GbdtError;
use crate::frame::FeatureFrame;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ShapValues<T> {
    pub phi: Vec<T>,
    /// Expected margin over the training distribution.
    pub phi0: T,
}

#[derive(Debug, Clone, Copy)]
struct PathElem<T> {
    feature: Option<usize>,
    zero: T,
    one: T,
    w: T,
}

fn extend<T: Scalar>(path: &mut Vec<PathElem<T>>, zero: T, one: T, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElem {
        feature,
        zero,
        one,
        w: if l == 0 { T::one() } else { T::zero() },
    });
    let lp1 = T::of_usize(l + 1);
    for i in (0..l).rev() {
        let wi = path[i].w;
        path[i + 1].w += one * wi * T::of_usize(i + 1) / lp1;
        path[i].w = zero * wi * T::of_usize(l - i) / lp1;
    }
}

fn unwind<T: Scalar>(path: &mut Vec<PathElem<T>>, i: usize) {
    let l = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let lp1 = T::of_usize(l + 1);
    let mut n = path[l].w;
    for j in (0..l).rev() {
        if one != T::zero() {
            let t = path[j].w;
            path[j].w = n * lp1 / (T::of_usize(j + 1) * one);
            n = t - path[j].w * zero * T::of_usize(l - j) / lp1;
        } else {
            path[j].w = path[j].w * lp1 / (zero * T::of_usize(l - j));
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

fn unwound_sum<T: Scalar>(path: &[PathElem<T>], i: usize) -> T {
    let mut p = path.to_vec();
    unwind(&mut p, i);
    p.iter().map(|e| e.w).sum()
}

struct Walk<'a, T> {
    tree: &'a Tree<T>,
    row: &'a [T],
    phi: &'a mut [T],
}

impl<T: Scalar> Walk<'_, T> {
    fn cover(&self, j: usize) -> T {
        self.tree.nodes[j].cover().expect("covers checked before the walk")
    }

    fn recurse(&mut self, j: usize, parent: &[PathElem<T>], zero: T, one: T, feature: Option<usize>) {
        let mut path = parent.to_vec();
        extend(&mut path, zero, one, feature);
        match &self.tree.nodes[j] {
            Node::Leaf { value, .. } => {
                for i in 1..path.len() {
                    let w = unwound_sum(&path, i);
                    let f = path[i].feature.expect("only the root element has no feature");
                    self.phi[f] += w * (path[i].one - path[i].zero) * *value;
                }
            }
            Node::Split {
                feature: d,
                threshold,
                default_left,
                left,
                right,
                ..
            } => {
                let v = self.row[*d];
                let go_left = if v.is_missing() { *default_left } else { v < *threshold };
                let (hot, cold) = if go_left { (*left, *right) } else { (*right, *left) };
                let (mut iz, mut io) = (T::one(), T::one());
                if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*d)) {
                    iz = path[k].zero;
                    io = path[k].one;
                    unwind(&mut path, k);
                }
                let rj = self.cover(j);
                let (rh, rc) = (self.cover(hot), self.cover(cold));
                self.recurse(hot, &path, iz * rh / rj, io, Some(*d));
                self.recurse(cold, &path, iz * rc / rj, T::zero(), Some(*d));
            }
        }
    }
}

fn check_covers<T: Scalar>(model: &ModelArtifact<T>) -> Result<(), GbdtError> {
    for t in &model.trees {
        for n in &t.nodes {
            match n.cover() {
                Some(c) if c > T::zero() || n.is_leaf() => {}
                _ => return Err(GbdtError::MissingCover),
            }
        }
    }
    Ok(())
}

/// Base score plus each tree's cover-weighted expected leaf value.
pub fn expected_margin<T: Scalar>(model: &ModelArtifact<T>) -> Result<T, GbdtError> {
    check_covers(model)?;
    let mut e = model.base_score;
    for t in &model.trees {
        e += t.expected_value().ok_or(GbdtError::MissingCover)?;
    }
    Ok(e)
}

fn shap_row_unchecked<T: Scalar>(model: &ModelArtifact<T>, row: &[T], phi0: T) -> ShapValues<T> {
    let mut phi = vec![T::zero(); model.n_features()];
    for tree in &model.trees {
        if tree.nodes.len() > 1 {
            Walk { tree, row, phi: &mut phi }.recurse(0, &[], T::one(), T::one(), None);
        }
    }
    ShapValues { phi, phi0 }
}

/// Attribution for one row given in model feature order.
pub fn shap_attributions<T: Scalar>(model: &ModelArtifact<T>, row: &[T]) -> Result<ShapValues<T>, GbdtError> {
    if row.len() != model.n_features() {
        return Err(GbdtError::FeatureLayout(format!(
            "row has {} values, model has {} features",
            row.len(),
            model.n_features()
        )));
    }
    let phi0 = expected_margin(model)?;
    Ok(shap_row_unchecked(model, row, phi0))
}

/// Attributions for every row of a frame, parallel over rows.
pub fn shap_frame<T: Scalar>(model: &ModelArtifact<T>, frame: &FeatureFrame<T>) -> Result<Vec<ShapValues<T>>, GbdtError> {
    let phi0 = expected_margin(model)?;
    let cols = frame
        .resolve(&model.feature_names)
        .map_err(|e| GbdtError::FeatureLayout(e.to_string()))?;
    Ok((0..frame.n_rows())
        .into_par_iter()
        .map(|r| {
            let row: Vec<T> = cols.iter().map(|c| c[r]).collect();
            shap_row_unchecked(model, &row, phi0)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{quantile_bin, train, TrainParams};
    use rand::{Rng, SeedableRng};

    /// Conditional expectation of one tree with features in `known` fixed to
    /// the row and the rest averaged by cover.
    fn cond_exp(t: &Tree<f64>, j: usize, row: &[f64], known: &[bool]) -> f64 {
        match &t.nodes[j] {
            Node::Leaf { value, .. } => *value,
            Node::Split { feature, threshold, default_left, left, right, .. } => {
                if known[*feature] {
                    let v = row[*feature];
                    let l = if v.is_nan() { *default_left } else { v < *threshold };
                    cond_exp(t, if l { *left } else { *right }, row, known)
                } else {
                    let c = t.nodes[j].cover().unwrap();
                    let (cl, cr) = (t.nodes[*left].cover().unwrap(), t.nodes[*right].cover().unwrap());
                    (cl * cond_exp(t, *left, row, known) + cr * cond_exp(t, *right, row, known)) / c
                }
            }
        }
    }

    /// Exhaustive Shapley values over all feature subsets.
    fn brute_force(m: &ModelArtifact<f64>, row: &[f64]) -> Vec<f64> {
        let n = m.n_features();
        let v = |mask: usize| -> f64 {
            let known: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
            m.base_score + m.trees.iter().map(|t| cond_exp(t, 0, row, &known)).sum::<f64>()
        };
        let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
        (0..n)
            .map(|i| {
                let mut phi = 0.0;
                for mask in 0..(1usize << n) {
                    if mask >> i & 1 == 1 {
                        continue;
                    }
                    let s = mask.count_ones() as usize;
                    let w = fact(s) * fact(n - s - 1) / fact(n);
                    phi += w * (v(mask | 1 << i) - v(mask));
                }
                phi
            })
            .collect()
    }

    fn model(depth: usize, features: usize, rounds: usize) -> (ModelArtifact<f64>, FeatureFrame<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(depth as u64 * 31 + features as u64);
        let n = 600;
        let cols: Vec<Vec<f64>> = (0..features)
            .map(|_| (0..n).map(|_| if rng.random::<f64>() < 0.05 { f64::NAN } else { rng.random_range(-1.0..1.0) }).collect())
            .collect();
        let y: Vec<u8> = (0..n)
            .map(|r| {
                let s: f64 = cols.iter().enumerate().map(|(k, c)| if c[r].is_nan() { 0.0 } else { c[r] * (k as f64 + 1.0) }).sum();
                u8::from(s + rng.random_range(-0.5..0.5) > 0.0)
            })
            .collect();
        let f = FeatureFrame::from_columns(n, cols.into_iter().enumerate().map(|(k, c)| (format!("x{k}"), c)).collect()).unwrap();
        let b = quantile_bin(&f, 16).unwrap();
        let p = TrainParams { rounds, max_depth: depth, initial_learning_rate: 0.3, ..Default::default() };
        (train(&b, &y, &p, None).unwrap().0, f)
    }

    #[test]
    fn base_only_model() {
        let m = ModelArtifact::base_only(-1.5, vec!["a".into(), "b".into()]);
        let s = shap_attributions(&m, &[1.0, 2.0]).unwrap();
        assert_eq!(s.phi, vec![0.0, 0.0]);
        assert_eq!(s.phi0, -1.5);
    }

    #[test]
    fn stump_attribution() {
        let (m, f) = model(1, 2, 1);
        let t = &m.trees[0];
        let split = match &t.nodes[0] {
            Node::Split { feature, .. } => *feature,
            _ => panic!("expected a split"),
        };
        for r in 0..20 {
            let row = f.row(r);
            let s = shap_attributions(&m, &row).unwrap();
            let margin = m.margin_of_row(&row);
            assert!((s.phi[split] - (margin - s.phi0)).abs() < 1e-12);
            assert_eq!(s.phi[1 - split], 0.0);
        }
    }

    #[test]
    fn matches_exhaustive_shapley() {
        for (depth, features) in [(2, 2), (3, 3), (3, 2)] {
            let (m, f) = model(depth, features, 4);
            for r in 0..50 {
                let row = f.row(r);
                let s = shap_attributions(&m, &row).unwrap();
                let exact = brute_force(&m, &row);
                for (a, b) in s.phi.iter().zip(&exact) {
                    assert!((a - b).abs() <= 1e-9, "depth {depth}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn local_accuracy_on_deep_ensemble() {
        let (m, f) = model(6, 5, 30);
        let all = shap_frame(&m, &f).unwrap();
        for (r, s) in all.iter().enumerate() {
            let margin = m.margin_of_row(&f.row(r));
            assert!((s.phi0 + s.phi.iter().sum::<f64>() - margin).abs() <= 1e-6);
        }
    }

    #[test]
    fn missing_cover_is_an_error() {
        let (mut m, f) = model(2, 2, 1);
        if let Node::Split { cover, .. } = &mut m.trees[0].nodes[0] {
            *cover = None;
        }
        assert!(matches!(shap_attributions(&m, &f.row(0)), Err(GbdtError::MissingCover)));
    }
}
