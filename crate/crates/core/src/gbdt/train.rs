//! Second-order boosting on binned features.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::artifact::{ModelArtifact, TrainMeta, FORMAT_VERSION};
use super::binning::{BinMapper, BinnedMatrix};
use super::loss::{logloss_one, weighted_grad_hess};
use super::params::TrainParams;
use super::tree::{Node, Tree};
use super::GbdtError;
use crate::rng::stream;
use crate::scalar::{clamp_probability, logit, sigmoid, Scalar};

/// Per-round log loss. Entry 0 is the base-score model; entry `m` is the
/// model after `m` trees.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
    /// Number of trees kept when early stopping truncated the ensemble.
    pub best_round: Option<usize>,
    pub stopped_early: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone)]
struct FeatHist<T> {
    g: Vec<T>,
    h: Vec<T>,
    c: Vec<u32>,
}

type Hist<T> = Vec<FeatHist<T>>;

struct Split<T> {
    feature: usize,
    bin: u16,
    default_left: bool,
    gain: T,
}

struct Grower<'a, T: Scalar> {
    bins: &'a [Vec<u16>],
    mapper: &'a BinMapper<T>,
    g: Vec<T>,
    h: Vec<T>,
    lambda: T,
    min_child_weight: T,
    max_depth: usize,
    eta: T,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Grower<'_, T> {
    fn empty_hist(&self) -> Hist<T> {
        (0..self.mapper.n_features())
            .map(|f| {
                let n = self.mapper.n_bins(f);
                FeatHist {
                    g: vec![T::zero(); n],
                    h: vec![T::zero(); n],
                    c: vec![0; n],
                }
            })
            .collect()
    }

    fn build_hist(&self, rows: &[u32]) -> Hist<T> {
        let mut hist = self.empty_hist();
        hist.par_iter_mut().enumerate().for_each(|(f, fh)| {
            let col = &self.bins[f];
            for &r in rows {
                let r = r as usize;
                let b = col[r] as usize;
                fh.g[b] += self.g[r];
                fh.h[b] += self.h[r];
                fh.c[b] += 1;
            }
        });
        hist
    }

    fn subtract(parent: &mut Hist<T>, child: &Hist<T>) {
        parent.par_iter_mut().zip(child.par_iter()).for_each(|(p, c)| {
            for b in 0..p.g.len() {
                p.g[b] -= c.g[b];
                p.h[b] -= c.h[b];
                p.c[b] -= c.c[b];
            }
        });
    }

    fn gain_term(&self, g: T, h: T) -> T {
        g * g / (h + self.lambda)
    }

    fn best_for_feature(&self, f: usize, fh: &FeatHist<T>) -> Option<Split<T>> {
        let nb = self.mapper.n_value_bins(f);
        if nb < 2 {
            return None;
        }
        let gt: T = fh.g.iter().copied().sum();
        let ht: T = fh.h.iter().copied().sum();
        let ct: u32 = fh.c.iter().sum();
        let (gm, hm, cm) = (fh.g[nb], fh.h[nb], fh.c[nb]);
        let parent = self.gain_term(gt, ht);
        let half = T::of(0.5);
        let mut best: Option<Split<T>> = None;
        let (mut gl, mut hl, mut cl) = (T::zero(), T::zero(), 0u32);
        for b in 0..nb - 1 {
            gl += fh.g[b];
            hl += fh.h[b];
            cl += fh.c[b];
            let options: &[bool] = if cm == 0 {
                // No missing rows here: send future missing values to the larger side.
                if cl >= ct - cl {
                    &[true]
                } else {
                    &[false]
                }
            } else {
                &[true, false]
            };
            for &dl in options {
                let (g_l, h_l, c_l) = if dl { (gl + gm, hl + hm, cl + cm) } else { (gl, hl, cl) };
                let (g_r, h_r, c_r) = (gt - g_l, ht - h_l, ct - c_l);
                if c_l == 0 || c_r == 0 || h_l < self.min_child_weight || h_r < self.min_child_weight {
                    continue;
                }
                let gain = half * (self.gain_term(g_l, h_l) + self.gain_term(g_r, h_r) - parent);
                if gain > T::zero() && best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        bin: b as u16,
                        default_left: dl,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn best_split(&self, hist: &Hist<T>) -> Option<Split<T>> {
        let per_feature: Vec<Option<Split<T>>> = hist
            .par_iter()
            .enumerate()
            .map(|(f, fh)| self.best_for_feature(f, fh))
            .collect();
        // Fixed-order reduction: highest gain, lowest feature index on ties.
        let mut best: Option<Split<T>> = None;
        for s in per_feature.into_iter().flatten() {
            if best.as_ref().is_none_or(|b| s.gain > b.gain) {
                best = Some(s);
            }
        }
        best
    }

    fn leaf(&mut self, rows: &[u32]) -> usize {
        let (mut gs, mut hs) = (T::zero(), T::zero());
        for &r in rows {
            gs += self.g[r as usize];
            hs += self.h[r as usize];
        }
        let value = -gs / (hs + self.lambda) * self.eta;
        self.nodes.push(Node::Leaf {
            value,
            cover: Some(T::of_usize(rows.len())),
        });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<u32>, mut hist: Hist<T>, depth: usize) -> usize {
        let split = if depth < self.max_depth && rows.len() >= 2 {
            self.best_split(&hist)
        } else {
            None
        };
        let Some(s) = split else {
            return self.leaf(&rows);
        };
        let col = &self.bins[s.feature];
        let missing = self.mapper.missing_bin(s.feature);
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| {
            let b = col[r as usize];
            if b == missing {
                s.default_left
            } else {
                b <= s.bin
            }
        });
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: T::zero(),
            cover: None,
        });
        let (left_hist, right_hist) = if left_rows.len() <= right_rows.len() {
            let small = self.build_hist(&left_rows);
            Self::subtract(&mut hist, &small);
            (small, hist)
        } else {
            let small = self.build_hist(&right_rows);
            Self::subtract(&mut hist, &small);
            (hist, small)
        };
        let threshold = self.mapper.edges[s.feature][s.bin as usize];
        let cover = Some(T::of_usize(rows.len()));
        drop(rows);
        let left = self.grow(left_rows, left_hist, depth + 1);
        let right = self.grow(right_rows, right_hist, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: s.feature,
            bin: s.bin,
            threshold,
            default_left: s.default_left,
            left,
            right,
            gain: s.gain,
            cover,
        };
        idx
    }
}

fn check_labels(labels: &[u8], n_rows: usize) -> Result<(), GbdtError> {
    if labels.len() != n_rows {
        return Err(GbdtError::Shape(format!("{} labels for {n_rows} rows", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(GbdtError::Shape(format!("label {bad} is not binary")));
    }
    Ok(())
}

fn tree_margin<T: Scalar>(tree: &Tree<T>, m: &BinnedMatrix<T>, r: usize) -> T {
    tree.predict_binned(|f| m.bins[f][r], |f| m.mapper.missing_bin(f))
}

fn mean_loss<T: Scalar>(margins: &[T], labels: &[u8]) -> f64 {
    if margins.is_empty() {
        return 0.0;
    }
    let s: T = margins.iter().zip(labels).map(|(&z, &y)| logloss_one(sigmoid(z), y)).sum();
    (s / T::of_usize(margins.len())).as_f64()
}

/// Fits a boosted ensemble. With a validation set and
/// `early_stopping_rounds`, training stops once validation loss has not
/// improved for that many rounds and the ensemble is cut back to its best
/// length.
pub fn train<T: Scalar>(
    binned: &BinnedMatrix<T>,
    labels: &[u8],
    params: &TrainParams,
    validation: Option<(&BinnedMatrix<T>, &[u8])>,
) -> Result<(ModelArtifact<T>, LossTrace), GbdtError> {
    params.validate()?;
    let n = binned.n_rows;
    if n == 0 {
        return Err(GbdtError::EmptyData);
    }
    check_labels(labels, n)?;
    if let Some((vb, vl)) = validation {
        check_labels(vl, vb.n_rows)?;
        if vb.mapper != binned.mapper {
            return Err(GbdtError::FeatureLayout("validation bins differ from training bins".into()));
        }
    }
    let w_pos = T::of(params.positive_weight);
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let prevalence = n_pos as f64 / n as f64;
    let wp = params.positive_weight * n_pos as f64;
    let weighted_prev = wp / (wp + (n - n_pos) as f64);
    let base = logit(clamp_probability(T::of(weighted_prev)));

    let mut trace = LossTrace::default();
    let mut margins = vec![base; n];
    trace.train.push(mean_loss(&margins, labels));
    let mut val_margins = validation.map(|(vb, _)| vec![base; vb.n_rows]);
    if let (Some((_, vl)), Some(vm)) = (validation, &val_margins) {
        trace.validation.push(mean_loss(vm, vl));
    }

    let single_class = n_pos == 0 || n_pos == n;
    if single_class {
        trace
            .warnings
            .push(format!("single-class labels ({n_pos} positive of {n}); model is base score only"));
    }
    let mut trees: Vec<Tree<T>> = Vec::new();
    let mut best = (trace.validation.first().copied().unwrap_or(f64::INFINITY), 0usize);
    let rounds = if single_class { 0 } else { params.rounds };
    let sample_size = ((n as f64 * params.subsample_rows).round() as usize).clamp(1, n);

    for m in 0..rounds {
        let (g, h): (Vec<T>, Vec<T>) = margins
            .par_iter()
            .zip(labels.par_iter())
            .map(|(&z, &y)| weighted_grad_hess(sigmoid(z), y, w_pos))
            .unzip();
        let rows: Vec<u32> = if sample_size < n {
            let mut rng = stream(params.seed, "subsample", m as u64);
            let mut idx: Vec<u32> = sample(&mut rng, n, sample_size).into_iter().map(|i| i as u32).collect();
            idx.sort_unstable();
            idx
        } else {
            (0..n as u32).collect()
        };
        let mut grower = Grower {
            bins: &binned.bins,
            mapper: &binned.mapper,
            g,
            h,
            lambda: T::of(params.l2_lambda),
            min_child_weight: T::of(params.min_child_weight),
            max_depth: params.max_depth,
            eta: T::of(params.learning_rate(m)),
            nodes: Vec::new(),
        };
        let root_hist = grower.build_hist(&rows);
        grower.grow(rows, root_hist, 0);
        let tree = Tree { nodes: grower.nodes };

        margins.par_iter_mut().enumerate().for_each(|(r, z)| *z += tree_margin(&tree, binned, r));
        trace.train.push(mean_loss(&margins, labels));
        if let (Some((vb, vl)), Some(vm)) = (validation, val_margins.as_mut()) {
            vm.par_iter_mut().enumerate().for_each(|(r, z)| *z += tree_margin(&tree, vb, r));
            let loss = mean_loss(vm, vl);
            trace.validation.push(loss);
            if loss < best.0 {
                best = (loss, m + 1);
            }
        }
        trees.push(tree);
        if let (Some(k), Some(_)) = (params.early_stopping_rounds, validation) {
            if m + 1 - best.1 >= k {
                trace.stopped_early = true;
                break;
            }
        }
    }
    if params.early_stopping_rounds.is_some() && validation.is_some() && !single_class {
        trees.truncate(best.1);
        trace.best_round = Some(best.1);
    }
    let rounds_completed = trace.train.len() - 1;
    let model = ModelArtifact {
        format_version: FORMAT_VERSION,
        base_score: base,
        trees,
        feature_names: binned.mapper.names.clone(),
        bin_edges: binned.mapper.edges.clone(),
        params: params.clone(),
        meta: TrainMeta {
            train_rows: n,
            prevalence,
            rounds_completed,
        },
    };
    Ok((model, trace))
}
