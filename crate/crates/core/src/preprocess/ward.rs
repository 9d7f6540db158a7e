//! Collinearity pruning with Ward-linkage agglomerative clustering.
//!
//! Distances are `1 - |rho|`. Linkage is updated with the Lance-Williams
//! recurrence for Ward's method on unsquared distances:
//!
//! ```text
//! d(k, i+j) = sqrt(((n_i + n_k) d(k,i)^2 + (n_j + n_k) d(k,j)^2 - n_k d(i,j)^2) / (n_i + n_j + n_k))
//! ```
//!
//! Flat clusters keep every merge whose height is strictly below the cutoff.
//! Features are processed in name order, so the result does not depend on
//! the order they were passed in.

use serde::{Deserialize, Serialize};

use super::correlation::CorrelationMatrix;
use super::PreprocessError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LinkageStep<T> {
    /// Members of the two merged clusters, by name.
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub height: T,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClusterPruneResult<T> {
    pub clusters: Vec<Vec<String>>,
    pub representatives: Vec<String>,
    pub cutoff: T,
    pub linkage: Vec<LinkageStep<T>>,
}

impl<T: Scalar> ClusterPruneResult<T> {
    pub fn cluster_of(&self, name: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.iter().any(|m| m == name))
    }
}

struct Cluster {
    members: Vec<usize>,
}

/// Complete Ward dendrogram over a distance matrix (`n × n`, row-major).
/// Returns merges as (cluster a, cluster b, height) where clusters are the
/// member lists at merge time.
fn ward_linkage<T: Scalar>(n: usize, dist: &[T]) -> Vec<(Vec<usize>, Vec<usize>, T)> {
    let mut clusters: Vec<Option<Cluster>> = (0..n).map(|i| Some(Cluster { members: vec![i] })).collect();
    // Pairwise cluster distances indexed by slot; slots are reused for merges.
    let mut d: Vec<T> = dist.to_vec();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        let mut best: Option<(usize, usize, T)> = None;
        for i in 0..n {
            if clusters[i].is_none() {
                continue;
            }
            for j in (i + 1)..n {
                if clusters[j].is_none() {
                    continue;
                }
                let v = d[i * n + j];
                if best.is_none_or(|(_, _, b)| v < b) {
                    best = Some((i, j, v));
                }
            }
        }
        let (i, j, h) = best.expect("at least two active clusters");
        let ci = clusters[i].take().unwrap();
        let cj = clusters[j].take().unwrap();
        let (ni, nj) = (T::of_usize(ci.members.len()), T::of_usize(cj.members.len()));
        let dij = d[i * n + j];
        for k in 0..n {
            let Some(ck) = &clusters[k] else { continue };
            let nk = T::of_usize(ck.members.len());
            let dik = d[i * n + k];
            let djk = d[j * n + k];
            let num = (ni + nk) * dik * dik + (nj + nk) * djk * djk - nk * dij * dij;
            let v = (num.max(T::zero()) / (ni + nj + nk)).sqrt();
            d[i * n + k] = v;
            d[k * n + i] = v;
        }
        let mut members = ci.members.clone();
        members.extend_from_slice(&cj.members);
        members.sort_unstable();
        merges.push((ci.members, cj.members, h));
        clusters[i] = Some(Cluster { members });
    }
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Clusters features by `1 - |rho|` and keeps one representative per
/// cluster: the least-missing member, ties broken by name.
pub fn ward_cluster_prune<T: Scalar>(
    corr: &CorrelationMatrix<T>,
    cutoff: T,
    missingness: &[T],
) -> Result<ClusterPruneResult<T>, PreprocessError> {
    let n = corr.len();
    if missingness.len() != n {
        return Err(PreprocessError::Shape(format!(
            "{} missing fractions for {n} features",
            missingness.len()
        )));
    }
    if n == 0 {
        return Err(PreprocessError::TooFewFeatures(0));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| corr.names()[a].cmp(&corr.names()[b]));
    let names: Vec<&str> = order.iter().map(|&i| corr.names()[i].as_str()).collect();
    let mut dist = vec![T::zero(); n * n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                dist[a * n + b] = T::one() - corr.get(order[a], order[b]).abs();
            }
        }
    }
    let merges = ward_linkage(n, &dist);

    let mut parent: Vec<usize> = (0..n).collect();
    for (l, r, h) in &merges {
        if *h < cutoff {
            let (a, b) = (find(&mut parent, l[0]), find(&mut parent, r[0]));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut clusters = Vec::with_capacity(groups.len());
    let mut representatives = Vec::with_capacity(groups.len());
    for members in groups.into_values() {
        let rep = *members
            .iter()
            .min_by(|&&a, &&b| {
                let (ma, mb) = (missingness[order[a]], missingness[order[b]]);
                ma.partial_cmp(&mb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| names[a].cmp(names[b]))
            })
            .expect("non-empty cluster");
        representatives.push(names[rep].to_string());
        clusters.push(members.iter().map(|&m| names[m].to_string()).collect());
    }
    let to_names = |v: &[usize]| v.iter().map(|&i| names[i].to_string()).collect::<Vec<_>>();
    let linkage = merges
        .iter()
        .map(|(l, r, h)| LinkageStep {
            left: to_names(l),
            right: to_names(r),
            height: *h,
            size: l.len() + r.len(),
        })
        .collect();
    Ok(ClusterPruneResult {
        clusters,
        representatives,
        cutoff,
        linkage,
    })
}
