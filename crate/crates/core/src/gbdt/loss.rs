//! Binary log loss, its derivatives with respect to the margin, and AUROC.

use crate::scalar::{clamp_probability, sigmoid, Scalar};

/// Gradient and hessian of log loss with respect to the margin, at
/// probability `p`. `p` is clamped to `[1e-15, 1 - 1e-15]`.
pub fn logloss_grad_hess<T: Scalar>(p: T, y: u8) -> (T, T) {
    let p = clamp_probability(p);
    let y = if y == 0 { T::zero() } else { T::one() };
    (p - y, p * (T::one() - p))
}

/// Class-weighted variant: positive rows carry weight `w_pos`.
pub fn weighted_grad_hess<T: Scalar>(p: T, y: u8, w_pos: T) -> (T, T) {
    let (g, h) = logloss_grad_hess(p, y);
    if y == 0 {
        (g, h)
    } else {
        (g * w_pos, h * w_pos)
    }
}

pub fn logloss_one<T: Scalar>(p: T, y: u8) -> T {
    let p = clamp_probability(p);
    if y == 0 {
        -(T::one() - p).ln()
    } else {
        -p.ln()
    }
}

/// Mean log loss of margins against labels.
pub fn mean_logloss_from_margins<T: Scalar>(margins: &[T], labels: &[u8]) -> T {
    if margins.is_empty() {
        return T::zero();
    }
    let s: T = margins.iter().zip(labels).map(|(&m, &y)| logloss_one(sigmoid(m), y)).sum();
    s / T::of_usize(margins.len())
}

pub fn weighted_mean_logloss<T: Scalar>(probs: &[T], labels: &[u8], w_pos: T) -> T {
    let mut num = T::zero();
    let mut den = T::zero();
    for (&p, &y) in probs.iter().zip(labels) {
        let w = if y == 0 { T::one() } else { w_pos };
        num += w * logloss_one(p, y);
        den += w;
    }
    if den > T::zero() {
        num / den
    } else {
        T::zero()
    }
}

/// Area under the ROC curve with midrank handling of ties. `None` when
/// either class is absent.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[u8]) -> Option<T> {
    let pos = labels.iter().filter(|&&y| y != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] != 0 {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some(T::of((rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::logit;

    #[test]
    fn grad_hess_examples() {
        assert_eq!(logloss_grad_hess(0.5f64, 1), (-0.5, 0.25));
        assert_eq!(logloss_grad_hess(0.5f64, 0), (0.5, 0.25));
        let (g, h) = logloss_grad_hess(0.9f64, 1);
        assert!((g + 0.1).abs() < 1e-15 && (h - 0.09).abs() < 1e-15);
        let (g, _) = logloss_grad_hess(2.0f64, 1);
        assert!(g <= 0.0 && g > -1e-14);
    }

    #[test]
    fn finite_difference_check() {
        // Loss as a function of the margin z: l(z) = -y ln s(z) - (1-y) ln(1-s(z)).
        let loss = |z: f64, y: u8| logloss_one(sigmoid(z), y);
        for k in 1..99 {
            let p = k as f64 / 100.0;
            let z = logit(p);
            for y in [0u8, 1] {
                let (g, h) = logloss_grad_hess(p, y);
                let e = 1e-5;
                let dg = (loss(z + e, y) - loss(z - e, y)) / (2.0 * e);
                let e2 = 1e-4;
                let dh = (loss(z + e2, y) - 2.0 * loss(z, y) + loss(z - e2, y)) / (e2 * e2);
                assert!((g - dg).abs() <= 1e-6, "g p={p} y={y}");
                assert!((h - dh).abs() <= 1e-4, "h p={p} y={y}");
            }
        }
    }

    #[test]
    fn unit_weights_reduce_to_plain_loss() {
        let p = [0.2, 0.7, 0.9, 0.4];
        let y = [0u8, 1, 1, 0];
        let plain = p.iter().zip(&y).map(|(&a, &b)| logloss_one(a, b)).sum::<f64>() / 4.0;
        assert_eq!(weighted_mean_logloss(&p, &y, 1.0), plain);
        assert_eq!(weighted_grad_hess(0.3, 1, 1.0), logloss_grad_hess(0.3, 1));
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]), Some(1.0));
        assert_eq!(auroc(&[0.5, 0.5], &[0, 1]), Some(0.5));
        assert_eq!(auroc(&[0.9, 0.1], &[0, 1]), Some(0.0));
        assert_eq!(auroc::<f64>(&[0.3], &[1]), None);
    }
}
