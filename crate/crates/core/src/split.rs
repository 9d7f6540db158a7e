//! Class-stratified assignment of items to two sides.

use rand::seq::SliceRandom;

use crate::rng::stream;

/// Returns `true` for items assigned to the first side. Within each class,
/// `round(fraction * class_size)` items go to the first side, chosen by a
/// shuffle seeded from `(seed, name)`.
pub fn stratified_assign(positive: &[bool], fraction: f64, seed: u64, name: &str) -> Vec<bool> {
    let mut first = vec![false; positive.len()];
    for (k, class) in [false, true].into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..positive.len()).filter(|&i| positive[i] == class).collect();
        idx.shuffle(&mut stream(seed, name, k as u64));
        let take = (fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..take.min(idx.len())] {
            first[i] = true;
        }
    }
    first
}
