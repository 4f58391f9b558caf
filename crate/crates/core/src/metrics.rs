//! Classification metrics and seeded data splits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ClassLabel;

/// Macro-averaged F1 over the union of true and predicted labels. A class
/// with no true and no predicted samples cannot occur; a class with zero
/// true positives scores 0. Empty input scores 0.
pub fn macro_f1(truth: &[ClassLabel], pred: &[ClassLabel]) -> f64 {
    assert_eq!(truth.len(), pred.len(), "length mismatch");
    let classes: BTreeSet<ClassLabel> = truth.iter().chain(pred).copied().collect();
    if classes.is_empty() {
        return 0.0;
    }
    let mut tp: BTreeMap<ClassLabel, u64> = BTreeMap::new();
    let mut fp: BTreeMap<ClassLabel, u64> = BTreeMap::new();
    let mut fneg: BTreeMap<ClassLabel, u64> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            *tp.entry(t).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fneg.entry(t).or_default() += 1;
        }
    }
    let sum: f64 = classes
        .iter()
        .map(|c| {
            let tp = *tp.get(c).unwrap_or(&0) as f64;
            let denom = 2.0 * tp + *fp.get(c).unwrap_or(&0) as f64 + *fneg.get(c).unwrap_or(&0) as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum();
    sum / classes.len() as f64
}

pub fn accuracy(truth: &[ClassLabel], pred: &[ClassLabel]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Splits item indices per class: a shuffled `train_fraction` share of each
/// class (rounded, at least one item when the class has any) goes to the
/// training side. Both sides come back sorted.
pub fn stratified_split(labels: &[ClassLabel], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * train_fraction).round() as usize).clamp(1, idx.len());
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}
