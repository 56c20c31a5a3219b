//! Subject-exclusive fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::Dataset;
use crate::error::{Error, Result};

/// Fold index of every sample such that all samples of one subject share a
/// fold and fold subject counts differ by at most one.
///
/// Distinct subjects are sorted, shuffled with `seed` and dealt round-robin,
/// so the assignment depends only on the set of subjects and the seed.
pub fn assign_folds<S: AsRef<str>>(subjects: &[S], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Contract(format!("need at least 2 folds, got {k}")));
    }
    let mut distinct: Vec<&str> = subjects.iter().map(AsRef::as_ref).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < k {
        return Err(Error::Contract(format!(
            "{} distinct subjects cannot fill {k} folds",
            distinct.len()
        )));
    }
    distinct.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of: std::collections::HashMap<&str, usize> =
        distinct.iter().enumerate().map(|(i, s)| (*s, i % k)).collect();
    Ok(subjects.iter().map(|s| fold_of[s.as_ref()]).collect())
}

/// Sample indices of each of `k` subject-exclusive folds, ascending.
pub fn split_subject_exclusive(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let folds = assign_folds(&dataset.subject_ids(), k, seed)?;
    let mut out = vec![Vec::new(); k];
    for (i, f) in folds.into_iter().enumerate() {
        out[f].push(i);
    }
    Ok(out)
}

/// Training indices (all folds but `test`) and test indices.
pub fn train_test(folds: &[Vec<usize>], test: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(f, _)| *f != test)
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    train.sort_unstable();
    (train, folds[test].clone())
}
