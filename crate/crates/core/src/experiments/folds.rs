use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ExperimentError;

/// Per-fold test subject ids of a stratified k-fold split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub test_sets: Vec<Vec<String>>,
}

impl FoldPlan {
    /// Subjects outside fold `fold`'s test set, in input order.
    pub fn train_ids<'a>(&self, fold: usize, subjects: &'a [(String, usize)]) -> Vec<&'a str> {
        let test: HashSet<&str> = self.test_sets[fold].iter().map(String::as_str).collect();
        subjects
            .iter()
            .map(|(id, _)| id.as_str())
            .filter(|id| !test.contains(id))
            .collect()
    }
}

/// Split subjects into `k` speaker-distinct folds with per-class test counts
/// that differ by at most one across folds. A class smaller than `k` leaves
/// some test sets without it.
///
/// Each class is shuffled on its own, then all classes are dealt round-robin
/// with a single running counter, which also keeps fold sizes within one.
pub fn stratified_kfold(subjects: &[(String, usize)], k: usize, seed: u64) -> Result<FoldPlan, ExperimentError> {
    if k < 2 {
        return Err(ExperimentError::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    let mut seen = HashSet::new();
    for (id, _) in subjects {
        if !seen.insert(id.as_str()) {
            return Err(ExperimentError::InvalidConfig(format!("subject {id} listed twice")));
        }
    }

    if subjects.len() < k {
        return Err(ExperimentError::TooFewSubjects { count: subjects.len(), folds: k });
    }
    let mut by_class: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (id, c) in subjects {
        by_class.entry(*c).or_default().push(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_sets = vec![Vec::new(); k];
    let mut slot = 0;
    for (_, mut ids) in by_class {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids {
            test_sets[slot % k].push(id.to_owned());
            slot += 1;
        }
    }
    Ok(FoldPlan { k, seed, test_sets })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cohort(counts: &[usize]) -> Vec<(String, usize)> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| (0..n).map(move |i| (format!("c{c}-{i}"), c)))
            .collect()
    }

    fn class_counts(plan: &FoldPlan, subjects: &[(String, usize)], class: usize) -> Vec<usize> {
        plan.test_sets
            .iter()
            .map(|t| t.iter().filter(|id| subjects.iter().any(|(s, c)| s == *id && *c == class)).count())
            .collect()
    }

    #[test]
    fn six_four_split() {
        let s = cohort(&[6, 4]);
        let plan = stratified_kfold(&s, 5, 1).unwrap();
        assert!(plan.test_sets.iter().all(|t| t.len() == 2));
        let mut a = class_counts(&plan, &s, 0);
        let mut b = class_counts(&plan, &s, 1);
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, vec![1, 1, 1, 1, 2]);
        assert_eq!(b, vec![0, 1, 1, 1, 1]);
    }

    #[test]
    fn onset_cohort_sizes() {
        let s = cohort(&[82, 58]);
        let plan = stratified_kfold(&s, 5, 3).unwrap();
        for t in &plan.test_sets {
            assert!((27..=29).contains(&t.len()), "{}", t.len());
        }
    }

    #[test]
    fn too_few() {
        let s = cohort(&[4]);
        assert!(matches!(stratified_kfold(&s, 5, 0), Err(ExperimentError::TooFewSubjects { count: 4, folds: 5 })));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let s = cohort(&[7, 9]);
        let mut rev = s.clone();
        rev.reverse();
        assert_eq!(stratified_kfold(&s, 5, 9).unwrap(), stratified_kfold(&rev, 5, 9).unwrap());
        assert_ne!(stratified_kfold(&s, 5, 9).unwrap(), stratified_kfold(&s, 5, 10).unwrap());
    }
}
