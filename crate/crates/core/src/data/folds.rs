use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Subject-level assignment of a dataset to `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// subject id → fold index
    pub assignment: BTreeMap<u64, usize>,
}

/// Fold roles for one cross-validation run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldRoles {
    pub test: usize,
    /// The fold after the test fold; absent when `k < 3`.
    pub validation: Option<usize>,
    pub train: Vec<usize>,
}

/// Video indices for one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles the distinct subjects and deals them round-robin into `k` folds.
pub fn make_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut subjects = dataset.subjects();
    if subjects.len() < k {
        return Err(Error::invalid(format!(
            "{} subjects cannot fill {k} folds",
            subjects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let assignment = subjects
        .into_iter()
        .enumerate()
        .map(|(i, s)| (s, i % k))
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        assignment,
    })
}

impl FoldPlan {
    pub fn fold_of(&self, subject: u64) -> Option<usize> {
        self.assignment.get(&subject).copied()
    }

    /// Number of subjects per fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn roles(&self, test: usize) -> Result<FoldRoles> {
        if test >= self.k {
            return Err(Error::invalid(format!(
                "test fold {test} out of range for k = {}",
                self.k
            )));
        }
        let validation = (self.k >= 3).then_some((test + 1) % self.k);
        let train = (0..self.k)
            .filter(|&f| f != test && Some(f) != validation)
            .collect();
        Ok(FoldRoles {
            test,
            validation,
            train,
        })
    }

    /// Partitions the videos of `dataset` for the run with test fold `test`.
    pub fn split(&self, dataset: &Dataset, test: usize) -> Result<FoldSplit> {
        let roles = self.roles(test)?;
        let mut split = FoldSplit {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for (i, v) in dataset.videos.iter().enumerate() {
            let fold = self.fold_of(v.subject_id).ok_or_else(|| {
                Error::invalid(format!("subject {} is not in the fold plan", v.subject_id))
            })?;
            if fold == roles.test {
                split.test.push(i);
            } else if Some(fold) == roles.validation {
                split.validation.push(i);
            } else {
                split.train.push(i);
            }
        }
        Ok(split)
    }
}
