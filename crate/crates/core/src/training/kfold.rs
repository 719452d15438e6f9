use rand::seq::SliceRandom;

use super::{stream, Result, TrainError, STREAM_SHUFFLE};
use crate::imaging::DatasetManifest;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

/// Patient-level folds; each patient validates in exactly one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    /// Splits the sorted, de-duplicated `patients`: a seeded shuffle, then
    /// patient `i` of the shuffled order validates in fold `i % k`.
    pub fn from_patients(patients: &[String], k: usize, seed: u64) -> Result<Self> {
        let mut ids = patients.to_vec();
        ids.sort();
        ids.dedup();
        if k == 0 || k > ids.len() {
            return Err(TrainError::Folds { k, patients: ids.len() });
        }
        ids.shuffle(&mut stream(seed, STREAM_SHUFFLE));
        let mut val: Vec<Vec<String>> = vec![Vec::new(); k];
        for (i, id) in ids.iter().enumerate() {
            val[i % k].push(id.clone());
        }
        let folds = val
            .into_iter()
            .map(|mut validation| {
                validation.sort();
                let mut train: Vec<String> = ids.iter().filter(|p| !validation.contains(p)).cloned().collect();
                train.sort();
                Fold { train, validation }
            })
            .collect();
        Ok(Self { folds })
    }
}

pub fn kfold_split(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldPlan> {
    FoldPlan::from_patients(&manifest.patients(), k, seed)
}
