use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{evaluate, mean_predictor, EvalReport, SampleRecord};
use crate::data::{make_folds, Dataset};
use crate::error::Result;
use crate::network::{ModelConfig, Variant};
use crate::training::{fit, TrainConfig};

/// Outcome of one cross-validation run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    /// `None` when training failed; see `error`.
    pub report: Option<EvalReport>,
    /// Mean-age predictor fitted on every non-test label.
    pub baseline: EvalReport,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub k: usize,
    pub seed: u64,
    pub variant: Variant,
    pub folds: Vec<FoldReport>,
    /// Test predictions of every successful fold, pooled.
    pub pooled: Option<EvalReport>,
    pub baseline: EvalReport,
}

impl CrossvalReport {
    pub fn failed_folds(&self) -> Vec<usize> {
        self.folds
            .iter()
            .filter(|f| f.error.is_some())
            .map(|f| f.fold)
            .collect()
    }
}

fn fold_seeds(master: u64, k: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(7);
    (0..k).map(|_| rng.random()).collect()
}

/// Subject-disjoint `k`-fold cross-validation: train on the training folds
/// with validation-based epoch selection, test on the held-out fold, pool
/// all test predictions. Folds run in parallel; a failing fold is reported
/// without stopping the others.
pub fn run_crossval(
    dataset: &Dataset,
    model: &ModelConfig,
    train: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<CrossvalReport> {
    let plan = make_folds(dataset, k, seed)?;
    let seeds = fold_seeds(seed, k);
    let folds = (0..k)
        .into_par_iter()
        .map(|fold| {
            let split = plan.split(dataset, fold)?;
            let train_set = dataset.select(&split.train);
            let val_set = dataset.select(&split.validation);
            let test_set = dataset.select(&split.test);
            let labelled: Vec<_> = train_set.iter().chain(&val_set).copied().collect();
            let baseline = mean_predictor(&labelled, &test_set)?;
            let cfg = TrainConfig {
                seed: seeds[fold],
                ..train.clone()
            };
            let outcome = fit(model, &train_set, &val_set, &cfg).and_then(|r| {
                let report = evaluate(&r.params, &test_set)?;
                Ok((r.best_epoch, report))
            });
            let (best_epoch, report, error) = match outcome {
                Ok((epoch, report)) => (epoch, Some(report), None),
                Err(e) => (0, None, Some(e.to_string())),
            };
            Ok(FoldReport {
                fold,
                seed: seeds[fold],
                n_train: split.train.len(),
                n_validation: split.validation.len(),
                n_test: split.test.len(),
                best_epoch,
                report,
                baseline,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled: Vec<SampleRecord> = folds
        .iter()
        .filter_map(|f| f.report.as_ref())
        .flat_map(|r| r.records.iter().cloned())
        .collect();
    let pooled = (!pooled.is_empty())
        .then(|| EvalReport::from_records(pooled))
        .transpose()?;
    let baseline = EvalReport::from_records(
        folds
            .iter()
            .flat_map(|f| f.baseline.records.iter().cloned())
            .collect(),
    )?;
    Ok(CrossvalReport {
        k,
        seed,
        variant: model.variant,
        folds,
        pooled,
        baseline,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    /// Pooled test MAE, `None` if every fold failed.
    pub mae: Option<f64>,
    pub std_abs_error: Option<f64>,
    pub baseline_mae: f64,
}

/// Cross-validates each variant of the module ladder with identical folds
/// and seeds.
pub fn ablation(
    dataset: &Dataset,
    model: &ModelConfig,
    train: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<(Vec<AblationRow>, Vec<CrossvalReport>)> {
    let mut rows = Vec::with_capacity(Variant::LADDER.len());
    let mut reports = Vec::with_capacity(Variant::LADDER.len());
    for variant in Variant::LADDER {
        let cfg = ModelConfig {
            variant,
            ..model.clone()
        };
        let report = run_crossval(dataset, &cfg, train, k, seed)?;
        rows.push(AblationRow {
            variant,
            mae: report.pooled.as_ref().map(|p| p.mae),
            std_abs_error: report.pooled.as_ref().map(|p| p.std_abs_error),
            baseline_mae: report.baseline.mae,
        });
        reports.push(report);
    }
    Ok((rows, reports))
}
