//! Evaluation metrics and experiment drivers: per-decade MAE tables,
//! cumulative error curves, the minimum-samples threshold study,
//! cross-validation, the module ablation ladder, spatial mechanism
//! comparison and attention export.

mod crossval;
mod experiments;
mod report;

pub use crossval::{ablation, run_crossval, AblationRow, CrossvalReport, FoldReport};
pub use experiments::{
    export_attention, mechanism_compare, permutation_equivariant, salience, MechanismRow,
    SalienceSummary,
};
pub use report::{
    evaluate, mean_predictor, threshold_study, AgeBin, EvalReport, SampleRecord, ThresholdRow,
    ThresholdStudy,
};
