use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use vidage::data::{
    generate_replica, generate_synthetic, load_dataset, make_folds, save_dataset, Dataset,
};
use vidage::eval::{
    self, ablation, evaluate, export_attention, run_crossval, threshold_study, EvalReport,
    SampleRecord,
};
use vidage::training::{fit, grid_search, history_csv, GridSpace};
use vidage::{ModelParams, VideoSample};

use crate::config::{CommonArgs, Settings};

const CHECKPOINT: &str = "model.vidm";
const DEFAULT_THRESHOLD: usize = 20;

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    write(dir, name, serde_json::to_string_pretty(value)? + "\n")
}

fn prepare(common: &CommonArgs) -> Result<(Settings, Dataset)> {
    let settings = common.settings()?;
    let dir = common.dataset()?;
    let dataset =
        load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
    if dataset.frame_height != dataset.frame_width {
        bail!(
            "frames must be square, got {}x{}",
            dataset.frame_height,
            dataset.frame_width
        );
    }
    if let Some(size) = settings.file.input_size {
        if size != dataset.frame_height {
            bail!(
                "config input_size {size} does not match the dataset frame size {}",
                dataset.frame_height
            );
        }
    }
    fs::create_dir_all(&settings.out)
        .with_context(|| format!("creating {}", settings.out.display()))?;
    Ok((settings, dataset))
}

/// Fold 0 of a subject-disjoint plan is held out for validation.
fn validation_split(dataset: &Dataset, settings: &Settings) -> Result<(Vec<usize>, Vec<usize>)> {
    let plan = make_folds(dataset, settings.folds, settings.seed)?;
    Ok((0..dataset.len()).partition(|&i| plan.fold_of(dataset.videos[i].subject_id) != Some(0)))
}

fn write_report(
    dir: &Path,
    prefix: &str,
    report: &EvalReport,
    dataset_ages: Option<&[f64]>,
    max: usize,
) -> Result<()> {
    write(
        dir,
        &format!("{prefix}predictions.csv"),
        report.records_csv(),
    )?;
    write(dir, &format!("{prefix}bins.csv"), report.bins_csv())?;
    write(
        dir,
        &format!("{prefix}cumulative.csv"),
        report.cumulative_csv(),
    )?;
    if let Some(ages) = dataset_ages {
        write(
            dir,
            &format!("{prefix}threshold.csv"),
            threshold_study(ages, &report.records, max).to_csv(),
        )?;
    }
    write_json(dir, &format!("{prefix}report.json"), report)
}

pub fn gen(
    common: &CommonArgs,
    replica: bool,
    subjects: Option<usize>,
    frame_size: Option<usize>,
) -> Result<()> {
    let settings = common.settings()?;
    let mut spec = settings.file.synthetic.clone();
    if common.seed.is_some() || settings.file.seed.is_some() {
        spec.seed = settings.seed;
    }
    if let Some(n) = subjects {
        spec.n_subjects = n;
    }
    if let Some(s) = frame_size {
        spec.frame_size = s;
    }
    let dataset = if replica || settings.file.replica {
        generate_replica(&spec)?
    } else {
        generate_synthetic(&spec)?
    };
    save_dataset(&dataset, &settings.out)?;
    println!(
        "wrote {} videos from {} subjects to {}",
        dataset.len(),
        dataset.subjects().len(),
        settings.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    n_train: usize,
    n_validation: usize,
    best_epoch: usize,
    best_val_mae: Option<f64>,
    param_count: usize,
}

pub fn train(common: &CommonArgs) -> Result<()> {
    let (settings, dataset) = prepare(common)?;
    let model = common.model(&settings.file, dataset.frame_height)?;
    let (train_idx, val_idx) = validation_split(&dataset, &settings)?;
    let result = fit(
        &model,
        &dataset.select(&train_idx),
        &dataset.select(&val_idx),
        &settings.train,
    )?;
    result.params.save(&settings.out.join(CHECKPOINT))?;
    write(&settings.out, "history.csv", history_csv(&result.history))?;
    let summary = TrainSummary {
        n_train: train_idx.len(),
        n_validation: val_idx.len(),
        best_epoch: result.best_epoch,
        best_val_mae: result.best_val_mae,
        param_count: result.params.param_count(),
    };
    write_json(&settings.out, "train.json", &summary)?;
    match summary.best_val_mae {
        Some(m) => println!("best validation MAE {m:.3} at epoch {}", summary.best_epoch),
        None => println!("trained {} epochs", settings.train.epochs),
    }
    Ok(())
}

pub fn gridsearch(common: &CommonArgs) -> Result<()> {
    let (settings, dataset) = prepare(common)?;
    let model = common.model(&settings.file, dataset.frame_height)?;
    let space = match &settings.file.grid {
        Some(g) => g.clone(),
        None => GridSpace::scaled(common.scale.or(settings.file.scale).unwrap_or(1.0)),
    };
    let (train_idx, val_idx) = validation_split(&dataset, &settings)?;
    let candidates = space.candidates(&settings.train);
    let result = grid_search(
        &model,
        &dataset.select(&train_idx),
        &dataset.select(&val_idx),
        &candidates,
    )?;
    let mut csv = String::from(
        "index,hidden_units,dropout_conv,dropout_rnn,l2_lambda,val_mae,best_epoch,error\n",
    );
    for t in &result.trials {
        let c = &t.config;
        csv += &format!(
            "{},{},{},{},{},{},{},{}\n",
            t.index,
            c.hidden_units.map(|h| h.to_string()).unwrap_or_default(),
            c.dropout_conv,
            c.dropout_rnn,
            c.l2_lambda,
            t.val_mae.map(|m| m.to_string()).unwrap_or_default(),
            t.best_epoch,
            t.error.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    write(&settings.out, "grid.csv", csv)?;
    write_json(&settings.out, "best_config.json", result.best_config())?;
    let best = result.best_trial();
    println!(
        "{} trials; best #{} with validation MAE {}",
        result.trials.len(),
        best.index,
        best.val_mae
            .map(|m| format!("{m:.3}"))
            .unwrap_or_else(|| "n/a".into())
    );
    Ok(())
}

pub fn crossval(common: &CommonArgs) -> Result<()> {
    let (settings, dataset) = prepare(common)?;
    let model = common.model(&settings.file, dataset.frame_height)?;
    let report = run_crossval(
        &dataset,
        &model,
        &settings.train,
        settings.folds,
        settings.seed,
    )?;
    write_json(&settings.out, "crossval.json", &report)?;
    let max = settings.file.max_threshold.unwrap_or(DEFAULT_THRESHOLD);
    write_report(&settings.out, "baseline_", &report.baseline, None, max)?;
    let failed = report.failed_folds();
    for f in report.folds.iter().filter(|f| f.error.is_some()) {
        eprintln!(
            "fold {} failed: {}",
            f.fold,
            f.error.as_deref().unwrap_or_default()
        );
    }
    let Some(pooled) = &report.pooled else {
        bail!("every fold failed");
    };
    write_report(&settings.out, "", pooled, Some(&dataset.ages()), max)?;
    println!(
        "pooled MAE {:.3} ± {:.3} over {} videos (baseline {:.3}); {} failed folds",
        pooled.mae,
        pooled.std_abs_error,
        pooled.count,
        report.baseline.mae,
        failed.len()
    );
    Ok(())
}

fn read_predictions(path: &Path) -> Result<Vec<SampleRecord>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.with_context(|| format!("{}: row {}", path.display(), i + 1)))
        .collect()
}

pub fn eval(common: &CommonArgs, predictions: Option<&Path>) -> Result<()> {
    let settings = common.settings()?;
    let max = settings.file.max_threshold.unwrap_or(DEFAULT_THRESHOLD);
    let (report, ages) = match predictions {
        Some(p) => {
            let ages = match &common.dataset {
                Some(d) => load_dataset(d)?.ages(),
                None => read_predictions(p)?.iter().map(|r| r.age).collect(),
            };
            (EvalReport::from_records(read_predictions(p)?)?, ages)
        }
        None => {
            let dataset = load_dataset(common.dataset()?)?;
            let params = ModelParams::load(common.checkpoint()?)?;
            (evaluate(&params, &dataset.refs())?, dataset.ages())
        }
    };
    fs::create_dir_all(&settings.out)?;
    write_report(&settings.out, "", &report, Some(&ages), max)?;
    println!(
        "MAE {:.3} ± {:.3} over {} videos",
        report.mae, report.std_abs_error, report.count
    );
    Ok(())
}

pub fn ablate(common: &CommonArgs) -> Result<()> {
    let (settings, dataset) = prepare(common)?;
    let model = common.model(&settings.file, dataset.frame_height)?;
    let (rows, reports) = ablation(
        &dataset,
        &model,
        &settings.train,
        settings.folds,
        settings.seed,
    )?;
    let mut csv = String::from("variant,mae,std_abs_error,baseline_mae\n");
    for r in &rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        csv += &format!(
            "{},{},{},{}\n",
            r.variant,
            opt(r.mae),
            opt(r.std_abs_error),
            r.baseline_mae
        );
        println!(
            "{:<16} {}",
            r.variant.name(),
            r.mae
                .map(|m| format!("{m:.3}"))
                .unwrap_or_else(|| "failed".into())
        );
    }
    write(&settings.out, "ablation.csv", csv)?;
    write_json(&settings.out, "ablation.json", &reports)
}

pub fn attn_export(common: &CommonArgs, ids: &[u64]) -> Result<()> {
    let (settings, dataset) = prepare(common)?;
    let params = ModelParams::load(common.checkpoint()?)?;
    let videos: Vec<&VideoSample> = if ids.is_empty() {
        dataset.videos.iter().take(1).collect()
    } else {
        ids.iter()
            .map(|id| {
                dataset
                    .videos
                    .iter()
                    .find(|v| v.id == *id)
                    .with_context(|| format!("no video with id {id}"))
            })
            .collect::<Result<_>>()?
    };
    let mut count = 0;
    for v in videos {
        count += export_attention(&params, v, &settings.out)?.len();
    }
    println!("wrote {count} files to {}", settings.out.display());
    Ok(())
}

pub fn mechanism_compare(common: &CommonArgs) -> Result<()> {
    let (settings, dataset) = prepare(common)?;
    let model = common.model(&settings.file, dataset.frame_height)?;
    let rows = eval::mechanism_compare(&dataset, &model, &settings.train, settings.seed)?;
    let mut csv = String::from("mechanism,layer,grid_rows,grid_cols,attention_params,val_mae,permutation_equivariant,error\n");
    for r in &rows {
        csv += &format!(
            "{},{},{},{},{},{},{},{}\n",
            r.mechanism,
            r.layer,
            r.grid.0,
            r.grid.1,
            r.attention_params,
            r.val_mae.map(|m| m.to_string()).unwrap_or_default(),
            r.permutation_equivariant,
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        );
        let dir = settings
            .out
            .join("maps")
            .join(format!("{}_layer{}", r.mechanism, r.layer));
        fs::create_dir_all(&dir)?;
        for (t, map) in r.maps.iter().enumerate() {
            map.write(&dir.join(format!("frame{t:03}.pgm")))?;
        }
    }
    write(&settings.out, "mechanisms.csv", csv)?;
    write_json(&settings.out, "mechanisms.json", &rows)?;
    println!("{} configurations", rows.len());
    Ok(())
}
