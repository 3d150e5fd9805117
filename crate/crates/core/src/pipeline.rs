//! End-to-end experiment sweep.
//!
//! Generate a dataset, split it, and then for every missing rate mask both
//! halves, impute each half with every imputer, train every predictor on the
//! imputed training half and score it on the imputed test half. A failing
//! combination is recorded in the report and the sweep carries on.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faultsim::{generate_dataset, Dataset, GenerationParams};
use crate::impute::{impute, imputation_rmse, mean_fill, ImputationResult, ImputerConfig};
use crate::io::{format_value, write_table_file};
use crate::localize::{rank_all, score_mse, score_r2, top_k_accuracy, train_localizer, write_rankings_csv};
use crate::missing::{apply_mask, sample_mask, Mask, MaskMode, MaskedMatrix};
use crate::regress::{FitConfig, ForestParams, Regressor};
use crate::seed::{derive_seed, rng_from};
use crate::topology::build_preset;

/// Largest `k` reported for Top-k accuracy.
pub const MAX_K: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub preset: String,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ImputerSpec {
    Mean,
    Iterative(ImputerConfig),
}

impl ImputerSpec {
    pub fn name(&self) -> String {
        match self {
            ImputerSpec::Mean => "mean".into(),
            ImputerSpec::Iterative(c) => c.estimator.to_string(),
        }
    }

    pub fn run(&self, masked: &MaskedMatrix) -> Result<ImputationResult> {
        match self {
            ImputerSpec::Mean => mean_fill(masked),
            ImputerSpec::Iterative(c) => impute(masked, c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    pub error_grid: Vec<f64>,
    pub transfers_per_pair: u32,
    pub rounds_per_cell: u32,
    /// Seeds data generation, masks and predictor randomness.
    pub seed: u64,
    pub split: SplitSpec,
    pub missing_rates: Vec<f64>,
    pub mask_mode: MaskMode,
    pub imputers: Vec<ImputerSpec>,
    pub predictors: Vec<Regressor>,
    /// Solver settings for the predictors; `degree` selects the feature space.
    pub predictor_fit: FitConfig,
    /// Impute train and test rows together instead of separately.
    pub transductive: bool,
    /// Where reports and intermediate CSVs go; nothing is written when absent.
    pub output_dir: Option<PathBuf>,
    pub write_intermediates: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let g = GenerationParams::default();
        ExperimentConfig {
            topology: TopologySpec {
                preset: "internet2-like".into(),
                seed: 0,
            },
            error_grid: g.error_grid,
            transfers_per_pair: g.transfers_per_pair,
            rounds_per_cell: g.rounds_per_cell,
            seed: 0,
            split: SplitSpec::default(),
            missing_rates: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            mask_mode: MaskMode::Cell,
            imputers: vec![ImputerSpec::Iterative(ImputerConfig::default())],
            predictors: vec![
                Regressor::Ridge { lambda: 0.1 },
                Regressor::Ridge { lambda: 0.01 },
                Regressor::Lasso { lambda: 1e-6 },
                Regressor::ExtraTrees(ForestParams::default()),
            ],
            predictor_fit: FitConfig::default(),
            transductive: false,
            output_dir: None,
            write_intermediates: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.split.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::invalid(format!("train_fraction {f} outside (0, 1)")));
        }
        if self.missing_rates.is_empty() || self.imputers.is_empty() || self.predictors.is_empty() {
            return Err(Error::invalid("missing_rates, imputers and predictors must be nonempty"));
        }
        if let Some(r) = self.missing_rates.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
            return Err(Error::invalid(format!("missing rate {r} outside [0, 1)")));
        }
        self.predictor_fit.validate()
    }

    fn generation(&self) -> GenerationParams {
        GenerationParams {
            error_grid: self.error_grid.clone(),
            transfers_per_pair: self.transfers_per_pair,
            rounds_per_cell: self.rounds_per_cell,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub missing_rate: f64,
    pub imputer: String,
    pub predictor: String,
    pub status: Status,
    pub error: Option<String>,
    /// Over missing cells only; absent when nothing was masked.
    pub imputation_rmse_train: Option<f64>,
    pub imputation_rmse_test: Option<f64>,
    pub imputation_rounds_train: Option<usize>,
    pub r2: Option<f64>,
    pub mse: Option<f64>,
    /// Top-k accuracy for k = 1, 2, ...
    pub top_k: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub missing_rate: f64,
    pub imputer: String,
    pub predictor: String,
    pub impute_seconds: f64,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

/// Sweep outcome. Timings vary between runs and are kept out of the
/// serialized report so that identical configs give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub topology: String,
    pub n_components: usize,
    pub n_paths: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub records: Vec<Record>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl EvalReport {
    pub fn record(&self, rate: f64, imputer: &str, predictor: &str) -> Option<&Record> {
        self.records
            .iter()
            .find(|r| r.missing_rate == rate && r.imputer == imputer && r.predictor == predictor)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Long form: one metric per row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["missing_rate", "imputer", "predictor", "status", "metric", "value"])?;
        for r in &self.records {
            let key = [format_value(r.missing_rate), r.imputer.clone(), r.predictor.clone()];
            let status = match r.status {
                Status::Ok => "ok",
                Status::Failed => "failed",
            };
            let mut row = |metric: String, value: String| {
                w.write_record(key.iter().cloned().chain([status.to_string(), metric, value]))
            };
            if let Some(e) = &r.error {
                row("error".into(), e.clone())?;
            }
            let scalars = [
                ("imputation_rmse_train", r.imputation_rmse_train),
                ("imputation_rmse_test", r.imputation_rmse_test),
                ("r2", r.r2),
                ("mse", r.mse),
            ];
            for (name, v) in scalars {
                if let Some(v) = v {
                    row(name.into(), format_value(v))?;
                }
            }
            for (k, v) in r.top_k.iter().enumerate() {
                row(format!("top_{}", k + 1), format_value(*v))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        for t in &self.timings {
            w.serialize(t)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `report.json`, `report.csv` and `timings.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        self.write_csv(fs::File::create(dir.join("report.csv"))?)?;
        self.write_timings_csv(fs::File::create(dir.join("timings.csv"))?)?;
        Ok(())
    }
}

/// Shuffled split of `0..n`; both halves are sorted.
pub fn split_rows(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(spec.seed));
    let n_train = (n as f64 * spec.train_fraction).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::invalid(format!(
            "split of {n} rows at {} leaves one side empty",
            spec.train_fraction
        )));
    }
    let (mut train, mut test) = (idx[..n_train].to_vec(), idx[n_train..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn slug(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
        .collect();
    while out.ends_with('-') {
        out.pop();
    }
    out
}

struct Halves {
    train: Dataset,
    test: Dataset,
}

struct Imputed {
    train: ImputationResult,
    test: ImputationResult,
    train_mask: Mask,
    test_mask: Mask,
    seconds: f64,
}

fn rmse_or_none(original: &Array2<f64>, r: &ImputationResult, mask: &Mask) -> Result<Option<f64>> {
    if mask.missing_count() == 0 {
        return Ok(None);
    }
    imputation_rmse(original, r, &mask.observed).map(Some)
}

fn impute_halves(cfg: &ExperimentConfig, data: &Halves, rate_idx: usize, imputer: &ImputerSpec) -> Result<Imputed> {
    let start = Instant::now();
    let rate = cfg.missing_rates[rate_idx];
    let (tr, te) = (&data.train.features, &data.test.features);
    let train_mask = sample_mask(tr.nrows(), tr.ncols(), rate, cfg.mask_mode, derive_seed(cfg.seed, &[1, rate_idx as u64, 0]))?;
    let test_mask = sample_mask(te.nrows(), te.ncols(), rate, cfg.mask_mode, derive_seed(cfg.seed, &[1, rate_idx as u64, 1]))?;
    let mtrain = apply_mask(tr, &train_mask)?;
    let mtest = apply_mask(te, &test_mask)?;

    let (train, test) = if cfg.transductive {
        let joint = imputer.run(&mtrain.stack(&mtest)?)?;
        let n = tr.nrows();
        let part = |rows: std::ops::Range<usize>| ImputationResult {
            completed: joint.completed.slice(ndarray::s![rows, ..]).to_owned(),
            ..joint.clone()
        };
        (part(0..n), part(n..joint.completed.nrows()))
    } else {
        (imputer.run(&mtrain)?, imputer.run(&mtest)?)
    };
    Ok(Imputed {
        train,
        test,
        train_mask,
        test_mask,
        seconds: start.elapsed().as_secs_f64(),
    })
}

struct Outcome {
    record: Record,
    timing: Timing,
    rankings: Option<Vec<crate::localize::LocalizationRanking>>,
}

fn evaluate(
    cfg: &ExperimentConfig,
    data: &Halves,
    imputed: &Imputed,
    predictor: &Regressor,
    combo_seed: u64,
    record: &mut Record,
    timing: &mut Timing,
) -> Result<Vec<crate::localize::LocalizationRanking>> {
    record.imputation_rmse_train = rmse_or_none(&data.train.features, &imputed.train, &imputed.train_mask)?;
    record.imputation_rmse_test = rmse_or_none(&data.test.features, &imputed.test, &imputed.test_mask)?;
    record.imputation_rounds_train = Some(imputed.train.rounds_used);

    let start = Instant::now();
    let fit = FitConfig {
        seed: combo_seed,
        ..cfg.predictor_fit.clone()
    };
    let loc = train_localizer(imputed.train.completed.view(), data.train.labels.view(), predictor, &fit)?;
    timing.train_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let pred = loc.predict(imputed.test.completed.view())?;
    record.r2 = Some(score_r2(pred.view(), data.test.labels.view())?);
    record.mse = Some(score_mse(pred.view(), data.test.labels.view())?);
    let rankings = rank_all(pred.view());
    let truth = data.test.fault_components();
    record.top_k = (1..=MAX_K.min(loc.n_components))
        .map(|k| top_k_accuracy(&rankings, &truth, k))
        .collect::<Result<_>>()?;
    timing.eval_seconds = start.elapsed().as_secs_f64();
    Ok(rankings)
}

fn write_intermediates(dir: &Path, data: &Halves, rate: f64, imputer: &str, imputed: &Imputed) -> Result<()> {
    let stem = format!("rate-{}-{}", format_value(rate), slug(imputer));
    let masks = dir.join("masks");
    fs::create_dir_all(&masks)?;
    let paths = &data.train.path_labels;
    imputed
        .train_mask
        .write_csv(fs::File::create(masks.join(format!("rate-{}-train.csv", format_value(rate))))?, paths)?;
    imputed
        .test_mask
        .write_csv(fs::File::create(masks.join(format!("rate-{}-test.csv", format_value(rate))))?, paths)?;
    let out = dir.join("imputed");
    fs::create_dir_all(&out)?;
    write_table_file(&out.join(format!("{stem}-train.csv")), paths, &imputed.train.completed)?;
    write_table_file(&out.join(format!("{stem}-test.csv")), paths, &imputed.test.completed)?;
    Ok(())
}

/// Runs the sweep. When `config.output_dir` is set, the dataset, split,
/// masks, imputed matrices, rankings and reports are written there.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<EvalReport> {
    config.validate()?;
    let topology = build_preset(&config.topology.preset, config.topology.seed)?;
    let dataset = generate_dataset(&topology, &config.generation())?;
    let (train_rows, test_rows) = split_rows(dataset.n_samples(), &config.split)?;
    let data = Halves {
        train: dataset.select_rows(&train_rows),
        test: dataset.select_rows(&test_rows),
    };
    log::info!(
        "dataset: {} samples x {} paths, {} components; {} train / {} test",
        dataset.n_samples(),
        dataset.features.ncols(),
        dataset.labels.ncols(),
        train_rows.len(),
        test_rows.len()
    );

    let out_dir = config.output_dir.as_deref().filter(|_| config.write_intermediates);
    if let Some(dir) = out_dir {
        dataset.write_dir(&dir.join("dataset"))?;
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(dir.join("split.csv"))?;
        w.write_record(["row", "set"])?;
        let mut all: Vec<(usize, &str)> = train_rows.iter().map(|&r| (r, "train")).collect();
        all.extend(test_rows.iter().map(|&r| (r, "test")));
        all.sort_unstable();
        for (r, s) in all {
            w.write_record([r.to_string(), s.to_string()])?;
        }
        w.flush()?;
    }

    let pairs: Vec<(usize, usize)> = (0..config.missing_rates.len())
        .flat_map(|r| (0..config.imputers.len()).map(move |i| (r, i)))
        .collect();

    let outcomes: Vec<Vec<Outcome>> = pairs
        .par_iter()
        .map(|&(ri, ii)| {
            let rate = config.missing_rates[ri];
            let imputer = &config.imputers[ii];
            let imputed = impute_halves(config, &data, ri, imputer);
            if let (Some(dir), Ok(imp)) = (out_dir, &imputed) {
                if let Err(e) = write_intermediates(dir, &data, rate, &imputer.name(), imp) {
                    log::warn!("could not write intermediates for rate {rate}: {e}");
                }
            }
            config
                .predictors
                .iter()
                .enumerate()
                .map(|(pi, predictor)| {
                    let mut record = Record {
                        missing_rate: rate,
                        imputer: imputer.name(),
                        predictor: predictor.to_string(),
                        status: Status::Ok,
                        error: None,
                        imputation_rmse_train: None,
                        imputation_rmse_test: None,
                        imputation_rounds_train: None,
                        r2: None,
                        mse: None,
                        top_k: Vec::new(),
                    };
                    let mut timing = Timing {
                        missing_rate: rate,
                        imputer: record.imputer.clone(),
                        predictor: record.predictor.clone(),
                        impute_seconds: 0.0,
                        train_seconds: 0.0,
                        eval_seconds: 0.0,
                    };
                    let result = match &imputed {
                        Ok(imp) => {
                            timing.impute_seconds = imp.seconds;
                            let seed = derive_seed(config.seed, &[2, ri as u64, ii as u64, pi as u64]);
                            evaluate(config, &data, imp, predictor, seed, &mut record, &mut timing)
                        }
                        Err(e) => Err(Error::invalid(format!("imputation failed: {e}"))),
                    };
                    let rankings = match result {
                        Ok(r) => Some(r),
                        Err(e) => {
                            log::warn!("rate {rate}, {} / {}: {e}", record.imputer, record.predictor);
                            record.status = Status::Failed;
                            record.error = Some(e.to_string());
                            None
                        }
                    };
                    Outcome {
                        record,
                        timing,
                        rankings,
                    }
                })
                .collect()
        })
        .collect();

    let mut report = EvalReport {
        topology: topology.name().to_string(),
        n_components: dataset.labels.ncols(),
        n_paths: dataset.features.ncols(),
        n_train: train_rows.len(),
        n_test: test_rows.len(),
        records: Vec::new(),
        timings: Vec::new(),
    };
    for o in outcomes.into_iter().flatten() {
        if let (Some(dir), Some(rankings)) = (out_dir, &o.rankings) {
            let rdir = dir.join("rankings");
            fs::create_dir_all(&rdir)?;
            let name = format!(
                "rate-{}-{}-{}.csv",
                format_value(o.record.missing_rate),
                slug(&o.record.imputer),
                slug(&o.record.predictor)
            );
            write_rankings_csv(fs::File::create(rdir.join(name))?, rankings, &data.test.component_labels)?;
        }
        report.records.push(o.record);
        report.timings.push(o.timing);
    }
    if let Some(dir) = &config.output_dir {
        report.write_dir(dir)?;
    }
    Ok(report)
}
