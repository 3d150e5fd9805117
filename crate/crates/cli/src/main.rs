//! `faultloc`: generate, mask, impute, train and evaluate from the shell.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when the command
//! itself fails. Diagnostics go to stderr; data goes to files or stdout.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use faultloc::faultsim::{generate_dataset, GenerationParams};
use faultloc::impute::{impute, mean_fill, ImputerConfig};
use faultloc::io::{read_table_file, write_table, Table};
use faultloc::localize::{rank_all, score_mse, score_r2, top_k_accuracy, train_localizer, write_rankings_csv, Localizer};
use faultloc::missing::{apply_mask, sample_mask, MaskMode, MaskedMatrix};
use faultloc::pipeline::{run_pipeline, ExperimentConfig, MAX_K};
use faultloc::regress::{FitConfig, ForestParams, Regressor};
use faultloc::topology::{build_preset, compute_routes};
use faultloc::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "faultloc", version, about = "Gray-failure localization from path measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a preset topology as JSON.
    Topo {
        #[arg(long, default_value = "internet2-like")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labeled dataset (features.csv, labels.csv, provenance.json).
    Gen {
        #[arg(long, default_value = "internet2-like")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        transfers: u32,
        #[arg(long, default_value_t = 1)]
        rounds: u32,
        /// Comma-separated injected error probabilities.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Blank out cells of a feature CSV.
    Mask {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::McarCell)]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the 0/1 observed-cell mask here.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Fill the empty cells of a CSV.
    Impute {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long, default_value_t = 10)]
        max_rounds: usize,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Do not clip imputed values to [0, 1].
        #[arg(long)]
        no_clamp: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the JSON convergence report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train a localizer and write it as JSON.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long, default_value_t = 1)]
        degree: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained localizer; prints metrics as JSON.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Write per-sample rankings here.
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Run a full sweep from a JSON experiment config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    McarCell,
    ColumnDrop,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EstimatorKind {
    Mean,
    Ols,
    Ridge,
    Lasso,
    Knn,
    ExtraTrees,
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long, value_enum, default_value_t = EstimatorKind::Lasso)]
    estimator: EstimatorKind,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
}

impl EstimatorArgs {
    /// `None` for the mean imputer.
    fn regressor(&self) -> Option<Regressor> {
        Some(match self.estimator {
            EstimatorKind::Mean => return None,
            EstimatorKind::Ols => Regressor::Ols,
            EstimatorKind::Ridge => Regressor::Ridge { lambda: self.lambda },
            EstimatorKind::Lasso => Regressor::Lasso { lambda: self.lambda },
            EstimatorKind::Knn => Regressor::Knn { k: self.k },
            EstimatorKind::ExtraTrees => Regressor::ExtraTrees(ForestParams {
                n_trees: self.trees,
                ..Default::default()
            }),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(&format!(": {s}"));
                src = s.source();
            }
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}

/// Writes through `write` to `path`, or to stdout when absent.
fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> faultloc::Result<()>) -> faultloc::Result<()> {
    match path {
        Some(p) => {
            let mut f = io::BufWriter::new(fs::File::create(p)?);
            write(&mut f)?;
            f.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
        }
    }
    Ok(())
}

fn read_complete(path: &Path) -> faultloc::Result<Table> {
    let t = read_table_file(path)?;
    if t.values.iter().any(|v| v.is_nan()) {
        return Err(Error::MissingValues);
    }
    Ok(t)
}

fn run(command: Command) -> faultloc::Result<()> {
    match command {
        Command::Topo { preset, seed, out } => {
            let t = build_preset(&preset, seed)?;
            let routes = compute_routes(&t)?;
            log::info!(
                "{}: {} hosts, {} interfaces, {} components, {} paths",
                t.name(),
                t.hosts().len(),
                t.interface_count(),
                t.component_list().len(),
                routes.path_index().len()
            );
            let text = t.to_json()?;
            emit(out.as_deref(), |w| Ok(writeln!(w, "{text}")?))
        }
        Command::Gen {
            preset,
            seed,
            transfers,
            rounds,
            grid,
            out,
        } => {
            let t = build_preset(&preset, seed)?;
            let mut params = GenerationParams {
                transfers_per_pair: transfers,
                rounds_per_cell: rounds,
                seed,
                ..Default::default()
            };
            if let Some(g) = grid {
                params.error_grid = g;
            }
            let d = generate_dataset(&t, &params)?;
            d.write_dir(&out)?;
            log::info!(
                "wrote {} samples x {} paths to {}",
                d.n_samples(),
                d.features.ncols(),
                out.display()
            );
            Ok(())
        }
        Command::Mask {
            input,
            rate,
            mode,
            seed,
            out,
            mask_out,
        } => {
            let t = read_complete(&input)?;
            let mode = match mode {
                ModeArg::McarCell => MaskMode::Cell,
                ModeArg::ColumnDrop => MaskMode::Column,
            };
            let mask = sample_mask(t.values.nrows(), t.values.ncols(), rate, mode, seed)?;
            let masked = apply_mask(&t.values, &mask)?;
            log::info!("masked {} of {} cells", mask.missing_count(), t.values.len());
            if let Some(p) = mask_out {
                mask.write_csv(io::BufWriter::new(fs::File::create(p)?), &t.headers)?;
            }
            emit(out.as_deref(), |w| write_table(w, &t.headers, masked.values()))
        }
        Command::Impute {
            input,
            estimator,
            max_rounds,
            tolerance,
            seed,
            no_clamp,
            out,
            report,
        } => {
            let t = read_table_file(&input)?;
            let masked = MaskedMatrix::from_values(t.values)?;
            let missing = masked.missing_count();
            if missing == 0 {
                log::warn!("{} has no missing cells; output equals input", input.display());
            }
            let result = match estimator.regressor() {
                None => mean_fill(&masked)?,
                Some(reg) => {
                    let cfg = ImputerConfig {
                        estimator: reg,
                        max_rounds,
                        tolerance,
                        seed,
                        clamp: (!no_clamp).then_some((0.0, 1.0)),
                        ..Default::default()
                    };
                    impute(&masked, &cfg)?
                }
            };
            if missing > 0 {
                log::info!(
                    "imputed {missing} cells in {} rounds (converged: {})",
                    result.rounds_used,
                    result.converged
                );
            }
            if let Some(p) = report {
                fs::write(p, serde_json::to_string_pretty(&result.report(missing))? + "\n")?;
            }
            emit(out.as_deref(), |w| write_table(w, &t.headers, &result.completed))
        }
        Command::Train {
            features,
            labels,
            estimator,
            degree,
            seed,
            out,
        } => {
            let x = read_complete(&features)?;
            let y = read_complete(&labels)?;
            let reg = estimator
                .regressor()
                .ok_or_else(|| Error::InvalidArgument("`mean` is an imputer, not a predictor".into()))?;
            let cfg = FitConfig {
                degree,
                seed,
                ..Default::default()
            };
            let loc = train_localizer(x.values.view(), y.values.view(), &reg, &cfg)?;
            fs::write(&out, loc.to_json()? + "\n")?;
            log::info!("trained {reg} on {} samples, {} outputs", x.values.nrows(), loc.n_components);
            Ok(())
        }
        Command::Eval {
            model,
            features,
            labels,
            rankings,
        } => {
            let loc = Localizer::from_json(&fs::read_to_string(&model)?)?;
            let x = read_complete(&features)?;
            let y = read_complete(&labels)?;
            let pred = loc.predict(x.values.view())?;
            let ranked = rank_all(pred.view());
            let truth: Vec<usize> = y
                .values
                .rows()
                .into_iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                        .0
                })
                .collect();
            let top_k = (1..=MAX_K.min(loc.n_components))
                .map(|k| top_k_accuracy(&ranked, &truth, k))
                .collect::<faultloc::Result<Vec<_>>>()?;
            let metrics = json!({
                "samples": x.values.nrows(),
                "r2": score_r2(pred.view(), y.values.view())?,
                "mse": score_mse(pred.view(), y.values.view())?,
                "top_k": top_k,
            });
            if let Some(p) = rankings {
                write_rankings_csv(io::BufWriter::new(fs::File::create(p)?), &ranked, &y.headers)?;
            }
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(())
        }
        Command::Pipeline { config, out } => {
            let mut cfg = ExperimentConfig::from_json(&fs::read_to_string(&config)?)?;
            if out.is_some() {
                cfg.output_dir = out;
            }
            let report = run_pipeline(&cfg)?;
            let failed = report.records.iter().filter(|r| r.error.is_some()).count();
            log::info!("{} combinations, {failed} failed", report.records.len());
            if cfg.output_dir.is_none() {
                print!("{}", report.to_json()?);
            }
            Ok(())
        }
    }
}
