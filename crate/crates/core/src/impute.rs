//! Iterative multivariate imputation.
//!
//! Missing cells start from a simple fill. Then, round after round, each
//! incomplete column is regressed on all other columns (at their current
//! values) using the rows where it is observed, and the fitted model
//! overwrites that column's missing cells. Columns are visited from the
//! fewest to the most missing cells. Iteration stops when no imputed cell
//! moves by `tolerance` or more, or after `max_rounds`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::missing::MaskedMatrix;
use crate::regress::{fit_linear_warm, fit_regressor, FitConfig, FittedRegressor, Regressor};
use crate::seed::derive_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialFill {
    #[default]
    ColumnMean,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputerConfig {
    pub estimator: Regressor,
    pub max_rounds: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub initial_fill: InitialFill,
    /// Imputed values are clipped into `[lo, hi]`; failure rates live in [0, 1].
    pub clamp: Option<(f64, f64)>,
    /// Solver settings handed to the estimator.
    pub fit: FitConfig,
}

impl Default for ImputerConfig {
    fn default() -> Self {
        ImputerConfig {
            estimator: Regressor::Lasso { lambda: 1e-4 },
            max_rounds: 10,
            tolerance: 1e-3,
            seed: 0,
            initial_fill: InitialFill::ColumnMean,
            clamp: Some((0.0, 1.0)),
            fit: FitConfig::default(),
        }
    }
}

impl ImputerConfig {
    pub fn with_estimator(estimator: Regressor) -> Self {
        ImputerConfig {
            estimator,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::invalid("max_rounds must be >= 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("imputer tolerance must be > 0"));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo <= hi) {
                return Err(Error::invalid("clamp range is empty"));
            }
        }
        self.fit.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImputationResult {
    pub completed: Array2<f64>,
    pub rounds_used: usize,
    pub converged: bool,
    /// Largest change of any imputed cell, per round.
    pub trace: Vec<f64>,
}

/// The JSON-facing part of an [`ImputationResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rounds_used: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub imputed_cells: usize,
}

impl ImputationResult {
    pub fn report(&self, imputed_cells: usize) -> ConvergenceReport {
        ConvergenceReport {
            rounds_used: self.rounds_used,
            converged: self.converged,
            trace: self.trace.clone(),
            imputed_cells,
        }
    }
}

fn column_means(masked: &MaskedMatrix) -> Result<(Vec<Option<f64>>, f64)> {
    let (values, observed) = (masked.values(), masked.observed());
    let mut total = 0.0;
    let mut count = 0usize;
    let means = (0..values.ncols())
        .map(|j| {
            let (s, c) = values
                .column(j)
                .iter()
                .zip(observed.column(j))
                .filter(|(_, &o)| o)
                .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
            total += s;
            count += c;
            (c > 0).then(|| s / c as f64)
        })
        .collect();
    if count == 0 {
        return Err(Error::NoObservedCells);
    }
    Ok((means, total / count as f64))
}

/// Replaces each missing cell with its column's observed mean (the global
/// observed mean for columns with nothing observed).
pub fn mean_fill(masked: &MaskedMatrix) -> Result<ImputationResult> {
    let (means, global) = column_means(masked)?;
    let missing = masked.missing_count();
    let mut completed = masked.values().clone();
    for ((_, j), v) in completed.indexed_iter_mut() {
        if v.is_nan() {
            *v = means[j].unwrap_or(global);
        }
    }
    Ok(ImputationResult {
        completed,
        rounds_used: usize::from(missing > 0),
        converged: true,
        trace: Vec::new(),
    })
}

pub fn impute(masked: &MaskedMatrix, config: &ImputerConfig) -> Result<ImputationResult> {
    config.validate()?;
    let (n, p) = masked.dim();
    if n < 2 || p < 2 {
        return Err(Error::invalid("imputation needs at least 2 rows and 2 columns"));
    }
    let (means, global) = column_means(masked)?;
    let observed = masked.observed();
    if masked.missing_count() == 0 {
        return Ok(ImputationResult {
            completed: masked.values().clone(),
            rounds_used: 0,
            converged: true,
            trace: Vec::new(),
        });
    }

    let mut x = masked.values().clone();
    for ((_, j), v) in x.indexed_iter_mut() {
        if v.is_nan() {
            *v = match config.initial_fill {
                InitialFill::ColumnMean => means[j].unwrap_or(global),
                InitialFill::Zero => 0.0,
            };
        }
    }

    let mut order: Vec<(usize, usize)> = (0..p)
        .map(|j| (observed.column(j).iter().filter(|&&o| !o).count(), j))
        .filter(|&(missing, _)| missing > 0)
        .collect();
    order.sort_unstable();

    let mut warm: Vec<Option<Array1<f64>>> = vec![None; p];
    let mut trace = Vec::new();
    let mut converged = false;

    for round in 0..config.max_rounds {
        let mut max_change = 0.0f64;
        for &(_, col) in &order {
            let (obs_rows, miss_rows): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&r| observed[[r, col]]);
            if obs_rows.is_empty() {
                continue;
            }
            let others: Vec<usize> = (0..p).filter(|&j| j != col).collect();
            let design = Array2::from_shape_fn((obs_rows.len(), p - 1), |(i, k)| x[[obs_rows[i], others[k]]]);
            let target: Array1<f64> = obs_rows.iter().map(|&r| x[[r, col]]).collect();
            let query = Array2::from_shape_fn((miss_rows.len(), p - 1), |(i, k)| x[[miss_rows[i], others[k]]]);

            let fit_cfg = FitConfig {
                seed: derive_seed(config.seed, &[round as u64, col as u64]),
                ..config.fit.clone()
            };
            let model = match &config.estimator {
                Regressor::Lasso { lambda } => {
                    let m = fit_linear_warm(
                        design.view(),
                        target.view(),
                        crate::regress::Penalty::Lasso { lambda: *lambda },
                        &fit_cfg,
                        warm[col].as_ref().map(|w| w.view()),
                    )
                    .map_err(|e| Error::Estimator {
                        column: col,
                        source: Box::new(e),
                    })?;
                    warm[col] = Some(m.weights.clone());
                    FittedRegressor::Linear(m)
                }
                r => fit_regressor(r, design.view(), target.view(), &fit_cfg).map_err(|e| Error::Estimator {
                    column: col,
                    source: Box::new(e),
                })?,
            };
            let pred = model.predict(query.view())?;
            for (&r, &v) in miss_rows.iter().zip(pred.iter()) {
                let v = match config.clamp {
                    Some((lo, hi)) => v.clamp(lo, hi),
                    None => v,
                };
                max_change = max_change.max((v - x[[r, col]]).abs());
                x[[r, col]] = v;
            }
        }
        trace.push(max_change);
        log::debug!("imputation round {}: max change {max_change:.3e}", round + 1);
        if max_change < config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(ImputationResult {
        completed: x,
        rounds_used: trace.len(),
        converged,
        trace,
    })
}

/// Root mean square error over the missing cells only.
pub fn imputation_rmse(original: &Array2<f64>, result: &ImputationResult, observed: &Array2<bool>) -> Result<f64> {
    if original.dim() != result.completed.dim() || original.dim() != observed.dim() {
        return Err(Error::ShapeMismatch {
            expected: original.dim(),
            found: result.completed.dim(),
        });
    }
    let (sum, count) = ndarray::Zip::from(original)
        .and(&result.completed)
        .and(observed)
        .fold((0.0, 0usize), |(s, c), &a, &b, &o| {
            if o {
                (s, c)
            } else {
                (s + (a - b) * (a - b), c + 1)
            }
        });
    if count == 0 {
        return Err(Error::NoMissingCells);
    }
    Ok((sum / count as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::missing::{apply_mask, sample_mask, Mask, MaskMode};
    use crate::regress::ForestParams;
    use ndarray::array;
    use rand::Rng;

    fn masked(v: Array2<f64>) -> MaskedMatrix {
        MaskedMatrix::from_values(v).unwrap()
    }

    fn correlated(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::seed::rng_from(seed);
        Array2::from_shape_fn((n, 4), |_| 0.0).rows().into_iter().flat_map(|_| {
            let a = rng.gen::<f64>() * 0.5;
            let b = rng.gen::<f64>() * 0.5;
            [a, b, a + b, 0.5 * a]
        }).collect::<Array1<f64>>().into_shape_with_order((n, 4)).unwrap()
    }

    #[test]
    fn mean_fill_cases() {
        let r = mean_fill(&masked(array![[1.0, 0.2], [f64::NAN, 0.4], [3.0, 0.6]])).unwrap();
        assert_eq!(r.completed[[1, 0]], 2.0);

        let full = array![[0.1, 0.2], [0.3, 0.4]];
        let r = mean_fill(&masked(full.clone())).unwrap();
        assert_eq!(r.completed, full);
        assert_eq!(r.rounds_used, 0);

        let r = mean_fill(&masked(array![[0.2, f64::NAN], [0.6, f64::NAN]])).unwrap();
        assert!((r.completed[[0, 1]] - 0.4).abs() < 1e-15);

        assert!(matches!(
            mean_fill(&masked(array![[f64::NAN], [f64::NAN]])),
            Err(Error::NoObservedCells)
        ));
    }

    #[test]
    fn nothing_to_impute_is_identity() {
        let x = correlated(20, 1);
        let r = impute(&masked(x.clone()), &ImputerConfig::default()).unwrap();
        assert_eq!(r.completed, x);
        assert_eq!(r.rounds_used, 0);
        assert!(r.converged);
    }

    #[test]
    fn exact_linear_relation_is_recovered() {
        // x2 = x1 on 20 rows; one missing cell in x2.
        let mut rng = crate::seed::rng_from(3);
        let mut x = Array2::zeros((20, 2));
        for i in 0..20 {
            let v = 0.1 + 0.8 * rng.gen::<f64>();
            x[[i, 0]] = v;
            x[[i, 1]] = v;
        }
        let truth = x[[7, 1]];
        let mut m = x.clone();
        m[[7, 1]] = f64::NAN;
        let cfg = ImputerConfig::with_estimator(Regressor::Ridge { lambda: 1e-6 });
        let r = impute(&masked(m), &cfg).unwrap();
        assert!((r.completed[[7, 1]] - truth).abs() < 1e-3);
    }

    #[test]
    fn observed_cells_untouched_and_clamped() {
        let x = correlated(60, 4);
        let mask = sample_mask(60, 4, 0.3, MaskMode::Cell, 8).unwrap();
        let mm = apply_mask(&x, &mask).unwrap();
        for est in [
            Regressor::Lasso { lambda: 1e-4 },
            Regressor::Ridge { lambda: 0.01 },
            Regressor::Knn { k: 3 },
            Regressor::ExtraTrees(ForestParams {
                n_trees: 10,
                ..Default::default()
            }),
        ] {
            let r = impute(&mm, &ImputerConfig::with_estimator(est.clone())).unwrap();
            for ((i, j), &o) in mask.observed.indexed_iter() {
                if o {
                    assert_eq!(r.completed[[i, j]].to_bits(), x[[i, j]].to_bits());
                } else {
                    assert!((0.0..=1.0).contains(&r.completed[[i, j]]), "{est}");
                }
            }
            assert!(r.trace.iter().all(|&t| t >= 0.0));
            if r.converged {
                assert!(*r.trace.last().unwrap() < 1e-3);
            }
            let again = impute(&mm, &ImputerConfig::with_estimator(est)).unwrap();
            assert_eq!(again.completed, r.completed);
        }
    }

    #[test]
    fn multivariate_beats_mean_on_correlated_columns() {
        let x = correlated(200, 5);
        let mask = sample_mask(200, 4, 0.2, MaskMode::Cell, 2).unwrap();
        let mm = apply_mask(&x, &mask).unwrap();
        let lasso = impute(&mm, &ImputerConfig::default()).unwrap();
        let mean = mean_fill(&mm).unwrap();
        let e1 = imputation_rmse(&x, &lasso, &mask.observed).unwrap();
        let e2 = imputation_rmse(&x, &mean, &mask.observed).unwrap();
        assert!(e1 < 0.5 * e2, "{e1} vs {e2}");
    }

    #[test]
    fn fully_missing_column_gets_global_mean() {
        let m = array![[0.2, f64::NAN, 0.1], [0.4, f64::NAN, 0.3], [0.6, f64::NAN, f64::NAN]];
        let r = impute(&masked(m), &ImputerConfig::default()).unwrap();
        let global = (0.2 + 0.4 + 0.6 + 0.1 + 0.3) / 5.0;
        for i in 0..3 {
            assert!((r.completed[[i, 1]] - global).abs() < 1e-15);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            impute(&masked(array![[f64::NAN, f64::NAN], [f64::NAN, f64::NAN]]), &ImputerConfig::default()),
            Err(Error::NoObservedCells)
        ));
        assert!(impute(&masked(array![[0.1, f64::NAN]]), &ImputerConfig::default()).is_err());
        // KNN with k beyond the observed rows of a column fails with its id.
        let m = array![[0.1, 0.2], [0.3, f64::NAN], [0.5, 0.6]];
        let err = impute(&masked(m), &ImputerConfig::with_estimator(Regressor::Knn { k: 5 })).unwrap_err();
        assert!(matches!(err, Error::Estimator { column: 1, .. }));
    }

    #[test]
    fn rmse_definition() {
        let orig = array![[0.5, 0.1], [0.2, 0.3]];
        let mut mask = Mask::all_observed(2, 2);
        let perfect = ImputationResult {
            completed: orig.clone(),
            rounds_used: 1,
            converged: true,
            trace: vec![],
        };
        assert!(matches!(
            imputation_rmse(&orig, &perfect, &mask.observed),
            Err(Error::NoMissingCells)
        ));
        mask.observed[[0, 0]] = false;
        assert_eq!(imputation_rmse(&orig, &perfect, &mask.observed).unwrap(), 0.0);
        let mut off = perfect.clone();
        off.completed[[0, 0]] = 0.3;
        assert!((imputation_rmse(&orig, &off, &mask.observed).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn mean_fill_error_tracks_column_spread() {
        // Standard-normal columns: mean imputation error is ~ one standard deviation.
        let mut rng = crate::seed::rng_from(10);
        let normal = rand_distr_free_normal(&mut rng, 2000 * 5);
        let x = Array2::from_shape_vec((2000, 5), normal).unwrap();
        let mask = sample_mask(2000, 5, 0.2, MaskMode::Cell, 4).unwrap();
        let mm = apply_mask(&x, &mask).unwrap();
        let r = mean_fill(&mm).unwrap();
        let e = imputation_rmse(&x, &r, &mask.observed).unwrap();
        assert!((0.9..=1.1).contains(&e), "{e}");
    }

    // Box-Muller; keeps the dev-dependency list short.
    fn rand_distr_free_normal(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect()
    }
}
