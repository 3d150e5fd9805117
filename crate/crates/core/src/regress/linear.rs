//! Least squares, ridge and lasso on mean-centered data.
//!
//! Objectives, with `Xc`, `yc` the centered design and target and `n` rows:
//!
//! ```text
//! ols:    ||yc - Xc w||^2
//! ridge:  ||yc - Xc w||^2 + lambda ||w||_2^2
//! lasso:  1/(2n) ||yc - Xc w||^2 + lambda ||w||_1
//! ```
//!
//! The lasso loss is scaled by `1/(2n)` so a given `lambda` means the same
//! thing regardless of sample count. The intercept is recovered afterwards as
//! `mean(y) - mean(X) . w` and is never penalized.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FitConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Penalty {
    None,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
}

impl Penalty {
    pub fn lambda(&self) -> f64 {
        match *self {
            Penalty::None => 0.0,
            Penalty::Ridge { lambda } | Penalty::Lasso { lambda } => lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub penalty: Penalty,
    /// Coordinate-descent sweeps (0 for closed-form fits).
    pub sweeps: usize,
    pub converged: bool,
}

impl LinearModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::ShapeMismatch {
                expected: (x.nrows(), self.weights.len()),
                found: x.dim(),
            });
        }
        Ok(x.dot(&self.weights) + self.intercept)
    }
}

pub fn predict_linear(model: &LinearModel, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    model.predict(x)
}

pub(crate) fn check_design(x: ArrayView2<f64>, rows: usize) -> Result<()> {
    if x.nrows() != rows {
        return Err(Error::ShapeMismatch {
            expected: (rows, x.ncols()),
            found: x.dim(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("training set is empty"));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::MissingValues);
    }
    if x.iter().any(|v| v.is_infinite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn check_penalty(p: &Penalty) -> Result<()> {
    let l = p.lambda();
    if !l.is_finite() || l < 0.0 {
        return Err(Error::invalid(format!("penalty {l} must be finite and >= 0")));
    }
    Ok(())
}

pub fn fit_linear(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    penalty: Penalty,
    config: &FitConfig,
) -> Result<LinearModel> {
    fit_linear_warm(x, y, penalty, config, None)
}

/// As [`fit_linear`]; lasso starts coordinate descent from `init`.
pub fn fit_linear_warm(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    penalty: Penalty,
    config: &FitConfig,
    init: Option<ArrayView1<f64>>,
) -> Result<LinearModel> {
    let y2 = y.insert_axis(Axis(1));
    let mut models = fit_multi(x, y2, penalty, config, init.map(|w| vec![w]))?;
    Ok(models.pop().expect("one output"))
}

/// Fits one model per column of `y` against a shared design. The objective
/// separates across outputs, so this equals fitting the columns one by one;
/// the shared part (centering, Gram matrix, factorization) is computed once.
pub fn fit_linear_multi(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    penalty: Penalty,
    config: &FitConfig,
) -> Result<Vec<LinearModel>> {
    fit_multi(x, y, penalty, config, None)
}

fn fit_multi(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    penalty: Penalty,
    config: &FitConfig,
    init: Option<Vec<ArrayView1<f64>>>,
) -> Result<Vec<LinearModel>> {
    check_design(x, y.nrows())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    check_penalty(&penalty)?;
    config.validate()?;

    let (n, p) = x.dim();
    let x_mean = x.mean_axis(Axis(0)).expect("rows > 0");
    let y_mean = y.mean_axis(Axis(0)).expect("rows > 0");
    let xc = &x - &x_mean;
    let yc = &y - &y_mean;

    let mut fits: Vec<(Array1<f64>, usize, bool)> = match penalty {
        Penalty::None | Penalty::Ridge { .. } => {
            let w = solve_ridge(&xc, &yc, penalty.lambda())?;
            w.columns().into_iter().map(|c| (c.to_owned(), 0, true)).collect()
        }
        Penalty::Lasso { lambda } => {
            let starts: Vec<Array1<f64>> = match init {
                Some(v) => {
                    if v.len() != y.ncols() || v.iter().any(|w| w.len() != p) {
                        return Err(Error::invalid("warm start has the wrong shape"));
                    }
                    v.into_iter().map(|w| w.to_owned()).collect()
                }
                None => vec![Array1::zeros(p); y.ncols()],
            };
            if p <= n {
                let gram = xc.t().dot(&xc);
                let xty = xc.t().dot(&yc);
                (0..y.ncols())
                    .into_par_iter()
                    .map(|k| {
                        let out = lasso_gram(
                            &gram,
                            xty.column(k),
                            n,
                            lambda,
                            config,
                            starts[k].clone(),
                            None,
                        );
                        (out.weights, out.sweeps, out.converged)
                    })
                    .collect()
            } else {
                let xt = xc.t().as_standard_layout().into_owned();
                (0..y.ncols())
                    .into_par_iter()
                    .map(|k| {
                        let out = lasso_residual(&xt, yc.column(k), lambda, config, starts[k].clone(), None);
                        (out.weights, out.sweeps, out.converged)
                    })
                    .collect()
            }
        }
    };

    Ok(fits
        .drain(..)
        .enumerate()
        .map(|(k, (weights, sweeps, converged))| {
            let intercept = y_mean[k] - x_mean.dot(&weights);
            LinearModel {
                weights,
                intercept,
                penalty,
                sweeps,
                converged,
            }
        })
        .collect())
}

/// `(Xc'Xc + lambda I) W = Xc'Yc`, or the equivalent dual system when there
/// are more features than rows and `lambda > 0`.
fn solve_ridge(xc: &Array2<f64>, yc: &Array2<f64>, lambda: f64) -> Result<Array2<f64>> {
    let (n, p) = xc.dim();
    if p > n && lambda > 0.0 {
        let mut k = xc.dot(&xc.t());
        k.diag_mut().map_inplace(|d| *d += lambda);
        let alpha = cholesky_solve(&k, yc, false)?;
        return Ok(xc.t().dot(&alpha));
    }
    let mut g = xc.t().dot(xc);
    g.diag_mut().map_inplace(|d| *d += lambda);
    let b = xc.t().dot(yc);
    cholesky_solve(&g, &b, lambda == 0.0)
}

fn cholesky_solve(a: &Array2<f64>, b: &Array2<f64>, strict: bool) -> Result<Array2<f64>> {
    let dim = a.nrows();
    let am = DMatrix::from_fn(dim, dim, |i, j| a[[i, j]]);
    let bm = DMatrix::from_fn(dim, b.ncols(), |i, j| b[[i, j]]);
    let chol = am.cholesky().ok_or(Error::SingularMatrix)?;
    if strict {
        // Rank deficiency can survive factorization as a tiny pivot.
        let scale = a.diag().iter().fold(0.0f64, |m, &d| m.max(d.abs())).max(f64::MIN_POSITIVE);
        let l = chol.l_dirty();
        if (0..dim).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale) {
            return Err(Error::SingularMatrix);
        }
    }
    let sol = chol.solve(&bm);
    Ok(Array2::from_shape_fn((dim, b.ncols()), |(i, j)| sol[(i, j)]))
}

/// `sign(z) * max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Result of a lasso coordinate-descent run.
#[derive(Clone, Debug)]
pub struct CdOutcome {
    pub weights: Array1<f64>,
    pub sweeps: usize,
    pub converged: bool,
    /// Objective value after each sweep, when tracking was requested.
    pub objective: Vec<f64>,
}

/// Runs cyclic coordinate descent for the lasso on already-centered data,
/// recording the objective after every sweep.
pub fn lasso_coordinate_descent(
    xc: ArrayView2<f64>,
    yc: ArrayView1<f64>,
    lambda: f64,
    config: &FitConfig,
) -> CdOutcome {
    let (n, p) = xc.dim();
    let yty = yc.dot(&yc);
    if p <= n {
        let gram = xc.t().dot(&xc);
        let xty = xc.t().dot(&yc);
        lasso_gram(&gram, xty.view(), n, lambda, config, Array1::zeros(p), Some(yty))
    } else {
        let xt = xc.t().as_standard_layout().into_owned();
        lasso_residual(&xt, yc, lambda, config, Array1::zeros(p), Some(()))
    }
}

/// Coordinate descent driven by the Gram matrix; each sweep costs `O(p^2)`.
fn lasso_gram(
    gram: &Array2<f64>,
    xty: ArrayView1<f64>,
    n: usize,
    lambda: f64,
    config: &FitConfig,
    mut w: Array1<f64>,
    track_yty: Option<f64>,
) -> CdOutcome {
    let p = w.len();
    let nf = n as f64;
    let mut gw = gram.dot(&w);
    let mut objective = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < config.max_iterations {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let gjj = gram[[j, j]];
            if gjj <= 0.0 {
                continue;
            }
            let old = w[j];
            let rho = (xty[j] - gw[j] + gjj * old) / nf;
            let new = soft_threshold(rho, lambda) / (gjj / nf);
            let delta = new - old;
            if delta != 0.0 {
                // Gram is symmetric; rows are contiguous.
                gw.scaled_add(delta, &gram.row(j));
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if let Some(yty) = track_yty {
            let rss = yty - 2.0 * w.dot(&xty) + w.dot(&gw);
            objective.push(rss / (2.0 * nf) + lambda * w.iter().map(|v| v.abs()).sum::<f64>());
        }
        if max_delta < config.tolerance {
            converged = true;
            break;
        }
    }
    CdOutcome {
        weights: w,
        sweeps,
        converged,
        objective,
    }
}

/// Coordinate descent maintaining the residual; each sweep costs `O(n p)`.
/// `xt` is the centered design transposed (one feature per row).
fn lasso_residual(
    xt: &Array2<f64>,
    yc: ArrayView1<f64>,
    lambda: f64,
    config: &FitConfig,
    mut w: Array1<f64>,
    track: Option<()>,
) -> CdOutcome {
    let (p, n) = xt.dim();
    let nf = n as f64;
    let col_sq: Vec<f64> = xt.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mut resid = yc.to_owned() - xt.t().dot(&w);
    let mut objective = Vec::new();
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < config.max_iterations {
        sweeps += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            if col_sq[j] <= 0.0 {
                continue;
            }
            let xj = xt.row(j);
            let old = w[j];
            let rho = (xj.dot(&resid) + col_sq[j] * old) / nf;
            let new = soft_threshold(rho, lambda) / (col_sq[j] / nf);
            let delta = new - old;
            if delta != 0.0 {
                resid.scaled_add(-delta, &xj);
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if track.is_some() {
            objective.push(
                resid.dot(&resid) / (2.0 * nf) + lambda * w.iter().map(|v| v.abs()).sum::<f64>(),
            );
        }
        if max_delta < config.tolerance {
            converged = true;
            break;
        }
    }
    CdOutcome {
        weights: w,
        sweeps,
        converged,
        objective,
    }
}

/// Lasso objective `1/(2n) ||y - Xw - b||^2 + lambda ||w||_1` of a fitted model
/// on raw (uncentered) data.
pub fn lasso_objective(x: ArrayView2<f64>, y: ArrayView1<f64>, model: &LinearModel, lambda: f64) -> f64 {
    let r = &y - &(x.dot(&model.weights) + model.intercept);
    r.dot(&r) / (2.0 * x.nrows() as f64) + lambda * model.weights.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest violation of the lasso optimality conditions. With the centered
/// gradient `g = Xc'(yc - Xc w) / n`, optimality requires `g_j = lambda *
/// sign(w_j)` where `w_j != 0` and `|g_j| <= lambda` where `w_j == 0`.
pub fn lasso_kkt_violation(x: ArrayView2<f64>, y: ArrayView1<f64>, weights: ArrayView1<f64>, lambda: f64) -> f64 {
    let n = x.nrows() as f64;
    let xc = &x - &x.mean_axis(Axis(0)).expect("rows > 0");
    let y_mean = y.mean().expect("rows > 0");
    let resid = y.mapv(|v| v - y_mean) - xc.dot(&weights);
    let grad = xc.t().dot(&resid) / n;
    grad.iter()
        .zip(weights.iter())
        .map(|(&g, &w)| {
            if w != 0.0 {
                (g - lambda * w.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Smallest `lambda` at which every lasso weight is zero: `max_j |xc_j' yc| / n`.
pub fn lasso_lambda_max(x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let n = x.nrows() as f64;
    let xc = &x - &x.mean_axis(Axis(0)).expect("rows > 0");
    let y_mean = y.mean().expect("rows > 0");
    let yc = y.mapv(|v| v - y_mean);
    xc.t().dot(&yc).iter().fold(0.0f64, |m, v| m.max(v.abs())) / n
}
