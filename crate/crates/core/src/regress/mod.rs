//! Regression numerics used by both the imputer and the localizer.

pub mod forest;
pub mod knn;
pub mod linear;
pub mod poly;

use std::fmt;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{fit_forest, predict_forest, ForestModel, ForestParams};
pub use knn::{fit_knn, fit_knn_multi, KnnModel};
pub use linear::{
    fit_linear, fit_linear_multi, fit_linear_warm, lasso_coordinate_descent, lasso_kkt_violation,
    lasso_lambda_max, lasso_objective, predict_linear, soft_threshold, CdOutcome, LinearModel, Penalty,
};
pub use poly::{polynomial_features, polynomial_width};

/// Solver settings shared by all estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Coordinate descent stops once no weight moves by this much in a sweep.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub degree: u32,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tolerance: 1e-6,
            max_iterations: 1000,
            degree: 1,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be >= 1"));
        }
        if self.degree == 0 {
            return Err(Error::invalid("degree must be >= 1"));
        }
        Ok(())
    }
}

/// Estimator choice, as written in configs: `{"kind": "lasso", "lambda": 1e-4}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regressor {
    Ols,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    Knn { k: usize },
    ExtraTrees(ForestParams),
}

impl Regressor {
    pub fn penalty(&self) -> Option<Penalty> {
        match *self {
            Regressor::Ols => Some(Penalty::None),
            Regressor::Ridge { lambda } => Some(Penalty::Ridge { lambda }),
            Regressor::Lasso { lambda } => Some(Penalty::Lasso { lambda }),
            _ => None,
        }
    }
}

impl fmt::Display for Regressor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regressor::Ols => write!(f, "ols"),
            Regressor::Ridge { lambda } => write!(f, "ridge({lambda})"),
            Regressor::Lasso { lambda } => write!(f, "lasso({lambda})"),
            Regressor::Knn { k } => write!(f, "knn({k})"),
            Regressor::ExtraTrees(p) => write!(f, "extra-trees({})", p.n_trees),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "kebab-case")]
pub enum FittedRegressor {
    Linear(LinearModel),
    Knn(KnnModel),
    Forest(ForestModel),
}

impl FittedRegressor {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            FittedRegressor::Linear(m) => m.predict(x),
            FittedRegressor::Knn(m) => m.predict(x),
            FittedRegressor::Forest(m) => m.predict(x),
        }
    }
}

/// Fits a single-output estimator. `config.degree` is not applied here.
pub fn fit_regressor(
    regressor: &Regressor,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    config: &FitConfig,
) -> Result<FittedRegressor> {
    Ok(match regressor {
        Regressor::Knn { k } => FittedRegressor::Knn(fit_knn(x, y, *k)?),
        Regressor::ExtraTrees(p) => FittedRegressor::Forest(fit_forest(x, y, p, config.seed)?),
        r => FittedRegressor::Linear(fit_linear(x, y, r.penalty().expect("linear kind"), config)?),
    })
}
