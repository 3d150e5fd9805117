use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::linear::check_design;
use crate::error::{Error, Result};

/// Brute-force k-nearest-neighbours regressor (Euclidean, unweighted mean).
/// Targets may have several columns; neighbours are shared across them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    features: Array2<f64>,
    targets: Array2<f64>,
    k: usize,
}

pub fn fit_knn(x: ArrayView2<f64>, y: ArrayView1<f64>, k: usize) -> Result<KnnModel> {
    fit_knn_multi(x, y.insert_axis(Axis(1)), k)
}

pub fn fit_knn_multi(x: ArrayView2<f64>, y: ArrayView2<f64>, k: usize) -> Result<KnnModel> {
    check_design(x, y.nrows())?;
    if k == 0 || k > x.nrows() {
        return Err(Error::invalid(format!(
            "k = {k} must lie in 1..={} (training rows)",
            x.nrows()
        )));
    }
    Ok(KnnModel {
        features: x.to_owned(),
        targets: y.to_owned(),
        k,
    })
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Training rows closest to `q`; equal distances go to the lower row index.
    pub fn neighbors(&self, q: ArrayView1<f64>) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .features
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let s: f64 = row.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (s, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| -> Ordering { a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) };
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_unstable_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_multi(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.features.ncols() {
            return Err(Error::ShapeMismatch {
                expected: (x.nrows(), self.features.ncols()),
                found: x.dim(),
            });
        }
        let rows: Vec<Array1<f64>> = (0..x.nrows())
            .into_par_iter()
            .map(|i| {
                let nb = self.neighbors(x.row(i));
                self.targets.select(Axis(0), &nb).mean_axis(Axis(0)).expect("k >= 1")
            })
            .collect();
        let mut out = Array2::zeros((x.nrows(), self.targets.ncols()));
        for (i, r) in rows.into_iter().enumerate() {
            out.row_mut(i).assign(&r);
        }
        Ok(out)
    }

    /// Predictions for the first target column.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict_multi(x)?.column(0).to_owned())
    }
}
