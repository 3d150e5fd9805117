use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Output width of [`polynomial_features`] for `n` inputs.
pub fn polynomial_width(n: usize, degree: u32) -> usize {
    match degree {
        1 => n,
        _ => n + n + n * n.saturating_sub(1) / 2,
    }
}

/// Degree 1 returns `x` unchanged. Degree 2 appends all squares, then all
/// pairwise products `x_i * x_j` (`i < j`, lexicographic). No bias column.
pub fn polynomial_features(x: ArrayView2<f64>, degree: u32) -> Result<Array2<f64>> {
    match degree {
        1 => Ok(x.to_owned()),
        2 => {
            let (rows, n) = x.dim();
            let mut out = Array2::zeros((rows, polynomial_width(n, 2)));
            for (r, row) in x.outer_iter().enumerate() {
                let mut o = out.row_mut(r);
                for j in 0..n {
                    o[j] = row[j];
                    o[n + j] = row[j] * row[j];
                }
                let mut k = 2 * n;
                for i in 0..n {
                    for j in i + 1..n {
                        o[k] = row[i] * row[j];
                        k += 1;
                    }
                }
            }
            Ok(out)
        }
        0 => Err(Error::invalid("polynomial degree must be >= 1")),
        d => Err(Error::invalid(format!("polynomial degree {d} not supported (max 2)"))),
    }
}
