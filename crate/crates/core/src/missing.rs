//! Missing-measurement emulation.
//!
//! A [`Mask`] marks each cell observed (`true`) or missing. Masks are drawn
//! without looking at the data (missing completely at random), either per
//! cell or per column. Applying a mask replaces the missing cells with
//! [`MISSING`], a NaN sentinel that no valid rate can take.

use std::io::Write;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

pub const MISSING: f64 = f64::NAN;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskMode {
    /// Every cell is dropped independently.
    #[default]
    #[serde(rename = "mcar-cell")]
    Cell,
    /// Whole columns are dropped; at least one column survives.
    #[serde(rename = "column-drop")]
    Column,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcar-cell" | "cell" => Ok(MaskMode::Cell),
            "column-drop" | "column" => Ok(MaskMode::Column),
            _ => Err(Error::invalid(format!("unknown mask mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    pub observed: Array2<bool>,
    pub mode: MaskMode,
    pub rate: f64,
    pub seed: u64,
}

impl Mask {
    pub fn all_observed(rows: usize, cols: usize) -> Self {
        Mask {
            observed: Array2::from_elem((rows, cols), true),
            mode: MaskMode::Cell,
            rate: 0.0,
            seed: 0,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.observed.dim()
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.missing_count() as f64 / self.observed.len() as f64
    }

    /// 0/1 audit CSV, `1` meaning observed.
    pub fn write_csv<W: Write>(&self, out: W, headers: &[String]) -> Result<()> {
        let values = self.observed.mapv(|o| if o { 1.0 } else { 0.0 });
        crate::io::write_table(out, headers, &values)
    }
}

pub fn sample_mask(rows: usize, cols: usize, rate: f64, mode: MaskMode, seed: u64) -> Result<Mask> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("cannot mask an empty matrix"));
    }
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("missing rate {rate} outside [0, 1)")));
    }
    let mut rng = rng_from(seed);
    let observed = match mode {
        MaskMode::Cell => Array2::from_shape_simple_fn((rows, cols), || rng.gen::<f64>() >= rate),
        MaskMode::Column => {
            let keep = loop {
                let keep: Vec<bool> = (0..cols).map(|_| rng.gen::<f64>() >= rate).collect();
                if keep.iter().any(|&k| k) {
                    break keep;
                }
            };
            Array2::from_shape_fn((rows, cols), |(_, j)| keep[j])
        }
    };
    Ok(Mask {
        observed,
        mode,
        rate,
        seed,
    })
}

/// Values with [`MISSING`] at unobserved cells, plus the observation pattern.
#[derive(Clone, Debug)]
pub struct MaskedMatrix {
    values: Array2<f64>,
    observed: Array2<bool>,
}

impl MaskedMatrix {
    /// Reads the pattern off the values: NaN cells are missing.
    pub fn from_values(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::NonFinite);
        }
        let observed = values.mapv(|v| !v.is_nan());
        Ok(MaskedMatrix { values, observed })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn observed(&self) -> &Array2<bool> {
        &self.observed
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn is_observed(&self, row: usize, col: usize) -> bool {
        self.observed[[row, col]]
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    /// Stacks `self` on top of `other`.
    pub fn stack(&self, other: &MaskedMatrix) -> Result<MaskedMatrix> {
        if self.values.ncols() != other.values.ncols() {
            return Err(Error::ShapeMismatch {
                expected: (other.values.nrows(), self.values.ncols()),
                found: other.dim(),
            });
        }
        let values = ndarray::concatenate![ndarray::Axis(0), self.values, other.values];
        let observed = ndarray::concatenate![ndarray::Axis(0), self.observed, other.observed];
        Ok(MaskedMatrix { values, observed })
    }
}

pub fn apply_mask(x: &Array2<f64>, mask: &Mask) -> Result<MaskedMatrix> {
    if x.dim() != mask.dim() {
        return Err(Error::ShapeMismatch {
            expected: x.dim(),
            found: mask.dim(),
        });
    }
    let mut values = x.clone();
    ndarray::Zip::from(&mut values)
        .and(&mask.observed)
        .for_each(|v, &o| {
            if !o {
                *v = MISSING;
            }
        });
    Ok(MaskedMatrix {
        values,
        observed: mask.observed.clone(),
    })
}
