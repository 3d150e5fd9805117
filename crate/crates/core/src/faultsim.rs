//! Fault injection and transfer simulation.
//!
//! Each component carries an independent per-transfer corruption
//! probability. Host corruption (files at rest) and interface corruption
//! (packets in flight) are the same event here: a Bernoulli trial per
//! transfer passing through the component. A path's failure probability is
//! therefore
//!
//! ```text
//! P(path fails) = 1 - prod_{j in route} (1 - e_j)
//! -ln(1 - P)    = sum_{j in route} -ln(1 - e_j)
//! ```
//!
//! The second line is the log-linear form used by classic tomography; it is
//! kept here as a cross-check, the localizer never sees routes.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_table_file, write_table_file};
use crate::seed::{derive_seed, rng_from};
use crate::topology::{compute_routes, RoutingTable, Topology};

/// Per-component corruption probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultAssignment {
    error_prob: Vec<f64>,
}

impl FaultAssignment {
    pub fn new(error_prob: Vec<f64>) -> Result<Self> {
        if let Some(p) = error_prob.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("error probability {p} outside [0, 1]")));
        }
        Ok(FaultAssignment { error_prob })
    }

    pub fn healthy(n_components: usize) -> Self {
        FaultAssignment {
            error_prob: vec![0.0; n_components],
        }
    }

    /// Only `component` is faulty, with probability `p`.
    pub fn single(n_components: usize, component: usize, p: f64) -> Result<Self> {
        if component >= n_components {
            return Err(Error::invalid(format!("component {component} out of range")));
        }
        let mut v = vec![0.0; n_components];
        v[component] = p;
        Self::new(v)
    }

    pub fn error_prob(&self) -> &[f64] {
        &self.error_prob
    }

    pub fn len(&self) -> usize {
        self.error_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.error_prob.is_empty()
    }
}

/// `sum_j ln(1 - e_j)` over the route; `-inf` if some component always corrupts.
pub fn log_survival(route: &[usize], fault: &FaultAssignment) -> f64 {
    route.iter().map(|&c| (-fault.error_prob[c]).ln_1p()).sum()
}

/// Exact probability that a transfer along `route` is corrupted.
pub fn path_failure_probability(route: &[usize], fault: &FaultAssignment) -> f64 {
    -log_survival(route, fault).exp_m1()
}

/// Runs `transfers` independent transfers along one route and returns how
/// many were corrupted.
pub fn simulate_route<R: Rng + ?Sized>(
    route: &[usize],
    fault: &FaultAssignment,
    transfers: u64,
    rng: &mut R,
) -> u64 {
    let probs: Vec<f64> = route
        .iter()
        .map(|&c| fault.error_prob[c])
        .filter(|&p| p > 0.0)
        .collect();
    if probs.is_empty() {
        return 0;
    }
    let mut corrupted = 0;
    for _ in 0..transfers {
        // Components are visited in route order; the first corruption ends
        // the transfer.
        if probs.iter().any(|&p| rng.gen::<f64>() < p) {
            corrupted += 1;
        }
    }
    corrupted
}

/// One feature row: the corrupted fraction of `transfers_per_pair` transfers
/// for every path, in path-index order.
pub fn simulate_transfers(
    routes: &RoutingTable,
    fault: &FaultAssignment,
    transfers_per_pair: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    if transfers_per_pair == 0 {
        return Err(Error::invalid("transfers_per_pair must be positive"));
    }
    let mut rng = rng_from(seed);
    let n = f64::from(transfers_per_pair);
    Ok(routes
        .routes()
        .map(|r| simulate_route(r, fault, u64::from(transfers_per_pair), &mut rng) as f64 / n)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub error_grid: Vec<f64>,
    pub transfers_per_pair: u32,
    pub rounds_per_cell: u32,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            error_grid: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            transfers_per_pair: 100,
            rounds_per_cell: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub topology: String,
    pub seed: u64,
    pub transfers_per_pair: u32,
    pub rounds_per_cell: u32,
    pub error_grid: Vec<f64>,
    /// How each sample's simulation seed was obtained.
    pub sample_seed: String,
}

/// Labeled samples: `features[i, p]` is the failure rate observed on path `p`,
/// `labels[i, c]` the probability injected at component `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Array2<f64>,
    pub path_labels: Vec<String>,
    pub component_labels: Vec<String>,
    pub provenance: Provenance,
}

/// Seed of the sample injecting grid value `grid_index` at `component` in
/// round `round`.
pub fn sample_seed(seed: u64, component: usize, grid_index: usize, round: u32) -> u64 {
    derive_seed(seed, &[component as u64, grid_index as u64, u64::from(round)])
}

/// Injects every grid value at every component in turn, `rounds_per_cell`
/// times each. Samples are ordered by component, then grid value, then round.
pub fn generate_dataset(topology: &Topology, params: &GenerationParams) -> Result<Dataset> {
    if params.error_grid.is_empty() {
        return Err(Error::invalid("error grid is empty"));
    }
    if let Some(p) = params.error_grid.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::invalid(format!("grid value {p} outside (0, 1]")));
    }
    if params.transfers_per_pair == 0 {
        return Err(Error::invalid("transfers_per_pair must be positive"));
    }
    if params.rounds_per_cell == 0 {
        return Err(Error::invalid("rounds_per_cell must be positive"));
    }

    let routes = compute_routes(topology)?;
    let n_comp = topology.component_list().len();
    let n_paths = routes.path_index().len();

    let cells: Vec<(usize, usize, u32)> = (0..n_comp)
        .flat_map(|c| {
            (0..params.error_grid.len())
                .flat_map(move |g| (0..params.rounds_per_cell).map(move |r| (c, g, r)))
        })
        .collect();

    let rows: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(c, g, r)| {
            let fault = FaultAssignment::single(n_comp, c, params.error_grid[g])?;
            let seed = sample_seed(params.seed, c, g, r);
            simulate_transfers(&routes, &fault, params.transfers_per_pair, seed)
        })
        .collect::<Result<_>>()?;

    let mut features = Array2::zeros((cells.len(), n_paths));
    let mut labels = Array2::zeros((cells.len(), n_comp));
    for (i, (row, &(c, g, _))) in rows.iter().zip(&cells).enumerate() {
        features.row_mut(i).assign(&ndarray::ArrayView1::from(row.as_slice()));
        labels[[i, c]] = params.error_grid[g];
    }

    Ok(Dataset {
        features,
        labels,
        path_labels: routes.path_index().labels(),
        component_labels: topology.component_labels(),
        provenance: Provenance {
            topology: topology.name().to_string(),
            seed: params.seed,
            transfers_per_pair: params.transfers_per_pair,
            rounds_per_cell: params.rounds_per_cell,
            error_grid: params.error_grid.clone(),
            sample_seed: "derive_seed(seed, [component, grid_index, round])".into(),
        },
    })
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    /// Index of the (single) faulty component of every sample.
    pub fn fault_components(&self) -> Vec<usize> {
        self.labels
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: self.labels.select(Axis(0), rows),
            path_labels: self.path_labels.clone(),
            component_labels: self.component_labels.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes `features.csv`, `labels.csv` and `provenance.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_table_file(&dir.join("features.csv"), &self.path_labels, &self.features)?;
        write_table_file(&dir.join("labels.csv"), &self.component_labels, &self.labels)?;
        fs::write(
            dir.join("provenance.json"),
            serde_json::to_string_pretty(&self.provenance)? + "\n",
        )?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Dataset> {
        let f = read_table_file(&dir.join("features.csv"))?;
        let l = read_table_file(&dir.join("labels.csv"))?;
        if f.values.nrows() != l.values.nrows() {
            return Err(Error::ShapeMismatch {
                expected: (f.values.nrows(), l.values.ncols()),
                found: l.values.dim(),
            });
        }
        if f.values.iter().chain(l.values.iter()).any(|v| v.is_nan()) {
            return Err(Error::MissingValues);
        }
        let provenance = serde_json::from_str(&fs::read_to_string(dir.join("provenance.json"))?)?;
        Ok(Dataset {
            features: f.values,
            labels: l.values,
            path_labels: f.headers,
            component_labels: l.headers,
            provenance,
        })
    }
}
