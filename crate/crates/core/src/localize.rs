//! Inverse model from path failure rates to component failure probabilities.
//!
//! One regressor is trained per component on a shared (optionally
//! polynomial) feature space. A prediction is a score per component;
//! sorting the scores gives a ranking, and Top-k accuracy asks whether the
//! truly faulty component is among the first `k`.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::{
    fit_forest, fit_knn_multi, fit_linear_multi, polynomial_features, FitConfig, ForestModel, KnnModel, LinearModel,
    Regressor,
};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "outputs", rename_all = "kebab-case")]
pub enum LocalizerModels {
    Linear(Vec<LinearModel>),
    /// Neighbours are shared by all outputs, so a single model suffices.
    Knn(KnnModel),
    Forest(Vec<ForestModel>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Localizer {
    pub regressor: Regressor,
    pub degree: u32,
    /// Width of the raw feature rows accepted by [`Localizer::predict`].
    pub n_features: usize,
    pub n_components: usize,
    pub models: LocalizerModels,
}

/// Fits one output per column of `y`. Forest outputs use seed
/// `derive_seed(config.seed, [column])`.
pub fn train_localizer(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    regressor: &Regressor,
    config: &FitConfig,
) -> Result<Localizer> {
    config.validate()?;
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch {
            expected: (x.nrows(), y.ncols()),
            found: y.dim(),
        });
    }
    if y.ncols() == 0 {
        return Err(Error::invalid("label matrix has no columns"));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::MissingValues);
    }
    let design = polynomial_features(x, config.degree)?;

    let models = match regressor {
        Regressor::Knn { k } => LocalizerModels::Knn(fit_knn_multi(design.view(), y, *k)?),
        Regressor::ExtraTrees(params) => LocalizerModels::Forest(
            y.axis_iter(Axis(1))
                .enumerate()
                .map(|(c, col)| fit_forest(design.view(), col, params, derive_seed(config.seed, &[c as u64])))
                .collect::<Result<_>>()?,
        ),
        r => LocalizerModels::Linear(fit_linear_multi(
            design.view(),
            y,
            r.penalty().expect("linear kind"),
            config,
        )?),
    };

    Ok(Localizer {
        regressor: regressor.clone(),
        degree: config.degree,
        n_features: x.ncols(),
        n_components: y.ncols(),
        models,
    })
}

impl Localizer {
    /// Scores for every row of `x`: `n_rows x n_components`, unclamped.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::ShapeMismatch {
                expected: (x.nrows(), self.n_features),
                found: x.dim(),
            });
        }
        if x.iter().any(|v| v.is_nan()) {
            return Err(Error::MissingValues);
        }
        let design = polynomial_features(x, self.degree)?;
        match &self.models {
            LocalizerModels::Knn(m) => m.predict_multi(design.view()),
            LocalizerModels::Linear(ms) => {
                let mut out = Array2::zeros((x.nrows(), ms.len()));
                for (c, m) in ms.iter().enumerate() {
                    out.column_mut(c).assign(&m.predict(design.view())?);
                }
                Ok(out)
            }
            LocalizerModels::Forest(ms) => {
                let mut out = Array2::zeros((x.nrows(), ms.len()));
                for (c, m) in ms.iter().enumerate() {
                    out.column_mut(c).assign(&m.predict(design.view())?);
                }
                Ok(out)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn predict_failures(localizer: &Localizer, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    let row = x.insert_axis(Axis(0));
    Ok(localizer.predict(row)?.row(0).to_owned())
}

/// All components ordered by descending score; ties go to the lower index.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationRanking {
    pub order: Vec<usize>,
    pub scores: Array1<f64>,
}

impl LocalizationRanking {
    pub fn new(scores: Array1<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        LocalizationRanking { order, scores }
    }

    /// Position of `component` in the ranking (0 = most suspicious).
    pub fn rank_of(&self, component: usize) -> Option<usize> {
        self.order.iter().position(|&c| c == component)
    }
}

pub fn rank_all(scores: ArrayView2<f64>) -> Vec<LocalizationRanking> {
    scores
        .rows()
        .into_iter()
        .map(|r| LocalizationRanking::new(r.to_owned()))
        .collect()
}

pub fn top_k(scores: ArrayView1<f64>, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::invalid(format!("k = {k} must lie in 1..={}", scores.len())));
    }
    let mut order = LocalizationRanking::new(scores.to_owned()).order;
    order.truncate(k);
    Ok(order)
}

pub fn top_k_accuracy(rankings: &[LocalizationRanking], truth: &[usize], k: usize) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::invalid("no rankings to score"));
    }
    if rankings.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} rankings but {} labels",
            rankings.len(),
            truth.len()
        )));
    }
    let mut hits = 0usize;
    for (r, &t) in rankings.iter().zip(truth) {
        let n = r.order.len();
        if k == 0 || k > n {
            return Err(Error::invalid(format!("k = {k} must lie in 1..={n}")));
        }
        if t >= n {
            return Err(Error::invalid(format!("label {t} is not a component index")));
        }
        hits += usize::from(r.order[..k].contains(&t));
    }
    Ok(hits as f64 / rankings.len() as f64)
}

fn check_same_shape(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<()> {
    if pred.dim() != truth.dim() {
        return Err(Error::ShapeMismatch {
            expected: truth.dim(),
            found: pred.dim(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("empty score matrix"));
    }
    Ok(())
}

/// `1 - SS_res / SS_tot` over all cells jointly, with `SS_tot` taken about the
/// mean of every cell of `truth`.
pub fn score_r2(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let mean = truth.mean().expect("nonempty");
    let ss_tot: f64 = truth.iter().map(|&y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::ZeroVariance);
    }
    let ss_res: f64 = pred.iter().zip(truth.iter()).map(|(&p, &y)| (p - y) * (p - y)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn score_mse(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    check_same_shape(pred, truth)?;
    let ss: f64 = pred.iter().zip(truth.iter()).map(|(&p, &y)| (p - y) * (p - y)).sum();
    Ok(ss / truth.len() as f64)
}

/// Long-form ranking table: `sample_id,rank,component_id,score`, ranks from 1.
pub fn write_rankings_csv<W: Write>(out: W, rankings: &[LocalizationRanking], labels: &[String]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["sample_id", "rank", "component_id", "score"])?;
    for (s, r) in rankings.iter().enumerate() {
        for (rank, &c) in r.order.iter().enumerate() {
            let label = labels.get(c).cloned().unwrap_or_else(|| c.to_string());
            w.write_record([
                s.to_string(),
                (rank + 1).to_string(),
                label,
                crate::io::format_value(r.scores[c]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faultsim::{path_failure_probability, FaultAssignment};
    use crate::topology::{build_preset, compute_routes};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k(array![0.1, 0.9, 0.3].view(), 1).unwrap(), vec![1]);
        assert_eq!(top_k(array![0.5, 0.5].view(), 2).unwrap(), vec![0, 1]);
        let mut all = top_k(array![0.3, -1.0, 0.3, 2.0].view(), 4).unwrap();
        assert_eq!(all, vec![3, 0, 2, 1]);
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(top_k(array![1.0].view(), 0).is_err());
        assert!(top_k(array![1.0].view(), 2).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let r = rank_all(array![[0.9, 0.1, 0.0], [0.0, 0.2, 0.7]].view());
        assert_eq!(top_k_accuracy(&r, &[0, 2], 1).unwrap(), 1.0);
        assert_eq!(top_k_accuracy(&r, &[1, 0], 1).unwrap(), 0.0);
        assert_eq!(top_k_accuracy(&r, &[1, 0], 3).unwrap(), 1.0);
        assert_eq!(top_k_accuracy(&r, &[1, 1], 2).unwrap(), 1.0);
        assert!(top_k_accuracy(&[], &[], 1).is_err());
        assert!(top_k_accuracy(&r, &[0], 1).is_err());
        assert!(top_k_accuracy(&r, &[0, 5], 1).is_err());
    }

    #[test]
    fn random_rankings_hit_at_chance() {
        let (n, c, trials) = (10_000usize, 102usize, 10_000);
        let mut rng = crate::seed::rng_from(42);
        let rankings: Vec<_> = (0..trials)
            .map(|_| {
                let mut order: Vec<usize> = (0..c).collect();
                order.shuffle(&mut rng);
                let mut scores = Array1::zeros(c);
                for (pos, &comp) in order.iter().enumerate() {
                    scores[comp] = (c - pos) as f64;
                }
                LocalizationRanking::new(scores)
            })
            .collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        for k in 1..=4 {
            let p = k as f64 / c as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let acc = top_k_accuracy(&rankings, &truth, k).unwrap();
            assert!((acc - p).abs() <= 3.0 * sigma, "k={k}: {acc} vs {p}");
        }
    }

    #[test]
    fn score_examples() {
        let y = array![[0.0, 1.0], [1.0, 0.0]];
        let p = array![[0.0, 0.0], [1.0, 1.0]];
        assert_eq!(score_mse(p.view(), y.view()).unwrap(), 0.5);
        assert_eq!(score_r2(p.view(), y.view()).unwrap(), -1.0);
        assert_eq!(score_r2(y.view(), y.view()).unwrap(), 1.0);
        assert_eq!(score_mse(y.view(), y.view()).unwrap(), 0.0);
        let m = Array2::from_elem((2, 2), 0.5);
        assert_eq!(score_r2(m.view(), y.view()).unwrap(), 0.0);
        assert!(matches!(score_r2(y.view(), m.view()), Err(Error::ZeroVariance)));
        assert!(score_mse(y.view(), array![[1.0]].view()).is_err());
    }

    fn ring_noiseless() -> (Array2<f64>, Array2<f64>) {
        let topo = build_preset("ring", 0).unwrap();
        let routes = compute_routes(&topo).unwrap();
        let n = topo.component_list().len();
        let mut x = Array2::zeros((n, routes.path_index().len()));
        let mut y = Array2::zeros((n, n));
        for c in 0..n {
            let fault = FaultAssignment::single(n, c, 0.5).unwrap();
            for (p, r) in routes.routes().enumerate() {
                x[[c, p]] = path_failure_probability(r, &fault);
            }
            y[[c, c]] = 0.5;
        }
        (x, y)
    }

    #[test]
    fn noiseless_ring_is_recovered() {
        // Quadratic features: 90 columns for 16 samples, so the one-hot
        // targets are reachable.
        let (x, y) = ring_noiseless();
        let cfg = FitConfig {
            degree: 2,
            ..Default::default()
        };
        let loc = train_localizer(x.view(), y.view(), &Regressor::Lasso { lambda: 1e-6 }, &cfg).unwrap();
        let pred = loc.predict(x.view()).unwrap();
        let worst = (&pred - &y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 0.05, "worst training error {worst}");
        let truth: Vec<usize> = (0..y.nrows()).collect();
        assert_eq!(top_k_accuracy(&rank_all(pred.view()), &truth, 1).unwrap(), 1.0);
    }

    #[test]
    fn linear_features_cannot_interpolate_ring() {
        // Predictions span at most 12 + 1 dimensions while the targets are
        // 0.5 * I_16; the best rank-13 approximation leaves three singular
        // values of 0.5, so some entry errs by at least sqrt(0.75 / 256).
        let (x, y) = ring_noiseless();
        let bound = (0.75f64 / 256.0).sqrt();
        for reg in [Regressor::Lasso { lambda: 1e-6 }, Regressor::Ridge { lambda: 1e-6 }] {
            let loc = train_localizer(x.view(), y.view(), &reg, &FitConfig::default()).unwrap();
            let pred = loc.predict(x.view()).unwrap();
            let worst = (&pred - &y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst >= bound, "{reg}: {worst}");
        }
    }

    #[test]
    fn zero_label_column_predicts_zero() {
        let (x, mut y) = ring_noiseless();
        y.column_mut(3).fill(0.0);
        let loc = train_localizer(x.view(), y.view(), &Regressor::Ridge { lambda: 0.1 }, &FitConfig::default()).unwrap();
        let pred = loc.predict(x.view()).unwrap();
        assert!(pred.column(3).iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn all_kinds_train_and_round_trip() {
        let (x, y) = ring_noiseless();
        for reg in [
            Regressor::Ols,
            Regressor::Ridge { lambda: 0.01 },
            Regressor::Knn { k: 1 },
            Regressor::ExtraTrees(crate::regress::ForestParams {
                n_trees: 5,
                min_samples_leaf: 1,
                ..Default::default()
            }),
        ] {
            let cfg = FitConfig::default();
            let Ok(a) = train_localizer(x.view(), y.view(), &reg, &cfg) else {
                // OLS on 16 rows and 12 collinear-ish columns may be singular.
                assert_eq!(reg, Regressor::Ols);
                continue;
            };
            let b = train_localizer(x.view(), y.view(), &reg, &cfg).unwrap();
            assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
            let back = Localizer::from_json(&a.to_json().unwrap()).unwrap();
            assert_eq!(back.predict(x.view()).unwrap(), a.predict(x.view()).unwrap());
            assert_eq!(a.predict(x.view()).unwrap().dim(), (16, 16));
            let row = predict_failures(&a, x.row(2)).unwrap();
            assert_eq!(row, predict_failures(&a, x.row(2)).unwrap());
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (mut x, y) = ring_noiseless();
        let reg = Regressor::Ridge { lambda: 0.1 };
        let cfg = FitConfig::default();
        assert!(train_localizer(x.view(), y.slice(ndarray::s![..3, ..]), &reg, &cfg).is_err());
        let loc = train_localizer(x.view(), y.view(), &reg, &cfg).unwrap();
        assert!(loc.predict(x.slice(ndarray::s![.., ..3])).is_err());
        x[[0, 0]] = f64::NAN;
        assert!(matches!(train_localizer(x.view(), y.view(), &reg, &cfg), Err(Error::MissingValues)));
    }

    #[test]
    fn rankings_csv_layout() {
        let r = rank_all(array![[0.2, 0.7]].view());
        let mut buf = Vec::new();
        write_rankings_csv(&mut buf, &r, &["a".into(), "b".into()]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sample_id,rank,component_id,score\n0,1,b,0.7\n0,2,a,0.2\n"
        );
    }

    fn small_problem(seed: u64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let mut rng = crate::seed::rng_from(seed);
        let x = Array2::from_shape_simple_fn((30, 5), || rng.gen::<f64>());
        let y = Array2::from_shape_simple_fn((30, 4), || rng.gen::<f64>());
        let q = Array2::from_shape_simple_fn((6, 5), || rng.gen::<f64>());
        (x, y, q)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn accuracy_is_monotone_in_k(seed in any::<u64>()) {
            let mut rng = crate::seed::rng_from(seed);
            let s = Array2::from_shape_simple_fn((40, 8), || rng.gen_range(0..4) as f64);
            let truth: Vec<usize> = (0..40).map(|_| rng.gen_range(0..8)).collect();
            let r = rank_all(s.view());
            let accs: Vec<f64> = (1..=8).map(|k| top_k_accuracy(&r, &truth, k).unwrap()).collect();
            prop_assert!(accs.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(accs[7], 1.0);
        }

        #[test]
        fn linear_rankings_ignore_feature_scale(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let (x, y, q) = small_problem(seed);
            for reg in [Regressor::Ols, Regressor::Lasso { lambda: 0.0 }] {
                let cfg = FitConfig { tolerance: 1e-12, max_iterations: 100_000, ..Default::default() };
                let a = train_localizer(x.view(), y.view(), &reg, &cfg).unwrap();
                let b = train_localizer((&x * scale).view(), y.view(), &reg, &cfg).unwrap();
                let ra = rank_all(a.predict(q.view()).unwrap().view());
                let rb = rank_all(b.predict((&q * scale).view()).unwrap().view());
                for (u, v) in ra.iter().zip(&rb) {
                    prop_assert_eq!(&u.order[..1], &v.order[..1]);
                }
            }
        }

        #[test]
        fn joint_fit_equals_per_column(seed in any::<u64>()) {
            let (x, y, q) = small_problem(seed);
            let reg = Regressor::Lasso { lambda: 1e-3 };
            let cfg = FitConfig::default();
            let joint = train_localizer(x.view(), y.view(), &reg, &cfg).unwrap().predict(q.view()).unwrap();
            for c in 0..y.ncols() {
                let single = train_localizer(x.view(), y.slice(ndarray::s![.., c..c + 1]), &reg, &cfg).unwrap();
                let p = single.predict(q.view()).unwrap();
                prop_assert_eq!(p.column(0), joint.column(c));
            }
        }

        #[test]
        fn huge_lasso_penalty_degenerates_to_index_order(seed in any::<u64>()) {
            let (x, y, q) = small_problem(seed);
            let lmax = y.axis_iter(Axis(1))
                .map(|col| crate::regress::lasso_lambda_max(x.view(), col))
                .fold(0.0f64, f64::max);
            let loc = train_localizer(x.view(), y.view(), &Regressor::Lasso { lambda: lmax * 1.0001 }, &FitConfig::default()).unwrap();
            let LocalizerModels::Linear(ms) = &loc.models else { unreachable!() };
            prop_assert!(ms.iter().all(|m| m.weights.iter().all(|&w| w == 0.0)));
            let p = loc.predict(q.view()).unwrap();
            // Every row predicts the label means, identical across rows.
            for r in p.rows() {
                prop_assert_eq!(r, p.row(0));
            }
        }
    }
}
