use std::collections::HashSet;

use faultloc::faultsim::{
    generate_dataset, path_failure_probability, sample_seed, simulate_transfers, FaultAssignment, GenerationParams,
};
use faultloc::io::{read_table, write_table};
use faultloc::missing::{apply_mask, sample_mask, MaskMode};
use faultloc::ndarray::{Array1, Array2, Axis};
use faultloc::regress::{fit_forest, fit_knn, ForestParams};
use faultloc::seed::rng_from;
use faultloc::topology::{build_preset, build_random, compute_routes, RandomTopologyParams};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_params() -> impl Strategy<Value = RandomTopologyParams> {
    (2usize..8, 1usize..8, 0.2f64..0.9).prop_map(|(hosts, routers, edge_probability)| RandomTopologyParams {
        hosts,
        routers,
        edge_probability,
        ..Default::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn routes_are_simple_and_pure(params in random_params(), seed in any::<u64>()) {
        let Ok(t) = build_random(&params, seed) else { return Ok(()) };
        let a = compute_routes(&t).unwrap();
        let b = compute_routes(&t).unwrap();
        prop_assert_eq!(a.path_index().len(), params.hosts * (params.hosts - 1));
        for (ra, rb) in a.routes().zip(b.routes()) {
            prop_assert_eq!(ra, rb);
            let distinct: HashSet<_> = ra.iter().collect();
            prop_assert_eq!(distinct.len(), ra.len());
        }
    }

    #[test]
    fn log_linear_identity(seed in any::<u64>(), faults in 1usize..6) {
        // Exact up to cancellation in 1 - p; the slack grows as 1 - p shrinks.
        let t = build_preset("internet2-like", 0).unwrap();
        let routes = compute_routes(&t).unwrap();
        let n = t.component_list().len();
        let mut rng = rng_from(seed);
        let route = routes.route_at(rng.gen_range(0..routes.path_index().len()));
        let mut e = vec![0.0; n];
        for _ in 0..faults {
            e[route[rng.gen_range(0..route.len())]] = rng.gen::<f64>() * 0.99;
        }
        let fault = FaultAssignment::new(e).unwrap();
        let p = path_failure_probability(route, &fault);
        let lhs = -(1.0 - p).ln();
        let rhs: f64 = route.iter().map(|&c| -(1.0 - fault.error_prob()[c]).ln()).sum();
        let slack = 1e-12 + 4.0 * f64::EPSILON / (1.0 - p);
        prop_assert!((lhs - rhs).abs() <= slack, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn masks_are_deterministic_and_faithful(rows in 1usize..30, cols in 1usize..30, rate in 0.0f64..0.95, seed in any::<u64>(), column in any::<bool>()) {
        let mode = if column { MaskMode::Column } else { MaskMode::Cell };
        let a = sample_mask(rows, cols, rate, mode, seed).unwrap();
        let b = sample_mask(rows, cols, rate, mode, seed).unwrap();
        prop_assert_eq!(&a.observed, &b.observed);
        let mut rng = rng_from(seed ^ 1);
        let x = Array2::from_shape_simple_fn((rows, cols), || rng.gen::<f64>());
        let m = apply_mask(&x, &a).unwrap();
        for ((i, j), &o) in a.observed.indexed_iter() {
            if o {
                prop_assert_eq!(m.values()[[i, j]].to_bits(), x[[i, j]].to_bits());
            } else {
                prop_assert!(m.values()[[i, j]].is_nan());
            }
        }
    }

    #[test]
    fn fits_ignore_row_order(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let x = Array2::from_shape_simple_fn((40, 3), || rng.gen::<f64>());
        let y: Array1<f64> = x.rows().into_iter().map(|r| r[0] - 2.0 * r[1] + r[2] * r[2]).collect();
        let mut perm: Vec<usize> = (0..40).collect();
        perm.shuffle(&mut rng);
        let (xp, yp) = (x.select(Axis(0), &perm), y.select(Axis(0), &perm));
        let q = Array2::from_shape_simple_fn((10, 3), || rng.gen::<f64>());

        let a = fit_knn(x.view(), y.view(), 3).unwrap().predict(q.view()).unwrap();
        let b = fit_knn(xp.view(), yp.view(), 3).unwrap().predict(q.view()).unwrap();
        prop_assert!((&a - &b).iter().all(|d| d.abs() < 1e-12));

        let params = ForestParams { n_trees: 8, ..Default::default() };
        let a = fit_forest(x.view(), y.view(), &params, 5).unwrap().predict(q.view()).unwrap();
        let b = fit_forest(xp.view(), yp.view(), &params, 5).unwrap().predict(q.view()).unwrap();
        prop_assert!((&a - &b).iter().all(|d| d.abs() < 1e-9));
    }
}

#[test]
fn features_only_move_on_crossing_paths() {
    let t = build_preset("internet2-like", 0).unwrap();
    let routes = compute_routes(&t).unwrap();
    let params = GenerationParams {
        error_grid: vec![0.9],
        ..Default::default()
    };
    let d = generate_dataset(&t, &params).unwrap();
    let faulty = d.fault_components();
    for (i, row) in d.features.rows().into_iter().enumerate() {
        let labels = d.labels.row(i);
        assert_eq!(labels.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(labels[faulty[i]], 0.9);
        for (p, &v) in row.iter().enumerate() {
            if v != 0.0 {
                assert!(routes.route_at(p).contains(&faulty[i]));
            }
        }
    }
}

#[test]
fn dataset_rows_match_serial_simulation() {
    let t = build_preset("ring", 0).unwrap();
    let routes = compute_routes(&t).unwrap();
    let params = GenerationParams {
        rounds_per_cell: 2,
        seed: 17,
        ..Default::default()
    };
    let d = generate_dataset(&t, &params).unwrap();
    let n = t.component_list().len();
    let mut i = 0;
    for c in 0..n {
        for (g, &p) in params.error_grid.iter().enumerate() {
            for round in 0..params.rounds_per_cell {
                let fault = FaultAssignment::single(n, c, p).unwrap();
                let row = simulate_transfers(&routes, &fault, params.transfers_per_pair, sample_seed(17, c, g, round)).unwrap();
                assert_eq!(d.features.row(i).to_vec(), row);
                i += 1;
            }
        }
    }
    assert_eq!(i, d.n_samples());
}

#[test]
fn generated_csv_round_trips_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let t = build_preset("internet2-like", 0).unwrap();
    let d = generate_dataset(&t, &GenerationParams::default()).unwrap();
    d.write_dir(dir.path()).unwrap();
    for f in ["features.csv", "labels.csv"] {
        let bytes = std::fs::read(dir.path().join(f)).unwrap();
        let table = read_table(bytes.as_slice()).unwrap();
        let mut again = Vec::new();
        write_table(&mut again, &table.headers, &table.values).unwrap();
        assert!(again == bytes, "{f} changed on round trip");
    }
    let back = faultloc::faultsim::Dataset::read_dir(dir.path()).unwrap();
    assert_eq!(back, d);
}
