use proptest::prelude::*;
use spreadcast_core::deepar::{DistParams, Likelihood};
use spreadcast_core::dimreduce::{distance_matrix, pca_fit, pca_transform, silhouette_width};
use spreadcast_core::evaluation::{check_loss, dm_test, mean_check_loss, rmse, r2, smape};
use spreadcast_core::gbm::{fit_regression_tree, gbm_fit, gbm_predict};
use spreadcast_core::gkg::{format_gkg_instant, parse_gkg_instant};
use spreadcast_core::stats::quantile;
use spreadcast_core::term_structure::robust_scale;

fn finite() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

fn level() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.1, 0.3, 0.5, 0.7, 0.9])
}

proptest! {
    #[test]
    fn check_loss_nonnegative_and_zero_only_at_zero(z in finite(), q in 0.01..0.99f64) {
        let l = check_loss(z, q);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, z == 0.0);
    }

    #[test]
    fn check_loss_is_convex(a in finite(), b in finite(), t in 0.0..1.0f64, q in 0.01..0.99f64) {
        let mid = check_loss(t * a + (1.0 - t) * b, q);
        prop_assert!(mid <= t * check_loss(a, q) + (1.0 - t) * check_loss(b, q) + 1e-9);
    }

    #[test]
    // with n = 10k + 1 every level in the grid falls on an order statistic
    fn sample_quantile_minimises_check_loss(
        ys in prop::sample::select(vec![11usize, 21, 51, 101]).prop_flat_map(|n| prop::collection::vec(finite(), n)),
        q in level(),
    ) {
        let best = quantile(&ys, q);
        let at = |c: f64| mean_check_loss(&ys, &vec![c; ys.len()], q).unwrap();
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for k in 0..=200 {
            let c = lo + (hi - lo) * k as f64 / 200.0;
            prop_assert!(at(best) <= at(c) + 1e-9);
        }
    }

    #[test]
    fn metrics_ignore_pair_order(pairs in prop::collection::vec((finite(), finite()), 2..30), seed in any::<u64>()) {
        let (y, f): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
        let mut idx: Vec<usize> = (0..y.len()).collect();
        let n = idx.len();
        for i in 0..n {
            idx.swap(i, (seed as usize).wrapping_mul(i + 7) % n);
        }
        let y2: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let f2: Vec<f64> = idx.iter().map(|&i| f[i]).collect();
        prop_assert!((rmse(&y, &f).unwrap() - rmse(&y2, &f2).unwrap()).abs() < 1e-9);
        let s = smape(&y, &f).unwrap();
        prop_assert!((s - smape(&y2, &f2).unwrap()).abs() < 1e-9);
        prop_assert!((0.0..=2.0).contains(&s));
        if let (Ok(a), Ok(b)) = (r2(&y, &f), r2(&y2, &f2)) {
            prop_assert!((a - b).abs() < 1e-7 * a.abs().max(1.0));
        }
    }

    #[test]
    fn dm_is_antisymmetric(pairs in prop::collection::vec((0.0..5.0f64, 0.0..5.0f64), 3..60)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let ab = dm_test(&a, &b, 1).unwrap();
        let ba = dm_test(&b, &a, 1).unwrap();
        prop_assert_eq!(ab.statistic, -ba.statistic);
        prop_assert!(ab.long_run_variance >= 0.0);
    }

    #[test]
    fn head_keeps_scale_positive(raw in prop::collection::vec(-800.0..800.0f64, 3)) {
        let g = DistParams::from_raw(Likelihood::Gaussian, &raw[..2]);
        let t = DistParams::from_raw(Likelihood::StudentT, &raw);
        prop_assert!(g.sigma > 0.0 && t.sigma > 0.0);
        prop_assert!(t.nu.unwrap() > 2.0);
    }

    #[test]
    fn gkg_instant_round_trips(secs in 1_420_070_400i64..1_893_456_000i64) {
        let t = chrono::DateTime::from_timestamp(secs, 0).unwrap().naive_utc();
        prop_assert_eq!(parse_gkg_instant(&format_gkg_instant(&t)), Some(t));
    }

    #[test]
    fn robust_scale_centres_median(xs in prop::collection::vec(finite(), 4..50)) {
        if let Ok((scaled, state)) = robust_scale(&xs) {
            prop_assert!(quantile(&scaled, 0.5).abs() < 1e-9);
            for (s, x) in scaled.iter().zip(&xs) {
                prop_assert!((state.invert(*s) - x).abs() < 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn silhouette_in_unit_interval(points in prop::collection::vec(prop::collection::vec(finite(), 2), 4..20), k in 2usize..4) {
        let n = points.len();
        let assignments: Vec<usize> = (0..n).map(|i| i % k).collect();
        let d = distance_matrix(&points);
        let (w, avg) = silhouette_width(&assignments, &d).unwrap();
        prop_assert!(w.iter().all(|v| (-1.0..=1.0).contains(v)));
        prop_assert!((-1.0..=1.0).contains(&avg));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pca_components_orthonormal(rows in prop::collection::vec(prop::collection::vec(finite(), 4), 8..30)) {
        let model = pca_fit(&rows, 3, true).unwrap();
        for (i, a) in model.components.iter().enumerate() {
            for (j, b) in model.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                prop_assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-8);
            }
        }
        prop_assert!(model.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        let scores = pca_transform(&model, &rows).unwrap();
        let n = scores.len() as f64;
        for a in 0..model.n_components {
            for b in 0..a {
                let cov: f64 = scores.iter().map(|s| s[a] * s[b]).sum::<f64>() / (n - 1.0);
                prop_assert!(cov.abs() < 1e-8);
            }
        }
    }

    #[test]
    fn boosting_training_loss_never_rises(
        rows in prop::collection::vec((finite(), finite(), finite()), 10..60),
        depth in 1usize..6,
        lr in 0.01..1.0f64,
    ) {
        let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let m = gbm_fit(&x, &y, depth, lr, 20).unwrap();
        prop_assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(m.trees.iter().all(|t| t.depth() <= depth));
        let pred = gbm_predict(&m, &x);
        let mse = pred.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64;
        prop_assert!((mse - m.train_loss[20]).abs() < 1e-9 * mse.max(1.0));
    }

    #[test]
    fn tree_ignores_row_order(rows in prop::collection::vec((0u8..6, 0u8..6, finite()), 5..40)) {
        let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0 as f64, r.1 as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let a = fit_regression_tree(&x, &y, 3).unwrap();
        let xr: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
        let yr: Vec<f64> = y.iter().rev().cloned().collect();
        let b = fit_regression_tree(&xr, &yr, 3).unwrap();
        for row in &x {
            prop_assert!((a.predict(row) - b.predict(row)).abs() < 1e-9);
        }
    }
}
