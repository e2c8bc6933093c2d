//! Production numerics against independent reference implementations.

mod support;

use airgam::analysis::fit_mixture;
use airgam::evaluation::{r2, rmse};
use airgam::features::{fit_pca, FeatureSpec, Source};
use airgam::gam::basis::{bspline_basis, clamped_knots, CUBIC};
use airgam::gam::fit;
use airgam::selection::vif;
use airgam::FitConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

/// Cyclic Jacobi eigen-solver for a symmetric 4x4 matrix: top eigenpair.
#[allow(clippy::needless_range_loop)]
fn jacobi_top(mut a: [[f64; 4]; 4]) -> (f64, [f64; 4]) {
    let mut v = [[0.0; 4]; 4];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..100 {
        let off: f64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| a[i][j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..4 {
            for q in p + 1..4 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let top = (0..4).max_by(|&i, &j| a[i][i].total_cmp(&a[j][j])).unwrap();
    (a[top][top], [v[0][top], v[1][top], v[2][top], v[3][top]])
}

fn correlation(rows: &[[f64; 4]]) -> [[f64; 4]; 4] {
    let n = rows.len() as f64;
    let col = |j: usize| rows.iter().map(move |r| r[j]);
    let mean: Vec<f64> = (0..4).map(|j| col(j).sum::<f64>() / n).collect();
    let mut c = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in 0..4 {
            let sab: f64 = rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum();
            let saa: f64 = col(a).map(|x| (x - mean[a]).powi(2)).sum();
            let sbb: f64 = col(b).map(|x| (x - mean[b]).powi(2)).sum();
            c[a][b] = sab / (saa * sbb).sqrt();
        }
    }
    c
}

#[test]
fn pca_matches_jacobi() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<[f64; 4]> = (0..300)
            .map(|_| {
                let season: f64 = rng.random_range(-1.0..1.0);
                let t = 10.0 + 9.0 * season + rng.random_range(-3.0..3.0);
                let rh = 70.0 - 10.0 * season + rng.random_range(-8.0..8.0);
                [rng.random_range(0.0..5.0), rh, t - (100.0 - rh) / 5.0, t]
            })
            .collect();
        let model = fit_pca(&rows).unwrap();
        let (lambda, mut v) = jacobi_top(correlation(&rows));
        if v[3] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        assert!(
            (model.eigenvalue - lambda).abs() < 1e-9,
            "{} vs {lambda}",
            model.eigenvalue
        );
        for j in 0..4 {
            assert!(
                (model.loading[j] - v[j]).abs() < 1e-8,
                "loading {j}: {:?} vs {v:?}",
                model.loading
            );
        }
        assert!((model.explained_variance_ratio - lambda / 4.0).abs() < 1e-9);
    }
}

#[test]
fn vif_matches_two_regressor_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + rng.random_range(-0.5..0.5)).collect();
    let (a, b) = ols_line(&x, &y);
    let my = y.iter().sum::<f64>() / 200.0;
    let ss_res: f64 = x.iter().zip(&y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let expected = 1.0 / (ss_res / ss_tot);
    let got = vif(&y, &[&x]).unwrap();
    assert!((got - expected).abs() < 1e-9 * expected, "{got} vs {expected}");
    assert_eq!(vif(&y, &[]).unwrap(), 1.0);
    let twice: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
    assert!(vif(&twice, &[&x]).unwrap().is_infinite());
}

#[test]
fn metric_hand_values() {
    assert!((rmse(&[3.0, 3.0], &[1.0, 5.0]).unwrap() - 2.0).abs() < 1e-15);
    assert!((r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
    assert!((r2(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap()).abs() < 1e-15);
}

#[test]
fn intercept_and_linear_smooth_reproduce_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..12.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.3 * v + rng.random_range(-0.2..0.2)).collect();
    let spec = FeatureSpec::new(Source::Ws);
    let config = FitConfig {
        lambda_grid: vec![1e8],
        ..FitConfig::default()
    };
    let model = fit(&design(y.clone(), vec![(spec, x.clone())]), &[spec], &config).unwrap();
    let (a, b) = ols_line(&x, &y);
    for v in [0.5, 3.0, 6.0, 11.5] {
        let fitted = model.intercept + model.smooths[0].eval(v).0;
        assert!((fitted - (a + b * v)).abs() < 1e-3, "at {v}: {fitted} vs {}", a + b * v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_matches_cox_de_boor(
        interior in prop::collection::btree_set(1u32..999, 0..8),
        xs in prop::collection::vec(0.0f64..1.0, 1..50),
    ) {
        let interior: Vec<f64> = interior.into_iter().map(|k| k as f64 / 1000.0).collect();
        let knots = clamped_knots(0.0, 1.0, &interior, CUBIC);
        let b = bspline_basis(&xs, &knots, CUBIC).unwrap();
        for (r, &x) in xs.iter().enumerate() {
            let total: f64 = b.row(r).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for j in 0..b.ncols() {
                prop_assert!((b[(r, j)] - cox_de_boor(&knots, j, CUBIC, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mixture_matches_grid(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [ld, pre, meas] = mixture_instance(&mut rng);
        let exact = fit_mixture(&ld, &pre, &meas).unwrap();
        let (ga, gf) = mixture_grid(&ld, &pre, &meas, 1e-3);
        prop_assert!(exact.objective <= gf + 1e-12);
        prop_assert!((exact.alpha - ga).abs() <= 1e-3 + 1e-12 || (exact.objective - gf).abs() < 1e-9);
        prop_assert!((exact.objective - mixture_mad(&ld, &pre, &meas, exact.alpha)).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&exact.alpha));
    }
}
