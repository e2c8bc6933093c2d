//! Independent oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use airgam::features::{DesignColumn, DesignMatrix, FeatureSpec, Source};
use airgam::Field;
use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

/// Cox-de Boor recursion for `N_{i,p}(x)` with half-open spans and 0/0 = 0.
pub fn cox_de_boor(t: &[f64], i: usize, p: usize, x: f64) -> f64 {
    if p == 0 {
        return if t[i] <= x && x < t[i + 1] { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let a = t[i + p] - t[i];
    if a > 0.0 {
        v += (x - t[i]) / a * cox_de_boor(t, i, p - 1, x);
    }
    let b = t[i + p + 1] - t[i + 1];
    if b > 0.0 {
        v += (t[i + p + 1] - x) / b * cox_de_boor(t, i + 1, p - 1, x);
    }
    v
}

/// Closed-form simple regression `y = a + b x`.
pub fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Mean absolute deviation of the mixture at `alpha` over complete days.
pub fn mixture_mad(ld: &[Option<f64>], pre: &[Option<f64>], meas: &[Option<f64>], alpha: f64) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for i in 0..ld.len() {
        if let (Some(l), Some(p), Some(m)) = (ld[i], pre[i], meas[i]) {
            s += (m - (alpha * l + (1.0 - alpha) * p)).abs();
            n += 1;
        }
    }
    s / n as f64
}

/// Brute-force minimizer over `alpha = k * step`; the first of equal values wins.
pub fn mixture_grid(ld: &[Option<f64>], pre: &[Option<f64>], meas: &[Option<f64>], step: f64) -> (f64, f64) {
    let n = (1.0 / step).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=n {
        let a = k as f64 / n as f64;
        let f = mixture_mad(ld, pre, meas, a);
        if f < best.0 - 1e-13 {
            best = (f, a);
        }
    }
    (best.1, best.0)
}

/// Random mixture instance with some missing days.
pub fn mixture_instance(rng: &mut ChaCha8Rng) -> [Vec<Option<f64>>; 3] {
    let n = rng.random_range(5..80);
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for _ in 0..n {
        let pre: f64 = rng.random_range(10.0..60.0);
        let ld = pre * rng.random_range(0.3..1.1);
        let truth: f64 = rng.random_range(-0.3..1.3);
        let meas = truth * ld + (1.0 - truth) * pre + rng.random_range(-5.0..5.0);
        let drop = rng.random_range(0..20) == 0;
        out[0].push(Some(ld));
        out[1].push(if drop { None } else { Some(pre) });
        out[2].push(Some(meas));
    }
    out
}

pub fn design(response: Vec<f64>, cols: Vec<(FeatureSpec, Vec<f64>)>) -> DesignMatrix {
    let start = d(2019, 1, 7);
    DesignMatrix {
        station_id: "S".into(),
        target: Field::No2,
        dates: (0..response.len() as i64).map(|i| start + Duration::days(i)).collect(),
        response,
        columns: cols
            .into_iter()
            .map(|(spec, values)| DesignColumn { spec, values })
            .collect(),
        dropped: BTreeMap::new(),
    }
}

pub struct SelectionCase {
    pub design: DesignMatrix,
    pub truth: Vec<FeatureSpec>,
    pub noise: Vec<FeatureSpec>,
    pub duplicate: FeatureSpec,
    /// Sample R^2 of the duplicate regressed on its true driver.
    pub duplicate_r2: f64,
}

/// Three nonlinear drivers, five independent noise columns and a noisy copy
/// of the strongest driver, with a weekday column; `n` rows.
pub fn selection_case(seed: u64, n: usize) -> SelectionCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| z.sample(rng)).collect() };
    let t = draw(&mut rng);
    let ws = draw(&mut rng);
    let rh = draw(&mut rng);
    let noise_cols: Vec<Vec<f64>> = (0..5).map(|_| draw(&mut rng)).collect();
    let e = draw(&mut rng);
    let dup: Vec<f64> = t.iter().zip(&e).map(|(a, b)| a + 0.5 * b).collect();
    let sigma = 0.15;
    let y: Vec<f64> = (0..n)
        .map(|i| {
            3.0 + 0.8 * (1.2 * t[i]).sin() + 0.5 * t[i] - 0.35 * ws[i]
                + 0.25 * rh[i] * rh[i]
                + sigma * z.sample(&mut rng)
        })
        .collect();
    let spec = FeatureSpec::new;
    let truth = vec![spec(Source::T), spec(Source::Ws), spec(Source::Rh)];
    let noise = vec![
        spec(Source::P),
        spec(Source::Dp),
        spec(Source::WdX),
        spec(Source::WdY),
        spec(Source::Dy),
    ];
    let duplicate = FeatureSpec::lagged(Source::T, 1).unwrap();
    let (a, b) = ols_line(&t, &dup);
    let mean = dup.iter().sum::<f64>() / n as f64;
    let ss_res: f64 = t.iter().zip(&dup).map(|(x, y)| (y - a - b * x).powi(2)).sum();
    let ss_tot: f64 = dup.iter().map(|y| (y - mean).powi(2)).sum();
    let mut cols = vec![(truth[0], t), (truth[1], ws), (truth[2], rh)];
    for (s, c) in noise.iter().zip(noise_cols) {
        cols.push((*s, c));
    }
    cols.push((duplicate, dup));
    SelectionCase {
        design: design(y, cols),
        truth,
        noise,
        duplicate,
        duplicate_r2: 1.0 - ss_res / ss_tot,
    }
}
