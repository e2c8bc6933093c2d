//! Invariants checked over generated inputs.

mod support;

use airgam::analysis::fit_mixture;
use airgam::evaluation::{make_ld_folds, make_pre_ld_folds, DateRange, DEFAULT_TRAIN_LENGTHS};
use airgam::features::{lag, rolling_mean, wind_to_cartesian};
use airgam::ingest::{aggregate_daily, parse_observations, write_observations, AggregateConfig, Field, Observation};
use chrono::{Duration, TimeZone, Utc};
use proptest::prelude::*;
use support::*;

fn observations(values: &[(u8, u16, f64)]) -> Vec<Observation> {
    let base = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    values
        .iter()
        .map(|&(station, hour, v)| {
            Observation::new(format!("S{}", station % 3), base + Duration::hours(hour as i64))
                .with(Field::No2, v)
                .with(Field::Wd, v * 7.0)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn aggregation_ignores_row_order(
        rows in prop::collection::vec((0u8..3, 0u16..120, 0.0f64..200.0), 1..200),
        seed in any::<u64>(),
        offset in -12i32..13,
    ) {
        let obs = observations(&rows);
        let mut shuffled = obs.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let config = AggregateConfig { coverage_threshold: 0.1, utc_offset_hours: offset };
        prop_assert_eq!(aggregate_daily(&obs, &config).unwrap(), aggregate_daily(&shuffled, &config).unwrap());
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((0u8..3, 0u16..500, 0.0f64..200.0), 0..50)) {
        let obs = observations(&rows);
        let mut buf = Vec::new();
        write_observations(&mut buf, &obs).unwrap();
        let parsed = parse_observations(buf.as_slice()).unwrap();
        prop_assert!(parsed.row_errors.is_empty());
        prop_assert_eq!(parsed.observations.len(), obs.len());
        for (a, b) in parsed.observations.iter().zip(&obs) {
            prop_assert_eq!(a.get(Field::No2), b.get(Field::No2));
            prop_assert_eq!(a.timestamp, b.timestamp);
        }
    }

    #[test]
    fn wind_components_on_unit_circle(deg in -720.0f64..720.0) {
        let (x, y) = wind_to_cartesian(deg);
        prop_assert!((x * x + y * y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lag_and_rolling_shapes(values in prop::collection::vec(prop::option::of(-50.0f64..50.0), 0..60), k in 0usize..5, w in 1usize..8) {
        let lagged = lag(&values, k);
        prop_assert_eq!(lagged.len(), values.len());
        for i in 0..values.len() {
            let expected = if i >= k { values[i - k] } else { None };
            prop_assert_eq!(lagged[i], expected);
        }
        let rolled = rolling_mean(&values, w);
        prop_assert_eq!(rolled.len(), values.len());
        for i in 0..values.len() {
            let window: Vec<f64> = values[(i + 1).saturating_sub(w)..=i].iter().flatten().copied().collect();
            match rolled[i] {
                Some(m) => {
                    prop_assert!(2 * window.len() >= w);
                    prop_assert!((m - window.iter().sum::<f64>() / window.len() as f64).abs() < 1e-9);
                }
                None => prop_assert!(window.is_empty() || 2 * window.len() < w),
            }
        }
    }

    #[test]
    fn mixture_is_scale_invariant(seed in 0u64..5000, scale in 0.01f64..100.0) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let [ld, pre, meas] = mixture_instance(&mut rng);
        let s = |v: &Vec<Option<f64>>| v.iter().map(|x| x.map(|x| x * scale)).collect::<Vec<_>>();
        let a = fit_mixture(&ld, &pre, &meas).unwrap();
        let b = fit_mixture(&s(&ld), &s(&pre), &s(&meas)).unwrap();
        prop_assert!((a.objective * scale - b.objective).abs() < 1e-9 * b.objective.max(1.0));
        prop_assert!((mixture_mad(&ld, &pre, &meas, b.alpha) - a.objective).abs() < 1e-9 * a.objective.max(1.0));
    }

    #[test]
    fn pre_ld_folds_respect_time(year in 2000i32..2030, start_offset in 0i64..2000) {
        let data_start = d(year - 3, 1, 1) + Duration::days(start_offset);
        let folds = make_pre_ld_folds(year, &DEFAULT_TRAIN_LENGTHS, data_start).unwrap();
        prop_assert_eq!(folds.len(), 72);
        for f in &folds {
            let span = f.fold.train_span();
            prop_assert!(span.end < f.fold.test.start);
            prop_assert_eq!(f.skip.is_some(), span.start < data_start);
        }
    }

    #[test]
    fn ld_folds_partition_the_period(days in 6i64..120) {
        let start = d(2020, 3, 16);
        let period = DateRange::new(start, start + Duration::days(days - 1)).unwrap();
        let folds = make_ld_folds(period, 3).unwrap();
        let mut covered = 0;
        for f in &folds {
            for date in f.test.iter() {
                prop_assert!(!f.in_train(date));
                covered += 1;
            }
            for date in period.iter().filter(|d| !f.test.contains(*d)) {
                prop_assert!(f.in_train(date));
            }
        }
        prop_assert_eq!(covered, days / 3 * 3);
        prop_assert_eq!(folds.len() as i64, days / 3);
    }
}
