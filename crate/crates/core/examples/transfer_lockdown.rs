//! Derive a lockdown model by refitting intercept and weekday terms, then
//! estimate the weather-normalized reduction and draw it.

use airgam::analysis::{comparison_series, estimate_reduction};
use airgam::evaluation::{generate_synthetic, DateRange, SynthConfig, SynthRegime};
use airgam::features::{build_design, FeaturePlan, FeatureSpec, Source};
use airgam::gam::fit_with_plan;
use airgam::ingest::slice_period;
use airgam::plot::{line_chart, Line};
use airgam::transfer::{ld_validate, transfer_design, transfer_fit, TransferConfig};
use airgam::FitConfig;
use chrono::NaiveDate;

fn main() -> airgam::Result<()> {
    let day = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).unwrap();
    let lockdown = DateRange::new(day(2020, 3, 16), day(2020, 4, 26))?;
    let config = SynthConfig {
        n_days: 880,
        regimes: vec![SynthRegime {
            start: lockdown.start,
            end: lockdown.end,
            multiplier: 0.7,
            weekday_multipliers: None,
        }],
        ..SynthConfig::default()
    };
    let (daily, _) = generate_synthetic(&config)?;

    let train = slice_period(&daily, day(2018, 3, 16), day(2020, 3, 15));
    let specs = [
        FeatureSpec::new(Source::T),
        FeatureSpec::new(Source::Ws),
        FeatureSpec::weekday(),
    ];
    let plan = FeaturePlan::fit(&train, &specs)?;
    let design = build_design(&train, config.target, &plan)?;
    let pre = fit_with_plan(&design, &specs, &plan, &FitConfig::default())?;

    let ld_rows = transfer_design(&pre, &daily)?.slice(lockdown.start, lockdown.end);
    let ld = transfer_fit(&pre, &ld_rows, &TransferConfig::default())?;
    // level shift averaged over the seven weekday levels
    let level = |m: &airgam::GamModel| {
        let wd = m.weekday_term().expect("weekday term");
        m.intercept + wd.coefficients.iter().sum::<f64>() / wd.coefficients.len() as f64
    };
    println!(
        "log-level shift {:.4} (ln 0.7 = {:.4})",
        level(&ld) - level(&pre),
        0.7f64.ln()
    );

    let report = estimate_reduction(&pre, &daily, lockdown)?;
    println!(
        "weather-normalized change {:.2}%",
        report.percent_change.unwrap_or(f64::NAN)
    );

    let cv = ld_validate(
        &pre,
        &transfer_design(&pre, &daily)?,
        lockdown,
        &TransferConfig::default(),
    )?;
    let agg = &cv.aggregate;
    println!(
        "LD folds {}, RMSE {:.3} vs pre-LD baseline {:.3}",
        cv.folds.len(),
        agg.rmse.as_ref().map_or(f64::NAN, |r| r.mean),
        agg.baseline_rmse.as_ref().map_or(f64::NAN, |r| r.mean)
    );

    let series = comparison_series(&pre, &ld, &daily, lockdown)?;
    let svg = line_chart(
        "Lockdown: measured vs models",
        "NO2",
        &series.dates,
        &[
            Line {
                label: "measured",
                values: &series.measured,
                color: "#222222",
            },
            Line {
                label: "pre-LD",
                values: &series.pre_ld,
                color: "#1f77b4",
            },
            Line {
                label: "LD",
                values: &series.ld,
                color: "#d62728",
            },
        ],
    );
    let path = std::env::temp_dir().join("airgam_lockdown.svg");
    std::fs::write(&path, svg)?;
    println!("chart written to {}", path.display());
    Ok(())
}
