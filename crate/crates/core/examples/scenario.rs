//! Hypothetical year under lockdown conditions, by month.

use airgam::analysis::hypothetical_scenario;
use airgam::evaluation::{generate_synthetic, DateRange, SynthConfig, SynthRegime};
use airgam::features::{build_design, FeaturePlan, FeatureSpec, Source};
use airgam::gam::fit_with_plan;
use airgam::ingest::slice_period;
use airgam::transfer::{transfer_design, transfer_fit, TransferConfig};
use airgam::FitConfig;
use chrono::NaiveDate;

fn main() -> airgam::Result<()> {
    let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
    let lockdown = DateRange::new(d(2020, 3, 16), d(2020, 4, 26))?;
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
    let train = slice_period(&daily, d(2018, 3, 16), d(2020, 3, 15));
    let specs = [
        FeatureSpec::new(Source::T),
        FeatureSpec::new(Source::Ws),
        FeatureSpec::weekday(),
    ];
    let plan = FeaturePlan::fit(&train, &specs)?;
    let pre = fit_with_plan(
        &build_design(&train, config.target, &plan)?,
        &specs,
        &plan,
        &FitConfig::default(),
    )?;
    let ld_rows = transfer_design(&pre, &daily)?.slice(lockdown.start, lockdown.end);
    let ld = transfer_fit(&pre, &ld_rows, &TransferConfig::default())?;

    let report = hypothetical_scenario(&ld, &daily, 2019)?;
    for m in &report.months {
        println!("2019-{:02}  {:>7.2}%", m.month, m.percent_change.unwrap_or(f64::NAN));
    }
    println!(
        "year     {:>7.2}%",
        report.hypothetical_reduction_percent.unwrap_or(f64::NAN)
    );
    Ok(())
}
