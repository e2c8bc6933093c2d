//! Exact mixture coefficient between lockdown and pre-lockdown predictions.

use airgam::analysis::{fit_mixture, mixture_over_time};
use chrono::{Duration, NaiveDate};

fn main() -> airgam::Result<()> {
    let start = NaiveDate::from_ymd_opt(2020, 4, 27).unwrap();
    let n = 60;
    let dates: Vec<NaiveDate> = (0..n).map(|i| start + Duration::days(i)).collect();
    let pre: Vec<Option<f64>> = (0..n).map(|i| Some(30.0 + 6.0 * (i as f64 / 5.0).sin())).collect();
    let ld: Vec<Option<f64>> = pre.iter().map(|v| v.map(|x| 0.7 * x)).collect();
    // activity recovers linearly: full lockdown on day 0, normal by day 59
    let measured: Vec<Option<f64>> = (0..n as usize)
        .map(|i| {
            let a = 1.0 - i as f64 / (n - 1) as f64;
            Some(a * ld[i].unwrap() + (1.0 - a) * pre[i].unwrap())
        })
        .collect();

    let fit = fit_mixture(&ld, &pre, &measured)?;
    println!(
        "alpha {:.4}  objective {:.4}  days {}  candidates {}",
        fit.alpha, fit.objective, fit.n_days, fit.breakpoints_examined
    );
    for p in mixture_over_time(&dates, &ld, &pre, &measured, 14)?.iter().step_by(7) {
        println!("{}  alpha {:.3}", p.date, p.alpha);
    }
    Ok(())
}
