//! Fit an additive model on synthetic data and compare it with the truth.

use airgam::evaluation::{generate_synthetic, SynthConfig};
use airgam::features::{build_design, FeaturePlan, FeatureSpec, Source};
use airgam::gam::fit_with_plan;
use airgam::FitConfig;

fn main() -> airgam::Result<()> {
    let config = SynthConfig::default();
    let (daily, _) = generate_synthetic(&config)?;
    let specs = [
        FeatureSpec::new(Source::T),
        FeatureSpec::new(Source::Ws),
        FeatureSpec::weekday(),
    ];
    let plan = FeaturePlan::fit(&daily, &specs)?;
    let design = build_design(&daily, config.target, &plan)?;
    let model = fit_with_plan(&design, &specs, &plan, &FitConfig::default())?;

    println!("n = {}, intercept {:.4}", model.n_train, model.intercept);
    for s in &model.smooths {
        println!(
            "smooth {:<4} K = {:>2}  lambda = {:<10.4e} edf = {:.2}",
            s.feature.name(),
            s.basis_size(),
            s.lambda,
            s.edf
        );
    }
    if let Some(wd) = model.weekday_term() {
        let ratios: Vec<String> = wd.coefficients.iter().map(|c| format!("{:.3}", c.exp())).collect();
        println!("weekday ratios vs Monday: {}", ratios.join(" "));
    }
    println!(
        "sigma^2 {:.5}, edf {:.2}, AIC {:.2}",
        model.sigma2, model.total_edf, model.aic
    );
    println!("model sha256 {}", model.sha256()?);
    Ok(())
}
