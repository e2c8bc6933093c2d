//! Forward selection by AIC with the VIF gate over the default candidate pool.

use airgam::evaluation::{generate_synthetic, SynthConfig};
use airgam::features::{build_design, default_candidates, FeaturePlan};
use airgam::selection::{ensure_weekday, forward_select, SelectionConfig};

fn main() -> airgam::Result<()> {
    let config = SynthConfig {
        n_days: 540,
        ..SynthConfig::default()
    };
    let (daily, _) = generate_synthetic(&config)?;
    let plan = FeaturePlan::fit(&daily, &default_candidates())?;
    let design = build_design(&daily, config.target, &plan)?;
    let (model, trace) = forward_select(&design, &plan, &SelectionConfig::default())?;
    print!("{}", trace.table());
    let model = ensure_weekday(&model, &design)?;
    let names: Vec<String> = model.specs().iter().map(|s| s.name()).collect();
    println!("final terms: {}", names.join(", "));
    Ok(())
}
