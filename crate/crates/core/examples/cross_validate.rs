//! Temporal cross-validation over the pre-lockdown fold grid.

use airgam::evaluation::{
    cross_validate, generate_synthetic, make_pre_ld_folds, CvConfig, CvModel, Protocol, SynthConfig,
    DEFAULT_TRAIN_LENGTHS,
};
use airgam::features::{FeatureSpec, Source};
use airgam::FitConfig;

fn main() -> airgam::Result<()> {
    let config = SynthConfig::default();
    let (daily, _) = generate_synthetic(&config)?;
    let folds = make_pre_ld_folds(2019, &DEFAULT_TRAIN_LENGTHS, daily.first_date().unwrap())?;
    let cv = CvConfig {
        target: config.target,
        model: CvModel::Fixed {
            specs: vec![
                FeatureSpec::new(Source::T),
                FeatureSpec::new(Source::Ws),
                FeatureSpec::weekday(),
            ],
        },
        fit: FitConfig::default(),
    };
    let report = cross_validate(&daily, &folds, Protocol::PreLd, &cv);
    let agg = &report.aggregate;
    println!("{} folds scored, {} skipped", agg.n_scored, agg.n_skipped);
    if let Some(r) = &agg.rmse {
        println!("RMSE {:.3} +/- {:.3}", r.mean, r.std);
    }
    if let Some(r) = &agg.r2 {
        println!("R2   {:.3} +/- {:.3}", r.mean, r.std);
    }
    report.write_csv(std::io::stdout().lock())?;
    Ok(())
}
