//! Hierarchical fit of banded customer groups around three spending
//! thresholds, reporting effects and the bunching-region check.
//!
//! ```bash
//! cargo run --release -p bmtm --example application_thresholds
//! ```

use bmtm::estimands::{endpoint_density, gamma_draws, PointEstimate};
use bmtm::model::PriorConfig;
use bmtm::pipeline::{fit, FitConfig, ModelKind};
use bmtm::sampler::SamplerConfig;
use bmtm::simgen::{simulate_application, ApplicationConfig};

fn main() -> bmtm::Result<()> {
    env_logger::init();
    let app = ApplicationConfig { groups: 9, group_size: 400, ..Default::default() };
    let data = simulate_application(&app)?;
    let cfg = FitConfig {
        model: ModelKind::Hbmtm,
        neighborhoods: data.truth.neighborhoods.clone(),
        priors: PriorConfig::application(),
        sampler: SamplerConfig { chains: 4, warmup: 400, samples: 400, seed: 3, ..Default::default() },
        point: PointEstimate::Median,
        ..Default::default()
    };
    let result = fit(&data.observations, &cfg)?;

    println!("{:>5} {:>7} {:>10} {:>10} {:>12}", "band", "K", "median", "truth", "edge/peak");
    for (m, nk) in result.neighborhoods.iter().enumerate() {
        for g in 0..result.n_groups {
            let (draws, group) = result.step2_draws(m, g);
            let mut ratios: Vec<f64> = endpoint_density(&gamma_draws(draws, group)?, nk).iter().map(|e| e.ratio()).collect();
            ratios.sort_by(f64::total_cmp);
            println!(
                "{g:>5} {:>7} {:>10.0} {:>10.0} {:>12.1e}",
                nk.k,
                result.estimate(m, g).point,
                data.truth.att[g][m],
                ratios[ratios.len() / 2]
            );
        }
    }
    for w in result.warnings() {
        println!("warning: {w}");
    }
    Ok(())
}
