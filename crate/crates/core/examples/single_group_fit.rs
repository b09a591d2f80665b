//! Two-step fit for one customer group with a known effect.
//!
//! ```bash
//! cargo run --release -p bmtm --example single_group_fit
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bmtm::distributions::{SinghMaddala, SkewNormal};
use bmtm::model::NeighborhoodSpec;
use bmtm::pipeline::{fit, FitConfig, ModelKind};
use bmtm::sampler::SamplerConfig;
use bmtm::simgen::{generate_data, BunchingParams, GroupParams};

fn main() -> bmtm::Result<()> {
    env_logger::init();
    let nk = NeighborhoodSpec::new(50.0, 10.0)?;
    let params = GroupParams {
        theta: SinghMaddala::new(3.5, 39.0, 1.5)?,
        bunching: vec![BunchingParams { pi: 0.2, gamma: SkewNormal::new(50.0, 3.0, 4.0)? }],
    };
    let data = generate_data(&[params], &[2000], &[nk], &mut ChaCha8Rng::seed_from_u64(1))?;

    let cfg = FitConfig {
        model: ModelKind::Bmtm,
        sampler: SamplerConfig { chains: 4, warmup: 1000, samples: 1000, seed: 2, ..Default::default() },
        ..Default::default()
    };
    let result = fit(&data.observations, &cfg)?;
    let theta = result.theta_hats[0];
    println!("step 1: a {:.3}, b {:.3}, q {:.3}  (truth 3.5, 39, 1.5)", theta.a, theta.b, theta.q);
    let (pi, gamma) = result.mixture_point(0, 0)?;
    println!(
        "step 2: pi {pi:.3}, beta {:.2}, omega {:.2}, delta {:.2}  (truth 0.2, 50, 3, 4)",
        gamma.beta, gamma.omega, gamma.delta
    );
    let est = result.estimate(0, 0);
    println!(
        "effect {:.3}, 90% HDI [{:.3}, {:.3}], truth {:.3}",
        est.point, est.hdi_low, est.hdi_high, data.truth.att[0][0]
    );
    for d in &result.diagnostics {
        println!("{}: max R-hat {:.3}, min ESS {:.0}, {} divergent", d.stage, d.max_rhat, d.min_ess, d.n_divergent);
    }
    Ok(())
}
