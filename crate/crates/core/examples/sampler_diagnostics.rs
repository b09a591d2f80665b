//! Run the NUTS sampler on a user-defined log density and read its
//! convergence diagnostics.
//!
//! ```bash
//! cargo run --release -p bmtm --example sampler_diagnostics
//! ```

use rand::Rng;

use bmtm::sampler::{ess, mcse, rhat, run_chains, ChainRng, LogDensity, Model, SamplerConfig};

/// Correlated bivariate normal with a log-scale positive third coordinate.
struct CorrelatedNormal;

impl LogDensity for CorrelatedNormal {
    fn dim(&self) -> usize {
        3
    }

    fn ln_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let rho: f64 = 0.9;
        let det = 1.0 - rho * rho;
        let (u, v) = (x[0], x[1]);
        grad[0] = -(u - rho * v) / det;
        grad[1] = -(v - rho * u) / det;
        // exponential(1) on sigma = exp(x[2]), plus the log Jacobian
        grad[2] = 1.0 - x[2].exp();
        -0.5 * (u * u - 2.0 * rho * u * v + v * v) / det + x[2] - x[2].exp()
    }
}

impl Model for CorrelatedNormal {
    fn param_names(&self) -> Vec<String> {
        vec!["u".into(), "v".into(), "sigma".into()]
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], x[1], x[2].exp()]
    }

    fn initial_point(&self, rng: &mut ChainRng) -> Vec<f64> {
        (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()
    }
}

fn main() -> bmtm::Result<()> {
    let cfg = SamplerConfig { chains: 4, warmup: 1000, samples: 1000, seed: 11, ..Default::default() };
    let draws = run_chains(&CorrelatedNormal, &cfg)?;
    println!("{:<6} {:>8} {:>8} {:>8} {:>7} {:>8}", "param", "mean", "sd", "mcse", "rhat", "ess");
    for name in &draws.names {
        println!(
            "{name:<6} {:>8.3} {:>8.3} {:>8.4} {:>7.4} {:>8.0}",
            draws.mean(name)?,
            draws.sd(name)?,
            mcse(&draws, name)?,
            rhat(&draws, name)?,
            ess(&draws, name)?
        );
    }
    println!("divergent transitions: {}", draws.n_divergent());
    Ok(())
}
