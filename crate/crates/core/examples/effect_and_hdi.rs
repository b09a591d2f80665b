//! The threshold effect of a fixed mixture, and a posterior summary from
//! effect draws.
//!
//! ```bash
//! cargo run -p bmtm --example effect_and_hdi
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use bmtm::distributions::{SinghMaddala, SkewNormal};
use bmtm::estimands::{att, bunching_mean, endpoint_density, non_bunching_mean, AttEstimate, PointEstimate};
use bmtm::model::{MixtureParams, NeighborhoodSpec};

fn main() -> bmtm::Result<()> {
    let nk = NeighborhoodSpec::new(50.0, 10.0)?;
    let theta = SinghMaddala::new(3.5, 39.0, 1.5)?;
    for delta in [-4.0, 0.0, 4.0] {
        let gamma = SkewNormal::new(50.0, 3.0, delta)?;
        let psi = MixtureParams::new(0.2, gamma, theta)?;
        let edge = endpoint_density(&[gamma], &nk)[0];
        println!(
            "delta {delta:>4}: bunching mean {:.3}, non-bunching mean {:.3}, effect {:.3}, edge/peak {:.1e}",
            bunching_mean(&gamma, &nk)?,
            non_bunching_mean(&theta, &nk)?,
            att(&psi, &nk)?,
            edge.ratio()
        );
    }

    // stand-in posterior draws of the effect
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let posterior = Normal::new(2.8, 0.4).expect("valid normal");
    let draws: Vec<f64> = (0..4000).map(|_| posterior.sample(&mut rng)).collect();
    for point in [PointEstimate::Mean, PointEstimate::Median] {
        let est = AttEstimate::from_draws(0, nk.k, draws.clone(), 0.9, point)?;
        println!("{point:?}: {:.3}, 90% HDI [{:.3}, {:.3}]", est.point, est.hdi_low, est.hdi_high);
    }
    Ok(())
}
