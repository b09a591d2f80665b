//! Density-jump baseline with boundary-corrected kernel density estimates
//! on each side of the threshold.
//!
//! ```bash
//! cargo run -p bmtm --example rdd_baseline
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bmtm::baseline::{rdd_estimate, KdeConfig, Kernel, RddFit};
use bmtm::distributions::{SinghMaddala, SkewNormal};
use bmtm::model::NeighborhoodSpec;
use bmtm::simgen::{generate_data, true_att, BunchingParams, GroupParams};

fn main() -> bmtm::Result<()> {
    let nk = NeighborhoodSpec::new(50.0, 10.0)?;
    let theta = SinghMaddala::new(3.5, 39.0, 1.5)?;
    let gamma = SkewNormal::new(50.0, 3.0, 4.0)?;
    let params = GroupParams { theta, bunching: vec![BunchingParams { pi: 0.2, gamma }] };
    let data = generate_data(&[params], &[5000], &[nk], &mut ChaCha8Rng::seed_from_u64(5))?;
    let ys: Vec<f64> = data.observations.iter().map(|o| o.y).collect();

    println!("true effect {:.3}", true_att(&theta, &gamma, &nk)?);
    for kernel in [Kernel::Epanechnikov, Kernel::Gaussian] {
        for bandwidth in [5.0, 10.0] {
            let cfg = KdeConfig { bandwidth, kernel, range: None };
            let fit = RddFit::new(&ys, &nk, &cfg)?;
            println!(
                "{kernel:?} h={bandwidth}: density jump {:.4}, effect {:.3}",
                fit.density_jump(),
                rdd_estimate(&ys, &nk, &cfg)?
            );
        }
    }
    Ok(())
}
