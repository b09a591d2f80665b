//! Draw a multi-group synthetic dataset and inspect its ground truth.
//!
//! ```bash
//! cargo run -p bmtm --example simulate_dataset -- B 8
//! ```

use bmtm::simgen::{simulate, Scenario, ScenarioConfig};

fn main() -> bmtm::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenario: Scenario = args.first().map_or("A", String::as_str).parse()?;
    let groups = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);

    let cfg = ScenarioConfig::new(scenario, groups, 42);
    let data = simulate(&cfg)?;
    let nk = cfg.neighborhood()?;
    let hyper = data.truth.hyperparams.as_ref().expect("scenario draws record hyperparameters");
    println!("scenario {scenario:?}: mu_pi {:.3}, mu_omega {:.3}, mu_delta {:.3}", hyper.mu_pi, hyper.mu_omega, hyper.mu_delta);
    println!("{:>5} {:>5} {:>7} {:>7} {:>9}", "group", "n", "in N_K", "pi", "effect");
    for (g, params) in data.truth.groups.iter().enumerate() {
        let ys: Vec<f64> = data.observations.iter().filter(|o| o.group == g).map(|o| o.y).collect();
        let inside = ys.iter().filter(|&&y| nk.contains(y)).count();
        println!(
            "{g:>5} {:>5} {inside:>7} {:>7.3} {:>9.4}",
            ys.len(),
            params.bunching[0].pi,
            data.truth.att[g][0]
        );
    }
    let bunchers = data.truth.bunching.iter().filter(|&&b| b).count();
    println!("{bunchers} of {} observations drawn from the bunching component", data.observations.len());
    Ok(())
}
