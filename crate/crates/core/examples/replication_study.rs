//! Monte Carlo comparison of the density-jump baseline, independent
//! per-group fits and the hierarchical model on simulated scenarios.
//!
//! ```bash
//! cargo run --release -p bmtm --example replication_study -- B 10 1000
//! ```
//!
//! Arguments: scenario (`A` or `B`), replications, and warmup/sampling
//! iterations per chain.

use std::time::Instant;

use bmtm::eval::{run_replication_study, table_rows, StudyConfig};
use bmtm::sampler::SamplerConfig;
use bmtm::simgen::{Scenario, ScenarioConfig};

fn main() -> bmtm::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let scenario: Scenario = args.first().map_or("A", String::as_str).parse()?;
    let replications = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let iters = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500);

    let mut cfg = StudyConfig::desk(ScenarioConfig::new(scenario, 20, 2024));
    cfg.replications = replications;
    cfg.fit.sampler = SamplerConfig { chains: 4, warmup: iters, samples: iters, ..Default::default() };

    let start = Instant::now();
    let study = run_replication_study(&cfg)?;
    println!("scenario {scenario:?}, {replications} replications, {:.0?}", start.elapsed());
    println!("{:<7} {:>7} {:>6} {:>7} {:>7}", "method", "MAE", "CP", "AL", "IS");
    for row in table_rows(&study.reports) {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:<7} {:>7.3} {:>6} {:>7} {:>7}",
            row.method,
            row.mae,
            fmt(row.cp),
            fmt(row.al),
            fmt(row.is_score)
        );
    }
    Ok(())
}
