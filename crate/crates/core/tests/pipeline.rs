use bmtm::eval::{run_replication, Method, StudyConfig};
use bmtm::model::PriorConfig;
use bmtm::pipeline::{fit, FitConfig, ModelKind};
use bmtm::sampler::SamplerConfig;
use bmtm::simgen::{simulate, simulate_application, ApplicationConfig, Scenario, ScenarioConfig};

fn quick_sampler(seed: u64) -> SamplerConfig {
    SamplerConfig { chains: 2, warmup: 150, samples: 150, seed, ..Default::default() }
}

#[test]
fn hierarchical_fit_is_reproducible() {
    let data = simulate(&ScenarioConfig::new(Scenario::B, 4, 21)).unwrap();
    let cfg = FitConfig { sampler: quick_sampler(3), ..Default::default() };
    let first = fit(&data.observations, &cfg).unwrap();
    let second = fit(&data.observations, &cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&first.estimates).unwrap(),
        serde_json::to_string(&second.estimates).unwrap()
    );
    assert_eq!(first.estimates.len(), 4);
    assert_eq!(first.theta_hats.len(), 4);
    for e in &first.estimates {
        assert!(e.hdi_low <= e.hdi_high && e.draws.len() == 300);
    }
}

#[test]
fn multi_threshold_fit_shares_step_one() {
    let app = ApplicationConfig { groups: 6, group_size: 300, seed: 9, ..Default::default() };
    let data = simulate_application(&app).unwrap();
    let cfg = FitConfig {
        model: ModelKind::Hbmtm,
        neighborhoods: data.truth.neighborhoods.clone(),
        priors: PriorConfig::application(),
        sampler: quick_sampler(4),
        ..Default::default()
    };
    let result = fit(&data.observations, &cfg).unwrap();
    assert_eq!(result.step1.len(), 1);
    assert_eq!(result.step2.len(), 3);
    assert_eq!(result.estimates.len(), 18);
    let thresholds: Vec<f64> = result.estimates.iter().map(|e| e.threshold).collect();
    let mut sorted = thresholds.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(thresholds, sorted);
    for m in 0..3 {
        for g in 0..6 {
            let e = result.estimate(m, g);
            assert_eq!((e.group, e.threshold), (g, cfg.neighborhoods[m].k));
        }
    }
}

#[test]
fn single_replication_rdd_is_bitwise_reproducible() {
    let mut cfg = StudyConfig::desk(ScenarioConfig::new(Scenario::A, 20, 77));
    cfg.methods = vec![Method::Rdd];
    let a = run_replication(&cfg, 0).unwrap();
    let b = run_replication(&cfg, 0).unwrap();
    let points = |r: &bmtm::eval::ReplicationRecord| {
        r.estimates[0].points.iter().map(|v| v.map(f64::to_bits)).collect::<Vec<_>>()
    };
    assert_eq!(points(&a), points(&b));
    assert!(a.estimates[0].intervals.is_none());
}
