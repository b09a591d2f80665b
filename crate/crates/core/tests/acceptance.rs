//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 8`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use bmtm::distributions::{Family, HalfNormal, LogitNormal, SinghMaddala, SkewNormal};
use bmtm::estimands::{att, endpoint_density, gamma_draws, hdi, PointEstimate};
use bmtm::eval::{interval_metrics, mae, run_replication_study, Method, StudyConfig, StudyResult};
use bmtm::model::{MixtureParams, NeighborhoodSpec, Observation, PriorConfig, Step1Posterior};
use bmtm::pipeline::{fit, FitConfig, ModelKind};
use bmtm::sampler::{mcse, rhat, run_chains, ChainRng, LogDensity, Model, SamplerConfig};
use bmtm::simgen::{
    generate_data, simulate_application, true_att, ApplicationConfig, BunchingParams, GroupParams, Scenario,
    ScenarioConfig,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: &[Criterion] = &[
    (1, "distribution correctness", c1_distributions),
    (2, "effect matches Monte Carlo oracle", c2_att_oracle),
    (3, "sampler calibration", c3_sampler),
    (4, "single-group effect recovery", c4_recovery),
    (5, "method ordering at desk scale", c5_desk_study),
    (6, "posterior contraction", c6_contraction),
    (7, "multi-threshold application pipeline", c7_application),
    (8, "interval metric formulas", c8_metrics),
];

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, name, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Outcome::new(false, format!("panicked: {msg}"))
            });
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} ({name}): {verdict} [{:.1}s] {}",
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
        if !outcome.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// 1
// ---------------------------------------------------------------------------

/// Composite Simpson on `[lo, hi]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

fn fd_gradient_ok<F: Family>(dist: &F, x: f64) -> Result<(), String> {
    let p = dist.params();
    let analytic = dist.grad_ln_pdf(x);
    for j in 0..p.len() {
        let h = 1e-6 * p[j].abs().max(1e-2);
        let (mut up, mut dn) = (p.clone(), p.clone());
        up[j] += h;
        dn[j] -= h;
        let fd = (F::from_params(&up).unwrap().ln_pdf(x) - F::from_params(&dn).unwrap().ln_pdf(x)) / (2.0 * h);
        let err = (fd - analytic[j]).abs() / analytic[j].abs().max(1.0);
        if err > 1e-5 {
            return Err(format!("{:?} at x={x}: d/d{} analytic {} fd {fd}", p, F::PARAM_NAMES[j], analytic[j]));
        }
    }
    Ok(())
}

fn c1_distributions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut problems = Vec::new();
    let ks_crit = 1.6276 / (1e5f64).sqrt();

    // normalization
    for sm in [SinghMaddala::new(3.5, 39.0, 1.5).unwrap(), SinghMaddala::new(1.2, 5.0, 3.0).unwrap()] {
        // integrate on the log scale where the density is smooth and light-tailed
        let lb = sm.b.ln();
        let total = simpson(|t| (sm.ln_pdf(t.exp()) + t).exp(), lb - 60.0 / sm.a, lb + 80.0 / (sm.a * sm.q), 400_000);
        if (total - 1.0).abs() > 1e-6 {
            problems.push(format!("{sm:?} integrates to {total}"));
        }
    }
    for sn in [SkewNormal::new(50.0, 3.0, 4.0).unwrap(), SkewNormal::new(-2.0, 0.5, -7.0).unwrap()] {
        let total = simpson(|y| sn.pdf(y), sn.beta - 40.0 * sn.omega, sn.beta + 40.0 * sn.omega, 200_000);
        if (total - 1.0).abs() > 1e-6 {
            problems.push(format!("{sn:?} integrates to {total}"));
        }
    }
    let hn = HalfNormal::new(1.7).unwrap();
    let total = simpson(|x| hn.ln_pdf(x).exp(), 0.0, 40.0 * 1.7, 200_000);
    if (total - 1.0).abs() > 1e-6 {
        problems.push(format!("half-normal integrates to {total}"));
    }
    let ln = LogitNormal::new(-1.0, 0.8).unwrap();
    let total = simpson(|p| ln.ln_pdf(p).exp(), 1e-12, 1.0 - 1e-12, 400_000);
    if (total - 1.0).abs() > 1e-6 {
        problems.push(format!("logit-normal integrates to {total}"));
    }

    // cdf / quantile round trips
    let sm = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
    for i in 1..1000 {
        let u = i as f64 / 1000.0;
        let checks = [
            ("singh-maddala", sm.cdf(sm.quantile(u).unwrap())),
            ("half-normal", hn.cdf(hn.quantile(u).unwrap())),
            ("logit-normal", ln.cdf(ln.quantile(u).unwrap())),
        ];
        for (name, back) in checks {
            if (back - u).abs() > 1e-10 {
                problems.push(format!("{name} round trip at {u}: {back}"));
            }
        }
    }
    // skew-normal cdf against direct integration
    let sn = SkewNormal::new(50.0, 3.0, 4.0).unwrap();
    for y in [45.0, 49.0, 50.0, 52.5, 58.0] {
        let direct = simpson(|t| sn.pdf(t), sn.beta - 40.0 * sn.omega, y, 200_000);
        if (sn.cdf(y) - direct).abs() > 1e-10 {
            problems.push(format!("skew-normal cdf at {y}: {} vs {direct}", sn.cdf(y)));
        }
    }

    // KS on 10^5 draws
    let n = 100_000;
    let stats = [
        ("singh-maddala", ks_statistic(sm.sample(&mut rng, n), |x| sm.cdf(x))),
        ("skew-normal", ks_statistic(sn.sample(&mut rng, n), |x| sn.cdf(x))),
        ("half-normal", ks_statistic(hn.sample(&mut rng, n), |x| hn.cdf(x))),
        ("logit-normal", ks_statistic(ln.sample(&mut rng, n), |x| ln.cdf(x))),
    ];
    for (name, d) in stats {
        if d > ks_crit {
            problems.push(format!("{name} KS statistic {d:.5} > {ks_crit:.5}"));
        }
    }

    // gradients
    for _ in 0..200 {
        let sm = SinghMaddala::new(rng.random_range(0.5..6.0), rng.random_range(5.0..80.0), rng.random_range(0.3..4.0)).unwrap();
        let sn = SkewNormal::new(rng.random_range(-5.0..60.0), rng.random_range(0.3..8.0), rng.random_range(-8.0..8.0)).unwrap();
        let hn = HalfNormal::new(rng.random_range(0.2..5.0)).unwrap();
        let ln = LogitNormal::new(rng.random_range(-3.0..3.0), rng.random_range(0.2..2.0)).unwrap();
        let results = [
            fd_gradient_ok(&sm, sm.draw(&mut rng)),
            fd_gradient_ok(&sn, sn.draw(&mut rng)),
            fd_gradient_ok(&hn, hn.draw(&mut rng).max(1e-3)),
            fd_gradient_ok(&ln, ln.draw(&mut rng).clamp(1e-6, 1.0 - 1e-6)),
        ];
        problems.extend(results.into_iter().filter_map(Result::err));
    }

    let detail = if problems.is_empty() {
        format!("normalization, round trips, KS at 1% (crit {ks_crit:.5}) and 800 gradient checks")
    } else {
        format!("{} problems, first: {}", problems.len(), problems[0])
    };
    Outcome::new(problems.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 2
// ---------------------------------------------------------------------------

/// Mean and variance of `n` accepted draws inside `[lo, hi]`.
fn truncated_moments(mut draw: impl FnMut() -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let (mut count, mut mean, mut m2) = (0usize, 0.0, 0.0);
    while count < n {
        let y = draw();
        if y >= lo && y <= hi {
            count += 1;
            let d = y - mean;
            mean += d / count as f64;
            m2 += d * (y - mean);
        }
    }
    (mean, m2 / (count - 1) as f64)
}

fn c2_att_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let n = 10_000_000;
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..20 {
        let k = rng.random_range(20.0..200.0);
        let half = k * rng.random_range(0.1..0.3);
        let nk = NeighborhoodSpec::new(k, half).unwrap();
        let gamma = SkewNormal::new(
            k + rng.random_range(-0.3..0.3) * half,
            half * rng.random_range(0.1..0.6),
            rng.random_range(-5.0..5.0),
        )
        .unwrap();
        let theta = SinghMaddala::new(rng.random_range(1.5..5.0), k * rng.random_range(0.6..1.6), rng.random_range(0.5..3.0)).unwrap();
        let psi = MixtureParams::new(0.3, gamma, theta).unwrap();
        let computed = att(&psi, &nk).unwrap();

        // independent samplers: two-normal skew-normal and inverse-cdf Singh-Maddala
        let d = gamma.delta / (1.0 + gamma.delta * gamma.delta).sqrt();
        let mut r1 = ChaCha8Rng::seed_from_u64(1000 + i);
        let (f_mean, f_var) = truncated_moments(
            || {
                let z0: f64 = r1.sample(StandardNormal);
                let z1: f64 = r1.sample(StandardNormal);
                gamma.beta + gamma.omega * (d * z0.abs() + (1.0 - d * d).sqrt() * z1)
            },
            nk.lo(),
            nk.hi(),
            n,
        );
        let mut r2 = ChaCha8Rng::seed_from_u64(2000 + i);
        let (g_mean, g_var) = truncated_moments(
            || {
                let u: f64 = r2.random();
                theta.b * ((1.0 - u).powf(-1.0 / theta.q) - 1.0).powf(1.0 / theta.a)
            },
            nk.lo(),
            nk.hi(),
            n,
        );
        let oracle = f_mean - g_mean;
        let se = ((f_var + g_var) / n as f64).sqrt();
        let z = (computed - oracle).abs() / se;
        worst = worst.max(z);
        if z > 3.0 {
            failures.push(format!("instance {i}: {computed} vs {oracle} ± {se}"));
        }
    }
    let detail = format!("worst deviation {worst:.2} MC standard errors over 20 instances");
    Outcome::new(failures.is_empty(), if failures.is_empty() { detail } else { format!("{detail}; {}", failures.join("; ")) })
}

// ---------------------------------------------------------------------------
// 3
// ---------------------------------------------------------------------------

struct StdNormal(usize);

impl LogDensity for StdNormal {
    fn dim(&self) -> usize {
        self.0
    }

    fn ln_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        for (g, v) in grad.iter_mut().zip(x) {
            *g = -v;
        }
        -0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }
}

impl Model for StdNormal {
    fn param_names(&self) -> Vec<String> {
        (0..self.0).map(|i| format!("x{i}")).collect()
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn initial_point(&self, rng: &mut ChainRng) -> Vec<f64> {
        (0..self.0).map(|_| rng.random_range(-2.0..2.0)).collect()
    }
}

fn c3_sampler() -> Outcome {
    let cfg = SamplerConfig { chains: 4, warmup: 1000, samples: 2000, seed: 303, ..Default::default() };
    let mut problems = Vec::new();
    let mut max_rhat = 0.0f64;

    let normal = run_chains(&StdNormal(5), &cfg).unwrap();
    for name in normal.names.clone() {
        let (m, se, r) = (normal.mean(&name).unwrap(), mcse(&normal, &name).unwrap(), rhat(&normal, &name).unwrap());
        max_rhat = max_rhat.max(r);
        let var = normal.sd(&name).unwrap().powi(2);
        if m.abs() > 4.0 * se || (var - 1.0).abs() > 0.1 || r >= 1.01 {
            problems.push(format!("normal {name}: mean {m} (mcse {se}), variance {var}, rhat {r}"));
        }
    }

    let nk = NeighborhoodSpec::new(50.0, 10.0).unwrap();
    let theta0 = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(304);
    let ys: Vec<f64> = theta0.sample(&mut rng, 5000).into_iter().filter(|&y| !nk.contains(y)).collect();
    let post = Step1Posterior::new(&ys, &[nk], PriorConfig::simulation());
    let sm = run_chains(&post, &cfg).unwrap();
    for (name, truth) in [("a", 3.5), ("b", 39.0), ("q", 1.5)] {
        let (m, sd, r) = (sm.mean(name).unwrap(), sm.sd(name).unwrap(), rhat(&sm, name).unwrap());
        max_rhat = max_rhat.max(r);
        if (m - truth).abs() > 3.0 * sd || r >= 1.01 {
            problems.push(format!("singh-maddala {name}: {m} ± {sd} vs {truth}, rhat {r}"));
        }
    }
    let detail = if problems.is_empty() {
        format!("max R-hat {max_rhat:.4} with 4x2000 draws")
    } else {
        problems.join("; ")
    };
    Outcome::new(problems.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 4 and 6
// ---------------------------------------------------------------------------

fn reference_group(pi: f64) -> GroupParams {
    GroupParams {
        theta: SinghMaddala::new(3.5, 39.0, 1.5).unwrap(),
        bunching: vec![BunchingParams { pi, gamma: SkewNormal::new(50.0, 3.0, 4.0).unwrap() }],
    }
}

fn single_group_fit(n: usize, seed: u64) -> (f64, bmtm::estimands::AttEstimate) {
    let nk = NeighborhoodSpec::new(50.0, 10.0).unwrap();
    let p = reference_group(0.2);
    let data = generate_data(std::slice::from_ref(&p), &[n], &[nk], &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let cfg = FitConfig {
        model: ModelKind::Bmtm,
        sampler: SamplerConfig { chains: 4, warmup: 1000, samples: 1000, seed: seed + 1, ..Default::default() },
        ..Default::default()
    };
    let result = fit(&data.observations, &cfg).unwrap();
    (data.truth.att[0][0], result.estimates[0].clone())
}

fn c4_recovery() -> Outcome {
    let mut covered = 0;
    let mut notes = Vec::new();
    for seed in 0..10 {
        let (truth, est) = single_group_fit(2000, 400 + seed);
        if est.covers(truth) {
            covered += 1;
        }
        notes.push(format!("{:.2}[{:.2},{:.2}]", est.point, est.hdi_low, est.hdi_high));
    }
    let truth = true_att(
        &reference_group(0.2).theta,
        &reference_group(0.2).bunching[0].gamma,
        &NeighborhoodSpec::new(50.0, 10.0).unwrap(),
    )
    .unwrap();
    Outcome::new(
        covered >= 8,
        format!("true effect {truth:.3} inside the 90% HDI in {covered}/10 runs: {}", notes.join(" ")),
    )
}

fn c6_contraction() -> Outcome {
    let sd = |draws: &[f64]| {
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt()
    };
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 0..10 {
        small += sd(&single_group_fit(1000, 600 + seed).1.draws);
        large += sd(&single_group_fit(4000, 700 + seed).1.draws);
    }
    let ratio = large / small;
    Outcome::new(
        (0.35..=0.7).contains(&ratio),
        format!("mean sd {:.4} at n=1000, {:.4} at n=4000, ratio {ratio:.3}", small / 10.0, large / 10.0),
    )
}

// ---------------------------------------------------------------------------
// 5
// ---------------------------------------------------------------------------

fn desk_study(scenario: Scenario) -> StudyResult {
    let mut cfg = StudyConfig::desk(ScenarioConfig::new(scenario, 20, 505));
    cfg.fit.sampler = SamplerConfig { chains: 4, warmup: 500, samples: 500, ..Default::default() };
    run_replication_study(&cfg).unwrap()
}

fn c5_desk_study() -> Outcome {
    let mut problems = Vec::new();
    let mut gaps = Vec::new();
    let mut lines = Vec::new();
    for scenario in [Scenario::A, Scenario::B] {
        let study = desk_study(scenario);
        let get = |m| study.report(m).unwrap_or_else(|| panic!("{m:?} missing"));
        let (rdd, bmtm, hbmtm) = (get(Method::Rdd), get(Method::Bmtm), get(Method::Hbmtm));
        let (b_is, h_is, h_cp) = (bmtm.is_score.unwrap(), hbmtm.is_score.unwrap(), hbmtm.cp.unwrap());
        lines.push(format!(
            "{scenario:?}: MAE {:.3}/{:.3}/{:.3}, IS {b_is:.3}/{h_is:.3}, HBMTM CP {h_cp:.2}",
            rdd.mae, bmtm.mae, hbmtm.mae
        ));
        if !(hbmtm.mae < bmtm.mae && bmtm.mae < rdd.mae) {
            problems.push(format!("{scenario:?} MAE ordering"));
        }
        if !(h_is < b_is) {
            problems.push(format!("{scenario:?} IS ordering"));
        }
        if !(0.75..=1.0).contains(&h_cp) {
            problems.push(format!("{scenario:?} HBMTM coverage {h_cp}"));
        }
        gaps.push(bmtm.mae - hbmtm.mae);
    }
    if !(gaps[1] > gaps[0]) {
        problems.push(format!("MAE gap A {:.3} not below B {:.3}", gaps[0], gaps[1]));
    }
    let detail = format!("{} (RDD/BMTM/HBMTM){}", lines.join("; "), if problems.is_empty() { String::new() } else { format!("; failed: {}", problems.join(", ")) });
    Outcome::new(problems.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 7
// ---------------------------------------------------------------------------

fn c7_application() -> Outcome {
    let app = ApplicationConfig { seed: 707, ..Default::default() };
    let data = simulate_application(&app).unwrap();
    let cfg = FitConfig {
        model: ModelKind::Hbmtm,
        neighborhoods: data.truth.neighborhoods.clone(),
        priors: PriorConfig::application(),
        sampler: SamplerConfig { chains: 4, warmup: 500, samples: 500, seed: 708, ..Default::default() },
        point: PointEstimate::Median,
        ..Default::default()
    };
    let observations: Vec<Observation> = data.observations.clone();
    let result = fit(&observations, &cfg).unwrap();
    let mut problems = Vec::new();

    let mut worst_ratio = 0.0f64;
    for (m, nk) in result.neighborhoods.iter().enumerate() {
        for g in 0..result.n_groups {
            let (draws, group) = result.step2_draws(m, g);
            let gammas = gamma_draws(draws, group).unwrap();
            let mut ratios: Vec<f64> = endpoint_density(&gammas, nk).iter().map(|e| e.ratio()).collect();
            ratios.sort_by(f64::total_cmp);
            let median = ratios[ratios.len() / 2];
            worst_ratio = worst_ratio.max(median);
            if median >= 1e-3 {
                problems.push(format!("K={} group {g}: endpoint/peak {median:.2e}", nk.k));
            }
        }
    }

    // bands whose spending sits just below each threshold, against bands far above it
    let mut pattern = Vec::new();
    for (m, nk) in result.neighborhoods.iter().enumerate() {
        let below = (nk.k / app.band_width) as usize - 1;
        let far = below + 10;
        let (near, high) = (result.estimate(m, below).point, result.estimate(m, far).point);
        pattern.push(format!("K={}: band {below} {near:.0}, band {far} {high:.0}", nk.k));
        if !(near > 0.0 && high < near) {
            problems.push(format!("K={} effect pattern {near} vs {high}", nk.k));
        }
    }
    let detail = format!(
        "worst median endpoint/peak {worst_ratio:.1e}; {}{}",
        pattern.join("; "),
        if problems.is_empty() { String::new() } else { format!("; failed: {}", problems.join(", ")) }
    );
    Outcome::new(problems.is_empty(), detail)
}

// ---------------------------------------------------------------------------
// 8
// ---------------------------------------------------------------------------

fn c8_metrics() -> Outcome {
    let inside = interval_metrics(&[0.5], &[(0.0, 1.0)], 0.1).unwrap();
    let outside = interval_metrics(&[1.2], &[(0.0, 1.0)], 0.1).unwrap();
    let checks = [
        inside.is_score == 1.0 && inside.cp == 1.0 && inside.al == 1.0,
        (outside.is_score - (1.0 + 20.0 * 0.2)).abs() < 1e-12 && outside.cp == 0.0,
        mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap() == 1.0,
        mae(&[3.0, 4.0], &[3.0, 4.0]).unwrap() == 0.0,
        hdi(&[2.0; 10], 0.9).unwrap() == (2.0, 2.0),
    ];
    let passed = checks.iter().all(|&c| c);
    Outcome::new(
        passed,
        format!("inside IS {:.12}, outside IS {:.12}, checks {:?}", inside.is_score, outside.is_score, checks),
    )
}
