//! Synthetic multi-group datasets with known parameters and effects.
//!
//! Each group has a Singh-Maddala non-bunching distribution and, for every
//! neighbourhood, a skew-normal bunching component with its own weight. An
//! observation bunches at neighbourhood `m` with probability `pi_m`; bunching
//! draws are truncated to the window, other draws come from the non-bunching
//! distribution over its whole support.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::distributions::{draw_positive_normal, Family, SinghMaddala, SkewNormal};
use crate::error::{Error, Result};
use crate::estimands::{bunching_mean, non_bunching_mean};
use crate::model::{validate_neighborhoods, NeighborhoodSpec, Observation};
use crate::quadrature::QuadConfig;
use crate::special::sigmoid;

/// Smallest probability that an untruncated bunching draw lands inside its
/// window before generation is refused.
const MIN_ACCEPTANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    A,
    B,
    Custom,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Scenario::A),
            "B" => Ok(Scenario::B),
            "CUSTOM" => Ok(Scenario::Custom),
            _ => Err(Error::Config(format!("unknown scenario {s:?}; expected A, B or custom"))),
        }
    }
}

/// Population means and spreads of the group-level parameters. The mixing
/// weight is on the logit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub mu_pi: f64,
    pub sigma_pi: f64,
    pub mu_omega: f64,
    pub sigma_omega: f64,
    pub mu_delta: f64,
    pub sigma_delta: f64,
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_b: f64,
    pub sigma_b: f64,
    pub mu_q: f64,
    pub sigma_q: f64,
}

/// Draws the population-level parameters of scenario A or B.
pub fn draw_hyperparams<R: Rng + ?Sized>(scenario: Scenario, rng: &mut R) -> Result<Hyperparams> {
    let (pi_loc, pi_spread) = match scenario {
        Scenario::A => (-2.0, 0.5),
        Scenario::B => (-4.0, 1.5),
        Scenario::Custom => {
            return Err(Error::Config("custom scenarios take explicit hyperparameters".into()));
        }
    };
    let mut normal = |mean: f64, sd: f64| Normal::new(mean, sd).expect("valid sd").sample(rng);
    let mu_pi = normal(pi_loc, 0.1);
    let mu_omega = normal(3.0, 0.1);
    let mu_delta = normal(4.0, 0.1);
    let mu_a = normal(3.5, 0.1);
    let mu_b = normal(39.0, 1.0);
    let mu_q = normal(1.5, 0.1);
    Ok(Hyperparams {
        mu_pi,
        mu_omega,
        mu_delta,
        mu_a,
        mu_b,
        mu_q,
        sigma_pi: draw_positive_normal(rng, pi_spread, 0.1),
        sigma_b: draw_positive_normal(rng, 2.0, 1.0),
        sigma_omega: draw_positive_normal(rng, 0.5, 0.1),
        sigma_delta: draw_positive_normal(rng, 0.5, 0.1),
        sigma_a: draw_positive_normal(rng, 0.2, 0.1),
        sigma_q: draw_positive_normal(rng, 0.2, 0.1),
    })
}

/// Bunching component of one group at one neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BunchingParams {
    /// Unconditional probability that an observation bunches here.
    pub pi: f64,
    pub gamma: SkewNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub theta: SinghMaddala,
    /// One entry per neighbourhood.
    pub bunching: Vec<BunchingParams>,
}

/// Group-level parameters around a single threshold `k`; the bunching
/// location is `k` for every group.
pub fn draw_group_params<R: Rng + ?Sized>(hyper: &Hyperparams, groups: usize, k: f64, rng: &mut R) -> Result<Vec<GroupParams>> {
    let normal = |rng: &mut R, mean: f64, sd: f64| -> Result<f64> {
        if sd == 0.0 {
            return Ok(mean);
        }
        Normal::new(mean, sd)
            .map(|d| d.sample(rng))
            .map_err(|e| Error::Config(format!("invalid spread {sd}: {e}")))
    };
    (0..groups)
        .map(|_| {
            let theta = SinghMaddala::new(
                draw_positive_normal(rng, hyper.mu_a, hyper.sigma_a),
                draw_positive_normal(rng, hyper.mu_b, hyper.sigma_b),
                draw_positive_normal(rng, hyper.mu_q, hyper.sigma_q),
            )?;
            let mut omega = normal(rng, hyper.mu_omega, hyper.sigma_omega)?;
            let mut tries = 0;
            while omega <= 0.0 {
                tries += 1;
                if tries > 1000 {
                    return Err(Error::Config("bunching scale draws are never positive".into()));
                }
                omega = normal(rng, hyper.mu_omega, hyper.sigma_omega)?;
            }
            let delta = normal(rng, hyper.mu_delta, hyper.sigma_delta)?;
            let pi = sigmoid(normal(rng, hyper.mu_pi, hyper.sigma_pi)?);
            Ok(GroupParams {
                theta,
                bunching: vec![BunchingParams { pi, gamma: SkewNormal::new(k, omega, delta)? }],
            })
        })
        .collect()
}

/// Known parameters, effects and latent labels of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub neighborhoods: Vec<NeighborhoodSpec>,
    pub groups: Vec<GroupParams>,
    /// `att[g][m]`: effect for group `g` at neighbourhood `m`.
    pub att: Vec<Vec<f64>>,
    /// Whether each observation was drawn from a bunching component.
    pub bunching: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyperparams: Option<Hyperparams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GroundTruth {
    /// Effects of every group at neighbourhood `m`.
    pub fn att_at(&self, m: usize) -> Vec<f64> {
        self.att.iter().map(|row| row[m]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub observations: Vec<Observation>,
    pub truth: GroundTruth,
}

/// Effect implied by a group's parameters at one neighbourhood.
pub fn true_att(theta: &SinghMaddala, gamma: &SkewNormal, nk: &NeighborhoodSpec) -> Result<f64> {
    Ok(bunching_mean(gamma, nk)? - non_bunching_mean(theta, nk)?)
}

/// Draws `sizes[g]` observations for each group.
pub fn generate_data<R: Rng + ?Sized>(
    params: &[GroupParams],
    sizes: &[usize],
    nks: &[NeighborhoodSpec],
    rng: &mut R,
) -> Result<SimulatedData> {
    validate_neighborhoods(nks)?;
    if params.len() != sizes.len() {
        return Err(Error::Config(format!("{} groups but {} sizes", params.len(), sizes.len())));
    }
    let mut att = Vec::with_capacity(params.len());
    for (g, p) in params.iter().enumerate() {
        if p.bunching.len() != nks.len() {
            return Err(Error::Config(format!(
                "group {g} has {} bunching components for {} neighbourhoods",
                p.bunching.len(),
                nks.len()
            )));
        }
        let total: f64 = p.bunching.iter().map(|b| b.pi).sum();
        if p.bunching.iter().any(|b| !(0.0..=1.0).contains(&b.pi)) || total > 1.0 {
            return Err(Error::Config(format!("group {g} bunching weights must lie in [0, 1] and sum to at most 1")));
        }
        for (b, nk) in p.bunching.iter().zip(nks) {
            let acceptance = b.gamma.mass(nk.lo(), nk.hi(), QuadConfig::default())?;
            if b.pi > 0.0 && acceptance < MIN_ACCEPTANCE {
                return Err(Error::Config(format!(
                    "group {g}: bunching density puts only {acceptance:e} of its mass in [{}, {}]",
                    nk.lo(),
                    nk.hi()
                )));
            }
        }
        att.push(
            p.bunching
                .iter()
                .zip(nks)
                .map(|(b, nk)| true_att(&p.theta, &b.gamma, nk))
                .collect::<Result<Vec<_>>>()?,
        );
    }

    let n: usize = sizes.iter().sum();
    let mut observations = Vec::with_capacity(n);
    let mut bunching = Vec::with_capacity(n);
    for (g, (p, &size)) in params.iter().zip(sizes).enumerate() {
        for _ in 0..size {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut component = None;
            for (m, b) in p.bunching.iter().enumerate() {
                acc += b.pi;
                if u < acc {
                    component = Some(m);
                    break;
                }
            }
            let y = match component {
                Some(m) => loop {
                    let y = p.bunching[m].gamma.draw(rng);
                    if nks[m].contains(y) {
                        break y;
                    }
                },
                None => p.theta.draw(rng),
            };
            observations.push(Observation { y, group: g });
            bunching.push(component.is_some());
        }
    }
    Ok(SimulatedData {
        observations,
        truth: GroundTruth {
            neighborhoods: nks.to_vec(),
            groups: params.to_vec(),
            att,
            bunching,
            hyperparams: None,
            seed: None,
        },
    })
}

/// Seed for replication `index` derived from a base seed.
pub fn derived_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}

/// Multi-group simulation around one threshold with groups split equally
/// over clusters of different sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub groups: usize,
    pub cluster_sizes: Vec<usize>,
    pub threshold: f64,
    pub half_width: f64,
    pub seed: u64,
    /// Required for [`Scenario::Custom`], ignored otherwise.
    pub hyperparams: Option<Hyperparams>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::A,
            groups: 100,
            cluster_sizes: vec![50, 100, 200, 300],
            threshold: 50.0,
            half_width: 10.0,
            seed: 1,
            hyperparams: None,
        }
    }
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, groups: usize, seed: u64) -> Self {
        Self {
            scenario,
            groups,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let clusters = self.cluster_sizes.len();
        if self.groups == 0 || clusters == 0 || !self.groups.is_multiple_of(clusters) {
            return Err(Error::Config(format!(
                "{} groups cannot be split equally over {clusters} clusters",
                self.groups
            )));
        }
        if self.cluster_sizes.contains(&0) {
            return Err(Error::Config("cluster sample sizes must be positive".into()));
        }
        if self.scenario == Scenario::Custom && self.hyperparams.is_none() {
            return Err(Error::Config("custom scenarios take explicit hyperparameters".into()));
        }
        NeighborhoodSpec::new(self.threshold, self.half_width)?;
        Ok(())
    }

    pub fn neighborhood(&self) -> Result<NeighborhoodSpec> {
        NeighborhoodSpec::new(self.threshold, self.half_width)
    }

    /// Sample size of every group; consecutive blocks of groups share a
    /// cluster.
    pub fn group_sizes(&self) -> Vec<usize> {
        let per_cluster = self.groups / self.cluster_sizes.len();
        (0..self.groups).map(|g| self.cluster_sizes[g / per_cluster]).collect()
    }
}

/// Generates one dataset for a scenario configuration.
pub fn simulate(cfg: &ScenarioConfig) -> Result<SimulatedData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hyper = match (cfg.scenario, cfg.hyperparams) {
        (Scenario::Custom, Some(h)) => h,
        (s, _) => draw_hyperparams(s, &mut rng)?,
    };
    let params = draw_group_params(&hyper, cfg.groups, cfg.threshold, &mut rng)?;
    let mut data = generate_data(&params, &cfg.group_sizes(), &[cfg.neighborhood()?], &mut rng)?;
    data.truth.hyperparams = Some(hyper);
    data.truth.seed = Some(cfg.seed);
    Ok(data)
}

/// Banded multi-threshold data resembling a loyalty-programme campaign:
/// group `g` holds customers whose previous spending falls in band `g`, and
/// customers bunch just above whichever threshold they can reach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApplicationConfig {
    pub groups: usize,
    pub band_width: f64,
    pub thresholds: Vec<f64>,
    pub half_width: f64,
    pub group_size: usize,
    pub seed: u64,
}

impl Default for ApplicationConfig {
    fn default() -> Self {
        Self {
            groups: 21,
            band_width: 10_000.0,
            thresholds: vec![30_000.0, 50_000.0, 70_000.0],
            half_width: 10_000.0,
            group_size: 600,
            seed: 1,
        }
    }
}

/// Parameters of the banded design. Group `g` spends around the middle of
/// its band; bunching is strongest at thresholds a little above that level
/// and fades with distance.
pub fn application_params(cfg: &ApplicationConfig) -> Result<Vec<GroupParams>> {
    (0..cfg.groups)
        .map(|g| {
            let centre = cfg.band_width * (g as f64 + 0.5);
            let theta = SinghMaddala::new(4.0, centre, 1.0)?;
            let mut bunching = cfg
                .thresholds
                .iter()
                .map(|&k| {
                    let gap = (k - centre) / cfg.band_width;
                    let pi = if gap >= 0.0 { 0.25 * (-0.6 * gap).exp() } else { 0.25 * (0.4 * gap).exp() };
                    Ok(BunchingParams {
                        pi: pi.max(0.01),
                        gamma: SkewNormal::new(k, 0.12 * cfg.half_width, 3.0)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let total: f64 = bunching.iter().map(|b| b.pi).sum();
            if total > 0.6 {
                bunching.iter_mut().for_each(|b| b.pi *= 0.6 / total);
            }
            Ok(GroupParams { theta, bunching })
        })
        .collect()
}

pub fn simulate_application(cfg: &ApplicationConfig) -> Result<SimulatedData> {
    if cfg.groups == 0 || cfg.group_size == 0 || !(cfg.band_width > 0.0) {
        return Err(Error::Config("application design needs groups, a group size and a band width".into()));
    }
    let nks = cfg
        .thresholds
        .iter()
        .map(|&k| NeighborhoodSpec::new(k, cfg.half_width))
        .collect::<Result<Vec<_>>>()?;
    let params = application_params(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = generate_data(&params, &vec![cfg.group_size; cfg.groups], &nks, &mut rng)?;
    data.truth.seed = Some(cfg.seed);
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nk() -> NeighborhoodSpec {
        NeighborhoodSpec::new(50.0, 10.0).unwrap()
    }

    fn group(pi: f64) -> GroupParams {
        GroupParams {
            theta: SinghMaddala::new(3.5, 39.0, 1.5).unwrap(),
            bunching: vec![BunchingParams { pi, gamma: SkewNormal::new(50.0, 3.0, 4.0).unwrap() }],
        }
    }

    #[test]
    fn scenario_centres() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<Hyperparams> = (0..400).map(|_| draw_hyperparams(Scenario::A, &mut rng).unwrap()).collect();
        let b: Vec<Hyperparams> = (0..400).map(|_| draw_hyperparams(Scenario::B, &mut rng).unwrap()).collect();
        let mean = |v: &[Hyperparams], f: fn(&Hyperparams) -> f64| v.iter().map(f).sum::<f64>() / v.len() as f64;
        assert!((mean(&a, |h| h.mu_pi) + 2.0).abs() < 0.02);
        assert!((mean(&b, |h| h.mu_pi) + 4.0).abs() < 0.02);
        assert!((mean(&a, |h| h.sigma_pi) - 0.5).abs() < 0.02);
        assert!((mean(&b, |h| h.sigma_pi) - 1.5).abs() < 0.02);
        assert!((mean(&a, |h| h.mu_b) - 39.0).abs() < 0.2);
        assert!(draw_hyperparams(Scenario::Custom, &mut rng).is_err());
    }

    #[test]
    fn hyperparams_are_seeded() {
        let h1 = draw_hyperparams(Scenario::A, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let h2 = draw_hyperparams(Scenario::A, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn paper_layout() {
        let cfg = ScenarioConfig::new(Scenario::A, 100, 7);
        let sizes = cfg.group_sizes();
        assert_eq!(&sizes[..25], &[50; 25]);
        assert_eq!(sizes[25], 100);
        assert_eq!(sizes[99], 300);
        let four = ScenarioConfig::new(Scenario::A, 4, 7);
        assert_eq!(four.group_sizes(), vec![50, 100, 200, 300]);
        assert!(ScenarioConfig::new(Scenario::A, 10, 7).validate().is_err());
    }

    #[test]
    fn locations_sit_on_the_threshold() {
        let data = simulate(&ScenarioConfig::new(Scenario::B, 8, 3)).unwrap();
        for g in &data.truth.groups {
            assert_eq!(g.bunching[0].gamma.beta, 50.0);
        }
    }

    #[test]
    fn zero_spread_gives_identical_groups() {
        let hyper = Hyperparams {
            mu_pi: -1.0,
            sigma_pi: 0.0,
            mu_omega: 3.0,
            sigma_omega: 0.0,
            mu_delta: 4.0,
            sigma_delta: 0.0,
            mu_a: 3.5,
            sigma_a: 0.0,
            mu_b: 39.0,
            sigma_b: 0.0,
            mu_q: 1.5,
            sigma_q: 0.0,
        };
        let groups = draw_group_params(&hyper, 5, 50.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(groups.iter().all(|g| *g == groups[0]));
    }

    #[test]
    fn no_bunching_weight_means_no_bunchers() {
        let data = generate_data(&[group(0.0)], &[2000], &[nk()], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(data.truth.bunching.iter().all(|&z| !z));
    }

    #[test]
    fn full_bunching_stays_inside() {
        let data = generate_data(&[group(1.0)], &[2000], &[nk()], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(data.observations.iter().all(|o| nk().contains(o.y)));
        assert!(data.truth.bunching.iter().all(|&z| z));
    }

    #[test]
    fn inside_share_matches_conditional_weight() {
        let p = group(0.1);
        let data = generate_data(std::slice::from_ref(&p), &[100_000], &[nk()], &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let inside: Vec<bool> = data
            .observations
            .iter()
            .zip(&data.truth.bunching)
            .filter(|(o, _)| nk().contains(o.y))
            .map(|(_, &z)| z)
            .collect();
        let n = inside.len() as f64;
        let share = inside.iter().filter(|&&z| z).count() as f64 / n;
        let g_mass = p.theta.mass(40.0, 60.0);
        let expected = 0.1 / (0.1 + 0.9 * g_mass);
        let sd = (expected * (1.0 - expected) / n).sqrt();
        assert!((share - expected).abs() < 3.0 * sd, "{share} vs {expected} ± {sd}");
    }

    #[test]
    fn stored_effects_recompute() {
        let data = simulate(&ScenarioConfig::new(Scenario::A, 4, 11)).unwrap();
        for (g, p) in data.truth.groups.iter().enumerate() {
            let d = true_att(&p.theta, &p.bunching[0].gamma, &nk()).unwrap();
            assert!((d - data.truth.att[g][0]).abs() < 1e-9);
        }
        let json = serde_json::to_string(&data.truth).unwrap();
        let back: GroundTruth = serde_json::from_str(&json).unwrap();
        assert_eq!(back, data.truth);
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let cfg = ScenarioConfig::new(Scenario::A, 8, 21);
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        assert_ne!(derived_seed(1, 0), derived_seed(1, 1));
        assert_eq!(derived_seed(1, 3), derived_seed(1, 3));
    }

    #[test]
    fn stray_bunching_density_is_refused() {
        let mut p = group(0.2);
        p.bunching[0].gamma = SkewNormal::new(50.0, 0.5, 0.0).unwrap();
        let far = NeighborhoodSpec::new(100.0, 5.0).unwrap();
        assert!(generate_data(&[p], &[10], &[far], &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn application_design_shape() {
        let cfg = ApplicationConfig { group_size: 200, ..Default::default() };
        let data = simulate_application(&cfg).unwrap();
        assert_eq!(data.truth.groups.len(), 21);
        assert_eq!(data.truth.neighborhoods.len(), 3);
        assert_eq!(data.observations.len(), 21 * 200);
        // a group just below the first threshold gains more than one far above it
        assert!(data.truth.att[2][0] > 0.0);
        assert!(data.truth.att[15][0] < data.truth.att[2][0]);
    }
}
