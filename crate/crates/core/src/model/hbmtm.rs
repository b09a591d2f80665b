//! Hierarchical two-step posteriors with group-level random effects.
//!
//! Every group-level quantity is `mu + sigma * r` on its unconstrained scale
//! (log for `a, b, q, ω`, logit for `π`, identity for `δ, β`). In the
//! non-centred form `r` is a standard-normal coordinate; in the centred form
//! the sampler works on the group-level value itself.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::likelihood::{InsideNormalization, MixtureLikelihood, OutsideLikelihood};
use super::neighborhood::NeighborhoodSpec;
use super::priors::{Prior, PriorConfig};
use crate::distributions::{SinghMaddala, SkewNormal};
use crate::sampler::{ChainRng, LogDensity, Model};
use crate::special::{norm_ln_pdf, sigmoid, LN_SQRT_2PI};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    Centered,
    #[default]
    NonCentered,
}

/// One random effect `value = mu + sigma * r`.
#[derive(Clone, Copy)]
struct Effect {
    mu: f64,
    sigma: f64,
}

impl Effect {
    /// Group value and the log density contributed by the coordinate `r`.
    #[inline]
    fn forward(&self, param: Parameterization, r: f64) -> (f64, f64) {
        match param {
            Parameterization::NonCentered => (self.mu + self.sigma * r, norm_ln_pdf(r)),
            Parameterization::Centered => {
                let z = (r - self.mu) / self.sigma;
                (r, -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln())
            }
        }
    }

    /// Given `d lik / d value`, returns the gradients of the full term with
    /// respect to `(r, mu, ln sigma)`.
    #[inline]
    fn backward(&self, param: Parameterization, r: f64, d_value: f64) -> (f64, f64, f64) {
        match param {
            Parameterization::NonCentered => (self.sigma * d_value - r, d_value, self.sigma * r * d_value),
            Parameterization::Centered => {
                let z = (r - self.mu) / self.sigma;
                (d_value - z / self.sigma, z / self.sigma, z * z - 1.0)
            }
        }
    }

    fn initial(&self, param: Parameterization, rng: &mut ChainRng) -> f64 {
        let r: f64 = StandardNormal.sample(rng);
        match param {
            Parameterization::NonCentered => r,
            Parameterization::Centered => self.mu + self.sigma * r,
        }
    }
}

/// Hyperprior term for a scale parameter sampled on the log scale.
fn sigma_prior(prior: &Prior, ln_sigma: f64) -> (f64, f64) {
    prior.ln_pdf_of_log(ln_sigma)
}

fn draw_ln_sigma(prior: &Prior, rng: &mut ChainRng) -> f64 {
    prior.draw(rng).max(1e-8).ln()
}

/// Hierarchical step 1: per-group non-bunching parameters with log-normal
/// random effects. Layout: `[mu_a, mu_b, mu_q, ln sigma_a, ln sigma_b,
/// ln sigma_q]` followed by `(r_a, r_b, r_q)` per group.
#[derive(Debug, Clone)]
pub struct HierStep1Posterior {
    groups: Vec<OutsideLikelihood>,
    priors: PriorConfig,
    param: Parameterization,
}

const HYPER1: usize = 6;

impl HierStep1Posterior {
    /// `outside[g]` holds group `g`'s observations outside every neighbourhood.
    pub fn new(outside: &[Vec<f64>], nks: &[NeighborhoodSpec], priors: PriorConfig, param: Parameterization) -> Self {
        Self {
            groups: outside.iter().map(|ys| OutsideLikelihood::new(ys, nks)).collect(),
            priors,
            param,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    fn effects(&self, x: &[f64]) -> [Effect; 3] {
        std::array::from_fn(|j| Effect {
            mu: x[j],
            sigma: x[3 + j].exp(),
        })
    }

    fn hyper_priors(&self) -> [(&Prior, &Prior); 3] {
        let p = &self.priors;
        [(&p.mu_a, &p.sigma_a), (&p.mu_b, &p.sigma_b), (&p.mu_q, &p.sigma_q)]
    }
}

impl LogDensity for HierStep1Posterior {
    fn dim(&self) -> usize {
        HYPER1 + 3 * self.groups.len()
    }

    fn ln_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut lp = 0.0;
        for (j, (mu_prior, sigma_prior_j)) in self.hyper_priors().into_iter().enumerate() {
            lp += mu_prior.ln_pdf(x[j]);
            grad[j] += mu_prior.d_ln_pdf(x[j]);
            let (v, d) = sigma_prior(sigma_prior_j, x[3 + j]);
            lp += v;
            grad[3 + j] += d;
        }
        let effects = self.effects(x);
        for (g, lik) in self.groups.iter().enumerate() {
            let base = HYPER1 + 3 * g;
            let mut log_theta = [0.0; 3];
            for j in 0..3 {
                let (v, re) = effects[j].forward(self.param, x[base + j]);
                log_theta[j] = v;
                lp += re;
            }
            let (ll, d) = lik.value_grad(log_theta);
            lp += ll;
            for j in 0..3 {
                let (dr, dmu, dls) = effects[j].backward(self.param, x[base + j], d[j]);
                grad[base + j] += dr;
                grad[j] += dmu;
                grad[3 + j] += dls;
            }
        }
        lp
    }
}

impl Model for HierStep1Posterior {
    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["mu_a", "mu_b", "mu_q", "sigma_a", "sigma_b", "sigma_q"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for g in 0..self.groups.len() {
            names.extend(["a", "b", "q"].iter().map(|p| format!("{p}[{g}]")));
        }
        names
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        out.extend_from_slice(&x[..3]);
        out.extend(x[3..6].iter().map(|v| v.exp()));
        let effects = self.effects(x);
        for g in 0..self.groups.len() {
            for j in 0..3 {
                out.push(effects[j].forward(self.param, x[HYPER1 + 3 * g + j]).0.exp());
            }
        }
        out
    }

    fn initial_point(&self, rng: &mut ChainRng) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        let hp = self.hyper_priors();
        x.extend(hp.iter().map(|(m, _)| m.draw(rng)));
        x.extend(hp.iter().map(|(_, s)| draw_ln_sigma(s, rng)));
        let effects = self.effects(&x);
        for _ in 0..self.groups.len() {
            for e in &effects {
                x.push(e.initial(self.param, rng));
            }
        }
        x
    }
}

impl HierStep1Posterior {
    /// Per-group non-bunching parameters at an unconstrained point.
    pub fn group_thetas(&self, x: &[f64]) -> Vec<SinghMaddala> {
        let c = self.constrain(x);
        (0..self.groups.len())
            .map(|g| {
                let o = HYPER1 + 3 * g;
                SinghMaddala { a: c[o], b: c[o + 1], q: c[o + 2] }
            })
            .collect()
    }
}

/// Hierarchical step 2 for one neighbourhood: per-group mixing weights and
/// bunching parameters given frozen per-group non-bunching parameters.
/// Layout: `[mu_pi, mu_omega, mu_delta, ln sigma_pi, ln sigma_omega,
/// ln sigma_delta]`, then `ln sigma_beta` when the location is free, then
/// `(r_pi, r_omega, r_delta[, r_beta])` per group. The location effect is
/// centred at the threshold.
#[derive(Debug, Clone)]
pub struct HierStep2Posterior {
    groups: Vec<MixtureLikelihood>,
    priors: PriorConfig,
    threshold: f64,
    free_beta: bool,
    param: Parameterization,
}

impl HierStep2Posterior {
    /// `inside[g]` holds group `g`'s observations in the neighbourhood `nk`.
    pub fn new(
        inside: &[Vec<f64>],
        theta_hats: &[SinghMaddala],
        nk: &NeighborhoodSpec,
        priors: PriorConfig,
        free_beta: bool,
        param: Parameterization,
        normalization: InsideNormalization,
    ) -> Self {
        assert_eq!(inside.len(), theta_hats.len(), "one frozen theta per group");
        Self {
            groups: inside
                .iter()
                .zip(theta_hats)
                .map(|(ys, th)| MixtureLikelihood::new(ys, th, nk, normalization))
                .collect(),
            priors,
            threshold: nk.k,
            free_beta,
            param,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    fn n_hyper(&self) -> usize {
        if self.free_beta {
            7
        } else {
            6
        }
    }

    fn per_group(&self) -> usize {
        if self.free_beta {
            4
        } else {
            3
        }
    }

    /// Effects for `(logit π, ln ω, δ[, β])`.
    fn effects(&self, x: &[f64]) -> Vec<Effect> {
        let mut e: Vec<Effect> = (0..3).map(|j| Effect { mu: x[j], sigma: x[3 + j].exp() }).collect();
        if self.free_beta {
            e.push(Effect { mu: self.threshold, sigma: x[6].exp() });
        }
        e
    }

    fn hyper_priors(&self) -> [(&Prior, &Prior); 3] {
        let p = &self.priors;
        [(&p.mu_pi, &p.sigma_pi), (&p.mu_omega, &p.sigma_omega), (&p.mu_delta, &p.sigma_delta)]
    }
}

impl LogDensity for HierStep2Posterior {
    fn dim(&self) -> usize {
        self.n_hyper() + self.per_group() * self.groups.len()
    }

    fn ln_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut lp = 0.0;
        for (j, (mu_prior, sigma_prior_j)) in self.hyper_priors().into_iter().enumerate() {
            lp += mu_prior.ln_pdf(x[j]);
            grad[j] += mu_prior.d_ln_pdf(x[j]);
            let (v, d) = sigma_prior(sigma_prior_j, x[3 + j]);
            lp += v;
            grad[3 + j] += d;
        }
        if self.free_beta {
            let (v, d) = sigma_prior(&self.priors.sigma_beta, x[6]);
            lp += v;
            grad[6] += d;
        }
        let effects = self.effects(x);
        let (nh, pg) = (self.n_hyper(), self.per_group());
        for (g, lik) in self.groups.iter().enumerate() {
            let base = nh + pg * g;
            let mut vals = [0.0, 0.0, 0.0, self.threshold];
            for j in 0..pg {
                let (v, re) = effects[j].forward(self.param, x[base + j]);
                vals[j] = v;
                lp += re;
            }
            let omega = vals[1].exp();
            let gamma = SkewNormal { beta: vals[3], omega, delta: vals[2] };
            let (ll, d) = lik.value_grad(vals[0], &gamma);
            lp += ll;
            // d = (logit π, β, ω, δ) -> (logit π, ln ω, δ, β)
            let d_vals = [d[0], d[2] * omega, d[3], d[1]];
            for j in 0..pg {
                let (dr, dmu, dls) = effects[j].backward(self.param, x[base + j], d_vals[j]);
                grad[base + j] += dr;
                if j < 3 {
                    grad[j] += dmu;
                    grad[3 + j] += dls;
                } else {
                    grad[6] += dls;
                }
            }
        }
        lp
    }
}

impl Model for HierStep2Posterior {
    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = ["mu_pi", "mu_omega", "mu_delta", "sigma_pi", "sigma_omega", "sigma_delta"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        if self.free_beta {
            names.push("sigma_beta".into());
        }
        for g in 0..self.groups.len() {
            names.extend(["pi", "beta", "omega", "delta"].iter().map(|p| format!("{p}[{g}]")));
        }
        names
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        let nh = self.n_hyper();
        let mut out = Vec::with_capacity(nh + 4 * self.groups.len());
        out.extend_from_slice(&x[..3]);
        out.extend(x[3..nh].iter().map(|v| v.exp()));
        let effects = self.effects(x);
        for g in 0..self.groups.len() {
            let base = nh + self.per_group() * g;
            let v = |j: usize| effects[j].forward(self.param, x[base + j]).0;
            let beta = if self.free_beta { v(3) } else { self.threshold };
            out.extend([sigmoid(v(0)), beta, v(1).exp(), v(2)]);
        }
        out
    }

    fn initial_point(&self, rng: &mut ChainRng) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        let hp = self.hyper_priors();
        x.extend(hp.iter().map(|(m, _)| m.draw(rng)));
        x.extend(hp.iter().map(|(_, s)| draw_ln_sigma(s, rng)));
        if self.free_beta {
            x.push(draw_ln_sigma(&self.priors.sigma_beta, rng));
        }
        let effects = self.effects(&x);
        for _ in 0..self.groups.len() {
            for e in &effects {
                x.push(e.initial(self.param, rng));
            }
        }
        x
    }
}
