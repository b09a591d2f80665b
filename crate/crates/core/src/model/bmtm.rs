//! Single-group two-step posteriors.

use super::likelihood::{InsideNormalization, MixtureLikelihood, OutsideLikelihood};
use super::neighborhood::NeighborhoodSpec;
use super::priors::PriorConfig;
use crate::distributions::{SinghMaddala, SkewNormal};
use crate::sampler::{ChainRng, LogDensity, Model};
use crate::special::sigmoid;

/// Step 1: non-bunching parameters from observations outside every
/// neighbourhood. Sampled as `(ln a, ln b, ln q)` with priors on that scale.
#[derive(Debug, Clone)]
pub struct Step1Posterior {
    lik: OutsideLikelihood,
    priors: PriorConfig,
}

impl Step1Posterior {
    pub fn new(outside: &[f64], nks: &[NeighborhoodSpec], priors: PriorConfig) -> Self {
        Self {
            lik: OutsideLikelihood::new(outside, nks),
            priors,
        }
    }
}

impl LogDensity for Step1Posterior {
    fn dim(&self) -> usize {
        3
    }

    fn ln_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = &self.priors;
        let (ll, g) = self.lik.value_grad([x[0], x[1], x[2]]);
        let mut lp = ll;
        for (j, prior) in [p.log_a, p.log_b, p.log_q].iter().enumerate() {
            lp += prior.ln_pdf(x[j]);
            grad[j] = g[j] + prior.d_ln_pdf(x[j]);
        }
        lp
    }
}

impl Model for Step1Posterior {
    fn param_names(&self) -> Vec<String> {
        vec!["a".into(), "b".into(), "q".into()]
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.exp()).collect()
    }

    fn initial_point(&self, rng: &mut ChainRng) -> Vec<f64> {
        let p = &self.priors;
        vec![p.log_a.draw(rng), p.log_b.draw(rng), p.log_q.draw(rng)]
    }
}

/// Step 2: mixing weight and bunching parameters inside one neighbourhood
/// with the non-bunching parameters frozen. Sampled as
/// `(logit π, ln ω, δ[, β])`; the location is fixed at the threshold unless
/// `free_beta` is set.
#[derive(Debug, Clone)]
pub struct Step2Posterior {
    lik: MixtureLikelihood,
    priors: PriorConfig,
    threshold: f64,
    free_beta: bool,
}

impl Step2Posterior {
    pub fn new(
        inside: &[f64],
        theta_hat: &SinghMaddala,
        nk: &NeighborhoodSpec,
        priors: PriorConfig,
        free_beta: bool,
        normalization: InsideNormalization,
    ) -> Self {
        Self {
            lik: MixtureLikelihood::new(inside, theta_hat, nk, normalization),
            priors,
            threshold: nk.k,
            free_beta,
        }
    }

    fn beta(&self, x: &[f64]) -> f64 {
        if self.free_beta {
            x[3]
        } else {
            self.threshold
        }
    }
}

impl LogDensity for Step2Posterior {
    fn dim(&self) -> usize {
        if self.free_beta {
            4
        } else {
            3
        }
    }

    fn ln_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = &self.priors;
        let omega = x[1].exp();
        let beta = self.beta(x);
        let gamma = SkewNormal { beta, omega, delta: x[2] };
        let (ll, g) = self.lik.value_grad(x[0], &gamma);

        let (lp_omega, d_omega) = p.omega.ln_pdf_of_log(x[1]);
        let mut lp = ll + p.logit_pi.ln_pdf(x[0]) + lp_omega + p.delta.ln_pdf(x[2]);
        grad[0] = g[0] + p.logit_pi.d_ln_pdf(x[0]);
        grad[1] = g[2] * omega + d_omega;
        grad[2] = g[3] + p.delta.d_ln_pdf(x[2]);
        if self.free_beta {
            let offset = beta - self.threshold;
            lp += p.beta_offset.ln_pdf(offset);
            grad[3] = g[1] + p.beta_offset.d_ln_pdf(offset);
        }
        lp
    }
}

impl Model for Step2Posterior {
    fn param_names(&self) -> Vec<String> {
        ["pi", "beta", "omega", "delta"].iter().map(|s| s.to_string()).collect()
    }

    fn constrain(&self, x: &[f64]) -> Vec<f64> {
        vec![sigmoid(x[0]), self.beta(x), x[1].exp(), x[2]]
    }

    fn initial_point(&self, rng: &mut ChainRng) -> Vec<f64> {
        let p = &self.priors;
        let mut x = vec![p.logit_pi.draw(rng), p.omega.draw(rng).max(1e-8).ln(), p.delta.draw(rng)];
        if self.free_beta {
            x.push(self.threshold + p.beta_offset.draw(rng));
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;
    use crate::model::priors::Prior;
    use crate::sampler::{run_chains, SamplerConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn fd_check<M: LogDensity>(model: &M, x: &[f64]) {
        let mut g = vec![0.0; model.dim()];
        model.ln_density_grad(x, &mut g);
        let mut scratch = vec![0.0; model.dim()];
        for j in 0..x.len() {
            let h = 1e-5 * x[j].abs().max(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let fd = (model.ln_density_grad(&xp, &mut scratch) - model.ln_density_grad(&xm, &mut scratch)) / (2.0 * h);
            let err = (fd - g[j]).abs() / g[j].abs().max(1.0);
            assert!(err < 1e-5, "component {j} at {x:?}: analytic {} vs fd {fd}", g[j]);
        }
    }

    fn nk() -> NeighborhoodSpec {
        NeighborhoodSpec::new(50.0, 10.0).unwrap()
    }

    #[test]
    fn step1_gradient() {
        let theta = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ys: Vec<f64> = theta.sample(&mut rng, 300).into_iter().filter(|&y| !nk().contains(y)).collect();
        let post = Step1Posterior::new(&ys, &[nk()], PriorConfig::simulation());
        for _ in 0..50 {
            let x = [rng.random_range(0.3..2.0), rng.random_range(2.5..4.5), rng.random_range(-1.0..2.0)];
            fd_check(&post, &x);
        }
    }

    #[test]
    fn step1_without_data_is_the_prior() {
        let priors = PriorConfig::simulation();
        let post = Step1Posterior::new(&[], &[nk()], priors);
        let x = [0.4, 3.0, 2.0];
        let mut g = [0.0; 3];
        let lp = post.ln_density_grad(&x, &mut g);
        let expected = priors.log_a.ln_pdf(x[0]) + priors.log_b.ln_pdf(x[1]) + priors.log_q.ln_pdf(x[2]);
        assert_eq!(lp, expected);
    }

    #[test]
    fn step2_gradient_fixed_and_free() {
        let theta = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ys: Vec<f64> = (0..120).map(|_| rng.random_range(40.0..60.0)).collect();
        for free in [false, true] {
            for norm in [InsideNormalization::Conditional, InsideNormalization::Unnormalized] {
                let post = Step2Posterior::new(&ys, &theta, &nk(), PriorConfig::simulation(), free, norm);
                for _ in 0..50 {
                    let mut x = vec![rng.random_range(-3.0..1.0), rng.random_range(0.0..2.0), rng.random_range(-4.0..4.0)];
                    if free {
                        x.push(rng.random_range(47.0..53.0));
                    }
                    fd_check(&post, &x);
                }
            }
        }
    }

    #[test]
    fn step2_without_data_is_the_prior() {
        let priors = PriorConfig::simulation();
        let theta = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let post = Step2Posterior::new(&[], &theta, &nk(), priors, false, InsideNormalization::Conditional);
        let x = [-1.0, 1.2, 0.5];
        let mut g = [0.0; 3];
        let lp = post.ln_density_grad(&x, &mut g);
        let expected = priors.logit_pi.ln_pdf(x[0]) + priors.omega.ln_pdf_of_log(x[1]).0 + priors.delta.ln_pdf(x[2]);
        assert!((lp - expected).abs() < 1e-14);
        assert_eq!(post.constrain(&x)[1], 50.0);
    }

    #[test]
    fn transforms_round_trip() {
        let theta = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let post = Step2Posterior::new(&[], &theta, &nk(), PriorConfig::simulation(), true, InsideNormalization::Conditional);
        let (pi, omega, delta, beta) = (0.137, 2.9, -1.3, 51.2);
        let x = [crate::special::logit(pi), f64::ln(omega), delta, beta];
        let c = post.constrain(&x);
        assert!((c[0] - pi).abs() < 1e-12 && (c[1] - beta).abs() < 1e-12);
        assert!((c[2] - omega).abs() < 1e-12 && (c[3] - delta).abs() < 1e-12);
    }

    #[test]
    fn step1_recovers_known_theta() {
        let theta0 = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ys: Vec<f64> = theta0.sample(&mut rng, 5000).into_iter().filter(|&y| !nk().contains(y)).collect();
        let post = Step1Posterior::new(&ys, &[nk()], PriorConfig::simulation());
        let cfg = SamplerConfig { chains: 2, warmup: 500, samples: 500, seed: 4, ..Default::default() };
        let draws = run_chains(&post, &cfg).unwrap();
        for (name, truth) in [("a", 3.5), ("b", 39.0), ("q", 1.5)] {
            let (m, sd) = (draws.mean(name).unwrap(), draws.sd(name).unwrap());
            assert!((m - truth).abs() < 3.0 * sd, "{name}: {m} ± {sd}");
        }
    }

    #[test]
    fn custom_prior_changes_objective() {
        let mut priors = PriorConfig::simulation();
        priors.delta = Prior::normal(1.0, 0.5);
        let theta = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let a = Step2Posterior::new(&[], &theta, &nk(), priors, false, InsideNormalization::Conditional);
        let b = Step2Posterior::new(&[], &theta, &nk(), PriorConfig::simulation(), false, InsideNormalization::Conditional);
        let mut g = [0.0; 3];
        assert_ne!(a.ln_density_grad(&[0.0, 1.0, 0.0], &mut g), b.ln_density_grad(&[0.0, 1.0, 0.0], &mut g));
    }
}
