//! Per-group likelihood terms: the truncation-adjusted non-bunching
//! likelihood outside the neighbourhoods and the two-component mixture
//! likelihood inside one neighbourhood.

use serde::{Deserialize, Serialize};

use super::neighborhood::NeighborhoodSpec;
use crate::distributions::{Family, SinghMaddala, SkewNormal};
use crate::error::{Error, Result};
use crate::quadrature::QuadConfig;
use crate::special::{log_add_exp, softplus};

/// Mixing weight with the bunching and non-bunching components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub pi: f64,
    pub gamma: SkewNormal,
    pub theta: SinghMaddala,
}

impl MixtureParams {
    pub fn new(pi: f64, gamma: SkewNormal, theta: SinghMaddala) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Domain(format!("mixing weight must lie in (0, 1), got {pi}")));
        }
        Ok(Self { pi, gamma, theta })
    }
}

/// `ln[π f(y|γ) + (1-π) g(y|θ)]`.
pub fn mixture_logpdf(y: f64, psi: &MixtureParams) -> f64 {
    log_add_exp(
        psi.pi.ln() + psi.gamma.ln_pdf(y),
        (-psi.pi).ln_1p() + psi.theta.ln_pdf(y),
    )
}

/// Probability that a Singh-Maddala draw falls outside every neighbourhood.
pub fn truncation_constant(theta: &SinghMaddala, nks: &[NeighborhoodSpec]) -> f64 {
    1.0 - nks.iter().map(|nk| theta.mass(nk.lo(), nk.hi())).sum::<f64>()
}

/// Non-bunching log likelihood of observations outside the neighbourhoods,
/// renormalized by the probability of lying outside them.
pub fn adjusted_loglik(theta: &SinghMaddala, outside: &[f64], nks: &[NeighborhoodSpec]) -> Result<f64> {
    let z = truncation_constant(theta, nks);
    if !(z > 0.0) {
        return Err(Error::Numerical(format!(
            "truncation constant {z} is not positive for {theta:?}"
        )));
    }
    let ll: f64 = outside.iter().map(|&y| theta.ln_pdf(y)).sum();
    Ok(ll - outside.len() as f64 * z.ln())
}

/// Cached data for the adjusted likelihood of one group.
#[derive(Debug, Clone)]
pub struct OutsideLikelihood {
    ln_y: Vec<f64>,
    sum_ln_y: f64,
    windows: Vec<(f64, f64)>,
}

impl OutsideLikelihood {
    pub fn new(outside: &[f64], nks: &[NeighborhoodSpec]) -> Self {
        let ln_y: Vec<f64> = outside.iter().map(|y| y.ln()).collect();
        let sum_ln_y = ln_y.iter().sum();
        Self {
            ln_y,
            sum_ln_y,
            windows: nks.iter().map(|nk| (nk.lo(), nk.hi())).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.ln_y.len()
    }

    /// Value and gradient with respect to `(ln a, ln b, ln q)`.
    pub fn value_grad(&self, log_theta: [f64; 3]) -> (f64, [f64; 3]) {
        let [la, lb, lq] = log_theta;
        let (a, b, q) = (la.exp(), lb.exp(), lq.exp());
        let n = self.ln_y.len() as f64;

        let (mut sum_t, mut sum_sp, mut sum_s, mut sum_ts) = (0.0, 0.0, 0.0, 0.0);
        for &l in &self.ln_y {
            let t = a * (l - lb);
            let e = (-t.abs()).exp();
            let sp = t.max(0.0) + e.ln_1p();
            let s = if t >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
            sum_t += t;
            sum_sp += sp;
            sum_s += s;
            sum_ts += t * s;
        }
        let mut value = n * (la + lq) - self.sum_ln_y + sum_t - (q + 1.0) * sum_sp;
        let mut grad = [
            n + sum_t - (q + 1.0) * sum_ts,
            -a * (n - (q + 1.0) * sum_s),
            n - q * sum_sp,
        ];

        if !self.windows.is_empty() && n > 0.0 {
            let sm = SinghMaddala { a, b, q };
            let mut z = 1.0;
            let mut dz = [0.0; 3];
            for &(lo, hi) in &self.windows {
                z -= sm.mass(lo, hi);
                let (_, g_hi) = sm.cdf_grad(hi);
                let (_, g_lo) = sm.cdf_grad(lo);
                for j in 0..3 {
                    dz[j] -= g_hi[j] - g_lo[j];
                }
            }
            if !(z > 0.0) {
                return (f64::NEG_INFINITY, [0.0; 3]);
            }
            value -= n * z.ln();
            let scale = [a, b, q];
            for j in 0..3 {
                grad[j] -= n * dz[j] * scale[j] / z;
            }
        }
        (value, grad)
    }
}

/// How observations inside a neighbourhood enter the step-2 likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InsideNormalization {
    /// Density of an observation given that it lies inside the
    /// neighbourhood: `[π f/F_N + (1-π) g] / [π + (1-π) G_N]`, where `F_N`
    /// and `G_N` are the component masses on the neighbourhood. The bunching
    /// component is the skew-normal truncated to the neighbourhood.
    #[default]
    Conditional,
    /// The mixture density `π f + (1-π) g` restricted to the neighbourhood
    /// without renormalization.
    Unnormalized,
}

/// Cached data for the mixture likelihood of one group in one neighbourhood,
/// with the non-bunching parameters frozen.
#[derive(Debug, Clone)]
pub struct MixtureLikelihood {
    ys: Vec<f64>,
    ln_g: Vec<f64>,
    g_mass: f64,
    lo: f64,
    hi: f64,
    normalization: InsideNormalization,
    quad: QuadConfig,
}

impl MixtureLikelihood {
    pub fn new(inside: &[f64], theta_hat: &SinghMaddala, nk: &NeighborhoodSpec, normalization: InsideNormalization) -> Self {
        Self {
            ys: inside.to_vec(),
            ln_g: inside.iter().map(|&y| theta_hat.ln_pdf(y)).collect(),
            g_mass: theta_hat.mass(nk.lo(), nk.hi()),
            lo: nk.lo(),
            hi: nk.hi(),
            normalization,
            quad: QuadConfig::with_rel_tol(1e-9),
        }
    }

    pub fn n(&self) -> usize {
        self.ys.len()
    }

    /// Value and gradient with respect to `(logit π, β, ω, δ)`.
    pub fn value_grad(&self, logit_pi: f64, gamma: &SkewNormal) -> (f64, [f64; 4]) {
        let n = self.ys.len() as f64;
        if n == 0.0 {
            return (0.0, [0.0; 4]);
        }
        let ln_pi = -softplus(-logit_pi);
        let ln_1m_pi = -softplus(logit_pi);
        let pi = ln_pi.exp();

        let conditional = self.normalization == InsideNormalization::Conditional;
        let (ln_f_mass, d_ln_f_mass) = if conditional {
            match gamma.mass(self.lo, self.hi, self.quad) {
                Ok(m) if m > 0.0 => {
                    let g = gamma.mass_grad(self.lo, self.hi);
                    (m.ln(), [g[0] / m, g[1] / m, g[2] / m])
                }
                _ => return (f64::NEG_INFINITY, [0.0; 4]),
            }
        } else {
            (0.0, [0.0; 3])
        };

        let mut value = 0.0;
        let mut sum_r = 0.0;
        let mut d_gamma = [0.0; 3];
        for (&y, &ln_g) in self.ys.iter().zip(&self.ln_g) {
            let (ln_f, df) = gamma.ln_pdf_grad(y);
            let u = ln_pi + ln_f - ln_f_mass;
            let v = ln_1m_pi + ln_g;
            let total = log_add_exp(u, v);
            let r = (u - total).exp();
            value += total;
            sum_r += r;
            for j in 0..3 {
                d_gamma[j] += r * df[j];
            }
        }
        let mut d_logit = sum_r - n * pi;
        for j in 0..3 {
            d_gamma[j] -= sum_r * d_ln_f_mass[j];
        }
        if conditional {
            let denom = pi + (1.0 - pi) * self.g_mass;
            value -= n * denom.ln();
            d_logit -= n * (1.0 - self.g_mass) * pi * (1.0 - pi) / denom;
        }
        (value, [d_logit, d_gamma[0], d_gamma[1], d_gamma[2]])
    }
}
