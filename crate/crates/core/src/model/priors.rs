//! Prior families and the default prior sets for simulation and application
//! fits.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal as NormalDist};
use serde::{Deserialize, Serialize};

use crate::distributions::{draw_positive_normal, normal_ln_pdf, positive_normal_ln_pdf};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    /// A normal with location `loc` truncated to `[0, inf)`. With `loc = 0`
    /// this is the half-normal.
    PositiveNormal { loc: f64, sd: f64 },
}

impl Prior {
    pub fn normal(mean: f64, sd: f64) -> Self {
        Prior::Normal { mean, sd }
    }

    pub fn positive_normal(loc: f64, sd: f64) -> Self {
        Prior::PositiveNormal { loc, sd }
    }

    pub fn half_normal(sd: f64) -> Self {
        Prior::PositiveNormal { loc: 0.0, sd }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let (center, sd) = match *self {
            Prior::Normal { mean, sd } => (mean, sd),
            Prior::PositiveNormal { loc, sd } => (loc, sd),
        };
        if !(center.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(Error::Config(format!(
                "prior {name}: need a finite location and a positive sd, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn is_positive(&self) -> bool {
        matches!(self, Prior::PositiveNormal { .. })
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => normal_ln_pdf(x, mean, sd),
            Prior::PositiveNormal { loc, sd } => positive_normal_ln_pdf(x, loc, sd),
        }
    }

    /// Derivative of [`Prior::ln_pdf`] with respect to `x` (inside the support).
    pub fn d_ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } | Prior::PositiveNormal { loc: mean, sd } => -(x - mean) / (sd * sd),
        }
    }

    /// Log density of `u = ln x` when `x` has this prior, with its derivative
    /// in `u`. Includes the `+u` Jacobian of the exponential map.
    pub fn ln_pdf_of_log(&self, u: f64) -> (f64, f64) {
        let x = u.exp();
        (self.ln_pdf(x) + u, self.d_ln_pdf(x) * x + 1.0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => NormalDist::new(mean, sd).map(|d| d.sample(rng)).unwrap_or(mean),
            Prior::PositiveNormal { loc, sd } => draw_positive_normal(rng, loc, sd),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    #[default]
    Simulation,
    Application,
    Custom,
}

/// Every prior used by the single-group and hierarchical models.
///
/// Single-group step 1: `log_a`, `log_b`, `log_q` (on the log scale).
/// Single-group step 2: `omega`, `delta`, `logit_pi`, and `beta_offset`
/// (prior on `beta - K`, used only when the location is free).
/// Hierarchical step 1: `mu_*` and `sigma_*` for `a`, `b`, `q` (random
/// effects on the log scale). Hierarchical step 2: `mu_*` and `sigma_*` for
/// `pi` (logit scale), `omega` (log scale) and `delta`, plus `sigma_beta` for
/// a free location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mode: PriorMode,
    pub log_a: Prior,
    pub log_b: Prior,
    pub log_q: Prior,
    pub omega: Prior,
    pub delta: Prior,
    pub logit_pi: Prior,
    pub beta_offset: Prior,
    pub mu_a: Prior,
    pub mu_b: Prior,
    pub mu_q: Prior,
    pub sigma_a: Prior,
    pub sigma_b: Prior,
    pub sigma_q: Prior,
    pub mu_pi: Prior,
    pub mu_omega: Prior,
    pub mu_delta: Prior,
    pub sigma_pi: Prior,
    pub sigma_omega: Prior,
    pub sigma_delta: Prior,
    pub sigma_beta: Prior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self::simulation()
    }
}

impl PriorConfig {
    pub fn simulation() -> Self {
        Self {
            mode: PriorMode::Simulation,
            log_a: Prior::normal(0.0, 1.5),
            log_b: Prior::normal(0.0, 1.5),
            log_q: Prior::normal(40f64.ln(), 1.0),
            omega: Prior::half_normal(10.0),
            delta: Prior::normal(0.0, 2.0),
            logit_pi: Prior::normal(0.0, 1.5),
            beta_offset: Prior::normal(0.0, 10.0),
            mu_a: Prior::normal(0.0, 2.5),
            mu_b: Prior::normal(3.0, 2.0),
            mu_q: Prior::normal(0.0, 2.5),
            sigma_a: Prior::half_normal(1.0),
            sigma_b: Prior::half_normal(1.0),
            sigma_q: Prior::half_normal(1.0),
            mu_pi: Prior::normal(0.0, 1.5),
            mu_omega: Prior::normal(2.0, 1.0),
            mu_delta: Prior::normal(0.0, 1.0),
            sigma_pi: Prior::half_normal(1.0),
            sigma_omega: Prior::half_normal(1.0),
            sigma_delta: Prior::half_normal(1.0),
            sigma_beta: Prior::half_normal(10.0),
        }
    }

    /// Hierarchical priors for currency-scale data (thresholds in the tens of
    /// thousands). The single-group priors are shared with
    /// [`PriorConfig::simulation`] except for the free-location prior.
    pub fn application() -> Self {
        Self {
            mode: PriorMode::Application,
            beta_offset: Prior::normal(0.0, 1000.0),
            mu_a: Prior::normal(1.0, 1.0),
            mu_b: Prior::normal(10.0, 2.0),
            mu_q: Prior::normal(0.0, 1.0),
            sigma_a: Prior::positive_normal(0.5, 1.0),
            sigma_b: Prior::positive_normal(10.0, 2.0),
            sigma_q: Prior::half_normal(1.0),
            mu_pi: Prior::normal(2.0, 1.0),
            mu_omega: Prior::normal(7.0, 0.5),
            mu_delta: Prior::normal(0.0, 1.0),
            sigma_pi: Prior::half_normal(0.5),
            sigma_omega: Prior::half_normal(1.0),
            sigma_delta: Prior::half_normal(0.5),
            sigma_beta: Prior::half_normal(1000.0),
            ..Self::simulation()
        }
    }

    pub fn for_mode(mode: PriorMode) -> Self {
        match mode {
            PriorMode::Simulation | PriorMode::Custom => Self::simulation(),
            PriorMode::Application => Self::application(),
        }
        .with_mode(mode)
    }

    fn with_mode(mut self, mode: PriorMode) -> Self {
        self.mode = mode;
        self
    }

    fn entries(&self) -> [(&'static str, &Prior); 20] {
        [
            ("log_a", &self.log_a),
            ("log_b", &self.log_b),
            ("log_q", &self.log_q),
            ("omega", &self.omega),
            ("delta", &self.delta),
            ("logit_pi", &self.logit_pi),
            ("beta_offset", &self.beta_offset),
            ("mu_a", &self.mu_a),
            ("mu_b", &self.mu_b),
            ("mu_q", &self.mu_q),
            ("sigma_a", &self.sigma_a),
            ("sigma_b", &self.sigma_b),
            ("sigma_q", &self.sigma_q),
            ("mu_pi", &self.mu_pi),
            ("mu_omega", &self.mu_omega),
            ("mu_delta", &self.mu_delta),
            ("sigma_pi", &self.sigma_pi),
            ("sigma_omega", &self.sigma_omega),
            ("sigma_delta", &self.sigma_delta),
            ("sigma_beta", &self.sigma_beta),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, prior) in self.entries() {
            prior.validate(name)?;
            let must_be_positive = name == "omega" || name.starts_with("sigma_");
            if must_be_positive && !prior.is_positive() {
                return Err(Error::Config(format!(
                    "prior {name} is on a positive quantity and must be positive_normal"
                )));
            }
        }
        Ok(())
    }

    /// Parses a JSON document. Keys present override the defaults of the
    /// document's `mode` (simulation when absent); unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: serde_json::Value = serde_json::from_str(text)?;
        let obj = doc
            .as_object()
            .ok_or_else(|| Error::Config("prior config must be a JSON object".into()))?;
        let mode = match obj.get("mode") {
            Some(m) => serde_json::from_value(m.clone())?,
            None => PriorMode::Simulation,
        };
        let mut merged = serde_json::to_value(Self::for_mode(mode))?;
        let target = merged.as_object_mut().expect("PriorConfig serializes to an object");
        for (k, v) in obj {
            if !target.contains_key(k) {
                return Err(Error::Config(format!("unknown prior key {k:?}")));
            }
            target.insert(k.clone(), v.clone());
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
