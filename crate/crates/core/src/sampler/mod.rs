//! Multi-chain No-U-Turn sampler with windowed warmup adaptation.
//!
//! Targets implement [`LogDensity`] on an unconstrained space; [`Model`] adds
//! parameter names, the map back to constrained space and a random starting
//! point. [`run_chains`] runs independent chains in parallel and collects the
//! constrained post-warmup draws into [`PosteriorDraws`].

mod adapt;
mod diagnostics;
mod draws;
mod nuts;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use diagnostics::{ess, ess_of_chains, mcse, rhat, rhat_of_chains};
pub use draws::{ChainDraws, PosteriorDraws};

pub type ChainRng = ChaCha8Rng;

/// An unnormalized log density with gradient on `R^dim`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    /// Implementations may return a non-finite value outside the support.
    fn ln_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Log density with non-finite results mapped to `-inf` and a zero gradient.
    fn checked_ln_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let lp = self.ln_density_grad(x, grad);
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            lp
        } else {
            grad.iter_mut().for_each(|g| *g = 0.0);
            f64::NEG_INFINITY
        }
    }
}

pub trait Model: LogDensity {
    /// Names of the constrained quantities returned by [`Model::constrain`].
    fn param_names(&self) -> Vec<String>;

    fn constrain(&self, x: &[f64]) -> Vec<f64>;

    /// A random unconstrained starting point, typically a prior draw.
    fn initial_point(&self, rng: &mut ChainRng) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_depth: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 3000,
            samples: 3000,
            seed: 1,
            target_accept: 0.8,
            max_depth: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        if self.warmup < 100 {
            return Err(Error::Config(format!("warmup must be >= 100, got {}", self.warmup)));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be >= 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!(
                "target_accept must lie in (0, 1), got {}",
                self.target_accept
            )));
        }
        if self.max_depth == 0 || self.max_depth > 20 {
            return Err(Error::Config(format!("max_depth must lie in 1..=20, got {}", self.max_depth)));
        }
        Ok(())
    }

    pub fn with_target_accept(mut self, target_accept: f64) -> Self {
        self.target_accept = target_accept;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

pub fn chain_rng(seed: u64, chain: usize) -> ChainRng {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Candidate starts drawn per chain; the one with the highest log density wins.
const START_CANDIDATES: usize = 10;

/// Prior-draw start plus uniform jitter. Several candidates are drawn and the
/// most probable is kept, so a chain does not begin in a far tail where the
/// step size collapses before it can move.
fn jittered_start<M: Model>(model: &M, rng: &mut ChainRng) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; model.dim()];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut found = 0;
    for _ in 0..100 {
        let mut x = model.initial_point(rng);
        for xi in &mut x {
            *xi += rng.random_range(-1.0..=1.0);
        }
        let lp = model.checked_ln_density_grad(&x, &mut grad);
        if !lp.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(b, _)| lp > *b) {
            best = Some((lp, x));
        }
        found += 1;
        if found == START_CANDIDATES {
            break;
        }
    }
    best.map(|(_, x)| x).ok_or_else(|| Error::Init("no finite starting point in 100 attempts".into()))
}

/// Runs `cfg.chains` chains from random starts.
pub fn run_chains<M: Model>(model: &M, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let results: Vec<Result<ChainDraws>> = (0..cfg.chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = chain_rng(cfg.seed, chain);
            let init = jittered_start(model, &mut rng)?;
            nuts::run_chain(model, init, cfg, &mut rng)
        })
        .collect();
    assemble(model, results)
}

/// Runs one chain per supplied starting point.
pub fn run_chains_from<M: Model>(
    model: &M,
    inits: &[Vec<f64>],
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    if inits.is_empty() {
        return Err(Error::Config("no initial points supplied".into()));
    }
    let results: Vec<Result<ChainDraws>> = inits
        .par_iter()
        .enumerate()
        .map(|(chain, init)| {
            if init.len() != model.dim() {
                return Err(Error::Init(format!(
                    "initial point has length {}, model dimension is {}",
                    init.len(),
                    model.dim()
                )));
            }
            let mut grad = vec![0.0; model.dim()];
            if !model.checked_ln_density_grad(init, &mut grad).is_finite() {
                return Err(Error::Init(format!("log density is not finite at the start of chain {chain}")));
            }
            let mut rng = chain_rng(cfg.seed, chain);
            nuts::run_chain(model, init.clone(), cfg, &mut rng)
        })
        .collect();
    assemble(model, results)
}

fn assemble<M: Model>(model: &M, results: Vec<Result<ChainDraws>>) -> Result<PosteriorDraws> {
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;
    let draws = PosteriorDraws::new(model.param_names(), chains)?;
    let rate = draws.divergence_rate();
    if rate > 0.1 {
        log::warn!("{:.1}% of post-warmup transitions diverged", 100.0 * rate);
    }
    Ok(draws)
}
