//! End-to-end fits: step 1 on observations outside every neighbourhood,
//! the non-bunching parameters frozen at their posterior mean, then step 2
//! separately in each neighbourhood.

use serde::{Deserialize, Serialize};

use crate::distributions::{Family, SinghMaddala, SkewNormal};
use crate::error::{Error, Result};
use crate::estimands::{posterior_att, AttEstimate, PointEstimate};
use crate::model::{
    partition, HierStep1Posterior, HierStep2Posterior, InsideNormalization, NeighborhoodSpec, Observation,
    Parameterization, PartitionedData, PriorConfig, Step1Posterior, Step2Posterior,
};
use crate::sampler::{ess_of_chains, rhat_of_chains, run_chains, PosteriorDraws, SamplerConfig};
use crate::simgen::derived_seed;

/// R̂ above this value is reported as a convergence warning.
pub const RHAT_WARNING: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Independent fits per group.
    Bmtm,
    /// Random effects across groups.
    #[default]
    Hbmtm,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bmtm" => Ok(ModelKind::Bmtm),
            "hbmtm" => Ok(ModelKind::Hbmtm),
            _ => Err(Error::Config(format!("unknown model {s:?}; expected bmtm or hbmtm"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub model: ModelKind,
    pub neighborhoods: Vec<NeighborhoodSpec>,
    pub priors: PriorConfig,
    pub sampler: SamplerConfig,
    /// Target acceptance rate used for hierarchical posteriors, whose
    /// funnel geometry needs smaller steps.
    pub hierarchical_target_accept: f64,
    pub free_beta: bool,
    pub normalization: InsideNormalization,
    pub parameterization: Parameterization,
    pub point: PointEstimate,
    pub level: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Hbmtm,
            neighborhoods: vec![NeighborhoodSpec { k: 50.0, half_width: 10.0 }],
            priors: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            hierarchical_target_accept: 0.95,
            free_beta: false,
            normalization: InsideNormalization::default(),
            parameterization: Parameterization::default(),
            point: PointEstimate::Mean,
            level: 0.9,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        crate::model::validate_neighborhoods(&self.neighborhoods)?;
        if self.neighborhoods.is_empty() {
            return Err(Error::Config("at least one threshold is required".into()));
        }
        self.priors.validate()?;
        self.sampler.validate()?;
        self.sampler.with_target_accept(self.hierarchical_target_accept).validate()?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("interval level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }

    fn stage_sampler(&self, stage: u64, hierarchical: bool) -> SamplerConfig {
        let cfg = self.sampler.with_seed(derived_seed(self.sampler.seed, stage));
        if hierarchical {
            cfg.with_target_accept(self.hierarchical_target_accept)
        } else {
            cfg
        }
    }
}

/// Convergence summary of one sampling stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDiagnostics {
    pub stage: String,
    pub max_rhat: f64,
    pub max_rhat_param: String,
    pub min_ess: f64,
    pub n_divergent: usize,
    pub divergence_rate: f64,
    pub seconds: f64,
    pub warnings: Vec<String>,
}

impl StageDiagnostics {
    pub fn compute(stage: impl Into<String>, draws: &PosteriorDraws, seconds: f64) -> Self {
        let stage = stage.into();
        let (mut max_rhat, mut max_rhat_param, mut min_ess) = (f64::NAN, String::new(), f64::INFINITY);
        let mut warnings = Vec::new();
        for name in &draws.names {
            let Ok(chains) = draws.chain_columns(name) else { continue };
            let constant = chains.iter().flatten().all(|&v| v == chains[0][0]);
            if constant {
                continue;
            }
            if let Ok(r) = rhat_of_chains(&chains) {
                if !(r <= max_rhat) {
                    max_rhat = r;
                    max_rhat_param.clone_from(name);
                }
                if r > RHAT_WARNING {
                    warnings.push(format!("{stage}: R-hat {r:.3} for {name}"));
                }
            }
            if let Ok(e) = ess_of_chains(&chains) {
                min_ess = min_ess.min(e);
            }
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        log::debug!("{stage}: {seconds:.2}s, max R-hat {max_rhat:.3}, min ESS {min_ess:.0}");
        Self {
            stage,
            max_rhat,
            max_rhat_param,
            min_ess,
            n_divergent: draws.n_divergent(),
            divergence_rate: draws.divergence_rate(),
            seconds,
            warnings,
        }
    }
}

/// Output of a two-step fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ModelKind,
    pub neighborhoods: Vec<NeighborhoodSpec>,
    pub n_groups: usize,
    /// Frozen non-bunching parameters per group.
    pub theta_hats: Vec<SinghMaddala>,
    /// One entry per group for independent fits, a single entry otherwise.
    pub step1: Vec<PosteriorDraws>,
    /// `step2[m]`: per-group draws for independent fits, a single entry
    /// otherwise.
    pub step2: Vec<Vec<PosteriorDraws>>,
    /// Ordered by threshold, then group.
    pub estimates: Vec<AttEstimate>,
    pub diagnostics: Vec<StageDiagnostics>,
}

impl FitResult {
    /// Step-2 draws for group `g` at neighbourhood `m`, with the group index
    /// to use for column lookup.
    pub fn step2_draws(&self, m: usize, g: usize) -> (&PosteriorDraws, Option<usize>) {
        match self.model {
            ModelKind::Bmtm => (&self.step2[m][g], None),
            ModelKind::Hbmtm => (&self.step2[m][0], Some(g)),
        }
    }

    pub fn estimate(&self, m: usize, g: usize) -> &AttEstimate {
        &self.estimates[m * self.n_groups + g]
    }

    /// Posterior-mean mixing weight and bunching parameters.
    pub fn mixture_point(&self, m: usize, g: usize) -> Result<(f64, SkewNormal)> {
        let (draws, group) = self.step2_draws(m, g);
        let name = |p: &str| group.map_or_else(|| p.to_string(), |g| format!("{p}[{g}]"));
        Ok((
            draws.mean(&name("pi"))?,
            SkewNormal::new(draws.mean(&name("beta"))?, draws.mean(&name("omega"))?, draws.mean(&name("delta"))?)?,
        ))
    }

    pub fn warnings(&self) -> Vec<String> {
        self.diagnostics.iter().flat_map(|d| d.warnings.iter().cloned()).collect()
    }
}

/// Fits the configured model to observations labelled by group.
pub fn fit(observations: &[Observation], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let data = partition(observations, &cfg.neighborhoods)?;
    if data.outside.is_empty() {
        return Err(Error::Data("no observations outside the neighbourhoods".into()));
    }
    for (m, inside) in data.inside.iter().enumerate() {
        if inside.is_empty() {
            return Err(Error::Data(format!("no observations in the neighbourhood of K = {}", cfg.neighborhoods[m].k)));
        }
    }
    match cfg.model {
        ModelKind::Bmtm => fit_bmtm(&data, cfg),
        ModelKind::Hbmtm => fit_hbmtm(&data, cfg),
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = std::time::Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

fn posterior_mean_theta(draws: &PosteriorDraws, group: Option<usize>) -> Result<SinghMaddala> {
    let name = |p: &str| group.map_or_else(|| p.to_string(), |g| format!("{p}[{g}]"));
    SinghMaddala::new(draws.mean(&name("a"))?, draws.mean(&name("b"))?, draws.mean(&name("q"))?)
}

/// Independent two-step fits for each group.
pub fn fit_bmtm(data: &PartitionedData, cfg: &FitConfig) -> Result<FitResult> {
    let outside = data.outside_by_group();
    let inside: Vec<Vec<Vec<f64>>> = (0..data.neighborhoods.len()).map(|m| data.inside_by_group(m)).collect();
    let n_groups = data.n_groups;
    let n_nk = data.neighborhoods.len() as u64;

    let mut theta_hats = Vec::with_capacity(n_groups);
    let mut step1 = Vec::with_capacity(n_groups);
    let mut step2: Vec<Vec<PosteriorDraws>> = vec![Vec::with_capacity(n_groups); data.neighborhoods.len()];
    let mut diagnostics = Vec::new();
    for g in 0..n_groups {
        if outside[g].is_empty() {
            return Err(Error::Data(format!("group {g} has no observations outside the neighbourhoods")));
        }
        let stage = g as u64 * (n_nk + 1);
        let post = Step1Posterior::new(&outside[g], &data.neighborhoods, cfg.priors);
        let (draws, secs) = timed(|| run_chains(&post, &cfg.stage_sampler(stage, false)))?;
        diagnostics.push(StageDiagnostics::compute(format!("step1 group {g}"), &draws, secs));
        let theta = posterior_mean_theta(&draws, None)?;
        for (m, nk) in data.neighborhoods.iter().enumerate() {
            if inside[m][g].is_empty() {
                return Err(Error::Data(format!("group {g} has no observations in the neighbourhood of K = {}", nk.k)));
            }
            let post = Step2Posterior::new(&inside[m][g], &theta, nk, cfg.priors, cfg.free_beta, cfg.normalization);
            let (d2, secs) = timed(|| run_chains(&post, &cfg.stage_sampler(stage + 1 + m as u64, false)))?;
            diagnostics.push(StageDiagnostics::compute(format!("step2 K={} group {g}", nk.k), &d2, secs));
            step2[m].push(d2);
        }
        theta_hats.push(theta);
        step1.push(draws);
    }

    let mut estimates = Vec::with_capacity(n_groups * data.neighborhoods.len());
    for (m, nk) in data.neighborhoods.iter().enumerate() {
        for g in 0..n_groups {
            let deltas = posterior_att(&step2[m][g], None, &theta_hats[g], nk)?;
            estimates.push(AttEstimate::from_draws(g, nk.k, deltas, cfg.level, cfg.point)?);
        }
    }
    Ok(FitResult {
        model: ModelKind::Bmtm,
        neighborhoods: data.neighborhoods.clone(),
        n_groups,
        theta_hats,
        step1,
        step2,
        estimates,
        diagnostics,
    })
}

/// Hierarchical two-step fit: one step-1 posterior across all groups, then
/// one hierarchical step-2 posterior per neighbourhood sharing the frozen
/// per-group non-bunching parameters.
pub fn fit_hbmtm(data: &PartitionedData, cfg: &FitConfig) -> Result<FitResult> {
    let n_groups = data.n_groups;
    let post = HierStep1Posterior::new(&data.outside_by_group(), &data.neighborhoods, cfg.priors, cfg.parameterization);
    let (draws, secs) = timed(|| run_chains(&post, &cfg.stage_sampler(0, true)))?;
    let mut diagnostics = vec![StageDiagnostics::compute("step1", &draws, secs)];
    let theta_hats = (0..n_groups)
        .map(|g| posterior_mean_theta(&draws, Some(g)))
        .collect::<Result<Vec<_>>>()?;

    let mut step2 = Vec::with_capacity(data.neighborhoods.len());
    let mut estimates = Vec::with_capacity(n_groups * data.neighborhoods.len());
    for (m, nk) in data.neighborhoods.iter().enumerate() {
        let post = HierStep2Posterior::new(
            &data.inside_by_group(m),
            &theta_hats,
            nk,
            cfg.priors,
            cfg.free_beta,
            cfg.parameterization,
            cfg.normalization,
        );
        let (d2, secs) = timed(|| run_chains(&post, &cfg.stage_sampler(1 + m as u64, true)))?;
        diagnostics.push(StageDiagnostics::compute(format!("step2 K={}", nk.k), &d2, secs));
        for (g, theta) in theta_hats.iter().enumerate() {
            let deltas = posterior_att(&d2, Some(g), theta, nk)?;
            estimates.push(AttEstimate::from_draws(g, nk.k, deltas, cfg.level, cfg.point)?);
        }
        step2.push(vec![d2]);
    }
    Ok(FitResult {
        model: ModelKind::Hbmtm,
        neighborhoods: data.neighborhoods.clone(),
        n_groups,
        theta_hats,
        step1: vec![draws],
        step2,
        estimates,
        diagnostics,
    })
}

/// Fitted densities on a grid over one neighbourhood, scaled as densities
/// of the observations inside it; the two components sum to the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub group: usize,
    pub threshold: f64,
    pub y: f64,
    pub bunching: f64,
    pub non_bunching: f64,
    pub mixture: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub group: usize,
    pub threshold: f64,
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub group: usize,
    pub y: f64,
    pub density: f64,
}

pub fn density_grid(fit: &FitResult, points: usize) -> Result<Vec<DensityRow>> {
    let points = points.max(2);
    let mut rows = Vec::new();
    for (m, nk) in fit.neighborhoods.iter().enumerate() {
        for g in 0..fit.n_groups {
            let (pi, gamma) = fit.mixture_point(m, g)?;
            let theta = &fit.theta_hats[g];
            let f_mass = gamma.mass(nk.lo(), nk.hi(), Default::default())?;
            let g_mass = theta.mass(nk.lo(), nk.hi());
            let norm = pi + (1.0 - pi) * g_mass;
            for i in 0..points {
                let y = nk.lo() + (nk.hi() - nk.lo()) * i as f64 / (points - 1) as f64;
                let bunching = if f_mass > 0.0 { pi * gamma.pdf(y) / f_mass / norm } else { 0.0 };
                let non_bunching = (1.0 - pi) * theta.ln_pdf(y).exp() / norm;
                rows.push(DensityRow {
                    group: g,
                    threshold: nk.k,
                    y,
                    bunching,
                    non_bunching,
                    mixture: bunching + non_bunching,
                });
            }
        }
    }
    Ok(rows)
}

/// Histogram of observations inside each neighbourhood, per group.
pub fn histogram(data: &PartitionedData, bins: usize) -> Vec<HistogramRow> {
    let bins = bins.max(1);
    let mut rows = Vec::new();
    for (m, nk) in data.neighborhoods.iter().enumerate() {
        let by_group = data.inside_by_group(m);
        let width = (nk.hi() - nk.lo()) / bins as f64;
        for (g, ys) in by_group.iter().enumerate() {
            let mut counts = vec![0usize; bins];
            for &y in ys {
                let b = (((y - nk.lo()) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            for (b, &count) in counts.iter().enumerate() {
                rows.push(HistogramRow {
                    group: g,
                    threshold: nk.k,
                    bin_low: nk.lo() + width * b as f64,
                    bin_high: nk.lo() + width * (b + 1) as f64,
                    count,
                    density: if ys.is_empty() { 0.0 } else { count as f64 / (ys.len() as f64 * width) },
                });
            }
        }
    }
    rows
}

/// Fitted non-bunching density of every group on `(0, upper]`.
pub fn non_bunching_curves(fit: &FitResult, upper: f64, points: usize) -> Vec<CurveRow> {
    let points = points.max(1);
    let mut rows = Vec::with_capacity(points * fit.n_groups);
    for (g, theta) in fit.theta_hats.iter().enumerate() {
        for i in 1..=points {
            let y = upper * i as f64 / points as f64;
            rows.push(CurveRow { group: g, y, density: theta.ln_pdf(y).exp() });
        }
    }
    rows
}
