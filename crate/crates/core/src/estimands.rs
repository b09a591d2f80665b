//! The threshold effect: difference of the bunching and non-bunching
//! conditional means on a neighbourhood, its posterior draws and summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Family, SinghMaddala, SkewNormal};
use crate::error::{Error, Result};
use crate::model::{MixtureParams, NeighborhoodSpec};
use crate::quadrature::{integrate_vec_with_breaks, QuadConfig};
use crate::sampler::PosteriorDraws;

const ATT_REL_TOL: f64 = 1e-9;
const MIN_MASS: f64 = 1e-300;
/// Largest share of posterior draws allowed to fail the effect computation.
const MAX_FAILED_SHARE: f64 = 0.01;

/// Mean of a density restricted to `[lo, hi]`, integrating a rescaled
/// density so that tiny masses do not underflow before the ratio.
fn truncated_mean<F>(ln_pdf: F, breaks: &[f64], component: &str) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let scale = breaks.iter().map(|&y| ln_pdf(y)).fold(f64::NEG_INFINITY, f64::max);
    if !scale.is_finite() {
        return Err(Error::Estimand(format!("{component} density has no mass on the neighbourhood")));
    }
    let r = integrate_vec_with_breaks(
        |y| {
            let f = (ln_pdf(y) - scale).exp();
            [f, y * f]
        },
        breaks,
        QuadConfig::with_rel_tol(ATT_REL_TOL),
    )?;
    let [mass, moment] = r.value;
    if !(mass > 0.0) || mass.ln() + scale < MIN_MASS.ln() {
        return Err(Error::Estimand(format!("{component} density has no mass on the neighbourhood")));
    }
    Ok(moment / mass)
}

/// Mean of the bunching distribution restricted to the neighbourhood.
pub fn bunching_mean(gamma: &SkewNormal, nk: &NeighborhoodSpec) -> Result<f64> {
    truncated_mean(|y| gamma.ln_pdf(y), &gamma.quad_breaks(nk.lo(), nk.hi()), "bunching")
}

/// Mean of the non-bunching distribution restricted to the neighbourhood.
pub fn non_bunching_mean(theta: &SinghMaddala, nk: &NeighborhoodSpec) -> Result<f64> {
    truncated_mean(|y| theta.ln_pdf(y), &[nk.lo(), nk.k, nk.hi()], "non-bunching")
}

/// Threshold effect for one parameter set. Does not depend on the mixing
/// weight.
pub fn att(psi: &MixtureParams, nk: &NeighborhoodSpec) -> Result<f64> {
    Ok(bunching_mean(&psi.gamma, nk)? - non_bunching_mean(&psi.theta, nk)?)
}

/// Bunching-component draws `(beta, omega, delta)` from a fit; `group`
/// selects the indexed columns of a hierarchical fit.
pub fn gamma_draws(draws: &PosteriorDraws, group: Option<usize>) -> Result<Vec<SkewNormal>> {
    let col = |name: &str| match group {
        Some(g) => draws.column(&format!("{name}[{g}]")),
        None => draws.column(name),
    };
    let (beta, omega, delta) = (col("beta")?, col("omega")?, col("delta")?);
    Ok((0..beta.len())
        .map(|i| SkewNormal { beta: beta[i], omega: omega[i], delta: delta[i] })
        .collect())
}

/// Effect for each bunching draw with the non-bunching parameters frozen.
/// Draws whose effect cannot be computed are dropped with a warning, up to
/// one percent of the total.
pub fn att_draws(gammas: &[SkewNormal], theta_hat: &SinghMaddala, nk: &NeighborhoodSpec) -> Result<Vec<f64>> {
    let base = non_bunching_mean(theta_hat, nk)?;
    let results: Vec<Result<f64>> = gammas.par_iter().map(|g| Ok(bunching_mean(g, nk)? - base)).collect();
    let n = results.len();
    let mut out = Vec::with_capacity(n);
    let mut first_err = None;
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let failed = n - out.len();
    if let Some(e) = first_err {
        if failed as f64 > MAX_FAILED_SHARE * n as f64 {
            return Err(Error::Estimand(format!("{failed} of {n} draws failed; first failure: {e}")));
        }
        log::warn!("dropped {failed} of {n} effect draws at K = {}: {e}", nk.k);
    }
    Ok(out)
}

/// Posterior draws of the effect from a step-2 fit.
pub fn posterior_att(
    draws: &PosteriorDraws,
    group: Option<usize>,
    theta_hat: &SinghMaddala,
    nk: &NeighborhoodSpec,
) -> Result<Vec<f64>> {
    att_draws(&gamma_draws(draws, group)?, theta_hat, nk)
}

/// Shortest interval holding `ceil(level * n)` of the sorted samples; the
/// leftmost one on ties.
pub fn hdi(samples: &[f64], level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Estimand(format!("HDI level must lie in (0, 1), got {level}")));
    }
    if samples.len() < 10 {
        return Err(Error::Estimand(format!("HDI needs at least 10 samples, got {}", samples.len())));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Estimand("HDI samples must be finite".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let m = ((level * n as f64).ceil() as usize).clamp(1, n);
    let mut best = 0;
    for i in 1..=n - m {
        if s[i + m - 1] - s[i] < s[best + m - 1] - s[best] {
            best = i;
        }
    }
    Ok((s[best], s[best + m - 1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointEstimate {
    #[default]
    Mean,
    Median,
}

/// Posterior summary of the effect for one group and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttEstimate {
    pub group: usize,
    pub threshold: f64,
    pub point: f64,
    pub hdi_low: f64,
    pub hdi_high: f64,
    pub level: f64,
    pub n_draws: usize,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

impl AttEstimate {
    pub fn from_draws(group: usize, threshold: f64, draws: Vec<f64>, level: f64, point: PointEstimate) -> Result<Self> {
        let (hdi_low, hdi_high) = hdi(&draws, level)?;
        let point = match point {
            PointEstimate::Mean => draws.iter().sum::<f64>() / draws.len() as f64,
            PointEstimate::Median => median(&draws),
        };
        Ok(Self {
            group,
            threshold,
            point,
            hdi_low,
            hdi_high,
            level,
            n_draws: draws.len(),
            draws,
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.hdi_low <= value && value <= self.hdi_high
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Bunching density at both ends of the neighbourhood and at its mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointDensity {
    pub lower: f64,
    pub upper: f64,
    pub peak: f64,
}

impl EndpointDensity {
    /// Larger endpoint density as a fraction of the peak.
    pub fn ratio(&self) -> f64 {
        self.lower.max(self.upper) / self.peak
    }
}

/// Mode of a skew-normal. The log density is concave, so its derivative is
/// bisected on a bracket of three scales around the location.
pub fn skew_normal_mode(gamma: &SkewNormal) -> f64 {
    let (mut lo, mut hi) = (gamma.beta - 3.0 * gamma.omega, gamma.beta + 3.0 * gamma.omega);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gamma.d_ln_pdf_dy(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Containment diagnostic per draw: a well-specified bunching density is
/// negligible at the neighbourhood edges.
pub fn endpoint_density(gammas: &[SkewNormal], nk: &NeighborhoodSpec) -> Vec<EndpointDensity> {
    gammas
        .iter()
        .map(|g| EndpointDensity {
            lower: g.pdf(nk.lo()),
            upper: g.pdf(nk.hi()),
            peak: g.pdf(skew_normal_mode(g)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_quantile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    fn nk() -> NeighborhoodSpec {
        NeighborhoodSpec::new(50.0, 10.0).unwrap()
    }

    fn psi(pi: f64, delta: f64) -> MixtureParams {
        MixtureParams::new(
            pi,
            SkewNormal::new(50.0, 3.0, delta).unwrap(),
            SinghMaddala::new(3.5, 39.0, 1.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn symmetric_bunching_centres_on_threshold() {
        let p = psi(0.3, 0.0);
        let d = att(&p, &nk()).unwrap();
        assert!((bunching_mean(&p.gamma, &nk()).unwrap() - 50.0).abs() < 1e-9);
        assert!((d - (50.0 - non_bunching_mean(&p.theta, &nk()).unwrap())).abs() < 1e-12);
    }

    #[test]
    fn independent_of_mixing_weight() {
        assert_eq!(att(&psi(0.1, 2.0), &nk()).unwrap(), att(&psi(0.9, 2.0), &nk()).unwrap());
    }

    #[test]
    fn equal_means_give_zero() {
        // shift a symmetric bunching density onto the non-bunching conditional mean
        let theta = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let m = non_bunching_mean(&theta, &nk()).unwrap();
        let sym = NeighborhoodSpec::new(m, 10.0).unwrap();
        let shifted = SkewNormal::new(m, 2.0, 0.0).unwrap();
        let b = bunching_mean(&shifted, &sym).unwrap();
        assert!((b - m).abs() < 1e-9);
    }

    #[test]
    fn stable_under_tighter_tolerance() {
        let p = psi(0.2, 4.0);
        let coarse = att(&p, &nk()).unwrap();
        let breaks = p.gamma.quad_breaks(40.0, 60.0);
        let r = integrate_vec_with_breaks(
            |y| {
                let f = p.gamma.pdf(y);
                [f, y * f]
            },
            &breaks,
            QuadConfig::with_rel_tol(5e-10),
        )
        .unwrap();
        let fine = r.value[1] / r.value[0] - non_bunching_mean(&p.theta, &nk()).unwrap();
        assert!((coarse - fine).abs() < 1e-6);
    }

    #[test]
    fn no_mass_is_an_error() {
        let far = SkewNormal::new(500.0, 1.0, 0.0).unwrap();
        let err = bunching_mean(&far, &nk()).unwrap_err();
        assert!(err.to_string().contains("bunching"));
    }

    #[test]
    fn constant_draws_give_constant_effects() {
        let g = SkewNormal::new(50.0, 3.0, 4.0).unwrap();
        let theta = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let d = att_draws(&vec![g; 20], &theta, &nk()).unwrap();
        assert!(d.iter().all(|&v| v == d[0]));
    }

    #[test]
    fn too_many_failures_is_an_error() {
        let theta = SinghMaddala::new(3.5, 39.0, 1.5).unwrap();
        let mut gs = vec![SkewNormal::new(50.0, 3.0, 4.0).unwrap(); 199];
        gs.push(SkewNormal::new(500.0, 1.0, 0.0).unwrap());
        assert_eq!(att_draws(&gs, &theta, &nk()).unwrap().len(), 199);
        gs.push(SkewNormal::new(500.0, 1.0, 0.0).unwrap());
        gs.push(SkewNormal::new(500.0, 1.0, 0.0).unwrap());
        assert!(att_draws(&gs, &theta, &nk()).is_err());
    }

    #[test]
    fn hdi_of_constant_samples() {
        assert_eq!(hdi(&[2.5; 30], 0.9).unwrap(), (2.5, 2.5));
    }

    #[test]
    fn hdi_of_normal_matches_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (lo, hi) = hdi(&xs, 0.9).unwrap();
        let z = norm_quantile(0.95);
        assert!((lo + z).abs() < 0.03 && (hi - z).abs() < 0.03, "({lo}, {hi})");
    }

    #[test]
    fn hdi_of_exponential_hugs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let exp = Exp::new(1.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut rng)).collect();
        let (lo, hi) = hdi(&xs, 0.9).unwrap();
        assert!(lo < 0.02);
        assert!((hi - 10f64.ln()).abs() < 0.05);
    }

    #[test]
    fn hdi_width_grows_with_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let xs: Vec<f64> = (0..2_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut last = 0.0;
        for level in [0.1, 0.3, 0.5, 0.8, 0.9, 0.95, 0.99] {
            let (lo, hi) = hdi(&xs, level).unwrap();
            assert!(hi - lo >= last);
            last = hi - lo;
        }
    }

    #[test]
    fn hdi_input_errors() {
        assert!(hdi(&[1.0; 9], 0.9).is_err());
        assert!(hdi(&[1.0; 20], 1.0).is_err());
        assert!(hdi(&[1.0; 20], 0.0).is_err());
    }

    #[test]
    fn hdi_ties_take_leftmost_window() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(hdi(&xs, 0.5).unwrap(), (0.0, 4.0));
    }

    #[test]
    fn estimate_summaries() {
        let draws: Vec<f64> = (1..=11).map(f64::from).collect();
        let e = AttEstimate::from_draws(3, 50.0, draws.clone(), 0.9, PointEstimate::Median).unwrap();
        assert_eq!(e.point, 6.0);
        assert_eq!(e.n_draws, 11);
        let json = serde_json::to_string(&e).unwrap();
        assert!(!json.contains("draws\":["));
        let back: AttEstimate = serde_json::from_str(&json).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), json);
        let mean = AttEstimate::from_draws(3, 50.0, draws, 0.9, PointEstimate::Mean).unwrap();
        assert_eq!(mean.point, 6.0);
    }

    #[test]
    fn tight_bunching_vanishes_at_edges() {
        let g = SkewNormal::new(50.0, 1.0, 3.0).unwrap();
        let e = endpoint_density(&[g], &nk())[0];
        assert!(e.lower < 1e-8 && e.upper < 1e-8);
        assert_eq!(e.lower, g.ln_pdf(40.0).exp());
        assert!(e.ratio() < 1e-8);
    }

    #[test]
    fn mode_is_stationary() {
        for delta in [-6.0, -1.0, 0.0, 0.5, 4.0, 20.0] {
            let g = SkewNormal::new(50.0, 3.0, delta).unwrap();
            let m = skew_normal_mode(&g);
            assert!(g.d_ln_pdf_dy(m).abs() < 1e-6, "delta {delta}");
            assert!(g.pdf(m) >= g.pdf(m + 0.01) && g.pdf(m) >= g.pdf(m - 0.01));
        }
    }
}
