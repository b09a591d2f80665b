//! Regression-discontinuity style baseline: one-sided kernel density
//! estimates on each side of the threshold with a linear boundary kernel,
//! turned into an effect as the difference of their conditional means.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NeighborhoodSpec;
use crate::quadrature::simpson;
use crate::special::{norm_cdf, norm_pdf};

/// Simpson subintervals per side.
const GRID: usize = 512;
/// The Gaussian kernel is cut off at this many bandwidths.
const GAUSSIAN_REACH: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Epanechnikov,
    Gaussian,
}

impl Kernel {
    fn reach(self) -> f64 {
        match self {
            Kernel::Epanechnikov => 1.0,
            Kernel::Gaussian => GAUSSIAN_REACH,
        }
    }

    fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            Kernel::Gaussian => {
                if u.abs() <= GAUSSIAN_REACH {
                    norm_pdf(u)
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫_{-∞}^{t} u^l K(u) du` for `l = 0, 1, 2`.
    fn partial_moments(self, t: f64) -> [f64; 3] {
        match self {
            Kernel::Epanechnikov => {
                let t = t.clamp(-1.0, 1.0);
                let (t2, t3) = (t * t, t * t * t);
                [
                    0.75 * (t - t3 / 3.0) + 0.5,
                    0.75 * (t2 / 2.0 - t2 * t2 / 4.0 - 0.25),
                    0.75 * (t3 / 3.0 - t3 * t2 / 5.0 + 2.0 / 15.0),
                ]
            }
            Kernel::Gaussian => [norm_cdf(t), -norm_pdf(t), norm_cdf(t) - t * norm_pdf(t)],
        }
    }

    /// Moments of the kernel restricted to `[lo, hi]`.
    fn moments(self, lo: f64, hi: f64) -> [f64; 3] {
        let (a, b) = (self.partial_moments(lo), self.partial_moments(hi));
        [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeConfig {
    pub bandwidth: f64,
    pub kernel: Kernel,
    /// Data range used on both sides; the neighbourhood when unset.
    pub range: Option<(f64, f64)>,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth: 10.0,
            kernel: Kernel::Epanechnikov,
            range: None,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self, k: f64) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if let Some((lo, hi)) = self.range {
            if !(lo < k && k < hi) {
                return Err(Error::Config(format!("range ({lo}, {hi}) must contain the threshold {k}")));
            }
        }
        Ok(())
    }
}

/// Kernel density estimate for data supported on `[lo, hi]` (either end may
/// be infinite). Within one kernel reach of an end, the kernel is replaced by
/// the linear boundary kernel built from its truncated moments.
#[derive(Debug, Clone)]
pub struct BoundaryKde {
    sorted: Vec<f64>,
    lo: f64,
    hi: f64,
    bandwidth: f64,
    kernel: Kernel,
}

impl BoundaryKde {
    pub fn new(data: &[f64], support: (f64, f64), bandwidth: f64, kernel: Kernel) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Data("kernel density estimate needs at least one observation".into()));
        }
        if !(bandwidth > 0.0) || !(support.0 < support.1) {
            return Err(Error::Config(format!("invalid bandwidth {bandwidth} or support {support:?}")));
        }
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            sorted,
            lo: support.0,
            hi: support.1,
            bandwidth,
            kernel,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Sum of `w(u_i)` over observations within kernel reach of `x`, with
    /// `u_i = (x - y_i) / h`.
    fn kernel_sum(&self, x: f64, w: impl Fn(f64) -> f64) -> f64 {
        let reach = self.kernel.reach() * self.bandwidth;
        let start = self.sorted.partition_point(|&y| y < x - reach);
        let end = self.sorted.partition_point(|&y| y <= x + reach);
        self.sorted[start..end].iter().map(|&y| w((x - y) / self.bandwidth)).sum()
    }

    /// Uncorrected estimate.
    pub fn plain_density(&self, x: f64) -> f64 {
        self.kernel_sum(x, |u| self.kernel.eval(u)) / (self.len() as f64 * self.bandwidth)
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let reach = self.kernel.reach();
        // admissible u = (x - y)/h for y in [lo, hi]
        let (u_lo, u_hi) = ((x - self.hi) / h, (x - self.lo) / h);
        if u_lo <= -reach && u_hi >= reach {
            return self.plain_density(x);
        }
        let [a0, a1, a2] = self.kernel.moments(u_lo.max(-reach), u_hi.min(reach));
        let det = a0 * a2 - a1 * a1;
        if !(det > 0.0) {
            return 0.0;
        }
        let k = self.kernel;
        self.kernel_sum(x, |u| (a2 - a1 * u) * k.eval(u)) / (det * self.len() as f64 * h)
    }

    /// Mean of the estimated density over `[a, b]` by Simpson's rule.
    pub fn conditional_mean(&self, a: f64, b: f64) -> Result<f64> {
        let step = (b - a) / GRID as f64;
        let xs: Vec<f64> = (0..=GRID).map(|i| a + step * i as f64).collect();
        let dens: Vec<f64> = xs.iter().map(|&x| self.density(x)).collect();
        let moment: Vec<f64> = xs.iter().zip(&dens).map(|(x, d)| x * d).collect();
        let mass = simpson(&dens, step);
        if !(mass > 0.0) {
            return Err(Error::Numerical(format!("estimated density has no mass on [{a}, {b}]")));
        }
        Ok(simpson(&moment, step) / mass)
    }

    /// Integral of the estimate over `[a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let step = (b - a) / GRID as f64;
        let dens: Vec<f64> = (0..=GRID).map(|i| self.density(a + step * i as f64)).collect();
        simpson(&dens, step)
    }
}

/// Boundary-corrected estimate at `x` from data on one side of `boundary`.
pub fn kde_boundary(data: &[f64], x: f64, boundary: f64, bandwidth: f64, kernel: Kernel) -> Result<f64> {
    let above = data.iter().all(|&y| y >= boundary);
    let below = data.iter().all(|&y| y <= boundary);
    let support = match (above, below) {
        (true, _) if x >= boundary => (boundary, f64::INFINITY),
        (_, true) if x <= boundary => (f64::NEG_INFINITY, boundary),
        _ => {
            return Err(Error::Data(format!(
                "evaluation point {x} and data must lie on the same side of {boundary}"
            )))
        }
    };
    Ok(BoundaryKde::new(data, support, bandwidth, kernel)?.density(x))
}

/// Both one-sided estimates around a threshold.
#[derive(Debug, Clone)]
pub struct RddFit {
    pub below: BoundaryKde,
    pub above: BoundaryKde,
    pub threshold: f64,
}

impl RddFit {
    pub fn new(data: &[f64], nk: &NeighborhoodSpec, cfg: &KdeConfig) -> Result<Self> {
        cfg.validate(nk.k)?;
        let (lo, hi) = cfg.range.unwrap_or((nk.lo(), nk.hi()));
        let below: Vec<f64> = data.iter().copied().filter(|&y| y >= lo && y < nk.k).collect();
        let above: Vec<f64> = data.iter().copied().filter(|&y| y >= nk.k && y <= hi).collect();
        if below.is_empty() || above.is_empty() {
            return Err(Error::Data(format!(
                "density-jump baseline needs data on both sides of {} ({} below, {} above)",
                nk.k,
                below.len(),
                above.len()
            )));
        }
        Ok(Self {
            below: BoundaryKde::new(&below, (lo, nk.k), cfg.bandwidth, cfg.kernel)?,
            above: BoundaryKde::new(&above, (nk.k, hi), cfg.bandwidth, cfg.kernel)?,
            threshold: nk.k,
        })
    }

    /// Right limit minus left limit of the estimated density, each scaled by
    /// its side's share of the data.
    pub fn density_jump(&self) -> f64 {
        let (nb, na) = (self.below.len() as f64, self.above.len() as f64);
        let n = nb + na;
        self.above.density(self.threshold) * na / n - self.below.density(self.threshold) * nb / n
    }
}

/// Effect estimate: conditional mean of the estimated density above the
/// threshold minus that below, over the neighbourhood halves.
pub fn rdd_estimate(data: &[f64], nk: &NeighborhoodSpec, cfg: &KdeConfig) -> Result<f64> {
    let fit = RddFit::new(data, nk, cfg)?;
    Ok(fit.above.conditional_mean(nk.k, nk.hi())? - fit.below.conditional_mean(nk.lo(), nk.k)?)
}
