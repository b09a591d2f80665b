//! The four parametric families used by the model: Singh-Maddala (non-bunching
//! spending), skew-normal (bunching), and the half-normal / logit-normal
//! families that appear as priors and random-effect distributions.
//!
//! Parameters are validated when a family value is constructed; every method
//! afterwards assumes a valid parameter record. Log densities return `-inf`
//! outside the support, and the `checked_*` variants turn that into a domain
//! error instead.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_vec_with_breaks, QuadConfig};
use crate::special::{
    inv_mills, norm_cdf, norm_ln_cdf, norm_ln_pdf, norm_quantile, sigmoid, softplus,
    INV_PI, LN_SQRT_2PI,
};

/// Common surface of the parametric families.
pub trait Family: Sized {
    const PARAM_NAMES: &'static [&'static str];

    fn from_params(p: &[f64]) -> Result<Self>;
    fn params(&self) -> Vec<f64>;
    /// Closed support `(lower, upper)`.
    fn support(&self) -> (f64, f64);
    fn ln_pdf(&self, x: f64) -> f64;
    /// Partial derivatives of `ln_pdf(x)` with respect to `params()`.
    fn grad_ln_pdf(&self, x: f64) -> Vec<f64>;
    fn cdf(&self, x: f64) -> f64;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    fn in_support(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x.is_finite() && x >= lo && x <= hi
    }

    fn checked_ln_pdf(&self, x: f64) -> Result<f64> {
        if !self.in_support(x) {
            return Err(Error::Domain(format!("{x} is outside the support {:?}", self.support())));
        }
        Ok(self.ln_pdf(x))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {v}")))
    }
}

fn check_len(p: &[f64], n: usize) -> Result<()> {
    if p.len() == n {
        Ok(())
    } else {
        Err(Error::Domain(format!("expected {n} parameters, got {}", p.len())))
    }
}

// ---------------------------------------------------------------------------
// Singh-Maddala
// ---------------------------------------------------------------------------

/// Singh-Maddala (Burr XII) distribution with shapes `a`, `q` and scale `b`:
/// `g(y) = a q y^{a-1} / (b^a (1 + (y/b)^a)^{q+1})` on `y > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinghMaddala {
    pub a: f64,
    pub b: f64,
    pub q: f64,
}

impl SinghMaddala {
    pub fn new(a: f64, b: f64, q: f64) -> Result<Self> {
        check_positive("a", a)?;
        check_positive("b", b)?;
        check_positive("q", q)?;
        Ok(Self { a, b, q })
    }

    /// Log density and its gradient with respect to `(a, b, q)`, taking
    /// `ln y` so callers can cache it across parameter values.
    #[inline]
    pub fn ln_pdf_grad_ln_y(&self, ln_y: f64) -> (f64, [f64; 3]) {
        let Self { a, b, q } = *self;
        let ln_b = b.ln();
        let l = ln_y - ln_b;
        let u = a * l;
        let sp = softplus(u);
        let s = sigmoid(u);
        let value = a.ln() + q.ln() + (a - 1.0) * ln_y - a * ln_b - (q + 1.0) * sp;
        let da = 1.0 / a + l * (1.0 - (q + 1.0) * s);
        let db = (a / b) * ((q + 1.0) * s - 1.0);
        let dq = 1.0 / q - sp;
        (value, [da, db, dq])
    }

    #[inline]
    pub fn ln_pdf_ln_y(&self, ln_y: f64) -> f64 {
        let Self { a, b, q } = *self;
        let ln_b = b.ln();
        a.ln() + q.ln() + (a - 1.0) * ln_y - a * ln_b - (q + 1.0) * softplus(a * (ln_y - ln_b))
    }

    /// `ln(1 - G(y))`, exact in the far upper tail.
    pub fn ln_sf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        -self.q * softplus(self.a * (y.ln() - self.b.ln()))
    }

    /// CDF together with its gradient with respect to `(a, b, q)`.
    pub fn cdf_grad(&self, y: f64) -> (f64, [f64; 3]) {
        if y <= 0.0 {
            return (0.0, [0.0; 3]);
        }
        let Self { a, b, q } = *self;
        let l = y.ln() - b.ln();
        let u = a * l;
        let sp = softplus(u);
        let s = sigmoid(u);
        let sf = (-q * sp).exp();
        let cdf = -(-q * sp).exp_m1();
        (cdf, [q * s * l * sf, -q * s * (a / b) * sf, sp * sf])
    }

    /// Inverse CDF: `b ((1-u)^{-1/q} - 1)^{1/a}`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level must lie in [0, 1), got {u}")));
        }
        Ok(self.quantile_unchecked(u))
    }

    #[inline]
    fn quantile_unchecked(&self, u: f64) -> f64 {
        let inner = (-(-u).ln_1p() / self.q).exp_m1();
        self.b * inner.powf(1.0 / self.a)
    }

    /// Probability mass on `[lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        // difference of survival functions keeps precision when both cdfs are near 1
        let s_lo = self.ln_sf(lo).exp();
        let s_hi = self.ln_sf(hi).exp();
        s_lo - s_hi
    }
}

impl Family for SinghMaddala {
    const PARAM_NAMES: &'static [&'static str] = &["a", "b", "q"];

    fn from_params(p: &[f64]) -> Result<Self> {
        check_len(p, 3)?;
        Self::new(p[0], p[1], p[2])
    }

    fn params(&self) -> Vec<f64> {
        vec![self.a, self.b, self.q]
    }

    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn in_support(&self, x: f64) -> bool {
        x.is_finite() && x > 0.0
    }

    fn ln_pdf(&self, y: f64) -> f64 {
        if y <= 0.0 || y.is_nan() {
            return f64::NEG_INFINITY;
        }
        if y.is_infinite() {
            return f64::NEG_INFINITY;
        }
        self.ln_pdf_ln_y(y.ln())
    }

    fn grad_ln_pdf(&self, y: f64) -> Vec<f64> {
        self.ln_pdf_grad_ln_y(y.ln()).1.to_vec()
    }

    fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        -(self.ln_sf(y)).exp_m1()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile_unchecked(rng.random::<f64>())
    }
}

// ---------------------------------------------------------------------------
// Skew-normal
// ---------------------------------------------------------------------------

/// Skew-normal with location `beta`, scale `omega` and shape `delta`:
/// `f(y) = (2/ω) φ((y-β)/ω) Φ(δ (y-β)/ω)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewNormal {
    pub beta: f64,
    pub omega: f64,
    pub delta: f64,
}

/// Half-width, in units of `omega`, of the window outside which skew-normal
/// mass is treated as zero by the quadrature-based CDF.
const SN_CDF_REACH: f64 = 40.0;

impl SkewNormal {
    pub fn new(beta: f64, omega: f64, delta: f64) -> Result<Self> {
        check_finite("beta", beta)?;
        check_positive("omega", omega)?;
        check_finite("delta", delta)?;
        Ok(Self { beta, omega, delta })
    }

    /// Log density and gradient with respect to `(beta, omega, delta)`.
    #[inline]
    pub fn ln_pdf_grad(&self, y: f64) -> (f64, [f64; 3]) {
        let Self { beta, omega, delta } = *self;
        let z = (y - beta) / omega;
        let dz = delta * z;
        let value = std::f64::consts::LN_2 - omega.ln() - LN_SQRT_2PI - 0.5 * z * z + norm_ln_cdf(dz);
        let m = inv_mills(dz);
        let d_beta = (z - m * delta) / omega;
        let d_omega = (-1.0 + z * z - m * dz) / omega;
        let d_delta = m * z;
        (value, [d_beta, d_omega, d_delta])
    }

    /// `d ln f / d y`
    pub fn d_ln_pdf_dy(&self, y: f64) -> f64 {
        let z = (y - self.beta) / self.omega;
        (-z + inv_mills(self.delta * z) * self.delta) / self.omega
    }

    pub fn pdf(&self, y: f64) -> f64 {
        self.ln_pdf(y).exp()
    }

    /// Mean of the untruncated distribution, `β + ω δ' sqrt(2/π)` with
    /// `δ' = δ / sqrt(1 + δ²)`.
    pub fn mean(&self) -> f64 {
        let d = self.delta / (1.0 + self.delta * self.delta).sqrt();
        self.beta + self.omega * d * (2.0 * INV_PI).sqrt()
    }

    /// Breakpoints for integrating over `[lo, hi]`: the ends, the location,
    /// and offsets `β ± 3^k ω` so that no segment is much wider than its
    /// distance to the peak.
    pub(crate) fn quad_breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut breaks = vec![lo, hi];
        if self.beta > lo && self.beta < hi {
            breaks.push(self.beta);
        }
        let reach = (hi - self.beta).abs().max((self.beta - lo).abs());
        if !reach.is_finite() {
            breaks.sort_by(f64::total_cmp);
            return breaks;
        }
        // a scale that underflowed in an extreme leapfrog step must not stall the ladder
        let mut d = self.omega.max(reach * 1e-12);
        while d < reach {
            for c in [self.beta - d, self.beta + d] {
                if c > lo && c < hi {
                    breaks.push(c);
                }
            }
            d *= 3.0;
        }
        breaks.sort_by(f64::total_cmp);
        breaks
    }

    /// Probability mass on `[lo, hi]` by adaptive quadrature.
    pub fn mass(&self, lo: f64, hi: f64, cfg: QuadConfig) -> Result<f64> {
        if hi <= lo {
            return Ok(0.0);
        }
        let breaks = self.quad_breaks(lo, hi);
        integrate_vec_with_breaks(|y| [self.pdf(y)], &breaks, cfg).map(|r| r.value[0])
    }

    /// Gradient of the mass on `[lo, hi]` with respect to `(beta, omega, delta)`.
    /// Closed form: the parameter derivatives of the skew-normal CDF do not
    /// involve Owen's T function.
    pub fn mass_grad(&self, lo: f64, hi: f64) -> [f64; 3] {
        let Self { beta, omega, delta } = *self;
        let z_hi = (hi - beta) / omega;
        let z_lo = (lo - beta) / omega;
        let f_hi = self.pdf(hi);
        let f_lo = self.pdf(lo);
        let c = 1.0 + delta * delta;
        let d_delta = -((-0.5 * z_hi * z_hi * c).exp() - (-0.5 * z_lo * z_lo * c).exp()) * INV_PI / c;
        [-(f_hi - f_lo), -(z_hi * f_hi - z_lo * f_lo), d_delta]
    }
}

impl Family for SkewNormal {
    const PARAM_NAMES: &'static [&'static str] = &["beta", "omega", "delta"];

    fn from_params(p: &[f64]) -> Result<Self> {
        check_len(p, 3)?;
        Self::new(p[0], p[1], p[2])
    }

    fn params(&self) -> Vec<f64> {
        vec![self.beta, self.omega, self.delta]
    }

    fn support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn ln_pdf(&self, y: f64) -> f64 {
        let z = (y - self.beta) / self.omega;
        std::f64::consts::LN_2 - self.omega.ln() - LN_SQRT_2PI - 0.5 * z * z
            + norm_ln_cdf(self.delta * z)
    }

    fn grad_ln_pdf(&self, y: f64) -> Vec<f64> {
        self.ln_pdf_grad(y).1.to_vec()
    }

    /// CDF by quadrature of the density from `β - 40ω`.
    fn cdf(&self, y: f64) -> f64 {
        let lo = self.beta - SN_CDF_REACH * self.omega;
        let hi = self.beta + SN_CDF_REACH * self.omega;
        if y <= lo {
            return 0.0;
        }
        if y >= hi {
            return 1.0;
        }
        self.mass(lo, y, QuadConfig::with_rel_tol(1e-12))
            .unwrap_or(f64::NAN)
            .clamp(0.0, 1.0)
    }

    /// Two-normal representation: `β + ω (δ'|Z₀| + sqrt(1-δ'²) Z₁)`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let d = self.delta / (1.0 + self.delta * self.delta).sqrt();
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        self.beta + self.omega * (d * z0.abs() + (1.0 - d * d).sqrt() * z1)
    }
}

// ---------------------------------------------------------------------------
// Half-normal
// ---------------------------------------------------------------------------

/// Half-normal `N⁺(0, sd²)` on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfNormal {
    pub sd: f64,
}

impl HalfNormal {
    pub fn new(sd: f64) -> Result<Self> {
        check_positive("sd", sd)?;
        Ok(Self { sd })
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&u) {
            return Err(Error::Domain(format!("quantile level must lie in [0, 1), got {u}")));
        }
        Ok(self.sd * norm_quantile(0.5 + 0.5 * u))
    }
}

impl Family for HalfNormal {
    const PARAM_NAMES: &'static [&'static str] = &["sd"];

    fn from_params(p: &[f64]) -> Result<Self> {
        check_len(p, 1)?;
        Self::new(p[0])
    }

    fn params(&self) -> Vec<f64> {
        vec![self.sd]
    }

    fn support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        if !(x >= 0.0) || x.is_infinite() {
            return f64::NEG_INFINITY;
        }
        let z = x / self.sd;
        std::f64::consts::LN_2 - self.sd.ln() + norm_ln_pdf(z)
    }

    fn grad_ln_pdf(&self, x: f64) -> Vec<f64> {
        let s = self.sd;
        vec![-1.0 / s + x * x / (s * s * s)]
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        libm::erf(x / (self.sd * std::f64::consts::SQRT_2))
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.sd * z.abs()
    }
}

// ---------------------------------------------------------------------------
// Logit-normal
// ---------------------------------------------------------------------------

/// Logit-normal on `(0, 1)`: `logit(p) ~ N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl LogitNormal {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        check_finite("mu", mu)?;
        check_positive("sigma", sigma)?;
        Ok(Self { mu, sigma })
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {u}")));
        }
        Ok(sigmoid(self.mu + self.sigma * norm_quantile(u)))
    }
}

impl Family for LogitNormal {
    const PARAM_NAMES: &'static [&'static str] = &["mu", "sigma"];

    fn from_params(p: &[f64]) -> Result<Self> {
        check_len(p, 2)?;
        Self::new(p[0], p[1])
    }

    fn params(&self) -> Vec<f64> {
        vec![self.mu, self.sigma]
    }

    fn support(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn in_support(&self, x: f64) -> bool {
        x > 0.0 && x < 1.0
    }

    fn ln_pdf(&self, p: f64) -> f64 {
        if !(p > 0.0 && p < 1.0) {
            return f64::NEG_INFINITY;
        }
        let l = (p / (1.0 - p)).ln();
        let z = (l - self.mu) / self.sigma;
        norm_ln_pdf(z) - self.sigma.ln() - p.ln() - (-p).ln_1p()
    }

    fn grad_ln_pdf(&self, p: f64) -> Vec<f64> {
        let l = (p / (1.0 - p)).ln();
        let s = self.sigma;
        let r = l - self.mu;
        vec![r / (s * s), -1.0 / s + r * r / (s * s * s)]
    }

    fn cdf(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        norm_cdf(((p / (1.0 - p)).ln() - self.mu) / self.sigma)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        sigmoid(self.mu + self.sigma * z)
    }
}

// ---------------------------------------------------------------------------
// Dispatch by family tag
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    SinghMaddala,
    SkewNormal,
    HalfNormal,
    LogitNormal,
}

/// Gradient of the log density of `kind` at `x` with respect to `params`.
pub fn grad_logpdf(kind: FamilyKind, x: f64, params: &[f64]) -> Result<Vec<f64>> {
    fn go<F: Family>(x: f64, params: &[f64]) -> Result<Vec<f64>> {
        let f = F::from_params(params)?;
        f.checked_ln_pdf(x)?;
        Ok(f.grad_ln_pdf(x))
    }
    match kind {
        FamilyKind::SinghMaddala => go::<SinghMaddala>(x, params),
        FamilyKind::SkewNormal => go::<SkewNormal>(x, params),
        FamilyKind::HalfNormal => go::<HalfNormal>(x, params),
        FamilyKind::LogitNormal => go::<LogitNormal>(x, params),
    }
}

/// Log density of a normal with the given mean and sd.
#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    norm_ln_pdf((x - mean) / sd) - sd.ln()
}

/// Log density of a normal truncated to `[0, ∞)`, `N⁺(loc, sd²)`.
pub fn positive_normal_ln_pdf(x: f64, loc: f64, sd: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    normal_ln_pdf(x, loc, sd) - norm_ln_cdf(loc / sd)
}

/// Draw from `N⁺(loc, sd²)` by redrawing non-positive values (inverse-CDF
/// fallback when the acceptance rate would be poor).
pub fn draw_positive_normal<R: Rng + ?Sized>(rng: &mut R, loc: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return loc;
    }
    if loc / sd > -2.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = loc + sd * z;
            if x > 0.0 {
                return x;
            }
        }
    }
    let lower = norm_cdf(-loc / sd);
    let u: f64 = rng.random();
    (loc + sd * norm_quantile(lower + u * (1.0 - lower))).max(f64::MIN_POSITIVE)
}
