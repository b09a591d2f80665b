//! Globally adaptive Gauss–Kronrod (10/21-point) integration of vector-valued
//! integrands over finite intervals.
//!
//! Several moments of one density are usually needed together (mass, first
//! moment), so the integrator works on `[f64; N]` and shares every function
//! evaluation between the components.

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Tolerances for [`integrate_vec`]. A component has converged when its
/// error estimate is below `max(abs_tol, rel_tol * |value|)`.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 0.0,
            rel_tol: 1e-10,
            max_intervals: 500,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral<const N: usize> {
    pub value: [f64; N],
    pub abs_err: [f64; N],
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    err: [f64; N],
}

fn gk21<const N: usize, F: FnMut(f64) -> [f64; N]>(f: &mut F, a: f64, b: f64) -> Segment<N> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = [0.0; N];
    let mut gauss = [0.0; N];
    let mut res_abs = [0.0; N];
    for i in 0..N {
        kron[i] = WGK[10] * fc[i];
        res_abs[i] = WGK[10] * fc[i].abs();
    }
    let mut fv1 = [[0.0; N]; 10];
    let mut fv2 = [[0.0; N]; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        for i in 0..N {
            kron[i] += WGK[j] * (f1[i] + f2[i]);
            res_abs[i] += WGK[j] * (f1[i].abs() + f2[i].abs());
            if j % 2 == 1 {
                gauss[i] += WG[j / 2] * (f1[i] + f2[i]);
            }
        }
        fv1[j] = f1;
        fv2[j] = f2;
    }
    let mut value = [0.0; N];
    let mut err = [0.0; N];
    for i in 0..N {
        let mean = 0.5 * kron[i];
        let mut res_asc = WGK[10] * (fc[i] - mean).abs();
        for j in 0..10 {
            res_asc += WGK[j] * ((fv1[j][i] - mean).abs() + (fv2[j][i] - mean).abs());
        }
        let res_asc = res_asc * half.abs();
        value[i] = kron[i] * half;
        let mut e = ((kron[i] - gauss[i]) * half).abs();
        if res_asc != 0.0 && e != 0.0 {
            e = res_asc * (200.0 * e / res_asc).powf(1.5).min(1.0);
        }
        let resabs = res_abs[i] * half.abs();
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            e = e.max(50.0 * f64::EPSILON * resabs);
        }
        err[i] = e;
    }
    Segment { a, b, value, err }
}

/// Integrate a vector-valued function over `[breaks[0], breaks[last]]`,
/// starting from the given breakpoints (useful to place a split at a sharp
/// peak). Breakpoints must be non-decreasing.
pub fn integrate_vec_with_breaks<const N: usize, F>(
    mut f: F,
    breaks: &[f64],
    cfg: QuadConfig,
) -> Result<Integral<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Numerical(format!(
            "invalid integration breakpoints {breaks:?}"
        )));
    }
    let mut segments: Vec<Segment<N>> = breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk21(&mut f, w[0], w[1]))
        .collect();
    if segments.is_empty() {
        return Ok(Integral {
            value: [0.0; N],
            abs_err: [0.0; N],
            evaluations: 0,
        });
    }
    loop {
        let (value, err) = totals(&segments);
        let tol: [f64; N] = std::array::from_fn(|i| cfg.abs_tol.max(cfg.rel_tol * value[i].abs()));
        if (0..N).all(|i| err[i] <= tol[i]) {
            return Ok(Integral {
                value,
                abs_err: err,
                evaluations: 21 * segments.len(),
            });
        }
        if segments.len() >= cfg.max_intervals {
            return Err(Error::Numerical(format!(
                "quadrature did not converge in {} intervals (err {:?}, tol {:?})",
                cfg.max_intervals, err, tol
            )));
        }
        // split the segment with the worst error relative to the tolerance
        let (worst, _) = segments
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let score = (0..N)
                    .map(|i| s.err[i] / tol[i].max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                (k, score)
            })
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let s = segments.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(Error::Numerical(
                "quadrature interval collapsed below machine resolution".into(),
            ));
        }
        segments.push(gk21(&mut f, s.a, mid));
        segments.push(gk21(&mut f, mid, s.b));
    }
}

fn totals<const N: usize>(segments: &[Segment<N>]) -> ([f64; N], [f64; N]) {
    let mut value = [0.0; N];
    let mut err = [0.0; N];
    for s in segments {
        for i in 0..N {
            value[i] += s.value[i];
            err[i] += s.err[i];
        }
    }
    (value, err)
}

pub fn integrate_vec<const N: usize, F>(f: F, a: f64, b: f64, cfg: QuadConfig) -> Result<Integral<N>>
where
    F: FnMut(f64) -> [f64; N],
{
    integrate_vec_with_breaks(f, &[a, b], cfg)
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(mut f: F, a: f64, b: f64, cfg: QuadConfig) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_vec(|x| [f(x)], a, b, cfg).map(|r| r.value[0])
}

/// Composite Simpson's rule with `n` (even) subintervals on sampled values.
pub fn simpson(values: &[f64], step: f64) -> f64 {
    let n = values.len() - 1;
    debug_assert!(n.is_multiple_of(2) && n >= 2);
    let mut acc = values[0] + values[n];
    for (i, v) in values.iter().enumerate().take(n).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * step / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, QuadConfig::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn narrow_gaussian_needs_adaptivity() {
        let gauss = |s: f64| {
            move |x: f64| [(-0.5 * (x - 0.3) * (x - 0.3) / (s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())]
        };
        let r = integrate_vec(gauss(0.05), -5.0, 5.0, QuadConfig::with_rel_tol(1e-12)).unwrap();
        assert!((r.value[0] - 1.0).abs() < 1e-10);
        assert!(r.evaluations > 21);
        // a peak far narrower than the interval needs breakpoints graded towards it
        let mut breaks = vec![-5.0, 0.3, 5.0];
        let mut d = 1e-3;
        while d < 4.0 {
            breaks.extend([0.3 - d, 0.3 + d]);
            d *= 3.0;
        }
        breaks.sort_by(f64::total_cmp);
        let r = integrate_vec_with_breaks(gauss(1e-3), &breaks, QuadConfig::with_rel_tol(1e-12)).unwrap();
        assert!((r.value[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn vector_components_share_evaluations() {
        let mut calls = 0;
        let r = integrate_vec(
            |x| {
                calls += 1;
                [x.exp(), x * x.exp()]
            },
            0.0,
            1.0,
            QuadConfig::default(),
        )
        .unwrap();
        assert!((r.value[0] - (1f64.exp() - 1.0)).abs() < 1e-13);
        assert!((r.value[1] - 1.0).abs() < 1e-13);
        assert_eq!(calls, r.evaluations);
    }

    #[test]
    fn breakpoints_are_validated() {
        assert!(integrate_vec_with_breaks(|x| [x], &[1.0, 0.0], QuadConfig::default()).is_err());
        let empty = integrate_vec_with_breaks(|x| [x], &[1.0, 1.0], QuadConfig::default()).unwrap();
        assert_eq!(empty.value[0], 0.0);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let n = 8;
        let h = 2.0 / n as f64;
        let ys: Vec<f64> = (0..=n).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&ys, h) - 4.0).abs() < 1e-12);
    }
}
