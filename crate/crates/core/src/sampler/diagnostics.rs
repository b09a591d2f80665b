//! Split-chain R-hat and autocorrelation-based effective sample size.

use super::PosteriorDraws;
use crate::error::{Error, Result};

fn check_chains(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::Diagnostic(format!(
            "need at least two chains, got {}",
            chains.len()
        )));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::Diagnostic(format!("need at least four draws per chain, got {n}")));
    }
    Ok(n)
}

/// Splits each chain into halves, truncating all chains to the shortest.
fn split(chains: &[Vec<f64>], n: usize) -> Vec<&[f64]> {
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Split-R-hat over per-chain draw sequences. Constant draws give 1.
pub fn rhat_of_chains(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_chains(chains)?;
    let parts = split(chains, n);
    let len = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let within = parts.iter().map(|p| variance(p)).sum::<f64>() / parts.len() as f64;
    let between = len * variance(&means);
    if within <= 0.0 {
        return Ok(if between <= 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (len - 1.0) / len * within + between / len;
    Ok((var_plus / within).sqrt())
}

fn autocovariance(x: &[f64], lag: usize, m: f64) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size on split chains using Geyer's initial
/// monotone sequence. Constant draws give 0.
pub fn ess_of_chains(chains: &[Vec<f64>]) -> Result<f64> {
    let n = check_chains(chains)?;
    let parts = split(chains, n);
    let m = parts.len() as f64;
    let len = parts[0].len();
    let nf = len as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let acov0: Vec<f64> = parts.iter().zip(&means).map(|(p, &mu)| autocovariance(p, 0, mu)).collect();
    let mean_var = acov0.iter().sum::<f64>() / m * nf / (nf - 1.0);
    let var_plus = mean_var * (nf - 1.0) / nf + variance(&means);
    if !(var_plus > 0.0) || !(mean_var > 0.0) {
        return Ok(0.0);
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = parts
            .iter()
            .zip(&means)
            .map(|(p, &mu)| autocovariance(p, lag, mu))
            .sum::<f64>()
            / m;
        1.0 - (mean_var - mean_acov) / var_plus
    };

    let mut rho_hat = vec![0.0; len + 2];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut t = 1;
    while t + 4 < len && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat[t + 1] = even;
            rho_hat[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if even > 0.0 {
        rho_hat[max_t + 1] = even;
    }
    // enforce a monotone sequence of paired sums
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let total = m * nf;
    let tau = -1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t + 1];
    Ok(total / tau.max(1.0 / total.log10()))
}

pub fn rhat(draws: &PosteriorDraws, name: &str) -> Result<f64> {
    rhat_of_chains(&draws.chain_columns(name)?)
}

pub fn ess(draws: &PosteriorDraws, name: &str) -> Result<f64> {
    ess_of_chains(&draws.chain_columns(name)?)
}

/// Monte Carlo standard error of the posterior mean, `sd / sqrt(ESS)`.
pub fn mcse(draws: &PosteriorDraws, name: &str) -> Result<f64> {
    let e = ess(draws, name)?;
    if e <= 0.0 {
        return Ok(0.0);
    }
    Ok(draws.sd(name)? / e.sqrt())
}
