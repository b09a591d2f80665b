use std::io::Write;

use crate::error::{Error, Result};

/// Post-warmup output of one chain. `draws[i]` is the constrained parameter
/// vector of iteration `i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainDraws {
    pub draws: Vec<Vec<f64>>,
    pub divergent: Vec<bool>,
    pub accept_stat: Vec<f64>,
    pub tree_depth: Vec<usize>,
    pub n_leapfrog: Vec<usize>,
    /// Hamiltonian of the selected point minus that of the trajectory start.
    pub energy_error: Vec<f64>,
    /// Adapted step size, fixed for every post-warmup iteration.
    pub step_size: f64,
    /// Adapted diagonal inverse metric.
    pub inv_metric: Vec<f64>,
}

impl ChainDraws {
    pub(crate) fn with_capacity(n: usize) -> Self {
        Self {
            draws: Vec::with_capacity(n),
            divergent: Vec::with_capacity(n),
            accept_stat: Vec::with_capacity(n),
            tree_depth: Vec::with_capacity(n),
            n_leapfrog: Vec::with_capacity(n),
            energy_error: Vec::with_capacity(n),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Multi-chain posterior draws in constrained space.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn new(names: Vec<String>, chains: Vec<ChainDraws>) -> Result<Self> {
        for (c, chain) in chains.iter().enumerate() {
            if let Some(bad) = chain.draws.iter().position(|d| d.len() != names.len()) {
                return Err(Error::Data(format!(
                    "chain {c}, draw {bad}: expected {} values",
                    names.len()
                )));
            }
        }
        Ok(Self { names, chains })
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Total draw count over all chains.
    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(ChainDraws::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Data(format!("no parameter named {name:?}")))
    }

    /// Draws of one parameter per chain.
    pub fn chain_columns(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let j = self.index_of(name)?;
        Ok(self
            .chains
            .iter()
            .map(|c| c.draws.iter().map(|d| d[j]).collect())
            .collect())
    }

    /// Draws of one parameter pooled over chains in chain order.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.chain_columns(name)?.concat())
    }

    /// Iterates over every draw vector in chain order.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.chains.iter().flat_map(|c| c.draws.iter().map(Vec::as_slice))
    }

    pub fn mean(&self, name: &str) -> Result<f64> {
        let col = self.column(name)?;
        if col.is_empty() {
            return Err(Error::Data("no draws".into()));
        }
        Ok(col.iter().sum::<f64>() / col.len() as f64)
    }

    pub fn median(&self, name: &str) -> Result<f64> {
        let mut col = self.column(name)?;
        if col.is_empty() {
            return Err(Error::Data("no draws".into()));
        }
        col.sort_by(f64::total_cmp);
        let n = col.len();
        Ok(if n % 2 == 1 {
            col[n / 2]
        } else {
            0.5 * (col[n / 2 - 1] + col[n / 2])
        })
    }

    pub fn sd(&self, name: &str) -> Result<f64> {
        let col = self.column(name)?;
        if col.len() < 2 {
            return Err(Error::Data("need at least two draws for a standard deviation".into()));
        }
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        Ok((ss / (col.len() - 1) as f64).sqrt())
    }

    pub fn n_divergent(&self) -> usize {
        self.chains.iter().map(|c| c.divergent.iter().filter(|&&d| d).count()).sum()
    }

    pub fn divergence_rate(&self) -> f64 {
        let n = self.n_draws();
        if n == 0 {
            0.0
        } else {
            self.n_divergent() as f64 / n as f64
        }
    }

    /// Writes one row per draw: `chain,iteration,divergent,<params...>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iteration".into(), "divergent".into()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (c, chain) in self.chains.iter().enumerate() {
            for (i, d) in chain.draws.iter().enumerate() {
                let mut row = vec![c.to_string(), i.to_string(), u8::from(chain.divergent[i]).to_string()];
                row.extend(d.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
