use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A threshold `k` and its bunching window `[k - half_width, k + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub k: f64,
    pub half_width: f64,
}

impl NeighborhoodSpec {
    pub fn new(k: f64, half_width: f64) -> Result<Self> {
        if !(k.is_finite() && half_width.is_finite() && half_width > 0.0 && half_width < k) {
            return Err(Error::Config(format!(
                "neighborhood needs 0 < half_width < k, got k={k}, half_width={half_width}"
            )));
        }
        Ok(Self { k, half_width })
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.k - self.half_width
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.k + self.half_width
    }

    /// Closed-interval membership; both edges count as inside.
    #[inline]
    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo() && y <= self.hi()
    }
}

/// Checks that neighbourhoods are sorted by threshold and do not overlap.
/// Adjacent windows may share an edge point.
pub fn validate_neighborhoods(nks: &[NeighborhoodSpec]) -> Result<()> {
    for nk in nks {
        NeighborhoodSpec::new(nk.k, nk.half_width)?;
    }
    for w in nks.windows(2) {
        if w[1].k <= w[0].k {
            return Err(Error::Config(format!(
                "thresholds must be strictly increasing ({} then {})",
                w[0].k, w[1].k
            )));
        }
        if w[0].hi() > w[1].lo() {
            return Err(Error::Config(format!(
                "neighborhoods [{}, {}] and [{}, {}] overlap",
                w[0].lo(),
                w[0].hi(),
                w[1].lo(),
                w[1].hi()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub y: f64,
    pub group: usize,
}

/// Observations split into the per-threshold windows and their complement.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedData {
    pub neighborhoods: Vec<NeighborhoodSpec>,
    pub n_groups: usize,
    /// `inside[m]` holds the observations in window `m`.
    pub inside: Vec<Vec<Observation>>,
    pub outside: Vec<Observation>,
}

impl PartitionedData {
    pub fn outside_by_group(&self) -> Vec<Vec<f64>> {
        split_by_group(&self.outside, self.n_groups)
    }

    pub fn inside_by_group(&self, m: usize) -> Vec<Vec<f64>> {
        split_by_group(&self.inside[m], self.n_groups)
    }

    pub fn len(&self) -> usize {
        self.outside.len() + self.inside.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn split_by_group(obs: &[Observation], n_groups: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); n_groups];
    for o in obs {
        out[o.group].push(o.y);
    }
    out
}

/// Assigns each observation to the first window containing it, or to the
/// complement. A point on an edge shared by two adjacent windows goes to the
/// lower window.
pub fn partition(data: &[Observation], nks: &[NeighborhoodSpec]) -> Result<PartitionedData> {
    validate_neighborhoods(nks)?;
    let n_groups = data.iter().map(|o| o.group + 1).max().unwrap_or(0);
    let mut inside = vec![Vec::new(); nks.len()];
    let mut outside = Vec::new();
    for &o in data {
        match nks.iter().position(|nk| nk.contains(o.y)) {
            Some(m) => inside[m].push(o),
            None => outside.push(o),
        }
    }
    Ok(PartitionedData {
        neighborhoods: nks.to_vec(),
        n_groups,
        inside,
        outside,
    })
}
