//! Accuracy and interval metrics against known effects, and Monte Carlo
//! replication studies comparing the estimators.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{rdd_estimate, KdeConfig};
use crate::error::{Error, Result};
use crate::pipeline::{fit, FitConfig, ModelKind};
use crate::simgen::{derived_seed, simulate, ScenarioConfig};

/// Share of replications a method may fail before the study is abandoned,
/// and share of groups the baseline may leave unestimated in a replication.
const MAX_FAILED_SHARE: f64 = 0.05;

/// Mean absolute error.
pub fn mae(truth: &[f64], estimates: &[f64]) -> Result<f64> {
    if truth.len() != estimates.len() || truth.is_empty() {
        return Err(Error::Config(format!(
            "need equal, non-zero lengths ({} truths, {} estimates)",
            truth.len(),
            estimates.len()
        )));
    }
    Ok(truth.iter().zip(estimates).map(|(t, e)| (t - e).abs()).sum::<f64>() / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    /// Coverage probability.
    pub cp: f64,
    /// Average length.
    pub al: f64,
    /// Interval score at the given miscoverage rate.
    pub is_score: f64,
}

/// Coverage, average length and interval score of `(low, high)` intervals
/// at miscoverage rate `alpha`.
pub fn interval_metrics(truth: &[f64], intervals: &[(f64, f64)], alpha: f64) -> Result<IntervalMetrics> {
    if truth.len() != intervals.len() || truth.is_empty() {
        return Err(Error::Config(format!(
            "need equal, non-zero lengths ({} truths, {} intervals)",
            truth.len(),
            intervals.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (mut cp, mut al, mut is) = (0.0, 0.0, 0.0);
    for (&t, &(l, u)) in truth.iter().zip(intervals) {
        if !(l <= u) {
            return Err(Error::Estimand(format!("malformed interval ({l}, {u})")));
        }
        let width = u - l;
        al += width;
        is += width;
        if t < l {
            is += 2.0 / alpha * (l - t);
        } else if t > u {
            is += 2.0 / alpha * (t - u);
        } else {
            cp += 1.0;
        }
    }
    let n = truth.len() as f64;
    Ok(IntervalMetrics { cp: cp / n, al: al / n, is_score: is / n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rdd,
    Bmtm,
    Hbmtm,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Rdd => "RDD",
            Method::Bmtm => "BMTM",
            Method::Hbmtm => "HBMTM",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rdd" => Ok(Method::Rdd),
            "bmtm" => Ok(Method::Bmtm),
            "hbmtm" => Ok(Method::Hbmtm),
            _ => Err(Error::Config(format!("unknown method {s:?}; expected rdd, bmtm or hbmtm"))),
        }
    }
}

/// Per-group estimates of one method on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEstimates {
    pub method: Method,
    /// `None` for a group the baseline could not estimate.
    pub points: Vec<Option<f64>>,
    /// Absent for the density-jump baseline.
    pub intervals: Option<Vec<(f64, f64)>>,
}

impl MethodEstimates {
    pub fn metrics(&self, truth: &[f64], alpha: f64) -> Result<(f64, Option<IntervalMetrics>)> {
        if truth.len() != self.points.len() {
            return Err(Error::Config(format!("{} truths but {} estimates", truth.len(), self.points.len())));
        }
        let (truth, points): (Vec<f64>, Vec<f64>) =
            truth.iter().zip(&self.points).filter_map(|(&t, p)| p.map(|p| (t, p))).unzip();
        let m = mae(&truth, &points)?;
        let im = match &self.intervals {
            Some(iv) => Some(interval_metrics(&truth, iv, alpha)?),
            None => None,
        };
        Ok((m, im))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: ScenarioConfig,
    pub replications: usize,
    pub methods: Vec<Method>,
    pub fit: FitConfig,
    pub kde: KdeConfig,
    /// Miscoverage rate of the interval score.
    pub alpha: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            replications: 100,
            methods: vec![Method::Rdd, Method::Bmtm, Method::Hbmtm],
            fit: FitConfig::default(),
            kde: KdeConfig::default(),
            alpha: 0.1,
        }
    }
}

impl StudyConfig {
    /// Reduced design: 20 groups and 10 replications.
    pub fn desk(scenario: ScenarioConfig) -> Self {
        Self {
            scenario: ScenarioConfig { groups: 20, ..scenario },
            replications: 10,
            ..Self::default()
        }
    }
}

/// One replication's truths and the estimates of every method that
/// succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub truth: Vec<f64>,
    pub estimates: Vec<MethodEstimates>,
    /// `(method, error message)` for failed fits.
    pub failures: Vec<(Method, String)>,
}

/// Average metrics of one method over the replications where it succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: String,
    pub method: Method,
    pub replications: usize,
    pub failed: usize,
    pub mae: f64,
    pub cp: Option<f64>,
    pub al: Option<f64>,
    pub is_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: String,
    pub base_seed: u64,
    pub reports: Vec<EvalReport>,
    pub records: Vec<ReplicationRecord>,
}

impl StudyResult {
    pub fn report(&self, method: Method) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

fn estimate_with(method: Method, data: &crate::simgen::SimulatedData, cfg: &StudyConfig, seed: u64) -> Result<MethodEstimates> {
    let nk = data.truth.neighborhoods[0];
    match method {
        Method::Rdd => {
            let groups = data.truth.groups.len();
            let mut by_group = vec![Vec::new(); groups];
            for o in &data.observations {
                by_group[o.group].push(o.y);
            }
            let mut points = Vec::with_capacity(groups);
            let mut failed = Vec::new();
            for (g, ys) in by_group.iter().enumerate() {
                match rdd_estimate(ys, &nk, &cfg.kde) {
                    Ok(p) => points.push(Some(p)),
                    Err(e) => {
                        log::warn!("RDD skipped group {g}: {e}");
                        failed.push(format!("group {g}: {e}"));
                        points.push(None);
                    }
                }
            }
            if failed.len() as f64 > MAX_FAILED_SHARE * groups as f64 {
                return Err(Error::Numerical(format!(
                    "no estimate for {} of {groups} groups; {}",
                    failed.len(),
                    failed[0]
                )));
            }
            Ok(MethodEstimates { method, points, intervals: None })
        }
        Method::Bmtm | Method::Hbmtm => {
            let mut fit_cfg = cfg.fit.clone();
            fit_cfg.model = if method == Method::Bmtm { ModelKind::Bmtm } else { ModelKind::Hbmtm };
            fit_cfg.neighborhoods = vec![nk];
            fit_cfg.sampler.seed = seed;
            let result = fit(&data.observations, &fit_cfg)?;
            Ok(MethodEstimates {
                method,
                points: result.estimates.iter().map(|e| Some(e.point)).collect(),
                intervals: Some(result.estimates.iter().map(|e| (e.hdi_low, e.hdi_high)).collect()),
            })
        }
    }
}

/// Generates and fits one replication.
pub fn run_replication(cfg: &StudyConfig, replication: usize) -> Result<ReplicationRecord> {
    let seed = derived_seed(cfg.scenario.seed, replication as u64);
    let data = simulate(&ScenarioConfig { seed, ..cfg.scenario.clone() })?;
    let truth = data.truth.att_at(0);
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for &method in &cfg.methods {
        match estimate_with(method, &data, cfg, derived_seed(seed, method as u64 + 1)) {
            Ok(e) => estimates.push(e),
            Err(e) => {
                log::warn!("replication {replication}: {} failed: {e}", method.label());
                failures.push((method, e.to_string()));
            }
        }
    }
    Ok(ReplicationRecord { replication, seed, truth, estimates, failures })
}

/// Averages per-replication metrics of each method.
pub fn summarize(scenario: &str, methods: &[Method], records: &[ReplicationRecord], alpha: f64) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    for &method in methods {
        let mut maes = Vec::new();
        let mut ims = Vec::new();
        for rec in records {
            if let Some(est) = rec.estimates.iter().find(|e| e.method == method) {
                let (m, im) = est.metrics(&rec.truth, alpha)?;
                maes.push(m);
                ims.extend(im);
            }
        }
        let failed = records.len() - maes.len();
        if failed as f64 > MAX_FAILED_SHARE * records.len() as f64 {
            let first = records
                .iter()
                .find_map(|r| r.failures.iter().find(|(m, _)| *m == method).map(|(_, e)| (r.replication, e)));
            let reason = first.map_or(String::new(), |(r, e)| format!("; replication {r}: {e}"));
            return Err(Error::Numerical(format!(
                "{} failed in {failed} of {} replications{reason}",
                method.label(),
                records.len()
            )));
        }
        if maes.is_empty() {
            continue;
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let interval = |f: fn(&IntervalMetrics) -> f64| {
            (!ims.is_empty()).then(|| avg(&ims.iter().map(f).collect::<Vec<_>>()))
        };
        reports.push(EvalReport {
            scenario: scenario.to_string(),
            method,
            replications: maes.len(),
            failed,
            mae: avg(&maes),
            cp: interval(|m| m.cp),
            al: interval(|m| m.al),
            is_score: interval(|m| m.is_score),
        });
    }
    Ok(reports)
}

/// Runs every replication in parallel from derived seeds and reports the
/// per-method averages.
pub fn run_replication_study(cfg: &StudyConfig) -> Result<StudyResult> {
    if cfg.replications == 0 || cfg.methods.is_empty() {
        return Err(Error::Config("a study needs at least one replication and one method".into()));
    }
    cfg.scenario.validate()?;
    let records = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let scenario = format!("{:?}", cfg.scenario.scenario);
    let reports = summarize(&scenario, &cfg.methods, &records, cfg.alpha)?;
    Ok(StudyResult { scenario, base_seed: cfg.scenario.seed, reports, records })
}

/// One row of the summary table; interval columns are empty for methods
/// without intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub scenario: String,
    pub method: String,
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "CP")]
    pub cp: Option<f64>,
    #[serde(rename = "AL")]
    pub al: Option<f64>,
    #[serde(rename = "IS")]
    pub is_score: Option<f64>,
}

pub fn table_rows(reports: &[EvalReport]) -> Vec<TableRow> {
    reports
        .iter()
        .map(|r| TableRow {
            scenario: r.scenario.clone(),
            method: r.method.label().to_string(),
            mae: r.mae,
            cp: r.cp,
            al: r.al,
            is_score: r.is_score,
        })
        .collect()
}

/// Per-group estimate against truth, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimateRow {
    pub replication: usize,
    pub method: String,
    pub group: usize,
    pub truth: f64,
    pub point: f64,
    pub low: Option<f64>,
    pub high: Option<f64>,
}

pub fn group_estimate_rows(record: &ReplicationRecord) -> Vec<GroupEstimateRow> {
    let mut rows = Vec::new();
    for est in &record.estimates {
        for (g, (&truth, &point)) in record.truth.iter().zip(&est.points).enumerate() {
            let Some(point) = point else { continue };
            let iv = est.intervals.as_ref().map(|iv| iv[g]);
            rows.push(GroupEstimateRow {
                replication: record.replication,
                method: est.method.label().to_string(),
                group: g,
                truth,
                point,
                low: iv.map(|i| i.0),
                high: iv.map(|i| i.1),
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::Scenario;

    #[test]
    fn mae_arithmetic() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(mae(&[0.0], &[1.0, 2.0]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn interval_score_cases() {
        let inside = interval_metrics(&[0.5], &[(0.0, 1.0)], 0.1).unwrap();
        assert_eq!(inside, IntervalMetrics { cp: 1.0, al: 1.0, is_score: 1.0 });
        let above = interval_metrics(&[1.2], &[(0.0, 1.0)], 0.1).unwrap();
        assert_eq!(above.cp, 0.0);
        assert!((above.is_score - 5.0).abs() < 1e-12);
        let below = interval_metrics(&[-0.5], &[(0.0, 1.0)], 0.1).unwrap();
        assert!((below.is_score - 11.0).abs() < 1e-12);
        assert!(interval_metrics(&[0.0], &[(1.0, 0.0)], 0.1).is_err());
    }

    #[test]
    fn score_at_least_length() {
        let truth = [0.0, 1.0, 2.0, 3.0];
        let iv = [(-1.0, 1.0), (1.5, 2.0), (0.0, 4.0), (3.5, 3.6)];
        let m = interval_metrics(&truth, &iv, 0.1).unwrap();
        assert!(m.is_score >= m.al);
        let covered = [(-1.0, 1.0), (0.5, 2.0), (0.0, 4.0), (2.5, 3.6)];
        let c = interval_metrics(&truth, &covered, 0.1).unwrap();
        assert_eq!(c.cp, 1.0);
        assert_eq!(c.is_score, c.al);
    }

    #[test]
    fn metrics_pool_by_weight() {
        let (t1, i1) = (vec![0.0, 1.0, 5.0], vec![(0.0, 1.0), (2.0, 3.0), (4.0, 4.5)]);
        let (t2, i2) = (vec![2.0], vec![(0.0, 1.5)]);
        let a = interval_metrics(&t1, &i1, 0.1).unwrap();
        let b = interval_metrics(&t2, &i2, 0.1).unwrap();
        let all = interval_metrics(&[t1, t2.clone()].concat(), &[i1, i2].concat(), 0.1).unwrap();
        assert!((all.is_score - (3.0 * a.is_score + b.is_score) / 4.0).abs() < 1e-12);
        assert!((all.cp - (3.0 * a.cp + b.cp) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_ignores_group_order() {
        let truth = [0.0, 1.0, 2.0];
        let iv = [(-1.0, 1.0), (1.5, 2.0), (0.0, 4.0)];
        let m = interval_metrics(&truth, &iv, 0.1).unwrap();
        let r = interval_metrics(&[2.0, 0.0, 1.0], &[iv[2], iv[0], iv[1]], 0.1).unwrap();
        assert_eq!(m.cp, r.cp);
    }

    #[test]
    fn baseline_only_study_is_reproducible() {
        let cfg = StudyConfig {
            scenario: ScenarioConfig::new(Scenario::A, 8, 3),
            replications: 1,
            methods: vec![Method::Rdd],
            ..Default::default()
        };
        let a = run_replication_study(&cfg).unwrap();
        let b = run_replication_study(&cfg).unwrap();
        assert_eq!(a.reports[0].mae, b.reports[0].mae);
        assert_eq!(a.reports[0].cp, None);
        let rows = table_rows(&a.reports);
        assert_eq!(rows[0].method, "RDD");
        assert_eq!(group_estimate_rows(&a.records[0]).len(), 8);
    }

    #[test]
    fn skipped_groups_leave_the_metrics() {
        let est = MethodEstimates { method: Method::Rdd, points: vec![Some(1.0), None, Some(4.0)], intervals: None };
        assert_eq!(est.metrics(&[0.0, 100.0, 2.0], 0.1).unwrap(), (1.5, None));
        assert!(est.metrics(&[0.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn too_many_failures_abort() {
        let rec = |ok: bool| ReplicationRecord {
            replication: 0,
            seed: 0,
            truth: vec![1.0],
            estimates: if ok {
                vec![MethodEstimates { method: Method::Rdd, points: vec![Some(1.0)], intervals: None }]
            } else {
                vec![]
            },
            failures: vec![],
        };
        let mut records: Vec<_> = (0..20).map(|_| rec(true)).collect();
        records[0] = rec(false);
        assert_eq!(summarize("A", &[Method::Rdd], &records, 0.1).unwrap()[0].failed, 1);
        records[1] = rec(false);
        assert!(summarize("A", &[Method::Rdd], &records, 0.1).is_err());
    }
}
