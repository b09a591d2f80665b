use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bmtm::baseline::Kernel;
use bmtm::estimands::{AttEstimate, PointEstimate};
use bmtm::eval::{group_estimate_rows, interval_metrics, mae, run_replication_study, table_rows, Method, StudyConfig};
use bmtm::io::{self, BandSpec, Grouping};
use bmtm::model::{partition, NeighborhoodSpec, PriorConfig, PriorMode};
use bmtm::pipeline::{self, FitConfig, ModelKind};
use bmtm::simgen::{simulate, simulate_application, ApplicationConfig, GroundTruth, Scenario, ScenarioConfig};
use bmtm::{Error, Result};

#[derive(Parser)]
#[command(name = "bmtm", version, about = "Threshold effects under bunching with Bayesian mixture models")]
struct Cli {
    /// Worker threads for chains, groups and replications.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Simulate(SimulateArgs),
    /// Fit the two-step model to observed spending.
    Fit(FitArgs),
    /// Score estimates against ground truth, or run a replication study.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "A")]
    scenario: String,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Banded multi-threshold design instead of a single-threshold scenario.
    #[arg(long)]
    application: bool,
    /// JSON scenario (or application) configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Default)]
struct SamplerArgs {
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Vec<f64>,
    /// One half-width for all thresholds, or one per threshold.
    #[arg(long, value_delimiter = ',')]
    half_width: Vec<f64>,
    #[arg(long, default_value = "y")]
    y_column: String,
    #[arg(long)]
    group_column: Option<String>,
    /// Group by bands of this column instead of a group column.
    #[arg(long, requires_all = ["band_width", "top_code"])]
    band_column: Option<String>,
    #[arg(long)]
    band_width: Option<f64>,
    #[arg(long)]
    top_code: Option<f64>,
    #[arg(long)]
    model: Option<String>,
    /// simulation or application defaults.
    #[arg(long)]
    prior_mode: Option<String>,
    /// JSON prior overrides.
    #[arg(long)]
    priors: Option<PathBuf>,
    #[arg(long, conflicts_with = "fix_beta")]
    free_beta: bool,
    #[arg(long)]
    fix_beta: bool,
    /// mean or median.
    #[arg(long)]
    point_estimate: Option<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// JSON fit configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Estimates JSON from `fit`, scored against `--truth`.
    #[arg(long, requires = "truth")]
    estimates: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    /// desk (20 groups) or full (100 groups).
    #[arg(long, default_value = "desk")]
    scale: String,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
    /// JSON study configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn load_config<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => io::load_json(p).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", p.display())),
            other => other,
        }),
        None => Ok(T::default()),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    create_out(&a.out)?;
    let data = if a.application {
        let mut cfg: ApplicationConfig = load_config(&a.config)?;
        if let Some(g) = a.groups {
            cfg.groups = g;
        }
        if let Some(s) = a.seed {
            cfg.seed = s;
        }
        simulate_application(&cfg)?
    } else {
        let mut cfg: ScenarioConfig = load_config(&a.config)?;
        if a.config.is_none() || a.scenario != "A" {
            cfg.scenario = a.scenario.parse()?;
        }
        if let Some(g) = a.groups {
            cfg.groups = g;
        }
        if let Some(s) = a.seed {
            cfg.seed = s;
        }
        simulate(&cfg)?
    };
    io::save_observations(&a.out.join("observations.csv"), &data.observations)?;
    io::save_json(&a.out.join("truth.json"), &data.truth)?;
    let n_groups = data.truth.groups.len();
    let bunchers = data.truth.bunching.iter().filter(|&&z| z).count();
    println!(
        "{} observations in {n_groups} groups, {bunchers} bunching; thresholds {:?}",
        data.observations.len(),
        data.truth.neighborhoods.iter().map(|n| n.k).collect::<Vec<_>>()
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn apply_sampler(cfg: &mut bmtm::sampler::SamplerConfig, s: &SamplerArgs) {
    if let Some(v) = s.chains {
        cfg.chains = v;
    }
    if let Some(v) = s.warmup {
        cfg.warmup = v;
    }
    if let Some(v) = s.samples {
        cfg.samples = v;
    }
    if let Some(v) = s.seed {
        cfg.seed = v;
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let mut cfg: FitConfig = load_config(&a.config)?;
    if !a.thresholds.is_empty() {
        let widths = match a.half_width.len() {
            0 => return Err(Error::Config("--half-width is required with --thresholds".into())),
            1 => vec![a.half_width[0]; a.thresholds.len()],
            n if n == a.thresholds.len() => a.half_width.clone(),
            n => return Err(Error::Config(format!("{n} half-widths for {} thresholds", a.thresholds.len()))),
        };
        cfg.neighborhoods = a
            .thresholds
            .iter()
            .zip(&widths)
            .map(|(&k, &w)| NeighborhoodSpec::new(k, w))
            .collect::<Result<_>>()?;
    }
    if let Some(m) = &a.model {
        cfg.model = m.parse()?;
    }
    if let Some(mode) = &a.prior_mode {
        cfg.priors = PriorConfig::for_mode(match mode.as_str() {
            "simulation" => PriorMode::Simulation,
            "application" => PriorMode::Application,
            other => return Err(Error::Config(format!("unknown prior mode {other:?}"))),
        });
    }
    if let Some(p) = &a.priors {
        cfg.priors = PriorConfig::load(p)?;
    }
    if a.free_beta {
        cfg.free_beta = true;
    }
    if a.fix_beta {
        cfg.free_beta = false;
    }
    if let Some(p) = &a.point_estimate {
        cfg.point = match p.as_str() {
            "mean" => PointEstimate::Mean,
            "median" => PointEstimate::Median,
            other => return Err(Error::Config(format!("unknown point estimate {other:?}"))),
        };
    }
    apply_sampler(&mut cfg.sampler, &a.sampler);
    cfg.validate()?;

    let grouping = match (&a.band_column, &a.group_column) {
        (Some(c), _) => Grouping::Bands(BandSpec {
            column: c.clone(),
            width: a.band_width.unwrap_or_default(),
            top_code: a.top_code.unwrap_or_default(),
        }),
        (None, Some(c)) => Grouping::Column(c.clone()),
        (None, None) => Grouping::Single,
    };
    let loaded = io::load_observations(&a.input, &a.y_column, &grouping)?;
    if loaded.excluded_zero > 0 {
        println!("excluded {} rows with zero spending", loaded.excluded_zero);
    }
    let result = pipeline::fit(&loaded.observations, &cfg)?;

    create_out(&a.out)?;
    write_fit_outputs(&a.out, &result, &loaded.observations, &cfg)?;
    for e in &result.estimates {
        println!(
            "group {:>3} ({}) K={}: effect {:.4} [{:.4}, {:.4}]",
            e.group, loaded.group_labels[e.group], e.threshold, e.point, e.hdi_low, e.hdi_high
        );
    }
    for w in result.warnings() {
        println!("warning: {w}");
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn write_fit_outputs(
    out: &Path,
    result: &pipeline::FitResult,
    observations: &[bmtm::model::Observation],
    cfg: &FitConfig,
) -> Result<()> {
    io::save_json(&out.join("config.json"), cfg)?;
    io::save_json(&out.join("estimates.json"), &result.estimates)?;
    io::save_json(&out.join("diagnostics.json"), &result.diagnostics)?;
    for (g, draws) in result.step1.iter().enumerate() {
        let name = match result.model {
            ModelKind::Bmtm => format!("step1_group{g}_draws.csv"),
            ModelKind::Hbmtm => "step1_draws.csv".to_string(),
        };
        draws.write_csv(std::io::BufWriter::new(std::fs::File::create(out.join(name))?))?;
    }
    for (m, fits) in result.step2.iter().enumerate() {
        let k = result.neighborhoods[m].k;
        for (g, draws) in fits.iter().enumerate() {
            let name = match result.model {
                ModelKind::Bmtm => format!("step2_K{k}_group{g}_draws.csv"),
                ModelKind::Hbmtm => format!("step2_K{k}_draws.csv"),
            };
            draws.write_csv(std::io::BufWriter::new(std::fs::File::create(out.join(name))?))?;
        }
    }
    io::save_csv(&out.join("density_grid.csv"), &pipeline::density_grid(result, 201)?)?;
    let data = partition(observations, &result.neighborhoods)?;
    io::save_csv(&out.join("histogram.csv"), &pipeline::histogram(&data, 40))?;
    let upper = observations.iter().map(|o| o.y).fold(0.0, f64::max);
    let upper = upper.min(2.0 * result.neighborhoods.last().map_or(upper, |n| n.hi()));
    io::save_csv(&out.join("non_bunching_curves.csv"), &pipeline::non_bunching_curves(result, upper, 400))?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    create_out(&a.out)?;
    if let (Some(est_path), Some(truth_path)) = (&a.estimates, &a.truth) {
        return score_estimates(est_path, truth_path, &a.out);
    }
    if a.truth.is_some() {
        return Err(Error::Config("--truth needs --estimates".into()));
    }

    let mut cfg: StudyConfig = load_config(&a.config)?;
    if a.config.is_none() {
        cfg = match a.scale.as_str() {
            "desk" => StudyConfig::desk(cfg.scenario),
            "full" => cfg,
            other => return Err(Error::Config(format!("unknown scale {other:?}; expected desk or full"))),
        };
    }
    if let Some(s) = &a.scenario {
        cfg.scenario.scenario = s.parse::<Scenario>()?;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    if !a.methods.is_empty() {
        cfg.methods = a.methods.iter().map(|m| m.parse::<Method>()).collect::<Result<_>>()?;
    }
    if let Some(k) = &a.kernel {
        cfg.kde.kernel = match k.as_str() {
            "epanechnikov" => Kernel::Epanechnikov,
            "gaussian" => Kernel::Gaussian,
            other => return Err(Error::Config(format!("unknown kernel {other:?}"))),
        };
    }
    if let Some(seed) = a.sampler.seed {
        cfg.scenario.seed = seed;
    }
    apply_sampler(&mut cfg.fit.sampler, &SamplerArgs { seed: None, ..a.sampler });

    let study = run_replication_study(&cfg)?;
    io::save_csv(&a.out.join("table.csv"), &table_rows(&study.reports))?;
    if let Some(first) = study.records.first() {
        io::save_csv(&a.out.join("group_estimates.csv"), &group_estimate_rows(first))?;
    }
    io::save_json(&a.out.join("study.json"), &study)?;
    println!(
        "scenario {}, {} replications, base seed {}",
        study.scenario, cfg.replications, study.base_seed
    );
    for r in &study.reports {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!(
            "{:<6} MAE {:.3}  CP {}  AL {}  IS {}  ({} ok, {} failed)",
            r.method.label(),
            r.mae,
            fmt(r.cp),
            fmt(r.al),
            fmt(r.is_score),
            r.replications,
            r.failed
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn score_estimates(est_path: &Path, truth_path: &Path, out: &Path) -> Result<()> {
    let estimates: Vec<AttEstimate> = io::load_json(est_path)?;
    let truth: GroundTruth = io::load_json(truth_path)
        .map_err(|e| Error::Data(format!("cannot read ground truth {}: {e}", truth_path.display())))?;
    let mut truths = Vec::with_capacity(estimates.len());
    for e in &estimates {
        let m = truth
            .neighborhoods
            .iter()
            .position(|nk| nk.k == e.threshold)
            .ok_or_else(|| Error::Data(format!("no ground truth for threshold {}", e.threshold)))?;
        let row = truth
            .att
            .get(e.group)
            .ok_or_else(|| Error::Data(format!("no ground truth for group {}", e.group)))?;
        truths.push(row[m]);
    }
    let points: Vec<f64> = estimates.iter().map(|e| e.point).collect();
    let intervals: Vec<(f64, f64)> = estimates.iter().map(|e| (e.hdi_low, e.hdi_high)).collect();
    let alpha = 1.0 - estimates.first().map_or(0.9, |e| e.level);
    let metrics = interval_metrics(&truths, &intervals, alpha)?;
    let summary = serde_json::json!({
        "n": estimates.len(),
        "mae": mae(&truths, &points)?,
        "cp": metrics.cp,
        "al": metrics.al,
        "is": metrics.is_score,
        "alpha": alpha,
    });
    io::save_json(&out.join("metrics.json"), &summary)?;
    println!(
        "MAE {:.4}  CP {:.3}  AL {:.4}  IS {:.4}  over {} estimates",
        summary["mae"].as_f64().unwrap_or(f64::NAN),
        metrics.cp,
        metrics.al,
        metrics.is_score,
        estimates.len()
    );
    Ok(())
}
