//! Monte Carlo experiment runner and CSV output.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Parser;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fusion::{run_architecture, Architecture, FusionError, RunOutput, Setup, StepComm};
use crate::metrics::{filter_by_fov, gospa, mc_aggregate, Curve, CurveSet, GospaParams, MetricsError};
use crate::par;
use crate::scenario::{generate_measurements, generate_truth, load_scenario, GroundTruth, ScanSet, ScenarioConfig, ScenarioError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trial with seed {seed}: {source}")]
    Fusion {
        seed: u64,
        #[source]
        source: FusionError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub architectures: Vec<Architecture>,
    pub trials: usize,
    /// Falls back to the scenario's seed.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Falls back to the scenario's particle count.
    pub particles: Option<usize>,
    pub gospa: GospaParams,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        if self.architectures.is_empty() {
            return Err(CliError::Config("at least one architecture is required".into()));
        }
        if self.particles == Some(0) {
            return Err(CliError::Config("particles must be at least 1".into()));
        }
        self.gospa.validate()?;
        Ok(())
    }
}

/// Command-line flags of `handover-sim`.
#[derive(Debug, Parser)]
#[command(name = "handover-sim", version, about = "Monte Carlo comparison of multi-sensor tracking architectures")]
pub struct Args {
    /// Scenario file.
    #[arg(long, default_value = "scenarios/paper_2bs.scenario")]
    pub scenario: PathBuf,
    /// Comma-separated architectures: distributed, centralized, handover_meas, handover_no_meas.
    #[arg(long, value_delimiter = ',', default_value = "centralized,distributed,handover_no_meas,handover_meas")]
    pub arch: Vec<Architecture>,
    /// Number of Monte Carlo trials.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// Base seed; trial i uses seed + i. Defaults to the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Particles per potential target. Defaults to the scenario value (10000 if unset).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub particles: Option<u64>,
    /// GOSPA cutoff distance in meters.
    #[arg(long, default_value_t = 10.0)]
    pub gospa_c: f64,
    /// GOSPA order.
    #[arg(long, default_value_t = 2.0)]
    pub gospa_p: f64,
}

impl From<Args> for RunConfig {
    fn from(a: Args) -> Self {
        let mut architectures = a.arch;
        architectures.sort();
        architectures.dedup();
        RunConfig {
            scenario: a.scenario,
            architectures,
            trials: a.trials as usize,
            seed: a.seed,
            out_dir: a.out,
            particles: a.particles.map(|p| p as usize),
            gospa: GospaParams {
                c: a.gospa_c,
                p: a.gospa_p,
                alpha: 2.0,
            },
        }
    }
}

pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Args::try_parse_from(argv).map(RunConfig::from)
}

/// Everything one trial produced.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub seed: u64,
    pub truth: GroundTruth,
    pub scans: ScanSet,
    /// In the order of the requested architectures.
    pub runs: Vec<RunOutput>,
    /// One per sensor.
    pub curves: Vec<CurveSet>,
}

/// Simulate the scenario once and score every requested architecture on
/// the same truth and scans.
pub fn run_trial(
    cfg: &ScenarioConfig,
    architectures: &[Architecture],
    seed: u64,
    gp: &GospaParams,
) -> Result<TrialResult, CliError> {
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = generate_truth(cfg, &mut data_rng);
    let scans = generate_measurements(&truth, &cfg.sensors, &mut data_rng);
    let setup = Setup {
        sensors: &cfg.sensors,
        motion: &cfg.motion,
        params: &cfg.filter,
        seed,
    };
    let runs = architectures
        .iter()
        .map(|&a| run_architecture(a, &scans, &setup).map_err(|source| CliError::Fusion { seed, source }))
        .collect::<Result<Vec<_>, _>>()?;
    let curves = score(cfg, &truth, &runs, gp);
    Ok(TrialResult {
        seed,
        truth,
        scans,
        runs,
        curves,
    })
}

/// Per-sensor GOSPA curves: truth and estimates both restricted to the FoV.
pub fn score(cfg: &ScenarioConfig, truth: &GroundTruth, runs: &[RunOutput], gp: &GospaParams) -> Vec<CurveSet> {
    let n = truth.horizon();
    cfg.sensors
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let truths: Vec<Vec<[f64; 2]>> = (0..n).map(|k| filter_by_fov(&truth.positions(k), s)).collect();
            let curves = runs
                .iter()
                .map(|run| {
                    let mut c = Curve::with_horizon(n);
                    for (k, t) in truths.iter().enumerate() {
                        let est: Vec<[f64; 2]> = run.estimates.for_sensor(k, i).iter().map(|e| e.position).collect();
                        c.set(k, &gospa(t, &filter_by_fov(&est, s), gp));
                    }
                    c
                })
                .collect();
            CurveSet {
                architectures: runs.iter().map(|r| r.architecture.csv_name().to_string()).collect(),
                curves,
                avg_targets: truths.iter().map(|t| t.len() as f64).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub architectures: Vec<Architecture>,
    pub trials: Vec<TrialResult>,
    /// Trial-averaged curves, one per sensor.
    pub curves: Vec<CurveSet>,
    /// Trial-averaged traffic per architecture, `[arch][step]` as
    /// (priors, measurements, payload).
    pub comm: Vec<Vec<[f64; 3]>>,
}

/// Run all trials in parallel with seeds `base_seed + i`.
pub fn simulate(
    cfg: &ScenarioConfig,
    architectures: &[Architecture],
    trials: usize,
    base_seed: u64,
    gp: &GospaParams,
) -> Result<ExperimentResult, CliError> {
    let results = par::map_indexed(trials, |i| run_trial(cfg, architectures, base_seed.wrapping_add(i as u64), gp));
    let trials: Vec<TrialResult> = results.into_iter().collect::<Result<_, _>>()?;
    let curves = (0..cfg.sensors.len())
        .map(|i| {
            let per_trial: Vec<CurveSet> = trials.iter().map(|t| t.curves[i].clone()).collect();
            mc_aggregate(&per_trial)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let scale = 1.0 / trials.len() as f64;
    let comm = (0..architectures.len())
        .map(|a| {
            (0..cfg.horizon)
                .map(|k| {
                    let mut acc = [0.0; 3];
                    for t in &trials {
                        let s: StepComm = t.runs[a].comm.steps[k];
                        acc[0] += s.priors_sent as f64;
                        acc[1] += s.measurements_sent as f64;
                        acc[2] += s.payload_scalars as f64;
                    }
                    acc.map(|v| v * scale)
                })
                .collect()
        })
        .collect();
    Ok(ExperimentResult {
        architectures: architectures.to_vec(),
        trials,
        curves,
        comm,
    })
}

/// A rectangular numeric table with a header row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// `%g`-style formatting with 6 significant digits.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_csv(table: &Table, path: &Path) -> Result<(), CliError> {
    let mut text = table.header.join(",");
    text.push('\n');
    for row in &table.rows {
        debug_assert_eq!(row.len(), table.header.len());
        let cells: Vec<String> = row.iter().map(|v| format_sig6(*v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

fn time_column(n: usize, dt: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| k as f64 * dt)
}

pub fn combined_table(curves: &CurveSet, dt: f64) -> Table {
    let mut header = vec!["Time".to_string()];
    for a in &curves.architectures {
        for suffix in ["gospa", "localization", "miss_truth", "false_tracks"] {
            header.push(format!("{a}_{suffix}"));
        }
    }
    let rows = time_column(curves.horizon(), dt)
        .enumerate()
        .map(|(k, t)| {
            let mut row = vec![t];
            for c in &curves.curves {
                row.extend([c.total[k], c.localization[k], c.missed[k], c.false_alarm[k]]);
            }
            row
        })
        .collect();
    Table { header, rows }
}

pub fn targets_table(curves: &CurveSet, dt: f64) -> Table {
    Table {
        header: vec!["Time".into(), "AvgTargets".into()],
        rows: time_column(curves.horizon(), dt)
            .zip(&curves.avg_targets)
            .map(|(t, n)| vec![t, *n])
            .collect(),
    }
}

pub fn comm_table(result: &ExperimentResult, horizon: usize, dt: f64) -> Table {
    let mut header = vec!["Time".to_string()];
    for a in &result.architectures {
        for suffix in ["priors_sent", "measurements_sent", "payload_scalars"] {
            header.push(format!("{}_{suffix}", a.csv_name()));
        }
    }
    let rows = time_column(horizon, dt)
        .enumerate()
        .map(|(k, t)| {
            let mut row = vec![t];
            for per_arch in &result.comm {
                row.extend(per_arch[k]);
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Load, simulate, write CSVs and return a human-readable summary.
pub fn run_experiment(cfg: &RunConfig) -> Result<String, CliError> {
    cfg.validate()?;
    let mut scenario = load_scenario(&cfg.scenario)?;
    if let Some(p) = cfg.particles {
        scenario.filter.num_particles = p;
    }
    let seed = cfg.seed.unwrap_or(scenario.seed);
    let result = simulate(&scenario, &cfg.architectures, cfg.trials, seed, &cfg.gospa)?;

    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| CliError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    let dt = scenario.motion.dt;
    for (s, curves) in scenario.sensors.iter().zip(&result.curves) {
        write_csv(&combined_table(curves, dt), &cfg.out_dir.join(format!("bs{}_combined.csv", s.id)))?;
        write_csv(&targets_table(curves, dt), &cfg.out_dir.join(format!("bs{}_targets.csv", s.id)))?;
    }
    write_csv(&comm_table(&result, scenario.horizon, dt), &cfg.out_dir.join("comm_stats.csv"))?;

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "{} trials, {} particles, seed {seed}, output in {}",
        cfg.trials,
        scenario.filter.num_particles,
        cfg.out_dir.display()
    );
    for (s, curves) in scenario.sensors.iter().zip(&result.curves) {
        let _ = writeln!(summary, "BS{} mean GOSPA over time:", s.id);
        for (a, c) in curves.architectures.iter().zip(&curves.curves) {
            let mean = c.total.iter().sum::<f64>() / c.len().max(1) as f64;
            let _ = writeln!(summary, "  {a:<16} {}", format_sig6(mean));
        }
    }
    let _ = writeln!(summary, "mean traffic per trial (priors, measurements, payload scalars):");
    for (a, per_step) in result.architectures.iter().zip(&result.comm) {
        let tot = per_step.iter().fold([0.0; 3], |acc, s| [acc[0] + s[0], acc[1] + s[1], acc[2] + s[2]]);
        let _ = writeln!(
            summary,
            "  {:<16} {}, {}, {}",
            a.csv_name(),
            format_sig6(tot[0]),
            format_sig6(tot[1]),
            format_sig6(tot[2])
        );
    }
    Ok(summary)
}
