//! Command-line front end: `estimate`, `bandwidth`, `ci` and `simulate`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bandwidth::{BandwidthSet, Regime, Target};
use crate::config::{Command, RunConfig};
use crate::data::{load_panel, PanelFormat, PanelSample};
use crate::error::{FdaError, Result};
use crate::inference::Analysis;
use crate::simulation::{
    coverage_report, fmt_sig, run_study, variance_report, write_coverage_csv, write_coverage_long_csv,
    write_variance_csv,
};

pub const THREADS_ENV: &str = "FDACOV_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "fdacov",
    version,
    about = "Kernel smoothing, bandwidth selection and pointwise confidence intervals for covariate-adjusted functional data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Mean surface over a regular grid, as CSV.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Input panel (long CSV with columns curve_id,u,z,y).
        #[arg(long)]
        input: Option<String>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        output: Option<String>,
        /// Nodes per axis of the output grid on [0,1]^2.
        #[arg(long)]
        grid: Option<String>,
        /// Add bias and standard-error columns.
        #[arg(long)]
        with_inference: bool,
    },
    /// Bandwidth report for both targets under both regimes, as JSON.
    Bandwidth {
        #[command(flatten)]
        common: Common,
        /// Input panel (long CSV with columns curve_id,u,z,y).
        #[arg(long)]
        input: Option<String>,
        /// Output JSON path (stdout when omitted).
        #[arg(long)]
        output: Option<String>,
    },
    /// Pointwise confidence intervals for the mean, one JSON record per line.
    Ci {
        #[command(flatten)]
        common: Common,
        /// Input panel (long CSV with columns curve_id,u,z,y).
        #[arg(long)]
        input: Option<String>,
        /// Output JSON path (stdout when omitted).
        #[arg(long)]
        output: Option<String>,
        /// Evaluation point `u,z`; repeat for several points.
        #[arg(long)]
        point: Vec<String>,
        /// sparse | sparse-corrected | dense | dense-corrected.
        #[arg(long)]
        method: Option<String>,
    },
    /// Monte-Carlo coverage and variance study on the synthetic designs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// 1, 2 or both.
        #[arg(long)]
        dgp: Option<String>,
        /// Comma-separated points per curve, e.g. 5,10,15.
        #[arg(long)]
        m: Option<String>,
        /// Curves per panel.
        #[arg(long)]
        n: Option<String>,
        /// Replicates per cell.
        #[arg(long)]
        reps: Option<String>,
        /// Comma-separated interval methods.
        #[arg(long)]
        methods: Option<String>,
        /// true-covariance weights: score-variances | stated.
        #[arg(long)]
        gamma_weights: Option<String>,
        /// Output directory for the CSV files.
        #[arg(long)]
        out: Option<String>,
    },
}

/// Settings shared by every subcommand. Flags override the config file.
#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// gaussian | epanechnikov.
    #[arg(long)]
    pub kernel: Option<String>,
    /// sparse | dense.
    #[arg(long)]
    pub regime: Option<String>,
    /// Significance level in (0,1).
    #[arg(long)]
    pub alpha: Option<String>,
    /// Seed for subsampling and simulation.
    #[arg(long)]
    pub seed: Option<String>,
    /// Quadrature nodes per axis for surface integrals.
    #[arg(long)]
    pub nodes_2d: Option<String>,
    /// Quadrature nodes per axis for volume integrals.
    #[arg(long)]
    pub nodes_3d: Option<String>,
    /// Lower bandwidth clamp.
    #[arg(long)]
    pub h_min: Option<String>,
    /// Upper bandwidth clamp.
    #[arg(long)]
    pub h_max: Option<String>,
    /// Density floor as a fraction of the normal-reference density at the centroid.
    #[arg(long)]
    pub density_floor_fraction: Option<String>,
    /// Largest sample used inside density cross-validation.
    #[arg(long)]
    pub cv_max_points: Option<String>,
    /// Most observations scored by the curvature-bandwidth criterion.
    #[arg(long)]
    pub cv_eval_points: Option<String>,
    /// Per-curve cap on fourth-moment records.
    #[arg(long)]
    pub quadruple_cap: Option<String>,
    /// diagonal | full-cube.
    #[arg(long)]
    pub cov_integration: Option<String>,
    /// Curvature-fit bandwidth selection: leave-curve-out | gcv.
    #[arg(long)]
    pub derivative_criterion: Option<String>,
}

impl Common {
    fn overrides(&self) -> [(&'static str, &Option<String>); 14] {
        [
            ("kernel", &self.kernel),
            ("regime", &self.regime),
            ("alpha", &self.alpha),
            ("seed", &self.seed),
            ("nodes_2d", &self.nodes_2d),
            ("nodes_3d", &self.nodes_3d),
            ("h_min", &self.h_min),
            ("h_max", &self.h_max),
            ("density_floor_fraction", &self.density_floor_fraction),
            ("cv_max_points", &self.cv_max_points),
            ("cv_eval_points", &self.cv_eval_points),
            ("quadruple_cap", &self.quadruple_cap),
            ("cov_integration", &self.cov_integration),
            ("derivative_criterion", &self.derivative_criterion),
        ]
    }
}

fn overlay(cfg: &mut RunConfig, pairs: &[(&str, &Option<String>)]) -> Result<()> {
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(())
}

/// Builds the run configuration: defaults, then the config file, then flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let common = match &cli.command {
        Sub::Estimate { common, .. }
        | Sub::Bandwidth { common, .. }
        | Sub::Ci { common, .. }
        | Sub::Simulate { common, .. } => common,
    };
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    overlay(&mut cfg, &common.overrides())?;
    match &cli.command {
        Sub::Estimate {
            input,
            output,
            grid,
            with_inference,
            ..
        } => {
            cfg.command = Some(Command::Estimate);
            overlay(&mut cfg, &[("input", input), ("output", output), ("grid", grid)])?;
            cfg.with_inference |= *with_inference;
        }
        Sub::Bandwidth { input, output, .. } => {
            cfg.command = Some(Command::Bandwidth);
            overlay(&mut cfg, &[("input", input), ("output", output)])?;
        }
        Sub::Ci {
            input,
            output,
            point,
            method,
            ..
        } => {
            cfg.command = Some(Command::Ci);
            let points = (!point.is_empty()).then(|| point.join(";"));
            overlay(
                &mut cfg,
                &[("input", input), ("output", output), ("point", &points), ("method", method)],
            )?;
        }
        Sub::Simulate {
            dgp,
            m,
            n,
            reps,
            methods,
            gamma_weights,
            out,
            ..
        } => {
            cfg.command = Some(Command::Simulate);
            overlay(
                &mut cfg,
                &[
                    ("dgp", dgp),
                    ("m", m),
                    ("n", n),
                    ("reps", reps),
                    ("methods", methods),
                    ("gamma_weights", gamma_weights),
                    ("output", out),
                ],
            )?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_input(cfg: &RunConfig) -> Result<PanelSample> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| FdaError::Config("--input is required".into()))?;
    load_panel(path, PanelFormat::LongCsv)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn grid_axis(k: usize) -> Vec<f64> {
    (0..k).map(|i| i as f64 / (k - 1) as f64).collect()
}

pub fn cmd_estimate(cfg: &RunConfig) -> Result<()> {
    let sample = load_input(cfg)?;
    let analysis = Analysis::new(sample, cfg.pipeline())?;
    let h = analysis.bandwidths(Target::Mean, cfg.regime)?;
    let axis = grid_axis(cfg.grid);
    let mut rows = Vec::with_capacity(axis.len() * axis.len());
    for &u in &axis {
        for &z in &axis {
            let mut row = vec![fmt_sig(u), fmt_sig(z)];
            if cfg.with_inference {
                let e = analysis.regime_estimate(u, z, cfg.regime)?;
                row.extend([
                    fmt_sig(e.estimate),
                    fmt_sig(e.bias),
                    fmt_sig(e.v1.sqrt()),
                    fmt_sig((e.v1 + e.v2).sqrt()),
                ]);
            } else {
                row.push(fmt_sig(analysis.mean_at(u, z, &h)?));
            }
            rows.push(row);
        }
    }
    let mut w = csv::Writer::from_writer(sink(cfg.output.as_deref())?);
    let mut header = vec!["u", "z", "estimate"];
    if cfg.with_inference {
        header.extend(["bias", "se_v1", "se_v1v2"]);
    }
    let io_err = |e: csv::Error| FdaError::Io(io::Error::other(e));
    w.write_record(&header).map_err(io_err)?;
    for r in rows {
        w.write_record(&r).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One entry of the bandwidth report.
#[derive(Debug, Clone, Serialize)]
pub struct BandwidthEntry {
    pub target: Target,
    pub regime: Regime,
    pub h_u: f64,
    pub h_z: f64,
    /// The reported value differs from the raw rule: range clamp or fallback.
    pub clamped: bool,
    pub fallback: bool,
    pub functionals: serde_json::Value,
}

pub fn bandwidth_report(analysis: &Analysis) -> Result<Vec<BandwidthEntry>> {
    let mut out = Vec::new();
    for target in [Target::Mean, Target::Covariance] {
        let functionals = match target {
            Target::Mean => serde_json::to_value(&analysis.mean_functionals),
            Target::Covariance => serde_json::to_value(&analysis.cov_functionals),
        }
        .map_err(|e| FdaError::Io(io::Error::other(e)))?;
        for regime in [Regime::Sparse, Regime::Dense] {
            let b: BandwidthSet = analysis.bandwidths(target, regime)?;
            out.push(BandwidthEntry {
                target,
                regime,
                h_u: b.h_u,
                h_z: b.h_z,
                clamped: b.clamped || b.fallback,
                fallback: b.fallback,
                functionals: functionals.clone(),
            });
        }
    }
    Ok(out)
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| FdaError::Io(io::Error::other(e)))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn cmd_bandwidth(cfg: &RunConfig) -> Result<()> {
    let analysis = Analysis::new(load_input(cfg)?, cfg.pipeline())?;
    write_json(&bandwidth_report(&analysis)?, cfg.output.as_deref())
}

pub fn cmd_ci(cfg: &RunConfig) -> Result<()> {
    let analysis = Analysis::new(load_input(cfg)?, cfg.pipeline())?;
    let mut w = sink(cfg.output.as_deref())?;
    for &(u, z) in &cfg.points {
        let ci = analysis.confidence_interval(u, z, cfg.method, cfg.alpha)?;
        serde_json::to_writer(&mut w, &ci).map_err(|e| FdaError::Io(io::Error::other(e)))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let study = cfg.study();
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let cells = run_study(&study)?;
    let coverage = coverage_report(&cells, &study);
    write_coverage_csv(&coverage, BufWriter::new(File::create(dir.join("coverage.csv"))?))?;
    write_variance_csv(
        &variance_report(&cells),
        BufWriter::new(File::create(dir.join("variance_ratios.csv"))?),
    )?;
    write_coverage_long_csv(&coverage, BufWriter::new(File::create(dir.join("coverage_long.csv"))?))?;
    Ok(())
}

pub fn execute(cfg: &RunConfig) -> Result<()> {
    match cfg.command {
        Some(Command::Estimate) => cmd_estimate(cfg),
        Some(Command::Bandwidth) => cmd_bandwidth(cfg),
        Some(Command::Ci) => cmd_ci(cfg),
        Some(Command::Simulate) => cmd_simulate(cfg),
        None => Err(FdaError::Config("no command given".into())),
    }
}

/// Caps the global worker pool when `FDACOV_THREADS` is set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| FdaError::Config(format!("{THREADS_ENV}='{raw}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| FdaError::Config(format!("cannot size worker pool: {e}")))
}

pub fn error_json(err: &FdaError) -> String {
    json!({
        "error": err.kind(),
        "message": err.to_string(),
        "exit_code": err.exit_code(),
    })
    .to_string()
}

/// Runs the CLI on the given arguments and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = FdaError::Config(e.to_string().trim().to_string());
            eprintln!("{}", error_json(&err));
            return err.exit_code();
        }
    };
    let result = init_threads().and_then(|_| resolve(&cli)).and_then(|cfg| execute(&cfg));
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            err.exit_code()
        }
    }
}
