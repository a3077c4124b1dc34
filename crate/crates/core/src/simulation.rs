//! Synthetic data generators and the Monte-Carlo coverage and variance studies.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{mean_bandwidths, Regime};
use crate::data::PanelSample;
use crate::error::{FdaError, Result};
use crate::inference::{
    bias_from_curvature, estimate_v1, estimate_v2, normal_quantile, Analysis, CiMethod,
    PipelineConfig, PointInference,
};
use crate::kernels::KernelSpec;
use crate::llk::fit_mean;
use crate::polyfit::{integrate_mean_functionals, MeanFunctionals, MeanSurfaces, Weight};
use crate::quadrature::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DgpId {
    Dgp1,
    Dgp2,
}

impl DgpId {
    pub fn index(self) -> u64 {
        match self {
            DgpId::Dgp1 => 1,
            DgpId::Dgp2 => 2,
        }
    }
}

impl fmt::Display for DgpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

impl FromStr for DgpId {
    type Err = FdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().trim_start_matches("dgp") {
            "1" => Ok(DgpId::Dgp1),
            "2" => Ok(DgpId::Dgp2),
            other => Err(FdaError::Config(format!("unknown DGP '{other}'"))),
        }
    }
}

/// Weights of the two eigen-components in the true covariance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaWeights {
    /// The generator's score variances, `(3, 2)`.
    #[default]
    ScoreVariances,
    /// The weights `(2, 1)` printed alongside the model description.
    Stated,
}

impl FromStr for GammaWeights {
    type Err = FdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "score-variances" | "scores" => Ok(GammaWeights::ScoreVariances),
            "stated" => Ok(GammaWeights::Stated),
            other => Err(FdaError::Config(format!("unknown gamma weights '{other}'"))),
        }
    }
}

/// `Y = μ(U,Z) + ξ₁ψ₁(U,Z) + ξ₂ψ₂(U,Z) + ε` with uniform `U`, `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DgpSpec {
    pub id: DgpId,
    pub n: usize,
    pub m: usize,
    pub sigma_eps: f64,
    pub score_vars: (f64, f64),
    pub gamma_weights: GammaWeights,
}

impl DgpSpec {
    pub fn new(id: DgpId, n: usize, m: usize) -> Self {
        Self {
            id,
            n,
            m,
            sigma_eps: 1.0,
            score_vars: (3.0, 2.0),
            gamma_weights: GammaWeights::default(),
        }
    }

    /// `(frequency of μ, frequency of ψ₁, frequency of ψ₂)` in units of `π·u·z`.
    fn freqs(&self) -> (f64, f64, f64) {
        match self.id {
            DgpId::Dgp1 => (0.5, 1.0, 2.0),
            DgpId::Dgp2 => (1.0, 2.0, 3.0),
        }
    }

    pub fn mean(&self, u: f64, z: f64) -> f64 {
        5.0 * (self.freqs().0 * PI * u * z).sin()
    }

    pub fn psi1(&self, u: f64, z: f64) -> f64 {
        (self.freqs().1 * PI * u * z).sin()
    }

    pub fn psi2(&self, u: f64, z: f64) -> f64 {
        (self.freqs().2 * PI * u * z).sin()
    }

    /// `(∂²μ/∂u², ∂²μ/∂z²)`.
    pub fn mean_curvature(&self, u: f64, z: f64) -> (f64, f64) {
        let a = self.freqs().0 * PI;
        let s = (a * u * z).sin();
        (-5.0 * (a * z).powi(2) * s, -5.0 * (a * u).powi(2) * s)
    }

    fn gamma_weights(&self) -> (f64, f64) {
        match self.gamma_weights {
            GammaWeights::ScoreVariances => self.score_vars,
            GammaWeights::Stated => (2.0, 1.0),
        }
    }

    pub fn cov(&self, u1: f64, u2: f64, z: f64) -> f64 {
        let (a, b) = self.gamma_weights();
        a * self.psi1(u1, z) * self.psi1(u2, z) + b * self.psi2(u1, z) * self.psi2(u2, z)
    }

    /// Draws a panel; curve `i` uses stream `i` of a ChaCha8 generator keyed by `seed`.
    pub fn generate(&self, seed: u64) -> PanelSample {
        let (n, m) = (self.n, self.m);
        let xi1 = Normal::new(0.0, self.score_vars.0.sqrt()).expect("finite sd");
        let xi2 = Normal::new(0.0, self.score_vars.1.sqrt()).expect("finite sd");
        let eps = Normal::new(0.0, self.sigma_eps).expect("finite sd");
        let mut y = Vec::with_capacity(n * m);
        let mut u = Vec::with_capacity(n * m);
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let zi: f64 = rng.random();
            let a = xi1.sample(&mut rng);
            let b = xi2.sample(&mut rng);
            for _ in 0..m {
                let uij: f64 = rng.random();
                let e = eps.sample(&mut rng);
                y.push(self.mean(uij, zi) + a * self.psi1(uij, zi) + b * self.psi2(uij, zi) + e);
                u.push(uij);
            }
            z.push(zi);
        }
        PanelSample::new(n, m, y, u, z).expect("generator output is a valid panel")
    }

    /// Mean functionals of the true surfaces under the uniform design.
    pub fn true_mean_functionals(&self, grid: &GridSpec) -> Result<MeanFunctionals> {
        let d20 = |u: f64, z: f64| self.mean_curvature(u, z).0;
        let d02 = |u: f64, z: f64| self.mean_curvature(u, z).1;
        let noisy = |u: f64, z: f64| self.cov(u, u, z) + self.sigma_eps.powi(2);
        let diag = |u: f64, z: f64| self.cov(u, u, z);
        integrate_mean_functionals(
            &MeanSurfaces {
                d20: &d20,
                d02: &d02,
                noisy_diag: &noisy,
                diag: &diag,
            },
            Weight::Uniform,
            Weight::Uniform,
            grid,
        )
    }
}

/// SplitMix64 finalizer.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one replicate, a hash of the study seed and the cell coordinates.
pub fn rep_seed(seed: u64, dgp: DgpId, m: usize, rep: usize) -> u64 {
    let mut h = splitmix(seed);
    for v in [dgp.index(), m as u64, rep as u64] {
        h = splitmix(h ^ v);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub dgps: Vec<DgpId>,
    pub ms: Vec<usize>,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub methods: Vec<CiMethod>,
    pub seed: u64,
    pub point: (f64, f64),
    pub gamma_weights: GammaWeights,
    pub pipeline: PipelineConfig,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            dgps: vec![DgpId::Dgp1],
            ms: vec![5, 10, 15],
            n: 100,
            reps: 300,
            alpha: 0.2,
            methods: CiMethod::ALL.to_vec(),
            seed: 1,
            point: (0.5, 0.5),
            gamma_weights: GammaWeights::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Interval outcome of one method in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalOutcome {
    pub covered: bool,
    pub center: f64,
    pub width: f64,
}

impl IntervalOutcome {
    /// Whether the interval rescaled from level `alpha` to `other_alpha`
    /// would contain `truth`.
    pub fn covers_at(&self, truth: f64, alpha: f64, other_alpha: f64) -> bool {
        let scale = normal_quantile(1.0 - other_alpha / 2.0) / normal_quantile(1.0 - alpha / 2.0);
        (truth - self.center).abs() <= 0.5 * self.width * scale
    }
}

/// Everything one replicate contributes to the reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub error: Option<String>,
    /// `(method, feasible, infeasible)` in the order of the configured methods.
    pub intervals: Vec<(CiMethod, IntervalOutcome, IntervalOutcome)>,
    /// `[sparse, dense]` estimates and plug-in variance terms.
    pub estimate: [f64; 2],
    pub v1: [f64; 2],
    pub v2: [f64; 2],
}

fn outcome(ci: &PointInference, truth: f64) -> IntervalOutcome {
    IntervalOutcome {
        covered: ci.contains(truth),
        center: ci.center(),
        width: ci.width(),
    }
}

/// Interval built from true curvature, true covariance and uniform densities,
/// with bandwidths from the true functionals.
struct InfeasibleInputs {
    bandwidths: [(f64, f64); 2],
    d20: f64,
    d02: f64,
    gamma: f64,
    noisy_gamma: f64,
}

fn infeasible_inputs(spec: &DgpSpec, point: (f64, f64), cfg: &PipelineConfig) -> Result<InfeasibleInputs> {
    let f = spec.true_mean_functionals(&cfg.grid)?;
    let mut bw = [(0.0, 0.0); 2];
    for (slot, regime) in [Regime::Sparse, Regime::Dense].into_iter().enumerate() {
        let b = mean_bandwidths(regime, &f, spec.n, spec.m, &cfg.kernel)?;
        bw[slot] = (b.h_u.clamp(cfg.h_min, cfg.h_max), b.h_z.clamp(cfg.h_min, cfg.h_max));
    }
    let (d20, d02) = spec.mean_curvature(point.0, point.1);
    let gamma = spec.cov(point.0, point.0, point.1);
    Ok(InfeasibleInputs {
        bandwidths: bw,
        d20,
        d02,
        gamma,
        noisy_gamma: gamma + spec.sigma_eps.powi(2),
    })
}

fn infeasible_interval(
    sample: &PanelSample,
    inp: &InfeasibleInputs,
    method: CiMethod,
    point: (f64, f64),
    alpha: f64,
    kernel: &KernelSpec,
) -> Result<(f64, f64)> {
    let slot = usize::from(method.regime() == Regime::Dense);
    let (h_u, h_z) = inp.bandwidths[slot];
    let est = fit_mean(sample, point.0, point.1, h_u, h_z, kernel)?.value;
    let bias = bias_from_curvature(method.regime(), h_u, h_z, inp.d20, inp.d02, kernel);
    let (n, m) = (sample.n(), sample.m());
    let v1 = estimate_v1(h_u, h_z, inp.noisy_gamma, 1.0, n, m, kernel);
    let v2 = estimate_v2(h_z, inp.gamma, 1.0, n, m, kernel);
    let half = normal_quantile(1.0 - alpha / 2.0) * method.variance(v1, v2).sqrt();
    Ok((est - bias - half, est - bias + half))
}

fn run_rep(spec: &DgpSpec, cfg: &StudyConfig, inf: &InfeasibleInputs, rep: usize) -> RepOutcome {
    let seed = rep_seed(cfg.seed, spec.id, spec.m, rep);
    let mut out = RepOutcome {
        rep,
        error: None,
        intervals: Vec::new(),
        estimate: [f64::NAN; 2],
        v1: [f64::NAN; 2],
        v2: [f64::NAN; 2],
    };
    let result = (|| -> Result<()> {
        let sample = spec.generate(seed);
        let pipeline = PipelineConfig {
            seed,
            ..cfg.pipeline
        };
        let (u, z) = cfg.point;
        let truth = spec.mean(u, z);
        let analysis = Analysis::new(sample, pipeline)?;
        let est = [
            analysis.regime_estimate(u, z, Regime::Sparse)?,
            analysis.regime_estimate(u, z, Regime::Dense)?,
        ];
        for (slot, e) in est.iter().enumerate() {
            out.estimate[slot] = e.estimate;
            out.v1[slot] = e.v1;
            out.v2[slot] = e.v2;
        }
        for &method in &cfg.methods {
            let slot = usize::from(method.regime() == Regime::Dense);
            let ci = PointInference::from_estimate(&est[slot], method, cfg.alpha)?;
            let (lo, hi) = infeasible_interval(
                &analysis.sample,
                inf,
                method,
                cfg.point,
                cfg.alpha,
                &pipeline.kernel,
            )?;
            out.intervals.push((
                method,
                outcome(&ci, truth),
                IntervalOutcome {
                    covered: lo <= truth && truth <= hi,
                    center: 0.5 * (lo + hi),
                    width: hi - lo,
                },
            ));
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(format!("{}: {e}", e.kind()));
        out.intervals.clear();
    }
    out
}

/// Per-(dgp, m) replicate outcomes, ordered by replicate index.
#[derive(Debug, Clone, Serialize)]
pub struct CellRuns {
    pub dgp: DgpId,
    pub m: usize,
    pub reps: Vec<RepOutcome>,
}

/// Runs every configured cell; replicates are independent tasks collected in order.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<CellRuns>> {
    if cfg.reps == 0 || cfg.n == 0 || cfg.ms.iter().any(|&m| m < 2) {
        return Err(FdaError::Config("study needs reps >= 1, n >= 1 and m >= 2".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(FdaError::Config(format!("alpha {} outside (0, 1)", cfg.alpha)));
    }
    cfg.pipeline.validate()?;
    let mut cells = Vec::new();
    for &dgp in &cfg.dgps {
        for &m in &cfg.ms {
            let spec = DgpSpec {
                gamma_weights: cfg.gamma_weights,
                ..DgpSpec::new(dgp, cfg.n, m)
            };
            let inf = infeasible_inputs(&spec, cfg.point, &cfg.pipeline)?;
            let reps: Vec<RepOutcome> = (0..cfg.reps)
                .into_par_iter()
                .map(|r| run_rep(&spec, cfg, &inf, r))
                .collect();
            cells.push(CellRuns { dgp, m, reps });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub dgp: DgpId,
    pub m: usize,
    pub method: CiMethod,
    pub feasible: bool,
    pub reps: usize,
    pub failures: usize,
    pub coverage: f64,
    pub mean_width: f64,
    /// More than 10% of replicates failed.
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn get(&self, dgp: DgpId, m: usize, method: CiMethod, feasible: bool) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.dgp == dgp && r.m == m && r.method == method && r.feasible == feasible)
    }
}

pub fn coverage_report(cells: &[CellRuns], cfg: &StudyConfig) -> CoverageReport {
    let mut rows = Vec::new();
    for cell in cells {
        let failures = cell.reps.iter().filter(|r| r.error.is_some()).count();
        for (k, &method) in cfg.methods.iter().enumerate() {
            for feasible in [true, false] {
                let outcomes: Vec<IntervalOutcome> = cell
                    .reps
                    .iter()
                    .filter(|r| r.error.is_none())
                    .map(|r| if feasible { r.intervals[k].1 } else { r.intervals[k].2 })
                    .collect();
                let ok = outcomes.len();
                let hits = outcomes.iter().filter(|o| o.covered).count();
                let width = outcomes.iter().map(|o| o.width).sum::<f64>();
                rows.push(CoverageRow {
                    dgp: cell.dgp,
                    m: cell.m,
                    method,
                    feasible,
                    reps: cell.reps.len(),
                    failures,
                    coverage: if ok > 0 { hits as f64 / ok as f64 } else { f64::NAN },
                    mean_width: if ok > 0 { width / ok as f64 } else { f64::NAN },
                    unreliable: failures as f64 >= 0.1 * cell.reps.len() as f64,
                });
            }
        }
    }
    CoverageReport {
        alpha: cfg.alpha,
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub dgp: DgpId,
    pub m: usize,
    pub regime: Regime,
    pub reps_used: usize,
    pub var_hat: f64,
    pub v1_bar: f64,
    pub v2_bar: f64,
    pub ratio_v1: f64,
    pub ratio_v2: f64,
    pub ratio_v1_v2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRatioReport {
    pub rows: Vec<VarianceRow>,
}

impl VarianceRatioReport {
    pub fn get(&self, dgp: DgpId, m: usize, regime: Regime) -> Option<&VarianceRow> {
        self.rows
            .iter()
            .find(|r| r.dgp == dgp && r.m == m && r.regime == regime)
    }
}

pub fn variance_report(cells: &[CellRuns]) -> VarianceRatioReport {
    let mut rows = Vec::new();
    for cell in cells {
        for (slot, regime) in [Regime::Sparse, Regime::Dense].into_iter().enumerate() {
            let ok: Vec<&RepOutcome> = cell.reps.iter().filter(|r| r.error.is_none()).collect();
            let k = ok.len() as f64;
            let mean = ok.iter().map(|r| r.estimate[slot]).sum::<f64>() / k;
            let var_hat = ok.iter().map(|r| (r.estimate[slot] - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let v1_bar = ok.iter().map(|r| r.v1[slot]).sum::<f64>() / k;
            let v2_bar = ok.iter().map(|r| r.v2[slot]).sum::<f64>() / k;
            rows.push(VarianceRow {
                dgp: cell.dgp,
                m: cell.m,
                regime,
                reps_used: ok.len(),
                var_hat,
                v1_bar,
                v2_bar,
                ratio_v1: var_hat / v1_bar,
                ratio_v2: var_hat / v2_bar,
                ratio_v1_v2: var_hat / (v1_bar + v2_bar),
            });
        }
    }
    VarianceRatioReport { rows }
}

/// Decimal rendering with 10 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-6..=15).contains(&mag) {
        let decimals = (9 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.9e}")
    }
}

pub fn write_coverage_csv<W: Write>(report: &CoverageReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dgp", "m", "method", "variant", "reps", "failures", "coverage", "mean_width", "unreliable",
    ])
    .map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.dgp.to_string(),
            r.m.to_string(),
            r.method.to_string(),
            variant(r.feasible).into(),
            r.reps.to_string(),
            r.failures.to_string(),
            fmt_sig(r.coverage),
            fmt_sig(r.mean_width),
            r.unreliable.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_variance_csv<W: Write>(report: &VarianceRatioReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dgp", "m", "regime", "reps_used", "var_hat", "v1_bar", "v2_bar", "var_over_v1",
        "var_over_v2", "var_over_v1_plus_v2",
    ])
    .map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([
            r.dgp.to_string(),
            r.m.to_string(),
            r.regime.to_string(),
            r.reps_used.to_string(),
            fmt_sig(r.var_hat),
            fmt_sig(r.v1_bar),
            fmt_sig(r.v2_bar),
            fmt_sig(r.ratio_v1),
            fmt_sig(r.ratio_v2),
            fmt_sig(r.ratio_v1_v2),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format with one row per plotted point: panel, dgp, method, m, coverage.
pub fn write_coverage_long_csv<W: Write>(report: &CoverageReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["panel", "dgp", "method", "m", "coverage", "nominal"])
        .map_err(csv_err)?;
    let nominal = fmt_sig(1.0 - report.alpha);
    for r in &report.rows {
        w.write_record([
            format!("dgp{}-{}", r.dgp, variant(r.feasible)),
            r.dgp.to_string(),
            r.method.to_string(),
            r.m.to_string(),
            fmt_sig(r.coverage),
            nominal.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn variant(feasible: bool) -> &'static str {
    if feasible {
        "feasible"
    } else {
        "infeasible"
    }
}

fn csv_err(e: csv::Error) -> FdaError {
    FdaError::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curvature_values() {
        let d1 = DgpSpec::new(DgpId::Dgp1, 10, 5);
        let (a, b) = d1.mean_curvature(0.5, 0.5);
        assert!((b + 1.1803).abs() < 1e-4 && (a - b).abs() < 1e-15);
        let d2 = DgpSpec::new(DgpId::Dgp2, 10, 5);
        assert!((d2.mean_curvature(0.5, 0.5).1 + 8.72358025).abs() < 1e-6);
        for z in [0.0, 0.3, 1.0] {
            assert_eq!(d1.mean(0.0, z), 0.0);
            assert_eq!(d2.mean(0.0, z), 0.0);
        }
        // Second differences of the closed-form mean agree with the analytic curvature.
        let h = 1e-4;
        let fd = (d2.mean(0.4, 0.7 + h) - 2.0 * d2.mean(0.4, 0.7) + d2.mean(0.4, 0.7 - h)) / (h * h);
        assert!((fd - d2.mean_curvature(0.4, 0.7).1).abs() < 1e-5);
    }

    #[test]
    fn generator_is_deterministic() {
        let spec = DgpSpec::new(DgpId::Dgp1, 20, 5);
        let a = spec.generate(9);
        let b = spec.generate(9);
        assert_eq!(a, b);
        assert_ne!(a, spec.generate(10));
    }

    #[test]
    fn rep_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|r| rep_seed(1, DgpId::Dgp1, 5, r)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(rep_seed(1, DgpId::Dgp1, 5, 0), rep_seed(1, DgpId::Dgp2, 5, 0));
    }

    #[test]
    fn gamma_weight_switch() {
        let mut spec = DgpSpec::new(DgpId::Dgp1, 10, 5);
        let (p1, p2) = (spec.psi1(0.5, 0.5), spec.psi2(0.5, 0.5));
        assert!((spec.cov(0.5, 0.5, 0.5) - (3.0 * p1 * p1 + 2.0 * p2 * p2)).abs() < 1e-15);
        spec.gamma_weights = GammaWeights::Stated;
        assert!((spec.cov(0.5, 0.5, 0.5) - (2.0 * p1 * p1 + p2 * p2)).abs() < 1e-15);
    }

    #[test]
    fn significant_digit_format() {
        assert_eq!(fmt_sig(0.9), "0.9000000000");
        assert_eq!(fmt_sig(1.5), "1.500000000");
        assert_eq!(fmt_sig(-123.456), "-123.4560000");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1e-9), "1.000000000e-9");
    }
}
