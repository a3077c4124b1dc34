//! Closed-form AMISE-optimal bandwidth rules, their AMISE objectives, and
//! GCV selection of the pilot bandwidths used for curvature estimates.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::PanelSample;
use crate::error::{FdaError, Result};
use crate::kernels::KernelSpec;
use crate::llk::cubic_basis;
use crate::linalg::NormalEquations;
use crate::polyfit::{CovFunctionals, MeanFunctionals};

pub const H_MIN: f64 = 1e-3;
pub const H_MAX: f64 = 1.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Sparse,
    #[default]
    Dense,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Sparse => "sparse",
            Regime::Dense => "dense",
        })
    }
}

impl FromStr for Regime {
    type Err = FdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sparse" => Ok(Regime::Sparse),
            "dense" => Ok(Regime::Dense),
            other => Err(FdaError::Config(format!("unknown regime '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Mean,
    Covariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSet {
    pub h_u: f64,
    pub h_z: f64,
    pub target: Target,
    pub regime: Regime,
    /// Set when either bandwidth was moved into `[H_MIN, H_MAX]`.
    #[serde(default)]
    pub clamped: bool,
    /// Set when the normal-reference rule replaced a degenerate plug-in rule.
    #[serde(default)]
    pub fallback: bool,
}

impl BandwidthSet {
    fn new(h_u: f64, h_z: f64, target: Target, regime: Regime) -> Result<Self> {
        for h in [h_u, h_z] {
            if !(h.is_finite() && h > 0.0) {
                return Err(FdaError::DegenerateFunctionals(format!(
                    "bandwidth formula produced {h}"
                )));
            }
        }
        Ok(Self {
            h_u,
            h_z,
            target,
            regime,
            clamped: false,
            fallback: false,
        })
    }

    /// Clamps both bandwidths to `[H_MIN, H_MAX]`.
    pub fn clamp(mut self) -> Self {
        let cu = self.h_u.clamp(H_MIN, H_MAX);
        let cz = self.h_z.clamp(H_MIN, H_MAX);
        if cu != self.h_u || cz != self.h_z {
            self.clamped = true;
        }
        self.h_u = cu;
        self.h_z = cz;
        self
    }
}

fn degenerate(msg: impl Into<String>) -> FdaError {
    FdaError::DegenerateFunctionals(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(degenerate(format!("{name} = {v} must be positive")))
    }
}

/// Exact minimizer of the mean AMISE without the between-curve term.
pub fn sparse_mean_bandwidths(
    f: &MeanFunctionals,
    n: usize,
    m: usize,
    kernel: &KernelSpec,
) -> Result<BandwidthSet> {
    positive("I_UU", f.i_uu)?;
    positive("I_ZZ", f.i_zz)?;
    let bracket = (f.i_uu * f.i_zz).sqrt() + f.i_uz;
    positive("sqrt(I_UU I_ZZ) + I_UZ", bracket)?;
    let nm = (n * m) as f64;
    let num = kernel.rk_mean() * f.q1 * f.i_zz.powf(0.75);
    let den = nm * kernel.nu2_mean().powi(2) * bracket * f.i_uu.powf(0.75);
    let h_u = (num / den).powf(1.0 / 6.0);
    let h_z = (f.i_uu / f.i_zz).powf(0.25) * h_u;
    BandwidthSet::new(h_u, h_z, Target::Mean, Regime::Sparse)
}

/// Exact minimizer of the covariance AMISE without the between-curve term.
pub fn sparse_cov_bandwidths(
    f: &CovFunctionals,
    n: usize,
    m: usize,
    kernel: &KernelSpec,
) -> Result<BandwidthSet> {
    positive("I_ZZ", f.i_zz)?;
    let c = f
        .c_i()
        .ok_or_else(|| degenerate(format!("negative discriminant {}", f.discriminant())))?;
    let gap = c - f.i_u1z;
    positive("C - I_U1Z", gap)?;
    let tail = c + 3.0 * f.i_u1z;
    positive("C + 3 I_U1Z", tail)?;
    let big_m = (m * m - m) as f64;
    let num = kernel.rk_cov() * f.q1 * 4.0 * 2f64.sqrt() * f.i_zz.powf(1.5);
    let den = n as f64 * big_m * kernel.nu2_cov().powi(2) * tail * gap.powf(1.5);
    let h_u = (num / den).powf(1.0 / 7.0);
    let h_z = (gap / (2.0 * f.i_zz)).sqrt() * h_u;
    BandwidthSet::new(h_u, h_z, Target::Covariance, Regime::Sparse)
}

pub fn dense_mean_bandwidths(
    f: &MeanFunctionals,
    n: usize,
    m: usize,
    kernel: &KernelSpec,
) -> Result<BandwidthSet> {
    positive("I_ZZ", f.i_zz)?;
    positive("I_UZ", f.i_uz)?;
    positive("Q_1", f.q1)?;
    positive("Q_2", f.q2)?;
    let nu = kernel.nu2_mean().powi(2);
    let h_z = (kernel.rk * f.q2 / (n as f64 * nu * f.i_zz)).powf(0.2);
    let h_u = (kernel.rk_mean() * f.q1 / ((n * m) as f64 * nu * f.i_uz)).powf(1.0 / 3.0) / h_z;
    BandwidthSet::new(h_u, h_z, Target::Mean, Regime::Dense)
}

pub fn dense_cov_bandwidths(
    f: &CovFunctionals,
    n: usize,
    m: usize,
    kernel: &KernelSpec,
) -> Result<BandwidthSet> {
    positive("I_ZZ", f.i_zz)?;
    positive("I_U1Z", f.i_u1z)?;
    positive("Q_1", f.q1)?;
    positive("Q_2", f.q2)?;
    let nu = kernel.nu2_cov().powi(2);
    let big_m = (m * m - m) as f64;
    let h_z = (kernel.rk * f.q2 / (n as f64 * nu * f.i_zz)).powf(0.2);
    let h_u = (kernel.rk_cov() * f.q1 / (n as f64 * big_m * nu * f.i_u1z)).powf(0.25)
        * h_z.powf(-0.75);
    BandwidthSet::new(h_u, h_z, Target::Covariance, Regime::Dense)
}

pub fn mean_bandwidths(
    regime: Regime,
    f: &MeanFunctionals,
    n: usize,
    m: usize,
    kernel: &KernelSpec,
) -> Result<BandwidthSet> {
    match regime {
        Regime::Sparse => sparse_mean_bandwidths(f, n, m, kernel),
        Regime::Dense => dense_mean_bandwidths(f, n, m, kernel),
    }
}

pub fn cov_bandwidths(
    regime: Regime,
    f: &CovFunctionals,
    n: usize,
    m: usize,
    kernel: &KernelSpec,
) -> Result<BandwidthSet> {
    match regime {
        Regime::Sparse => sparse_cov_bandwidths(f, n, m, kernel),
        Regime::Dense => dense_cov_bandwidths(f, n, m, kernel),
    }
}

/// Normal-reference bandwidths `1.06·sd·N^{−1/(4+d)}` for the design of
/// the given target: `(U, Z)` over `nm` points, or `(U₁, U₂, Z)` over `nM` pairs.
pub fn normal_reference_bandwidths(
    sample: &PanelSample,
    target: Target,
    regime: Regime,
) -> Result<BandwidthSet> {
    let sd = |v: &mut dyn Iterator<Item = f64>| {
        let xs: Vec<f64> = v.collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len().max(2) - 1) as f64).sqrt()
    };
    let sd_u = sd(&mut sample.u_values().iter().copied());
    let sd_z = sd(&mut sample.observations().map(|(_, z, _)| z));
    let (count, dim) = match target {
        Target::Mean => (sample.len(), 2.0),
        Target::Covariance => (sample.n() * sample.big_m(), 3.0),
    };
    let rate = (count as f64).powf(-1.0 / (4.0 + dim));
    let mut set = BandwidthSet::new(1.06 * sd_u * rate, 1.06 * sd_z * rate, target, regime)
        .map_err(|_| FdaError::DegenerateSample("design has zero spread".into()))?;
    set.fallback = true;
    Ok(set)
}

/// Mean AMISE; `include_v2` adds the between-curve term `n⁻¹h_z⁻¹R(κ)Q₂`.
pub fn amise_mean(
    h_u: f64,
    h_z: f64,
    f: &MeanFunctionals,
    n: usize,
    m: usize,
    kernel: &KernelSpec,
    include_v2: bool,
) -> f64 {
    let mut v = kernel.rk_mean() * f.q1 / ((n * m) as f64 * h_u * h_z);
    if include_v2 {
        v += kernel.rk * f.q2 / (n as f64 * h_z);
    }
    let bias = h_u.powi(4) * f.i_uu + 2.0 * h_u * h_u * h_z * h_z * f.i_uz + h_z.powi(4) * f.i_zz;
    v + 0.25 * kernel.nu2_mean().powi(2) * bias
}

/// Covariance AMISE; `include_v2` adds `n⁻¹h_z⁻¹R(κ)Q₂`.
pub fn amise_cov(
    h_u: f64,
    h_z: f64,
    f: &CovFunctionals,
    n: usize,
    m: usize,
    kernel: &KernelSpec,
    include_v2: bool,
) -> f64 {
    let big_m = (m * m - m) as f64;
    let mut v = kernel.rk_cov() * f.q1 / (n as f64 * big_m * h_u * h_u * h_z);
    if include_v2 {
        v += kernel.rk * f.q2 / (n as f64 * h_z);
    }
    let bias = 2.0 * h_u.powi(4) * (f.i_u1u1 + f.i_u1u2)
        + 4.0 * h_u * h_u * h_z * h_z * f.i_u1z
        + h_z.powi(4) * f.i_zz;
    v + 0.25 * kernel.nu2_cov().powi(2) * bias
}

pub const GCV_GRID_LEN: usize = 10;
const GCV_LO: f64 = 0.05;
const GCV_HI: f64 = 1.0;
/// A candidate is discarded when more than this share of its local fits is singular.
const GCV_MAX_SINGULAR_SHARE: f64 = 0.1;

pub fn gcv_grid() -> Vec<f64> {
    let (lo, hi) = (GCV_LO.ln(), GCV_HI.ln());
    (0..GCV_GRID_LEN)
        .map(|i| (lo + (hi - lo) * i as f64 / (GCV_GRID_LEN - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GcvCandidate {
    pub g_u: f64,
    pub g_z: f64,
    /// `None` when the candidate was discarded.
    pub score: Option<f64>,
    pub singular_fits: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GcvSelection {
    pub g_u: f64,
    pub g_z: f64,
    pub score: f64,
    pub candidates: Vec<GcvCandidate>,
}

/// Criterion used to pick the curvature-fit bandwidths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeCriterion {
    /// Generalized cross-validation with the smoother-matrix trace.
    Gcv,
    /// Leave-one-curve-out cross-validation.
    #[default]
    LeaveCurveOut,
}

impl FromStr for DerivativeCriterion {
    type Err = FdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcv" => Ok(DerivativeCriterion::Gcv),
            "leave-curve-out" | "curve-cv" => Ok(DerivativeCriterion::LeaveCurveOut),
            other => Err(FdaError::Config(format!("unknown derivative criterion '{other}'"))),
        }
    }
}

// Exponents of (t, s) for each basis column (1, t, t², t³, s, s², s³).
const T_POW: [usize; 7] = [0, 1, 2, 3, 0, 0, 0];
const S_POW: [usize; 7] = [0, 0, 0, 0, 1, 2, 3];

/// GCV over a log grid on `[0.05, 1]²` for the local-cubic curvature fits.
/// Every observation is a fitting point; singular fits are left out of both
/// the residual sum and the trace.
pub fn gcv_derivative_bandwidths(sample: &PanelSample, kernel: &KernelSpec) -> Result<GcvSelection> {
    derivative_bandwidth_search(sample, kernel, DerivativeCriterion::Gcv, usize::MAX)
}

/// Leave-one-curve-out cross-validation over the same grid: each observation
/// is predicted from the other curves only, so curve-level random effects
/// count as noise rather than signal.
pub fn curve_cv_derivative_bandwidths(sample: &PanelSample, kernel: &KernelSpec) -> Result<GcvSelection> {
    derivative_bandwidth_search(sample, kernel, DerivativeCriterion::LeaveCurveOut, usize::MAX)
}

/// Grid search under either criterion. The criterion is averaged over at
/// most `max_eval` observations (an evenly strided subset); every fit still
/// uses the full sample.
pub fn derivative_bandwidth_search(
    sample: &PanelSample,
    kernel: &KernelSpec,
    criterion: DerivativeCriterion,
    max_eval: usize,
) -> Result<GcvSelection> {
    let loco = criterion == DerivativeCriterion::LeaveCurveOut;
    let total = sample.len();
    if total < 30 {
        return Err(FdaError::InvalidPanel(format!(
            "GCV needs at least 30 observations, got {total}"
        )));
    }
    let grid = gcv_grid();
    let (n, m) = (sample.n(), sample.m());
    let stride = total.div_ceil(max_eval.max(1));
    let evaluated = total.div_ceil(stride);
    let k0 = kernel.eval(0.0);

    let per_gu: Vec<Vec<GcvCandidate>> = grid
        .par_iter()
        .map(|&g_u| {
            let mut rss = vec![0.0; grid.len()];
            let mut trace = vec![0.0; grid.len()];
            let mut used = vec![0usize; grid.len()];
            // Per-curve t-moments Σⱼ K(t)/g_u·tᵏ (k ≤ 6) and Σⱼ K(t)/g_u·tᵏ·y (k ≤ 3).
            let mut tm = vec![[0.0f64; 7]; n];
            let mut ty = vec![[0.0f64; 4]; n];
            for p in (0..total).step_by(stride) {
                let (up, zp, yp) = (sample.u(p / m, p % m), sample.z(p / m), sample.y(p / m, p % m));
                for i in 0..n {
                    let (mut a, mut b) = ([0.0; 7], [0.0; 4]);
                    for j in 0..m {
                        let t = (sample.u(i, j) - up) / g_u;
                        let w = kernel.eval(t) / g_u;
                        if w == 0.0 {
                            continue;
                        }
                        let y = sample.y(i, j);
                        let mut tp = w;
                        for k in 0..7 {
                            a[k] += tp;
                            if k < 4 {
                                b[k] += tp * y;
                            }
                            tp *= t;
                        }
                    }
                    tm[i] = a;
                    ty[i] = b;
                }
                for (c, &g_z) in grid.iter().enumerate() {
                    let mut gram = [[0.0; 7]; 7];
                    let mut rhs = [0.0; 7];
                    let mut mass = 0.0;
                    for i in 0..n {
                        if loco && i == p / m {
                            continue;
                        }
                        let s = (sample.z(i) - zp) / g_z;
                        let wz = kernel.eval(s) / g_z;
                        if wz == 0.0 || tm[i][0] == 0.0 {
                            continue;
                        }
                        let mut sp = [wz; 7];
                        for l in 1..7 {
                            sp[l] = sp[l - 1] * s;
                        }
                        mass += wz * tm[i][0];
                        for a in 0..7 {
                            for b in a..7 {
                                gram[a][b] += sp[S_POW[a] + S_POW[b]] * tm[i][T_POW[a] + T_POW[b]];
                            }
                            rhs[a] += sp[S_POW[a]] * ty[i][T_POW[a]];
                        }
                    }
                    let mut ne = NormalEquations::<7>::new();
                    ne.add_raw(&gram, &rhs, mass);
                    if let Ok(sol) = ne.solve() {
                        rss[c] += (yp - sol.coef[0]).powi(2);
                        trace[c] += k0 * k0 / (g_u * g_z) * sol.inv00;
                        used[c] += 1;
                    }
                }
            }
            grid.iter()
                .enumerate()
                .map(|(c, &g_z)| {
                    let singular = evaluated - used[c];
                    let score = if (singular as f64) > GCV_MAX_SINGULAR_SHARE * evaluated as f64 {
                        None
                    } else if loco {
                        Some(rss[c] / used[c] as f64)
                    } else {
                        let nf = used[c] as f64;
                        let denom = 1.0 - trace[c] / nf;
                        (denom > 0.0).then(|| (rss[c] / nf) / (denom * denom))
                    };
                    GcvCandidate {
                        g_u,
                        g_z,
                        score,
                        singular_fits: singular,
                    }
                })
                .collect()
        })
        .collect();
    let candidates: Vec<GcvCandidate> = per_gu.into_iter().flatten().collect();
    let best = candidates
        .iter()
        .filter_map(|c| c.score.map(|s| (c, s)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(FdaError::AllSingular)?;
    Ok(GcvSelection {
        g_u: best.0.g_u,
        g_z: best.0.g_z,
        score: best.1,
        candidates: candidates.clone(),
    })
}

/// Direct GCV score at one `(g_u, g_z)` by refitting every point from
/// scratch; used to check the accumulated path.
pub fn gcv_score_direct(sample: &PanelSample, g_u: f64, g_z: f64, kernel: &KernelSpec) -> Option<f64> {
    let total = sample.len();
    let m = sample.m();
    let (mut rss, mut trace, mut used) = (0.0, 0.0, 0usize);
    for p in 0..total {
        let (up, zp) = (sample.u(p / m, p % m), sample.z(p / m));
        let mut ne = NormalEquations::<7>::new();
        for i in 0..sample.n() {
            let s = (sample.z(i) - zp) / g_z;
            for j in 0..m {
                let t = (sample.u(i, j) - up) / g_u;
                let w = kernel.eval(t) * kernel.eval(s) / (g_u * g_z);
                ne.add(&cubic_basis(t, s), w, sample.y(i, j));
            }
        }
        if let Ok(sol) = ne.solve() {
            rss += (sample.y(p / m, p % m) - sol.coef[0]).powi(2);
            trace += kernel.eval(0.0).powi(2) / (g_u * g_z) * sol.inv00;
            used += 1;
        }
    }
    if ((total - used) as f64) > GCV_MAX_SINGULAR_SHARE * total as f64 {
        return None;
    }
    let nf = used as f64;
    let denom = 1.0 - trace / nf;
    (denom > 0.0).then(|| (rss / nf) / (denom * denom))
}
