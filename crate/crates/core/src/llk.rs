//! Local polynomial kernel smoothers for the mean, covariance and
//! noisy-diagonal surfaces, and the local-cubic curvature estimator.
//!
//! Regressors are expressed in bandwidth units, `(U − u)/h`, so the normal
//! matrices stay well scaled; the intercept is unaffected and derivative
//! coefficients are mapped back by the matching powers of the bandwidth.

use serde::Serialize;

use crate::data::{PanelSample, RawCovariancePanel};
use crate::error::{FdaError, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{LocalSolution, NormalEquations};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceEstimate {
    pub value: f64,
    pub point: Vec<f64>,
    /// Sum of the kernel weights entering the fit.
    pub effective_mass: f64,
    /// False when the point lies within one bandwidth of the boundary.
    pub interior: bool,
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(FdaError::InvalidBandwidth(h))
    }
}

fn check_point(coords: &[f64]) -> Result<()> {
    match coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        Some(c) => Err(FdaError::Domain(format!("evaluation coordinate {c}"))),
        None => Ok(()),
    }
}

fn interior(coords: &[(f64, f64)]) -> bool {
    coords.iter().all(|&(c, h)| c - h >= 0.0 && c + h <= 1.0)
}

/// Local-linear mean surface `μ̂(u, z)`.
pub fn fit_mean(
    sample: &PanelSample,
    u: f64,
    z: f64,
    h_u: f64,
    h_z: f64,
    kernel: &KernelSpec,
) -> Result<SurfaceEstimate> {
    check_bandwidth(h_u)?;
    check_bandwidth(h_z)?;
    check_point(&[u, z])?;
    let mut ne = NormalEquations::<3>::new();
    for i in 0..sample.n() {
        let dz = (sample.z(i) - z) / h_z;
        let wz = kernel.eval(dz) / h_z;
        if wz == 0.0 {
            continue;
        }
        for j in 0..sample.m() {
            let du = (sample.u(i, j) - u) / h_u;
            let w = wz * kernel.eval(du) / h_u;
            ne.add(&[1.0, du, dz], w, sample.y(i, j));
        }
    }
    let sol = ne.solve()?;
    Ok(SurfaceEstimate {
        value: sol.coef[0],
        point: vec![u, z],
        effective_mass: sol.mass,
        interior: interior(&[(u, h_u), (z, h_z)]),
    })
}

/// Local-linear covariance surface `γ̂(u₁, u₂, z)` from the off-diagonal
/// raw covariances.
pub fn fit_cov(
    raw: &RawCovariancePanel,
    u1: f64,
    u2: f64,
    z: f64,
    h_u: f64,
    h_z: f64,
    kernel: &KernelSpec,
) -> Result<SurfaceEstimate> {
    check_bandwidth(h_u)?;
    check_bandwidth(h_z)?;
    check_point(&[u1, u2, z])?;
    let mut ne = NormalEquations::<4>::new();
    for i in 0..raw.n {
        let entries = raw.curve_entries(i);
        let dz = (entries[0].z - z) / h_z;
        let wz = kernel.eval(dz) / h_z;
        if wz == 0.0 {
            continue;
        }
        for e in entries {
            let d1 = (e.u1 - u1) / h_u;
            let d2 = (e.u2 - u2) / h_u;
            let w = wz * kernel.eval(d1) * kernel.eval(d2) / (h_u * h_u);
            ne.add(&[1.0, d1, d2, dz], w, e.c);
        }
    }
    let sol = ne.solve()?;
    Ok(SurfaceEstimate {
        value: sol.coef[0],
        point: vec![u1, u2, z],
        effective_mass: sol.mass,
        interior: interior(&[(u1, h_u), (u2, h_u), (z, h_z)]),
    })
}

/// Local-linear smoother through the squared diagonal residuals; estimates
/// `γ(u,u,z) + σ²_ε`.
pub fn fit_noisy_diagonal(
    raw: &RawCovariancePanel,
    u: f64,
    z: f64,
    h_u: f64,
    h_z: f64,
    kernel: &KernelSpec,
) -> Result<SurfaceEstimate> {
    check_bandwidth(h_u)?;
    check_bandwidth(h_z)?;
    check_point(&[u, z])?;
    let mut ne = NormalEquations::<3>::new();
    for d in &raw.diag {
        let dz = (d.z - z) / h_z;
        let du = (d.u - u) / h_u;
        let w = kernel.eval(du) * kernel.eval(dz) / (h_u * h_z);
        ne.add(&[1.0, du, dz], w, d.c);
    }
    let sol = ne.solve()?;
    Ok(SurfaceEstimate {
        value: sol.coef[0],
        point: vec![u, z],
        effective_mass: sol.mass,
        interior: interior(&[(u, h_u), (z, h_z)]),
    })
}

/// Local-cubic basis `(1, t, t², t³, s, s², s³)` with `t`, `s` in bandwidth units.
#[inline]
pub(crate) fn cubic_basis(t: f64, s: f64) -> [f64; 7] {
    let t2 = t * t;
    let s2 = s * s;
    [1.0, t, t2, t2 * t, s, s2, s2 * s]
}

/// Raw local-cubic solve at `(u, z)` in bandwidth-scaled coordinates.
pub(crate) fn local_cubic(
    sample: &PanelSample,
    u: f64,
    z: f64,
    g_u: f64,
    g_z: f64,
    kernel: &KernelSpec,
) -> Result<LocalSolution<7>> {
    let mut ne = NormalEquations::<7>::new();
    for i in 0..sample.n() {
        let s = (sample.z(i) - z) / g_z;
        let wz = kernel.eval(s) / g_z;
        if wz == 0.0 {
            continue;
        }
        for j in 0..sample.m() {
            let t = (sample.u(i, j) - u) / g_u;
            let w = wz * kernel.eval(t) / g_u;
            ne.add(&cubic_basis(t, s), w, sample.y(i, j));
        }
    }
    ne.solve()
}

/// Curvature estimates `(μ̂^(2,0), μ̂^(0,2))` at `(u, z)` from an additive
/// local-cubic fit.
pub fn fit_mean_derivatives(
    sample: &PanelSample,
    u: f64,
    z: f64,
    g_u: f64,
    g_z: f64,
    kernel: &KernelSpec,
) -> Result<(f64, f64)> {
    check_bandwidth(g_u)?;
    check_bandwidth(g_z)?;
    check_point(&[u, z])?;
    let sol = local_cubic(sample, u, z, g_u, g_z, kernel)?;
    Ok((
        2.0 * sol.coef[2] / (g_u * g_u),
        2.0 * sol.coef[5] / (g_z * g_z),
    ))
}
