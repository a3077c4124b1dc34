//! Global quartic polynomial pilot surfaces and the integral functionals
//! that feed the plug-in bandwidth rules.

use serde::{Deserialize, Serialize};

use crate::data::{PanelSample, QuadrupleRecord, RawCovariancePanel};
use crate::density::DensityEstimate;
use crate::error::{FdaError, Result};
use crate::linalg::ols;
use crate::quadrature::{GridSpec, TrapezoidAxis};

const MAX_VARS: usize = 5;
const MAX_POWER: u8 = 4;
/// Lower clamp for the variance functionals.
pub const Q_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolyTarget {
    /// `μ(u, z)`
    MuPoly,
    /// `γ(u₁, u₂, z)`
    GammaPoly,
    /// Fourth-moment surface over `(u₁, u₂, u₃, u₄, z)`.
    GammaTildePoly,
    /// Noisy diagonal `γ(u, u, z) + σ²` over `(u, z)`.
    GammaNdPoly,
    /// Variance of the raw covariances over `(u₁, u₂, z)`.
    GammaTildeNdPoly,
}

impl PolyTarget {
    pub fn n_vars(self) -> usize {
        match self {
            PolyTarget::MuPoly | PolyTarget::GammaNdPoly => 2,
            PolyTarget::GammaPoly | PolyTarget::GammaTildeNdPoly => 3,
            PolyTarget::GammaTildePoly => 5,
        }
    }

    /// Variable groups raised to powers `1..=4`. The last variable is `z`;
    /// two-element groups are `U·Z` interactions.
    fn factors(self) -> &'static [&'static [usize]] {
        match self {
            PolyTarget::MuPoly | PolyTarget::GammaNdPoly => &[&[0], &[1], &[0, 1]],
            PolyTarget::GammaPoly => &[&[0], &[1], &[2], &[0, 2], &[1, 2]],
            PolyTarget::GammaTildePoly => &[
                &[0],
                &[1],
                &[2],
                &[3],
                &[4],
                &[0, 4],
                &[1, 4],
                &[2, 4],
                &[3, 4],
            ],
            PolyTarget::GammaTildeNdPoly => &[&[0], &[1], &[2]],
        }
    }

    pub fn coefficient_count(self) -> usize {
        1 + MAX_POWER as usize * self.factors().len()
    }

    /// Exponent vectors: the intercept, then for `q = 1..=4` each factor group in order.
    pub fn terms(self) -> Vec<[u8; MAX_VARS]> {
        let mut out = vec![[0; MAX_VARS]];
        for q in 1..=MAX_POWER {
            for f in self.factors() {
                let mut e = [0; MAX_VARS];
                for &v in *f {
                    e[v] = q;
                }
                out.push(e);
            }
        }
        out
    }
}

/// Fitted polynomial `Σ βₜ ∏ᵥ xᵥ^{eₜᵥ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyModel {
    pub target: PolyTarget,
    pub coefficients: Vec<f64>,
    #[serde(skip)]
    terms: Vec<[u8; MAX_VARS]>,
}

fn powers(x: &[f64]) -> [[f64; 5]; MAX_VARS] {
    let mut p = [[1.0; 5]; MAX_VARS];
    for (v, &xv) in x.iter().enumerate() {
        for e in 1..5 {
            p[v][e] = p[v][e - 1] * xv;
        }
    }
    p
}

impl PolyModel {
    pub fn new(target: PolyTarget, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != target.coefficient_count() {
            return Err(FdaError::DimensionMismatch(format!(
                "{target:?} needs {} coefficients, got {}",
                target.coefficient_count(),
                coefficients.len()
            )));
        }
        Ok(Self {
            target,
            coefficients,
            terms: target.terms(),
        })
    }

    pub fn terms(&self) -> &[[u8; MAX_VARS]] {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.target.n_vars());
        let p = powers(x);
        let nv = x.len();
        self.terms
            .iter()
            .zip(&self.coefficients)
            .map(|(e, b)| b * (0..nv).map(|v| p[v][e[v] as usize]).product::<f64>())
            .sum()
    }

    /// `∂ᵒʳᵈᵉʳ/∂x_var` evaluated at `x`.
    pub fn derivative(&self, x: &[f64], var: usize, order: u8) -> f64 {
        let p = powers(x);
        let nv = x.len();
        let mut acc = 0.0;
        for (e, b) in self.terms.iter().zip(&self.coefficients) {
            let ev = e[var];
            if ev < order {
                continue;
            }
            let falling: f64 = (0..order).map(|k| (ev - k) as f64).product();
            let mut t = b * falling;
            for v in 0..nv {
                let ex = if v == var { ev - order } else { e[v] };
                t *= p[v][ex as usize];
            }
            acc += t;
        }
        acc
    }

    pub fn second_partial(&self, x: &[f64], var: usize) -> f64 {
        self.derivative(x, var, 2)
    }

    /// Fills `out` with the basis columns at `x`.
    pub fn basis_into(terms: &[[u8; MAX_VARS]], x: &[f64], out: &mut [f64]) {
        let p = powers(x);
        for (o, e) in out.iter_mut().zip(terms) {
            *o = (0..x.len()).map(|v| p[v][e[v] as usize]).product();
        }
    }
}

fn fit_model<V>(target: PolyTarget, rows: usize, vars: V, y: &[f64]) -> Result<PolyModel>
where
    V: Fn(usize, &mut [f64]),
{
    let terms = target.terms();
    let cols = terms.len();
    let mut x = vec![0.0; target.n_vars()];
    let coef = ols(
        rows,
        cols,
        |i, buf| {
            vars(i, &mut x);
            PolyModel::basis_into(&terms, &x, buf);
        },
        y,
    )?;
    PolyModel::new(target, coef)
}

pub fn fit_mu_poly(sample: &PanelSample) -> Result<PolyModel> {
    let m = sample.m();
    fit_model(
        PolyTarget::MuPoly,
        sample.len(),
        |r, x| {
            x[0] = sample.u(r / m, r % m);
            x[1] = sample.z(r / m);
        },
        sample.y_values(),
    )
}

pub fn fit_gamma_poly(raw: &RawCovariancePanel) -> Result<PolyModel> {
    let y: Vec<f64> = raw.entries.iter().map(|e| e.c).collect();
    fit_model(
        PolyTarget::GammaPoly,
        y.len(),
        |r, x| {
            let e = &raw.entries[r];
            x.copy_from_slice(&[e.u1, e.u2, e.z]);
        },
        &y,
    )
}

pub fn fit_gamma_tilde_poly(records: &[QuadrupleRecord]) -> Result<PolyModel> {
    let y: Vec<f64> = records.iter().map(|r| r.value).collect();
    fit_model(
        PolyTarget::GammaTildePoly,
        y.len(),
        |r, x| {
            let q = &records[r];
            x[..4].copy_from_slice(&q.u);
            x[4] = q.z;
        },
        &y,
    )
}

pub fn fit_gamma_nd_poly(raw: &RawCovariancePanel) -> Result<PolyModel> {
    let y: Vec<f64> = raw.diag.iter().map(|d| d.c).collect();
    fit_model(
        PolyTarget::GammaNdPoly,
        y.len(),
        |r, x| {
            let d = &raw.diag[r];
            x.copy_from_slice(&[d.u, d.z]);
        },
        &y,
    )
}

/// Fit on squared centered raw covariances `(C − γ_poly)²`.
pub fn fit_gamma_tilde_nd_poly(raw: &RawCovariancePanel, gamma: &PolyModel) -> Result<PolyModel> {
    let y: Vec<f64> = raw
        .entries
        .iter()
        .map(|e| (e.c - gamma.eval(&[e.u1, e.u2, e.z])).powi(2))
        .collect();
    fit_model(
        PolyTarget::GammaTildeNdPoly,
        y.len(),
        |r, x| {
            let e = &raw.entries[r];
            x.copy_from_slice(&[e.u1, e.u2, e.z]);
        },
        &y,
    )
}

/// Integral functionals for the mean bandwidth rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFunctionals {
    #[serde(rename = "I_mu_UU")]
    pub i_uu: f64,
    #[serde(rename = "I_mu_UZ")]
    pub i_uz: f64,
    #[serde(rename = "I_mu_ZZ")]
    pub i_zz: f64,
    #[serde(rename = "Q_mu_1")]
    pub q1: f64,
    #[serde(rename = "Q_mu_2")]
    pub q2: f64,
}

/// Integral functionals for the covariance bandwidth rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovFunctionals {
    #[serde(rename = "I_gamma_U1U1")]
    pub i_u1u1: f64,
    #[serde(rename = "I_gamma_U1U2")]
    pub i_u1u2: f64,
    #[serde(rename = "I_gamma_U1Z")]
    pub i_u1z: f64,
    #[serde(rename = "I_gamma_ZZ")]
    pub i_zz: f64,
    #[serde(rename = "Q_gamma_1")]
    pub q1: f64,
    #[serde(rename = "Q_gamma_2")]
    pub q2: f64,
}

impl CovFunctionals {
    /// Discriminant `I_U1Z² + 4(I_U1U1 + I_U1U2)·I_ZZ`.
    pub fn discriminant(&self) -> f64 {
        self.i_u1z * self.i_u1z + 4.0 * (self.i_u1u1 + self.i_u1u2) * self.i_zz
    }

    /// Square root of the discriminant, `None` when it is negative.
    pub fn c_i(&self) -> Option<f64> {
        let d = self.discriminant();
        (d >= 0.0).then(|| d.sqrt())
    }
}

/// Where the covariance curvature functionals are integrated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovIntegration {
    /// Along the diagonal `(u, u, z)` over the unit square.
    #[default]
    Diagonal,
    /// Over the whole unit cube.
    FullCube,
}

/// Weight function of an integral: a fitted density (floored) or the
/// uniform density on the unit hypercube.
#[derive(Debug, Clone, Copy)]
pub enum Weight<'a> {
    Uniform,
    Kde(&'a DensityEstimate),
}

impl Weight<'_> {
    /// Values on the tensor grid `axes[0] × axes[1] × …`, last axis fastest.
    fn on_grid(&self, axes: &[&[f64]]) -> Vec<f64> {
        let total: usize = axes.iter().map(|a| a.len()).product();
        match self {
            Weight::Uniform => vec![1.0; total],
            Weight::Kde(kde) => {
                let tables = kde.tables(axes);
                let mut out = Vec::with_capacity(total);
                let mut idx = vec![0usize; axes.len()];
                for _ in 0..total {
                    out.push(tables.eval_floored(&idx).0);
                    for d in (0..axes.len()).rev() {
                        idx[d] += 1;
                        if idx[d] < axes[d].len() {
                            break;
                        }
                        idx[d] = 0;
                    }
                }
                out
            }
        }
    }

    /// Values of a trivariate weight at `(u, u, z)` on `axis_u × axis_z`.
    fn on_diagonal(&self, axis_u: &[f64], axis_z: &[f64]) -> Vec<f64> {
        match self {
            Weight::Uniform => vec![1.0; axis_u.len() * axis_z.len()],
            Weight::Kde(kde) => {
                let tables = kde.tables(&[axis_u, axis_u, axis_z]);
                let mut out = Vec::with_capacity(axis_u.len() * axis_z.len());
                for a in 0..axis_u.len() {
                    for b in 0..axis_z.len() {
                        out.push(tables.eval_floored(&[a, a, b]).0);
                    }
                }
                out
            }
        }
    }
}

fn floor_q(q: f64) -> f64 {
    if q.is_finite() {
        q.max(Q_FLOOR)
    } else {
        Q_FLOOR
    }
}

/// Surfaces entering the mean functionals, as functions of `(u, z)`.
pub struct MeanSurfaces<'a> {
    pub d20: &'a dyn Fn(f64, f64) -> f64,
    pub d02: &'a dyn Fn(f64, f64) -> f64,
    /// `γ(u, u, z) + σ²`.
    pub noisy_diag: &'a dyn Fn(f64, f64) -> f64,
    /// `γ(u, u, z)`.
    pub diag: &'a dyn Fn(f64, f64) -> f64,
}

pub fn integrate_mean_functionals(
    s: &MeanSurfaces,
    f_uz: Weight,
    f_u: Weight,
    grid: &GridSpec,
) -> Result<MeanFunctionals> {
    grid.validate()?;
    let ax = TrapezoidAxis::unit(grid.nodes_2d)?;
    let w_uz = f_uz.on_grid(&[&ax.nodes, &ax.nodes]);
    let w_u = f_u.on_grid(&[&ax.nodes]);
    let k = ax.len();
    let mut f = MeanFunctionals {
        i_uu: 0.0,
        i_uz: 0.0,
        i_zz: 0.0,
        q1: 0.0,
        q2: 0.0,
    };
    for a in 0..k {
        let u = ax.nodes[a];
        for b in 0..k {
            let z = ax.nodes[b];
            let w = ax.weights[a] * ax.weights[b];
            let d20 = (s.d20)(u, z);
            let d02 = (s.d02)(u, z);
            let dens = w_uz[a * k + b];
            f.i_uu += w * d20 * d20 * dens;
            f.i_uz += w * d20 * d02 * dens;
            f.i_zz += w * d02 * d02 * dens;
            f.q1 += w * (s.noisy_diag)(u, z);
            f.q2 += w * (s.diag)(u, z) * w_u[a];
        }
    }
    f.q1 = floor_q(f.q1);
    f.q2 = floor_q(f.q2);
    Ok(f)
}

pub fn mean_functionals(
    mu: &PolyModel,
    gamma: &PolyModel,
    gamma_nd: &PolyModel,
    f_uz: Weight,
    f_u: Weight,
    grid: &GridSpec,
) -> Result<MeanFunctionals> {
    let d20 = |u: f64, z: f64| mu.second_partial(&[u, z], 0);
    let d02 = |u: f64, z: f64| mu.second_partial(&[u, z], 1);
    let noisy = |u: f64, z: f64| gamma_nd.eval(&[u, z]);
    let diag = |u: f64, z: f64| gamma.eval(&[u, u, z]);
    integrate_mean_functionals(
        &MeanSurfaces {
            d20: &d20,
            d02: &d02,
            noisy_diag: &noisy,
            diag: &diag,
        },
        f_uz,
        f_u,
        grid,
    )
}

/// Surfaces entering the covariance functionals, as functions of `(u₁, u₂, z)`.
pub struct CovSurfaces<'a> {
    pub d200: &'a dyn Fn(f64, f64, f64) -> f64,
    pub d020: &'a dyn Fn(f64, f64, f64) -> f64,
    pub d002: &'a dyn Fn(f64, f64, f64) -> f64,
    /// Variance surface of the raw covariances.
    pub tilde_nd: &'a dyn Fn(f64, f64, f64) -> f64,
    /// Fourth-moment surface at matched arguments `((u₁,u₂),(u₁,u₂),z)`.
    pub tilde_diag: &'a dyn Fn(f64, f64, f64) -> f64,
}

pub struct CovWeights<'a> {
    pub f_uz: Weight<'a>,
    pub f_uuz: Weight<'a>,
    pub f_uu: Weight<'a>,
}

pub fn integrate_cov_functionals(
    s: &CovSurfaces,
    w: &CovWeights,
    grid: &GridSpec,
    variant: CovIntegration,
) -> Result<CovFunctionals> {
    grid.validate()?;
    let mut f = CovFunctionals {
        i_u1u1: 0.0,
        i_u1u2: 0.0,
        i_u1z: 0.0,
        i_zz: 0.0,
        q1: 0.0,
        q2: 0.0,
    };
    let cube = TrapezoidAxis::unit(grid.nodes_3d)?;
    let c = cube.len();
    match variant {
        CovIntegration::Diagonal => {
            let ax = TrapezoidAxis::unit(grid.nodes_2d)?;
            let k = ax.len();
            let w_uz = w.f_uz.on_grid(&[&ax.nodes, &ax.nodes]);
            let w_uuz = w.f_uuz.on_diagonal(&ax.nodes, &ax.nodes);
            for a in 0..k {
                let u = ax.nodes[a];
                for b in 0..k {
                    let z = ax.nodes[b];
                    let q = ax.weights[a] * ax.weights[b];
                    let d200 = (s.d200)(u, u, z);
                    let d020 = (s.d020)(u, u, z);
                    let d002 = (s.d002)(u, u, z);
                    f.i_u1u1 += q * d200 * d200 * w_uz[a * k + b];
                    f.i_u1u2 += q * d200 * d020 * w_uz[a * k + b];
                    f.i_u1z += q * d200 * d002 * w_uuz[a * k + b];
                    f.i_zz += q * d002 * d002 * w_uuz[a * k + b];
                }
            }
        }
        CovIntegration::FullCube => {
            let w_uuz = w.f_uuz.on_grid(&[&cube.nodes, &cube.nodes, &cube.nodes]);
            for a in 0..c {
                for b in 0..c {
                    for d in 0..c {
                        let (u1, u2, z) = (cube.nodes[a], cube.nodes[b], cube.nodes[d]);
                        let q = cube.weights[a]
                            * cube.weights[b]
                            * cube.weights[d]
                            * w_uuz[(a * c + b) * c + d];
                        let d200 = (s.d200)(u1, u2, z);
                        let d020 = (s.d020)(u1, u2, z);
                        let d002 = (s.d002)(u1, u2, z);
                        f.i_u1u1 += q * d200 * d200;
                        f.i_u1u2 += q * d200 * d020;
                        f.i_u1z += q * d200 * d002;
                        f.i_zz += q * d002 * d002;
                    }
                }
            }
        }
    }
    let w_uu = w.f_uu.on_grid(&[&cube.nodes, &cube.nodes]);
    for a in 0..c {
        for b in 0..c {
            let (u1, u2) = (cube.nodes[a], cube.nodes[b]);
            let wab = cube.weights[a] * cube.weights[b];
            for d in 0..c {
                let z = cube.nodes[d];
                let q = wab * cube.weights[d];
                f.q1 += q * (s.tilde_nd)(u1, u2, z);
                f.q2 += q * (s.tilde_diag)(u1, u2, z) * w_uu[a * c + b];
            }
        }
    }
    f.q1 = floor_q(f.q1);
    f.q2 = floor_q(f.q2);
    Ok(f)
}

pub fn cov_functionals(
    gamma: &PolyModel,
    gamma_tilde: &PolyModel,
    gamma_tilde_nd: &PolyModel,
    w: &CovWeights,
    grid: &GridSpec,
    variant: CovIntegration,
) -> Result<CovFunctionals> {
    let d200 = |a: f64, b: f64, z: f64| gamma.second_partial(&[a, b, z], 0);
    let d020 = |a: f64, b: f64, z: f64| gamma.second_partial(&[a, b, z], 1);
    let d002 = |a: f64, b: f64, z: f64| gamma.second_partial(&[a, b, z], 2);
    let tilde_nd = |a: f64, b: f64, z: f64| gamma_tilde_nd.eval(&[a, b, z]);
    let tilde_diag = |a: f64, b: f64, z: f64| gamma_tilde.eval(&[a, b, a, b, z]);
    integrate_cov_functionals(
        &CovSurfaces {
            d200: &d200,
            d020: &d020,
            d002: &d002,
            tilde_nd: &tilde_nd,
            tilde_diag: &tilde_diag,
        },
        w,
        grid,
        variant,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::raw_covariances;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel(n: usize, m: usize, seed: u64, f: impl Fn(f64, f64) -> f64) -> PanelSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let u: Vec<f64> = (0..n * m).map(|_| rng.random()).collect();
        let y = (0..n * m).map(|k| f(u[k], z[k / m])).collect();
        PanelSample::new(n, m, y, u, z).unwrap()
    }

    #[test]
    fn coefficient_counts() {
        assert_eq!(PolyTarget::MuPoly.coefficient_count(), 13);
        assert_eq!(PolyTarget::GammaPoly.coefficient_count(), 21);
        assert_eq!(PolyTarget::GammaTildePoly.coefficient_count(), 37);
        assert_eq!(PolyTarget::GammaNdPoly.coefficient_count(), 13);
        assert_eq!(PolyTarget::GammaTildeNdPoly.coefficient_count(), 13);
        for t in [
            PolyTarget::MuPoly,
            PolyTarget::GammaPoly,
            PolyTarget::GammaTildePoly,
            PolyTarget::GammaNdPoly,
            PolyTarget::GammaTildeNdPoly,
        ] {
            let terms = t.terms();
            assert_eq!(terms.len(), t.coefficient_count());
            let mut uniq = terms.clone();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), terms.len());
        }
    }

    #[test]
    fn mu_poly_recovers_bilinear_surface() {
        let p = panel(20, 5, 1, |u, z| 2.0 + 3.0 * u + 4.0 * z + 5.0 * u * z);
        let fit = fit_mu_poly(&p).unwrap();
        let expect = [2.0, 3.0, 4.0, 5.0];
        for (k, b) in fit.coefficients.iter().enumerate() {
            let target = expect.get(k).copied().unwrap_or(0.0);
            assert!((b - target).abs() < 1e-8, "coef {k}: {b}");
        }
    }

    #[test]
    fn too_few_rows_is_rank_deficient() {
        let p = panel(5, 2, 2, |u, z| u + z);
        assert!(matches!(
            fit_mu_poly(&p),
            Err(FdaError::RankDeficient { .. })
        ));
    }

    #[test]
    fn constant_targets() {
        let p = panel(30, 4, 3, |u, z| (5.0 * u).sin() + z);
        let mut raw = raw_covariances(&p, |_, _| 0.0);
        raw.entries.iter_mut().for_each(|e| e.c = 7.0);
        raw.diag.iter_mut().for_each(|d| d.c = 2.5);
        let g = fit_gamma_poly(&raw).unwrap();
        assert!((g.coefficients[0] - 7.0).abs() < 1e-8);
        assert!(g.coefficients[1..].iter().all(|b| b.abs() < 1e-7));
        let nd = fit_gamma_nd_poly(&raw).unwrap();
        assert!((nd.coefficients[0] - 2.5).abs() < 1e-8);
        let tnd = fit_gamma_tilde_nd_poly(&raw, &g).unwrap();
        assert!(tnd.coefficients.iter().all(|b| b.abs() < 1e-8));
        let recs: Vec<QuadrupleRecord> = (0..200)
            .map(|i| {
                let t = i as f64 / 200.0;
                QuadrupleRecord {
                    u: [t, (3.0 * t).fract(), (7.0 * t).fract(), (11.0 * t).fract()],
                    z: (13.0 * t).fract(),
                    value: 3.0,
                }
            })
            .collect();
        let gt = fit_gamma_tilde_poly(&recs).unwrap();
        assert!((gt.coefficients[0] - 3.0).abs() < 1e-7);
    }

    #[test]
    fn residuals_orthogonal_to_basis() {
        let p = panel(40, 6, 4, |u, z| (3.0 * u * z).cos() + u.powi(5));
        let raw = raw_covariances(&p, |u, z| 0.3 * u + z);
        let g = fit_gamma_poly(&raw).unwrap();
        let mut x = vec![0.0; g.coefficients.len()];
        let mut xr = vec![0.0; g.coefficients.len()];
        let mut scale = vec![0.0; g.coefficients.len()];
        for e in &raw.entries {
            PolyModel::basis_into(g.terms(), &[e.u1, e.u2, e.z], &mut x);
            let r = e.c - g.eval(&[e.u1, e.u2, e.z]);
            for k in 0..x.len() {
                xr[k] += x[k] * r;
                scale[k] += (x[k] * e.c).abs();
            }
        }
        for k in 0..x.len() {
            assert!(xr[k].abs() <= 1e-8 * scale[k], "col {k}: {} vs {}", xr[k], scale[k]);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for target in [PolyTarget::MuPoly, PolyTarget::GammaPoly] {
            let coef: Vec<f64> = (0..target.coefficient_count())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let model = PolyModel::new(target, coef).unwrap();
            let nv = target.n_vars();
            for _ in 0..100 {
                let x: Vec<f64> = (0..nv).map(|_| rng.random_range(0.05..0.95)).collect();
                for var in 0..nv {
                    let h = 1e-4;
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[var] += h;
                    xm[var] -= h;
                    let fd = (model.eval(&xp) - 2.0 * model.eval(&x) + model.eval(&xm)) / (h * h);
                    let an = model.second_partial(&x, var);
                    assert!(
                        (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                        "{target:?} var {var}: {fd} vs {an}"
                    );
                }
            }
        }
    }

    fn model_from(target: PolyTarget, pairs: &[(usize, f64)]) -> PolyModel {
        let mut c = vec![0.0; target.coefficient_count()];
        for &(k, v) in pairs {
            c[k] = v;
        }
        PolyModel::new(target, c).unwrap()
    }

    #[test]
    fn mean_functionals_on_quadratic_surface() {
        // Index 4 is U², index 5 is Z².
        let mu = model_from(PolyTarget::MuPoly, &[(4, 1.0), (5, 1.0)]);
        let gamma = model_from(PolyTarget::GammaPoly, &[(0, 1.0)]);
        let nd = model_from(PolyTarget::GammaNdPoly, &[(0, 2.0)]);
        let f = mean_functionals(&mu, &gamma, &nd, Weight::Uniform, Weight::Uniform, &GridSpec::default())
            .unwrap();
        assert!((f.i_uu - 4.0).abs() < 1e-12);
        assert!((f.i_uz - 4.0).abs() < 1e-12);
        assert!((f.i_zz - 4.0).abs() < 1e-12);
        assert!((f.q1 - 2.0).abs() < 1e-12);
        assert!((f.q2 - 1.0).abs() < 1e-12);

        let flat = model_from(PolyTarget::MuPoly, &[(0, 1.0), (1, 2.0), (2, -1.0)]);
        let f = mean_functionals(&flat, &gamma, &nd, Weight::Uniform, Weight::Uniform, &GridSpec::default())
            .unwrap();
        assert_eq!((f.i_uu, f.i_uz, f.i_zz), (0.0, 0.0, 0.0));
    }

    #[test]
    fn q_floors_apply() {
        let mu = model_from(PolyTarget::MuPoly, &[(4, 1.0)]);
        let gamma = model_from(PolyTarget::GammaPoly, &[(0, -1.0)]);
        let nd = model_from(PolyTarget::GammaNdPoly, &[(0, -3.0)]);
        let f = mean_functionals(&mu, &gamma, &nd, Weight::Uniform, Weight::Uniform, &GridSpec::default())
            .unwrap();
        assert_eq!((f.q1, f.q2), (Q_FLOOR, Q_FLOOR));
    }

    #[test]
    fn cov_functionals_constant_and_flat() {
        let gamma = model_from(PolyTarget::GammaPoly, &[(0, 1.0), (1, 0.5)]);
        let tilde = model_from(PolyTarget::GammaTildePoly, &[(0, 2.0)]);
        let tnd = model_from(PolyTarget::GammaTildeNdPoly, &[(0, 0.75)]);
        let w = CovWeights {
            f_uz: Weight::Uniform,
            f_uuz: Weight::Uniform,
            f_uu: Weight::Uniform,
        };
        for variant in [CovIntegration::Diagonal, CovIntegration::FullCube] {
            let f = cov_functionals(&gamma, &tilde, &tnd, &w, &GridSpec::default(), variant).unwrap();
            assert_eq!((f.i_u1u1, f.i_u1u2, f.i_u1z, f.i_zz), (0.0, 0.0, 0.0, 0.0));
            assert!((f.q1 - 0.75).abs() < 1e-12);
            assert!((f.q2 - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cov_functionals_symbolic_quadratic() {
        // γ = u₁² + u₂² + z²: every second partial equals 2.
        let gamma = model_from(PolyTarget::GammaPoly, &[(6, 1.0), (7, 1.0), (8, 1.0)]);
        let tilde = model_from(PolyTarget::GammaTildePoly, &[(0, 1.0)]);
        let tnd = model_from(PolyTarget::GammaTildeNdPoly, &[(0, 1.0)]);
        let w = CovWeights {
            f_uz: Weight::Uniform,
            f_uuz: Weight::Uniform,
            f_uu: Weight::Uniform,
        };
        let f = cov_functionals(&gamma, &tilde, &tnd, &w, &GridSpec::default(), CovIntegration::Diagonal)
            .unwrap();
        for v in [f.i_u1u1, f.i_u1u2, f.i_u1z, f.i_zz] {
            assert!((v - 4.0).abs() < 1e-12);
        }
        assert!((f.c_i().unwrap() - (16.0f64 + 4.0 * 8.0 * 4.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cauchy_schwarz_with_density_weight() {
        let p = panel(60, 5, 6, |u, z| (2.0 * u).sin() * z.exp());
        let pts: Vec<f64> = p.observations().flat_map(|(u, z, _)| [u, z]).collect();
        let kde = DensityEstimate::fit(pts, 2, vec![0.1, 0.1]).unwrap();
        let mu = fit_mu_poly(&p).unwrap();
        let gamma = model_from(PolyTarget::GammaPoly, &[(0, 1.0)]);
        let nd = model_from(PolyTarget::GammaNdPoly, &[(0, 1.0)]);
        let uz: Vec<f64> = p.u_values().to_vec();
        let ku = DensityEstimate::fit(uz, 1, vec![0.1]).unwrap();
        let f = mean_functionals(&mu, &gamma, &nd, Weight::Kde(&kde), Weight::Kde(&ku), &GridSpec::default())
            .unwrap();
        assert!(f.i_uz * f.i_uz <= f.i_uu * f.i_zz * (1.0 + 1e-12));
        assert!(f.i_uu >= 0.0 && f.i_zz >= 0.0);
    }
}
