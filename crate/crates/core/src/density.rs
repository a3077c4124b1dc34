//! Gaussian product-kernel density estimates with least-squares
//! cross-validated bandwidths.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{FdaError, Result};

/// Multipliers applied to the per-axis normal-reference bandwidth when
/// searching for the LSCV minimizer.
pub const CV_GRID_LEN: usize = 20;
const CV_MULT_LO: f64 = 0.1;
const CV_MULT_HI: f64 = 3.0;
/// Floor relative to the normal-reference density at the data centroid.
pub const FLOOR_FRACTION: f64 = 1e-3;

#[inline]
fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn axis_moments(points: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() / dim;
    let mut mean = vec![0.0; dim];
    for row in points.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for row in points.chunks_exact(dim) {
        for l in 0..dim {
            var[l] += (row[l] - mean[l]).powi(2);
        }
    }
    let denom = (n.max(2) - 1) as f64;
    (mean, var.into_iter().map(|v| (v / denom).sqrt()).collect())
}

fn check_dim(points: &[f64], dim: usize) -> Result<usize> {
    if !(1..=3).contains(&dim) {
        return Err(FdaError::DimensionMismatch(format!(
            "density dimension must be 1..=3, got {dim}"
        )));
    }
    if points.len() % dim != 0 {
        return Err(FdaError::DimensionMismatch(format!(
            "{} coordinates is not a multiple of dimension {dim}",
            points.len()
        )));
    }
    Ok(points.len() / dim)
}

/// `f̂(x) = N⁻¹ Σᵢ ∏ₗ hₗ⁻¹ φ((xₗ − Xᵢₗ)/hₗ)`.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub dim: usize,
    /// Row-major `N × dim` design sample.
    #[serde(skip)]
    pub points: Vec<f64>,
    pub bandwidths: Vec<f64>,
    pub floor: f64,
}

impl DensityEstimate {
    pub fn fit(points: Vec<f64>, dim: usize, bandwidths: Vec<f64>) -> Result<Self> {
        let n = check_dim(&points, dim)?;
        if n < 2 {
            return Err(FdaError::DegenerateSample(format!(
                "density estimate needs at least 2 points, got {n}"
            )));
        }
        if bandwidths.len() != dim {
            return Err(FdaError::DimensionMismatch(format!(
                "{} bandwidths for dimension {dim}",
                bandwidths.len()
            )));
        }
        if let Some(&h) = bandwidths.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(FdaError::InvalidBandwidth(h));
        }
        let (_, sd) = axis_moments(&points, dim);
        let floor = FLOOR_FRACTION
            * sd
                .iter()
                .zip(&bandwidths)
                .map(|(&s, &h)| {
                    let s = if s > 0.0 { s } else { h };
                    1.0 / ((2.0 * PI).sqrt() * s)
                })
                .product::<f64>();
        Ok(Self {
            dim,
            points,
            bandwidths,
            floor,
        })
    }

    /// Fits with LSCV bandwidths.
    pub fn fit_cv(points: Vec<f64>, dim: usize, opts: &CvOptions) -> Result<Self> {
        let sel = kde_cv_select(&points, dim, opts)?;
        Self::fit(points, dim, sel.bandwidths)
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let norm: f64 = self.bandwidths.iter().product();
        let mut acc = 0.0;
        for row in self.points.chunks_exact(self.dim) {
            let mut q = 0.0;
            for l in 0..self.dim {
                let d = (x[l] - row[l]) / self.bandwidths[l];
                q += d * d;
            }
            acc += (-0.5 * q).exp();
        }
        acc / (self.len() as f64 * norm * (2.0 * PI).powf(self.dim as f64 / 2.0))
    }

    /// Density clamped below at the floor; the flag reports a floor hit.
    pub fn eval_floored(&self, x: &[f64]) -> (f64, bool) {
        let v = self.eval(x);
        if v < self.floor {
            (self.floor, true)
        } else {
            (v, false)
        }
    }

    /// Precomputes per-axis kernel factors for repeated evaluation on a
    /// structured node set.
    pub fn tables(&self, axes: &[&[f64]]) -> KdeTables<'_> {
        assert_eq!(axes.len(), self.dim);
        let n = self.len();
        let tables = axes
            .iter()
            .enumerate()
            .map(|(l, nodes)| {
                let h = self.bandwidths[l];
                let mut t = Vec::with_capacity(nodes.len() * n);
                for &x in nodes.iter() {
                    t.extend(
                        self.points
                            .chunks_exact(self.dim)
                            .map(|row| phi((x - row[l]) / h) / h),
                    );
                }
                t
            })
            .collect();
        KdeTables { kde: self, tables }
    }
}

/// Kernel factors `φ_h(node − Xᵢₗ)` per axis, indexed `[node·N + i]`.
pub struct KdeTables<'a> {
    kde: &'a DensityEstimate,
    tables: Vec<Vec<f64>>,
}

impl KdeTables<'_> {
    /// Density at the node with per-axis indices `idx`.
    pub fn eval(&self, idx: &[usize]) -> f64 {
        let n = self.kde.len();
        let acc: f64 = match idx.len() {
            1 => self.tables[0][idx[0] * n..(idx[0] + 1) * n].iter().sum(),
            2 => {
                let a = &self.tables[0][idx[0] * n..(idx[0] + 1) * n];
                let b = &self.tables[1][idx[1] * n..(idx[1] + 1) * n];
                a.iter().zip(b).map(|(x, y)| x * y).sum()
            }
            3 => {
                let a = &self.tables[0][idx[0] * n..(idx[0] + 1) * n];
                let b = &self.tables[1][idx[1] * n..(idx[1] + 1) * n];
                let c = &self.tables[2][idx[2] * n..(idx[2] + 1) * n];
                a.iter()
                    .zip(b)
                    .zip(c)
                    .map(|((x, y), w)| x * y * w)
                    .sum()
            }
            d => panic!("unsupported dimension {d}"),
        };
        acc / n as f64
    }

    pub fn eval_floored(&self, idx: &[usize]) -> (f64, bool) {
        let v = self.eval(idx);
        if v < self.kde.floor {
            (self.kde.floor, true)
        } else {
            (v, false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    /// Largest sample used inside the LSCV criterion; larger samples are
    /// thinned by a deterministic stride.
    pub max_points: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self { max_points: 1000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvSelection {
    pub bandwidths: Vec<f64>,
    pub multiplier: f64,
    /// `(multiplier, LSCV score)` for every grid candidate.
    pub scores: Vec<(f64, f64)>,
}

pub fn cv_multipliers() -> Vec<f64> {
    let (lo, hi) = (CV_MULT_LO.ln(), CV_MULT_HI.ln());
    (0..CV_GRID_LEN)
        .map(|i| (lo + (hi - lo) * i as f64 / (CV_GRID_LEN - 1) as f64).exp())
        .collect()
}

/// Normal-reference bandwidths `1.06 σ̂ₗ N^{−1/(4+d)}`.
pub fn normal_reference(points: &[f64], dim: usize) -> Result<Vec<f64>> {
    let n = check_dim(points, dim)?;
    let (mean, sd) = axis_moments(points, dim);
    if let Some(l) = (0..dim).position(|l| !(sd[l] > 1e-12 * mean[l].abs().max(1.0))) {
        return Err(FdaError::DegenerateSample(format!("axis {l} has zero variance")));
    }
    let rate = (n as f64).powf(-1.0 / (4.0 + dim as f64));
    Ok(sd.iter().map(|s| 1.06 * s * rate).collect())
}

/// LSCV score for bandwidths `h` by direct double sums.
pub fn lscv_score(points: &[f64], dim: usize, h: &[f64]) -> f64 {
    let n = points.len() / dim;
    let rows: Vec<&[f64]> = points.chunks_exact(dim).collect();
    let (mut s1, mut s2) = (0.0, 0.0);
    for a in 0..n {
        for b in (a + 1)..n {
            let mut q = 0.0;
            for l in 0..dim {
                let d = (rows[a][l] - rows[b][l]) / h[l];
                q += d * d;
            }
            let e = (-0.25 * q).exp();
            s1 += e;
            s2 += e * e;
        }
    }
    lscv_from_sums(n, dim, h, s1, s2)
}

fn lscv_from_sums(n: usize, dim: usize, h: &[f64], s1: f64, s2: f64) -> f64 {
    let nf = n as f64;
    let hprod: f64 = h.iter().product();
    let conv_norm = (2.0 * PI.sqrt()).powi(dim as i32) * hprod;
    let kern_norm = (2.0 * PI).sqrt().powi(dim as i32) * hprod;
    let int_sq = (nf + 2.0 * s1) / (nf * nf * conv_norm);
    let loo = 2.0 * s2 / ((nf - 1.0) * kern_norm);
    int_sq - 2.0 * loo / nf
}

/// LSCV over a 20-point log grid of multipliers of the normal-reference
/// bandwidth, shared across axes.
pub fn kde_cv_select(points: &[f64], dim: usize, opts: &CvOptions) -> Result<CvSelection> {
    let n = check_dim(points, dim)?;
    if n < 10 {
        return Err(FdaError::DegenerateSample(format!(
            "cross-validation needs at least 10 points, got {n}"
        )));
    }
    let full_ref = normal_reference(points, dim)?;
    let stride = n.div_ceil(opts.max_points.max(10));
    let thinned: Vec<f64>;
    let cv_points = if stride > 1 {
        thinned = points
            .chunks_exact(dim)
            .step_by(stride)
            .flatten()
            .copied()
            .collect();
        &thinned[..]
    } else {
        points
    };
    let cv_ref = normal_reference(cv_points, dim)?;
    let ns = cv_points.len() / dim;
    let rows: Vec<&[f64]> = cv_points.chunks_exact(dim).collect();
    let mut dist = Vec::with_capacity(ns * (ns - 1) / 2);
    for a in 0..ns {
        for b in (a + 1)..ns {
            let mut q = 0.0;
            for l in 0..dim {
                let d = (rows[a][l] - rows[b][l]) / cv_ref[l];
                q += d * d;
            }
            dist.push(q);
        }
    }
    let mut scores = Vec::with_capacity(CV_GRID_LEN);
    for c in cv_multipliers() {
        let scale = -0.25 / (c * c);
        let (mut s1, mut s2) = (0.0, 0.0);
        for &q in &dist {
            let e = (scale * q).exp();
            s1 += e;
            s2 += e * e;
        }
        let h: Vec<f64> = cv_ref.iter().map(|r| r * c).collect();
        scores.push((c, lscv_from_sums(ns, dim, &h, s1, s2)));
    }
    let &(best, _) = scores
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty grid");
    Ok(CvSelection {
        bandwidths: full_ref.iter().map(|r| r * best).collect(),
        multiplier: best,
        scores,
    })
}

/// Per-axis LSCV bandwidths.
pub fn kde_cv_bandwidth(points: &[f64], dim: usize) -> Result<Vec<f64>> {
    Ok(kde_cv_select(points, dim, &CvOptions::default())?.bandwidths)
}
