//! Plug-in bias and variance estimates and pointwise confidence intervals
//! for the mean surface, plus the end-to-end estimation pipeline.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{
    cov_bandwidths, derivative_bandwidth_search, mean_bandwidths, normal_reference_bandwidths,
    BandwidthSet, DerivativeCriterion, GcvSelection, Regime, Target, H_MAX, H_MIN,
};
use crate::data::{quadruple_products, raw_covariances, PanelSample, RawCovariancePanel};
use crate::density::{CvOptions, DensityEstimate, FLOOR_FRACTION};
use crate::error::{FdaError, Result};
use crate::kernels::KernelSpec;
use crate::llk::{fit_cov, fit_mean, fit_mean_derivatives, fit_noisy_diagonal};
use crate::polyfit::{
    cov_functionals, fit_gamma_nd_poly, fit_gamma_poly, fit_gamma_tilde_nd_poly,
    fit_gamma_tilde_poly, fit_mu_poly, mean_functionals, CovFunctionals, CovIntegration,
    CovWeights, MeanFunctionals, PolyModel, Weight,
};
use crate::quadrature::GridSpec;

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} outside (0, 1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_4e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_6;
        let den = ((((((5.226_495_278_852_854_6e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271_1e4)
            * r
            + 2.121_379_430_158_659_6e4)
            * r
            + 5.394_196_021_424_751_1e3)
            * r
            + 6.871_870_074_920_579_1e2)
            * r
            + 4.231_333_070_160_091_1e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506_1e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_6)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_6;
        let den = ((((((1.050_750_071_644_416_8e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_7e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_758_8)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_3e-2)
            * r
            + 2.965_605_718_285_048_9e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8;
        let den = ((((((2.044_263_103_389_939_8e-15 * r + 1.421_511_758_316_445_9e-7) * r
            + 1.846_318_317_510_054_7e-5)
            * r
            + 7.868_691_311_456_132_6e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_879_4e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    #[serde(rename = "sparse", alias = "sparse-plain")]
    SparsePlain,
    SparseCorrected,
    #[serde(rename = "dense", alias = "dense-plain")]
    DensePlain,
    DenseCorrected,
}

impl CiMethod {
    pub const ALL: [CiMethod; 4] = [
        CiMethod::SparsePlain,
        CiMethod::SparseCorrected,
        CiMethod::DensePlain,
        CiMethod::DenseCorrected,
    ];

    pub fn regime(self) -> Regime {
        match self {
            CiMethod::SparsePlain | CiMethod::SparseCorrected => Regime::Sparse,
            CiMethod::DensePlain | CiMethod::DenseCorrected => Regime::Dense,
        }
    }

    /// Variance entering the interval: `v1`, `v2` or `v1 + v2`.
    pub fn variance(self, v1: f64, v2: f64) -> f64 {
        match self {
            CiMethod::SparsePlain => v1,
            CiMethod::DensePlain => v2,
            CiMethod::SparseCorrected | CiMethod::DenseCorrected => v1 + v2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CiMethod::SparsePlain => "sparse",
            CiMethod::SparseCorrected => "sparse-corrected",
            CiMethod::DensePlain => "dense",
            CiMethod::DenseCorrected => "dense-corrected",
        }
    }
}

impl fmt::Display for CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CiMethod {
    type Err = FdaError;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        CiMethod::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .or(match key.as_str() {
                "sparse-plain" => Some(CiMethod::SparsePlain),
                "dense-plain" => Some(CiMethod::DensePlain),
                _ => None,
            })
            .ok_or_else(|| FdaError::Config(format!("unknown CI method '{s}'")))
    }
}

/// Bias from curvature estimates. The dense regime keeps only the `z` term.
pub fn bias_from_curvature(regime: Regime, h_u: f64, h_z: f64, d20: f64, d02: f64, kernel: &KernelSpec) -> f64 {
    let half = 0.5 * kernel.nu2_mean();
    match regime {
        Regime::Sparse => half * (h_u * h_u * d20 + h_z * h_z * d02),
        Regime::Dense => half * h_z * h_z * d02,
    }
}

/// Plug-in bias at `(u, z)` using local-cubic curvature estimates with
/// pilot bandwidths `g = (g_u, g_z)`.
pub fn estimate_bias(
    sample: &PanelSample,
    u: f64,
    z: f64,
    h: &BandwidthSet,
    g: (f64, f64),
    kernel: &KernelSpec,
) -> Result<f64> {
    let (d20, d02) = fit_mean_derivatives(sample, u, z, g.0, g.1, kernel)?;
    Ok(bias_from_curvature(h.regime, h.h_u, h.h_z, d20, d02, kernel))
}

/// `(nm)⁻¹ (h_u h_z)⁻¹ R(K_μ) γ^ND / f_UZ`.
pub fn estimate_v1(h_u: f64, h_z: f64, gamma_nd: f64, f_uz: f64, n: usize, m: usize, kernel: &KernelSpec) -> f64 {
    kernel.rk_mean() * gamma_nd / ((n * m) as f64 * h_u * h_z * f_uz)
}

/// `n⁻¹ ((m−1)/m) h_z⁻¹ R(κ) γ(u,u,z) / f_Z`.
pub fn estimate_v2(h_z: f64, gamma: f64, f_z: f64, n: usize, m: usize, kernel: &KernelSpec) -> f64 {
    let mf = m as f64;
    ((mf - 1.0) / mf) * kernel.rk * gamma / (n as f64 * h_z * f_z)
}

/// Settings shared by every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub kernel: KernelSpec,
    #[serde(skip)]
    pub grid: GridSpec,
    pub cov_integration: CovIntegration,
    /// Selection rule for the curvature-fit bandwidths.
    pub derivative_criterion: DerivativeCriterion,
    /// Most observations at which the curvature-bandwidth criterion is scored.
    pub cv_eval_points: usize,
    /// Largest sample used inside the density cross-validation criterion.
    pub cv_max_points: usize,
    /// Per-curve cap on fourth-moment records.
    pub quadruple_cap: usize,
    pub density_floor_fraction: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            grid: GridSpec::default(),
            cov_integration: CovIntegration::Diagonal,
            derivative_criterion: DerivativeCriterion::default(),
            cv_eval_points: 500,
            cv_max_points: CvOptions::default().max_points,
            quadruple_cap: 2000,
            density_floor_fraction: FLOOR_FRACTION,
            h_min: H_MIN,
            h_max: H_MAX,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.h_min > 0.0 && self.h_max > self.h_min && self.h_max.is_finite()) {
            return Err(FdaError::Config(format!(
                "bandwidth clamp [{}, {}] is invalid",
                self.h_min, self.h_max
            )));
        }
        if !(self.density_floor_fraction >= 0.0 && self.density_floor_fraction.is_finite()) {
            return Err(FdaError::Config("density floor fraction must be >= 0".into()));
        }
        if self.cv_max_points < 10 || self.cv_eval_points < 10 || self.quadruple_cap == 0 {
            return Err(FdaError::Config(
                "cv_max_points and cv_eval_points must be >= 10, quadruple_cap >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// The five global polynomial pilot fits.
#[derive(Debug, Clone, Serialize)]
pub struct Pilots {
    pub mu: PolyModel,
    pub gamma: PolyModel,
    pub gamma_tilde: PolyModel,
    pub gamma_nd: PolyModel,
    pub gamma_tilde_nd: PolyModel,
}

/// Design densities with cross-validated bandwidths.
#[derive(Debug, Clone, Serialize)]
pub struct Densities {
    pub f_uz: DensityEstimate,
    pub f_u: DensityEstimate,
    pub f_z: DensityEstimate,
    pub f_uuz: DensityEstimate,
    pub f_uu: DensityEstimate,
}

impl Densities {
    pub fn fit(sample: &PanelSample, config: &PipelineConfig) -> Result<Self> {
        let opts = CvOptions {
            max_points: config.cv_max_points,
        };
        let (n, m) = (sample.n(), sample.m());
        let uz: Vec<f64> = sample.observations().flat_map(|(u, z, _)| [u, z]).collect();
        let mut uuz = Vec::with_capacity(3 * n * sample.big_m());
        let mut uu = Vec::with_capacity(2 * n * sample.big_m());
        for i in 0..n {
            for j in 0..m {
                for k in 0..m {
                    if j != k {
                        uuz.extend([sample.u(i, j), sample.u(i, k), sample.z(i)]);
                        uu.extend([sample.u(i, j), sample.u(i, k)]);
                    }
                }
            }
        }
        let fit = |pts: Vec<f64>, d: usize| -> Result<DensityEstimate> {
            let mut kde = DensityEstimate::fit_cv(pts, d, &opts)?;
            kde.floor *= config.density_floor_fraction / FLOOR_FRACTION;
            Ok(kde)
        };
        Ok(Self {
            f_uz: fit(uz, 2)?,
            f_u: fit(sample.u_values().to_vec(), 1)?,
            f_z: fit(sample.z_values().to_vec(), 1)?,
            f_uuz: fit(uuz, 3)?,
            f_uu: fit(uu, 2)?,
        })
    }
}

/// Bandwidths of one regime, with provenance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegimeBandwidths {
    pub mean: BandwidthSet,
    pub cov: BandwidthSet,
}

/// Non-fatal events recorded while building an interval.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub density_floor_hits: Vec<String>,
    pub clamped_variance_inputs: Vec<String>,
    pub bandwidth_clamped: bool,
    pub bandwidth_fallback: Vec<String>,
    pub derivative_bandwidths: Option<(f64, f64)>,
}

/// Estimate, bias and both variance terms at one point under one regime.
#[derive(Debug, Clone, Serialize)]
pub struct RegimeEstimate {
    pub point: (f64, f64),
    pub regime: Regime,
    pub estimate: f64,
    pub bias: f64,
    pub v1: f64,
    pub v2: f64,
    pub bandwidths: RegimeBandwidths,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointInference {
    pub point: (f64, f64),
    pub method: CiMethod,
    pub alpha: f64,
    pub estimate: f64,
    pub bias: f64,
    pub v1: f64,
    pub v2: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub bandwidths: RegimeBandwidths,
    pub diagnostics: Diagnostics,
}

impl PointInference {
    pub fn from_estimate(est: &RegimeEstimate, method: CiMethod, alpha: f64) -> Result<Self> {
        if method.regime() != est.regime {
            return Err(FdaError::Config(format!(
                "method {method} needs {} bandwidths",
                method.regime()
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(FdaError::Config(format!("alpha {alpha} outside (0, 1)")));
        }
        let center = est.estimate - est.bias;
        let half = normal_quantile(1.0 - alpha / 2.0) * method.variance(est.v1, est.v2).sqrt();
        Ok(Self {
            point: est.point,
            method,
            alpha,
            estimate: est.estimate,
            bias: est.bias,
            v1: est.v1,
            v2: est.v2,
            ci_lower: center - half,
            ci_upper: center + half,
            bandwidths: est.bandwidths,
            diagnostics: est.diagnostics.clone(),
        })
    }

    pub fn center(&self) -> f64 {
        self.estimate - self.bias
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }

    pub fn width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }
}

/// A panel with all pilot quantities fitted once, from which bandwidths,
/// surface estimates and intervals are derived.
pub struct Analysis {
    pub sample: PanelSample,
    pub config: PipelineConfig,
    pub raw: RawCovariancePanel,
    pub pilots: Pilots,
    pub densities: Densities,
    pub mean_functionals: MeanFunctionals,
    pub cov_functionals: CovFunctionals,
    gcv: OnceLock<Result<GcvSelection>>,
}

impl Analysis {
    pub fn new(sample: PanelSample, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let mu = fit_mu_poly(&sample)?;
        let raw = raw_covariances(&sample, |u, z| mu.eval(&[u, z]));
        let gamma = fit_gamma_poly(&raw)?;
        let gamma_nd = fit_gamma_nd_poly(&raw)?;
        let gamma_tilde_nd = fit_gamma_tilde_nd_poly(&raw, &gamma)?;
        let quads = quadruple_products(
            &raw,
            |a, b, z| gamma.eval(&[a, b, z]),
            config.quadruple_cap,
            config.seed,
        );
        let gamma_tilde = fit_gamma_tilde_poly(&quads)?;
        drop(quads);
        let densities = Densities::fit(&sample, &config)?;
        let mean_f = mean_functionals(
            &mu,
            &gamma,
            &gamma_nd,
            Weight::Kde(&densities.f_uz),
            Weight::Kde(&densities.f_u),
            &config.grid,
        )?;
        let cov_f = cov_functionals(
            &gamma,
            &gamma_tilde,
            &gamma_tilde_nd,
            &CovWeights {
                f_uz: Weight::Kde(&densities.f_uz),
                f_uuz: Weight::Kde(&densities.f_uuz),
                f_uu: Weight::Kde(&densities.f_uu),
            },
            &config.grid,
            config.cov_integration,
        )?;
        Ok(Self {
            sample,
            config,
            raw,
            pilots: Pilots {
                mu,
                gamma,
                gamma_tilde,
                gamma_nd,
                gamma_tilde_nd,
            },
            densities,
            mean_functionals: mean_f,
            cov_functionals: cov_f,
            gcv: OnceLock::new(),
        })
    }

    fn clamp(&self, mut b: BandwidthSet) -> BandwidthSet {
        let cu = b.h_u.clamp(self.config.h_min, self.config.h_max);
        let cz = b.h_z.clamp(self.config.h_min, self.config.h_max);
        b.clamped |= cu != b.h_u || cz != b.h_z;
        b.h_u = cu;
        b.h_z = cz;
        b
    }

    /// Plug-in bandwidths for one target and regime, clamped; degenerate
    /// functionals fall back to the normal-reference rule.
    pub fn bandwidths(&self, target: Target, regime: Regime) -> Result<BandwidthSet> {
        let (n, m) = (self.sample.n(), self.sample.m());
        let k = &self.config.kernel;
        let rule = match target {
            Target::Mean => mean_bandwidths(regime, &self.mean_functionals, n, m, k),
            Target::Covariance => cov_bandwidths(regime, &self.cov_functionals, n, m, k),
        };
        match rule {
            Ok(b) => Ok(self.clamp(b)),
            Err(FdaError::DegenerateFunctionals(_)) => {
                Ok(self.clamp(normal_reference_bandwidths(&self.sample, target, regime)?))
            }
            Err(e) => Err(e),
        }
    }

    pub fn regime_bandwidths(&self, regime: Regime) -> Result<RegimeBandwidths> {
        Ok(RegimeBandwidths {
            mean: self.bandwidths(Target::Mean, regime)?,
            cov: self.bandwidths(Target::Covariance, regime)?,
        })
    }

    /// GCV pilot bandwidths for the curvature fits, computed once.
    pub fn derivative_bandwidths(&self) -> Result<(f64, f64)> {
        let sel = self
            .gcv
            .get_or_init(|| {
                derivative_bandwidth_search(
                    &self.sample,
                    &self.config.kernel,
                    self.config.derivative_criterion,
                    self.config.cv_eval_points,
                )
            });
        match sel {
            Ok(s) => Ok((s.g_u, s.g_z)),
            Err(FdaError::InvalidPanel(msg)) => Err(FdaError::InvalidPanel(msg.clone())),
            Err(_) => Err(FdaError::AllSingular),
        }
    }

    pub fn gcv_selection(&self) -> Option<&GcvSelection> {
        self.gcv.get().and_then(|r| r.as_ref().ok())
    }

    pub fn mean_at(&self, u: f64, z: f64, h: &BandwidthSet) -> Result<f64> {
        Ok(fit_mean(&self.sample, u, z, h.h_u, h.h_z, &self.config.kernel)?.value)
    }

    /// Estimate, bias and variance terms at `(u, z)` under `regime`.
    pub fn regime_estimate(&self, u: f64, z: f64, regime: Regime) -> Result<RegimeEstimate> {
        if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&z)) {
            return Err(FdaError::EvaluationOutsideDomain(u, z));
        }
        let k = &self.config.kernel;
        let (n, m) = (self.sample.n(), self.sample.m());
        let bw = self.regime_bandwidths(regime)?;
        let mut diag = Diagnostics {
            bandwidth_clamped: bw.mean.clamped || bw.cov.clamped,
            ..Default::default()
        };
        for (name, b) in [("mean", bw.mean), ("covariance", bw.cov)] {
            if b.fallback {
                diag.bandwidth_fallback.push(name.to_string());
            }
        }
        let h = bw.mean;
        let estimate = self.mean_at(u, z, &h)?;
        let g = self.derivative_bandwidths()?;
        diag.derivative_bandwidths = Some(g);
        let bias = estimate_bias(&self.sample, u, z, &h, g, k)?;

        let hc = bw.cov;
        let mut gamma_nd = fit_noisy_diagonal(&self.raw, u, z, hc.h_u, hc.h_z, k)?.value;
        let mut gamma = fit_cov(&self.raw, u, u, z, hc.h_u, hc.h_z, k)?.value;
        if gamma_nd < 0.0 {
            diag.clamped_variance_inputs.push(format!("gamma_nd={gamma_nd}"));
            gamma_nd = 0.0;
        }
        if gamma < 0.0 {
            diag.clamped_variance_inputs.push(format!("gamma={gamma}"));
            gamma = 0.0;
        }
        let (f_uz, hit_uz) = self.densities.f_uz.eval_floored(&[u, z]);
        let (f_z, hit_z) = self.densities.f_z.eval_floored(&[z]);
        if hit_uz {
            diag.density_floor_hits.push("f_UZ".into());
        }
        if hit_z {
            diag.density_floor_hits.push("f_Z".into());
        }
        Ok(RegimeEstimate {
            point: (u, z),
            regime,
            estimate,
            bias,
            v1: estimate_v1(h.h_u, h.h_z, gamma_nd, f_uz, n, m, k),
            v2: estimate_v2(h.h_z, gamma, f_z, n, m, k),
            bandwidths: bw,
            diagnostics: diag,
        })
    }

    pub fn confidence_interval(&self, u: f64, z: f64, method: CiMethod, alpha: f64) -> Result<PointInference> {
        let est = self.regime_estimate(u, z, method.regime())?;
        PointInference::from_estimate(&est, method, alpha)
    }
}

/// One-shot interval for a single point.
pub fn confidence_interval(
    sample: &PanelSample,
    u: f64,
    z: f64,
    method: CiMethod,
    alpha: f64,
    config: &PipelineConfig,
) -> Result<PointInference> {
    if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&z)) {
        return Err(FdaError::EvaluationOutsideDomain(u, z));
    }
    Analysis::new(sample.clone(), *config)?.confidence_interval(u, z, method, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::simpson;

    fn normal_cdf(x: f64) -> f64 {
        // Φ(x) = ½ + ∫₀ˣ φ for moderate |x|.
        let phi = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        0.5 + simpson(phi, 0.0, x, 20_000)
    }

    #[test]
    fn quantile_matches_cdf_inversion() {
        assert!((normal_quantile(0.9) - 1.281_551_565_544_600_4).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert_eq!(normal_quantile(0.5), 0.0);
        for &p in &[0.001, 0.02, 0.1, 0.3, 0.45, 0.6, 0.8, 0.95, 0.995, 0.9999] {
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-9, "p={p}");
            assert!((normal_quantile(1.0 - p) + x).abs() < 1e-12);
        }
        // Far tail branch.
        assert!((normal_quantile(1e-12) + 7.034_483_825_301_131).abs() < 1e-9);
    }

    #[test]
    fn variance_examples() {
        let epa = KernelSpec::epanechnikov();
        let v1 = estimate_v1(0.2, 0.2, 2.0, 1.0, 100, 5, &epa);
        assert!((v1 - 0.036).abs() < 1e-12);
        assert!((estimate_v1(0.2, 0.2, 2.0, 1.0, 200, 5, &epa) - v1 / 2.0).abs() < 1e-15);
        assert_eq!(estimate_v1(0.2, 0.2, 0.0, 1.0, 100, 5, &epa), 0.0);
        let v2 = estimate_v2(0.2, 2.0, 1.0, 100, 5, &epa);
        assert!((v2 - 0.048).abs() < 1e-12);
        let big = estimate_v2(0.2, 2.0, 1.0, 100, 1_000_000, &epa);
        assert!((big / (0.6 * 2.0 / (100.0 * 0.2)) - 1.0).abs() <= 1e-6 + 1e-12);
    }

    #[test]
    fn bias_examples() {
        let g = KernelSpec::gaussian();
        let dense = bias_from_curvature(Regime::Dense, 0.3, 0.3, -1.18, -1.18, &g);
        assert!((dense + 0.0531).abs() < 1e-12);
        let sparse = bias_from_curvature(Regime::Sparse, 0.3, 0.3, -1.18, -1.18, &g);
        assert_eq!(sparse, 2.0 * dense);
    }

    #[test]
    fn method_parsing_and_variance() {
        for m in CiMethod::ALL {
            assert_eq!(m.name().parse::<CiMethod>().unwrap(), m);
        }
        assert!("bogus".parse::<CiMethod>().is_err());
        assert_eq!(CiMethod::SparsePlain.variance(1.0, 2.0), 1.0);
        assert_eq!(CiMethod::DensePlain.variance(1.0, 2.0), 2.0);
        assert_eq!(CiMethod::DenseCorrected.variance(1.0, 2.0), 3.0);
    }

    #[test]
    fn interval_shape() {
        let est = RegimeEstimate {
            point: (0.5, 0.5),
            regime: Regime::Sparse,
            estimate: 2.0,
            bias: 0.25,
            v1: 0.04,
            v2: 0.05,
            bandwidths: RegimeBandwidths {
                mean: normal_stub(),
                cov: normal_stub(),
            },
            diagnostics: Diagnostics::default(),
        };
        let plain = PointInference::from_estimate(&est, CiMethod::SparsePlain, 0.2).unwrap();
        let corr = PointInference::from_estimate(&est, CiMethod::SparseCorrected, 0.2).unwrap();
        assert_eq!(plain.center(), 1.75);
        assert!((plain.ci_upper - 1.75 - (1.75 - plain.ci_lower)).abs() < 1e-15);
        assert!((plain.width() - 2.0 * 1.281_551_565_544_600_4 * 0.2).abs() < 1e-12);
        assert!(corr.width() > plain.width());
        assert!(corr.ci_lower <= plain.ci_lower && corr.ci_upper >= plain.ci_upper);
        assert!(PointInference::from_estimate(&est, CiMethod::DensePlain, 0.2).is_err());
    }

    fn normal_stub() -> BandwidthSet {
        BandwidthSet {
            h_u: 0.2,
            h_z: 0.2,
            target: Target::Mean,
            regime: Regime::Sparse,
            clamped: false,
            fallback: false,
        }
    }
}
