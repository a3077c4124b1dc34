//! Second-order univariate kernels and their multiplicative products.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{FdaError, Result};
use crate::quadrature::simpson;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Epanechnikov,
    Gaussian,
}

impl Default for KernelFamily {
    fn default() -> Self {
        KernelFamily::Gaussian
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Epanechnikov => write!(f, "epanechnikov"),
            KernelFamily::Gaussian => write!(f, "gaussian"),
        }
    }
}

impl FromStr for KernelFamily {
    type Err = FdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(KernelFamily::Epanechnikov),
            "gaussian" | "normal" => Ok(KernelFamily::Gaussian),
            other => Err(FdaError::Config(format!("unknown kernel '{other}'"))),
        }
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// A univariate kernel together with its moment constants
/// `nu2 = ∫u²κ(u)du` and `rk = ∫κ(u)²du`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub nu2: f64,
    pub rk: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::new(KernelFamily::default())
    }
}

impl KernelSpec {
    /// Closed-form constants, checked once per family against quadrature.
    pub fn new(family: KernelFamily) -> Self {
        let spec = match family {
            KernelFamily::Epanechnikov => KernelSpec {
                family,
                nu2: 0.2,
                rk: 0.6,
            },
            KernelFamily::Gaussian => KernelSpec {
                family,
                nu2: 1.0,
                rk: 1.0 / (2.0 * PI.sqrt()),
            },
        };
        static EPA: OnceLock<()> = OnceLock::new();
        static GAUSS: OnceLock<()> = OnceLock::new();
        let cell = match family {
            KernelFamily::Epanechnikov => &EPA,
            KernelFamily::Gaussian => &GAUSS,
        };
        cell.get_or_init(|| {
            let (mass, nu2, rk) = spec.quadrature_moments();
            assert!((mass - 1.0).abs() < 1e-10, "{family} kernel mass {mass}");
            assert!((nu2 - spec.nu2).abs() < 1e-10, "{family} nu2 {nu2}");
            assert!((rk - spec.rk).abs() < 1e-10, "{family} R {rk}");
        });
        spec
    }

    pub fn epanechnikov() -> Self {
        Self::new(KernelFamily::Epanechnikov)
    }

    pub fn gaussian() -> Self {
        Self::new(KernelFamily::Gaussian)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Epanechnikov => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.75 * (1.0 - u * u)
                }
            }
            KernelFamily::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// `h⁻¹ κ(offset / h)`, assuming `h > 0`.
    #[inline]
    pub fn scaled(&self, offset: f64, h: f64) -> f64 {
        self.eval(offset / h) / h
    }

    /// Half-width of the support in units of the bandwidth, if compact.
    pub fn support_radius(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Epanechnikov => Some(1.0),
            KernelFamily::Gaussian => None,
        }
    }

    pub fn constants(&self) -> (f64, f64) {
        (self.nu2, self.rk)
    }

    /// ν₂ of the bivariate product kernel used for the mean surface.
    pub fn nu2_mean(&self) -> f64 {
        self.nu2.powi(2)
    }

    pub fn rk_mean(&self) -> f64 {
        self.rk.powi(2)
    }

    /// ν₂ of the trivariate product kernel used for the covariance surface.
    pub fn nu2_cov(&self) -> f64 {
        self.nu2.powi(3)
    }

    pub fn rk_cov(&self) -> f64 {
        self.rk.powi(3)
    }

    /// Product weight `∏ h_l⁻¹ κ(offset_l / h_l)`.
    pub fn product_weight(&self, offsets: &[f64], bandwidths: &[f64]) -> Result<f64> {
        if offsets.len() != bandwidths.len() {
            return Err(FdaError::DimensionMismatch(format!(
                "{} offsets vs {} bandwidths",
                offsets.len(),
                bandwidths.len()
            )));
        }
        if !(1..=3).contains(&offsets.len()) {
            return Err(FdaError::DimensionMismatch(format!(
                "product kernels support 1 to 3 factors, got {}",
                offsets.len()
            )));
        }
        let mut w = 1.0;
        for (&d, &h) in offsets.iter().zip(bandwidths) {
            if !(h.is_finite() && h > 0.0) {
                return Err(FdaError::InvalidBandwidth(h));
            }
            w *= self.scaled(d, h);
        }
        Ok(w)
    }

    /// (mass, ν₂, R) by composite Simpson over the effective support.
    fn quadrature_moments(&self) -> (f64, f64, f64) {
        let (lo, hi, intervals) = match self.family {
            KernelFamily::Epanechnikov => (-1.0, 1.0, 2000),
            KernelFamily::Gaussian => (-12.0, 12.0, 4000),
        };
        let mass = simpson(|u| self.eval(u), lo, hi, intervals);
        let nu2 = simpson(|u| u * u * self.eval(u), lo, hi, intervals);
        let rk = simpson(|u| self.eval(u).powi(2), lo, hi, intervals);
        (mass, nu2, rk)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> f64 {
        let h = (hi - lo) / (points - 1) as f64;
        let mut acc = 0.5 * (f(lo) + f(hi));
        for i in 1..points - 1 {
            acc += f(lo + h * i as f64);
        }
        acc * h
    }

    #[test]
    fn mode_and_support() {
        let epa = KernelSpec::epanechnikov();
        assert_eq!(epa.eval(0.0), 0.75);
        assert_eq!(epa.eval(2.0), 0.0);
        assert_eq!(epa.eval(1.0), 0.0);
        let g = KernelSpec::gaussian();
        assert!((g.eval(0.0) - 0.398_942_280_4).abs() < 1e-10);
    }

    #[test]
    fn constants_match_closed_forms() {
        assert_eq!(KernelSpec::epanechnikov().constants(), (0.2, 0.6));
        let (nu2, rk) = KernelSpec::gaussian().constants();
        assert_eq!(nu2, 1.0);
        assert!((rk - 0.282_094_791_8).abs() < 1e-10);
    }

    #[test]
    fn constants_match_fine_trapezoid() {
        for spec in [KernelSpec::epanechnikov(), KernelSpec::gaussian()] {
            let nu2 = trapezoid(|u| u * u * spec.eval(u), -8.0, 8.0, 1_000_000);
            let rk = trapezoid(|u| spec.eval(u).powi(2), -8.0, 8.0, 1_000_000);
            assert!((nu2 - spec.nu2).abs() < 1e-8, "{:?}: {nu2}", spec.family);
            assert!((rk - spec.rk).abs() < 1e-8, "{:?}: {rk}", spec.family);
        }
    }

    #[test]
    fn symmetric_on_grid() {
        for spec in [KernelSpec::epanechnikov(), KernelSpec::gaussian()] {
            for i in 0..1001 {
                let u = -5.0 + 10.0 * i as f64 / 1000.0;
                assert_eq!(spec.eval(u), spec.eval(-u));
            }
        }
    }

    #[test]
    fn product_weight_examples() {
        let epa = KernelSpec::epanechnikov();
        assert_eq!(epa.product_weight(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.5625);
        assert_eq!(epa.product_weight(&[0.5], &[0.5]).unwrap(), 0.0);
        let g = KernelSpec::gaussian();
        let w = g.product_weight(&[0.0; 3], &[2.0; 3]).unwrap();
        let expect = (1.0 / (2.0 * (2.0 * PI).sqrt())).powi(3);
        assert!((w - expect).abs() < 1e-15);
        assert!((w - 0.007_936_7).abs() < 1e-7);
    }

    #[test]
    fn product_weight_errors() {
        let g = KernelSpec::gaussian();
        assert!(matches!(
            g.product_weight(&[0.0, 1.0], &[1.0]),
            Err(FdaError::DimensionMismatch(_))
        ));
        assert!(matches!(
            g.product_weight(&[0.0], &[0.0]),
            Err(FdaError::InvalidBandwidth(_))
        ));
        assert!(matches!(
            g.product_weight(&[0.0], &[-1.0]),
            Err(FdaError::InvalidBandwidth(_))
        ));
    }

    #[test]
    fn product_weight_factorizes() {
        for spec in [KernelSpec::epanechnikov(), KernelSpec::gaussian()] {
            for &(a, b, h1, h2) in &[(0.1, -0.3, 0.5, 0.7), (0.02, 0.4, 0.2, 1.3)] {
                let joint = spec.product_weight(&[a, b], &[h1, h2]).unwrap();
                let split = spec.product_weight(&[a], &[h1]).unwrap()
                    * spec.product_weight(&[b], &[h2]).unwrap();
                assert!((joint - split).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn product_weight_integrates_to_one() {
        let g = KernelSpec::gaussian();
        let hs = [0.3, 0.5, 0.8];
        // 2-d: tensor Simpson over ±8h.
        let two = simpson(
            |a| {
                simpson(
                    |b| g.product_weight(&[a, b], &hs[..2]).unwrap(),
                    -8.0 * hs[1],
                    8.0 * hs[1],
                    200,
                )
            },
            -8.0 * hs[0],
            8.0 * hs[0],
            200,
        );
        assert!((two - 1.0).abs() < 1e-6, "{two}");
        let epa = KernelSpec::epanechnikov();
        let three = simpson(
            |a| {
                simpson(
                    |b| {
                        simpson(
                            |c| epa.product_weight(&[a, b, c], &hs).unwrap(),
                            -hs[2],
                            hs[2],
                            40,
                        )
                    },
                    -hs[1],
                    hs[1],
                    40,
                )
            },
            -hs[0],
            hs[0],
            40,
        );
        assert!((three - 1.0).abs() < 1e-6, "{three}");
    }

    #[test]
    fn family_parsing() {
        assert_eq!("Gaussian".parse::<KernelFamily>().unwrap(), KernelFamily::Gaussian);
        assert_eq!("epa".parse::<KernelFamily>().unwrap(), KernelFamily::Epanechnikov);
        assert!("box".parse::<KernelFamily>().is_err());
        assert_eq!(KernelSpec::default().family, KernelFamily::Gaussian);
    }
}
