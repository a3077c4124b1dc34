//! Run configuration: flat `key = value` files overlaid by command-line flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::bandwidth::{DerivativeCriterion, Regime};
use crate::error::{FdaError, Result};
use crate::inference::{CiMethod, PipelineConfig};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::polyfit::CovIntegration;
use crate::simulation::{DgpId, GammaWeights, StudyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Estimate,
    Bandwidth,
    Ci,
    Simulate,
}

/// Every setting of a run. Keys in a config file use the field names.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub kernel: KernelFamily,
    pub regime: Regime,
    pub alpha: f64,
    pub seed: u64,
    pub nodes_2d: usize,
    pub nodes_3d: usize,
    pub h_min: f64,
    pub h_max: f64,
    pub density_floor_fraction: f64,
    pub cv_max_points: usize,
    pub cv_eval_points: usize,
    pub quadruple_cap: usize,
    pub cov_integration: CovIntegration,
    pub derivative_criterion: DerivativeCriterion,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Nodes per axis of the `estimate` output grid.
    pub grid: usize,
    pub with_inference: bool,
    /// Evaluation points for `ci`.
    pub points: Vec<(f64, f64)>,
    pub method: CiMethod,
    pub dgps: Vec<DgpId>,
    pub ms: Vec<usize>,
    pub n: usize,
    pub reps: usize,
    pub methods: Vec<CiMethod>,
    pub gamma_weights: GammaWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let s = StudyConfig::default();
        Self {
            command: None,
            kernel: p.kernel.family,
            regime: Regime::default(),
            alpha: 0.05,
            seed: 1,
            nodes_2d: p.grid.nodes_2d,
            nodes_3d: p.grid.nodes_3d,
            h_min: p.h_min,
            h_max: p.h_max,
            density_floor_fraction: p.density_floor_fraction,
            cv_max_points: p.cv_max_points,
            cv_eval_points: p.cv_eval_points,
            quadruple_cap: p.quadruple_cap,
            cov_integration: p.cov_integration,
            derivative_criterion: p.derivative_criterion,
            input: None,
            output: None,
            grid: 11,
            with_inference: false,
            points: vec![(0.5, 0.5)],
            method: CiMethod::DenseCorrected,
            dgps: s.dgps,
            ms: s.ms,
            n: s.n,
            reps: s.reps,
            methods: s.methods,
            gamma_weights: s.gamma_weights,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| FdaError::Config(format!("bad value '{value}' for '{key}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let items: Vec<T> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(FdaError::Config(format!("'{key}' needs at least one value")));
    }
    Ok(items)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(FdaError::Config(format!("bad value '{value}' for '{key}': expected a boolean"))),
    }
}

/// Parses `1`, `2` or `both`.
pub fn parse_dgps(value: &str) -> Result<Vec<DgpId>> {
    if value.trim().eq_ignore_ascii_case("both") {
        return Ok(vec![DgpId::Dgp1, DgpId::Dgp2]);
    }
    parse_list("dgp", value)
}

impl FromStr for CovIntegration {
    type Err = FdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "diagonal" => Ok(CovIntegration::Diagonal),
            "full-cube" | "cube" => Ok(CovIntegration::FullCube),
            other => Err(FdaError::Config(format!("unknown integration domain '{other}'"))),
        }
    }
}

/// `u,z` pairs separated by `;`, e.g. `0.5,0.5; 0.2,0.8`.
fn parse_points(value: &str) -> Result<Vec<(f64, f64)>> {
    value
        .split(';')
        .map(|pair| {
            let (u, z) = pair
                .split_once(',')
                .ok_or_else(|| FdaError::Config(format!("point '{}' is not 'u,z'", pair.trim())))?;
            Ok((parse("point", u)?, parse("point", z)?))
        })
        .collect()
}

impl RunConfig {
    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key.trim().replace('-', "_");
        match k.as_str() {
            "kernel" => self.kernel = parse(&k, value)?,
            "regime" => self.regime = parse(&k, value)?,
            "alpha" => self.alpha = parse(&k, value)?,
            "seed" => self.seed = parse(&k, value)?,
            "nodes_2d" => self.nodes_2d = parse(&k, value)?,
            "nodes_3d" => self.nodes_3d = parse(&k, value)?,
            "h_min" => self.h_min = parse(&k, value)?,
            "h_max" => self.h_max = parse(&k, value)?,
            "density_floor_fraction" => self.density_floor_fraction = parse(&k, value)?,
            "cv_max_points" => self.cv_max_points = parse(&k, value)?,
            "cv_eval_points" => self.cv_eval_points = parse(&k, value)?,
            "quadruple_cap" => self.quadruple_cap = parse(&k, value)?,
            "cov_integration" => self.cov_integration = parse(&k, value)?,
            "derivative_criterion" => self.derivative_criterion = parse(&k, value)?,
            "input" => self.input = Some(PathBuf::from(value.trim())),
            "output" | "out" => self.output = Some(PathBuf::from(value.trim())),
            "grid" => self.grid = parse(&k, value)?,
            "with_inference" => self.with_inference = parse_bool(&k, value)?,
            "point" | "points" => self.points = parse_points(value)?,
            "method" => self.method = parse(&k, value)?,
            "dgp" | "dgps" => self.dgps = parse_dgps(value)?,
            "m" | "ms" => self.ms = parse_list(&k, value)?,
            "n" => self.n = parse(&k, value)?,
            "reps" => self.reps = parse(&k, value)?,
            "methods" => self.methods = parse_list(&k, value)?,
            "gamma_weights" => self.gamma_weights = parse(&k, value)?,
            _ => return Err(FdaError::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a flat config text: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                FdaError::Config(format!("line {}: expected 'key = value'", no + 1))
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FdaError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(FdaError::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.grid < 2 {
            return Err(FdaError::Config("output grid needs at least 2 nodes".into()));
        }
        if self.points.is_empty() {
            return Err(FdaError::Config("at least one evaluation point is required".into()));
        }
        for &(u, z) in &self.points {
            if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&z) {
                return Err(FdaError::Config(format!("point ({u}, {z}) outside [0, 1]^2")));
            }
        }
        if self.ms.iter().any(|&m| m < 2) || self.n == 0 || self.reps == 0 {
            return Err(FdaError::Config("simulation needs n >= 1, reps >= 1 and every m >= 2".into()));
        }
        self.pipeline().validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let mut p = PipelineConfig {
            kernel: KernelSpec::new(self.kernel),
            cov_integration: self.cov_integration,
            derivative_criterion: self.derivative_criterion,
            cv_max_points: self.cv_max_points,
            cv_eval_points: self.cv_eval_points,
            quadruple_cap: self.quadruple_cap,
            density_floor_fraction: self.density_floor_fraction,
            h_min: self.h_min,
            h_max: self.h_max,
            seed: self.seed,
            ..PipelineConfig::default()
        };
        p.grid.nodes_2d = self.nodes_2d;
        p.grid.nodes_3d = self.nodes_3d;
        p
    }

    pub fn study(&self) -> StudyConfig {
        StudyConfig {
            dgps: self.dgps.clone(),
            ms: self.ms.clone(),
            n: self.n,
            reps: self.reps,
            alpha: self.alpha,
            methods: self.methods.clone(),
            seed: self.seed,
            point: (0.5, 0.5),
            gamma_weights: self.gamma_weights,
            pipeline: self.pipeline(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_text() {
        let mut c = RunConfig::default();
        c.apply_text("# comment\nkernel = epanechnikov\nalpha=0.2 # trailing\n\nm = 5,10\ndgp = both\nmethods = sparse, dense-corrected\n")
            .unwrap();
        assert_eq!(c.kernel, KernelFamily::Epanechnikov);
        assert_eq!(c.alpha, 0.2);
        assert_eq!(c.ms, vec![5, 10]);
        assert_eq!(c.dgps, vec![DgpId::Dgp1, DgpId::Dgp2]);
        assert_eq!(c.methods, vec![CiMethod::SparsePlain, CiMethod::DenseCorrected]);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = RunConfig::default();
        for text in ["bogus = 1", "alpha", "alpha = x", "kernel = box", "m = "] {
            let err = c.apply_text(text).unwrap_err();
            assert_eq!(err.exit_code(), 4, "{text}");
        }
        c.alpha = 1.5;
        assert_eq!(c.validate().unwrap_err().exit_code(), 4);
        let mut c = RunConfig::default();
        c.h_min = 2.0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 4);
    }
}
