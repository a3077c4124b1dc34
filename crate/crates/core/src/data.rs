//! Panel data `(Y_ij, U_ij, Z_i)` and the raw-covariance construction.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FdaError, Result};

/// `n` curves observed at `m` points each. Matrices are stored row-major,
/// one row per curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSample {
    n: usize,
    m: usize,
    y: Vec<f64>,
    u: Vec<f64>,
    z: Vec<f64>,
}

impl PanelSample {
    pub fn new(n: usize, m: usize, y: Vec<f64>, u: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(FdaError::InvalidPanel("panel has no curves".into()));
        }
        if m < 2 {
            return Err(FdaError::InvalidPanel(format!(
                "need at least 2 points per curve, got {m}"
            )));
        }
        if y.len() != n * m || u.len() != n * m || z.len() != n {
            return Err(FdaError::DimensionMismatch(format!(
                "n={n}, m={m} but y has {}, u has {}, z has {} entries",
                y.len(),
                u.len(),
                z.len()
            )));
        }
        if let Some(bad) = u.iter().chain(&z).find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FdaError::Domain(format!("design value {bad}")));
        }
        if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
            return Err(FdaError::InvalidPanel(format!("non-finite response {bad}")));
        }
        Ok(Self { n, m, y, u, z })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Total number of observations `n·m`.
    pub fn len(&self) -> usize {
        self.n * self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of off-diagonal raw covariances per curve, `m² − m`.
    pub fn big_m(&self) -> usize {
        self.m * self.m - self.m
    }

    pub fn y(&self, i: usize, j: usize) -> f64 {
        self.y[i * self.m + j]
    }

    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.m + j]
    }

    pub fn z(&self, i: usize) -> f64 {
        self.z[i]
    }

    pub fn y_values(&self) -> &[f64] {
        &self.y
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u
    }

    pub fn z_values(&self) -> &[f64] {
        &self.z
    }

    /// Iterates `(u, z, y)` over all observations in curve-major order.
    pub fn observations(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len()).map(move |k| (self.u[k], self.z[k / self.m], self.y[k]))
    }

    /// Writes the panel as long CSV with header `curve_id,u,z,y`.
    pub fn write_long_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["curve_id", "u", "z", "y"])
            .map_err(csv_io)?;
        for i in 0..self.n {
            for j in 0..self.m {
                w.write_record([
                    i.to_string(),
                    format!("{:.17e}", self.u(i, j)),
                    format!("{:.17e}", self.z(i)),
                    format!("{:.17e}", self.y(i, j)),
                ])
                .map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> FdaError {
    FdaError::Io(std::io::Error::other(e))
}

/// Supported ingestion formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PanelFormat {
    #[default]
    LongCsv,
}

pub fn load_panel(path: impl AsRef<Path>, format: PanelFormat) -> Result<PanelSample> {
    let bytes = std::fs::read(path)?;
    match format {
        PanelFormat::LongCsv => parse_long_csv(&bytes),
    }
}

/// Parses `curve_id,u,z,y` rows. Curves keep their order of first
/// appearance; rows within a curve keep file order.
pub fn parse_long_csv(bytes: &[u8]) -> Result<PanelSample> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| FdaError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| FdaError::Parse {
                line: 1,
                msg: format!("missing column '{name}'"),
            })
    };
    let (c_id, c_u, c_z, c_y) = (col("curve_id")?, col("u")?, col("z")?, col("y")?);

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(f64, f64, f64)>> = HashMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| FdaError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let field = |c: usize, name: &str| -> Result<f64> {
            let raw = record.get(c).ok_or_else(|| FdaError::Parse {
                line,
                msg: format!("missing field '{name}'"),
            })?;
            let v: f64 = raw.parse().map_err(|_| FdaError::Parse {
                line,
                msg: format!("cannot parse {name}='{raw}'"),
            })?;
            if !v.is_finite() {
                return Err(FdaError::Parse {
                    line,
                    msg: format!("non-finite {name}"),
                });
            }
            Ok(v)
        };
        let id = record
            .get(c_id)
            .ok_or_else(|| FdaError::Parse {
                line,
                msg: "missing curve_id".into(),
            })?
            .to_string();
        let (u, z, y) = (field(c_u, "u")?, field(c_z, "z")?, field(c_y, "y")?);
        if !(0.0..=1.0).contains(&u) {
            return Err(FdaError::Domain(format!("u={u} at line {line}")));
        }
        if !(0.0..=1.0).contains(&z) {
            return Err(FdaError::Domain(format!("z={z} at line {line}")));
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        if let Some(&(_, z0, _)) = entry.first() {
            if z0 != z {
                return Err(FdaError::InconsistentZ(id));
            }
        }
        entry.push((u, z, y));
    }
    if order.is_empty() {
        return Err(FdaError::InvalidPanel("no data rows".into()));
    }
    let m = order.iter().map(|id| rows[id].len()).max().unwrap_or(0);
    for id in &order {
        let got = rows[id].len();
        if got != m {
            return Err(FdaError::RaggedPanel {
                curve: id.clone(),
                got,
                expected: m,
            });
        }
    }
    let n = order.len();
    let mut y = Vec::with_capacity(n * m);
    let mut u = Vec::with_capacity(n * m);
    let mut z = Vec::with_capacity(n);
    for id in &order {
        let curve = &rows[id];
        z.push(curve[0].1);
        for &(uu, _, yy) in curve {
            u.push(uu);
            y.push(yy);
        }
    }
    PanelSample::new(n, m, y, u, z)
}

/// Off-diagonal raw covariance `C_ijk`, `j ≠ k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovEntry {
    pub curve: usize,
    pub j: usize,
    pub k: usize,
    pub u1: f64,
    pub u2: f64,
    pub z: f64,
    pub c: f64,
}

/// Squared residual on the diagonal, `Ĉ_ijj`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagEntry {
    pub curve: usize,
    pub j: usize,
    pub u: f64,
    pub z: f64,
    pub c: f64,
}

/// Raw covariances of one panel. Entries are grouped by curve, `big_m`
/// consecutive records per curve, both orientations `(j,k)` and `(k,j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCovariancePanel {
    pub entries: Vec<CovEntry>,
    pub diag: Vec<DiagEntry>,
    pub n: usize,
    pub m: usize,
    pub big_m: usize,
}

impl RawCovariancePanel {
    pub fn curve_entries(&self, i: usize) -> &[CovEntry] {
        &self.entries[i * self.big_m..(i + 1) * self.big_m]
    }
}

pub fn raw_covariances<F>(sample: &PanelSample, mean_fn: F) -> RawCovariancePanel
where
    F: Fn(f64, f64) -> f64,
{
    let (n, m) = (sample.n(), sample.m());
    let mut entries = Vec::with_capacity(n * sample.big_m());
    let mut diag = Vec::with_capacity(n * m);
    let mut resid = vec![0.0; m];
    for i in 0..n {
        let z = sample.z(i);
        for (j, r) in resid.iter_mut().enumerate() {
            *r = sample.y(i, j) - mean_fn(sample.u(i, j), z);
        }
        for j in 0..m {
            diag.push(DiagEntry {
                curve: i,
                j,
                u: sample.u(i, j),
                z,
                c: resid[j] * resid[j],
            });
            for k in 0..m {
                if j == k {
                    continue;
                }
                entries.push(CovEntry {
                    curve: i,
                    j,
                    k,
                    u1: sample.u(i, j),
                    u2: sample.u(i, k),
                    z,
                    c: resid[j] * resid[k],
                });
            }
        }
    }
    RawCovariancePanel {
        entries,
        diag,
        n,
        m,
        big_m: sample.big_m(),
    }
}

/// Fourth-moment record `(C_ijk − γ)(C_iℓm − γ)` at `(U_ij, U_ik, U_iℓ, U_im, Z_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrupleRecord {
    pub u: [f64; 4],
    pub z: f64,
    pub value: f64,
}

/// Number of admissible entry pairs per curve: ordered pairs of
/// off-diagonal entries `((j,k),(ℓ,m))` with `j ≠ ℓ` and `k ≠ m`.
pub fn admissible_quadruples(m: usize) -> usize {
    let big_m = m * m - m;
    big_m * big_m + big_m - 2 * m * (m - 1) * (m - 1)
}

/// Products of centered raw covariances over admissible index quadruples.
/// Curves with more than `max_per_curve` admissible quadruples are
/// subsampled uniformly without replacement from a per-curve stream of `seed`.
pub fn quadruple_products<F>(
    raw: &RawCovariancePanel,
    cov_fn: F,
    max_per_curve: usize,
    seed: u64,
) -> Vec<QuadrupleRecord>
where
    F: Fn(f64, f64, f64) -> f64,
{
    let max_per_curve = max_per_curve.max(1);
    let total = admissible_quadruples(raw.m);
    let per_curve = total.min(max_per_curve);
    let mut out = Vec::with_capacity(raw.n * per_curve);
    let mut centered = vec![0.0; raw.big_m];
    for i in 0..raw.n {
        let entries = raw.curve_entries(i);
        for (c, e) in centered.iter_mut().zip(entries) {
            *c = e.c - cov_fn(e.u1, e.u2, e.z);
        }
        let admissible = |a: usize, b: usize| {
            entries[a].j != entries[b].j && entries[a].k != entries[b].k
        };
        let mut emit = |a: usize, b: usize| {
            let (ea, eb) = (&entries[a], &entries[b]);
            out.push(QuadrupleRecord {
                u: [ea.u1, ea.u2, eb.u1, eb.u2],
                z: ea.z,
                value: centered[a] * centered[b],
            });
        };
        if total <= max_per_curve {
            for a in 0..raw.big_m {
                for b in 0..raw.big_m {
                    if admissible(a, b) {
                        emit(a, b);
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut seen = HashSet::with_capacity(max_per_curve);
            let mut picked = Vec::with_capacity(max_per_curve);
            while picked.len() < max_per_curve {
                let a = rng.random_range(0..raw.big_m);
                let b = rng.random_range(0..raw.big_m);
                if admissible(a, b) && seen.insert((a, b)) {
                    picked.push((a, b));
                }
            }
            for (a, b) in picked {
                emit(a, b);
            }
        }
    }
    out
}
