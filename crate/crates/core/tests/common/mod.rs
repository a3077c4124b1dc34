#![allow(dead_code)]

use fdacov::data::PanelSample;
use fdacov::polyfit::{CovFunctionals, MeanFunctionals};
use num::{BigRational, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random design with `y = f(u, z)` and uniform `u`, `z`.
pub fn panel_from<F: Fn(f64, f64) -> f64>(n: usize, m: usize, seed: u64, f: F) -> PanelSample {
    let mut r = rng(seed);
    let z: Vec<f64> = (0..n).map(|_| r.random()).collect();
    let u: Vec<f64> = (0..n * m).map(|_| r.random()).collect();
    let y = (0..n * m).map(|k| f(u[k], z[k / m])).collect();
    PanelSample::new(n, m, y, u, z).unwrap()
}

/// Log-uniform draw on `[lo, hi]`.
pub fn log_uniform(r: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * r.random::<f64>()).exp()
}

pub fn random_mean_functionals(r: &mut impl Rng) -> MeanFunctionals {
    MeanFunctionals {
        i_uu: log_uniform(r, 0.1, 100.0),
        i_uz: log_uniform(r, 0.1, 100.0),
        i_zz: log_uniform(r, 0.1, 100.0),
        q1: log_uniform(r, 0.1, 10.0),
        q2: log_uniform(r, 0.1, 10.0),
    }
}

pub fn random_cov_functionals(r: &mut impl Rng) -> CovFunctionals {
    CovFunctionals {
        i_u1u1: log_uniform(r, 0.1, 100.0),
        i_u1u2: log_uniform(r, 0.1, 100.0),
        i_u1z: log_uniform(r, 0.1, 100.0),
        i_zz: log_uniform(r, 0.1, 100.0),
        q1: log_uniform(r, 0.1, 10.0),
        q2: log_uniform(r, 0.1, 10.0),
    }
}

/// `count` log-spaced values on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Intercept of the weighted least squares fit, solved in exact rational
/// arithmetic from the raw design `x` (rows without the leading one).
pub fn rational_intercept(rows: &[(Vec<f64>, f64, f64)]) -> f64 {
    let p = rows[0].0.len() + 1;
    let mut a = vec![vec![BigRational::zero(); p + 1]; p];
    for (x, w, y) in rows {
        let mut full = vec![exact(1.0)];
        full.extend(x.iter().map(|&v| exact(v)));
        let w = exact(*w);
        let y = exact(*y);
        for r in 0..p {
            let wr = &w * &full[r];
            for c in 0..p {
                a[r][c] += &wr * &full[c];
            }
            a[r][p] += &wr * &y;
        }
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&i, &j| a[i][col].abs().cmp(&a[j][col].abs()))
            .unwrap();
        assert!(!a[piv][col].is_zero(), "singular oracle system");
        a.swap(col, piv);
        for r in 0..p {
            if r != col && !a[r][col].is_zero() {
                let f = &a[r][col] / &a[col][col];
                for c in col..=p {
                    let v = &f * &a[col][c];
                    a[r][c] -= v;
                }
            }
        }
    }
    (&a[0][p] / &a[0][0]).to_f64().unwrap()
}
