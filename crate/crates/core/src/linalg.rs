//! Small weighted normal-equation systems and column-standardized OLS.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FdaError, Result};

/// Condition number (1-norm, after Jacobi equilibration) above which a
/// local system is reported as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Accumulates `XᵀWX` and `XᵀWy` for a `P`-parameter weighted fit.
#[derive(Debug, Clone)]
pub struct NormalEquations<const P: usize> {
    gram: [[f64; P]; P],
    rhs: [f64; P],
    mass: f64,
}

impl<const P: usize> Default for NormalEquations<P> {
    fn default() -> Self {
        Self {
            gram: [[0.0; P]; P],
            rhs: [0.0; P],
            mass: 0.0,
        }
    }
}

/// Solution of a local system plus the pieces GCV needs.
#[derive(Debug, Clone, Copy)]
pub struct LocalSolution<const P: usize> {
    pub coef: [f64; P],
    /// `[(XᵀWX)⁻¹]₀₀`.
    pub inv00: f64,
    pub condition: f64,
    pub mass: f64,
}

impl<const P: usize> NormalEquations<P> {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: &[f64; P], w: f64, y: f64) {
        if w == 0.0 {
            return;
        }
        self.mass += w;
        for a in 0..P {
            let wx = w * x[a];
            self.rhs[a] += wx * y;
            for b in a..P {
                self.gram[a][b] += wx * x[b];
            }
        }
    }

    /// Adds a pre-aggregated block: `gram[a][b]` for `a ≤ b` and `rhs`.
    pub fn add_raw(&mut self, gram: &[[f64; P]; P], rhs: &[f64; P], mass: f64) {
        self.mass += mass;
        for a in 0..P {
            self.rhs[a] += rhs[a];
            for b in a..P {
                self.gram[a][b] += gram[a][b];
            }
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn solve(&self) -> Result<LocalSolution<P>> {
        let singular = |condition: f64| FdaError::SingularSystem {
            condition,
            mass: self.mass,
        };
        if !(self.mass > 0.0) {
            return Err(singular(f64::INFINITY));
        }
        let mut a = [[0.0; P]; P];
        let mut scale = [0.0; P];
        for i in 0..P {
            let d = self.gram[i][i];
            if !(d > 0.0) || !d.is_finite() {
                return Err(singular(f64::INFINITY));
            }
            scale[i] = 1.0 / d.sqrt();
        }
        for i in 0..P {
            for j in 0..P {
                let g = if i <= j { self.gram[i][j] } else { self.gram[j][i] };
                a[i][j] = g * scale[i] * scale[j];
            }
        }
        let norm1 = column_norm1(&a);
        let inv = invert(a).ok_or_else(|| singular(f64::INFINITY))?;
        let condition = norm1 * column_norm1(&inv);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(singular(condition));
        }
        let mut coef = [0.0; P];
        for i in 0..P {
            let mut acc = 0.0;
            for j in 0..P {
                acc += inv[i][j] * self.rhs[j] * scale[j];
            }
            coef[i] = acc * scale[i];
        }
        Ok(LocalSolution {
            coef,
            inv00: inv[0][0] * scale[0] * scale[0],
            condition,
            mass: self.mass,
        })
    }
}

fn column_norm1<const P: usize>(a: &[[f64; P]; P]) -> f64 {
    (0..P)
        .map(|j| (0..P).map(|i| a[i][j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Gauss-Jordan inversion with partial pivoting.
fn invert<const P: usize>(mut a: [[f64; P]; P]) -> Option<[[f64; P]; P]> {
    let mut inv = [[0.0; P]; P];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..P {
        let pivot = (col..P)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = 1.0 / a[col][col];
        for j in 0..P {
            a[col][j] *= p;
            inv[col][j] *= p;
        }
        for r in 0..P {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f == 0.0 {
                continue;
            }
            for j in 0..P {
                a[r][j] -= f * a[col][j];
                inv[r][j] -= f * inv[col][j];
            }
        }
    }
    Some(inv)
}

/// Ordinary least squares on standardized columns. Column 0 of every row
/// must be the intercept (constant 1); the other columns are centered and
/// scaled before solving, and coefficients are mapped back.
pub fn ols<R>(rows: usize, cols: usize, mut row: R, y: &[f64]) -> Result<Vec<f64>>
where
    R: FnMut(usize, &mut [f64]),
{
    assert_eq!(rows, y.len());
    if rows < cols {
        return Err(FdaError::RankDeficient { rank: rows, cols });
    }
    let p = cols - 1;
    let mut buf = vec![0.0; cols];
    let mut mean = vec![0.0; p];
    let mut y_mean = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        row(i, &mut buf);
        for c in 0..p {
            mean[c] += buf[c + 1];
        }
        y_mean += yi;
    }
    let nf = rows as f64;
    mean.iter_mut().for_each(|v| *v /= nf);
    y_mean /= nf;

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut centered = vec![0.0; p];
    for (i, &yi) in y.iter().enumerate() {
        row(i, &mut buf);
        for c in 0..p {
            centered[c] = buf[c + 1] - mean[c];
        }
        let yc = yi - y_mean;
        for a in 0..p {
            let xa = centered[a];
            rhs[a] += xa * yc;
            for b in a..p {
                gram[(a, b)] += xa * centered[b];
            }
        }
    }
    let mut sd = vec![0.0; p];
    for c in 0..p {
        sd[c] = (gram[(c, c)] / nf).sqrt();
        if !(sd[c] > 0.0) {
            return Err(FdaError::RankDeficient { rank: p, cols });
        }
    }
    for a in 0..p {
        for b in a..p {
            let v = gram[(a, b)] / (nf * sd[a] * sd[b]);
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
        rhs[a] /= nf * sd[a];
    }
    let eig = SymmetricEigen::new(gram);
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = max_eig * 1e-12;
    let rank = eig.eigenvalues.iter().filter(|&&l| l > tol).count();
    if rank < p {
        return Err(FdaError::RankDeficient {
            rank: rank + 1,
            cols,
        });
    }
    let proj = eig.eigenvectors.transpose() * rhs;
    let scaled = proj.component_div(&eig.eigenvalues);
    let gamma = &eig.eigenvectors * scaled;
    let mut beta = vec![0.0; cols];
    let mut intercept = y_mean;
    for c in 0..p {
        beta[c + 1] = gamma[c] / sd[c];
        intercept -= beta[c + 1] * mean[c];
    }
    beta[0] = intercept;
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_exact_linear_fit() {
        let mut ne = NormalEquations::<3>::new();
        for i in 0..10 {
            let u = i as f64 * 0.1;
            let z = (i * i) as f64 * 0.01;
            ne.add(&[1.0, u, z], 1.0 + u, 1.0 + 2.0 * u - 3.0 * z);
        }
        let sol = ne.solve().unwrap();
        assert!((sol.coef[0] - 1.0).abs() < 1e-12);
        assert!((sol.coef[1] - 2.0).abs() < 1e-12);
        assert!((sol.coef[2] + 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_collinear_systems_are_singular() {
        let ne = NormalEquations::<2>::new();
        assert!(matches!(ne.solve(), Err(FdaError::SingularSystem { .. })));
        let mut ne = NormalEquations::<3>::new();
        for i in 0..5 {
            let u = i as f64;
            ne.add(&[1.0, u, 2.0 * u], 1.0, u);
        }
        assert!(matches!(ne.solve(), Err(FdaError::SingularSystem { .. })));
    }

    #[test]
    fn inv00_matches_explicit_inverse() {
        let mut ne = NormalEquations::<2>::new();
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, 0.5)];
        for &(x, w) in &pts {
            ne.add(&[1.0, x], w, 0.0);
        }
        // [[3.5, 3.0], [3.0, 4.0]]⁻¹₀₀ = 4 / (14 - 9)
        assert!((ne.solve().unwrap().inv00 - 0.8).abs() < 1e-14);
    }

    #[test]
    fn ols_recovers_coefficients_and_flags_rank() {
        let xs: Vec<[f64; 3]> = (0..30)
            .map(|i| {
                let a = (i as f64 * 0.37).sin();
                let b = (i as f64 * 0.11).cos();
                [1.0, a, b * b]
            })
            .collect();
        let y: Vec<f64> = xs.iter().map(|x| 4.0 - x[1] + 0.5 * x[2]).collect();
        let beta = ols(xs.len(), 3, |i, buf| buf.copy_from_slice(&xs[i]), &y).unwrap();
        assert!((beta[0] - 4.0).abs() < 1e-10);
        assert!((beta[1] + 1.0).abs() < 1e-10);
        assert!((beta[2] - 0.5).abs() < 1e-10);

        let err = ols(2, 3, |i, buf| buf.copy_from_slice(&xs[i]), &y[..2]);
        assert!(matches!(err, Err(FdaError::RankDeficient { .. })));
        let dup = ols(
            30,
            3,
            |i, buf| buf.copy_from_slice(&[1.0, xs[i][1], 3.0 * xs[i][1]]),
            &y,
        );
        assert!(matches!(dup, Err(FdaError::RankDeficient { .. })));
    }
}
