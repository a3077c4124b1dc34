//! Pilot fits, curvature estimation and derivative-bandwidth search on
//! the simulation designs.

mod common;

use common::*;
use fdacov::bandwidth::{curve_cv_derivative_bandwidths, gcv_derivative_bandwidths, gcv_grid};
use fdacov::data::PanelSample;
use fdacov::inference::{Analysis, PipelineConfig};
use fdacov::kernels::KernelSpec;
use fdacov::llk::fit_mean_derivatives;
use fdacov::quadrature::simpson;
use fdacov::simulation::{DgpId, DgpSpec};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Noiseless surface on a tensor design, `n` curves with `m` points each.
fn dense_grid<F: Fn(f64, f64) -> f64>(n: usize, m: usize, f: F) -> PanelSample {
    let z: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let u: Vec<f64> = (0..n).flat_map(|_| (0..m).map(|j| (j as f64 + 0.5) / m as f64)).collect();
    let y = (0..n * m).map(|k| f(u[k], z[k / m])).collect();
    PanelSample::new(n, m, y, u, z).unwrap()
}

fn integral_2d<F: Fn(f64, f64) -> f64>(f: F) -> f64 {
    simpson(|u| simpson(|z| f(u, z), 0.0, 1.0, 200), 0.0, 1.0, 200)
}

#[test]
fn curvature_of_quadratic_and_dgp_surfaces() {
    let g = KernelSpec::gaussian();
    let quad = dense_grid(50, 50, |u, _| 3.0 * u * u);
    let (d20, _) = fit_mean_derivatives(&quad, 0.5, 0.5, 0.3, 0.3, &g).unwrap();
    assert!((d20 - 6.0).abs() < 0.1, "{d20}");

    let d1 = DgpSpec::new(DgpId::Dgp1, 50, 50);
    let s = dense_grid(50, 50, |u, z| d1.mean(u, z));
    let (d20, d02) = fit_mean_derivatives(&s, 0.5, 0.5, 0.1, 0.1, &g).unwrap();
    assert!((d02 + 1.18).abs() < 0.15, "DGP-1 d02 {d02}");
    assert!((d20 + 1.18).abs() < 0.15, "DGP-1 d20 {d20}");

    let d2 = DgpSpec::new(DgpId::Dgp2, 50, 50);
    let s = dense_grid(50, 50, |u, z| d2.mean(u, z));
    let (_, d02) = fit_mean_derivatives(&s, 0.5, 0.5, 0.1, 0.1, &g).unwrap();
    assert!((d02 + 8.72).abs() < 0.9, "DGP-2 d02 {d02}");
}

#[test]
fn generator_moments() {
    let spec = DgpSpec::new(DgpId::Dgp1, 20_000, 5);
    let s = spec.generate(77);
    let n = s.n() as f64;
    // Curve-level averages are independent across curves.
    let curve_stats: Vec<(f64, f64, f64)> = (0..s.n())
        .map(|i| {
            let (mut r1, mut r2, mut um) = (0.0, 0.0, 0.0);
            for j in 0..5 {
                let r = s.y(i, j) - spec.mean(s.u(i, j), s.z(i));
                r1 += r / 5.0;
                r2 += r * r / 5.0;
                um += s.u(i, j) / 5.0;
            }
            (r1, r2, um)
        })
        .collect();
    let mean_se = |xs: Vec<f64>| {
        let mu = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (mu, sd / n.sqrt())
    };
    let (r1, se1) = mean_se(curve_stats.iter().map(|c| c.0).collect());
    assert!(r1.abs() < 5.0 * se1, "residual mean {r1} (se {se1})");
    let expect = integral_2d(|u, z| spec.cov(u, u, z)) + 1.0;
    let (r2, se2) = mean_se(curve_stats.iter().map(|c| c.1).collect());
    assert!((r2 - expect).abs() < 5.0 * se2, "residual variance {r2} vs {expect} (se {se2})");
    let (um, seu) = mean_se(curve_stats.iter().map(|c| c.2).collect());
    assert!((um - 0.5).abs() < 5.0 * seu);
    let (zm, sez) = mean_se(s.z_values().to_vec());
    assert!((zm - 0.5).abs() < 5.0 * sez);
    let (z2, sez2) = mean_se(s.z_values().iter().map(|z| z * z).collect());
    assert!((z2 - 1.0 / 3.0).abs() < 5.0 * sez2);
}

#[test]
fn pilot_fits_on_dgp1() {
    let spec = DgpSpec::new(DgpId::Dgp1, 100, 15);
    let a = Analysis::new(spec.generate(5), PipelineConfig::default()).unwrap();
    let grid: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();

    let mut sse = 0.0;
    for &u in &grid {
        for &z in &grid {
            sse += (a.pilots.mu.eval(&[u, z]) - spec.mean(u, z)).powi(2);
        }
    }
    let rmse = (sse / 441.0).sqrt();
    assert!(rmse < 0.5, "mu_poly RMSE {rmse}");

    let mid: Vec<f64> = (0..=10).map(|i| 0.25 + 0.05 * i as f64).collect();
    let positive = mid.iter().filter(|&&u| a.pilots.gamma.eval(&[u, u, 0.5]) > 0.0).count();
    assert!(2 * positive > mid.len(), "gamma_poly positive at {positive}/{}", mid.len());

    let gap: f64 = mid
        .iter()
        .map(|&u| a.pilots.gamma_nd.eval(&[u, 0.5]) - a.pilots.gamma.eval(&[u, u, 0.5]))
        .sum::<f64>()
        / mid.len() as f64;
    assert!((gap - 1.0).abs() < 0.5, "noisy diagonal minus diagonal {gap}");

    let c = 0.5;
    assert!(a.pilots.gamma_tilde.eval(&[c, c, c, c, c]) > 0.0);

    // Q1 against the stated covariance weights (2, 1) and the score variances (3, 2).
    let stated = integral_2d(|u, z| {
        2.0 * (std::f64::consts::PI * u * z).sin().powi(2)
            + (2.0 * std::f64::consts::PI * u * z).sin().powi(2)
    }) + 1.0;
    let drawn = integral_2d(|u, z| spec.cov(u, u, z)) + 1.0;
    let q1 = a.mean_functionals.q1;
    assert!((q1 / stated - 1.0).abs() < 0.5, "q1 {q1} vs stated-weight truth {stated}");
    assert!((q1 / drawn - 1.0).abs() < 0.5, "q1 {q1} vs drawn-weight truth {drawn}");
}

#[test]
fn discriminant_nonnegative_over_pilot_runs() {
    let spec = DgpSpec::new(DgpId::Dgp1, 100, 5);
    for seed in 0..50 {
        let a = Analysis::new(spec.generate(seed), PipelineConfig::default()).unwrap();
        let d = a.cov_functionals.discriminant();
        assert!(d >= 0.0, "seed {seed}: discriminant {d}");
    }
}

#[test]
fn gcv_prefers_oversmoothing_on_pure_noise() {
    let g = KernelSpec::gaussian();
    let grid = gcv_grid();
    let upper = grid[grid.len() / 2];
    let mut hits = 0;
    for seed in 0..50 {
        let mut r = rng(9000 + seed);
        let s = panel_from(20, 10, seed, |_, _| 0.0);
        let y: Vec<f64> = (0..s.len()).map(|_| StandardNormal.sample(&mut r)).collect();
        let s = PanelSample::new(20, 10, y, s.u_values().to_vec(), s.z_values().to_vec()).unwrap();
        let sel = gcv_derivative_bandwidths(&s, &g).unwrap();
        if sel.g_u >= upper && sel.g_z >= upper {
            hits += 1;
        }
    }
    assert!(hits >= 40, "upper-half selections {hits}/50");
}

#[test]
fn gcv_selection_is_grid_minimizer() {
    let g = KernelSpec::gaussian();
    let mut r = rng(12);
    let s = panel_from(30, 8, 3, |u, z| 2.0 * u - z);
    let sel = gcv_derivative_bandwidths(&s, &g).unwrap();
    let grid = gcv_grid();
    assert!(grid.contains(&sel.g_u) && grid.contains(&sel.g_z));
    assert!(sel.score.is_finite());
    for c in &sel.candidates {
        if let Some(score) = c.score {
            assert!(sel.score <= score);
        }
    }

    let y: Vec<f64> = s
        .observations()
        .map(|(u, z, _)| (3.0 * u).sin() * z + 0.3 * r.random::<f64>())
        .collect();
    let noisy = PanelSample::new(30, 8, y, s.u_values().to_vec(), s.z_values().to_vec()).unwrap();
    for sel in [
        gcv_derivative_bandwidths(&noisy, &g).unwrap(),
        curve_cv_derivative_bandwidths(&noisy, &g).unwrap(),
    ] {
        assert_eq!(sel.candidates.len(), grid.len() * grid.len());
        let best = sel.candidates.iter().filter_map(|c| c.score).fold(f64::INFINITY, f64::min);
        assert_eq!(sel.score, best);
    }
}
