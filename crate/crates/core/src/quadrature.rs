//! Tensor-grid trapezoid and composite Simpson rules on intervals.

use crate::error::{FdaError, Result};

/// One axis of a tensor trapezoid grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapezoidAxis {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TrapezoidAxis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(FdaError::Quadrature(format!(
                "need at least 2 nodes per axis, got {count}"
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(FdaError::Quadrature(format!("bad interval [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let nodes = (0..count).map(|i| lo + step * i as f64).collect();
        let mut weights = vec![step; count];
        weights[0] *= 0.5;
        weights[count - 1] *= 0.5;
        Ok(Self { nodes, weights })
    }

    pub fn unit(count: usize) -> Result<Self> {
        Self::new(0.0, 1.0, count)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Node counts per axis for the functional integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub nodes_2d: usize,
    pub nodes_3d: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes_2d: 41,
            nodes_3d: 31,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_2d < 3 || self.nodes_3d < 3 {
            return Err(FdaError::Quadrature(format!(
                "grid needs at least 3 nodes per axis (got {} / {})",
                self.nodes_2d, self.nodes_3d
            )));
        }
        Ok(())
    }
}

/// Composite Simpson rule with `intervals` (rounded up to even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, intervals: usize) -> f64 {
    let n = if intervals % 2 == 0 { intervals } else { intervals + 1 }.max(2);
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let x = lo + h * i as f64;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_weights_sum_to_length() {
        let ax = TrapezoidAxis::new(-1.0, 3.0, 17).unwrap();
        let total: f64 = ax.weights.iter().sum();
        assert!((total - 4.0).abs() < 1e-14);
        assert_eq!(ax.nodes[16], 3.0);
    }

    #[test]
    fn rejects_degenerate_axes() {
        assert!(TrapezoidAxis::unit(1).is_err());
        assert!(TrapezoidAxis::new(1.0, 1.0, 5).is_err());
        assert!(GridSpec { nodes_2d: 2, nodes_3d: 31 }.validate().is_err());
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 4);
        assert!((v - 2.0).abs() < 1e-13);
    }
}
