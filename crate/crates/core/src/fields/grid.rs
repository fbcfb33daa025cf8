use std::f64::consts::PI;

use crate::{Error, Result};

/// Uniform discretization of the periodic torus `[0, L)^d`, `d ∈ {1,2,3}`.
///
/// Nodes along each axis sit at `x_i = i·δ` with spacing `δ = L/n`.  The
/// wavenumber set per axis is `{2πm/L : m = −n/2, …, n/2−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, period: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::param("dim", format!("must be 1, 2 or 3, got {dim}")));
        }
        if points_per_axis < 4 {
            return Err(Error::param(
                "points_per_axis",
                format!("must be ≥ 4, got {points_per_axis}"),
            ));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::param("period", format!("must be positive, got {period}")));
        }
        Ok(Grid {
            dim,
            n: points_per_axis,
            length: period,
        })
    }

    /// 2π-periodic grid, the default setting for the vortex presets.
    pub fn two_pi(dim: usize, points_per_axis: usize) -> Result<Self> {
        Grid::new(dim, points_per_axis, 2.0 * PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.length
    }

    /// Mesh width δ = L/n.
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Total number of grid nodes, n^dim.
    pub fn points(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Quadrature weight δ^dim of one node (exact for band-limited periodic
    /// integrands).
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Signed integer frequency of DFT bin `k`; the Nyquist bin of an even
    /// transform maps to −n/2.
    pub fn freq(&self, k: usize) -> i64 {
        debug_assert!(k < self.n);
        if k <= (self.n - 1) / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    /// Angular wavenumbers 2πm/L per bin, Nyquist included with its negative
    /// value.  Valid for even multipliers (|ξ|², heat factors, projections).
    pub fn wavenumbers(&self) -> Vec<f64> {
        let scale = 2.0 * PI / self.length;
        (0..self.n).map(|k| scale * self.freq(k) as f64).collect()
    }

    /// Wavenumbers with the Nyquist bin zeroed.  Used for every odd
    /// (derivative-like) multiplier so that real fields stay real without
    /// asymmetric imaginary leakage.
    pub fn wavenumbers_deriv(&self) -> Vec<f64> {
        let mut xi = self.wavenumbers();
        if self.n % 2 == 0 {
            xi[self.n / 2] = 0.0;
        }
        xi
    }

    /// Coordinates of the node with per-axis indices `idx` (only the first
    /// `dim` entries are meaningful).
    pub fn node(&self, idx: &[usize]) -> [f64; 3] {
        let delta = self.spacing();
        let mut x = [0.0; 3];
        for (a, &i) in idx.iter().take(self.dim).enumerate() {
            x[a] = i as f64 * delta;
        }
        x
    }

    /// Flat row-major index (last axis contiguous).
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut p = 0;
        for a in 0..self.dim {
            p = p * self.n + idx[a];
        }
        p
    }

    /// Iterate over all nodes as (flat index, per-axis indices).
    pub fn for_each_node(&self, mut f: impl FnMut(usize, [usize; 3])) {
        let n = self.n;
        match self.dim {
            1 => {
                for i in 0..n {
                    f(i, [i, 0, 0]);
                }
            }
            2 => {
                let mut p = 0;
                for i in 0..n {
                    for j in 0..n {
                        f(p, [i, j, 0]);
                        p += 1;
                    }
                }
            }
            3 => {
                let mut p = 0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            f(p, [i, j, k]);
                            p += 1;
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "expected dim={} n={} L={}, got dim={} n={} L={}",
                self.dim, self.n, self.length, other.dim, other.n, other.length
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::new(0, 8, 1.0).is_err());
        assert!(Grid::new(4, 8, 1.0).is_err());
        assert!(Grid::new(2, 3, 1.0).is_err());
        assert!(Grid::new(2, 8, -1.0).is_err());
        assert!(Grid::new(2, 8, f64::NAN).is_err());
    }

    #[test]
    fn wavenumber_layout() {
        let g = Grid::new(1, 8, 2.0 * PI).unwrap();
        let f: Vec<i64> = (0..8).map(|k| g.freq(k)).collect();
        assert_eq!(f, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        let xi = g.wavenumbers_deriv();
        assert_eq!(xi[4], 0.0); // Nyquist zeroed for derivatives
        assert!((xi[1] - 1.0).abs() < 1e-15);
        assert!((g.wavenumbers()[4] + 4.0).abs() < 1e-15);
    }

    #[test]
    fn flat_index_row_major() {
        let g = Grid::new(2, 4, 1.0).unwrap();
        assert_eq!(g.flat_index(&[1, 2]), 6);
        assert_eq!(g.points(), 16);
        let mut count = 0;
        g.for_each_node(|p, idx| {
            assert_eq!(p, g.flat_index(&idx[..2]));
            count += 1;
        });
        assert_eq!(count, 16);
    }
}
