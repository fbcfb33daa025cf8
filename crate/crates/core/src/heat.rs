//! Heat-semigroup convolution H^ν(t)∗g, spectral and Feynman–Kac forms.
//!
//! The kernel H^ν(t,x) = (2πνt)^{−d/2} exp(−|x|²/(2νt)) acts on the torus
//! as the Fourier multiplier e^{−νt|ξ|²/2}; the deterministic path is
//! spectral, hence exact for band-limited data.

use crate::fields::interp::ConstantShift;
use crate::fields::spectral::{forward, for_each_mode, inverse_real};
use crate::fields::VectorField;
use crate::stochastic::{sample_gaussian, McEstimate, RngStream};
use crate::{Error, Result};

/// H^ν(t)∗g via the multiplier e^{−νt|ξ|²/2}; t = 0 is the identity.
pub fn heat_convolve(g: &VectorField, t: f64, nu: f64) -> Result<VectorField> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("must be nonnegative, got {t}")));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::param("nu", format!("must be positive, got {nu}")));
    }
    if t == 0.0 {
        return Ok(g.clone());
    }
    let grid = g.grid();
    let xi = grid.wavenumbers();
    let comps = g
        .components()
        .iter()
        .map(|c| {
            let mut spec = forward(grid, c);
            for_each_mode(grid, |p, k| {
                let mut xi2 = 0.0;
                for a in 0..grid.dim() {
                    xi2 += xi[k[a]] * xi[k[a]];
                }
                spec[p] *= (-nu * t * xi2 / 2.0).exp();
            });
            inverse_real(grid, spec)
        })
        .collect();
    VectorField::from_components(grid, comps)
}

/// Feynman–Kac form: pointwise E[g(x + √(νt)·Z)], Z standard Gaussian, the
/// same draw reused at every grid point (common random numbers), field
/// values off-grid by periodic multilinear interpolation.
pub fn heat_mc(
    g: &VectorField,
    t: f64,
    nu: f64,
    samples: usize,
    stream: RngStream,
) -> Result<McEstimate> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::param("t", format!("must be positive, got {t}")));
    }
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::param("nu", format!("must be positive, got {nu}")));
    }
    if samples < 2 {
        return Err(Error::param("samples", "need at least 2 samples"));
    }
    let grid = g.grid().clone();
    let d = grid.dim();
    crate::stochastic::estimate_fields(&grid, samples, |i, out| {
        let mut rng = stream.child(i as u64).rng();
        let z = sample_gaussian(&mut rng, d, nu * t).expect("νt > 0");
        let cs = ConstantShift::new(&grid, &z);
        for (a, o) in out.iter_mut().enumerate() {
            cs.accumulate(g.component(a), 1.0, o);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{jacobian, l2_norm, sup_norm, Grid, VectorField};
    use crate::presets::{random_bandlimited_vector, taylor_green};

    #[test]
    fn t_zero_is_identity_and_negative_rejected() {
        let grid = Grid::two_pi(2, 16).unwrap();
        let g = taylor_green(&grid).unwrap();
        let h = heat_convolve(&g, 0.0, 0.5).unwrap();
        assert_eq!(h, g);
        assert!(heat_convolve(&g, -0.1, 0.5).is_err());
        assert!(heat_convolve(&g, 0.1, 0.0).is_err());
    }

    #[test]
    fn single_mode_amplitude_decay() {
        let length = 5.0;
        let grid = Grid::new(1, 32, length).unwrap();
        let k = 2.0 * std::f64::consts::PI / length;
        let g = VectorField::from_fn(&grid, |x| vec![(k * x[0]).sin()]);
        let (t, nu) = (0.7, 0.3);
        let h = heat_convolve(&g, t, nu).unwrap();
        let factor = (-nu * t * k * k / 2.0).exp();
        let mut expect = g.clone();
        expect.scale(factor);
        let diff = h.sub(&expect).unwrap();
        assert!(sup_norm(&diff) < 1e-13);
    }

    #[test]
    fn sup_norm_never_grows() {
        let grid = Grid::two_pi(2, 32).unwrap();
        for seed in 0..5u64 {
            let g = random_bandlimited_vector(&grid, 6, 1.0, &RngStream::new(seed));
            let h = heat_convolve(&g, 0.4, 0.8).unwrap();
            assert!(sup_norm(&h) <= sup_norm(&g) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn semigroup_property() {
        let grid = Grid::two_pi(2, 16).unwrap();
        let g = taylor_green(&grid).unwrap();
        let lhs = heat_convolve(&heat_convolve(&g, 0.3, 0.5).unwrap(), 0.2, 0.5).unwrap();
        let rhs = heat_convolve(&g, 0.5, 0.5).unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        assert!(l2_norm(&diff) < 1e-12);
    }

    #[test]
    fn mass_conserved() {
        let grid = Grid::two_pi(2, 16).unwrap();
        let g = {
            let mut g = random_bandlimited_vector(&grid, 5, 1.0, &RngStream::new(12));
            // add a mean component to make the check non-trivial
            for v in g.component_mut(0) {
                *v += 0.7;
            }
            g
        };
        let h = heat_convolve(&g, 0.9, 0.4).unwrap();
        let m0 = g.mean();
        let m1 = h.mean();
        for (a, b) in m0.iter().zip(&m1) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_smoothing_bound_with_fitted_constant() {
        // ‖∇(H(t)∗g)‖_∞ ≤ C(1 + 1/√(νt))‖g‖_∞ with one C across t
        let grid = Grid::two_pi(2, 32).unwrap();
        let nu = 0.5;
        let family: Vec<VectorField> = (0..4)
            .map(|s| random_bandlimited_vector(&grid, 8, 1.0, &RngStream::new(600 + s)))
            .collect();
        let sup_grad = |u: &VectorField| {
            let j = jacobian(u);
            let mut m = 0.0f64;
            for p in 0..u.grid().points() {
                let mut q = 0.0;
                for e in j.entries() {
                    q += e[p] * e[p];
                }
                m = m.max(q);
            }
            m.sqrt()
        };
        let mut cmax = 0.0f64;
        let mut ratios = Vec::new();
        for &t in &[0.01, 0.05, 0.2, 1.0] {
            for g in &family {
                let h = heat_convolve(g, t, nu).unwrap();
                let ratio = sup_grad(&h) / ((1.0 + 1.0 / (nu * t).sqrt()) * sup_norm(g));
                cmax = cmax.max(ratio);
                ratios.push(ratio);
            }
        }
        // the fitted constant stays O(1): the bound shape is right
        assert!(cmax < 5.0, "fitted C = {cmax}, ratios {ratios:?}");
    }

    #[test]
    fn mc_constant_field_exact() {
        let grid = Grid::two_pi(2, 8).unwrap();
        let g = VectorField::from_fn(&grid, |_| vec![1.25, -0.5]);
        let est = heat_mc(&g, 0.5, 0.3, 8, RngStream::new(2)).unwrap();
        let diff = est.mean.sub(&g).unwrap();
        assert!(sup_norm(&diff) < 1e-13);
        assert!(sup_norm(&est.stderr) < 1e-13);
    }

    #[test]
    fn mc_matches_spectral_within_error_bars() {
        let grid = Grid::two_pi(2, 32).unwrap();
        let g = taylor_green(&grid).unwrap();
        let (t, nu) = (0.5, 0.4);
        let m = 10_000;
        let est = heat_mc(&g, t, nu, m, RngStream::new(5)).unwrap();
        let oracle = heat_convolve(&g, t, nu).unwrap();
        let gap = l2_norm(&est.mean.sub(&oracle).unwrap());
        let noise = l2_norm(&est.stderr);
        let delta = grid.spacing();
        // 3σ plus the interpolation floor
        assert!(
            gap < 3.0 * noise + 0.5 * delta * delta * l2_norm(&g),
            "gap {gap} noise {noise}"
        );
    }

    #[test]
    fn mc_error_shrinks_with_sample_doubling() {
        let grid = Grid::two_pi(2, 16).unwrap();
        let g = taylor_green(&grid).unwrap();
        let e1 = heat_mc(&g, 0.5, 0.4, 2_000, RngStream::new(6)).unwrap();
        let e2 = heat_mc(&g, 0.5, 0.4, 4_000, RngStream::new(6)).unwrap();
        let r = l2_norm(&e2.stderr) / l2_norm(&e1.stderr);
        let target = 1.0 / 2.0f64.sqrt();
        assert!((r - target).abs() < 0.15 * target, "stderr ratio {r}");
    }
}
