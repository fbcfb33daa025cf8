//! Canonical test fields: the Taylor–Green vortex, single sine modes and
//! seeded random band-limited fields.

use crate::fields::{gradient, spectral, Grid, ScalarField, VectorField};
use crate::leray::leray_project;
use crate::stochastic::RngStream;
use crate::{Error, Result};
use rand_distr::{Distribution, StandardNormal};

/// 2D Taylor–Green vortex u = (−cos x sin y, sin x cos y), divergence-free
/// eigenfield of the Stokes operator; the canonical validation case.
pub fn taylor_green(grid: &Grid) -> Result<VectorField> {
    if grid.dim() != 2 {
        return Err(Error::param("grid", "taylor-green preset is 2D"));
    }
    let s = 2.0 * std::f64::consts::PI / grid.period();
    Ok(VectorField::from_fn(grid, |x| {
        let (a, b) = (s * x[0], s * x[1]);
        vec![-a.cos() * b.sin(), a.sin() * b.cos()]
    }))
}

/// amp·sin(2π·mode·x/L) as a 1D scalar field.
pub fn sine_1d(grid: &Grid, amplitude: f64, mode: usize) -> Result<ScalarField> {
    if grid.dim() != 1 {
        return Err(Error::param("grid", "sine preset is 1D"));
    }
    let k = 2.0 * std::f64::consts::PI * mode as f64 / grid.period();
    Ok(ScalarField::from_fn(grid, |x| amplitude * (k * x[0]).sin()))
}

/// Random smooth field: white noise in physical space pushed through a
/// Gaussian low-pass  e^{−|ξ|²/ξ₀²}  with hard cutoff at `max_mode`, then
/// rescaled to the requested sup amplitude. Deterministic in the stream.
pub fn random_bandlimited_scalar(
    grid: &Grid,
    max_mode: usize,
    amplitude: f64,
    stream: &RngStream,
) -> ScalarField {
    let mut rng = stream.rng();
    let white: Vec<f64> = (0..grid.points())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let xi = grid.wavenumbers();
    let cutoff = 2.0 * std::f64::consts::PI * max_mode as f64 / grid.period();
    let xi0 = cutoff / 1.5;
    let filtered = spectral::apply_real_multiplier(grid, &white, |k| {
        let mut xi2 = 0.0;
        for a in 0..grid.dim() {
            xi2 += xi[k[a]] * xi[k[a]];
        }
        if xi2 == 0.0 || xi2.sqrt() > cutoff {
            0.0
        } else {
            (-xi2 / (xi0 * xi0)).exp()
        }
    });
    let mut f = ScalarField::from_values(grid, filtered).expect("filtered noise is finite");
    let sup = spectral::sup_norm_scalar(&f).max(1e-300);
    f.scale(amplitude / sup);
    f
}

/// Random smooth vector field (componentwise band-limited noise).
pub fn random_bandlimited_vector(
    grid: &Grid,
    max_mode: usize,
    amplitude: f64,
    stream: &RngStream,
) -> VectorField {
    let comps: Vec<ScalarField> = (0..grid.dim())
        .map(|a| random_bandlimited_scalar(grid, max_mode, amplitude, &stream.child(a as u64)))
        .collect();
    VectorField::from_scalars(comps).expect("components share the grid")
}

/// Random divergence-free field: Leray projection of band-limited noise,
/// rescaled to `amplitude`.
pub fn random_solenoidal(
    grid: &Grid,
    max_mode: usize,
    amplitude: f64,
    stream: &RngStream,
) -> VectorField {
    let mut u = leray_project(&random_bandlimited_vector(grid, max_mode, amplitude, stream));
    let sup = spectral::sup_norm(&u).max(1e-300);
    u.scale(amplitude / sup);
    u
}

/// Random pure-gradient field ∇s of a band-limited scalar.
pub fn random_gradient(
    grid: &Grid,
    max_mode: usize,
    amplitude: f64,
    stream: &RngStream,
) -> VectorField {
    let s = random_bandlimited_scalar(grid, max_mode, amplitude, stream);
    let mut g = gradient(&s);
    let sup = spectral::sup_norm(&g).max(1e-300);
    g.scale(amplitude / sup);
    g
}
