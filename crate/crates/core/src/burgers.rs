//! Mild-solution solver and diagnostics for backward PDEs of Burgers' type
//!
//!   ∂_t u + (ν/2)Δu + ((b+αu)·∇)u + c·u + φ = 0,   u(T) = ψ,
//!
//! realized as the Picard fixed point of the Duhamel map
//!   u(t) = H^ν(T−t)∗ψ + ∫_t^T H^ν(s−t)∗[((b+αu)·∇)u + cu + φ](s) ds
//! with a right-endpoint rule for the time integral, plus a Cole–Hopf
//! oracle, an FBSDE path-simulation consistency check, the maximum
//! principle, and the H^m energy identity.

use rustfft::num_complex::Complex64;

use crate::fields::interp::{eval_component, Stencil};
use crate::fields::spectral::{forward, inverse_real};
use crate::fields::{
    advect, jacobian, l2_norm, sobolev_inner, sobolev_norm, sobolev_norm_tensor, spectral_derivative,
    sup_norm_scalar, Grid, ScalarField, TensorField, VectorField,
};
use crate::heat::heat_convolve;
use crate::stochastic::RngStream;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Space-time fields
// ---------------------------------------------------------------------------

/// One vector field per stored instant of a strictly increasing time grid.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    times: Vec<f64>,
    fields: Vec<VectorField>,
}

impl SpaceTimeField {
    pub fn new(times: Vec<f64>, fields: Vec<VectorField>) -> Result<Self> {
        validate_time_grid(&times)?;
        if times.len() != fields.len() {
            return Err(Error::param("fields", "one field per instant required"));
        }
        let grid = fields[0].grid();
        for f in &fields {
            grid.same_as(f.grid())?;
        }
        Ok(SpaceTimeField { times, fields })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        self.fields[0].grid()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn snapshot(&self, k: usize) -> &VectorField {
        &self.fields[k]
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    /// Index of the stored instant closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (k, &s) in self.times.iter().enumerate() {
            let d = (s - t).abs();
            if d < dist {
                dist = d;
                best = k;
            }
        }
        best
    }

    /// Sup over stored times of the L² distance to another space-time field.
    pub fn sup_l2_distance(&self, other: &SpaceTimeField) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::param("other", "time grids differ in length"));
        }
        let mut worst = 0.0f64;
        for k in 0..self.len() {
            let d = self.fields[k].sub(&other.fields[k])?;
            worst = worst.max(l2_norm(&d));
        }
        Ok(worst)
    }
}

pub(crate) fn validate_time_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::param("time_grid", "need at least 2 instants"));
    }
    if !times.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::param("time_grid", "must be strictly increasing"));
    }
    if !times.iter().all(|t| t.is_finite()) {
        return Err(Error::param("time_grid", "must be finite"));
    }
    Ok(())
}

/// Uniform time grid of `steps` intervals on [t0, t1].
pub fn uniform_time_grid(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    let h = (t1 - t0) / steps as f64;
    (0..=steps).map(|k| t0 + k as f64 * h).collect()
}

// ---------------------------------------------------------------------------
// Problem data
// ---------------------------------------------------------------------------

/// Coefficients of the backward PDE of Burgers' type. `None` stands for an
/// identically zero coefficient; time-indexed coefficients carry one field
/// per time-grid instant.
#[derive(Debug, Clone)]
pub struct BurgersProblem {
    pub psi: VectorField,
    pub drift: Option<Vec<VectorField>>,
    pub zeroth_order: Option<Vec<TensorField>>,
    pub forcing: Option<Vec<VectorField>>,
    pub alpha: f64,
    pub nu: f64,
    pub time_grid: Vec<f64>,
}

impl BurgersProblem {
    pub fn new(
        psi: VectorField,
        alpha: f64,
        nu: f64,
        time_grid: Vec<f64>,
    ) -> Result<BurgersProblem> {
        validate_time_grid(&time_grid)?;
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::param("nu", format!("must be positive, got {nu}")));
        }
        if !alpha.is_finite() {
            return Err(Error::param("alpha", "must be finite"));
        }
        Ok(BurgersProblem {
            psi,
            drift: None,
            zeroth_order: None,
            forcing: None,
            alpha,
            nu,
            time_grid,
        })
    }

    pub fn with_drift(mut self, b: Vec<VectorField>) -> Result<Self> {
        self.check_series_len(b.len())?;
        for f in &b {
            self.psi.grid().same_as(f.grid())?;
        }
        self.drift = Some(b);
        Ok(self)
    }

    pub fn with_forcing(mut self, phi: Vec<VectorField>) -> Result<Self> {
        self.check_series_len(phi.len())?;
        for f in &phi {
            self.psi.grid().same_as(f.grid())?;
        }
        self.forcing = Some(phi);
        Ok(self)
    }

    pub fn with_zeroth_order(mut self, c: Vec<TensorField>) -> Result<Self> {
        self.check_series_len(c.len())?;
        for f in &c {
            self.psi.grid().same_as(f.grid())?;
        }
        self.zeroth_order = Some(c);
        Ok(self)
    }

    fn check_series_len(&self, len: usize) -> Result<()> {
        if len != self.time_grid.len() {
            return Err(Error::param(
                "coefficient",
                format!(
                    "time-indexed coefficient needs {} instants, got {len}",
                    self.time_grid.len()
                ),
            ));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        *self.time_grid.last().unwrap()
    }

    fn grid(&self) -> &Grid {
        self.psi.grid()
    }

    /// ((b + αu)·∇)u + cu + φ at instant `k`.
    fn nonlinearity(&self, k: usize, u: &VectorField) -> Result<VectorField> {
        let grid = self.grid();
        let d = grid.dim();
        let mut v = match &self.drift {
            Some(b) => b[k].clone(),
            None => VectorField::zeros(grid),
        };
        if self.alpha != 0.0 {
            v.axpy(self.alpha, u);
        }
        let mut out = advect(&v, u)?;
        if let Some(c) = &self.zeroth_order {
            let ck = &c[k];
            for i in 0..d {
                let oi = out.component_mut(i);
                for j in 0..d {
                    let cij = ck.entry(i, j);
                    let uj = u.component(j);
                    for p in 0..oi.len() {
                        oi[p] += cij[p] * uj[p];
                    }
                }
            }
        }
        if let Some(phi) = &self.forcing {
            out.axpy(1.0, &phi[k]);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Mild fixed point (shared engine)
// ---------------------------------------------------------------------------

pub(crate) struct MildOutcome {
    pub u: SpaceTimeField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Picard iteration on the discretized Duhamel map: the whole space-time
/// field is updated at once through the exact per-mode semigroup recurrence
///   Û_k = E_{k+1}(Û_{k+1} + Δt_{k+1}·F̂_{k+1}),  Û_Ñ = ψ̂,
/// with E the heat factor over one interval (right-endpoint rule).
pub(crate) fn mild_fixed_point(
    grid: &Grid,
    times: &[f64],
    psi: &VectorField,
    nu: f64,
    mut nonlinearity: impl FnMut(usize, &VectorField) -> Result<VectorField>,
    tol: f64,
    max_iter: usize,
) -> Result<MildOutcome> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    if max_iter == 0 {
        return Err(Error::param("max_iter", "must be ≥ 1"));
    }
    let d = grid.dim();
    let np = grid.points();
    let nt = times.len();
    let last = nt - 1;

    // |ξ|² table
    let xi = grid.wavenumbers();
    let mut xi2 = vec![0.0f64; np];
    grid.for_each_node(|p, k| {
        let mut s = 0.0;
        for a in 0..d {
            s += xi[k[a]] * xi[k[a]];
        }
        xi2[p] = s;
    });

    let psi_hat: Vec<Vec<Complex64>> = psi.components().iter().map(|c| forward(grid, c)).collect();

    // initial iterate: pure heat flow of ψ
    let mut u: Vec<VectorField> = times
        .iter()
        .map(|&t| heat_convolve(psi, (times[last] - t) * 1.0, nu))
        .collect::<Result<_>>()?;

    let scale_floor = l2_norm(psi).max(1e-14);
    let mut history = Vec::new();

    for iter in 1..=max_iter {
        // F at every instant ≥ 1 (right-endpoint nodes), in Fourier
        let mut f_hat: Vec<Option<Vec<Vec<Complex64>>>> = vec![None; nt];
        for k in 1..nt {
            let f = nonlinearity(k, &u[k])?;
            f_hat[k] = Some(f.components().iter().map(|c| forward(grid, c)).collect());
        }

        // backward semigroup sweep
        let mut acc: Vec<Vec<Complex64>> = psi_hat.clone();
        let mut new_u: Vec<Option<VectorField>> = vec![None; nt];
        new_u[last] = Some(psi.clone());
        for k in (0..last).rev() {
            let dt = times[k + 1] - times[k];
            let fk = f_hat[k + 1].as_ref().unwrap();
            for a in 0..d {
                let fa = &fk[a];
                let aa = &mut acc[a];
                for p in 0..np {
                    let e = (-nu * dt * xi2[p] / 2.0).exp();
                    aa[p] = (aa[p] + dt * fa[p]) * e;
                }
            }
            let comps: Vec<Vec<f64>> = acc.iter().map(|s| inverse_real(grid, s.clone())).collect();
            new_u[k] = Some(VectorField::from_components(grid, comps)?);
        }

        // sup-over-time relative L² update
        let mut residual = 0.0f64;
        for k in 0..nt {
            let nk = new_u[k].as_ref().unwrap();
            let diff = nk.sub(&u[k])?;
            let denom = l2_norm(&u[k]).max(scale_floor);
            residual = residual.max(l2_norm(&diff) / denom);
        }
        history.push(residual);
        u = new_u.into_iter().map(|f| f.unwrap()).collect();

        if residual < tol {
            return Ok(MildOutcome {
                u: SpaceTimeField::new(times.to_vec(), u)?,
                iterations: iter,
                residual_history: history,
            });
        }
        // the local-in-time theory predicts divergence past the contraction
        // horizon; surface it instead of masking it
        let blowup = !residual.is_finite() || residual > 1e6 * (history[0] + 1.0);
        if blowup {
            return Err(Error::SolverDiverged {
                iterations: iter,
                last_residual: residual,
                residual_history: history,
            });
        }
    }
    let last_res = *history.last().unwrap();
    Err(Error::SolverDiverged {
        iterations: max_iter,
        last_residual: last_res,
        residual_history: history,
    })
}

/// Result of a converged mild solve.
#[derive(Debug, Clone)]
pub struct BurgersSolution {
    pub u: SpaceTimeField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
}

/// Solve the PDE of Burgers' type by Picard iteration on the mild map.
pub fn solve_burgers(problem: &BurgersProblem, tol: f64, max_iter: usize) -> Result<BurgersSolution> {
    let out = mild_fixed_point(
        problem.grid(),
        &problem.time_grid,
        &problem.psi,
        problem.nu,
        |k, u| problem.nonlinearity(k, u),
        tol,
        max_iter,
    )?;
    Ok(BurgersSolution {
        u: out.u,
        iterations: out.iterations,
        residual_history: out.residual_history,
    })
}

/// Evaluate the mild-map residual of a candidate space-time field with a
/// higher-order (Simpson) time rule: ‖RHS(u) − u‖ relative, sup over time.
/// Diagnoses how well `u` solves the continuum integral equation, not the
/// solver's own first-order discretization.
pub fn mild_residual(problem: &BurgersProblem, u: &SpaceTimeField) -> Result<f64> {
    let grid = problem.grid();
    grid.same_as(u.grid())?;
    let times = u.times();
    let nt = times.len();
    let last = nt - 1;
    let big_t = times[last];

    let f_all: Vec<VectorField> = (0..nt)
        .map(|k| problem.nonlinearity(k, u.snapshot(k)))
        .collect::<Result<_>>()?;

    let mut worst = 0.0f64;
    let scale = l2_norm(&problem.psi).max(1e-14);
    for k in 0..last {
        // RHS(t_k) = H(T−t_k)ψ + ∫_{t_k}^T H(s−t_k) F(s) ds, Simpson in s
        let mut rhs = heat_convolve(&problem.psi, big_t - times[k], problem.nu)?;
        let weights = quadrature_weights(&times[k..]);
        for (off, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let l = k + off;
            let mut term = heat_convolve(&f_all[l], times[l] - times[k], problem.nu)?;
            term.scale(*w);
            rhs.axpy(1.0, &term);
        }
        let diff = rhs.sub(u.snapshot(k))?;
        worst = worst.max(l2_norm(&diff) / l2_norm(u.snapshot(k)).max(scale));
    }
    Ok(worst)
}

/// Composite Simpson weights on a uniform grid (trapezoid on the leading
/// interval when the interval count is odd; plain trapezoid when the grid
/// is not uniform).
pub(crate) fn quadrature_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    let h = times[1] - times[0];
    let uniform = times.windows(2).all(|p| ((p[1] - p[0]) - h).abs() < 1e-12 * h.abs());
    if !uniform || n == 2 {
        for k in 0..n - 1 {
            let dt = times[k + 1] - times[k];
            w[k] += dt / 2.0;
            w[k + 1] += dt / 2.0;
        }
        return w;
    }
    let mut start = 0;
    if (n - 1) % 2 == 1 {
        // odd interval count: trapezoid on the first interval
        w[0] += h / 2.0;
        w[1] += h / 2.0;
        start = 1;
    }
    let mut k = start;
    while k + 2 < n {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
        k += 2;
    }
    w
}

// ---------------------------------------------------------------------------
// Cole–Hopf oracle (1D classical Burgers)
// ---------------------------------------------------------------------------

/// Exact solution of the 1D backward Burgers equation
/// ∂_t u + (ν/2)u″ + u u′ = 0, u(T) = ψ, via time reversal to the forward
/// equation and the Cole–Hopf substitution: u(t,x) = ν·∂_x ln w(T−t, x),
/// where w solves ∂_τ w = (ν/2) w″ from w(0) = exp(∫ψ/ν).
pub fn cole_hopf_oracle(
    psi: &ScalarField,
    nu: f64,
    time_grid: &[f64],
) -> Result<SpaceTimeField> {
    let grid = psi.grid().clone();
    if grid.dim() != 1 {
        return Err(Error::param("psi", "Cole–Hopf oracle is 1D"));
    }
    validate_time_grid(time_grid)?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::param("nu", format!("must be positive, got {nu}")));
    }
    // band-limit check: reject data with energy in the top third of modes
    let spec = forward(&grid, psi.values());
    let n = grid.n();
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let high: f64 = (0..n)
        .filter(|&k| grid.freq(k).unsigned_abs() as usize > n / 3)
        .map(|k| spec[k].norm_sqr())
        .sum();
    if total > 0.0 && high > 1e-20 * total {
        return Err(Error::BandLimit(format!(
            "terminal data carries {:.3e} of its energy above mode n/3",
            high / total
        )));
    }
    // periodic Cole–Hopf needs mean-zero data
    let mean = psi.mean();
    if mean.abs() > 1e-10 * sup_norm_scalar(psi).max(1e-300) {
        return Err(Error::param("psi", format!("must be mean-zero, mean = {mean}")));
    }

    // antiderivative Ψ with Ψ̂(0) = 0
    let xi = grid.wavenumbers_deriv();
    let mut anti = spec;
    for (k, v) in anti.iter_mut().enumerate() {
        if xi[k] != 0.0 {
            // divide by iξ
            let z = *v;
            *v = Complex64::new(z.im / xi[k], -z.re / xi[k]);
        } else {
            *v = Complex64::default();
        }
    }
    let anti = inverse_real(&grid, anti);

    let w0: Vec<f64> = anti.iter().map(|&a| (a / nu).exp()).collect();
    let w0 = VectorField::from_components(&grid, vec![w0])?;

    let big_t = *time_grid.last().unwrap();
    let mut fields = Vec::with_capacity(time_grid.len());
    for &t in time_grid {
        let tau = big_t - t;
        let w = heat_convolve(&w0, tau, nu)?;
        let wx = spectral_derivative(&ScalarField::from_values(&grid, w.component(0).to_vec())?, 0);
        let mut vals = vec![0.0; grid.points()];
        for p in 0..vals.len() {
            vals[p] = nu * wx.values()[p] / w.component(0)[p];
        }
        fields.push(VectorField::from_components(&grid, vec![vals])?);
    }
    SpaceTimeField::new(time_grid.to_vec(), fields)
}

// ---------------------------------------------------------------------------
// FBSDE consistency check
// ---------------------------------------------------------------------------

/// Statistics of the forward-backward path simulation against a PDE
/// solution: the conditional-expectation test E[ψ(X_T) + ∫(φ+cY)] = u(t,·)
/// with the ∇u martingale term as control variate, and the pathwise
/// terminal residual of the reconstructed backward process.
#[derive(Debug, Clone)]
pub struct FbsdeReport {
    /// Fraction of (node, component) pairs with |mean − u| ≤ 3·stderr + allowance.
    pub within_three_sigma: f64,
    /// RMS of the z-scores (gap over stderr, allowance subtracted at zero floor).
    pub z_rms: f64,
    /// Mean over paths/nodes of |Ỹ_T − ψ(X_T)| for the reconstructed Y.
    pub pathwise_residual: f64,
    /// First-order discretization allowance in the comparisons.
    pub dt: f64,
    pub paths: usize,
}

/// Simulate dX = (b+αu)ds + √ν dW from every `stride`-th grid node at the
/// first stored instant and verify that the FBSDE representation
/// reproduces `u` there.  Common random numbers: one ΔW sequence per path
/// index, shared across start nodes.
pub fn fbsde_check(
    problem: &BurgersProblem,
    u: &SpaceTimeField,
    n_paths: usize,
    stride: usize,
    stream: RngStream,
) -> Result<FbsdeReport> {
    use rand_distr::{Distribution, StandardNormal};

    let grid = problem.grid().clone();
    grid.same_as(u.grid())?;
    if n_paths < 2 {
        return Err(Error::param("n_paths", "need at least 2 paths"));
    }
    let stride = stride.max(1);
    let d = grid.dim();
    let times = u.times().to_vec();
    let nt = times.len();
    let nu = problem.nu;
    let sqrt_nu = nu.sqrt();

    // start nodes
    let mut starts: Vec<[f64; 3]> = Vec::new();
    let mut start_flat: Vec<usize> = Vec::new();
    grid.for_each_node(|p, idx| {
        if idx[..d].iter().all(|i| i % stride == 0) {
            starts.push(grid.node(&idx[..d]));
            start_flat.push(p);
        }
    });
    let ns = starts.len();

    // Jacobians of u per instant for the control variate
    let grads: Vec<TensorField> = u.fields().iter().map(jacobian).collect();

    let mut sum = vec![[0.0f64; 3]; ns];
    let mut sumsq = vec![[0.0f64; 3]; ns];
    let mut path_resid_sum = 0.0f64;

    let mut positions = vec![[0.0f64; 3]; ns];
    let mut payload = vec![[0.0f64; 3]; ns];
    let mut y_rec = vec![[0.0f64; 3]; ns];

    for m in 0..n_paths {
        let mut rng = stream.child(m as u64).rng();
        positions.copy_from_slice(&starts);
        for pl in payload.iter_mut() {
            *pl = [0.0; 3];
        }
        // reconstructed backward process starts at u(t_0, x)
        for (s, y) in start_flat.iter().zip(y_rec.iter_mut()) {
            for a in 0..d {
                y[a] = u.snapshot(0).component(a)[*s];
            }
        }

        for k in 0..nt - 1 {
            let dt = times[k + 1] - times[k];
            let mut dw = [0.0f64; 3];
            for w in dw.iter_mut().take(d) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *w = z * dt.sqrt();
            }
            let uk = u.snapshot(k);
            let gk = &grads[k];
            let bk = problem.drift.as_ref().map(|b| &b[k]);
            let ck = problem.zeroth_order.as_ref().map(|c| &c[k]);
            let fk = problem.forcing.as_ref().map(|f| &f[k]);

            for (i, x) in positions.iter_mut().enumerate() {
                let st = Stencil::locate(&grid, x);
                let mut uval = [0.0f64; 3];
                for a in 0..d {
                    uval[a] = eval_component(&grid, uk.component(a), &st);
                }
                // drift = b + αu
                let mut v = [0.0f64; 3];
                for a in 0..d {
                    v[a] = problem.alpha * uval[a];
                }
                if let Some(b) = bk {
                    for a in 0..d {
                        v[a] += eval_component(&grid, b.component(a), &st);
                    }
                }
                // generator φ + c·Y, once with Y = u(s,X) for the payload
                // and once with the reconstructed Y for the pathwise check
                let mut gen_u = [0.0f64; 3];
                let mut gen_y = [0.0f64; 3];
                if let Some(f) = fk {
                    for a in 0..d {
                        let fv = eval_component(&grid, f.component(a), &st);
                        gen_u[a] += fv;
                        gen_y[a] += fv;
                    }
                }
                if let Some(c) = ck {
                    for a in 0..d {
                        for j in 0..d {
                            let cv = eval_component(&grid, c.entry(a, j), &st);
                            gen_u[a] += cv * uval[j];
                            gen_y[a] += cv * y_rec[i][j];
                        }
                    }
                }
                // martingale term √ν·Z·ΔW with Z = ∇u
                let mut zdw = [0.0f64; 3];
                for a in 0..d {
                    for j in 0..d {
                        zdw[a] += eval_component(&grid, gk.entry(a, j), &st) * dw[j];
                    }
                }
                for a in 0..d {
                    payload[i][a] += gen_u[a] * dt - sqrt_nu * zdw[a];
                    // Y_{k+1} = Y_k − (φ + cY)dt + √ν Z ΔW
                    y_rec[i][a] += -gen_y[a] * dt + sqrt_nu * zdw[a];
                    x[a] += v[a] * dt + sqrt_nu * dw[a];
                }
            }
        }

        // terminal payoff ψ(X_T) and pathwise residual
        for (i, x) in positions.iter().enumerate() {
            let st = Stencil::locate(&grid, x);
            for a in 0..d {
                let psi_end = eval_component(&grid, problem.psi.component(a), &st);
                let val = psi_end + payload[i][a];
                sum[i][a] += val;
                sumsq[i][a] += val * val;
                path_resid_sum += (y_rec[i][a] - psi_end).abs();
            }
        }
    }

    let m = n_paths as f64;
    let dt = (times[nt - 1] - times[0]) / (nt - 1) as f64;
    let scale = crate::fields::sup_norm(&problem.psi).max(1e-14);
    let allowance = 2.0 * scale * dt;
    let mut within = 0usize;
    let mut z2 = 0.0f64;
    let mut count = 0usize;
    for i in 0..ns {
        for a in 0..d {
            let mean = sum[i][a] / m;
            let var = ((sumsq[i][a] - m * mean * mean) / (m - 1.0)).max(0.0);
            let se = (var / m).sqrt().max(1e-14);
            let truth = u.snapshot(0).component(a)[start_flat[i]];
            let gap = (mean - truth).abs();
            if gap <= 3.0 * se + allowance {
                within += 1;
            }
            let excess = (gap - allowance).max(0.0);
            z2 += (excess / se) * (excess / se);
            count += 1;
        }
    }
    Ok(FbsdeReport {
        within_three_sigma: within as f64 / count as f64,
        z_rms: (z2 / count as f64).sqrt(),
        pathwise_residual: path_resid_sum / (m * ns as f64 * d as f64),
        dt,
        paths: n_paths,
    })
}

// ---------------------------------------------------------------------------
// Maximum principle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct MaxPrincipleViolation {
    pub time: f64,
    pub component: usize,
    pub excess: f64,
    pub one_sided: bool,
}

#[derive(Debug, Clone)]
pub struct MaxPrincipleReport {
    pub violations: Vec<MaxPrincipleViolation>,
    pub tolerance: f64,
    pub pass: bool,
}

/// For c ≡ 0: for every stored time and component j,
///   sup_x u^j(t,x) ≤ sup_x ψ^j + ∫_t^T esssup_x φ^j(s) ds
/// and the same with absolute values; the time integral uses the solver's
/// right-endpoint rule so constant data saturates the bound exactly.
pub fn max_principle_check(
    problem: &BurgersProblem,
    u: &SpaceTimeField,
    tol_rel: f64,
) -> Result<MaxPrincipleReport> {
    if problem.zeroth_order.is_some() {
        return Err(Error::param("problem", "maximum principle requires c ≡ 0"));
    }
    let grid = problem.grid();
    grid.same_as(u.grid())?;
    let d = grid.dim();
    let times = u.times();
    let nt = times.len();

    let comp_max = |f: &VectorField, a: usize| -> (f64, f64) {
        let (lo, hi) = crate::fields::component_range(f, a);
        (hi, lo.abs().max(hi.abs()))
    };

    let mut violations = Vec::new();
    let mut scale = 0.0f64;
    for a in 0..d {
        scale = scale.max(comp_max(&problem.psi, a).1);
    }
    if let Some(phi) = &problem.forcing {
        for f in phi {
            for a in 0..d {
                scale = scale.max(comp_max(f, a).1);
            }
        }
    }
    let tol = tol_rel * scale.max(1e-300);

    for a in 0..d {
        let (psi_max, psi_abs) = comp_max(&problem.psi, a);
        // suffix sums of Δt·sup φ (right endpoint)
        let mut bound_one = vec![0.0f64; nt];
        let mut bound_abs = vec![0.0f64; nt];
        if let Some(phi) = &problem.forcing {
            for k in (0..nt - 1).rev() {
                let dt = times[k + 1] - times[k];
                let (hi, abs) = comp_max(&phi[k + 1], a);
                bound_one[k] = bound_one[k + 1] + dt * hi.max(0.0);
                bound_abs[k] = bound_abs[k + 1] + dt * abs;
            }
        }
        for k in 0..nt {
            let (u_max, u_abs) = comp_max(u.snapshot(k), a);
            let excess_one = u_max - (psi_max + bound_one[k]);
            if excess_one > tol {
                violations.push(MaxPrincipleViolation {
                    time: times[k],
                    component: a,
                    excess: excess_one,
                    one_sided: true,
                });
            }
            let excess_abs = u_abs - (psi_abs + bound_abs[k]);
            if excess_abs > tol {
                violations.push(MaxPrincipleViolation {
                    time: times[k],
                    component: a,
                    excess: excess_abs,
                    one_sided: false,
                });
            }
        }
    }
    Ok(MaxPrincipleReport {
        pass: violations.is_empty(),
        violations,
        tolerance: tol,
    })
}

// ---------------------------------------------------------------------------
// Energy identity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EnergyReport {
    /// (time, relative residual) per stored instant except the terminal one.
    pub residuals: Vec<(f64, f64)>,
    pub max_residual: f64,
}

/// H^m energy identity of the solution:
/// ‖u(t)‖²_m = ‖ψ‖²_m + 2∫⟨Z(b+αu), u⟩ + 2∫⟨cu+φ, u⟩ − ν∫‖Z‖²_m,
/// pairings realized as the m-weighted spectral inner product and the time
/// integrals by composite Simpson on the stored grid.
pub fn energy_identity_check(
    problem: &BurgersProblem,
    u: &SpaceTimeField,
    m: u32,
) -> Result<EnergyReport> {
    let grid = problem.grid();
    grid.same_as(u.grid())?;
    let d = grid.dim();
    let times = u.times();
    let nt = times.len();

    // pointwise integrands at every instant
    let mut g = vec![0.0f64; nt];
    for k in 0..nt {
        let uk = u.snapshot(k);
        // advection pairing 2⟨((b+αu)·∇)u, u⟩_m
        let mut v = match &problem.drift {
            Some(b) => b[k].clone(),
            None => VectorField::zeros(grid),
        };
        if problem.alpha != 0.0 {
            v.axpy(problem.alpha, uk);
        }
        let adv = advect(&v, uk)?;
        g[k] += 2.0 * sobolev_inner(&adv, uk, m)?;
        // source pairing 2⟨cu + φ, u⟩_m
        let mut src = VectorField::zeros(grid);
        if let Some(c) = &problem.zeroth_order {
            let ck = &c[k];
            for i in 0..d {
                let si = src.component_mut(i);
                for j in 0..d {
                    let cij = ck.entry(i, j);
                    let uj = uk.component(j);
                    for p in 0..si.len() {
                        si[p] += cij[p] * uj[p];
                    }
                }
            }
        }
        if let Some(phi) = &problem.forcing {
            src.axpy(1.0, &phi[k]);
        }
        g[k] += 2.0 * sobolev_inner(&src, uk, m)?;
        // viscous dissipation −ν‖∇u‖²_m
        let z = jacobian(uk);
        let zn = sobolev_norm_tensor(&z, m);
        g[k] -= problem.nu * zn * zn;
    }

    let psi_m = sobolev_norm(&problem.psi, m);
    let mut residuals = Vec::with_capacity(nt - 1);
    let mut max_res = 0.0f64;
    for k in 0..nt - 1 {
        let w = quadrature_weights(&times[k..]);
        let integral: f64 = w.iter().zip(&g[k..]).map(|(wi, gi)| wi * gi).sum();
        let lhs = sobolev_norm(u.snapshot(k), m).powi(2);
        let rhs = psi_m * psi_m + integral;
        let res = (lhs - rhs).abs() / lhs.max(psi_m * psi_m).max(1e-300);
        residuals.push((times[k], res));
        max_res = max_res.max(res);
    }
    Ok(EnergyReport {
        residuals,
        max_residual: max_res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sup_norm;
    use crate::presets::{random_bandlimited_vector, sine_1d};

    #[test]
    fn heat_case_matches_semigroup() {
        // α = 0, b = 0, c = 0, φ = 0 ⇒ u(t) = H(T−t)∗ψ
        let grid = Grid::two_pi(2, 16).unwrap();
        let psi = crate::presets::taylor_green(&grid).unwrap();
        let times = uniform_time_grid(0.0, 1.0, 20);
        let problem = BurgersProblem::new(psi.clone(), 0.0, 0.3, times.clone()).unwrap();
        let sol = solve_burgers(&problem, 1e-12, 30).unwrap();
        // pure heat: the first Picard iterate is already the fixed point
        assert!(sol.iterations <= 3, "iterations = {}", sol.iterations);
        for (k, &t) in times.iter().enumerate() {
            let oracle = heat_convolve(&psi, 1.0 - t, 0.3).unwrap();
            let diff = sol.u.snapshot(k).sub(&oracle).unwrap();
            assert!(l2_norm(&diff) < 1e-11);
        }
    }

    #[test]
    fn zero_data_solves_to_zero() {
        let grid = Grid::two_pi(1, 8).unwrap();
        let psi = VectorField::zeros(&grid);
        let problem =
            BurgersProblem::new(psi, 1.0, 0.2, uniform_time_grid(0.0, 1.0, 4)).unwrap();
        let sol = solve_burgers(&problem, 1e-10, 5).unwrap();
        for f in sol.u.fields() {
            assert_eq!(l2_norm(f), 0.0);
        }
    }

    #[test]
    fn cole_hopf_zero_and_linearization() {
        let grid = Grid::two_pi(1, 64).unwrap();
        let zero = ScalarField::zeros(&grid);
        let times = uniform_time_grid(0.0, 1.0, 10);
        let sol = cole_hopf_oracle(&zero, 0.2, &times).unwrap();
        for f in sol.fields() {
            assert!(l2_norm(f) < 1e-14);
        }
        // small amplitude: u(t) ≈ a e^{−ν(T−t)/2·k²} sin(kx) + O(a²)
        let a = 1e-3;
        let psi = sine_1d(&grid, a, 1).unwrap();
        let sol = cole_hopf_oracle(&psi, 0.2, &times).unwrap();
        let k2 = 1.0;
        for (k, &t) in times.iter().enumerate() {
            let amp = a * (-0.2 * k2 * (1.0 - t) / 2.0).exp();
            let lin = VectorField::from_fn(&grid, |x| vec![amp * (x[0]).sin()]);
            let diff = sol.snapshot(k).sub(&lin).unwrap();
            assert!(sup_norm(&diff) < 20.0 * a * a, "gap {}", sup_norm(&diff));
        }
    }

    #[test]
    fn cole_hopf_rejects_rough_or_biased_data() {
        let grid = Grid::two_pi(1, 32).unwrap();
        // rough: populate a high mode
        let rough = ScalarField::from_fn(&grid, |x| (14.0 * x[0]).sin());
        assert!(cole_hopf_oracle(&rough, 0.2, &uniform_time_grid(0.0, 1.0, 4)).is_err());
        let biased = ScalarField::from_fn(&grid, |x| 0.5 + (x[0]).sin());
        assert!(cole_hopf_oracle(&biased, 0.2, &uniform_time_grid(0.0, 1.0, 4)).is_err());
    }

    #[test]
    fn cole_hopf_self_consistency_in_mild_residual() {
        let grid = Grid::two_pi(1, 512).unwrap();
        let psi = sine_1d(&grid, 0.3, 1).unwrap();
        let nu = 0.2;
        let times = uniform_time_grid(0.0, 1.0, 200);
        let oracle = cole_hopf_oracle(&psi, nu, &times).unwrap();
        let psi_v = VectorField::from_components(&grid, vec![psi.values().to_vec()]).unwrap();
        let problem = BurgersProblem::new(psi_v, 1.0, nu, times).unwrap();
        let res = mild_residual(&problem, &oracle).unwrap();
        assert!(res < 1e-6, "mild residual {res}");
    }

    #[test]
    fn solver_matches_cole_hopf() {
        let grid = Grid::two_pi(1, 256).unwrap();
        let nu = 0.2;
        let psi = sine_1d(&grid, 0.25, 1).unwrap();
        let times = uniform_time_grid(0.0, 1.0, 200);
        let oracle = cole_hopf_oracle(&psi, nu, &times).unwrap();
        let psi_v = VectorField::from_components(&grid, vec![psi.values().to_vec()]).unwrap();
        let problem = BurgersProblem::new(psi_v, 1.0, nu, times).unwrap();
        let sol = solve_burgers(&problem, 1e-10, 60).unwrap();
        let mut worst = 0.0f64;
        for k in 0..oracle.len() {
            let diff = sol.u.snapshot(k).sub(oracle.snapshot(k)).unwrap();
            worst = worst.max(sup_norm(&diff));
        }
        assert!(worst < 1e-3, "L∞ gap vs Cole–Hopf: {worst}");
    }

    #[test]
    fn picard_iterations_shrink_with_horizon() {
        let grid = Grid::two_pi(1, 64).unwrap();
        let psi = sine_1d(&grid, 0.8, 1).unwrap();
        let psi_v = VectorField::from_components(&grid, vec![psi.values().to_vec()]).unwrap();
        let mut iters = Vec::new();
        for steps in [64usize, 32, 16] {
            let horizon = steps as f64 / 64.0;
            let times = uniform_time_grid(0.0, horizon, steps);
            let problem = BurgersProblem::new(psi_v.clone(), 1.0, 0.3, times).unwrap();
            let sol = solve_burgers(&problem, 1e-10, 80).unwrap();
            iters.push(sol.iterations);
        }
        assert!(
            iters[0] >= iters[1] && iters[1] >= iters[2],
            "iterations should not increase as T−t shrinks: {iters:?}"
        );
    }

    #[test]
    fn restart_reproduces_earlier_times() {
        // semigroup property of the mild map: solve on [0,1], restart from
        // u(t₁) with horizon t₁, recover u(t) for t < t₁
        let grid = Grid::two_pi(1, 64).unwrap();
        let psi = sine_1d(&grid, 0.3, 1).unwrap();
        let psi_v = VectorField::from_components(&grid, vec![psi.values().to_vec()]).unwrap();
        let times = uniform_time_grid(0.0, 1.0, 64);
        let problem = BurgersProblem::new(psi_v, 1.0, 0.3, times.clone()).unwrap();
        let sol = solve_burgers(&problem, 1e-12, 60).unwrap();
        let k1 = 32;
        let restart_times: Vec<f64> = times[..=k1].to_vec();
        let problem2 =
            BurgersProblem::new(sol.u.snapshot(k1).clone(), 1.0, 0.3, restart_times).unwrap();
        let sol2 = solve_burgers(&problem2, 1e-12, 60).unwrap();
        for k in 0..=k1 {
            let diff = sol2.u.snapshot(k).sub(sol.u.snapshot(k)).unwrap();
            assert!(l2_norm(&diff) < 1e-6, "restart mismatch at k={k}");
        }
    }

    #[test]
    fn max_principle_zero_forcing_and_constant_forcing() {
        let grid = Grid::two_pi(2, 16).unwrap();
        let psi = crate::presets::taylor_green(&grid).unwrap();
        let times = uniform_time_grid(0.0, 1.0, 40);
        let problem = BurgersProblem::new(psi.clone(), 1.0, 0.4, times.clone()).unwrap();
        let sol = solve_burgers(&problem, 1e-10, 60).unwrap();
        let rep = max_principle_check(&problem, &sol.u, 1e-8).unwrap();
        assert!(rep.pass, "violations: {:?}", rep.violations);

        // constant forcing (1,0): sup u¹(t) ≤ sup ψ¹ + (T−t)
        let phi: Vec<VectorField> = times
            .iter()
            .map(|_| VectorField::from_fn(&grid, |_| vec![1.0, 0.0]))
            .collect();
        let problem = BurgersProblem::new(psi.clone(), 0.0, 0.4, times.clone())
            .unwrap()
            .with_forcing(phi)
            .unwrap();
        let sol = solve_burgers(&problem, 1e-10, 60).unwrap();
        let rep = max_principle_check(&problem, &sol.u, 1e-8).unwrap();
        assert!(rep.pass, "violations: {:?}", rep.violations);
        // constant forcing shifts the field by exactly (T−t)·(1,0) on top
        // of the heat evolution: u¹(0) = H(1)∗ψ¹ + 1
        let (_, hi) = crate::fields::component_range(sol.u.snapshot(0), 0);
        let heat_sup = {
            let h = heat_convolve(&psi, 1.0, 0.4).unwrap();
            crate::fields::component_range(&h, 0).1
        };
        assert!((hi - (heat_sup + 1.0)).abs() < 1e-6, "hi {hi} vs {heat_sup}+1");
    }

    #[test]
    fn max_principle_random_batch() {
        let grid = Grid::two_pi(2, 16).unwrap();
        let times = uniform_time_grid(0.0, 0.5, 20);
        for seed in 0..5u64 {
            for alpha in [0.0, 1.0] {
                let psi = random_bandlimited_vector(&grid, 4, 0.5, &RngStream::new(900 + seed));
                let phi: Vec<VectorField> = times
                    .iter()
                    .map(|_| random_bandlimited_vector(&grid, 3, 0.3, &RngStream::new(950 + seed)))
                    .collect();
                let problem = BurgersProblem::new(psi, alpha, 0.4, times.clone())
                    .unwrap()
                    .with_forcing(phi)
                    .unwrap();
                let sol = solve_burgers(&problem, 1e-10, 80).unwrap();
                let rep = max_principle_check(&problem, &sol.u, 1e-8).unwrap();
                assert!(rep.pass, "seed {seed} α {alpha}: {:?}", rep.violations);
            }
        }
    }

    #[test]
    fn energy_identity_heat_case() {
        let grid = Grid::two_pi(1, 256).unwrap();
        let psi = sine_1d(&grid, 0.5, 2).unwrap();
        let psi_v = VectorField::from_components(&grid, vec![psi.values().to_vec()]).unwrap();
        let times = uniform_time_grid(0.0, 1.0, 200);
        let problem = BurgersProblem::new(psi_v, 0.0, 0.3, times).unwrap();
        let sol = solve_burgers(&problem, 1e-12, 10).unwrap();
        let rep = energy_identity_check(&problem, &sol.u, 0).unwrap();
        assert!(rep.max_residual < 1e-6, "heat-case energy residual {}", rep.max_residual);
        // trivial case: ψ = 0
        let zero = VectorField::zeros(&grid);
        let problem =
            BurgersProblem::new(zero, 0.0, 0.3, uniform_time_grid(0.0, 1.0, 8)).unwrap();
        let sol = solve_burgers(&problem, 1e-10, 5).unwrap();
        let rep = energy_identity_check(&problem, &sol.u, 0).unwrap();
        assert!(rep.max_residual == 0.0);
    }

    #[test]
    fn energy_identity_refines_for_nonlinear_case() {
        let grid_c = Grid::two_pi(1, 64).unwrap();
        let grid_f = Grid::two_pi(1, 128).unwrap();
        let nu = 0.25;
        let run = |grid: &Grid, steps: usize| -> f64 {
            let psi = sine_1d(grid, 0.4, 1).unwrap();
            let psi_v = VectorField::from_components(grid, vec![psi.values().to_vec()]).unwrap();
            let times = uniform_time_grid(0.0, 1.0, steps);
            let problem = BurgersProblem::new(psi_v, 1.0, nu, times).unwrap();
            let sol = solve_burgers(&problem, 1e-11, 80).unwrap();
            energy_identity_check(&problem, &sol.u, 1).unwrap().max_residual
        };
        let coarse = run(&grid_c, 50);
        let fine = run(&grid_f, 100);
        assert!(
            fine < coarse / 1.8,
            "energy residual should at least halve: {coarse} -> {fine}"
        );
    }

    #[test]
    fn fbsde_check_heat_case() {
        let grid = Grid::two_pi(1, 32).unwrap();
        let psi = sine_1d(&grid, 0.5, 1).unwrap();
        let psi_v = VectorField::from_components(&grid, vec![psi.values().to_vec()]).unwrap();
        let times = uniform_time_grid(0.0, 1.0, 50);
        let problem = BurgersProblem::new(psi_v, 0.0, 0.3, times).unwrap();
        let sol = solve_burgers(&problem, 1e-11, 10).unwrap();
        let rep = fbsde_check(&problem, &sol.u, 400, 2, RngStream::new(33)).unwrap();
        assert!(
            rep.within_three_sigma > 0.95,
            "within 3σ: {}",
            rep.within_three_sigma
        );
        assert!(rep.pathwise_residual < 0.05, "pathwise {}", rep.pathwise_residual);
    }

    #[test]
    fn fbsde_check_nonlinear_burgers_vs_oracle_field() {
        // the representation check against the Cole–Hopf field itself
        let grid = Grid::two_pi(1, 64).unwrap();
        let nu = 0.25;
        let psi = sine_1d(&grid, 0.3, 1).unwrap();
        let times = uniform_time_grid(0.0, 1.0, 100);
        let oracle = cole_hopf_oracle(&psi, nu, &times).unwrap();
        let psi_v = VectorField::from_components(&grid, vec![psi.values().to_vec()]).unwrap();
        let problem = BurgersProblem::new(psi_v, 1.0, nu, times).unwrap();
        let rep = fbsde_check(&problem, &oracle, 2_000, 4, RngStream::new(55)).unwrap();
        assert!(
            rep.within_three_sigma > 0.95,
            "within 3σ: {}",
            rep.within_three_sigma
        );
        assert!(rep.pathwise_residual < 0.05, "pathwise {}", rep.pathwise_residual);
    }

    #[test]
    fn fbsde_check_linear_drift_case() {
        // α = 0 with nonzero b: the path simulation must still reproduce u
        let grid = Grid::two_pi(1, 32).unwrap();
        let psi = sine_1d(&grid, 0.4, 1).unwrap();
        let psi_v = VectorField::from_components(&grid, vec![psi.values().to_vec()]).unwrap();
        let times = uniform_time_grid(0.0, 1.0, 50);
        let b: Vec<VectorField> = times
            .iter()
            .map(|_| VectorField::from_fn(&grid, |x| vec![0.3 * (x[0]).cos()]))
            .collect();
        let problem = BurgersProblem::new(psi_v, 0.0, 0.3, times)
            .unwrap()
            .with_drift(b)
            .unwrap();
        let sol = solve_burgers(&problem, 1e-11, 40).unwrap();
        let rep = fbsde_check(&problem, &sol.u, 400, 2, RngStream::new(44)).unwrap();
        assert!(
            rep.within_three_sigma > 0.95,
            "within 3σ: {}",
            rep.within_three_sigma
        );
    }

    #[test]
    fn quadrature_weights_integrate_smooth_functions() {
        let times = uniform_time_grid(0.0, 1.0, 20);
        let w = quadrature_weights(&times);
        let int: f64 = w
            .iter()
            .zip(&times)
            .map(|(wi, &t)| wi * (2.0 * t).exp())
            .sum();
        let exact = ((2.0f64).exp() - 1.0) / 2.0;
        assert!((int - exact).abs() < 1e-5 * exact);
    }
}
