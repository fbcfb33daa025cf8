//! FFT-backed differential and spectral operators.
//!
//! All fields are stored in physical space; transforms happen on demand.
//! Plans are cached per transform length in a thread-local planner.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::field::{ScalarField, TensorField, VectorField};
use super::grid::Grid;
use crate::{Error, Result};

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|cache| {
        cache
            .borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// d-dimensional DFT of `data` in place (unnormalized forward; inverse
/// carries the 1/n^d normalization).
fn fft_nd(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let dim = grid.dim();
    let total = grid.points();
    let fft = plan(n, inverse);
    let mut lane = vec![Complex64::default(); n];

    for axis in 0..dim {
        // stride of `axis` in row-major layout (last axis contiguous)
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process(chunk);
            }
        } else {
            let block = stride * n;
            for b in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = b + inner;
                    for t in 0..n {
                        lane[t] = data[base + t * stride];
                    }
                    fft.process(&mut lane);
                    for t in 0..n {
                        data[base + t * stride] = lane[t];
                    }
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Forward transform of a real array.
pub fn forward(grid: &Grid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(grid, &mut data, false);
    data
}

/// Inverse transform, discarding the (roundoff-level) imaginary part.
pub fn inverse_real(grid: &Grid, mut spectrum: Vec<Complex64>) -> Vec<f64> {
    fft_nd(grid, &mut spectrum, true);
    spectrum.into_iter().map(|c| c.re).collect()
}

/// Visit every Fourier mode: `f(flat_index, [k0,k1,k2])`.
pub fn for_each_mode(grid: &Grid, mut f: impl FnMut(usize, [usize; 3])) {
    grid.for_each_node(|p, idx| f(p, idx));
}

/// Apply a real scalar multiplier `m([k0,k1,k2])` to a real array.
pub fn apply_real_multiplier(grid: &Grid, values: &[f64], m: impl Fn([usize; 3]) -> f64) -> Vec<f64> {
    let mut spec = forward(grid, values);
    for_each_mode(grid, |p, k| {
        spec[p] *= m(k);
    });
    inverse_real(grid, spec)
}

/// ∂/∂x_axis by the Fourier multiplier i·ξ_axis (Nyquist zeroed).
pub fn spectral_derivative(field: &ScalarField, axis: usize) -> ScalarField {
    let grid = field.grid();
    debug_assert!(axis < grid.dim());
    let xi = grid.wavenumbers_deriv();
    let mut spec = forward(grid, field.values());
    for_each_mode(grid, |p, k| {
        let x = xi[k[axis]];
        let v = spec[p];
        spec[p] = Complex64::new(-x * v.im, x * v.re); // i·ξ·v
    });
    ScalarField::from_values(grid, inverse_real(grid, spec)).expect("derivative stays finite")
}

/// Derivative of one raw component array (helper shared by vector ops).
fn derive_component(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let xi = grid.wavenumbers_deriv();
    let mut spec = forward(grid, values);
    for_each_mode(grid, |p, k| {
        let x = xi[k[axis]];
        let v = spec[p];
        spec[p] = Complex64::new(-x * v.im, x * v.re);
    });
    inverse_real(grid, spec)
}

/// ∇s of a scalar field.
pub fn gradient(field: &ScalarField) -> VectorField {
    let grid = field.grid();
    let comps = (0..grid.dim())
        .map(|a| derive_component(grid, field.values(), a))
        .collect();
    VectorField::from_components(grid, comps).expect("gradient stays finite")
}

/// div u = Σ_a ∂_a u^a.
pub fn divergence(u: &VectorField) -> ScalarField {
    let grid = u.grid();
    let mut out = vec![0.0; grid.points()];
    for a in 0..grid.dim() {
        let d = derive_component(grid, u.component(a), a);
        for (o, v) in out.iter_mut().zip(d) {
            *o += v;
        }
    }
    ScalarField::from_values(grid, out).expect("divergence stays finite")
}

/// Δs via the multiplier −|ξ|².
pub fn laplacian(field: &ScalarField) -> ScalarField {
    let grid = field.grid();
    let xi = grid.wavenumbers();
    let values = apply_real_multiplier(grid, field.values(), |k| {
        let mut s = 0.0;
        for a in 0..grid.dim() {
            s += xi[k[a]] * xi[k[a]];
        }
        -s
    });
    ScalarField::from_values(grid, values).expect("laplacian stays finite")
}

/// Componentwise Laplacian of a vector field.
pub fn laplacian_vector(u: &VectorField) -> VectorField {
    let grid = u.grid();
    let xi = grid.wavenumbers();
    let comps = (0..grid.dim())
        .map(|a| {
            apply_real_multiplier(grid, u.component(a), |k| {
                let mut s = 0.0;
                for ax in 0..grid.dim() {
                    s += xi[k[ax]] * xi[k[ax]];
                }
                -s
            })
        })
        .collect();
    VectorField::from_components(grid, comps).expect("laplacian stays finite")
}

/// Jacobi matrix (∇u)_{ij} = ∂_{x_j} u^i.
pub fn jacobian(u: &VectorField) -> TensorField {
    let grid = u.grid();
    let d = grid.dim();
    let mut out = TensorField::zeros(grid);
    for i in 0..d {
        for j in 0..d {
            let dij = derive_component(grid, u.component(i), j);
            out.entry_mut(i, j).copy_from_slice(&dij);
        }
    }
    out
}

/// Row divergence of a tensor: `(div M)_j = Σ_i ∂_i M_{ij}`, so that
/// `div(φ⊗ψ) = (φ·∇)ψ + (div φ)ψ`.
pub fn tensor_divergence(t: &TensorField) -> VectorField {
    let grid = t.grid();
    let d = grid.dim();
    let mut comps = vec![vec![0.0; grid.points()]; d];
    for j in 0..d {
        for i in 0..d {
            let dv = derive_component(grid, t.entry(i, j), i);
            for (o, v) in comps[j].iter_mut().zip(dv) {
                *o += v;
            }
        }
    }
    VectorField::from_components(grid, comps).expect("tensor divergence stays finite")
}

/// Advection (v·∇)u, all derivatives spectral, products pointwise.
pub fn advect(v: &VectorField, u: &VectorField) -> Result<VectorField> {
    v.grid().same_as(u.grid())?;
    let grid = u.grid();
    let d = grid.dim();
    let mut comps = vec![vec![0.0; grid.points()]; d];
    for i in 0..d {
        for j in 0..d {
            let du = derive_component(grid, u.component(i), j);
            let vj = v.component(j);
            for p in 0..du.len() {
                comps[i][p] += vj[p] * du[p];
            }
        }
    }
    VectorField::from_components(grid, comps)
}

/// L² norm of the scalar curl (d=2), the curl vector (d=3) or zero (d=1);
/// diagnostic for gradient fields.
pub fn curl_l2_norm(u: &VectorField) -> f64 {
    let grid = u.grid();
    match grid.dim() {
        1 => 0.0,
        2 => {
            let a = derive_component(grid, u.component(1), 0);
            let b = derive_component(grid, u.component(0), 1);
            let w = grid.cell_volume();
            (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * w).sqrt()
        }
        3 => {
            let mut s = 0.0;
            let pairs = [(2, 1, 1, 2), (0, 2, 2, 0), (1, 0, 0, 1)];
            for (ci, cj, di, dj) in pairs {
                let a = derive_component(grid, u.component(ci), di);
                let b = derive_component(grid, u.component(cj), dj);
                s += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
            (s * grid.cell_volume()).sqrt()
        }
        _ => unreachable!(),
    }
}

/// Discrete L² norm with trapezoid (δ^dim) weights.
pub fn l2_norm_scalar(f: &ScalarField) -> f64 {
    let w = f.grid().cell_volume();
    (f.values().iter().map(|v| v * v).sum::<f64>() * w).sqrt()
}

/// Discrete L² norm of a vector field.
pub fn l2_norm(u: &VectorField) -> f64 {
    let w = u.grid().cell_volume();
    let s: f64 = u
        .components()
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>())
        .sum();
    (s * w).sqrt()
}

/// Discrete Sobolev norm ‖(1−Δ)^{m/2}u‖_{L²} via the multiplier (1+|ξ|²)^m
/// on mode energies.
pub fn sobolev_norm(u: &VectorField, m: u32) -> f64 {
    if m == 0 {
        return l2_norm(u);
    }
    sobolev_norm_components(u.grid(), u.components(), m)
}

pub fn sobolev_norm_scalar(f: &ScalarField, m: u32) -> f64 {
    if m == 0 {
        return l2_norm_scalar(f);
    }
    sobolev_norm_components(f.grid(), std::slice::from_ref(&f.values().to_vec()), m)
}

fn sobolev_norm_components(grid: &Grid, comps: &[Vec<f64>], m: u32) -> f64 {
    let xi = grid.wavenumbers();
    // Parseval: ‖u‖₀² = L^d/n^{2d} Σ_k |û_k|² for the unnormalized DFT.
    let norm_factor = grid.period().powi(grid.dim() as i32) / (grid.points() as f64).powi(2);
    let mut total = 0.0;
    for c in comps {
        let spec = forward(grid, c);
        let mut s = 0.0;
        for_each_mode(grid, |p, k| {
            let mut xi2 = 0.0;
            for a in 0..grid.dim() {
                xi2 += xi[k[a]] * xi[k[a]];
            }
            s += (1.0 + xi2).powi(m as i32) * spec[p].norm_sqr();
        });
        total += s;
    }
    (total * norm_factor).sqrt()
}

/// (1+|ξ|²)^m-weighted spectral inner product ⟨u, v⟩_m; discrete
/// realization of the H^{m−1}/H^{m+1} duality pairing.
pub fn sobolev_inner(u: &VectorField, v: &VectorField, m: u32) -> Result<f64> {
    u.grid().same_as(v.grid())?;
    let grid = u.grid();
    let xi = grid.wavenumbers();
    let norm_factor = grid.period().powi(grid.dim() as i32) / (grid.points() as f64).powi(2);
    let mut total = 0.0;
    for a in 0..grid.dim() {
        let su = forward(grid, u.component(a));
        let sv = forward(grid, v.component(a));
        let mut s = 0.0;
        for_each_mode(grid, |p, k| {
            let mut xi2 = 0.0;
            for ax in 0..grid.dim() {
                xi2 += xi[k[ax]] * xi[k[ax]];
            }
            s += (1.0 + xi2).powi(m as i32) * (su[p] * sv[p].conj()).re;
        });
        total += s;
    }
    Ok(total * norm_factor)
}

/// Sobolev norm of a matrix field (Frobenius over entries).
pub fn sobolev_norm_tensor(t: &TensorField, m: u32) -> f64 {
    sobolev_norm_components(t.grid(), t.entries(), m)
}

/// Max over nodes of the Euclidean magnitude.
pub fn sup_norm(u: &VectorField) -> f64 {
    let mut best: f64 = 0.0;
    for p in 0..u.grid().points() {
        let mut s = 0.0;
        for c in u.components() {
            s += c[p] * c[p];
        }
        best = best.max(s);
    }
    best.sqrt()
}

/// Per-component (min, max) over nodes.
pub fn component_range(u: &VectorField, comp: usize) -> (f64, f64) {
    let c = u.component(comp);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in c {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

pub fn sup_norm_scalar(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0f64, |m, &v| m.max(v.abs()))
}

/// Refine a field onto a grid with `factor`× the resolution by zero-padded
/// spectral interpolation (exact for band-limited data).
pub fn upsample(u: &VectorField, factor: usize) -> Result<VectorField> {
    if factor == 1 {
        return Ok(u.clone());
    }
    if factor == 0 {
        return Err(Error::param("factor", "must be ≥ 1"));
    }
    let grid = u.grid();
    let fine = Grid::new(grid.dim(), grid.n() * factor, grid.period())?;
    let comps = u
        .components()
        .iter()
        .map(|c| upsample_component(grid, &fine, c))
        .collect();
    VectorField::from_components(&fine, comps)
}

pub fn upsample_scalar(f: &ScalarField, factor: usize) -> Result<ScalarField> {
    if factor == 1 {
        return Ok(f.clone());
    }
    let grid = f.grid();
    let fine = Grid::new(grid.dim(), grid.n() * factor, grid.period())?;
    ScalarField::from_values(&fine, upsample_component(grid, &fine, f.values()))
}

fn upsample_component(coarse: &Grid, fine: &Grid, values: &[f64]) -> Vec<f64> {
    let spec = forward(coarse, values);
    let n = coarse.n();
    let nf = fine.n();
    let mut fine_spec = vec![Complex64::default(); fine.points()];
    // copy each coarse mode into the matching fine bin
    coarse.for_each_node(|p, k| {
        let mut fk = [0usize; 3];
        for a in 0..coarse.dim() {
            let f = coarse.freq(k[a]);
            fk[a] = if f >= 0 { f as usize } else { (f + nf as i64) as usize };
        }
        // split the Nyquist energy symmetrically to keep the field real
        let mut weight = 1.0;
        let mut targets = vec![fk];
        for a in 0..coarse.dim() {
            if n % 2 == 0 && k[a] == n / 2 {
                weight *= 0.5;
                let mut mirrored = Vec::with_capacity(targets.len() * 2);
                for t in &targets {
                    let mut pos = *t;
                    pos[a] = n / 2;
                    let mut neg = *t;
                    neg[a] = nf - n / 2;
                    mirrored.push(pos);
                    mirrored.push(neg);
                }
                targets = mirrored;
            }
        }
        for t in targets {
            let fp = fine.flat_index(&t[..fine.dim()]);
            fine_spec[fp] += spec[p] * weight;
        }
    });
    let scale = (fine.points() / coarse.points()) as f64;
    for v in fine_spec.iter_mut() {
        *v *= scale;
    }
    inverse_real(fine, fine_spec)
}
