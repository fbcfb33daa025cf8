//! Periodic multilinear interpolation.
//!
//! Cheap and C⁰ with an O(δ²) error floor; shared by every estimator that
//! needs off-grid field values.

use super::field::VectorField;
use super::grid::Grid;

/// Precomputed corner indices/weights for one evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub base: [usize; 3],
    pub frac: [f64; 3],
}

impl Stencil {
    /// Locate `x` (any real coordinates, wrapped periodically) on `grid`.
    #[inline]
    pub fn locate(grid: &Grid, x: &[f64; 3]) -> Stencil {
        let n = grid.n() as f64;
        let inv_delta = 1.0 / grid.spacing();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..grid.dim() {
            let u = x[a] * inv_delta;
            let f = u.floor();
            let mut b = f % n;
            if b < 0.0 {
                b += n;
            }
            // guard against b == n from rounding
            let mut bi = b as usize;
            if bi >= grid.n() {
                bi = 0;
            }
            base[a] = bi;
            frac[a] = u - f;
        }
        Stencil { base, frac }
    }
}

/// Evaluate one scalar component at a point.
#[inline]
pub fn eval_component(grid: &Grid, values: &[f64], st: &Stencil) -> f64 {
    let n = grid.n();
    match grid.dim() {
        1 => {
            let i0 = st.base[0];
            let i1 = (i0 + 1) % n;
            values[i0] * (1.0 - st.frac[0]) + values[i1] * st.frac[0]
        }
        2 => {
            let (i0, j0) = (st.base[0], st.base[1]);
            let i1 = (i0 + 1) % n;
            let j1 = (j0 + 1) % n;
            let (fx, fy) = (st.frac[0], st.frac[1]);
            let v00 = values[i0 * n + j0];
            let v01 = values[i0 * n + j1];
            let v10 = values[i1 * n + j0];
            let v11 = values[i1 * n + j1];
            (v00 * (1.0 - fy) + v01 * fy) * (1.0 - fx) + (v10 * (1.0 - fy) + v11 * fy) * fx
        }
        3 => {
            let (i0, j0, k0) = (st.base[0], st.base[1], st.base[2]);
            let i1 = (i0 + 1) % n;
            let j1 = (j0 + 1) % n;
            let k1 = (k0 + 1) % n;
            let (fx, fy, fz) = (st.frac[0], st.frac[1], st.frac[2]);
            let at = |i: usize, j: usize, k: usize| values[(i * n + j) * n + k];
            let c00 = at(i0, j0, k0) * (1.0 - fz) + at(i0, j0, k1) * fz;
            let c01 = at(i0, j1, k0) * (1.0 - fz) + at(i0, j1, k1) * fz;
            let c10 = at(i1, j0, k0) * (1.0 - fz) + at(i1, j0, k1) * fz;
            let c11 = at(i1, j1, k0) * (1.0 - fz) + at(i1, j1, k1) * fz;
            (c00 * (1.0 - fy) + c01 * fy) * (1.0 - fx) + (c10 * (1.0 - fy) + c11 * fy) * fx
        }
        _ => unreachable!(),
    }
}

/// Evaluate a vector field at a point (periodic wrap).
#[inline]
pub fn eval_vector(u: &VectorField, x: &[f64; 3]) -> [f64; 3] {
    let st = Stencil::locate(u.grid(), x);
    let mut out = [0.0; 3];
    for a in 0..u.dim() {
        out[a] = eval_component(u.grid(), u.component(a), &st);
    }
    out
}

/// Shift every grid node by the same constant vector and interpolate.
///
/// Because the offset is identical for all nodes the stencil weights are
/// shared, so this is a weighted sum of 2^d cyclically shifted copies of
/// the array — the hot path of all common-random-number estimators.
pub struct ConstantShift {
    n: usize,
    dim: usize,
    base: [usize; 3],
    frac: [f64; 3],
}

impl ConstantShift {
    pub fn new(grid: &Grid, shift: &[f64; 3]) -> Self {
        let st = Stencil::locate(grid, shift);
        ConstantShift {
            n: grid.n(),
            dim: grid.dim(),
            base: st.base,
            frac: st.frac,
        }
    }

    /// out[p] += scale · values[(p + shift) wrapped], accumulated in place.
    pub fn accumulate(&self, values: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.n;
        match self.dim {
            1 => {
                let w0 = scale * (1.0 - self.frac[0]);
                let w1 = scale * self.frac[0];
                let b = self.base[0];
                for i in 0..n {
                    let s0 = (i + b) % n;
                    let s1 = (i + b + 1) % n;
                    out[i] += w0 * values[s0] + w1 * values[s1];
                }
            }
            2 => {
                let (fx, fy) = (self.frac[0], self.frac[1]);
                let w00 = scale * (1.0 - fx) * (1.0 - fy);
                let w01 = scale * (1.0 - fx) * fy;
                let w10 = scale * fx * (1.0 - fy);
                let w11 = scale * fx * fy;
                let (bx, by) = (self.base[0], self.base[1]);
                for i in 0..n {
                    let r0 = ((i + bx) % n) * n;
                    let r1 = ((i + bx + 1) % n) * n;
                    let row_out = &mut out[i * n..(i + 1) * n];
                    for (j, o) in row_out.iter_mut().enumerate() {
                        let c0 = (j + by) % n;
                        let c1 = (j + by + 1) % n;
                        *o += w00 * values[r0 + c0]
                            + w01 * values[r0 + c1]
                            + w10 * values[r1 + c0]
                            + w11 * values[r1 + c1];
                    }
                }
            }
            3 => {
                let (fx, fy, fz) = (self.frac[0], self.frac[1], self.frac[2]);
                let (bx, by, bz) = (self.base[0], self.base[1], self.base[2]);
                let wx = [1.0 - fx, fx];
                let wy = [1.0 - fy, fy];
                let wz = [1.0 - fz, fz];
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let p = (i * n + j) * n + k;
                            let mut acc = 0.0;
                            for (ci, &wi) in wx.iter().enumerate() {
                                let si = (i + bx + ci) % n;
                                for (cj, &wj) in wy.iter().enumerate() {
                                    let sj = (j + by + cj) % n;
                                    for (ck, &wk) in wz.iter().enumerate() {
                                        let sk = (k + bz + ck) % n;
                                        acc += wi * wj * wk * values[(si * n + sj) * n + sk];
                                    }
                                }
                            }
                            out[p] += scale * acc;
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }
}
