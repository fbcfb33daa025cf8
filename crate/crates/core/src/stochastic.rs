//! Seeded splittable random streams, Gaussian sampling, quadrature for the
//! singular time integral and deterministic Monte Carlo reductions.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::fields::{Grid, VectorField};
use crate::{Error, Result};

/// SplitMix64 finalizer; avalanching mix for stream-id derivation.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A value-type handle on a counter-based random stream.
///
/// The same `(seed, stream_id)` always instantiates the identical sample
/// sequence; child streams are statistically independent. The concrete
/// generator is ChaCha8 keyed by the seed with the stream id in the ChaCha
/// stream word, so splitting never touches parent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derive the `i`-th child stream; children of distinct parents or
    /// distinct indices land on distinct ChaCha streams.
    pub fn child(&self, i: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: mix64(self.stream_id.rotate_left(17) ^ mix64(i.wrapping_add(0x517c_c1b7_2722_0a95))),
        }
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&mix64(self.seed).to_le_bytes());
        key[16..24].copy_from_slice(&mix64(self.seed ^ 0xa076_1d64_78bd_642f).to_le_bytes());
        key[24..32].copy_from_slice(&mix64(self.seed.rotate_left(32)).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// One iid N(0, variance·I) draw of the given dimension.
pub fn sample_gaussian(rng: &mut ChaCha8Rng, dim: usize, variance: f64) -> Result<[f64; 3]> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::param("variance", format!("must be positive, got {variance}")));
    }
    let sd = variance.sqrt();
    let mut v = [0.0; 3];
    for x in v.iter_mut().take(dim) {
        let z: f64 = StandardNormal.sample(rng);
        *x = sd * z;
    }
    Ok(v)
}

/// The three independent increments (B_{s/3}, B_{2s/3}−B_{s/3}, B_s−B_{2s/3})
/// of a Brownian motion over [0, s]; each ~ N(0, (s/3)·I) and B_s = a+b+c.
#[derive(Debug, Clone, Copy)]
pub struct TripleIncrement {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub c: [f64; 3],
}

impl TripleIncrement {
    pub fn total(&self) -> [f64; 3] {
        [
            self.a[0] + self.b[0] + self.c[0],
            self.a[1] + self.b[1] + self.c[1],
            self.a[2] + self.b[2] + self.c[2],
        ]
    }

    pub fn negated(&self) -> TripleIncrement {
        fn neg(v: [f64; 3]) -> [f64; 3] {
            [-v[0], -v[1], -v[2]]
        }
        TripleIncrement {
            a: neg(self.a),
            b: neg(self.b),
            c: neg(self.c),
        }
    }
}

pub fn sample_triple(rng: &mut ChaCha8Rng, s: f64, dim: usize) -> Result<TripleIncrement> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::param("s", format!("must be positive, got {s}")));
    }
    let var = s / 3.0;
    Ok(TripleIncrement {
        a: sample_gaussian(rng, dim, var)?,
        b: sample_gaussian(rng, dim, var)?,
        c: sample_gaussian(rng, dim, var)?,
    })
}

// ---------------------------------------------------------------------------
// Gauss rules
// ---------------------------------------------------------------------------

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(degree: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(degree >= 1);
    let n = degree;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Chebyshev-like initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // evaluate P_n and P_n' by recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn_prev = if n == 1 { 1.0 } else { p0 };
            let dpn = n as f64 * (x * pn - pn_prev) / (x * x - 1.0);
            let dx = pn / dpn;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let pn = if n == 1 { x } else { p1 };
        let pn_prev = if n == 1 { 1.0 } else { p0 };
        let dpn = n as f64 * (x * pn - pn_prev) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss–Hermite nodes/weights for ∫ e^{−y²} f(y) dy (physicists'
/// convention); E[f(Z)] = π^{−1/2} Σ w_q f(√2·y_q) for Z ~ N(0,1).
pub fn gauss_hermite(degree: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(degree >= 1);
    let n = degree;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let sqrt_pi = std::f64::consts::PI.sqrt();
    for i in 0..(n + 1) / 2 {
        // initial guesses per Numerical Recipes
        let mut x = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => {
                let prev = (2.0 * n as f64 + 1.0).sqrt()
                    - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0);
                prev - 1.14 * (n as f64).powf(0.426) / prev
            }
            _ => {
                // refined later by Newton; crude linear extrapolation
                let a = nodes[n - i];
                let b = nodes[n - i + 1];
                2.0 * a - b
            }
        };
        let mut dp = 0.0;
        for _ in 0..200 {
            // Hermite recurrence in the orthonormal scaling
            let mut h0 = std::f64::consts::PI.powf(-0.25);
            let mut h1 = x * std::f64::consts::SQRT_2 * h0;
            for k in 2..=n {
                let h2 = x * (2.0 / k as f64).sqrt() * h1 - ((k as f64 - 1.0) / k as f64).sqrt() * h0;
                h0 = h1;
                h1 = h2;
            }
            let hn = if n == 1 { h1 } else { h1 };
            dp = (2.0 * n as f64).sqrt() * h0;
            let dx = hn / dp;
            x -= dx;
            if dx.abs() < 1e-14 {
                break;
            }
        }
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        let w = 2.0 / (dp * dp);
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        // weight at zero from the same Newton formula evaluated at x=0
        let mut h0 = std::f64::consts::PI.powf(-0.25);
        let mut h1 = 0.0;
        for k in 2..=n {
            let h2 = -((k as f64 - 1.0) / k as f64).sqrt() * h0;
            h0 = h1;
            h1 = h2;
        }
        let dp = (2.0 * n as f64).sqrt() * h0;
        weights[n / 2] = 2.0 / (dp * dp);
    }
    let _ = sqrt_pi;
    (nodes, weights)
}

// ---------------------------------------------------------------------------
// Time quadrature for the singular kernel
// ---------------------------------------------------------------------------

/// Nodes and weights discretizing ∫_{r_min}^{r_max} dr of the singular
/// 1/r³-type kernels.
#[derive(Debug, Clone)]
pub struct TimeQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
}

/// Gauss–Legendre degree used inside each logarithmic panel.
const PANEL_DEGREE: usize = 4;

/// Log-mapped composite Gauss–Legendre rule: uniform panels in t = ln r,
/// degree-4 Gauss–Legendre per panel, weights carrying the e^t Jacobian.
/// The integrand of the pressure kernel decays like r^{−3/2} in
/// expectation, so log spacing equidistributes the work.
pub fn log_quadrature(r_min: f64, r_max: f64, panels: usize) -> Result<TimeQuadrature> {
    if !(r_min > 0.0 && r_max > r_min && r_min.is_finite() && r_max.is_finite()) {
        return Err(Error::param(
            "interval",
            format!("need 0 < r_min < r_max, got [{r_min}, {r_max}]"),
        ));
    }
    if panels < 2 {
        return Err(Error::param("panels", "need at least 2 panels"));
    }
    let (gx, gw) = gauss_legendre(PANEL_DEGREE);
    let t_lo = r_min.ln();
    let t_hi = r_max.ln();
    let dt = (t_hi - t_lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * PANEL_DEGREE);
    let mut weights = Vec::with_capacity(panels * PANEL_DEGREE);
    for p in 0..panels {
        let a = t_lo + p as f64 * dt;
        for q in 0..PANEL_DEGREE {
            let t = a + 0.5 * dt * (gx[q] + 1.0);
            let r = t.exp();
            nodes.push(r);
            weights.push(0.5 * dt * gw[q] * r); // dr = e^t dt
        }
    }
    Ok(TimeQuadrature {
        nodes,
        weights,
        r_min,
        r_max,
    })
}

impl TimeQuadrature {
    /// ∫ f(r) dr under this rule.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&r, &w)| w * f(r))
            .sum()
    }

    pub fn matches_interval(&self, r_min: f64, r_max: f64) -> Result<()> {
        let ok = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
        if ok(self.r_min, r_min) && ok(self.r_max, r_max) {
            Ok(())
        } else {
            Err(Error::param(
                "quad",
                format!(
                    "quadrature interval [{}, {}] does not match truncation [{r_min}, {r_max}]",
                    self.r_min, self.r_max
                ),
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo reduction
// ---------------------------------------------------------------------------

/// (mean, standard error, sample count) of a field-valued estimator.
#[derive(Debug, Clone)]
pub struct McEstimate {
    pub mean: VectorField,
    pub stderr: VectorField,
    pub samples: usize,
}

/// Partial sums of a block of samples; combining partials pairwise in a
/// fixed order keeps every reduction bit-reproducible and independent of
/// thread count.
#[derive(Debug, Clone)]
pub struct McPartial {
    sum: VectorField,
    sum_sq: VectorField,
    count: usize,
}

impl McPartial {
    pub fn from_sample(sample: &VectorField) -> McPartial {
        let mut sum_sq = VectorField::zeros(sample.grid());
        for (a, c) in sample.components().iter().enumerate() {
            let s = sum_sq.component_mut(a);
            for (o, v) in s.iter_mut().zip(c) {
                *o = v * v;
            }
        }
        McPartial {
            sum: sample.clone(),
            sum_sq,
            count: 1,
        }
    }

    pub fn combine(mut self, other: McPartial) -> McPartial {
        self.sum.axpy(1.0, &other.sum);
        self.sum_sq.axpy(1.0, &other.sum_sq);
        self.count += other.count;
        self
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean and componentwise standard error.
    pub fn finalize(self) -> Result<McEstimate> {
        if self.count < 2 {
            return Err(Error::param("samples", "need at least 2 samples"));
        }
        let m = self.count as f64;
        let mut mean = self.sum;
        mean.scale(1.0 / m);
        let mut stderr = self.sum_sq;
        for (a, c) in mean.components().iter().enumerate() {
            let s = stderr.component_mut(a);
            for (o, mu) in s.iter_mut().zip(c) {
                let var = (*o - m * mu * mu) / (m - 1.0);
                *o = (var.max(0.0) / m).sqrt();
            }
        }
        Ok(McEstimate {
            mean,
            stderr,
            samples: self.count,
        })
    }
}

/// Pairwise (tree) reduction of partials, splitting at the midpoint.
pub fn reduce_partials(mut parts: Vec<McPartial>) -> Result<McPartial> {
    if parts.is_empty() {
        return Err(Error::param("samples", "empty input"));
    }
    fn tree(parts: &mut Vec<McPartial>, lo: usize, hi: usize) -> McPartial {
        if hi - lo == 1 {
            return parts[lo].clone();
        }
        let mid = lo + (hi - lo) / 2;
        let left = tree(parts, lo, mid);
        let right = tree(parts, mid, hi);
        left.combine(right)
    }
    let n = parts.len();
    Ok(tree(&mut parts, 0, n))
}

/// How many samples one worker block accumulates between tree combines.
const BLOCK: usize = 64;

/// Raw per-component mean/stderr arrays of a streamed estimator.
#[derive(Debug, Clone)]
pub struct ComponentEstimate {
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub samples: usize,
}

/// Run `sample_fn` for indices `0..m`, each call filling a zeroed buffer of
/// `ncomp` arrays of length `len` with one sample; block partials are
/// combined pairwise in block order, so the estimate is bit-reproducible
/// for a fixed stream regardless of thread count.
pub fn estimate_components(
    ncomp: usize,
    len: usize,
    m: usize,
    sample_fn: impl Fn(usize, &mut [Vec<f64>]) + Sync,
) -> Result<ComponentEstimate> {
    if m < 2 {
        return Err(Error::param("samples", "need at least 2 samples"));
    }
    struct Raw {
        sum: Vec<Vec<f64>>,
        sum_sq: Vec<Vec<f64>>,
        count: usize,
    }
    impl Raw {
        fn combine(mut self, other: Raw) -> Raw {
            for (a, b) in self.sum.iter_mut().zip(other.sum) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
            self.count += other.count;
            self
        }
    }
    let blocks: Vec<Raw> = (0..m.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(m);
            let mut acc = Raw {
                sum: vec![vec![0.0; len]; ncomp],
                sum_sq: vec![vec![0.0; len]; ncomp],
                count: 0,
            };
            let mut sample = vec![vec![0.0f64; len]; ncomp];
            for i in lo..hi {
                for c in sample.iter_mut() {
                    c.fill(0.0);
                }
                sample_fn(i, &mut sample);
                for (a, s) in acc.sum.iter_mut().zip(&sample) {
                    for (x, y) in a.iter_mut().zip(s) {
                        *x += y;
                    }
                }
                for (a, s) in acc.sum_sq.iter_mut().zip(&sample) {
                    for (x, y) in a.iter_mut().zip(s) {
                        *x += y * y;
                    }
                }
                acc.count += 1;
            }
            acc
        })
        .collect();
    // pairwise tree over blocks
    fn tree(parts: &mut Vec<Option<Raw>>, lo: usize, hi: usize) -> Raw {
        if hi - lo == 1 {
            return parts[lo].take().expect("visited once");
        }
        let mid = lo + (hi - lo) / 2;
        let left = tree(parts, lo, mid);
        let right = tree(parts, mid, hi);
        left.combine(right)
    }
    let n = blocks.len();
    let mut parts: Vec<Option<Raw>> = blocks.into_iter().map(Some).collect();
    let total = tree(&mut parts, 0, n);

    let mf = total.count as f64;
    let mut mean = total.sum;
    for c in mean.iter_mut() {
        for v in c.iter_mut() {
            *v /= mf;
        }
    }
    let mut stderr = total.sum_sq;
    for (se, mu) in stderr.iter_mut().zip(&mean) {
        for (s, m) in se.iter_mut().zip(mu) {
            let var = (*s - mf * m * m) / (mf - 1.0);
            *s = (var.max(0.0) / mf).sqrt();
        }
    }
    Ok(ComponentEstimate {
        mean,
        stderr,
        samples: total.count,
    })
}

/// Field-valued wrapper over [`estimate_components`].
pub fn estimate_fields(
    grid: &Grid,
    m: usize,
    sample_fn: impl Fn(usize, &mut [Vec<f64>]) + Sync,
) -> Result<McEstimate> {
    let raw = estimate_components(grid.dim(), grid.points(), m, sample_fn)?;
    Ok(McEstimate {
        mean: VectorField::from_components(grid, raw.mean)?,
        stderr: VectorField::from_components(grid, raw.stderr)?,
        samples: raw.samples,
    })
}

/// Pointwise mean and standard error of a batch of sample fields via the
/// fixed-order pairwise tree.
pub fn mc_reduce(samples: &[VectorField]) -> Result<McEstimate> {
    if samples.len() < 2 {
        return Err(Error::param("samples", "need at least 2 samples"));
    }
    let grid = samples[0].grid();
    for s in samples {
        grid.same_as(s.grid())?;
    }
    let parts: Vec<McPartial> = samples.iter().map(McPartial::from_sample).collect();
    reduce_partials(parts)?.finalize()
}
