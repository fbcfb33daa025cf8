//! Property tests for the field algebra and the stochastic plumbing.

use proptest::prelude::*;

use fbflow::fields::{
    divergence, io, l2_norm, l2_norm_scalar, spectral_derivative, Grid, ScalarField, VectorField,
};
use fbflow::leray::leray_project;
use fbflow::stochastic::{log_quadrature, mc_reduce, McPartial, reduce_partials, RngStream};

fn small_field(grid: &Grid, values: Vec<f64>) -> VectorField {
    let np = grid.points();
    let comps = (0..grid.dim())
        .map(|a| values.iter().cycle().skip(a * 7).take(np).cloned().collect())
        .collect();
    VectorField::from_components(grid, comps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_idempotent_and_divergence_free(values in prop::collection::vec(-10.0f64..10.0, 64)) {
        let grid = Grid::two_pi(2, 8).unwrap();
        let u = small_field(&grid, values);
        let pu = leray_project(&u);
        let ppu = leray_project(&pu);
        let scale = l2_norm(&u).max(1.0);
        prop_assert!(l2_norm(&ppu.sub(&pu).unwrap()) <= 1e-12 * scale);
        prop_assert!(l2_norm_scalar(&divergence(&pu)) <= 1e-10 * scale);
    }

    #[test]
    fn binary_roundtrip_is_exact(values in prop::collection::vec(-1e6f64..1e6, 32)) {
        let grid = Grid::new(1, 32, 3.0).unwrap();
        let u = VectorField::from_components(&grid, vec![values]).unwrap();
        let dir = std::env::temp_dir().join(format!("fbflow_prop_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.fbsd");
        io::write_vector_field(&path, &u).unwrap();
        let back = io::read_vector_field(&path).unwrap();
        prop_assert_eq!(u, back);
    }

    #[test]
    fn derivative_kills_constants_and_is_linear(c in -5.0f64..5.0, values in prop::collection::vec(-1.0f64..1.0, 16)) {
        let grid = Grid::two_pi(1, 16).unwrap();
        let f = ScalarField::from_values(&grid, values.clone()).unwrap();
        let shifted = ScalarField::from_values(&grid, values.iter().map(|v| v + c).collect()).unwrap();
        let df = spectral_derivative(&f, 0);
        let dshift = spectral_derivative(&shifted, 0);
        // adding a constant never changes the derivative
        let gap: f64 = df
            .values()
            .iter()
            .zip(dshift.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prop_assert!(gap <= 1e-10 * (1.0 + c.abs()));
    }

    #[test]
    fn mc_reduce_matches_two_half_combine(seed in 0u64..1000) {
        let grid = Grid::two_pi(1, 8).unwrap();
        let stream = RngStream::new(seed);
        let samples: Vec<VectorField> = (0..8)
            .map(|i| {
                use rand_distr::{Distribution, StandardNormal};
                let mut rng = stream.child(i).rng();
                let vals: Vec<f64> = (0..8).map(|_| StandardNormal.sample(&mut rng)).collect();
                VectorField::from_components(&grid, vec![vals]).unwrap()
            })
            .collect();
        let whole = mc_reduce(&samples).unwrap();
        let left = reduce_partials(samples[..4].iter().map(McPartial::from_sample).collect()).unwrap();
        let right = reduce_partials(samples[4..].iter().map(McPartial::from_sample).collect()).unwrap();
        let combined = left.combine(right).finalize().unwrap();
        prop_assert_eq!(whole.mean, combined.mean);
        prop_assert_eq!(whole.stderr, combined.stderr);
    }

    #[test]
    fn stream_replay_and_divergence(seed in 0u64..500, id in 0u64..50) {
        use rand_distr::{Distribution, StandardNormal};
        let s = RngStream::with_stream(seed, id);
        let mut a = s.rng();
        let mut b = s.rng();
        for _ in 0..16 {
            let x: f64 = StandardNormal.sample(&mut a);
            let y: f64 = StandardNormal.sample(&mut b);
            prop_assert_eq!(x, y);
        }
        // children with different indices give different sequences
        let mut c0 = s.child(0).rng();
        let mut c1 = s.child(1).rng();
        let x: f64 = StandardNormal.sample(&mut c0);
        let y: f64 = StandardNormal.sample(&mut c1);
        prop_assert_ne!(x, y);
    }

    #[test]
    fn log_quadrature_positive_and_ordered(lo_exp in -3.0f64..0.0, span in 0.5f64..4.0, panels in 2usize..24) {
        let r_min = 10f64.powf(lo_exp);
        let r_max = r_min * 10f64.powf(span);
        let q = log_quadrature(r_min, r_max, panels).unwrap();
        prop_assert!(q.weights.iter().all(|&w| w > 0.0));
        prop_assert!(q.nodes.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(*q.nodes.first().unwrap() > r_min && *q.nodes.last().unwrap() < r_max);
        // weights integrate the constant-in-log integrand exactly
        let total: f64 = q.integrate(|r| 1.0 / r);
        prop_assert!((total - (r_max / r_min).ln()).abs() < 1e-10 * (r_max / r_min).ln());
    }
}
