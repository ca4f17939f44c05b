use std::sync::Arc;

use proptest::prelude::*;
use yosida_core::convolution::jump_convolution;
use yosida_core::noise::{norm_g_lmq, sample_poisson_stream};
use yosida_core::solver::{picard_solve, Formulation, InitialGuess};
use yosida_core::stats::mean_and_se;
use yosida_core::verify::estimate_sup_moment;
use yosida_core::{
    Atom, Field, JumpSpec, MonotoneFn, MonteCarlo, Problem, SolverOptions, SpectralBasis, TimeGrid, WienerSpec,
};

fn field(coeffs: &[f64], n: usize) -> Field {
    let mut f = Field::zeros(n);
    for (k, c) in coeffs.iter().take(n).enumerate() {
        f[k] = *c;
    }
    f
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4)
}

fn problem(drift: MonotoneFn, sigma: f64, theta: f64, g: &[f64], u0: &[f64]) -> Problem {
    let n = 6;
    Problem::new(
        drift,
        Arc::new(SpectralBasis::new(n).unwrap()),
        WienerSpec::decay(n, sigma, 1.0),
        JumpSpec::single(theta, field(g, n)),
        field(u0, n),
        TimeGrid::uniform(0.2, 2e-3).unwrap(),
    )
    .unwrap()
}

fn drift(i: usize) -> MonotoneFn {
    [
        MonotoneFn::linear(2.0),
        MonotoneFn::cubic(),
        MonotoneFn::power(3.0),
        MonotoneFn::linear_cubic(),
    ][i]
        .clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noise_is_a_function_of_the_seed(seed in any::<u64>(), theta in 0.0f64..20.0, g in coeffs()) {
        let pb = problem(MonotoneFn::cubic(), 0.5, theta, &g, &[1.0]);
        let a = pb.sample_noise(seed).unwrap();
        let b = pb.sample_noise(seed).unwrap();
        prop_assert_eq!(&a.increments, &b.increments);
        prop_assert_eq!(&a.stream, &b.stream);
    }

    #[test]
    fn jump_convolution_is_additive_in_the_integrand(seed in 0u64..10_000, g1 in coeffs(), g2 in coeffs()) {
        let n = 6;
        let basis = SpectralBasis::new(n).unwrap();
        let grid = TimeGrid::uniform(0.5, 1e-2).unwrap();
        let atoms = |g: &[f64]| JumpSpec::atoms(vec![Atom { weight: 3.0, field: field(g, n) }]);
        let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let stream = sample_poisson_stream(0.5, &atoms(&g1), seed).unwrap();
        let a = jump_convolution(&grid, &atoms(&g1), &stream, &basis).path;
        let b = jump_convolution(&grid, &atoms(&g2), &stream, &basis).path;
        let s = jump_convolution(&grid, &atoms(&sum), &stream, &basis).path;
        prop_assert!(s.sup_distance(&a.add(&b), &basis, 2.0) < 1e-12);
    }

    #[test]
    fn jump_norm_scales_exactly(g in coeffs(), c in 1.0f64..10.0, q in prop::sample::select(vec![2.0, 4.0, 8.0])) {
        let basis = SpectralBasis::new(6).unwrap();
        let spec = JumpSpec::atoms(vec![Atom { weight: 1.5, field: field(&g, 6) }]);
        let base = norm_g_lmq(&spec, &basis, q, 1.0);
        let scaled = norm_g_lmq(&spec.scaled(c), &basis, q, 1.0);
        prop_assert!(scaled >= base);
        prop_assert!((scaled - c * base).abs() <= 1e-12 * (1.0 + scaled));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn formulations_and_starting_points_agree(
        seed in 0u64..10_000,
        di in 0usize..4,
        sigma in 0.0f64..1.0,
        theta in 0.0f64..8.0,
        g in coeffs(),
        u0 in coeffs(),
        lambda in 0.01f64..0.3,
    ) {
        let pb = problem(drift(di), sigma, theta, &g, &u0);
        let paths = pb.noise_paths(&pb.sample_noise(seed).unwrap()).unwrap();
        let base = SolverOptions::default();
        let reference = picard_solve(&pb, lambda, &paths, &base).unwrap();
        let p = pb.drift.p();
        for opts in [
            SolverOptions { formulation: Formulation::Direct, ..base },
            SolverOptions { initial_guess: InitialGuess::Zero, ..base },
        ] {
            let other = picard_solve(&pb, lambda, &paths, &opts).unwrap();
            prop_assert!(reference.u.sup_distance(&other.u, &pb.basis, p) <= 10.0 * base.tol_picard);
        }
        prop_assert!(reference.residual <= 1e-8, "residual {}", reference.residual);
    }
}

#[test]
fn monte_carlo_is_reproducible_and_in_order() {
    let mc = MonteCarlo::new(17, 99);
    let a = mc.run(Ok).unwrap();
    let b = mc.run(Ok).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, (0..17).map(|i| mc.seed(i)).collect::<Vec<_>>());
}

#[test]
fn standard_error_shrinks_like_inverse_root_of_samples() {
    let pb = problem(MonotoneFn::zero(), 0.8, 4.0, &[0.5, -0.2], &[0.0]);
    let se = |m: usize| {
        let paths: Vec<_> = MonteCarlo::new(m, 5)
            .run(|seed| Ok(pb.noise_paths(&pb.sample_noise(seed)?)?.wa))
            .unwrap();
        estimate_sup_moment(&paths, &pb.basis, 2.0, 2.0, "ou")
            .unwrap()
            .standard_error
    };
    let ratio = se(256) / se(1024);
    assert!(ratio > 1.6 && ratio < 2.5, "{ratio}");
    let (_, zero) = mean_and_se(&[0.25; 8]);
    assert_eq!(zero, 0.0);
}
