//! Noise-free runs against an independent RK4 integration of the Galerkin
//! system, with the Yosida drift computed by plain bisection.

use std::sync::Arc;

use yosida_core::solver::{picard_solve, solve_mild};
use yosida_core::{Field, JumpSpec, MonotoneFn, Problem, SolverOptions, SpectralBasis, TimeGrid, WienerSpec};

fn yosida_cubic(lambda: f64, r: f64) -> f64 {
    // y + λ y³ = r, y between 0 and r
    let (mut lo, mut hi) = if r >= 0.0 { (0.0, r) } else { (r, 0.0) };
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid + lambda * mid.powi(3) < r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let y = 0.5 * (lo + hi);
    (r - y) / lambda
}

fn rhs(basis: &SpectralBasis, lambda: f64, u: &Field) -> Field {
    let values: Vec<f64> = basis.synthesize(u).iter().map(|&r| yosida_cubic(lambda, r)).collect();
    let drift = basis.analyze(&values);
    let mut out = Field::zeros(u.n_modes());
    for k in 0..u.n_modes() {
        out[k] = -basis.eigenvalues()[k] * u[k] - drift[k];
    }
    out
}

fn rk4(basis: &SpectralBasis, lambda: f64, u0: &Field, horizon: f64, steps: usize) -> Field {
    let h = horizon / steps as f64;
    let mut u = u0.clone();
    for _ in 0..steps {
        let k1 = rhs(basis, lambda, &u);
        let mut tmp = u.clone();
        tmp.axpy(h / 2.0, &k1);
        let k2 = rhs(basis, lambda, &tmp);
        let mut tmp = u.clone();
        tmp.axpy(h / 2.0, &k2);
        let k3 = rhs(basis, lambda, &tmp);
        let mut tmp = u.clone();
        tmp.axpy(h, &k3);
        let k4 = rhs(basis, lambda, &tmp);
        u.axpy(h / 6.0, &k1);
        u.axpy(h / 3.0, &k2);
        u.axpy(h / 3.0, &k3);
        u.axpy(h / 6.0, &k4);
    }
    u
}

fn noiseless(drift: MonotoneFn, n: usize, u0: Field, horizon: f64, dt: f64) -> Problem {
    Problem::new(
        drift,
        Arc::new(SpectralBasis::new(n).unwrap()),
        WienerSpec::zero(n),
        JumpSpec::none(n),
        u0,
        TimeGrid::uniform(horizon, dt).unwrap(),
    )
    .unwrap()
}

#[test]
fn cubic_drift_matches_fine_ode_reference() {
    let n = 8;
    let lambda = 0.05;
    let horizon = 0.05;
    let u0 = Field::eigenfunction(n, 1, 1.0);
    let pb = noiseless(MonotoneFn::cubic(), n, u0.clone(), horizon, 4e-6);
    let reference = rk4(&pb.basis, lambda, &u0, horizon, 10_000);
    let paths = pb.noise_paths(&pb.sample_noise(1).unwrap()).unwrap();
    let sol = picard_solve(&pb, lambda, &paths, &SolverOptions::default()).unwrap();
    let err = (sol.u.last() - &reference).norm();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn solver_error_halves_with_the_step() {
    let n = 8;
    let lambda = 0.05;
    let u0 = Field::from_modes(n, &[(1, 2.0), (2, -0.5)]);
    let reference = {
        let pb = noiseless(MonotoneFn::cubic(), n, u0.clone(), 0.1, 1e-3);
        rk4(&pb.basis, lambda, &u0, 0.1, 20_000)
    };
    let errs: Vec<f64> = [2e-3, 1e-3, 5e-4]
        .iter()
        .map(|&dt| {
            let pb = noiseless(MonotoneFn::cubic(), n, u0.clone(), 0.1, dt);
            let paths = pb.noise_paths(&pb.sample_noise(1).unwrap()).unwrap();
            let sol = picard_solve(&pb, lambda, &paths, &SolverOptions::default()).unwrap();
            (sol.u.last() - &reference).norm()
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.7 && ratio < 2.3, "{errs:?}");
    }
}

#[test]
fn linear_continuation_distances_scale_with_lambda() {
    // f_λ = c/(1+λc) r, so consecutive solutions differ by O(λ).
    let n = 8;
    let pb = noiseless(MonotoneFn::linear(5.0), n, Field::eigenfunction(n, 1, 1.0), 0.5, 1e-3);
    let paths = pb.noise_paths(&pb.sample_noise(1).unwrap()).unwrap();
    let lambdas = [0.08, 0.04, 0.02, 0.01, 0.005];
    let mild = solve_mild(&pb, &lambdas, &paths, &SolverOptions::default()).unwrap();
    assert!(mild.monotone);
    for w in mild.distances.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.6 && ratio < 2.4, "{:?}", mild.distances);
    }
}
