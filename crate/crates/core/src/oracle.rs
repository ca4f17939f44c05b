//! Exact solution of the regularized equation for a linear drift
//! `f(r) = c r`.
//!
//! Then `f_λ(r) = c r / (1 + λc)` and every mode is an Ornstein–Uhlenbeck
//! process with jumps and rate `β = α + c/(1 + λc)`:
//!
//! ```text
//! u_k(t) = e^{-βt} u0_k + b_k ∫ e^{-β(t-s)} dW_k(s)
//!        + Σ_{t_i ≤ t} e^{-β(t-t_i)} G_k(z_i) - ḡ_k (1 - e^{-βt})/β
//! ```
//!
//! The stochastic integral is sampled jointly with the increments and the
//! rate-`α` integral that the solver sees, so both run on the same noise.

use rand_distr::{Distribution, StandardNormal};

use crate::convolution::FieldPath;
use crate::error::{contract, Result};
use crate::rng::{stream, Stream};
use crate::solver::{NoiseRealization, Problem};
use crate::spectral::Field;

/// Per-mode rate `β_k = α_k + c/(1 + λc)` of the regularized linear equation.
pub fn linear_rates(problem: &Problem, lambda: f64) -> Result<Vec<f64>> {
    let c = problem.drift.linear_slope().ok_or_else(|| {
        contract(format!(
            "exact solution needs a linear drift, got {}",
            problem.drift.name()
        ))
    })?;
    if !(lambda > 0.0) {
        return Err(contract(format!("lambda must be > 0, got {lambda}")));
    }
    let slope = c / (1.0 + lambda * c);
    Ok(problem.basis.eigenvalues().iter().map(|a| a + slope).collect())
}

/// `∫_0^Δ e^{-(a+b)(Δ-s)} ds`.
fn cov(a: f64, b: f64, dt: f64) -> f64 {
    let r = a + b;
    if r == 0.0 {
        dt
    } else {
        -(-r * dt).exp_m1() / r
    }
}

/// Exact `u_λ` at the grid points of `noise`.
pub fn linear_exact(problem: &Problem, lambda: f64, noise: &NoiseRealization) -> Result<FieldPath> {
    let betas = linear_rates(problem, lambda)?;
    let alphas = problem.basis.eigenvalues();
    let n = problem.basis.n_modes();
    let inc = &noise.increments;
    let times = inc.grid.times();
    let mut extra = stream(inc.seed, Stream::Oracle);

    // Stochastic integrals at rate β.
    let mut z = Field::zeros(n);
    let mut stoch = vec![z.clone()];
    for j in 0..inc.grid.n_steps() {
        let dt = inc.grid.step(j);
        for k in 0..n {
            let xi: f64 = StandardNormal.sample(&mut extra);
            if dt == 0.0 {
                continue;
            }
            let (a, b) = (alphas[k], betas[k]);
            // Cholesky of the covariance of (ΔW, η_α, η_β).
            let l11 = dt.sqrt();
            let l21 = cov(a, 0.0, dt) / l11;
            let l22 = (cov(a, a, dt) - l21 * l21).max(0.0).sqrt();
            let l31 = cov(b, 0.0, dt) / l11;
            let l32 = if l22 > 0.0 {
                (cov(a, b, dt) - l31 * l21) / l22
            } else {
                0.0
            };
            let l33 = (cov(b, b, dt) - l31 * l31 - l32 * l32).max(0.0).sqrt();
            let z1 = inc.dw[j][k] / l11;
            let z2 = inc.bridge[j][k];
            let eta = l31 * z1 + l32 * z2 + l33 * xi;
            z[k] = (-b * dt).exp() * z[k] + eta;
        }
        stoch.push(z.clone());
    }

    let mean = problem.jumps.mean_field();
    let mut events = noise.stream.events.iter().peekable();
    let mut jump_part = Field::zeros(n);
    let mut now = 0.0;
    let mut values = Vec::with_capacity(times.len());
    for (j, &t) in times.iter().enumerate() {
        let relax = |x: &mut Field, from: f64, to: f64| {
            let d = to - from;
            for k in 0..n {
                let decay = (-betas[k] * d).exp();
                x[k] = decay * x[k] - mean[k] * (1.0 - decay) / betas[k];
            }
        };
        while let Some(e) = events.next_if(|e| e.time <= t) {
            relax(&mut jump_part, now, e.time);
            now = e.time;
            jump_part += &problem.jumps.field(e.mark);
        }
        relax(&mut jump_part, now, t);
        now = t;
        let mut u = Field::zeros(n);
        for k in 0..n {
            u[k] = (-betas[k] * t).exp() * problem.u0[k] + problem.wiener.b[k] * stoch[j][k] + jump_part[k];
        }
        values.push(u);
    }
    Ok(FieldPath {
        times: times.to_vec(),
        values,
    })
}
