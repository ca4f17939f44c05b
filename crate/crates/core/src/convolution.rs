//! Stochastic convolutions `W_A(t) = ∫_0^t S(t-s) B dW(s)`,
//! `G_A(t) = ∫_0^t ∫_Z S(t-s) G(z) μ̄(ds, dz)` and the deterministic
//! convolution `∫_0^t S(t-s) h(s) ds`, all mode by mode.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::noise::{JumpSpec, PoissonStream, WienerIncrements, WienerSpec};
use crate::spectral::{Field, SpectralBasis};

/// Field values at (possibly repeated) time points.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    pub times: Vec<f64>,
    pub values: Vec<Field>,
}

impl FieldPath {
    pub fn constant(times: &[f64], value: &Field) -> Self {
        Self {
            times: times.to_vec(),
            values: vec![value.clone(); times.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> &Field {
        self.values.last().expect("empty path")
    }

    /// `max_t ‖x(t)‖_{L_q}` over the stored points.
    pub fn sup_norm(&self, basis: &SpectralBasis, q: f64) -> f64 {
        if q == 2.0 {
            return self.values.iter().map(Field::norm).fold(0.0, f64::max);
        }
        let mut grid = vec![0.0; basis.n_grid()];
        self.values
            .iter()
            .map(|v| {
                basis.synthesize_into(v.coeffs(), &mut grid);
                basis.lp_norm_grid(&grid, q)
            })
            .fold(0.0, f64::max)
    }

    /// `max_t ‖x(t) - y(t)‖_{L_q}`; both paths must share their times.
    pub fn sup_distance(&self, other: &FieldPath, basis: &SpectralBasis, q: f64) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        let mut diff = vec![0.0; basis.n_modes()];
        let mut grid = vec![0.0; basis.n_grid()];
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| {
                for ((d, x), y) in diff.iter_mut().zip(a.coeffs()).zip(b.coeffs()) {
                    *d = x - y;
                }
                if q == 2.0 {
                    diff.iter().map(|d| d * d).sum::<f64>().sqrt()
                } else {
                    basis.synthesize_into(&diff, &mut grid);
                    basis.lp_norm_grid(&grid, q)
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn add(&self, other: &FieldPath) -> FieldPath {
        FieldPath {
            times: self.times.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &FieldPath) -> FieldPath {
        FieldPath {
            times: self.times.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn subsample(&self, factor: usize) -> FieldPath {
        FieldPath {
            times: self.times.iter().step_by(factor).copied().collect(),
            values: self.values.iter().step_by(factor).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionKind {
    Wiener,
    Jump,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionPath {
    pub kind: ConvolutionKind,
    pub path: FieldPath,
}

/// `W_A` on the grid of `increments`, sampled with the exact
/// Ornstein–Uhlenbeck transition of every mode.
///
/// Per step `Δ` and mode with eigenvalue `α`, the pair
/// `(ΔW, η = ∫ e^{-α(Δ-s)} dW)` is Gaussian with `Var ΔW = Δ`,
/// `Var η = (1 - e^{-2αΔ})/(2α)` and `Cov = (1 - e^{-αΔ})/α`; `η` is built
/// from `ΔW` and the bridge normal through the Cholesky factor of that
/// covariance, so `W_A` and `BW` are jointly exact at grid points.
pub fn wiener_convolution_from(
    increments: &WienerIncrements,
    wiener: &WienerSpec,
    basis: &SpectralBasis,
) -> Result<ConvolutionPath> {
    let n = basis.n_modes();
    if wiener.n_modes() != n || increments.n_modes() != n && increments.grid.n_steps() > 0 {
        return Err(Error::Unsupported(format!(
            "Wiener operator must be diagonal on the {n}-mode basis (got {} coefficients, {} increment modes)",
            wiener.n_modes(),
            increments.n_modes()
        )));
    }
    let grid = &increments.grid;
    let mut values = Vec::with_capacity(grid.len());
    let mut x = Field::zeros(n);
    values.push(x.clone());
    for j in 0..grid.n_steps() {
        let dt = grid.step(j);
        if dt > 0.0 {
            let sd = dt.sqrt();
            for k in 0..n {
                let b = wiener.b[k];
                if b == 0.0 {
                    continue;
                }
                let (l21, l22, decay) = ou_factors(basis.eigenvalues()[k], dt);
                let eta = l21 * increments.dw[j][k] / sd + l22 * increments.bridge[j][k];
                x[k] = decay * x[k] + b * eta;
            }
        }
        values.push(x.clone());
    }
    Ok(ConvolutionPath {
        kind: ConvolutionKind::Wiener,
        path: FieldPath {
            times: grid.times().to_vec(),
            values,
        },
    })
}

/// Cholesky entries `(l21, l22)` of the `(ΔW, η)` covariance, and `e^{-αΔ}`.
#[inline]
pub(crate) fn ou_factors(alpha: f64, dt: f64) -> (f64, f64, f64) {
    let var = -(-2.0 * alpha * dt).exp_m1() / (2.0 * alpha);
    let cov = -(-alpha * dt).exp_m1() / alpha;
    let sd = dt.sqrt();
    let l21 = cov / sd;
    let l22 = (var - l21 * l21).max(0.0).sqrt();
    (l21, l22, (-alpha * dt).exp())
}

pub fn wiener_convolution(
    grid: &TimeGrid,
    wiener: &WienerSpec,
    basis: &SpectralBasis,
    seed: u64,
) -> Result<ConvolutionPath> {
    let inc = WienerIncrements::sample(grid, basis.n_modes(), seed);
    wiener_convolution_from(&inc, wiener, basis)
}

/// `B W(t)` at the grid points, mode by mode.
pub fn brownian_path(increments: &WienerIncrements, wiener: &WienerSpec) -> FieldPath {
    let n = wiener.n_modes();
    let mut w = Field::zeros(n);
    let mut values = vec![w.clone()];
    for dw in &increments.dw {
        for k in 0..n {
            w[k] += wiener.b[k] * dw[k];
        }
        values.push(w.clone());
    }
    FieldPath {
        times: increments.grid.times().to_vec(),
        values,
    }
}

/// Exact `G_A` at the sorted times `at`.
///
/// Between events every mode relaxes as
/// `x ← e^{-αδ} x - ḡ (1 - e^{-αδ})/α`; an event at `t_i` adds `G(z_i)`
/// and counts at any evaluation time `t ≥ t_i`.
pub fn jump_convolution_at(at: &[f64], jumps: &JumpSpec, stream: &PoissonStream, basis: &SpectralBasis) -> FieldPath {
    let mut walker = JumpWalker::new(jumps, basis);
    let mut events = stream.events.iter().peekable();
    let mut values = Vec::with_capacity(at.len());
    for &t in at {
        while let Some(e) = events.next_if(|e| e.time <= t) {
            walker.advance_to(e.time);
            walker.x += &jumps.field(e.mark);
        }
        walker.advance_to(t);
        values.push(walker.x.clone());
    }
    FieldPath {
        times: at.to_vec(),
        values,
    }
}

/// `G_A` on the grid augmented with every jump time, with the left limit
/// and the post-jump value both recorded, so the grid maximum sees every
/// jump.
pub fn jump_convolution(
    grid: &TimeGrid,
    jumps: &JumpSpec,
    stream: &PoissonStream,
    basis: &SpectralBasis,
) -> ConvolutionPath {
    let mut walker = JumpWalker::new(jumps, basis);
    let mut events = stream.events.iter().peekable();
    let mut times = Vec::with_capacity(grid.len() + 2 * stream.events.len());
    let mut values = Vec::with_capacity(times.capacity());
    for &t in grid.times() {
        while let Some(e) = events.next_if(|e| e.time <= t) {
            walker.advance_to(e.time);
            times.push(e.time);
            values.push(walker.x.clone());
            walker.x += &jumps.field(e.mark);
            if e.time < t {
                times.push(e.time);
                values.push(walker.x.clone());
            }
        }
        walker.advance_to(t);
        times.push(t);
        values.push(walker.x.clone());
    }
    ConvolutionPath {
        kind: ConvolutionKind::Jump,
        path: FieldPath { times, values },
    }
}

struct JumpWalker<'a> {
    alphas: &'a [f64],
    mean: Field,
    x: Field,
    now: f64,
}

impl<'a> JumpWalker<'a> {
    fn new(jumps: &JumpSpec, basis: &'a SpectralBasis) -> Self {
        Self {
            alphas: basis.eigenvalues(),
            mean: jumps.mean_field(),
            x: basis.zeros(),
            now: 0.0,
        }
    }

    fn advance_to(&mut self, t: f64) {
        let d = t - self.now;
        if d <= 0.0 {
            return;
        }
        for k in 0..self.x.n_modes() {
            let a = self.alphas[k];
            let relax = -(-a * d).exp_m1();
            self.x[k] = self.x[k] * (1.0 - relax) - self.mean[k] * relax / a;
        }
        self.now = t;
    }
}

/// `C(t) = ∫_0^t S(t-s) h(s) ds` by the exponential left-point rule
/// `C_{j+1} = e^{-αΔ}(C_j + Δ h_j)`.
pub fn deterministic_convolution(grid: &TimeGrid, h: &[Field], basis: &SpectralBasis) -> ConvolutionPath {
    assert_eq!(h.len(), grid.len(), "integrand must be given at every grid point");
    let mut c = basis.zeros();
    let mut values = vec![c.clone()];
    for j in 0..grid.n_steps() {
        exp_left_step(&mut c, &h[j], grid.step(j), basis.eigenvalues());
        values.push(c.clone());
    }
    ConvolutionPath {
        kind: ConvolutionKind::Deterministic,
        path: FieldPath {
            times: grid.times().to_vec(),
            values,
        },
    }
}

#[inline]
pub(crate) fn exp_left_step(c: &mut Field, h: &Field, dt: f64, alphas: &[f64]) {
    for k in 0..c.n_modes() {
        c[k] = (-alphas[k] * dt).exp() * (c[k] + dt * h[k]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_poisson_stream, JumpEvent, Mark};
    use crate::stats::mean_and_se;

    #[test]
    fn zero_noise_gives_zero_paths() {
        let basis = SpectralBasis::new(4).unwrap();
        let grid = TimeGrid::uniform(0.5, 0.01).unwrap();
        let wa = wiener_convolution(&grid, &WienerSpec::zero(4), &basis, 1).unwrap();
        assert!(wa.path.values.iter().all(Field::is_zero));
        let spec = JumpSpec::none(4);
        let st = PoissonStream {
            events: vec![],
            seed: 0,
        };
        let ga = jump_convolution(&grid, &spec, &st, &basis);
        assert!(ga.path.values.iter().all(Field::is_zero));
        let c = deterministic_convolution(&grid, &vec![basis.zeros(); grid.len()], &basis);
        assert!(c.path.values.iter().all(Field::is_zero));
    }

    #[test]
    fn all_convolutions_vanish_at_zero() {
        let basis = SpectralBasis::new(4).unwrap();
        let grid = TimeGrid::uniform(0.5, 0.01).unwrap();
        let wa = wiener_convolution(&grid, &WienerSpec::decay(4, 1.0, 1.0), &basis, 1).unwrap();
        assert!(wa.path.values[0].is_zero());
        let spec = JumpSpec::single(3.0, Field::eigenfunction(4, 1, 1.0));
        let st = sample_poisson_stream(0.5, &spec, 2).unwrap();
        assert!(jump_convolution(&grid, &spec, &st, &basis).path.values[0].is_zero());
    }

    #[test]
    fn mismatched_operator_is_unsupported() {
        let basis = SpectralBasis::new(4).unwrap();
        let grid = TimeGrid::uniform(0.1, 0.01).unwrap();
        let err = wiener_convolution(&grid, &WienerSpec::zero(3), &basis, 1).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
    }

    #[test]
    fn single_mode_variance_matches_ito_isometry() {
        let basis = SpectralBasis::new(1).unwrap();
        let b = 0.8;
        let spec = WienerSpec {
            b: vec![b],
            regularity: crate::noise::Regularity::Smooth,
        };
        let grid = TimeGrid::uniform(0.1, 0.02).unwrap();
        let a = basis.eigenvalues()[0];
        let xs: Vec<f64> = (0..100_000)
            .map(|s| wiener_convolution(&grid, &spec, &basis, s).unwrap().path.last()[0])
            .collect();
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let (var, se) = mean_and_se(&sq);
        let expected = b * b * (1.0 - (-2.0 * a * 0.1).exp()) / (2.0 * a);
        assert!((var - expected).abs() < 3.0 * se, "{var} ± {se} vs {expected}");
    }

    #[test]
    fn stationary_variance() {
        let basis = SpectralBasis::new(1).unwrap();
        let a = basis.eigenvalues()[0];
        let spec = WienerSpec {
            b: vec![1.0],
            regularity: crate::noise::Regularity::Smooth,
        };
        let horizon = 5.0 / a;
        let grid = TimeGrid::new(vec![0.0, horizon / 2.0, horizon]).unwrap();
        let sq: Vec<f64> = (0..100_000)
            .map(|s| wiener_convolution(&grid, &spec, &basis, s).unwrap().path.last()[0].powi(2))
            .collect();
        let (var, se) = mean_and_se(&sq);
        let stationary = 1.0 / (2.0 * a);
        // e^{-10} of the stationary value is still missing at t = 5/α.
        assert!(
            (var - stationary).abs() < 3.0 * se + stationary * 1e-4,
            "{var} vs {stationary}"
        );
    }

    #[test]
    fn refinement_preserves_marginals() {
        let basis = SpectralBasis::new(2).unwrap();
        let spec = WienerSpec::decay(2, 1.0, 0.0);
        let coarse = TimeGrid::uniform(0.2, 0.1).unwrap();
        let fine = TimeGrid::uniform(0.2, 0.01).unwrap();
        for k in 0..2 {
            let c: Vec<f64> = (0..40_000)
                .map(|s| wiener_convolution(&coarse, &spec, &basis, s).unwrap().path.last()[k].powi(2))
                .collect();
            let f: Vec<f64> = (0..40_000)
                .map(|s| {
                    wiener_convolution(&fine, &spec, &basis, 1_000_000 + s)
                        .unwrap()
                        .path
                        .last()[k]
                        .powi(2)
                })
                .collect();
            let (mc, sc) = mean_and_se(&c);
            let (mf, sf) = mean_and_se(&f);
            assert!(
                (mc - mf).abs() < 3.0 * (sc * sc + sf * sf).sqrt(),
                "mode {k}: {mc} vs {mf}"
            );
        }
    }

    #[test]
    fn brownian_and_ou_satisfy_strong_identity() {
        // X(t) + α ∫ X = b W(t): check E over samples of the defect with a fine trapezoid.
        let basis = SpectralBasis::new(1).unwrap();
        let a = basis.eigenvalues()[0];
        let spec = WienerSpec {
            b: vec![1.0],
            regularity: crate::noise::Regularity::Smooth,
        };
        let grid = TimeGrid::uniform(0.5, 1e-4).unwrap();
        let inc = WienerIncrements::sample(&grid, 1, 3);
        let x = wiener_convolution_from(&inc, &spec, &basis).unwrap().path;
        let w = brownian_path(&inc, &spec);
        let mut integral = 0.0;
        for j in 0..grid.n_steps() {
            integral += 0.5 * grid.step(j) * (x.values[j][0] + x.values[j + 1][0]);
        }
        let defect = x.last()[0] + a * integral - w.last()[0];
        assert!(defect.abs() < 2e-2, "{defect}");
    }

    #[test]
    fn compensator_only_drift() {
        let basis = SpectralBasis::new(3).unwrap();
        let g = Field::from_modes(3, &[(1, 1.0), (2, -0.5)]);
        let spec = JumpSpec::single(2.0, g);
        let st = PoissonStream {
            events: vec![],
            seed: 0,
        };
        let grid = TimeGrid::uniform(0.3, 0.1).unwrap();
        let path = jump_convolution(&grid, &spec, &st, &basis).path;
        for (t, v) in path.times.iter().zip(&path.values) {
            for k in 0..3 {
                let a = basis.eigenvalues()[k];
                let gbar = spec.mean_field()[k];
                let expected = -gbar * (1.0 - (-a * t).exp()) / a;
                assert!((v[k] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_jump_two_modes_by_hand() {
        let basis = SpectralBasis::new(2).unwrap();
        let g = Field(vec![0.7, -0.3]);
        let spec = JumpSpec::single(1.5, g.clone());
        let t1 = 0.25;
        let st = PoissonStream {
            events: vec![JumpEvent {
                time: t1,
                mark: Mark::Atom(0),
            }],
            seed: 0,
        };
        let at = [0.0, 0.1, 0.25, 0.4, 1.0];
        let path = jump_convolution_at(&at, &spec, &st, &basis);
        for (i, &t) in at.iter().enumerate() {
            for k in 0..2 {
                let a = (std::f64::consts::PI * (k + 1) as f64).powi(2);
                let comp = 1.5 * g[k] * (1.0 - (-a * t).exp()) / a;
                let jump = if t >= t1 { (-a * (t - t1)).exp() * g[k] } else { 0.0 };
                assert!((path.values[i][k] - (jump - comp)).abs() < 1e-13, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn augmented_path_records_both_sides_of_jumps() {
        let basis = SpectralBasis::new(2).unwrap();
        let g = Field(vec![1.0, 0.0]);
        let spec = JumpSpec::single(1.0, g);
        let st = PoissonStream {
            events: vec![JumpEvent {
                time: 0.15,
                mark: Mark::Atom(0),
            }],
            seed: 0,
        };
        let grid = TimeGrid::uniform(0.3, 0.1).unwrap();
        let path = jump_convolution(&grid, &spec, &st, &basis).path;
        assert_eq!(path.len(), grid.len() + 2);
        let i = path.times.iter().position(|&t| t == 0.15).unwrap();
        assert!((path.values[i + 1][0] - path.values[i][0] - 1.0).abs() < 1e-14);
        // Grid points agree with the direct evaluator.
        let direct = jump_convolution_at(grid.times(), &spec, &st, &basis);
        for (t, v) in direct.times.iter().zip(&direct.values) {
            let j = path.times.iter().rposition(|s| s == t).unwrap();
            assert_eq!(&path.values[j], v);
        }
    }

    #[test]
    fn jump_convolution_is_additive() {
        let basis = SpectralBasis::new(3).unwrap();
        let g1 = Field(vec![0.5, 0.1, 0.0]);
        let g2 = Field(vec![-0.2, 0.3, 0.4]);
        let s1 = JumpSpec::single(4.0, g1.clone());
        let s2 = JumpSpec::single(4.0, g2.clone());
        let s12 = JumpSpec::single(4.0, &g1 + &g2);
        let st = sample_poisson_stream(1.0, &s1, 7).unwrap();
        let grid = TimeGrid::uniform(1.0, 0.05).unwrap();
        let a = jump_convolution_at(grid.times(), &s1, &st, &basis);
        let b = jump_convolution_at(grid.times(), &s2, &st, &basis);
        let c = jump_convolution_at(grid.times(), &s12, &st, &basis);
        assert!(a.add(&b).sup_distance(&c, &basis, 2.0) < 1e-13);
    }

    #[test]
    fn deterministic_constant_integrand() {
        let basis = SpectralBasis::new(1).unwrap();
        let a = basis.eigenvalues()[0];
        let t = 0.5;
        let mut errs = vec![];
        for dt in [1e-2, 5e-3] {
            let grid = TimeGrid::uniform(t, dt).unwrap();
            let h = vec![Field(vec![2.0]); grid.len()];
            let c = deterministic_convolution(&grid, &h, &basis).path;
            let exact = 2.0 / a * (1.0 - (-a * t).exp());
            errs.push((c.last()[0] - exact).abs());
        }
        assert!(errs[0] < 0.1 * 2.0 / a);
        assert!(errs[0] / errs[1] > 1.8);
    }

    #[test]
    fn deterministic_resonant_integrand_is_exact() {
        // h(s) = e^{-αs} e_1 gives C(t) = t e^{-αt}; the left-point
        // exponential rule reproduces it exactly.
        let basis = SpectralBasis::new(1).unwrap();
        let a = basis.eigenvalues()[0];
        let grid = TimeGrid::uniform(0.4, 4e-3).unwrap();
        let h: Vec<Field> = grid.times().iter().map(|s| Field(vec![(-a * s).exp()])).collect();
        let c = deterministic_convolution(&grid, &h, &basis).path;
        for (t, v) in c.times.iter().zip(&c.values) {
            assert!((v[0] - t * (-a * t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_first_order_on_oscillating_integrand() {
        // ∫_0^t e^{-α(t-s)} sin(ωs) ds in closed form.
        let basis = SpectralBasis::new(1).unwrap();
        let a = basis.eigenvalues()[0];
        let w: f64 = 5.0;
        let t = 0.4;
        let exact = (a * (w * t).sin() - w * (w * t).cos() + w * (-a * t).exp()) / (a * a + w * w);
        let err = |dt: f64| {
            let grid = TimeGrid::uniform(t, dt).unwrap();
            let h: Vec<Field> = grid.times().iter().map(|s| Field(vec![(w * s).sin()])).collect();
            let c = deterministic_convolution(&grid, &h, &basis).path;
            (c.last()[0] - exact).abs()
        };
        let (e1, e2, e3) = (err(4e-3), err(2e-3), err(1e-3));
        for r in [e1 / e2, e2 / e3] {
            assert!((1.7..2.3).contains(&r), "ratio {r}");
        }
    }
}
