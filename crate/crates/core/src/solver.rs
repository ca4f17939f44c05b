//! Regularized solves, the `λ → 0` continuation and the approximation of
//! rough data.
//!
//! For fixed `λ` the regularized equation is solved on a time grid by
//! Picard iteration of its mild form. Jumps are hidden: with
//! `v = u - G_A` and `f̃(t, y) = f_λ(y + G_A(t))`, the unknown `v` solves
//!
//! ```text
//! v(t) = S(t) u0 - ∫_0^t S(t-s) f̃(s, v(s)) ds + W_A(t)
//! ```
//!
//! and `u = v + G_A`. The time integral uses the exponential left-point
//! rule, `W_A` and `G_A` are exact at grid points, and the iteration runs
//! on consecutive windows short enough that `(2/λ)·T0` stays below the
//! configured contraction target.

use std::sync::Arc;

use crate::convolution::{
    brownian_path, deterministic_convolution, exp_left_step, jump_convolution_at, wiener_convolution_from, FieldPath,
};
use crate::error::{contract, Error, Result};
use crate::grid::TimeGrid;
use crate::monotone::{MonotoneFn, RootOptions, Yosida};
use crate::noise::{
    norm_g_lmq, sample_poisson_stream, JumpSpec, PoissonStream, Regularity, WienerIncrements, WienerSpec,
};
use crate::spectral::{Field, SpectralBasis};

#[derive(Debug, Clone)]
pub struct Problem {
    pub drift: MonotoneFn,
    pub basis: Arc<SpectralBasis>,
    pub wiener: WienerSpec,
    pub jumps: JumpSpec,
    pub u0: Field,
    /// Declared regularity of the infinite-dimensional family `u0` is cut from.
    pub u0_regularity: Regularity,
    pub grid: TimeGrid,
}

impl Problem {
    pub fn new(
        drift: MonotoneFn,
        basis: Arc<SpectralBasis>,
        wiener: WienerSpec,
        jumps: JumpSpec,
        u0: Field,
        grid: TimeGrid,
    ) -> Result<Self> {
        let n = basis.n_modes();
        if u0.n_modes() != n {
            return Err(contract(format!("u0 has {} modes, basis has {n}", u0.n_modes())));
        }
        if wiener.n_modes() != n {
            return Err(Error::Unsupported(format!(
                "Wiener operator must be diagonal on the {n}-mode basis, got {} coefficients",
                wiener.n_modes()
            )));
        }
        jumps.validate()?;
        if jumps.n_modes() != n {
            return Err(contract(format!(
                "jump fields have {} modes, basis has {n}",
                jumps.n_modes()
            )));
        }
        Ok(Self {
            drift,
            basis,
            wiener,
            jumps,
            u0,
            u0_regularity: Regularity::Smooth,
            grid,
        })
    }

    pub fn with_u0_regularity(mut self, regularity: Regularity) -> Self {
        self.u0_regularity = regularity;
        self
    }

    /// Same data on another time grid.
    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        Self { grid, ..self.clone() }
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn regime(&self) -> Regime {
        let p = self.drift.p();
        let u0_in = |q: f64| self.u0.is_zero() || self.u0_regularity.field_in_lq(q);
        let b_in = self.wiener.is_zero() || self.wiener.regularity.operator_is_gamma();
        let g_in = |q: f64| self.jumps.is_zero() || self.jumps.regularity.field_in_lq(q);
        Regime {
            u0_in_lp: u0_in(p),
            b_in_gamma_lp: b_in,
            g_in_lm_pstar: g_in(self.drift.p_star()),
            u0_in_l2: u0_in(2.0),
            b_in_gamma_l2: b_in,
            g_in_lm_2: g_in(2.0),
        }
    }

    /// One realization of `W` and `μ` for this problem's grid and marks.
    pub fn sample_noise(&self, seed: u64) -> Result<NoiseRealization> {
        let increments = WienerIncrements::sample(&self.grid, self.basis.n_modes(), seed);
        let stream = if self.horizon() > 0.0 {
            sample_poisson_stream(self.horizon(), &self.jumps, seed)?
        } else {
            PoissonStream {
                events: Vec::new(),
                seed,
            }
        };
        Ok(NoiseRealization { increments, stream })
    }

    /// `W_A`, `G_A` and `BW` of `noise` on this problem's grid.
    pub fn noise_paths(&self, noise: &NoiseRealization) -> Result<NoisePaths> {
        if noise.increments.grid != self.grid {
            return Err(contract("noise realization was sampled on a different grid"));
        }
        let wa = wiener_convolution_from(&noise.increments, &self.wiener, &self.basis)?.path;
        let ga = jump_convolution_at(self.grid.times(), &self.jumps, &noise.stream, &self.basis);
        let bw = brownian_path(&noise.increments, &self.wiener);
        Ok(NoisePaths { wa, ga, bw })
    }
}

/// Which integrability hypotheses the data satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Regime {
    pub u0_in_lp: bool,
    pub b_in_gamma_lp: bool,
    pub g_in_lm_pstar: bool,
    pub u0_in_l2: bool,
    pub b_in_gamma_l2: bool,
    pub g_in_lm_2: bool,
}

impl Regime {
    /// `u0 ∈ L_p`, `B ∈ L^γ_p`, `G ∈ L^m_{p*}`: mild solutions exist.
    pub fn strong(&self) -> bool {
        self.u0_in_lp && self.b_in_gamma_lp && self.g_in_lm_pstar
    }

    /// `u0 ∈ L_2`, `B ∈ L^γ_2`, `G ∈ L^m_2`: generalized solutions exist.
    pub fn weak(&self) -> bool {
        self.u0_in_l2 && self.b_in_gamma_l2 && self.g_in_lm_2
    }

    pub fn describe(&self) -> String {
        let flag = |b: bool| if b { "yes" } else { "no" };
        format!(
            "u0 in L_p: {}; B in L^gamma_p: {}; G in L^m_p*: {}; u0 in L_2: {}; B in L^gamma_2: {}; G in L^m_2: {}; mild: {}; generalized: {}",
            flag(self.u0_in_lp),
            flag(self.b_in_gamma_lp),
            flag(self.g_in_lm_pstar),
            flag(self.u0_in_l2),
            flag(self.b_in_gamma_l2),
            flag(self.g_in_lm_2),
            flag(self.strong()),
            flag(self.weak()),
        )
    }
}

/// The raw randomness of one sample: Brownian increments and the Poisson
/// events. Shared across `λ` and across paired problems.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub increments: WienerIncrements,
    pub stream: PoissonStream,
}

/// Noise-driven paths at the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePaths {
    pub wa: FieldPath,
    pub ga: FieldPath,
    pub bw: FieldPath,
}

impl NoisePaths {
    /// Restriction to every `factor`-th grid point; exact, since all three
    /// paths are exact at grid points.
    pub fn subsample(&self, factor: usize) -> Self {
        Self {
            wa: self.wa.subsample(factor),
            ga: self.ga.subsample(factor),
            bw: self.bw.subsample(factor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// Iterate on `v = u - G_A` and add `G_A` back.
    HiddenJumps,
    /// Iterate the mild form on `u` itself.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGuess {
    /// `S(t) u0 + W_A(t)` continued from the previous window.
    Free,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when successive iterates differ by at most this in grid-sup `L_p`.
    pub tol_picard: f64,
    /// Per window.
    pub max_iterations: usize,
    /// Bound on `(2/λ)·T0` used to size the windows.
    pub contraction_target: f64,
    pub root: RootOptions,
    pub formulation: Formulation,
    pub initial_guess: InitialGuess,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_picard: 1e-10,
            max_iterations: 200,
            contraction_target: 0.5,
            root: RootOptions::default(),
            formulation: Formulation::HiddenJumps,
            initial_guess: InitialGuess::Free,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedSolution {
    pub lambda: f64,
    pub u: FieldPath,
    pub v: FieldPath,
    pub wa: FieldPath,
    pub ga: FieldPath,
    /// `∫_0^t S(t-s) f_λ(u(s)) ds` as computed by the scheme.
    pub drift_convolution: FieldPath,
    /// Summed over windows.
    pub picard_iterations: usize,
    pub windows: usize,
    /// Grid-sup `L_p` defect of `u` in the mild form, with the drift term
    /// recomputed from `u`.
    pub residual: f64,
}

/// Evaluates `y ↦ P f_λ(y)` through the grid, with scratch buffers.
struct DriftMap<'a> {
    basis: &'a SpectralBasis,
    yosida: Yosida<'a>,
    coeffs: Vec<f64>,
    values: Vec<f64>,
}

impl<'a> DriftMap<'a> {
    fn new(basis: &'a SpectralBasis, yosida: Yosida<'a>) -> Self {
        Self {
            basis,
            yosida,
            coeffs: vec![0.0; basis.n_modes()],
            values: vec![0.0; basis.n_grid()],
        }
    }

    /// Mode coefficients of `f_λ` applied to the grid values `y`.
    fn apply_grid(&mut self, y: &[f64]) -> Result<Field> {
        for (o, &r) in self.values.iter_mut().zip(y) {
            *o = self.yosida.eval(r)?;
        }
        self.basis.analyze_into(&self.values, &mut self.coeffs);
        Ok(Field(self.coeffs.clone()))
    }

    fn apply(&mut self, y: &Field) -> Result<Field> {
        let grid = self.basis.synthesize(y);
        self.apply_grid(&grid)
    }
}

/// Contraction window length `T0 = target·λ/2`, or the whole horizon when
/// the drift vanishes.
pub fn window_length(drift: &MonotoneFn, lambda: f64, opts: &SolverOptions, grid: &TimeGrid) -> Result<f64> {
    if drift.is_zero() {
        return Ok(grid.horizon().max(grid.max_step()));
    }
    let t0 = opts.contraction_target * lambda / 2.0;
    let dt = grid.max_step();
    if t0 < dt {
        return Err(Error::WindowTooShort { t0, dt, lambda });
    }
    Ok(t0)
}

/// Solve the regularized equation for one `λ` on a fixed noise realization.
pub fn picard_solve(
    problem: &Problem,
    lambda: f64,
    paths: &NoisePaths,
    opts: &SolverOptions,
) -> Result<RegularizedSolution> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(contract(format!("lambda must be > 0, got {lambda}")));
    }
    if !(opts.tol_picard > 0.0) || opts.max_iterations == 0 {
        return Err(contract("Picard tolerance must be > 0 and the iteration cap >= 1"));
    }
    if !(opts.contraction_target > 0.0 && opts.contraction_target < 1.0) {
        return Err(contract(format!(
            "contraction target must lie in (0, 1), got {}",
            opts.contraction_target
        )));
    }
    let grid = &problem.grid;
    let times = grid.times();
    let n = times.len();
    if paths.wa.times != times || paths.ga.times != times {
        return Err(contract("noise paths do not live on the problem grid"));
    }
    let basis = &*problem.basis;
    let p = problem.drift.p();
    let yosida = problem.drift.yosida_approx(lambda, opts.root)?;
    let mut drift = DriftMap::new(basis, yosida);
    let direct = opts.formulation == Formulation::Direct;

    // Everything in the mild form except the drift convolution.
    let free: Vec<Field> = (0..n)
        .map(|j| {
            let mut x = basis.apply_semigroup(times[j], &problem.u0);
            x += &paths.wa.values[j];
            if direct {
                x += &paths.ga.values[j];
            }
            x
        })
        .collect();
    let zero = basis.zeros();
    let shift = |j: usize| if direct { &zero } else { &paths.ga.values[j] };

    let mut phi_all: Vec<Field> = Vec::with_capacity(n);
    let mut conv_all: Vec<Field> = Vec::with_capacity(n);
    phi_all.push(free[0].clone());
    conv_all.push(basis.zeros());
    let mut iterations = 0;
    let mut windows = 0;

    if n > 1 {
        let t0 = window_length(&problem.drift, lambda, opts, grid)?;
        let mut s = 0;
        while s + 1 < n {
            let mut e = s + 1;
            while e + 1 < n && times[e + 1] - times[s] <= t0 * (1.0 + 1e-12) {
                e += 1;
            }
            let c_start = conv_all[s].clone();
            let (phi, conv, its) =
                picard_window(&mut drift, &free, &shift, times, s, e, &c_start, &phi_all[s], p, opts)?;
            phi_all.extend(phi.into_iter().skip(1));
            conv_all.extend(conv.into_iter().skip(1));
            iterations += its;
            windows += 1;
            s = e;
        }
    }

    let phi_path = FieldPath {
        times: times.to_vec(),
        values: phi_all,
    };
    let (u, v) = if direct {
        let v = phi_path.sub(&paths.ga);
        (phi_path, v)
    } else {
        (phi_path.add(&paths.ga), phi_path)
    };
    let drift_convolution = FieldPath {
        times: times.to_vec(),
        values: conv_all,
    };
    let residual = mild_residual(problem, lambda, &u, paths, opts.root)?;
    Ok(RegularizedSolution {
        lambda,
        u,
        v,
        wa: paths.wa.clone(),
        ga: paths.ga.clone(),
        drift_convolution,
        picard_iterations: iterations,
        windows,
        residual,
    })
}

/// Picard iteration on grid indices `s..=e`, with the iterate at `s`
/// and the convolution at `s` known.
#[allow(clippy::too_many_arguments)]
fn picard_window<'s>(
    drift: &mut DriftMap<'_>,
    free: &[Field],
    shift: &dyn Fn(usize) -> &'s Field,
    times: &[f64],
    s: usize,
    e: usize,
    c_start: &Field,
    phi_start: &Field,
    p: f64,
    opts: &SolverOptions,
) -> Result<(Vec<Field>, Vec<Field>, usize)> {
    let basis = drift.basis;
    let alphas = basis.eigenvalues();
    let w = e - s;
    let mut phi: Vec<Field> = Vec::with_capacity(w + 1);
    phi.push(phi_start.clone());
    match opts.initial_guess {
        InitialGuess::Free => {
            let mut c = c_start.clone();
            for i in 0..w {
                exp_left_step(&mut c, &basis.zeros(), times[s + i + 1] - times[s + i], alphas);
                phi.push(&free[s + i + 1] - &c);
            }
        }
        InitialGuess::Zero => phi.extend((0..w).map(|_| basis.zeros())),
    }
    // Grid values of `phi + shift`, and cached drift coefficients.
    let mut values: Vec<Vec<f64>> = phi
        .iter()
        .enumerate()
        .map(|(i, x)| basis.synthesize(&(x + shift(s + i))))
        .collect();
    let mut h: Vec<Field> = vec![basis.zeros(); w];
    let mut stale = vec![true; w];
    let mut conv = vec![c_start.clone(); w + 1];
    let mut fresh = vec![0.0; basis.n_grid()];
    let mut diff = vec![0.0; basis.n_grid()];
    let mut previous_change = f64::INFINITY;
    let mut change = f64::INFINITY;
    for iteration in 1..=opts.max_iterations {
        for i in 0..w {
            if stale[i] {
                h[i] = drift.apply_grid(&values[i])?;
                stale[i] = false;
            }
        }
        previous_change = change;
        change = 0.0;
        let mut c = c_start.clone();
        for i in 0..w {
            exp_left_step(&mut c, &h[i], times[s + i + 1] - times[s + i], alphas);
            let next = &free[s + i + 1] - &c;
            conv[i + 1].clone_from(&c);
            if next != phi[i + 1] {
                basis.synthesize_into((&next + shift(s + i + 1)).coeffs(), &mut fresh);
                for ((d, a), b) in diff.iter_mut().zip(&fresh).zip(&values[i + 1]) {
                    *d = a - b;
                }
                change = f64::max(change, basis.lp_norm_grid(&diff, p));
                std::mem::swap(&mut values[i + 1], &mut fresh);
                phi[i + 1] = next;
                if i + 1 < w {
                    stale[i + 1] = true;
                }
            }
        }
        if change <= opts.tol_picard {
            return Ok((phi, conv, iteration));
        }
        if change.is_nan() {
            break;
        }
    }
    Err(Error::NonContraction {
        window_start: times[s],
        iterations: opts.max_iterations,
        last_change: change,
        lipschitz_estimate: if previous_change.is_finite() && previous_change > 0.0 {
            change / previous_change
        } else {
            f64::NAN
        },
    })
}

/// `max_j ‖u_j - (S(t_j) u0 - C_j + W_A(t_j) + G_A(t_j))‖_{L_p}` with `C`
/// rebuilt from `f_λ(u)`.
fn mild_residual(problem: &Problem, lambda: f64, u: &FieldPath, paths: &NoisePaths, root: RootOptions) -> Result<f64> {
    let basis = &*problem.basis;
    let yosida = problem.drift.yosida_approx(lambda, root)?;
    let mut drift = DriftMap::new(basis, yosida);
    let h = if problem.drift.is_zero() {
        vec![basis.zeros(); u.len()]
    } else {
        u.values.iter().map(|x| drift.apply(x)).collect::<Result<Vec<_>>>()?
    };
    let c = deterministic_convolution(&problem.grid, &h, basis).path;
    let times = problem.grid.times();
    let rebuilt = FieldPath {
        times: times.to_vec(),
        values: (0..times.len())
            .map(|j| {
                let mut x = basis.apply_semigroup(times[j], &problem.u0);
                x -= &c.values[j];
                x += &paths.wa.values[j];
                x += &paths.ga.values[j];
                x
            })
            .collect(),
    };
    Ok(u.sup_distance(&rebuilt, basis, problem.drift.p()))
}

/// `λ`-continuation on one noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct MildSolution {
    /// The solve at the smallest `λ`.
    pub solution: RegularizedSolution,
    pub lambdas: Vec<f64>,
    /// Grid-sup `L_2` distance between consecutive `λ` iterates.
    pub distances: Vec<f64>,
    /// Whether the distances are non-increasing along the schedule.
    pub monotone: bool,
}

pub fn validate_schedule(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(contract("lambda schedule is empty"));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(contract(format!("lambda schedule entries must be > 0, got {l}")));
    }
    if let Some(w) = lambdas.windows(2).find(|w| w[1] >= w[0]) {
        return Err(contract(format!(
            "lambda schedule must be strictly decreasing, got {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `λ_n = first · ratio^n`, `n = 0..count`.
pub fn geometric_schedule(first: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|n| first * ratio.powi(n as i32)).collect()
}

/// Solve along a decreasing `λ` schedule and tabulate how far consecutive
/// solutions are apart.
///
/// Fails with [`Error::NonCauchy`] when every distance exceeds the one
/// before it; a merely non-monotone table is reported in `monotone`.
pub fn solve_mild(
    problem: &Problem,
    lambdas: &[f64],
    paths: &NoisePaths,
    opts: &SolverOptions,
) -> Result<MildSolution> {
    validate_schedule(lambdas)?;
    let regime = problem.regime();
    if !regime.strong() {
        return Err(contract(format!(
            "mild solutions need u0 in L_p, B in L^gamma_p and G in L^m_p* ({}); use the generalized solver",
            regime.describe()
        )));
    }
    let mut previous: Option<RegularizedSolution> = None;
    let mut distances = Vec::with_capacity(lambdas.len().saturating_sub(1));
    for &lambda in lambdas {
        let sol = picard_solve(problem, lambda, paths, opts)?;
        if let Some(prev) = &previous {
            distances.push(prev.u.sup_distance(&sol.u, &problem.basis, 2.0));
        }
        previous = Some(sol);
    }
    let increasing = distances.len() >= 2 && distances.windows(2).all(|w| w[1] > w[0]);
    if increasing {
        return Err(Error::NonCauchy { distances });
    }
    let monotone = distances.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-300);
    Ok(MildSolution {
        solution: previous.unwrap(),
        lambdas: lambdas.to_vec(),
        distances,
        monotone,
    })
}

/// Approximating data for rough problems: amplitude clipping of `u0` and
/// of the mark fields at `levels[n]`, and a mode cutoff `mode_cutoffs[n]`
/// for `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproximationSchedule {
    pub levels: Vec<f64>,
    pub mode_cutoffs: Vec<usize>,
    /// Approximate even data that already allow a mild solution.
    pub force: bool,
}

impl ApproximationSchedule {
    pub fn new(levels: Vec<f64>, mode_cutoffs: Vec<usize>) -> Result<Self> {
        if levels.is_empty() || levels.len() != mode_cutoffs.len() {
            return Err(contract(
                "approximation schedule needs equally many levels and cutoffs, at least one",
            ));
        }
        if let Some(l) = levels.iter().find(|l| !(**l > 0.0)) {
            return Err(contract(format!("clipping levels must be > 0, got {l}")));
        }
        if levels.windows(2).any(|w| w[1] < w[0]) || mode_cutoffs.windows(2).any(|w| w[1] < w[0]) {
            return Err(contract("clipping levels and mode cutoffs must be non-decreasing"));
        }
        Ok(Self {
            levels,
            mode_cutoffs,
            force: false,
        })
    }

    pub fn forced(mut self) -> Self {
        self.force = true;
        self
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Grid values clipped to `[-level, level]`, projected back on the modes.
pub fn clip_field(basis: &SpectralBasis, x: &Field, level: f64) -> Field {
    let mut values = basis.synthesize(x);
    let mut clipped = false;
    for v in &mut values {
        if v.abs() > level {
            *v = v.clamp(-level, level);
            clipped = true;
        }
    }
    if clipped {
        basis.analyze(&values)
    } else {
        x.clone()
    }
}

/// The `n`-th approximating problem. Its data are bounded, hence smooth
/// enough for the mild solver.
pub fn approximate_problem(problem: &Problem, level: f64, cutoff: usize) -> Problem {
    let basis = &*problem.basis;
    let mut wiener = problem.wiener.cutoff(cutoff);
    wiener.regularity = Regularity::Smooth;
    let mut jumps = problem.jumps.map_fields(|g| clip_field(basis, g, level));
    jumps.regularity = Regularity::Smooth;
    Problem {
        drift: problem.drift.clone(),
        basis: problem.basis.clone(),
        wiener,
        jumps,
        u0: clip_field(basis, &problem.u0, level),
        u0_regularity: Regularity::Smooth,
        grid: problem.grid.clone(),
    }
}

/// Squared data distance `‖Δu0‖²_{L_2} + ‖ΔB‖²_{L^γ_2} + ‖ΔG‖²_{L^m_2}`
/// for constant `B` and deterministic `G`.
pub fn data_distance_sq(a: &Problem, b: &Problem) -> Result<f64> {
    let basis = &*a.basis;
    let horizon = a.horizon();
    let du0 = (&a.u0 - &b.u0).norm().powi(2);
    let db = horizon * a.wiener.difference(&b.wiener).b.iter().map(|x| x * x).sum::<f64>();
    let dg = norm_g_lmq(&a.jumps.difference(&b.jumps)?, basis, 2.0, horizon).powi(2);
    Ok(du0 + db + dg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedSolution {
    /// Solve of the last approximating problem.
    pub limit: MildSolution,
    /// Grid-sup `L_2` distance between consecutive approximants' solutions.
    pub distances: Vec<f64>,
    /// Squared data distance between consecutive approximating problems.
    pub data_distances_sq: Vec<f64>,
    /// Whether the data were approximated at all.
    pub approximated: bool,
}

/// Generalized solution as the limit of mild solutions with approximated
/// data, all driven by the same noise realization.
pub fn solve_generalized(
    problem: &Problem,
    schedule: &ApproximationSchedule,
    lambdas: &[f64],
    noise: &NoiseRealization,
    opts: &SolverOptions,
) -> Result<GeneralizedSolution> {
    let regime = problem.regime();
    if !regime.weak() {
        return Err(contract(format!(
            "generalized solutions need u0 in L_2, B in L^gamma_2 and G in L^m_2 ({})",
            regime.describe()
        )));
    }
    validate_schedule(lambdas)?;
    if schedule.is_empty() {
        return Err(contract("approximation schedule is empty"));
    }
    if regime.strong() && !schedule.force {
        let paths = problem.noise_paths(noise)?;
        let limit = solve_mild(problem, lambdas, &paths, opts)?;
        return Ok(GeneralizedSolution {
            limit,
            distances: vec![0.0; schedule.len() - 1],
            data_distances_sq: vec![0.0; schedule.len() - 1],
            approximated: false,
        });
    }
    let mut distances = Vec::new();
    let mut data_distances_sq = Vec::new();
    let mut previous: Option<(Problem, MildSolution)> = None;
    for (&level, &cutoff) in schedule.levels.iter().zip(&schedule.mode_cutoffs) {
        let approx = approximate_problem(problem, level, cutoff);
        let paths = approx.noise_paths(noise)?;
        let sol = solve_mild(&approx, lambdas, &paths, opts)?;
        if let Some((prev_problem, prev_sol)) = &previous {
            distances.push(prev_sol.solution.u.sup_distance(&sol.solution.u, &problem.basis, 2.0));
            data_distances_sq.push(data_distance_sq(prev_problem, &approx)?);
        }
        previous = Some((approx, sol));
    }
    Ok(GeneralizedSolution {
        limit: previous.unwrap().1,
        distances,
        data_distances_sq,
        approximated: true,
    })
}

/// Which noise term the smoothed strong form carries on its right side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrongForm {
    /// `(I + εA)^{-1} B W`, consistent with the equation `w` solves.
    Smoothed,
    /// `B W` unsmoothed.
    Unsmoothed,
}

/// Grid-sup `L_2` defect of
/// `w(t) + ∫_0^t (A w + g) ds = (I+εA)^{-1} u0 + [noise]` for
/// `w = (I+εA)^{-1} v` and `g = (I+εA)^{-1} f_λ(v + G_A)`.
///
/// Per mode and step, `α∫w` uses the rule
/// `(1 - e^{-αΔ}) w_j + (αΔ/2)(w_{j+1} - e^{-αΔ} w_j)`, exact on free
/// decay, and `∫g` the left point.
pub fn strong_residual(
    problem: &Problem,
    solution: &RegularizedSolution,
    paths: &NoisePaths,
    eps: f64,
    form: StrongForm,
    root: RootOptions,
) -> Result<f64> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(contract(format!("smoothing parameter must be > 0, got {eps}")));
    }
    let basis = &*problem.basis;
    let alphas = basis.eigenvalues();
    let n_modes = basis.n_modes();
    let times = problem.grid.times();
    let yosida = problem.drift.yosida_approx(solution.lambda, root)?;
    let mut drift = DriftMap::new(basis, yosida);
    let u0 = basis.resolvent(eps, &problem.u0);
    let mut integral = basis.zeros();
    let mut worst: f64 = 0.0;
    let mut w_prev = basis.resolvent(eps, &solution.v.values[0]);
    let mut g_prev = if problem.drift.is_zero() {
        basis.zeros()
    } else {
        basis.resolvent(eps, &drift.apply(&solution.u.values[0])?)
    };
    let defect = |w: &Field, integral: &Field, j: usize| {
        let noise = match form {
            StrongForm::Smoothed => basis.resolvent(eps, &paths.bw.values[j]),
            StrongForm::Unsmoothed => paths.bw.values[j].clone(),
        };
        (0..n_modes)
            .map(|k| (w[k] + integral[k] - u0[k] - noise[k]).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    worst = worst.max(defect(&w_prev, &integral, 0));
    for j in 0..times.len() - 1 {
        let dt = times[j + 1] - times[j];
        let w = basis.resolvent(eps, &solution.v.values[j + 1]);
        for k in 0..n_modes {
            let a = alphas[k];
            let decay = (-a * dt).exp();
            let aw = (1.0 - decay) * w_prev[k] + 0.5 * a * dt * (w[k] - decay * w_prev[k]);
            integral[k] += aw + dt * g_prev[k];
        }
        worst = worst.max(defect(&w, &integral, j + 1));
        if !problem.drift.is_zero() {
            g_prev = basis.resolvent(eps, &drift.apply(&solution.u.values[j + 1])?);
        }
        w_prev = w;
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Atom;

    fn basis(n: usize) -> Arc<SpectralBasis> {
        Arc::new(SpectralBasis::new(n).unwrap())
    }

    fn noisy_problem(drift: MonotoneFn, n: usize, horizon: f64, dt: f64) -> Problem {
        let b = basis(n);
        let jumps = JumpSpec::atoms(vec![
            Atom {
                weight: 2.0,
                field: Field::from_modes(n, &[(1, 0.5), (3, -0.25)]),
            },
            Atom {
                weight: 1.0,
                field: Field::eigenfunction(n, 2, -0.4),
            },
        ]);
        Problem::new(
            drift,
            b,
            WienerSpec::decay(n, 0.5, 1.0),
            jumps,
            Field::eigenfunction(n, 1, 1.0),
            TimeGrid::uniform(horizon, dt).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_drift_is_free_evolution_in_one_iteration() {
        let pb = noisy_problem(MonotoneFn::zero(), 8, 0.2, 1e-3);
        let paths = pb.noise_paths(&pb.sample_noise(3).unwrap()).unwrap();
        let sol = picard_solve(&pb, 0.1, &paths, &SolverOptions::default()).unwrap();
        assert_eq!(sol.picard_iterations, 1);
        assert_eq!(sol.windows, 1);
        for (j, &t) in pb.grid.times().iter().enumerate() {
            let mut expected = pb.basis.apply_semigroup(t, &pb.u0);
            expected += &paths.wa.values[j];
            expected += &paths.ga.values[j];
            assert!((&sol.u.values[j] - &expected).norm() < 1e-14);
        }
    }

    #[test]
    fn u_is_v_plus_jump_convolution() {
        let pb = noisy_problem(MonotoneFn::cubic(), 8, 0.1, 1e-3);
        let paths = pb.noise_paths(&pb.sample_noise(5).unwrap()).unwrap();
        let sol = picard_solve(&pb, 0.05, &paths, &SolverOptions::default()).unwrap();
        for j in 0..sol.u.len() {
            let back = &sol.v.values[j] + &sol.ga.values[j];
            assert!((&back - &sol.u.values[j]).norm() <= 1e-12);
        }
        assert!(sol.residual <= 1e-9, "mild residual {}", sol.residual);
    }

    #[test]
    fn short_window_is_rejected() {
        let pb = noisy_problem(MonotoneFn::cubic(), 4, 0.1, 1e-2);
        let paths = pb.noise_paths(&pb.sample_noise(1).unwrap()).unwrap();
        let err = picard_solve(&pb, 1e-3, &paths, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, Error::WindowTooShort { .. }));
    }

    #[test]
    fn iteration_cap_reports_non_contraction() {
        let pb = noisy_problem(MonotoneFn::cubic(), 4, 0.1, 1e-3);
        let paths = pb.noise_paths(&pb.sample_noise(1).unwrap()).unwrap();
        let opts = SolverOptions {
            max_iterations: 2,
            initial_guess: InitialGuess::Zero,
            ..SolverOptions::default()
        };
        let err = picard_solve(&pb, 0.1, &paths, &opts).unwrap_err();
        assert!(matches!(err, Error::NonContraction { .. }), "{err:?}");
    }

    #[test]
    fn formulations_and_initial_guesses_agree() {
        let pb = noisy_problem(MonotoneFn::linear_cubic(), 8, 0.1, 1e-3);
        let paths = pb.noise_paths(&pb.sample_noise(9).unwrap()).unwrap();
        let base = SolverOptions::default();
        let hidden = picard_solve(&pb, 0.02, &paths, &base).unwrap();
        let direct = picard_solve(
            &pb,
            0.02,
            &paths,
            &SolverOptions {
                formulation: Formulation::Direct,
                ..base
            },
        )
        .unwrap();
        let zero = picard_solve(
            &pb,
            0.02,
            &paths,
            &SolverOptions {
                initial_guess: InitialGuess::Zero,
                ..base
            },
        )
        .unwrap();
        let p = pb.drift.p();
        assert!(hidden.u.sup_distance(&direct.u, &pb.basis, p) <= 10.0 * base.tol_picard);
        assert!(hidden.u.sup_distance(&zero.u, &pb.basis, p) <= 10.0 * base.tol_picard);
    }

    #[test]
    fn zero_horizon_returns_initial_value() {
        let mut pb = noisy_problem(MonotoneFn::cubic(), 4, 0.1, 1e-2);
        pb.grid = TimeGrid::new(vec![0.0]).unwrap();
        let paths = pb.noise_paths(&pb.sample_noise(1).unwrap()).unwrap();
        let sol = picard_solve(&pb, 0.1, &paths, &SolverOptions::default()).unwrap();
        assert_eq!(sol.u.len(), 1);
        assert_eq!(sol.u.values[0], pb.u0);
    }

    #[test]
    fn schedule_validation() {
        assert!(validate_schedule(&[0.1, 0.05]).is_ok());
        assert!(validate_schedule(&[0.1, 0.1]).is_err());
        assert!(validate_schedule(&[0.1, 0.2]).is_err());
        assert!(validate_schedule(&[0.1, -0.05]).is_err());
        assert!(validate_schedule(&[]).is_err());
        assert_eq!(geometric_schedule(0.1, 0.5, 3), vec![0.1, 0.05, 0.025]);
    }

    #[test]
    fn zero_drift_continuation_is_stationary() {
        let pb = noisy_problem(MonotoneFn::zero(), 4, 0.1, 1e-3);
        let paths = pb.noise_paths(&pb.sample_noise(2).unwrap()).unwrap();
        let sol = solve_mild(&pb, &[0.1, 0.05, 0.025], &paths, &SolverOptions::default()).unwrap();
        assert!(sol.distances.iter().all(|d| *d == 0.0));
        assert!(sol.monotone);
    }

    #[test]
    fn rough_data_are_refused_by_the_mild_solver() {
        let pb =
            noisy_problem(MonotoneFn::cubic(), 4, 0.1, 1e-3).with_u0_regularity(Regularity::PowerLaw { decay: 0.6 });
        assert!(!pb.regime().strong());
        assert!(pb.regime().weak());
        let paths = pb.noise_paths(&pb.sample_noise(2).unwrap()).unwrap();
        assert!(solve_mild(&pb, &[0.1], &paths, &SolverOptions::default()).is_err());
    }

    #[test]
    fn clipping_is_identity_below_level() {
        let b = basis(8);
        let x = Field::eigenfunction(8, 2, 1.0);
        assert_eq!(clip_field(&b, &x, 2.0), x);
        let clipped = clip_field(&b, &x, 0.5);
        let max = b.synthesize(&clipped).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(clipped.norm() < x.norm());
        // Projection back onto the modes overshoots slightly.
        assert!(max < 0.8);
    }

    #[test]
    fn zero_data_give_zero_generalized_solution() {
        let b = basis(4);
        let pb = Problem::new(
            MonotoneFn::cubic(),
            b,
            WienerSpec::zero(4),
            JumpSpec::none(4),
            Field::zeros(4),
            TimeGrid::uniform(0.05, 1e-3).unwrap(),
        )
        .unwrap();
        let noise = pb.sample_noise(4).unwrap();
        let schedule = ApproximationSchedule::new(vec![1.0, 2.0], vec![2, 4]).unwrap().forced();
        let sol = solve_generalized(&pb, &schedule, &[0.1, 0.05], &noise, &SolverOptions::default()).unwrap();
        assert!(sol.limit.solution.u.values.iter().all(Field::is_zero));
        assert!(sol.distances.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn strong_residual_vanishes_for_free_decay() {
        let b = basis(8);
        let pb = Problem::new(
            MonotoneFn::zero(),
            b,
            WienerSpec::zero(8),
            JumpSpec::none(8),
            Field::from_modes(8, &[(1, 1.0), (4, 0.3)]),
            TimeGrid::uniform(0.5, 1e-2).unwrap(),
        )
        .unwrap();
        let paths = pb.noise_paths(&pb.sample_noise(0).unwrap()).unwrap();
        let sol = picard_solve(&pb, 0.1, &paths, &SolverOptions::default()).unwrap();
        let r = strong_residual(&pb, &sol, &paths, 0.01, StrongForm::Smoothed, RootOptions::default()).unwrap();
        assert!(r <= 1e-8, "{r}");
    }
}
