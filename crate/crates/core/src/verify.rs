//! Monte Carlo checks of the moment estimates: the maximal inequality for
//! `G_A`, the `λ`-uniform bound, the Cauchy rate in `λ`, continuity in the
//! data and convergence of the approximated-data solutions.
//!
//! Samples run in parallel, each from its own seed under the master seed,
//! and are reduced in index order, so every number is reproducible
//! bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolution::{jump_convolution, FieldPath};
use crate::error::{contract, Result};
use crate::grid::TimeGrid;
use crate::noise::{norm_g_lmq, sample_poisson_stream, JumpSpec, MarkLaw, WienerSpec};
use crate::oracle::linear_exact;
use crate::rng::sample_seed;
use crate::solver::{
    data_distance_sq, picard_solve, solve_generalized, solve_mild, validate_schedule, ApproximationSchedule, Problem,
    SolverOptions,
};
use crate::spectral::SpectralBasis;
use crate::stats::{fit_through_origin, log_log_slope_bootstrap, mean_and_se, spearman, SlopeFit};

/// Pass/fail thresholds. The estimators never hard-code these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub cauchy_min_slope: f64,
    /// The confidence interval of the slope must lie above this.
    pub cauchy_ci_floor: f64,
    pub ci_level: f64,
    pub bootstrap_resamples: usize,
    pub apriori_max_spread: f64,
    pub bj_max_spearman: f64,
    pub bj_homogeneity_tol: f64,
    /// Relative gap below which ratios count as tied in rank statistics.
    pub tie_tol: f64,
    pub continuity_max_spread: f64,
    /// Each approximation distance may exceed the fitted `C·δ²` by this factor.
    pub generalized_fit_factor: f64,
    pub generalized_agreement_tol: f64,
    /// Allowed sup error of the linear solve, in units of `Δt` times the
    /// noise magnitude.
    pub oracle_error_factor: f64,
    pub oracle_ratio_low: f64,
    pub oracle_ratio_high: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            cauchy_min_slope: 0.8,
            cauchy_ci_floor: 0.4,
            ci_level: 0.95,
            bootstrap_resamples: 1000,
            apriori_max_spread: 2.0,
            bj_max_spearman: 0.5,
            bj_homogeneity_tol: 1e-10,
            tie_tol: 1e-10,
            continuity_max_spread: 2.0,
            generalized_fit_factor: 2.0,
            generalized_agreement_tol: 1e-3,
            oracle_error_factor: 5.0,
            oracle_ratio_low: 1.7,
            oracle_ratio_high: 2.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub master_seed: u64,
}

impl MonteCarlo {
    pub fn new(samples: usize, master_seed: u64) -> Self {
        Self { samples, master_seed }
    }

    pub fn seed(&self, index: usize) -> u64 {
        sample_seed(self.master_seed, index as u64)
    }

    /// `f(seed_i)` for every sample, in sample order.
    pub fn run<T: Send>(&self, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
        if self.samples < 2 {
            return Err(contract(format!(
                "need at least 2 Monte Carlo samples, got {}",
                self.samples
            )));
        }
        (0..self.samples).into_par_iter().map(|i| f(self.seed(i))).collect()
    }
}

/// One Monte Carlo estimate, with the scenario parameters it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario: String,
    /// Column name (with unit) and value.
    pub params: Vec<(String, f64)>,
    pub estimate: f64,
    pub standard_error: f64,
    /// Denominator the estimate is compared against; 1 when none.
    pub reference: f64,
    pub n_samples: usize,
    pub fitted_slope: Option<SlopeFit>,
    pub pass: Option<bool>,
    pub note: String,
}

impl ExperimentReport {
    pub fn ratio(&self) -> f64 {
        self.estimate / self.reference
    }
}

/// The verdict of one experiment over its sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub experiment: String,
    pub rows: Vec<ExperimentReport>,
    /// Headline statistic (spread, slope, ...) and its name.
    pub statistic: f64,
    pub statistic_name: String,
    pub slope: Option<SlopeFit>,
    pub pass: bool,
    pub notes: Vec<String>,
}

/// Plain table ready for CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

impl Outcome {
    /// One row per scenario and parameter value.
    pub fn table(&self) -> Table {
        let mut header = vec!["scenario".to_string()];
        if let Some(first) = self.rows.first() {
            header.extend(first.params.iter().map(|(name, _)| name.clone()));
        }
        header.extend(
            [
                "estimate [1]",
                "standard_error [1]",
                "reference [1]",
                "ratio [1]",
                "n_samples [count]",
                "pass",
                "note",
            ]
            .map(String::from),
        );
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.scenario.clone()];
                row.extend(r.params.iter().map(|(_, v)| num(*v)));
                row.push(num(r.estimate));
                row.push(num(r.standard_error));
                row.push(num(r.reference));
                row.push(num(r.ratio()));
                row.push(r.n_samples.to_string());
                row.push(r.pass.map_or(String::new(), |p| p.to_string()));
                row.push(r.note.clone());
                row
            })
            .collect();
        Table { header, rows }
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {} ({} = {})\n",
            self.experiment,
            if self.pass { "PASS" } else { "FAIL" },
            self.statistic_name,
            self.statistic
        );
        if let Some(fit) = self.slope {
            s += &format!(
                "  slope {:.4} with CI [{:.4}, {:.4}]\n",
                fit.slope, fit.ci_low, fit.ci_high
            );
        }
        for r in &self.rows {
            let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            s += &format!(
                "  {} {}: estimate {:.6e} ± {:.2e}, ratio {:.6e}{}\n",
                r.scenario,
                params.join(" "),
                r.estimate,
                r.standard_error,
                r.ratio(),
                if r.note.is_empty() {
                    String::new()
                } else {
                    format!(" ({})", r.note)
                }
            );
        }
        for n in &self.notes {
            s += &format!("  note: {n}\n");
        }
        s
    }
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else if max == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// `E sup_t ‖x(t)‖^p_{L_q}` over sampled paths.
pub fn estimate_sup_moment(
    paths: &[FieldPath],
    basis: &SpectralBasis,
    p: f64,
    q: f64,
    scenario: &str,
) -> Result<ExperimentReport> {
    if paths.len() < 2 {
        return Err(contract(format!("need at least 2 sample paths, got {}", paths.len())));
    }
    let values: Vec<f64> = paths.iter().map(|x| x.sup_norm(basis, q).powf(p)).collect();
    let (estimate, standard_error) = mean_and_se(&values);
    Ok(ExperimentReport {
        scenario: scenario.to_string(),
        params: vec![("p [1]".into(), p), ("q [1]".into(), q)],
        estimate,
        standard_error,
        reference: 1.0,
        n_samples: paths.len(),
        fitted_slope: None,
        pass: None,
        note: String::new(),
    })
}

/// Maximal inequality for `G_A`: the ratio
/// `E sup ‖G_A‖^q_{L_q} / ‖G‖^q_{L^m_q}` over a sweep of intensities and
/// amplitudes must show no increasing trend, and must not depend on the
/// amplitude at all.
#[allow(clippy::too_many_arguments)]
pub fn check_bj(
    base: &JumpSpec,
    thetas: &[f64],
    amplitudes: &[f64],
    qs: &[f64],
    basis: &SpectralBasis,
    grid: &TimeGrid,
    mc: &MonteCarlo,
    thr: &Thresholds,
) -> Result<Outcome> {
    let horizon = grid.horizon();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let mut pass = true;
    let mut worst_rho: f64 = f64::NEG_INFINITY;
    let mut worst_homogeneity: f64 = 0.0;
    // sup_values[theta][amp][sample][q]
    for &theta in thetas {
        for &amp in amplitudes {
            let spec = base.with_intensity(theta).scaled(amp);
            let sups = mc.run(|seed| {
                let stream = sample_poisson_stream(horizon, &spec, seed)?;
                let path = jump_convolution(grid, &spec, &stream, basis).path;
                Ok(qs
                    .iter()
                    .map(|&q| path.sup_norm(basis, q).powf(q))
                    .collect::<Vec<f64>>())
            })?;
            for (qi, &q) in qs.iter().enumerate() {
                let values: Vec<f64> = sups.iter().map(|s| s[qi]).collect();
                let (estimate, standard_error) = mean_and_se(&values);
                let reference = norm_g_lmq(&spec, basis, q, horizon).powf(q);
                let skipped = !(reference > 0.0);
                rows.push(ExperimentReport {
                    scenario: "bj".into(),
                    params: vec![
                        ("q [1]".into(), q),
                        ("theta [1/time]".into(), theta),
                        ("amplitude [1]".into(), amp),
                    ],
                    estimate,
                    standard_error,
                    reference: if skipped { f64::NAN } else { reference },
                    n_samples: mc.samples,
                    fitted_slope: None,
                    pass: None,
                    note: if skipped {
                        "zero integrand norm, skipped".into()
                    } else {
                        String::new()
                    },
                });
            }
        }
    }
    for &q in qs {
        let sel: Vec<&ExperimentReport> = rows
            .iter()
            .filter(|r| r.params[0].1 == q && r.reference.is_finite())
            .collect();
        if sel.len() < 2 {
            notes.push(format!("q={q}: fewer than 2 usable scenarios"));
            continue;
        }
        let ratios: Vec<f64> = sel.iter().map(|r| r.ratio()).collect();
        let th: Vec<f64> = sel.iter().map(|r| r.params[1].1).collect();
        let am: Vec<f64> = sel.iter().map(|r| r.params[2].1).collect();
        let rho_theta = spearman(&th, &ratios, thr.tie_tol);
        let rho_amp = spearman(&am, &ratios, thr.tie_tol);
        worst_rho = worst_rho.max(rho_theta).max(rho_amp);
        notes.push(format!(
            "q={q}: Spearman vs theta {rho_theta:.4}, vs amplitude {rho_amp:.4}"
        ));
        if rho_theta > thr.bj_max_spearman || rho_amp > thr.bj_max_spearman {
            pass = false;
        }
        for &theta in thetas {
            let same: Vec<f64> = sel
                .iter()
                .filter(|r| r.params[1].1 == theta)
                .map(|r| r.ratio())
                .collect();
            if let Some(&first) = same.first() {
                for r in &same {
                    worst_homogeneity = worst_homogeneity.max((r - first).abs() / first.abs());
                }
            }
        }
    }
    notes.push(format!("worst relative amplitude dependence {worst_homogeneity:e}"));
    if worst_homogeneity > thr.bj_homogeneity_tol {
        pass = false;
    }
    Ok(Outcome {
        experiment: "bj".into(),
        rows,
        statistic: worst_rho,
        statistic_name: "max Spearman correlation".into(),
        slope: None,
        pass,
        notes,
    })
}

/// `λ`-uniform bound: `E sup ‖u_λ‖^p_{L_p} / (1 + ‖u0‖^p_{L_p})` for every
/// `λ`, with a common noise realization per sample.
pub fn check_apriori(
    problem: &Problem,
    lambdas: &[f64],
    mc: &MonteCarlo,
    opts: &SolverOptions,
    thr: &Thresholds,
) -> Result<Outcome> {
    validate_schedule(lambdas)?;
    let basis = &*problem.basis;
    let p = problem.drift.p();
    let reference = 1.0 + basis.lp_norm(&problem.u0, p).powf(p);
    let sups = mc.run(|seed| {
        let paths = problem.noise_paths(&problem.sample_noise(seed)?)?;
        lambdas
            .iter()
            .map(|&l| Ok(picard_solve(problem, l, &paths, opts)?.u.sup_norm(basis, p).powf(p)))
            .collect::<Result<Vec<f64>>>()
    })?;
    let rows: Vec<ExperimentReport> = lambdas
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let values: Vec<f64> = sups.iter().map(|s| s[j]).collect();
            let (estimate, standard_error) = mean_and_se(&values);
            ExperimentReport {
                scenario: "apriori".into(),
                params: vec![("lambda [1]".into(), l), ("p [1]".into(), p)],
                estimate,
                standard_error,
                reference,
                n_samples: mc.samples,
                fitted_slope: None,
                pass: None,
                note: String::new(),
            }
        })
        .collect();
    let ratios: Vec<f64> = rows.iter().map(ExperimentReport::ratio).collect();
    let s = spread(&ratios);
    Ok(Outcome {
        experiment: "apriori".into(),
        rows,
        statistic: s,
        statistic_name: "max/min ratio across lambda".into(),
        slope: None,
        pass: s <= thr.apriori_max_spread,
        notes: Vec::new(),
    })
}

/// Cauchy rate: regression of `log E sup ‖u_λ - u_{λ'}‖²_{L_2}` on `log λ`
/// for consecutive schedule entries, on common noise.
pub fn check_cauchy_rate(
    problem: &Problem,
    lambdas: &[f64],
    mc: &MonteCarlo,
    opts: &SolverOptions,
    thr: &Thresholds,
) -> Result<Outcome> {
    validate_schedule(lambdas)?;
    if lambdas.len() < 3 {
        return Err(contract("Cauchy rate needs at least 3 lambda values"));
    }
    let basis = &*problem.basis;
    let rows_by_sample = mc.run(|seed| {
        let paths = problem.noise_paths(&problem.sample_noise(seed)?)?;
        let sols = lambdas
            .iter()
            .map(|&l| picard_solve(problem, l, &paths, opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(sols
            .windows(2)
            .map(|w| w[0].u.sup_distance(&w[1].u, basis, 2.0).powi(2))
            .collect::<Vec<f64>>())
    })?;
    let pairs = lambdas.len() - 1;
    let mut rows = Vec::with_capacity(pairs);
    let mut means = Vec::with_capacity(pairs);
    for j in 0..pairs {
        let values: Vec<f64> = rows_by_sample.iter().map(|r| r[j]).collect();
        let (estimate, standard_error) = mean_and_se(&values);
        means.push(estimate);
        rows.push(ExperimentReport {
            scenario: "cauchy".into(),
            params: vec![("lambda [1]".into(), lambdas[j]), ("mu [1]".into(), lambdas[j + 1])],
            estimate,
            standard_error,
            reference: 1.0,
            n_samples: mc.samples,
            fitted_slope: None,
            pass: None,
            note: String::new(),
        });
    }
    let mut notes = Vec::new();
    if means.iter().all(|m| *m == 0.0) {
        notes.push("all iterates agree exactly; slope undefined".into());
        return Ok(Outcome {
            experiment: "cauchy".into(),
            rows,
            statistic: f64::NAN,
            statistic_name: "slope".into(),
            slope: None,
            pass: true,
            notes,
        });
    }
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    if !monotone {
        notes.push(format!("distance table is not decreasing: {means:?}"));
    }
    let fit = log_log_slope_bootstrap(
        &lambdas[..pairs],
        &rows_by_sample,
        thr.ci_level,
        thr.bootstrap_resamples,
        mc.master_seed,
    );
    let pass = match fit {
        Some(f) => monotone && f.slope >= thr.cauchy_min_slope && f.ci_low > thr.cauchy_ci_floor,
        None => {
            notes.push("some mean distance is zero; no log-log fit".into());
            false
        }
    };
    if let (Some(f), Some(first)) = (fit, rows.first_mut()) {
        first.fitted_slope = Some(f);
    }
    Ok(Outcome {
        experiment: "cauchy".into(),
        rows,
        statistic: fit.map_or(f64::NAN, |f| f.slope),
        statistic_name: "slope".into(),
        slope: fit,
        pass,
        notes,
    })
}

/// `base` with its data moved a fraction `s` of the way to `target`.
pub fn perturbed_problem(base: &Problem, target: &Problem, s: f64) -> Result<Problem> {
    let mut u0 = base.u0.scaled(1.0 - s);
    u0.axpy(s, &target.u0);
    let b = base
        .wiener
        .b
        .iter()
        .zip(&target.wiener.b)
        .map(|(x, y)| (1.0 - s) * x + s * y)
        .collect();
    Ok(Problem {
        u0,
        wiener: WienerSpec {
            b,
            regularity: base.wiener.regularity,
        },
        jumps: base.jumps.interpolate(&target.jumps, s)?,
        ..base.clone()
    })
}

/// Continuity in the data: `E sup ‖u_1 - u_2‖²_{L_2}` over the squared data
/// distance, for perturbations of `base` towards `target` scaled by each
/// of `scales`. Both problems share every noise realization.
pub fn check_data_continuity(
    base: &Problem,
    target: &Problem,
    scales: &[f64],
    lambda: f64,
    mc: &MonteCarlo,
    opts: &SolverOptions,
    thr: &Thresholds,
) -> Result<Outcome> {
    let basis = &*base.basis;
    let problems = scales
        .iter()
        .map(|&s| perturbed_problem(base, target, s))
        .collect::<Result<Vec<_>>>()?;
    let data = problems
        .iter()
        .map(|p| data_distance_sq(base, p))
        .collect::<Result<Vec<_>>>()?;
    let dists = mc.run(|seed| {
        let noise = base.sample_noise(seed)?;
        let reference = picard_solve(base, lambda, &base.noise_paths(&noise)?, opts)?;
        problems
            .iter()
            .zip(&data)
            .map(|(p, d)| {
                if *d == 0.0 {
                    return Ok(0.0);
                }
                let sol = picard_solve(p, lambda, &p.noise_paths(&noise)?, opts)?;
                Ok(reference.u.sup_distance(&sol.u, basis, 2.0).powi(2))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut rows = Vec::new();
    for (j, &s) in scales.iter().enumerate() {
        let values: Vec<f64> = dists.iter().map(|r| r[j]).collect();
        let (estimate, standard_error) = mean_and_se(&values);
        let skipped = data[j] == 0.0;
        rows.push(ExperimentReport {
            scenario: "continuity".into(),
            params: vec![("scale [1]".into(), s), ("lambda [1]".into(), lambda)],
            estimate,
            standard_error,
            reference: if skipped { f64::NAN } else { data[j] },
            n_samples: mc.samples,
            fitted_slope: None,
            pass: None,
            note: if skipped {
                "zero perturbation, skipped".into()
            } else {
                String::new()
            },
        });
    }
    let ratios: Vec<f64> = rows
        .iter()
        .filter(|r| r.reference.is_finite())
        .map(ExperimentReport::ratio)
        .collect();
    let s = if ratios.is_empty() { f64::NAN } else { spread(&ratios) };
    Ok(Outcome {
        experiment: "continuity".into(),
        rows,
        statistic: s,
        statistic_name: "max/min ratio across scales".into(),
        slope: None,
        pass: s <= thr.continuity_max_spread,
        notes: Vec::new(),
    })
}

/// Approximated-data convergence: the mean squared distances `D_n`
/// between consecutive approximants' solutions against the squared data
/// distances `δ_n²`. A single constant `C` is fitted by least squares
/// through the origin; the check passes when every `D_n ≤ factor·C·δ_n²`.
pub fn check_generalized(
    problem: &Problem,
    schedule: &ApproximationSchedule,
    lambdas: &[f64],
    mc: &MonteCarlo,
    opts: &SolverOptions,
    thr: &Thresholds,
) -> Result<Outcome> {
    let results = mc.run(|seed| {
        let noise = problem.sample_noise(seed)?;
        let g = solve_generalized(problem, schedule, lambdas, &noise, opts)?;
        Ok((g.distances, g.data_distances_sq))
    })?;
    let data = results[0].1.clone();
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for (j, &d) in data.iter().enumerate() {
        let values: Vec<f64> = results.iter().map(|r| r.0[j].powi(2)).collect();
        let (estimate, standard_error) = mean_and_se(&values);
        means.push(estimate);
        rows.push(ExperimentReport {
            scenario: "generalized".into(),
            params: vec![
                ("step [index]".into(), j as f64),
                ("level [1]".into(), schedule.levels[j + 1]),
                ("mode_cutoff [count]".into(), schedule.mode_cutoffs[j + 1] as f64),
            ],
            estimate,
            standard_error,
            reference: d,
            n_samples: mc.samples,
            fitted_slope: None,
            pass: None,
            note: String::new(),
        });
    }
    let mut notes = Vec::new();
    let (c, worst) = match fit_through_origin(&data, &means) {
        Some(c) if c > 0.0 => {
            let worst = means
                .iter()
                .zip(&data)
                .map(|(m, d)| {
                    if *d > 0.0 {
                        m / (c * d)
                    } else if *m > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            (c, worst)
        }
        _ => {
            let all_zero = means.iter().all(|m| *m == 0.0);
            notes.push("no data movement to fit against".into());
            (0.0, if all_zero { 0.0 } else { f64::INFINITY })
        }
    };
    notes.push(format!("fitted constant C = {c:e}"));
    Ok(Outcome {
        experiment: "generalized".into(),
        rows,
        statistic: worst,
        statistic_name: "max D_n / (C delta_n^2)".into(),
        slope: None,
        pass: worst <= thr.generalized_fit_factor,
        notes,
    })
}

/// For data smooth enough for both routes, the approximated-data limit and
/// the direct `λ`-continuation must agree; returns the largest grid-sup
/// `L_2` distance over the samples.
pub fn check_generalized_agreement(
    problem: &Problem,
    schedule: &ApproximationSchedule,
    lambdas: &[f64],
    mc: &MonteCarlo,
    opts: &SolverOptions,
    thr: &Thresholds,
) -> Result<Outcome> {
    if !problem.regime().strong() {
        return Err(contract("agreement check needs data that also allow a mild solution"));
    }
    let forced = ApproximationSchedule {
        force: true,
        ..schedule.clone()
    };
    let basis = &*problem.basis;
    let dists = mc.run(|seed| {
        let noise = problem.sample_noise(seed)?;
        let g = solve_generalized(problem, &forced, lambdas, &noise, opts)?;
        let m = solve_mild(problem, lambdas, &problem.noise_paths(&noise)?, opts)?;
        Ok(g.limit.solution.u.sup_distance(&m.solution.u, basis, 2.0))
    })?;
    let (estimate, standard_error) = mean_and_se(&dists);
    let worst = dists.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        experiment: "generalized_agreement".into(),
        rows: vec![ExperimentReport {
            scenario: "generalized_agreement".into(),
            params: vec![("lambda [1]".into(), *lambdas.last().unwrap())],
            estimate,
            standard_error,
            reference: 1.0,
            n_samples: mc.samples,
            fitted_slope: None,
            pass: Some(worst <= thr.generalized_agreement_tol),
            note: format!("max over samples {worst:e}"),
        }],
        statistic: worst,
        statistic_name: "max grid-sup L2 distance".into(),
        slope: None,
        pass: worst <= thr.generalized_agreement_tol,
        notes: Vec::new(),
    })
}

/// Size of the noise: largest `b_k` plus the largest `‖G(z)‖_{L_2}`, or 1
/// when there is no noise at all.
pub fn noise_magnitude(problem: &Problem) -> f64 {
    let b = problem.wiener.b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let g = match &problem.jumps.law {
        MarkLaw::Atoms(atoms) => atoms
            .iter()
            .filter(|a| a.weight > 0.0)
            .fold(0.0f64, |m, a| m.max(a.field.norm())),
        MarkLaw::Uniform { rate, lo, hi, shape } => {
            if *rate > 0.0 {
                lo.abs().max(hi.abs()) * shape.norm()
            } else {
                0.0
            }
        }
    };
    if b + g > 0.0 {
        b + g
    } else {
        1.0
    }
}

/// Linear drift against its exact solution: grid-sup `L_2` error of the
/// solver at the problem's `Δt` and at `Δt/2`, on common noise sampled on
/// the finer grid. Passes when every sample's error is at most
/// `factor·Δt·magnitude` and the mean error ratio lies in the declared band.
pub fn check_linear_oracle(
    problem: &Problem,
    lambda: f64,
    mc: &MonteCarlo,
    opts: &SolverOptions,
    thr: &Thresholds,
) -> Result<Outcome> {
    let dt = problem.horizon() / problem.grid.n_steps() as f64;
    let fine = problem.with_grid(TimeGrid::uniform(problem.horizon(), dt / 2.0)?);
    let coarse_grid = fine.grid.subsample(2)?;
    if coarse_grid.times().len() != problem.grid.len() {
        return Err(contract("linear oracle check needs a uniform grid"));
    }
    let coarse = fine.with_grid(coarse_grid);
    let basis = &*problem.basis;
    let errors = mc.run(|seed| {
        let noise = fine.sample_noise(seed)?;
        let exact = linear_exact(&fine, lambda, &noise)?;
        let paths = fine.noise_paths(&noise)?;
        let on_coarse = picard_solve(&coarse, lambda, &paths.subsample(2), opts)?;
        let on_fine = picard_solve(&fine, lambda, &paths, opts)?;
        Ok([
            on_coarse.u.sup_distance(&exact.subsample(2), basis, 2.0),
            on_fine.u.sup_distance(&exact, basis, 2.0),
        ])
    })?;
    let magnitude = noise_magnitude(problem);
    let mut rows = Vec::new();
    let mut within = true;
    for (j, step) in [dt, dt / 2.0].into_iter().enumerate() {
        let values: Vec<f64> = errors.iter().map(|e| e[j]).collect();
        let (estimate, standard_error) = mean_and_se(&values);
        let worst = values.iter().copied().fold(0.0, f64::max);
        let ok = worst <= thr.oracle_error_factor * step * magnitude;
        within &= ok;
        rows.push(ExperimentReport {
            scenario: "oracle".into(),
            params: vec![("dt [time]".into(), step), ("lambda [1]".into(), lambda)],
            estimate,
            standard_error,
            reference: step * magnitude,
            n_samples: mc.samples,
            fitted_slope: None,
            pass: Some(ok),
            note: format!("max over samples {worst:e}"),
        });
    }
    let ratio = rows[0].estimate / rows[1].estimate;
    let in_band = ratio >= thr.oracle_ratio_low && ratio <= thr.oracle_ratio_high;
    Ok(Outcome {
        experiment: "oracle".into(),
        rows,
        statistic: ratio,
        statistic_name: "error ratio under dt halving".into(),
        slope: None,
        pass: within && in_band,
        notes: vec![format!("noise magnitude {magnitude}")],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::monotone::MonotoneFn;
    use crate::spectral::Field;

    #[test]
    fn deterministic_paths_have_exact_moment() {
        let basis = SpectralBasis::new(4).unwrap();
        let path = FieldPath::constant(&[0.0, 0.5, 1.0], &Field::eigenfunction(4, 1, 2.0));
        let r = estimate_sup_moment(&[path.clone(), path], &basis, 2.0, 2.0, "det").unwrap();
        assert_eq!(r.estimate, 4.0);
        assert_eq!(r.standard_error, 0.0);
        let zero = FieldPath::constant(&[0.0, 1.0], &Field::zeros(4));
        let r = estimate_sup_moment(&[zero.clone(), zero], &basis, 4.0, 4.0, "zero").unwrap();
        assert_eq!(r.estimate, 0.0);
    }

    #[test]
    fn one_sample_is_refused() {
        assert!(MonteCarlo::new(1, 0).run(Ok).is_err());
        let out = MonteCarlo::new(4, 9).run(Ok).unwrap();
        assert_eq!(out, MonteCarlo::new(4, 9).run(Ok).unwrap());
    }

    fn deterministic(drift: MonotoneFn) -> Problem {
        Problem::new(
            drift,
            Arc::new(SpectralBasis::new(4).unwrap()),
            WienerSpec::zero(4),
            JumpSpec::none(4),
            Field::eigenfunction(4, 1, 1.0),
            TimeGrid::uniform(0.2, 1e-3).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn free_decay_apriori_ratio_is_lambda_independent() {
        let pb = deterministic(MonotoneFn::zero());
        let out = check_apriori(
            &pb,
            &[0.1, 0.05],
            &MonteCarlo::new(2, 1),
            &SolverOptions::default(),
            &Thresholds::default(),
        )
        .unwrap();
        assert!(out.pass);
        assert_eq!(out.statistic, 1.0);
        assert!(out.rows.iter().all(|r| r.ratio() <= 1.0));
    }

    #[test]
    fn zero_drift_cauchy_is_exact() {
        let pb = deterministic(MonotoneFn::zero());
        let out = check_cauchy_rate(
            &pb,
            &[0.1, 0.05, 0.025],
            &MonteCarlo::new(2, 1),
            &SolverOptions::default(),
            &Thresholds::default(),
        )
        .unwrap();
        assert!(out.pass);
        assert!(out.slope.is_none());
    }

    #[test]
    fn identical_data_are_skipped_and_u0_only_ratio_is_at_most_one() {
        let base = deterministic(MonotoneFn::zero());
        let mut target = base.clone();
        target.u0 = Field::from_modes(4, &[(1, 1.0), (2, 0.3)]);
        let out = check_data_continuity(
            &base,
            &target,
            &[1.0, 0.5, 0.0],
            0.1,
            &MonteCarlo::new(2, 1),
            &SolverOptions::default(),
            &Thresholds::default(),
        )
        .unwrap();
        assert!(out.rows[2].note.contains("skipped"));
        assert!(out.rows[..2].iter().all(|r| r.ratio() <= 1.0 + 1e-12));
    }

    #[test]
    fn bj_zero_integrand_is_skipped() {
        let basis = SpectralBasis::new(4).unwrap();
        let grid = TimeGrid::uniform(0.5, 1e-2).unwrap();
        let out = check_bj(
            &JumpSpec::single(1.0, Field::zeros(4)),
            &[1.0, 4.0],
            &[1.0],
            &[2.0],
            &basis,
            &grid,
            &MonteCarlo::new(2, 3),
            &Thresholds::default(),
        )
        .unwrap();
        assert!(out.rows.iter().all(|r| r.note.contains("skipped")));
    }
}
