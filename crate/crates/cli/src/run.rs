//! Experiments the binary can run, each turned into tables and a summary.

use std::fmt;

use anyhow::{bail, Result};
use yosida_core::solver::{picard_solve, solve_mild, ApproximationSchedule};
use yosida_core::verify::{
    check_apriori, check_bj, check_cauchy_rate, check_data_continuity, check_generalized, check_generalized_agreement,
    check_linear_oracle,
};
use yosida_core::{Outcome, Table};

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    Converge,
    Bj,
    Apriori,
    Continuity,
    Oracle,
    Generalized,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Simulate => "simulate",
            Experiment::Converge => "converge",
            Experiment::Bj => "bj",
            Experiment::Apriori => "apriori",
            Experiment::Continuity => "continuity",
            Experiment::Oracle => "oracle",
            Experiment::Generalized => "generalized",
        })
    }
}

/// What a run produces before it is written out.
#[derive(Debug, Clone)]
pub struct Artifacts {
    /// File stem and table, one CSV each.
    pub tables: Vec<(String, Table)>,
    pub summary: String,
    /// `None` for runs that only produce data.
    pub pass: Option<bool>,
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn lambda_tag(lambda: f64) -> String {
    format!("lambda_{lambda:e}")
}

fn from_outcomes(outcomes: Vec<(String, Outcome)>) -> Artifacts {
    let pass = outcomes.iter().all(|(_, o)| o.pass);
    let summary = outcomes.iter().map(|(_, o)| o.summary()).collect();
    Artifacts {
        tables: outcomes.into_iter().map(|(name, o)| (name, o.table())).collect(),
        summary,
        pass: Some(pass),
    }
}

pub fn run(experiment: Experiment, scenario: &Scenario) -> Result<Artifacts> {
    let problem = scenario.problem()?;
    let lambdas = &scenario.solver.lambdas;
    let smallest = *lambdas.last().expect("validated schedule");
    let mc = scenario.monte_carlo();
    let opts = scenario.solver_options();
    let thr = &scenario.thresholds;
    let artifacts = match experiment {
        Experiment::Simulate => simulate(scenario)?,
        Experiment::Converge => {
            let paths = problem.noise_paths(&problem.sample_noise(mc.seed(0))?)?;
            let mild = solve_mild(&problem, lambdas, &paths, &opts)?;
            let continuation = Table {
                header: vec![
                    "lambda [1]".into(),
                    "previous_lambda [1]".into(),
                    "sup_l2_distance [field]".into(),
                ],
                rows: mild
                    .distances
                    .iter()
                    .enumerate()
                    .map(|(i, d)| vec![num(mild.lambdas[i + 1]), num(mild.lambdas[i]), num(*d)])
                    .collect(),
            };
            let mut a = from_outcomes(vec![(
                "cauchy".into(),
                check_cauchy_rate(&problem, lambdas, &mc, &opts, thr)?,
            )]);
            a.summary = format!(
                "continuation of sample 0: distances {} along the schedule\n{}",
                if mild.monotone {
                    "non-increasing"
                } else {
                    "not monotone"
                },
                a.summary
            );
            a.tables.insert(0, ("continuation".into(), continuation));
            a
        }
        Experiment::Bj => {
            let b = &scenario.bj;
            from_outcomes(vec![(
                "bj".into(),
                check_bj(
                    &problem.jumps,
                    &b.thetas,
                    &b.amplitudes,
                    &b.q,
                    &problem.basis,
                    &problem.grid,
                    &mc,
                    thr,
                )?,
            )])
        }
        Experiment::Apriori => from_outcomes(vec![(
            "apriori".into(),
            check_apriori(&problem, lambdas, &mc, &opts, thr)?,
        )]),
        Experiment::Continuity => {
            let target = scenario.continuity_target(&problem);
            from_outcomes(vec![(
                format!("continuity_{}", lambda_tag(smallest)),
                check_data_continuity(
                    &problem,
                    &target,
                    &scenario.continuity.scales,
                    smallest,
                    &mc,
                    &opts,
                    thr,
                )?,
            )])
        }
        Experiment::Oracle => {
            if problem.drift.linear_slope().is_none() {
                bail!(
                    "oracle needs drift.name = \"linear\" (or \"zero\"), got `{}`",
                    scenario.drift.name
                );
            }
            from_outcomes(vec![(
                format!("oracle_{}", lambda_tag(smallest)),
                check_linear_oracle(&problem, smallest, &mc, &opts, thr)?,
            )])
        }
        Experiment::Generalized => {
            let schedule = scenario.schedule()?;
            let strong = problem.regime().strong();
            // Smooth data would short-circuit to the mild solution; approximate
            // them anyway so the table has content, and compare both routes.
            let schedule = if strong {
                ApproximationSchedule {
                    force: true,
                    ..schedule
                }
            } else {
                schedule
            };
            let mut outcomes = vec![(
                "generalized".into(),
                check_generalized(&problem, &schedule, lambdas, &mc, &opts, thr)?,
            )];
            if strong {
                outcomes.push((
                    "generalized_agreement".into(),
                    check_generalized_agreement(&problem, &schedule, lambdas, &mc, &opts, thr)?,
                ));
            }
            from_outcomes(outcomes)
        }
    };
    Ok(artifacts)
}

/// One path per `λ` on common noise, every mode at every grid time.
fn simulate(scenario: &Scenario) -> Result<Artifacts> {
    let problem = scenario.problem()?;
    let opts = scenario.solver_options();
    let noise = problem.sample_noise(scenario.monte_carlo().seed(0))?;
    let paths = problem.noise_paths(&noise)?;
    let p = problem.drift.p();
    let basis = &*problem.basis;
    let mut tables = Vec::new();
    let mut summary = String::new();
    for &lambda in &scenario.solver.lambdas {
        let sol = picard_solve(&problem, lambda, &paths, &opts)?;
        let mut header = vec!["time [time]".to_string(), "l2_norm [field]".to_string()];
        if p != 2.0 {
            header.push(format!("l{p}_norm [field]"));
        }
        header.extend((1..=basis.n_modes()).map(|k| format!("u_{k} [field]")));
        let rows = sol
            .u
            .times
            .iter()
            .zip(&sol.u.values)
            .map(|(t, u)| {
                let mut row = vec![num(*t), num(basis.lp_norm(u, 2.0))];
                if p != 2.0 {
                    row.push(num(basis.lp_norm(u, p)));
                }
                row.extend(u.coeffs().iter().map(|c| num(*c)));
                row
            })
            .collect();
        summary += &format!(
            "simulate lambda={lambda}: {} Picard iterations over {} windows, residual {:e}, sup L2 norm {:e}\n",
            sol.picard_iterations,
            sol.windows,
            sol.residual,
            sol.u.sup_norm(basis, 2.0)
        );
        tables.push((format!("simulate_{}", lambda_tag(lambda)), Table { header, rows }));
    }
    Ok(Artifacts {
        tables,
        summary,
        pass: None,
    })
}
