//! Scenario files: every input of a run, with explicit defaults.
//!
//! A scenario is TOML with one table per concern. The file is merged key by
//! key over the defaults, then `--set section.key=value` overrides are
//! merged on top, and only then is the document typed and validated.
//! Arrays (the jump atoms, for instance) are replaced whole.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use yosida_core::solver::{ApproximationSchedule, Formulation, InitialGuess};
use yosida_core::{
    Atom, Field, JumpSpec, MonotoneFn, MonteCarlo, Problem, Regularity, RootOptions, SolverOptions, SpectralBasis,
    Thresholds, TimeGrid, WienerSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub run: RunSection,
    pub drift: DriftSection,
    pub space: SpaceSection,
    pub time: TimeSection,
    pub wiener: WienerSection,
    pub jumps: JumpSection,
    pub u0: FieldSpec,
    pub solver: SolverSection,
    pub bj: BjSection,
    pub continuity: ContinuitySection,
    pub generalized: GeneralizedSection,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub samples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 20261016,
            samples: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSection {
    /// One of `zero`, `linear`, `cubic`, `power`, `linear_cubic`.
    pub name: String,
    /// Slope of the `linear` drift.
    pub c: f64,
    /// Exponent of the `power` drift `|r|^{p-2} r`.
    pub p: f64,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            name: "cubic".into(),
            c: 1.0,
            p: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceSection {
    pub n_modes: usize,
    /// Quadrature points for the `L_p` norms; 0 means `4·n_modes`.
    pub n_grid: usize,
}

impl Default for SpaceSection {
    fn default() -> Self {
        Self { n_modes: 32, n_grid: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
    pub dt: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { horizon: 1.0, dt: 1e-3 }
    }
}

/// `b_k = sigma·k^{-decay}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WienerSection {
    pub sigma: f64,
    pub decay: f64,
}

impl Default for WienerSection {
    fn default() -> Self {
        Self { sigma: 0.5, decay: 1.0 }
    }
}

/// Coefficients on the sine modes: explicit `(k, amplitude)` pairs plus an
/// optional rough tail `rough_amplitude·k^{-rough_decay}` on every mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSpec {
    pub modes: Vec<(usize, f64)>,
    pub rough_amplitude: f64,
    pub rough_decay: f64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            modes: Vec::new(),
            rough_amplitude: 0.0,
            rough_decay: 1.0,
        }
    }
}

impl FieldSpec {
    pub fn empty() -> Self {
        Self::default()
    }

    fn check(&self, what: &str, n_modes: usize, errors: &mut Vec<String>) {
        for &(k, a) in &self.modes {
            if k == 0 || k > n_modes {
                errors.push(format!("{what}.modes: mode {k} outside 1..={n_modes}"));
            }
            if !a.is_finite() {
                errors.push(format!("{what}.modes: amplitude of mode {k} is not finite"));
            }
        }
        if !self.rough_amplitude.is_finite() {
            errors.push(format!("{what}.rough_amplitude must be finite"));
        }
        if self.rough_amplitude != 0.0 && !(self.rough_decay >= 0.0) {
            errors.push(format!("{what}.rough_decay must be >= 0, got {}", self.rough_decay));
        }
    }

    pub fn field(&self, n_modes: usize) -> Field {
        let mut f = Field::from_modes(n_modes, &self.modes);
        if self.rough_amplitude != 0.0 {
            for k in 1..=n_modes {
                f[k - 1] += self.rough_amplitude * (k as f64).powf(-self.rough_decay);
            }
        }
        f
    }

    pub fn regularity(&self) -> Regularity {
        if self.rough_amplitude != 0.0 {
            Regularity::PowerLaw {
                decay: self.rough_decay,
            }
        } else {
            Regularity::Smooth
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    /// Intensity `θ` of this mark.
    pub weight: f64,
    pub field: FieldSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpSection {
    pub atoms: Vec<AtomSpec>,
}

impl Default for JumpSection {
    fn default() -> Self {
        Self {
            atoms: vec![
                AtomSpec {
                    weight: 2.0,
                    field: FieldSpec {
                        modes: vec![(1, 0.5), (3, -0.25)],
                        ..FieldSpec::empty()
                    },
                },
                AtomSpec {
                    weight: 1.0,
                    field: FieldSpec {
                        modes: vec![(2, -0.4)],
                        ..FieldSpec::empty()
                    },
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol_picard: f64,
    pub max_iterations: usize,
    pub contraction_target: f64,
    pub root_tol: f64,
    pub root_max_iterations: usize,
    /// `hidden_jumps` or `direct`.
    pub formulation: String,
    /// Strictly decreasing regularization parameters.
    pub lambdas: Vec<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let solver = SolverOptions::default();
        Self {
            tol_picard: solver.tol_picard,
            max_iterations: solver.max_iterations,
            contraction_target: solver.contraction_target,
            root_tol: solver.root.tol,
            root_max_iterations: solver.root.max_iterations,
            formulation: "hidden_jumps".into(),
            lambdas: vec![0.1, 0.05, 0.025, 0.0125, 0.00625],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BjSection {
    pub thetas: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub q: Vec<f64>,
}

impl Default for BjSection {
    fn default() -> Self {
        Self {
            thetas: vec![1.0, 4.0, 16.0],
            amplitudes: vec![1.0, 2.0, 8.0],
            q: vec![2.0, 4.0],
        }
    }
}

/// The perturbed data the continuity check moves towards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuitySection {
    pub scales: Vec<f64>,
    /// Added to `u0`.
    pub u0_shift: FieldSpec,
    /// `σ` of the target Wiener coefficients (same decay).
    pub sigma: f64,
    /// Target mark fields are `jump_scale·G + jump_shift`.
    pub jump_scale: f64,
    pub jump_shift: FieldSpec,
}

impl Default for ContinuitySection {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 0.5, 0.25, 0.125],
            u0_shift: FieldSpec {
                modes: vec![(2, 0.05)],
                ..FieldSpec::empty()
            },
            sigma: 1.0,
            jump_scale: 1.5,
            jump_shift: FieldSpec {
                modes: vec![(4, 0.2)],
                ..FieldSpec::empty()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralizedSection {
    pub levels: Vec<f64>,
    pub mode_cutoffs: Vec<usize>,
}

impl Default for GeneralizedSection {
    fn default() -> Self {
        Self {
            levels: vec![0.5, 1.0, 2.0, 4.0],
            mode_cutoffs: vec![4, 8, 16, 32],
        }
    }
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            run: RunSection::default(),
            drift: DriftSection::default(),
            space: SpaceSection::default(),
            time: TimeSection::default(),
            wiener: WienerSection::default(),
            jumps: JumpSection::default(),
            u0: FieldSpec {
                modes: vec![(1, 1.0)],
                ..FieldSpec::empty()
            },
            solver: SolverSection::default(),
            bj: BjSection::default(),
            continuity: ContinuitySection::default(),
            generalized: GeneralizedSection::default(),
            thresholds: Thresholds::default(),
        }
    }
}

/// Parse a `section.key=value` override. The value is read as a TOML value
/// and falls back to a plain string.
fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value)> {
    let (path, value) = raw
        .split_once('=')
        .with_context(|| format!("override `{raw}` is not of the form section.key=value"))?;
    let path: Vec<String> = path.trim().split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        bail!("override `{raw}` has an empty key");
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

fn apply_override(doc: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for key in parents {
        let entry = table
            .entry(key.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .with_context(|| format!("cannot override inside `{key}`: it is not a table"))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl Scenario {
    /// Parse TOML text, apply overrides, fill defaults and validate.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let file: toml::Table = toml::from_str(text).context("scenario is not valid TOML")?;
        let mut doc = toml::Table::try_from(Scenario::default()).context("cannot serialize the defaults")?;
        merge(&mut doc, file);
        for raw in overrides {
            let (path, value) = parse_override(raw)?;
            apply_override(&mut doc, &path, value)?;
        }
        let mut scenario: Scenario = doc.try_into().context("scenario does not match the expected layout")?;
        scenario.normalize();
        scenario.validate()?;
        Ok(scenario)
    }

    /// Resolve the implicit defaults so the effective file spells them out.
    pub fn normalize(&mut self) {
        if self.space.n_grid == 0 {
            self.space.n_grid = 4 * self.space.n_modes;
        }
    }

    /// The effective scenario as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("cannot serialize the scenario")
    }

    /// All problems at once, one line per offending field.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let n = self.space.n_modes;
        if self.run.samples < 2 {
            errors.push(format!("run.samples must be >= 2, got {}", self.run.samples));
        }
        if self.run.seed > i64::MAX as u64 {
            errors.push(format!("run.seed must be <= {}, got {}", i64::MAX, self.run.seed));
        }
        match self.drift.name.as_str() {
            "zero" | "cubic" | "linear_cubic" => {}
            "linear" => {
                if !(self.drift.c >= 0.0) {
                    errors.push(format!(
                        "drift.c must be >= 0 for a monotone drift, got {}",
                        self.drift.c
                    ));
                }
            }
            "power" => {}
            other => errors.push(format!(
                "drift.name `{other}` is unknown; use zero, linear, cubic, power or linear_cubic"
            )),
        }
        if !(self.drift.p >= 2.0) || !self.drift.p.is_finite() {
            errors.push(format!("drift.p must be >= 2, got {}", self.drift.p));
        }
        if n == 0 {
            errors.push("space.n_modes must be >= 1".into());
        }
        if self.space.n_grid != 0 && self.space.n_grid < n {
            errors.push(format!(
                "space.n_grid must be at least space.n_modes ({n}), got {}",
                self.space.n_grid
            ));
        }
        if !(self.time.horizon > 0.0) || !self.time.horizon.is_finite() {
            errors.push(format!("time.horizon must be > 0, got {}", self.time.horizon));
        }
        if !(self.time.dt > 0.0) || !(self.time.dt <= self.time.horizon) {
            errors.push(format!("time.dt must be in (0, time.horizon], got {}", self.time.dt));
        }
        if !(self.wiener.sigma >= 0.0) {
            errors.push(format!("wiener.sigma must be >= 0, got {}", self.wiener.sigma));
        }
        if !(self.wiener.decay >= 0.0) {
            errors.push(format!("wiener.decay must be >= 0, got {}", self.wiener.decay));
        }
        for (i, atom) in self.jumps.atoms.iter().enumerate() {
            if !(atom.weight >= 0.0) || !atom.weight.is_finite() {
                errors.push(format!(
                    "jumps.atoms[{i}].weight (intensity theta) must be >= 0, got {}",
                    atom.weight
                ));
            }
            atom.field.check(&format!("jumps.atoms[{i}].field"), n, &mut errors);
        }
        self.u0.check("u0", n, &mut errors);
        let s = &self.solver;
        if !(s.tol_picard > 0.0) {
            errors.push(format!("solver.tol_picard must be > 0, got {}", s.tol_picard));
        }
        if s.max_iterations == 0 {
            errors.push("solver.max_iterations must be >= 1".into());
        }
        if !(s.contraction_target > 0.0 && s.contraction_target < 1.0) {
            errors.push(format!(
                "solver.contraction_target must be in (0, 1), got {}",
                s.contraction_target
            ));
        }
        if !(s.root_tol > 0.0) {
            errors.push(format!("solver.root_tol must be > 0, got {}", s.root_tol));
        }
        if s.root_max_iterations == 0 {
            errors.push("solver.root_max_iterations must be >= 1".into());
        }
        if !matches!(s.formulation.as_str(), "hidden_jumps" | "direct") {
            errors.push(format!(
                "solver.formulation `{}` is unknown; use hidden_jumps or direct",
                s.formulation
            ));
        }
        if s.lambdas.is_empty() {
            errors.push("solver.lambdas must list at least one value".into());
        }
        if let Some(l) = s.lambdas.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            errors.push(format!("solver.lambdas must all be > 0, got {l}"));
        }
        if let Some(w) = s.lambdas.windows(2).find(|w| !(w[1] < w[0])) {
            errors.push(format!(
                "solver.lambdas must be strictly decreasing, but {} is followed by {}",
                w[0], w[1]
            ));
        }
        if self.bj.thetas.iter().any(|t| !(*t >= 0.0)) {
            errors.push("bj.thetas (jump intensities) must all be >= 0".into());
        }
        if self.bj.amplitudes.iter().any(|a| !(*a > 0.0)) {
            errors.push("bj.amplitudes must all be > 0".into());
        }
        if self.bj.q.iter().any(|q| !(*q >= 2.0)) {
            errors.push("bj.q must all be >= 2".into());
        }
        let c = &self.continuity;
        if c.scales.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
            errors.push("continuity.scales must all lie in (0, 1]".into());
        }
        if !(c.sigma >= 0.0) {
            errors.push(format!("continuity.sigma must be >= 0, got {}", c.sigma));
        }
        c.u0_shift.check("continuity.u0_shift", n, &mut errors);
        c.jump_shift.check("continuity.jump_shift", n, &mut errors);
        let g = &self.generalized;
        if g.levels.len() != g.mode_cutoffs.len() || g.levels.is_empty() {
            errors.push("generalized.levels and generalized.mode_cutoffs must be non-empty and equally long".into());
        }
        if g.levels.iter().any(|l| !(*l > 0.0)) || g.levels.windows(2).any(|w| w[1] < w[0]) {
            errors.push("generalized.levels must be > 0 and non-decreasing".into());
        }
        if g.mode_cutoffs.windows(2).any(|w| w[1] < w[0]) {
            errors.push("generalized.mode_cutoffs must be non-decreasing".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            bail!("invalid scenario:\n  {}", errors.join("\n  "))
        }
    }

    pub fn drift(&self) -> MonotoneFn {
        match self.drift.name.as_str() {
            "zero" => MonotoneFn::zero(),
            "linear" => MonotoneFn::linear(self.drift.c),
            "cubic" => MonotoneFn::cubic(),
            "linear_cubic" => MonotoneFn::linear_cubic(),
            _ => MonotoneFn::power(self.drift.p),
        }
    }

    pub fn basis(&self) -> Result<Arc<SpectralBasis>> {
        let n_grid = match self.space.n_grid {
            0 => 4 * self.space.n_modes,
            g => g,
        };
        Ok(Arc::new(SpectralBasis::with_grid(self.space.n_modes, n_grid)?))
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::uniform(self.time.horizon, self.time.dt)?)
    }

    pub fn wiener(&self) -> WienerSpec {
        WienerSpec::decay(self.space.n_modes, self.wiener.sigma, self.wiener.decay)
    }

    pub fn jumps(&self) -> JumpSpec {
        let n = self.space.n_modes;
        if self.jumps.atoms.is_empty() {
            return JumpSpec::none(n);
        }
        let mut spec = JumpSpec::atoms(
            self.jumps
                .atoms
                .iter()
                .map(|a| Atom {
                    weight: a.weight,
                    field: a.field.field(n),
                })
                .collect(),
        );
        spec.regularity = roughest(self.jumps.atoms.iter().map(|a| a.field.regularity()));
        spec
    }

    pub fn problem(&self) -> Result<Problem> {
        let n = self.space.n_modes;
        Ok(Problem::new(
            self.drift(),
            self.basis()?,
            self.wiener(),
            self.jumps(),
            self.u0.field(n),
            self.grid()?,
        )?
        .with_u0_regularity(self.u0.regularity()))
    }

    /// The data the continuity check perturbs towards.
    pub fn continuity_target(&self, base: &Problem) -> Problem {
        let n = self.space.n_modes;
        let c = &self.continuity;
        let mut u0 = base.u0.clone();
        u0.axpy(1.0, &c.u0_shift.field(n));
        let shift = c.jump_shift.field(n);
        let jumps = base.jumps.map_fields(|g| {
            let mut f = g.scaled(c.jump_scale);
            f.axpy(1.0, &shift);
            f
        });
        Problem {
            u0,
            wiener: WienerSpec::decay(n, c.sigma, self.wiener.decay),
            jumps,
            ..base.clone()
        }
    }

    pub fn schedule(&self) -> Result<ApproximationSchedule> {
        Ok(ApproximationSchedule::new(
            self.generalized.levels.clone(),
            self.generalized.mode_cutoffs.clone(),
        )?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            tol_picard: s.tol_picard,
            max_iterations: s.max_iterations,
            contraction_target: s.contraction_target,
            root: RootOptions {
                tol: s.root_tol,
                max_iterations: s.root_max_iterations,
            },
            formulation: if s.formulation == "direct" {
                Formulation::Direct
            } else {
                Formulation::HiddenJumps
            },
            initial_guess: InitialGuess::Free,
        }
    }

    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo::new(self.run.samples, self.run.seed)
    }
}

fn roughest(regs: impl Iterator<Item = Regularity>) -> Regularity {
    regs.fold(Regularity::Smooth, |acc, r| match (acc, r) {
        (Regularity::Smooth, r) => r,
        (a, Regularity::Smooth) => a,
        (Regularity::PowerLaw { decay: a }, Regularity::PowerLaw { decay: b }) => {
            Regularity::PowerLaw { decay: a.min(b) }
        }
    })
}
