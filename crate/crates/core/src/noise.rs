//! Additive noise: a cylindrical Wiener process seen through a diagonal
//! operator `B`, and a finite-activity Poisson random measure with
//! compensator `Leb ⊗ m` carrying a jump integrand `G(z)`.
//!
//! Also the two noise norms, `‖B‖_{L^γ_q}` and `‖G‖_{L^m_q}`.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{contract, Result};
use crate::grid::TimeGrid;
use crate::rng::{stream, Stream};
use crate::spectral::{Field, SpectralBasis};
use crate::stats::mean_and_se;

/// How regular a piece of data is in the continuum, which is what decides
/// the integrability regime; the discretized data is always finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularity {
    /// Finite eigenfunction sums: in every `L_q`.
    Smooth,
    /// Coefficients decaying like `k^{-decay}`.
    PowerLaw { decay: f64 },
}

impl Regularity {
    /// Membership of a field in `L_q(0,1)`. A `k^{-a}` sine series behaves
    /// like `ξ^{a-1}` at the boundary, so it lies in `L_q` iff `a > 1 - 1/q`.
    pub fn field_in_lq(&self, q: f64) -> bool {
        match *self {
            Regularity::Smooth => true,
            Regularity::PowerLaw { decay } => decay > 1.0 - 1.0 / q,
        }
    }

    /// Membership of a diagonal `B` in `γ(H → L_q)`. Eigenfunctions are
    /// uniformly bounded in one dimension, so this is `Σ b_k² < ∞` for
    /// every `q`.
    pub fn operator_is_gamma(&self) -> bool {
        match *self {
            Regularity::Smooth => true,
            Regularity::PowerLaw { decay } => decay > 0.5,
        }
    }
}

/// Diagonal `B e_k = b_k e_k`, constant in time.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerSpec {
    pub b: Vec<f64>,
    pub regularity: Regularity,
}

impl WienerSpec {
    pub fn zero(n_modes: usize) -> Self {
        Self {
            b: vec![0.0; n_modes],
            regularity: Regularity::Smooth,
        }
    }

    /// `b_k = σ k^{-β}`.
    pub fn decay(n_modes: usize, sigma: f64, beta: f64) -> Self {
        Self {
            b: (1..=n_modes).map(|k| sigma * (k as f64).powf(-beta)).collect(),
            regularity: if sigma == 0.0 {
                Regularity::Smooth
            } else {
                Regularity::PowerLaw { decay: beta }
            },
        }
    }

    pub fn n_modes(&self) -> usize {
        self.b.len()
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().all(|&b| b == 0.0)
    }

    /// Zero every mode above `k_max`.
    pub fn cutoff(&self, k_max: usize) -> Self {
        Self {
            b: self
                .b
                .iter()
                .enumerate()
                .map(|(i, &b)| if i < k_max { b } else { 0.0 })
                .collect(),
            regularity: if k_max >= self.b.len() {
                self.regularity
            } else {
                Regularity::Smooth
            },
        }
    }

    pub fn difference(&self, other: &WienerSpec) -> WienerSpec {
        WienerSpec {
            b: self.b.iter().zip(&other.b).map(|(a, b)| a - b).collect(),
            regularity: Regularity::Smooth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    /// `m({z_i})`
    pub weight: f64,
    /// `G(z_i)`
    pub field: Field,
}

/// Finite mark measure `m` together with the integrand `G`.
#[derive(Debug, Clone, PartialEq)]
pub enum MarkLaw {
    Atoms(Vec<Atom>),
    /// `m = rate · Uniform[lo, hi]` and `G(z) = z · shape`.
    Uniform {
        rate: f64,
        lo: f64,
        hi: f64,
        shape: Field,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSpec {
    pub law: MarkLaw,
    pub regularity: Regularity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    Atom(usize),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Mark,
}

/// One realization of the Poisson measure on `[0, T] × Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonStream {
    pub events: Vec<JumpEvent>,
    pub seed: u64,
}

impl JumpSpec {
    pub fn none(n_modes: usize) -> Self {
        Self::atoms(vec![Atom {
            weight: 0.0,
            field: Field::zeros(n_modes),
        }])
    }

    pub fn atoms(atoms: Vec<Atom>) -> Self {
        Self {
            law: MarkLaw::Atoms(atoms),
            regularity: Regularity::Smooth,
        }
    }

    pub fn single(weight: f64, field: Field) -> Self {
        Self::atoms(vec![Atom { weight, field }])
    }

    pub fn validate(&self) -> Result<()> {
        match &self.law {
            MarkLaw::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(contract("jump spec needs at least one atom"));
                }
                let n = atoms[0].field.n_modes();
                for a in atoms {
                    if !(a.weight >= 0.0) || !a.weight.is_finite() {
                        return Err(contract(format!("atom weight must be >= 0, got {}", a.weight)));
                    }
                    if a.field.n_modes() != n {
                        return Err(contract("atom fields have different sizes"));
                    }
                }
            }
            MarkLaw::Uniform { rate, lo, hi, .. } => {
                if !(*rate >= 0.0) || !rate.is_finite() {
                    return Err(contract(format!("jump rate must be >= 0, got {rate}")));
                }
                if !(lo < hi) {
                    return Err(contract(format!("uniform mark law needs lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        match &self.law {
            MarkLaw::Atoms(atoms) => atoms[0].field.n_modes(),
            MarkLaw::Uniform { shape, .. } => shape.n_modes(),
        }
    }

    /// `θ = m(Z)`.
    pub fn total_mass(&self) -> f64 {
        match &self.law {
            MarkLaw::Atoms(atoms) => atoms.iter().map(|a| a.weight).sum(),
            MarkLaw::Uniform { rate, .. } => *rate,
        }
    }

    /// `G(z)` for a sampled mark.
    pub fn field(&self, mark: Mark) -> Field {
        match (&self.law, mark) {
            (MarkLaw::Atoms(atoms), Mark::Atom(i)) => atoms[i].field.clone(),
            (MarkLaw::Uniform { shape, .. }, Mark::Value(z)) => shape.scaled(z),
            _ => panic!("mark {mark:?} does not belong to this mark law"),
        }
    }

    /// `ḡ = ∫_Z G(z) m(dz)`, the compensator density.
    pub fn mean_field(&self) -> Field {
        match &self.law {
            MarkLaw::Atoms(atoms) => {
                let mut g = Field::zeros(self.n_modes());
                for a in atoms {
                    g.axpy(a.weight, &a.field);
                }
                g
            }
            MarkLaw::Uniform { rate, lo, hi, shape } => shape.scaled(rate * 0.5 * (lo + hi)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.law {
            MarkLaw::Atoms(atoms) => atoms.iter().all(|a| a.weight == 0.0 || a.field.is_zero()),
            MarkLaw::Uniform { rate, shape, .. } => *rate == 0.0 || shape.is_zero(),
        }
    }

    /// `G → c·G` with the same marks.
    pub fn scaled(&self, c: f64) -> Self {
        self.map_fields(|f| f.scaled(c))
    }

    /// Rescale `m` to total mass `theta`, keeping the mark distribution.
    pub fn with_intensity(&self, theta: f64) -> Self {
        let current = self.total_mass();
        let law = match &self.law {
            MarkLaw::Atoms(atoms) => MarkLaw::Atoms(
                atoms
                    .iter()
                    .map(|a| Atom {
                        weight: if current > 0.0 {
                            a.weight * theta / current
                        } else {
                            theta / atoms.len() as f64
                        },
                        field: a.field.clone(),
                    })
                    .collect(),
            ),
            MarkLaw::Uniform { lo, hi, shape, .. } => MarkLaw::Uniform {
                rate: theta,
                lo: *lo,
                hi: *hi,
                shape: shape.clone(),
            },
        };
        Self {
            law,
            regularity: self.regularity,
        }
    }

    /// Apply `op` to every mark field (the uniform law's shape).
    pub fn map_fields(&self, op: impl Fn(&Field) -> Field) -> Self {
        let law = match &self.law {
            MarkLaw::Atoms(atoms) => MarkLaw::Atoms(
                atoms
                    .iter()
                    .map(|a| Atom {
                        weight: a.weight,
                        field: op(&a.field),
                    })
                    .collect(),
            ),
            MarkLaw::Uniform { rate, lo, hi, shape } => MarkLaw::Uniform {
                rate: *rate,
                lo: *lo,
                hi: *hi,
                shape: op(shape),
            },
        };
        Self {
            law,
            regularity: self.regularity,
        }
    }

    /// Pointwise difference of the integrands; the mark laws must match.
    pub fn difference(&self, other: &JumpSpec) -> Result<JumpSpec> {
        self.combine(1.0, other, -1.0)
    }

    /// `self + s·(other - self)` on the integrands; the mark laws must match.
    pub fn interpolate(&self, other: &JumpSpec, s: f64) -> Result<JumpSpec> {
        let mut out = self.combine(1.0 - s, other, s)?;
        out.regularity = self.regularity;
        Ok(out)
    }

    /// `a·G_self + b·G_other` with the common mark law.
    fn combine(&self, a: f64, other: &JumpSpec, b: f64) -> Result<JumpSpec> {
        let mix = |x: &Field, y: &Field| {
            let mut z = x.scaled(a);
            z.axpy(b, y);
            z
        };
        let law = match (&self.law, &other.law) {
            (MarkLaw::Atoms(xs), MarkLaw::Atoms(ys)) if xs.len() == ys.len() => {
                let mut out = Vec::with_capacity(xs.len());
                for (x, y) in xs.iter().zip(ys) {
                    if x.weight != y.weight {
                        return Err(contract("jump specs differ in their mark weights"));
                    }
                    out.push(Atom {
                        weight: x.weight,
                        field: mix(&x.field, &y.field),
                    });
                }
                MarkLaw::Atoms(out)
            }
            (
                MarkLaw::Uniform { rate, lo, hi, shape },
                MarkLaw::Uniform {
                    rate: r2,
                    lo: l2,
                    hi: h2,
                    shape: s2,
                },
            ) if rate == r2 && lo == l2 && hi == h2 => MarkLaw::Uniform {
                rate: *rate,
                lo: *lo,
                hi: *hi,
                shape: mix(shape, s2),
            },
            _ => return Err(contract("jump specs have different mark laws")),
        };
        Ok(JumpSpec {
            law,
            regularity: Regularity::Smooth,
        })
    }
}

/// Standard (unit-variance-rate) Brownian increments per mode, plus the
/// independent normals that pin down the exact OU transition of each step.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    pub grid: TimeGrid,
    /// `dw[j][k] = W_k(t_{j+1}) - W_k(t_j)`
    pub dw: Vec<Vec<f64>>,
    /// Standard normals independent of `dw`.
    pub bridge: Vec<Vec<f64>>,
    pub seed: u64,
}

impl WienerIncrements {
    pub fn sample(grid: &TimeGrid, n_modes: usize, seed: u64) -> Self {
        let mut inc_rng = stream(seed, Stream::WienerIncrements);
        let mut bridge_rng = stream(seed, Stream::WienerBridge);
        let mut dw = Vec::with_capacity(grid.n_steps());
        let mut bridge = Vec::with_capacity(grid.n_steps());
        for j in 0..grid.n_steps() {
            let sd = grid.step(j).sqrt();
            dw.push(
                (0..n_modes)
                    .map(|_| sd * inc_rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            bridge.push(
                (0..n_modes)
                    .map(|_| bridge_rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
        }
        Self {
            grid: grid.clone(),
            dw,
            bridge,
            seed,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.dw.first().map_or(0, Vec::len)
    }
}

pub fn sample_wiener_increments(grid: &TimeGrid, spec: &WienerSpec, seed: u64) -> WienerIncrements {
    WienerIncrements::sample(grid, spec.n_modes(), seed)
}

pub fn sample_poisson_stream(horizon: f64, spec: &JumpSpec, seed: u64) -> Result<PoissonStream> {
    if !(horizon > 0.0) {
        return Err(contract(format!("Poisson stream needs T > 0, got {horizon}")));
    }
    spec.validate()?;
    let theta = spec.total_mass();
    let mut rng = stream(seed, Stream::Jumps);
    if theta == 0.0 {
        return Ok(PoissonStream {
            events: Vec::new(),
            seed,
        });
    }
    let count = Poisson::new(theta * horizon)
        .map_err(|e| contract(format!("Poisson intensity {}: {e}", theta * horizon)))?
        .sample(&mut rng) as usize;
    let mut events: Vec<JumpEvent> = (0..count)
        .map(|_| {
            // (0, T]
            let time = horizon * (1.0 - rng.random::<f64>());
            let mark = match &spec.law {
                MarkLaw::Atoms(atoms) => {
                    let mut u = rng.random::<f64>() * theta;
                    let mut idx = atoms.len() - 1;
                    for (i, a) in atoms.iter().enumerate() {
                        if u < a.weight {
                            idx = i;
                            break;
                        }
                        u -= a.weight;
                    }
                    Mark::Atom(idx)
                }
                MarkLaw::Uniform { lo, hi, .. } => Mark::Value(rng.random_range(*lo..*hi)),
            };
            JumpEvent { time, mark }
        })
        .collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(PoissonStream { events, seed })
}

/// A norm estimate with its Monte Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMethod {
    /// Closed form when `p = 2`, Monte Carlo otherwise.
    Auto,
    MonteCarlo,
}

/// `‖B‖_{γ(H → L_p)} = (E ‖Σ_k γ_k b_k e_k‖²_{L_p})^{1/2}` over i.i.d.
/// standard normals `γ_k`.
pub fn gamma_norm(
    spec: &WienerSpec,
    basis: &SpectralBasis,
    p: f64,
    draws: usize,
    seed: u64,
    method: GammaMethod,
) -> NormEstimate {
    if spec.is_zero() {
        return NormEstimate {
            value: 0.0,
            standard_error: 0.0,
        };
    }
    if p == 2.0 && method == GammaMethod::Auto {
        // Hilbert–Schmidt norm.
        return NormEstimate {
            value: spec.b.iter().map(|b| b * b).sum::<f64>().sqrt(),
            standard_error: 0.0,
        };
    }
    assert!(draws >= 2, "gamma norm needs at least 2 draws");
    let mut rng = stream(seed, Stream::GammaNorm);
    let mut coeffs = vec![0.0; basis.n_modes()];
    let mut grid = vec![0.0; basis.n_grid()];
    let samples: Vec<f64> = (0..draws)
        .map(|_| {
            for (c, b) in coeffs.iter_mut().zip(&spec.b) {
                *c = b * rng.sample::<f64, _>(StandardNormal);
            }
            basis.synthesize_into(&coeffs, &mut grid);
            basis.lp_norm_grid(&grid, p).powi(2)
        })
        .collect();
    let (mean, se) = mean_and_se(&samples);
    let value = mean.sqrt();
    NormEstimate {
        value,
        standard_error: if value > 0.0 { se / (2.0 * value) } else { 0.0 },
    }
}

/// `‖B‖_{L^γ_q} = (∫_0^T ‖B‖^q_{γ(H→L_p)} dt)^{1/q}` for constant `B`.
pub fn norm_b_gamma(
    spec: &WienerSpec,
    basis: &SpectralBasis,
    q: f64,
    p: f64,
    horizon: f64,
    draws: usize,
    seed: u64,
) -> NormEstimate {
    assert!(q >= 1.0, "L^γ_q needs q >= 1, got {q}");
    let g = gamma_norm(spec, basis, p, draws, seed, GammaMethod::Auto);
    let scale = horizon.powf(1.0 / q);
    NormEstimate {
        value: g.value * scale,
        standard_error: g.standard_error * scale,
    }
}

/// `‖G‖_{L^m_q}` for a deterministic, time-independent integrand:
/// `(T ∫ ‖G(z)‖^q_{L_q} m(dz) + T (∫ ‖G(z)‖²_{L_q} m(dz))^{q/2})^{1/q}`.
pub fn norm_g_lmq(spec: &JumpSpec, basis: &SpectralBasis, q: f64, horizon: f64) -> f64 {
    assert!(q >= 2.0, "L^m_q needs q >= 2, got {q}");
    let (int_q, int_2) = match &spec.law {
        MarkLaw::Atoms(atoms) => atoms.iter().fold((0.0, 0.0), |(sq, s2), a| {
            let n = basis.lp_norm(&a.field, q);
            (sq + a.weight * n.powf(q), s2 + a.weight * n * n)
        }),
        MarkLaw::Uniform { rate, lo, hi, shape } => {
            let n = basis.lp_norm(shape, q);
            (
                rate * abs_moment_uniform(*lo, *hi, q) * n.powf(q),
                rate * abs_moment_uniform(*lo, *hi, 2.0) * n * n,
            )
        }
    };
    (horizon * int_q + horizon * int_2.powf(q / 2.0)).powf(1.0 / q)
}

/// `E|Z|^q` for `Z ~ Uniform[lo, hi]`.
fn abs_moment_uniform(lo: f64, hi: f64, q: f64) -> f64 {
    let prim = |z: f64| z.signum() * z.abs().powf(q + 1.0) / (q + 1.0);
    (prim(hi) - prim(lo)) / (hi - lo)
}
