//! Scalar monotone drifts, their resolvents `(I + λf)^{-1}` and Yosida
//! approximations `f_λ = (I - (I + λf)^{-1}) / λ`.
//!
//! Every drift satisfies `f(0) = 0`, is non-decreasing, and grows at most
//! like `C (1 + |r|^{p/2})`. The growth exponent `p` fixes the Lebesgue
//! space `E = L_p` the solver works in, and `p* = p²/2` the integrability
//! needed of the jump integrand.

use std::fmt;
use std::sync::Arc;

use crate::error::{contract, Error, Result};

/// Root-finding controls for the resolvent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Residual tolerance, scaled by `max(1, |r|)`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iterations: 200,
        }
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum DriftKind {
    /// `f(r) = c r`, `c ≥ 0`.
    Linear { c: f64 },
    /// `f(r) = r |r|^{p/2 - 1}`.
    Power,
    /// `f(r) = r + r³`.
    LinearCubic,
    /// User supplied; the resolvent falls back to bisection.
    Custom { name: String, eval: ScalarFn },
}

impl fmt::Debug for DriftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DriftKind::Linear { c } => write!(f, "Linear {{ c: {c} }}"),
            DriftKind::Power => write!(f, "Power"),
            DriftKind::LinearCubic => write!(f, "LinearCubic"),
            DriftKind::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonotoneFn {
    kind: DriftKind,
    growth_exponent: f64,
    growth_constant: f64,
}

impl MonotoneFn {
    pub fn zero() -> Self {
        Self::linear(0.0)
    }

    /// `f(r) = c r`. Growth exponent 2.
    pub fn linear(c: f64) -> Self {
        assert!(c >= 0.0 && c.is_finite(), "linear drift needs c >= 0, got {c}");
        Self {
            kind: DriftKind::Linear { c },
            growth_exponent: 2.0,
            growth_constant: c.max(f64::MIN_POSITIVE),
        }
    }

    /// `f(r) = r |r|^{p/2 - 1}`, so `p = 4` is `r|r|` and `p = 6` is `r³`.
    pub fn power(p: f64) -> Self {
        assert!(p >= 2.0 && p.is_finite(), "power drift needs p >= 2, got {p}");
        Self {
            kind: DriftKind::Power,
            growth_exponent: p,
            growth_constant: 1.0,
        }
    }

    pub fn cubic() -> Self {
        Self::power(6.0)
    }

    /// `f(r) = r + r³`, with `|f(r)| ≤ 2 (1 + |r|³)`.
    pub fn linear_cubic() -> Self {
        Self {
            kind: DriftKind::LinearCubic,
            growth_exponent: 6.0,
            growth_constant: 2.0,
        }
    }

    /// A user-supplied drift. The invariants are checked on a sample of
    /// points; this cannot prove them, only catch gross violations.
    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        growth_exponent: f64,
        growth_constant: f64,
    ) -> Result<Self> {
        if !(growth_exponent >= 2.0) {
            return Err(contract(format!(
                "growth exponent p must be >= 2, got {growth_exponent}"
            )));
        }
        if !(growth_constant > 0.0) {
            return Err(contract(format!("growth constant must be > 0, got {growth_constant}")));
        }
        let f = Self {
            kind: DriftKind::Custom {
                name: name.into(),
                eval: Arc::new(eval),
            },
            growth_exponent,
            growth_constant,
        };
        let samples: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.05).collect();
        f.check_invariants(&samples)?;
        Ok(f)
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DriftKind::Linear { c } => format!("linear(c={c})"),
            DriftKind::Power => format!("power(p={})", self.growth_exponent),
            DriftKind::LinearCubic => "linear_cubic".to_string(),
            DriftKind::Custom { name, .. } => name.clone(),
        }
    }

    /// `p`, the growth exponent.
    pub fn p(&self) -> f64 {
        self.growth_exponent
    }

    /// `p* = p²/2`.
    pub fn p_star(&self) -> f64 {
        self.growth_exponent * self.growth_exponent / 2.0
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DriftKind::Linear { c } if c == 0.0)
    }

    /// Slope `c` when the drift is linear.
    pub fn linear_slope(&self) -> Option<f64> {
        match self.kind {
            DriftKind::Linear { c } => Some(c),
            _ => None,
        }
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match &self.kind {
            DriftKind::Linear { c } => c * r,
            DriftKind::Power => power_eval(r, self.growth_exponent),
            DriftKind::LinearCubic => r + r * r * r,
            DriftKind::Custom { eval, .. } => eval(r),
        }
    }

    /// Derivative where it is known in closed form.
    #[inline]
    pub fn derivative(&self, r: f64) -> Option<f64> {
        match &self.kind {
            DriftKind::Linear { c } => Some(*c),
            DriftKind::Power => {
                let h = self.growth_exponent / 2.0;
                Some(if h == 1.0 {
                    1.0
                } else if h == 2.0 {
                    2.0 * r.abs()
                } else if h == 3.0 {
                    3.0 * r * r
                } else {
                    h * r.abs().powf(h - 1.0)
                })
            }
            DriftKind::LinearCubic => Some(1.0 + 3.0 * r * r),
            DriftKind::Custom { .. } => None,
        }
    }

    /// Checks `f(0) = 0`, monotonicity over all sampled pairs, and the
    /// growth bound at every sample.
    pub fn check_invariants(&self, samples: &[f64]) -> Result<()> {
        let f0 = self.eval(0.0);
        if f0 != 0.0 {
            return Err(contract(format!("drift must vanish at 0, f(0) = {f0}")));
        }
        let mut sorted: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        // Monotone on all pairs iff monotone on consecutive sorted samples.
        for w in sorted.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (self.eval(b) - self.eval(a)) * (b - a) < 0.0 {
                return Err(contract(format!("drift is not monotone between {a} and {b}")));
            }
        }
        for &r in &sorted {
            let bound = self.growth_constant * (1.0 + r.abs().powf(self.growth_exponent / 2.0));
            if self.eval(r).abs() > bound * (1.0 + 1e-12) {
                return Err(contract(format!(
                    "growth bound violated at r={r}: |f(r)|={} > {bound}",
                    self.eval(r).abs()
                )));
            }
        }
        Ok(())
    }

    /// `(I + λf)^{-1} r`: the unique `y` with `y + λ f(y) = r`.
    pub fn resolvent(&self, lambda: f64, r: f64, opts: &RootOptions) -> Result<f64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(contract(format!("resolvent needs lambda > 0, got {lambda}")));
        }
        if !r.is_finite() {
            return Err(contract(format!("resolvent argument must be finite, got {r}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        if let DriftKind::Linear { c } = self.kind {
            return Ok(r / (1.0 + lambda * c));
        }

        let residual = |y: f64| y + lambda * self.eval(y) - r;
        let tol = opts.tol * r.abs().max(1.0);
        // f(0) = 0 and monotonicity make [min(0,r), max(0,r)] a bracket.
        let (mut lo, mut hi) = if r > 0.0 { (0.0, r) } else { (r, 0.0) };
        let mut y = r;
        let mut g = residual(y);
        for _ in 0..opts.max_iterations {
            if g.abs() <= tol {
                return Ok(y);
            }
            if g > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let newton = self
                .derivative(y)
                .map(|d| y - g / (1.0 + lambda * d))
                .filter(|n| *n > lo && *n < hi);
            let next = newton.unwrap_or(0.5 * (lo + hi));
            if next == y || hi - lo <= f64::EPSILON * hi.abs().max(lo.abs()) {
                // Bracket collapsed to adjacent floats.
                return Ok(y);
            }
            y = next;
            g = residual(y);
        }
        if g.abs() <= tol {
            return Ok(y);
        }
        Err(Error::RootNotConverged {
            lo,
            hi,
            residual: g,
            iterations: opts.max_iterations,
        })
    }

    /// `f_λ(r) = (r - (I + λf)^{-1} r) / λ`.
    ///
    /// Evaluated as `f(J_λ r)`, which is the same quantity by the defining
    /// equation of the resolvent but does not lose digits to the division
    /// by a small `λ`.
    pub fn yosida(&self, lambda: f64, r: f64, opts: &RootOptions) -> Result<f64> {
        let j = self.resolvent(lambda, r, opts)?;
        Ok(self.eval(j))
    }

    /// A `(f, λ)` pair for repeated evaluation.
    pub fn yosida_approx(&self, lambda: f64, opts: RootOptions) -> Result<Yosida<'_>> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(contract(format!("Yosida approximation needs lambda > 0, got {lambda}")));
        }
        Ok(Yosida { f: self, lambda, opts })
    }
}

#[inline]
fn power_eval(r: f64, p: f64) -> f64 {
    let h = p / 2.0;
    if h == 1.0 {
        r
    } else if h == 2.0 {
        r * r.abs()
    } else if h == 3.0 {
        r * r * r
    } else {
        r.signum() * r.abs().powf(h)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Yosida<'a> {
    f: &'a MonotoneFn,
    lambda: f64,
    opts: RootOptions,
}

impl Yosida<'_> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Lipschitz bound `2/λ`.
    pub fn lipschitz_bound(&self) -> f64 {
        2.0 / self.lambda
    }

    #[inline]
    pub fn eval(&self, r: f64) -> Result<f64> {
        self.f.yosida(self.lambda, r, &self.opts)
    }

    #[inline]
    pub fn resolvent(&self, r: f64) -> Result<f64> {
        self.f.resolvent(self.lambda, r, &self.opts)
    }
}
