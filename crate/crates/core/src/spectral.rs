//! Spectral realization of `A = -Δ` on `D = (0, 1)` with Dirichlet
//! conditions.
//!
//! Eigenpairs are `α_k = (kπ)²`, `e_k(ξ) = √2 sin(kπξ)`. A [`Field`] is a
//! coefficient vector on the first `n_modes` eigenfunctions; grid values
//! live on `n_grid` uniform interior points `ξ_i = i/(n_grid+1)`. Because
//! the endpoint values vanish, the composite trapezoid rule reduces to
//! `h Σ_i` and the discrete sine transform is exactly orthonormal, so the
//! mode/grid round trip is the identity whenever `n_grid ≥ n_modes`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// An element of `L_p(D)` given by its eigenbasis coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field(pub Vec<f64>);

impl Field {
    pub fn zeros(n_modes: usize) -> Self {
        Field(vec![0.0; n_modes])
    }

    /// `amplitude · e_mode`, `mode` counted from 1.
    pub fn eigenfunction(n_modes: usize, mode: usize, amplitude: f64) -> Self {
        assert!(mode >= 1 && mode <= n_modes, "mode {mode} outside 1..={n_modes}");
        let mut f = Field::zeros(n_modes);
        f.0[mode - 1] = amplitude;
        f
    }

    pub fn from_modes(n_modes: usize, modes: &[(usize, f64)]) -> Self {
        let mut f = Field::zeros(n_modes);
        for &(k, a) in modes {
            if k >= 1 && k <= n_modes {
                f.0[k - 1] += a;
            }
        }
        f
    }

    pub fn n_modes(&self) -> usize {
        self.0.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    /// Euclidean norm of the coefficients, equal to the `L_2` norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field(self.0.iter().map(|c| c * s).collect())
    }

    /// `self += s · other`
    pub fn axpy(&mut self, s: f64, other: &Field) {
        debug_assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += s * b;
        }
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for Field {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        Field(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        Field(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, s: f64) -> Field {
        self.scaled(s)
    }
}

impl AddAssign<&Field> for Field {
    fn add_assign(&mut self, rhs: &Field) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&Field> for Field {
    fn sub_assign(&mut self, rhs: &Field) {
        self.axpy(-1.0, rhs);
    }
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    n_modes: usize,
    n_grid: usize,
    eigenvalues: Vec<f64>,
    points: Vec<f64>,
    weight: f64,
    /// `e_k(ξ_i)`, row-major by grid point.
    table: Vec<f64>,
}

impl SpectralBasis {
    /// Basis with the default grid of `4 · n_modes` points.
    pub fn new(n_modes: usize) -> Result<Self> {
        Self::with_grid(n_modes, 4 * n_modes)
    }

    pub fn with_grid(n_modes: usize, n_grid: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(contract("basis needs at least one mode"));
        }
        if n_grid < n_modes {
            return Err(contract(format!(
                "grid of {n_grid} points cannot resolve {n_modes} modes"
            )));
        }
        let weight = 1.0 / (n_grid + 1) as f64;
        let points: Vec<f64> = (1..=n_grid).map(|i| i as f64 * weight).collect();
        let eigenvalues = (1..=n_modes).map(|k| (k as f64 * PI).powi(2)).collect();
        let mut table = Vec::with_capacity(n_grid * n_modes);
        let sqrt2 = 2f64.sqrt();
        for i in 1..=n_grid {
            for k in 1..=n_modes {
                // Reduce the argument exactly before calling sin.
                let m = (i * k) % (2 * (n_grid + 1));
                table.push(sqrt2 * (PI * m as f64 * weight).sin());
            }
        }
        Ok(Self {
            n_modes,
            n_grid,
            eigenvalues,
            points,
            weight,
            table,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// `α_k` for `k = 1..=n_modes`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn grid_points(&self) -> &[f64] {
        &self.points
    }

    pub fn quadrature_weight(&self) -> f64 {
        self.weight
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.n_modes)
    }

    pub fn synthesize(&self, x: &Field) -> Vec<f64> {
        let mut out = vec![0.0; self.n_grid];
        self.synthesize_into(x.coeffs(), &mut out);
        out
    }

    pub fn synthesize_into(&self, coeffs: &[f64], out: &mut [f64]) {
        debug_assert_eq!(coeffs.len(), self.n_modes);
        for (row, o) in self.table.chunks_exact(self.n_modes).zip(out.iter_mut()) {
            *o = row.iter().zip(coeffs).map(|(e, c)| e * c).sum();
        }
    }

    /// Quadrature projection of grid values onto the modes.
    pub fn analyze(&self, values: &[f64]) -> Field {
        let mut out = vec![0.0; self.n_modes];
        self.analyze_into(values, &mut out);
        Field(out)
    }

    pub fn analyze_into(&self, values: &[f64], out: &mut [f64]) {
        debug_assert_eq!(values.len(), self.n_grid);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (row, &v) in self.table.chunks_exact(self.n_modes).zip(values) {
            for (o, e) in out.iter_mut().zip(row) {
                *o += e * v;
            }
        }
        out.iter_mut().for_each(|o| *o *= self.weight);
    }

    /// `S(t) x`: mode `k` multiplied by `exp(-α_k t)`.
    pub fn apply_semigroup(&self, t: f64, x: &Field) -> Field {
        assert!(t >= 0.0, "semigroup time must be >= 0, got {t}");
        Field(
            x.0.iter()
                .zip(&self.eigenvalues)
                .map(|(c, a)| c * (-a * t).exp())
                .collect(),
        )
    }

    /// `(I + εA)^{-1} x`: mode `k` multiplied by `1/(1 + ε α_k)`.
    pub fn resolvent(&self, eps: f64, x: &Field) -> Field {
        assert!(eps > 0.0, "resolvent parameter must be > 0, got {eps}");
        Field(
            x.0.iter()
                .zip(&self.eigenvalues)
                .map(|(c, a)| c / (1.0 + eps * a))
                .collect(),
        )
    }

    /// `A x` on the span of the basis.
    pub fn apply_operator(&self, x: &Field) -> Field {
        Field(x.0.iter().zip(&self.eigenvalues).map(|(c, a)| c * a).collect())
    }

    /// Trapezoid approximation of `(∫_D |x|^p)^{1/p}`.
    pub fn lp_norm(&self, x: &Field, p: f64) -> f64 {
        self.lp_norm_grid(&self.synthesize(x), p)
    }

    pub fn lp_norm_grid(&self, values: &[f64], p: f64) -> f64 {
        assert!(p >= 1.0, "L_p norm needs p >= 1, got {p}");
        (self.weight * lp_sum(values, p)).powf(1.0 / p)
    }

    /// `‖x‖_{L_p}^p` without the final root.
    pub fn lp_norm_pow_grid(&self, values: &[f64], p: f64) -> f64 {
        assert!(p >= 1.0, "L_p norm needs p >= 1, got {p}");
        self.weight * lp_sum(values, p)
    }

    /// `∫_D g · x|x|^{p-2}`, the pairing behind the duality map of `L_p`.
    pub fn duality_pairing(&self, g: &Field, x: &Field, p: f64) -> f64 {
        assert!(p >= 2.0, "duality pairing needs p >= 2, got {p}");
        let gv = self.synthesize(g);
        let xv = self.synthesize(x);
        self.weight
            * gv.iter()
                .zip(&xv)
                .map(|(g, x)| g * x * x.abs().powf(p - 2.0))
                .sum::<f64>()
    }
}

#[inline]
fn lp_sum(values: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        values.iter().map(|v| v * v).sum()
    } else if p == 4.0 {
        values.iter().map(|v| (v * v) * (v * v)).sum()
    } else if p.fract() == 0.0 && p <= 32.0 {
        let n = p as i32;
        values.iter().map(|v| v.abs().powi(n)).sum()
    } else {
        values.iter().map(|v| v.abs().powf(p)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field((1..=n).map(|k| rng.random_range(-1.0..1.0) / k as f64).collect())
    }

    #[test]
    fn round_trip_is_identity() {
        let basis = SpectralBasis::new(32).unwrap();
        let x = random_field(32, 1);
        let back = basis.analyze(&basis.synthesize(&x));
        for (a, b) in x.0.iter().zip(&back.0) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eigenvalues_are_increasing_and_positive() {
        let basis = SpectralBasis::new(16).unwrap();
        let ev = basis.eigenvalues();
        assert!(ev[0] > 0.0);
        assert!(ev.windows(2).all(|w| w[1] > w[0]));
        assert!((ev[0] - PI * PI).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(SpectralBasis::new(0).is_err());
        assert!(SpectralBasis::with_grid(8, 4).is_err());
    }

    #[test]
    fn semigroup_identity_decay_and_law() {
        let basis = SpectralBasis::new(16).unwrap();
        let x = random_field(16, 2);
        assert_eq!(basis.apply_semigroup(0.0, &x), x);

        let e1 = Field::eigenfunction(16, 1, 1.0);
        let s = basis.apply_semigroup(0.1, &e1);
        assert!((s[0] - (-PI * PI / 10.0).exp()).abs() < 1e-15);
        assert!(s.0[1..].iter().all(|&c| c == 0.0));

        let lhs = basis.apply_semigroup(0.05, &basis.apply_semigroup(0.05, &x));
        let rhs = basis.apply_semigroup(0.1, &x);
        assert!((&lhs - &rhs).norm() < 1e-12);
    }

    #[test]
    #[should_panic]
    fn semigroup_rejects_negative_time() {
        let basis = SpectralBasis::new(4).unwrap();
        basis.apply_semigroup(-1.0, &basis.zeros());
    }

    #[test]
    fn resolvent_closed_form_and_limit() {
        let basis = SpectralBasis::new(16).unwrap();
        let e1 = Field::eigenfunction(16, 1, 1.0);
        let r = basis.resolvent(1.0, &e1);
        assert!((r[0] - 1.0 / (1.0 + PI * PI)).abs() < 1e-15);

        let x = random_field(16, 3);
        let mut prev = f64::INFINITY;
        for eps in [1.0, 0.1, 0.01] {
            let gap = (&basis.resolvent(eps, &x) - &x).norm();
            assert!(gap < prev);
            prev = gap;
        }
    }

    #[test]
    fn smoothed_operator_bounded_by_inverse_eps() {
        let basis = SpectralBasis::new(32).unwrap();
        for seed in 0..10 {
            let x = random_field(32, seed);
            for eps in [1.0, 1e-2, 1e-4] {
                let ax = basis.apply_operator(&basis.resolvent(eps, &x));
                assert!(ax.norm() <= x.norm() / eps * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    #[should_panic]
    fn resolvent_rejects_zero_eps() {
        let basis = SpectralBasis::new(4).unwrap();
        basis.resolvent(0.0, &basis.zeros());
    }

    #[test]
    fn lp_norm_closed_forms() {
        let basis = SpectralBasis::new(8).unwrap();
        assert_eq!(basis.lp_norm(&basis.zeros(), 3.0), 0.0);
        let e1 = Field::eigenfunction(8, 1, 1.0);
        assert!((basis.lp_norm(&e1, 2.0) - 1.0).abs() < 1e-14);
        // ∫ 4 sin⁴(πξ) dξ = 3/2
        assert!((basis.lp_norm(&e1, 4.0) - 1.5f64.powf(0.25)).abs() < 1e-14);
    }

    #[test]
    fn duality_pairing_cases() {
        let basis = SpectralBasis::new(16).unwrap();
        let x = random_field(16, 4);
        let n2 = x.norm().powi(2);
        assert!((basis.duality_pairing(&x, &x, 2.0) - n2).abs() < 1e-12);
        assert_eq!(basis.duality_pairing(&x, &basis.zeros(), 4.0), 0.0);
    }

    #[test]
    fn laplacian_is_accretive_in_lp() {
        let basis = SpectralBasis::new(16).unwrap();
        for seed in 0..20 {
            let x = random_field(16, 100 + seed);
            let ax = basis.apply_operator(&x);
            for p in [2.0, 3.0, 4.0, 6.0, 8.0] {
                assert!(basis.duality_pairing(&ax, &x, p) >= -1e-8, "seed {seed}, p {p}");
            }
        }
    }

    proptest! {
        #[test]
        fn semigroup_contracts_lp(seed in 0u64..1000, t in 1e-4f64..0.5, pi in 0usize..3) {
            let basis = SpectralBasis::new(16).unwrap();
            let p = [2.0, 4.0, 8.0][pi];
            let x = random_field(16, seed);
            let before = basis.lp_norm(&x, p);
            let after = basis.lp_norm(&basis.apply_semigroup(t, &x), p);
            prop_assert!(after <= before * (1.0 + 1e-9));
        }

        #[test]
        fn parseval_and_resolvent_identity(seed in 0u64..1000, eps in 1e-4f64..10.0) {
            let basis = SpectralBasis::new(24).unwrap();
            let x = random_field(24, seed);
            prop_assert!((basis.lp_norm(&x, 2.0) - x.norm()).abs() <= 1e-10);
            let r = basis.resolvent(eps, &x);
            let back = &r + &basis.apply_operator(&r).scaled(eps);
            for (a, b) in back.0.iter().zip(&x.0) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
