use crate::error::{contract, Result};

/// Non-decreasing time points `0 = t_0 ≤ t_1 ≤ … ≤ t_N = T`.
///
/// Zero-length steps are allowed and carry zero noise.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        match times.first() {
            None => return Err(contract("time grid is empty")),
            Some(&t0) if t0 != 0.0 => return Err(contract(format!("time grid must start at 0, starts at {t0}"))),
            _ => {}
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(contract("time grid has non-finite points"));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] < w[0]) {
            return Err(contract(format!("time grid decreases from {} to {}", w[0], w[1])));
        }
        Ok(Self { times })
    }

    /// `N = round(T/dt)` equal steps; `T` must be a multiple of `dt`.
    pub fn uniform(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(contract(format!("horizon must be >= 0, got {horizon}")));
        }
        if !(dt > 0.0) {
            return Err(contract(format!("time step must be > 0, got {dt}")));
        }
        let n = (horizon / dt).round() as usize;
        if (n as f64 * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
            return Err(contract(format!("horizon {horizon} is not a multiple of dt {dt}")));
        }
        let times = (0..=n).map(|j| if j == n { horizon } else { j as f64 * dt }).collect();
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn step(&self, j: usize) -> f64 {
        self.times[j + 1] - self.times[j]
    }

    /// Largest step.
    pub fn max_step(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Keep every `factor`-th point.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.n_steps().is_multiple_of(factor) {
            return Err(contract(format!(
                "cannot subsample {} steps by {factor}",
                self.n_steps()
            )));
        }
        Ok(Self {
            times: self.times.iter().step_by(factor).copied().collect(),
        })
    }
}
