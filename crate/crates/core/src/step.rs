//! Right-continuous step survival functions on `[0, ∞)`.
//!
//! A step function is stored as weighted atoms `(x_i, w_i)` with
//! `0 < x_1 < … < x_m` and `Σ w_i = 1`, so that `Ŝ(x) = Σ_{x_i > x} w_i`,
//! `Ŝ(0) = 1` and `Ŝ ≡ 0` beyond the last atom. Empirical survival functions
//! of excesses have weights `1/k` (merged at ties); ratios of event counts
//! may carry negative weights where the counts are not monotone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    /// `levels[i]` is the value on `[x_{i-1}, x_i)` with `x_{-1} = 0`;
    /// one longer than `atoms`, ending in 0.
    levels: Vec<f64>,
}

impl StepSurvival {
    /// Empirical survival function `(1/k) Σ 1(Y_j > x)` of positive excesses.
    pub fn from_excesses(excesses: &[f64]) -> Result<Self> {
        if excesses.is_empty() {
            return Err(Error::EmptySample("no excesses".into()));
        }
        if let Some(bad) = excesses.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
            return Err(Error::domain(format!(
                "excesses must be positive and finite, got {bad}"
            )));
        }
        let mut sorted = excesses.to_vec();
        sorted.sort_by(f64::total_cmp);
        let w = 1.0 / sorted.len() as f64;
        let mut atoms: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for y in sorted {
            match atoms.last() {
                Some(&last) if last == y => *counts.last_mut().unwrap() += 1,
                _ => {
                    atoms.push(y);
                    counts.push(1);
                }
            }
        }
        let weights = counts.iter().map(|&c| c as f64 * w).collect();
        // levels from counts to avoid accumulating rounding
        let n = excesses.len();
        let mut remaining = n;
        let mut levels = Vec::with_capacity(atoms.len() + 1);
        levels.push(1.0);
        for &c in &counts {
            remaining -= c;
            levels.push(remaining as f64 / n as f64);
        }
        Ok(Self { atoms, weights, levels })
    }

    /// Builds a step function from breakpoints `b_i > 0` (strictly increasing)
    /// and the values taken on `[b_i, b_{i+1})`; the value before `b_0` is 1 and
    /// the last value must be 0.
    pub fn from_levels(breakpoints: &[f64], values: &[f64]) -> Result<Self> {
        if breakpoints.len() != values.len() || breakpoints.is_empty() {
            return Err(Error::domain(
                "breakpoints and values must be nonempty and of equal length",
            ));
        }
        if !(breakpoints[0] > 0.0) || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("breakpoints must be positive and strictly increasing"));
        }
        if *values.last().unwrap() != 0.0 {
            return Err(Error::domain("step function must vanish after its last breakpoint"));
        }
        let mut levels = Vec::with_capacity(values.len() + 1);
        levels.push(1.0);
        levels.extend_from_slice(values);
        let weights = levels.windows(2).map(|w| w[0] - w[1]).collect();
        Ok(Self {
            atoms: breakpoints.to_vec(),
            weights,
            levels,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Values on the successive segments `[0, x_1), [x_1, x_2), …, [x_m, ∞)`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn last_breakpoint(&self) -> f64 {
        *self.atoms.last().expect("step function has at least one atom")
    }

    pub fn is_monotone(&self) -> bool {
        self.weights.iter().all(|&w| w >= -1e-15)
    }

    /// `Ŝ(x)`; equal to 1 for every `x < x_1` including negative `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.atoms.partition_point(|&a| a <= x);
        self.levels[i]
    }

    /// `∫_0^∞ Ŝ(x)² dx`.
    pub fn squared_integral(&self) -> f64 {
        let mut prev = 0.0;
        let mut acc = 0.0;
        for (i, &x) in self.atoms.iter().enumerate() {
            acc += self.levels[i] * self.levels[i] * (x - prev);
            prev = x;
        }
        acc
    }

    /// Returns the step function of `c·Y`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::domain(format!("scale factor must be positive, got {c}")));
        }
        Ok(Self {
            atoms: self.atoms.iter().map(|x| x * c).collect(),
            weights: self.weights.clone(),
            levels: self.levels.clone(),
        })
    }

    /// Smallest atom `x_i` with `Σ_{j ≤ i} w_j ≥ p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.atoms.iter().zip(&self.weights) {
            acc += w;
            if acc >= p - 1e-12 {
                return *x;
            }
        }
        self.last_breakpoint()
    }

    /// Mean and variance of the atom distribution (weights taken as given).
    pub fn moments(&self) -> (f64, f64) {
        let mean: f64 = self.atoms.iter().zip(&self.weights).map(|(x, w)| x * w).sum();
        let var = self
            .atoms
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (x - mean) * (x - mean))
            .sum();
        (mean, var)
    }
}
