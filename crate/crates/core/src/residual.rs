//! Residual-based variance model for the fitted survival function.
//!
//! The absolute residual `r̂(x) = |Ŝ_k(x) − S_θ̂(x)|` is regressed on
//! `φ·√S_θ̂(x)` in `L2(0, ∞)`. Because the model is linear in `φ` the
//! minimiser is the projection
//!
//! ```text
//! φ̂ = ∫ r̂ √S_θ̂ dx / ∫ S_θ̂ dx,
//! ```
//!
//! and on each step of `Ŝ` the numerator splits at the point where
//! `S_θ̂` crosses the step level, leaving integrals of `S^{1/2}` and
//! `S^{3/2}` that have closed forms. The plug-in variance of
//! [`crate::asymptotics`] is the better-founded choice; this route exists as an
//! alternative variance estimate.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{normal_quantile, CiConvention, CiOptions, CiResult};
use crate::error::{Error, Result};
use crate::events::ExceedanceSample;
use crate::gpd::Bound;
use crate::mde::{FitParams, FitResult, Method};
use crate::step::StepSurvival;
use crate::GpdParams;

/// Lower bound applied to `φ̂` when the projection is not positive.
pub const PHI_FLOOR: f64 = 1e-12;

/// `x ↦ |Ŝ(x) − S_θ̂(x)|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualCurve {
    step: StepSurvival,
    theta: GpdParams,
}

impl ResidualCurve {
    pub fn eval(&self, x: f64) -> f64 {
        (self.step.eval(x) - self.theta.sf(x.max(0.0))).abs()
    }

    pub fn breakpoints(&self) -> &[f64] {
        self.step.atoms()
    }

    /// Beyond this point the residual is `S_θ̂` itself.
    pub fn upper_bound(&self) -> f64 {
        self.step.last_breakpoint()
    }

    pub fn theta(&self) -> &GpdParams {
        &self.theta
    }

    /// `∫_0^∞ r̂(x) S_θ̂(x)^{1/2} dx` in closed form.
    pub fn weighted_integral(&self) -> Result<f64> {
        let th = &self.theta;
        let (g, s) = (th.gamma(), th.sigma());
        let mut acc = 0.0;
        let mut prev = 0.0;
        let levels = self.step.levels();
        for (i, &b) in self.step.atoms().iter().enumerate() {
            let c = levels[i];
            // S is decreasing; S > c on [prev, cross) and S ≤ c afterwards
            let cross = if c >= 1.0 {
                0.0
            } else if c <= 0.0 {
                f64::INFINITY
            } else {
                s * (c.powf(-g) - 1.0) / g
            };
            let mid = cross.clamp(prev, b);
            let above = th.integral_survival_power(prev, Bound::Finite(mid), 1.5)?
                - c * th.integral_survival_power(prev, Bound::Finite(mid), 0.5)?;
            let below = c * th.integral_survival_power(mid, Bound::Finite(b), 0.5)?
                - th.integral_survival_power(mid, Bound::Finite(b), 1.5)?;
            acc += above + below;
            prev = b;
        }
        acc += th.integral_survival_power(prev, Bound::Infinity, 1.5)?;
        Ok(acc)
    }

    /// Rows `(x, r̂(x), φ̂ √S_θ̂(x))` on `points` equally spaced values over
    /// `[0, x_max]`.
    pub fn plot_data(&self, phi: f64, x_max: f64, points: usize) -> Vec<[f64; 3]> {
        let n = points.max(2);
        (0..n)
            .map(|i| {
                let x = x_max * i as f64 / (n - 1) as f64;
                [x, self.eval(x), phi * self.theta.sf(x).sqrt()]
            })
            .collect()
    }
}

fn two_param(fit: &FitResult) -> Result<GpdParams> {
    match (fit.method, fit.params) {
        (Method::Mde2, FitParams::Two(p)) => Ok(p),
        _ => Err(Error::Unsupported(format!(
            "residual variance model needs a two-parameter minimum-distance fit, got {}",
            fit.method
        ))),
    }
}

/// Residuals of `fit` against the pooled step function of `sample`.
pub fn residuals(sample: &ExceedanceSample, fit: &FitResult) -> Result<ResidualCurve> {
    let theta = two_param(fit)?;
    if fit.k != sample.total_k {
        return Err(Error::domain(format!(
            "fit used k = {} exceedances but the sample has {}",
            fit.k, sample.total_k
        )));
    }
    Ok(ResidualCurve {
        step: sample.pooled_step.clone(),
        theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiFit {
    pub phi: f64,
    /// Set when the projection was not positive and `φ̂` was floored.
    pub warning: Option<String>,
}

/// Least-squares `φ̂` of `r̂ ≈ φ √S_θ̂` over `(0, ∞)`.
pub fn fit_phi(resid: &ResidualCurve) -> Result<PhiFit> {
    let th = &resid.theta;
    let denom = th.sigma() / (1.0 - th.gamma());
    Ok(project(resid.weighted_integral()?, denom))
}

fn project(numerator: f64, denominator: f64) -> PhiFit {
    let phi = numerator / denominator;
    if phi > PHI_FLOOR {
        PhiFit { phi, warning: None }
    } else {
        PhiFit {
            phi: PHI_FLOOR,
            warning: Some(format!(
                "residual projection {phi:e} is not positive; using floor {PHI_FLOOR:e}"
            )),
        }
    }
}

/// Interval for `S_θ(x)` with `ς̂(x) = φ̂ √S_θ̂(x)`.
pub fn residual_ci(
    sample: &ExceedanceSample,
    fit: &FitResult,
    x: f64,
    level: f64,
    opts: &CiOptions,
) -> Result<CiResult> {
    if fit.k < opts.min_k {
        return Err(Error::TooFewExceedances {
            k: fit.k,
            min_k: opts.min_k,
        });
    }
    let resid = residuals(sample, fit)?;
    let phi = fit_phi(&resid)?.phi;
    let z = normal_quantile(level)?;
    let center = resid.theta.survival(x)?;
    let sd = phi * center.sqrt();
    let k = fit.k as f64;
    let half_width = match opts.convention {
        CiConvention::Corrected => z * sd / k.sqrt(),
        CiConvention::StrictPaper => k.sqrt() * z * sd,
    };
    Ok(CiResult {
        center,
        half_width,
        lower: (center - half_width).clamp(0.0, 1.0),
        upper: (center + half_width).clamp(0.0, 1.0),
        level,
        x,
        k: fit.k,
        scale_note: opts.convention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mde::{fit_mde, FitOptions};
    use crate::quadrature::{integrate, integrate_to_infinity};

    fn fitted(xs: &[f64]) -> (ExceedanceSample, FitResult) {
        let s = ExceedanceSample::from_excesses(xs).unwrap();
        let opts = FitOptions {
            min_k: 1,
            ..FitOptions::default()
        };
        let f = fit_mde(&s, None, &opts).unwrap();
        (s, f)
    }

    fn quad_weighted(r: &ResidualCurve) -> f64 {
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &b in r.breakpoints() {
            acc += integrate(|x| r.eval(x) * r.theta.sf(x).sqrt(), prev, b, 1e-12).unwrap();
            prev = b;
        }
        acc + integrate_to_infinity(|x| r.eval(x) * r.theta.sf(x).sqrt(), prev, 1e-12).unwrap()
    }

    #[test]
    fn residual_at_breakpoint_by_hand() {
        let (s, f) = fitted(&[0.5, 1.0, 2.0]);
        let r = residuals(&s, &f).unwrap();
        let th = f.params.two().unwrap();
        // right-continuous step: value 1/3 at x = 1
        assert_eq!(r.eval(1.0), (1.0 / 3.0 - th.sf(1.0)).abs());
        assert_eq!(r.eval(5.0), th.sf(5.0));
    }

    #[test]
    fn weighted_integral_matches_quadrature() {
        let xs = GpdParams::new(0.3, 1.0).unwrap().sample(40, 11).unwrap();
        let (s, f) = fitted(&xs);
        let r = residuals(&s, &f).unwrap();
        let a = r.weighted_integral().unwrap();
        let b = quad_weighted(&r);
        assert!((a - b).abs() < 1e-8 * b, "{a} vs {b}");
    }

    #[test]
    fn phi_satisfies_first_order_condition_and_beats_grid() {
        let xs = GpdParams::new(0.2, 1.0).unwrap().sample(60, 5).unwrap();
        let (s, f) = fitted(&xs);
        let r = residuals(&s, &f).unwrap();
        let phi = fit_phi(&r).unwrap().phi;
        let th = f.params.two().unwrap();
        let foc = quad_weighted(&r) - phi * integrate_to_infinity(|x| th.sf(x), 0.0, 1e-13).unwrap();
        assert!(foc.abs() < 1e-8, "{foc}");
        // objective up to a φ-free constant: φ² ∫S − 2φ ∫ r√S
        let num = quad_weighted(&r);
        let den = th.sigma() / (1.0 - th.gamma());
        let obj = |p: f64| p * p * den - 2.0 * p * num;
        let grid_best = (0..=200_000)
            .map(|i| i as f64 * 1e-6)
            .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
            .unwrap();
        assert!((grid_best - phi).abs() < 1e-6, "{grid_best} vs {phi}");
    }

    #[test]
    fn projection_of_a_multiple_and_floor() {
        let th = GpdParams::new(0.25, 1.0).unwrap();
        let c = 0.37;
        let num = integrate_to_infinity(|x| c * th.sf(x), 0.0, 1e-13).unwrap();
        let fit = project(num, th.sigma() / (1.0 - th.gamma()));
        assert!((fit.phi - c).abs() < 1e-10 && fit.warning.is_none());
        let zero = project(0.0, 1.0);
        assert_eq!(zero.phi, PHI_FLOOR);
        assert!(zero.warning.is_some());
    }

    #[test]
    fn dense_quantile_grid_has_small_residual() {
        let th = GpdParams::new(0.2, 1.0).unwrap();
        let m = 20_000;
        let xs: Vec<f64> = (0..m)
            .map(|i| th.quantile_unchecked((i as f64 + 0.5) / m as f64))
            .collect();
        let (s, f) = fitted(&xs);
        let r = residuals(&s, &f).unwrap();
        for x in [0.1, 1.0, 5.0, 20.0] {
            assert!(r.eval(x) < 1e-3, "x={x}: {}", r.eval(x));
        }
        assert!(fit_phi(&r).unwrap().phi < 1e-3);
    }

    #[test]
    fn residual_interval_shape() {
        let xs = GpdParams::new(0.2, 1.0).unwrap().sample(200, 2).unwrap();
        let (s, f) = fitted(&xs);
        let opts = CiOptions::default();
        let phi = fit_phi(&residuals(&s, &f).unwrap()).unwrap().phi;
        let at0 = residual_ci(&s, &f, 0.0, 0.95, &opts).unwrap();
        let z = normal_quantile(0.95).unwrap();
        assert!((at0.half_width - phi * z / 200f64.sqrt()).abs() < 1e-15);
        assert!(at0.half_width > 0.0);
        let a = residual_ci(&s, &f, 1.0, 0.95, &opts).unwrap();
        let b = residual_ci(&s, &f, 4.0, 0.95, &opts).unwrap();
        let th = f.params.two().unwrap();
        let expect = (th.sf(1.0) / th.sf(4.0)).sqrt();
        assert!((a.half_width / b.half_width - expect).abs() < 1e-10);
        assert_eq!(residual_ci(&s, &f, 1.0, 0.95, &opts).unwrap(), a);
    }

    #[test]
    fn mismatched_sample_is_rejected() {
        let (_, f) = fitted(&[0.5, 1.0, 2.0, 3.0, 4.0]);
        let other = ExceedanceSample::from_excesses(&[1.0, 2.0]).unwrap();
        assert!(residuals(&other, &f).is_err());
    }
}
