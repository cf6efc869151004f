//! Closed-form asymptotics of the two-parameter minimum-distance estimator.
//!
//! With `Ψ` the score of [`crate::mde::score_psi`], the estimator satisfies
//! `√k(θ̂ − θ) ⇒ N(0, Σ_θ)` where `Σ_θ = U⁻¹ V U⁻ᵀ`, `U = ∂_θ E[ψ]` and
//! `V = E[ψ ψᵀ]`. By the delta method `√k(S_θ̂(x) − S_θ(x)) ⇒ N(0, ς²_θ(x))`
//! with `ς²_θ(x) = ∇S(x)ᵀ Σ_θ ∇S(x)`. All of these are rational functions of
//! `γ` (with explicit `σ` powers) and are evaluated here in closed form, next
//! to the maximum-likelihood counterparts used as an efficiency benchmark.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::mde::{FitParams, FitResult, Method};
use crate::GpdParams;

/// Symmetric 2×2 matrix in `(γ, σ)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix2 {
    pub entries: [[f64; 2]; 2],
}

impl CovMatrix2 {
    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self {
            entries: [[a11, a12], [a12, a22]],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn det(&self) -> f64 {
        let e = &self.entries;
        e[0][0] * e[1][1] - e[0][1] * e[1][0]
    }

    pub fn inverse(&self) -> Result<Self> {
        let d = self.det();
        let scale = self.max_abs().powi(2);
        if !(d.abs() > 1e-14 * scale.max(1e-300)) {
            return Err(Error::Numeric(format!("matrix is numerically singular (det {d:e})")));
        }
        let e = &self.entries;
        Ok(Self {
            entries: [[e[1][1] / d, -e[0][1] / d], [-e[1][0] / d, e[0][0] / d]],
        })
    }

    pub fn transpose(&self) -> Self {
        let e = &self.entries;
        Self {
            entries: [[e[0][0], e[1][0]], [e[0][1], e[1][1]]],
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let (a, b) = (&self.entries, &other.entries);
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self { entries: out }
    }

    /// `aᵀ M b`.
    pub fn bilinear(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let e = &self.entries;
        a[0] * (e[0][0] * b[0] + e[0][1] * b[1]) + a[1] * (e[1][0] * b[0] + e[1][1] * b[1])
    }

    pub fn quad_form(&self, v: [f64; 2]) -> f64 {
        self.bilinear(v, v)
    }

    /// Eigenvalues in ascending order (symmetric part).
    pub fn eigenvalues(&self) -> [f64; 2] {
        let e = &self.entries;
        let off = 0.5 * (e[0][1] + e[1][0]);
        let mean = 0.5 * (e[0][0] + e[1][1]);
        let r = (0.5 * (e[0][0] - e[1][1])).hypot(off);
        [mean - r, mean + r]
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = *self;
        out.entries.iter_mut().flatten().for_each(|v| *v *= c);
        out
    }

    /// Largest entrywise relative deviation from `other`, measured against
    /// the largest entry of `other`.
    pub fn max_rel_diff(&self, other: &Self) -> f64 {
        let scale = other.max_abs().max(1e-300);
        self.entries
            .iter()
            .flatten()
            .zip(other.entries.iter().flatten())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs() / scale))
    }
}

fn check(theta: &GpdParams) -> Result<(f64, f64)> {
    theta.require_estimation_domain()?;
    Ok((theta.gamma(), theta.sigma()))
}

/// `U_θ = ∂_θ' E_θ[ψ(Z, θ')]|_{θ'=θ}`.
pub fn matrix_u(theta: &GpdParams) -> Result<CovMatrix2> {
    let (g, s) = check(theta)?;
    let u11 = (g - 6.0) * s / (2.0 * (g - 2.0).powi(3) * (g + 2.0));
    let u12 = (6.0 - g) / (4.0 * (g - 2.0).powi(2) * (g + 2.0));
    let u22 = 1.0 / (4.0 * s - g * g * s);
    Ok(CovMatrix2::new(u11, u12, u22))
}

/// `V_θ = E_θ[ψ ψᵀ]`.
pub fn matrix_v(theta: &GpdParams) -> Result<CovMatrix2> {
    let (g, s) = check(theta)?;
    let poly11 = ((((8.0 * g - 148.0) * g + 918.0) * g - 2587.0) * g + 3416.0) * g - 1719.0;
    let v11 = poly11 * s * s / (12.0 * (g - 3.0).powi(2) * (g - 2.0).powi(4) * (2.0 * g - 3.0).powi(3));
    let poly12 = g * (g * (-4.0 * (g - 15.0) * g - 285.0) + 548.0) - 369.0;
    let v12 = poly12 * s / (12.0 * (g - 2.0).powi(3) * (2.0 * g * g - 9.0 * g + 9.0).powi(2));
    let v22 = (g * (2.0 * g - 17.0) + 29.0) / (12.0 * (g - 3.0) * (g - 2.0).powi(2) * (2.0 * g - 3.0));
    Ok(CovMatrix2::new(v11, v12, v22))
}

/// `Σ_θ` from its explicit rational display.
pub fn sigma_matrix(theta: &GpdParams) -> Result<CovMatrix2> {
    let (g, s) = check(theta)?;
    let den = 3.0 * (g - 3.0).powi(2) * (2.0 * g - 3.0).powi(3);
    let p2 = sigma_poly(g);
    let s11 = 4.0 * (g - 2.0).powi(4) * p2 / ((g - 6.0).powi(2) * den);
    let q12 = g * (g * (2.0 * g * (4.0 * g * g - 50.0 * g + 207.0) - 791.0) + 778.0) - 387.0;
    let s12 = 4.0 * (g - 2.0).powi(2) * q12 * s / ((g - 6.0) * den);
    let q22 = g * (g * (((8.0 * g - 84.0) * g + 374.0) * g - 843.0) + 944.0) - 423.0;
    let s22 = 4.0 * q22 * s * s / den;
    Ok(CovMatrix2::new(s11, s12, s22))
}

/// `Σ_θ` assembled as `U⁻¹ V U⁻ᵀ`.
pub fn sandwich(theta: &GpdParams) -> Result<CovMatrix2> {
    let ui = matrix_u(theta)?.inverse()?;
    Ok(ui.matmul(&matrix_v(theta)?).matmul(&ui.transpose()))
}

fn sigma_poly(g: f64) -> f64 {
    g * (g * (2.0 * g * (4.0 * g * g - 58.0 * g + 243.0) - 683.0) + 452.0) - 639.0
}

/// `ln(1+t) − t/(1+t)`, accurate for small `t`.
fn log_minus_ratio(t: f64) -> f64 {
    if t.abs() < 1e-3 {
        // Σ_{n≥2} (−1)^n (n−1)/n tⁿ
        let mut acc = 0.0;
        let mut pow = t * t;
        for n in 2..12 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (n - 1) as f64 / n as f64 * pow;
            pow *= t;
        }
        acc
    } else {
        t.ln_1p() - t / (1.0 + t)
    }
}

/// `∇ log S_θ(x)`; finite even where `S_θ(x)` underflows.
pub fn gradient_log_survival(theta: &GpdParams, x: f64) -> Result<[f64; 2]> {
    let (g, s) = check(theta)?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("excess level must be nonnegative, got {x}")));
    }
    let t = g * x / s;
    Ok([log_minus_ratio(t) / (g * g), x / (s * (s + g * x))])
}

/// `(∂_γ S_θ(x), ∂_σ S_θ(x))`.
pub fn gradient_survival(theta: &GpdParams, x: f64) -> Result<[f64; 2]> {
    let d = gradient_log_survival(theta, x)?;
    let sv = theta.sf(x);
    Ok([sv * d[0], sv * d[1]])
}

/// `ς²_θ(x)` from its closed-form display; the quadratic form
/// `∇Sᵀ Σ ∇S` is used for `γ < 1e−8`, where the display loses all digits.
pub fn var_survival(theta: &GpdParams, x: f64) -> Result<f64> {
    let (g, s) = check(theta)?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("excess level must be nonnegative, got {x}")));
    }
    if g < 1e-8 {
        return Ok(sigma_matrix(theta)?.quad_form(gradient_survival(theta, x)?).max(0.0));
    }
    let sv = theta.sf(x);
    let l = theta.log_base(x);
    let w = s + g * x;
    let p1 = (((30.0 * g - 266.0) * g + 857.0) * g - 1208.0) * g + 639.0;
    let p3 = (((16.0 * g - 124.0) * g + 446.0) * g - 830.0) * g + 639.0;
    let p2 = sigma_poly(g);
    let bracket = 4.0 * g * g * (g + 2.0).powi(2) * p1 * x * x
        + (g - 2.0).powi(2) * w * l * (-(g - 2.0).powi(2) * p2 * w * l - 4.0 * g * (g + 2.0) * p3 * x);
    let prefactor = 3.0 * (3.0 - 2.0 * g).powi(3) * (g - 6.0).powi(2) * (g - 3.0).powi(2);
    Ok((4.0 * sv * sv * bracket / (prefactor * g.powi(4) * w * w)).max(0.0))
}

/// `Cov(𝔾(x), 𝔾(x2)) = ∇S(x)ᵀ Σ_θ ∇S(x2)`.
pub fn cov_kernel(theta: &GpdParams, x: f64, x2: f64) -> Result<f64> {
    let sigma = sigma_matrix(theta)?;
    Ok(sigma.bilinear(gradient_survival(theta, x)?, gradient_survival(theta, x2)?))
}

/// Inverse Fisher information of the GPD; `γ = 0` is accepted as a limit.
pub fn sigma_matrix_mle_at(gamma: f64, sigma: f64) -> Result<CovMatrix2> {
    if !(0.0..1.0).contains(&gamma) || !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!(
            "need γ ∈ [0, 1) and σ > 0, got ({gamma}, {sigma})"
        )));
    }
    let a = gamma + 1.0;
    Ok(CovMatrix2::new(a * a, -a * sigma, 2.0 * a * sigma * sigma))
}

pub fn sigma_matrix_mle(theta: &GpdParams) -> Result<CovMatrix2> {
    let (g, s) = check(theta)?;
    sigma_matrix_mle_at(g, s)
}

/// `ς²_MLE(x)` from its closed-form display.
pub fn var_survival_mle(theta: &GpdParams, x: f64) -> Result<f64> {
    let (g, s) = check(theta)?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("excess level must be nonnegative, got {x}")));
    }
    if g < 1e-8 {
        return Ok(sigma_matrix_mle(theta)?
            .quad_form(gradient_survival(theta, x)?)
            .max(0.0));
    }
    let sv = theta.sf(x);
    let w = s + g * x;
    let wl = w * theta.log_base(x);
    let a = g + 1.0;
    let bracket = a * (2.0 * g + 1.0) * g * g * x * x + wl * (a * wl - 2.0 * g * (2.0 * g + 1.0) * x);
    Ok((a * sv * sv * bracket / (g.powi(4) * w * w)).max(0.0))
}

/// Pointwise variance ratio of the two estimators at excess level `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRatio {
    pub mde_over_mle: f64,
    pub mle_over_mde: f64,
}

/// Ratio of survival variances, computed from `∇ log S` so that it stays
/// defined where `S` underflows.
pub fn efficiency_ratio(theta: &GpdParams, x: f64) -> Result<EfficiencyRatio> {
    if !(x > 0.0) {
        return Err(Error::domain("pointwise ratio needs x > 0; use ratio_limits at x = 0"));
    }
    let d = gradient_log_survival(theta, x)?;
    let mde = sigma_matrix(theta)?.quad_form(d);
    let mle = sigma_matrix_mle(theta)?.quad_form(d);
    Ok(EfficiencyRatio {
        mde_over_mle: mde / mle,
        mle_over_mde: mle / mde,
    })
}

/// Limits of `ς²/ς²_MLE` as `x → 0` and `x → ∞`; free of `σ`. `γ = 0` is
/// accepted as a boundary evaluation.
pub fn ratio_limits(gamma: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::domain(format!("need γ ∈ [0, 1), got {gamma}")));
    }
    let g = gamma;
    let q22 = g * (g * (((8.0 * g - 84.0) * g + 374.0) * g - 843.0) + 944.0) - 423.0;
    let at_zero = 2.0 * q22 / (3.0 * (g - 3.0).powi(2) * (g + 1.0) * (2.0 * g - 3.0).powi(3));
    let at_inf = -4.0 * (g - 2.0).powi(4) * sigma_poly(g)
        / (3.0 * (3.0 - 2.0 * g).powi(3) * (g - 6.0).powi(2) * (g - 3.0).powi(2) * (g + 1.0).powi(2));
    Ok((at_zero, at_inf))
}

/// Placement of `√k` in the interval half-width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CiConvention {
    /// `z · ς̂(x) / √k`, consistent with `√k(Ŝ − S) ⇒ N(0, ς²)`.
    #[default]
    Corrected,
    /// `√k · z · ς̂(x)`; grossly over-covers.
    StrictPaper,
}

impl std::str::FromStr for CiConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrected" => Ok(Self::Corrected),
            "strict-paper" | "strict" => Ok(Self::StrictPaper),
            other => Err(Error::Config(format!("unknown CI convention `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub center: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub x: f64,
    pub k: usize,
    pub scale_note: CiConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CiOptions {
    pub convention: CiConvention,
    pub min_k: usize,
    /// Adds the binomial variance of the exceedance rate in [`target_ci`].
    pub rate_variance: bool,
}

impl Default for CiOptions {
    fn default() -> Self {
        Self {
            convention: CiConvention::Corrected,
            min_k: 30,
            rate_variance: false,
        }
    }
}

/// Two-sided standard normal quantile `z_{(1+level)/2}`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 * (1.0 + level)))
}

fn two_param_fit(fit: &FitResult, opts: &CiOptions) -> Result<GpdParams> {
    let theta = match (fit.method, fit.params) {
        (Method::Mde2, FitParams::Two(p)) => p,
        (Method::Mde3, _) | (_, FitParams::Three(_)) => {
            return Err(Error::Unsupported(
                "no asymptotic theory for the three-parameter fit".into(),
            ))
        }
        (Method::Mle, _) => {
            return Err(Error::Unsupported(
                "intervals are built for minimum-distance fits".into(),
            ))
        }
    };
    if fit.k < opts.min_k {
        return Err(Error::TooFewExceedances {
            k: fit.k,
            min_k: opts.min_k,
        });
    }
    Ok(theta)
}

/// Plug-in interval for `S_θ(x)` at excess level `x`.
pub fn confidence_interval(fit: &FitResult, x: f64, level: f64, opts: &CiOptions) -> Result<CiResult> {
    let theta = two_param_fit(fit, opts)?;
    let z = normal_quantile(level)?;
    let center = theta.survival(x)?;
    let sd = var_survival(&theta, x)?.sqrt();
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

/// Interval on the expected-count scale `n_total · rate · S_θ(x)`.
///
/// The rate is treated as known unless `opts.rate_variance` is set, which
/// adds `S² · rate(1 − rate)/n_total` under independence. Bounds are clipped
/// at 0 and at `n_total`.
pub fn target_ci(fit: &FitResult, x: f64, level: f64, n_total: f64, rate: f64, opts: &CiOptions) -> Result<CiResult> {
    if !(n_total >= 0.0 && n_total.is_finite()) || !(0.0..=1.0).contains(&rate) {
        return Err(Error::domain(format!(
            "need n_total ≥ 0 and rate ∈ [0, 1], got ({n_total}, {rate})"
        )));
    }
    let base = confidence_interval(fit, x, level, opts)?;
    let c = n_total * rate;
    let mut half_width = c * base.half_width;
    if opts.rate_variance && n_total > 0.0 {
        let z = normal_quantile(level)?;
        let rate_sd = (rate * (1.0 - rate) / n_total).sqrt();
        half_width = half_width.hypot(z * n_total * base.center * rate_sd);
    }
    let center = c * base.center;
    Ok(CiResult {
        center,
        half_width,
        lower: (center - half_width).clamp(0.0, n_total),
        upper: (center + half_width).clamp(0.0, n_total),
        ..base
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mde::{psi_unchecked, FitOptions};
    use crate::quadrature::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(g: f64, s: f64) -> GpdParams {
        GpdParams::new(g, s).unwrap()
    }

    fn expect_under(theta: &GpdParams, f: impl Fn(f64) -> f64) -> f64 {
        // shifted by 1 so the relative tolerance bites near zero
        integrate(|u| 1.0 + f(theta.quantile_unchecked(u)), 0.0, 1.0, 1e-12).unwrap() - 1.0
    }

    #[test]
    fn u_hand_value_and_symmetry() {
        let u = matrix_u(&p(0.2, 1.0)).unwrap();
        assert!((u.get(0, 0) - (-5.8) / (2.0 * (-5.832) * 2.2)).abs() < 1e-15);
        assert!((u.get(0, 0) - 0.226_026).abs() < 1e-5);
        assert_eq!(u.get(0, 1), u.get(1, 0));
        assert!(matrix_u(&p(1.2, 1.0)).is_err());
    }

    #[test]
    fn u_is_jacobian_of_expected_score() {
        let th0 = p(0.2, 1.0);
        let u = matrix_u(&th0).unwrap();
        let h = 1e-5;
        let mean_psi = |g: f64, s: f64| {
            let th = p(g, s);
            [0, 1].map(|c| expect_under(&th0, |z| psi_unchecked(z, &th)[c]))
        };
        let (gp, gm) = (mean_psi(0.2 + h, 1.0), mean_psi(0.2 - h, 1.0));
        let (sp, sm) = (mean_psi(0.2, 1.0 + h), mean_psi(0.2, 1.0 - h));
        for i in 0..2 {
            let dg = (gp[i] - gm[i]) / (2.0 * h);
            let ds = (sp[i] - sm[i]) / (2.0 * h);
            assert!(
                (dg - u.get(i, 0)).abs() < 1e-4 * u.max_abs(),
                "row {i}: {dg} vs {}",
                u.get(i, 0)
            );
            assert!(
                (ds - u.get(i, 1)).abs() < 1e-4 * u.max_abs(),
                "row {i}: {ds} vs {}",
                u.get(i, 1)
            );
        }
    }

    #[test]
    fn v_matches_quadrature() {
        let th = p(0.2, 1.0);
        let v = matrix_v(&th).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let q = expect_under(&th, |z| {
                let s = psi_unchecked(z, &th);
                s[i] * s[j]
            });
            assert!((q - v.get(i, j)).abs() < 1e-6, "V{i}{j}: {q} vs {}", v.get(i, j));
        }
    }

    #[test]
    fn v_is_psd_and_has_sigma_powers() {
        for g in [0.05, 0.2, 0.5, 0.8, 0.95] {
            for s in [0.5, 1.0, 3.0, 10.0] {
                let v = matrix_v(&p(g, s)).unwrap();
                assert!(v.eigenvalues()[0] >= -1e-10);
                let v1 = matrix_v(&p(g, 1.0)).unwrap();
                assert!((v.get(0, 0) - v1.get(0, 0) * s * s).abs() < 1e-12 * v.max_abs());
                assert!((v.get(0, 1) - v1.get(0, 1) * s).abs() < 1e-12 * v.max_abs());
                assert!((v.get(1, 1) - v1.get(1, 1)).abs() < 1e-12 * v.max_abs());
            }
        }
    }

    #[test]
    fn sigma_display_equals_sandwich() {
        for i in 1..10 {
            for s in [0.5, 1.0, 2.0, 5.0] {
                let th = p(i as f64 / 10.0, s);
                let a = sigma_matrix(&th).unwrap();
                let b = sandwich(&th).unwrap();
                assert!(a.max_rel_diff(&b) < 1e-10, "{th:?}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn sigma_hand_values() {
        let s = sigma_matrix(&p(0.2, 1.0)).unwrap();
        assert!((s.get(0, 0) - 1.7278).abs() < 1e-4);
        assert!((s.get(0, 1) + 1.40476).abs() < 1e-5);
        assert!((s.get(1, 1) - 2.56476).abs() < 1e-5);
        let s3 = sigma_matrix(&p(0.2, 3.0)).unwrap();
        assert!((s3.get(0, 0) - s.get(0, 0)).abs() < 1e-14);
        assert!((s3.get(1, 1) - 9.0 * s.get(1, 1)).abs() < 1e-12);
    }

    #[test]
    fn sigma_grows_with_gamma_and_sigma() {
        // the off-diagonal dips slightly below γ = 0.15 before growing
        let mut prev = sigma_matrix(&p(0.05, 1.0)).unwrap();
        for i in 2..20 {
            let g = i as f64 * 0.05;
            let cur = sigma_matrix(&p(g, 1.0)).unwrap();
            assert!(cur.get(0, 0) > prev.get(0, 0) && cur.get(1, 1) > prev.get(1, 1));
            if g > 0.175 {
                assert!(cur.get(0, 1).abs() > prev.get(0, 1).abs());
            }
            prev = cur;
        }
        let a = sigma_matrix(&p(0.3, 1.0)).unwrap();
        let b = sigma_matrix(&p(0.3, 2.0)).unwrap();
        assert!(b.get(0, 1).abs() > a.get(0, 1).abs() && b.get(1, 1) > a.get(1, 1));
    }

    #[test]
    fn gradient_hand_value_and_fd() {
        let g = gradient_survival(&p(0.5, 1.0), 1.0).unwrap();
        assert!((g[1] - 1.5f64.powi(-3)).abs() < 1e-15);
        assert_eq!(gradient_survival(&p(0.5, 1.0), 0.0).unwrap(), [0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (gm, s, x) = (
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.3..3.0),
                rng.gen_range(0.01..20.0),
            );
            let an = gradient_survival(&p(gm, s), x).unwrap();
            let h = 1e-6;
            let dg = (p(gm + h, s).sf(x) - p(gm - h, s).sf(x)) / (2.0 * h);
            let ds = (p(gm, s + h).sf(x) - p(gm, s - h).sf(x)) / (2.0 * h);
            assert!((dg - an[0]).abs() < 1e-6 * an[0].abs().max(1e-3), "{dg} {}", an[0]);
            assert!((ds - an[1]).abs() < 1e-6 * an[1].abs().max(1e-3), "{ds} {}", an[1]);
        }
    }

    #[test]
    fn small_argument_series_is_continuous() {
        let th = p(0.3, 1.0);
        let below = gradient_log_survival(&th, 0.999e-3 / 0.3).unwrap();
        let above = gradient_log_survival(&th, 1.001e-3 / 0.3).unwrap();
        // leading behaviour t²/(2γ²)
        let expect = (0.999f64 / 1.001).powi(2);
        assert!((below[0] / above[0] - expect).abs() < 1e-5);
        let t: f64 = 0.999e-3;
        let direct = t.ln_1p() - t / (1.0 + t);
        assert!((log_minus_ratio(t) / direct - 1.0).abs() < 1e-9);
    }

    #[test]
    fn var_display_equals_quadratic_form() {
        for i in 1..10 {
            for s in [0.5, 1.0, 2.0, 5.0] {
                for r in [0.1, 1.0, 10.0] {
                    let th = p(i as f64 / 10.0, s);
                    let x = r * s;
                    let a = var_survival(&th, x).unwrap();
                    let b = sigma_matrix(&th).unwrap().quad_form(gradient_survival(&th, x).unwrap());
                    assert!((a - b).abs() < 1e-9, "{th:?} x={x}: {a} vs {b}");
                    assert!((a - b).abs() < 1e-9 * b, "{th:?} x={x}: {a} vs {b}");
                }
            }
        }
        let th = p(0.3, 1.0);
        let b = sigma_matrix(&th)
            .unwrap()
            .quad_form(gradient_survival(&th, 2.0).unwrap());
        assert!((var_survival(&th, 2.0).unwrap() - b).abs() < 1e-9);
    }

    #[test]
    fn var_vanishes_at_both_ends() {
        let th = p(0.4, 1.5);
        assert_eq!(var_survival(&th, 0.0).unwrap(), 0.0);
        assert!(var_survival(&th, 1e6 * 1.5).unwrap() < 1e-6);
        assert_eq!(var_survival_mle(&th, 0.0).unwrap(), 0.0);
        assert!(var_survival_mle(&th, 1e6 * 1.5).unwrap() < 1e-6);
    }

    #[test]
    fn kernel_identities() {
        let th = p(0.35, 1.2);
        let xs: Vec<f64> = (1..=10).map(|i| 0.4 * i as f64).collect();
        for &x in &xs {
            assert!((cov_kernel(&th, x, x).unwrap() - var_survival(&th, x).unwrap()).abs() < 1e-12);
            let (a, b) = (cov_kernel(&th, x, 1.7).unwrap(), cov_kernel(&th, 1.7, x).unwrap());
            assert!((a - b).abs() < 1e-15 * a.abs().max(1e-300));
        }
        // Gram matrix is rank two: check PSD via every 2×2 and 3×3 principal minor
        let k = |a: f64, b: f64| cov_kernel(&th, a, b).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let m = CovMatrix2::new(k(xs[i], xs[i]), k(xs[i], xs[j]), k(xs[j], xs[j]));
                assert!(m.eigenvalues()[0] >= -1e-12);
            }
        }
    }

    #[test]
    fn mle_matrix_values() {
        let m0 = sigma_matrix_mle_at(0.0, 1.0).unwrap();
        assert_eq!(m0, CovMatrix2::new(1.0, -1.0, 2.0));
        let m = sigma_matrix_mle(&p(0.2, 1.0)).unwrap();
        assert!(m.max_rel_diff(&CovMatrix2::new(1.44, -1.2, 2.4)) < 1e-15);
        // (γ+1)²(2γ+1)σ²
        assert!((m.det() - 1.44 * 1.4).abs() < 1e-14);
    }

    #[test]
    fn mle_variance_display_equals_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let th = p(rng.gen_range(0.05..0.95), rng.gen_range(0.3..5.0));
            let x = rng.gen_range(0.0..30.0);
            let a = var_survival_mle(&th, x).unwrap();
            let b = sigma_matrix_mle(&th)
                .unwrap()
                .quad_form(gradient_survival(&th, x).unwrap());
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn ratio_limits_at_zero_shape() {
        let (a, b) = ratio_limits(0.0).unwrap();
        assert!((a - 846.0 / 729.0).abs() < 1e-10);
        assert!((b - 40896.0 / 26244.0).abs() < 1e-10);
    }

    #[test]
    fn ratio_matches_limits_and_stays_below_two() {
        for i in 1..20 {
            let g = 0.05 * i as f64;
            let th = p(g, 1.0);
            let (lo, _) = ratio_limits(g).unwrap();
            let r = efficiency_ratio(&th, 1e-6).unwrap().mde_over_mle;
            assert!((r - lo).abs() < 1e-3, "γ={g}: {r} vs {lo}");
            for e in -3..=3 {
                let r = efficiency_ratio(&th, 10f64.powi(e)).unwrap();
                assert!(r.mde_over_mle < 2.0 && r.mde_over_mle >= 1.0);
                assert!((r.mde_over_mle * r.mle_over_mde - 1.0).abs() < 1e-14);
            }
        }
        let (_, hi) = ratio_limits(1e-4).unwrap();
        let r = efficiency_ratio(&p(1e-4, 1.0), 1e6).unwrap().mde_over_mle;
        assert!((r - hi).abs() < 1e-3, "{r} vs {hi}");
    }

    #[test]
    fn ratio_is_scale_invariant() {
        let a = efficiency_ratio(&p(0.3, 1.0), 2.0).unwrap();
        let b = efficiency_ratio(&p(0.3, 7.0), 14.0).unwrap();
        assert!((a.mde_over_mle - b.mde_over_mle).abs() < 1e-13);
    }

    fn fake_fit(theta: GpdParams, k: usize) -> FitResult {
        FitResult {
            method: Method::Mde2,
            params: FitParams::Two(theta),
            objective: 0.0,
            score_norm: Some(0.0),
            log_likelihood: None,
            k,
            converged: true,
            at_boundary: false,
            evaluations: 0,
            options: FitOptions::default(),
        }
    }

    #[test]
    fn interval_properties() {
        let fit = fake_fit(p(0.2, 1.0), 500);
        let opts = CiOptions::default();
        let ci0 = confidence_interval(&fit, 0.0, 0.95, &opts).unwrap();
        assert_eq!((ci0.lower, ci0.upper), (1.0, 1.0));
        let a = confidence_interval(&fit, 2.0, 0.95, &opts).unwrap();
        let b = confidence_interval(&fake_fit(p(0.2, 1.0), 1000), 2.0, 0.95, &opts).unwrap();
        assert!((a.half_width / b.half_width - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(a.scale_note, CiConvention::Corrected);
        let strict = CiOptions {
            convention: CiConvention::StrictPaper,
            ..opts
        };
        let s = confidence_interval(&fit, 2.0, 0.95, &strict).unwrap();
        assert!((s.half_width / a.half_width - 500.0).abs() < 1e-9);
        assert!(confidence_interval(&fake_fit(p(0.2, 1.0), 10), 2.0, 0.95, &opts).is_err());
        assert!(confidence_interval(&fit, 2.0, 1.0, &opts).is_err());
        assert!(confidence_interval(&fit, 2.0, 0.0, &opts).is_err());
    }

    #[test]
    fn three_parameter_fit_is_refused() {
        let mut fit = fake_fit(p(0.2, 1.0), 500);
        fit.method = Method::Mde3;
        fit.params = FitParams::Three(crate::GpdParams3::new(0.2, 0.1, 1.0).unwrap());
        assert!(matches!(
            confidence_interval(&fit, 1.0, 0.95, &CiOptions::default()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn target_interval_scales_linearly() {
        let fit = fake_fit(p(0.2, 1.0), 500);
        let opts = CiOptions::default();
        let base = confidence_interval(&fit, 3.0, 0.95, &opts).unwrap();
        let t = target_ci(&fit, 3.0, 0.95, 1e5, 0.01, &opts).unwrap();
        assert!((t.center - 1e3 * base.center).abs() < 1e-9);
        assert!((t.lower - 1e3 * base.lower).abs() < 1e-9);
        assert!((t.upper - 1e3 * base.upper).abs() < 1e-9);
        let z = target_ci(&fit, 3.0, 0.95, 1e5, 0.0, &opts).unwrap();
        assert_eq!((z.lower, z.center, z.upper), (0.0, 0.0, 0.0));
        let wide = target_ci(
            &fit,
            3.0,
            0.95,
            1e5,
            0.01,
            &CiOptions {
                rate_variance: true,
                ..opts
            },
        )
        .unwrap();
        assert!(wide.half_width > t.half_width);
    }
}
