//! L2 minimum-distance estimation of GPD parameters.
//!
//! The objective is the squared L2 distance between a step survival function
//! `Ŝ` and the model survival `S_θ`:
//!
//! ```text
//! J(θ) = ∫_0^∞ (Ŝ(x) − S_θ(x))² dx.
//! ```
//!
//! Between breakpoints `Ŝ` is constant, so `J` is a finite sum of closed-form
//! integrals of `S_θ` and `S_θ²`, plus the tail `∫_{x_m}^∞ S_θ²` where `Ŝ`
//! vanishes. Writing `Ŝ = Σ w_i 1(x < x_i)` the same sum telescopes to
//!
//! ```text
//! J(θ) = ∫ Ŝ² − 2 Σ w_i ∫_0^{x_i} S_θ + σ/(2 − γ),
//! ```
//!
//! which costs one power evaluation per atom and is what the fitters use.
//! Its gradient is `2 Ψ(θ)` with `Ψ(θ) = Σ w_i ψ(x_i, θ)`, the closed-form
//! score of [`score_psi`]; a local minimiser is therefore a root of `Ψ`.
//!
//! Fitting runs a box-constrained simplex search on `(γ, log σ)` from a
//! moment-based start plus perturbed restarts, then polishes the best
//! candidate with Newton steps on `Ψ` and reports `‖Ψ(θ̂)‖`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::ExceedanceSample;
use crate::gpd::{Bound, GpdParams, GpdParams3};
use crate::optim::{self, SimplexOptions};
use crate::step::StepSurvival;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mde2,
    Mde3,
    Mle,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Mde2 => "mde2",
            Method::Mde3 => "mde3",
            Method::Mle => "mle",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mde2" | "mde" => Ok(Method::Mde2),
            "mde3" => Ok(Method::Mde3),
            "mle" => Ok(Method::Mle),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Search box, tolerances and restart count shared by all fitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Scale bounds relative to the mean of the target distribution.
    pub sigma_min_rel: f64,
    pub sigma_max_rel: f64,
    /// Width of the location box below the smallest atom, in IQRs.
    pub mu_iqr_width: f64,
    pub multistart: usize,
    /// Converged fits satisfy `‖Ψ(θ̂)‖ < stationarity_tol · (1 + ‖θ̂‖)`.
    pub stationarity_tol: f64,
    pub min_k: usize,
    pub max_evals: usize,
    /// Relative simplex diameter at which the search hands over to the
    /// Newton polish.
    pub simplex_x_tol: f64,
    pub newton_polish: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            gamma_min: 0.01,
            gamma_max: 0.99,
            sigma_min_rel: 1e-6,
            sigma_max_rel: 1e6,
            mu_iqr_width: 2.0,
            multistart: 3,
            stationarity_tol: 1e-6,
            min_k: 5,
            max_evals: 4000,
            simplex_x_tol: 1e-6,
            newton_polish: true,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        let ok = self.gamma_min > 0.0
            && self.gamma_min < self.gamma_max
            && self.gamma_max < 1.0
            && self.sigma_min_rel > 0.0
            && self.sigma_min_rel < self.sigma_max_rel
            && self.mu_iqr_width >= 0.0
            && self.multistart >= 1
            && self.stationarity_tol > 0.0
            && self.max_evals >= 10
            && self.simplex_x_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid fit options: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitParams {
    Two(GpdParams),
    Three(GpdParams3),
}

impl FitParams {
    pub fn gamma(&self) -> f64 {
        match self {
            FitParams::Two(p) => p.gamma(),
            FitParams::Three(p) => p.gamma(),
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            FitParams::Two(p) => p.sigma(),
            FitParams::Three(p) => p.sigma(),
        }
    }

    /// Location; zero for the two-parameter model.
    pub fn mu(&self) -> f64 {
        match self {
            FitParams::Two(_) => 0.0,
            FitParams::Three(p) => p.mu(),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        match self {
            FitParams::Two(p) => p.sf(x.max(0.0)),
            FitParams::Three(p) => p.survival3(x),
        }
    }

    pub fn two(&self) -> Option<GpdParams> {
        match self {
            FitParams::Two(p) => Some(*p),
            FitParams::Three(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub params: FitParams,
    /// `J(θ̂)`, the L2 distance of the fitted survival to the target, for
    /// every method (so fits are comparable on one scale).
    pub objective: f64,
    /// `‖Ψ(θ̂)‖` for `mde2`; norm of the mean log-likelihood score for `mle`.
    pub score_norm: Option<f64>,
    /// Mean log-likelihood at the estimate (`mle` only).
    pub log_likelihood: Option<f64>,
    pub k: usize,
    pub converged: bool,
    pub at_boundary: bool,
    pub evaluations: usize,
    pub options: FitOptions,
}

/// `J(θ)` summed segment by segment from `integral_survival` and
/// `integral_survival_squared`.
pub fn objective_j(target: &StepSurvival, theta: &GpdParams) -> Result<f64> {
    let mut prev = 0.0;
    let mut acc = 0.0;
    let levels = target.levels();
    for (i, &x) in target.atoms().iter().enumerate() {
        let c = levels[i];
        acc += c * c * (x - prev) - 2.0 * c * theta.integral_survival(prev, x)?
            + theta.integral_survival_squared(prev, x)?;
        prev = x;
    }
    acc += theta.integral_survival_squared(prev, Bound::Infinity)?;
    Ok(acc)
}

/// `J` specialised for repeated evaluation on one target.
#[derive(Debug, Clone)]
pub struct L2Objective<'a> {
    target: &'a StepSurvival,
    squared: f64,
}

impl<'a> L2Objective<'a> {
    pub fn new(target: &'a StepSurvival) -> Self {
        Self {
            target,
            squared: target.squared_integral(),
        }
    }

    pub fn eval(&self, theta: &GpdParams) -> f64 {
        let cross: f64 = self
            .target
            .atoms()
            .iter()
            .zip(self.target.weights())
            .map(|(&x, &w)| w * theta.cumulative_integral(x))
            .sum();
        self.squared - 2.0 * cross + theta.sigma() / (2.0 - theta.gamma())
    }

    pub fn eval3(&self, v: &GpdParams3) -> f64 {
        let cross: f64 = self
            .target
            .atoms()
            .iter()
            .zip(self.target.weights())
            .map(|(&x, &w)| w * v.cumulative_integral(x))
            .sum();
        self.squared - 2.0 * cross + v.total_squared_integral()
    }

    /// `Ψ(θ) = Σ w_i ψ(x_i, θ) = ∇J(θ) / 2`.
    pub fn score(&self, theta: &GpdParams) -> [f64; 2] {
        let mut acc = [0.0; 2];
        for (&x, &w) in self.target.atoms().iter().zip(self.target.weights()) {
            let p = psi_unchecked(x, theta);
            acc[0] += w * p[0];
            acc[1] += w * p[1];
        }
        acc
    }
}

/// The closed-form score `ψ(x, θ) = (ψ_γ, ψ_σ)` whose empirical mean vanishes
/// at every local minimiser of `J`.
pub fn score_psi(x: f64, theta: &GpdParams) -> Result<[f64; 2]> {
    theta.require_estimation_domain()?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("score argument must be nonnegative, got {x}")));
    }
    Ok(psi_unchecked(x, theta))
}

#[inline]
pub(crate) fn psi_unchecked(x: f64, theta: &GpdParams) -> [f64; 2] {
    let g = theta.gamma();
    let s = theta.sigma();
    let log_base = theta.log_base(x);
    let surv = (-log_base / g).exp();
    let gm1 = g - 1.0;
    let gm2 = g - 2.0;
    let spread = s + g * x;
    let psi_gamma = s / (2.0 * gm2 * gm2)
        + (-g * g * s + surv * (g * (g * s + (2.0 * g - 1.0) * x) - gm1 * spread * log_base)) / (gm1 * gm1 * g * g);
    let psi_sigma = -1.0 / (2.0 * gm2) - ((s + x) * surv - s) / (gm1 * s);
    [psi_gamma, psi_sigma]
}

/// `Ψ_k(θ) = (1/k) Σ ψ(z_j, θ)` over the pooled excesses of a sample.
pub fn score_big_psi(sample: &ExceedanceSample, theta: &GpdParams) -> Result<[f64; 2]> {
    theta.require_estimation_domain()?;
    let ex = sample
        .pooled_excesses
        .as_ref()
        .ok_or_else(|| Error::Unsupported("score requires pooled excesses (monotone events)".into()))?;
    if ex.is_empty() {
        return Err(Error::EmptySample("no excesses".into()));
    }
    let mut acc = [0.0; 2];
    for &z in ex {
        let p = psi_unchecked(z, theta);
        acc[0] += p[0];
        acc[1] += p[1];
    }
    let k = ex.len() as f64;
    Ok([acc[0] / k, acc[1] / k])
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Moment-matching start: `mean = σ/(1−γ)`, `var = σ²/((1−γ)²(1−2γ))`.
///
/// Falls back to `(0.1, mean)` for degenerate input and clamps into the
/// default search box.
pub fn init_params(target: &StepSurvival) -> GpdParams {
    init_params_with(target, &FitOptions::default())
}

fn init_params_with(target: &StepSurvival, opts: &FitOptions) -> GpdParams {
    let (mean, var) = target.moments();
    let mean = if mean > 0.0 {
        mean
    } else {
        target.last_breakpoint() * 0.5
    };
    let (g, s) = if target.len() >= 2 && var > 0.0 && var.is_finite() {
        let g = 0.5 * (1.0 - mean * mean / var);
        (g, mean * (1.0 - g))
    } else {
        (0.1, mean)
    };
    let g = g.clamp(opts.gamma_min, opts.gamma_max);
    let s = if s > 0.0 && s.is_finite() { s } else { mean };
    let s = s.clamp(opts.sigma_min_rel * mean, opts.sigma_max_rel * mean);
    GpdParams::new(g, s).expect("clamped into the valid domain")
}

struct Box2 {
    lower: [f64; 2],
    upper: [f64; 2],
}

impl Box2 {
    fn for_target(target: &StepSurvival, opts: &FitOptions) -> Self {
        let (mean, _) = target.moments();
        let mean = if mean > 0.0 {
            mean
        } else {
            target.last_breakpoint() * 0.5
        };
        Self {
            lower: [opts.gamma_min, (opts.sigma_min_rel * mean).ln()],
            upper: [opts.gamma_max, (opts.sigma_max_rel * mean).ln()],
        }
    }

    fn touches(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).any(|(v, (lo, hi))| {
            let tol = 1e-7 * (1.0 + hi - lo);
            (v - lo).abs() < tol || (hi - v).abs() < tol
        })
    }
}

fn start_points(init: &GpdParams, opts: &FitOptions) -> Vec<[f64; 2]> {
    const SHIFTS: [(f64, f64); 5] = [(0.0, 1.0), (0.2, 0.7), (-0.2, 1.4), (0.35, 0.5), (-0.35, 2.0)];
    (0..opts.multistart)
        .map(|i| {
            let (dg, fs) = SHIFTS[i % SHIFTS.len()];
            let round = (i / SHIFTS.len()) as f64;
            let g = (init.gamma() + dg * (1.0 + 0.5 * round)).clamp(opts.gamma_min, opts.gamma_max);
            [g, (init.sigma() * fs).ln()]
        })
        .collect()
}

impl FitOptions {
    fn simplex(&self, scale: usize) -> SimplexOptions {
        if self.newton_polish {
            SimplexOptions {
                max_evals: self.max_evals * scale,
                f_tol: 1e-10,
                x_tol: self.simplex_x_tol,
                restarts: 0,
            }
        } else {
            SimplexOptions {
                max_evals: self.max_evals * scale,
                x_tol: self.simplex_x_tol.min(1e-9),
                ..SimplexOptions::default()
            }
        }
    }
}

fn params_from(x: &[f64]) -> Option<GpdParams> {
    GpdParams::new(x[0], x[1].exp()).ok()
}

fn check_k(k: usize, opts: &FitOptions) -> Result<()> {
    if k == 0 {
        return Err(Error::EmptySample("no exceedances to fit".into()));
    }
    if k < opts.min_k {
        return Err(Error::TooFewExceedances { k, min_k: opts.min_k });
    }
    Ok(())
}

/// Lowest objective wins; near-ties go to the smaller shape.
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    let tie = (a.0 - b.0).abs() <= 1e-13 * a.0.abs().max(b.0.abs());
    if tie {
        a.1 < b.1
    } else {
        a.0 < b.0
    }
}

/// Newton iterations on a two-dimensional estimating equation in
/// `(γ, log σ)` with a finite-difference Jacobian. A step is kept only when
/// it lowers `‖score‖` without raising the objective.
fn newton_polish<S, O>(x: &mut [f64; 2], bounds: &Box2, score: S, objective: O, evals: &mut usize)
where
    S: Fn(&GpdParams) -> [f64; 2],
    O: Fn(&GpdParams) -> f64,
{
    let Some(mut p) = params_from(x) else { return };
    let mut s = score(&p);
    let mut f = objective(&p);
    for _ in 0..8 {
        let h = [1e-6, 1e-6];
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut up = *x;
            let mut dn = *x;
            up[j] += h[j];
            dn[j] -= h[j];
            let (Some(pu), Some(pd)) = (params_from(&up), params_from(&dn)) else {
                return;
            };
            let (su, sd) = (score(&pu), score(&pd));
            for i in 0..2 {
                jac[i][j] = (su[i] - sd[i]) / (2.0 * h[j]);
            }
            *evals += 2;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !det.is_finite() || det.abs() < 1e-300 {
            return;
        }
        let dx0 = (jac[1][1] * s[0] - jac[0][1] * s[1]) / det;
        let dx1 = (-jac[1][0] * s[0] + jac[0][0] * s[1]) / det;
        let cand = [
            (x[0] - dx0).clamp(bounds.lower[0], bounds.upper[0]),
            (x[1] - dx1).clamp(bounds.lower[1], bounds.upper[1]),
        ];
        let Some(pc) = params_from(&cand) else { return };
        let sc = score(&pc);
        let fc = objective(&pc);
        *evals += 1;
        if norm2(sc) < norm2(s) && fc <= f + 1e-14 * f.abs().max(1e-300) {
            *x = cand;
            p = pc;
            s = sc;
            f = fc;
        } else {
            break;
        }
        if norm2(s) < 1e-13 * (1.0 + p.gamma().abs() + p.sigma().abs()) {
            break;
        }
    }
}

/// Two-parameter minimum-distance fit to the pooled survival step function.
pub fn fit_mde(sample: &ExceedanceSample, init: Option<GpdParams>, opts: &FitOptions) -> Result<FitResult> {
    check_k(sample.total_k, opts)?;
    fit_mde_step(&sample.pooled_step, sample.total_k, init, opts)
}

/// Two-parameter fit to an arbitrary step survival function; `k` is recorded
/// as the exceedance count behind it.
pub fn fit_mde_step(target: &StepSurvival, k: usize, init: Option<GpdParams>, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    let obj = L2Objective::new(target);
    let bounds = Box2::for_target(target, opts);
    let init = init.unwrap_or_else(|| init_params_with(target, opts));
    let f = |x: &[f64]| params_from(x).map_or(f64::INFINITY, |p| obj.eval(&p));
    let simplex = opts.simplex(1);

    let mut evals = 0;
    let mut best: Option<(optim::Minimum, [f64; 2])> = None;
    for start in start_points(&init, opts) {
        let m = optim::minimize(f, &start, &[0.05, 0.1], &bounds.lower, &bounds.upper, simplex);
        evals += m.evals;
        let x = [m.x[0], m.x[1]];
        let replace = match &best {
            None => true,
            Some((b, bx)) => better((m.f, x[0]), (b.f, bx[0])),
        };
        if replace {
            best = Some((m, x));
        }
    }
    let (m, mut x) = best.expect("at least one start");
    if opts.newton_polish {
        newton_polish(&mut x, &bounds, |p| obj.score(p), |p| obj.eval(p), &mut evals);
    }
    let theta = params_from(&x).ok_or_else(|| Error::Numeric("fit left the parameter domain".into()))?;
    let objective = obj.eval(&theta);
    let score_norm = norm2(obj.score(&theta));
    let at_boundary = bounds.touches(&x);
    let stationary = score_norm < opts.stationarity_tol * (1.0 + theta.gamma().hypot(theta.sigma()));
    Ok(FitResult {
        method: Method::Mde2,
        params: FitParams::Two(theta),
        objective,
        score_norm: Some(score_norm),
        log_likelihood: None,
        k,
        converged: (m.converged || stationary) && stationary && !at_boundary,
        at_boundary,
        evaluations: evals,
        options: opts.clone(),
    })
}

/// Three-parameter fit; `fixed_mu` pins the location.
pub fn fit_mde3(
    target: &StepSurvival,
    k: usize,
    init: Option<GpdParams3>,
    fixed_mu: Option<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    opts.validate()?;
    check_k(k, opts)?;
    let obj = L2Objective::new(target);
    let two_box = Box2::for_target(target, opts);
    let xmin = target.atoms()[0];
    let iqr = target.quantile(0.75) - target.quantile(0.25);
    let width = if iqr > 0.0 {
        opts.mu_iqr_width * iqr
    } else {
        target.moments().0.abs().max(xmin)
    };
    let (mu_lo, mu_hi) = match fixed_mu {
        Some(mu) => (mu, mu),
        None => (xmin - width, xmin),
    };
    let lower = [two_box.lower[0], mu_lo, two_box.lower[1]];
    let upper = [two_box.upper[0], mu_hi, two_box.upper[1]];

    let base = init_params_with(target, opts);
    let init = init.unwrap_or_else(|| {
        GpdParams3::new(base.gamma(), 0.0f64.clamp(mu_lo, mu_hi), base.sigma()).expect("valid start")
    });
    let to_params = |x: &[f64]| GpdParams3::new(x[0], x[1], x[2].exp()).ok();
    let f = |x: &[f64]| to_params(x).map_or(f64::INFINITY, |v| obj.eval3(&v));
    let simplex = SimplexOptions {
        restarts: 1,
        ..opts.simplex(2)
    };
    let mu_mid = 0.5 * (mu_lo + mu_hi);
    let mu_step = if mu_hi > mu_lo { 0.1 * (mu_hi - mu_lo) } else { 0.0 };
    let two = GpdParams::new(init.gamma(), init.sigma()).expect("valid");
    let mut evals = 0;
    let mut best: Option<optim::Minimum> = None;
    for (i, s2) in start_points(&two, opts).into_iter().enumerate() {
        let mu0 = if i % 2 == 0 { init.mu() } else { mu_mid };
        let start = [s2[0], mu0.clamp(mu_lo, mu_hi), s2[1]];
        let m = optim::minimize(f, &start, &[0.05, mu_step, 0.1], &lower, &upper, simplex);
        evals += m.evals;
        let replace = match &best {
            None => true,
            Some(b) => better((m.f, m.x[0]), (b.f, b.x[0])),
        };
        if replace {
            best = Some(m);
        }
    }
    let m = best.expect("at least one start");
    let v = to_params(&m.x).ok_or_else(|| Error::Numeric("fit left the parameter domain".into()))?;
    let at_boundary = {
        let g_edge = [lower[0], upper[0]].iter().any(|b| (m.x[0] - b).abs() < 1e-7);
        let s_edge = [lower[2], upper[2]].iter().any(|b| (m.x[2] - b).abs() < 1e-7);
        let mu_edge = fixed_mu.is_none() && [mu_lo, mu_hi].iter().any(|b| (m.x[1] - b).abs() < 1e-7 * (1.0 + width));
        g_edge || s_edge || mu_edge
    };
    Ok(FitResult {
        method: Method::Mde3,
        params: FitParams::Three(v),
        objective: obj.eval3(&v),
        score_norm: None,
        log_likelihood: None,
        k,
        converged: m.converged && !at_boundary,
        at_boundary,
        evaluations: evals,
        options: opts.clone(),
    })
}

/// Mean GPD log-likelihood of `excesses`.
pub fn mean_log_likelihood(excesses: &[f64], theta: &GpdParams) -> f64 {
    let g = theta.gamma();
    let acc: f64 = excesses.iter().map(|&z| theta.log_base(z)).sum();
    -theta.sigma().ln() - (1.0 + 1.0 / g) * acc / excesses.len() as f64
}

/// Gradient of the mean log-likelihood in `(γ, σ)`.
pub fn likelihood_score(excesses: &[f64], theta: &GpdParams) -> [f64; 2] {
    let g = theta.gamma();
    let s = theta.sigma();
    let (mut lg, mut r) = (0.0, 0.0);
    for &z in excesses {
        let t = g * z / s;
        lg += t.ln_1p();
        r += (z / s) / (1.0 + t);
    }
    let k = excesses.len() as f64;
    let (lg, r) = (lg / k, r / k);
    [
        lg / (g * g) - (1.0 + 1.0 / g) * r,
        -1.0 / s + (1.0 + 1.0 / g) * g * r / s,
    ]
}

/// Maximum-likelihood benchmark over the same search box.
pub fn fit_mle(sample: &ExceedanceSample, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    check_k(sample.total_k, opts)?;
    let ex = sample
        .pooled_excesses
        .as_ref()
        .ok_or_else(|| Error::Unsupported("maximum likelihood requires pooled excesses (monotone events)".into()))?;
    let target = &sample.pooled_step;
    let bounds = Box2::for_target(target, opts);
    let init = init_params_with(target, opts);
    let f = |x: &[f64]| params_from(x).map_or(f64::INFINITY, |p| -mean_log_likelihood(ex, &p));
    let simplex = opts.simplex(1);
    let mut evals = 0;
    let mut best: Option<(optim::Minimum, [f64; 2])> = None;
    for start in start_points(&init, opts) {
        let m = optim::minimize(f, &start, &[0.05, 0.1], &bounds.lower, &bounds.upper, simplex);
        evals += m.evals;
        let x = [m.x[0], m.x[1]];
        let replace = match &best {
            None => true,
            Some((b, bx)) => better((m.f, x[0]), (b.f, bx[0])),
        };
        if replace {
            best = Some((m, x));
        }
    }
    let (m, mut x) = best.expect("at least one start");
    if opts.newton_polish {
        newton_polish(
            &mut x,
            &bounds,
            |p| likelihood_score(ex, p),
            |p| -mean_log_likelihood(ex, p),
            &mut evals,
        );
    }
    let theta = params_from(&x).ok_or_else(|| Error::Numeric("fit left the parameter domain".into()))?;
    let score_norm = norm2(likelihood_score(ex, &theta));
    let at_boundary = bounds.touches(&x);
    let stationary = score_norm < opts.stationarity_tol * (1.0 + theta.gamma().hypot(theta.sigma()));
    Ok(FitResult {
        method: Method::Mle,
        params: FitParams::Two(theta),
        objective: L2Objective::new(target).eval(&theta),
        score_norm: Some(score_norm),
        log_likelihood: Some(mean_log_likelihood(ex, &theta)),
        k: sample.total_k,
        converged: (m.converged || stationary) && !at_boundary,
        at_boundary,
        evaluations: evals,
        options: opts.clone(),
    })
}

/// Dispatches on `method`; `mde3` fits the pooled step function.
pub fn fit(sample: &ExceedanceSample, method: Method, opts: &FitOptions) -> Result<FitResult> {
    match method {
        Method::Mde2 => fit_mde(sample, None, opts),
        Method::Mde3 => fit_mde3(&sample.pooled_step, sample.total_k, None, None, opts),
        Method::Mle => fit_mle(sample, opts),
    }
}
