//! Synthetic data with known tails and Monte Carlo studies of the estimators.
//!
//! Every replicate draws from its own ChaCha stream seeded by
//! [`derive_seed`] from the master seed and the replicate's coordinates, and
//! replicates are collected in index order, so results do not depend on the
//! number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{
    confidence_interval, sigma_matrix, sigma_matrix_mle, var_survival, CiConvention, CiOptions, CovMatrix2,
};
use crate::error::{Error, Result};
use crate::events::{event_curves, exceedances, EventSpec, ExceedanceSample, PanelSeries, Run};
use crate::mde::{fit_mde, fit_mle, FitOptions, FitResult};
use crate::residual::residual_ci;
use crate::GpdParams;

/// Stable 64-bit seed for replicate `rep` of cell `(i, j)`.
pub fn derive_seed(master: u64, i: u64, j: u64, rep: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    [i, j, rep].iter().fold(mix(master), |h, &v| mix(h ^ mix(v)))
}

/// `Y_j = max_a A[a][j] · Z_a` with iid `α`-Fréchet factors `Z_a`.
///
/// `coefficients` has one row per factor and one column per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxLinearModel {
    coefficients: Vec<Vec<f64>>,
    alpha: f64,
}

impl MaxLinearModel {
    pub fn new(coefficients: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("Fréchet index must be positive, got {alpha}")));
        }
        let d = coefficients.first().map_or(0, Vec::len);
        if d == 0 || coefficients.iter().any(|r| r.len() != d) {
            return Err(Error::domain("coefficient matrix must be nonempty and rectangular"));
        }
        if coefficients.iter().flatten().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(Error::domain("coefficients must be finite and nonnegative"));
        }
        if let Some(j) = (0..d).find(|&j| coefficients.iter().all(|r| r[j] == 0.0)) {
            return Err(Error::domain(format!(
                "coordinate {} has no positive coefficient",
                j + 1
            )));
        }
        Ok(Self { coefficients, alpha })
    }

    /// Random `factors × d` matrix with entries uniform on `[0, 1)`.
    pub fn random(factors: usize, d: usize, alpha: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coefficients = (0..factors)
            .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
            .collect();
        Self::new(coefficients, alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn factors(&self) -> usize {
        self.coefficients.len()
    }

    pub fn d(&self) -> usize {
        self.coefficients[0].len()
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    /// `Σ_a max_j A[a][j]^α`, the mass of the exponent measure of the
    /// coordinate maximum.
    pub fn tail_constant(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|r| r.iter().fold(0.0f64, |m, a| m.max(*a)).powf(self.alpha))
            .sum()
    }

    /// First-order tail `x^{−α} Σ_a max_j A[a][j]^α` of `max_j Y_j`.
    pub fn analytic_tail(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("tail level must be positive, got {x}")));
        }
        Ok(x.powf(-self.alpha) * self.tail_constant())
    }

    /// Exact `P(max_j Y_j > x) = 1 − exp(−x^{−α} Σ_a max_j A[a][j]^α)`.
    pub fn exact_tail(&self, x: f64) -> Result<f64> {
        Ok(-(-self.analytic_tail(x)?).exp_m1())
    }

    /// GPD limit of the excesses: `γ = 1/α`, `σ = (1/α)(Σ_a max_j A^α)^{1/α}`.
    pub fn implied_gpd(&self) -> Result<ImpliedGpd> {
        let gamma = 1.0 / self.alpha;
        let sigma = gamma * self.tail_constant().powf(gamma);
        let params = GpdParams::new(gamma, sigma)?;
        let warning =
            (gamma >= 1.0).then(|| format!("γ = {gamma} lies outside the estimation domain (0, 1); requires α > 1"));
        Ok(ImpliedGpd { params, warning })
    }

    /// One run of `n` rows.
    pub fn sample(&self, n: usize, seed: u64) -> Result<PanelSeries> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = -1.0 / self.alpha;
        let mut z = vec![0.0; self.factors()];
        let rows = (0..n)
            .map(|_| {
                for v in z.iter_mut() {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    *v = (-u.ln()).powf(inv);
                }
                (0..self.d())
                    .map(|j| {
                        self.coefficients
                            .iter()
                            .zip(&z)
                            .fold(0.0f64, |m, (r, zv)| m.max(r[j] * zv))
                    })
                    .collect()
            })
            .collect();
        PanelSeries::new(vec![Run::new("1", rows)?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedGpd {
    pub params: GpdParams,
    pub warning: Option<String>,
}

pub fn sample_maxlinear(model: &MaxLinearModel, n: usize, seed: u64) -> Result<PanelSeries> {
    model.sample(n, seed)
}

/// Exceedances of the coordinate maximum over its empirical `p`-quantile.
pub fn maxlinear_exceedances(panel: &PanelSeries, p: f64) -> Result<ExceedanceSample> {
    let spec = EventSpec::order_stat((1..=panel.d()).collect(), panel.d());
    let curves = event_curves(panel, &spec)?;
    let mut maxima: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.intervals().iter().map(|iv| iv.1))
        .collect();
    maxima.sort_by(f64::total_cmp);
    let u = empirical_quantile(&maxima, p)?;
    exceedances(&curves, u)
}

/// Order statistic `x_(⌈p·n⌉)` of sorted data.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return Err(Error::domain("empirical quantile needs data and p ∈ [0, 1]"));
    }
    let idx = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    Ok(sorted[idx])
}

/// Per-replicate shape estimates of the max-linear end-to-end pipeline.
pub fn maxlinear_shape_study(
    model: &MaxLinearModel,
    n: usize,
    p: f64,
    reps: usize,
    master_seed: u64,
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let panel = model.sample(n, derive_seed(master_seed, 0, 0, r as u64))?;
            let sample = maxlinear_exceedances(&panel, p)?;
            Ok(fit_mde(&sample, None, opts)?.params.gamma())
        })
        .collect()
}

/// Which fits enter a Monte Carlo cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    /// Drop replicates where either fitter errored or stopped at an interior
    /// non-stationary point; fits on the search-box boundary are kept as the
    /// constrained estimate and counted separately.
    #[default]
    NonConvergedInterior,
    /// Drop every replicate where either fit is not `converged`, including
    /// boundary fits.
    AllNonConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub fit: FitOptions,
    pub exclusion: Exclusion,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions {
                min_k: 2,
                ..FitOptions::default()
            },
            exclusion: Exclusion::default(),
        }
    }
}

/// Mean squared error and its decomposition over one replicate set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub mse: f64,
    pub variance: f64,
    pub bias2: f64,
}

impl ErrorStats {
    /// Population moments (divisor `m`), so that `mse = variance + bias²`.
    pub fn from_estimates(values: &[f64], truth: f64) -> Self {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let mse = values.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / m;
        Self {
            mean,
            mse,
            variance,
            bias2: (mean - truth).powi(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorCell {
    pub gamma: ErrorStats,
    pub sigma: ErrorStats,
    pub boundary_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub gamma0: f64,
    pub n: usize,
    pub reps: usize,
    pub used: usize,
    pub excluded_reps: Vec<usize>,
    pub mde: EstimatorCell,
    pub mle: EstimatorCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub master_seed: u64,
    pub reps: usize,
    pub sigma0: f64,
    pub cells: Vec<SimCell>,
}

fn keep(fit: &Result<FitResult>, exclusion: Exclusion) -> bool {
    match (fit, exclusion) {
        (Ok(f), Exclusion::NonConvergedInterior) => f.converged || f.at_boundary,
        (Ok(f), Exclusion::AllNonConverged) => f.converged,
        (Err(_), _) => false,
    }
}

fn estimator_cell(fits: &[&FitResult], gamma0: f64, sigma0: f64) -> EstimatorCell {
    let g: Vec<f64> = fits.iter().map(|f| f.params.gamma()).collect();
    let s: Vec<f64> = fits.iter().map(|f| f.params.sigma()).collect();
    EstimatorCell {
        gamma: ErrorStats::from_estimates(&g, gamma0),
        sigma: ErrorStats::from_estimates(&s, sigma0),
        boundary_fits: fits.iter().filter(|f| f.at_boundary).count(),
    }
}

/// Fits both estimators to the same `n` iid `GPD(γ, 1)` draws per replicate
/// for every `(γ, n)` cell.
pub fn mc_compare(
    gamma_grid: &[f64],
    n_grid: &[usize],
    reps: usize,
    master_seed: u64,
    opts: &SimOptions,
) -> Result<SimReport> {
    if reps < 100 {
        return Err(Error::Config(format!("need at least 100 replicates, got {reps}")));
    }
    let sigma0 = 1.0;
    let mut cells = Vec::new();
    for (j, &n) in n_grid.iter().enumerate() {
        for (i, &g0) in gamma_grid.iter().enumerate() {
            let theta0 = GpdParams::new(g0, sigma0)?;
            let fits: Vec<(Result<FitResult>, Result<FitResult>)> = (0..reps)
                .into_par_iter()
                .map(|r| {
                    let xs = theta0.sample(n, derive_seed(master_seed, i as u64, j as u64, r as u64))?;
                    let s = ExceedanceSample::from_excesses(&xs)?;
                    Ok((fit_mde(&s, None, &opts.fit), fit_mle(&s, &opts.fit)))
                })
                .collect::<Result<_>>()?;
            let mut excluded = Vec::new();
            let mut mde = Vec::new();
            let mut mle = Vec::new();
            for (r, (a, b)) in fits.iter().enumerate() {
                if keep(a, opts.exclusion) && keep(b, opts.exclusion) {
                    mde.push(a.as_ref().expect("kept"));
                    mle.push(b.as_ref().expect("kept"));
                } else {
                    excluded.push(r);
                }
            }
            if mde.is_empty() {
                return Err(Error::Numeric(format!(
                    "every replicate failed in cell γ = {g0}, n = {n}"
                )));
            }
            cells.push(SimCell {
                gamma0: g0,
                n,
                reps,
                used: mde.len(),
                excluded_reps: excluded,
                mde: estimator_cell(&mde, g0, sigma0),
                mle: estimator_cell(&mle, g0, sigma0),
            });
        }
    }
    Ok(SimReport {
        master_seed,
        reps,
        sigma0,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseRow {
    pub n: usize,
    pub mde: f64,
    pub mde_se: f64,
    pub mle: f64,
    pub mle_se: f64,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseTable {
    pub theta0: GpdParams,
    pub x_max: f64,
    pub grid_points: usize,
    pub master_seed: u64,
    pub rows: Vec<MiseRow>,
}

/// Trapezoid rule for `∫_0^{x_max} (S_a − S_b)²` on `points` nodes.
pub fn integrated_squared_error(a: &GpdParams, b: &GpdParams, x_max: f64, points: usize) -> f64 {
    let h = x_max / (points - 1) as f64;
    let f = |i: usize| {
        let x = i as f64 * h;
        (a.sf(x) - b.sf(x)).powi(2)
    };
    let inner: f64 = (1..points - 1).map(f).sum();
    h * (inner + 0.5 * (f(0) + f(points - 1)))
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    (mean, (var / m).sqrt())
}

/// Mean integrated squared error of the fitted survival over
/// `[0, x_max]` (default: the 0.999 quantile of `θ₀`), 2000-point trapezoid.
pub fn mise_survival(
    theta0: &GpdParams,
    n_grid: &[usize],
    reps: usize,
    x_max: Option<f64>,
    master_seed: u64,
    opts: &SimOptions,
) -> Result<MiseTable> {
    const POINTS: usize = 2000;
    let x_max = match x_max {
        Some(x) if x > 0.0 => x,
        Some(x) => return Err(Error::domain(format!("integration range must be positive, got {x}"))),
        None => theta0.quantile(0.999)?,
    };
    let mut rows = Vec::new();
    for (j, &n) in n_grid.iter().enumerate() {
        let per_rep: Vec<Option<(f64, f64)>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                // stream index 1 keeps these draws apart from mc_compare
                let xs = theta0.sample(n, derive_seed(master_seed, 1_000_001, j as u64, r as u64))?;
                let s = ExceedanceSample::from_excesses(&xs)?;
                let (a, b) = (fit_mde(&s, None, &opts.fit), fit_mle(&s, &opts.fit));
                if !(keep(&a, opts.exclusion) && keep(&b, opts.exclusion)) {
                    return Ok(None);
                }
                let (a, b) = (a?.params.two().expect("two"), b?.params.two().expect("two"));
                Ok(Some((
                    integrated_squared_error(&a, theta0, x_max, POINTS),
                    integrated_squared_error(&b, theta0, x_max, POINTS),
                )))
            })
            .collect::<Result<_>>()?;
        let kept: Vec<(f64, f64)> = per_rep.into_iter().flatten().collect();
        if kept.is_empty() {
            return Err(Error::Numeric(format!("every replicate failed at n = {n}")));
        }
        let (mde, mde_se) = mean_se(&kept.iter().map(|p| p.0).collect::<Vec<_>>());
        let (mle, mle_se) = mean_se(&kept.iter().map(|p| p.1).collect::<Vec<_>>());
        rows.push(MiseRow {
            n,
            mde,
            mde_se,
            mle,
            mle_se,
            used: kept.len(),
        });
    }
    Ok(MiseTable {
        theta0: *theta0,
        x_max,
        grid_points: POINTS,
        master_seed,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiVariant {
    PlugIn,
    PlugInStrict,
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub x: f64,
    pub variant: CiVariant,
    pub coverage: f64,
    /// Binomial standard error `√(p(1−p)/m)`.
    pub se: f64,
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub theta0: GpdParams,
    pub k: usize,
    pub level: f64,
    pub reps: usize,
    pub master_seed: u64,
    pub rows: Vec<CoverageRow>,
}

/// Fraction of replicates whose interval for `S_θ₀(x)` contains the truth.
pub fn coverage_study(
    theta0: &GpdParams,
    k: usize,
    x_levels: &[f64],
    level: f64,
    reps: usize,
    master_seed: u64,
    opts: &SimOptions,
) -> Result<CoverageTable> {
    let corrected = CiOptions::default();
    let strict = CiOptions {
        convention: CiConvention::StrictPaper,
        ..corrected
    };
    let hits: Vec<Option<Vec<[bool; 3]>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let xs = theta0.sample(k, derive_seed(master_seed, 2_000_003, 0, r as u64))?;
            let s = ExceedanceSample::from_excesses(&xs)?;
            let f = fit_mde(&s, None, &opts.fit);
            if !keep(&f, opts.exclusion) {
                return Ok(None);
            }
            let f = f?;
            x_levels
                .iter()
                .map(|&x| {
                    let truth = theta0.sf(x);
                    let inside = |lo: f64, hi: f64| lo <= truth && truth <= hi;
                    let a = confidence_interval(&f, x, level, &corrected)?;
                    let b = confidence_interval(&f, x, level, &strict)?;
                    let c = residual_ci(&s, &f, x, level, &corrected)?;
                    Ok([
                        inside(a.lower, a.upper),
                        inside(b.lower, b.upper),
                        inside(c.lower, c.upper),
                    ])
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        })
        .collect::<Result<_>>()?;
    let kept: Vec<Vec<[bool; 3]>> = hits.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::Numeric("every replicate failed".into()));
    }
    let m = kept.len() as f64;
    let mut rows = Vec::new();
    for (xi, &x) in x_levels.iter().enumerate() {
        for (vi, variant) in [CiVariant::PlugIn, CiVariant::PlugInStrict, CiVariant::Residual]
            .into_iter()
            .enumerate()
        {
            let p = kept.iter().filter(|h| h[xi][vi]).count() as f64 / m;
            rows.push(CoverageRow {
                x,
                variant,
                coverage: p,
                se: (p * (1.0 - p) / m).sqrt(),
                used: kept.len(),
            });
        }
    }
    Ok(CoverageTable {
        theta0: *theta0,
        k,
        level,
        reps,
        master_seed,
        rows,
    })
}

/// Empirical covariance of `√k(θ̂ − θ₀)` against the asymptotic one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub theta0: GpdParams,
    pub k: usize,
    pub used: usize,
    pub mde_empirical: CovMatrix2,
    pub mde_theory: CovMatrix2,
    pub mle_empirical: CovMatrix2,
    pub mle_theory: CovMatrix2,
    /// `(x, empirical var of √k(S_θ̂(x) − S_θ₀(x)), ς²_θ₀(x))` for the MDE.
    pub survival: Vec<(f64, f64, f64)>,
}

/// Largest entrywise relative error `|emp − theory| / |theory|`.
pub fn entrywise_rel_error(empirical: &CovMatrix2, theory: &CovMatrix2) -> f64 {
    empirical
        .entries
        .iter()
        .flatten()
        .zip(theory.entries.iter().flatten())
        .fold(0.0, |m, (e, t)| m.max((e - t).abs() / t.abs()))
}

fn empirical_cov(points: &[[f64; 2]], k: usize) -> CovMatrix2 {
    let m = points.len() as f64;
    let mean = [0, 1].map(|c| points.iter().map(|p| p[c]).sum::<f64>() / m);
    let cov = |a: usize, b: usize| points.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / (m - 1.0);
    CovMatrix2::new(cov(0, 0), cov(0, 1), cov(1, 1)).scaled(k as f64)
}

pub fn clt_study(
    theta0: &GpdParams,
    k: usize,
    reps: usize,
    x_levels: &[f64],
    master_seed: u64,
    opts: &SimOptions,
) -> Result<CltReport> {
    let fits: Vec<Option<([f64; 2], [f64; 2])>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let xs = theta0.sample(k, derive_seed(master_seed, 3_000_017, 0, r as u64))?;
            let s = ExceedanceSample::from_excesses(&xs)?;
            let (a, b) = (fit_mde(&s, None, &opts.fit), fit_mle(&s, &opts.fit));
            if !(keep(&a, opts.exclusion) && keep(&b, opts.exclusion)) {
                return Ok(None);
            }
            let (a, b) = (a?.params, b?.params);
            Ok(Some(([a.gamma(), a.sigma()], [b.gamma(), b.sigma()])))
        })
        .collect::<Result<_>>()?;
    let kept: Vec<([f64; 2], [f64; 2])> = fits.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::Numeric("too few successful replicates".into()));
    }
    let mde: Vec<[f64; 2]> = kept.iter().map(|p| p.0).collect();
    let mle: Vec<[f64; 2]> = kept.iter().map(|p| p.1).collect();
    let m = kept.len() as f64;
    let survival = x_levels
        .iter()
        .map(|&x| {
            let vals: Vec<f64> = mde
                .iter()
                .map(|p| GpdParams::new(p[0], p[1]).map(|t| t.sf(x)))
                .collect::<Result<_>>()?;
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) * k as f64;
            Ok((x, var, var_survival(theta0, x)?))
        })
        .collect::<Result<_>>()?;
    Ok(CltReport {
        theta0: *theta0,
        k,
        used: kept.len(),
        mde_empirical: empirical_cov(&mde, k),
        mde_theory: sigma_matrix(theta0)?,
        mle_empirical: empirical_cov(&mle, k),
        mle_theory: sigma_matrix_mle(theta0)?,
        survival,
    })
}
