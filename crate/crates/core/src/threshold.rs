//! Target estimation and threshold-scan diagnostics.
//!
//! For a threshold `u` with empirical exceedance rate `P̂(X > u)` and a fitted
//! excess law, the tail beyond an extreme level `q > u` is estimated by
//! `P(X > q) ≈ P̂(X > u) · S_θ̂(q − u)`. Scanning `u` over a grid and watching
//! where the estimate stabilises is the usual way to pick the threshold;
//! [`average_over_region`] then averages the point estimates inside a
//! user-chosen window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{target_ci, CiOptions, CiResult};
use crate::error::{Error, Result};
use crate::events::{exceedances, EventCurve, ExceedanceSample};
use crate::mde::{fit, FitOptions, FitResult, Method};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    /// Estimated `P(X > q)` per time point.
    pub probability: f64,
    /// Expected number of exceedances of `q` in a run of `n_per_run` points.
    pub expected_count: f64,
}

pub fn estimate_target(sample: &ExceedanceSample, fit: &FitResult, q: f64, n_per_run: f64) -> Result<TargetEstimate> {
    let u = sample.threshold_u;
    if !(q > u) {
        return Err(Error::domain(format!(
            "target level q = {q} must exceed the threshold u = {u}"
        )));
    }
    if !(n_per_run >= 0.0 && n_per_run.is_finite()) {
        return Err(Error::domain(format!(
            "run length must be nonnegative, got {n_per_run}"
        )));
    }
    let probability = sample.rate * fit.params.survival(q - u);
    Ok(TargetEstimate {
        probability,
        expected_count: n_per_run * probability,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanOptions {
    pub method: Method,
    pub fit: FitOptions,
    /// Thresholds with fewer exceedances are skipped.
    pub min_k: usize,
    /// Confidence level for per-threshold intervals (two-parameter MDE only).
    pub ci_level: Option<f64>,
    pub ci: CiOptions,
    /// Run length used for expected counts; defaults to the mean usable
    /// length of the runs.
    pub n_per_run: Option<f64>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            method: Method::Mde2,
            fit: FitOptions::default(),
            min_k: 20,
            ci_level: Some(0.95),
            ci: CiOptions::default(),
            n_per_run: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub u: f64,
    pub k: usize,
    pub fit: Option<FitResult>,
    pub target: Option<TargetEstimate>,
    /// Interval on the expected-count scale.
    pub ci: Option<CiResult>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub q: f64,
    pub n_per_run: f64,
    pub rows: Vec<ScanRow>,
}

fn scan_one(curves: &[EventCurve], q: f64, u: f64, n_per_run: f64, opts: &ScanOptions) -> Result<ScanRow> {
    let k: usize = curves.iter().map(|c| c.count_at(u)).sum();
    let skip = |reason: String| ScanRow {
        u,
        k,
        fit: None,
        target: None,
        ci: None,
        skipped: Some(reason),
    };
    if k < opts.min_k.max(1) {
        return Ok(skip(format!("k = {k} < min_k = {}", opts.min_k)));
    }
    let sample = exceedances(curves, u)?;
    let fit_opts = FitOptions {
        min_k: opts.fit.min_k.min(opts.min_k),
        ..opts.fit.clone()
    };
    let fitted = match fit(&sample, opts.method, &fit_opts) {
        Ok(f) => f,
        Err(Error::TooFewExceedances { k, min_k }) => return Ok(skip(format!("k = {k} < min_k = {min_k}"))),
        Err(e) => return Err(e),
    };
    let target = estimate_target(&sample, &fitted, q, n_per_run)?;
    let ci = match (opts.ci_level, opts.method) {
        (Some(level), Method::Mde2) if k >= opts.ci.min_k => {
            Some(target_ci(&fitted, q - u, level, n_per_run, sample.rate, &opts.ci)?)
        }
        _ => None,
    };
    Ok(ScanRow {
        u,
        k,
        fit: Some(fitted),
        target: Some(target),
        ci,
        skipped: None,
    })
}

/// Fits and target estimates at every threshold of `u_grid`.
pub fn scan(curves: &[EventCurve], q: f64, u_grid: &[f64], opts: &ScanOptions) -> Result<ThresholdScan> {
    if u_grid.is_empty() {
        return Err(Error::InvalidSpec("threshold grid is empty".into()));
    }
    if u_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidSpec("threshold grid must be strictly increasing".into()));
    }
    let u_max = *u_grid.last().expect("nonempty");
    if !(q > u_max) {
        return Err(Error::domain(format!(
            "target level q = {q} must exceed every threshold (max {u_max})"
        )));
    }
    if curves.is_empty() {
        return Err(Error::EmptySample("no event curves".into()));
    }
    let n_per_run = match opts.n_per_run {
        Some(n) => n,
        None => curves.iter().map(|c| c.n_effective() as f64).sum::<f64>() / curves.len() as f64,
    };
    let rows = u_grid
        .par_iter()
        .map(|&u| scan_one(curves, q, u, n_per_run, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdScan { q, n_per_run, rows })
}

impl ThresholdScan {
    pub const COLUMNS: [&'static str; 10] = [
        "u",
        "k",
        "gamma",
        "mu",
        "sigma",
        "target_probability",
        "expected_count",
        "ci_lo",
        "ci_hi",
        "skipped",
    ];

    /// Table rows as strings, in [`Self::COLUMNS`] order; missing values are
    /// empty.
    pub fn table(&self) -> Vec<Vec<String>> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.u.to_string(),
                    r.k.to_string(),
                    opt(r.fit.as_ref().map(|f| f.params.gamma())),
                    opt(r.fit.as_ref().map(|f| f.params.mu())),
                    opt(r.fit.as_ref().map(|f| f.params.sigma())),
                    opt(r.target.map(|t| t.probability)),
                    opt(r.target.map(|t| t.expected_count)),
                    opt(r.ci.map(|c| c.lower)),
                    opt(r.ci.map(|c| c.upper)),
                    if r.skipped.is_some() { "1" } else { "0" }.to_string(),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAverage {
    pub u1: f64,
    pub u2: f64,
    pub probability: f64,
    pub expected_count: f64,
    pub contributing_us: Vec<f64>,
}

/// Unweighted mean of the target estimates with `u ∈ [u1, u2]`.
pub fn average_over_region(scan: &ThresholdScan, u1: f64, u2: f64) -> Result<RegionAverage> {
    if !(u1 <= u2) {
        return Err(Error::domain(format!("region [{u1}, {u2}] is empty")));
    }
    let inside: Vec<(f64, TargetEstimate)> = scan
        .rows
        .iter()
        .filter(|r| r.u >= u1 && r.u <= u2)
        .filter_map(|r| r.target.map(|t| (r.u, t)))
        .collect();
    if inside.is_empty() {
        return Err(Error::domain(format!("no fitted thresholds inside [{u1}, {u2}]")));
    }
    let m = inside.len() as f64;
    Ok(RegionAverage {
        u1,
        u2,
        probability: inside.iter().map(|(_, t)| t.probability).sum::<f64>() / m,
        expected_count: inside.iter().map(|(_, t)| t.expected_count).sum::<f64>() / m,
        contributing_us: inside.iter().map(|(u, _)| *u).collect(),
    })
}

/// Advisory heuristic: the longest run of consecutive fitted thresholds whose
/// expected counts stay within `rel_spread` of their mean, as `(u1, u2)`.
pub fn suggest_stable_region(scan: &ThresholdScan, rel_spread: f64) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = scan
        .rows
        .iter()
        .filter_map(|r| r.target.map(|t| (r.u, t.expected_count)))
        .collect();
    let mut best: Option<(usize, usize)> = None;
    for i in 0..pts.len() {
        for j in i..pts.len() {
            let vals = &pts[i..=j];
            let mean = vals.iter().map(|p| p.1).sum::<f64>() / vals.len() as f64;
            let (lo, hi) = vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
            if hi - lo > rel_spread * mean.abs() {
                break;
            }
            if best.is_none_or(|(a, b)| j - i > b - a) {
                best = Some((i, j));
            }
        }
    }
    best.map(|(i, j)| (pts[i].0, pts[j].0))
}
