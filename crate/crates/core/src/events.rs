//! From spatio-temporal panels to univariate exceedances.
//!
//! Each time point `t` of a run is mapped to the set of thresholds `q` for
//! which the event `A_t(q)` holds. For every supported event family that set
//! is a half-open interval `[l_t, r_t)`:
//!
//! * `Sum` and `OrderStat`: `A_t(q) ⟺ g_t > q`, so the interval is `[0, g_t)`.
//! * `RunPattern`: `A_t(q) ⟺ g_{t-1} ≤ q < min(g_t, g_{t+1})`, so the interval
//!   is `[g_{t-1}, min(g_t, g_{t+1}))`, possibly empty. The first and last
//!   time point of a run have no complete neighbourhood and are dropped.
//!
//! The count `N(q) = #{t : A_t(q)}` is then an exact sweep over interval
//! endpoints, and rescaled counts above a threshold `u` serve as the empirical
//! survival function of the excesses.

use std::cmp::Ordering;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::step::StepSurvival;

/// One simulation run: `n` rows (time) by `d` columns (locations).
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    id: String,
    d: usize,
    values: Vec<f64>,
}

impl Run {
    pub fn new(id: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let id = id.into();
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || d == 0 {
            return Err(Error::domain(format!("run {id} is empty")));
        }
        let mut values = Vec::with_capacity(rows.len() * d);
        for (t, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::domain(format!(
                    "run {id}, row {}: expected {d} locations, found {}",
                    t + 1,
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::domain(format!(
                    "run {id}, row {}: values must be finite and nonnegative, got {v}",
                    t + 1
                )));
            }
            values.extend(row);
        }
        Ok(Self { id, d, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n(&self) -> usize {
        self.values.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.d..(t + 1) * self.d]
    }
}

/// A collection of runs sharing the same set of locations.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    runs: Vec<Run>,
}

impl PanelSeries {
    /// Runs are ordered by identifier (numerically when both parse as integers).
    pub fn new(mut runs: Vec<Run>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::domain("panel has no runs"));
        }
        let d = runs[0].d;
        if let Some(r) = runs.iter().find(|r| r.d != d) {
            return Err(Error::domain(format!(
                "run {} has {} locations, expected {d}",
                r.id, r.d
            )));
        }
        runs.sort_by(|a, b| compare_ids(&a.id, &b.id));
        if let Some(w) = runs.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::domain(format!("duplicate run identifier {}", w[0].id)));
        }
        Ok(Self { runs })
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn d(&self) -> usize {
        self.runs[0].d
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Parses delimited text in long (`run,t,loc,value`) or wide
    /// (`run,t,v1,…,vd`) layout. `t` and `loc` are 1-based integers; every
    /// `(run, t, loc)` cell must be present exactly once.
    pub fn from_reader<R: Read>(reader: R, source_name: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let perr = |line: u64, message: String| Error::Parse {
            path: source_name.to_string(),
            line,
            message,
        };
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| perr(1, e.to_string()))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let long = header == ["run", "t", "loc", "value"];
        if !long && (header.len() < 3 || header[0] != "run" || header[1] != "t") {
            return Err(perr(1, "header must be `run,t,loc,value` or `run,t,v1,...,vd`".into()));
        }
        let d_wide = header.len() - 2;

        // run id -> list of (t, loc, value, line)
        type Cell = (usize, usize, f64, u64);
        let mut cells: Vec<(String, Vec<Cell>)> = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                perr(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let expected = header.len();
            if rec.len() != expected {
                return Err(perr(line, format!("expected {expected} fields, found {}", rec.len())));
            }
            let run = rec[0].to_string();
            if run.is_empty() {
                return Err(perr(line, "empty run identifier".into()));
            }
            let t = parse_index(&rec[1]).map_err(|m| perr(line, format!("field t: {m}")))?;
            let slot = match cells.iter().position(|(id, _)| *id == run) {
                Some(i) => i,
                None => {
                    cells.push((run, Vec::new()));
                    cells.len() - 1
                }
            };
            if long {
                let loc = parse_index(&rec[2]).map_err(|m| perr(line, format!("field loc: {m}")))?;
                let v = parse_value(&rec[3]).map_err(|m| perr(line, format!("field value: {m}")))?;
                cells[slot].1.push((t, loc, v, line));
            } else {
                for j in 0..d_wide {
                    let v =
                        parse_value(&rec[j + 2]).map_err(|m| perr(line, format!("field {}: {m}", header[j + 2])))?;
                    cells[slot].1.push((t, j + 1, v, line));
                }
            }
        }
        if cells.is_empty() {
            return Err(perr(1, "no data rows".into()));
        }

        let mut runs = Vec::with_capacity(cells.len());
        let mut d_all: Option<usize> = None;
        for (id, mut entries) in cells {
            entries.sort_by_key(|a| (a.0, a.1));
            if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
                return Err(perr(
                    w[1].3,
                    format!("duplicate cell run={id} t={} loc={}", w[1].0, w[1].1),
                ));
            }
            let d = entries.iter().map(|e| e.1).max().unwrap_or(0);
            if let Some(d0) = d_all {
                if d != d0 {
                    return Err(perr(entries[0].3, format!("run {id} has {d} locations, expected {d0}")));
                }
            }
            d_all = Some(d);
            let t_min = entries[0].0;
            let t_max = entries.last().unwrap().0;
            let n = t_max - t_min + 1;
            if entries.len() != n * d {
                // locate the first gap for a useful message
                let mut expect = (t_min, 1usize);
                let mut line = entries[0].3;
                for e in &entries {
                    if (e.0, e.1) != expect {
                        line = e.3;
                        break;
                    }
                    expect = if expect.1 == d {
                        (expect.0 + 1, 1)
                    } else {
                        (expect.0, expect.1 + 1)
                    };
                }
                return Err(perr(
                    line,
                    format!("run {id}: missing value at t={} loc={}", expect.0, expect.1),
                ));
            }
            let rows = entries.chunks(d).map(|c| c.iter().map(|e| e.2).collect()).collect();
            runs.push(Run::new(id, rows)?);
        }
        Self::new(runs)
    }
}

fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

fn parse_index(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

fn parse_value(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a decimal number, got `{s}`"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("value must be finite and nonnegative, got `{s}`"));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    #[serde(alias = "SUM")]
    Sum,
    #[serde(alias = "ORDER_STAT")]
    OrderStat,
    #[serde(alias = "RUN_PATTERN")]
    RunPattern,
}

impl EventKind {
    pub fn is_monotone(self) -> bool {
        !matches!(self, EventKind::RunPattern)
    }
}

/// Declarative event description.
///
/// `subset` holds 1-based location indices; `None` means every location.
/// `order_index` selects the `i`-th smallest value within the subset and is
/// required for `OrderStat` and `RunPattern`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_index: Option<usize>,
}

impl EventSpec {
    pub fn sum(subset: Vec<usize>) -> Self {
        Self {
            kind: EventKind::Sum,
            subset: Some(subset),
            order_index: None,
        }
    }

    pub fn order_stat(subset: Vec<usize>, order_index: usize) -> Self {
        Self {
            kind: EventKind::OrderStat,
            subset: Some(subset),
            order_index: Some(order_index),
        }
    }

    pub fn run_pattern(subset: Vec<usize>, order_index: usize) -> Self {
        Self {
            kind: EventKind::RunPattern,
            subset: Some(subset),
            order_index: Some(order_index),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(format!("event specification: {e}")))
    }

    /// Checks the spec against a panel with `d` locations and returns the
    /// resolved 0-based subset.
    pub fn resolve(&self, d: usize) -> Result<Vec<usize>> {
        let subset: Vec<usize> = match &self.subset {
            Some(s) => s.clone(),
            None => (1..=d).collect(),
        };
        if subset.is_empty() {
            return Err(Error::InvalidSpec("subset must be nonempty".into()));
        }
        if let Some(i) = subset.iter().find(|&&i| i == 0 || i > d) {
            return Err(Error::InvalidSpec(format!("location index {i} outside [1, {d}]")));
        }
        let mut sorted = subset.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("subset contains duplicate indices".into()));
        }
        match (self.kind, self.order_index) {
            (EventKind::Sum, Some(_)) => {
                return Err(Error::InvalidSpec("order_index is not used by SUM events".into()))
            }
            (EventKind::Sum, None) => {}
            (_, None) => {
                return Err(Error::InvalidSpec(format!(
                    "{:?} events require order_index",
                    self.kind
                )))
            }
            (_, Some(i)) if i == 0 || i > subset.len() => {
                return Err(Error::InvalidSpec(format!(
                    "order_index {i} outside [1, {}]",
                    subset.len()
                )))
            }
            _ => {}
        }
        Ok(subset.into_iter().map(|i| i - 1).collect())
    }

    fn aggregate(&self, row: &[f64], subset: &[usize], scratch: &mut Vec<f64>) -> f64 {
        match self.kind {
            EventKind::Sum => subset.iter().map(|&i| row[i]).sum(),
            EventKind::OrderStat | EventKind::RunPattern => {
                scratch.clear();
                scratch.extend(subset.iter().map(|&i| row[i]));
                let k = self.order_index.expect("validated") - 1;
                let (_, v, _) = scratch.select_nth_unstable_by(k, f64::total_cmp);
                *v
            }
        }
    }
}

/// Per-run aggregator series `g_t`.
pub fn project(panel: &PanelSeries, spec: &EventSpec) -> Result<Vec<Vec<f64>>> {
    let subset = spec.resolve(panel.d())?;
    Ok(panel
        .runs()
        .par_iter()
        .map(|run| {
            let mut scratch = Vec::with_capacity(subset.len());
            (0..run.n())
                .map(|t| spec.aggregate(run.row(t), &subset, &mut scratch))
                .collect()
        })
        .collect())
}

/// Per-time-point threshold intervals of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventCurve {
    kind: EventKind,
    intervals: Vec<(f64, f64)>,
}

impl EventCurve {
    /// Builds the curve from an aggregator series.
    pub fn from_aggregator(g: &[f64], kind: EventKind) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::domain("aggregator series is empty"));
        }
        let intervals = match kind {
            EventKind::Sum | EventKind::OrderStat => g.iter().map(|&v| (0.0, v)).collect(),
            EventKind::RunPattern => {
                if g.len() < 3 {
                    return Err(Error::domain(format!(
                        "run-pattern events need at least 3 time points, got {}",
                        g.len()
                    )));
                }
                g.windows(3)
                    .map(|w| {
                        let l = w[0];
                        let r = w[1].min(w[2]);
                        // empty intervals are normalised to [l, l)
                        (l, r.max(l))
                    })
                    .collect()
            }
        };
        Ok(Self { kind, intervals })
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn n_effective(&self) -> usize {
        self.intervals.len()
    }

    /// `#{t : l_t ≤ q < r_t}`.
    pub fn count_at(&self, q: f64) -> usize {
        self.intervals.iter().filter(|(l, r)| *l <= q && q < *r).count()
    }

    pub fn counts_function(&self) -> CountsFunction {
        CountsFunction::from_intervals(self.intervals.iter().copied())
    }
}

/// Event curves of every run of a panel.
pub fn event_curves(panel: &PanelSeries, spec: &EventSpec) -> Result<Vec<EventCurve>> {
    project(panel, spec)?
        .iter()
        .map(|g| EventCurve::from_aggregator(g, spec.kind))
        .collect()
}

/// Piecewise-constant, right-continuous `q ↦ N(q)`.
///
/// `counts[i]` holds on `[breakpoints[i], breakpoints[i+1])`; `N = 0` before
/// the first breakpoint and the last count is always 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountsFunction {
    pub breakpoints: Vec<f64>,
    pub counts: Vec<u64>,
}

impl CountsFunction {
    pub fn from_intervals(intervals: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut events: Vec<(f64, i64)> = Vec::new();
        for (l, r) in intervals {
            if l < r {
                events.push((l, 1));
                events.push((r, -1));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breakpoints = Vec::new();
        let mut counts = Vec::new();
        let mut level: i64 = 0;
        let mut i = 0;
        while i < events.len() {
            let x = events[i].0;
            while i < events.len() && events[i].0 == x {
                level += events[i].1;
                i += 1;
            }
            if counts.last().is_none_or(|&c| c != level as u64) {
                breakpoints.push(x);
                counts.push(level as u64);
            }
        }
        Self { breakpoints, counts }
    }

    pub fn eval(&self, q: f64) -> u64 {
        match self.breakpoints.partition_point(|&b| b <= q) {
            0 => 0,
            i => self.counts[i - 1],
        }
    }

    /// Pointwise sum of several count functions.
    pub fn merged<'a>(parts: impl IntoIterator<Item = &'a EventCurve>) -> Self {
        Self::from_intervals(parts.into_iter().flat_map(|c| c.intervals.iter().copied()))
    }
}

/// Pooled threshold exceedances of one or more runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSample {
    pub threshold_u: f64,
    pub per_run_counts: Vec<usize>,
    /// Sorted excesses `g_t - u`; present for monotone events only.
    pub pooled_excesses: Option<Vec<f64>>,
    pub pooled_step: StepSurvival,
    pub total_k: usize,
    /// Empirical `P(X > u)`: exceedances per usable time point.
    pub rate: f64,
    pub n_effective_total: usize,
}

impl ExceedanceSample {
    /// Wraps raw iid excesses (already above the threshold) as a sample with
    /// unit exceedance rate.
    pub fn from_excesses(excesses: &[f64]) -> Result<Self> {
        let pooled_step = StepSurvival::from_excesses(excesses)?;
        let mut sorted = excesses.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            threshold_u: 0.0,
            per_run_counts: vec![sorted.len()],
            total_k: sorted.len(),
            pooled_excesses: Some(sorted),
            pooled_step,
            rate: 1.0,
            n_effective_total: excesses.len(),
        })
    }

    /// `Ŝ(x)` of the pooled exceedances.
    pub fn empirical_survival(&self, x: f64) -> f64 {
        self.pooled_step.eval(x)
    }

    pub fn k(&self) -> usize {
        self.total_k
    }
}

/// Pools the exceedances of all runs above `u`.
pub fn exceedances(curves: &[EventCurve], u: f64) -> Result<ExceedanceSample> {
    if curves.is_empty() {
        return Err(Error::EmptySample("no event curves".into()));
    }
    if !(u >= 0.0 && u.is_finite()) {
        return Err(Error::domain(format!(
            "threshold must be finite and nonnegative, got {u}"
        )));
    }
    let kind = curves[0].kind;
    if curves.iter().any(|c| c.kind != kind) {
        return Err(Error::domain("cannot pool curves of different event kinds"));
    }
    let per_run_counts: Vec<usize> = curves.iter().map(|c| c.count_at(u)).collect();
    let total_k: usize = per_run_counts.iter().sum();
    if total_k == 0 {
        return Err(Error::EmptySample(format!("no exceedances above u = {u}")));
    }
    let n_effective_total: usize = curves.iter().map(EventCurve::n_effective).sum();
    let rate = total_k as f64 / n_effective_total as f64;

    let (pooled_excesses, pooled_step) = if kind.is_monotone() {
        let mut ex: Vec<f64> = curves
            .iter()
            .flat_map(|c| c.intervals.iter().filter(|(_, r)| *r > u).map(|(_, r)| r - u))
            .collect();
        ex.sort_by(f64::total_cmp);
        let step = StepSurvival::from_excesses(&ex)?;
        (Some(ex), step)
    } else {
        let merged = CountsFunction::merged(curves);
        let base = total_k as f64;
        let mut bps = Vec::new();
        let mut vals = Vec::new();
        for (b, c) in merged.breakpoints.iter().zip(&merged.counts) {
            if *b > u {
                bps.push(b - u);
                vals.push(*c as f64 / base);
            }
        }
        (None, StepSurvival::from_levels(&bps, &vals)?)
    };

    Ok(ExceedanceSample {
        threshold_u: u,
        per_run_counts,
        pooled_excesses,
        pooled_step,
        total_k,
        rate,
        n_effective_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn panel(rows: Vec<Vec<f64>>) -> PanelSeries {
        PanelSeries::new(vec![Run::new("1", rows).unwrap()]).unwrap()
    }

    #[test]
    fn project_sum_and_order_stats() {
        let p = panel(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(
            project(&p, &EventSpec::sum(vec![1, 2])).unwrap(),
            vec![vec![3.0, 7.0, 11.0]]
        );
        let p = panel(vec![vec![4.0, 2.0, 9.0], vec![1.0, 8.0, 3.0]]);
        let min_all = EventSpec {
            kind: EventKind::OrderStat,
            subset: None,
            order_index: Some(1),
        };
        assert_eq!(project(&p, &min_all).unwrap(), vec![vec![2.0, 1.0]]);
        assert_eq!(
            project(&p, &EventSpec::order_stat(vec![2], 1)).unwrap(),
            vec![vec![2.0, 8.0]]
        );
        assert_eq!(
            project(&p, &EventSpec::order_stat(vec![1, 2, 3], 2)).unwrap(),
            vec![vec![4.0, 3.0]]
        );
    }

    #[test]
    fn spec_validation() {
        assert!(EventSpec::sum(vec![]).resolve(3).is_err());
        assert!(EventSpec::sum(vec![4]).resolve(3).is_err());
        assert!(EventSpec::sum(vec![1, 1]).resolve(3).is_err());
        assert!(EventSpec::order_stat(vec![1, 2], 3).resolve(3).is_err());
        assert!(EventSpec::order_stat(vec![1, 2], 0).resolve(3).is_err());
        let s = EventSpec::from_toml_str("kind = \"order_stat\"\nsubset = [1, 3]\norder_index = 2\n").unwrap();
        assert_eq!(s.resolve(3).unwrap(), vec![0, 2]);
        assert!(EventSpec::from_toml_str("kind = \"weird\"").is_err());
    }

    #[test]
    fn curves_and_counts() {
        let c = EventCurve::from_aggregator(&[3.0, 7.0, 11.0], EventKind::Sum).unwrap();
        assert_eq!(c.intervals()[1], (0.0, 7.0));
        assert_eq!(c.count_at(4.0), 2);
        assert_eq!(c.count_at(100.0), 0);

        let c = EventCurve::from_aggregator(&[3.0, 7.0, 11.0], EventKind::RunPattern).unwrap();
        assert_eq!(c.intervals(), &[(3.0, 7.0)]);
        assert_eq!(c.n_effective(), 1);
        assert_eq!(c.count_at(3.0), 1);
        assert_eq!(c.count_at(7.0), 0);

        let c = EventCurve::from_aggregator(&[7.0, 3.0, 11.0], EventKind::RunPattern).unwrap();
        assert_eq!(c.count_at(3.0), 0);
        assert_eq!(c.count_at(7.0), 0);
        assert_eq!(c.counts_function().breakpoints.len(), 0);

        assert!(EventCurve::from_aggregator(&[1.0, 2.0], EventKind::RunPattern).is_err());
    }

    #[test]
    fn counts_function_sweep() {
        let f = CountsFunction::from_intervals([(0.0, 5.0)]);
        assert_eq!((f.eval(0.0), f.eval(4.99), f.eval(5.0)), (1, 1, 0));
        let f = CountsFunction::from_intervals([(0.0, 5.0), (2.0, 9.0)]);
        assert_eq!(f.breakpoints, vec![0.0, 2.0, 5.0, 9.0]);
        assert_eq!(f.counts, vec![1, 2, 1, 0]);
    }

    #[test]
    fn counts_function_matches_count_at_on_random_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..202)
            .map(|_| (rng.gen_range(0.0..10.0f64) * 4.0).round() / 4.0)
            .collect();
        let c = EventCurve::from_aggregator(&g, EventKind::RunPattern).unwrap();
        assert_eq!(c.n_effective(), 200);
        let f = c.counts_function();
        for _ in 0..1000 {
            let q = if rng.gen_bool(0.3) {
                (rng.gen_range(0.0..10.0f64) * 4.0).round() / 4.0
            } else {
                rng.gen_range(-1.0..11.0)
            };
            assert_eq!(f.eval(q), c.count_at(q) as u64, "q = {q}");
        }
    }

    #[test]
    fn exceedances_single_run() {
        let c = EventCurve::from_aggregator(&[3.0, 7.0, 11.0], EventKind::Sum).unwrap();
        let s = exceedances(std::slice::from_ref(&c), 4.0).unwrap();
        assert_eq!(s.pooled_excesses.as_deref(), Some(&[3.0, 7.0][..]));
        assert_eq!(s.total_k, 2);
        assert_eq!(s.empirical_survival(0.0), 1.0);
        assert_eq!(s.empirical_survival(2.9), 1.0);
        assert_eq!(s.empirical_survival(3.0), 0.5);
        assert_eq!(s.empirical_survival(7.0), 0.0);
        assert!((s.rate - 2.0 / 3.0).abs() < 1e-15);

        let two = exceedances(&[c.clone(), c], 4.0).unwrap();
        assert_eq!(two.pooled_step, s.pooled_step);
        assert_eq!(two.total_k, 4);
        assert_eq!(two.per_run_counts, vec![2, 2]);

        let c = EventCurve::from_aggregator(&[1.0, 2.0], EventKind::Sum).unwrap();
        assert!(matches!(exceedances(&[c], 5.0), Err(Error::EmptySample(_))));
    }

    #[test]
    fn exceedances_run_pattern_uses_count_ratios() {
        // intervals [1,4), [2,6), [0,3)
        let g = [1.0, 5.0, 4.0, 6.0, 0.0, 3.0, 8.0];
        let c = EventCurve::from_aggregator(&g, EventKind::RunPattern).unwrap();
        let u = 2.5;
        let s = exceedances(std::slice::from_ref(&c), u).unwrap();
        assert!(s.pooled_excesses.is_none());
        let nu = c.count_at(u) as f64;
        for x in [0.0, 0.3, 0.5, 1.0, 1.5, 2.0, 3.4, 3.5, 10.0] {
            assert_eq!(s.empirical_survival(x), c.count_at(u + x) as f64 / nu, "x = {x}");
        }
        assert!((s.rate - nu / c.n_effective() as f64).abs() < 1e-15);
    }

    #[test]
    fn parse_long_and_wide() {
        let long = "run,t,loc,value\n1,1,1,0.5\n1,1,2,1.5\n1,2,1,2\n1,2,2,0\n2,1,1,1\n2,1,2,1\n2,2,1,1\n2,2,2,1\n";
        let wide = "run,t,v1,v2\n2,1,1,1\n2,2,1,1\n1,1,0.5,1.5\n1,2,2,0\n";
        let a = PanelSeries::from_reader(long.as_bytes(), "long").unwrap();
        let b = PanelSeries::from_reader(wide.as_bytes(), "wide").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs()[0].row(0), &[0.5, 1.5]);
        assert_eq!(a.runs()[1].id(), "2");
    }

    #[test]
    fn parse_errors_name_the_line() {
        let bad = "run,t,v1,v2\n1,1,0.5,1.5\n1,2,abc,0\n";
        match PanelSeries::from_reader(bad.as_bytes(), "p.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let missing = "run,t,loc,value\n1,1,1,0.5\n1,1,2,1.5\n1,2,1,2\n";
        assert!(matches!(
            PanelSeries::from_reader(missing.as_bytes(), "p.csv"),
            Err(Error::Parse { .. })
        ));
        let neg = "run,t,v1\n1,1,-2\n";
        assert!(PanelSeries::from_reader(neg.as_bytes(), "p.csv").is_err());
        let short = "run,t,v1,v2\n1,1,0.5\n";
        assert!(PanelSeries::from_reader(short.as_bytes(), "p.csv").is_err());
    }

    fn brute_force(g: &[f64], kind: EventKind, q: f64) -> usize {
        match kind {
            EventKind::RunPattern => g.windows(3).filter(|w| w[0] <= q && w[1].min(w[2]) > q).count(),
            _ => g.iter().filter(|&&v| v > q).count(),
        }
    }

    proptest! {
        #[test]
        fn count_at_matches_brute_force(
            g in proptest::collection::vec(0u8..20, 3..40),
            kind in prop_oneof![Just(EventKind::Sum), Just(EventKind::RunPattern)],
            q in 0.0f64..22.0,
        ) {
            let g: Vec<f64> = g.into_iter().map(f64::from).collect();
            let c = EventCurve::from_aggregator(&g, kind).unwrap();
            let qq = q.floor(); // hit ties too
            prop_assert_eq!(c.count_at(q), brute_force(&g, kind, q));
            prop_assert_eq!(c.count_at(qq), brute_force(&g, kind, qq));
            prop_assert_eq!(c.counts_function().eval(q) as usize, c.count_at(q));
        }

        #[test]
        fn counts_nonincreasing_above_lower_ends(g in proptest::collection::vec(0.0f64..10.0, 3..40)) {
            let c = EventCurve::from_aggregator(&g, EventKind::RunPattern).unwrap();
            let f = c.counts_function();
            let lmax = c.intervals().iter().map(|i| i.0).fold(0.0, f64::max);
            let tail: Vec<u64> = f.breakpoints.iter().zip(&f.counts)
                .filter(|(b, _)| **b >= lmax).map(|(_, c)| *c).collect();
            prop_assert!(tail.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn empirical_survival_levels(ex in proptest::collection::vec(0.01f64..50.0, 1..60), x in 0.0f64..60.0) {
            let s = ExceedanceSample::from_excesses(&ex).unwrap();
            let k = ex.len() as f64;
            let direct = ex.iter().filter(|&&y| y > x).count() as f64 / k;
            prop_assert!((s.empirical_survival(x) - direct).abs() < 1e-12);
        }
    }
}
