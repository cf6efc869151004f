use potmde::asymptotics::{confidence_interval, target_ci, CiOptions};
use potmde::events::{event_curves, exceedances, EventSpec, PanelSeries, Run};
use potmde::mde::{fit, fit_mde, FitOptions, Method};
use potmde::threshold::{
    average_over_region, estimate_target, scan, ScanOptions, ScanRow, TargetEstimate, ThresholdScan,
};
use potmde::GpdParams;
use proptest::prelude::*;

fn gpd_panel(theta: &GpdParams, runs: u64, n: usize, d: usize, seed: u64) -> PanelSeries {
    let runs = (0..runs)
        .map(|r| {
            let cols: Vec<Vec<f64>> = (0..d)
                .map(|j| theta.sample(n, seed + 100 * r + j as u64).unwrap())
                .collect();
            let rows = (0..n).map(|t| cols.iter().map(|c| c[t]).collect()).collect();
            Run::new(format!("{r}"), rows).unwrap()
        })
        .collect();
    PanelSeries::new(runs).unwrap()
}

#[test]
fn single_location_target_matches_the_truth() {
    let theta = GpdParams::new(0.3, 1.0).unwrap();
    let panel = gpd_panel(&theta, 4, 5000, 1, 1);
    let curves = event_curves(&panel, &EventSpec::order_stat(vec![1], 1)).unwrap();
    let u = 1.0;
    let sample = exceedances(&curves, u).unwrap();
    let f = fit(&sample, Method::Mde2, &FitOptions::default()).unwrap();
    let q = 12.0;
    let t = estimate_target(&sample, &f, q, 5000.0).unwrap();
    let exact = theta.survival(q).unwrap();
    assert!(
        (t.probability / exact - 1.0).abs() < 0.2,
        "{} vs {exact}",
        t.probability
    );
    let ci = target_ci(&f, q - u, 0.99, 5000.0, sample.rate, &CiOptions::default()).unwrap();
    assert!(ci.lower < 5000.0 * exact && 5000.0 * exact < ci.upper, "{ci:?}");
}

#[test]
fn target_interval_is_a_scaled_survival_interval() {
    let theta = GpdParams::new(0.2, 1.0).unwrap();
    let panel = gpd_panel(&theta, 2, 3000, 2, 7);
    let curves = event_curves(&panel, &EventSpec::sum(vec![1, 2])).unwrap();
    let sample = exceedances(&curves, 2.0).unwrap();
    let f = fit_mde(&sample, None, &FitOptions::default()).unwrap();
    let opts = CiOptions::default();
    let base = confidence_interval(&f, 4.0, 0.9, &opts).unwrap();
    let c = 3000.0 * sample.rate;
    let t = target_ci(&f, 4.0, 0.9, 3000.0, sample.rate, &opts).unwrap();
    assert!((t.center - c * base.center).abs() < 1e-9 * t.center);
    assert!((t.half_width - c * base.half_width).abs() < 1e-9 * t.half_width);
}

#[test]
fn scan_counts_are_nonincreasing_for_sums() {
    let theta = GpdParams::new(0.25, 1.0).unwrap();
    let panel = gpd_panel(&theta, 2, 2000, 3, 3);
    let curves = event_curves(&panel, &EventSpec::sum(vec![1, 2, 3])).unwrap();
    let grid: Vec<f64> = (0..10).map(|i| 2.0 + i as f64).collect();
    let opts = ScanOptions {
        ci_level: None,
        ..ScanOptions::default()
    };
    let s = scan(&curves, 40.0, &grid, &opts).unwrap();
    assert!(s.rows.windows(2).all(|w| w[1].k <= w[0].k));
    let one = scan(&curves, 40.0, &grid[3..4], &opts).unwrap();
    assert_eq!(one.rows[0], s.rows[3]);
}

fn scan_with(values: &[f64]) -> ThresholdScan {
    ThresholdScan {
        q: 100.0,
        n_per_run: 1.0,
        rows: values
            .iter()
            .enumerate()
            .map(|(i, &v)| ScanRow {
                u: i as f64,
                k: 100,
                fit: None,
                target: Some(TargetEstimate {
                    probability: v,
                    expected_count: v,
                }),
                ci: None,
                skipped: None,
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pooling_identical_runs(seed in 0u64..1000, copies in 2usize..5, u in 0.0f64..1.5) {
        let theta = GpdParams::new(0.3, 1.0).unwrap();
        let xs = theta.sample(200, seed).unwrap();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let one = PanelSeries::new(vec![Run::new("a", rows.clone()).unwrap()]).unwrap();
        let many = PanelSeries::new((0..copies).map(|r| Run::new(format!("{r}"), rows.clone()).unwrap()).collect()).unwrap();
        let spec = EventSpec::order_stat(vec![1], 1);
        let a = exceedances(&event_curves(&one, &spec).unwrap(), u).unwrap();
        let b = exceedances(&event_curves(&many, &spec).unwrap(), u).unwrap();
        prop_assert_eq!(b.total_k, copies * a.total_k);
        prop_assert_eq!(a.rate, b.rate);
        for x in [0.0, 0.5, 1.0, 3.0, 10.0] {
            prop_assert!((a.empirical_survival(x) - b.empirical_survival(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_scale_follows_the_data(seed in 0u64..1000, c in 0.1f64..50.0) {
        let theta = GpdParams::new(0.4, 1.0).unwrap();
        let xs = theta.sample(150, seed).unwrap();
        let ys: Vec<f64> = xs.iter().map(|x| c * x).collect();
        let opts = FitOptions::default();
        let fx = fit_mde(&potmde::events::ExceedanceSample::from_excesses(&xs).unwrap(), None, &opts).unwrap();
        let fy = fit_mde(&potmde::events::ExceedanceSample::from_excesses(&ys).unwrap(), None, &opts).unwrap();
        prop_assume!(fx.converged && fy.converged);
        prop_assert!((fx.params.gamma() - fy.params.gamma()).abs() < 1e-5);
        prop_assert!((fy.params.sigma() / (c * fx.params.sigma()) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn region_average_is_bounded_and_order_free(values in proptest::collection::vec(0.0f64..1.0, 1..12)) {
        let s = scan_with(&values);
        let top = (values.len() - 1) as f64;
        let avg = average_over_region(&s, 0.0, top).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(avg.probability >= lo - 1e-15 && avg.probability <= hi + 1e-15);
        let mut rev = values.clone();
        rev.reverse();
        let back = average_over_region(&scan_with(&rev), 0.0, top).unwrap();
        prop_assert!((back.probability - avg.probability).abs() < 1e-12);
    }
}
