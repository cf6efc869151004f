//! Target estimates across thresholds and averaging over a stable region.

use potmde::events::{event_curves, EventSpec, PanelSeries, Run};
use potmde::threshold::{average_over_region, scan, suggest_stable_region, ScanOptions, ThresholdScan};
use potmde::GpdParams;

fn main() -> potmde::Result<()> {
    // four runs of 3000 days, two locations with GPD(0.3, 1) marginals
    let theta = GpdParams::new(0.3, 1.0)?;
    let runs = (0..4)
        .map(|r| {
            let a = theta.sample(3000, 100 + r)?;
            let b = theta.sample(3000, 200 + r)?;
            Run::new(
                format!("run{r}"),
                a.into_iter().zip(b).map(|(x, y)| vec![x, y]).collect(),
            )
        })
        .collect::<potmde::Result<Vec<_>>>()?;
    let panel = PanelSeries::new(runs)?;
    let curves = event_curves(&panel, &EventSpec::order_stat(vec![1, 2], 2))?;

    let q = 15.0;
    let grid: Vec<f64> = (0..13).map(|i| 1.0 + 0.5 * i as f64).collect();
    let result = scan(&curves, q, &grid, &ScanOptions::default())?;
    println!("{}", ThresholdScan::COLUMNS.join("\t"));
    for row in result.table() {
        println!("{}", row.join("\t"));
    }

    let avg = average_over_region(&result, 2.0, 5.0)?;
    println!(
        "average over [{}, {}]: expected {:.2} events per run from {} thresholds",
        avg.u1,
        avg.u2,
        avg.expected_count,
        avg.contributing_us.len()
    );
    // maximum of two independent GPD draws
    let s = theta.survival(q)?;
    println!("exact: {:.2}", 3000.0 * (1.0 - (1.0 - s) * (1.0 - s)));
    if let Some((a, b)) = suggest_stable_region(&result, 0.1) {
        println!("advisory stable region: [{a}, {b}]");
    }
    Ok(())
}
