//! From a small two-run panel to event curves, counts and pooled exceedances.

use potmde::events::{event_curves, exceedances, project, EventSpec, PanelSeries};

const PANEL: &str = "\
run,t,v1,v2,v3
a,1,0.0,1.5,2.0
a,2,3.0,4.0,0.5
a,3,6.0,5.5,7.0
a,4,1.0,0.2,0.4
a,5,8.0,9.0,7.5
a,6,9.5,8.0,10.0
b,1,2.0,2.5,1.0
b,2,0.5,0.1,0.0
b,3,4.5,6.0,5.0
b,4,7.0,6.5,8.0
b,5,0.0,0.3,0.2
b,6,3.0,3.5,4.0
";

fn main() -> potmde::Result<()> {
    let panel = PanelSeries::from_reader(PANEL.as_bytes(), "inline")?;
    println!("{} runs, d = {}", panel.runs().len(), panel.d());

    let specs = [
        ("sum over 1,2", EventSpec::sum(vec![1, 2])),
        ("all locations above q", EventSpec::order_stat(vec![1, 2, 3], 1)),
        ("two-day run of the minimum", EventSpec::run_pattern(vec![1, 2, 3], 1)),
    ];
    for (label, spec) in &specs {
        println!("\n{label}");
        for (run, g) in panel.runs().iter().zip(project(&panel, spec)?) {
            println!("  run {}: g = {g:?}", run.id());
        }
        let curves = event_curves(&panel, spec)?;
        for q in [0.5, 2.0, 4.0] {
            let counts: Vec<usize> = curves.iter().map(|c| c.count_at(q)).collect();
            println!("  N({q}) per run = {counts:?}");
        }
        let cf = curves[0].counts_function();
        println!(
            "  run a step function: breakpoints {:?} counts {:?}",
            cf.breakpoints, cf.counts
        );

        let sample = exceedances(&curves, 0.5)?;
        println!(
            "  above u = 0.5: k = {:?} (total {}), rate {:.3}, S(1) = {:.3}",
            sample.per_run_counts,
            sample.total_k,
            sample.rate,
            sample.empirical_survival(1.0)
        );
    }
    Ok(())
}
