//! Relative asymptotic efficiency of the minimum-distance and likelihood fits.

use potmde::asymptotics::{efficiency_ratio, ratio_limits};
use potmde::GpdParams;

fn main() -> potmde::Result<()> {
    let xs = [1e-3, 1e-1, 1.0, 10.0, 1e3];
    print!("{:>6}", "gamma");
    for x in xs {
        print!("{:>10}", format!("x={x}"));
    }
    println!("{:>10}{:>10}", "x->0", "x->inf");
    for g in [0.05, 0.2, 0.4, 0.6, 0.8, 0.95] {
        let theta = GpdParams::new(g, 1.0)?;
        print!("{g:>6}");
        for x in xs {
            print!("{:>10.4}", efficiency_ratio(&theta, x)?.mde_over_mle);
        }
        let (lo, hi) = ratio_limits(g)?;
        println!("{lo:>10.4}{hi:>10.4}");
    }
    let (lo, hi) = ratio_limits(0.0)?;
    println!("gamma -> 0: {lo} = 846/729, {hi} = 40896/26244");
    Ok(())
}
