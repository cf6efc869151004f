//! Heavy-tailed max-linear data: threshold, fit, and compare with the
//! analytic tail.

use potmde::mde::{fit_mde, FitOptions};
use potmde::sim::{maxlinear_exceedances, MaxLinearModel};

fn main() -> potmde::Result<()> {
    let model = MaxLinearModel::random(3, 4, 2.0, 11)?;
    let implied = model.implied_gpd()?;
    println!(
        "limit GPD: gamma {} sigma {:.4}",
        implied.params.gamma(),
        implied.params.sigma()
    );

    let panel = model.sample(100_000, 5)?;
    let sample = maxlinear_exceedances(&panel, 0.99)?;
    let f = fit_mde(&sample, None, &FitOptions::default())?;
    println!(
        "u = {:.3}, k = {}: gamma {:.4} sigma {:.4}",
        sample.threshold_u,
        sample.total_k,
        f.params.gamma(),
        f.params.sigma()
    );

    let u = sample.threshold_u;
    for x in [2.0 * u, 5.0 * u] {
        let fitted = sample.rate * f.params.survival(x - u);
        println!(
            "P(max > {x:.2}): fitted {:.3e}, analytic {:.3e}, exact {:.3e}",
            fitted,
            model.analytic_tail(x)?,
            model.exact_tail(x)?
        );
    }
    Ok(())
}
