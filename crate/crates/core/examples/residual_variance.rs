//! Residual-based variance model next to the plug-in variance.

use potmde::asymptotics::{confidence_interval, CiOptions};
use potmde::events::ExceedanceSample;
use potmde::mde::{fit_mde, FitOptions};
use potmde::residual::{fit_phi, residual_ci, residuals};
use potmde::GpdParams;

fn main() -> potmde::Result<()> {
    let theta = GpdParams::new(0.2, 1.0)?;
    let xs = theta.sample(400, 19)?;
    let sample = ExceedanceSample::from_excesses(&xs)?;
    let f = fit_mde(&sample, None, &FitOptions::default())?;

    let resid = residuals(&sample, &f)?;
    let phi = fit_phi(&resid)?;
    println!(
        "phi = {:.5}{}",
        phi.phi,
        phi.warning.map(|w| format!(" ({w})")).unwrap_or_default()
    );
    for row in resid.plot_data(phi.phi, 8.0, 9) {
        println!(
            "x {:>4.1}  |S_k - S_fit| {:.5}  phi*sqrt(S_fit) {:.5}",
            row[0], row[1], row[2]
        );
    }

    let opts = CiOptions::default();
    for x in [0.5, 2.0, 5.0] {
        let a = confidence_interval(&f, x, 0.95, &opts)?;
        let b = residual_ci(&sample, &f, x, 0.95, &opts)?;
        println!(
            "x = {x}: plug-in half-width {:.5}, residual half-width {:.5}",
            a.half_width, b.half_width
        );
    }
    Ok(())
}
