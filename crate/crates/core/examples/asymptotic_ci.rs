//! Closed-form asymptotic covariance and plug-in confidence intervals.

use potmde::asymptotics::{
    confidence_interval, matrix_u, matrix_v, sandwich, sigma_matrix, sigma_matrix_mle, target_ci, var_survival,
    CiConvention, CiOptions,
};
use potmde::events::ExceedanceSample;
use potmde::mde::{fit_mde, FitOptions};
use potmde::GpdParams;

fn main() -> potmde::Result<()> {
    let theta = GpdParams::new(0.2, 1.0)?;
    println!("U = {:?}", matrix_u(&theta)?.entries);
    println!("V = {:?}", matrix_v(&theta)?.entries);
    println!("Sigma (closed form) = {:?}", sigma_matrix(&theta)?.entries);
    println!("U^-1 V U^-T         = {:?}", sandwich(&theta)?.entries);
    println!("Sigma_MLE           = {:?}", sigma_matrix_mle(&theta)?.entries);
    for x in [0.5, 2.0, 10.0] {
        println!("varsigma^2({x}) = {:.5}", var_survival(&theta, x)?);
    }

    let xs = theta.sample(500, 3)?;
    let sample = ExceedanceSample::from_excesses(&xs)?;
    let f = fit_mde(&sample, None, &FitOptions::default())?;
    for convention in [CiConvention::Corrected, CiConvention::StrictPaper] {
        let opts = CiOptions {
            convention,
            ..CiOptions::default()
        };
        let ci = confidence_interval(&f, 2.0, 0.95, &opts)?;
        println!(
            "{convention:?}: S(2) in [{:.4}, {:.4}] (estimate {:.4}, truth {:.4})",
            ci.lower,
            ci.upper,
            ci.center,
            theta.survival(2.0)?
        );
    }
    // expected number of events in 10 000 time points at an exceedance rate of 5%
    let t = target_ci(&f, 2.0, 0.95, 10_000.0, 0.05, &CiOptions::default())?;
    println!("expected count {:.1} in [{:.1}, {:.1}]", t.center, t.lower, t.upper);
    Ok(())
}
