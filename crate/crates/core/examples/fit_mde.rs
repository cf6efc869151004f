//! Minimum-distance and maximum-likelihood fits to the same sample.

use potmde::events::ExceedanceSample;
use potmde::mde::{fit, objective_j, score_big_psi, FitOptions, Method};
use potmde::GpdParams;

fn main() -> potmde::Result<()> {
    let truth = GpdParams::new(0.3, 1.5)?;
    let xs = truth.sample(2_000, 7)?;
    let sample = ExceedanceSample::from_excesses(&xs)?;
    let opts = FitOptions::default();

    println!("truth: gamma {} sigma {}", truth.gamma(), truth.sigma());
    println!("J at the truth = {:.3e}", objective_j(&sample.pooled_step, &truth)?);
    for method in [Method::Mde2, Method::Mde3, Method::Mle] {
        let f = fit(&sample, method, &opts)?;
        println!(
            "{method}: gamma {:.4} mu {:+.4} sigma {:.4}  J = {:.3e}  converged {}  ({} evaluations)",
            f.params.gamma(),
            f.params.mu(),
            f.params.sigma(),
            f.objective,
            f.converged,
            f.evaluations
        );
        if let Some(theta) = f.params.two().filter(|_| method == Method::Mde2) {
            let psi = score_big_psi(&sample, &theta)?;
            println!("      estimating equation at the fit: ({:.2e}, {:.2e})", psi[0], psi[1]);
        }
    }
    Ok(())
}
