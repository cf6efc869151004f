//! Survival, quantiles, closed-form integrals and sampling of a GPD.

use potmde::{Bound, GpdParams};

fn main() -> potmde::Result<()> {
    let theta = GpdParams::new(0.25, 2.0)?;
    println!("theta = (gamma {}, sigma {})", theta.gamma(), theta.sigma());

    for x in [0.0, 1.0, 5.0, 20.0] {
        println!(
            "x = {x:>5}: S = {:.6}  F = {:.6}  f = {:.6}",
            theta.survival(x)?,
            theta.cdf(x)?,
            theta.density(x)?
        );
    }
    for p in [0.5, 0.9, 0.99] {
        println!("quantile({p}) = {:.4}", theta.quantile(p)?);
    }

    // ∫S = σ/(1−γ) and ∫S² = σ/(2−γ) over (0, ∞)
    println!("int S   = {:.6}", theta.integral_survival(0.0, Bound::Infinity)?);
    println!(
        "int S^2 = {:.6}",
        theta.integral_survival_squared(0.0, Bound::Infinity)?
    );
    println!(
        "int_1^4 S^1.5 = {:.6}",
        theta.integral_survival_power(1.0, Bound::Finite(4.0), 1.5)?
    );

    let xs = theta.sample(100_000, 42)?;
    let above = xs.iter().filter(|&&x| x > 5.0).count() as f64 / xs.len() as f64;
    println!("empirical P(X > 5) = {above:.4}, exact {:.4}", theta.survival(5.0)?);
    Ok(())
}
