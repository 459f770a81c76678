//! Weak continuity-equation residuals of the finite-difference velocity
//! field, and of a wrong field for contrast.

use mqdyn::dynamics::{continuity_residual, kinetic_energy, test_function_library, velocity_field, Quadrature};
use mqdyn::{MarginalCurve, VelocityField};

fn main() -> mqdyn::Result<()> {
    let quad = Quadrature::with_mesh(1e-3)?;
    let phis = test_function_library(2, 7);
    for c in [MarginalCurve::translation(16), MarginalCurve::moving_point(16)] {
        let v = velocity_field(&c, 1e-3)?;
        let worst = phis
            .iter()
            .map(|phi| continuity_residual(&c, &v, phi, &quad).map(f64::abs))
            .collect::<mqdyn::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!(
            "{:<13} max |residual| {worst:.2e}, kinetic energy {:.6}",
            c.name(),
            kinetic_energy(&c, &v, &quad)?
        );
    }
    let c = MarginalCurve::translation(16);
    let r = continuity_residual(&c, &VelocityField::constant(0.0), &phis[0], &quad)?;
    println!("translation with v = 0: residual {r:.4}");
    Ok(())
}
