//! Displacement-interpolating laws: the action of the chord interpolation
//! matches the energy of the curve on every refinement.

use mqdyn::curve::{energy_partition, refinement_partition};
use mqdyn::dynamics::{action_chord, disp_construct};
use mqdyn::MarginalCurve;

fn main() -> mqdyn::Result<()> {
    for c in MarginalCurve::presets(16) {
        print!("{:<14}", c.name());
        for depth in [0, 2, 4, 6] {
            let r = refinement_partition(&c, 0.0, 1.0, depth)?;
            let law = disp_construct(&c, &r)?;
            let gap = action_chord(&law)? - energy_partition(&c, &r)?;
            print!("  d{depth}: {:.4} ({gap:+.0e})", action_chord(&law)?);
        }
        println!();
    }
    Ok(())
}
