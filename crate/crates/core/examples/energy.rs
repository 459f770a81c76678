//! Energy of the preset curves, on a fixed partition and in the refinement
//! limit.

use mqdyn::curve::{energy_partition, energy_report, length};
use mqdyn::{MarginalCurve, TimePartition};

fn main() -> mqdyn::Result<()> {
    let r: TimePartition = "0,0.25,0.5,1".parse()?;
    println!("{:<14}{:>12}{:>12}{:>8}{:>10}", "curve", "E(r)", "E", "depth", "length");
    for c in MarginalCurve::presets(32) {
        let rep = energy_report(&c, 0.0, 1.0, 1e-10)?;
        println!(
            "{:<14}{:>12.6}{:>12.6}{:>8}{:>10.6}",
            c.name(),
            energy_partition(&c, &r)?,
            rep.value,
            rep.depth,
            length(&c, 1e-10)?
        );
    }
    Ok(())
}
