//! Markov-quantile coupling of a curve whose two atoms meet at t = 1/2.
//!
//! The quantile coupling of the endpoints keeps each atom on its side; the
//! Markov-quantile coupling forgets the side once the atoms have met.

use mqdyn::markov_quantile::{mq_coupling_traced, quantile_product};
use mqdyn::measure::quantile_coupling;
use mqdyn::{MarginalCurve, MqConfig, TimePartition};

fn main() -> mqdyn::Result<()> {
    let c = MarginalCurve::split_merge(4);
    let out = mq_coupling_traced(&c, 0.0, 1.0, &MqConfig::default())?;
    for step in &out.trace {
        println!("depth {:>2}: cdf distance {:.2e}", step.depth, step.cdf_distance);
    }
    println!("converged at depth {} = {}", out.depth, out.converged);

    let mu0 = c.marginal_at(0.0)?;
    let mu1 = c.marginal_at(1.0)?;
    println!("quantile plan      {:?}", quantile_coupling(&mu0, &mu1).matrix());
    println!("markov-quantile    {:?}", out.coupling.matrix());

    let coarse: TimePartition = "0,0.3,1".parse()?;
    println!("product on {:?}: {:?}", coarse.times(), quantile_product(&c, &coarse)?.matrix());
    Ok(())
}
