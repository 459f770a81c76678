//! Sampling paths of the quantile process made Markov at t = 1/2.

use mqdyn::markov_quantile::sample_paths;
use mqdyn::{MarginalCurve, TimePartition};

fn main() -> mqdyn::Result<()> {
    let c = MarginalCurve::split_merge(8);
    let r: TimePartition = "0,0.5,1".parse()?;
    let paths = sample_paths(&c, &r, 20_000, 8, 42)?;

    let flips = paths
        .iter()
        .filter(|p| (p.at(0.25).unwrap() > 0.0) != (p.at(0.75).unwrap() > 0.0))
        .count();
    println!("sign flips across t = 1/2: {:.4}", flips as f64 / paths.len() as f64);

    let p = &paths[0];
    for (t, x) in p.times.iter().zip(&p.positions) {
        println!("  t={t:.3}  x={x:+.4}");
    }
    Ok(())
}
