//! Optimal transport between two atomic measures on the line.

use mqdyn::measure::quantile_coupling;
use mqdyn::oracle::min_cost_over_permutations;
use mqdyn::AtomicMeasure;

fn main() -> mqdyn::Result<()> {
    let mu = AtomicMeasure::new(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3])?;
    let nu = AtomicMeasure::new(vec![-1.0, 2.0], vec![0.6, 0.4])?;

    let q = quantile_coupling(&mu, &nu);
    println!("northwest-corner plan:");
    for (i, row) in q.matrix().iter().enumerate() {
        println!("  x={:>4}: {:?}", mu.positions()[i], row);
    }
    println!("cost {:.6}, W2^2 {:.6}", q.cost(), mu.w2(&nu).powi(2));

    // Equal-mass measures can be checked against every permutation.
    let a = AtomicMeasure::uniform(&[0.0, 4.0, 1.0, 2.5])?;
    let b = AtomicMeasure::uniform(&[3.0, -1.0, 0.5, 2.0])?;
    let (best, perm) = min_cost_over_permutations(&a, &b)?;
    println!("brute force {best:.6} via {perm:?}, quantile plan {:.6}", quantile_coupling(&a, &b).cost());
    Ok(())
}
