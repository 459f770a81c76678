//! Gluing a three-time law at its middle time.

use mqdyn::verify::random_joint;
use mqdyn::{GridPathLaw, Interpolation, LawOrigin, TimePartition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mqdyn::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (joint, dims, _) = random_joint(&mut rng, [2, 3, 2])?;
    let grid: TimePartition = "0,0.5,1".parse()?;
    let law = GridPathLaw::from_joint(grid, joint, Interpolation::Linear, LawOrigin::Custom)?;
    let glued = law.make_markov_at(&[0.5])?;

    println!("atoms per time {dims:?}");
    println!("markov before: {}, after: {}", law.is_markov()?, glued.is_markov()?);
    let (before, after) = (law.joint_of()?, glued.joint_of()?);
    for (path, w) in after.paths() {
        println!("  {path:?}  {:.4} -> {w:.4}", before.mass(path));
    }
    // Two-time marginals are untouched.
    let d = law.pair_coupling(0, 1)?.cdf_distance(&glued.pair_coupling(0, 1)?)
        + law.pair_coupling(1, 2)?.cdf_distance(&glued.pair_coupling(1, 2)?);
    println!("pair couplings moved by {d:.1e}");
    Ok(())
}
