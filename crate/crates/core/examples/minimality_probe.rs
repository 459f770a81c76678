//! Brute-force check that the Markov-quantile chain has the sto-smallest
//! conditional laws among all chains built from mesh couplings.

use mqdyn::oracle::{sto_min_probe_report, EnumeratedChainFamily};
use mqdyn::{MarginalCurve, MqConfig, TimePartition};

fn main() -> mqdyn::Result<()> {
    let c = MarginalCurve::translation(3);
    let grid: TimePartition = "0,0.5,1".parse()?;
    let fam = EnumeratedChainFamily::enumerate(&c, &grid, 3)?;
    println!("{} chains on {:?}", fam.len(), grid.times());
    for x in c.marginal_at(0.0)?.positions() {
        let rep = sto_min_probe_report(&c, &fam, 0.0, 1.0, *x, &MqConfig::default())?;
        println!(
            "  X_0 <= {x:>7.4}: minimal {}, strictly above in {} chains",
            rep.minimal,
            rep.strictly_above.len()
        );
    }
    Ok(())
}
