//! Brute-force ground truth at tiny scale.
//!
//! Nothing here is clever: permutations are enumerated, three-time
//! Markovization is evaluated entry by entry, and the minimality probe
//! searches a mesh of kernels exhaustively.

use crate::coupling::{ensure_same_measure, Coupling};
use crate::curve::{MarginalCurve, TimePartition};
use crate::markov_quantile::{mq_chain, MqConfig};
use crate::measure::AtomicMeasure;
use crate::process::{GridPathLaw, Interpolation, LawOrigin};
use crate::{Error, Result, MIN_MASS};

/// Largest `n` accepted by [`min_cost_over_permutations`].
pub const MAX_PERMUTATION_ATOMS: usize = 7;

/// Cap on the number of candidate kernels examined per transition.
pub const MAX_KERNEL_CANDIDATES: usize = 10_000_000;

/// Advances `p` to the next permutation in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|x| *x > p[i]).unwrap();
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}

/// Cheapest permutation transport between two `n`-atom uniform measures,
/// `min_sigma sum_i (y_sigma(i) - x_i)^2 / n`, by exhaustive search.
/// Ties keep the lexicographically first permutation.
pub fn min_cost_over_permutations(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<(f64, Vec<usize>)> {
    let n = mu.len();
    if nu.len() != n {
        return Err(Error::Precondition(format!("{n} atoms against {}", nu.len())));
    }
    if n > MAX_PERMUTATION_ATOMS {
        return Err(Error::Resource(format!(
            "{n} atoms exceeds the permutation oracle cap {MAX_PERMUTATION_ATOMS}"
        )));
    }
    let w = 1.0 / n as f64;
    if mu.masses().iter().chain(nu.masses()).any(|m| (m - w).abs() > 1e-12) {
        return Err(Error::Precondition("permutation oracle needs equal masses".into()));
    }
    let (x, y) = (mu.positions(), nu.positions());
    let mut p: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, p.clone());
    loop {
        let cost: f64 = p.iter().enumerate().map(|(i, j)| (y[*j] - x[i]).powi(2)).sum::<f64>() * w;
        if cost < best.0 {
            best = (cost, p.clone());
        }
        if !next_permutation(&mut p) {
            return Ok(best);
        }
    }
}

/// A three-time law made Markov at the middle time, straight from the
/// defining formula `R(i, j, k) = mu_2(j) k_21(j, i) k_23(j, k)`.
/// `tensor` is row-major with dimensions `dims`.
pub fn markov_at_middle_dense(dims: [usize; 3], tensor: &[f64]) -> Vec<f64> {
    let [a, b, c] = dims;
    let at = |i: usize, j: usize, k: usize| tensor[(i * b + j) * c + k];
    let mut out = vec![0.0; a * b * c];
    for j in 0..b {
        let mid: f64 = (0..a).flat_map(|i| (0..c).map(move |k| (i, k))).map(|(i, k)| at(i, j, k)).sum();
        if mid <= 0.0 {
            continue;
        }
        let back: Vec<f64> = (0..a).map(|i| (0..c).map(|k| at(i, j, k)).sum::<f64>() / mid).collect();
        let fwd: Vec<f64> = (0..c).map(|k| (0..a).map(|i| at(i, j, k)).sum::<f64>() / mid).collect();
        for i in 0..a {
            for k in 0..c {
                out[(i * b + j) * c + k] = mid * back[i] * fwd[k];
            }
        }
    }
    out
}

/// All compositions of `m` into `parts` nonnegative integers.
fn compositions(m: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![m]];
    }
    let mut out = Vec::new();
    for first in (0..=m).rev() {
        for mut rest in compositions(m - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every coupling of `(mu, nu)` whose kernel rows lie on the simplex mesh of
/// step `1/m` and whose kernel is increasing.
fn mesh_couplings(mu: &AtomicMeasure, nu: &AtomicMeasure, m: usize) -> Result<Vec<Coupling>> {
    let rows = compositions(m, nu.len());
    let total = (rows.len() as f64).powi(mu.len() as i32);
    if total > MAX_KERNEL_CANDIDATES as f64 {
        return Err(Error::Resource(format!(
            "{total} candidate kernels exceeds the cap {MAX_KERNEL_CANDIDATES}"
        )));
    }
    let mut out = Vec::new();
    let mut choice = vec![0usize; mu.len()];
    'outer: loop {
        let kernel: Vec<Vec<f64>> = choice
            .iter()
            .map(|r| rows[*r].iter().map(|q| *q as f64 / m as f64).collect())
            .collect();
        let mut col = vec![0.0; nu.len()];
        for (w, row) in mu.masses().iter().zip(&kernel) {
            for (c, p) in col.iter_mut().zip(row) {
                *c += w * p;
            }
        }
        if col.iter().zip(nu.masses()).all(|(a, b)| (a - b).abs() <= 1e-9) {
            let mass: Vec<Vec<f64>> = mu
                .masses()
                .iter()
                .zip(&kernel)
                .map(|(w, row)| row.iter().map(|p| w * p).collect())
                .collect();
            let p = Coupling::from_parts(mu.clone(), nu.clone(), mass.concat());
            if p.increasing_kernel() {
                out.push(p);
            }
        }
        for slot in choice.iter_mut().rev() {
            *slot += 1;
            if *slot < rows.len() {
                continue 'outer;
            }
            *slot = 0;
        }
        return Ok(out);
    }
}

/// Markov chains with the curve's marginals on a grid of at most three
/// times, one per combination of mesh kernels.
#[derive(Debug, Clone)]
pub struct EnumeratedChainFamily {
    grid: TimePartition,
    marginals: Vec<AtomicMeasure>,
    mesh: usize,
    chains: Vec<Vec<Coupling>>,
}

impl EnumeratedChainFamily {
    /// Every chain whose kernels have rows on the simplex mesh of step
    /// `1/mesh`, reproduce the marginals within `1e-9` and are increasing.
    pub fn enumerate(c: &MarginalCurve, grid: &TimePartition, mesh: usize) -> Result<Self> {
        let mut fam = Self::empty(c, grid, mesh)?;
        let per_step = fam
            .marginals
            .windows(2)
            .map(|w| mesh_couplings(&w[0], &w[1], mesh))
            .collect::<Result<Vec<_>>>()?;
        let mut chains: Vec<Vec<Coupling>> = vec![vec![]];
        for options in &per_step {
            chains = chains
                .into_iter()
                .flat_map(|prefix| {
                    options.iter().map(move |p| {
                        let mut next = prefix.clone();
                        next.push(p.clone());
                        next
                    })
                })
                .collect();
        }
        fam.chains = chains;
        Ok(fam)
    }

    /// A family with no chains yet.
    pub fn empty(c: &MarginalCurve, grid: &TimePartition, mesh: usize) -> Result<Self> {
        if grid.len() > 3 {
            return Err(Error::Precondition(format!(
                "enumerated families take at most 3 times, got {}",
                grid.len()
            )));
        }
        if mesh == 0 {
            return Err(Error::Domain("mesh must be at least 1".into()));
        }
        let marginals = grid
            .times()
            .iter()
            .map(|t| c.marginal_at(*t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            marginals,
            mesh,
            chains: vec![],
        })
    }

    /// Adds a chain given by its consecutive couplings; returns its index.
    pub fn push(&mut self, chain: Vec<Coupling>) -> Result<usize> {
        if chain.len() + 1 != self.grid.len() {
            return Err(Error::Precondition("chain length does not match the grid".into()));
        }
        for (k, p) in chain.iter().enumerate() {
            ensure_same_measure(p.source(), &self.marginals[k], "chain source")?;
            ensure_same_measure(p.target(), &self.marginals[k + 1], "chain target")?;
            if !p.increasing_kernel() {
                return Err(Error::Precondition(format!("kernel {k} is not increasing")));
            }
        }
        self.chains.push(chain);
        Ok(self.chains.len() - 1)
    }

    pub fn grid(&self) -> &TimePartition {
        &self.grid
    }

    pub fn mesh(&self) -> usize {
        self.mesh
    }

    pub fn len(&self) -> usize {
        self.chains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chains.is_empty()
    }

    pub fn chains(&self) -> &[Vec<Coupling>] {
        &self.chains
    }

    /// Chain `i` as a grid law.
    pub fn law(&self, i: usize) -> Result<GridPathLaw> {
        GridPathLaw::from_couplings(
            self.grid.clone(),
            self.chains[i].clone(),
            Interpolation::Linear,
            LawOrigin::Custom,
        )
    }
}

/// `Law(X_t | X_s <= x)` computed from the joint law of `l`.
pub fn conditional_law(l: &GridPathLaw, s: f64, t: f64, x: f64) -> Result<AtomicMeasure> {
    let a = l.grid_index(s)?;
    let b = l.grid_index(t)?;
    let joint = l.joint_of()?;
    let src = joint.supports()[a].positions();
    let target = &joint.supports()[b];
    let mut w = vec![0.0; target.len()];
    for (idx, m) in joint.paths() {
        if src[idx[a]] <= x {
            w[idx[b]] += m;
        }
    }
    if w.iter().sum::<f64>() < MIN_MASS {
        return Err(Error::Precondition(format!("event X_{s} <= {x} has no mass")));
    }
    AtomicMeasure::from_weights(target.positions(), &w)
}

/// Outcome of comparing a candidate's conditional law with a family.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// Candidate's conditional law is sto-below every member's.
    pub minimal: bool,
    /// Members whose conditional law is not sto-above the candidate's.
    pub violations: Vec<usize>,
    /// Members whose conditional law is sto-above and different.
    pub strictly_above: Vec<usize>,
}

/// Compares `Law(X_t | X_s <= x)` under `candidate` with every chain of the
/// family.
pub fn probe_candidate(
    candidate: &GridPathLaw,
    fam: &EnumeratedChainFamily,
    s: f64,
    t: f64,
    x: f64,
) -> Result<ProbeReport> {
    let reference = conditional_law(candidate, s, t, x)?;
    let mut violations = Vec::new();
    let mut strictly_above = Vec::new();
    for i in 0..fam.len() {
        let other = conditional_law(&fam.law(i)?, s, t, x)?;
        if !reference.sto_leq(&other) {
            violations.push(i);
        } else if !reference.approx_eq(&other) {
            strictly_above.push(i);
        }
    }
    Ok(ProbeReport {
        minimal: violations.is_empty(),
        violations,
        strictly_above,
    })
}

/// [`probe_candidate`] with the Markov-quantile chain on the family's grid.
pub fn sto_min_probe_report(
    c: &MarginalCurve,
    fam: &EnumeratedChainFamily,
    s: f64,
    t: f64,
    x: f64,
    cfg: &MqConfig,
) -> Result<ProbeReport> {
    probe_candidate(&mq_chain(c, fam.grid(), cfg)?, fam, s, t, x)
}

/// True iff the Markov-quantile conditional law `Law(X_t | X_s <= x)` is
/// sto-below that of every chain in the family.
pub fn sto_min_probe(
    c: &MarginalCurve,
    fam: &EnumeratedChainFamily,
    s: f64,
    t: f64,
    x: f64,
    cfg: &MqConfig,
) -> Result<bool> {
    Ok(sto_min_probe_report(c, fam, s, t, x, cfg)?.minimal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::quantile_coupling;

    #[test]
    fn permutations_in_order() {
        let mut p = vec![0, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[1], vec![0, 2, 1]);
        assert_eq!(seen[5], vec![2, 1, 0]);
    }

    #[test]
    fn permutation_oracle_examples() {
        let (c, p) = min_cost_over_permutations(&AtomicMeasure::dirac(0.5), &AtomicMeasure::dirac(2.0)).unwrap();
        assert_eq!((c, p), (2.25, vec![0]));
        let a = AtomicMeasure::uniform(&[0.0, 1.0]).unwrap();
        let b = AtomicMeasure::uniform(&[2.0, 3.0]).unwrap();
        assert_eq!(min_cost_over_permutations(&a, &b).unwrap(), (4.0, vec![0, 1]));
        let eight = AtomicMeasure::uniform(&(0..8).map(f64::from).collect::<Vec<_>>()).unwrap();
        assert!(matches!(min_cost_over_permutations(&eight, &eight), Err(Error::Resource(_))));
        let uneven = AtomicMeasure::new(vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        assert!(matches!(min_cost_over_permutations(&uneven, &a), Err(Error::Precondition(_))));
    }

    #[test]
    fn dense_markovization_of_v_paths() {
        // (-,0,-) and (+,0,+) with mass 1/2 each.
        let t = [0.5, 0.0, 0.0, 0.5];
        let out = markov_at_middle_dense([2, 1, 2], &t);
        assert_eq!(out, vec![0.25; 4]);
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(4, 2).len(), 5);
        assert_eq!(compositions(4, 3).len(), 15);
        assert!(compositions(3, 3).iter().all(|c| c.iter().sum::<usize>() == 3));
    }

    #[test]
    fn split_merge_family_is_forced() {
        let c = MarginalCurve::split_merge(4);
        let g: TimePartition = "0,0.5,1".parse().unwrap();
        let fam = EnumeratedChainFamily::enumerate(&c, &g, 4).unwrap();
        assert_eq!(fam.len(), 1);
        assert!(sto_min_probe(&c, &fam, 0.0, 1.0, -0.5, &MqConfig::default()).unwrap());
        assert!(matches!(
            sto_min_probe(&c, &fam, 0.0, 1.0, -0.6, &MqConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn planted_chain_is_strictly_above() {
        let c = MarginalCurve::translation(3);
        let g: TimePartition = "0,0.5,1".parse().unwrap();
        let mut fam = EnumeratedChainFamily::empty(&c, &g, 4).unwrap();
        let m0 = c.marginal_at(0.0).unwrap();
        let m1 = c.marginal_at(0.5).unwrap();
        let m2 = c.marginal_at(1.0).unwrap();
        let third = 1.0 / 3.0;
        let planted = Coupling::new(
            m0.clone(),
            m1.clone(),
            vec![
                vec![0.75 * third, 0.25 * third, 0.0],
                vec![0.25 * third, 0.5 * third, 0.25 * third],
                vec![0.0, 0.25 * third, 0.75 * third],
            ],
        )
        .unwrap();
        let i = fam.push(vec![planted, quantile_coupling(&m1, &m2)]).unwrap();
        let x = m0.positions()[0];
        let report = sto_min_probe_report(&c, &fam, 0.0, 1.0, x, &MqConfig::default()).unwrap();
        assert!(report.minimal);
        assert_eq!(report.strictly_above, vec![i]);
    }
}
