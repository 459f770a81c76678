//! The quantile process, its Markovizations, and the Markov-quantile
//! couplings obtained as stabilized limits of products of quantile couplings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{refinement_partition, MarginalCurve, TimePartition, MAX_DEPTH};
use crate::measure::{quantile_coupling, AtomicMeasure};
use crate::process::{GridPathLaw, Interpolation, JointLaw, LawOrigin};
use crate::{Coupling, Error, Result, POSITION_TOL};

/// Controls the limit detection of [`mq_coupling`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MqConfig {
    /// Stop once successive products are this close in joint-CDF sup-distance.
    pub cdf_tol: f64,
    /// Deepest dyadic refinement tried.
    pub max_depth: u32,
    /// Shallowest depth at which stabilization may be declared. Raise it when
    /// a curve has atom interactions at times the refinement does not hit
    /// early and that are not declared as special times.
    pub min_depth: u32,
}

impl Default for MqConfig {
    fn default() -> Self {
        Self {
            cdf_tol: 1e-9,
            max_depth: MAX_DEPTH,
            min_depth: 0,
        }
    }
}

impl MqConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cdf_tol > 0.0) {
            return Err(Error::Domain(format!("cdf_tol {} must be positive", self.cdf_tol)));
        }
        if self.max_depth == 0 || self.max_depth > MAX_DEPTH {
            return Err(Error::Domain(format!(
                "max_depth {} not in 1..={MAX_DEPTH}",
                self.max_depth
            )));
        }
        if self.min_depth > self.max_depth {
            return Err(Error::Domain(format!(
                "min_depth {} exceeds max_depth {}",
                self.min_depth, self.max_depth
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub depth: u32,
    pub cdf_distance: f64,
}

/// Result of the refinement loop, converged or not.
#[derive(Debug, Clone)]
pub struct MqOutcome {
    /// Product at the last evaluated depth.
    pub coupling: Coupling,
    /// Product at the depth before.
    pub previous: Coupling,
    pub trace: Vec<TraceStep>,
    pub depth: u32,
    pub converged: bool,
}

/// Marginal at `t` together with the atom index of every quantization level.
pub(crate) fn level_atoms(c: &MarginalCurve, t: f64) -> Result<(AtomicMeasure, Vec<usize>)> {
    let pos = c.level_positions(t)?;
    let mu = c.marginal_at(t)?;
    // Level positions are nondecreasing and atoms keep the first position of
    // each merged run, so a single walk recovers the assignment.
    let mut idx = Vec::with_capacity(pos.len());
    let mut i = 0;
    for x in &pos {
        if (x - mu.positions()[i]).abs() > POSITION_TOL {
            i += 1;
        }
        idx.push(i);
    }
    debug_assert_eq!(i + 1, mu.len());
    Ok((mu, idx))
}

/// Joint law of the quantile process on `grid`: level `(k + 1/2)/K` carries
/// mass `1/K` along `t -> G(t, level)`.
pub fn quantile_law(c: &MarginalCurve, grid: &TimePartition) -> Result<GridPathLaw> {
    let k = c.levels();
    let mut supports = Vec::with_capacity(grid.len());
    let mut per_time = Vec::with_capacity(grid.len());
    for t in grid.times() {
        let (mu, idx) = level_atoms(c, *t)?;
        supports.push(mu);
        per_time.push(idx);
    }
    let w = 1.0 / k as f64;
    let paths = (0..k).map(|level| (per_time.iter().map(|idx| idx[level]).collect(), w));
    GridPathLaw::from_joint(
        grid.clone(),
        JointLaw::new(supports, paths)?,
        Interpolation::QuantileFollow,
        LawOrigin::Quantile { markov_at: vec![] },
    )
}

/// The quantile law on `grid` made Markov at the interior times of `r`.
pub fn q_markovized(c: &MarginalCurve, r: &TimePartition, grid: &TimePartition) -> Result<GridPathLaw> {
    quantile_law(c, grid)?.make_markov_at(r.interior())
}

/// Product of the quantile couplings between consecutive times of `p`.
pub fn quantile_product(c: &MarginalCurve, p: &TimePartition) -> Result<Coupling> {
    let marginals = p
        .times()
        .iter()
        .map(|t| c.marginal_at(*t))
        .collect::<Result<Vec<_>>>()?;
    let mut k = quantile_coupling(&marginals[0], &marginals[1]).kernel_of();
    for w in marginals[1..].windows(2) {
        k = k.compose(&quantile_coupling(&w[0], &w[1]).kernel_of())?;
    }
    Ok(k.with_source_law())
}

/// Refinement loop behind [`mq_coupling`]; reports instead of failing when
/// the products do not stabilize.
pub fn mq_coupling_traced(c: &MarginalCurve, s: f64, t: f64, cfg: &MqConfig) -> Result<MqOutcome> {
    cfg.validate()?;
    if !(0.0 <= s && s < t && t <= 1.0) {
        return Err(Error::Domain(format!("need 0 <= s < t <= 1, got s={s}, t={t}")));
    }
    let base = cfg.min_depth.saturating_sub(1);
    let mut prev = quantile_product(c, &refinement_partition(c, s, t, base)?)?;
    let mut trace = Vec::new();
    for depth in base + 1..=cfg.max_depth {
        let cur = quantile_product(c, &refinement_partition(c, s, t, depth)?)?;
        let d = cur.cdf_distance(&prev);
        trace.push(TraceStep {
            depth,
            cdf_distance: d,
        });
        let done = d < cfg.cdf_tol && depth >= cfg.min_depth;
        if done || depth == cfg.max_depth {
            return Ok(MqOutcome {
                coupling: cur,
                previous: prev,
                trace,
                depth,
                converged: done,
            });
        }
        prev = cur;
    }
    unreachable!("max_depth >= 1 is validated")
}

/// Markov-quantile coupling of `(mu_s, mu_t)`: the first product of quantile
/// couplings along the nested refinements of `[s, t]` that is within
/// `cfg.cdf_tol` of its predecessor.
pub fn mq_coupling(c: &MarginalCurve, s: f64, t: f64, cfg: &MqConfig) -> Result<Coupling> {
    let out = mq_coupling_traced(c, s, t, cfg)?;
    if out.converged {
        Ok(out.coupling)
    } else {
        Err(Error::MqNotConverged {
            depth: out.depth,
            distance: out.trace.last().map_or(f64::NAN, |s| s.cdf_distance),
            previous: Box::new(out.previous),
            last: Box::new(out.coupling),
        })
    }
}

/// Chain on `grid` whose transitions are the Markov-quantile couplings.
pub fn mq_chain(c: &MarginalCurve, grid: &TimePartition, cfg: &MqConfig) -> Result<GridPathLaw> {
    let couplings = grid
        .times()
        .windows(2)
        .map(|w| mq_coupling(c, w[0], w[1], cfg))
        .collect::<Result<Vec<_>>>()?;
    GridPathLaw::from_couplings(
        grid.clone(),
        couplings,
        Interpolation::QuantileFollow,
        LawOrigin::MarkovQuantile(*cfg),
    )
}

/// One sampled path, recorded on the sampling mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
}

impl PathSample {
    /// Position at a mesh time.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= POSITION_TOL)
            .map(|i| self.positions[i])
    }
}

struct Sampler {
    mesh: Vec<f64>,
    /// Level positions at each mesh time.
    positions: Vec<Vec<f64>>,
    /// At resampling times, the level range `[lo, hi)` of the atom holding
    /// each level.
    ranges: Vec<Option<Vec<(usize, usize)>>>,
    levels: usize,
}

impl Sampler {
    fn new(c: &MarginalCurve, r: &TimePartition, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        let (a, b) = (r.start(), r.end());
        let uniform = (0..=n_steps)
            .map(|i| a + (b - a) * i as f64 / n_steps as f64)
            .collect();
        let mesh = TimePartition::new(uniform)?.with_times(r.interior());
        let mut positions = Vec::with_capacity(mesh.len());
        let mut ranges = Vec::with_capacity(mesh.len());
        for (i, t) in mesh.times().iter().enumerate() {
            positions.push(c.level_positions(*t)?);
            let interior = i > 0 && i + 1 < mesh.len();
            if interior && r.index_of(*t).is_some() {
                let (_, idx) = level_atoms(c, *t)?;
                let mut out = vec![(0, 0); idx.len()];
                let mut lo = 0;
                for k in 1..=idx.len() {
                    if k == idx.len() || idx[k] != idx[lo] {
                        out[lo..k].fill((lo, k));
                        lo = k;
                    }
                }
                ranges.push(Some(out));
            } else {
                ranges.push(None);
            }
        }
        Ok(Self {
            mesh: mesh.times().to_vec(),
            positions,
            ranges,
            levels: c.levels(),
        })
    }

    fn level_of(&self, u: f64, lo: usize, hi: usize) -> usize {
        let k = (u * self.levels as f64).ceil() as usize;
        k.saturating_sub(1).clamp(lo, hi - 1)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> PathSample {
        // 1 - [0, 1) is (0, 1]: levels are indexed by right endpoints.
        let mut level = self.level_of(1.0 - rng.gen::<f64>(), 0, self.levels);
        let mut xs = Vec::with_capacity(self.mesh.len());
        for (pos, range) in self.positions.iter().zip(&self.ranges) {
            xs.push(pos[level]);
            if let Some(r) = range {
                let (lo, hi) = r[level];
                if hi - lo > 1 {
                    let k = self.levels as f64;
                    let u = lo as f64 / k + (hi - lo) as f64 / k * (1.0 - rng.gen::<f64>());
                    level = self.level_of(u, lo, hi);
                }
            }
        }
        PathSample {
            times: self.mesh.clone(),
            positions: xs,
        }
    }
}

/// One path of the quantile process made Markov at the interior times of
/// `r`, recorded on `n_steps` uniform steps of `[r.start, r.end]` plus the
/// times of `r`.
pub fn sample_path<R: Rng + ?Sized>(
    c: &MarginalCurve,
    r: &TimePartition,
    n_steps: usize,
    rng: &mut R,
) -> Result<PathSample> {
    Ok(Sampler::new(c, r, n_steps)?.draw(rng))
}

/// `n_paths` paths from a ChaCha8 stream seeded with `seed`.
pub fn sample_paths(
    c: &MarginalCurve,
    r: &TimePartition,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<PathSample>> {
    let sampler = Sampler::new(c, r, n_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_paths).map(|_| sampler.draw(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(s: &str) -> TimePartition {
        s.parse().unwrap()
    }

    fn quarter_matrix(c: &Coupling) -> bool {
        c.matrix().iter().flatten().all(|w| (w - 0.25).abs() < 1e-9)
    }

    #[test]
    fn quantile_law_examples() {
        let sm = MarginalCurve::split_merge(8);
        let q = quantile_law(&sm, &grid("0,0.5,1")).unwrap();
        let j = q.joint_of().unwrap();
        assert_eq!(j.num_paths(), 2);
        let paths: Vec<_> = j.position_paths().collect();
        assert_eq!(paths[0], (vec![-0.5, 0.0, -0.5], 0.5));
        assert_eq!(paths[1], (vec![0.5, 0.0, 0.5], 0.5));
        assert!(!q.is_markov().unwrap());

        let tr = MarginalCurve::translation(4);
        let q = quantile_law(&tr, &grid("0,0.5,1")).unwrap();
        for (xs, w) in q.joint_of().unwrap().position_paths() {
            assert!((w - 0.25).abs() < 1e-15);
            assert!((xs[1] - xs[0] - 0.5).abs() < 1e-12 && (xs[2] - xs[1] - 0.5).abs() < 1e-12);
        }

        let q = quantile_law(&MarginalCurve::constant(5), &grid("0,0.3,1")).unwrap();
        for (xs, _) in q.joint_of().unwrap().position_paths() {
            assert!(xs.iter().all(|x| *x == xs[0]));
        }
    }

    #[test]
    fn q_markovized_examples() {
        let sm = MarginalCurve::split_merge(8);
        let g = grid("0,0.5,1");
        let l = q_markovized(&sm, &g, &g).unwrap();
        let j = l.joint_of().unwrap();
        assert_eq!(j.num_paths(), 4);
        assert!(j.paths().values().all(|w| (w - 0.25).abs() < 1e-15));
        assert_eq!(l.origin(), &LawOrigin::Quantile { markov_at: vec![0.5] });

        let two = q_markovized(&sm, &grid("0,1"), &grid("0,1")).unwrap();
        let c = two.pair_coupling(0, 1).unwrap();
        assert!(c.approx_eq(&quantile_coupling(c.source(), c.target())));

        let tr = MarginalCurve::translation(6);
        let g = grid("0,0.25,0.6,1");
        let a = q_markovized(&tr, &grid("0,0.25,0.6,1"), &g).unwrap();
        let b = quantile_law(&tr, &g).unwrap();
        assert!(a.joint_of().unwrap().max_abs_diff(&b.joint_of().unwrap()).unwrap() <= 1e-15);
    }

    #[test]
    fn mq_coupling_examples() {
        let cfg = MqConfig::default();
        let sm = MarginalCurve::split_merge(8);
        assert!(quarter_matrix(&mq_coupling(&sm, 0.0, 1.0, &cfg).unwrap()));

        let c = MarginalCurve::constant(5);
        let m = mq_coupling(&c, 0.0, 1.0, &cfg).unwrap();
        assert!(m.approx_eq(&Coupling::identity(m.source())));

        let tr = MarginalCurve::translation(7);
        let m = mq_coupling(&tr, 0.1, 0.8, &cfg).unwrap();
        let q = quantile_coupling(m.source(), m.target());
        assert!(m.cdf_distance(&q) < 1e-12);
        assert!(m.increasing_kernel());
    }

    #[test]
    fn mq_config_validation() {
        let c = MarginalCurve::constant(2);
        for cfg in [
            MqConfig { cdf_tol: 0.0, ..Default::default() },
            MqConfig { max_depth: 17, ..Default::default() },
            MqConfig { max_depth: 0, ..Default::default() },
            MqConfig { min_depth: 5, max_depth: 4, ..Default::default() },
        ] {
            assert!(matches!(mq_coupling(&c, 0.0, 1.0, &cfg), Err(Error::Domain(_))));
        }
        assert!(mq_coupling(&c, 0.5, 0.5, &MqConfig::default()).is_err());
    }

    #[test]
    fn mq_chain_examples() {
        let cfg = MqConfig::default();
        let sm = MarginalCurve::split_merge(4);
        let l = mq_chain(&sm, &grid("0,0.5,1"), &cfg).unwrap();
        assert!(l.is_markov().unwrap());
        let cs = l.consecutive_couplings().unwrap();
        assert_eq!(cs[0].target().len(), 1);
        assert_eq!(cs[1].matrix(), vec![vec![0.5, 0.5]]);

        let c = MarginalCurve::constant(3);
        let l = mq_chain(&c, &grid("0,0.2,1"), &cfg).unwrap();
        for p in l.consecutive_couplings().unwrap() {
            assert!(p.approx_eq(&Coupling::identity(p.source())));
        }
    }

    #[test]
    fn merge_away_from_dyadic_times_needs_depth() {
        // Two atoms that touch on [0.3, 0.31] and separate again.
        let c = MarginalCurve::grid(
            vec![0.0, 0.3, 0.31, 1.0],
            vec![0.5, 1.0],
            vec![vec![-1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![-1.0, 1.0]],
            vec![],
            64,
        )
        .unwrap();
        let naive = mq_coupling(&c, 0.0, 1.0, &MqConfig::default()).unwrap();
        assert!(naive.cdf_distance(&quantile_coupling(naive.source(), naive.target())) < 1e-12);
        let deep = MqConfig { min_depth: 10, ..Default::default() };
        assert!(quarter_matrix(&mq_coupling(&c, 0.0, 1.0, &deep).unwrap()));
    }

    #[test]
    fn non_convergence_carries_iterates() {
        let c = MarginalCurve::grid(
            vec![0.0, 0.3, 0.31, 1.0],
            vec![0.5, 1.0],
            vec![vec![-1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0], vec![-1.0, 1.0]],
            vec![],
            64,
        )
        .unwrap();
        let cfg = MqConfig { max_depth: 7, min_depth: 7, ..Default::default() };
        match mq_coupling(&c, 0.0, 1.0, &cfg) {
            Err(Error::MqNotConverged { depth, distance, .. }) => {
                assert_eq!(depth, 7);
                assert!(distance > 0.1);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn sampler_examples() {
        let sm = MarginalCurve::split_merge(16);
        let flips = |r: &str| {
            let paths = sample_paths(&sm, &grid(r), 4000, 8, 7).unwrap();
            let n = paths
                .iter()
                .filter(|p| p.at(0.0).unwrap().signum() != p.at(1.0).unwrap().signum())
                .count();
            n as f64 / paths.len() as f64
        };
        assert_eq!(flips("0,1"), 0.0);
        let p = flips("0,0.5,1");
        assert!((p - 0.5).abs() < 3.0 * (0.25f64 / 4000.0).sqrt(), "{p}");

        let c = MarginalCurve::constant(4);
        for p in sample_paths(&c, &grid("0,0.5,1"), 20, 4, 1).unwrap() {
            assert!(p.positions.iter().all(|x| *x == p.positions[0]));
        }
        assert_eq!(
            sample_paths(&sm, &grid("0,0.5,1"), 50, 4, 3).unwrap(),
            sample_paths(&sm, &grid("0,0.5,1"), 50, 4, 3).unwrap()
        );
    }
}
