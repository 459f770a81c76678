//! Laws of processes observed on a finite time grid.
//!
//! A [`GridPathLaw`] is held either as a sparse joint law over index paths
//! (one atom index per grid time) or as a Markov chain (initial law plus one
//! kernel per consecutive pair of grid times). Joint laws are what the
//! Markovization operator acts on; chains are what the Markov-quantile and
//! displacement constructions produce.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupling::{ensure_same_measure, Coupling, Kernel};
use crate::curve::TimePartition;
use crate::markov_quantile::MqConfig;
use crate::measure::AtomicMeasure;
use crate::{Error, Result, MASS_TOL, MIN_MASS};

/// Largest number of index paths a joint law may hold.
pub const MAX_JOINT_PATHS: usize = 1_000_000;

/// How a continuous-time path is reconstructed between grid times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Paths follow the quantile level they carry, `t -> G(t, alpha)`.
    QuantileFollow,
    /// Paths are straight chords between consecutive grid times.
    Linear,
}

/// How a law was built; lets the action functional rebuild it on finer grids.
#[derive(Debug, Clone, PartialEq)]
pub enum LawOrigin {
    /// The quantile process made Markov at the given times.
    Quantile { markov_at: Vec<f64> },
    /// The Markov-quantile chain.
    MarkovQuantile(MqConfig),
    /// Quantile couplings at grid times with chords in between.
    Displacement,
    /// Hand-built.
    Custom,
}

/// Sparse joint law: mass per index path `(i_0, ..., i_n)`, where `i_k` is an
/// atom index into the support at grid time `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointRepr", into = "JointRepr")]
pub struct JointLaw {
    supports: Vec<AtomicMeasure>,
    paths: BTreeMap<Vec<usize>, f64>,
}

#[derive(Serialize, Deserialize)]
struct JointRepr {
    supports: Vec<AtomicMeasure>,
    paths: Vec<PathEntry>,
}

#[derive(Serialize, Deserialize)]
struct PathEntry {
    index: Vec<usize>,
    mass: f64,
}

impl TryFrom<JointRepr> for JointLaw {
    type Error = Error;

    fn try_from(r: JointRepr) -> Result<Self> {
        JointLaw::new(r.supports, r.paths.into_iter().map(|p| (p.index, p.mass)))
    }
}

impl From<JointLaw> for JointRepr {
    fn from(j: JointLaw) -> Self {
        JointRepr {
            supports: j.supports,
            paths: j
                .paths
                .into_iter()
                .map(|(index, mass)| PathEntry { index, mass })
                .collect(),
        }
    }
}

impl JointLaw {
    /// Validating constructor. Repeated index paths are summed; the
    /// single-time projections must reproduce `supports` within [`MASS_TOL`].
    pub fn new(
        supports: Vec<AtomicMeasure>,
        paths: impl IntoIterator<Item = (Vec<usize>, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, w) in paths {
            if idx.len() != supports.len() {
                return Err(Error::Precondition(format!(
                    "path {idx:?} has {} entries for {} times",
                    idx.len(),
                    supports.len()
                )));
            }
            if idx.iter().zip(&supports).any(|(i, s)| *i >= s.len()) {
                return Err(Error::Precondition(format!("path {idx:?} leaves the supports")));
            }
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Precondition(format!("negative or invalid mass {w}")));
            }
            if w > 0.0 {
                *map.entry(idx).or_insert(0.0) += w;
            }
        }
        let law = Self {
            supports,
            paths: map,
        };
        law.check_marginals(MASS_TOL)?;
        Ok(law)
    }

    fn from_parts(supports: Vec<AtomicMeasure>, paths: BTreeMap<Vec<usize>, f64>) -> Self {
        let law = Self { supports, paths };
        debug_assert!(law.check_marginals(1e-9).is_ok());
        law
    }

    /// From a dense tensor in row-major order over the supports.
    pub fn from_dense(supports: Vec<AtomicMeasure>, tensor: &[f64]) -> Result<Self> {
        let dims: Vec<usize> = supports.iter().map(AtomicMeasure::len).collect();
        if tensor.len() != dims.iter().product::<usize>() {
            return Err(Error::Precondition("tensor size does not match supports".into()));
        }
        let paths = tensor.iter().enumerate().map(|(flat, w)| {
            let mut idx = vec![0; dims.len()];
            let mut rest = flat;
            for d in (0..dims.len()).rev() {
                idx[d] = rest % dims[d];
                rest /= dims[d];
            }
            (idx, *w)
        });
        Self::new(supports, paths)
    }

    fn check_marginals(&self, tol: f64) -> Result<()> {
        let total: f64 = self.paths.values().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::Precondition(format!("joint law has total mass {total}")));
        }
        for (k, s) in self.supports.iter().enumerate() {
            let m = self.marginal_masses(k);
            if m.iter().zip(s.masses()).any(|(a, b)| (a - b).abs() > tol) {
                return Err(Error::MarginalMismatch(format!(
                    "projection at time index {k} differs from its support law"
                )));
            }
        }
        Ok(())
    }

    pub fn supports(&self) -> &[AtomicMeasure] {
        &self.supports
    }

    pub fn paths(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.paths
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn mass(&self, idx: &[usize]) -> f64 {
        self.paths.get(idx).copied().unwrap_or(0.0)
    }

    /// Paths as positions with their masses.
    pub fn position_paths(&self) -> impl Iterator<Item = (Vec<f64>, f64)> + '_ {
        self.paths.iter().map(move |(idx, w)| {
            let xs = idx
                .iter()
                .zip(&self.supports)
                .map(|(i, s)| s.positions()[*i])
                .collect();
            (xs, *w)
        })
    }

    fn marginal_masses(&self, k: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.supports[k].len()];
        for (idx, w) in &self.paths {
            m[idx[k]] += w;
        }
        m
    }

    /// Two-time projection onto grid indices `(a, b)`, `a < b`.
    pub fn project(&self, a: usize, b: usize) -> Result<Coupling> {
        if !(a < b && b < self.supports.len()) {
            return Err(Error::Precondition(format!("invalid projection ({a}, {b})")));
        }
        let nb = self.supports[b].len();
        let mut mass = vec![0.0; self.supports[a].len() * nb];
        for (idx, w) in &self.paths {
            mass[idx[a] * nb + idx[b]] += w;
        }
        Ok(Coupling::from_parts(
            self.supports[a].clone(),
            self.supports[b].clone(),
            mass,
        ))
    }

    /// Projection onto the consecutive block of grid indices `from..=to`.
    pub fn restrict(&self, from: usize, to: usize) -> Result<JointLaw> {
        if !(from < to && to < self.supports.len()) {
            return Err(Error::Precondition(format!("invalid restriction {from}..={to}")));
        }
        let mut paths = BTreeMap::new();
        for (idx, w) in &self.paths {
            *paths.entry(idx[from..=to].to_vec()).or_insert(0.0) += w;
        }
        Ok(Self::from_parts(self.supports[from..=to].to_vec(), paths))
    }

    /// Largest entry-wise difference with another joint law on the same
    /// supports.
    pub fn max_abs_diff(&self, other: &JointLaw) -> Result<f64> {
        if self.supports.len() != other.supports.len() {
            return Err(Error::MarginalMismatch("joint laws on different grids".into()));
        }
        for (a, b) in self.supports.iter().zip(&other.supports) {
            ensure_same_measure(a, b, "supports")?;
        }
        let mut worst: f64 = 0.0;
        for (idx, w) in &self.paths {
            worst = worst.max((w - other.mass(idx)).abs());
        }
        for (idx, w) in &other.paths {
            if !self.paths.contains_key(idx) {
                worst = worst.max(w.abs());
            }
        }
        Ok(worst)
    }

    /// Past and future made conditionally independent given the state at grid
    /// index `m`: the concatenation of the restrictions to `0..=m` and
    /// `m..=n`.
    pub fn markov_at_index(&self, m: usize) -> Result<JointLaw> {
        let n = self.supports.len();
        if !(m > 0 && m + 1 < n) {
            return Err(Error::Precondition(format!("index {m} is not interior")));
        }
        let mut prefixes: BTreeMap<usize, BTreeMap<Vec<usize>, f64>> = BTreeMap::new();
        let mut suffixes: BTreeMap<usize, BTreeMap<Vec<usize>, f64>> = BTreeMap::new();
        let mut state_mass = vec![0.0; self.supports[m].len()];
        for (idx, w) in &self.paths {
            let s = idx[m];
            state_mass[s] += w;
            *prefixes.entry(s).or_default().entry(idx[..m].to_vec()).or_insert(0.0) += w;
            *suffixes.entry(s).or_default().entry(idx[m + 1..].to_vec()).or_insert(0.0) += w;
        }
        let count: usize = prefixes
            .iter()
            .map(|(s, p)| p.len() * suffixes[s].len())
            .sum();
        if count > MAX_JOINT_PATHS {
            return Err(Error::Resource(format!(
                "markovization would create {count} paths (cap {MAX_JOINT_PATHS})"
            )));
        }
        let mut paths = BTreeMap::new();
        for (s, pre) in &prefixes {
            let total = state_mass[*s];
            for (a, wa) in pre {
                for (b, wb) in &suffixes[s] {
                    let w = wa * wb / total;
                    if w < MIN_MASS * MIN_MASS {
                        continue;
                    }
                    let mut idx = Vec::with_capacity(n);
                    idx.extend_from_slice(a);
                    idx.push(*s);
                    idx.extend_from_slice(b);
                    paths.insert(idx, w);
                }
            }
        }
        Ok(Self::from_parts(self.supports.clone(), paths))
    }
}

/// Initial law and one transition kernel per consecutive pair of grid times.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLaw {
    initial: AtomicMeasure,
    kernels: Vec<Kernel>,
}

impl ChainLaw {
    pub fn initial(&self) -> &AtomicMeasure {
        &self.initial
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LawForm {
    Joint(JointLaw),
    Chain(ChainLaw),
}

/// Law of a process on a finite time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPathLaw {
    grid: TimePartition,
    form: LawForm,
    interpolation: Interpolation,
    origin: LawOrigin,
}

impl GridPathLaw {
    pub fn from_joint(
        grid: TimePartition,
        joint: JointLaw,
        interpolation: Interpolation,
        origin: LawOrigin,
    ) -> Result<Self> {
        if joint.supports.len() != grid.len() {
            return Err(Error::Precondition(format!(
                "joint law has {} times, grid has {}",
                joint.supports.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            form: LawForm::Joint(joint),
            interpolation,
            origin,
        })
    }

    /// Chain from the couplings between consecutive grid times.
    pub fn from_couplings(
        grid: TimePartition,
        couplings: Vec<Coupling>,
        interpolation: Interpolation,
        origin: LawOrigin,
    ) -> Result<Self> {
        if couplings.len() + 1 != grid.len() {
            return Err(Error::Precondition(format!(
                "{} couplings for a grid of {} times",
                couplings.len(),
                grid.len()
            )));
        }
        for (k, w) in couplings.windows(2).enumerate() {
            ensure_same_measure(w[0].target(), w[1].source(), &format!("marginals at grid index {}", k + 1))?;
        }
        let initial = couplings[0].source().clone();
        let kernels = couplings.iter().map(Coupling::kernel_of).collect();
        Ok(Self {
            grid,
            form: LawForm::Chain(ChainLaw { initial, kernels }),
            interpolation,
            origin,
        })
    }

    pub fn grid(&self) -> &TimePartition {
        &self.grid
    }

    pub fn form(&self) -> &LawForm {
        &self.form
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn origin(&self) -> &LawOrigin {
        &self.origin
    }

    pub fn is_chain(&self) -> bool {
        matches!(self.form, LawForm::Chain(_))
    }

    /// Marginal at grid index `k`.
    pub fn marginal(&self, k: usize) -> &AtomicMeasure {
        match &self.form {
            LawForm::Joint(j) => &j.supports[k],
            LawForm::Chain(c) if k == 0 => &c.initial,
            LawForm::Chain(c) => c.kernels[k - 1].target(),
        }
    }

    pub fn marginals(&self) -> Vec<AtomicMeasure> {
        (0..self.grid.len()).map(|k| self.marginal(k).clone()).collect()
    }

    /// Coupling between grid indices `a < b`.
    pub fn pair_coupling(&self, a: usize, b: usize) -> Result<Coupling> {
        if !(a < b && b < self.grid.len()) {
            return Err(Error::Precondition(format!("invalid grid pair ({a}, {b})")));
        }
        match &self.form {
            LawForm::Joint(j) => j.project(a, b),
            LawForm::Chain(c) => {
                let mut k = c.kernels[a].clone();
                for next in &c.kernels[a + 1..b] {
                    k = k.compose(next)?;
                }
                Ok(k.with_source_law())
            }
        }
    }

    /// Coupling between two grid times.
    pub fn coupling_at(&self, s: f64, t: f64) -> Result<Coupling> {
        let a = self.grid_index(s)?;
        let b = self.grid_index(t)?;
        self.pair_coupling(a, b)
    }

    pub fn grid_index(&self, t: f64) -> Result<usize> {
        self.grid
            .index_of(t)
            .ok_or_else(|| Error::Precondition(format!("time {t} is not a grid time")))
    }

    pub fn consecutive_couplings(&self) -> Result<Vec<Coupling>> {
        (0..self.grid.len() - 1)
            .map(|k| self.pair_coupling(k, k + 1))
            .collect()
    }

    /// The joint law; chains are expanded by iterated concatenation.
    pub fn joint_of(&self) -> Result<JointLaw> {
        match &self.form {
            LawForm::Joint(j) => Ok(j.clone()),
            LawForm::Chain(c) => {
                let mut paths: Vec<(Vec<usize>, f64)> = c
                    .initial
                    .masses()
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (vec![i], *w))
                    .collect();
                for k in &c.kernels {
                    let mut next = Vec::new();
                    for (idx, w) in &paths {
                        let last = *idx.last().unwrap();
                        for (j, p) in k.row_probs(last).iter().enumerate() {
                            if *p < MIN_MASS {
                                continue;
                            }
                            let mut e = idx.clone();
                            e.push(j);
                            next.push((e, w * p));
                        }
                    }
                    if next.len() > MAX_JOINT_PATHS {
                        return Err(Error::Resource(format!(
                            "chain expands to more than {MAX_JOINT_PATHS} paths"
                        )));
                    }
                    paths = next;
                }
                Ok(JointLaw::from_parts(self.marginals(), paths.into_iter().collect()))
            }
        }
    }

    /// The law made Markov at the grid times `r` (all interior).
    pub fn make_markov_at(&self, r: &[f64]) -> Result<GridPathLaw> {
        let mut idx = Vec::with_capacity(r.len());
        for &t in r {
            match self.grid.index_of(t) {
                Some(i) if i > 0 && i + 1 < self.grid.len() => idx.push(i),
                _ => {
                    return Err(Error::Precondition(format!(
                        "markovization time {t} is not an interior grid time"
                    )))
                }
            }
        }
        let origin = match &self.origin {
            LawOrigin::Quantile { markov_at } => {
                let mut all: Vec<f64> = markov_at.iter().chain(r).copied().collect();
                all.sort_by(f64::total_cmp);
                all.dedup_by(|a, b| (*a - *b).abs() <= crate::POSITION_TOL);
                LawOrigin::Quantile { markov_at: all }
            }
            other => other.clone(),
        };
        if self.is_chain() || idx.is_empty() {
            // Chains are already Markov at every grid time.
            let mut out = self.clone();
            out.origin = origin;
            return Ok(out);
        }
        let mut joint = self.joint_of()?;
        for m in idx {
            joint = joint.markov_at_index(m)?;
        }
        Ok(GridPathLaw {
            grid: self.grid.clone(),
            form: LawForm::Joint(joint),
            interpolation: self.interpolation,
            origin,
        })
    }

    /// Markov on the grid: unchanged (within [`MASS_TOL`]) by Markovization at
    /// each interior grid time separately.
    pub fn is_markov(&self) -> Result<bool> {
        let joint = self.joint_of()?;
        for m in 1..self.grid.len().saturating_sub(1) {
            if joint.markov_at_index(m)?.max_abs_diff(&joint)? > MASS_TOL {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn with_origin(mut self, origin: LawOrigin) -> Self {
        self.origin = origin;
        self
    }
}
