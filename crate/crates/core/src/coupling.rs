//! Transport plans between atomic measures.
//!
//! A [`Coupling`] stores its joint masses densely, indexed by (source atom,
//! target atom). Kernels are stored row-wise over the source support only.

use serde::{Deserialize, Serialize};

use crate::measure::AtomicMeasure;
use crate::{Error, Result, MASS_TOL, MIN_MASS};

/// Joint law with prescribed marginals `source` and `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CouplingRepr", into = "CouplingRepr")]
pub struct Coupling {
    source: AtomicMeasure,
    target: AtomicMeasure,
    /// Row-major, `source.len() * target.len()`.
    mass: Vec<f64>,
}

/// JSON form: marginals plus the mass matrix as nested rows.
#[derive(Serialize, Deserialize)]
struct CouplingRepr {
    source: AtomicMeasure,
    target: AtomicMeasure,
    mass: Vec<Vec<f64>>,
}

impl TryFrom<CouplingRepr> for Coupling {
    type Error = Error;

    fn try_from(r: CouplingRepr) -> Result<Self> {
        Coupling::new(r.source, r.target, r.mass)
    }
}

impl From<Coupling> for CouplingRepr {
    fn from(c: Coupling) -> Self {
        let mass = c.matrix();
        CouplingRepr {
            source: c.source,
            target: c.target,
            mass,
        }
    }
}

impl Coupling {
    /// Validating constructor: entries nonnegative, row and column sums equal
    /// to the marginal masses within [`MASS_TOL`].
    pub fn new(source: AtomicMeasure, target: AtomicMeasure, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != source.len() || rows.iter().any(|r| r.len() != target.len()) {
            return Err(Error::InvalidCoupling(format!(
                "mass matrix must be {}x{}",
                source.len(),
                target.len()
            )));
        }
        let mass: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(m) = mass.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidCoupling(format!("entry {m} is not a nonnegative real")));
        }
        let c = Self {
            source,
            target,
            mass,
        };
        c.check_marginals(MASS_TOL)?;
        Ok(c)
    }

    /// Unchecked constructor for internal arithmetic.
    pub(crate) fn from_parts(source: AtomicMeasure, target: AtomicMeasure, mass: Vec<f64>) -> Self {
        debug_assert_eq!(mass.len(), source.len() * target.len());
        let c = Self {
            source,
            target,
            mass,
        };
        debug_assert!(c.check_marginals(1e-9).is_ok(), "{:?}", c.check_marginals(1e-9));
        c
    }

    fn check_marginals(&self, tol: f64) -> Result<()> {
        let m = self.target.len();
        for (i, &w) in self.source.masses().iter().enumerate() {
            let s: f64 = self.mass[i * m..(i + 1) * m].iter().sum();
            if (s - w).abs() > tol {
                return Err(Error::InvalidCoupling(format!(
                    "row {i} sums to {s}, source mass is {w}"
                )));
            }
        }
        for (j, &w) in self.target.masses().iter().enumerate() {
            let s: f64 = (0..self.source.len()).map(|i| self.mass[i * m + j]).sum();
            if (s - w).abs() > tol {
                return Err(Error::InvalidCoupling(format!(
                    "column {j} sums to {s}, target mass is {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn identity(mu: &AtomicMeasure) -> Self {
        let n = mu.len();
        let mut mass = vec![0.0; n * n];
        for (i, &w) in mu.masses().iter().enumerate() {
            mass[i * n + i] = w;
        }
        Self::from_parts(mu.clone(), mu.clone(), mass)
    }

    pub fn independent(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Self {
        let mass = mu
            .masses()
            .iter()
            .flat_map(|a| nu.masses().iter().map(move |b| a * b))
            .collect();
        Self::from_parts(mu.clone(), nu.clone(), mass)
    }

    pub fn source(&self) -> &AtomicMeasure {
        &self.source
    }

    pub fn target(&self) -> &AtomicMeasure {
        &self.target
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.target.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.target.len();
        &self.mass[i * m..(i + 1) * m]
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        (0..self.source.len()).map(|i| self.row(i).to_vec()).collect()
    }

    /// Nonzero entries as `(i, j, mass)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.target.len();
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(move |(k, w)| (k / m, k % m, *w))
    }

    /// Quadratic transport cost `sum m_ij (y_j - x_i)^2`.
    pub fn cost(&self) -> f64 {
        let (xs, ys) = (self.source.positions(), self.target.positions());
        self.entries()
            .map(|(i, j, w)| {
                let d = ys[j] - xs[i];
                w * d * d
            })
            .sum()
    }

    /// The coupling seen from the other side.
    pub fn transpose(&self) -> Coupling {
        let (n, m) = (self.source.len(), self.target.len());
        let mut mass = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                mass[j * n + i] = self.mass[i * m + j];
            }
        }
        Self::from_parts(self.target.clone(), self.source.clone(), mass)
    }

    /// Joint CDF on the product atom grid: entry `(i, j)` is
    /// `P(X <= x_i, Y <= y_j)`.
    pub fn joint_cdf(&self) -> Vec<f64> {
        let (n, m) = (self.source.len(), self.target.len());
        let mut cdf = vec![0.0; n * m];
        for i in 0..n {
            let mut row_acc = 0.0;
            for j in 0..m {
                row_acc += self.mass[i * m + j];
                cdf[i * m + j] = row_acc + if i > 0 { cdf[(i - 1) * m + j] } else { 0.0 };
            }
        }
        cdf
    }

    /// Sup-distance between joint CDFs, evaluated on the product of the merged
    /// atom sets of both axes.
    pub fn cdf_distance(&self, other: &Coupling) -> f64 {
        if self.source.positions() == other.source.positions()
            && self.target.positions() == other.target.positions()
        {
            return self
                .joint_cdf()
                .iter()
                .zip(other.joint_cdf())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        }
        let xs = merged(self.source.positions(), other.source.positions());
        let ys = merged(self.target.positions(), other.target.positions());
        let (ca, cb) = (self.joint_cdf(), other.joint_cdf());
        let mut worst: f64 = 0.0;
        for &x in &xs {
            for &y in &ys {
                let a = self.cdf_lookup(&ca, x, y);
                let b = other.cdf_lookup(&cb, x, y);
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    fn cdf_lookup(&self, cdf: &[f64], x: f64, y: f64) -> f64 {
        let i = self.source.positions().partition_point(|p| *p <= x);
        let j = self.target.positions().partition_point(|p| *p <= y);
        if i == 0 || j == 0 {
            0.0
        } else {
            cdf[(i - 1) * self.target.len() + (j - 1)]
        }
    }

    /// Equality of couplings: joint CDF sup-distance within [`MASS_TOL`].
    pub fn approx_eq(&self, other: &Coupling) -> bool {
        self.cdf_distance(other) <= MASS_TOL
    }

    /// Disintegration with respect to the source marginal.
    pub fn kernel_of(&self) -> Kernel {
        let m = self.target.len();
        let mut probs = self.mass.clone();
        for (i, &w) in self.source.masses().iter().enumerate() {
            for p in &mut probs[i * m..(i + 1) * m] {
                *p /= w;
            }
        }
        Kernel {
            source: self.source.clone(),
            target: self.target.clone(),
            probs,
        }
    }

    /// Product `P.Q`: the coupling whose kernel is `k_P.k_Q`.
    pub fn product(&self, other: &Coupling) -> Result<Coupling> {
        ensure_same_measure(&self.target, &other.source, "target of the left factor")?;
        Ok(self.kernel_of().compose(&other.kernel_of())?.with_source_law())
    }

    /// Concatenation `P12 o P23`: the three-time law gluing both plans along
    /// their common marginal.
    pub fn concat(&self, other: &Coupling) -> Result<TripleLaw> {
        ensure_same_measure(&self.target, &other.source, "target of the first plan")?;
        let k12 = self.kernel_of();
        let k23 = other.kernel_of();
        let (n1, n2, n3) = (self.source.len(), self.target.len(), other.target.len());
        let mut tensor = vec![0.0; n1 * n2 * n3];
        for (i, &w) in self.source.masses().iter().enumerate() {
            for j in 0..n2 {
                let a = w * k12.prob(i, j);
                if a == 0.0 {
                    continue;
                }
                for k in 0..n3 {
                    tensor[(i * n2 + j) * n3 + k] = a * k23.prob(j, k);
                }
            }
        }
        Ok(TripleLaw {
            supports: [self.source.clone(), self.target.clone(), other.target.clone()],
            tensor,
        })
    }

    /// True iff consecutive kernel rows are ordered for `<=_sto`.
    pub fn increasing_kernel(&self) -> bool {
        let k = self.kernel_of();
        let m = self.target.len();
        let cum = |i: usize| -> Vec<f64> {
            k.row_probs(i)
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        };
        let mut prev = cum(0);
        for i in 1..self.source.len() {
            let next = cum(i);
            if (0..m).any(|j| prev[j] < next[j] - MASS_TOL) {
                return false;
            }
            prev = next;
        }
        true
    }

    /// Lower orthant order `self <=_lo other`: the joint CDF of `self`
    /// dominates that of `other` on the whole product grid.
    pub fn lo_leq(&self, other: &Coupling) -> Result<bool> {
        ensure_same_measure(&self.source, &other.source, "source marginals")?;
        ensure_same_measure(&self.target, &other.target, "target marginals")?;
        let xs = merged(self.source.positions(), other.source.positions());
        let ys = merged(self.target.positions(), other.target.positions());
        let (ca, cb) = (self.joint_cdf(), other.joint_cdf());
        for &x in &xs {
            for &y in &ys {
                if self.cdf_lookup(&ca, x, y) < other.cdf_lookup(&cb, x, y) - MASS_TOL {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Conditional laws of the target given each source atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    source: AtomicMeasure,
    target: AtomicMeasure,
    /// Row-major; each row sums to one.
    probs: Vec<f64>,
}

impl Kernel {
    /// Builds a kernel from row-stochastic weights over `target`'s atoms.
    pub fn new(source: AtomicMeasure, target: AtomicMeasure, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != source.len() || rows.iter().any(|r| r.len() != target.len()) {
            return Err(Error::InvalidCoupling(format!(
                "kernel must be {}x{}",
                source.len(),
                target.len()
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            let s: f64 = r.iter().sum();
            if r.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidCoupling(format!("kernel row {i} is not a probability")));
            }
        }
        Ok(Self {
            source,
            target,
            probs: rows.into_iter().flatten().collect(),
        })
    }

    pub fn source(&self) -> &AtomicMeasure {
        &self.source
    }

    pub fn target(&self) -> &AtomicMeasure {
        &self.target
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.target.len() + j]
    }

    pub fn row_probs(&self, i: usize) -> &[f64] {
        let m = self.target.len();
        &self.probs[i * m..(i + 1) * m]
    }

    /// Row `i` as a measure (the conditional law given source atom `i`).
    pub fn row(&self, i: usize) -> AtomicMeasure {
        AtomicMeasure::from_weights(self.target.positions(), self.row_probs(i))
            .expect("kernel rows carry unit mass")
    }

    pub fn rows(&self) -> Vec<AtomicMeasure> {
        (0..self.source.len()).map(|i| self.row(i)).collect()
    }

    /// Composition `k.k'`: `(k.k')(x, .) = sum_y k(x, y) k'(y, .)`.
    pub fn compose(&self, other: &Kernel) -> Result<Kernel> {
        if self.target.positions() != other.source.positions() {
            return Err(Error::MarginalMismatch(
                "kernel target support differs from the next kernel's source".into(),
            ));
        }
        let (n, m, l) = (self.source.len(), self.target.len(), other.target.len());
        let mut probs = vec![0.0; n * l];
        for i in 0..n {
            let out = &mut probs[i * l..(i + 1) * l];
            for j in 0..m {
                let a = self.probs[i * m + j];
                if a < MIN_MASS {
                    continue;
                }
                for (o, b) in out.iter_mut().zip(other.row_probs(j)) {
                    *o += a * b;
                }
            }
        }
        Ok(Kernel {
            source: self.source.clone(),
            target: other.target.clone(),
            probs,
        })
    }

    /// The coupling `mu (id, k)` for the stored source law `mu`.
    pub fn with_source_law(&self) -> Coupling {
        let m = self.target.len();
        let mut mass = self.probs.clone();
        for (i, &w) in self.source.masses().iter().enumerate() {
            for p in &mut mass[i * m..(i + 1) * m] {
                *p *= w;
            }
        }
        // Composition drifts the target marginal by rounding; pin it to the
        // propagated masses.
        let mut target_mass = vec![0.0; m];
        for (k, w) in mass.iter().enumerate() {
            target_mass[k % m] += w;
        }
        let target = if self.target.masses().iter().zip(&target_mass).all(|(a, b)| (a - b).abs() <= 1e-9) {
            self.target.clone()
        } else {
            AtomicMeasure::from_weights(self.target.positions(), &target_mass)
                .expect("propagated law has unit mass")
        };
        Coupling::from_parts(self.source.clone(), target, mass)
    }
}

/// Three-time joint law, materialized as a dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleLaw {
    supports: [AtomicMeasure; 3],
    /// Index `(i * n2 + j) * n3 + k`.
    tensor: Vec<f64>,
}

impl TripleLaw {
    pub fn supports(&self) -> &[AtomicMeasure; 3] {
        &self.supports
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.supports[0].len(), self.supports[1].len(), self.supports[2].len()]
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let [_, n2, n3] = self.dims();
        self.tensor[(i * n2 + j) * n3 + k]
    }

    pub fn tensor(&self) -> &[f64] {
        &self.tensor
    }

    /// Two-time projection onto axes `(a, b)` with `a < b`.
    pub fn project(&self, a: usize, b: usize) -> Result<Coupling> {
        if !(a < b && b < 3) {
            return Err(Error::Precondition(format!("invalid projection axes ({a}, {b})")));
        }
        let dims = self.dims();
        let mut mass = vec![0.0; dims[a] * dims[b]];
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let idx = [i, j, k];
                    mass[idx[a] * dims[b] + idx[b]] += self.get(i, j, k);
                }
            }
        }
        Ok(Coupling::from_parts(
            self.supports[a].clone(),
            self.supports[b].clone(),
            mass,
        ))
    }
}

fn merged(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut xs: Vec<f64> = a.iter().chain(b).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

pub(crate) fn ensure_same_measure(a: &AtomicMeasure, b: &AtomicMeasure, what: &str) -> Result<()> {
    if a.len() == b.len()
        && a.positions().iter().zip(b.positions()).all(|(x, y)| (x - y).abs() <= crate::POSITION_TOL)
        && a.approx_eq(b)
    {
        Ok(())
    } else {
        Err(Error::MarginalMismatch(format!("{what} differ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::quantile_coupling;

    fn pair(x0: f64, x1: f64) -> AtomicMeasure {
        AtomicMeasure::new(vec![x0, x1], vec![0.5, 0.5]).unwrap()
    }

    fn anti_diagonal() -> Coupling {
        Coupling::new(pair(0.0, 1.0), pair(0.0, 1.0), vec![vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap()
    }

    #[test]
    fn constructor_validates_marginals() {
        let bad = Coupling::new(pair(0.0, 1.0), pair(0.0, 1.0), vec![vec![0.5, 0.0], vec![0.25, 0.25]]);
        assert!(matches!(bad, Err(Error::InvalidCoupling(_))));
        let neg = Coupling::new(pair(0.0, 1.0), pair(0.0, 1.0), vec![vec![0.6, -0.1], vec![-0.1, 0.6]]);
        assert!(neg.is_err());
    }

    #[test]
    fn kernel_examples() {
        let k = Coupling::identity(&pair(0.0, 1.0)).kernel_of();
        assert_eq!(k.rows(), vec![AtomicMeasure::dirac(0.0), AtomicMeasure::dirac(1.0)]);

        let k = Coupling::independent(&AtomicMeasure::dirac(0.0), &pair(-1.0, 1.0)).kernel_of();
        assert_eq!(k.row_probs(0), &[0.5, 0.5]);

        let nu = AtomicMeasure::new(vec![0.0, 1.0], vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let k = quantile_coupling(&pair(0.0, 1.0), &nu).kernel_of();
        assert!((k.prob(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((k.prob(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(k.row(1), AtomicMeasure::dirac(1.0));
    }

    #[test]
    fn product_examples() {
        let mu = pair(0.0, 1.0);
        let id = Coupling::identity(&mu);
        assert!(id.product(&id).unwrap().approx_eq(&id));

        let pm = pair(-0.5, 0.5);
        let d0 = AtomicMeasure::dirac(0.0);
        let funnel = quantile_coupling(&pm, &d0).product(&quantile_coupling(&d0, &pm)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((funnel.mass(i, j) - 0.25).abs() < 1e-15);
            }
        }

        let p = quantile_coupling(&mu, &pair(2.0, 5.0));
        assert!(p.product(&Coupling::identity(&pair(2.0, 5.0))).unwrap().approx_eq(&p));
        assert!(matches!(p.product(&id), Err(Error::MarginalMismatch(_))));
    }

    #[test]
    fn concat_examples() {
        let id = Coupling::identity(&pair(0.0, 1.0));
        let t = id.concat(&id).unwrap();
        assert_eq!(t.get(0, 0, 0), 0.5);
        assert_eq!(t.get(1, 1, 1), 0.5);
        assert_eq!(t.tensor().iter().filter(|w| **w > 0.0).count(), 2);

        let pm = pair(-0.5, 0.5);
        let d0 = AtomicMeasure::dirac(0.0);
        let t = quantile_coupling(&pm, &d0).concat(&quantile_coupling(&d0, &pm)).unwrap();
        assert_eq!(t.dims(), [2, 1, 2]);
        assert!(t.tensor().iter().all(|w| (w - 0.25).abs() < 1e-15));
        assert!(id.concat(&quantile_coupling(&pm, &d0)).is_err());
    }

    #[test]
    fn increasing_kernel_examples() {
        assert!(quantile_coupling(&pair(0.0, 1.0), &pair(3.0, 4.0)).increasing_kernel());
        assert!(Coupling::independent(&pair(0.0, 1.0), &pair(3.0, 4.0)).increasing_kernel());
        assert!(!anti_diagonal().increasing_kernel());
    }

    #[test]
    fn lo_order_examples() {
        let (mu, nu) = (pair(0.0, 1.0), pair(0.0, 1.0));
        let q = quantile_coupling(&mu, &nu);
        let ind = Coupling::independent(&mu, &nu);
        assert!(q.lo_leq(&q).unwrap());
        assert!(q.lo_leq(&ind).unwrap());
        assert!(!ind.lo_leq(&q).unwrap());
        assert!(ind.lo_leq(&anti_diagonal()).unwrap());
        let other = Coupling::identity(&pair(0.0, 2.0));
        assert!(matches!(q.lo_leq(&other), Err(Error::MarginalMismatch(_))));
    }

    #[test]
    fn json_matrix_round_trip() {
        let q = quantile_coupling(&pair(0.0, 1.0), &pair(2.0, 3.0));
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("\"mass\":[[0.5,0.0],[0.0,0.5]]"));
        let back: Coupling = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn cdf_distance_on_different_supports() {
        let a = Coupling::identity(&AtomicMeasure::dirac(0.0));
        let b = Coupling::identity(&AtomicMeasure::dirac(1.0));
        assert_eq!(a.cdf_distance(&b), 1.0);
        assert_eq!(a.cdf_distance(&a), 0.0);
    }
}
