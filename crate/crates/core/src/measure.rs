//! Finitely supported probability measures on the real line.
//!
//! Everything one-dimensional here factors through quantile functions: the
//! 2-Wasserstein distance is the `L^2` distance between quantile functions and
//! the optimal plan pairs equal quantile levels. Both are computed by walking
//! the merged cumulative-mass breakpoints of the two measures.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, MASS_TOL, MIN_MASS, POSITION_TOL};

/// A probability measure `sum_i m_i delta_{x_i}` with strictly increasing
/// positions and positive masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct AtomicMeasure {
    positions: Vec<f64>,
    masses: Vec<f64>,
    /// `cumulative[i] = F(x_i)`.
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    positions: Vec<f64>,
    masses: Vec<f64>,
}

impl TryFrom<MeasureRepr> for AtomicMeasure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        AtomicMeasure::new(r.positions, r.masses)
    }
}

impl From<AtomicMeasure> for MeasureRepr {
    fn from(m: AtomicMeasure) -> Self {
        MeasureRepr {
            positions: m.positions,
            masses: m.masses,
        }
    }
}

impl AtomicMeasure {
    /// Builds a measure from unsorted atoms. Atoms at the same position are
    /// merged by summing their masses.
    pub fn new(positions: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if positions.len() != masses.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} positions but {} masses",
                positions.len(),
                masses.len()
            )));
        }
        if positions.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        if let Some(x) = positions.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite position {x}")));
        }
        if let Some(m) = masses.iter().find(|m| !m.is_finite() || **m < MIN_MASS) {
            return Err(Error::InvalidMeasure(format!(
                "mass {m} is below the minimum {MIN_MASS}"
            )));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("masses sum to {total}, not 1")));
        }
        Ok(Self::sorted_merged(positions, masses))
    }

    /// Builds a measure from nonnegative weights, dropping negligible weights
    /// and renormalizing. Used for conditional laws and kernel rows, whose
    /// masses carry rounding from division.
    pub fn from_weights(positions: &[f64], weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().filter(|w| **w >= MIN_MASS).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("weights have zero total mass".into()));
        }
        let (p, m): (Vec<f64>, Vec<f64>) = positions
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w >= MIN_MASS)
            .map(|(x, w)| (*x, *w / total))
            .unzip();
        Ok(Self::sorted_merged(p, m))
    }

    pub fn dirac(x: f64) -> Self {
        Self {
            positions: vec![x],
            masses: vec![1.0],
            cumulative: vec![1.0],
        }
    }

    /// Equal masses on the given points (duplicates merged).
    pub fn uniform(positions: &[f64]) -> Result<Self> {
        let n = positions.len();
        Self::new(positions.to_vec(), vec![1.0 / n as f64; n])
    }

    fn sorted_merged(positions: Vec<f64>, masses: Vec<f64>) -> Self {
        let mut atoms: Vec<(f64, f64)> = positions.into_iter().zip(masses).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pos: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut mass: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, m) in atoms {
            match pos.last() {
                Some(&last) if (x - last).abs() <= POSITION_TOL => {
                    *mass.last_mut().unwrap() += m;
                }
                _ => {
                    pos.push(x);
                    mass.push(m);
                }
            }
        }
        let cumulative = mass
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect();
        Self {
            positions: pos,
            masses: mass,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// `F(x_i)` for each atom.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.positions.iter().copied().zip(self.masses.iter().copied())
    }

    /// Index of the atom at `x`, if any.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let i = self.positions.partition_point(|p| *p < x - POSITION_TOL);
        (i < self.len() && (self.positions[i] - x).abs() <= POSITION_TOL).then_some(i)
    }

    /// Smallest `x` with `mu(]-inf, x]) >= alpha` and `mu([x, +inf[) >= 1 - alpha`.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("quantile level {alpha} not in (0,1)")));
        }
        // The second condition reads F(x_{i-1}) <= alpha, which holds for the
        // first index whose cumulative mass reaches alpha.
        let i = self.cumulative.partition_point(|c| *c < alpha);
        Ok(self.positions[i.min(self.len() - 1)])
    }

    /// Right-continuous cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        let i = self.positions.partition_point(|p| *p <= x);
        if i == 0 {
            0.0
        } else {
            self.cumulative[i - 1]
        }
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, m)| x * m).sum()
    }

    pub fn quantile_function(&self) -> QuantileFunction {
        QuantileFunction {
            breakpoints: self.cumulative.clone(),
            values: self.positions.clone(),
        }
    }

    /// Sup-distance between the CDFs of two measures. Both CDFs are step
    /// functions, so the sup is attained on the merged atom set.
    pub fn cdf_distance(&self, other: &AtomicMeasure) -> f64 {
        merged_positions(self, other)
            .into_iter()
            .map(|x| (self.cdf(x) - other.cdf(x)).abs())
            .fold(0.0, f64::max)
    }

    /// Equality as measures: CDF sup-distance within [`MASS_TOL`].
    pub fn approx_eq(&self, other: &AtomicMeasure) -> bool {
        self.cdf_distance(other) <= MASS_TOL
    }

    /// Stochastic order `self <=_sto other`: the CDF of `self` dominates the
    /// CDF of `other` everywhere.
    pub fn sto_leq(&self, other: &AtomicMeasure) -> bool {
        merged_positions(self, other)
            .into_iter()
            .all(|x| self.cdf(x) >= other.cdf(x) - MASS_TOL)
    }

    /// Exact 2-Wasserstein distance.
    pub fn w2(&self, other: &AtomicMeasure) -> f64 {
        quantile_pieces(self, other)
            .map(|(i, j, len)| {
                let d = self.positions[i] - other.positions[j];
                len * d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Pushforward by `x -> a x + b` with `a > 0`.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<AtomicMeasure> {
        if !(scale > 0.0) {
            return Err(Error::Domain(format!("affine scale {scale} must be positive")));
        }
        let pos = self.positions.iter().map(|x| scale * x + shift).collect();
        Ok(Self::sorted_merged(pos, self.masses.clone()))
    }
}

/// The left-continuous step function `alpha -> x_mu(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl QuantileFunction {
    pub fn eval(&self, alpha: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("quantile level {alpha} not in (0,1)")));
        }
        let i = self.breakpoints.partition_point(|c| *c < alpha);
        Ok(self.values[i.min(self.values.len() - 1)])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// The quantile coupling, the unique optimal plan between two measures on the
/// line.
pub fn quantile_coupling(mu: &AtomicMeasure, nu: &AtomicMeasure) -> crate::Coupling {
    let mut mass = vec![0.0; mu.len() * nu.len()];
    for (i, j, len) in quantile_pieces(mu, nu) {
        mass[i * nu.len() + j] += len;
    }
    crate::Coupling::from_parts(mu.clone(), nu.clone(), mass)
}

fn merged_positions(a: &AtomicMeasure, b: &AtomicMeasure) -> Vec<f64> {
    let mut xs: Vec<f64> = a.positions.iter().chain(&b.positions).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

/// Walks the merged partition of `(0, 1]` by the cumulative masses of both
/// measures, yielding `(i, j, len)` for every nonempty overlap between the
/// level interval of atom `i` of `a` and atom `j` of `b`.
fn quantile_pieces<'a>(
    a: &'a AtomicMeasure,
    b: &'a AtomicMeasure,
) -> impl Iterator<Item = (usize, usize, f64)> + 'a {
    // The last atom on each side closes at exactly 1 so that rounding in the
    // total masses never leaves a sliver uncoupled.
    fn hi(m: &AtomicMeasure, i: usize) -> f64 {
        if i + 1 == m.len() {
            1.0
        } else {
            m.cumulative[i]
        }
    }
    fn lo(m: &AtomicMeasure, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            m.cumulative[i - 1]
        }
    }
    let (mut i, mut j) = (0usize, 0usize);
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            let (ha, hb) = (hi(a, i), hi(b, j));
            let len = ha.min(hb) - lo(a, i).max(lo(b, j));
            let (ci, cj) = (i, j);
            if ha < hb {
                i += 1;
            } else if hb < ha {
                j += 1;
            } else {
                i += 1;
                j += 1;
            }
            if len >= MIN_MASS {
                return Some((ci, cj, len));
            }
        }
        None
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(x0: f64, x1: f64) -> AtomicMeasure {
        AtomicMeasure::new(vec![x0, x1], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn constructor_merges_and_rejects() {
        let m = AtomicMeasure::new(vec![1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(m.positions(), &[0.0, 1.0]);
        assert_eq!(m.masses(), &[0.5, 0.5]);
        assert!(AtomicMeasure::new(vec![], vec![]).is_err());
        assert!(AtomicMeasure::new(vec![0.0, 1.0], vec![1.0, 1e-16]).is_err());
        assert!(AtomicMeasure::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(AtomicMeasure::new(vec![0.0], vec![0.5, 0.5]).is_err());
        assert!(AtomicMeasure::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn json_constructor() {
        let m: AtomicMeasure =
            serde_json::from_str(r#"{"positions": [2.0, -1.0], "masses": [0.25, 0.75]}"#).unwrap();
        assert_eq!(m.positions(), &[-1.0, 2.0]);
        let bad = serde_json::from_str::<AtomicMeasure>(r#"{"positions": [0], "masses": [0.5]}"#);
        assert!(bad.is_err());
        let back: AtomicMeasure = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(AtomicMeasure::dirac(0.0).quantile(0.3).unwrap(), 0.0);
        let m = two(0.0, 1.0);
        assert_eq!(m.quantile(0.5).unwrap(), 0.0);
        assert_eq!(m.quantile(0.6).unwrap(), 1.0);
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
        assert!(m.quantile(f64::NAN).is_err());
    }

    /// Definitional scan: smallest atom meeting both quantile conditions.
    fn quantile_by_scan(m: &AtomicMeasure, alpha: f64) -> f64 {
        for &x in m.positions() {
            let left = m.cdf(x);
            let right: f64 = m.atoms().filter(|(y, _)| *y >= x).map(|(_, w)| w).sum();
            if left >= alpha && right >= 1.0 - alpha {
                return x;
            }
        }
        unreachable!()
    }

    #[test]
    fn quantile_matches_definitional_scan() {
        let m = AtomicMeasure::new(vec![-2.0, 0.0, 0.5, 3.0], vec![0.125, 0.375, 0.25, 0.25])
            .unwrap();
        for k in 1..64 {
            let alpha = k as f64 / 64.0;
            assert_eq!(m.quantile(alpha).unwrap(), quantile_by_scan(&m, alpha), "alpha {alpha}");
        }
        let q = m.quantile_function();
        assert_eq!(q.eval(0.5).unwrap(), 0.0);
        assert_eq!(q.eval(0.51).unwrap(), 0.5);
    }

    #[test]
    fn cdf_examples() {
        let d = AtomicMeasure::dirac(0.0);
        assert_eq!(d.cdf(-1.0), 0.0);
        assert_eq!(d.cdf(0.0), 1.0);
        assert_eq!(two(0.0, 1.0).cdf(0.5), 0.5);
    }

    #[test]
    fn sto_leq_examples() {
        let (d0, d1) = (AtomicMeasure::dirac(0.0), AtomicMeasure::dirac(1.0));
        assert!(d0.sto_leq(&d1));
        assert!(!d1.sto_leq(&d0));
        // CDFs at 0, 1, 2: (1/2, 1/2, 1) vs (0, 1/2, 1).
        assert!(two(0.0, 2.0).sto_leq(&two(1.0, 2.0)));
        assert!(!two(1.0, 2.0).sto_leq(&two(0.0, 2.0)));
    }

    #[test]
    fn w2_examples() {
        assert_eq!(AtomicMeasure::dirac(0.0).w2(&AtomicMeasure::dirac(1.0)), 1.0);
        let m = two(0.0, 1.0);
        assert_eq!(m.w2(&m), 0.0);
        assert!((m.w2(&two(2.0, 3.0)) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_coupling_examples() {
        let p = quantile_coupling(&AtomicMeasure::dirac(0.0), &AtomicMeasure::dirac(1.0));
        assert_eq!(p.mass(0, 0), 1.0);

        let p = quantile_coupling(&two(0.0, 1.0), &two(2.0, 3.0));
        assert_eq!(p.matrix(), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
        assert!((p.cost() - 4.0).abs() < 1e-15);

        let p = quantile_coupling(&AtomicMeasure::dirac(0.0), &two(-1.0, 1.0));
        assert_eq!(p.matrix(), vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn quantile_coupling_uneven_masses() {
        let mu = AtomicMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let nu = AtomicMeasure::new(vec![0.0, 1.0], vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let p = quantile_coupling(&mu, &nu);
        let m = p.matrix();
        assert!((m[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((m[0][1] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(m[1][0], 0.0);
        assert!((m[1][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_quantization_converges_weakly() {
        let mu = AtomicMeasure::new(vec![-1.0, 0.0, 2.0], vec![0.2, 0.3, 0.5]).unwrap();
        let max_mass = 0.5;
        for k in [4usize, 16, 64, 256] {
            let pts: Vec<f64> = (1..=k)
                .map(|i| mu.quantile((i as f64 - 0.5) / k as f64).unwrap())
                .collect();
            let q = AtomicMeasure::uniform(&pts).unwrap();
            assert!(q.cdf_distance(&mu) <= max_mass);
            assert!(q.cdf_distance(&mu) <= 1.0 / k as f64 + 1e-12);
        }
    }
}
