//! Action of path laws, displacement-interpolating laws, velocity fields and
//! the weak continuity equation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curve::{EnergyReport, MarginalCurve, TimePartition, MAX_DEPTH};
use crate::markov_quantile::{level_atoms, mq_chain, q_markovized};
use crate::measure::{quantile_coupling, AtomicMeasure};
use crate::process::{GridPathLaw, Interpolation, LawOrigin};
use crate::{Error, Result, POSITION_TOL};

/// Expected chord energy of the law on its own grid:
/// `sum_k E[(X_{k+1} - X_k)^2] / (r_{k+1} - r_k)`.
pub fn action_chord(l: &GridPathLaw) -> Result<f64> {
    let times = l.grid().times();
    let mut total = 0.0;
    for (k, p) in l.consecutive_couplings()?.iter().enumerate() {
        total += p.cost() / (times[k + 1] - times[k]);
    }
    Ok(total)
}

/// Action of `l`, a law with marginals `c`, as a report.
///
/// Linear laws are exact on their grid. Quantile-following laws are rebuilt
/// on dyadic refinements of their grid plus the curve's special times (by the
/// recipe recorded in their origin) until two successive chord actions differ
/// by less than `tol`.
pub fn action_report(c: &MarginalCurve, l: &GridPathLaw, tol: f64) -> Result<EnergyReport> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    if l.interpolation() == Interpolation::Linear {
        return Ok(EnergyReport {
            value: action_chord(l)?,
            depth: 0,
            converged: true,
        });
    }
    let rebuild = |depth: u32| -> Result<GridPathLaw> {
        let g = l.grid().refined(depth)?.with_times(c.special_times());
        match l.origin() {
            LawOrigin::Quantile { markov_at } => {
                let mut r = vec![g.start()];
                r.extend_from_slice(markov_at);
                r.push(g.end());
                q_markovized(c, &TimePartition::new(r)?, &g)
            }
            LawOrigin::MarkovQuantile(cfg) => mq_chain(c, &g, cfg),
            _ => Err(Error::Precondition(
                "quantile-following law has no recipe for finer grids".into(),
            )),
        }
    };
    let mut prev = action_chord(&rebuild(0)?)?;
    for depth in 1..=MAX_DEPTH {
        let value = action_chord(&rebuild(depth)?)?;
        if (value - prev).abs() < tol {
            return Ok(EnergyReport {
                value,
                depth,
                converged: true,
            });
        }
        prev = value;
    }
    Ok(EnergyReport {
        value: prev,
        depth: MAX_DEPTH,
        converged: false,
    })
}

/// Action of `l`; [`Error::Diverged`] when the refinements do not settle.
pub fn action(c: &MarginalCurve, l: &GridPathLaw, tol: f64) -> Result<f64> {
    let r = action_report(c, l, tol)?;
    if r.converged {
        Ok(r.value)
    } else {
        Err(Error::Diverged {
            what: "action",
            depth: r.depth,
            last: r.value,
        })
    }
}

/// Quantile couplings at the times of `r`, straight chords in between.
pub fn disp_construct(c: &MarginalCurve, r: &TimePartition) -> Result<GridPathLaw> {
    let marginals = r
        .times()
        .iter()
        .map(|t| c.marginal_at(*t))
        .collect::<Result<Vec<_>>>()?;
    let couplings = marginals
        .windows(2)
        .map(|w| quantile_coupling(&w[0], &w[1]))
        .collect();
    GridPathLaw::from_couplings(r.clone(), couplings, Interpolation::Linear, LawOrigin::Displacement)
}

/// Grid interval `[r_k, r_{k+1})` holding `t`.
fn interval_of(grid: &TimePartition, t: f64) -> Result<usize> {
    if let Some(i) = grid.index_of(t) {
        return if i + 1 < grid.len() {
            Ok(i)
        } else {
            Err(Error::Domain(format!("no grid interval starts at {t}")))
        };
    }
    if !(t > grid.start() && t < grid.end()) {
        return Err(Error::Domain(format!("time {t} outside the grid")));
    }
    Ok(grid.times().partition_point(|s| *s <= t) - 1)
}

/// Barycentric projection of the law's velocity at time `t`: for every atom
/// `x` of the law's position at `t`, the mean path slope given `X_t = x`.
///
/// Path slopes are chords of grid intervals (right slope at grid times).
/// Linear laws accept any `t` in `[start, end)`; quantile-following laws only
/// grid times, where the chord to the next grid time stands in for the
/// derivative.
pub fn barycentric_velocity(l: &GridPathLaw, t: f64) -> Result<Vec<(f64, f64)>> {
    let k = interval_of(l.grid(), t)?;
    let on_grid = l.grid().index_of(t).is_some();
    if l.interpolation() == Interpolation::QuantileFollow && !on_grid {
        return Err(Error::Precondition(
            "quantile-following laws are evaluated at grid times only".into(),
        ));
    }
    let (r0, r1) = (l.grid().times()[k], l.grid().times()[k + 1]);
    let lambda = if on_grid { 0.0 } else { (t - r0) / (r1 - r0) };
    let p = l.pair_coupling(k, k + 1)?;
    let mut rows: Vec<(f64, f64, f64)> = p
        .entries()
        .map(|(i, j, w)| {
            let x = p.source().positions()[i];
            let y = p.target().positions()[j];
            (x + lambda * (y - x), (y - x) / (r1 - r0), w)
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for (x, slope, w) in rows {
        match out.last_mut() {
            Some(last) if (x - last.0).abs() <= POSITION_TOL => {
                last.1 += w * slope;
                last.2 += w;
            }
            _ => out.push((x, w * slope, w)),
        }
    }
    Ok(out.into_iter().map(|(x, m, w)| (x, m / w)).collect())
}

#[derive(Debug, Clone)]
enum FieldKind {
    FiniteDifference { curve: MarginalCurve, dt: f64 },
    Constant(f64),
}

/// A velocity field `v(t, x)` along a curve.
#[derive(Debug, Clone)]
pub struct VelocityField {
    kind: FieldKind,
}

/// The minimal field of the curve: difference quotients of the quantile
/// surface at the level(s) of each atom, central with half-width `dt` and
/// one-sided near the ends of `[0, 1]`.
pub fn velocity_field(c: &MarginalCurve, dt: f64) -> Result<VelocityField> {
    if !(dt > 0.0 && dt < 0.5) {
        return Err(Error::Domain(format!("dt {dt} not in (0, 0.5)")));
    }
    Ok(VelocityField {
        kind: FieldKind::FiniteDifference {
            curve: c.clone(),
            dt,
        },
    })
}

impl VelocityField {
    /// The same velocity everywhere; used as a control.
    pub fn constant(v: f64) -> Self {
        Self {
            kind: FieldKind::Constant(v),
        }
    }

    /// Velocities of the atoms of `mu_t` (in atom order) with the marginal.
    ///
    /// An atom holding several levels gets the mean of their velocities.
    fn on_marginal(&self, t: f64) -> Result<Option<(AtomicMeasure, Vec<f64>)>> {
        let FieldKind::FiniteDifference { curve, dt } = &self.kind else {
            return Ok(None);
        };
        let (mu, idx) = level_atoms(curve, t)?;
        let (lo, hi) = ((t - dt).max(0.0), (t + dt).min(1.0));
        let a = curve.level_positions(lo)?;
        let b = curve.level_positions(hi)?;
        let mut sum = vec![0.0; mu.len()];
        let mut count = vec![0usize; mu.len()];
        for (k, i) in idx.iter().enumerate() {
            sum[*i] += (b[k] - a[k]) / (hi - lo);
            count[*i] += 1;
        }
        let v = sum.iter().zip(&count).map(|(s, n)| s / *n as f64).collect();
        Ok(Some((mu, v)))
    }

    /// `v(t, x)`; `x` must be an atom of `mu_t`.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        match self.on_marginal(t)? {
            None => match self.kind {
                FieldKind::Constant(v) => Ok(v),
                FieldKind::FiniteDifference { .. } => unreachable!(),
            },
            Some((mu, v)) => mu
                .index_of(x)
                .map(|i| v[i])
                .ok_or_else(|| Error::Domain(format!("{x} is not in the support at time {t}"))),
        }
    }

    /// The marginal at `t` paired with the velocity of each atom.
    pub fn eval_marginal(&self, c: &MarginalCurve, t: f64) -> Result<(AtomicMeasure, Vec<f64>)> {
        match self.on_marginal(t)? {
            Some(found) => Ok(found),
            None => {
                let mu = c.marginal_at(t)?;
                let FieldKind::Constant(v) = self.kind else { unreachable!() };
                let n = mu.len();
                Ok((mu, vec![v; n]))
            }
        }
    }
}

/// `p(x) b(t)` with `p` a cubic and `b` a C² bump supported on
/// `[t_lo, t_hi]`, normalized to peak value 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    pub coeffs: [f64; 4],
    pub t_lo: f64,
    pub t_hi: f64,
}

impl TestFunction {
    pub fn new(coeffs: [f64; 4], t_lo: f64, t_hi: f64) -> Result<Self> {
        if !(0.0 < t_lo && t_lo < t_hi && t_hi < 1.0) {
            return Err(Error::Domain(format!(
                "bump support [{t_lo}, {t_hi}] must lie inside (0, 1)"
            )));
        }
        Ok(Self { coeffs, t_lo, t_hi })
    }

    fn poly(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.coeffs;
        a + x * (b + x * (c + x * d))
    }

    fn dpoly(&self, x: f64) -> f64 {
        let [_, b, c, d] = self.coeffs;
        b + x * (2.0 * c + x * 3.0 * d)
    }

    fn norm(&self) -> f64 {
        ((self.t_hi - self.t_lo) / 2.0).powi(6)
    }

    fn inside(&self, t: f64) -> bool {
        t > self.t_lo && t < self.t_hi
    }

    fn bump(&self, t: f64) -> f64 {
        if !self.inside(t) {
            return 0.0;
        }
        ((t - self.t_lo) * (self.t_hi - t)).powi(3) / self.norm()
    }

    fn dbump(&self, t: f64) -> f64 {
        if !self.inside(t) {
            return 0.0;
        }
        let q = (t - self.t_lo) * (self.t_hi - t);
        3.0 * q * q * (self.t_lo + self.t_hi - 2.0 * t) / self.norm()
    }

    pub fn value(&self, x: f64, t: f64) -> f64 {
        self.poly(x) * self.bump(t)
    }

    pub fn dt(&self, x: f64, t: f64) -> f64 {
        self.poly(x) * self.dbump(t)
    }

    pub fn dx(&self, x: f64, t: f64) -> f64 {
        self.dpoly(x) * self.bump(t)
    }
}

/// Six fixed test functions followed by `extra` seeded random ones.
pub fn test_function_library(extra: usize, seed: u64) -> Vec<TestFunction> {
    let fixed = [
        ([0.0, 1.0, 0.0, 0.0], 0.1, 0.9),
        ([1.0, 0.0, 0.0, 0.0], 0.2, 0.7),
        ([0.0, 0.0, 1.0, 0.0], 0.05, 0.95),
        ([0.0, -1.0, 0.0, 1.0], 0.3, 0.8),
        ([1.0, 1.0, -0.5, 0.0], 0.15, 0.6),
        ([0.5, -0.25, 0.75, -0.2], 0.4, 0.9),
    ];
    let mut out: Vec<TestFunction> = fixed
        .iter()
        .map(|(c, a, b)| TestFunction::new(*c, *a, *b).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..extra {
        let coeffs = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let a: f64 = rng.gen_range(0.02..0.6);
        let b = rng.gen_range(a + 0.1..0.98);
        out.push(TestFunction::new(coeffs, a, b).unwrap());
    }
    out
}

/// Midpoint rule in time: an interval is cut into the fewest equal cells of
/// width at most `mesh`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub mesh: f64,
}

impl Quadrature {
    pub fn with_mesh(mesh: f64) -> Result<Self> {
        if !(mesh > 0.0 && mesh <= 1.0) {
            return Err(Error::Domain(format!("mesh {mesh} not in (0, 1]")));
        }
        Ok(Self { mesh })
    }

    /// Midpoints and weights of the cells of `[a, b]`.
    pub fn nodes(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> {
        let n = ((b - a) / self.mesh - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        (0..n).map(move |m| (a + (m as f64 + 0.5) * h, h))
    }
}

/// Quadrature of `int_0^1 int (d_t phi + v d_x phi) d mu_t dt`, which
/// vanishes when `v` drives the curve. Cells cover the time support of
/// `phi`.
pub fn continuity_residual(
    c: &MarginalCurve,
    v: &VelocityField,
    phi: &TestFunction,
    quad: &Quadrature,
) -> Result<f64> {
    let mut total = 0.0;
    for (t, h) in quad.nodes(phi.t_lo, phi.t_hi) {
        let (mu, vel) = v.eval_marginal(c, t)?;
        let inner: f64 = mu
            .atoms()
            .zip(&vel)
            .map(|((x, w), u)| w * (phi.dt(x, t) + u * phi.dx(x, t)))
            .sum();
        total += h * inner;
    }
    Ok(total)
}

/// Quadrature of `int_0^1 int |v_t|^2 d mu_t dt`.
pub fn kinetic_energy(c: &MarginalCurve, v: &VelocityField, quad: &Quadrature) -> Result<f64> {
    let mut total = 0.0;
    for (t, h) in quad.nodes(0.0, 1.0) {
        let (mu, vel) = v.eval_marginal(c, t)?;
        total += h * mu.masses().iter().zip(&vel).map(|(w, u)| w * u * u).sum::<f64>();
    }
    Ok(total)
}

/// `(t, x, v)` triples of the field over the atoms of `mu_t` for each `t`.
pub fn velocity_table(c: &MarginalCurve, v: &VelocityField, times: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for t in times {
        let (mu, vel) = v.eval_marginal(c, *t)?;
        out.extend(mu.positions().iter().zip(&vel).map(|(x, u)| (*t, *x, *u)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::{energy, energy_partition};
    use crate::markov_quantile::{mq_chain, quantile_law, MqConfig};
    use crate::process::JointLaw;

    fn grid(s: &str) -> TimePartition {
        s.parse().unwrap()
    }

    #[test]
    fn action_chord_examples() {
        let c = MarginalCurve::constant(4);
        assert_eq!(action_chord(&quantile_law(&c, &grid("0,0.5,1")).unwrap()).unwrap(), 0.0);
        let sm = MarginalCurve::split_merge(8);
        let g = grid("0,0.5,1");
        let l = q_markovized(&sm, &g, &g).unwrap();
        assert!((action_chord(&l).unwrap() - 1.0).abs() < 1e-15);
        let tr = MarginalCurve::translation(5);
        let d = disp_construct(&tr, &grid("0,1")).unwrap();
        assert!((action_chord(&d).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn action_examples() {
        let tr = MarginalCurve::translation(8);
        let q = quantile_law(&tr, &grid("0,1")).unwrap();
        assert!((action(&tr, &q, 1e-9).unwrap() - 1.0).abs() < 1e-9);
        let sm = MarginalCurve::split_merge(8);
        let g = grid("0,0.5,1");
        let l = q_markovized(&sm, &g, &g).unwrap();
        assert!((action(&sm, &l, 1e-9).unwrap() - 1.0).abs() < 1e-9);
        let mp = MarginalCurve::moving_point(1);
        let m = mq_chain(&mp, &grid("0,1"), &MqConfig::default()).unwrap();
        assert!((action(&mp, &m, 1e-8).unwrap() - 4.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn custom_quantile_follow_law_cannot_be_refined() {
        let tr = MarginalCurve::translation(2);
        let l = quantile_law(&tr, &grid("0,1")).unwrap().with_origin(LawOrigin::Custom);
        assert!(matches!(action(&tr, &l, 1e-6), Err(Error::Precondition(_))));
    }

    #[test]
    fn disp_examples() {
        let sm = MarginalCurve::split_merge(4);
        let d = disp_construct(&sm, &grid("0,0.5,1")).unwrap();
        let j = d.joint_of().unwrap();
        assert_eq!(j.num_paths(), 4);
        assert!(j.paths().values().all(|w| (w - 0.25).abs() < 1e-15));
        for c in MarginalCurve::presets(16) {
            let r = grid("0,0.2,0.5,0.9,1");
            let d = disp_construct(&c, &r).unwrap();
            let diff = action_chord(&d).unwrap() - energy_partition(&c, &r).unwrap();
            assert!(diff.abs() < 1e-12, "{}", c.name());
        }
    }

    #[test]
    fn barycentric_examples() {
        let tr = MarginalCurve::translation(5);
        let d = disp_construct(&tr, &grid("0,1")).unwrap();
        for (_, u) in barycentric_velocity(&d, 0.3).unwrap() {
            assert!((u - 1.0).abs() < 1e-12);
        }
        let sm = MarginalCurve::split_merge(4);
        let d = disp_construct(&sm, &grid("0,0.5,1")).unwrap();
        let u = barycentric_velocity(&d, 0.75).unwrap();
        assert_eq!(u.len(), 2);
        assert!((u[0].0 + 0.25).abs() < 1e-12 && (u[0].1 + 1.0).abs() < 1e-12);
        assert!((u[1].0 - 0.25).abs() < 1e-12 && (u[1].1 - 1.0).abs() < 1e-12);

        // Two crossing chords through the same point at t = 1/2.
        let pm = AtomicMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let cross = GridPathLaw::from_joint(
            grid("0,1"),
            JointLaw::new(vec![pm.clone(), pm], [(vec![0, 1], 0.5), (vec![1, 0], 0.5)]).unwrap(),
            Interpolation::Linear,
            LawOrigin::Custom,
        )
        .unwrap();
        assert_eq!(barycentric_velocity(&cross, 0.5).unwrap(), vec![(0.0, 0.0)]);
        assert!(barycentric_velocity(&cross, 1.0).is_err());
    }

    #[test]
    fn velocity_examples() {
        let tr = MarginalCurve::translation(8);
        let v = velocity_field(&tr, 1e-3).unwrap();
        for t in [0.0, 0.4, 1.0] {
            for x in tr.marginal_at(t).unwrap().positions() {
                assert!((v.eval(t, *x).unwrap() - 1.0).abs() < 1e-9);
            }
        }
        assert!(matches!(v.eval(0.4, 0.0), Err(Error::Domain(_))));
        let mp = MarginalCurve::moving_point(4);
        let v = velocity_field(&mp, 1e-3).unwrap();
        assert!((v.eval(0.5, 0.25).unwrap() - 1.0).abs() < 1e-6);
        let c = MarginalCurve::constant(4);
        let v = velocity_field(&c, 1e-2).unwrap();
        assert_eq!(v.eval(0.5, c.level(1)).unwrap(), 0.0);
    }

    #[test]
    fn residual_examples() {
        let quad = Quadrature::with_mesh(1e-3).unwrap();
        let lib = test_function_library(4, 11);
        let c = MarginalCurve::constant(16);
        let zero = VelocityField::constant(0.0);
        for phi in &lib {
            assert!(continuity_residual(&c, &zero, phi, &quad).unwrap().abs() < 1e-12);
        }
        let tr = MarginalCurve::translation(64);
        let one = VelocityField::constant(1.0);
        for phi in &lib {
            assert!(continuity_residual(&tr, &one, phi, &quad).unwrap().abs() < 1e-3);
        }
        let wrong = continuity_residual(&tr, &zero, &lib[0], &quad).unwrap();
        assert!(wrong.abs() >= 0.1, "{wrong}");
    }

    #[test]
    fn kinetic_energy_matches_energy() {
        let quad = Quadrature::with_mesh(1e-3).unwrap();
        let mp = MarginalCurve::moving_point(4);
        let v = velocity_field(&mp, 1e-4).unwrap();
        let k = kinetic_energy(&mp, &v, &quad).unwrap();
        assert!((k - energy(&mp, 1e-8).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn test_function_derivatives() {
        let phi = TestFunction::new([0.3, -1.0, 0.5, 0.25], 0.2, 0.8).unwrap();
        let h = 1e-6;
        for (x, t) in [(0.1, 0.3), (-0.7, 0.55), (1.2, 0.79)] {
            let dt = (phi.value(x, t + h) - phi.value(x, t - h)) / (2.0 * h);
            let dx = (phi.value(x + h, t) - phi.value(x - h, t)) / (2.0 * h);
            assert!((dt - phi.dt(x, t)).abs() < 1e-6);
            assert!((dx - phi.dx(x, t)).abs() < 1e-6);
        }
        assert_eq!(phi.value(0.4, 0.1), 0.0);
        assert!((phi.value(0.0, 0.5) - 0.3).abs() < 1e-15);
        assert!(TestFunction::new([0.0; 4], 0.0, 0.5).is_err());
    }
}
