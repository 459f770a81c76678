//! Named verification suites run by `mqdyn verify <suite>`.
//!
//! Each suite evaluates a set of invariants on the presets and reports one
//! [`Check`] per invariant; a suite passes when every check does.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curve::{energy, energy_on, energy_partition, refinement_partition, MarginalCurve, TimePartition};
use crate::dynamics::{
    action, action_chord, continuity_residual, disp_construct, test_function_library, velocity_field, Quadrature,
    VelocityField,
};
use crate::markov_quantile::{mq_chain, mq_coupling, q_markovized, quantile_law, quantile_product, MqConfig};
use crate::measure::AtomicMeasure;
use crate::oracle::{markov_at_middle_dense, min_cost_over_permutations};
use crate::process::{GridPathLaw, Interpolation, JointLaw, LawOrigin};
use crate::{Error, Result};

pub const SUITES: &[&str] = &["energy", "action-equality", "mq", "disp", "continuity", "oracle"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    /// One `PASS`/`FAIL` line per check.
    pub fn table(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{} {:<40} {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// A partition of `[a, b]` with `n` interior times drawn uniformly.
pub fn random_partition<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64, n: usize) -> TimePartition {
    let mut t: Vec<f64> = (0..n).map(|_| rng.gen_range(a..b)).collect();
    t.push(a);
    t.push(b);
    t.sort_by(f64::total_cmp);
    t.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
    TimePartition::new(t).expect("sorted distinct times")
}

/// Runs a suite by name with `levels` quantization levels.
pub fn run_suite(name: &str, levels: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let checks = match name {
        "energy" => energy_suite(levels, &mut rng)?,
        "action-equality" => action_suite(levels, &mut rng)?,
        "mq" => mq_suite(levels, &mut rng)?,
        "disp" => disp_suite(levels)?,
        "continuity" => continuity_suite(levels, seed)?,
        "oracle" => oracle_suite(&mut rng)?,
        other => {
            return Err(Error::Usage(format!(
                "unknown suite '{other}' (available: {})",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

fn energy_suite(levels: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let tr = MarginalCurve::translation(levels);
    let worst = (0..=8)
        .map(|d| energy_partition(&tr, &TimePartition::dyadic(0.0, 1.0, d)?).map(|e| (e - 1.0).abs()))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    out.push(check("translation energy at every depth", worst <= 1e-12, format!("max error {worst:.2e}")));
    let e = energy(&MarginalCurve::moving_point(levels), 1e-8)?;
    out.push(check("moving_point energy 4/3", (e - 4.0 / 3.0).abs() <= 1e-6, format!("{e:.10}")));
    let e = energy_partition(&MarginalCurve::split_merge(levels), &"0,0.5,1".parse()?)?;
    out.push(check("split_merge energy with 1/2", (e - 1.0).abs() <= 1e-12, format!("{e:.12}")));

    let presets = MarginalCurve::presets(levels);
    let mut violations = 0;
    for i in 0..60 {
        let c = &presets[i % presets.len()];
        let coarse = random_partition(rng, 0.0, 1.0, 4);
        let extra: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let fine = coarse.with_times(&extra);
        if energy_partition(c, &coarse)? > energy_partition(c, &fine)? + 1e-9 {
            violations += 1;
        }
    }
    out.push(check("refinement monotonicity", violations == 0, format!("{violations} violations in 60")));

    let mut worst: f64 = 0.0;
    for i in 0..15 {
        let c = &presets[i % presets.len()];
        let mut abc: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
        abc.sort_by(f64::total_cmp);
        let [a, b, cc] = [abc[0], abc[1], abc[2]];
        if b - a < 1e-6 || cc - b < 1e-6 {
            continue;
        }
        let tol = 1e-9;
        let lhs = energy_on(c, a, cc, tol)?;
        let rhs = energy_on(c, a, b, tol)? + energy_on(c, b, cc, tol)?;
        worst = worst.max((lhs - rhs).abs());
    }
    out.push(check("Chasles relation", worst <= 1e-9, format!("max gap {worst:.2e}")));
    Ok(out)
}

fn action_suite(levels: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let tol = 1e-8;
    for c in MarginalCurve::presets(levels) {
        let e = energy(&c, tol)?;
        let q = action(&c, &quantile_law(&c, &"0,1".parse()?)?, tol)?;
        let mut worst = (q - e).abs();
        for _ in 0..3 {
            let r = random_partition(rng, 0.0, 1.0, 3);
            let l = q_markovized(&c, &r, &r)?;
            worst = worst.max((action(&c, &l, tol)? - e).abs());
        }
        let m = action(&c, &mq_chain(&c, &"0,1".parse()?, &MqConfig::default())?, tol)?;
        worst = worst.max((m - e).abs());
        out.push(check(
            format!("action equals energy: {}", c.name()),
            worst <= 1e-6,
            format!("energy {e:.9}, max gap {worst:.2e}"),
        ));
    }
    let tr = MarginalCurve::translation(levels);
    let (m0, m1) = (tr.marginal_at(0.0)?, tr.marginal_at(1.0)?);
    let n = m0.len();
    let anti = JointLaw::new(vec![m0.clone(), m1], (0..n).map(|i| (vec![i, n - 1 - i], m0.masses()[i])))?;
    let l = GridPathLaw::from_joint("0,1".parse()?, anti, Interpolation::Linear, LawOrigin::Custom)?;
    // Reversing the order of a translated measure costs 4 Var(mu_0) on top.
    let a = action_chord(&l)?;
    let gap = 4.0 * m0.atoms().map(|(x, w)| w * (x - m0.mean()).powi(2)).sum::<f64>();
    out.push(check(
        "anti-monotone law is strictly worse",
        gap > 0.0 && (a - 1.0 - gap).abs() <= 1e-12,
        format!("action {a:.6}, excess {gap:.6}"),
    ));
    Ok(out)
}

fn mq_suite(levels: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let cfg = MqConfig::default();
    let grid = TimePartition::dyadic(0.0, 1.0, 3)?;
    for c in MarginalCurve::presets(levels) {
        let l = mq_chain(&c, &grid, &cfg)?;
        let inc = l.consecutive_couplings()?.iter().all(|p| p.increasing_kernel());
        out.push(check(
            format!("markov chain, increasing kernels: {}", c.name()),
            l.is_markov()? && inc,
            format!("{} grid times", grid.len()),
        ));
    }
    let presets = MarginalCurve::presets(levels);
    let mut failures = 0;
    for i in 0..20 {
        let c = &presets[i % presets.len()];
        let p = random_partition(rng, 0.0, 1.0, 3);
        let mq = mq_coupling(c, 0.0, 1.0, &cfg)?;
        if !quantile_product(c, &p)?.lo_leq(&mq)? || !mq.increasing_kernel() {
            failures += 1;
        }
    }
    out.push(check("finite products lo-dominate the limit", failures == 0, format!("{failures} failures in 20")));
    let sm = MarginalCurve::split_merge(levels);
    let m = mq_coupling(&sm, 0.0, 1.0, &cfg)?;
    let worst = m.matrix().iter().flatten().map(|w| (w - 0.25).abs()).fold(0.0, f64::max);
    out.push(check("split_merge coupling is all 1/4", worst <= 1e-9, format!("max error {worst:.2e}")));
    Ok(out)
}

fn disp_suite(levels: usize) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let cfg = MqConfig::default();
    for c in MarginalCurve::presets(levels) {
        let mq = mq_coupling(&c, 0.0, 1.0, &cfg)?;
        let mut gap: f64 = 0.0;
        let mut dist = f64::INFINITY;
        for depth in 0..=8 {
            let r = refinement_partition(&c, 0.0, 1.0, depth)?;
            let d = disp_construct(&c, &r)?;
            gap = gap.max((action_chord(&d)? - energy_partition(&c, &r)?).abs());
            dist = d.pair_coupling(0, r.len() - 1)?.cdf_distance(&mq);
        }
        out.push(check(
            format!("disp action and limit: {}", c.name()),
            gap <= 1e-9 && dist <= 1e-3,
            format!("action gap {gap:.2e}, cdf distance {dist:.2e}"),
        ));
    }
    Ok(out)
}

fn continuity_suite(levels: usize, seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let quad = Quadrature::with_mesh(1e-3)?;
    let lib = test_function_library(4, seed);
    for c in [MarginalCurve::translation(levels), MarginalCurve::moving_point(levels)] {
        let v = velocity_field(&c, 1e-3)?;
        let mut worst: f64 = 0.0;
        for phi in &lib {
            worst = worst.max(continuity_residual(&c, &v, phi, &quad)?.abs());
        }
        out.push(check(
            format!("minimal field residual: {}", c.name()),
            worst <= 1e-3,
            format!("max |residual| {worst:.2e}"),
        ));
    }
    let tr = MarginalCurve::translation(levels);
    let r = continuity_residual(&tr, &VelocityField::constant(0.0), &lib[0], &quad)?;
    out.push(check("wrong field is detected", r.abs() >= 0.1, format!("residual {r:.4}")));
    Ok(out)
}

fn oracle_suite(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let mu = AtomicMeasure::uniform(&(0..5).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>())?;
        let nu = AtomicMeasure::uniform(&(0..5).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>())?;
        if mu.len() != 5 || nu.len() != 5 {
            continue;
        }
        let (cost, _) = min_cost_over_permutations(&mu, &nu)?;
        worst = worst.max((cost - mu.w2(&nu).powi(2)).abs());
    }
    out.push(check("w2 squared matches permutations", worst <= 1e-12, format!("max error {worst:.2e}")));

    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dims = [rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4)];
        let (law, dims, tensor) = random_joint(rng, dims)?;
        let l = GridPathLaw::from_joint("0,0.5,1".parse()?, law, Interpolation::Linear, LawOrigin::Custom)?;
        let got = l.make_markov_at(&[0.5])?.joint_of()?;
        let want = JointLaw::from_dense(got.supports().to_vec(), &markov_at_middle_dense(dims, &tensor))?;
        worst = worst.max(got.max_abs_diff(&want)?);
    }
    out.push(check("markovization matches direct formula", worst <= 1e-12, format!("max error {worst:.2e}")));
    Ok(out)
}

/// A random three-time joint law on at most the given support sizes (atoms
/// left without mass are dropped), with its dimensions and dense tensor.
pub fn random_joint<R: Rng + ?Sized>(rng: &mut R, dims: [usize; 3]) -> Result<(JointLaw, [usize; 3], Vec<f64>)> {
    let n: usize = dims.iter().product();
    let mut tensor: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.05..1.0) })
        .collect();
    if tensor.iter().all(|w| *w == 0.0) {
        tensor[0] = 1.0;
    }
    let total: f64 = tensor.iter().sum();
    tensor.iter_mut().for_each(|w| *w /= total);
    let mut marg: Vec<Vec<f64>> = dims.iter().map(|d| vec![0.0; *d]).collect();
    for (flat, w) in tensor.iter().enumerate() {
        let idx = [flat / (dims[1] * dims[2]), (flat / dims[2]) % dims[1], flat % dims[2]];
        for a in 0..3 {
            marg[a][idx[a]] += w;
        }
    }
    // Supports carry only atoms with mass; drop the others and reindex.
    let mut keep: Vec<Vec<usize>> = Vec::new();
    let mut supports = Vec::new();
    for m in &marg {
        let (pos, mass): (Vec<f64>, Vec<f64>) =
            m.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(i, w)| (i as f64, *w)).unzip();
        let total: f64 = mass.iter().sum();
        supports.push(AtomicMeasure::new(pos, mass.iter().map(|w| w / total).collect())?);
        let mut map = vec![usize::MAX; m.len()];
        for (new, (old, _)) in m.iter().enumerate().filter(|(_, w)| **w > 0.0).enumerate() {
            map[old] = new;
        }
        keep.push(map);
    }
    let new_dims = [supports[0].len(), supports[1].len(), supports[2].len()];
    let mut dense = vec![0.0; new_dims.iter().product()];
    for (flat, w) in tensor.iter().enumerate() {
        if *w == 0.0 {
            continue;
        }
        let i = keep[0][flat / (dims[1] * dims[2])];
        let j = keep[1][(flat / dims[2]) % dims[1]];
        let k = keep[2][flat % dims[2]];
        dense[(i * new_dims[1] + j) * new_dims[2] + k] = *w;
    }
    Ok((JointLaw::from_dense(supports, &dense)?, new_dims, dense))
}
