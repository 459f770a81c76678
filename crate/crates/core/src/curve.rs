//! Curves `t -> mu_t` in Wasserstein space, encoded by a quantile surface
//! `G(t, alpha)`, and their energy and length functionals.
//!
//! A curve is quantized at `K` uniform levels `(k - 1/2) / K`: the marginal at
//! time `t` puts mass `1/K` on each `G(t, (k - 1/2)/K)`, with coinciding atoms
//! merged.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::measure::AtomicMeasure;
use crate::{Error, Result, POSITION_TOL};

/// Partitions never exceed `2^MAX_DEPTH` dyadic intervals.
pub const MAX_DEPTH: u32 = 16;

/// Default level count when a spec does not give one.
pub const DEFAULT_LEVELS: usize = 64;

/// Sorted times `a = r_0 < r_1 < ... < r_{m+1} = b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimePartition {
    times: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TimePartition {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimePartition::new(v)
    }
}

impl From<TimePartition> for Vec<f64> {
    fn from(p: TimePartition) -> Self {
        p.times
    }
}

impl TimePartition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPartition("need at least two times".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidPartition("non-finite time".into()));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidPartition(format!(
                "times not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { times })
    }

    /// `{a + (b - a) k / 2^depth}`.
    pub fn dyadic(a: f64, b: f64, depth: u32) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidPartition(format!("empty interval [{a}, {b}]")));
        }
        if depth > 30 {
            return Err(Error::Resource(format!("dyadic depth {depth} too large")));
        }
        let n = 1usize << depth;
        let times = (0..=n)
            .map(|k| {
                if k == n {
                    b
                } else {
                    a + (b - a) * (k as f64 / n as f64)
                }
            })
            .collect();
        Self::new(times)
    }

    /// Adds the given times that fall strictly inside `(a, b)`; times within
    /// [`POSITION_TOL`] of an existing one are not duplicated.
    pub fn with_times(&self, extra: &[f64]) -> Self {
        let (a, b) = (self.start(), self.end());
        let mut times = self.times.clone();
        times.extend(extra.iter().copied().filter(|t| *t > a && *t < b));
        times.sort_by(f64::total_cmp);
        times.dedup_by(|x, y| (*x - *y).abs() <= POSITION_TOL);
        Self { times }
    }

    /// This partition joined with the depth-`depth` dyadic partition of its
    /// own interval.
    pub fn refined(&self, depth: u32) -> Result<Self> {
        let d = Self::dyadic(self.start(), self.end(), depth)?;
        Ok(self.with_times(&d.times))
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn interior(&self) -> &[f64] {
        &self.times[1..self.times.len() - 1]
    }

    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of `t` in the partition, up to [`POSITION_TOL`].
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= POSITION_TOL)
    }

    /// True iff every time of `other` is a time of `self`.
    pub fn contains_all(&self, other: &TimePartition) -> bool {
        other.times.iter().all(|t| self.index_of(*t).is_some())
    }
}

impl FromStr for TimePartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let times = s
            .split(',')
            .map(|x| {
                x.trim().parse::<f64>().map_err(|e| Error::Parse {
                    location: format!("partition entry {x:?}"),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(times)
    }
}

impl fmt::Display for TimePartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.times.iter().map(|t| t.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// The quantile surface of a curve.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveKind {
    /// `G = alpha`.
    Constant,
    /// `G = alpha + speed * t`.
    Translation { speed: f64 },
    /// `G = ((1 - t) from + t to) (alpha - 1/2)`.
    Scaling { from: f64, to: f64 },
    /// Two half-mass atoms at `-|t - 1/2|` and `+|t - 1/2|`, merging at 1/2.
    SplitMerge,
    /// `G = t^power` for every level.
    MovingPoint { power: f64 },
    /// `G = alpha + t + dist(teeth t, Z) / teeth`: uniformly close to the
    /// translation, with speeds alternating between 0 and 2.
    Zigzag { teeth: u32 },
    /// Tabulated surface: linear in `t` between `times`, left-continuous and
    /// piecewise constant in `alpha` between `alphas`. Repeated consecutive
    /// times encode a jump (right-continuous in `t`).
    Grid {
        times: Vec<f64>,
        alphas: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl CurveKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::Constant => "constant",
            CurveKind::Translation { .. } => "translation",
            CurveKind::Scaling { .. } => "scaling",
            CurveKind::SplitMerge => "split_merge",
            CurveKind::MovingPoint { .. } => "moving_point",
            CurveKind::Zigzag { .. } => "zigzag",
            CurveKind::Grid { .. } => "grid",
        }
    }
}

/// A curve of probability measures on the line, `t in [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCurve {
    kind: CurveKind,
    special_times: Vec<f64>,
    levels: usize,
}

impl MarginalCurve {
    /// Validates the surface and adds the preset's own atom-critical times to
    /// `special_times`.
    pub fn new(kind: CurveKind, special_times: Vec<f64>, levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::Domain("level count must be positive".into()));
        }
        match &kind {
            CurveKind::Translation { speed } if !speed.is_finite() => {
                return Err(Error::Domain("translation speed must be finite".into()))
            }
            CurveKind::Scaling { from, to } if !(from.is_finite() && to.is_finite()) => {
                return Err(Error::Domain("scaling factors must be finite".into()))
            }
            CurveKind::Scaling { from, to } if *from < 0.0 || *to < 0.0 => {
                return Err(Error::Domain(
                    "scaling factors must be nonnegative to keep quantiles nondecreasing".into(),
                ))
            }
            CurveKind::MovingPoint { power } if !(*power >= 1.0 && power.is_finite()) => {
                return Err(Error::Domain("moving_point power must be >= 1".into()))
            }
            CurveKind::Zigzag { teeth } if *teeth == 0 => {
                return Err(Error::Domain("zigzag needs at least one tooth".into()))
            }
            CurveKind::Grid {
                times,
                alphas,
                values,
            } => validate_grid(times, alphas, values)?,
            _ => {}
        }
        if let Some(t) = special_times.iter().find(|t| !(**t >= 0.0 && **t <= 1.0)) {
            return Err(Error::Domain(format!("special time {t} outside [0, 1]")));
        }
        let mut special: Vec<f64> = special_times;
        special.extend(intrinsic_special_times(&kind));
        special.retain(|t| *t > 0.0 && *t < 1.0);
        special.sort_by(f64::total_cmp);
        special.dedup_by(|x, y| (*x - *y).abs() <= POSITION_TOL);
        Ok(Self {
            kind,
            special_times: special,
            levels,
        })
    }

    pub fn constant(levels: usize) -> Self {
        Self::new(CurveKind::Constant, vec![], levels).unwrap()
    }

    pub fn translation(levels: usize) -> Self {
        Self::new(CurveKind::Translation { speed: 1.0 }, vec![], levels).unwrap()
    }

    pub fn scaling(from: f64, to: f64, levels: usize) -> Result<Self> {
        Self::new(CurveKind::Scaling { from, to }, vec![], levels)
    }

    pub fn split_merge(levels: usize) -> Self {
        Self::new(CurveKind::SplitMerge, vec![], levels).unwrap()
    }

    /// `G = t^2`.
    pub fn moving_point(levels: usize) -> Self {
        Self::new(CurveKind::MovingPoint { power: 2.0 }, vec![], levels).unwrap()
    }

    pub fn zigzag(teeth: u32, levels: usize) -> Result<Self> {
        Self::new(CurveKind::Zigzag { teeth }, vec![], levels)
    }

    pub fn grid(
        times: Vec<f64>,
        alphas: Vec<f64>,
        values: Vec<Vec<f64>>,
        special_times: Vec<f64>,
        levels: usize,
    ) -> Result<Self> {
        Self::new(
            CurveKind::Grid {
                times,
                alphas,
                values,
            },
            special_times,
            levels,
        )
    }

    /// The smooth presets with closed-form energies, at the given level count.
    pub fn presets(levels: usize) -> Vec<MarginalCurve> {
        vec![
            Self::constant(levels),
            Self::translation(levels),
            Self::scaling(1.0, 2.0, levels).unwrap(),
            Self::split_merge(levels),
            Self::moving_point(levels),
        ]
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn special_times(&self) -> &[f64] {
        &self.special_times
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn with_levels(&self, levels: usize) -> Result<Self> {
        Self::new(self.kind.clone(), self.special_times.clone(), levels)
    }

    /// The quantile surface `G(t, alpha)`.
    pub fn quantile_surface(&self, t: f64, alpha: f64) -> f64 {
        match &self.kind {
            CurveKind::Constant => alpha,
            CurveKind::Translation { speed } => alpha + speed * t,
            CurveKind::Scaling { from, to } => ((1.0 - t) * from + t * to) * (alpha - 0.5),
            CurveKind::SplitMerge => {
                let d = (t - 0.5).abs();
                if alpha <= 0.5 {
                    -d
                } else {
                    d
                }
            }
            CurveKind::MovingPoint { power } => t.powf(*power),
            CurveKind::Zigzag { teeth } => {
                let n = *teeth as f64;
                let u = n * t;
                alpha + t + (u - u.round()).abs() / n
            }
            CurveKind::Grid {
                times,
                alphas,
                values,
            } => {
                let j = alphas.partition_point(|a| *a < alpha).min(alphas.len() - 1);
                let i = times.partition_point(|s| *s <= t);
                if i == 0 {
                    return values[0][j];
                }
                let i = i - 1;
                if i + 1 == times.len() {
                    return values[i][j];
                }
                let lambda = (t - times[i]) / (times[i + 1] - times[i]);
                (1.0 - lambda) * values[i][j] + lambda * values[i + 1][j]
            }
        }
    }

    /// Level `k` (zero-based) of the uniform quantization, `(k + 1/2) / K`.
    pub fn level(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.levels as f64
    }

    /// Positions `G(t, level(k))` for all levels, nondecreasing in `k`.
    pub fn level_positions(&self, t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        Ok((0..self.levels)
            .map(|k| self.quantile_surface(t, self.level(k)))
            .collect())
    }

    /// The quantized marginal `mu_t`.
    pub fn marginal_at(&self, t: f64) -> Result<AtomicMeasure> {
        let pos = self.level_positions(t)?;
        let k = self.levels;
        AtomicMeasure::new(pos, vec![1.0 / k as f64; k])
    }

    /// Parses the JSON curve spec.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(s).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| field_err("<root>", "expected an object"))?;
        let kind_name = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| field_err("kind", "missing or not a string"))?;
        let special = match obj.get("special_times") {
            None => vec![],
            Some(v) => f64_array(v, "special_times")?,
        };
        if kind_name == "grid" {
            let times = f64_array(obj.get("times").unwrap_or(&Value::Null), "times")?;
            let alphas = f64_array(obj.get("levels").unwrap_or(&Value::Null), "levels")?;
            let values = obj
                .get("values")
                .and_then(Value::as_array)
                .ok_or_else(|| field_err("values", "missing or not an array"))?
                .iter()
                .enumerate()
                .map(|(i, row)| f64_array(row, &format!("values[{i}]")))
                .collect::<Result<Vec<_>>>()?;
            let levels = match obj.get("level_count") {
                None => DEFAULT_LEVELS,
                Some(v) => as_count(v, "level_count")?,
            };
            return Self::grid(times, alphas, values, special, levels).map_err(|e| match e {
                Error::Domain(m) => field_err("values", &m),
                other => other,
            });
        }
        let levels = match obj.get("levels") {
            None => DEFAULT_LEVELS,
            Some(v) => as_count(v, "levels")?,
        };
        let empty = Map::new();
        let params = match obj.get("params") {
            None | Some(Value::Null) => &empty,
            Some(Value::Object(m)) => m,
            Some(_) => return Err(field_err("params", "expected an object")),
        };
        let num = |key: &str, default: f64| -> Result<f64> {
            match params.get(key) {
                None => Ok(default),
                Some(v) => v
                    .as_f64()
                    .ok_or_else(|| field_err(&format!("params.{key}"), "expected a number")),
            }
        };
        let kind = match kind_name {
            "constant" => CurveKind::Constant,
            "translation" => CurveKind::Translation {
                speed: num("speed", 1.0)?,
            },
            "scaling" => CurveKind::Scaling {
                from: num("from", 1.0)?,
                to: num("to", 2.0)?,
            },
            "split_merge" => CurveKind::SplitMerge,
            "moving_point" => CurveKind::MovingPoint {
                power: num("power", 2.0)?,
            },
            "zigzag" => CurveKind::Zigzag {
                teeth: match params.get("teeth") {
                    None => 4,
                    Some(v) => as_count(v, "params.teeth")? as u32,
                },
            },
            other => return Err(field_err("kind", &format!("unknown curve kind {other:?}"))),
        };
        Self::new(kind, special, levels).map_err(|e| match e {
            Error::Domain(m) => field_err("params", &m),
            other => other,
        })
    }

    pub fn to_json(&self) -> Value {
        let special = &self.special_times;
        match &self.kind {
            CurveKind::Grid {
                times,
                alphas,
                values,
            } => json!({
                "kind": "grid",
                "times": times,
                "levels": alphas,
                "values": values,
                "special_times": special,
                "level_count": self.levels,
            }),
            kind => {
                let params = match kind {
                    CurveKind::Translation { speed } => json!({ "speed": speed }),
                    CurveKind::Scaling { from, to } => json!({ "from": from, "to": to }),
                    CurveKind::MovingPoint { power } => json!({ "power": power }),
                    CurveKind::Zigzag { teeth } => json!({ "teeth": teeth }),
                    _ => json!({}),
                };
                json!({
                    "kind": kind.name(),
                    "params": params,
                    "special_times": special,
                    "levels": self.levels,
                })
            }
        }
    }
}

fn intrinsic_special_times(kind: &CurveKind) -> Vec<f64> {
    match kind {
        CurveKind::SplitMerge => vec![0.5],
        CurveKind::Zigzag { teeth } => {
            let n = 2 * *teeth as usize;
            (1..n).map(|k| k as f64 / n as f64).collect()
        }
        _ => vec![],
    }
}

fn validate_grid(times: &[f64], alphas: &[f64], values: &[Vec<f64>]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::Domain("grid needs at least two times".into()));
    }
    if times[0] != 0.0 || times[times.len() - 1] != 1.0 {
        return Err(Error::Domain("grid times must start at 0 and end at 1".into()));
    }
    if times.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Domain("grid times must be nondecreasing".into()));
    }
    if times.windows(3).any(|w| w[0] == w[1] && w[1] == w[2]) {
        return Err(Error::Domain("a grid time may repeat at most once".into()));
    }
    if alphas.is_empty() || alphas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("grid levels must be strictly increasing".into()));
    }
    if !(alphas[0] > 0.0) || alphas[alphas.len() - 1] != 1.0 {
        return Err(Error::Domain("grid levels must lie in (0, 1] and end at 1".into()));
    }
    if values.len() != times.len() {
        return Err(Error::Domain(format!(
            "{} value rows for {} times",
            values.len(),
            times.len()
        )));
    }
    for (i, row) in values.iter().enumerate() {
        if row.len() != alphas.len() {
            return Err(Error::Domain(format!("values[{i}] has the wrong length")));
        }
        if row.iter().any(|v| !v.is_finite()) || row.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Domain(format!("values[{i}] is not a nondecreasing row")));
        }
    }
    Ok(())
}

fn field_err(field: &str, message: &str) -> Error {
    Error::Parse {
        location: format!("field `{field}`"),
        message: message.to_string(),
    }
}

fn f64_array(v: &Value, field: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| field_err(field, "missing or not an array"))?
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| field_err(&format!("{field}[{i}]"), "expected a number"))
        })
        .collect()
}

fn as_count(v: &Value, field: &str) -> Result<usize> {
    match v.as_u64() {
        Some(n) if n > 0 => Ok(n as usize),
        _ => Err(field_err(field, "expected a positive integer")),
    }
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("time {t} outside [0, 1]")))
    }
}

/// Outcome of a refinement sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub value: f64,
    /// Dyadic depth of the last evaluated partition.
    pub depth: u32,
    pub converged: bool,
}

/// `sum_k W2(mu_{r_k}, mu_{r_{k+1}})^2 / (r_{k+1} - r_k)`.
pub fn energy_partition(c: &MarginalCurve, r: &TimePartition) -> Result<f64> {
    partition_sum(c, r, |w, dt| w * w / dt)
}

/// `sum_k W2(mu_{r_k}, mu_{r_{k+1}})`.
pub fn length_partition(c: &MarginalCurve, r: &TimePartition) -> Result<f64> {
    partition_sum(c, r, |w, _| w)
}

fn partition_sum(c: &MarginalCurve, r: &TimePartition, term: impl Fn(f64, f64) -> f64) -> Result<f64> {
    let marginals = r
        .times()
        .iter()
        .map(|t| c.marginal_at(*t))
        .collect::<Result<Vec<_>>>()?;
    Ok(marginals
        .windows(2)
        .zip(r.times().windows(2))
        .map(|(m, t)| term(m[0].w2(&m[1]), t[1] - t[0]))
        .sum())
}

/// The nested partitions used by every refinement in this crate: depth-`n`
/// dyadic times of `[a, b]` together with the curve's special times inside.
pub fn refinement_partition(c: &MarginalCurve, a: f64, b: f64, depth: u32) -> Result<TimePartition> {
    Ok(TimePartition::dyadic(a, b, depth)?.with_times(c.special_times()))
}

fn refine(
    c: &MarginalCurve,
    a: f64,
    b: f64,
    tol: f64,
    f: impl Fn(&MarginalCurve, &TimePartition) -> Result<f64>,
) -> Result<EnergyReport> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    check_time(a)?;
    check_time(b)?;
    let mut prev = f(c, &refinement_partition(c, a, b, 0)?)?;
    for depth in 1..=MAX_DEPTH {
        let value = f(c, &refinement_partition(c, a, b, depth)?)?;
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

/// Energy on `[a, b]` along nested dyadic partitions, as a report.
pub fn energy_report(c: &MarginalCurve, a: f64, b: f64, tol: f64) -> Result<EnergyReport> {
    refine(c, a, b, tol, energy_partition)
}

pub fn length_report(c: &MarginalCurve, a: f64, b: f64, tol: f64) -> Result<EnergyReport> {
    refine(c, a, b, tol, length_partition)
}

/// Energy of the curve on `[0, 1]`; fails with [`Error::Diverged`] when the
/// partition sums do not stabilize (the curve is not of finite energy at the
/// resolution of the cap).
pub fn energy(c: &MarginalCurve, tol: f64) -> Result<f64> {
    energy_on(c, 0.0, 1.0, tol)
}

pub fn energy_on(c: &MarginalCurve, a: f64, b: f64, tol: f64) -> Result<f64> {
    settle(energy_report(c, a, b, tol)?, "energy")
}

pub fn length(c: &MarginalCurve, tol: f64) -> Result<f64> {
    settle(length_report(c, 0.0, 1.0, tol)?, "length")
}

fn settle(r: EnergyReport, what: &'static str) -> Result<f64> {
    if r.converged {
        Ok(r.value)
    } else {
        Err(Error::Diverged {
            what,
            depth: r.depth,
            last: r.value,
        })
    }
}
