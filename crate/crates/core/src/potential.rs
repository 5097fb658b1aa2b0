//! Double-well potentials, the structural conditions on them and the growth
//! constant.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a potential is specified in a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `scale * (1 - t^2)^2 / 4 + shift`
    Quartic {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `scale * (1 - t^2)^exponent`
    Power {
        exponent: u32,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Two-column CSV `t, W(t)` covering `[-1, 1]`.
    Table { path: String },
}

fn one() -> f64 {
    1.0
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::Quartic { scale: 1.0, shift: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    Quartic { scale: f64, shift: f64 },
    Power { exponent: u32, scale: f64 },
    Table(Pchip),
}

/// A double-well potential on `[-1, 1]` with its first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    form: Form,
    spec: PotentialSpec,
}

impl Default for Potential {
    fn default() -> Self {
        Self::quartic()
    }
}

impl Potential {
    /// `W(t) = (1 - t^2)^2 / 4`
    pub fn quartic() -> Self {
        Self::scaled_quartic(1.0, 0.0)
    }

    pub fn scaled_quartic(scale: f64, shift: f64) -> Self {
        Self {
            form: Form::Quartic { scale, shift },
            spec: PotentialSpec::Quartic { scale, shift },
        }
    }

    /// `W(t) = scale (1 - t^2)^p`
    pub fn power(exponent: u32, scale: f64) -> Self {
        Self {
            form: Form::Power { exponent, scale },
            spec: PotentialSpec::Power { exponent, scale },
        }
    }

    /// Monotone cubic interpolant through `(t, W(t))` samples.
    pub fn from_samples(t: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let table = Pchip::new(t, w)?;
        Ok(Self {
            form: Form::Table(table),
            spec: PotentialSpec::Table { path: String::new() },
        })
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Io(e.to_string()))?;
        let mut t = Vec::new();
        let mut w = Vec::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidParam(format!("potential table: {e}")))?;
            if rec.len() != 2 {
                return Err(Error::InvalidParam(format!(
                    "potential table row {} has {} columns, expected 2",
                    row + 1,
                    rec.len()
                )));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(a), Ok(b)) => {
                    t.push(a);
                    w.push(b);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InvalidParam(format!(
                        "potential table row {} is not numeric",
                        row + 1
                    )))
                }
            }
        }
        let mut pot = Self::from_samples(t, w)?;
        pot.spec = PotentialSpec::Table {
            path: path.display().to_string(),
        };
        Ok(pot)
    }

    pub fn from_spec(spec: &PotentialSpec) -> Result<Self> {
        match spec {
            PotentialSpec::Quartic { scale, shift } => Ok(Self::scaled_quartic(*scale, *shift)),
            PotentialSpec::Power { exponent, scale } => {
                if *exponent < 1 {
                    return Err(Error::InvalidParam("power potential needs exponent >= 1".into()));
                }
                Ok(Self::power(*exponent, *scale))
            }
            PotentialSpec::Table { path } => Self::load_csv(Path::new(path)),
        }
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn describe(&self) -> String {
        match &self.form {
            Form::Quartic { scale, shift } => format!("{scale} (1-t^2)^2/4 + {shift}"),
            Form::Power { exponent, scale } => format!("{scale} (1-t^2)^{exponent}"),
            Form::Table(p) => format!("tabulated, {} nodes", p.t.len()),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.form {
            Form::Quartic { scale, shift } => {
                let a = 1.0 - t * t;
                scale * 0.25 * a * a + shift
            }
            Form::Power { exponent, scale } => scale * (1.0 - t * t).powi(*exponent as i32),
            Form::Table(p) => p.eval(t).0,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match &self.form {
            Form::Quartic { scale, .. } => -scale * t * (1.0 - t * t),
            Form::Power { exponent, scale } => {
                let p = *exponent as i32;
                -scale * 2.0 * p as f64 * t * (1.0 - t * t).powi(p - 1)
            }
            Form::Table(p) => p.eval(t).1,
        }
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        match &self.form {
            Form::Quartic { scale, .. } => scale * (3.0 * t * t - 1.0),
            Form::Power { exponent, scale } => {
                let p = *exponent as i32;
                let pf = p as f64;
                let a = 1.0 - t * t;
                let first = -2.0 * pf * a.powi(p - 1);
                let second = if p >= 2 {
                    4.0 * pf * (pf - 1.0) * t * t * a.powi(p - 2)
                } else {
                    0.0
                };
                scale * (first + second)
            }
            Form::Table(p) => p.eval(t).2,
        }
    }
}

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes.
#[derive(Debug, Clone, PartialEq)]
struct Pchip {
    t: Vec<f64>,
    w: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(t: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if t.len() < 3 || t.len() != w.len() {
            return Err(Error::InvalidParam("potential table needs at least 3 (t, W) rows".into()));
        }
        if t.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::InvalidParam("potential table t column must increase".into()));
        }
        if t[0] > -1.0 || t[t.len() - 1] < 1.0 {
            return Err(Error::InvalidParam("potential table must cover [-1, 1]".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::PotentialUndefined(f64::NAN));
        }
        let m = t.len();
        let delta: Vec<f64> = (0..m - 1).map(|i| (w[i + 1] - w[i]) / (t[i + 1] - t[i])).collect();
        let mut d = vec![0.0; m];
        for i in 1..m - 1 {
            let (a, b) = (delta[i - 1], delta[i]);
            if a * b > 0.0 {
                let h0 = t[i] - t[i - 1];
                let h1 = t[i + 1] - t[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                d[i] = (w1 + w2) / (w1 / a + w2 / b);
            }
        }
        d[0] = end_slope(t[1] - t[0], t[2] - t[1], delta[0], delta[1]);
        d[m - 1] = end_slope(t[m - 1] - t[m - 2], t[m - 2] - t[m - 3], delta[m - 2], delta[m - 3]);
        Ok(Self { t, w, d })
    }

    /// Value, first and second derivative.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let m = self.t.len();
        let k = self.t.partition_point(|&v| v <= x).clamp(1, m - 1) - 1;
        let h = self.t[k + 1] - self.t[k];
        let u = (x - self.t[k]) / h;
        let (y0, y1) = (self.w[k], self.w[k + 1]);
        let (d0, d1) = (self.d[k] * h, self.d[k + 1] * h);
        let u2 = u * u;
        let u3 = u2 * u;
        let v = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1;
        let dv = (6.0 * u2 - 6.0 * u) * y0 + (3.0 * u2 - 4.0 * u + 1.0) * d0 + (-6.0 * u2 + 6.0 * u) * y1
            + (3.0 * u2 - 2.0 * u) * d1;
        let ddv = (12.0 * u - 6.0) * y0 + (6.0 * u - 4.0) * d0 + (-12.0 * u + 6.0) * y1 + (6.0 * u - 2.0) * d1;
        (v, dv / h, ddv / (h * h))
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// One violated structural condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcondViolation {
    pub condition: String,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcondReport {
    pub pass: bool,
    pub mesh: usize,
    pub violations: Vec<WcondViolation>,
    /// Most violated condition, if any.
    pub worst: Option<WcondViolation>,
    pub w2_minus: f64,
    pub w2_plus: f64,
}

const ENDPOINT_TOL: f64 = 1e-10;

/// Sample the double-well conditions on an `m`-point mesh of `[-1, 1]`.
pub fn check_wcond(w: &Potential, m: usize) -> Result<WcondReport> {
    if m < 16 {
        return Err(Error::InvalidParam(format!("mesh size must be at least 16, got {m}")));
    }
    let mut violations = Vec::new();
    // (violation, scale) so the worst one can be chosen on a common footing
    let mut scored: Vec<(f64, usize)> = Vec::new();
    let mut push = |cond: &str, t: f64, value: f64, score: f64, out: &mut Vec<WcondViolation>| {
        scored.push((score, out.len()));
        out.push(WcondViolation {
            condition: cond.into(),
            t,
            value,
        });
    };
    for i in 0..m {
        let t = -1.0 + 2.0 * i as f64 / (m - 1) as f64;
        let (a, b, c) = (w.value(t), w.derivative(t), w.second_derivative(t));
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::PotentialUndefined(t));
        }
        if i > 0 && i < m - 1 && !(a > 0.0) {
            push("W > 0 in (-1, 1)", t, a, 1.0 - a, &mut violations);
        }
    }
    for t in [-1.0, 1.0] {
        let a = w.value(t);
        if a.abs() > ENDPOINT_TOL {
            push("W(+-1) = 0", t, a, a.abs(), &mut violations);
        }
        let b = w.derivative(t);
        if b.abs() > ENDPOINT_TOL {
            push("W'(+-1) = 0", t, b, b.abs(), &mut violations);
        }
        let c = w.second_derivative(t);
        if !(c > ENDPOINT_TOL) {
            push("W''(+-1) > 0", t, c, 1.0 - c, &mut violations);
        }
    }
    let worst = scored
        .iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|&(_, k)| violations[k].clone());
    Ok(WcondReport {
        pass: violations.is_empty(),
        mesh: m,
        worst,
        violations,
        w2_minus: w.second_derivative(-1.0),
        w2_plus: w.second_derivative(1.0),
    })
}

/// Search settings for the growth constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowSearch {
    /// Points per axis of the `(r, t)` sample grid.
    pub points: usize,
    /// First ladder rung `2^{-first}`.
    pub first: u32,
    /// Last ladder rung `2^{-last}`.
    pub last: u32,
}

impl Default for GrowSearch {
    fn default() -> Self {
        Self {
            points: 512,
            first: 1,
            last: 20,
        }
    }
}

const GROW_TOL: f64 = 1e-12;

/// Both growth inequalities at `c` on a `points x points` grid of `r <= t`.
pub fn grow_holds(w: &Potential, c: f64, points: usize) -> bool {
    let points = points.max(2);
    let near: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let t = -1.0 + c * i as f64 / (points - 1) as f64;
            (t, w.value(t))
        })
        .collect();
    for (i, &(r, wr)) in near.iter().enumerate() {
        for &(t, wt) in &near[i..] {
            let d = t - r;
            let rhs = c * (1.0 + r) * d + c * d * d;
            if wt - wr - rhs < -GROW_TOL * (wt.abs() + wr.abs() + rhs) {
                return false;
            }
        }
    }
    let full: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let t = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
            (t, w.value(t))
        })
        .collect();
    // For fixed r the binding t is the one minimizing W on [r, 1].
    let mut suffix_min = vec![f64::INFINITY; points + 1];
    for i in (0..points).rev() {
        suffix_min[i] = suffix_min[i + 1].min(full[i].1);
    }
    full.iter()
        .enumerate()
        .all(|(i, &(r, wr))| wr - suffix_min[i] <= (1.0 + r) / c + GROW_TOL * wr.abs())
}

/// Largest rung `c = 2^{-j}` of the ladder at which both growth inequalities
/// hold on the sample grid.
pub fn find_grow_constant(w: &Potential) -> Result<f64> {
    find_grow_constant_with(w, &GrowSearch::default())
}

pub fn find_grow_constant_with(w: &Potential, search: &GrowSearch) -> Result<f64> {
    if search.points < 2 || search.first > search.last {
        return Err(Error::InvalidParam("grow ladder needs points >= 2 and first <= last".into()));
    }
    for j in search.first..=search.last {
        let c = 2f64.powi(-(j as i32));
        if grow_holds(w, c, search.points) {
            return Ok(c);
        }
    }
    Err(Error::NoAdmissibleConstant(2f64.powi(-(search.last as i32))))
}
