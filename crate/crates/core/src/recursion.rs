//! Growth recursion: hypothesis checks for
//! `r^sigma alpha(r) V(r)^{(nu-sigma)/nu} <= C V(gamma r)` and the lower bound
//! `V(r) >= c r^nu` propagated along `r_j = gamma^j R_o`.

use serde::{Deserialize, Serialize};

use crate::density::fit_line;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecursionParams {
    pub sigma: f64,
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub r_o: f64,
    pub c: f64,
}

impl RecursionParams {
    pub fn new(sigma: f64, mu: f64, nu: f64, gamma: f64, r_o: f64, c: f64) -> Result<Self> {
        let p = Self { sigma, mu, nu, gamma, r_o, c };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParam(what.to_string()));
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return bad("mu must be positive");
        }
        if !(self.nu > self.sigma && self.nu.is_finite()) {
            return bad("nu must exceed sigma");
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return bad("gamma must exceed 1");
        }
        if !(self.r_o > 1.0 && self.r_o.is_finite()) {
            return bad("R_o must exceed 1");
        }
        if !(self.c > 1.0 && self.c.is_finite()) {
            return bad("C must exceed 1");
        }
        Ok(())
    }

    fn power(&self) -> f64 {
        (self.nu - self.sigma) / self.nu
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GrowthFunction {
    /// `scale * r^exponent`.
    Power { scale: f64, exponent: f64 },
    Constant { value: f64 },
    /// Nondecreasing samples, interpolated linearly in `(log r, log V)`.
    Table { r: Vec<f64>, v: Vec<f64> },
}

impl GrowthFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Power { scale, exponent } => {
                if !(*scale > 0.0) || !(*exponent >= 0.0) {
                    return Err(Error::InvalidParam("power law needs scale > 0 and exponent >= 0".into()));
                }
            }
            Self::Constant { value } => {
                if !(*value > 0.0) {
                    return Err(Error::InvalidParam(format!("V must be positive, got {value}")));
                }
            }
            Self::Table { r, v } => {
                if r.len() != v.len() || r.is_empty() {
                    return Err(Error::InvalidParam("table needs matching nonempty columns".into()));
                }
                if r.windows(2).any(|w| !(w[1] > w[0])) || !(r[0] > 0.0) {
                    return Err(Error::InvalidParam("table radii must be positive and increasing".into()));
                }
                if let Some(x) = v.iter().find(|x| !(**x > 0.0)) {
                    return Err(Error::InvalidParam(format!("V must be positive, got {x}")));
                }
                if v.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::InvalidParam("V must be nondecreasing".into()));
                }
            }
        }
        Ok(())
    }

    /// Radii where `V` is known.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            Self::Table { r, .. } => (r[0], *r.last().unwrap()),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        match self {
            Self::Power { scale, exponent } => Some(scale * x.powf(*exponent)),
            Self::Constant { value } => Some(*value),
            Self::Table { r, v } => {
                let (lo, hi) = self.domain();
                if x < lo * (1.0 - 1e-12) || x > hi * (1.0 + 1e-12) {
                    return None;
                }
                let k = r.partition_point(|t| *t < x).min(r.len() - 1);
                if k == 0 || (r[k] - x).abs() <= 1e-12 * x {
                    return Some(v[k]);
                }
                let t = (x.ln() - r[k - 1].ln()) / (r[k].ln() - r[k - 1].ln());
                Some((v[k - 1].ln() * (1.0 - t) + v[k].ln() * t).exp())
            }
        }
    }
}

/// `alpha(r) = min(1, log V / log r)`.
pub fn alpha(r: f64, v: f64) -> f64 {
    (v.ln() / r.ln()).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRow {
    pub r: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub pass: bool,
    pub first_violation: Option<f64>,
    pub v_at_r_o: f64,
    /// Radii actually checked; the hypothesis is only verified there.
    pub verified_range: Option<(f64, f64)>,
    pub rows: Vec<HypothesisRow>,
}

/// Both hypotheses on the grid points `r >= R_o` where `V(gamma r)` is known.
pub fn check_hypothesis(v: &GrowthFunction, p: &RecursionParams, grid: &[f64]) -> Result<HypothesisReport> {
    v.validate()?;
    p.validate()?;
    let v_o = v
        .eval(p.r_o)
        .ok_or_else(|| Error::InvalidParam(format!("V is not known at R_o = {}", p.r_o)))?;
    let mut report = HypothesisReport {
        pass: true,
        first_violation: None,
        v_at_r_o: v_o,
        verified_range: None,
        rows: Vec::new(),
    };
    if v_o < p.mu {
        report.pass = false;
        report.first_violation = Some(p.r_o);
        return Ok(report);
    }
    for &r in grid.iter().filter(|r| **r >= p.r_o) {
        let (Some(vr), Some(vg)) = (v.eval(r), v.eval(p.gamma * r)) else { continue };
        let lhs = r.powf(p.sigma) * alpha(r, vr) * vr.powf(p.power());
        let rhs = p.c * vg;
        let holds = lhs <= rhs * (1.0 + 1e-12);
        if !holds && report.first_violation.is_none() {
            report.first_violation = Some(r);
            report.pass = false;
        }
        report.verified_range = Some(match report.verified_range {
            None => (r, r),
            Some((a, _)) => (a, r),
        });
        report.rows.push(HypothesisRow { r, lhs, rhs, holds });
    }
    Ok(report)
}

/// `R_o gamma^j` for `j = 0..count`.
pub fn geometric_grid(r_o: f64, gamma: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| r_o * gamma.powi(j as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub r: Vec<f64>,
    pub lower: Vec<f64>,
    /// `V(r_j)` when `V` is known there.
    pub v: Vec<Option<f64>>,
    /// Slope of `log L_j` against `log r_j` over the last half of the chain.
    pub exponent: f64,
    /// `min L_j / r_j^nu` over the last half: the empirical `c`.
    pub c_lower: f64,
}

/// `L_0 = mu`, `L_{j+1} = r_j^sigma alpha(r_j, L_j) L_j^{(nu-sigma)/nu} / C`.
///
/// When `V` is known at `r_j` and `gamma r_j` the hypothesis is checked there
/// and a violation aborts the chain.
pub fn propagate_lower_bound(v: &GrowthFunction, p: &RecursionParams, steps: usize) -> Result<ChainReport> {
    v.validate()?;
    p.validate()?;
    if steps < 2 {
        return Err(Error::InvalidParam("need at least two steps".into()));
    }
    if let Some(v_o) = v.eval(p.r_o) {
        if v_o < p.mu {
            return Err(Error::Hypothesis(format!("V(R_o) = {v_o} < mu = {}", p.mu)));
        }
    }
    let mut r = vec![p.r_o];
    let mut lower = vec![p.mu];
    for j in 0..steps {
        let (rj, lj) = (r[j], lower[j]);
        if let (Some(vr), Some(vg)) = (v.eval(rj), v.eval(p.gamma * rj)) {
            let lhs = rj.powf(p.sigma) * alpha(rj, vr) * vr.powf(p.power());
            if lhs > p.c * vg * (1.0 + 1e-12) {
                return Err(Error::Hypothesis(format!("growth hypothesis fails at r = {rj}")));
            }
        }
        let next = rj.powf(p.sigma) * alpha(rj, lj) * lj.powf(p.power()) / p.c;
        if !(next > 0.0) || !next.is_finite() {
            return Err(Error::Hypothesis(format!(
                "lower bound lost positivity after r = {rj} (L = {lj})"
            )));
        }
        r.push(p.gamma * rj);
        lower.push(next);
    }
    let half = r.len() / 2;
    let x: Vec<f64> = r[half..].iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = lower[half..].iter().map(|t| t.ln()).collect();
    let (exponent, _, _) = fit_line(&x, &y);
    let c_lower = r[half..]
        .iter()
        .zip(&lower[half..])
        .map(|(t, l)| l / t.powf(p.nu))
        .fold(f64::INFINITY, f64::min);
    Ok(ChainReport {
        v: r.iter().map(|t| v.eval(*t)).collect(),
        r,
        lower,
        exponent,
        c_lower,
    })
}
