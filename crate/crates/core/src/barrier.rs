//! Radial barrier profiles and their two defining properties: the
//! supersolution-type bound `-(-Delta)^s w <= tau (1 + w)` in `B_R` and the
//! two-sided comparability of `1 + w` with `(R + 1 - |x|)^{-2s}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::ExteriorData;
use crate::geometry::{GridGeometry, ModelParams};
use crate::grid::GridFunction;
use crate::kernel::NonlocalOperator;

/// Absolute tolerance on the `al1` margin.
pub const MARGIN_TOL: f64 = 1e-8;

/// Smallest admissible value of `1 + w`.
pub const BARRIER_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierParams {
    pub radius: f64,
    pub tau: f64,
    pub c_b: f64,
    /// Ceiling for `1 + w`.
    #[serde(default = "default_clamp")]
    pub clamp: f64,
}

fn default_clamp() -> f64 {
    2.0
}

impl BarrierParams {
    pub fn new(radius: f64, tau: f64, c_b: f64) -> Result<Self> {
        let p = Self { radius, tau, c_b, clamp: 2.0 };
        p.validate()?;
        Ok(p)
    }

    /// `tau = c_grow / 4`.
    pub fn from_grow(radius: f64, c_grow: f64, c_b: f64) -> Result<Self> {
        Self::new(radius, c_grow / 4.0, c_b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius >= 1.0) {
            return Err(Error::InvalidParam(format!("barrier radius must be >= 1, got {}", self.radius)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParam(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.c_b > 1.0) {
            return Err(Error::InvalidParam(format!("C_b must exceed 1, got {}", self.c_b)));
        }
        if !(self.clamp > 1.0 && self.clamp <= 2.0) {
            return Err(Error::InvalidParam(format!("clamp must lie in (1, 2], got {}", self.clamp)));
        }
        Ok(())
    }

    /// The radius satisfies the hypotheses `R >= C` and `C R^{-2s} <= 2`
    /// (a nonempty range) with `C = C_b`.
    pub fn admissible(&self, s: f64) -> bool {
        self.radius >= self.c_b && self.c_b * self.radius.powf(-2.0 * s) <= 2.0
    }

    /// `1 + w` at distance `r` from the origin.
    pub fn profile(&self, r: f64, n_s: f64) -> f64 {
        if r >= self.radius {
            return 2.0;
        }
        (self.c_b * (self.radius + 1.0 - r).powf(-2.0 * n_s)).min(self.clamp)
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cube `[-R, R]^n` at spacing `h`.
pub fn barrier_grid(n: usize, radius: f64, h: f64) -> Result<GridGeometry> {
    let m = (2.0 * radius / h).round();
    if !(m >= 1.0) || (m * h - 2.0 * radius).abs() > 1e-9 * radius {
        return Err(Error::InvalidParam(format!("2R = {} is not a multiple of h = {h}", 2.0 * radius)));
    }
    GridGeometry::cube(n, 0.0, radius, m as usize)
}

/// Radial barrier with `w = 1` for `|x| >= R` and
/// `1 + w = min(clamp, C_b (R + 1 - |x|)^{-2s})` inside.
pub fn build_barrier(params: &ModelParams, p: &BarrierParams, g: &GridGeometry) -> Result<GridFunction> {
    p.validate()?;
    params.require_density()?;
    let n = g.dim();
    let half = g.inscribed_radius(&vec![0.0; n]);
    if p.radius > half * (1.0 + 1e-12) {
        return Err(Error::RadiusTooLarge { radius: p.radius, half_width: half });
    }
    let vals = (0..g.num_cells())
        .map(|i| {
            let c = g.cell_center(i);
            p.profile(norm(&c[..n]), params.s) - 1.0
        })
        .collect();
    GridFunction::new(g.clone(), vals, ExteriorData::constant(1.0), (-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub radius: f64,
    pub value: f64,
    pub frac_laplacian: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub params: BarrierParams,
    /// `-(-Delta)^s w - tau (1 + w)` per cell in `B_R`, sorted by radius.
    pub margins: Vec<MarginRow>,
    pub worst_margin: f64,
    pub worst_radius: f64,
    pub al1_pass: bool,
    /// Smallest `C` with `rho^{-2s}/C <= 1 + w <= C rho^{-2s}` in `B_R`.
    pub al2_constant: f64,
    /// The same constant predicted by the profile formula.
    pub al2_expected: f64,
    /// `rho^{-2s} <= 1 + w` with constant one.
    pub al2_lower_exact: bool,
    pub min_one_plus_w: f64,
    /// `w = 1` everywhere.
    pub degenerate: bool,
    pub admissible: bool,
    pub slack: f64,
}

/// Check both barrier properties on the cells of `B_R`.
pub fn verify_barrier(params: &ModelParams, w: &GridFunction, p: &BarrierParams) -> Result<BarrierReport> {
    p.validate()?;
    params.require_density()?;
    let g = w.geometry();
    let n = g.dim();
    if w.exterior().constant_value() != Some(1.0) {
        return Err(Error::Hypothesis("barrier must equal 1 outside the grid".into()));
    }
    let radii: Vec<f64> = (0..g.num_cells()).map(|i| norm(&g.cell_center(i)[..n])).collect();
    if let Some(i) = (0..g.num_cells()).find(|&i| radii[i] >= p.radius && w.value(i) != 1.0) {
        return Err(Error::Hypothesis(format!(
            "w = {} at |x| = {} outside B_R",
            w.value(i),
            radii[i]
        )));
    }
    let op = NonlocalOperator::for_function(params, w)?;
    let slack = op.error_model().relative_slack();
    let inside: Vec<usize> = (0..g.num_cells()).filter(|&i| radii[i] < p.radius).collect();
    let lap: Vec<Result<f64>> = inside.par_iter().map(|&i| op.frac_laplacian(w, i)).collect();
    let mut margins = Vec::with_capacity(inside.len());
    let mut al1_pass = true;
    let mut al2_constant: f64 = 1.0;
    let mut al2_expected: f64 = 1.0;
    let mut al2_lower_exact = true;
    let mut min_one_plus_w = f64::INFINITY;
    let e = -2.0 * params.s;
    for (&i, l) in inside.iter().zip(lap) {
        let l = l?;
        let one_plus = 1.0 + w.value(i);
        let margin = -l - p.tau * one_plus;
        if margin > MARGIN_TOL + slack * l.abs() {
            al1_pass = false;
        }
        let rho = (p.radius + 1.0 - radii[i]).powf(e);
        al2_constant = al2_constant.max(one_plus / rho).max(rho / one_plus);
        let predicted = p.profile(radii[i], params.s);
        al2_expected = al2_expected.max(predicted / rho).max(rho / predicted);
        al2_lower_exact &= rho <= one_plus;
        min_one_plus_w = min_one_plus_w.min(one_plus);
        margins.push(MarginRow {
            radius: radii[i],
            value: w.value(i),
            frac_laplacian: l,
            margin,
        });
    }
    margins.sort_by(|a, b| a.radius.total_cmp(&b.radius));
    let (worst_margin, worst_radius) = margins
        .iter()
        .fold((f64::NEG_INFINITY, f64::NAN), |acc, m| if m.margin > acc.0 { (m.margin, m.radius) } else { acc });
    Ok(BarrierReport {
        params: p.clone(),
        margins,
        worst_margin,
        worst_radius,
        al1_pass,
        al2_constant,
        al2_expected,
        al2_lower_exact,
        min_one_plus_w,
        degenerate: w.values().iter().all(|v| *v == 1.0),
        admissible: p.admissible(params.s),
        slack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSearch {
    pub c_b: f64,
    /// `(C_b, worst margin)` for every admissible candidate.
    pub tried: Vec<(f64, f64)>,
    pub report: BarrierReport,
}

/// Ladder `C_b = 2^{j/2}` starting at the clamp (so `w` is continuous across
/// `|x| = R`) up to `2^{max_steps/2}`, keeping admissible candidates only.
pub fn c_b_ladder(radius: f64, s: f64, clamp: f64, max_steps: u32) -> Vec<f64> {
    (1..=max_steps)
        .map(|j| 2f64.powf(j as f64 / 2.0))
        .filter(|c| *c >= clamp)
        .filter(|c| radius >= *c && c * radius.powf(-2.0 * s) <= 2.0)
        .collect()
}

/// Smallest admissible `C_b` on the ladder whose barrier passes `al1` and
/// keeps `1 + w` above the floor.
pub fn search_c_b(
    params: &ModelParams,
    g: &GridGeometry,
    radius: f64,
    tau: f64,
    max_steps: u32,
) -> Result<BarrierSearch> {
    let mut tried = Vec::new();
    for c_b in c_b_ladder(radius, params.s, default_clamp(), max_steps) {
        let p = BarrierParams::new(radius, tau, c_b)?;
        let w = build_barrier(params, &p, g)?;
        let report = verify_barrier(params, &w, &p)?;
        tried.push((c_b, report.worst_margin));
        if report.al1_pass && report.min_one_plus_w >= BARRIER_FLOOR {
            return Ok(BarrierSearch { c_b, tried, report });
        }
    }
    Err(Error::Solver(format!(
        "no admissible C_b up to 2^{} makes the barrier pass at R = {radius}; tried {tried:?}",
        max_steps as f64 / 2.0
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub worst_margin: f64,
    pub worst_radius: f64,
    pub al1_pass: bool,
    pub admissible: bool,
    pub degenerate: bool,
    pub al2_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub c_b: f64,
    pub tau: f64,
    pub h: f64,
    pub rows: Vec<SweepRow>,
    pub nonincreasing: bool,
    /// Smallest radius from which every admissible barrier of the sweep passes.
    pub r0: Option<f64>,
}

/// `al1` at fixed `C_b` and `tau` over a sweep of radii on grids of spacing `h(R)`.
pub fn barrier_sweep<H: Fn(f64) -> f64>(
    params: &ModelParams,
    radii: &[f64],
    tau: f64,
    c_b: f64,
    h: H,
) -> Result<SweepReport> {
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let g = barrier_grid(params.n, r, h(r))?;
        let p = BarrierParams::new(r, tau, c_b)?;
        let w = build_barrier(params, &p, &g)?;
        let rep = verify_barrier(params, &w, &p)?;
        rows.push(SweepRow {
            radius: r,
            worst_margin: rep.worst_margin,
            worst_radius: rep.worst_radius,
            al1_pass: rep.al1_pass,
            admissible: rep.admissible,
            degenerate: rep.degenerate,
            al2_constant: rep.al2_constant,
        });
    }
    let nonincreasing = rows.windows(2).all(|w| w[1].worst_margin <= w[0].worst_margin);
    let ok = |r: &SweepRow| r.admissible && !r.degenerate && r.al1_pass;
    let r0 = (0..rows.len())
        .find(|&i| rows[i..].iter().all(ok))
        .map(|i| rows[i].radius);
    Ok(SweepReport {
        c_b,
        tau,
        h: radii.first().map(|r| h(*r)).unwrap_or(f64::NAN),
        rows,
        nonincreasing,
        r0,
    })
}
