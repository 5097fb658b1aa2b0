//! Volume and defect profiles of minimizers, the integrated growth
//! inequality, the doubling inequality, the density estimate and energy growth.
//!
//! Balls are centered at the origin and membership is decided by cell center.
//! All operations here require `s < 1/2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::ExteriorData;
use crate::geometry::{ball_volume, GridGeometry, ModelParams, Region};
use crate::grid::GridFunction;
use crate::kernel::NonlocalOperator;
use crate::minimize::{minimize, MinimizeOptions};
use crate::potential::Potential;

fn gate(n: usize, s: f64) -> Result<ModelParams> {
    if s >= 0.5 {
        return Err(Error::DensityRange(s));
    }
    ModelParams::new(n, s)
}

fn origin(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidParam("empty radius grid".into()));
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParam("radii must be positive".into()));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParam("radii must increase".into()));
    }
    Ok(())
}

fn fits(g: &GridGeometry, r: f64) -> Result<()> {
    let half = g.inscribed_radius(&origin(g.dim()));
    if r > half * (1.0 + 1e-12) {
        return Err(Error::RadiusTooLarge { radius: r, half_width: half });
    }
    Ok(())
}

/// Volume of the shell of cells cut by the sphere of radius `r`.
fn layer_volume(n: usize, r: f64, h: f64) -> f64 {
    let d = 0.5 * h * (n as f64).sqrt();
    ball_volume(n) * ((r + d).powi(n as i32) - (r - d).max(0.0).powi(n as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeTable {
    pub theta: f64,
    pub radii: Vec<f64>,
    pub v: Vec<f64>,
    /// Cell-layer discretization error of each entry.
    pub boundary_error: Vec<f64>,
}

impl VolumeTable {
    /// Table from given values, used for synthetic profiles.
    pub fn synthetic(radii: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_radii(&radii)?;
        if radii.len() != v.len() {
            return Err(Error::InvalidParam("radii and values differ in length".into()));
        }
        let n = radii.len();
        Ok(Self {
            theta: f64::NAN,
            radii,
            v,
            boundary_error: vec![0.0; n],
        })
    }

    fn require_monotone(&self) -> Result<()> {
        if self.v.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParam("V must be nonnegative".into()));
        }
        if let Some(i) = self.v.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidParam(format!(
                "V decreases at R = {}",
                self.radii[i + 1]
            )));
        }
        Ok(())
    }

    /// Piecewise linear interpolation with `V(0) = 0`.
    pub fn at(&self, r: f64) -> Option<f64> {
        let last = *self.radii.last()?;
        if r < 0.0 || r > last * (1.0 + 1e-12) {
            return None;
        }
        let (mut t0, mut v0) = (0.0, 0.0);
        for (&t1, &v1) in self.radii.iter().zip(&self.v) {
            if (r - t1).abs() <= 1e-12 * t1 {
                return Some(v1);
            }
            if r < t1 {
                return Some(v0 + (v1 - v0) * (r - t0) / (t1 - t0));
            }
            t0 = t1;
            v0 = v1;
        }
        self.v.last().copied()
    }
}

/// `V(R) = |{u > theta} cap B_R|`.
pub fn volume_profile(u: &GridFunction, theta: f64, radii: &[f64]) -> Result<VolumeTable> {
    check_radii(radii)?;
    let g = u.geometry();
    let n = g.dim();
    let o = origin(n);
    let hn = g.cell_volume();
    let mut v = Vec::with_capacity(radii.len());
    for &r in radii {
        fits(g, r)?;
        let ball = Region::ball(g, &o, r);
        let count = (0..g.num_cells())
            .filter(|&i| ball.contains(i) && u.value(i) > theta)
            .count();
        v.push(count as f64 * hn);
    }
    Ok(VolumeTable {
        theta,
        radii: radii.to_vec(),
        v,
        boundary_error: radii.iter().map(|r| layer_volume(n, *r, g.h())).collect(),
    })
}

/// `A(R) = c_grow \int_{B_R cap {w < u <= theta}} (u - w)^2`.
pub fn defect_profile(
    u: &GridFunction,
    w: &GridFunction,
    theta: f64,
    c_grow: f64,
    radii: &[f64],
) -> Result<Vec<f64>> {
    check_radii(radii)?;
    let g = u.geometry();
    if w.geometry() != g {
        return Err(Error::GeometryMismatch("barrier lives on a different grid".into()));
    }
    let o = origin(g.dim());
    let hn = g.cell_volume();
    radii
        .iter()
        .map(|&r| {
            fits(g, r)?;
            let ball = Region::ball(g, &o, r);
            let sum: f64 = (0..g.num_cells())
                .filter(|&i| ball.contains(i))
                .map(|i| (u.value(i), w.value(i)))
                .filter(|(a, b)| b < a && *a <= theta)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            Ok(c_grow * sum * hn)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct La8Row {
    pub r: f64,
    /// `\int_0^R (R+1-t)^{-2s} dV(t)`.
    pub rhs: f64,
    /// `V(R-K)^{(n-2s)/n}`.
    pub lhs_shape: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct La8Report {
    pub k: f64,
    pub rows: Vec<La8Row>,
    /// Smallest defined ratio: the empirical `c3`.
    pub c3: Option<f64>,
}

/// `\int_a^b (R+1-t)^{-2s} dt`.
fn kernel_segment(r: f64, s: f64, a: f64, b: f64) -> f64 {
    let e = 1.0 - 2.0 * s;
    ((r + 1.0 - a).powf(e) - (r + 1.0 - b).powf(e)) / e
}

/// Stieltjes sum for the integrated growth inequality.
///
/// `V` is read as piecewise linear between grid radii (with `V(0) = 0`), so
/// each increment is weighted by the exact mean of `(R+1-t)^{-2s}` over its
/// interval.
pub fn check_la8(table: &VolumeTable, n: usize, s: f64, k: f64) -> Result<La8Report> {
    gate(n, s)?;
    table.require_monotone()?;
    if !(k >= 0.0) {
        return Err(Error::InvalidParam(format!("offset K must be nonnegative, got {k}")));
    }
    let theta = (n as f64 - 2.0 * s) / n as f64;
    let mut rows = Vec::new();
    for (idx, &r) in table.radii.iter().enumerate() {
        if r - k <= 0.0 {
            continue;
        }
        let (mut t0, mut v0) = (0.0, 0.0);
        let mut rhs = 0.0;
        for (&t1, &v1) in table.radii[..=idx].iter().zip(&table.v[..=idx]) {
            if t1 > t0 && v1 > v0 {
                rhs += (v1 - v0) / (t1 - t0) * kernel_segment(r, s, t0, t1);
            }
            t0 = t1;
            v0 = v1;
        }
        let lhs_shape = table.at(r - k).unwrap_or(0.0).powf(theta);
        let ratio = if lhs_shape > 0.0 { Some(rhs / lhs_shape) } else { None };
        rows.push(La8Row { r, rhs, lhs_shape, ratio });
    }
    let c3 = rows.iter().filter_map(|r| r.ratio).reduce(f64::min);
    Ok(La8Report { k, rows, c3 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingRow {
    pub r: f64,
    pub ratio: Option<f64>,
    /// `V(2r) = 0`.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub rows: Vec<DoublingRow>,
    /// Largest ratio: the empirical `C`.
    pub c: Option<f64>,
    pub median: Option<f64>,
}

/// `r^{2s} V(r)^{(n-2s)/n} / V(2r)` for every grid radius whose double is covered.
pub fn check_doubling(table: &VolumeTable, n: usize, s: f64) -> Result<DoublingReport> {
    gate(n, s)?;
    let theta = (n as f64 - 2.0 * s) / n as f64;
    let mut rows = Vec::new();
    for (&r, &v) in table.radii.iter().zip(&table.v) {
        let Some(v2) = table.at(2.0 * r) else { continue };
        if v2 > 0.0 {
            rows.push(DoublingRow {
                r,
                ratio: Some(r.powf(2.0 * s) * v.powf(theta) / v2),
                flagged: false,
            });
        } else {
            rows.push(DoublingRow { r, ratio: None, flagged: true });
        }
    }
    let mut defined: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let c = defined.iter().copied().reduce(f64::max);
    defined.sort_by(f64::total_cmp);
    let median = match defined.len() {
        0 => None,
        m if m % 2 == 1 => Some(defined[m / 2]),
        m => Some(0.5 * (defined[m / 2 - 1] + defined[m / 2])),
    };
    Ok(DoublingReport { rows, c, median })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub u_origin: f64,
    pub hypothesis: bool,
    pub radii: Vec<f64>,
    /// `V(R) / R^n` with threshold `theta2`.
    pub ratios: Vec<f64>,
    pub min_ratio: Option<f64>,
    /// Largest radius whose ratio is below the floor.
    pub r_bar: Option<f64>,
    pub unit_ball: f64,
    pub regime: String,
    pub skipped: bool,
}

/// Density estimate `|{u > theta2} cap B_R| >= c R^n` under `u(0) > theta1`.
///
/// The origin cell is the half-open cell containing `0`.
pub fn density_theorem_check(
    params: &ModelParams,
    u: &GridFunction,
    theta1: f64,
    theta2: f64,
    radii: &[f64],
    floor: f64,
) -> Result<DensityReport> {
    params.require_density()?;
    let g = u.geometry();
    let cell = g
        .cell_containing(&origin(g.dim()))
        .ok_or_else(|| Error::InvalidParam("origin lies outside the grid".into()))?;
    let u0 = u.value(cell);
    let hypothesis = u0 > theta1;
    let mut report = DensityReport {
        u_origin: u0,
        hypothesis,
        radii: radii.to_vec(),
        ratios: Vec::new(),
        min_ratio: None,
        r_bar: None,
        unit_ball: ball_volume(g.dim()),
        regime: params.regime_label().into(),
        skipped: !hypothesis,
    };
    if !hypothesis {
        return Ok(report);
    }
    let table = volume_profile(u, theta2, radii)?;
    let n = g.dim() as i32;
    report.ratios = table.radii.iter().zip(&table.v).map(|(r, v)| v / r.powi(n)).collect();
    report.min_ratio = report.ratios.iter().copied().reduce(f64::min);
    report.r_bar = radii
        .iter()
        .zip(&report.ratios)
        .filter(|(_, q)| **q < floor)
        .map(|(r, _)| *r)
        .reduce(f64::max);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub radii: Vec<f64>,
    pub energies: Vec<f64>,
    pub iterations: Vec<usize>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Root mean square of the fit residual in log space.
    pub residual: Option<f64>,
    pub target: f64,
    pub degenerate: bool,
}

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    (slope, intercept, (rss / m).sqrt())
}

/// Minimizer on `B_R` of the box `[-R, R]^n` at spacing `h`.
pub fn minimize_on_ball(
    params: &ModelParams,
    w: &Potential,
    exterior: &ExteriorData,
    r: f64,
    h: f64,
    opts: &MinimizeOptions,
) -> Result<(GridGeometry, Region, crate::minimize::MinimizeReport)> {
    let m = (2.0 * r / h).round();
    if !(m >= 1.0) || ((m * h - 2.0 * r).abs() > 1e-9 * r) {
        return Err(Error::InvalidParam(format!("radius {r} is not a multiple of h/2 = {}", h / 2.0)));
    }
    let g = GridGeometry::cube(params.n, 0.0, r, m as usize)?;
    let omega = Region::ball(&g, &origin(params.n), r);
    let report = minimize(params, &g, &omega, exterior, w, opts)?;
    Ok((g, omega, report))
}

/// Energy on `B_R` of minimizers over a sweep of radii, with the exponent of
/// `log E` against `log R`.
pub fn energy_growth_check(
    params: &ModelParams,
    w: &Potential,
    exterior: &ExteriorData,
    radii: &[f64],
    h: f64,
    opts: &MinimizeOptions,
) -> Result<GrowthReport> {
    params.require_density()?;
    check_radii(radii)?;
    if radii.len() < 4 {
        return Err(Error::InvalidParam("need at least four radii".into()));
    }
    let runs: Vec<Result<(f64, usize)>> = radii
        .par_iter()
        .map(|&r| {
            let (_, _, rep) = minimize_on_ball(params, w, exterior, r, h, opts)?;
            if !rep.converged {
                return Err(Error::Solver(format!(
                    "no convergence at R = {r}: residual {:e} after {} iterations",
                    rep.residual, rep.iterations
                )));
            }
            Ok((rep.breakdown.total, rep.iterations))
        })
        .collect();
    let mut energies = Vec::new();
    let mut iterations = Vec::new();
    for run in runs {
        let (e, it) = run?;
        energies.push(e);
        iterations.push(it);
    }
    let target = params.n as f64 - 2.0 * params.s;
    let mut report = GrowthReport {
        radii: radii.to_vec(),
        energies: energies.clone(),
        iterations,
        slope: None,
        intercept: None,
        residual: None,
        target,
        degenerate: true,
    };
    if energies.iter().all(|e| *e > 0.0) {
        let x: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let y: Vec<f64> = energies.iter().map(|e| e.ln()).collect();
        let (slope, intercept, res) = fit_line(&x, &y);
        report.slope = Some(slope);
        report.intercept = Some(intercept);
        report.residual = Some(res);
        report.degenerate = false;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSplitReport {
    pub radius: f64,
    /// `|{u > theta_hi} cap B_R|`.
    pub upper: f64,
    /// `|{theta_lo < u <= theta_hi} cap B_R|`.
    pub middle: f64,
    /// `|{u > theta_lo} cap B_R|`.
    pub v: f64,
    pub partition_exact: bool,
    pub energy: f64,
    pub inf_w: f64,
    pub energy_bound_holds: bool,
}

/// Smallest sampled value of `W` on `[a, b]`.
pub fn inf_potential(w: &Potential, a: f64, b: f64) -> f64 {
    const SAMPLES: usize = 4096;
    (0..=SAMPLES)
        .map(|i| w.value(a + (b - a) * i as f64 / SAMPLES as f64))
        .fold(f64::INFINITY, f64::min)
}

/// Volume partition by two thresholds and the potential lower bound on the
/// energy of `u` in `omega`, where `omega` is `B_R`.
pub fn phase_split_check(
    op: &NonlocalOperator,
    u: &GridFunction,
    omega: &Region,
    w: &Potential,
    theta_lo: f64,
    theta_hi: f64,
    radius: f64,
) -> Result<PhaseSplitReport> {
    if !(theta_lo < theta_hi) {
        return Err(Error::InvalidParam("need theta_lo < theta_hi".into()));
    }
    let g = u.geometry();
    let hn = g.cell_volume();
    let ball = Region::ball(g, &origin(g.dim()), radius);
    let count = |pred: &dyn Fn(f64) -> bool| {
        (0..g.num_cells()).filter(|&i| ball.contains(i) && pred(u.value(i))).count()
    };
    let upper = count(&|v| v > theta_hi);
    let middle = count(&|v| v > theta_lo && v <= theta_hi);
    let all = count(&|v| v > theta_lo);
    let energy = op.total_energy(u, omega, w)?.total;
    let inf_w = inf_potential(w, theta_lo, theta_hi);
    let slack = op.error_model().relative_slack();
    let bound = inf_w * middle as f64 * hn;
    Ok(PhaseSplitReport {
        radius,
        upper: upper as f64 * hn,
        middle: middle as f64 * hn,
        v: all as f64 * hn,
        partition_exact: upper + middle == all,
        energy,
        inf_w,
        energy_bound_holds: energy >= bound * (1.0 - slack),
    })
}

/// Everything the density pipeline reports for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTables {
    pub volume: VolumeTable,
    pub defect: Option<Vec<f64>>,
    pub la8: La8Report,
    pub doubling: DoublingReport,
    pub density: DensityReport,
    pub growth: Option<GrowthReport>,
}
