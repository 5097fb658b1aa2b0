//! Bound-constrained minimization of `E(.; Omega)` and the Euler-Lagrange residual.
//!
//! The unknowns are the cell values inside `Omega`; cells of the box outside
//! `Omega` and the exterior data stay fixed. With `L = A u - b` the
//! interaction vector of the kernel module, the energy is the quadratic
//! `u.L - b_Omega.u/2 + c` plus the potential, and its gradient is
//! `2 L_i + h^n W'(u_i)`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::ExteriorData;
use crate::geometry::{GridGeometry, ModelParams, Region};
use crate::grid::GridFunction;
use crate::kernel::{EnergyBreakdown, NonlocalOperator};
use crate::potential::Potential;
use crate::reduce::{par_rows, tree_sum};

/// Starting iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// Natural extension of the exterior data into the box.
    #[default]
    Extension,
    Constant { value: f64 },
    /// A saved grid function (also the resume path for checkpoints).
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Stop when the max projected residual drops to this value.
    pub tolerance: f64,
    /// Armijo sufficient-decrease parameter.
    pub armijo: f64,
    /// Step shrink factor of the backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub lower: f64,
    pub upper: f64,
    pub init: InitSpec,
    /// Write the iterate every `k` iterations (0 = never).
    pub checkpoint_every: usize,
    pub checkpoint_path: Option<PathBuf>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            tolerance: 1e-6,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            lower: -1.0,
            upper: 1.0,
            init: InitSpec::Extension,
            checkpoint_every: 0,
            checkpoint_path: None,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParam("tolerance must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParam("max_iters must be at least 1".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParam("armijo and backtrack factors must lie in (0,1)".into()));
        }
        if !(self.lower < self.upper) || self.lower < -1.0 || self.upper > 1.0 {
            return Err(Error::InvalidParam("projection bounds must satisfy -1 <= lower < upper <= 1".into()));
        }
        if self.checkpoint_every > 0 && self.checkpoint_path.is_none() {
            return Err(Error::InvalidParam("checkpoint_every needs checkpoint_path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    /// Backtracking found no descent at machine precision.
    MachinePrecision,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub solution: GridFunction,
    pub energy_trace: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop: StopReason,
    pub breakdown: EnergyBreakdown,
    pub label: &'static str,
}

/// Per-cell Euler-Lagrange residual `2 (-Delta)^s u + W'(u)` (the gradient
/// of `E` per unit cell volume) and its projection on feasible directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub raw: Vec<f64>,
    pub projected: Vec<f64>,
    pub max_projected: f64,
}

/// Zero where a bound is active and the residual pushes outward.
fn project(r: f64, u: f64, lo: f64, hi: f64) -> f64 {
    if (u <= lo && r > 0.0) || (u >= hi && r < 0.0) {
        0.0
    } else {
        r
    }
}

pub fn el_residual(params: &ModelParams, u: &GridFunction, w: &Potential) -> Result<Residual> {
    let op = NonlocalOperator::for_function(params, u)?;
    el_residual_with(&op, u, w)
}

pub fn el_residual_with(op: &NonlocalOperator, u: &GridFunction, w: &Potential) -> Result<Residual> {
    let fl = op.frac_laplacian_all(u)?;
    let raw: Vec<f64> = fl.iter().zip(u.values()).map(|(f, v)| 2.0 * f + w.derivative(*v)).collect();
    let projected: Vec<f64> = raw
        .iter()
        .zip(u.values())
        .map(|(r, v)| project(*r, *v, -1.0, 1.0))
        .collect();
    let max_projected = projected.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(Residual {
        raw,
        projected,
        max_projected,
    })
}

/// Energy and gradient on the free cells, with the fixed data folded into
/// `b` and `c`.
struct Problem<'a> {
    op: &'a NonlocalOperator,
    w: &'a Potential,
    free: Vec<usize>,
    b: Vec<f64>,
    c: f64,
    hn: f64,
}

impl<'a> Problem<'a> {
    fn new(op: &'a NonlocalOperator, w: &'a Potential, omega: &Region, values: &[f64]) -> Self {
        let mask = omega.mask();
        let free = omega.cells();
        let num = values.len();
        let rows: Vec<(f64, f64)> = free
            .iter()
            .map(|&i| {
                let (_, m1, m2) = op.exterior_moments(i);
                let mut lin = m1;
                let mut quad = m2;
                for j in 0..num {
                    if !mask[j] {
                        let wij = op.weight(i, j);
                        lin += wij * values[j];
                        quad += wij * values[j] * values[j];
                    }
                }
                (2.0 * lin, quad)
            })
            .collect();
        let b = rows.iter().map(|r| r.0).collect();
        let c = tree_sum(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
        Self {
            op,
            w,
            free,
            b,
            c,
            hn: op.geometry().cell_volume(),
        }
    }

    /// Energy and gradient (over free cells) at `values`.
    fn eval(&self, values: &[f64]) -> (f64, Vec<f64>) {
        let l = self.op.interaction_vector(values);
        let terms: Vec<f64> = self
            .free
            .iter()
            .zip(&self.b)
            .map(|(&i, b)| values[i] * l[i] - 0.5 * b * values[i] + self.hn * self.w.value(values[i]))
            .collect();
        let energy = tree_sum(&terms) + self.c;
        let grad = par_rows(self.free.len(), |k| {
            let i = self.free[k];
            2.0 * l[i] + self.hn * self.w.derivative(values[i])
        });
        (energy, grad)
    }
}

/// Initial iterate for a minimization.
pub fn initial_iterate(geometry: &GridGeometry, exterior: &ExteriorData, init: &InitSpec) -> Result<GridFunction> {
    match init {
        InitSpec::Extension => GridFunction::extension_of(geometry.clone(), exterior.clone()),
        InitSpec::Constant { value } => {
            let values = vec![*value; geometry.num_cells()];
            GridFunction::with_auto_range(geometry.clone(), values, exterior.clone())
        }
        InitSpec::File { path } => {
            let f = GridFunction::load_json(Path::new(path))?;
            if f.geometry() != geometry || f.exterior() != exterior {
                return Err(Error::GeometryMismatch(format!(
                    "initial iterate {path} does not match the problem grid or exterior data"
                )));
            }
            Ok(f)
        }
    }
}

/// Projected gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking along the projection arc.
pub fn minimize(
    params: &ModelParams,
    geometry: &GridGeometry,
    omega: &Region,
    exterior: &ExteriorData,
    w: &Potential,
    opts: &MinimizeOptions,
) -> Result<MinimizeReport> {
    opts.validate()?;
    let op = NonlocalOperator::new(params, geometry, exterior)?;
    let init = initial_iterate(geometry, exterior, &opts.init)?;
    minimize_from(&op, omega, &init, w, opts)
}

/// Minimize starting from a given iterate (values outside `omega` stay fixed).
pub fn minimize_from(
    op: &NonlocalOperator,
    omega: &Region,
    init: &GridFunction,
    w: &Potential,
    opts: &MinimizeOptions,
) -> Result<MinimizeReport> {
    opts.validate()?;
    if omega.mask().len() != op.geometry().num_cells() {
        return Err(Error::GeometryMismatch("region does not match the grid".into()));
    }
    if omega.is_empty() {
        return Err(Error::EmptySet);
    }
    let (lo, hi) = (opts.lower, opts.upper);
    let mut values = init.values().to_vec();
    for (i, v) in values.iter_mut().enumerate() {
        if omega.contains(i) {
            *v = v.clamp(lo, hi);
        } else if !(*v >= -1.0 && *v <= 1.0) {
            return Err(Error::OutOfRange { value: *v, lo: -1.0, hi: 1.0 });
        }
    }
    let problem = Problem::new(op, w, omega, &values);
    let free = problem.free.clone();
    let hn = problem.hn;

    let (mut energy, mut grad) = problem.eval(&values);
    let mut trace = vec![energy];
    let proj_res = |vals: &[f64], g: &[f64]| {
        free.iter()
            .zip(g)
            .map(|(&i, gi)| project(gi / hn, vals[i], lo, hi).abs())
            .fold(0.0f64, f64::max)
    };
    let mut residual = proj_res(&values, &grad);
    let mut step = 1.0 / hn;
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;
    if residual <= opts.tolerance {
        stop = StopReason::Converged;
    } else {
        for it in 0..opts.max_iters {
            let mut alpha = step;
            let mut accepted = None;
            for _ in 0..=opts.max_backtracks {
                let mut trial = values.clone();
                let mut decrease = 0.0;
                let mut moved = false;
                for (k, &i) in free.iter().enumerate() {
                    let v = (values[i] - alpha * grad[k]).clamp(lo, hi);
                    if v != values[i] {
                        moved = true;
                    }
                    decrease += grad[k] * (v - values[i]);
                    trial[i] = v;
                }
                if !moved {
                    break;
                }
                let (e_new, g_new) = problem.eval(&trial);
                if e_new <= energy + opts.armijo * decrease && e_new <= energy {
                    accepted = Some((trial, e_new, g_new));
                    break;
                }
                alpha *= opts.backtrack;
            }
            let Some((trial, e_new, g_new)) = accepted else {
                stop = StopReason::MachinePrecision;
                break;
            };
            // Barzilai-Borwein step for the next trial
            let mut ss = 0.0;
            let mut sy = 0.0;
            for (k, &i) in free.iter().enumerate() {
                let ds = trial[i] - values[i];
                ss += ds * ds;
                sy += ds * (g_new[k] - grad[k]);
            }
            step = if sy > 0.0 { (ss / sy).clamp(1e-3 / hn, 1e6 / hn) } else { 10.0 * alpha };
            values = trial;
            energy = e_new;
            grad = g_new;
            trace.push(energy);
            iterations = it + 1;
            residual = proj_res(&values, &grad);
            if opts.checkpoint_every > 0 && iterations % opts.checkpoint_every == 0 {
                if let Some(path) = &opts.checkpoint_path {
                    init.with_values(values.clone())?.save_json(path)?;
                }
            }
            if residual <= opts.tolerance {
                stop = StopReason::Converged;
                break;
            }
        }
    }
    let solution = init.with_values(values)?;
    let breakdown = op.total_energy(&solution, omega, w)?;
    Ok(MinimizeReport {
        solution,
        energy_trace: trace,
        residual,
        iterations,
        converged: stop == StopReason::Converged,
        stop,
        breakdown,
        label: "computed minimizer (local)",
    })
}
