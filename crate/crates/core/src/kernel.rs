//! Nonlocal quadrature for the kernel `|x - y|^{-n-2s}`.
//!
//! Functions are piecewise constant on a uniform grid, so every double
//! integral reduces to cell-pair weights
//!
//! ```text
//! w_ij = \int_{cell i} \int_{cell j} |x - y|^{-n-2s} dy dx
//! ```
//!
//! plus, per cell, moments of the exterior data. On a uniform grid `w_ij`
//! depends only on the integer offset `j - i`, and scaling gives
//! `w_ij = h^{n-2s} W(j - i)` with `W` the weight for unit cells. The unit
//! table is built once per `(n, s, settings, extent)` and cached.
//!
//! Weight rules for unit cells at integer offset `o`:
//!
//! * `|o| > kappa`: tensor Gauss-Legendre on the tent representation
//!   `W(o) = \int_{[-1,1]^n} |o + z|^{-n-2s} prod_k (1 - |z_k|) dz`
//!   (`far_order = 1` falls back to the midpoint value `|o|^{-n-2s}`).
//! * near, non-touching: 2^n-fold subdivision of both cells up to
//!   `near_depth` levels.
//! * touching (`o` in `{-1,0,1}^n`): subdividing a touching pair yields
//!   touching children of the same shapes at half the size, so the touching
//!   weights solve a small linear fixed-point system which is contracting for
//!   `s < 1/2`. Solving it removes the face singularity from the quadrature.
//!
//! The same self-similarity gives the cell self-complement integral
//! `S = \int_Q \int_{C Q} |x-y|^{-n-2s}` in closed form from the touching
//! weights, and from it the box-complement moment of every cell:
//! `M0_i = h^{n-2s} S - sum_{j != i} w_ij`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::ExteriorData;
use crate::geometry::{ball_volume, sphere_measure, GridGeometry, ModelParams, Region, MAX_DIM};
use crate::grid::GridFunction;
use crate::potential::Potential;
use crate::quadrature::{for_each_tensor_point, GaussRule};
use crate::reduce::{par_rows, par_rows_sum, tree_sum};

const TOUCH_SLOTS: usize = 27;

/// Gauss rule for `\int_{-1}^{1} f(z) (1 - |z|) dz`, split at the kink.
fn tent_rule(order: usize) -> Vec<(f64, f64)> {
    let rule = GaussRule::new(order);
    let mut tent = Vec::with_capacity(2 * rule.len());
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        tent.push((-t, w * (1.0 - t)));
        tent.push((*t, w * (1.0 - t)));
    }
    tent
}

fn touching(o: &[i64; MAX_DIM], n: usize) -> bool {
    (0..n).all(|k| o[k].abs() <= 1) && (0..n).any(|k| o[k] != 0)
}

fn touch_slot(o: &[i64; MAX_DIM], n: usize) -> usize {
    (0..n).fold(0, |acc, k| acc * 3 + (o[k] + 1) as usize)
}

fn norm(o: &[f64; MAX_DIM], n: usize) -> f64 {
    (0..n).map(|k| o[k] * o[k]).sum::<f64>().sqrt()
}

/// Visit `d in {-1,0,1}^n` with the number of child pairs `(a, b)`,
/// `a, b in {0,1}^n`, having `b - a = d`.
fn for_each_child_shift<F: FnMut(&[i64; MAX_DIM], f64)>(n: usize, mut f: F) {
    let total = 3usize.pow(n as u32);
    for flat in 0..total {
        let mut rem = flat;
        let mut d = [0i64; MAX_DIM];
        let mut mult = 1.0;
        for k in 0..n {
            d[k] = (rem % 3) as i64 - 1;
            rem /= 3;
            if d[k] == 0 {
                mult *= 2.0;
            }
        }
        f(&d, mult);
    }
}

/// Quadrature rules for unit cells; independent of the grid size.
#[derive(Debug, Clone)]
struct UnitRules {
    n: usize,
    expo: f64,
    kappa: f64,
    depth: u32,
    far_order: usize,
    /// (offset along one axis, weight) of the tent rule.
    tent: Vec<(f64, f64)>,
    /// Higher-order tent rule for near pairs at the subdivision floor.
    leaf_tent: Vec<(f64, f64)>,
    child_scale: f64,
    closure: [f64; TOUCH_SLOTS],
    self_complement: f64,
}

impl UnitRules {
    fn new(params: &ModelParams, depth: u32) -> Result<Self> {
        let n = params.n;
        let s = params.s;
        if s >= 0.5 {
            return Err(Error::InvalidParam(format!(
                "piecewise-constant functions with jumps have infinite energy for s >= 1/2 (s = {s})"
            )));
        }
        let q = params.quadrature;
        let tent = tent_rule(q.far_order);
        let leaf_tent = tent_rule(q.far_order.max(8));
        let mut rules = Self {
            n,
            expo: params.kernel_exponent(),
            kappa: q.kappa,
            depth,
            far_order: q.far_order,
            tent,
            leaf_tent,
            child_scale: 2f64.powf(-(n as f64 - 2.0 * s)),
            closure: [0.0; TOUCH_SLOTS],
            self_complement: 0.0,
        };
        rules.solve_closure()?;
        let mut acc = 0.0;
        for_each_child_shift(n, |d, mult| {
            if touching(d, n) {
                acc += mult * rules.closure[touch_slot(d, n)];
            }
        });
        rules.self_complement = rules.child_scale * acc / (2f64.powf(2.0 * s) - 1.0);
        Ok(rules)
    }

    fn kernel(&self, z: &[f64; MAX_DIM]) -> f64 {
        norm(z, self.n).powf(-self.expo)
    }

    fn far(&self, o: &[i64; MAX_DIM]) -> f64 {
        if self.far_order == 1 {
            let mut of = [0.0; MAX_DIM];
            for k in 0..self.n {
                of[k] = o[k] as f64;
            }
            return self.kernel(&of);
        }
        self.tent_integral(o, &self.tent)
    }

    fn tent_integral(&self, o: &[i64; MAX_DIM], tent: &[(f64, f64)]) -> f64 {
        let n = self.n;
        let mut of = [0.0; MAX_DIM];
        for k in 0..n {
            of[k] = o[k] as f64;
        }
        let q = tent.len();
        let total = q.pow(n as u32);
        let mut acc = 0.0;
        let mut z = [0.0; MAX_DIM];
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for k in 0..n {
                let (t, wk) = tent[rem % q];
                rem /= q;
                z[k] = of[k] + t;
                w *= wk;
            }
            acc += w * self.kernel(&z);
        }
        acc
    }

    fn pair(&self, o: &[i64; MAX_DIM], level: u32) -> f64 {
        let n = self.n;
        if touching(o, n) {
            return self.closure[touch_slot(o, n)];
        }
        let mut of = [0.0; MAX_DIM];
        for k in 0..n {
            of[k] = o[k] as f64;
        }
        if norm(&of, n) > self.kappa {
            return self.far(o);
        }
        if level >= self.depth {
            return self.tent_integral(o, &self.leaf_tent);
        }
        let mut acc = 0.0;
        for_each_child_shift(n, |d, mult| {
            let mut c = [0i64; MAX_DIM];
            for k in 0..n {
                c[k] = 2 * o[k] + d[k];
            }
            acc += mult * self.pair(&c, level + 1);
        });
        acc * self.child_scale
    }

    fn solve_closure(&mut self) -> Result<()> {
        let n = self.n;
        let slots = 3usize.pow(n as u32);
        // For each touching offset: constant part and the touching children.
        let mut constant = vec![0.0; slots];
        let mut links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); slots];
        let mut is_touch = vec![false; slots];
        for slot in 0..slots {
            let mut o = [0i64; MAX_DIM];
            let mut rem = slot;
            for k in (0..n).rev() {
                o[k] = (rem % 3) as i64 - 1;
                rem /= 3;
            }
            if !touching(&o, n) {
                continue;
            }
            is_touch[slot] = true;
            for_each_child_shift(n, |d, mult| {
                let mut c = [0i64; MAX_DIM];
                for k in 0..n {
                    c[k] = 2 * o[k] + d[k];
                }
                if touching(&c, n) {
                    links[slot].push((touch_slot(&c, n), mult * self.child_scale));
                } else {
                    constant[slot] += mult * self.child_scale * self.pair(&c, 1);
                }
            });
        }
        let mut w = constant.clone();
        for _ in 0..200_000 {
            let mut next = constant.clone();
            let mut change: f64 = 0.0;
            for slot in 0..slots {
                if !is_touch[slot] {
                    continue;
                }
                for &(c, m) in &links[slot] {
                    next[slot] += m * w[c];
                }
                change = change.max(((next[slot] - w[slot]) / next[slot]).abs());
            }
            w = next;
            if change < 1e-16 {
                break;
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("touching-weight closure diverged".into()));
        }
        self.closure[..slots].copy_from_slice(&w);
        Ok(())
    }
}

/// Unit-cell weights over a box of absolute offsets `0..=extent[k]`.
#[derive(Debug)]
pub struct KernelTable {
    n: usize,
    s: f64,
    extent: [usize; MAX_DIM],
    stride: [usize; MAX_DIM],
    unit: Vec<f64>,
    self_complement: f64,
    error_model: QuadratureErrorModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct TableKey {
    n: usize,
    s: u64,
    depth: u32,
    kappa: u64,
    far_order: usize,
    extent: [usize; MAX_DIM],
}

fn table_cache() -> &'static Mutex<HashMap<TableKey, Arc<KernelTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<TableKey, Arc<KernelTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl KernelTable {
    /// Cached table covering absolute offsets up to `extent` per axis.
    pub fn get(params: &ModelParams, extent: &[usize]) -> Result<Arc<Self>> {
        params.validate()?;
        let mut ext = [0usize; MAX_DIM];
        ext[..params.n].copy_from_slice(&extent[..params.n]);
        let q = params.quadrature;
        let key = TableKey {
            n: params.n,
            s: params.s.to_bits(),
            depth: q.near_depth,
            kappa: q.kappa.to_bits(),
            far_order: q.far_order,
            extent: ext,
        };
        if let Some(t) = table_cache().lock().expect("table cache").get(&key) {
            return Ok(t.clone());
        }
        let table = Arc::new(Self::build(params, ext)?);
        let mut cache = table_cache().lock().expect("table cache");
        if cache.len() > 64 {
            cache.clear();
        }
        cache.insert(key, table.clone());
        Ok(table)
    }

    fn build(params: &ModelParams, extent: [usize; MAX_DIM]) -> Result<Self> {
        let n = params.n;
        let rules = UnitRules::new(params, params.quadrature.near_depth)?;
        let mut stride = [0usize; MAX_DIM];
        let mut len = 1usize;
        for k in (0..n).rev() {
            stride[k] = len;
            len *= extent[k] + 1;
        }
        let unit: Vec<f64> = (0..len)
            .into_par_iter()
            .map(|flat| {
                let mut o = [0i64; MAX_DIM];
                let mut rem = flat;
                for k in 0..n {
                    o[k] = (rem / stride[k]) as i64;
                    rem %= stride[k];
                }
                if (0..n).all(|k| o[k] == 0) {
                    0.0
                } else {
                    rules.pair(&o, 0)
                }
            })
            .collect();
        let error_model = QuadratureErrorModel::estimate(params, &rules)?;
        Ok(Self {
            n,
            s: params.s,
            extent,
            stride,
            unit,
            self_complement: rules.self_complement,
            error_model,
        })
    }

    /// Unit-cell weight for an offset (any signs).
    pub fn unit_weight(&self, o: &[i64]) -> f64 {
        let mut flat = 0;
        for k in 0..self.n {
            let a = o[k].unsigned_abs() as usize;
            debug_assert!(a <= self.extent[k], "offset beyond table extent");
            flat += a * self.stride[k];
        }
        self.unit[flat]
    }

    /// `\int_Q \int_{C Q} |x-y|^{-n-2s}` for the unit cube `Q`.
    pub fn unit_self_complement(&self) -> f64 {
        self.self_complement
    }

    /// Scale factor `h^{n-2s}` turning unit weights into weights for width `h`.
    pub fn scale(&self, h: f64) -> f64 {
        h.powf(self.n as f64 - 2.0 * self.s)
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent[..self.n]
    }

    pub fn error_model(&self) -> &QuadratureErrorModel {
        &self.error_model
    }
}

/// Introspection record of the quadrature accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureErrorModel {
    pub near_depth: u32,
    pub kappa: f64,
    pub far_order: usize,
    /// Max relative change of near, non-touching weights between depth D-1 and D.
    pub near_field_rel_change: f64,
    /// Relative error of the far rule at the first far offset against a
    /// high-order rule.
    pub far_field_rel_error: f64,
    pub truncation_factor: f64,
    pub tail_formula: String,
    pub kernel_convention: String,
}

impl QuadratureErrorModel {
    fn estimate(params: &ModelParams, rules: &UnitRules) -> Result<Self> {
        let n = params.n;
        let q = params.quadrature;
        let coarse = UnitRules::new(params, q.near_depth.saturating_sub(1))?;
        let reach = q.kappa.ceil() as i64 + 1;
        let mut near_change: f64 = 0.0;
        let mut first_far: Option<[i64; MAX_DIM]> = None;
        let span = (2 * reach + 1) as usize;
        for flat in 0..span.pow(n as u32) {
            let mut o = [0i64; MAX_DIM];
            let mut rem = flat;
            for k in 0..n {
                o[k] = (rem % span) as i64 - reach;
                rem /= span;
            }
            if (0..n).all(|k| o[k] == 0) || touching(&o, n) {
                continue;
            }
            let d = (0..n).map(|k| (o[k] * o[k]) as f64).sum::<f64>().sqrt();
            if d <= q.kappa {
                let fine = rules.pair(&o, 0);
                let c = coarse.pair(&o, 0);
                near_change = near_change.max(((fine - c) / fine).abs());
            } else if first_far.map_or(true, |f| {
                d < (0..n).map(|k| (f[k] * f[k]) as f64).sum::<f64>().sqrt()
            }) {
                first_far = Some(o);
            }
        }
        let far_err = match first_far {
            Some(o) => {
                let mut hi = params.quadrature;
                hi.far_order = 8;
                let reference = UnitRules::new(&params.with_quadrature(hi)?, 0)?.far(&o);
                ((rules.far(&o) - reference) / reference).abs()
            }
            None => 0.0,
        };
        Ok(Self {
            near_depth: q.near_depth,
            kappa: q.kappa,
            far_order: q.far_order,
            near_field_rel_change: near_change,
            far_field_rel_error: far_err,
            truncation_factor: q.truncation_factor,
            tail_formula: "sigma_{n-1} R^{-2s} / (2s), split by solid angle for half-space data".into(),
            kernel_convention: "raw kernel |x-y|^{-n-2s}, no normalizing constant".into(),
        })
    }

    /// Relative accuracy bound used as slack by the inequality checks.
    pub fn relative_slack(&self) -> f64 {
        10.0 * (self.near_field_rel_change + self.far_field_rel_error) + 1e-9
    }
}

/// Exterior moments per cell: `\int_{cell} \int_{C box} g^k K` for k = 0, 1, 2.
#[derive(Debug, Clone)]
enum ExteriorMoments {
    Constant { value: f64 },
    General { m1: Vec<f64>, m2: Vec<f64> },
}

/// Everything needed to evaluate nonlocal quantities for one geometry and
/// exterior datum. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct NonlocalOperator {
    params: ModelParams,
    geometry: GridGeometry,
    exterior: ExteriorData,
    table: Arc<KernelTable>,
    scale: f64,
    cells: Vec<[i64; MAX_DIM]>,
    /// `M0_i`
    m0: Vec<f64>,
    moments: ExteriorMoments,
}

impl NonlocalOperator {
    pub fn new(params: &ModelParams, geometry: &GridGeometry, exterior: &ExteriorData) -> Result<Self> {
        params.validate()?;
        geometry.validate()?;
        if geometry.dim() != params.n {
            return Err(Error::GeometryMismatch(format!(
                "grid dimension {} but n = {}",
                geometry.dim(),
                params.n
            )));
        }
        exterior.validate(params.n)?;
        let n = params.n;
        let h = geometry.h();
        let num = geometry.num_cells();
        let cells: Vec<[i64; MAX_DIM]> = (0..num)
            .map(|c| {
                let idx = geometry.multi_index(c);
                let mut o = [0i64; MAX_DIM];
                for k in 0..n {
                    o[k] = idx[k] as i64;
                }
                o
            })
            .collect();

        let constant = exterior.constant_value();
        let radius = truncation_radius(params, geometry)?;
        let reach = (radius / h).floor() as usize + 1;
        let extent: Vec<usize> = (0..n)
            .map(|k| {
                let grid = geometry.cells_per_axis[k] - 1;
                if constant.is_some() {
                    grid
                } else {
                    grid + reach
                }
            })
            .collect();
        let table = KernelTable::get(params, &extent)?;
        let scale = table.scale(h);
        let self_weight = scale * table.unit_self_complement();

        let row_sum = |i: usize| {
            let ci = &cells[i];
            let mut acc = 0.0;
            for (j, cj) in cells.iter().enumerate() {
                if j != i {
                    acc += table.unit_weight(&diff(ci, cj, n));
                }
            }
            acc * scale
        };
        let m0: Vec<f64> = par_rows(num, |i| self_weight - row_sum(i));

        let moments = match constant {
            Some(value) => ExteriorMoments::Constant { value },
            None => {
                let virt = virtual_moments(params, geometry, exterior, &table, &cells, radius);
                let mut m1 = Vec::with_capacity(num);
                let mut m2 = Vec::with_capacity(num);
                for (i, (v0, v1, v2)) in virt.into_iter().enumerate() {
                    let ratio = if v0 > 0.0 { m0[i] / v0 } else { 0.0 };
                    m1.push(v1 * ratio);
                    m2.push(v2 * ratio);
                }
                ExteriorMoments::General { m1, m2 }
            }
        };

        Ok(Self {
            params: *params,
            geometry: geometry.clone(),
            exterior: exterior.clone(),
            table,
            scale,
            cells,
            m0,
            moments,
        })
    }

    /// Operator for a function's own geometry and exterior data.
    pub fn for_function(params: &ModelParams, f: &GridFunction) -> Result<Self> {
        Self::new(params, f.geometry(), f.exterior())
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn exterior(&self) -> &ExteriorData {
        &self.exterior
    }

    pub fn error_model(&self) -> &QuadratureErrorModel {
        self.table.error_model()
    }

    /// Cell-pair weight `w_ij`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.scale * self.table.unit_weight(&diff(&self.cells[i], &self.cells[j], self.params.n))
    }

    /// `\int_{cell i} \int_{C box} K`.
    pub fn box_complement_moment(&self, i: usize) -> f64 {
        self.m0[i]
    }

    /// `\int_{cell} \int_{C cell} K` for one cell.
    pub fn cell_self_complement(&self) -> f64 {
        self.scale * self.table.unit_self_complement()
    }

    /// `\int_{cell i} \int_{C box} (a - g(y))^2 K dy dx`.
    pub fn exterior_energy(&self, i: usize, a: f64) -> f64 {
        match &self.moments {
            ExteriorMoments::Constant { value } => (a - value).powi(2) * self.m0[i],
            ExteriorMoments::General { m1, m2 } => (a * a * self.m0[i] - 2.0 * a * m1[i] + m2[i]).max(0.0),
        }
    }

    /// `(\int K, \int g K, \int g^2 K)` over `cell i x C box`.
    pub fn exterior_moments(&self, i: usize) -> (f64, f64, f64) {
        let m0 = self.m0[i];
        match &self.moments {
            ExteriorMoments::Constant { value } => (m0, value * m0, value * value * m0),
            ExteriorMoments::General { m1, m2 } => (m0, m1[i], m2[i]),
        }
    }

    /// `\int_{cell i} \int_{C box} (a - g(y)) K dy dx`.
    pub fn exterior_linear(&self, i: usize, a: f64) -> f64 {
        match &self.moments {
            ExteriorMoments::Constant { value } => (a - value) * self.m0[i],
            ExteriorMoments::General { m1, .. } => a * self.m0[i] - m1[i],
        }
    }

    fn check_geometry(&self, f: &GridFunction) -> Result<()> {
        if f.geometry() != &self.geometry {
            return Err(Error::GeometryMismatch("function grid differs from operator grid".into()));
        }
        if f.exterior() != &self.exterior {
            return Err(Error::GeometryMismatch("function exterior differs from operator exterior".into()));
        }
        Ok(())
    }

    /// `h^n` times the cell average of `(-Delta)^s u` on every cell:
    /// `sum_{j != i} (u_i - u_j) w_ij + \int_{cell i}\int_{C box}(u_i - g)K`.
    pub fn interaction_vector(&self, values: &[f64]) -> Vec<f64> {
        let n = self.params.n;
        par_rows(values.len(), |i| {
            let ci = &self.cells[i];
            let ui = values[i];
            let mut acc = 0.0;
            for (j, cj) in self.cells.iter().enumerate() {
                if j != i {
                    acc += (ui - values[j]) * self.table.unit_weight(&diff(ci, cj, n));
                }
            }
            acc * self.scale + self.exterior_linear(i, ui)
        })
    }

    /// Cell-averaged fractional Laplacian at one cell.
    pub fn frac_laplacian(&self, u: &GridFunction, cell: usize) -> Result<f64> {
        self.check_geometry(u)?;
        if cell >= self.cells.len() {
            return Err(Error::IndexOutOfBounds {
                index: cell,
                cells: self.cells.len(),
            });
        }
        let n = self.params.n;
        let values = u.values();
        let ci = &self.cells[cell];
        let ui = values[cell];
        let mut acc = 0.0;
        for (j, cj) in self.cells.iter().enumerate() {
            if j != cell {
                acc += (ui - values[j]) * self.table.unit_weight(&diff(ci, cj, n));
            }
        }
        Ok((acc * self.scale + self.exterior_linear(cell, ui)) / self.geometry.cell_volume())
    }

    /// Fractional Laplacian on every cell.
    pub fn frac_laplacian_all(&self, u: &GridFunction) -> Result<Vec<f64>> {
        self.check_geometry(u)?;
        let hn = self.geometry.cell_volume();
        Ok(self.interaction_vector(u.values()).into_iter().map(|v| v / hn).collect())
    }

    /// `(inner, cross)` parts of the localized interaction energy on `omega`.
    pub fn interaction_parts(&self, values: &[f64], omega: &Region) -> (f64, f64) {
        let n = self.params.n;
        let mask = omega.mask();
        let rows: Vec<(f64, f64)> = (0..values.len())
            .into_par_iter()
            .map(|i| {
                if !mask[i] {
                    return (0.0, 0.0);
                }
                let ci = &self.cells[i];
                let ui = values[i];
                let mut inner = 0.0;
                let mut cross = 0.0;
                for (j, cj) in self.cells.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let d = ui - values[j];
                    let w = d * d * self.table.unit_weight(&diff(ci, cj, n));
                    if mask[j] {
                        inner += w;
                    } else {
                        cross += w;
                    }
                }
                (0.5 * inner * self.scale, cross * self.scale + self.exterior_energy(i, ui))
            })
            .collect();
        let inner: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let cross: Vec<f64> = rows.iter().map(|r| r.1).collect();
        (tree_sum(&inner), tree_sum(&cross))
    }

    /// Localized interaction energy `K(u; omega)`.
    pub fn energy_k(&self, u: &GridFunction, omega: &Region) -> Result<f64> {
        self.check_geometry(u)?;
        let (a, b) = self.interaction_parts(u.values(), omega);
        Ok(a + b)
    }

    pub fn total_energy(&self, u: &GridFunction, omega: &Region, w: &Potential) -> Result<EnergyBreakdown> {
        self.check_geometry(u)?;
        let (lo, hi) = u.range();
        if lo < -1.0 || hi > 1.0 {
            return Err(Error::OutOfRange {
                value: if lo < -1.0 { lo } else { hi },
                lo: -1.0,
                hi: 1.0,
            });
        }
        let (inner, cross) = self.interaction_parts(u.values(), omega);
        let potential = potential_term(u.values(), omega, w, self.geometry.cell_volume());
        Ok(EnergyBreakdown {
            interaction_inner: inner,
            interaction_cross: cross,
            potential_term: potential,
            total: inner + cross + potential,
        })
    }

    /// Full-space Gagliardo double integral of a compactly supported function.
    pub fn gagliardo_sq(&self, f: &GridFunction) -> Result<f64> {
        self.check_geometry(f)?;
        f.require_compact()?;
        let (inner, cross) = self.interaction_parts(f.values(), &Region::whole(&self.geometry));
        Ok(2.0 * (inner + cross))
    }

    /// Sum of `(f_i - f_j)^2 w_ij` over ordered pairs `i != j` inside `omega`, plus the exterior of each row.
    pub fn row_energies(&self, values: &[f64]) -> Vec<f64> {
        let n = self.params.n;
        par_rows(values.len(), |i| {
            let ci = &self.cells[i];
            let ui = values[i];
            let mut acc = 0.0;
            for (j, cj) in self.cells.iter().enumerate() {
                if j != i {
                    let d = ui - values[j];
                    acc += d * d * self.table.unit_weight(&diff(ci, cj, n));
                }
            }
            acc * self.scale + self.exterior_energy(i, ui)
        })
    }

    /// Gagliardo integral of a compactly supported function through the
    /// expanded quadratic form `2 h^{n-2s} S sum f_i^2 - 2 sum_{i != j} f_i f_j w_ij`,
    /// which never touches the box-complement moments.
    pub fn gagliardo_sq_quadratic_form(&self, f: &GridFunction) -> Result<f64> {
        self.check_geometry(f)?;
        f.require_compact()?;
        let n = self.params.n;
        let v = f.values();
        let diag = par_rows_sum(v.len(), |i| v[i] * v[i]);
        let off = par_rows_sum(v.len(), |i| {
            let ci = &self.cells[i];
            let mut acc = 0.0;
            for (j, cj) in self.cells.iter().enumerate() {
                if j != i {
                    acc += v[j] * self.table.unit_weight(&diff(ci, cj, n));
                }
            }
            v[i] * acc
        });
        Ok(2.0 * self.cell_self_complement() * diag - 2.0 * self.scale * off)
    }
}

fn diff(a: &[i64; MAX_DIM], b: &[i64; MAX_DIM], n: usize) -> [i64; MAX_DIM] {
    let mut o = [0i64; MAX_DIM];
    for k in 0..n {
        o[k] = b[k] - a[k];
    }
    o
}

fn potential_term(values: &[f64], omega: &Region, w: &Potential, hn: f64) -> f64 {
    let mask = omega.mask();
    let parts: Vec<f64> = values
        .iter()
        .zip(mask)
        .map(|(v, &m)| if m { w.value(*v) } else { 0.0 })
        .collect();
    hn * tree_sum(&parts)
}

/// Radius beyond which exterior sums use the analytic tail. It must cover
/// the whole box from every cell center.
pub fn truncation_radius(params: &ModelParams, g: &GridGeometry) -> Result<f64> {
    let max_half = g.half_widths.iter().copied().fold(0.0, f64::max);
    let radius = params.quadrature.truncation_factor * max_half;
    let diameter = 2.0 * g.half_widths.iter().map(|a| a * a).sum::<f64>().sqrt();
    if radius < diameter {
        return Err(Error::InvalidParam(format!(
            "truncation radius {radius} is smaller than the box diameter {diameter}"
        )));
    }
    Ok(radius)
}

/// Virtual-cell moments `(sum w, sum w g, sum w g^2)` plus tails, per cell.
fn virtual_moments(
    params: &ModelParams,
    g: &GridGeometry,
    exterior: &ExteriorData,
    table: &KernelTable,
    cells: &[[i64; MAX_DIM]],
    radius: f64,
) -> Vec<(f64, f64, f64)> {
    let n = params.n;
    let h = g.h();
    let reach = (radius / h).floor() as i64;
    let cutoff2 = radius * radius;
    let scale = table.scale(h);
    let hn = g.cell_volume();
    let span = (2 * reach + 1) as usize;
    let total = span.pow(n as u32);
    // Radius of the ball whose volume matches the cells counted around a
    // center, so the analytic tail starts where the cell sums stop.
    let mut counted = 0usize;
    for flat in 0..total {
        let mut rem = flat;
        let mut d2 = 0.0;
        for _ in 0..n {
            d2 += (((rem % span) as i64 - reach) as f64 * h).powi(2);
            rem /= span;
        }
        if d2 <= radius * radius {
            counted += 1;
        }
    }
    let radius = h * (counted as f64 / ball_volume(n)).powf(1.0 / n as f64);
    let sigma = sphere_measure(n);
    let tail_total = sigma * radius.powf(-2.0 * params.s) / (2.0 * params.s) * hn;
    cells
        .par_iter()
        .enumerate()
        .map(|(i, ci)| {
            let x = g.cell_center(i);
            let (mut v0, mut v1, mut v2) = (0.0, 0.0, 0.0);
            let mut y = [0.0; MAX_DIM];
            for flat in 0..total {
                let mut rem = flat;
                let mut o = [0i64; MAX_DIM];
                let mut inside = true;
                let mut d2 = 0.0;
                for k in 0..n {
                    o[k] = (rem % span) as i64 - reach;
                    rem /= span;
                    let idx = ci[k] + o[k];
                    if idx < 0 || idx >= g.cells_per_axis[k] as i64 {
                        inside = false;
                    }
                    d2 += (o[k] as f64 * h).powi(2);
                }
                if inside || d2 > cutoff2 {
                    continue;
                }
                for k in 0..n {
                    y[k] = x[k] + o[k] as f64 * h;
                }
                let w = table.unit_weight(&o);
                let gv = exterior.eval(&y[..n]);
                v0 += w;
                v1 += w * gv;
                v2 += w * gv * gv;
            }
            let (t1, t2) = tail_moments(params, exterior, &x, radius);
            (
                v0 * scale + tail_total,
                v1 * scale + t1 * hn,
                v2 * scale + t2 * hn,
            )
        })
        .collect()
}

/// `\int_{|y-x|>R} g(y)^k |x-y|^{-n-2s} dy` for k = 1, 2.
fn tail_moments(params: &ModelParams, exterior: &ExteriorData, x: &[f64; MAX_DIM], radius: f64) -> (f64, f64) {
    let n = params.n;
    let s = params.s;
    let sigma = sphere_measure(n);
    let base = radius.powf(-2.0 * s) / (2.0 * s);
    // r = R u^{-1/(2s)} maps |y - x| > R onto u in (0, 1] with density base du.
    let rule = GaussRule::new(24);
    match exterior {
        ExteriorData::HalfSpace { direction, offset } => {
            let xe: f64 = (0..n).map(|k| direction[k] * x[k]).sum();
            let plus = rule.integrate(0.0, 1.0, |u| {
                let r = radius * u.powf(-1.0 / (2.0 * s));
                cap_fraction(n, (offset - xe) / r)
            });
            let plus = sigma * base * plus;
            let total = sigma * base;
            (plus - (total - plus), total)
        }
        _ => {
            let dirs = sphere_rule(n);
            let mut y = [0.0; MAX_DIM];
            let mut acc1 = 0.0;
            let mut acc2 = 0.0;
            for (u, wu) in rule.nodes.iter().zip(&rule.weights) {
                let r = radius * u.powf(-1.0 / (2.0 * s));
                for (theta, wt) in &dirs {
                    for k in 0..n {
                        y[k] = x[k] + r * theta[k];
                    }
                    let gv = exterior.eval(&y[..n]);
                    acc1 += wu * wt * gv;
                    acc2 += wu * wt * gv * gv;
                }
            }
            (base * acc1, base * acc2)
        }
    }
}

/// Fraction of the unit sphere where `theta . e > tau`.
fn cap_fraction(n: usize, tau: f64) -> f64 {
    if tau >= 1.0 {
        return 0.0;
    }
    if tau < -1.0 {
        return 1.0;
    }
    match n {
        1 => 0.5,
        2 => tau.acos() / std::f64::consts::PI,
        _ => 0.5 * (1.0 - tau),
    }
}

/// Directions and weights integrating over the unit sphere (weights sum to
/// the sphere measure).
fn sphere_rule(n: usize) -> Vec<([f64; MAX_DIM], f64)> {
    match n {
        1 => vec![([1.0, 0.0, 0.0], 1.0), ([-1.0, 0.0, 0.0], 1.0)],
        2 => {
            let m = 256;
            let w = 2.0 * std::f64::consts::PI / m as f64;
            (0..m)
                .map(|k| {
                    let t = (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / m as f64;
                    ([t.cos(), t.sin(), 0.0], w)
                })
                .collect()
        }
        _ => {
            let zr = GaussRule::new(32);
            let m = 64;
            let wphi = 2.0 * std::f64::consts::PI / m as f64;
            let mut out = Vec::with_capacity(zr.len() * m);
            for (z01, wz) in zr.nodes.iter().zip(&zr.weights) {
                let z = 2.0 * z01 - 1.0;
                let rho = (1.0 - z * z).sqrt();
                for k in 0..m {
                    let p = (k as f64 + 0.5) * wphi;
                    out.push(([rho * p.cos(), rho * p.sin(), z], 2.0 * wz * wphi));
                }
            }
            out
        }
    }
}

/// Parts of the energy `E(u; Omega) = K(u; Omega) + \int_Omega W(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub interaction_inner: f64,
    pub interaction_cross: f64,
    pub potential_term: f64,
    pub total: f64,
}

/// Full-space Gagliardo double integral of a compactly supported function.
pub fn gagliardo_sq(params: &ModelParams, f: &GridFunction) -> Result<f64> {
    f.require_compact()?;
    NonlocalOperator::for_function(params, f)?.gagliardo_sq(f)
}

/// `K(u; Omega)`.
pub fn energy_k(params: &ModelParams, u: &GridFunction, omega: &Region) -> Result<f64> {
    NonlocalOperator::for_function(params, u)?.energy_k(u, omega)
}

/// `E(u; Omega)` with its parts.
pub fn total_energy(params: &ModelParams, u: &GridFunction, omega: &Region, w: &Potential) -> Result<EnergyBreakdown> {
    NonlocalOperator::for_function(params, u)?.total_energy(u, omega, w)
}

/// Cell-averaged fractional Laplacian at one cell.
pub fn frac_laplacian(params: &ModelParams, u: &GridFunction, cell: usize) -> Result<f64> {
    NonlocalOperator::for_function(params, u)?.frac_laplacian(u, cell)
}

/// `\int_{C box} |x - y|^{-n-2s} dy` for a point strictly inside the box,
/// written as a sum over faces: `sum_F d_F/(2s) \int_F |p - x|^{-n-2s} dA(p)`.
pub fn box_complement_point(params: &ModelParams, g: &GridGeometry, x: &[f64]) -> f64 {
    let n = params.n;
    let s = params.s;
    let expo = params.kernel_exponent();
    let mut total = 0.0;
    for axis in 0..n {
        for side in [g.lo(axis), g.hi(axis)] {
            let d = (x[axis] - side).abs();
            let others: Vec<usize> = (0..n).filter(|&k| k != axis).collect();
            let face = match others.len() {
                0 => d.powf(-expo),
                1 => {
                    let k = others[0];
                    adaptive_line(g.lo(k) - x[k], g.hi(k) - x[k], |t| (d * d + t * t).powf(-expo / 2.0))
                }
                _ => {
                    let (k1, k2) = (others[0], others[1]);
                    adaptive_line(g.lo(k1) - x[k1], g.hi(k1) - x[k1], |t1| {
                        adaptive_line(g.lo(k2) - x[k2], g.hi(k2) - x[k2], |t2| {
                            (d * d + t1 * t1 + t2 * t2).powf(-expo / 2.0)
                        })
                    })
                }
            };
            total += d / (2.0 * s) * face;
        }
    }
    total
}

/// Adaptive Gauss-Legendre on `[a, b]`, split at 0 (the foot point) first.
fn adaptive_line<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let rule = GaussRule::new(10);
    let pieces: Vec<(f64, f64)> = if a < 0.0 && b > 0.0 { vec![(a, 0.0), (0.0, b)] } else { vec![(a, b)] };
    let mut acc = 0.0;
    for (lo, hi) in pieces {
        let whole = rule.integrate(lo, hi, &f);
        acc += adaptive_piece(&rule, lo, hi, whole, &f, 0);
    }
    acc
}

/// Local relative error control; the integrands here are positive.
fn adaptive_piece<F: Fn(f64) -> f64>(rule: &GaussRule, a: f64, b: f64, whole: f64, f: &F, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = rule.integrate(a, m, f);
    let right = rule.integrate(m, b, f);
    let sum = left + right;
    if depth >= 60 || (whole - sum).abs() <= 1e-13 * sum.abs() {
        return sum;
    }
    adaptive_piece(rule, a, m, left, f, depth + 1) + adaptive_piece(rule, m, b, right, f, depth + 1)
}

/// `\int_{cell} |x - y|^{-n-2s} dy` for a point `x` outside the open cell,
/// by recursive subdivision near `x` and tensor Gauss-Legendre elsewhere.
pub fn point_cell_integral(params: &ModelParams, x: &[f64], lo: &[f64], width: f64) -> f64 {
    let rule = GaussRule::new(params.quadrature.far_order.max(8));
    point_cell_rec(params, &rule, x, lo, width, 0)
}

fn point_cell_rec(params: &ModelParams, rule: &GaussRule, x: &[f64], lo: &[f64], width: f64, level: u32) -> f64 {
    let n = params.n;
    let expo = params.kernel_exponent();
    let center_dist = (0..n)
        .map(|k| (lo[k] + 0.5 * width - x[k]).powi(2))
        .sum::<f64>()
        .sqrt();
    if center_dist > params.quadrature.kappa * width || level >= params.quadrature.near_depth + 8 {
        let mut acc = 0.0;
        let mut y = [0.0; MAX_DIM];
        for_each_tensor_point(rule, n, |p, w| {
            let mut d2 = 0.0;
            for k in 0..n {
                y[k] = lo[k] + width * p[k];
                d2 += (y[k] - x[k]).powi(2);
            }
            acc += w * d2.powf(-expo / 2.0);
        });
        return acc * width.powi(n as i32);
    }
    let half = 0.5 * width;
    let mut acc = 0.0;
    let mut child = [0.0; MAX_DIM];
    for corner in 0..(1usize << n) {
        for k in 0..n {
            child[k] = lo[k] + if corner >> k & 1 == 1 { half } else { 0.0 };
        }
        acc += point_cell_rec(params, rule, x, &child[..n], half, level + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form_1d(s: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
        // \int_a^b \int_c^d (y - x)^{-1-2s} dy dx, for b <= c.
        let e = 1.0 - 2.0 * s;
        let g = |t: f64| if t > 0.0 { t.powf(e) } else { 0.0 };
        (g(c - a) - g(c - b) - g(d - a) + g(d - b)) / (2.0 * s * e)
    }

    #[test]
    fn one_dimensional_weights_match_closed_form() {
        let p = ModelParams::new(1, 0.25).unwrap();
        let t = KernelTable::get(&p, &[40]).unwrap();
        for o in 1..=40i64 {
            let want = closed_form_1d(0.25, 0.0, 1.0, o as f64, o as f64 + 1.0);
            let got = t.unit_weight(&[o]);
            let tol = 2e-6;
            assert!(((got - want) / want).abs() < tol, "offset {o}: {got} vs {want}");
        }
    }

    #[test]
    fn self_complement_of_unit_interval() {
        // \int_0^1 \int_{C[0,1]} |x-y|^{-3/2} = 2 \int_0^1 2 x^{-1/2} dx = 8
        let p = ModelParams::new(1, 0.25).unwrap();
        let t = KernelTable::get(&p, &[1]).unwrap();
        assert!((t.unit_self_complement() - 8.0).abs() < 1e-5);
        let mut q = p.quadrature;
        q.far_order = 8;
        let fine = KernelTable::get(&p.with_quadrature(q).unwrap(), &[1]).unwrap();
        assert!((fine.unit_self_complement() - 8.0).abs() < 1e-10, "{}", fine.unit_self_complement());
    }

    #[test]
    fn touching_closure_rejects_half() {
        let p = ModelParams::new(2, 0.5).unwrap();
        assert!(KernelTable::get(&p, &[2, 2]).is_err());
    }

    #[test]
    fn weights_symmetric_in_sign_and_axis() {
        let p = ModelParams::new(2, 0.3).unwrap();
        let t = KernelTable::get(&p, &[5, 5]).unwrap();
        assert_eq!(t.unit_weight(&[2, -3]), t.unit_weight(&[-2, 3]));
        let a = t.unit_weight(&[1, 4]);
        let b = t.unit_weight(&[4, 1]);
        assert!(((a - b) / a).abs() < 1e-12);
    }

    #[test]
    fn box_complement_point_in_one_dimension() {
        let p = ModelParams::new(1, 0.25).unwrap();
        let g = GridGeometry::interval_box(1, -1.0, 1.0, 4).unwrap();
        let v = box_complement_point(&p, &g, &[0.0]);
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn box_complement_point_matches_disc_bound_in_2d() {
        // From the center of a square of half-width a: between the value for
        // the inscribed disc (radius a) and the circumscribed one.
        let p = ModelParams::new(2, 0.25).unwrap();
        let g = GridGeometry::cube(2, 0.0, 1.0, 2).unwrap();
        let v = box_complement_point(&p, &g, &[0.0, 0.0]);
        let disc = |r: f64| 2.0 * std::f64::consts::PI * r.powf(-0.5) / 0.5;
        assert!(v < disc(1.0) && v > disc(2f64.sqrt()));
    }

    #[test]
    fn point_cell_integral_one_dimension() {
        let p = ModelParams::new(1, 0.25).unwrap();
        // \int_1^2 y^{-3/2} dy = 2 (1 - 2^{-1/2})
        let v = point_cell_integral(&p, &[0.0], &[1.0], 1.0);
        assert!((v - 2.0 * (1.0 - 0.5f64.sqrt())).abs() < 1e-10);
    }
}
