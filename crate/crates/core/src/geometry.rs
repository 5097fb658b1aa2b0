//! Global parameters, the uniform grid and cell regions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Surface measure of the unit sphere in dimension `n` (the sphere is
/// (n-1)-dimensional). For `n = 1` this is the counting measure of {-1, 1}.
pub fn sphere_measure(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => {
            let half = n as f64 / 2.0;
            2.0 * std::f64::consts::PI.powf(half) / gamma_half_integer(n)
        }
    }
}

/// Volume of the unit ball, `sphere_measure(n) / n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_measure(n) / n as f64
}

// Gamma(n/2) for positive integer n.
fn gamma_half_integer(n: usize) -> f64 {
    if n % 2 == 0 {
        (1..n / 2).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < n as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Cell-pair quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSettings {
    /// Recursion depth of the near-field subdivision.
    pub near_depth: u32,
    /// Exterior sums over virtual cells stop at this distance (in units of
    /// the box half-width); beyond it an analytic tail is added.
    pub truncation_factor: f64,
    /// Pairs whose center distance exceeds `kappa` cell widths are far-field.
    pub kappa: f64,
    /// Gauss-Legendre points per axis for far-field pairs (1 = midpoint).
    pub far_order: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            near_depth: 6,
            truncation_factor: 4.0,
            kappa: 3.0,
            far_order: 3,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 1.0) {
            return Err(Error::InvalidParam(format!("kappa must exceed 1, got {}", self.kappa)));
        }
        if !(self.truncation_factor >= 1.0) {
            return Err(Error::InvalidParam(format!(
                "truncation factor must be at least 1, got {}",
                self.truncation_factor
            )));
        }
        if self.far_order == 0 || self.far_order > 8 {
            return Err(Error::InvalidParam(format!(
                "far-field order must be in 1..=8, got {}",
                self.far_order
            )));
        }
        Ok(())
    }
}

/// Dimension, fractional order and quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub n: usize,
    pub s: f64,
    #[serde(default)]
    pub quadrature: QuadratureSettings,
}

impl ModelParams {
    pub fn new(n: usize, s: f64) -> Result<Self> {
        let p = Self {
            n,
            s,
            quadrature: QuadratureSettings::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_quadrature(mut self, quadrature: QuadratureSettings) -> Result<Self> {
        self.quadrature = quadrature;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_DIM {
            return Err(Error::InvalidParam(format!("dimension must be 1..={MAX_DIM}, got {}", self.n)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParam(format!("s must lie in (0,1), got {}", self.s)));
        }
        if !(self.n as f64 > 2.0 * self.s) {
            return Err(Error::InvalidParam(format!("need n > 2s, got n = {}, s = {}", self.n, self.s)));
        }
        self.quadrature.validate()
    }

    /// Gate for the density-estimate operations.
    pub fn require_density(&self) -> Result<()> {
        if self.s >= 0.5 {
            return Err(Error::DensityRange(self.s));
        }
        Ok(())
    }

    /// Kernel exponent `n + 2s`.
    pub fn kernel_exponent(&self) -> f64 {
        self.n as f64 + 2.0 * self.s
    }

    /// Critical Sobolev exponent `2n / (n - 2s)`.
    pub fn critical_exponent(&self) -> f64 {
        2.0 * self.n as f64 / (self.n as f64 - 2.0 * self.s)
    }

    /// `(n - 2s) / n`.
    pub fn sobolev_power(&self) -> f64 {
        (self.n as f64 - 2.0 * self.s) / self.n as f64
    }

    /// Runs with n = 1 are outside the dimension range of the density theorem.
    pub fn regime_label(&self) -> &'static str {
        if self.n == 1 {
            "extrapolated regime (n = 1)"
        } else {
            "theorem regime"
        }
    }
}

/// Uniform grid of congruent cubic cells over an axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGeometry {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub cells_per_axis: Vec<usize>,
}

impl GridGeometry {
    pub fn new(center: Vec<f64>, half_widths: Vec<f64>, cells_per_axis: Vec<usize>) -> Result<Self> {
        let g = Self {
            center,
            half_widths,
            cells_per_axis,
        };
        g.validate()?;
        Ok(g)
    }

    /// Cube `[c - a, c + a]^n` with `m` cells per axis.
    pub fn cube(n: usize, center: f64, half_width: f64, m: usize) -> Result<Self> {
        Self::new(vec![center; n], vec![half_width; n], vec![m; n])
    }

    /// The box `[lo, hi]^n` with `m` cells per axis.
    pub fn interval_box(n: usize, lo: f64, hi: f64, m: usize) -> Result<Self> {
        Self::cube(n, 0.5 * (lo + hi), 0.5 * (hi - lo), m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.center.len();
        if n == 0 || n > MAX_DIM || self.half_widths.len() != n || self.cells_per_axis.len() != n {
            return Err(Error::InvalidParam("inconsistent grid dimensions".into()));
        }
        if self.cells_per_axis.iter().any(|&m| m == 0) {
            return Err(Error::InvalidParam("cells_per_axis must be positive".into()));
        }
        if self.half_widths.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParam("half widths must be positive".into()));
        }
        let h0 = 2.0 * self.half_widths[0] / self.cells_per_axis[0] as f64;
        for k in 1..n {
            let hk = 2.0 * self.half_widths[k] / self.cells_per_axis[k] as f64;
            if ((hk - h0) / h0).abs() > 1e-12 {
                return Err(Error::InvalidParam(format!(
                    "cells must be cubic: width {h0} on axis 0 but {hk} on axis {k}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        2.0 * self.half_widths[0] / self.cells_per_axis[0] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim() as i32)
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    pub fn box_volume(&self) -> f64 {
        self.half_widths.iter().map(|a| 2.0 * a).product()
    }

    pub fn lo(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_widths[axis]
    }

    pub fn hi(&self, axis: usize) -> f64 {
        self.center[axis] + self.half_widths[axis]
    }

    /// Row-major multi-index (last axis fastest).
    pub fn multi_index(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let n = self.dim();
        let mut idx = [0usize; MAX_DIM];
        for k in (0..n).rev() {
            let m = self.cells_per_axis[k];
            idx[k] = flat % m;
            flat /= m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> Result<usize> {
        let mut flat = 0usize;
        for k in 0..self.dim() {
            if idx[k] >= self.cells_per_axis[k] {
                return Err(Error::IndexOutOfBounds {
                    index: idx[k],
                    cells: self.cells_per_axis[k],
                });
            }
            flat = flat * self.cells_per_axis[k] + idx[k];
        }
        Ok(flat)
    }

    /// Center of a cell, computed directly from the index.
    pub fn cell_center(&self, flat: usize) -> [f64; MAX_DIM] {
        let idx = self.multi_index(flat);
        let h = self.h();
        let mut c = [0.0; MAX_DIM];
        for k in 0..self.dim() {
            let m = self.cells_per_axis[k] as f64;
            c[k] = self.center[k] + (idx[k] as f64 + 0.5 - m / 2.0) * h;
        }
        c
    }

    /// Integer offset between two cells, `idx(j) - idx(i)`.
    pub fn offset(&self, i: usize, j: usize) -> [i64; MAX_DIM] {
        let a = self.multi_index(i);
        let b = self.multi_index(j);
        let mut o = [0i64; MAX_DIM];
        for k in 0..self.dim() {
            o[k] = b[k] as i64 - a[k] as i64;
        }
        o
    }

    /// True when `x` lies in the closed box.
    pub fn contains_closed(&self, x: &[f64]) -> bool {
        (0..self.dim()).all(|k| x[k] >= self.lo(k) && x[k] <= self.hi(k))
    }

    /// Indices of cells whose closure contains `x` (1 to 2^n cells), or empty
    /// if `x` is outside the closed box.
    pub fn cells_touching(&self, x: &[f64]) -> Vec<usize> {
        if !self.contains_closed(x) {
            return Vec::new();
        }
        let n = self.dim();
        let h = self.h();
        let mut per_axis: Vec<Vec<usize>> = Vec::with_capacity(n);
        for k in 0..n {
            let t = (x[k] - self.lo(k)) / h;
            let m = self.cells_per_axis[k];
            let f = t.floor();
            let mut c = Vec::with_capacity(2);
            if (t - f).abs() < 1e-12 || (t - f - 1.0).abs() < 1e-12 {
                let edge = t.round() as i64;
                if edge - 1 >= 0 && ((edge - 1) as usize) < m {
                    c.push((edge - 1) as usize);
                }
                if edge >= 0 && (edge as usize) < m {
                    c.push(edge as usize);
                }
            } else {
                c.push((f as usize).min(m - 1));
            }
            per_axis.push(c);
        }
        let mut out = Vec::new();
        let mut idx = [0usize; MAX_DIM];
        fn rec(
            g: &GridGeometry,
            per_axis: &[Vec<usize>],
            k: usize,
            idx: &mut [usize; MAX_DIM],
            out: &mut Vec<usize>,
        ) {
            if k == per_axis.len() {
                out.push(g.flat_index(idx).expect("in range"));
                return;
            }
            for &c in &per_axis[k] {
                idx[k] = c;
                rec(g, per_axis, k + 1, idx, out);
            }
        }
        rec(self, &per_axis, 0, &mut idx, &mut out);
        out
    }

    /// Cell containing `x` under the half-open convention `[lo + i h, lo + (i+1) h)`.
    pub fn cell_containing(&self, x: &[f64]) -> Option<usize> {
        let h = self.h();
        let mut idx = [0usize; MAX_DIM];
        for k in 0..self.dim() {
            let t = ((x[k] - self.lo(k)) / h).floor();
            if t < 0.0 || t >= self.cells_per_axis[k] as f64 {
                return None;
            }
            idx[k] = t as usize;
        }
        self.flat_index(&idx).ok()
    }

    /// Largest radius of a ball around `x` that fits inside the box.
    pub fn inscribed_radius(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| (x[k] - self.lo(k)).min(self.hi(k) - x[k]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A set of grid cells (the domain `Omega` of an energy, a ball, a level set).
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    mask: Vec<bool>,
}

impl Region {
    pub fn whole(g: &GridGeometry) -> Self {
        Self {
            mask: vec![true; g.num_cells()],
        }
    }

    pub fn empty(g: &GridGeometry) -> Self {
        Self {
            mask: vec![false; g.num_cells()],
        }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        Self { mask }
    }

    pub fn from_cells(g: &GridGeometry, cells: &[usize]) -> Result<Self> {
        let mut mask = vec![false; g.num_cells()];
        for &c in cells {
            if c >= mask.len() {
                return Err(Error::IndexOutOfBounds {
                    index: c,
                    cells: mask.len(),
                });
            }
            mask[c] = true;
        }
        Ok(Self { mask })
    }

    /// Cells with multi-index in `[lo, hi)` per axis.
    pub fn sub_box(g: &GridGeometry, lo: &[usize], hi: &[usize]) -> Result<Self> {
        let n = g.dim();
        for k in 0..n {
            if lo[k] > hi[k] || hi[k] > g.cells_per_axis[k] {
                return Err(Error::InvalidParam(format!("sub-box [{}, {}) invalid on axis {k}", lo[k], hi[k])));
            }
        }
        let mask = (0..g.num_cells())
            .map(|c| {
                let idx = g.multi_index(c);
                (0..n).all(|k| idx[k] >= lo[k] && idx[k] < hi[k])
            })
            .collect();
        Ok(Self { mask })
    }

    /// Cells whose center lies in the open ball `|x - center| < radius`.
    pub fn ball(g: &GridGeometry, center: &[f64], radius: f64) -> Self {
        let n = g.dim();
        let mask = (0..g.num_cells())
            .map(|c| {
                let x = g.cell_center(c);
                let d2: f64 = (0..n).map(|k| (x[k] - center[k]).powi(2)).sum();
                d2 < radius * radius
            })
            .collect();
        Self { mask }
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.mask[cell]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cells(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn measure(&self, g: &GridGeometry) -> f64 {
        self.len() as f64 * g.cell_volume()
    }
}

/// The two phase thresholds together with the growth constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta1: f64,
    pub theta2: f64,
    pub c_grow: f64,
    /// `min{theta1, theta2, -1 + c}`
    pub lower: f64,
    /// `max{theta1, theta2, -1 + c}`
    pub upper: f64,
}

impl Thresholds {
    pub fn new(theta1: f64, theta2: f64, c_grow: f64) -> Result<Self> {
        for t in [theta1, theta2] {
            if !(t > -1.0 && t < 1.0) {
                return Err(Error::InvalidParam(format!("threshold {t} outside (-1,1)")));
            }
        }
        if !(c_grow > 0.0 && c_grow < 2.0) {
            return Err(Error::InvalidParam(format!("growth constant {c_grow} outside (0,2)")));
        }
        let g = -1.0 + c_grow;
        Ok(Self {
            theta1,
            theta2,
            c_grow,
            lower: theta1.min(theta2).min(g),
            upper: theta1.max(theta2).max(g),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_volumes() {
        assert!((ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
        assert!((sphere_measure(4) - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
        assert!((sphere_measure(5) - 8.0 / 3.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn cell_volume_times_count_is_box_volume() {
        for (n, m, a) in [(1, 64, 0.5), (2, 37, 3.1), (3, 9, 1.7)] {
            let g = GridGeometry::cube(n, 0.3, a, m).unwrap();
            let v = g.cell_volume() * g.num_cells() as f64;
            assert!((v - g.box_volume()).abs() <= 1e-12 * g.box_volume());
        }
    }

    #[test]
    fn centers_from_index() {
        let g = GridGeometry::interval_box(2, -1.0, 1.0, 4).unwrap();
        let c = g.cell_center(g.flat_index(&[0, 3]).unwrap());
        assert_eq!(c[0], -0.75);
        assert_eq!(c[1], 0.75);
        assert_eq!(g.multi_index(g.flat_index(&[2, 1]).unwrap())[..2], [2, 1]);
        assert!(g.flat_index(&[4, 0]).is_err());
    }

    #[test]
    fn non_cubic_cells_rejected() {
        assert!(GridGeometry::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![4, 4]).is_err());
        assert!(GridGeometry::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![4, 8]).is_ok());
    }

    #[test]
    fn model_params_gates() {
        assert!(ModelParams::new(1, 0.25).is_ok());
        assert!(ModelParams::new(1, 0.6).is_err());
        assert!(ModelParams::new(2, 0.6).unwrap().require_density().is_err());
        assert!(ModelParams::new(0, 0.2).is_err());
        assert!(ModelParams::new(2, 1.0).is_err());
    }

    #[test]
    fn thresholds_order() {
        let t = Thresholds::new(0.2, -0.3, 0.25).unwrap();
        assert_eq!(t.lower, -0.75);
        assert_eq!(t.upper, 0.2);
        assert!(t.lower <= t.theta1 && t.theta2 <= t.upper);
    }

    #[test]
    fn touching_cells_at_vertex() {
        let g = GridGeometry::interval_box(2, -1.0, 1.0, 4).unwrap();
        assert_eq!(g.cells_touching(&[0.0, 0.0]).len(), 4);
        assert_eq!(g.cells_touching(&[0.1, 0.2]).len(), 1);
        assert_eq!(g.cells_touching(&[0.0, 0.2]).len(), 2);
        assert!(g.cells_touching(&[1.5, 0.0]).is_empty());
        assert_eq!(g.cells_touching(&[1.0, 0.2]).len(), 1);
    }
}
