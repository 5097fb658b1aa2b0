//! Piecewise-constant functions on the grid, with exterior data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exterior::ExteriorData;
use crate::geometry::{GridGeometry, Region};

/// A bounded function: one value per cell (constant on each open cell) plus
/// closed-form exterior data. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    geometry: GridGeometry,
    values: Vec<f64>,
    exterior: ExteriorData,
    range: (f64, f64),
}

impl GridFunction {
    pub fn new(geometry: GridGeometry, values: Vec<f64>, exterior: ExteriorData, range: (f64, f64)) -> Result<Self> {
        geometry.validate()?;
        exterior.validate(geometry.dim())?;
        if values.len() != geometry.num_cells() {
            return Err(Error::GeometryMismatch(format!(
                "{} values for {} cells",
                values.len(),
                geometry.num_cells()
            )));
        }
        let (lo, hi) = range;
        if !(lo <= hi) {
            return Err(Error::InvalidParam(format!("empty range [{lo}, {hi}]")));
        }
        for &v in &values {
            if !(v >= lo && v <= hi) {
                return Err(Error::OutOfRange { value: v, lo, hi });
            }
        }
        let (elo, ehi) = exterior.value_range();
        if elo < lo || ehi > hi {
            return Err(Error::OutOfRange {
                value: if elo < lo { elo } else { ehi },
                lo,
                hi,
            });
        }
        Ok(Self {
            geometry,
            values,
            exterior,
            range,
        })
    }

    /// Range taken as the hull of the data.
    pub fn with_auto_range(geometry: GridGeometry, values: Vec<f64>, exterior: ExteriorData) -> Result<Self> {
        let (elo, ehi) = exterior.value_range();
        let lo = values.iter().copied().fold(elo, f64::min);
        let hi = values.iter().copied().fold(ehi, f64::max);
        Self::new(geometry, values, exterior, (lo, hi))
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(geometry: GridGeometry, exterior: ExteriorData, f: F) -> Result<Self> {
        let n = geometry.dim();
        let values = (0..geometry.num_cells())
            .map(|i| f(&geometry.cell_center(i)[..n]))
            .collect();
        Self::with_auto_range(geometry, values, exterior)
    }

    /// Constant on the grid and outside it.
    pub fn constant(geometry: GridGeometry, value: f64) -> Result<Self> {
        let m = geometry.num_cells();
        Self::new(geometry, vec![value; m], ExteriorData::constant(value), (value, value))
    }

    /// Grid values from the natural extension of the exterior data.
    pub fn extension_of(geometry: GridGeometry, exterior: ExteriorData) -> Result<Self> {
        let n = geometry.dim();
        let values = (0..geometry.num_cells())
            .map(|i| exterior.extend_inside(&geometry.cell_center(i), n))
            .collect();
        Self::with_auto_range(geometry, values, exterior)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exterior(&self) -> &ExteriorData {
        &self.exterior
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    /// Same geometry and exterior, new grid values (range re-derived).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::with_auto_range(self.geometry.clone(), values, self.exterior.clone())
    }

    /// Same geometry and exterior, new values, declared range kept.
    pub fn with_values_in_range(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.geometry.clone(), values, self.exterior.clone(), self.range)
    }

    /// `lambda * f`. Only compactly supported or constant exterior data scales.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let exterior = match &self.exterior {
            ExteriorData::Zero => ExteriorData::Zero,
            ExteriorData::Constant { value } => ExteriorData::constant(lambda * value),
            _ => return Err(Error::InvalidParam("only zero or constant exterior data can be scaled".into())),
        };
        let values = self.values.iter().map(|v| lambda * v).collect();
        Self::with_auto_range(self.geometry.clone(), values, exterior)
    }

    /// Cells where the value is nonzero.
    pub fn support(&self) -> Region {
        Region::from_mask(self.values.iter().map(|v| *v != 0.0).collect())
    }

    pub fn require_compact(&self) -> Result<()> {
        if self.exterior.is_compact() {
            Ok(())
        } else {
            Err(Error::NonCompact)
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let rec = GridRecord::from(self);
        std::fs::write(path, serde_json::to_string(&rec)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rec: GridRecord = serde_json::from_str(&text)?;
        rec.try_into()
    }
}

/// Characteristic function of a set of cells, with zero exterior data.
pub fn make_indicator(cells: &[usize], geometry: &GridGeometry) -> Result<GridFunction> {
    let region = Region::from_cells(geometry, cells)?;
    let values = region.mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    GridFunction::new(geometry.clone(), values, ExteriorData::Zero, (0.0, 1.0))
}

/// `min{u, w}` cellwise and on the exterior.
pub fn pointwise_min(u: &GridFunction, w: &GridFunction) -> Result<GridFunction> {
    if u.geometry != w.geometry {
        return Err(Error::GeometryMismatch("pointwise_min needs identical grids".into()));
    }
    let values = u.values.iter().zip(&w.values).map(|(a, b)| a.min(*b)).collect();
    let exterior = u.exterior.pointwise_min(&w.exterior);
    let range = (u.range.0.min(w.range.0), u.range.1.min(w.range.1));
    GridFunction::new(u.geometry.clone(), values, exterior, range)
}

/// Self-describing serialized form of a grid function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRecord {
    pub n: usize,
    #[serde(rename = "box")]
    pub bbox: BoxRecord,
    pub cells_per_axis: Vec<usize>,
    pub exterior: ExteriorData,
    #[serde(default)]
    pub range: Option<[f64; 2]>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl From<&GridFunction> for GridRecord {
    fn from(f: &GridFunction) -> Self {
        Self {
            n: f.dim(),
            bbox: BoxRecord {
                center: f.geometry.center.clone(),
                half_widths: f.geometry.half_widths.clone(),
            },
            cells_per_axis: f.geometry.cells_per_axis.clone(),
            exterior: f.exterior.clone(),
            range: Some([f.range.0, f.range.1]),
            values: f.values.clone(),
        }
    }
}

impl TryFrom<GridRecord> for GridFunction {
    type Error = Error;

    fn try_from(rec: GridRecord) -> Result<Self> {
        if rec.bbox.center.len() != rec.n {
            return Err(Error::InvalidParam("record dimension does not match box".into()));
        }
        let g = GridGeometry::new(rec.bbox.center, rec.bbox.half_widths, rec.cells_per_axis)?;
        match rec.range {
            Some([lo, hi]) => GridFunction::new(g, rec.values, rec.exterior, (lo, hi)),
            None => GridFunction::with_auto_range(g, rec.values, rec.exterior),
        }
    }
}
