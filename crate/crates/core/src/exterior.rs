//! Closed-form data prescribed on the complement of the grid box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MAX_DIM;

/// Values of a function outside the grid box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExteriorData {
    /// Compact support: the function vanishes outside the box.
    Zero,
    Constant { value: f64 },
    /// `+1` where `x . direction > offset`, `-1` elsewhere.
    HalfSpace { direction: Vec<f64>, offset: f64 },
    /// Piecewise-linear in `|x|` through the given nodes, constant beyond the
    /// last node (and before the first).
    Radial { radii: Vec<f64>, values: Vec<f64> },
    /// Pointwise minimum of two exterior descriptors.
    Min { a: Box<ExteriorData>, b: Box<ExteriorData> },
}

impl ExteriorData {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    /// Half-space profile with a unit normal `e` (normalized here).
    pub fn half_space(direction: &[f64], offset: f64) -> Result<Self> {
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::InvalidParam("half-space direction must be nonzero".into()));
        }
        Ok(Self::HalfSpace {
            direction: direction.iter().map(|x| x / norm).collect(),
            offset,
        })
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::Zero => Ok(()),
            Self::Constant { value } => {
                if value.is_finite() {
                    Ok(())
                } else {
                    Err(Error::DivergentTail(format!("constant {value}")))
                }
            }
            Self::HalfSpace { direction, offset } => {
                if direction.len() != n {
                    return Err(Error::InvalidParam("half-space direction has wrong dimension".into()));
                }
                let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 || !offset.is_finite() {
                    return Err(Error::InvalidParam("half-space direction must be a unit vector".into()));
                }
                Ok(())
            }
            Self::Radial { radii, values } => {
                if radii.is_empty() || radii.len() != values.len() {
                    return Err(Error::InvalidParam("radial profile needs matching radii and values".into()));
                }
                if radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] < 0.0 {
                    return Err(Error::InvalidParam("radial nodes must be increasing and nonnegative".into()));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::DivergentTail("radial profile has non-finite values".into()));
                }
                Ok(())
            }
            Self::Min { a, b } => {
                a.validate(n)?;
                b.validate(n)
            }
        }
    }

    pub fn is_compact(&self) -> bool {
        self.constant_value() == Some(0.0)
    }

    /// Same value everywhere outside the box.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::Constant { value } => Some(*value),
            Self::Radial { values, .. } if values.iter().all(|v| *v == values[0]) => Some(values[0]),
            Self::Min { a, b } => match (a.constant_value(), b.constant_value()) {
                (Some(x), Some(y)) => Some(x.min(y)),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { value } => *value,
            Self::HalfSpace { direction, offset } => {
                let d: f64 = direction.iter().zip(x).map(|(e, x)| e * x).sum();
                if d > *offset {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::Radial { radii, values } => {
                let r = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                radial_eval(radii, values, r)
            }
            Self::Min { a, b } => a.eval(x).min(b.eval(x)),
        }
    }

    /// Bounds of the exterior values.
    pub fn value_range(&self) -> (f64, f64) {
        match self {
            Self::Zero => (0.0, 0.0),
            Self::Constant { value } => (*value, *value),
            Self::HalfSpace { .. } => (-1.0, 1.0),
            Self::Radial { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v))),
            Self::Min { a, b } => {
                let (alo, ahi) = a.value_range();
                let (blo, bhi) = b.value_range();
                (alo.min(blo), ahi.min(bhi))
            }
        }
    }

    /// Pointwise minimum, simplified when one side dominates.
    pub fn pointwise_min(&self, other: &ExteriorData) -> ExteriorData {
        if self == other {
            return self.clone();
        }
        let (alo, ahi) = self.value_range();
        let (blo, bhi) = other.value_range();
        if ahi <= blo {
            return self.clone();
        }
        if bhi <= alo {
            return other.clone();
        }
        ExteriorData::Min {
            a: Box::new(self.clone()),
            b: Box::new(other.clone()),
        }
    }

    /// Natural extension used to initialize grid values inside the box.
    pub fn extend_inside(&self, x: &[f64; MAX_DIM], n: usize) -> f64 {
        self.eval(&x[..n])
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Zero => "zero (compact support)".into(),
            Self::Constant { value } => format!("constant {value}"),
            Self::HalfSpace { direction, offset } => format!("half-space sign, normal {direction:?}, offset {offset}"),
            Self::Radial { radii, .. } => format!("radial profile with {} nodes", radii.len()),
            Self::Min { a, b } => format!("min({}, {})", a.describe(), b.describe()),
        }
    }
}

fn radial_eval(radii: &[f64], values: &[f64], r: f64) -> f64 {
    if r <= radii[0] {
        return values[0];
    }
    let last = radii.len() - 1;
    if r >= radii[last] {
        return values[last];
    }
    let k = radii.partition_point(|&t| t <= r);
    let (r0, r1) = (radii[k - 1], radii[k]);
    let t = (r - r0) / (r1 - r0);
    values[k - 1] * (1.0 - t) + values[k] * t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_space_sign() {
        let e = ExteriorData::half_space(&[2.0, 0.0], 0.0).unwrap();
        assert_eq!(e.eval(&[1.0, 5.0]), 1.0);
        assert_eq!(e.eval(&[-1.0, 5.0]), -1.0);
        assert_eq!(e.eval(&[0.0, 5.0]), -1.0);
        e.validate(2).unwrap();
        assert!(e.validate(1).is_err());
    }

    #[test]
    fn radial_profile_interpolates() {
        let e = ExteriorData::Radial {
            radii: vec![1.0, 3.0],
            values: vec![-1.0, 1.0],
        };
        e.validate(2).unwrap();
        assert_eq!(e.eval(&[0.0, 2.0]), 0.0);
        assert_eq!(e.eval(&[10.0, 0.0]), 1.0);
        assert_eq!(e.eval(&[0.1, 0.0]), -1.0);
    }

    #[test]
    fn min_simplifies_when_ordered() {
        let one = ExteriorData::constant(1.0);
        let hs = ExteriorData::half_space(&[1.0], 0.0).unwrap();
        assert_eq!(hs.pointwise_min(&one), hs);
        let z = ExteriorData::constant(0.0);
        assert!(matches!(hs.pointwise_min(&z), ExteriorData::Min { .. }));
        assert_eq!(hs.pointwise_min(&z).eval(&[3.0]), 0.0);
    }

    #[test]
    fn serde_roundtrip() {
        let e = ExteriorData::half_space(&[0.0, 1.0], 0.5).unwrap();
        let js = serde_json::to_string(&e).unwrap();
        assert!(js.contains("\"kind\":\"half_space\""));
        let back: ExteriorData = serde_json::from_str(&js).unwrap();
        assert_eq!(back, e);
    }
}
