//! Experiment configuration: one JSON document, overridable field by field.

use std::path::{Path, PathBuf};

use nonlocal_core::exterior::ExteriorData;
use nonlocal_core::geometry::{GridGeometry, QuadratureSettings};
use nonlocal_core::grid::{GridFunction, GridRecord};
use nonlocal_core::minimize::MinimizeOptions;
use nonlocal_core::potential::{GrowSearch, PotentialSpec};
use nonlocal_core::recursion::{GrowthFunction, RecursionParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Name under which the bundled indicator of `[0, 1]` can be used as input.
pub const CHI_FIXTURE: &str = "builtin:chi_unit_interval";
const CHI_FIXTURE_JSON: &str = include_str!("../fixtures/chi_unit_interval.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub n: usize,
    pub s: f64,
    pub quadrature: QuadratureSettings,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            n: 1,
            s: 0.25,
            quadrature: QuadratureSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityBlock {
    /// Spacing of every minimization grid.
    pub h: f64,
    /// Radii of the energy sweep; the largest one is also the volume run.
    pub radii: Vec<f64>,
    pub theta1: f64,
    pub theta2: f64,
    /// Lower bound asserted for `|{u > theta2} cap B_R| / R^n`.
    pub floor: f64,
    /// Allowed distance of the fitted energy exponent from `n - 2s`.
    pub growth_tolerance: f64,
    /// Scale of the la8 comparison.
    pub k: f64,
}

impl Default for DensityBlock {
    fn default() -> Self {
        Self {
            h: 0.25,
            radii: vec![8.0, 16.0, 32.0, 64.0],
            theta1: 0.0,
            theta2: 0.0,
            floor: 0.1,
            growth_tolerance: 0.3,
            k: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SobolevBlock {
    /// Seeded random step functions for the best-constant estimate.
    pub random_trials: usize,
}

impl Default for SobolevBlock {
    fn default() -> Self {
        Self { random_trials: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsetBlock {
    pub t_values: Vec<f64>,
    /// Seeded random decreasing sequences checked against the summation bound.
    pub random_sequences: usize,
}

impl Default for LevelsetBlock {
    fn default() -> Self {
        Self {
            t_values: vec![2.0, 4.0, 8.0],
            random_sequences: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    /// Support of the input function.
    Support,
    Ball { center: Vec<f64>, radius: f64 },
    /// Cells with multi-index in `lo..hi` (exclusive).
    Box { lo: Vec<usize>, hi: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetBlock {
    pub set: SetSpec,
    /// Point for the complement integral; none skips it.
    pub point: Option<Vec<f64>>,
    /// Seeded random boxes with an interior point.
    pub random_sets: usize,
}

impl Default for SetBlock {
    fn default() -> Self {
        Self {
            set: SetSpec::Support,
            point: None,
            random_sets: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierBlock {
    pub radius: f64,
    pub h: f64,
    /// Defaults to `c_grow / 4` of the configured potential.
    pub tau: Option<f64>,
    /// Searched on the admissible ladder when absent.
    pub c_b: Option<f64>,
    pub max_steps: u32,
    /// Extra radii swept at the same `C_b` and spacing.
    pub sweep_radii: Vec<f64>,
}

impl Default for BarrierBlock {
    fn default() -> Self {
        Self {
            radius: 16.0,
            h: 0.5,
            tau: None,
            c_b: None,
            max_steps: 24,
            sweep_radii: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecursionBlock {
    pub params: RecursionParams,
    pub growth: GrowthFunction,
    pub steps: usize,
    /// Ratio of the geometric grid on which the hypothesis is sampled.
    pub grid_ratio: f64,
    pub grid_count: usize,
}

impl Default for RecursionBlock {
    fn default() -> Self {
        Self {
            params: RecursionParams {
                sigma: 0.5,
                mu: 256.0,
                nu: 2.0,
                gamma: 2.0,
                r_o: 16.0,
                c: 2.0,
            },
            growth: GrowthFunction::Power { scale: 1.0, exponent: 2.0 },
            steps: 40,
            grid_ratio: 2.0,
            grid_count: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowBlock {
    pub search: GrowSearch,
    pub wcond_mesh: usize,
}

impl Default for GrowBlock {
    fn default() -> Self {
        Self {
            search: GrowSearch::default(),
            wcond_mesh: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchBlock {
    /// Cells per axis.
    pub sizes: Vec<usize>,
    pub threads: Vec<usize>,
    pub repeats: usize,
}

impl Default for BenchBlock {
    fn default() -> Self {
        Self {
            sizes: vec![256, 512, 1024],
            threads: vec![1, 2, 4],
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    pub grid: Option<GridGeometry>,
    pub potential: PotentialSpec,
    pub exterior: ExteriorData,
    /// Grid function file, or the bundled fixture name.
    pub input: Option<String>,
    pub minimize: MinimizeOptions,
    pub density: DensityBlock,
    pub sobolev: SobolevBlock,
    pub levelset: LevelsetBlock,
    pub set_sobolev: SetBlock,
    pub barrier: BarrierBlock,
    pub recursion: RecursionBlock,
    pub grow_constant: GrowBlock,
    pub bench: BenchBlock,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelBlock::default(),
            grid: None,
            potential: PotentialSpec::default(),
            exterior: ExteriorData::Zero,
            input: None,
            minimize: MinimizeOptions::default(),
            density: DensityBlock::default(),
            sobolev: SobolevBlock::default(),
            levelset: LevelsetBlock::default(),
            set_sobolev: SetBlock::default(),
            barrier: BarrierBlock::default(),
            recursion: RecursionBlock::default(),
            grow_constant: GrowBlock::default(),
            bench: BenchBlock::default(),
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Parse `a.b.c=json` into a path and a value; bare words become strings.
fn parse_override(spec: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override '{spec}' is not of the form key=value")))?;
    if key.is_empty() {
        return Err(CliError::Usage(format!("override '{spec}' has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.split('.').map(str::to_string).collect(), value))
}

fn set_path(root: &mut Value, path: &[String], value: Value) -> Result<(), CliError> {
    let mut cur = root;
    for (i, key) in path.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("cannot set '{}': parent is not an object", path.join("."))))?;
        if i + 1 == path.len() {
            obj.insert(key.clone(), value);
            return Ok(());
        }
        cur = obj.entry(key.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("override paths are nonempty")
}

/// Load the document (or start from `{}`), apply overrides, then validate
/// against the schema. Unknown keys anywhere are rejected.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<(ExperimentConfig, String), CliError> {
    let mut doc: Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    if !doc.is_object() {
        return Err(CliError::Config("config must be a JSON object".into()));
    }
    for spec in overrides {
        let (key, value) = parse_override(spec)?;
        set_path(&mut doc, &key, value)?;
    }
    let cfg: ExperimentConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
    let hash = config_hash(&cfg)?;
    Ok((cfg, hash))
}

/// SHA-256 of the fully resolved configuration (defaults filled in), without
/// the output directory.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let mut value = serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("out");
    }
    let bytes = serde_json::to_vec(&value).map_err(|e| CliError::Config(e.to_string()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<GridGeometry, CliError> {
        let g = self
            .grid
            .clone()
            .ok_or_else(|| CliError::Config("this subcommand needs a 'grid' block".into()))?;
        g.validate()?;
        if g.dim() != self.model.n {
            return Err(CliError::Config(format!(
                "grid has dimension {} but model.n = {}",
                g.dim(),
                self.model.n
            )));
        }
        Ok(g)
    }

    /// The input grid function: a file, the bundled fixture, or (when no
    /// input is given) the natural extension of the exterior data.
    pub fn input_function(&self, base: Option<&Path>) -> Result<GridFunction, CliError> {
        let f = match self.input.as_deref() {
            Some(CHI_FIXTURE) => {
                let rec: GridRecord = serde_json::from_str(CHI_FIXTURE_JSON).map_err(|e| CliError::Config(e.to_string()))?;
                GridFunction::try_from(rec)?
            }
            Some(p) => {
                let mut path = PathBuf::from(p);
                if path.is_relative() {
                    if let Some(dir) = base {
                        path = dir.join(path);
                    }
                }
                if !path.exists() {
                    return Err(CliError::Usage(format!("input file {} does not exist", path.display())));
                }
                GridFunction::load_json(&path)?
            }
            None => GridFunction::extension_of(self.grid()?, self.exterior.clone())?,
        };
        if f.dim() != self.model.n {
            return Err(CliError::Config(format!(
                "input has dimension {} but model.n = {}",
                f.dim(),
                self.model.n
            )));
        }
        Ok(f)
    }
}
