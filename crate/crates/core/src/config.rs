//! Scenario configuration files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::boundary::{DomainBoundary, DomainShape, FourierMode, BOUNDARY_SAMPLES};
use crate::error::{Error, Result};
use crate::evolution::{DrivePiece, DriveProfile, LOOP_SAMPLES};
use crate::geometry::{ConvexBody, Vec2};
use crate::grid::{GridDomain, ScalarGrid};
use crate::power_law::DEFAULT_EXPONENTS;
use crate::testbank::{BANK_SEED, BANK_SIZE};

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seed for the test-function bank and random competitors.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output directory, relative to the config file; `--out` overrides it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub omega: OmegaConfig,
    pub body: BodyConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub drive: Option<DriveConfig>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub step: StepConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub hysteresis: HysteresisConfig,
    #[serde(default)]
    pub gamma: GammaConfig,
}

fn default_seed() -> u64 {
    BANK_SEED
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub k: u32,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaPreset {
    Disk,
    Ellipse,
    Cassini,
    PerturbedDisk,
}

/// The cross-section. `radius` for disks, `a, b` for ellipses, `a, c` for Cassini ovals
/// and `radius, modes` for perturbed disks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaConfig {
    pub preset: OmegaPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ModeConfig>,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    BOUNDARY_SAMPLES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyPreset {
    Disk,
    Ellipse,
    /// Closed boundary polygon of a strictly convex body around the origin.
    Parametric,
}

/// The constraint body `K`. `radius` for disks, `a, b` for ellipses, `points` for
/// parametric bodies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub preset: BodyPreset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub center: [f64; 2],
}

/// Checks that exactly the keys in `wanted` are present among `present`.
fn preset_keys(table: &str, preset: &str, present: &[(&str, bool)], wanted: &[&str]) -> Result<()> {
    for &(name, is_set) in present {
        let key = format!("{table}.{name}");
        match (is_set, wanted.contains(&name)) {
            (false, true) => return Err(config_err(&key, format!("required for preset `{preset}`"))),
            (true, false) => return Err(config_err(&key, format!("not used by preset `{preset}`"))),
            _ => {}
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            resolution: default_resolution(),
        }
    }
}

fn default_resolution() -> usize {
    256
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub pieces: Vec<PieceConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PieceConfig {
    Linear {
        t0: f64,
        t1: f64,
        #[serde(rename = "H0")]
        h0: f64,
        #[serde(rename = "H1")]
        h1: f64,
    },
    /// Monotone cubic through `(t, H)` samples.
    Samples {
        t: Vec<f64>,
        #[serde(rename = "H")]
        h: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// `h0 ≡ H_s(start)`.
    #[default]
    Zero,
    /// Grid CSV `x,y,value`.
    Csv { path: PathBuf },
}

/// `ū` for a single step or the power-law report.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Constant {
        value: f64,
    },
    /// `value + gradient · x`
    Affine {
        value: f64,
        gradient: [f64; 2],
    },
    Csv {
        path: PathBuf,
    },
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig::Constant { value: 1.0 }
    }
}

impl FieldConfig {
    /// Pointwise formula, when there is one.
    pub fn formula(&self) -> Option<Box<dyn Fn(Vec2) -> f64 + Sync + Send>> {
        match *self {
            FieldConfig::Constant { value } => Some(Box::new(move |_| value)),
            FieldConfig::Affine { value, gradient } => Some(Box::new(move |x: Vec2| {
                value + gradient[0] * x.x + gradient[1] * x.y
            })),
            FieldConfig::Csv { .. } => None,
        }
    }

    pub fn to_grid(&self, domain: &Arc<GridDomain>, base: &Path) -> Result<ScalarGrid> {
        match self {
            FieldConfig::Csv { path } => load_initial_field(&base.join(path), domain.clone()),
            _ => {
                let f = self.formula().expect("formula fields");
                Ok(ScalarGrid::sample(domain.clone(), &|x: Vec2| f(x)))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    #[serde(default)]
    pub ubar: FieldConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_bank")]
    pub bank_size: usize,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            ubar: FieldConfig::default(),
            trials: default_trials(),
            bank_size: default_bank(),
        }
    }
}

fn default_trials() -> usize {
    100
}

fn default_bank() -> usize {
    BANK_SIZE
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    /// Explicit output times; overrides `samples`.
    #[serde(default)]
    pub times: Vec<f64>,
    /// Uniform output times over the drive span, endpoints included.
    #[serde(default = "default_evolve_samples")]
    pub samples: usize,
    #[serde(default = "default_bank")]
    pub bank_size: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            times: Vec::new(),
            samples: default_evolve_samples(),
            bank_size: default_bank(),
        }
    }
}

fn default_evolve_samples() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HysteresisConfig {
    #[serde(default = "default_loop_samples")]
    pub samples_per_piece: usize,
}

impl Default for HysteresisConfig {
    fn default() -> Self {
        HysteresisConfig {
            samples_per_piece: default_loop_samples(),
        }
    }
}

fn default_loop_samples() -> usize {
    LOOP_SAMPLES
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    #[serde(default = "default_exponents")]
    pub exponents: Vec<f64>,
    #[serde(default)]
    pub ubar: FieldConfig,
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig {
            exponents: default_exponents(),
            ubar: FieldConfig::default(),
        }
    }
}

fn default_exponents() -> Vec<f64> {
    DEFAULT_EXPONENTS.to_vec()
}

/// `[table] key` of the line an error span points into.
fn key_at(text: &str, offset: usize) -> String {
    let offset = offset.min(text.len());
    let mut table = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if trimmed.starts_with('[') {
            table = trimmed.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = trimmed.split_once('=') {
            let k = k.trim();
            if !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
                key = k.to_string();
            }
        }
        pos += line.len();
        if pos > offset {
            break;
        }
    }
    match (table.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let key = e.span().map(|s| key_at(text, s.start)).unwrap_or_default();
            config_err(
                if key.is_empty() { "<root>" } else { &key },
                e.message().to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.grid.resolution;
        if !(64..=2048).contains(&r) || !r.is_power_of_two() {
            return Err(config_err(
                "grid.resolution",
                format!("{r} is not a power of two between 64 and 2048"),
            ));
        }
        if self.omega.samples < 64 {
            return Err(config_err("omega.samples", "need at least 64 boundary samples"));
        }
        if self.gamma.exponents.iter().any(|&p| !(p >= 2.0)) {
            return Err(config_err("gamma.exponents", "exponents must be at least 2"));
        }
        if self.step.bank_size == 0 || self.evolve.bank_size == 0 {
            return Err(config_err(
                "bank_size",
                "the test bank needs at least one function",
            ));
        }
        if let Some(d) = &self.drive {
            d.build()?;
        }
        self.boundary()?;
        self.body()?;
        Ok(())
    }

    pub fn boundary(&self) -> Result<DomainBoundary> {
        let o = &self.omega;
        let center = Vec2::new(o.center[0], o.center[1]);
        let present = [
            ("radius", o.radius.is_some()),
            ("a", o.a.is_some()),
            ("b", o.b.is_some()),
            ("c", o.c.is_some()),
            ("modes", !o.modes.is_empty()),
        ];
        let check = |name: &str, wanted: &[&str]| preset_keys("omega", name, &present, wanted);
        let shape = match o.preset {
            OmegaPreset::Disk => {
                check("disk", &["radius"])?;
                DomainShape::Disk {
                    radius: o.radius.unwrap(),
                    center,
                }
            }
            OmegaPreset::Ellipse => {
                check("ellipse", &["a", "b"])?;
                DomainShape::Ellipse {
                    a: o.a.unwrap(),
                    b: o.b.unwrap(),
                    center,
                }
            }
            OmegaPreset::Cassini => {
                check("cassini", &["a", "c"])?;
                DomainShape::Cassini {
                    a: o.a.unwrap(),
                    c: o.c.unwrap(),
                    center,
                }
            }
            OmegaPreset::PerturbedDisk => {
                check("perturbed_disk", &["radius", "modes"])?;
                DomainShape::PerturbedDisk {
                    radius: o.radius.unwrap(),
                    modes: o
                        .modes
                        .iter()
                        .map(|m| FourierMode {
                            k: m.k,
                            amplitude: m.amplitude,
                            phase: m.phase,
                        })
                        .collect(),
                    center,
                }
            }
        };
        DomainBoundary::new(shape, o.samples).map_err(|e| config_err("omega", e.to_string()))
    }

    pub fn body(&self) -> Result<ConvexBody> {
        let k = &self.body;
        let center = Vec2::new(k.center[0], k.center[1]);
        let present = [
            ("radius", k.radius.is_some()),
            ("a", k.a.is_some()),
            ("b", k.b.is_some()),
            ("points", !k.points.is_empty()),
        ];
        let check = |name: &str, wanted: &[&str]| preset_keys("body", name, &present, wanted);
        let body = match k.preset {
            BodyPreset::Disk => {
                check("disk", &["radius"])?;
                ConvexBody::offset_disk(k.radius.unwrap(), center)
            }
            BodyPreset::Ellipse => {
                check("ellipse", &["a", "b"])?;
                ConvexBody::ellipse(k.a.unwrap(), k.b.unwrap(), center)
            }
            BodyPreset::Parametric => {
                check("parametric", &["points"])?;
                let pts: Vec<Vec2> = k.points.iter().map(|p| Vec2::new(p[0], p[1]) + center).collect();
                ConvexBody::parametric(&pts)
            }
        };
        body.map_err(|e| config_err("body", e.to_string()))
    }

    pub fn drive(&self) -> Result<DriveProfile> {
        self.drive
            .as_ref()
            .ok_or_else(|| config_err("drive", "this subcommand needs a [drive] table"))?
            .build()
    }
}

impl DriveConfig {
    pub fn build(&self) -> Result<DriveProfile> {
        let pieces = self
            .pieces
            .iter()
            .map(|p| match p {
                PieceConfig::Linear { t0, t1, h0, h1 } => DrivePiece::linear(*t0, *t1, *h0, *h1),
                PieceConfig::Samples { t, h } => DrivePiece::samples(t.clone(), h.clone()),
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::Config { msg, .. } => config_err("drive.pieces", msg),
                other => config_err("drive.pieces", other.to_string()),
            })?;
        DriveProfile::new(pieces).map_err(|e| match e {
            Error::Config { msg, .. } => config_err("drive.pieces", msg),
            other => other,
        })
    }
}

/// Reads a grid CSV onto `domain`; the mask comes from `domain`, not the file.
pub fn load_initial_field(path: &Path, domain: Arc<GridDomain>) -> Result<ScalarGrid> {
    let file = std::fs::File::open(path)?;
    ScalarGrid::read_csv(domain, std::io::BufReader::new(file))
}
