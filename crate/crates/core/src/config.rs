//! TOML run configuration, schema version 1.
//!
//! ```toml
//! schema_version = 1
//!
//! [grid]
//! n = 1
//! res = 64
//! period = 1.0              # default 1.0
//!
//! [initial]
//! levels = 4                # approximation levels J, default 1
//! [initial.potential]       # a PotentialSpec, tagged by `kind`
//! kind = "lelong"
//! gamma = 0.5
//! [initial.approx]          # optional, ApproxParams defaults
//! ratio = 0.7071067811865476
//!
//! [flow]
//! variant = "cmaf"          # cmaf | ncmaf
//! c = 0.0
//! psi_chi = []              # Fourier modes {amp, k, phase}
//! h = []                    # Fourier modes, normalized so mean(e^h) = 1
//! horizon = 1.0
//! policy = "rk4"            # rk4 | semi_implicit
//! safety = 0.9
//! dt_min = 1e-12
//! # dt_init = 1e-4          # cap for rk4, fixed step for semi_implicit
//! dealias = false
//!
//! [verify]
//! checks = ["sup_bound", "clef"]
//! # tolerance = 1e-5       # overrides every default tolerance
//! tolerances = { clef = 1e-5 }
//! stbelow_a = 1.0
//! stbelow_c = 0.0
//!
//! [output]
//! # dir = "run"            # relative paths resolve against the output root
//! record_every = 50
//! snapshot_times = [0.5]
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, StepPolicy, TwistSpec, Variant};
use crate::grid::{PotentialField, TorusGrid};
use crate::initial::{sample_potential, ApproxParams, Mode, PotentialSpec};
use crate::verify::{CheckParams, TRAJECTORY_CHECKS};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridBlock,
    pub initial: InitialBlock,
    #[serde(default)]
    pub flow: FlowBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n: usize,
    pub res: usize,
    #[serde(default = "one")]
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    pub potential: PotentialSpec,
    #[serde(default = "one_level")]
    pub levels: usize,
    #[serde(default)]
    pub approx: ApproxParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowBlock {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub psi_chi: Vec<Mode>,
    #[serde(default)]
    pub h: Vec<Mode>,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "default_policy")]
    pub policy: StepPolicy,
    #[serde(default = "default_safety")]
    pub safety: f64,
    #[serde(default = "default_dt_min")]
    pub dt_min: f64,
    #[serde(default)]
    pub dt_init: Option<f64>,
    #[serde(default)]
    pub dealias: bool,
}

impl Default for FlowBlock {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            c: 0.0,
            psi_chi: Vec::new(),
            h: Vec::new(),
            horizon: 1.0,
            policy: default_policy(),
            safety: default_safety(),
            dt_min: default_dt_min(),
            dt_init: None,
            dealias: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyBlock {
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default = "one")]
    pub stbelow_a: f64,
    #[serde(default)]
    pub stbelow_c: f64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        Self { checks: Vec::new(), tolerance: None, tolerances: BTreeMap::new(), stbelow_a: 1.0, stbelow_c: 0.0 }
    }
}

impl VerifyBlock {
    /// Parameters for one named check.
    pub fn params_for(&self, name: &str) -> CheckParams {
        CheckParams {
            tolerance: self.tolerances.get(name).copied().or(self.tolerance),
            stbelow_a: self.stbelow_a,
            stbelow_c: self.stbelow_c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_record")]
    pub record_every: usize,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: None, record_every: default_record(), snapshot_times: Vec::new() }
    }
}

fn one() -> f64 {
    1.0
}
fn one_level() -> usize {
    1
}
fn default_variant() -> Variant {
    Variant::Cmaf
}
fn default_policy() -> StepPolicy {
    StepPolicy::Rk4
}
fn default_safety() -> f64 {
    0.9
}
fn default_dt_min() -> f64 {
    1e-12
}
fn default_record() -> usize {
    50
}

impl RunConfig {
    /// A config with every optional block at its default.
    pub fn new(grid: GridBlock, potential: PotentialSpec) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            grid,
            initial: InitialBlock { potential, levels: 1, approx: ApproxParams::default() },
            flow: FlowBlock::default(),
            verify: VerifyBlock::default(),
            output: OutputBlock::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Schema-level checks; numeric admissibility is checked by
    /// [`FlowConfig::validate`] when the flow is built.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.grid()?;
        if self.initial.levels == 0 {
            return Err(Error::Config("initial.levels must be at least 1".into()));
        }
        for name in &self.verify.checks {
            if !TRAJECTORY_CHECKS.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown check {name:?}")));
            }
        }
        for name in self.verify.tolerances.keys() {
            if !TRAJECTORY_CHECKS.contains(&name.as_str()) {
                return Err(Error::Config(format!("tolerance given for unknown check {name:?}")));
            }
        }
        if self.output.record_every == 0 {
            return Err(Error::Config("output.record_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.n, self.grid.res, self.grid.period)
    }

    fn modes_field(grid: &TorusGrid, modes: &[Mode]) -> Result<PotentialField> {
        if modes.is_empty() {
            return Ok(PotentialField::zeros(*grid));
        }
        sample_potential(&PotentialSpec::smooth(modes.to_vec()), grid)
    }

    /// The validated flow configuration.
    pub fn flow_config(&self) -> Result<FlowConfig> {
        let grid = self.grid()?;
        let f = &self.flow;
        let psi = Self::modes_field(&grid, &f.psi_chi)?;
        let twist = TwistSpec::new(f.c, psi)?;
        let cfg = FlowConfig::new(grid)
            .with_variant(f.variant)
            .with_h(Self::modes_field(&grid, &f.h)?)?
            .with_twist(twist)
            .with_horizon(f.horizon)
            .with_policy(f.policy)
            .with_safety(f.safety)
            .with_dt_min(f.dt_min)
            .with_dt_init(f.dt_init)
            .with_dealias(f.dealias)
            .with_record_every(self.output.record_every)
            .with_checkpoints(self.output.snapshot_times.clone())
            .with_data_class(self.initial.potential.data_class());
        cfg.validate()?;
        Ok(cfg)
    }
}
