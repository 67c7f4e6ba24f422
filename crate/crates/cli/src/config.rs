//! Run configuration: a TOML document with `grid`, `system`, `initial`,
//! `potential`, `inversion`, `experiment`, `oracle`, `conservation`,
//! `diagnose` and `output` blocks.
//!
//! Potentials are expression strings in `x` (`+ - * / ^`, `sin`, `cos`,
//! `exp`, `sqrt`, `pi`, `e`, ...), evaluated on grid nodes.

use std::fmt;
use std::path::Path;

use effpot::grid::Grid;
use effpot::quantum::{SoftCore, Statistics, SystemSpec, TaylorEngine};
use effpot::taylor::InversionOptions;
use effpot::verify::{
    profile, ConservationOptions, ExperimentSetup, OracleOptions, Profile, SlCheckSetup,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version of the configuration schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Problem with a configuration file. `line` points into the source when the
/// offending entry can be located.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "configuration error in `{}` (line {line}): {}", self.field, self.message),
            None => write!(f, "configuration error in `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            line: None,
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Forward,
    Invert,
    Roundtrip,
    Independence,
    DiagnoseSl,
    OracleCompare,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Forward => "forward",
            ExperimentKind::Invert => "invert",
            ExperimentKind::Roundtrip => "roundtrip",
            ExperimentKind::Independence => "independence",
            ExperimentKind::DiagnoseSl => "diagnose-sl",
            ExperimentKind::OracleCompare => "oracle-compare",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub a: f64,
    pub b: f64,
    /// Interior nodes of `Ω`.
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default = "default_margin")]
    pub box_margin: usize,
}

fn default_margin() -> usize {
    10
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionKind {
    None,
    SoftCore,
    Coulomb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionBlock {
    pub kind: InteractionKind,
    #[serde(default)]
    pub strength: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1.0
}

impl Default for InteractionBlock {
    fn default() -> Self {
        Self {
            kind: InteractionKind::None,
            strength: 0.0,
            epsilon: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub particles: usize,
    pub statistics: Statistics,
    #[serde(default)]
    pub interaction: InteractionBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    /// Sampled on `Ω`, zero elsewhere.
    #[serde(default = "zero_expr")]
    pub potential: String,
    /// Sampled on the whole box.
    #[serde(default = "zero_expr")]
    pub background: String,
    #[serde(default)]
    pub kick: f64,
}

fn zero_expr() -> String {
    "0".into()
}

impl Default for InitialBlock {
    fn default() -> Self {
        Self {
            potential: zero_expr(),
            background: zero_expr(),
            kick: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    /// Taylor coefficients `v⁽⁰⁾, v⁽¹⁾, ...` about `t0 = 0`.
    #[serde(default)]
    pub orders: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionBlock {
    #[serde(rename = "K", default = "default_order")]
    pub k: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_floor")]
    pub m_floor: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub engine: TaylorEngine,
    #[serde(default)]
    pub seed: u64,
}

fn default_order() -> usize {
    2
}
fn default_tol() -> f64 {
    InversionOptions::default().tol
}
fn default_floor() -> f64 {
    InversionOptions::default().floor
}
fn default_trials() -> usize {
    InversionOptions::default().trials
}

impl Default for InversionBlock {
    fn default() -> Self {
        Self {
            k: default_order(),
            tol: default_tol(),
            m_floor: default_floor(),
            trials: default_trials(),
            engine: TaylorEngine::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub kind: ExperimentKind,
    #[serde(rename = "T", default = "default_t")]
    pub t: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub primed_strengths: Vec<f64>,
    /// Defaults to `T / 10`.
    #[serde(default)]
    pub probe_time: Option<f64>,
}

fn default_t() -> f64 {
    0.5
}
fn default_dt() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConservationBlock {
    #[serde(default = "default_cons_dt")]
    pub dt: f64,
    #[serde(rename = "T", default = "default_t")]
    pub t: f64,
    #[serde(default = "default_true")]
    pub refine: bool,
    #[serde(default = "default_eigen_steps")]
    pub eigenstate_steps: usize,
}

fn default_cons_dt() -> f64 {
    ConservationOptions::default().dt
}
fn default_true() -> bool {
    true
}
fn default_eigen_steps() -> usize {
    ConservationOptions::default().eigenstate_steps
}

impl Default for ConservationBlock {
    fn default() -> Self {
        let d = ConservationOptions::default();
        Self {
            dt: d.dt,
            t: d.t_end,
            refine: d.refine,
            eigenstate_steps: d.eigenstate_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_tol_track")]
    pub tol_track: f64,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
}

fn default_sweeps() -> usize {
    OracleOptions::default().sweeps
}
fn default_tol_track() -> f64 {
    OracleOptions::default().tol_track
}
fn default_step_tol() -> f64 {
    OracleOptions::default().step_tol
}

impl Default for OracleBlock {
    fn default() -> Self {
        let d = OracleOptions::default();
        Self {
            sweeps: d.sweeps,
            tol_track: d.tol_track,
            step_tol: d.step_tol,
        }
    }
}

/// Inputs of the Sturm–Liouville diagnostics (`diagnose-sl`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseBlock {
    pub density: String,
    pub solution: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub directory: Option<String>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Csv]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub grid: GridBlock,
    #[serde(default)]
    pub system: Option<SystemBlock>,
    #[serde(default)]
    pub initial: InitialBlock,
    #[serde(default)]
    pub potential: PotentialBlock,
    #[serde(default)]
    pub inversion: InversionBlock,
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub oracle: OracleBlock,
    #[serde(default)]
    pub conservation: ConservationBlock,
    #[serde(default)]
    pub diagnose: Option<DiagnoseBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

/// What a validated configuration runs.
pub enum Plan {
    Experiment(ExperimentKind, Box<ExperimentSetup>),
    Diagnose(SlCheckSetup),
}

/// A parsed configuration together with its source text.
pub struct LoadedConfig {
    pub config: RunConfig,
    source: String,
}

impl LoadedConfig {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(source).map_err(|e| {
            let line = e
                .span()
                .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
            ConfigError {
                field: "schema".into(),
                line,
                message: e.message().trim().to_string(),
            }
        })?;
        Ok(Self {
            config,
            source: source.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new("file", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&source)
    }

    /// Attach the source line of `err.field` when it can be found.
    pub fn locate(&self, mut err: ConfigError) -> ConfigError {
        if err.line.is_none() {
            err.line = locate_field(&self.source, &err.field);
        }
        err
    }

    /// Validate and build the run plan.
    pub fn plan(&self) -> Result<Plan, ConfigError> {
        self.config.plan().map_err(|e| self.locate(e))
    }
}

/// Line (1-based) of the key named by a dotted field path such as `grid.M`
/// or `potential.orders[1]`.
pub fn locate_field(source: &str, field: &str) -> Option<usize> {
    let path: Vec<&str> = field
        .split('.')
        .map(|p| p.split('[').next().unwrap_or(p))
        .collect();
    let (key, tables) = path.split_last()?;
    let table = tables.join(".");
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = header.trim().to_string();
            if current == field {
                return Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == *key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Compile an expression in `x`; `field` names it in errors.
pub fn expression(field: &str, text: &str) -> Result<Profile, ConfigError> {
    let expr: meval::Expr = text
        .parse()
        .map_err(|e| ConfigError::new(field, format!("cannot parse expression `{text}`: {e}")))?;
    // reject unknown names up front
    let probe = expr.eval_with_context((("x", 0.5), meval::Context::new()));
    if let Err(e) = probe {
        return Err(ConfigError::new(field, format!("invalid expression `{text}`: {e}")));
    }
    Ok(profile(move |x| {
        expr.eval_with_context((("x", x), meval::Context::new()))
            .unwrap_or(f64::NAN)
    }))
}

fn positive(field: &str, value: f64) -> Result<f64, ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::new(field, format!("must be a positive number (got {value})")))
    }
}

fn core_error(e: effpot::Error) -> ConfigError {
    match e {
        effpot::Error::Config { field, message } => ConfigError::new(field, message),
        other => ConfigError::new("config", other.to_string()),
    }
}

impl RunConfig {
    /// Canonical hash of everything that influences the results (the output
    /// block is excluded).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputBlock::default();
        let json = serde_json::to_vec(&canonical).expect("configuration serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }

    pub fn seed(&self) -> u64 {
        self.inversion.seed
    }

    fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.grid.a, self.grid.b, self.grid.m).map_err(core_error)
    }

    fn system(&self) -> Result<SystemSpec, ConfigError> {
        let block = self
            .system
            .as_ref()
            .ok_or_else(|| ConfigError::new("system", "block is required for this experiment"))?;
        if !(1..=2).contains(&block.particles) {
            return Err(ConfigError::new(
                "system.particles",
                format!("one or two particles are supported (got {})", block.particles),
            ));
        }
        if block.statistics.particles() != block.particles {
            return Err(ConfigError::new(
                "system.statistics",
                format!(
                    "`{:?}` describes {} particle(s), but system.particles = {}",
                    block.statistics,
                    block.statistics.particles(),
                    block.particles
                ),
            ));
        }
        let i = &block.interaction;
        let interaction = match i.kind {
            InteractionKind::Coulomb => {
                return Err(ConfigError::new(
                    "system.interaction.kind",
                    "the bare Coulomb kernel is singular in 1D; use kind = \"soft-core\" with epsilon > 0",
                ))
            }
            InteractionKind::None => SoftCore::NONE,
            InteractionKind::SoftCore => {
                if !(i.epsilon > 0.0 && i.epsilon.is_finite()) {
                    return Err(ConfigError::new(
                        "system.interaction.epsilon",
                        format!(
                            "soft-core regularization requires epsilon > 0 (got {}); the bare Coulomb kernel is excluded",
                            i.epsilon
                        ),
                    ));
                }
                if !i.strength.is_finite() {
                    return Err(ConfigError::new("system.interaction.strength", "must be finite"));
                }
                SoftCore::new(i.strength, i.epsilon)
            }
        };
        Ok(SystemSpec {
            particles: block.particles,
            statistics: block.statistics,
            interaction,
        })
    }

    fn inversion(&self) -> Result<InversionOptions, ConfigError> {
        let b = &self.inversion;
        positive("inversion.tol", b.tol)?;
        positive("inversion.m_floor", b.m_floor)?;
        Ok(InversionOptions {
            engine: b.engine,
            tol: b.tol,
            floor: b.m_floor,
            trials: b.trials,
            seed: b.seed,
        })
    }

    /// Validate every field and build the run plan.
    pub fn plan(&self) -> Result<Plan, ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema",
                format!("unsupported schema version {} (this build reads {SCHEMA_VERSION})", self.schema),
            ));
        }
        if self.output.formats.is_empty() {
            return Err(ConfigError::new("output.formats", "at least one format is required"));
        }
        let omega = self.grid()?;
        let inversion = self.inversion()?;
        let kind = self.experiment.kind;
        if kind == ExperimentKind::DiagnoseSl {
            let d = self
                .diagnose
                .as_ref()
                .ok_or_else(|| ConfigError::new("diagnose", "block is required for diagnose-sl"))?;
            return Ok(Plan::Diagnose(SlCheckSetup {
                omega,
                density: expression("diagnose.density", &d.density)?,
                solution: expression("diagnose.solution", &d.solution)?,
                trials: inversion.trials,
                seed: inversion.seed,
                floor: inversion.floor,
            }));
        }

        let system = self.system()?;
        if self.grid.box_margin < 1 {
            return Err(ConfigError::new(
                "grid.box_margin",
                "the simulation box must strictly contain the domain (margin >= 1)",
            ));
        }
        if self.potential.orders.is_empty() {
            return Err(ConfigError::new("potential.orders", "at least v(0) is required"));
        }
        let potential = self
            .potential
            .orders
            .iter()
            .enumerate()
            .map(|(k, text)| expression(&format!("potential.orders[{k}]"), text))
            .collect::<Result<Vec<_>, _>>()?;
        let e = &self.experiment;
        positive("experiment.T", e.t)?;
        positive("experiment.dt", e.dt)?;
        if e.dt > e.t {
            return Err(ConfigError::new("experiment.dt", "time step exceeds the window T"));
        }
        let probe_time = e.probe_time.unwrap_or(0.1 * e.t);
        if !(probe_time > 0.0 && probe_time <= e.t) {
            return Err(ConfigError::new("experiment.probe_time", "must lie in (0, T]"));
        }
        if kind == ExperimentKind::OracleCompare && e.t < 3.0 * e.dt {
            return Err(ConfigError::new("experiment.T", "the oracle needs at least three steps"));
        }
        for (i, g) in e.primed_strengths.iter().enumerate() {
            if !g.is_finite() {
                return Err(ConfigError::new(
                    format!("experiment.primed_strengths[{i}]"),
                    "must be finite",
                ));
            }
        }
        let c = &self.conservation;
        positive("conservation.dt", c.dt)?;
        positive("conservation.T", c.t)?;
        positive("oracle.tol_track", self.oracle.tol_track)?;
        positive("oracle.step_tol", self.oracle.step_tol)?;
        if !self.initial.kick.is_finite() {
            return Err(ConfigError::new("initial.kick", "must be finite"));
        }

        let setup = ExperimentSetup {
            omega,
            margin: self.grid.box_margin,
            system,
            initial_potential: expression("initial.potential", &self.initial.potential)?,
            initial_background: expression("initial.background", &self.initial.background)?,
            kick: self.initial.kick,
            potential,
            order: self.inversion.k,
            inversion,
            t_end: e.t,
            dt: e.dt,
            primed_strengths: if e.primed_strengths.is_empty() {
                vec![0.0]
            } else {
                e.primed_strengths.clone()
            },
            probe_time,
            oracle: OracleOptions {
                sweeps: self.oracle.sweeps,
                tol_track: self.oracle.tol_track,
                step_tol: self.oracle.step_tol,
            },
            conservation: ConservationOptions {
                dt: c.dt,
                t_end: c.t,
                refine: c.refine,
                eigenstate_steps: c.eigenstate_steps,
            },
        };
        setup.window().map_err(core_error)?;
        setup.steps().map_err(core_error)?;
        Ok(Plan::Experiment(kind, Box::new(setup)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"schema = 1

[grid]
a = 0.0
b = 1.0
M = 7

[experiment]
kind = "diagnose-sl"

[diagnose]
density = "1 + x"
solution = "sin(pi*x)"
"#;

    #[test]
    fn locates_keys_and_tables() {
        assert_eq!(locate_field(MINIMAL, "grid.M"), Some(6));
        assert_eq!(locate_field(MINIMAL, "diagnose.solution"), Some(13));
        assert_eq!(locate_field(MINIMAL, "diagnose"), Some(11));
        assert_eq!(locate_field(MINIMAL, "potential.orders[0]"), None);
    }

    #[test]
    fn hash_ignores_output_but_not_physics() {
        let base = LoadedConfig::parse(MINIMAL).unwrap().config;
        let mut moved = base.clone();
        moved.output.directory = Some("elsewhere".into());
        assert_eq!(base.hash(), moved.hash());
        let mut finer = base.clone();
        finer.grid.m = 15;
        assert_ne!(base.hash(), finer.hash());
    }

    #[test]
    fn expressions_are_checked() {
        let f = expression("f", "2*x^2 + cos(pi*x)").unwrap();
        assert!((f(1.0) - 1.0).abs() < 1e-15);
        assert_eq!(expression("f", "x +").err().unwrap().field, "f");
        assert!(expression("f", "y").err().unwrap().message.contains("invalid"));
    }

    #[test]
    fn diagnose_plan_needs_its_block() {
        let text = MINIMAL.split("[diagnose]").next().unwrap();
        let err = LoadedConfig::parse(text).unwrap().plan().err().unwrap();
        assert_eq!(err.field, "diagnose");
    }
}
