//! Run configuration in TOML.
//!
//! Every key is checked: unknown keys, missing required keys and out-of-range
//! values are collected into one list before anything runs.

use std::path::{Path, PathBuf};

use nematic_core::coefficients::PRESET_NAMES;
use nematic_core::direct::{DirectConfig, Scheme};
use nematic_core::fixed_point::{FixedPointConfig, ParabolicSolver, WaveSolver};
use nematic_core::kernel::{LeviConfig, ParametrixConfig};
use nematic_core::state::{AngularVelocity, Profile, INITIAL_PRESETS};
use nematic_core::characteristic::SweepConfig;
use nematic_core::{BoundaryMode, CoefficientFunctions, Grid1D, InitialData, LeslieCoefficients};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Shipped configurations, addressable with `--preset`.
pub const SHIPPED: [(&str, &str); 4] = [
    ("chl20-special", include_str!("../configs/chl20-special.toml")),
    ("general", include_str!("../configs/general.toml")),
    ("cusp", include_str!("../configs/cusp.toml")),
    ("zero", include_str!("../configs/zero.toml")),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

impl ConfigError {
    pub fn problems(&self) -> Vec<String> {
        match self {
            ConfigError::Invalid(list) => list.clone(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// `alpha1 .. alpha6`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 6]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default = "decay")]
    pub boundary: BoundaryMode,
}

fn decay() -> BoundaryMode {
    BoundaryMode::Decay
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_min: None,
            x_max: None,
            n: None,
            boundary: decay(),
        }
    }
}

/// A preset, optionally with individual profiles replaced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<Profile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Profile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta1: Option<AngularVelocity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub cfl: f64,
    pub scheme: Scheme,
    pub save_every: usize,
    pub blowup_ceiling: f64,
}

impl Default for DirectSection {
    fn default() -> Self {
        let d = DirectConfig::default();
        Self {
            dt: d.dt,
            cfl: d.cfl,
            scheme: d.scheme,
            save_every: d.save_every,
            blowup_ceiling: d.blowup_ceiling,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxSource {
    /// Solve the free wave equation.
    Zero,
    /// Drive it with `J` from a direct run on the same grid.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CharacteristicSection {
    pub flux: FluxSource,
    pub strip_width: usize,
    pub overlap: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub stall_sweeps: usize,
    /// Margin around `|w|, |z| = pi` excluded from the mapped derivatives.
    pub delta: f64,
    /// Cells with `|w|` or `|z|` above this are skipped by the Jacobian check.
    pub jacobian_angle_limit: f64,
    /// Largest accepted relative error of the Jacobian identity.
    pub jacobian_tol: f64,
    /// Mapped snapshots when `save_times` is empty.
    pub snapshots: usize,
}

impl Default for CharacteristicSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            flux: FluxSource::Zero,
            strip_width: s.strip_width,
            overlap: s.overlap,
            tol: s.tol,
            max_sweeps: s.max_sweeps,
            stall_sweeps: s.stall_sweeps,
            delta: 0.05,
            jacobian_angle_limit: 2.5,
            jacobian_tol: 1e-2,
            snapshots: 11,
        }
    }
}

impl CharacteristicSection {
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            strip_width: self.strip_width,
            overlap: self.overlap,
            tol: self.tol,
            max_sweeps: self.max_sweeps,
            stall_sweeps: self.stall_sweeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointSection {
    pub tol: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub alpha: f64,
    pub cfl: f64,
    pub wave: WaveSolver,
    pub parabolic: ParabolicSolver,
    pub holder_pairs: usize,
    pub kernel: LeviConfig,
}

impl Default for FixedPointSection {
    fn default() -> Self {
        let d = FixedPointConfig::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            relaxation: d.relaxation,
            lambda: d.lambda,
            alpha: d.alpha,
            cfl: d.cfl,
            wave: d.wave,
            parabolic: d.parabolic,
            holder_pairs: d.holder_pairs,
            kernel: d.kernel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelTestSection {
    /// Random evaluation points per constant-coefficient reduction.
    pub random_points: usize,
    pub horizon: f64,
    /// Run the finite-difference residual of the parametrix.
    pub residual: bool,
    /// Fit the time exponent of the correction kernel.
    pub exponent: bool,
    pub parametrix: ParametrixConfig,
}

impl Default for KernelTestSection {
    fn default() -> Self {
        Self {
            random_points: 1000,
            horizon: 0.25,
            residual: true,
            exponent: true,
            parametrix: ParametrixConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsSection {
    pub energy: bool,
    pub holder: bool,
    pub cancellation: bool,
    pub holder_alphas: Vec<f64>,
    pub holder_pairs: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            energy: true,
            holder: true,
            cancellation: true,
            holder_alphas: vec![0.5, 0.75],
            holder_pairs: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectorySource {
    /// Direct solver as configured.
    Direct,
    /// Direct solver with the first-order flow step.
    DirectImex1,
    /// Dedicated solver for the reduced equations (special coefficients only).
    SpecialCase,
    /// Direct solver on the grid with twice the resolution.
    Refined,
    /// Converged fixed point of the flux map.
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareSection {
    pub first: TrajectorySource,
    pub second: TrajectorySource,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            first: TrajectorySource::Direct,
            second: TrajectorySource::SpecialCase,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    /// Snapshot times written as field files; empty means every saved state.
    #[serde(default)]
    pub save_times: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub direct: DirectSection,
    #[serde(default)]
    pub characteristic: CharacteristicSection,
    #[serde(default)]
    pub fixed_point: FixedPointSection,
    #[serde(default)]
    pub kernel_test: KernelTestSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub compare: CompareSection,
}

/// A configuration whose every value has been checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub coeffs: LeslieCoefficients,
    pub functions: CoefficientFunctions,
    pub grid: Grid1D,
    pub initial: InitialData,
    pub t_final: f64,
    pub output: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let value: toml::Value = text
            .parse::<toml::Table>()
            .map(toml::Value::Table)
            .map_err(|e| ConfigError::Invalid(vec![format!("not valid TOML: {}", e.message())]))?;
        Self::from_value(value)
    }

    /// Deserializes, reporting every unknown key and then every semantic problem.
    pub fn from_value(value: toml::Value) -> Result<Self, ConfigError> {
        let mut unknown = Vec::new();
        let cfg: RunConfig = serde_ignored::deserialize(value, |path| unknown.push(format!("unknown key '{path}'")))
            .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
        let mut problems = unknown;
        problems.extend(cfg.problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn shipped(name: &str) -> Result<Self, ConfigError> {
        match SHIPPED.iter().find(|(n, _)| *n == name) {
            Some((_, text)) => Self::from_toml(text),
            None => Err(ConfigError::Invalid(vec![format!(
                "unknown shipped preset '{name}' (known: {})",
                SHIPPED.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            )])),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize")
    }

    /// SHA-256 of the canonical serialization.
    /// Digest of the canonical TOML, ignoring where the results go.
    pub fn hash(&self) -> String {
        let mut physics = self.clone();
        physics.output = None;
        hex::encode(Sha256::digest(physics.to_toml().as_bytes()))
    }

    /// Every violated requirement, empty when the config is runnable.
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        match self.t_final {
            None => bad.push("missing required key 't_final'".to_string()),
            Some(t) if !(t > 0.0 && t.is_finite()) => bad.push(format!("t_final must be positive, got {t}")),
            Some(t) => {
                for &s in &self.save_times {
                    if !(0.0..=t).contains(&s) {
                        bad.push(format!("save time {s} lies outside [0, {t}]"));
                    }
                }
            }
        }
        let c = &self.coefficients;
        let explicit = c.alpha.is_some() || c.k1.is_some() || c.k3.is_some();
        match (&c.preset, explicit) {
            (Some(_), true) => bad.push("coefficients: give either 'preset' or 'alpha', 'k1', 'k3', not both".into()),
            (Some(p), false) if !PRESET_NAMES.contains(&p.as_str()) => bad.push(format!(
                "coefficients: unknown preset '{p}' (known: {})",
                PRESET_NAMES.join(", ")
            )),
            (None, false) => bad.push("missing required key 'coefficients.preset' (or 'alpha', 'k1', 'k3')".into()),
            (None, true) => {
                for (key, present) in [("alpha", c.alpha.is_some()), ("k1", c.k1.is_some()), ("k3", c.k3.is_some())] {
                    if !present {
                        bad.push(format!("missing required key 'coefficients.{key}'"));
                    }
                }
            }
            _ => {}
        }
        let g = &self.grid;
        for (key, present) in [("x_min", g.x_min.is_some()), ("x_max", g.x_max.is_some()), ("n", g.n.is_some())] {
            if !present {
                bad.push(format!("missing required key 'grid.{key}'"));
            }
        }
        if let (Some(a), Some(b)) = (g.x_min, g.x_max) {
            if !(b > a) {
                bad.push(format!("grid: x_max ({b}) must exceed x_min ({a})"));
            }
        }
        if matches!(g.n, Some(n) if n < 5) {
            bad.push("grid: n must be at least 5".into());
        }
        let i = &self.initial;
        match &i.preset {
            Some(p) if !INITIAL_PRESETS.contains(&p.as_str()) => bad.push(format!(
                "initial: unknown preset '{p}' (known: {})",
                INITIAL_PRESETS.join(", ")
            )),
            None if i.u0.is_none() || i.theta0.is_none() || i.theta1.is_none() => {
                bad.push("missing required key 'initial.preset' (or all of 'u0', 'theta0', 'theta1')".into())
            }
            _ => {}
        }
        let d = &self.direct;
        if !(d.cfl > 0.0 && d.cfl <= 1.0) {
            bad.push("direct.cfl must lie in (0, 1]".into());
        }
        if matches!(d.dt, Some(dt) if !(dt > 0.0)) {
            bad.push("direct.dt must be positive".into());
        }
        if d.save_every == 0 {
            bad.push("direct.save_every must be at least 1".into());
        }
        if !(d.blowup_ceiling > 0.0) {
            bad.push("direct.blowup_ceiling must be positive".into());
        }
        let ch = &self.characteristic;
        if ch.strip_width == 0 || ch.overlap >= ch.strip_width {
            bad.push("characteristic: need strip_width > overlap".into());
        }
        if !(ch.tol > 0.0) || ch.max_sweeps == 0 {
            bad.push("characteristic: tol must be positive and max_sweeps at least 1".into());
        }
        if !(ch.delta > 0.0 && ch.delta < std::f64::consts::PI) {
            bad.push("characteristic.delta must lie in (0, pi)".into());
        }
        if ch.snapshots < 2 {
            bad.push("characteristic.snapshots must be at least 2".into());
        }
        if let Err(e) = self.fixed_point_config(self.t_final.unwrap_or(1.0)).validate() {
            bad.push(format!("fixed_point: {e}"));
        }
        let k = &self.kernel_test;
        if k.random_points == 0 || !(k.horizon > 0.0) {
            bad.push("kernel_test: random_points must be positive and horizon > 0".into());
        }
        if self.diagnostics.holder_alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            bad.push("diagnostics.holder_alphas must lie in (0, 1]".into());
        }
        bad
    }

    pub fn direct_config(&self, t_final: f64) -> DirectConfig {
        let d = &self.direct;
        DirectConfig {
            t_final,
            dt: d.dt,
            cfl: d.cfl,
            scheme: d.scheme,
            save_every: d.save_every,
            blowup_ceiling: d.blowup_ceiling,
            ..Default::default()
        }
    }

    pub fn fixed_point_config(&self, t_final: f64) -> FixedPointConfig {
        let p = &self.fixed_point;
        FixedPointConfig {
            t_final,
            tol: p.tol,
            max_iter: p.max_iter,
            relaxation: p.relaxation,
            lambda: p.lambda,
            alpha: p.alpha,
            cfl: p.cfl,
            wave: p.wave,
            parabolic: p.parabolic,
            kernel: p.kernel,
            holder_pairs: p.holder_pairs,
            seed: self.seed,
        }
    }

    /// Builds the concrete run inputs. Coefficient relations are checked
    /// separately so `validate-coeffs` can report them.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let bad = self.problems();
        if !bad.is_empty() {
            return Err(ConfigError::Invalid(bad));
        }
        let mut problems = Vec::new();
        let c = &self.coefficients;
        let coeffs = match &c.preset {
            Some(p) => LeslieCoefficients::preset(p).expect("checked above"),
            None => LeslieCoefficients::new(c.alpha.unwrap(), c.k1.unwrap(), c.k3.unwrap()),
        };
        let g = &self.grid;
        let grid = Grid1D::new(g.x_min.unwrap(), g.x_max.unwrap(), g.n.unwrap(), g.boundary)
            .map_err(|e| ConfigError::Invalid(vec![format!("grid: {e}")]))?;
        let i = &self.initial;
        let mut initial = match &i.preset {
            Some(p) => InitialData::preset(p).expect("checked above"),
            None => InitialData::preset("zero").expect("shipped preset"),
        };
        if let Some(u0) = &i.u0 {
            initial.u0 = u0.clone();
        }
        if let Some(theta0) = &i.theta0 {
            initial.theta0 = theta0.clone();
        }
        if let Some(theta1) = &i.theta1 {
            initial.theta1 = theta1.clone();
        }
        let output = match &self.output {
            Some(p) => p.clone(),
            None => {
                problems.push("no output directory: set 'output' or pass --out".to_string());
                PathBuf::new()
            }
        };
        if !problems.is_empty() {
            return Err(ConfigError::Invalid(problems));
        }
        Ok(Resolved {
            coeffs,
            functions: coeffs.functions(),
            grid,
            initial,
            t_final: self.t_final.unwrap(),
            output,
        })
    }
}

/// Applies `key=value` overrides with dotted keys. Values are read as TOML
/// when they parse and as plain strings otherwise.
pub fn apply_overrides(value: &mut toml::Value, overrides: &[String]) -> Result<(), ConfigError> {
    let mut bad = Vec::new();
    for item in overrides {
        let Some((key, raw)) = item.split_once('=') else {
            bad.push(format!("override '{item}' is not of the form key=value"));
            continue;
        };
        let parsed = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let parts: Vec<&str> = key.trim().split('.').collect();
        if !insert_dotted(value, &parts, parsed) {
            bad.push(format!("override '{key}' does not name a table entry"));
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(bad))
    }
}

fn insert_dotted(node: &mut toml::Value, parts: &[&str], value: toml::Value) -> bool {
    let Some(table) = node.as_table_mut() else {
        return false;
    };
    match parts {
        [] => false,
        [last] => {
            table.insert(last.to_string(), value);
            true
        }
        [head, rest @ ..] => {
            let child = table
                .entry(head.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            insert_dotted(child, rest, value)
        }
    }
}
