//! Scenario files: nested TOML sections, unknown keys rejected.

use gibc_core::assembly::{ImpedanceKind, QuadratureConfig};
use gibc_core::calderon::{SolverConfig, SolverKind};
use gibc_core::scattering::IncidentWave;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario file: {0}")]
    Parse(String),
    #[error("invalid override {0:?}: expected section.key=value")]
    Override(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Sphere,
    Torus,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub shape: Shape,
    /// Icosphere subdivision level, or number of snapped refinements of the
    /// structured torus.
    pub level: u32,
    pub radius: f64,
    pub major_radius: f64,
    pub minor_radius: f64,
    pub n_major: usize,
    pub n_minor: usize,
    pub path: Option<PathBuf>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            shape: Shape::Sphere,
            level: 1,
            radius: 1.0,
            major_radius: 0.8,
            minor_radius: 0.2,
            n_major: 24,
            n_minor: 8,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpedanceConfig {
    pub kind: String,
    pub delta: f64,
}

impl Default for ImpedanceConfig {
    fn default() -> Self {
        ImpedanceConfig { kind: "absorbing".into(), delta: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub stages: usize,
    pub steps: usize,
    pub final_time: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { stages: 2, steps: 64, final_time: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveConfig {
    pub amplitude: f64,
    pub rate: f64,
    pub offset: f64,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig { amplitude: 1.0, rate: 50.0, offset: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub points: Vec<[f64; 3]>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { points: vec![[2.0, 0.0, 0.0]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub kind: String,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { kind: "direct".into(), tolerance: 1e-8, max_iterations: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub regular_order: usize,
    pub singular_order: usize,
    pub near_threshold: f64,
    pub far_tolerance: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        QuadratureSection { regular_order: 4, singular_order: 4, near_threshold: 2.0, far_tolerance: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub time_ladder: Vec<usize>,
    pub reference_steps: usize,
    pub level_ladder: Vec<u32>,
    pub reference_level: u32,
    pub deltas: Vec<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            time_ladder: vec![8, 16, 32, 64],
            reference_steps: 256,
            level_ladder: vec![0, 1, 2],
            reference_level: 3,
            deltas: vec![0.01, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TorusDemoConfig {
    /// Grid resolution along x₁ and x₃ on the plane x₂ = 0.
    pub grid: [usize; 2],
    /// Half-width of the square grid.
    pub extent: f64,
    /// Points closer than this to Γ are masked out.
    pub clearance: f64,
    /// Output times of the field frames.
    pub frames: Vec<f64>,
}

impl Default for TorusDemoConfig {
    fn default() -> Self {
        TorusDemoConfig { grid: [25, 25], extent: 1.5, clearance: 0.05, frames: vec![0.25, 1.0, 1.5, 2.0, 2.5, 3.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub output_dir: PathBuf,
    pub mesh: MeshConfig,
    pub impedance: ImpedanceConfig,
    pub time: TimeConfig,
    pub wave: WaveConfig,
    pub evaluation: EvaluationConfig,
    pub solver: SolverSection,
    pub quadrature: QuadratureSection,
    pub study: StudyConfig,
    pub torus_demo: TorusDemoConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            output_dir: PathBuf::from("out"),
            mesh: MeshConfig::default(),
            impedance: ImpedanceConfig::default(),
            time: TimeConfig::default(),
            wave: WaveConfig::default(),
            evaluation: EvaluationConfig::default(),
            solver: SolverSection::default(),
            quadrature: QuadratureSection::default(),
            study: StudyConfig::default(),
            torus_demo: TorusDemoConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Parse and validate a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::with_overrides(text, &[])
    }

    /// Parse a document, apply `section.key=value` overrides, then validate.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: ScenarioConfig =
            ScenarioConfig::deserialize(table).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let t = &self.time;
        if !(t.final_time > 0.0 && t.final_time.is_finite()) {
            return bad(format!("time.final_time must be positive, got {}", t.final_time));
        }
        if t.steps < 1 {
            return bad("time.steps must be at least 1".into());
        }
        if !(1..=3).contains(&t.stages) {
            return bad(format!("time.stages must be 1, 2 or 3, got {}", t.stages));
        }
        self.impedance_kind()?;
        if !(self.impedance.delta > 0.0 && self.impedance.delta.is_finite()) {
            return bad(format!("impedance.delta must be positive, got {}", self.impedance.delta));
        }
        if self.study.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("study.deltas must be positive".into());
        }
        self.solver_config()?;
        self.quadrature_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let w = &self.wave;
        if !(w.amplitude.is_finite() && w.rate > 0.0 && w.rate.is_finite() && w.offset.is_finite()) {
            return bad("wave needs a finite amplitude and offset and a positive rate".into());
        }
        if self.evaluation.points.iter().flatten().any(|c| !c.is_finite()) {
            return bad("evaluation points must be finite".into());
        }
        let m = &self.mesh;
        if !(m.radius > 0.0 && m.radius.is_finite()) {
            return bad(format!("mesh.radius must be positive, got {}", m.radius));
        }
        if m.shape == Shape::Torus && !(m.minor_radius > 0.0 && m.minor_radius < m.major_radius) {
            return bad("torus needs 0 < minor_radius < major_radius".into());
        }
        if m.shape == Shape::Off && m.path.is_none() {
            return bad("mesh.shape = \"off\" needs mesh.path".into());
        }
        let s = &self.study;
        if s.time_ladder.contains(&0) {
            return bad("study.time_ladder entries must be positive".into());
        }
        if !s.time_ladder.windows(2).all(|w| w[1] == 2 * w[0]) {
            return bad("study.time_ladder must be dyadic".into());
        }
        if !s.level_ladder.windows(2).all(|w| w[1] == w[0] + 1) {
            return bad("study.level_ladder must be consecutive levels".into());
        }
        let d = &self.torus_demo;
        if d.grid.iter().any(|g| *g < 2) || !(d.extent > 0.0) || !(d.clearance >= 0.0) {
            return bad("torus_demo needs a grid of at least 2×2, positive extent and non-negative clearance".into());
        }
        Ok(())
    }

    pub fn impedance_kind(&self) -> Result<ImpedanceKind, ConfigError> {
        self.impedance.kind.parse().map_err(|e: gibc_core::assembly::AssemblyError| ConfigError::Invalid(e.to_string()))
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        let kind: SolverKind = self.solver.kind.parse().map_err(|e: gibc_core::calderon::CalderonError| ConfigError::Invalid(e.to_string()))?;
        let s = &self.solver;
        if !(s.tolerance > 0.0 && s.tolerance <= 1e-2) {
            return Err(ConfigError::Invalid(format!("solver.tolerance must lie in (0, 1e-2], got {}", s.tolerance)));
        }
        if s.max_iterations == 0 {
            return Err(ConfigError::Invalid("solver.max_iterations must be positive".into()));
        }
        Ok(SolverConfig { kind, tolerance: s.tolerance, max_iterations: s.max_iterations })
    }

    pub fn quadrature_config(&self) -> QuadratureConfig {
        let q = &self.quadrature;
        QuadratureConfig {
            regular_order: q.regular_order,
            singular_order: q.singular_order,
            near_threshold: q.near_threshold,
            far_tolerance: q.far_tolerance,
        }
    }

    pub fn wave(&self) -> IncidentWave {
        IncidentWave { amplitude: self.wave.amplitude, rate: self.wave.rate, offset: self.wave.offset }
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (path, raw) = item.split_once('=').ok_or_else(|| ConfigError::Override(item.into()))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(item.into()));
    }
    let raw = raw.trim();
    // parse as a TOML value; bare words become strings
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut node = table;
    for key in &keys[..keys.len() - 1] {
        let entry = node.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| ConfigError::Override(item.into()))?;
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
