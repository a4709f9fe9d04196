//! Scenario files and the headless pipeline: sim → reasoner → executor → hub.

mod log;
mod report;
mod runner;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fmcw::{Defect, MaterialProfile};
use crate::mission::{compile_plan, MissionPlan, MissionSpec, SafeBand};
use crate::ontology::{parse_ontology, OntologyModel};
use crate::sim::{FaultInjection, GridMap, SimConfig};
use crate::twin::OperatorCommand;

pub use log::{replay, CheckResult, EventLog, LogError, ReplayReport};
pub use report::{aid_from_log, outcome_from_log, timeline, Marker, StageEntry, Timeline};
pub use runner::{run, RunOptions, RunResult, Runner, TICK_MS};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("reading {path}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("ontology: {0}")]
    Ontology(#[from] crate::ontology::OntologyError),
    #[error("map: {0}")]
    Map(#[from] crate::sim::SimError),
    #[error("mission: {0}")]
    Mission(#[from] crate::mission::MissionError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub at_ms: u64,
    pub command: OperatorCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorPolicy {
    Silent,
    AutoContinue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Policy(OperatorPolicy),
    Script(Vec<ScriptedCommand>),
}

impl Default for OperatorSpec {
    fn default() -> Self {
        OperatorSpec::Policy(OperatorPolicy::Silent)
    }
}

/// Radar target at a scan waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub material: String,
    #[serde(default = "default_distance")]
    pub distance_cm: f64,
    #[serde(default = "default_defect")]
    pub defect: Defect,
    /// Healthy reference material; defaults to `material`.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub noise_sigma: f64,
}

fn default_distance() -> f64 {
    10.0
}

fn default_defect() -> Defect {
    Defect::None
}

impl TargetSpec {
    pub fn profile(&self) -> Result<MaterialProfile, ScenarioError> {
        MaterialProfile::preset(&self.material)
            .map(|m| m.with_defect(self.defect))
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown material {}", self.material)))
    }

    pub fn baseline_profile(&self) -> Result<MaterialProfile, ScenarioError> {
        let name = self.baseline.as_deref().unwrap_or(&self.material);
        MaterialProfile::preset(name)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown material {name}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub ontology: PathBuf,
    pub map: PathBuf,
    pub mission: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub injections: Vec<FaultInjection>,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default)]
    pub safe_bands: BTreeMap<String, SafeBand>,
    #[serde(default)]
    pub expected_outcome: Option<String>,
    #[serde(default)]
    pub targets: BTreeMap<String, TargetSpec>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    /// Sim-time budget before the run is abandoned.
    #[serde(default = "default_max_ms")]
    pub max_ms: u64,
}

fn default_max_ms() -> u64 {
    3_600_000
}

/// A scenario with all referenced documents loaded and the plan compiled.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub ontology: Arc<OntologyModel>,
    pub map: GridMap,
    pub mission: MissionSpec,
    pub plan: MissionPlan,
    pub sim: SimConfig,
}

fn read(path: &Path) -> Result<Vec<u8>, ScenarioError> {
    std::fs::read(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

impl LoadedScenario {
    /// Loads a scenario file; referenced paths are relative to its directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let file: ScenarioFile =
            serde_json::from_slice(&read(path)?).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { dir.join(p) };
        let ontology = parse_ontology(&read(&resolve(&file.ontology))?)?;
        let map = GridMap::from_json(&read(&resolve(&file.map))?)?;
        let mission = MissionSpec::from_json(&read(&resolve(&file.mission))?)?;
        Self::assemble(file, ontology, map, mission)
    }

    pub fn assemble(
        file: ScenarioFile,
        ontology: OntologyModel,
        map: GridMap,
        mission: MissionSpec,
    ) -> Result<Self, ScenarioError> {
        let sim = file.sim.unwrap_or_default();
        for t in file.targets.values() {
            t.profile()?;
            t.baseline_profile()?;
        }
        let targets: BTreeSet<String> = file.targets.keys().cloned().collect();
        let plan = compile_plan(&mission, &map, sim.inflation_cells, &targets)?;
        if let OperatorSpec::Script(s) = &file.operator {
            if s.windows(2).any(|w| w[1].at_ms < w[0].at_ms) {
                return Err(ScenarioError::Invalid("operator script must be time-ordered".into()));
            }
        }
        for band in file.safe_bands.keys() {
            if ontology.threshold(band).is_none() {
                return Err(ScenarioError::Invalid(format!("safe band for unknown metric {band}")));
            }
        }
        Ok(Self {
            file,
            ontology: Arc::new(ontology),
            map,
            mission,
            plan,
            sim,
        })
    }
}

/// Directory holding the bundled ontology, map, mission and scenarios.
pub fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

pub fn bundled_scenario(n: u32) -> PathBuf {
    assets_dir().join(format!("scenario-{n}.json"))
}
