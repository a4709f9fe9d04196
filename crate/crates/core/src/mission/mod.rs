//! Inspection mission: plan compilation and the A–H stage machine.

mod mcp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::reasoner::{rule_cause, Diagnosis, EscalationDirective, EscalationKind, EscalationTrigger, Severity};
use crate::sim::{Cell, GridMap};
use crate::twin::{OperatorCommand, OperatorDecision};

pub use mcp::{bands_value, mcp_ledger, McpRow, Relationship, SafeBand};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MissionError {
    #[error("waypoint {index}: {reason}")]
    InvalidWaypoint { index: usize, reason: String },
    #[error("missing scan target {0:?}")]
    MissingScanTarget(Option<String>),
    #[error("unknown prompt {0}")]
    UnknownPrompt(String),
    #[error("prompt {0} already resolved")]
    AlreadyResolved(String),
    #[error("invalid mission spec: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::A,
        Stage::B,
        Stage::C,
        Stage::D,
        Stage::E,
        Stage::F,
        Stage::G,
        Stage::H,
    ];

    pub fn description(self) -> &'static str {
        match self {
            Stage::A => "pre-mission planning",
            Stage::B => "idle at base",
            Stage::C => "transit to asset integrity scan 1",
            Stage::D => "asset integrity scan 1",
            Stage::E => "transit through confined segment",
            Stage::F => "asset integrity scan 2",
            Stage::G => "return to base",
            Stage::H => "mission end",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaypointAction {
    Transit,
    Scan(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
    pub action: WaypointAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSpec {
    #[serde(default = "default_asset")]
    pub asset: String,
    pub waypoints: Vec<WaypointSpec>,
    pub base: PointSpec,
    pub recovery: PointSpec,
}

fn default_asset() -> String {
    "asset".into()
}

impl MissionSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self, MissionError> {
        serde_json::from_slice(bytes).map_err(|e| MissionError::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ActionKind {
    Idle { ms: u64 },
    Goto { cell: Cell },
    Scan { target: String, segment: String },
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedAction {
    pub stage: Stage,
    #[serde(flatten)]
    pub kind: ActionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub asset: String,
    pub base: Cell,
    pub recovery: Cell,
    pub actions: Vec<PlannedAction>,
}

impl MissionPlan {
    pub fn scan_count(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| matches!(a.kind, ActionKind::Scan { .. }))
            .count()
    }

    /// Distinct stages covered by the plan, including planning (A).
    pub fn stages(&self) -> Vec<Stage> {
        let mut out = vec![Stage::A];
        for a in &self.actions {
            if out.last() != Some(&a.stage) {
                out.push(a.stage);
            }
        }
        out
    }
}

pub const BASE_IDLE_MS: u64 = 2_000;

/// Compiles a waypoint list into the sequential stage plan.
///
/// Transits before the first scan belong to C, scan 1 to D, transits toward
/// scan 2 to E, scan 2 and anything after it to F, the return leg to G.
pub fn compile_plan(
    spec: &MissionSpec,
    map: &GridMap,
    inflation: i32,
    targets: &BTreeSet<String>,
) -> Result<MissionPlan, MissionError> {
    let free = map.inflated(inflation);
    let cell_of = |index: usize, x: f64, y: f64| -> Result<Cell, MissionError> {
        let c = map.cell_at(x, y);
        if !x.is_finite() || !y.is_finite() || !map.in_bounds(c) {
            return Err(MissionError::InvalidWaypoint {
                index,
                reason: "outside the map".into(),
            });
        }
        if !free.is_free(c) {
            return Err(MissionError::InvalidWaypoint {
                index,
                reason: format!("cell {c:?} is occupied or too close to an obstacle"),
            });
        }
        Ok(c)
    };
    let n = spec.waypoints.len();
    let base = cell_of(n, spec.base.x, spec.base.y)?;
    let recovery = cell_of(n + 1, spec.recovery.x, spec.recovery.y)?;

    let mut actions = vec![PlannedAction {
        stage: Stage::B,
        kind: ActionKind::Idle { ms: BASE_IDLE_MS },
    }];
    let mut scans = 0;
    for (i, wp) in spec.waypoints.iter().enumerate() {
        let cell = cell_of(i, wp.x, wp.y)?;
        let transit_stage = match scans {
            0 => Stage::C,
            1 => Stage::E,
            _ => Stage::F,
        };
        actions.push(PlannedAction {
            stage: transit_stage,
            kind: ActionKind::Goto { cell },
        });
        if let WaypointAction::Scan(target) = &wp.action {
            if !targets.contains(target) {
                return Err(MissionError::MissingScanTarget(Some(target.clone())));
            }
            scans += 1;
            actions.push(PlannedAction {
                stage: if scans == 1 { Stage::D } else { Stage::F },
                kind: ActionKind::Scan {
                    target: target.clone(),
                    segment: format!("s{scans}"),
                },
            });
        }
    }
    if scans == 0 {
        return Err(MissionError::MissingScanTarget(None));
    }
    actions.push(PlannedAction {
        stage: Stage::G,
        kind: ActionKind::Goto { cell: base },
    });
    actions.push(PlannedAction {
        stage: Stage::H,
        kind: ActionKind::End,
    });
    Ok(MissionPlan {
        asset: spec.asset.clone(),
        base,
        recovery,
        actions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GotoPurpose {
    Waypoint,
    Recovery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum MotionCommand {
    Goto { cell: Cell, purpose: GotoPurpose },
    Halt,
}

impl MotionCommand {
    /// True for commands that set the platform in motion.
    pub fn is_motion(&self) -> bool {
        matches!(self, MotionCommand::Goto { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptDecision {
    Continue,
    Terminate,
    Timeout,
}

impl From<OperatorDecision> for PromptDecision {
    fn from(d: OperatorDecision) -> Self {
        match d {
            OperatorDecision::Continue => PromptDecision::Continue,
            OperatorDecision::Terminate => PromptDecision::Terminate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorPrompt {
    pub id: String,
    pub diagnosis: Diagnosis,
    pub issued_ms: u64,
    pub deadline_ms: u64,
    pub options: Vec<OperatorDecision>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeKind {
    Success,
    TerminatedByOntology { cause: String },
    TerminatedByOperator { prompt: Option<String> },
    Unreachable { cell: Cell },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissionOutcome {
    pub outcome: OutcomeKind,
    pub warnings_seen: u32,
    pub faults_seen: u32,
    pub scans_completed: u32,
    pub end_stage: Stage,
}

impl MissionOutcome {
    pub fn exit_code(&self) -> i32 {
        match self.outcome {
            OutcomeKind::Success => 0,
            OutcomeKind::TerminatedByOntology { .. } => 10,
            OutcomeKind::TerminatedByOperator { .. } => 11,
            OutcomeKind::Unreachable { .. } => 12,
        }
    }
}

/// Executor output, in emission order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Effect {
    Stage { stage: Stage },
    Command { command: MotionCommand },
    ScanStarted { target: String, segment: String },
    ScanCompleted { target: String, segment: String },
    Prompt { prompt: OperatorPrompt },
    PromptResolved { id: String, decision: PromptDecision },
    Ack { cmd_id: u64 },
    Nack { cmd_id: u64, reason: String },
    Outcome { outcome: MissionOutcome },
}

/// Reaction to a single diagnosis.
#[derive(Debug, Clone, PartialEq)]
pub enum Reaction {
    Continue,
    Prompt(String),
    Halt,
    Recover,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutorConfig {
    pub prompt_timeout_ms: u64,
    pub scan_ms: u64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            prompt_timeout_ms: 30_000,
            scan_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    NotStarted,
    Waiting { until: u64 },
    Moving,
    Scanning { until: u64 },
    Recovering,
    Ended,
}

/// Per-tick inputs, processed in a fixed order: diagnoses, escalation,
/// operator commands, prompt deadlines, then plan progress.
#[derive(Debug, Clone, Default)]
pub struct TickInput {
    pub arrived: bool,
    pub diagnoses: Vec<Diagnosis>,
    pub escalation: Option<EscalationDirective>,
    pub commands: Vec<(u64, OperatorCommand)>,
}

#[derive(Debug, Clone)]
pub struct Executor {
    plan: MissionPlan,
    config: ExecutorConfig,
    stage: Stage,
    cursor: usize,
    phase: Phase,
    outcome: Option<MissionOutcome>,
    pending: BTreeMap<String, OperatorPrompt>,
    resolved: BTreeSet<String>,
    next_prompt: u64,
    warnings_seen: u32,
    faults_seen: u32,
    scans_completed: u32,
    outbox: Vec<Effect>,
}

impl Executor {
    pub fn new(plan: MissionPlan, config: ExecutorConfig) -> Self {
        Self {
            plan,
            config,
            stage: Stage::A,
            cursor: 0,
            phase: Phase::NotStarted,
            outcome: None,
            pending: BTreeMap::new(),
            resolved: BTreeSet::new(),
            next_prompt: 1,
            warnings_seen: 0,
            faults_seen: 0,
            scans_completed: 0,
            outbox: Vec::new(),
        }
    }

    pub fn plan(&self) -> &MissionPlan {
        &self.plan
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn outcome(&self) -> Option<&MissionOutcome> {
        self.outcome.as_ref()
    }

    pub fn is_active(&self) -> bool {
        !matches!(self.phase, Phase::NotStarted | Phase::Ended)
    }

    pub fn is_halted(&self) -> bool {
        self.phase == Phase::Ended
    }

    pub fn pending_prompts(&self) -> impl Iterator<Item = &OperatorPrompt> {
        self.pending.values()
    }

    /// Whether the platform should currently be driving along its path.
    pub fn wants_motion(&self) -> bool {
        matches!(self.phase, Phase::Moving | Phase::Recovering)
    }

    pub fn is_scanning(&self) -> bool {
        matches!(self.phase, Phase::Scanning { .. })
    }

    /// Emits stage A and begins the plan.
    pub fn start(&mut self, now: u64) -> Vec<Effect> {
        if self.phase == Phase::NotStarted {
            self.outbox.push(Effect::Stage { stage: Stage::A });
            self.begin(0, now);
        }
        self.drain()
    }

    pub fn drain(&mut self) -> Vec<Effect> {
        std::mem::take(&mut self.outbox)
    }

    pub fn tick(&mut self, now: u64, input: TickInput) -> Vec<Effect> {
        for d in &input.diagnoses {
            self.on_diagnosis(now, d);
        }
        if let Some(dir) = &input.escalation {
            self.on_escalation(now, dir);
        }
        for (id, cmd) in &input.commands {
            self.command(now, *id, cmd);
        }
        self.expire_prompts(now);
        self.progress(now, input.arrived);
        self.drain()
    }

    /// Watchdog hook: faults halt at once; new warnings prompt the operator.
    pub fn on_diagnosis(&mut self, now: u64, d: &Diagnosis) -> Reaction {
        if !self.is_active() {
            return Reaction::Continue;
        }
        match d.severity {
            Severity::Fault => {
                if !d.repeat {
                    self.faults_seen += 1;
                }
                self.end(now, OutcomeKind::TerminatedByOntology { cause: rule_cause(&d.rule_id) });
                Reaction::Halt
            }
            Severity::Warning if d.repeat => Reaction::Continue,
            Severity::Warning => {
                self.warnings_seen += 1;
                if self.pending.values().any(|p| p.diagnosis.rule_id == d.rule_id) {
                    return Reaction::Continue;
                }
                let id = format!("p{}", self.next_prompt);
                self.next_prompt += 1;
                let prompt = OperatorPrompt {
                    id: id.clone(),
                    diagnosis: d.clone(),
                    issued_ms: now,
                    deadline_ms: now + self.config.prompt_timeout_ms,
                    options: vec![OperatorDecision::Continue, OperatorDecision::Terminate],
                };
                self.pending.insert(id.clone(), prompt.clone());
                self.outbox.push(Effect::Prompt { prompt });
                Reaction::Prompt(id)
            }
        }
    }

    pub fn on_escalation(&mut self, now: u64, dir: &EscalationDirective) -> Reaction {
        if !self.is_active() {
            return Reaction::Continue;
        }
        match (dir.kind, &dir.trigger) {
            (EscalationKind::TerminateMission, trigger) => {
                let cause = match trigger {
                    EscalationTrigger::FaultRule(r) => rule_cause(r),
                    EscalationTrigger::WarningAccumulation(_) => "warning-accumulation".into(),
                };
                self.end(now, OutcomeKind::TerminatedByOntology { cause });
                Reaction::Halt
            }
            (EscalationKind::RecoverToZone, _) => {
                if self.phase != Phase::Recovering {
                    self.phase = Phase::Recovering;
                    self.outbox.push(Effect::Command {
                        command: MotionCommand::Goto {
                            cell: self.plan.recovery,
                            purpose: GotoPurpose::Recovery,
                        },
                    });
                }
                Reaction::Recover
            }
        }
    }

    pub fn resolve_prompt(
        &mut self,
        now: u64,
        id: &str,
        decision: PromptDecision,
    ) -> Result<(), MissionError> {
        if self.resolved.contains(id) {
            return Err(MissionError::AlreadyResolved(id.into()));
        }
        if self.pending.remove(id).is_none() {
            return Err(MissionError::UnknownPrompt(id.into()));
        }
        self.resolved.insert(id.into());
        self.outbox.push(Effect::PromptResolved {
            id: id.into(),
            decision,
        });
        if decision == PromptDecision::Terminate {
            self.end(
                now,
                OutcomeKind::TerminatedByOperator {
                    prompt: Some(id.into()),
                },
            );
        }
        Ok(())
    }

    fn command(&mut self, now: u64, cmd_id: u64, cmd: &OperatorCommand) {
        let reject = |reason: &str| Effect::Nack {
            cmd_id,
            reason: reason.into(),
        };
        match cmd {
            OperatorCommand::StartMission => {
                if self.phase == Phase::NotStarted {
                    self.outbox.push(Effect::Ack { cmd_id });
                    self.outbox.push(Effect::Stage { stage: Stage::A });
                    self.begin(0, now);
                } else {
                    self.outbox.push(reject("mission-already-started"));
                }
            }
            OperatorCommand::Terminate => {
                if self.is_active() {
                    self.outbox.push(Effect::Ack { cmd_id });
                    self.end(now, OutcomeKind::TerminatedByOperator { prompt: None });
                } else {
                    self.outbox.push(reject("no-active-mission"));
                }
            }
            OperatorCommand::PromptResponse { id, decision } => {
                if !self.is_active() {
                    self.outbox.push(reject("no-active-mission"));
                } else if !self.pending.contains_key(id) {
                    self.outbox.push(reject("unknown-prompt"));
                } else {
                    self.outbox.push(Effect::Ack { cmd_id });
                    self.resolve_prompt(now, id, (*decision).into())
                        .expect("pending prompt resolves");
                }
            }
            _ => self.outbox.push(reject("not-a-mission-command")),
        }
    }

    fn expire_prompts(&mut self, now: u64) {
        let due: Vec<String> = self
            .pending
            .values()
            .filter(|p| p.deadline_ms <= now)
            .map(|p| p.id.clone())
            .collect();
        for id in due {
            let _ = self.resolve_prompt(now, &id, PromptDecision::Timeout);
        }
    }

    fn progress(&mut self, now: u64, arrived: bool) {
        match self.phase {
            Phase::Waiting { until } if now >= until => self.begin(self.cursor + 1, now),
            Phase::Moving if arrived => self.begin(self.cursor + 1, now),
            Phase::Scanning { until } if now >= until => {
                if let ActionKind::Scan { target, segment } = &self.plan.actions[self.cursor].kind {
                    self.outbox.push(Effect::ScanCompleted {
                        target: target.clone(),
                        segment: segment.clone(),
                    });
                }
                self.scans_completed += 1;
                self.begin(self.cursor + 1, now);
            }
            Phase::Recovering if arrived => {
                self.end(
                    now,
                    OutcomeKind::TerminatedByOntology {
                        cause: "warning-accumulation".into(),
                    },
                );
            }
            _ => {}
        }
    }

    fn begin(&mut self, index: usize, now: u64) {
        self.cursor = index;
        let Some(action) = self.plan.actions.get(index).cloned() else {
            return;
        };
        if action.stage != self.stage {
            self.stage = action.stage;
            self.outbox.push(Effect::Stage { stage: action.stage });
        }
        match action.kind {
            ActionKind::Idle { ms } => self.phase = Phase::Waiting { until: now + ms },
            ActionKind::Goto { cell } => {
                self.phase = Phase::Moving;
                self.outbox.push(Effect::Command {
                    command: MotionCommand::Goto {
                        cell,
                        purpose: GotoPurpose::Waypoint,
                    },
                });
            }
            ActionKind::Scan { target, segment } => {
                self.phase = Phase::Scanning {
                    until: now + self.config.scan_ms,
                };
                self.outbox.push(Effect::ScanStarted { target, segment });
            }
            ActionKind::End => self.finish(now, OutcomeKind::Success),
        }
    }

    /// The active goto could not be planned.
    pub fn unreachable(&mut self, now: u64, cell: Cell) {
        if self.is_active() {
            self.end(now, OutcomeKind::Unreachable { cell });
        }
    }

    fn end(&mut self, now: u64, kind: OutcomeKind) {
        if !self.is_active() {
            return;
        }
        self.outbox.push(Effect::Command {
            command: MotionCommand::Halt,
        });
        self.finish(now, kind);
    }

    fn finish(&mut self, now: u64, kind: OutcomeKind) {
        self.phase = Phase::Ended;
        // prompts still open when the mission ends default to continue
        let open: Vec<String> = self.pending.keys().cloned().collect();
        for id in open {
            self.pending.remove(&id);
            self.resolved.insert(id.clone());
            self.outbox.push(Effect::PromptResolved {
                id,
                decision: PromptDecision::Timeout,
            });
        }
        let _ = now;
        let outcome = MissionOutcome {
            outcome: kind,
            warnings_seen: self.warnings_seen,
            faults_seen: self.faults_seen,
            scans_completed: self.scans_completed,
            end_stage: self.stage,
        };
        self.outcome = Some(outcome.clone());
        self.outbox.push(Effect::Outcome { outcome });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> GridMap {
        let mut m = GridMap::empty(30, 10, 1.0);
        m.base = Cell(1, 1);
        m.occupied.insert(Cell(15, 5));
        m
    }

    fn wp(x: f64, y: f64, action: WaypointAction) -> WaypointSpec {
        WaypointSpec { x, y, theta: 0.0, action }
    }

    fn spec() -> MissionSpec {
        MissionSpec {
            asset: "tank".into(),
            waypoints: vec![
                wp(5.5, 1.5, WaypointAction::Transit),
                wp(8.5, 1.5, WaypointAction::Scan("t1".into())),
                wp(20.5, 1.5, WaypointAction::Transit),
                wp(25.5, 1.5, WaypointAction::Scan("t2".into())),
            ],
            base: PointSpec { x: 1.5, y: 1.5, theta: 0.0 },
            recovery: PointSpec { x: 1.5, y: 8.5, theta: 0.0 },
        }
    }

    fn targets() -> BTreeSet<String> {
        ["t1", "t2"].iter().map(|s| s.to_string()).collect()
    }

    fn plan() -> MissionPlan {
        compile_plan(&spec(), &map(), 1, &targets()).unwrap()
    }

    fn diag(rule: &str, severity: Severity, repeat: bool) -> Diagnosis {
        Diagnosis {
            t_ms: 0,
            component: rule.split('.').next().unwrap().into(),
            severity,
            state: "x".into(),
            certainty: 1.0,
            rule_id: rule.into(),
            message: String::new(),
            value: Some(1.0),
            repeat,
        }
    }

    #[test]
    fn canonical_plan_has_eight_stages() {
        let p = plan();
        assert_eq!(p.stages(), Stage::ALL.to_vec());
        assert_eq!(p.scan_count(), 2);
        assert_eq!(p.base, Cell(1, 1));
        assert_eq!(p.recovery, Cell(1, 8));
    }

    #[test]
    fn plan_errors() {
        let mut s = spec();
        s.waypoints.retain(|w| w.action == WaypointAction::Transit);
        assert_eq!(
            compile_plan(&s, &map(), 1, &targets()),
            Err(MissionError::MissingScanTarget(None))
        );
        let mut s = spec();
        s.waypoints[0] = wp(15.5, 5.5, WaypointAction::Transit);
        assert!(matches!(
            compile_plan(&s, &map(), 1, &targets()),
            Err(MissionError::InvalidWaypoint { index: 0, .. })
        ));
        assert_eq!(
            compile_plan(&spec(), &map(), 1, &BTreeSet::new()),
            Err(MissionError::MissingScanTarget(Some("t1".into())))
        );
    }

    fn stages(effects: &[Effect]) -> Vec<Stage> {
        effects
            .iter()
            .filter_map(|e| match e {
                Effect::Stage { stage } => Some(*stage),
                _ => None,
            })
            .collect()
    }

    /// Drives the executor with instant arrival.
    fn run(ex: &mut Executor, mut hook: impl FnMut(u64, &mut TickInput)) -> Vec<Effect> {
        let mut all = ex.start(0);
        let mut t = 0;
        while ex.is_active() && t < 1_000_000 {
            t += 100;
            let mut input = TickInput {
                arrived: true,
                ..Default::default()
            };
            hook(t, &mut input);
            all.extend(ex.tick(t, input));
        }
        all
    }

    #[test]
    fn quiet_run_succeeds() {
        let mut ex = Executor::new(plan(), ExecutorConfig::default());
        let effects = run(&mut ex, |_, _| {});
        assert_eq!(stages(&effects), Stage::ALL.to_vec());
        let o = ex.outcome().unwrap();
        assert_eq!(o.outcome, OutcomeKind::Success);
        assert_eq!(o.end_stage, Stage::H);
        assert_eq!(o.scans_completed, 2);
        assert_eq!(o.exit_code(), 0);
    }

    #[test]
    fn fault_in_g_halts_without_further_goto() {
        let mut ex = Executor::new(plan(), ExecutorConfig::default());
        ex.start(0);
        let mut t = 0;
        while ex.stage() != Stage::G {
            t += 100;
            ex.tick(t, TickInput { arrived: true, ..Default::default() });
        }
        t += 100;
        let out = ex.tick(
            t,
            TickInput {
                arrived: true,
                diagnoses: vec![diag("battery.soc", Severity::Fault, false)],
                ..Default::default()
            },
        );
        assert_eq!(out[0], Effect::Command { command: MotionCommand::Halt });
        assert!(!out.iter().any(|e| matches!(e, Effect::Command { command } if command.is_motion())));
        let o = ex.outcome().unwrap();
        assert_eq!(
            o.outcome,
            OutcomeKind::TerminatedByOntology { cause: "low-battery".into() }
        );
        assert_eq!(o.end_stage, Stage::G);
        assert_eq!(o.exit_code(), 10);
        assert!(ex.tick(t + 100, TickInput { arrived: true, ..Default::default() }).is_empty());
    }

    #[test]
    fn warning_prompts_once_per_rule_and_times_out() {
        let mut ex = Executor::new(plan(), ExecutorConfig::default());
        ex.start(0);
        let w = diag("motor.temperature", Severity::Warning, false);
        let out = ex.tick(100, TickInput { diagnoses: vec![w.clone()], ..Default::default() });
        assert!(matches!(&out[0], Effect::Prompt { prompt } if prompt.deadline_ms == 30_100));
        // clears and re-fires before the first prompt resolves: no stacking
        let out = ex.tick(200, TickInput { diagnoses: vec![w], ..Default::default() });
        assert!(!out.iter().any(|e| matches!(e, Effect::Prompt { .. })));
        let out = ex.tick(30_100, TickInput::default());
        assert!(out.contains(&Effect::PromptResolved {
            id: "p1".into(),
            decision: PromptDecision::Timeout
        }));
        assert!(ex.is_active());
        assert_eq!(
            ex.resolve_prompt(30_200, "p1", PromptDecision::Continue),
            Err(MissionError::AlreadyResolved("p1".into()))
        );
        assert_eq!(
            ex.resolve_prompt(30_200, "p9", PromptDecision::Continue),
            Err(MissionError::UnknownPrompt("p9".into()))
        );
    }

    #[test]
    fn operator_terminate_via_prompt() {
        let mut ex = Executor::new(plan(), ExecutorConfig::default());
        ex.start(0);
        ex.tick(
            100,
            TickInput {
                diagnoses: vec![diag("compute.cpu", Severity::Warning, false)],
                ..Default::default()
            },
        );
        let out = ex.tick(
            200,
            TickInput {
                commands: vec![(
                    7,
                    OperatorCommand::PromptResponse {
                        id: "p1".into(),
                        decision: OperatorDecision::Terminate,
                    },
                )],
                ..Default::default()
            },
        );
        assert_eq!(out[0], Effect::Ack { cmd_id: 7 });
        assert_eq!(
            ex.outcome().unwrap().outcome,
            OutcomeKind::TerminatedByOperator { prompt: Some("p1".into()) }
        );
        assert_eq!(ex.outcome().unwrap().exit_code(), 11);
    }

    #[test]
    fn command_gating() {
        let mut ex = Executor::new(plan(), ExecutorConfig::default());
        let out = ex.tick(0, TickInput { commands: vec![(1, OperatorCommand::Terminate)], ..Default::default() });
        assert_eq!(out, vec![Effect::Nack { cmd_id: 1, reason: "no-active-mission".into() }]);
        ex.start(0);
        let stale = OperatorCommand::PromptResponse {
            id: "p1".into(),
            decision: OperatorDecision::Continue,
        };
        let out = ex.tick(100, TickInput { commands: vec![(2, stale)], ..Default::default() });
        assert_eq!(out, vec![Effect::Nack { cmd_id: 2, reason: "unknown-prompt".into() }]);
        assert!(ex.is_active());
        let out = ex.tick(200, TickInput { commands: vec![(3, OperatorCommand::Terminate)], ..Default::default() });
        assert_eq!(out[0], Effect::Ack { cmd_id: 3 });
        assert_eq!(
            ex.outcome().unwrap().outcome,
            OutcomeKind::TerminatedByOperator { prompt: None }
        );
    }

    #[test]
    fn recover_then_halt_at_zone() {
        let mut ex = Executor::new(plan(), ExecutorConfig::default());
        ex.start(0);
        let dir = EscalationDirective {
            kind: EscalationKind::RecoverToZone,
            trigger: EscalationTrigger::WarningAccumulation(3),
        };
        let out = ex.tick(100, TickInput { escalation: Some(dir.clone()), ..Default::default() });
        assert_eq!(
            out,
            vec![Effect::Command {
                command: MotionCommand::Goto { cell: Cell(1, 8), purpose: GotoPurpose::Recovery }
            }]
        );
        // repeated directive does not re-issue the goto
        assert!(ex.tick(200, TickInput { escalation: Some(dir), ..Default::default() }).is_empty());
        ex.tick(300, TickInput { arrived: true, ..Default::default() });
        assert_eq!(
            ex.outcome().unwrap().outcome,
            OutcomeKind::TerminatedByOntology { cause: "warning-accumulation".into() }
        );
    }

    #[test]
    fn mission_spec_json() {
        let doc = br#"{"waypoints": [{"x": 1, "y": 2, "action": "transit"}, {"x": 3, "y": 4, "theta": 1.5, "action": {"scan": "t1"}}], "base": {"x": 0, "y": 0}, "recovery": {"x": 5, "y": 5}}"#;
        let s = MissionSpec::from_json(doc).unwrap();
        assert_eq!(s.waypoints[1].action, WaypointAction::Scan("t1".into()));
        assert_eq!(s.asset, "asset");
        assert!(MissionSpec::from_json(br#"{"waypoints": []}"#).is_err());
    }
}
