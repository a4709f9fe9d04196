use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde_json::json;

use super::{LoadedScenario, OperatorPolicy, OperatorSpec, ScenarioError, ScriptedCommand};
use crate::fmcw::{classify, simulate_scan, ScanOptions, ScanTrace, SweepConfig};
use crate::mission::{Effect, Executor, ExecutorConfig, MissionOutcome, MotionCommand, OutcomeKind, Stage, TickInput};
use crate::reasoner::Reasoner;
use crate::sim::{DriveCommand, PlatformSim, SimError};
use crate::twin::{HubConfig, MessageKind, OperatorCommand, OperatorDecision, TwinHub};

use super::EventLog;

pub const TICK_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Real-time factor; 0 runs as fast as possible.
    pub speed: f64,
    pub hub: HubConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: None,
            speed: 0.0,
            hub: HubConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: MissionOutcome,
    pub log: EventLog,
    pub traces: BTreeMap<String, ScanTrace>,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        self.outcome.exit_code()
    }
}

/// One pipeline instance. The hub is passed in per step so a server can
/// keep it behind a lock shared with its sessions.
#[derive(Debug)]
pub struct Runner {
    scenario: LoadedScenario,
    seed: u64,
    sim: PlatformSim,
    reasoner: Reasoner,
    executor: Executor,
    now: u64,
    script: VecDeque<ScriptedCommand>,
    auto_continue: bool,
    answered: BTreeSet<String>,
    scan_start: BTreeMap<String, u64>,
    traces: BTreeMap<String, ScanTrace>,
    speed: f64,
    started: bool,
}

impl Runner {
    pub fn new(scenario: LoadedScenario, opts: &RunOptions) -> Result<Self, ScenarioError> {
        let seed = opts.seed.unwrap_or(scenario.file.seed);
        let mut sim = PlatformSim::new(scenario.map.clone(), scenario.sim, seed);
        for inj in &scenario.file.injections {
            sim.inject(*inj).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        let reasoner = Reasoner::new(scenario.ontology.clone());
        let executor = Executor::new(scenario.plan.clone(), ExecutorConfig::default());
        let (script, auto_continue) = match &scenario.file.operator {
            OperatorSpec::Policy(p) => (VecDeque::new(), *p == OperatorPolicy::AutoContinue),
            OperatorSpec::Script(s) => (s.iter().cloned().collect(), false),
        };
        Ok(Self {
            scenario,
            seed,
            sim,
            reasoner,
            executor,
            now: 0,
            script,
            auto_continue,
            answered: BTreeSet::new(),
            scan_start: BTreeMap::new(),
            traces: BTreeMap::new(),
            speed: opts.speed,
            started: false,
        })
    }

    pub fn now_ms(&self) -> u64 {
        self.now
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn outcome(&self) -> Option<&MissionOutcome> {
        self.executor.outcome()
    }

    pub fn is_finished(&self) -> bool {
        self.executor.outcome().is_some()
    }

    pub fn traces(&self) -> &BTreeMap<String, ScanTrace> {
        &self.traces
    }

    pub fn sim(&self) -> &PlatformSim {
        &self.sim
    }

    /// Publishes the mission header and starts the plan.
    pub fn start(&mut self, hub: &mut TwinHub) {
        if self.started {
            return;
        }
        self.started = true;
        let s = &self.scenario;
        let components: Vec<&str> = s.ontology.components.iter().map(|c| c.id.as_str()).collect();
        hub.publish(
            0,
            MessageKind::MissionState,
            &json!({
                "event": "init",
                "scenario": s.file.name,
                "asset": s.plan.asset,
                "seed": self.seed,
                "components": components,
                "safe_bands": s.file.safe_bands,
                "scans_planned": s.plan.scan_count(),
                "plan": s.plan.actions,
                "base": s.plan.base,
                "recovery": s.plan.recovery,
            }),
        );
        let effects = self.executor.start(0);
        self.apply_effects(hub, effects, &BTreeMap::new());
    }

    /// Advances one tick. Returns false once the mission has ended.
    pub fn step(&mut self, hub: &mut TwinHub) -> bool {
        if !self.started {
            self.start(hub);
        }
        if self.is_finished() {
            return false;
        }
        let next = self.now + TICK_MS;

        while self.script.front().is_some_and(|c| c.at_ms <= next) {
            let c = self.script.pop_front().expect("front exists");
            hub.submit(c.command);
        }
        if self.auto_continue {
            let open: Vec<String> = hub.state().prompts.keys().cloned().collect();
            for id in open {
                if self.answered.insert(id.clone()) {
                    hub.submit(OperatorCommand::PromptResponse {
                        id,
                        decision: OperatorDecision::Continue,
                    });
                }
            }
        }

        let mut names = BTreeMap::new();
        let mut mission_cmds = Vec::new();
        for (id, cmd) in hub.drain_commands() {
            names.insert(id, cmd.name());
            match cmd {
                OperatorCommand::GhostSet { arm, joints } => match self.sim.set_ghost(arm, joints) {
                    Ok(preview) => {
                        hub.ack(self.now, id, cmd.name());
                        hub.publish(self.now, MessageKind::GhostState, &preview);
                    }
                    Err(e) => {
                        hub.nack(self.now, id, cmd.name(), &sim_reason(&e));
                    }
                },
                OperatorCommand::GhostCommit => match self.sim.commit_ghost() {
                    Ok(arms) => {
                        hub.ack(self.now, id, cmd.name());
                        for arm in 0..2 {
                            hub.publish(self.now, MessageKind::GhostState, &json!({"arm": arm, "cleared": true}));
                        }
                        hub.publish(self.now, MessageKind::MissionState, &json!({"event": "arms", "arms": arms}));
                    }
                    Err(e) => {
                        hub.nack(self.now, id, cmd.name(), &sim_reason(&e));
                    }
                },
                OperatorCommand::SetSpeed { factor } => {
                    self.speed = factor;
                    hub.ack(self.now, id, cmd.name());
                    hub.publish(self.now, MessageKind::MissionState, &json!({"event": "speed", "factor": factor}));
                }
                other => mission_cmds.push((id, other)),
            }
        }

        let drive = if self.executor.wants_motion() {
            DriveCommand::Drive
        } else if self.executor.is_scanning() {
            DriveCommand::ScanPose
        } else {
            DriveCommand::Idle
        };
        let out = self.sim.step(TICK_MS, drive).expect("positive tick");
        self.now = next;
        let pose = self.sim.state().pose;
        hub.publish(
            self.now,
            MessageKind::Telemetry,
            &json!({"readings": out.frame.readings, "pose": pose, "collision": out.collision}),
        );
        let mut unreachable = None;
        if out.collision.is_some() {
            if let Err(e) = self.sim.replan() {
                unreachable = Some(e);
            }
        }

        self.reasoner.ingest(&out.frame).expect("sim frames are ordered and finite");
        let diagnoses = self.reasoner.evaluate(self.now).expect("frame ingested");
        for d in diagnoses.iter().filter(|d| !d.repeat) {
            hub.publish(self.now, MessageKind::Diagnosis, &json!({"event": "raised", "diagnosis": d}));
        }
        for c in self.reasoner.cleared().to_vec() {
            hub.publish(self.now, MessageKind::Diagnosis, &json!({"event": "cleared", "clearance": c}));
        }
        let escalation = self.reasoner.escalation();

        let effects = self.executor.tick(
            self.now,
            TickInput {
                arrived: out.arrived,
                diagnoses,
                escalation,
                commands: mission_cmds,
            },
        );
        self.apply_effects(hub, effects, &names);
        if let Some(SimError::Unreachable { to, .. } | SimError::CellOccupied(to)) = unreachable {
            self.executor.unreachable(self.now, to);
            let effects = self.executor.drain();
            self.apply_effects(hub, effects, &names);
        }
        if !self.is_finished() && self.now >= self.scenario.file.max_ms {
            let cell = self.sim.current_cell();
            self.executor.unreachable(self.now, cell);
            let effects = self.executor.drain();
            self.apply_effects(hub, effects, &names);
        }
        !self.is_finished()
    }

    fn apply_effects(&mut self, hub: &mut TwinHub, effects: Vec<Effect>, names: &BTreeMap<u64, &str>) {
        let mut queue: VecDeque<Effect> = effects.into();
        while let Some(e) = queue.pop_front() {
            let now = self.now;
            match &e {
                Effect::Stage { stage } => {
                    hub.publish(
                        now,
                        MessageKind::MissionState,
                        &json!({"event": "stage", "stage": stage, "description": stage.description()}),
                    );
                    hub.checkpoint(now);
                }
                Effect::Command { command } => {
                    hub.publish(now, MessageKind::MissionState, &json!({"event": "command", "command": command}));
                    match command {
                        MotionCommand::Goto { cell, .. } => {
                            if let Err(err) = self.sim.set_goal(*cell) {
                                let target = match err {
                                    SimError::CellOccupied(c) => c,
                                    _ => *cell,
                                };
                                self.executor.unreachable(now, target);
                                queue.extend(self.executor.drain());
                            }
                        }
                        MotionCommand::Halt => self.sim.clear_goal(),
                    }
                }
                Effect::ScanStarted { target, segment } => {
                    self.scan_start.insert(segment.clone(), now);
                    hub.publish(
                        now,
                        MessageKind::MissionState,
                        &json!({"event": "scan_started", "target": target, "segment": segment}),
                    );
                }
                Effect::ScanCompleted { target, segment } => {
                    let start = self.scan_start.get(segment).copied().unwrap_or(now);
                    let payload = self.scan(target, segment, start);
                    hub.publish(now, MessageKind::ScanResult, &payload);
                }
                Effect::Prompt { prompt } => {
                    hub.publish(now, MessageKind::Prompt, prompt);
                }
                Effect::PromptResolved { id, decision } => {
                    hub.publish(now, MessageKind::PromptResult, &json!({"id": id, "decision": decision}));
                }
                Effect::Ack { cmd_id } => {
                    hub.ack(now, *cmd_id, names.get(cmd_id).copied().unwrap_or("command"));
                }
                Effect::Nack { cmd_id, reason } => {
                    hub.nack(now, *cmd_id, names.get(cmd_id).copied().unwrap_or("command"), reason);
                }
                Effect::Outcome { outcome } => {
                    hub.publish(now, MessageKind::MissionState, &json!({"event": "outcome", "outcome": outcome}));
                    hub.checkpoint(now);
                }
            }
        }
    }

    fn scan(&mut self, target: &str, segment: &str, start_ms: u64) -> serde_json::Value {
        let spec = &self.scenario.file.targets[target];
        let sweep = SweepConfig::default();
        let seed = self.seed ^ (start_ms << 16) ^ segment.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        let opts = ScanOptions {
            seed,
            noise_sigma: spec.noise_sigma,
            start_s: start_ms as f64 / 1000.0,
        };
        let material = spec.profile().expect("validated at load");
        let baseline = spec.baseline_profile().expect("validated at load");
        let trace = simulate_scan(&material, spec.distance_cm, &sweep, opts).expect("target in range");
        let base = simulate_scan(&baseline, spec.distance_cm, &sweep, ScanOptions { seed: seed ^ 1, ..opts })
            .expect("target in range");
        let result = classify(&trace, &base).expect("same sweep and geometry");
        let (bin, amp) = crate::fmcw::peak_bin(&trace).expect("non-empty");
        self.traces.insert(segment.to_string(), trace);
        json!({
            "segment": segment,
            "target": target,
            "material": spec.material,
            "class": result.class,
            "contrast": result.contrast,
            "step": result.step,
            "peak_bin": bin,
            "peak_amplitude": amp,
            "trace": format!("traces/{segment}.ndjson"),
        })
    }
}

fn sim_reason(e: &SimError) -> String {
    match e {
        SimError::InvalidArm(_) => "invalid-arm".into(),
        SimError::GhostRejected(_) => "ghost-rejected".into(),
        SimError::NoGhost => "no-ghost".into(),
        other => other.to_string(),
    }
}

/// Runs a scenario headless to completion.
pub fn run(scenario: LoadedScenario, opts: &RunOptions) -> Result<RunResult, ScenarioError> {
    let mut hub = TwinHub::new(opts.hub.clone());
    let mut runner = Runner::new(scenario, opts)?;
    runner.start(&mut hub);
    while runner.step(&mut hub) {}
    let outcome = runner.outcome().cloned().unwrap_or(MissionOutcome {
        outcome: OutcomeKind::Unreachable {
            cell: runner.sim().current_cell(),
        },
        warnings_seen: 0,
        faults_seen: 0,
        scans_completed: 0,
        end_stage: Stage::A,
    });
    let traces = std::mem::take(&mut runner.traces);
    Ok(RunResult {
        outcome,
        log: EventLog::from_messages(hub.into_log()),
        traces,
    })
}
