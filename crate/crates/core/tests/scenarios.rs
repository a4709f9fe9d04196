use std::collections::BTreeMap;
use std::path::Path;

use serde_json::json;

use symbiot_core::fmcw::{Classification, Defect};
use symbiot_core::mission::{mcp_ledger, OutcomeKind, Relationship, SafeBand, Stage};
use symbiot_core::ontology::parse_ontology;
use symbiot_core::scenario::{
    aid_from_log, assets_dir, bundled_scenario, outcome_from_log, replay, run, timeline, EventLog, LoadedScenario,
    OperatorSpec, RunOptions, RunResult, ScenarioError, ScenarioFile, ScriptedCommand, TargetSpec,
};
use symbiot_core::sim::{Cell, FaultEffect, FaultInjection, GridMap};
use symbiot_core::mission::MissionSpec;
use symbiot_core::twin::{MessageKind, OperatorCommand, OperatorDecision, TwinMessage};

fn load(n: u32) -> LoadedScenario {
    LoadedScenario::load(&bundled_scenario(n)).unwrap()
}

fn run_file(file: ScenarioFile) -> RunResult {
    run_custom(file, |_| {})
}

/// Assembles a variant of the bundled documents, letting the caller edit the
/// ontology JSON first.
fn run_custom(file: ScenarioFile, edit_ontology: impl FnOnce(&mut serde_json::Value)) -> RunResult {
    let dir = assets_dir();
    let mut onto: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("ontology.json")).unwrap()).unwrap();
    edit_ontology(&mut onto);
    let ontology = parse_ontology(&serde_json::to_vec(&onto).unwrap()).unwrap();
    let map = GridMap::from_json(&std::fs::read(dir.join("map.json")).unwrap()).unwrap();
    let mission = MissionSpec::from_json(&std::fs::read(dir.join("mission.json")).unwrap()).unwrap();
    let loaded = LoadedScenario::assemble(file, ontology, map, mission).unwrap();
    run(loaded, &RunOptions::default()).unwrap()
}

fn script(cmds: Vec<(u64, OperatorCommand)>) -> OperatorSpec {
    OperatorSpec::Script(cmds.into_iter().map(|(at_ms, command)| ScriptedCommand { at_ms, command }).collect())
}

fn of_kind(log: &EventLog, kind: MessageKind) -> Vec<&TwinMessage> {
    log.messages.iter().filter(|m| m.kind == kind).collect()
}

#[test]
fn replay_detects_deleted_line() {
    let r = run(load(1), &RunOptions::default()).unwrap();
    let mut tampered = r.log.clone();
    tampered.messages.remove(40);
    let report = replay(&tampered);
    assert!(!report.check("seq-integrity").unwrap().passed);
    assert!(report.check("watchdog-safety").unwrap().passed);
}

#[test]
fn replay_detects_goto_after_fault() {
    let r = run(load(3), &RunOptions::default()).unwrap();
    assert!(replay(&r.log).passed());
    let mut tampered = r.log.clone();
    let last = tampered.messages.last().unwrap().clone();
    tampered.messages.push(TwinMessage {
        seq: last.seq + 1,
        t_ms: last.t_ms,
        kind: MessageKind::MissionState,
        payload: json!({"event": "command", "command": {"command": "goto", "cell": [2, 3], "purpose": "waypoint"}}),
    });
    let report = replay(&tampered);
    assert!(report.check("seq-integrity").unwrap().passed);
    assert!(!report.check("watchdog-safety").unwrap().passed);
}

#[test]
fn replay_detects_edited_snapshot_and_false_success() {
    let r = run(load(2), &RunOptions::default()).unwrap();
    let mut tampered = r.log.clone();
    let snap = tampered.messages.iter_mut().find(|m| m.kind == MessageKind::Snapshot).unwrap();
    snap.payload["state"]["stage"] = json!("F");
    assert!(!replay(&tampered).check("snapshot-fold").unwrap().passed);

    let r3 = run(load(3), &RunOptions::default()).unwrap();
    let mut lied = r3.log.clone();
    let out = lied.messages.iter_mut().rev().find(|m| m.event() == Some("outcome")).unwrap();
    out.payload["outcome"]["outcome"] = json!({"kind": "success"});
    assert!(!replay(&lied).check("outcome-soundness").unwrap().passed);
}

#[test]
fn corrupt_log_is_rejected() {
    let err = EventLog::parse("{\"seq\":1}\nnot json\n").unwrap_err();
    assert!(err.to_string().starts_with("line 1"), "{err}");
}

#[test]
fn scenario_1_reports() {
    let r = run(load(1), &RunOptions::default()).unwrap();
    let tl = timeline(&r.log.messages);
    assert_eq!(tl.stages.len(), 8);
    assert!(tl.markers.is_empty());
    assert_eq!(outcome_from_log(&r.log.messages), Some(r.outcome.clone()));
    let aid = aid_from_log(&r.log.messages).unwrap();
    assert_eq!(aid.segments.len(), 2);
    assert_eq!(aid.counts(), (2, 0));
    assert_eq!(aid.segments[0].trace, "traces/s1.ndjson");
    assert!(mcp_ledger(&r.log.messages).is_empty());
    assert_eq!(r.traces.len(), 2);
    assert!(tl.render().contains("end stage H  outcome success  exit 0"));
}

#[test]
fn scenario_2_and_3_ledgers() {
    let r2 = run(load(2), &RunOptions::default()).unwrap();
    let rows = mcp_ledger(&r2.log.messages);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.relationship == Relationship::Commensalism));

    let r3 = run(load(3), &RunOptions::default()).unwrap();
    let rows = mcp_ledger(&r3.log.messages);
    let last = rows.last().unwrap();
    assert_eq!(last.event, "terminated:low-battery");
    assert_eq!(last.relationship, Relationship::Mutualism);
    assert!(rows.iter().all(|r| r.relationship != Relationship::Parasitism));
}

#[test]
fn misconfigured_threshold_termination_is_parasitism() {
    let mut file = load(1).file;
    file.safe_bands = BTreeMap::from([("motor.temperature".to_string(), SafeBand { lo: 0.0, hi: 90.0 })]);
    let r = run_custom(file, |onto| {
        for t in onto["thresholds"].as_array_mut().unwrap() {
            if t["metric"] == "motor.temperature" {
                t["warning"] = json!(45);
                t["fault"] = json!(50);
            }
        }
    });
    assert_eq!(r.outcome.outcome, OutcomeKind::TerminatedByOntology { cause: "overheating".into() });
    let rows = mcp_ledger(&r.log.messages);
    let last = rows.last().unwrap();
    assert_eq!(last.relationship, Relationship::Parasitism);
    assert_eq!(last.rationale, "fault-within-safe-band");
    assert!(replay(&r.log).passed());
}

#[test]
fn operator_terminates_through_prompt() {
    let mut file = load(2).file;
    file.operator = script(vec![(
        165_000,
        OperatorCommand::PromptResponse { id: "p1".into(), decision: OperatorDecision::Terminate },
    )]);
    let r = run_file(file);
    assert_eq!(r.outcome.outcome, OutcomeKind::TerminatedByOperator { prompt: Some("p1".into()) });
    assert_eq!(r.exit_code(), 11);
    assert_eq!(r.outcome.end_stage, Stage::G);
    let rows = mcp_ledger(&r.log.messages);
    assert_eq!(rows[0].relationship, Relationship::Mutualism);
    assert!(replay(&r.log).passed());
}

#[test]
fn auto_continue_policy_answers_every_prompt() {
    let mut file = load(2).file;
    file.operator = serde_json::from_value(json!("auto-continue")).unwrap();
    let r = run_file(file);
    assert_eq!(r.outcome.outcome, OutcomeKind::Success);
    let results = of_kind(&r.log, MessageKind::PromptResult);
    assert_eq!(results.len(), 2);
    assert!(results.iter().all(|m| m.payload["decision"] == "continue"));
    assert_eq!(of_kind(&r.log, MessageKind::Ack).len(), 2);
}

#[test]
fn stale_and_unknown_commands_are_nacked() {
    let mut file = load(1).file;
    file.operator = script(vec![
        (1_000, OperatorCommand::PromptResponse { id: "p9".into(), decision: OperatorDecision::Continue }),
        (1_000, OperatorCommand::Hello { last_seq: 0 }),
        (1_100, OperatorCommand::SetSpeed { factor: 4.0 }),
    ]);
    let r = run_file(file);
    let nacks: Vec<&str> =
        of_kind(&r.log, MessageKind::Nack).iter().map(|m| m.payload["reason"].as_str().unwrap()).collect();
    assert_eq!(nacks, ["unknown-prompt", "hello-is-session-level"]);
    assert_eq!(of_kind(&r.log, MessageKind::Ack)[0].payload["command"], "set_speed");
    assert_eq!(r.outcome.outcome, OutcomeKind::Success);
}

#[test]
fn operator_terminate_command_ends_mission() {
    let mut file = load(1).file;
    file.operator = script(vec![(60_000, OperatorCommand::Terminate)]);
    let r = run_file(file);
    assert_eq!(r.outcome.outcome, OutcomeKind::TerminatedByOperator { prompt: None });
    assert_eq!(r.outcome.end_stage, Stage::E);
    assert!(replay(&r.log).passed());
}

#[test]
fn ghost_commands_round_trip() {
    let mut file = load(1).file;
    let reach = [0.3, 1.2, -1.0, 0.0, 0.4, 0.0];
    file.operator = script(vec![
        (500, OperatorCommand::GhostSet { arm: 0, joints: reach }),
        (700, OperatorCommand::GhostCommit),
        (900, OperatorCommand::GhostSet { arm: 4, joints: reach }),
        (1_100, OperatorCommand::GhostCommit),
    ]);
    let r = run_file(file);
    let ghost = of_kind(&r.log, MessageKind::GhostState);
    assert_eq!(ghost[0].payload["arm"], 0);
    assert_eq!(ghost[0].payload["flags"]["joint_limit_violation"], false);
    let arms = r.log.messages.iter().find(|m| m.event() == Some("arms")).unwrap();
    assert_eq!(arms.payload["arms"][0][0].as_f64().unwrap(), 0.3);
    let nacks: Vec<&str> =
        of_kind(&r.log, MessageKind::Nack).iter().map(|m| m.payload["reason"].as_str().unwrap()).collect();
    assert_eq!(nacks, ["invalid-arm", "no-ghost"]);
    assert!(replay(&r.log).passed());
}

#[test]
fn corroded_segment_appears_in_aid() {
    let mut file = load(1).file;
    file.targets.insert(
        "t2".into(),
        TargetSpec {
            material: "corroded-steel".into(),
            distance_cm: 10.0,
            defect: Defect::None,
            baseline: Some("clean-steel".into()),
            noise_sigma: 1.0,
        },
    );
    let r = run_file(file);
    let aid = aid_from_log(&r.log.messages).unwrap();
    assert_eq!(aid.counts(), (1, 1));
    assert_eq!(aid.segments[1].class, Classification::Corrosion);
    assert!(aid.segments[1].contrast >= 10.0);
    // scans report findings; they do not end the mission
    assert_eq!(r.outcome.outcome, OutcomeKind::Success);
}

#[test]
fn blocked_corridor_is_unreachable() {
    let mut file = load(1).file;
    file.injections = (10..=12)
        .map(|y| FaultInjection { at_ms: 50_000, effect: FaultEffect::ObstacleAppear { cell: Cell(26, y) }, magnitude: 1.0 })
        .collect();
    let r = run_file(file);
    assert!(matches!(r.outcome.outcome, OutcomeKind::Unreachable { .. }), "{:?}", r.outcome);
    assert_eq!(r.exit_code(), 12);
    assert_eq!(r.outcome.end_stage, Stage::E);
    assert!(replay(&r.log).passed());
}

#[test]
fn sim_time_budget_ends_run() {
    let mut file = load(1).file;
    file.max_ms = 10_000;
    let r = run_file(file);
    assert_eq!(r.exit_code(), 12);
}

#[test]
fn seed_override_changes_noise_but_not_outcome() {
    let a = run(load(1), &RunOptions::default()).unwrap();
    let b = run(load(1), &RunOptions { seed: Some(99), ..Default::default() }).unwrap();
    assert_ne!(a.log.digest(), b.log.digest());
    assert_eq!(a.outcome, b.outcome);
}

#[test]
fn scenario_file_errors() {
    let missing = LoadedScenario::load(Path::new("/nonexistent/scenario.json")).unwrap_err();
    assert!(matches!(missing, ScenarioError::Io { .. }));

    let dir = std::env::temp_dir().join(format!("symbiot-scn-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let write = |name: &str, v: serde_json::Value| {
        let p = dir.join(name);
        std::fs::write(&p, serde_json::to_vec(&v).unwrap()).unwrap();
        p
    };
    let assets = assets_dir();
    let base = json!({
        "name": "x",
        "ontology": assets.join("ontology.json"),
        "map": assets.join("map.json"),
        "mission": assets.join("mission.json"),
        "targets": {"t1": {"material": "clean-steel"}, "t2": {"material": "clean-steel"}}
    });
    assert!(LoadedScenario::load(&write("ok.json", base.clone())).is_ok());

    let mut extra = base.clone();
    extra["colour"] = json!("red");
    assert!(matches!(LoadedScenario::load(&write("extra.json", extra)), Err(ScenarioError::Parse(_))));

    let mut no_target = base.clone();
    no_target["targets"] = json!({"t1": {"material": "clean-steel"}});
    assert!(matches!(LoadedScenario::load(&write("nt.json", no_target)), Err(ScenarioError::Mission(_))));

    let mut bad_material = base.clone();
    bad_material["targets"]["t1"]["material"] = json!("cheese");
    assert!(matches!(LoadedScenario::load(&write("bm.json", bad_material)), Err(ScenarioError::Invalid(_))));

    let mut negative = base.clone();
    negative["injections"] = json!([{"at_ms": -5, "effect": "cpu-load", "magnitude": 10}]);
    assert!(matches!(LoadedScenario::load(&write("neg.json", negative)), Err(ScenarioError::Parse(_))));

    let mut band = base.clone();
    band["safe_bands"] = json!({"wheel.pressure": {"lo": 0, "hi": 1}});
    assert!(matches!(LoadedScenario::load(&write("band.json", band)), Err(ScenarioError::Invalid(_))));

    let mut unordered = base;
    unordered["operator"] = json!([
        {"at_ms": 500, "command": {"kind": "terminate"}},
        {"at_ms": 100, "command": {"kind": "terminate"}}
    ]);
    assert!(matches!(LoadedScenario::load(&write("uo.json", unordered)), Err(ScenarioError::Invalid(_))));
    let _ = std::fs::remove_dir_all(&dir);
}
