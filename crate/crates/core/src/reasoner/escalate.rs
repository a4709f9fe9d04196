use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Diagnosis, Severity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationKind {
    TerminateMission,
    RecoverToZone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationTrigger {
    FaultRule(String),
    WarningAccumulation(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationDirective {
    pub kind: EscalationKind,
    pub trigger: EscalationTrigger,
}

/// Decides whether the active diagnoses warrant stopping the mission.
///
/// Any fault terminates the mission (the first fault in sort order names the
/// rule). Otherwise warnings on at least `threshold` distinct components send
/// the platform to the recovery zone.
pub fn escalate(active: &[Diagnosis], threshold: usize) -> Option<EscalationDirective> {
    let fault = active
        .iter()
        .filter(|d| d.severity == Severity::Fault)
        .min_by(|a, b| (&a.component, &a.rule_id).cmp(&(&b.component, &b.rule_id)));
    if let Some(f) = fault {
        return Some(EscalationDirective {
            kind: EscalationKind::TerminateMission,
            trigger: EscalationTrigger::FaultRule(f.rule_id.clone()),
        });
    }
    let warned: BTreeSet<&str> = active
        .iter()
        .filter(|d| d.severity == Severity::Warning)
        .map(|d| d.component.as_str())
        .collect();
    (threshold > 0 && warned.len() >= threshold).then_some(EscalationDirective {
        kind: EscalationKind::RecoverToZone,
        trigger: EscalationTrigger::WarningAccumulation(warned.len()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(component: &str, rule: &str, severity: Severity) -> Diagnosis {
        Diagnosis {
            t_ms: 0,
            component: component.into(),
            severity,
            state: "x".into(),
            certainty: 1.0,
            rule_id: rule.into(),
            message: String::new(),
            value: None,
            repeat: false,
        }
    }

    #[test]
    fn nothing_active() {
        assert_eq!(escalate(&[], 3), None);
    }

    #[test]
    fn three_warnings_recover() {
        let active = [
            diag("motor", "motor.temperature", Severity::Warning),
            diag("compute", "compute.cpu", Severity::Warning),
            diag("battery", "battery.soc", Severity::Warning),
        ];
        assert_eq!(
            escalate(&active, 3),
            Some(EscalationDirective {
                kind: EscalationKind::RecoverToZone,
                trigger: EscalationTrigger::WarningAccumulation(3),
            })
        );
        assert_eq!(escalate(&active[..2], 3), None);
    }

    #[test]
    fn fault_wins_over_warnings() {
        let active = [
            diag("motor", "motor.temperature", Severity::Warning),
            diag("battery", "battery.soc", Severity::Fault),
        ];
        assert_eq!(
            escalate(&active, 3),
            Some(EscalationDirective {
                kind: EscalationKind::TerminateMission,
                trigger: EscalationTrigger::FaultRule("battery.soc".into()),
            })
        );
    }

    #[test]
    fn two_rules_on_one_component_count_once() {
        let active = [
            diag("compute", "compute.cpu", Severity::Warning),
            diag("compute", "compute.ram", Severity::Warning),
            diag("motor", "motor.temperature", Severity::Warning),
        ];
        assert_eq!(escalate(&active, 3), None);
    }
}
