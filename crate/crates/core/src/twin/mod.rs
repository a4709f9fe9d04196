//! Digital-twin hub: sequenced broadcast of mission events, operator command
//! intake and late-join snapshots.
//!
//! The hub is single-owner. Servers wrap it in a mutex and forward session
//! traffic; sessions receive messages through bounded channels.

mod protocol;
mod state;

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use serde_json::{json, Value};
use tokio::sync::mpsc;

use crate::canonical;

pub use protocol::{parse_command, MessageKind, OperatorCommand, OperatorDecision, TwinMessage};
pub use state::{compute_alerts, ActiveEntry, Alert, AlertColor, TwinState};

pub const DEFAULT_BUFFER: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HubError {
    #[error("authentication failed")]
    AuthFailed,
    #[error("unknown session {0}")]
    UnknownSession(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HubConfig {
    pub token: String,
    pub buffer: usize,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            token: String::new(),
            buffer: DEFAULT_BUFFER,
        }
    }
}

/// A connected operator session.
#[derive(Debug)]
pub struct Session {
    pub id: u64,
    /// State at the moment of connection; the stream continues at `seq + 1`.
    pub snapshot: TwinMessage,
    pub rx: mpsc::Receiver<TwinMessage>,
}

/// Immediate result of submitting a command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandReply {
    /// Queued for the executor; the final ack or nack is published later.
    Queued { cmd_id: u64 },
    Nack { cmd_id: u64, reason: String },
}

#[derive(Debug)]
pub struct TwinHub {
    config: HubConfig,
    state: TwinState,
    log: Vec<TwinMessage>,
    sessions: BTreeMap<u64, mpsc::Sender<TwinMessage>>,
    next_session: u64,
    queue: VecDeque<(u64, OperatorCommand)>,
    next_cmd: u64,
    dropped: Vec<u64>,
}

impl TwinHub {
    pub fn new(config: HubConfig) -> Self {
        Self {
            config,
            state: TwinState::default(),
            log: Vec::new(),
            sessions: BTreeMap::new(),
            next_session: 1,
            queue: VecDeque::new(),
            next_cmd: 1,
            dropped: Vec::new(),
        }
    }

    pub fn seq(&self) -> u64 {
        self.state.seq
    }

    pub fn state(&self) -> &TwinState {
        &self.state
    }

    pub fn log(&self) -> &[TwinMessage] {
        &self.log
    }

    pub fn into_log(self) -> Vec<TwinMessage> {
        self.log
    }

    /// Sessions disconnected for overflowing their buffer.
    pub fn dropped_sessions(&self) -> &[u64] {
        &self.dropped
    }

    /// Wraps `payload` in the next message and fans it out. Publishing a
    /// diagnosis that changes any component colour also publishes an alert.
    pub fn publish<T: Serialize>(&mut self, t_ms: u64, kind: MessageKind, payload: &T) -> u64 {
        let before = (kind == MessageKind::Diagnosis).then(|| self.state.alerts.clone());
        let seq = self.push(t_ms, kind, canonical::to_value(payload));
        if let Some(before) = before {
            if before != self.state.alerts {
                let alerts = canonical::to_value(&self.state.alerts);
                self.push(t_ms, MessageKind::Alert, json!({ "alerts": alerts }));
            }
        }
        seq
    }

    fn push(&mut self, t_ms: u64, kind: MessageKind, payload: Value) -> u64 {
        let msg = TwinMessage {
            seq: self.state.seq + 1,
            t_ms,
            kind,
            payload,
        };
        self.state.apply(&msg);
        let mut gone = Vec::new();
        for (id, tx) in &self.sessions {
            match tx.try_send(msg.clone()) {
                Ok(()) => {}
                Err(mpsc::error::TrySendError::Full(_)) => {
                    self.dropped.push(*id);
                    gone.push(*id);
                }
                Err(mpsc::error::TrySendError::Closed(_)) => gone.push(*id),
            }
        }
        for id in gone {
            self.sessions.remove(&id);
        }
        self.log.push(msg);
        self.state.seq
    }

    /// Writes the current state into the log as a checkpoint.
    pub fn checkpoint(&mut self, t_ms: u64) -> u64 {
        let at_seq = self.state.seq;
        let state = self.state.to_value();
        self.push(t_ms, MessageKind::Snapshot, json!({ "at_seq": at_seq, "state": state }))
    }

    /// Current state stamped with the current seq. Not logged.
    pub fn snapshot(&self) -> TwinMessage {
        TwinMessage {
            seq: self.state.seq,
            t_ms: self.state.t_ms,
            kind: MessageKind::Snapshot,
            payload: json!({ "at_seq": self.state.seq, "state": self.state.to_value() }),
        }
    }

    /// Messages with seq greater than `since`.
    pub fn backlog_since(&self, since: u64) -> &[TwinMessage] {
        let start = (since as usize).min(self.log.len());
        &self.log[start..]
    }

    pub fn authenticate(&self, token: &str) -> Result<(), HubError> {
        if token == self.config.token {
            Ok(())
        } else {
            Err(HubError::AuthFailed)
        }
    }

    pub fn connect(&mut self, token: &str) -> Result<Session, HubError> {
        self.authenticate(token)?;
        let (tx, rx) = mpsc::channel(self.config.buffer.max(1));
        let id = self.next_session;
        self.next_session += 1;
        self.sessions.insert(id, tx);
        Ok(Session {
            id,
            snapshot: self.snapshot(),
            rx,
        })
    }

    pub fn disconnect(&mut self, id: u64) {
        self.sessions.remove(&id);
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Accepts a command from a connected session.
    pub fn apply_command(&mut self, session: u64, cmd: OperatorCommand) -> Result<CommandReply, HubError> {
        if !self.sessions.contains_key(&session) {
            return Err(HubError::UnknownSession(session));
        }
        Ok(self.submit(cmd))
    }

    /// Queues a command for the executor, rejecting ones that can already
    /// be seen to fail from hub state. Also used by scripted operators.
    pub fn submit(&mut self, cmd: OperatorCommand) -> CommandReply {
        let cmd_id = self.next_cmd;
        self.next_cmd += 1;
        let reason = match &cmd {
            OperatorCommand::Hello { .. } => Some("hello-is-session-level"),
            OperatorCommand::StartMission => None,
            OperatorCommand::Terminate if !self.state.mission_active => Some("no-active-mission"),
            OperatorCommand::PromptResponse { .. } if !self.state.mission_active => Some("no-active-mission"),
            OperatorCommand::PromptResponse { id, .. } if !self.state.prompts.contains_key(id) => {
                Some("unknown-prompt")
            }
            _ => None,
        };
        if let Some(reason) = reason {
            self.nack(self.state.t_ms, cmd_id, cmd.name(), reason);
            return CommandReply::Nack {
                cmd_id,
                reason: reason.into(),
            };
        }
        self.queue.push_back((cmd_id, cmd));
        CommandReply::Queued { cmd_id }
    }

    /// Nacks a client frame that did not parse as a command.
    pub fn reject_malformed(&mut self) -> u64 {
        let cmd_id = self.next_cmd;
        self.next_cmd += 1;
        self.nack(self.state.t_ms, cmd_id, "unknown", "malformed");
        cmd_id
    }

    /// Messages a resuming client needs: the backlog after `last_seq` (when
    /// it still fits one session buffer) followed by a fresh snapshot.
    pub fn resume(&self, last_seq: u64) -> Vec<TwinMessage> {
        let backlog = self.backlog_since(last_seq);
        let mut out = if last_seq > 0 && backlog.len() <= self.config.buffer {
            backlog.to_vec()
        } else {
            Vec::new()
        };
        out.push(self.snapshot());
        out
    }

    /// Hands queued commands to the owner of the executor, in arrival order.
    pub fn drain_commands(&mut self) -> Vec<(u64, OperatorCommand)> {
        self.queue.drain(..).collect()
    }

    pub fn ack(&mut self, t_ms: u64, cmd_id: u64, command: &str) -> u64 {
        self.publish(t_ms, MessageKind::Ack, &json!({ "cmd_id": cmd_id, "command": command }))
    }

    pub fn nack(&mut self, t_ms: u64, cmd_id: u64, command: &str, reason: &str) -> u64 {
        self.publish(
            t_ms,
            MessageKind::Nack,
            &json!({ "cmd_id": cmd_id, "command": command, "reason": reason }),
        )
    }
}
