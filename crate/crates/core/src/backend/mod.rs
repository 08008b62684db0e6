//! Proof-engine port.
//!
//! A [`ProverBackend`] compiles theorems and opens sessions; a
//! [`ProverSession`] validates tactics without side effects
//! ([`ProverSession::compile_tactic`]) and advances only on
//! [`ProverSession::apply_tactic`]. One session serves one search branch;
//! branches are split with [`ProverSession::fork`].

#[cfg(feature = "subprocess")]
pub mod serapi;
pub mod synthetic;
pub mod term;

use serde::{Deserialize, Serialize};

use crate::model::{state_fingerprint, ProofState};

pub use synthetic::SyntheticBackend;

/// Compiler messages longer than this are cut before going into prompts.
pub const MAX_ERROR_CHARS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResult {
    pub success: bool,
    pub error: Option<String>,
    pub state: Option<ProofState>,
}

impl CompileResult {
    pub fn ok(state: ProofState) -> Self {
        CompileResult { success: true, error: None, state: Some(state) }
    }

    pub fn err(message: impl Into<String>) -> Self {
        let message = message.into();
        CompileResult {
            success: false,
            error: Some(if message.is_empty() { "error".into() } else { message }),
            state: None,
        }
    }

    pub fn is_consistent(&self) -> bool {
        if self.success {
            self.state.is_some() && self.error.is_none()
        } else {
            self.error.is_some()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("session state {found} does not match expected {expected}")]
    SessionDesync { expected: String, found: String },
    #[error("tactic rejected: {0}")]
    Tactic(String),
    #[error("theorem rejected: {0}")]
    Theorem(String),
    #[error("session poisoned: {0}")]
    Poisoned(String),
    #[error("prover process: {0}")]
    Process(String),
}

pub trait ProverSession: Send {
    fn id(&self) -> &str;

    fn theorem(&self) -> &str;

    fn current_state(&self) -> &ProofState;

    /// Tactics applied so far, in order.
    fn transcript(&self) -> &[String];

    /// Check `tactic` against `state`, which must be the current state. Never
    /// advances the session. `Err` is reserved for infrastructure failures;
    /// rejected tactics come back as an unsuccessful [`CompileResult`].
    fn compile_tactic(&mut self, tactic: &str, state: &ProofState) -> Result<CompileResult, BackendError>;

    fn apply_tactic(&mut self, tactic: &str) -> Result<ProofState, BackendError>;

    /// Independent session in the same state.
    fn fork(&self) -> Result<Box<dyn ProverSession>, BackendError>;
}

pub trait ProverBackend: Send + Sync {
    fn name(&self) -> &str;

    fn compile_theorem(&self, theorem_source: &str, requires: &[String]) -> CompileResult;

    fn open_session(&self, theorem_source: &str, requires: &[String]) -> Result<Box<dyn ProverSession>, BackendError>;
}

pub fn is_goal_complete(state: &ProofState) -> bool {
    state.goals.is_empty()
}

pub fn is_subgoal_complete(prev: &ProofState, next: &ProofState) -> bool {
    !next.goals.is_empty() && next.goals.len() < prev.goals.len()
}

/// Cut an error message to [`MAX_ERROR_CHARS`] characters.
pub fn truncate_error(message: &str) -> String {
    match message.char_indices().nth(MAX_ERROR_CHARS) {
        Some((cut, _)) => format!("{}...", &message[..cut]),
        None => message.to_string(),
    }
}

/// Rebuild a session by replaying `transcript` from the theorem.
pub fn replay(
    backend: &dyn ProverBackend,
    theorem_source: &str,
    requires: &[String],
    transcript: &[String],
) -> Result<Box<dyn ProverSession>, BackendError> {
    let mut session = backend.open_session(theorem_source, requires)?;
    for tactic in transcript {
        session.apply_tactic(tactic)?;
    }
    Ok(session)
}

pub(crate) fn desync(expected: &ProofState, found: &ProofState) -> BackendError {
    BackendError::SessionDesync { expected: state_fingerprint(expected), found: state_fingerprint(found) }
}
