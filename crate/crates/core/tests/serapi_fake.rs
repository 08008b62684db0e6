#![cfg(feature = "subprocess")]

use std::path::PathBuf;

use prooforge::backend::serapi::{SerapiBackend, SerapiConfig};
use prooforge::backend::{BackendError, ProverBackend};
use prooforge::model::state_fingerprint;

fn backend(log_dir: Option<PathBuf>) -> SerapiBackend {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fake_sertop.py");
    SerapiBackend::new(SerapiConfig {
        program: "python3".into(),
        args: vec![script.display().to_string()],
        timeout_secs: 10,
        log_dir,
        ..Default::default()
    })
}

const THEOREM: &str = "Theorem t : forall n : nat, 0 + n = n.";

#[test]
fn drives_the_worked_proof() {
    let dir = tempfile::tempdir().unwrap();
    let b = backend(Some(dir.path().to_path_buf()));
    let mut s = b.open_session(THEOREM, &[]).unwrap();
    let s0 = s.current_state().clone();
    assert_eq!(s0.goals.len(), 1);
    assert_eq!(s0.goals[0].goal_surface, "forall n : nat, 0 + n = n");

    let bad = s.compile_tactic("reflexivity", &s0).unwrap();
    assert!(!bad.success && bad.error.unwrap().contains("cannot apply"));
    let ok = s.compile_tactic("intros n", &s0).unwrap();
    assert!(ok.success);
    assert_eq!(state_fingerprint(s.current_state()), state_fingerprint(&s0));

    let s1 = s.apply_tactic("intros n").unwrap();
    assert_eq!(Some(&s1), ok.state.as_ref());
    assert_eq!(s1.goals[0].hypotheses_surface[0].name, "n");
    assert_eq!(s1.goals[0].goal_internal, "@eq nat (Nat.add O n) n");

    let forked = s.fork().unwrap();
    assert_eq!(forked.current_state(), &s1);
    s.apply_tactic("simpl").unwrap();
    assert!(s.apply_tactic("reflexivity").unwrap().is_complete());
    assert_eq!(forked.current_state(), &s1);
    assert!(std::fs::read_dir(dir.path()).unwrap().count() >= 1);
}

#[test]
fn crash_poisons_the_session() {
    let b = backend(None);
    let mut s = b.open_session(THEOREM, &[]).unwrap();
    assert!(matches!(s.apply_tactic("crash"), Err(BackendError::Poisoned(_))));
    assert!(matches!(s.apply_tactic("intros n"), Err(BackendError::Poisoned(_))));
}

#[test]
fn missing_program_is_a_process_error() {
    let b = SerapiBackend::new(SerapiConfig { program: "/nonexistent/sertop".into(), ..Default::default() });
    assert!(matches!(b.open_session(THEOREM, &[]), Err(BackendError::Process(_))));
    assert!(!b.compile_theorem(THEOREM, &[]).success);
}
