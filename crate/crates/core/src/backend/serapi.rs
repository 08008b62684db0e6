//! Subprocess adapter for `sertop`, Coq's s-expression serialization server.
//!
//! One process per session. Commands are written one per line as
//! `(tag cmd)`; the adapter reads answers until `(Answer tag Completed)`.
//! Validation adds and executes the tactic, reads the goals, then cancels the
//! new sentence, so the document tip returns to the bookmarked state id.
//! Internal goal forms are read with `Set Printing All` toggled around the
//! query.
//!
//! Goals are requested in `PpStr` format and split on the `====` separator
//! line; hypotheses written `a, b : T` are expanded. A process that dies or
//! stops answering poisons the session.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{desync, BackendError, CompileResult, ProverBackend, ProverSession};
use crate::model::{GoalState, Hypothesis, ProofState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SerapiConfig {
    pub program: String,
    pub args: Vec<String>,
    /// Raw commands sent once after spawning, each awaited to completion.
    pub handshake: Vec<String>,
    pub timeout_secs: u64,
    /// Directory for one transcript log per session.
    pub log_dir: Option<PathBuf>,
}

impl Default for SerapiConfig {
    fn default() -> Self {
        SerapiConfig {
            program: "sertop".into(),
            args: Vec::new(),
            handshake: Vec::new(),
            timeout_secs: 60,
            log_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Atom(String),
    Str(String),
    List(Vec<Sexp>),
}

impl Sexp {
    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            _ => None,
        }
    }

    /// Depth-first search for a list whose head atom is `head`.
    pub fn find(&self, head: &str) -> Option<&[Sexp]> {
        let items = self.list()?;
        if items.first().and_then(Sexp::atom) == Some(head) {
            return Some(items);
        }
        items.iter().find_map(|i| i.find(head))
    }

    /// All string leaves, in order.
    pub fn strings(&self) -> Vec<&str> {
        match self {
            Sexp::Str(s) => vec![s.as_str()],
            Sexp::Atom(_) => vec![],
            Sexp::List(items) => items.iter().flat_map(Sexp::strings).collect(),
        }
    }
}

pub fn parse_sexp(src: &str) -> Result<Sexp, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut pos = 0;
    let out = parse_at(&chars, &mut pos)?;
    skip_ws(&chars, &mut pos);
    if pos != chars.len() {
        return Err(format!("trailing input at {pos}"));
    }
    Ok(out)
}

fn skip_ws(chars: &[char], pos: &mut usize) {
    while *pos < chars.len() && chars[*pos].is_whitespace() {
        *pos += 1;
    }
}

fn parse_at(chars: &[char], pos: &mut usize) -> Result<Sexp, String> {
    skip_ws(chars, pos);
    match chars.get(*pos) {
        None => Err("unexpected end of input".into()),
        Some('(') => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                skip_ws(chars, pos);
                match chars.get(*pos) {
                    None => return Err("unclosed list".into()),
                    Some(')') => {
                        *pos += 1;
                        return Ok(Sexp::List(items));
                    }
                    _ => items.push(parse_at(chars, pos)?),
                }
            }
        }
        Some(')') => Err(format!("unexpected ')' at {pos}")),
        Some('"') => {
            *pos += 1;
            let mut s = String::new();
            loop {
                match chars.get(*pos) {
                    None => return Err("unterminated string".into()),
                    Some('"') => {
                        *pos += 1;
                        return Ok(Sexp::Str(s));
                    }
                    Some('\\') => {
                        *pos += 1;
                        match chars.get(*pos) {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some(c) => s.push(*c),
                            None => return Err("unterminated escape".into()),
                        }
                        *pos += 1;
                    }
                    Some(c) => {
                        s.push(*c);
                        *pos += 1;
                    }
                }
            }
        }
        Some(_) => {
            let start = *pos;
            while *pos < chars.len() && !chars[*pos].is_whitespace() && !matches!(chars[*pos], '(' | ')' | '"') {
                *pos += 1;
            }
            Ok(Sexp::Atom(chars[start..*pos].iter().collect()))
        }
    }
}

fn quote(text: &str) -> String {
    let mut out = String::from("\"");
    for c in text.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Parse a `PpStr` goal listing.
pub fn parse_goal_text(text: &str) -> Vec<(Vec<Hypothesis>, String)> {
    let mut goals = Vec::new();
    let mut hyps: Vec<Hypothesis> = Vec::new();
    let mut lines = text.lines().peekable();
    let mut pending: Vec<String> = Vec::new();
    while let Some(line) = lines.next() {
        let trimmed = line.trim();
        if trimmed.starts_with("====") {
            for entry in pending.drain(..) {
                if let Some((names, ty)) = entry.split_once(" : ") {
                    for n in names.split(',') {
                        hyps.push(Hypothesis::new(n.trim(), crate::model::normalize_ws(ty)));
                    }
                }
            }
            let mut concl = Vec::new();
            while let Some(next) = lines.peek() {
                if next.trim().is_empty() {
                    break;
                }
                concl.push(next.trim().to_string());
                lines.next();
            }
            goals.push((std::mem::take(&mut hyps), concl.join(" ")));
        } else if trimmed.is_empty()
            || trimmed.starts_with("subgoal")
            || trimmed.ends_with("goals")
            || trimmed.ends_with("goal")
        {
            continue;
        } else if line.starts_with("   ") && !pending.is_empty() && !trimmed.contains(" : ") {
            let last = pending.last_mut().expect("non-empty");
            last.push(' ');
            last.push_str(trimmed);
        } else {
            pending.push(trimmed.to_string());
        }
    }
    goals
}

#[derive(Debug)]
pub struct SerapiBackend {
    config: SerapiConfig,
    counter: std::sync::atomic::AtomicU64,
}

impl SerapiBackend {
    pub fn new(config: SerapiConfig) -> Self {
        SerapiBackend { config, counter: Default::default() }
    }

    fn start(&self, theorem_source: &str, requires: &[String]) -> Result<SerapiSession, BackendError> {
        let n = self.counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let mut session = SerapiSession::spawn(&self.config, format!("serapi-{n}"), theorem_source, requires)?;
        session.state = session.goals(session.tip)?;
        Ok(session)
    }
}

impl ProverBackend for SerapiBackend {
    fn name(&self) -> &str {
        "subprocess"
    }

    fn compile_theorem(&self, theorem_source: &str, requires: &[String]) -> CompileResult {
        match self.start(theorem_source, requires) {
            Ok(s) => CompileResult::ok(s.state.clone()),
            Err(BackendError::Theorem(e)) | Err(BackendError::Tactic(e)) => CompileResult::err(e),
            Err(e) => CompileResult::err(e.to_string()),
        }
    }

    fn open_session(&self, theorem_source: &str, requires: &[String]) -> Result<Box<dyn ProverSession>, BackendError> {
        Ok(Box::new(self.start(theorem_source, requires)?))
    }
}

pub struct SerapiSession {
    id: String,
    config: SerapiConfig,
    theorem: String,
    requires: Vec<String>,
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    log: Option<std::fs::File>,
    tag: u64,
    tip: i64,
    state: ProofState,
    transcript: Vec<String>,
    poisoned: Option<String>,
}

impl Drop for SerapiSession {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

enum Outcome {
    Ok(Vec<Sexp>),
    CoqError(String),
}

impl SerapiSession {
    fn spawn(config: &SerapiConfig, id: String, theorem: &str, requires: &[String]) -> Result<Self, BackendError> {
        let mut child = Command::new(&config.program)
            .args(&config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| BackendError::Process(format!("cannot start {}: {e}", config.program)))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let (tx, rx) = channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let log = match &config.log_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| BackendError::Process(e.to_string()))?;
                Some(
                    std::fs::File::create(dir.join(format!("{id}.log")))
                        .map_err(|e| BackendError::Process(e.to_string()))?,
                )
            }
            None => None,
        };
        let mut s = SerapiSession {
            id,
            config: config.clone(),
            theorem: theorem.to_string(),
            requires: requires.to_vec(),
            child,
            stdin,
            lines: rx,
            log,
            tag: 0,
            tip: 0,
            state: ProofState::completed(),
            transcript: Vec::new(),
            poisoned: None,
        };
        for cmd in config.handshake.clone() {
            if let Outcome::CoqError(e) = s.send(&cmd)? {
                return Err(BackendError::Process(format!("handshake failed: {e}")));
            }
        }
        for line in requires {
            s.add_exec(line).map_err(BackendError::Theorem)?;
        }
        let (_, statement) = super::synthetic::split_theorem(theorem);
        s.add_exec(&format!("Theorem prooforge_goal : {statement}.")).map_err(BackendError::Theorem)?;
        Ok(s)
    }

    fn poison(&mut self, why: String) -> BackendError {
        self.poisoned = Some(why.clone());
        BackendError::Poisoned(why)
    }

    fn send(&mut self, cmd: &str) -> Result<Outcome, BackendError> {
        if let Some(why) = &self.poisoned {
            return Err(BackendError::Poisoned(why.clone()));
        }
        self.tag += 1;
        let tag = format!("t{}", self.tag);
        let line = format!("({tag} {cmd})");
        if let Some(log) = &mut self.log {
            let _ = writeln!(log, "> {line}");
        }
        if let Err(e) = writeln!(self.stdin, "{line}").and_then(|_| self.stdin.flush()) {
            return Err(self.poison(format!("write failed: {e}")));
        }
        let timeout = Duration::from_secs(self.config.timeout_secs.max(1));
        let mut answers = Vec::new();
        let mut error = None;
        loop {
            let raw = match self.lines.recv_timeout(timeout) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => return Err(self.poison("prover timed out".into())),
                Err(RecvTimeoutError::Disconnected) => return Err(self.poison("prover exited".into())),
            };
            if let Some(log) = &mut self.log {
                let _ = writeln!(log, "< {raw}");
            }
            let Ok(sexp) = parse_sexp(&raw) else { continue };
            let Some(items) = sexp.list() else { continue };
            if items.first().and_then(Sexp::atom) != Some("Answer") || items.get(1).and_then(Sexp::atom) != Some(&tag) {
                continue;
            }
            let Some(body) = items.get(2) else { continue };
            match body {
                Sexp::Atom(a) if a == "Completed" => break,
                Sexp::Atom(_) => {}
                other => {
                    if let Some(exn) = other.find("CoqExn") {
                        let text = exn.iter().flat_map(Sexp::strings).collect::<Vec<_>>().join(" ");
                        error = Some(if text.is_empty() { "Coq error".to_string() } else { text });
                    } else {
                        answers.push(other.clone());
                    }
                }
            }
        }
        Ok(match error {
            Some(e) => Outcome::CoqError(e),
            None => Outcome::Ok(answers),
        })
    }

    /// Add and execute one sentence; on success the tip moves to it.
    fn add_exec_raw(&mut self, text: &str) -> Result<Result<i64, String>, BackendError> {
        let added = match self.send(&format!("(Add () {})", quote(text)))? {
            Outcome::CoqError(e) => return Ok(Err(e)),
            Outcome::Ok(answers) => answers
                .iter()
                .filter_map(|a| a.find("Added"))
                .filter_map(|items| items.get(1).and_then(Sexp::atom).and_then(|s| s.parse::<i64>().ok()))
                .next_back(),
        };
        let Some(sid) = added else {
            return Ok(Err(format!("nothing added for: {text}")));
        };
        match self.send(&format!("(Exec {sid})"))? {
            Outcome::Ok(_) => {
                self.tip = sid;
                Ok(Ok(sid))
            }
            Outcome::CoqError(e) => {
                self.cancel(sid)?;
                Ok(Err(e))
            }
        }
    }

    fn add_exec(&mut self, text: &str) -> Result<i64, String> {
        match self.add_exec_raw(text) {
            Ok(r) => r,
            Err(e) => Err(e.to_string()),
        }
    }

    fn cancel(&mut self, sid: i64) -> Result<(), BackendError> {
        self.send(&format!("(Cancel ({sid}))"))?;
        Ok(())
    }

    fn goal_strings(&mut self, sid: i64) -> Result<String, BackendError> {
        match self.send(&format!("(Query ((sid {sid}) (pp ((pp_format PpStr)))) Goals)"))? {
            Outcome::Ok(answers) => Ok(answers.iter().flat_map(Sexp::strings).collect::<Vec<_>>().join("\n\n")),
            Outcome::CoqError(e) => Err(BackendError::Process(e)),
        }
    }

    /// Goals at `sid` in both representations; leaves the tip at `sid`.
    fn goals(&mut self, sid: i64) -> Result<ProofState, BackendError> {
        let surface = parse_goal_text(&self.goal_strings(sid)?);
        let internal = match self.add_exec_raw("Set Printing All.")? {
            Ok(printing) => {
                let text = self.goal_strings(printing)?;
                self.cancel(printing)?;
                self.tip = sid;
                parse_goal_text(&text)
            }
            Err(_) => surface.clone(),
        };
        let goals = surface
            .into_iter()
            .zip(internal)
            .map(|((sh, sg), (ih, ig))| {
                let mut g = GoalState::new(sg, ig);
                if sh.len() == ih.len() {
                    g.hypotheses_surface = sh;
                    g.hypotheses_internal = ih;
                } else {
                    g.hypotheses_internal = sh.clone();
                    g.hypotheses_surface = sh;
                }
                g
            })
            .collect();
        Ok(ProofState::new(goals))
    }
}

impl ProverSession for SerapiSession {
    fn id(&self) -> &str {
        &self.id
    }

    fn theorem(&self) -> &str {
        &self.theorem
    }

    fn current_state(&self) -> &ProofState {
        &self.state
    }

    fn transcript(&self) -> &[String] {
        &self.transcript
    }

    fn compile_tactic(&mut self, tactic: &str, state: &ProofState) -> Result<CompileResult, BackendError> {
        if !state.equivalent(&self.state) {
            return Err(desync(state, &self.state));
        }
        if tactic.trim().is_empty() {
            return Ok(CompileResult::err("empty tactic"));
        }
        let base = self.tip;
        let text = format!("{}.", tactic.trim().trim_end_matches('.'));
        match self.add_exec_raw(&text)? {
            Err(e) => Ok(CompileResult::err(e)),
            Ok(sid) => {
                let next = self.goals(sid)?;
                self.cancel(sid)?;
                self.tip = base;
                Ok(CompileResult::ok(next))
            }
        }
    }

    fn apply_tactic(&mut self, tactic: &str) -> Result<ProofState, BackendError> {
        let text = format!("{}.", tactic.trim().trim_end_matches('.'));
        let sid = self.add_exec_raw(&text)?.map_err(BackendError::Tactic)?;
        self.state = self.goals(sid)?;
        self.transcript.push(tactic.trim().to_string());
        Ok(self.state.clone())
    }

    /// A fresh process brought to the same state by replay.
    fn fork(&self) -> Result<Box<dyn ProverSession>, BackendError> {
        let mut s =
            SerapiSession::spawn(&self.config, format!("{}-fork{}", self.id, self.tag), &self.theorem, &self.requires)?;
        s.state = s.goals(s.tip)?;
        for t in &self.transcript {
            s.apply_tactic(t)?;
        }
        Ok(Box::new(s))
    }
}
