use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Annotation, QualityRule, Session, SessionStatus};
use crate::error::{Error, Result};
use crate::seed::hash_hex;
use crate::tasks::{AssignmentPlan, Task, TaskView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreOptions {
    /// Give the batch of a rejected session to a new worker.
    pub requeue_rejected: bool,
    /// Write a snapshot after this many logged events (0 disables).
    pub snapshot_every: usize,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            requeue_rejected: true,
            snapshot_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    SessionOpened {
        session_id: String,
        worker_token: String,
        batch: usize,
        at: u64,
    },
    Annotated(Annotation),
    SessionRejected {
        session_id: String,
        reason: String,
        at: u64,
    },
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Snapshot {
    events: usize,
    sessions: Vec<Session>,
    annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NextTask {
    Task(TaskView),
    Done { done: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitOutcome {
    Stored,
    /// Exact repeat of an earlier submission; nothing new was written.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub tasks_total: usize,
    pub annotations_accepted: usize,
    pub sessions_active: usize,
    pub batches_total: usize,
    pub batches_open: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub accepted: Vec<String>,
    /// `(session id, reason)` for sessions rejected by this run.
    pub rejected: Vec<(String, String)>,
    /// Sessions rejected by earlier runs.
    pub previously_rejected: usize,
    /// Sessions still in progress, left unjudged.
    pub active: usize,
}

/// One exported annotation with the status of its session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    #[serde(flatten)]
    pub annotation: Annotation,
    pub status: SessionStatus,
}

/// In-memory state backed by an append-only JSON-lines event log.
///
/// Tasks and the assignment plan are fixed inputs; only sessions and
/// annotations are logged. Rejection is an event, so no record is ever
/// rewritten.
pub struct AnnotationStore {
    tasks: HashMap<String, Task>,
    plan: AssignmentPlan,
    classes: usize,
    options: StoreOptions,
    sessions: Vec<Session>,
    session_index: HashMap<String, usize>,
    workers: HashSet<String>,
    annotations: Vec<Annotation>,
    answered: HashMap<(String, String), usize>,
    events: usize,
    log: Option<(PathBuf, BufWriter<File>)>,
}

impl AnnotationStore {
    /// In-memory store without persistence.
    pub fn in_memory(
        tasks: Vec<Task>,
        plan: AssignmentPlan,
        options: StoreOptions,
    ) -> Result<Self> {
        Self::build(tasks, plan, options)
    }

    /// Opens (or creates) the log at `path` and replays it. A snapshot at
    /// `<path>.snapshot` is used to skip the events it already covers.
    pub fn open(
        path: &Path,
        tasks: Vec<Task>,
        plan: AssignmentPlan,
        options: StoreOptions,
    ) -> Result<Self> {
        let mut store = Self::build(tasks, plan, options)?;
        let snap_path = snapshot_path(path);
        let mut skip = 0;
        if snap_path.exists() {
            let snap: Snapshot = serde_json::from_reader(BufReader::new(open_file(&snap_path)?))
                .map_err(|e| Error::data(format!("{}: {e}", snap_path.display())))?;
            skip = snap.events;
            store.events = snap.events;
            for s in snap.sessions {
                store.insert_session(s);
            }
            for a in snap.annotations {
                store.insert_annotation(a);
            }
        }
        if path.exists() {
            let reader = BufReader::new(open_file(path)?);
            let mut n = 0;
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                n += 1;
                if n <= skip {
                    continue;
                }
                let event: Event = serde_json::from_str(&line)
                    .map_err(|e| Error::data(format!("{} event {n}: {e}", path.display())))?;
                store.apply(event);
                store.events += 1;
            }
            if n < skip {
                return Err(Error::data(format!(
                    "{} holds {n} events but its snapshot covers {skip}",
                    path.display()
                )));
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| Error::File {
                path: path.to_path_buf(),
                source,
            })?;
        store.log = Some((path.to_path_buf(), BufWriter::new(file)));
        Ok(store)
    }

    fn build(tasks: Vec<Task>, plan: AssignmentPlan, options: StoreOptions) -> Result<Self> {
        plan.verify(&tasks)?;
        let classes = tasks
            .iter()
            .flat_map(|t| t.label_options.iter().map(|o| o.value))
            .max()
            .unwrap_or(0);
        if classes < 1 {
            return Err(Error::invalid("tasks carry no class label options"));
        }
        Ok(Self {
            tasks: tasks.into_iter().map(|t| (t.task_id.clone(), t)).collect(),
            plan,
            classes,
            options,
            sessions: Vec::new(),
            session_index: HashMap::new(),
            workers: HashSet::new(),
            annotations: Vec::new(),
            answered: HashMap::new(),
            events: 0,
            log: None,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn plan(&self) -> &AssignmentPlan {
        &self.plan
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn task(&self, task_id: &str) -> Option<&Task> {
        self.tasks.get(task_id)
    }

    pub fn session(&self, session_id: &str) -> Option<&Session> {
        self.session_index
            .get(session_id)
            .map(|&i| &self.sessions[i])
    }

    fn insert_session(&mut self, s: Session) {
        self.workers.insert(s.worker_token.clone());
        self.session_index
            .insert(s.session_id.clone(), self.sessions.len());
        self.sessions.push(s);
    }

    fn insert_annotation(&mut self, a: Annotation) {
        self.answered.insert(
            (a.task_id.clone(), a.worker_token.clone()),
            self.annotations.len(),
        );
        self.annotations.push(a);
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::SessionOpened {
                session_id,
                worker_token,
                batch,
                at,
            } => self.insert_session(Session {
                session_id,
                worker_token,
                batch,
                cursor: 0,
                started_at: at,
                finished_at: None,
                status: SessionStatus::Active,
                rejection_reason: None,
            }),
            Event::Annotated(a) => {
                if let Some(&i) = self.session_index.get(&a.session_id) {
                    let batch_len = self.plan.batches[self.sessions[i].batch].len();
                    let s = &mut self.sessions[i];
                    s.cursor += 1;
                    if s.cursor == batch_len {
                        s.finished_at = Some(a.submitted_at);
                        s.status = SessionStatus::Complete;
                    }
                }
                self.insert_annotation(a);
            }
            Event::SessionRejected {
                session_id, reason, ..
            } => {
                if let Some(&i) = self.session_index.get(&session_id) {
                    self.sessions[i].status = SessionStatus::Rejected;
                    self.sessions[i].rejection_reason = Some(reason);
                }
            }
        }
    }

    /// Persists the event, then applies it.
    fn commit(&mut self, event: Event) -> Result<()> {
        if let Some((path, w)) = &mut self.log {
            let io = |source| Error::File {
                path: path.clone(),
                source,
            };
            serde_json::to_writer(&mut *w, &event)?;
            w.write_all(b"\n").map_err(io)?;
            w.flush().map_err(io)?;
        }
        self.apply(event);
        self.events += 1;
        if self.options.snapshot_every > 0
            && self.events.is_multiple_of(self.options.snapshot_every)
        {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Writes a snapshot next to the log (no-op for in-memory stores).
    pub fn snapshot(&self) -> Result<()> {
        let Some((path, _)) = &self.log else {
            return Ok(());
        };
        let snap = Snapshot {
            events: self.events,
            sessions: self.sessions.clone(),
            annotations: self.annotations.clone(),
        };
        let target = snapshot_path(path);
        let tmp = target.with_extension("snapshot.tmp");
        let io = |source| Error::File {
            path: tmp.clone(),
            source,
        };
        let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
        serde_json::to_writer(&mut w, &snap)?;
        w.flush().map_err(io)?;
        drop(w);
        fs::rename(&tmp, &target).map_err(io)?;
        Ok(())
    }

    fn batch_taken(&self) -> Vec<bool> {
        let mut taken = vec![false; self.plan.batches.len()];
        for s in &self.sessions {
            if s.status != SessionStatus::Rejected || !self.options.requeue_rejected {
                taken[s.batch] = true;
            }
        }
        taken
    }

    /// Starts a session on the lowest-index free batch.
    pub fn open_session(&mut self, worker_token: &str, now_ms: u64) -> Result<Session> {
        if worker_token.trim().is_empty() {
            return Err(Error::invalid("worker token is empty"));
        }
        if self.workers.contains(worker_token) {
            return Err(Error::Refused(format!(
                "worker {worker_token} already participated"
            )));
        }
        let batch = self
            .batch_taken()
            .iter()
            .position(|&t| !t)
            .ok_or_else(|| Error::Refused("experiment full".into()))?;
        let session_id = hash_hex(&[
            "session",
            worker_token,
            &batch.to_string(),
            &self.sessions.len().to_string(),
        ])[..16]
            .to_string();
        self.commit(Event::SessionOpened {
            session_id: session_id.clone(),
            worker_token: worker_token.to_string(),
            batch,
            at: now_ms,
        })?;
        Ok(self.session(&session_id).expect("just opened").clone())
    }

    pub fn batch_size(&self, session_id: &str) -> Result<usize> {
        let s = self.known_session(session_id)?;
        Ok(self.plan.batches[s.batch].len())
    }

    fn known_session(&self, session_id: &str) -> Result<&Session> {
        let s = self
            .session(session_id)
            .ok_or_else(|| Error::NotFound(format!("session {session_id}")))?;
        Ok(s)
    }

    /// The worker-facing view of the session's current task.
    pub fn next_task(&self, session_id: &str) -> Result<NextTask> {
        let s = self.known_session(session_id)?;
        match s.status {
            SessionStatus::Active => {}
            SessionStatus::Complete => return Ok(NextTask::Done { done: true }),
            SessionStatus::Rejected => {
                return Err(Error::Refused(format!("session {session_id} was rejected")))
            }
        }
        let batch = &self.plan.batches[s.batch];
        match batch.get(s.cursor) {
            Some(id) => Ok(NextTask::Task(self.tasks[id].view())),
            None => Ok(NextTask::Done { done: true }),
        }
    }

    pub fn submit(
        &mut self,
        session_id: &str,
        task_id: &str,
        label: usize,
        elapsed_ms: u64,
        now_ms: u64,
    ) -> Result<SubmitOutcome> {
        let s = self.known_session(session_id)?.clone();
        if let Some(&i) = self
            .answered
            .get(&(task_id.to_string(), s.worker_token.clone()))
        {
            let prev = &self.annotations[i];
            if prev.session_id == session_id && prev.label == label && prev.elapsed_ms == elapsed_ms
            {
                return Ok(SubmitOutcome::Duplicate);
            }
            return Err(Error::Refused(format!(
                "task {task_id} was already answered in this session"
            )));
        }
        if s.status != SessionStatus::Active {
            return Err(Error::Refused(format!(
                "session {session_id} is not active"
            )));
        }
        if label > self.classes {
            return Err(Error::invalid(format!(
                "label {label} outside 0..={}",
                self.classes
            )));
        }
        let expected = &self.plan.batches[s.batch][s.cursor];
        if expected != task_id {
            return Err(Error::Refused(format!(
                "task {task_id} is not the current task of session {session_id}"
            )));
        }
        self.commit(Event::Annotated(Annotation {
            task_id: task_id.to_string(),
            worker_token: s.worker_token,
            session_id: session_id.to_string(),
            label,
            elapsed_ms,
            submitted_at: now_ms,
        }))?;
        Ok(SubmitOutcome::Stored)
    }

    /// Judges every complete, not yet rejected session.
    pub fn filter_sessions(&mut self, rule: &QualityRule, now_ms: u64) -> Result<FilterReport> {
        rule.validate()?;
        let mut labels: HashMap<&str, Vec<usize>> = HashMap::new();
        for a in &self.annotations {
            labels
                .entry(a.session_id.as_str())
                .or_default()
                .push(a.label);
        }
        let mut report = FilterReport::default();
        let mut to_reject = Vec::new();
        for s in &self.sessions {
            match s.status {
                SessionStatus::Active => report.active += 1,
                SessionStatus::Rejected => report.previously_rejected += 1,
                SessionStatus::Complete => {
                    let l = labels
                        .get(s.session_id.as_str())
                        .map(Vec::as_slice)
                        .unwrap_or(&[]);
                    match rule.judge(s, l) {
                        Some(reason) => to_reject.push((s.session_id.clone(), reason)),
                        None => report.accepted.push(s.session_id.clone()),
                    }
                }
            }
        }
        for (session_id, reason) in to_reject {
            self.commit(Event::SessionRejected {
                session_id: session_id.clone(),
                reason: reason.clone(),
                at: now_ms,
            })?;
            report.rejected.push((session_id, reason));
        }
        Ok(report)
    }

    pub fn progress(&self) -> Progress {
        let accepted: HashSet<&str> = self
            .sessions
            .iter()
            .filter(|s| s.status == SessionStatus::Complete)
            .map(|s| s.session_id.as_str())
            .collect();
        Progress {
            tasks_total: self.tasks.len(),
            annotations_accepted: self
                .annotations
                .iter()
                .filter(|a| accepted.contains(a.session_id.as_str()))
                .count(),
            sessions_active: self
                .sessions
                .iter()
                .filter(|s| s.status == SessionStatus::Active)
                .count(),
            batches_total: self.plan.batches.len(),
            batches_open: self.batch_taken().iter().filter(|&&t| !t).count(),
        }
    }

    /// Annotations ordered by `(task_id, worker_token)`. With `accepted_only`,
    /// only annotations of complete, unrejected sessions are kept.
    pub fn export(&self, accepted_only: bool) -> Vec<ExportRecord> {
        let status: HashMap<&str, SessionStatus> = self
            .sessions
            .iter()
            .map(|s| (s.session_id.as_str(), s.status))
            .collect();
        let mut out: Vec<ExportRecord> = self
            .annotations
            .iter()
            .map(|a| ExportRecord {
                annotation: a.clone(),
                status: status[a.session_id.as_str()],
            })
            .filter(|r| !accepted_only || r.status == SessionStatus::Complete)
            .collect();
        out.sort_by(|a, b| {
            (&a.annotation.task_id, &a.annotation.worker_token)
                .cmp(&(&b.annotation.task_id, &b.annotation.worker_token))
        });
        out
    }

    /// Accepted labels grouped by task.
    pub fn accepted_labels(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for r in self.export(true) {
            out.entry(r.annotation.task_id)
                .or_default()
                .push(r.annotation.label);
        }
        out
    }
}

fn snapshot_path(log: &Path) -> PathBuf {
    let mut s = log.as_os_str().to_owned();
    s.push(".snapshot");
    PathBuf::from(s)
}

fn open_file(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_export(mut writer: impl Write, records: &[ExportRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_export(reader: impl BufRead) -> Result<Vec<ExportRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("annotation line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}
