//! Single-coordinator job scheduling over the curation DAG.
//!
//! The coordinator is a pure state machine driven by a logical clock in
//! milliseconds. Transport, workers and persistence live outside; every
//! state change is appended to a manifest from which [`replay`] rebuilds
//! the same [`Snapshot`].

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Standardize,
    Vad,
    SeparateStub,
    DiarizeStub,
    Normalize,
    SpeakerConcat,
    AsrA,
    AsrB,
    WerFilter,
    Punct,
    FeatureStub,
}

impl Stage {
    pub const ALL: [Stage; 11] = [
        Stage::Standardize,
        Stage::Vad,
        Stage::SeparateStub,
        Stage::DiarizeStub,
        Stage::Normalize,
        Stage::SpeakerConcat,
        Stage::AsrA,
        Stage::AsrB,
        Stage::WerFilter,
        Stage::Punct,
        Stage::FeatureStub,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Standardize => "standardize",
            Stage::Vad => "vad",
            Stage::SeparateStub => "separate_stub",
            Stage::DiarizeStub => "diarize_stub",
            Stage::Normalize => "normalize",
            Stage::SpeakerConcat => "speaker_concat",
            Stage::AsrA => "asr_a",
            Stage::AsrB => "asr_b",
            Stage::WerFilter => "wer_filter",
            Stage::Punct => "punct",
            Stage::FeatureStub => "feature_stub",
        }
    }

    /// Stages unlocked once this one is done.
    pub fn successors(self) -> &'static [Stage] {
        match self {
            Stage::Standardize => &[Stage::Vad],
            Stage::Vad => &[Stage::SeparateStub],
            Stage::SeparateStub => &[Stage::DiarizeStub],
            Stage::DiarizeStub => &[Stage::Normalize],
            Stage::Normalize => &[Stage::SpeakerConcat],
            Stage::SpeakerConcat => &[Stage::AsrA, Stage::AsrB],
            Stage::AsrA | Stage::AsrB => &[Stage::WerFilter],
            Stage::WerFilter => &[Stage::Punct],
            Stage::Punct => &[Stage::FeatureStub],
            Stage::FeatureStub => &[],
        }
    }

    /// Stages that must all be done before this one runs.
    pub fn predecessors(self) -> &'static [Stage] {
        match self {
            Stage::Standardize => &[],
            Stage::Vad => &[Stage::Standardize],
            Stage::SeparateStub => &[Stage::Vad],
            Stage::DiarizeStub => &[Stage::SeparateStub],
            Stage::Normalize => &[Stage::DiarizeStub],
            Stage::SpeakerConcat => &[Stage::Normalize],
            Stage::AsrA | Stage::AsrB => &[Stage::SpeakerConcat],
            Stage::WerFilter => &[Stage::AsrA, Stage::AsrB],
            Stage::Punct => &[Stage::WerFilter],
            Stage::FeatureStub => &[Stage::Punct],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = OrchestratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| OrchestratorError::UnknownStage(String::from(s)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OrchestratorError {
    #[error("unknown worker {0}")]
    UnknownWorker(String),
    #[error("worker {0} already holds a job")]
    WorkerBusy(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("job {0} already exists")]
    DuplicateJob(String),
    #[error("unknown stage {0}")]
    UnknownStage(String),
    #[error("manifest record {seq} for {job_id}: {message}")]
    InvalidTransition { seq: u64, job_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub stage: Stage,
    pub entry_id: String,
    pub input_refs: Vec<String>,
    pub attempt: u32,
}

pub fn job_id(entry_id: &str, stage: Stage) -> String {
    format!("{entry_id}:{stage}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
    Requeued,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }

    fn is_queued(self) -> bool {
        matches!(self, JobStatus::Pending | JobStatus::Requeued)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerInfo {
    pub worker_id: String,
    pub capabilities: BTreeSet<Stage>,
    pub last_heartbeat: u64,
    pub assigned: Option<String>,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub seq: u64,
    pub job_id: String,
    pub stage: Stage,
    pub entry_id: String,
    pub status: JobStatus,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub input_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Logical time in milliseconds.
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobState {
    pub spec: JobSpec,
    pub status: JobStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept: Option<bool>,
}

/// Job-level state reconstructible from the manifest alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub jobs: BTreeMap<String, JobState>,
    pub queue: Vec<String>,
    pub records: u64,
}

/// Outcome of delivering a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ack {
    Recorded,
    /// The job was already terminal; the result is dropped.
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub done: usize,
    pub failed: usize,
    pub open: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatorConfig {
    pub max_attempts: u32,
    pub timeout_ms: u64,
    /// Materialize successors when a job completes.
    pub follow_dag: bool,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            follow_dag: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Coordinator {
    config: CoordinatorConfig,
    jobs: BTreeMap<String, JobState>,
    queue: VecDeque<String>,
    workers: BTreeMap<String, WorkerInfo>,
    manifest: Vec<ManifestRecord>,
}

impl Coordinator {
    pub fn new(config: CoordinatorConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.config
    }

    pub fn manifest(&self) -> &[ManifestRecord] {
        &self.manifest
    }

    pub fn job(&self, job_id: &str) -> Option<&JobState> {
        self.jobs.get(job_id)
    }

    pub fn jobs(&self) -> impl Iterator<Item = &JobState> {
        self.jobs.values()
    }

    pub fn worker(&self, worker_id: &str) -> Option<&WorkerInfo> {
        self.workers.get(worker_id)
    }

    pub fn workers(&self) -> impl Iterator<Item = &WorkerInfo> {
        self.workers.values()
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    fn append(&mut self, job_id: &str, status: JobStatus, at: u64, extra: impl FnOnce(&mut ManifestRecord)) {
        let job = &self.jobs[job_id];
        let mut rec = ManifestRecord {
            seq: self.manifest.len() as u64,
            job_id: String::from(job_id),
            stage: job.spec.stage,
            entry_id: job.spec.entry_id.clone(),
            status,
            attempt: job.spec.attempt,
            worker_id: None,
            payload_ref: None,
            input_refs: Vec::new(),
            kept: None,
            error: None,
            at,
        };
        extra(&mut rec);
        self.manifest.push(rec);
    }

    /// Creates a pending job for `stage` of `entry_id`.
    pub fn enqueue(
        &mut self,
        stage: Stage,
        entry_id: &str,
        input_refs: Vec<String>,
        now: u64,
    ) -> Result<String, OrchestratorError> {
        let id = job_id(entry_id, stage);
        if self.jobs.contains_key(&id) {
            return Err(OrchestratorError::DuplicateJob(id));
        }
        let spec = JobSpec {
            job_id: id.clone(),
            stage,
            entry_id: String::from(entry_id),
            input_refs,
            attempt: 1,
        };
        let refs = spec.input_refs.clone();
        self.jobs.insert(
            id.clone(),
            JobState {
                spec,
                status: JobStatus::Pending,
                worker_id: None,
                payload_ref: None,
                kept: None,
            },
        );
        self.queue.push_back(id.clone());
        self.append(&id, JobStatus::Pending, now, |r| r.input_refs = refs);
        Ok(id)
    }

    /// First-stage job for a source entry.
    pub fn submit(&mut self, entry_id: &str, source_ref: &str, now: u64) -> Result<String, OrchestratorError> {
        self.enqueue(Stage::Standardize, entry_id, alloc::vec![String::from(source_ref)], now)
    }

    pub fn register(&mut self, worker_id: &str, capabilities: BTreeSet<Stage>, now: u64) {
        let w = self
            .workers
            .entry(String::from(worker_id))
            .or_insert_with(|| WorkerInfo {
                worker_id: String::from(worker_id),
                capabilities: BTreeSet::new(),
                last_heartbeat: now,
                assigned: None,
            });
        w.capabilities = capabilities;
        w.last_heartbeat = w.last_heartbeat.max(now);
    }

    pub fn heartbeat(&mut self, worker_id: &str, now: u64) -> Result<(), OrchestratorError> {
        let w = self
            .workers
            .get_mut(worker_id)
            .ok_or_else(|| OrchestratorError::UnknownWorker(String::from(worker_id)))?;
        w.last_heartbeat = w.last_heartbeat.max(now);
        Ok(())
    }

    /// Hands the oldest queued job the worker can run to it.
    pub fn assign(&mut self, worker_id: &str, now: u64) -> Result<Option<JobSpec>, OrchestratorError> {
        let worker = self
            .workers
            .get(worker_id)
            .ok_or_else(|| OrchestratorError::UnknownWorker(String::from(worker_id)))?;
        if worker.assigned.is_some() {
            return Err(OrchestratorError::WorkerBusy(String::from(worker_id)));
        }
        let jobs = &self.jobs;
        let Some(pos) = self
            .queue
            .iter()
            .position(|id| worker.capabilities.contains(&jobs[id].spec.stage))
        else {
            return Ok(None);
        };
        let id = self.queue.remove(pos).expect("position is in range");
        let job = self.jobs.get_mut(&id).expect("queued jobs exist");
        job.status = JobStatus::Running;
        job.worker_id = Some(String::from(worker_id));
        let spec = job.spec.clone();
        let w = self.workers.get_mut(worker_id).expect("checked above");
        w.assigned = Some(id.clone());
        w.last_heartbeat = w.last_heartbeat.max(now);
        self.append(&id, JobStatus::Running, now, |r| {
            r.worker_id = Some(String::from(worker_id))
        });
        Ok(Some(spec))
    }

    fn release(&mut self, worker_id: Option<&str>, job_id: &str) {
        if let Some(w) = worker_id.and_then(|w| self.workers.get_mut(w)) {
            if w.assigned.as_deref() == Some(job_id) {
                w.assigned = None;
            }
        }
    }

    /// Marks the job done on its first result; later results are dropped.
    pub fn record_result(
        &mut self,
        job_id: &str,
        worker_id: Option<&str>,
        payload_ref: &str,
        kept: Option<bool>,
        now: u64,
    ) -> Result<Ack, OrchestratorError> {
        let status = self
            .jobs
            .get(job_id)
            .ok_or_else(|| OrchestratorError::UnknownJob(String::from(job_id)))?
            .status;
        self.release(worker_id, job_id);
        if status.is_terminal() {
            return Ok(Ack::Discarded);
        }
        if status.is_queued() {
            self.queue.retain(|id| id != job_id);
        }
        // A stale holder other than the reporter keeps its slot until it
        // reports too; that second result is discarded.
        let job = self.jobs.get_mut(job_id).expect("checked above");
        let holder = job.worker_id.take();
        let recorded_worker = worker_id.map(String::from).or(holder);
        job.status = JobStatus::Done;
        job.payload_ref = Some(String::from(payload_ref));
        job.kept = kept;
        job.worker_id = recorded_worker.clone();
        let stage = job.spec.stage;
        let entry = job.spec.entry_id.clone();
        self.append(job_id, JobStatus::Done, now, |r| {
            r.worker_id = recorded_worker;
            r.payload_ref = Some(String::from(payload_ref));
            r.kept = kept;
        });
        if self.config.follow_dag && kept != Some(false) {
            self.spawn_successors(stage, &entry, now)?;
        }
        Ok(Ack::Recorded)
    }

    fn spawn_successors(&mut self, stage: Stage, entry: &str, now: u64) -> Result<(), OrchestratorError> {
        for &next in stage.successors() {
            let id = job_id(entry, next);
            if self.jobs.contains_key(&id) {
                continue;
            }
            let mut refs = Vec::new();
            let mut ready = true;
            for &pred in next.predecessors() {
                match self.jobs.get(&job_id(entry, pred)) {
                    Some(j) if j.status == JobStatus::Done => refs.extend(j.payload_ref.clone()),
                    _ => ready = false,
                }
            }
            if ready {
                self.enqueue(next, entry, refs, now)?;
            }
        }
        Ok(())
    }

    /// Requeues or fails the job after a reported error or lost worker.
    fn retry(&mut self, job_id: &str, now: u64, error: Option<String>) {
        let max = self.config.max_attempts;
        let job = self.jobs.get_mut(job_id).expect("caller checked");
        let holder = job.worker_id.take();
        if job.spec.attempt >= max {
            job.status = JobStatus::Failed;
            self.append(job_id, JobStatus::Failed, now, |r| {
                r.worker_id = holder;
                r.error = error;
            });
        } else {
            job.spec.attempt += 1;
            job.status = JobStatus::Requeued;
            self.queue.push_back(String::from(job_id));
            self.append(job_id, JobStatus::Requeued, now, |r| {
                r.worker_id = holder;
                r.error = error;
            });
        }
    }

    /// A worker failed its job.
    pub fn report_error(
        &mut self,
        job_id: &str,
        worker_id: &str,
        message: &str,
        now: u64,
    ) -> Result<Ack, OrchestratorError> {
        let job = self
            .jobs
            .get(job_id)
            .ok_or_else(|| OrchestratorError::UnknownJob(String::from(job_id)))?;
        let holds = job.status == JobStatus::Running && job.worker_id.as_deref() == Some(worker_id);
        self.release(Some(worker_id), job_id);
        if !holds {
            return Ok(Ack::Discarded);
        }
        self.retry(job_id, now, Some(String::from(message)));
        Ok(Ack::Recorded)
    }

    /// Drops workers silent for longer than the timeout and requeues their
    /// jobs. Returns the affected job ids.
    pub fn expire(&mut self, now: u64) -> Vec<String> {
        let timeout = self.config.timeout_ms;
        let dead: Vec<String> = self
            .workers
            .values()
            .filter(|w| now.saturating_sub(w.last_heartbeat) > timeout)
            .map(|w| w.worker_id.clone())
            .collect();
        let mut affected = Vec::new();
        for id in dead {
            let w = self.workers.remove(&id).expect("collected above");
            if let Some(job_id) = w.assigned {
                let job = &self.jobs[&job_id];
                if job.status == JobStatus::Running && job.worker_id.as_deref() == Some(id.as_str()) {
                    self.retry(&job_id, now, Some(format!("worker {id} timed out")));
                    affected.push(job_id);
                }
            }
        }
        affected
    }

    /// True when no job is queued or running.
    pub fn is_drained(&self) -> bool {
        self.jobs.values().all(|j| j.status.is_terminal())
    }

    pub fn summary(&self) -> Summary {
        let mut s = Summary::default();
        for j in self.jobs.values() {
            match j.status {
                JobStatus::Done => s.done += 1,
                JobStatus::Failed => s.failed += 1,
                _ => s.open += 1,
            }
            if j.spec.stage == Stage::WerFilter && j.status == JobStatus::Done {
                match j.kept {
                    Some(false) => s.dropped += 1,
                    _ => s.kept += 1,
                }
            }
        }
        s
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            jobs: self.jobs.clone(),
            queue: self.queue.iter().cloned().collect(),
            records: self.manifest.len() as u64,
        }
    }
}

/// Rebuilds job state from manifest records, checking every transition.
pub fn replay(records: &[ManifestRecord]) -> Result<Snapshot, OrchestratorError> {
    let mut jobs: BTreeMap<String, JobState> = BTreeMap::new();
    let mut queue: VecDeque<String> = VecDeque::new();
    for (i, rec) in records.iter().enumerate() {
        let bad = |message: &str| OrchestratorError::InvalidTransition {
            seq: rec.seq,
            job_id: rec.job_id.clone(),
            message: String::from(message),
        };
        if rec.seq != i as u64 {
            return Err(bad("sequence gap"));
        }
        if rec.status == JobStatus::Pending {
            if jobs.contains_key(&rec.job_id) {
                return Err(bad("job created twice"));
            }
            jobs.insert(
                rec.job_id.clone(),
                JobState {
                    spec: JobSpec {
                        job_id: rec.job_id.clone(),
                        stage: rec.stage,
                        entry_id: rec.entry_id.clone(),
                        input_refs: rec.input_refs.clone(),
                        attempt: rec.attempt,
                    },
                    status: JobStatus::Pending,
                    worker_id: None,
                    payload_ref: None,
                    kept: None,
                },
            );
            queue.push_back(rec.job_id.clone());
            continue;
        }
        let job = jobs.get_mut(&rec.job_id).ok_or_else(|| bad("record before creation"))?;
        if job.status.is_terminal() {
            return Err(bad("record after terminal status"));
        }
        match rec.status {
            JobStatus::Pending => unreachable!("handled above"),
            JobStatus::Running => {
                if !job.status.is_queued() {
                    return Err(bad("assigned while not queued"));
                }
                queue.retain(|id| id != &rec.job_id);
                job.worker_id = rec.worker_id.clone();
            }
            JobStatus::Done => {
                if job.status.is_queued() {
                    queue.retain(|id| id != &rec.job_id);
                }
                job.worker_id = rec.worker_id.clone();
                job.payload_ref = rec.payload_ref.clone();
                job.kept = rec.kept;
            }
            JobStatus::Requeued => {
                if job.status != JobStatus::Running {
                    return Err(bad("requeued while not running"));
                }
                job.worker_id = None;
                queue.push_back(rec.job_id.clone());
            }
            JobStatus::Failed => {
                if job.status != JobStatus::Running {
                    return Err(bad("failed while not running"));
                }
                job.worker_id = None;
            }
        }
        job.status = rec.status;
        job.spec.attempt = rec.attempt;
    }
    Ok(Snapshot {
        jobs,
        queue: queue.into_iter().collect(),
        records: records.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> BTreeSet<Stage> {
        Stage::ALL.into_iter().collect()
    }

    #[test]
    fn empty_queue_assigns_nothing() {
        let mut c = Coordinator::default();
        c.register("w", all(), 0);
        assert_eq!(c.assign("w", 0).unwrap(), None);
        assert_eq!(c.assign("x", 0), Err(OrchestratorError::UnknownWorker("x".into())));
    }

    #[test]
    fn fifo_and_capabilities() {
        let mut c = Coordinator::default();
        c.submit("a", "a.wav", 0).unwrap();
        c.submit("b", "b.wav", 0).unwrap();
        c.enqueue(Stage::Punct, "z", Vec::new(), 0).unwrap();
        c.register("p", [Stage::Punct].into_iter().collect(), 0);
        c.register("w", all(), 0);
        assert_eq!(c.assign("p", 1).unwrap().unwrap().job_id, "z:punct");
        assert_eq!(c.assign("w", 1).unwrap().unwrap().job_id, "a:standardize");
        assert_eq!(c.assign("w", 1), Err(OrchestratorError::WorkerBusy("w".into())));
    }

    #[test]
    fn dag_edges() {
        let mut c = Coordinator::default();
        c.register("w", all(), 0);
        c.submit("x", "x.wav", 0).unwrap();
        let mut t = 0;
        let mut order = Vec::new();
        while let Some(job) = c.assign("w", t).unwrap() {
            t += 1;
            order.push(job.stage);
            c.record_result(&job.job_id, Some("w"), &format!("{}.out", job.job_id), None, t)
                .unwrap();
        }
        assert_eq!(order, Stage::ALL);
        assert_eq!(
            c.job("x:wer_filter").unwrap().spec.input_refs,
            ["x:asr_a.out", "x:asr_b.out"]
        );
        assert!(c.is_drained());
    }

    #[test]
    fn dropped_utterance_stops_downstream() {
        let mut c = Coordinator::default();
        c.enqueue(Stage::WerFilter, "x", Vec::new(), 0).unwrap();
        c.register("w", all(), 0);
        let j = c.assign("w", 0).unwrap().unwrap();
        c.record_result(&j.job_id, Some("w"), "x.qa", Some(false), 1).unwrap();
        assert!(c.job("x:punct").is_none());
        assert_eq!(c.summary().dropped, 1);
    }

    #[test]
    fn expiry_requeues_then_fails() {
        let mut c = Coordinator::default();
        c.enqueue(Stage::Vad, "x", Vec::new(), 0).unwrap();
        for attempt in 1..=3 {
            let t = attempt as u64 * 100_000;
            c.register("w", all(), t);
            assert_eq!(c.assign("w", t).unwrap().unwrap().attempt, attempt);
            assert!(c.expire(t + 30_000).is_empty());
            assert_eq!(c.expire(t + 30_001), ["x:vad"]);
        }
        assert_eq!(c.job("x:vad").unwrap().status, JobStatus::Failed);
        c.register("w", all(), 1_000_000);
        assert_eq!(c.assign("w", 1_000_000).unwrap(), None);
    }

    #[test]
    fn duplicate_results_are_discarded() {
        let mut c = Coordinator::default();
        c.enqueue(Stage::Vad, "x", Vec::new(), 0).unwrap();
        c.register("a", all(), 0);
        c.register("b", all(), 0);
        c.assign("a", 0).unwrap().unwrap();
        c.expire(40_000);
        c.register("a", all(), 40_000);
        c.heartbeat("b", 40_000).unwrap_err();
        c.register("b", all(), 40_000);
        assert_eq!(c.assign("b", 40_000).unwrap().unwrap().attempt, 2);
        assert_eq!(
            c.record_result("x:vad", Some("a"), "from-a", None, 41_000).unwrap(),
            Ack::Recorded
        );
        assert_eq!(
            c.record_result("x:vad", Some("b"), "from-b", None, 42_000).unwrap(),
            Ack::Discarded
        );
        assert_eq!(c.job("x:vad").unwrap().payload_ref.as_deref(), Some("from-a"));
        assert_eq!(c.worker("b").unwrap().assigned, None);
        let done = c.manifest().iter().filter(|r| r.status == JobStatus::Done).count();
        assert_eq!(done, 1);
        assert_eq!(replay(c.manifest()).unwrap(), c.snapshot());
        assert_eq!(
            c.record_result("nope", None, "", None, 0),
            Err(OrchestratorError::UnknownJob("nope".into()))
        );
    }

    #[test]
    fn replay_rejects_bad_transitions() {
        let mut c = Coordinator::default();
        c.enqueue(Stage::Vad, "x", Vec::new(), 0).unwrap();
        c.register("w", all(), 0);
        c.assign("w", 0).unwrap();
        c.record_result("x:vad", Some("w"), "p", None, 1).unwrap();
        let mut recs = c.manifest().to_vec();
        let mut dup = recs[2].clone();
        dup.seq = 3;
        recs.push(dup);
        assert!(matches!(
            replay(&recs),
            Err(OrchestratorError::InvalidTransition { seq: 3, .. })
        ));
    }
}
