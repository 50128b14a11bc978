//! Pipeline runtime: drives workers against one coordinator either in a
//! deterministic single-threaded loop or over TCP on localhost.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use dataforge_core::orchestrator::{
    Coordinator, CoordinatorConfig, JobSpec, Stage, Summary, DEFAULT_MAX_ATTEMPTS, DEFAULT_TIMEOUT_MS,
};

use crate::formats::{parse_json, parse_manifest, read_text, to_jsonl, write_text};
use crate::protocol::{self, Message};
use crate::server::handle;
use crate::stages::{StageContext, StageOutput, StageSettings};
use crate::{Error, DEFAULT_SEED};

/// Injected worker failure, keyed by the global assignment count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fault {
    /// The worker receiving assignment number `at_job` dies holding it.
    Kill { at_job: usize },
    /// The worker receiving assignment number `at_job` goes silent for
    /// `ticks` ticks, then delivers its result late.
    Stall { at_job: usize, ticks: u64 },
}

impl Fault {
    fn at_job(&self) -> usize {
        match *self {
            Fault::Kill { at_job } | Fault::Stall { at_job, .. } => at_job,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub workers: usize,
    /// Logical milliseconds per scheduler tick.
    pub tick_ms: u64,
    pub timeout_ms: u64,
    pub max_attempts: u32,
    pub faults: Vec<Fault>,
    pub stages: StageSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            workers: 3,
            tick_ms: 1_000,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            faults: Vec::new(),
            stages: StageSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn coordinator(&self) -> CoordinatorConfig {
        CoordinatorConfig {
            max_attempts: self.max_attempts,
            timeout_ms: self.timeout_ms,
            follow_dag: true,
        }
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Ok(parse_json(&read_text(path)?, &path.display().to_string())?)
    }
}

/// Runs one job on behalf of a worker.
pub trait JobRunner {
    fn run(&self, job: &JobSpec) -> Result<StageOutput, String>;
}

impl JobRunner for StageContext {
    fn run(&self, job: &JobSpec) -> Result<StageOutput, String> {
        self.execute(job).map_err(|e| e.to_string())
    }
}

/// Pass-through runner for scheduler tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoRunner;

impl JobRunner for EchoRunner {
    fn run(&self, job: &JobSpec) -> Result<StageOutput, String> {
        Ok(StageOutput {
            payload_ref: format!("echo/{}", job.job_id),
            kept: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub coordinator: Coordinator,
    /// Logical end time in milliseconds.
    pub elapsed_ms: u64,
    pub frames: usize,
    /// `(worker, job_id)` for each injected fault that fired.
    pub faults_fired: Vec<(String, String)>,
}

/// Sends one request through an in-memory framed transport.
fn exchange(coord: &mut Coordinator, msg: &Message, now: u64, frames: &mut usize) -> Result<Message, Error> {
    let request =
        protocol::read_message(&mut Cursor::new(protocol::encode(msg)))?.ok_or(protocol::ProtocolError::Truncated)?;
    let reply = handle(coord, request, now);
    *frames += 2;
    Ok(
        protocol::read_message(&mut Cursor::new(protocol::encode(&reply)))?
            .ok_or(protocol::ProtocolError::Truncated)?,
    )
}

fn worker_name(i: usize) -> String {
    format!("w{i}")
}

struct SimWorker {
    id: String,
    alive: bool,
    silent_until: u64,
    /// Result held back by a stall.
    pending: Option<Message>,
}

/// Deterministic scheduler: one tick lets every live worker, in a seeded
/// random order, make at most one request cycle. Output depends only on
/// the seed, the runner and the faults.
pub fn run_deterministic(
    mut coord: Coordinator,
    runner: &dyn JobRunner,
    workers: usize,
    seed: u64,
    tick_ms: u64,
    faults: &[Fault],
) -> Result<RunOutcome, Error> {
    if workers == 0 {
        return Err(Error::Data("at least one worker is required".into()));
    }
    let capabilities: Vec<Stage> = Stage::ALL.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sim: Vec<SimWorker> = (0..workers)
        .map(|i| SimWorker {
            id: worker_name(i),
            alive: true,
            silent_until: 0,
            pending: None,
        })
        .collect();
    let mut frames = 0;
    let mut assigned = 0usize;
    let mut fired = Vec::new();
    let mut now = 0u64;
    let register = |id: &str| Message::Register {
        worker_id: id.to_owned(),
        capabilities: capabilities.clone(),
    };
    for w in &sim {
        exchange(&mut coord, &register(&w.id), now, &mut frames)?;
    }
    let max_ticks = 100_000u64;
    let mut tick = 0u64;
    while !(coord.is_drained() && sim.iter().all(|w| w.pending.is_none())) {
        if tick >= max_ticks {
            return Err(Error::Data("scheduler made no progress".into()));
        }
        let mut order: Vec<usize> = (0..workers).collect();
        order.shuffle(&mut rng);
        for i in order {
            let w = &mut sim[i];
            if !w.alive || tick < w.silent_until {
                continue;
            }
            if let Some(result) = w.pending.take() {
                exchange(&mut coord, &result, now, &mut frames)?;
            }
            let reply = exchange(
                &mut coord,
                &Message::AssignRequest {
                    worker_id: w.id.clone(),
                },
                now,
                &mut frames,
            )?;
            let job = match reply {
                Message::Assign { job: Some(job) } => job,
                Message::Error { .. } if coord.worker(&w.id).is_none() => {
                    // Expired while silent; join again.
                    exchange(&mut coord, &register(&w.id), now, &mut frames)?;
                    continue;
                }
                _ => continue,
            };
            assigned += 1;
            let fault = faults.iter().find(|f| f.at_job() == assigned);
            if let Some(Fault::Kill { .. }) = fault {
                w.alive = false;
                fired.push((w.id.clone(), job.job_id.clone()));
                continue;
            }
            let outcome = match runner.run(&job) {
                Ok(out) => Message::Result {
                    worker_id: w.id.clone(),
                    job_id: job.job_id.clone(),
                    payload_ref: out.payload_ref,
                    kept: out.kept,
                    discarded: false,
                },
                Err(message) => Message::Error {
                    worker_id: Some(w.id.clone()),
                    job_id: Some(job.job_id.clone()),
                    message,
                },
            };
            if let Some(Fault::Stall { ticks, .. }) = fault {
                w.silent_until = tick + ticks;
                w.pending = Some(outcome);
                fired.push((w.id.clone(), job.job_id.clone()));
                continue;
            }
            exchange(&mut coord, &outcome, now, &mut frames)?;
        }
        tick += 1;
        now += tick_ms;
        coord.expire(now);
        if sim.iter().all(|w| !w.alive) {
            return Err(Error::Data("every worker is dead".into()));
        }
    }
    Ok(RunOutcome {
        coordinator: coord,
        elapsed_ms: now,
        frames,
        faults_fired: fired,
    })
}

fn serve(
    stream: TcpStream,
    coord: Arc<Mutex<Coordinator>>,
    start: Instant,
    frames: Arc<AtomicUsize>,
) -> Result<(), Error> {
    let mut reader = stream.try_clone().map_err(|source| Error::Io {
        path: "tcp".into(),
        source,
    })?;
    let mut writer = stream;
    while let Some(msg) = protocol::read_message(&mut reader)? {
        let now = start.elapsed().as_millis() as u64;
        let reply = {
            let mut c = coord.lock().expect("coordinator lock");
            c.expire(now);
            handle(&mut c, msg, now)
        };
        protocol::write_message(&mut writer, &reply)?;
        frames.fetch_add(2, Ordering::Relaxed);
    }
    Ok(())
}

fn tcp_worker(
    addr: std::net::SocketAddr,
    id: String,
    runner: &(dyn JobRunner + Sync),
    assigned: &AtomicUsize,
    faults: &[Fault],
) -> Result<(), Error> {
    let io_err = |source| Error::Io {
        path: "tcp".into(),
        source,
    };
    let mut stream = TcpStream::connect(addr).map_err(io_err)?;
    let mut call = |msg: &Message| -> Result<Message, Error> {
        protocol::write_message(&mut stream, msg)?;
        Ok(protocol::read_message(&mut stream)?.ok_or(protocol::ProtocolError::Truncated)?)
    };
    let register = Message::Register {
        worker_id: id.clone(),
        capabilities: Stage::ALL.to_vec(),
    };
    call(&register)?;
    loop {
        match call(&Message::AssignRequest { worker_id: id.clone() })? {
            Message::Shutdown => return Ok(()),
            Message::Assign { job: Some(job) } => {
                let n = assigned.fetch_add(1, Ordering::SeqCst) + 1;
                if faults
                    .iter()
                    .any(|f| matches!(f, Fault::Kill { at_job } if *at_job == n))
                {
                    return Ok(());
                }
                let reply = match runner.run(&job) {
                    Ok(out) => Message::Result {
                        worker_id: id.clone(),
                        job_id: job.job_id,
                        payload_ref: out.payload_ref,
                        kept: out.kept,
                        discarded: false,
                    },
                    Err(message) => Message::Error {
                        worker_id: Some(id.clone()),
                        job_id: Some(job.job_id),
                        message,
                    },
                };
                call(&reply)?;
            }
            Message::Error { .. } => {
                call(&register)?;
            }
            _ => thread::sleep(Duration::from_millis(2)),
        }
    }
}

/// Threaded mode: a TCP coordinator on localhost with one thread per
/// worker. Timing is real, so manifests are not reproducible.
pub fn run_threaded(
    coord: Coordinator,
    runner: &(dyn JobRunner + Sync),
    workers: usize,
    faults: &[Fault],
) -> Result<RunOutcome, Error> {
    let io_err = |source| Error::Io {
        path: "127.0.0.1".into(),
        source,
    };
    let listener = TcpListener::bind("127.0.0.1:0").map_err(io_err)?;
    let addr = listener.local_addr().map_err(io_err)?;
    let shared = Arc::new(Mutex::new(coord));
    let frames = Arc::new(AtomicUsize::new(0));
    let assigned = AtomicUsize::new(0);
    let start = Instant::now();
    thread::scope(|scope| -> Result<(), Error> {
        let acceptor = {
            let shared = Arc::clone(&shared);
            let frames = Arc::clone(&frames);
            scope.spawn(move || -> Result<(), Error> {
                let mut conns = Vec::new();
                for _ in 0..workers {
                    let (stream, _) = listener.accept().map_err(io_err)?;
                    let (c, f) = (Arc::clone(&shared), Arc::clone(&frames));
                    conns.push(thread::spawn(move || serve(stream, c, start, f)));
                }
                for c in conns {
                    c.join().expect("connection thread")?;
                }
                Ok(())
            })
        };
        let handles: Vec<_> = (0..workers)
            .map(|i| {
                let assigned = &assigned;
                scope.spawn(move || tcp_worker(addr, worker_name(i), runner, assigned, faults))
            })
            .collect();
        for h in handles {
            h.join().expect("worker thread")?;
        }
        acceptor.join().expect("acceptor thread")
    })?;
    let coordinator = Arc::try_unwrap(shared)
        .expect("threads joined")
        .into_inner()
        .expect("coordinator lock");
    Ok(RunOutcome {
        coordinator,
        elapsed_ms: start.elapsed().as_millis() as u64,
        frames: frames.load(Ordering::Relaxed),
        faults_fired: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub summary: Summary,
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
    pub failed_jobs: Vec<String>,
}

fn report(coord: &Coordinator) -> PipelineReport {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut failed_jobs = Vec::new();
    for j in coord.jobs() {
        if j.spec.stage == Stage::WerFilter && j.status == dataforge_core::orchestrator::JobStatus::Done {
            match j.kept {
                Some(false) => dropped.push(j.spec.entry_id.clone()),
                _ => kept.push(j.spec.entry_id.clone()),
            }
        }
        if j.status == dataforge_core::orchestrator::JobStatus::Failed {
            failed_jobs.push(j.spec.job_id.clone());
        }
    }
    PipelineReport {
        summary: coord.summary(),
        kept,
        dropped,
        failed_jobs,
    }
}

/// Runs every manifest entry through the DAG and writes `manifest.jsonl`
/// and `summary.json` into `out_dir`.
pub fn run_pipeline(
    manifest: &Path,
    config: &PipelineConfig,
    out_dir: &Path,
    threaded: bool,
) -> Result<PipelineReport, Error> {
    let entries = parse_manifest(&read_text(manifest)?, &manifest.display().to_string())?;
    let mut coord = Coordinator::new(config.coordinator());
    for e in &entries {
        coord.submit(&e.entry_id, &e.audio, 0)?;
    }
    let ctx = StageContext {
        manifest_dir: manifest.parent().unwrap_or(Path::new(".")).to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        entries: entries
            .into_iter()
            .map(|e| (e.entry_id.clone(), e))
            .collect::<BTreeMap<_, _>>(),
        settings: config.stages.clone(),
    };
    let outcome = if threaded {
        run_threaded(coord, &ctx, config.workers, &config.faults)?
    } else {
        run_deterministic(coord, &ctx, config.workers, config.seed, config.tick_ms, &config.faults)?
    };
    let coord = outcome.coordinator;
    write_text(&out_dir.join("manifest.jsonl"), &to_jsonl(coord.manifest()))?;
    let rep = report(&coord);
    let mut summary = serde_json::to_string_pretty(&rep).expect("report serializes");
    summary.push('\n');
    write_text(&out_dir.join("summary.json"), &summary)?;
    Ok(rep)
}
