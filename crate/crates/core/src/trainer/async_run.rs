//! Asynchronous training: `K` actor threads, one model learner thread and
//! the policy learner on the calling thread.
//!
//! Actors send transitions through a bounded queue (a full queue blocks
//! them) and act with the latest published policy snapshot. The policy
//! learner is the only writer of the replay buffer; the model learner
//! samples from it concurrently and publishes versioned snapshots that the
//! policy learner reloads at its checkpoint events. Both learners are paced
//! at the configured updates per frame.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam::channel::{
    bounded, unbounded, Receiver, RecvTimeoutError, SendTimeoutError, Sender,
};
use rand::Rng as _;

use super::{
    check_model_loss, eval_row, initial_agent, initial_models, metrics_path, random_action,
    save_checkpoint, write_diagnostic, Collector, Learner, RunArtifacts, TrainConfig,
    STREAM_COLLECT, STREAM_ENV, STREAM_MODEL_BATCH,
};
use crate::agent::PolicyNet;
use crate::env::{make_env, Environment, Transition};
use crate::error::{EnvError, TrainError};
use crate::metrics::{write_csv_file, MetricsRow};
use crate::numerics::stream;
use crate::replay::ReplayBuffer;
use crate::world_model::ModelSnapshot;

const POLL: Duration = Duration::from_millis(2);

/// Builds the environment of actor `k` from its seed.
pub type EnvFactory<'a> = dyn Fn(usize, u64) -> Result<Box<dyn Environment>, EnvError> + Sync + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AsyncOptions {
    pub actors: usize,
    /// Actors collect only the frames the policy learner has caught up with.
    pub gated: bool,
    pub queue_capacity: usize,
}

impl AsyncOptions {
    pub fn from_config(config: &TrainConfig) -> Self {
        Self {
            actors: config.actors,
            gated: config.gated,
            queue_capacity: 1024,
        }
    }
}

/// A run that stopped early; `partial` holds everything recorded so far.
#[derive(Debug)]
pub struct RunFailure {
    pub error: TrainError,
    pub partial: Box<RunArtifacts>,
}

impl From<RunFailure> for TrainError {
    fn from(f: RunFailure) -> Self {
        f.error
    }
}

struct Envelope {
    actor: usize,
    transition: Transition,
    checksum: u64,
}

/// FNV-1a over the bit patterns of every field.
pub(crate) fn transition_checksum(t: &Transition) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut mix = |x: u64| {
        h ^= x;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for v in t.state.iter().chain(&t.action).chain(&t.next_state) {
        mix(v.to_bits());
    }
    mix(t.reward.to_bits());
    mix(t.done as u64);
    h
}

struct PolicySlot {
    version: u64,
    net: PolicyNet,
}

struct Shared {
    stop: AtomicBool,
    failure: Mutex<Option<TrainError>>,
    reserved: AtomicU64,
    ingested: AtomicU64,
    actor_frames: Vec<AtomicU64>,
    policy: RwLock<Arc<PolicySlot>>,
    model: Mutex<Option<Arc<ModelSnapshot>>>,
    model_loss: Mutex<(f64, u64)>,
    buffer: RwLock<ReplayBuffer>,
}

impl Shared {
    fn fail(&self, error: TrainError) {
        let mut slot = self.failure.lock().unwrap();
        if slot.is_none() {
            *slot = Some(error);
        }
        self.stop.store(true, Ordering::SeqCst);
    }

    fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".into())
}

/// Completed collection cycles after warmup.
fn cycles(config: &TrainConfig, frames: u64) -> u64 {
    frames.saturating_sub(config.warmup_frames) / config.frames_per_cycle as u64
}

/// Asynchronous run with the standard environments.
pub fn run_async(
    config: &TrainConfig,
    options: AsyncOptions,
    out: Option<&Path>,
) -> Result<RunArtifacts, RunFailure> {
    let name = config.env.clone();
    run_async_with(config, options, out, &move |_, seed| make_env(&name, seed))
}

/// Asynchronous run with environments from `factory`.
///
/// Metrics rows carry wall-clock seconds since the start. Any worker error
/// or panic stops every thread and returns the partial artifacts.
pub fn run_async_with(
    config: &TrainConfig,
    options: AsyncOptions,
    out: Option<&Path>,
    factory: &EnvFactory<'_>,
) -> Result<RunArtifacts, RunFailure> {
    let probe = factory(0, 0).map(|e| (e.state_dim(), e.action_dim()));
    let agent_dims = probe.map_err(TrainError::from).and_then(|d| {
        config.validate()?;
        Ok(d)
    });
    let (sd, ad) = match agent_dims {
        Ok(d) => d,
        Err(error) => {
            let agent = initial_agent(config, 1, 1);
            return Err(RunFailure {
                error,
                partial: Box::new(empty_artifacts(agent, options.actors)),
            });
        }
    };
    assert!(options.actors >= 1 && options.queue_capacity >= 1);

    let agent = initial_agent(config, sd, ad);
    let uses_model = config.uses_model();
    let shared = Shared {
        stop: AtomicBool::new(false),
        failure: Mutex::new(None),
        reserved: AtomicU64::new(0),
        ingested: AtomicU64::new(0),
        actor_frames: (0..options.actors).map(|_| AtomicU64::new(0)).collect(),
        policy: RwLock::new(Arc::new(PolicySlot {
            version: 0,
            net: agent.policy.clone(),
        })),
        model: Mutex::new(None),
        model_loss: Mutex::new((0.0, 0)),
        buffer: RwLock::new(ReplayBuffer::new(config.buffer_capacity)),
    };
    let (tx, rx) = bounded::<Envelope>(options.queue_capacity);
    let (permit_tx, permit_rx) = unbounded::<()>();
    let start = Instant::now();

    let mut learner = match Learner::new(config, agent) {
        Ok(l) => l,
        Err(error) => {
            let agent = initial_agent(config, sd, ad);
            return Err(RunFailure {
                error,
                partial: Box::new(empty_artifacts(agent, options.actors)),
            });
        }
    };
    let mut rows: Vec<MetricsRow> = Vec::new();
    let mut checksum_failures = 0u64;

    let model_result = thread::scope(|scope| {
        for k in 0..options.actors {
            let tx = tx.clone();
            let permits = options.gated.then(|| permit_rx.clone());
            let shared = &shared;
            scope.spawn(move || {
                let result = catch_unwind(AssertUnwindSafe(|| {
                    actor_loop(k, config, shared, factory, &tx, permits)
                }));
                match result {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => shared.fail(TrainError::WorkerFailed {
                        worker: format!("actor-{k}"),
                        message: e.to_string(),
                    }),
                    Err(p) => shared.fail(TrainError::WorkerFailed {
                        worker: format!("actor-{k}"),
                        message: panic_message(p),
                    }),
                }
            });
        }
        drop(tx);
        drop(permit_rx);

        let model_handle = uses_model.then(|| {
            let shared = &shared;
            scope.spawn(move || {
                let result = catch_unwind(AssertUnwindSafe(|| model_loop(config, shared, sd, ad)));
                match result {
                    Ok(Ok(done)) => Some(done),
                    Ok(Err(e)) => {
                        shared.fail(TrainError::WorkerFailed {
                            worker: "model-learner".into(),
                            message: e.to_string(),
                        });
                        None
                    }
                    Err(p) => {
                        shared.fail(TrainError::WorkerFailed {
                            worker: "model-learner".into(),
                            message: panic_message(p),
                        });
                        None
                    }
                }
            })
        });

        let mut ctx = PolicyLearnerCtx {
            config,
            shared: &shared,
            rx: &rx,
            permits: options.gated.then_some(&permit_tx),
            out,
            start,
            checksum_failures: &mut checksum_failures,
        };
        if let Err(e) = ctx.run(&mut learner, &mut rows) {
            shared.fail(e);
        }
        shared.stop.store(true, Ordering::SeqCst);
        drop(permit_tx);
        model_handle.and_then(|h| h.join().ok().flatten())
    });

    let failure = shared.failure.lock().unwrap().take();
    let buffer = shared.buffer.into_inner().unwrap();
    let (model, model_updates) = match model_result {
        Some((snap, n)) => (Some(snap), n),
        None => (shared.model.into_inner().unwrap().map(|a| (*a).clone()), 0),
    };
    if let Some(o) = out {
        if let Err(e) = write_csv_file(&rows, &metrics_path(o)) {
            if failure.is_none() {
                return Err(RunFailure {
                    error: e,
                    partial: Box::new(empty_artifacts(learner.agent, options.actors)),
                });
            }
        }
        match &failure {
            Some(e) => write_diagnostic(o, e, &learner),
            None => {
                if let Err(e) = save_checkpoint(
                    &o.join("checkpoints").join("final"),
                    &learner.agent,
                    model.as_ref(),
                ) {
                    return Err(RunFailure {
                        error: e,
                        partial: Box::new(empty_artifacts(learner.agent, options.actors)),
                    });
                }
            }
        }
    }
    let artifacts = RunArtifacts {
        rows,
        skipped_targets: learner.skipped_targets(),
        usage_per_update: learner.usage,
        policy_updates: learner.updates,
        model_updates,
        frames: buffer.inserted(),
        actor_frames: shared
            .actor_frames
            .iter()
            .map(|a| a.load(Ordering::SeqCst))
            .collect(),
        checksum_failures,
        agent: learner.agent,
        model,
    };
    match failure {
        Some(error) => Err(RunFailure {
            error,
            partial: Box::new(artifacts),
        }),
        None => Ok(artifacts),
    }
}

fn empty_artifacts(agent: crate::agent::Agent, actors: usize) -> RunArtifacts {
    RunArtifacts {
        rows: Vec::new(),
        usage_per_update: Vec::new(),
        policy_updates: 0,
        model_updates: 0,
        frames: 0,
        actor_frames: vec![0; actors],
        checksum_failures: 0,
        skipped_targets: 0,
        agent,
        model: None,
    }
}

fn actor_loop(
    k: usize,
    config: &TrainConfig,
    shared: &Shared,
    factory: &EnvFactory<'_>,
    tx: &Sender<Envelope>,
    permits: Option<Receiver<()>>,
) -> Result<(), TrainError> {
    let env_seed: u64 = stream(config.seed, STREAM_ENV + 100 + k as u64).random();
    let mut collector = Collector::new(factory(k, env_seed)?);
    let mut rng = stream(config.seed, STREAM_COLLECT + 100 + k as u64);
    let mut policy = shared.policy.read().unwrap().clone();
    loop {
        if shared.stopped() {
            return Ok(());
        }
        if let Some(p) = &permits {
            match p.recv_timeout(POLL) {
                Ok(()) => {}
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return Ok(()),
            }
        }
        let n = shared.reserved.fetch_add(1, Ordering::SeqCst);
        if n >= config.total_frames {
            return Ok(());
        }
        let latest = shared.policy.read().unwrap().clone();
        if latest.version != policy.version {
            policy = latest;
        }
        let action = if n < config.warmup_frames {
            random_action(&mut rng, collector.action_dim())
        } else {
            policy.net.explore(
                collector.state(),
                config.epsilon,
                config.noise_scale,
                &mut rng,
            )?
        };
        let transition = collector.step(&action)?;
        let mut msg = Envelope {
            actor: k,
            checksum: transition_checksum(&transition),
            transition,
        };
        loop {
            match tx.send_timeout(msg, POLL) {
                Ok(()) => break,
                Err(SendTimeoutError::Timeout(m)) => {
                    if shared.stopped() {
                        return Ok(());
                    }
                    msg = m;
                }
                Err(SendTimeoutError::Disconnected(_)) => return Ok(()),
            }
        }
        shared.actor_frames[k].fetch_add(1, Ordering::SeqCst);
    }
}

fn model_loop(
    config: &TrainConfig,
    shared: &Shared,
    sd: usize,
    ad: usize,
) -> Result<(ModelSnapshot, u64), TrainError> {
    let mut models = initial_models(config, sd, ad);
    let mut rng = stream(config.seed, STREAM_MODEL_BATCH);
    let draw = |rng: &mut crate::numerics::Rng| {
        shared
            .buffer
            .read()
            .unwrap()
            .sample(rng, config.model_batch)
    };
    while shared.ingested.load(Ordering::SeqCst) < config.warmup_frames {
        if shared.stopped() {
            return Ok((models.snapshot(), 0));
        }
        thread::sleep(POLL);
    }
    let mut updates = 0u64;
    for _ in 0..config.model_pretrain_updates {
        if shared.stopped() {
            return Ok((models.snapshot(), updates));
        }
        let loss = models.train_step(draw, &mut rng)?;
        check_model_loss(&loss, 0)?;
        updates += 1;
    }
    *shared.model.lock().unwrap() = Some(Arc::new(models.snapshot()));
    let mut paced = 0u64;
    while !shared.stopped() {
        let allowed = cycles(config, shared.ingested.load(Ordering::SeqCst))
            * config.updates_per_cycle as u64;
        if paced >= allowed {
            thread::sleep(POLL);
            continue;
        }
        let loss = models.train_step(draw, &mut rng)?;
        check_model_loss(&loss, paced + 1)?;
        {
            let mut acc = shared.model_loss.lock().unwrap();
            acc.0 += loss.total();
            acc.1 += 1;
        }
        paced += 1;
        updates += 1;
        if paced.is_multiple_of(config.checkpoint_interval) {
            *shared.model.lock().unwrap() = Some(Arc::new(models.snapshot()));
        }
    }
    Ok((models.snapshot(), updates))
}

struct PolicyLearnerCtx<'a> {
    config: &'a TrainConfig,
    shared: &'a Shared,
    rx: &'a Receiver<Envelope>,
    permits: Option<&'a Sender<()>>,
    out: Option<&'a Path>,
    start: Instant,
    checksum_failures: &'a mut u64,
}

impl PolicyLearnerCtx<'_> {
    fn accept(&mut self, msg: Envelope) {
        if transition_checksum(&msg.transition) != msg.checksum {
            *self.checksum_failures += 1;
            return;
        }
        debug_assert!(msg.actor < self.shared.actor_frames.len());
        self.shared.buffer.write().unwrap().push(msg.transition);
        self.shared.ingested.fetch_add(1, Ordering::SeqCst);
    }

    fn drain(&mut self) {
        while let Ok(msg) = self.rx.try_recv() {
            self.accept(msg);
        }
    }

    /// Waits for at least one transition. Returns `false` once no more can arrive.
    fn wait(&mut self) -> bool {
        match self.rx.recv_timeout(POLL) {
            Ok(msg) => {
                self.accept(msg);
                self.drain();
                true
            }
            Err(RecvTimeoutError::Timeout) => true,
            Err(RecvTimeoutError::Disconnected) => false,
        }
    }

    fn release(&self, n: u64) {
        if let Some(p) = self.permits {
            for _ in 0..n {
                let _ = p.try_send(());
            }
        }
    }

    fn ingested(&self) -> u64 {
        self.shared.ingested.load(Ordering::SeqCst)
    }

    fn row(&self, learner: &mut Learner) -> Result<MetricsRow, TrainError> {
        let (sum, n) = std::mem::take(&mut *self.shared.model_loss.lock().unwrap());
        if n > 0 {
            learner.window.add_model_loss(sum / n as f64);
        }
        let mut row = eval_row(
            self.config,
            &learner.agent,
            learner.updates,
            self.ingested(),
            &mut learner.window,
        )?;
        row.wall_clock_s = Some(self.start.elapsed().as_secs_f64());
        Ok(row)
    }

    fn run(&mut self, learner: &mut Learner, rows: &mut Vec<MetricsRow>) -> Result<(), TrainError> {
        let config = self.config;
        let total = config.total_frames;
        let finished = |s: &Self| s.ingested() >= total;
        self.release(config.warmup_frames);
        while self.ingested() < config.warmup_frames {
            if self.shared.stopped() || !self.wait() {
                return Ok(());
            }
        }
        if config.uses_model() {
            loop {
                if let Some(snap) = self.shared.model.lock().unwrap().as_ref() {
                    learner.snapshot = Some((**snap).clone());
                    break;
                }
                if self.shared.stopped() {
                    return Ok(());
                }
                self.drain();
                thread::sleep(POLL);
            }
        }
        rows.push(self.row(learner)?);
        self.release(config.frames_per_cycle as u64);

        let upc = config.updates_per_cycle as u64;
        let total_updates = cycles(config, total) * upc;
        loop {
            if self.shared.stopped() {
                return Ok(());
            }
            self.drain();
            let allowed = cycles(config, self.ingested()) * upc;
            if learner.updates < allowed {
                let buffer = self.shared.buffer.read().unwrap();
                learner.update(&buffer)?;
                drop(buffer);
                if learner.updates.is_multiple_of(upc) {
                    self.release(config.frames_per_cycle as u64);
                }
                if learner.updates.is_multiple_of(config.checkpoint_interval) {
                    learner.agent.refresh_targets();
                    if let Some(snap) = self.shared.model.lock().unwrap().as_ref() {
                        learner.snapshot = Some((**snap).clone());
                    }
                    let mut slot = self.shared.policy.write().unwrap();
                    let version = slot.version + 1;
                    *slot = Arc::new(PolicySlot {
                        version,
                        net: learner.agent.policy.clone(),
                    });
                    drop(slot);
                    if let Some(o) = self.out {
                        save_checkpoint(
                            &o.join("checkpoints").join("latest"),
                            &learner.agent,
                            learner.snapshot.as_ref(),
                        )?;
                    }
                }
                if learner.updates.is_multiple_of(config.eval_interval) {
                    rows.push(self.row(learner)?);
                    if let Some(o) = self.out {
                        write_csv_file(rows, &metrics_path(o))?;
                    }
                }
            } else if finished(self) && learner.updates >= total_updates {
                break;
            } else if !self.wait() && !finished(self) {
                if self.shared.stopped() {
                    return Ok(());
                }
                return Err(TrainError::WorkerFailed {
                    worker: "actors".into(),
                    message: format!(
                        "collection stopped after {} of {total} frames",
                        self.ingested()
                    ),
                });
            }
        }
        if !learner.updates.is_multiple_of(config.eval_interval) {
            rows.push(self.row(learner)?);
        }
        Ok(())
    }
}
