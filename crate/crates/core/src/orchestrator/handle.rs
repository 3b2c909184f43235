//! Runs an [`Engine`] on its own thread. All writes go through one command queue;
//! readers get shared snapshots and a feed of audit records.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::approvals::{ApprovalItem, Decision, DecisionError};
use super::audit::{Actor, AuditRecord};
use super::engine::{CycleReport, Engine};
use super::view::StateView;
use crate::domain::{AlertId, PlanId};
use crate::exceptions::{AlertError, ExceptionAlert};

#[derive(Debug, Clone)]
pub enum Command {
    Decide { item_id: String, decision: Decision, actor: Actor },
    AckAlert { id: AlertId, actor: Actor },
    GeneratePlan { actor: Actor },
    Step { days: u32 },
    Pause,
    Resume,
}

#[derive(Debug, Clone)]
pub enum Reply {
    Item(ApprovalItem),
    Alert(ExceptionAlert),
    Plan(Option<PlanId>),
    Cycles(Vec<CycleReport>),
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Alert(#[from] AlertError),
    #[error("engine stopped")]
    Stopped,
}

struct Envelope {
    cmd: Command,
    reply: Option<Sender<Result<Reply, CommandError>>>,
}

#[derive(Debug, Clone, Default)]
pub struct HandleOptions {
    /// Advance one day every `tick_ms` while running; `None` steps only on request.
    pub tick_ms: Option<u64>,
    pub start_paused: bool,
    /// Stop advancing on its own after this many days.
    pub max_days: Option<u32>,
}

#[derive(Default)]
struct Feed {
    log: Vec<AuditRecord>,
    subscribers: Vec<Sender<AuditRecord>>,
}

struct Shared {
    snapshot: RwLock<Arc<StateView>>,
    feed: Mutex<Feed>,
}

impl Shared {
    fn publish(&self, engine: &Engine) {
        let mut feed = self.feed.lock().expect("feed lock");
        let fresh = engine.audit().since(feed.log.len() as u64).to_vec();
        if !fresh.is_empty() {
            feed.subscribers.retain(|s| fresh.iter().all(|r| s.send(r.clone()).is_ok()));
            feed.log.extend(fresh);
        }
        drop(feed);
        *self.snapshot.write().expect("snapshot lock") = Arc::new(engine.snapshot());
    }
}

pub struct EngineHandle {
    tx: Mutex<Option<Sender<Envelope>>>,
    shared: Arc<Shared>,
    worker: Mutex<Option<JoinHandle<Engine>>>,
}

struct Worker {
    paused: bool,
    days_run: u32,
    options: HandleOptions,
}

impl Worker {
    fn apply(&mut self, engine: &mut Engine, shared: &Shared, env: Envelope) {
        let result = match env.cmd {
            Command::Decide { item_id, decision, actor } => {
                engine.submit_decision(&item_id, decision, actor).map(Reply::Item).map_err(CommandError::from)
            }
            Command::AckAlert { id, actor } => engine.acknowledge_alert(id, actor).map(Reply::Alert).map_err(CommandError::from),
            Command::GeneratePlan { actor } => Ok(Reply::Plan(engine.generate_plan(actor))),
            Command::Step { days } => {
                let mut out = Vec::new();
                for _ in 0..days {
                    out.push(engine.run_cycle());
                    self.days_run += 1;
                    shared.publish(engine);
                }
                Ok(Reply::Cycles(out))
            }
            Command::Pause => {
                self.paused = true;
                Ok(Reply::Done)
            }
            Command::Resume => {
                self.paused = false;
                Ok(Reply::Done)
            }
        };
        shared.publish(engine);
        if let Some(reply) = env.reply {
            let _ = reply.send(result);
        }
    }

    fn auto_running(&self) -> bool {
        self.options.tick_ms.is_some() && !self.paused && self.options.max_days.is_none_or(|m| self.days_run < m)
    }
}

fn run_worker(mut engine: Engine, rx: Receiver<Envelope>, shared: Arc<Shared>, options: HandleOptions) -> Engine {
    let tick = Duration::from_millis(options.tick_ms.unwrap_or(1000));
    let mut w = Worker {
        paused: options.start_paused,
        days_run: 0,
        options,
    };
    let mut next_tick = Instant::now() + tick;
    loop {
        let wait = if w.auto_running() {
            next_tick.saturating_duration_since(Instant::now())
        } else {
            Duration::from_secs(3600)
        };
        match rx.recv_timeout(wait) {
            Ok(env) => w.apply(&mut engine, &shared, env),
            Err(RecvTimeoutError::Timeout) => {
                if w.auto_running() {
                    // decisions arriving mid-cycle are applied at the next stage boundary
                    let mut queued = Vec::new();
                    engine.run_cycle_with(&mut |e| {
                        while let Ok(env) = rx.try_recv() {
                            match env.cmd {
                                Command::Step { .. } | Command::Pause | Command::Resume => queued.push(env),
                                _ => {
                                    let mut inner = Worker {
                                        paused: false,
                                        days_run: 0,
                                        options: HandleOptions::default(),
                                    };
                                    inner.apply(e, &shared, env);
                                }
                            }
                        }
                    });
                    w.days_run += 1;
                    shared.publish(&engine);
                    for env in queued {
                        w.apply(&mut engine, &shared, env);
                    }
                    next_tick = Instant::now() + tick;
                } else {
                    next_tick = Instant::now() + tick;
                }
            }
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    engine
}

impl EngineHandle {
    pub fn spawn(engine: Engine, options: HandleOptions) -> Self {
        let shared = Arc::new(Shared {
            snapshot: RwLock::new(Arc::new(engine.snapshot())),
            feed: Mutex::new(Feed::default()),
        });
        shared.publish(&engine);
        let (tx, rx) = mpsc::channel();
        let worker_shared = Arc::clone(&shared);
        let worker = thread::Builder::new()
            .name("replen-engine".into())
            .spawn(move || run_worker(engine, rx, worker_shared, options))
            .expect("spawn engine thread");
        Self {
            tx: Mutex::new(Some(tx)),
            shared,
            worker: Mutex::new(Some(worker)),
        }
    }

    fn call(&self, cmd: Command) -> Result<Reply, CommandError> {
        let (reply_tx, reply_rx) = mpsc::channel();
        {
            let guard = self.tx.lock().expect("sender lock");
            let tx = guard.as_ref().ok_or(CommandError::Stopped)?;
            tx.send(Envelope { cmd, reply: Some(reply_tx) }).map_err(|_| CommandError::Stopped)?;
        }
        reply_rx.recv().map_err(|_| CommandError::Stopped)?
    }

    pub fn decide(&self, item_id: &str, decision: Decision, actor: Actor) -> Result<ApprovalItem, CommandError> {
        match self.call(Command::Decide {
            item_id: item_id.to_string(),
            decision,
            actor,
        })? {
            Reply::Item(i) => Ok(i),
            _ => unreachable!("decide replies with the item"),
        }
    }

    pub fn ack_alert(&self, id: AlertId, actor: Actor) -> Result<ExceptionAlert, CommandError> {
        match self.call(Command::AckAlert { id, actor })? {
            Reply::Alert(a) => Ok(a),
            _ => unreachable!("ack replies with the alert"),
        }
    }

    pub fn generate_plan(&self, actor: Actor) -> Result<Option<PlanId>, CommandError> {
        match self.call(Command::GeneratePlan { actor })? {
            Reply::Plan(p) => Ok(p),
            _ => unreachable!("generate replies with the plan id"),
        }
    }

    pub fn step(&self, days: u32) -> Result<Vec<CycleReport>, CommandError> {
        match self.call(Command::Step { days })? {
            Reply::Cycles(c) => Ok(c),
            _ => unreachable!("step replies with cycle reports"),
        }
    }

    pub fn pause(&self) -> Result<(), CommandError> {
        self.call(Command::Pause).map(|_| ())
    }

    pub fn resume(&self) -> Result<(), CommandError> {
        self.call(Command::Resume).map(|_| ())
    }

    pub fn snapshot(&self) -> Arc<StateView> {
        Arc::clone(&self.shared.snapshot.read().expect("snapshot lock"))
    }

    /// Audit records with `seq > after`.
    pub fn audit_since(&self, after: u64) -> Vec<AuditRecord> {
        let feed = self.shared.feed.lock().expect("feed lock");
        feed.log[(after as usize).min(feed.log.len())..].to_vec()
    }

    /// Every audit record appended from now on, in seq order.
    pub fn subscribe(&self) -> Receiver<AuditRecord> {
        let (tx, rx) = mpsc::channel();
        self.shared.feed.lock().expect("feed lock").subscribers.push(tx);
        rx
    }

    /// Like [`subscribe`](Self::subscribe), but first replays records with `seq > after`.
    pub fn subscribe_from(&self, after: u64) -> Receiver<AuditRecord> {
        let (tx, rx) = mpsc::channel();
        let mut feed = self.shared.feed.lock().expect("feed lock");
        for r in &feed.log[(after as usize).min(feed.log.len())..] {
            let _ = tx.send(r.clone());
        }
        feed.subscribers.push(tx);
        rx
    }

    /// Stops the worker and returns the engine.
    pub fn shutdown(&self) -> Option<Engine> {
        self.tx.lock().expect("sender lock").take();
        self.shared.feed.lock().expect("feed lock").subscribers.clear();
        self.worker.lock().expect("worker lock").take().and_then(|w| w.join().ok())
    }
}

impl Drop for EngineHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consortium::Consortium;
    use crate::orchestrator::engine::EngineConfig;
    use crate::orchestrator::ApprovalState;
    use crate::sim::{generate_scenario, ScenarioSpec, World};

    fn handle(auto: bool) -> EngineHandle {
        let cfg = generate_scenario(&ScenarioSpec::new(3, 5, 4));
        let world = World::generate(cfg).unwrap();
        EngineHandle::spawn(Engine::new(world, EngineConfig::new(auto, Consortium::baseline(0.25))), HandleOptions::default())
    }

    #[test]
    fn commands_serialize_and_feed_follows() {
        let h = handle(false);
        let rx = h.subscribe_from(0);
        h.step(12).unwrap();
        let snap = h.snapshot();
        assert_eq!(snap.day, 12);
        let item = snap.pending_approvals().next().expect("something pending").id.clone();
        let decided = h.decide(&item, Decision::Approve, Actor::human("ops")).unwrap();
        assert_eq!(decided.state, ApprovalState::Approved);
        assert!(h.snapshot().approval(&item).map(|a| a.state) == Some(ApprovalState::Approved));
        assert!(matches!(h.decide(&item, Decision::Approve, Actor::human("ops")), Err(CommandError::Decision(DecisionError::NotPending(_)))));
        let seqs: Vec<u64> = rx.try_iter().map(|r| r.seq).collect();
        assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
        assert_eq!(seqs.len() as u64, h.snapshot().audit_len);
        let engine = h.shutdown().unwrap();
        assert_eq!(engine.day(), 12);
    }

    #[test]
    fn ticking_worker_advances_until_paused() {
        let cfg = generate_scenario(&ScenarioSpec::new(2, 3, 5));
        let world = World::generate(cfg).unwrap();
        let opts = HandleOptions {
            tick_ms: Some(1),
            start_paused: false,
            max_days: Some(5),
        };
        let h = EngineHandle::spawn(Engine::new(world, EngineConfig::new(true, Consortium::baseline(0.25))), opts);
        let deadline = Instant::now() + Duration::from_secs(10);
        while h.snapshot().day < 5 && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        assert_eq!(h.snapshot().day, 5);
        thread::sleep(Duration::from_millis(20));
        assert_eq!(h.snapshot().day, 5);
    }
}
