//! Threaded execution of the distributed strategies.
//!
//! Each worker runs on its own thread with its own block of data and talks
//! to the others only through typed channel messages.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};
use std::sync::Barrier;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::global::{step_action, GlobalPlan, GlobalState, Mailbox, StepError, Tag};
use crate::network::ScanKind;
use crate::operator::{OpError, Operator};
use crate::strategy::{build_schedule, Stage, StrategyError, StrategyVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WorkerStats {
    pub stage1: usize,
    pub global: usize,
    pub stage2: usize,
    pub probe_hit: bool,
}

#[derive(Debug, Clone)]
pub struct DistributedOutput<E> {
    /// Inclusive scan of the input.
    pub values: Vec<E>,
    pub stats: Vec<WorkerStats>,
    /// Wall time from the common barrier to the last worker finishing.
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuntimeError {
    #[error("input is empty")]
    EmptyInput,
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("worker {worker} panicked")]
    WorkerPanicked { worker: usize },
    #[error("worker {worker}, {} stage, index {index}: {source}", stage.name())]
    Operator {
        worker: usize,
        stage: Stage,
        index: usize,
        source: OpError,
    },
    #[error("worker {worker} aborted")]
    Aborted { worker: usize },
}

enum Payload<E> {
    Data(E),
    Abort,
}

struct Envelope<E> {
    from: usize,
    tag: Tag,
    payload: Payload<E>,
}

enum Failure {
    Op { stage: Stage, index: usize, source: OpError },
    Aborted,
}

struct ChannelMailbox<E> {
    me: usize,
    rx: Receiver<Envelope<E>>,
    peers: Vec<Sender<Envelope<E>>>,
    stash: HashMap<(usize, Tag), E>,
}

impl<E> ChannelMailbox<E> {
    fn accept(&mut self, env: Envelope<E>) -> Result<(), Failure> {
        match env.payload {
            Payload::Data(v) => {
                self.stash.insert((env.from, env.tag), v);
                Ok(())
            }
            Payload::Abort => Err(Failure::Aborted),
        }
    }

    fn probe(&mut self, from: usize, tag: Tag) -> Result<Option<E>, Failure> {
        loop {
            match self.rx.try_recv() {
                Ok(env) => self.accept(env)?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Err(Failure::Aborted),
            }
        }
        Ok(self.stash.remove(&(from, tag)))
    }

    fn abort_all(&self) {
        for (w, tx) in self.peers.iter().enumerate() {
            if w != self.me {
                let _ = tx.send(Envelope {
                    from: self.me,
                    tag: Tag::Finish,
                    payload: Payload::Abort,
                });
            }
        }
    }
}

impl<E> Mailbox<E> for ChannelMailbox<E> {
    type Error = Failure;

    fn send(&mut self, to: usize, tag: Tag, value: E) -> Result<(), Failure> {
        self.peers[to]
            .send(Envelope {
                from: self.me,
                tag,
                payload: Payload::Data(value),
            })
            .map_err(|_| Failure::Aborted)
    }

    /// Blocks until the message is there.
    fn recv(&mut self, from: usize, tag: Tag) -> Result<Option<E>, Failure> {
        loop {
            if let Some(v) = self.stash.remove(&(from, tag)) {
                return Ok(Some(v));
            }
            let env = self.rx.recv().map_err(|_| Failure::Aborted)?;
            self.accept(env)?;
        }
    }
}

struct WorkerCtx<'a, O: Operator> {
    me: usize,
    p: usize,
    op: &'a O,
    variant: StrategyVariant,
    plan: &'a GlobalPlan,
}

impl<O: Operator> WorkerCtx<'_, O> {
    fn apply(&self, stage: Stage, index: usize, l: &O::Elem, r: &O::Elem) -> Result<O::Elem, Failure> {
        self.op
            .apply(l, r)
            .map_err(|source| Failure::Op { stage, index, source })
    }

    fn run(
        &self,
        mut data: Vec<O::Elem>,
        mailbox: &mut ChannelMailbox<O::Elem>,
    ) -> Result<(Vec<O::Elem>, WorkerStats), Failure> {
        let mut stats = WorkerStats::default();
        let k = data.len();
        let lane = if self.variant == StrategyVariant::Alternative {
            let mut acc = data[0].clone();
            for i in 1..k {
                acc = self.apply(Stage::Local1, i, &acc, &data[i])?;
                stats.stage1 += 1;
            }
            acc
        } else {
            for i in 1..k {
                data[i] = self.apply(Stage::Local1, i, &data[i - 1], &data[i])?;
                stats.stage1 += 1;
            }
            data[k - 1].clone()
        };

        let mut state = GlobalState::new(lane);
        for (index, action) in self.plan.workers[self.me].iter().enumerate() {
            match step_action(action, &mut state, self.op, mailbox) {
                Ok(_) => {}
                Err(StepError::Op(source)) => {
                    return Err(Failure::Op {
                        stage: Stage::Global,
                        index,
                        source,
                    })
                }
                Err(StepError::Comm(f)) => return Err(f),
            }
        }
        stats.global = state.applications;
        let excl = state.excl.expect("exclusive prefix");
        let (w, p) = (self.me, self.p);

        match self.variant {
            StrategyVariant::GeneralExclusive if w > 0 => {
                for i in 0..k {
                    data[i] = self.apply(Stage::Local2, i, &excl, &data[i])?;
                    stats.stage2 += 1;
                }
            }
            StrategyVariant::GeneralInclusive if w > 0 => {
                for i in 0..k - 1 {
                    data[i] = self.apply(Stage::Local2, i, &excl, &data[i])?;
                    stats.stage2 += 1;
                }
                data[k - 1] = state.incl.expect("inclusive prefix");
            }
            StrategyVariant::GeneralExclusiveOptimized => {
                if w >= 2 {
                    // the receiver may already be done with its block
                    let _ = mailbox.send(w - 1, Tag::Lookahead, excl.clone());
                }
                if w > 0 {
                    for i in 0..k - 1 {
                        data[i] = self.apply(Stage::Local2, i, &excl, &data[i])?;
                        stats.stage2 += 1;
                    }
                    let ahead = if w + 1 < p {
                        mailbox.probe(w + 1, Tag::Lookahead)?
                    } else {
                        None
                    };
                    match ahead {
                        Some(v) => {
                            data[k - 1] = v;
                            stats.probe_hit = true;
                        }
                        None => {
                            data[k - 1] = self.apply(Stage::Local2, k - 1, &excl, &data[k - 1])?;
                            stats.stage2 += 1;
                        }
                    }
                }
            }
            StrategyVariant::Alternative => {
                data[0] = self.apply(Stage::Local2, 0, &excl, &data[0])?;
                stats.stage2 += 1;
                for i in 1..k {
                    data[i] = self.apply(Stage::Local2, i, &data[i - 1], &data[i])?;
                    stats.stage2 += 1;
                }
            }
            _ => {}
        }
        Ok((data, stats))
    }
}

/// Inclusive scan of `data` over `p` worker threads.
pub fn run_distributed<O: Operator>(
    data: &[O::Elem],
    op: &O,
    variant: StrategyVariant,
    kind: ScanKind,
    p: usize,
) -> Result<DistributedOutput<O::Elem>, RuntimeError> {
    if data.is_empty() {
        return Err(RuntimeError::EmptyInput);
    }
    let schedule = build_schedule(variant, kind, data.len(), p)?;
    let Some(plan) = schedule.plan.as_ref() else {
        let start = Instant::now();
        let mut values = data.to_vec();
        for i in 1..values.len() {
            values[i] = op
                .apply(&values[i - 1], &values[i])
                .map_err(|source| RuntimeError::Operator {
                    worker: 0,
                    stage: Stage::Local1,
                    index: i,
                    source,
                })?;
        }
        return Ok(DistributedOutput {
            values,
            stats: vec![WorkerStats {
                stage1: data.len() - 1,
                ..Default::default()
            }],
            elapsed: start.elapsed(),
        });
    };

    let (senders, receivers): (Vec<_>, Vec<_>) = (0..p).map(|_| channel::<Envelope<O::Elem>>()).unzip();
    let barrier = Barrier::new(p);
    let outcomes: Vec<_> = thread::scope(|scope| {
        let handles: Vec<_> = receivers
            .into_iter()
            .enumerate()
            .map(|(w, rx)| {
                let block = data[schedule.partition.range(w)].to_vec();
                let peers = senders.clone();
                let barrier = &barrier;
                scope.spawn(move || {
                    let mut mailbox = ChannelMailbox {
                        me: w,
                        rx,
                        peers,
                        stash: HashMap::new(),
                    };
                    let ctx = WorkerCtx {
                        me: w,
                        p,
                        op,
                        variant,
                        plan,
                    };
                    barrier.wait();
                    let start = Instant::now();
                    let result = catch_unwind(AssertUnwindSafe(|| ctx.run(block, &mut mailbox)));
                    let end = Instant::now();
                    if !matches!(result, Ok(Ok(_))) {
                        mailbox.abort_all();
                    }
                    (result, start, end)
                })
            })
            .collect();
        drop(senders);
        handles
            .into_iter()
            .map(|h| h.join().expect("worker results are caught"))
            .collect()
    });

    let mut values = Vec::with_capacity(data.len());
    let mut stats = Vec::with_capacity(p);
    let mut first_error: Option<RuntimeError> = None;
    let mut aborted: Option<RuntimeError> = None;
    let start = outcomes.iter().map(|o| o.1).min().expect("p >= 1");
    let end = outcomes.iter().map(|o| o.2).max().expect("p >= 1");
    for (worker, (result, _, _)) in outcomes.into_iter().enumerate() {
        match result {
            Ok(Ok((block, s))) => {
                values.extend(block);
                stats.push(s);
            }
            Ok(Err(Failure::Op { stage, index, source })) => {
                first_error.get_or_insert(RuntimeError::Operator {
                    worker,
                    stage,
                    index,
                    source,
                });
            }
            Ok(Err(Failure::Aborted)) => {
                aborted.get_or_insert(RuntimeError::Aborted { worker });
            }
            Err(_) => {
                first_error.get_or_insert(RuntimeError::WorkerPanicked { worker });
            }
        }
    }
    if let Some(e) = first_error.or(aborted) {
        return Err(e);
    }
    Ok(DistributedOutput {
        values,
        stats,
        elapsed: end - start,
    })
}
