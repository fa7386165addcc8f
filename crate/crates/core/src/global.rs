//! Global stage of a distributed scan: one value per worker, combined by
//! point-to-point messages following a prefix network.
//!
//! A [`GlobalPlan`] turns every network node `(src, dst)` into a message
//! from worker `src` to worker `dst` followed by one application at `dst`.
//! The same plan drives the threaded runtime, the simulator and the cost
//! timing.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::network::{build_network, NetworkError, NodeAction, ScanKind};
use crate::operator::{OpError, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Step(u32),
    Finish,
    Neighbor,
    Lookahead,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Step(s) => write!(f, "step{s}"),
            Tag::Finish => f.write_str("finish"),
            Tag::Neighbor => f.write_str("neighbor"),
            Tag::Lookahead => f.write_str("lookahead"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GlobalMode {
    /// Worker `I` ends with the fold of values `0..I-1`.
    Exclusive,
    /// Worker `I` ends with both the exclusive and the inclusive fold.
    Inclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Register {
    Excl,
    Incl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalAction {
    /// Send the current lane value.
    Send { to: usize, tag: Tag },
    /// `lane = received ⊙ lane`.
    RecvApply { from: usize, tag: Tag },
    /// `lane = lane ⊙ received`.
    RecvApplyAfter { from: usize, tag: Tag },
    /// `lane = received`.
    RecvCopy { from: usize, tag: Tag },
    /// Remember the lane as the total and reset it to the identity.
    CaptureTotal,
    RecvInto { from: usize, tag: Tag, reg: Register },
    LaneInto(Register),
    TotalInto(Register),
    IdentityInto(Register),
}

impl GlobalAction {
    pub fn is_application(&self) -> bool {
        matches!(self, GlobalAction::RecvApply { .. } | GlobalAction::RecvApplyAfter { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("global stage needs at least one worker")]
    NoWorkers,
    #[error("{kind} global stage needs a power-of-two worker count, got {p}")]
    NotPowerOfTwo { kind: ScanKind, p: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalPlan {
    pub kind: ScanKind,
    pub mode: GlobalMode,
    pub p: usize,
    pub workers: Vec<Vec<GlobalAction>>,
}

pub fn build_global_plan(kind: ScanKind, p: usize, mode: GlobalMode) -> Result<GlobalPlan, PlanError> {
    use GlobalAction::*;
    if p == 0 {
        return Err(PlanError::NoWorkers);
    }
    let mut workers: Vec<Vec<GlobalAction>> = vec![Vec::new(); p];
    if p == 1 {
        if mode == GlobalMode::Inclusive {
            workers[0].push(LaneInto(Register::Incl));
        }
        workers[0].push(IdentityInto(Register::Excl));
        return Ok(GlobalPlan {
            kind,
            mode,
            p,
            workers,
        });
    }
    if kind == ScanKind::Blelloch && !p.is_power_of_two() {
        return Err(PlanError::NotPowerOfTwo { kind, p });
    }
    let width = match kind {
        ScanKind::Serial if mode == GlobalMode::Exclusive => p - 1,
        ScanKind::Serial => p,
        _ => p.next_power_of_two(),
    };
    let net = build_network(kind, width)?;
    for (s, nodes) in net.steps.iter().enumerate() {
        for reset in net.resets.iter().filter(|r| r.after_steps == s) {
            workers[reset.lane].push(CaptureTotal);
        }
        let tag = Tag::Step(s as u32);
        let nodes: Vec<_> = nodes.iter().filter(|node| node.dst < p).collect();
        for node in &nodes {
            workers[node.src].push(Send { to: node.dst, tag });
        }
        for node in &nodes {
            let from = node.src;
            workers[node.dst].push(match node.action {
                NodeAction::Apply => RecvApply { from, tag },
                NodeAction::ApplyAfter => RecvApplyAfter { from, tag },
                NodeAction::Copy => RecvCopy { from, tag },
            });
        }
    }
    if kind.is_exclusive() {
        for (w, actions) in workers.iter_mut().enumerate() {
            actions.push(LaneInto(Register::Excl));
            if mode == GlobalMode::Inclusive {
                if w > 0 {
                    actions.push(Send {
                        to: w - 1,
                        tag: Tag::Neighbor,
                    });
                }
                actions.push(if w + 1 < p {
                    RecvInto {
                        from: w + 1,
                        tag: Tag::Neighbor,
                        reg: Register::Incl,
                    }
                } else {
                    TotalInto(Register::Incl)
                });
            }
        }
    } else {
        for (w, actions) in workers.iter_mut().enumerate() {
            if mode == GlobalMode::Inclusive {
                actions.push(LaneInto(Register::Incl));
            }
            if w + 1 < p {
                actions.push(Send {
                    to: w + 1,
                    tag: Tag::Finish,
                });
            }
            actions.push(if w > 0 {
                RecvInto {
                    from: w - 1,
                    tag: Tag::Finish,
                    reg: Register::Excl,
                }
            } else {
                IdentityInto(Register::Excl)
            });
        }
    }
    Ok(GlobalPlan {
        kind,
        mode,
        p,
        workers,
    })
}

impl GlobalPlan {
    pub fn applications(&self) -> usize {
        self.workers
            .iter()
            .flatten()
            .filter(|a| a.is_application())
            .count()
    }

    pub fn worker_applications(&self, worker: usize) -> usize {
        self.workers[worker]
            .iter()
            .filter(|a| a.is_application())
            .count()
    }
}

/// Registers of one worker during the global stage.
#[derive(Debug, Clone)]
pub struct GlobalState<E> {
    pub lane: E,
    pub total: Option<E>,
    pub excl: Option<E>,
    pub incl: Option<E>,
    pub applications: usize,
}

impl<E: Clone> GlobalState<E> {
    pub fn new(lane: E) -> Self {
        Self {
            lane,
            total: None,
            excl: None,
            incl: None,
            applications: 0,
        }
    }

    fn set(&mut self, reg: Register, value: E) {
        match reg {
            Register::Excl => self.excl = Some(value),
            Register::Incl => self.incl = Some(value),
        }
    }
}

/// Message transport seen by one worker.
pub trait Mailbox<E> {
    type Error;
    fn send(&mut self, to: usize, tag: Tag, value: E) -> Result<(), Self::Error>;
    /// `Ok(None)` means the message is not there yet.
    fn recv(&mut self, from: usize, tag: Tag) -> Result<Option<E>, Self::Error>;
}

#[derive(Debug, Error)]
pub enum StepError<C> {
    #[error(transparent)]
    Op(OpError),
    #[error(transparent)]
    Comm(C),
}

/// Executes one action. Returns `false` if it is blocked on a receive.
pub fn step_action<O: Operator, M: Mailbox<O::Elem>>(
    action: &GlobalAction,
    state: &mut GlobalState<O::Elem>,
    op: &O,
    mailbox: &mut M,
) -> Result<bool, StepError<M::Error>> {
    match *action {
        GlobalAction::Send { to, tag } => {
            mailbox
                .send(to, tag, state.lane.clone())
                .map_err(StepError::Comm)?;
        }
        GlobalAction::RecvApply { from, tag } => {
            let Some(v) = mailbox.recv(from, tag).map_err(StepError::Comm)? else {
                return Ok(false);
            };
            state.lane = op.apply(&v, &state.lane).map_err(StepError::Op)?;
            state.applications += 1;
        }
        GlobalAction::RecvApplyAfter { from, tag } => {
            let Some(v) = mailbox.recv(from, tag).map_err(StepError::Comm)? else {
                return Ok(false);
            };
            state.lane = op.apply(&state.lane, &v).map_err(StepError::Op)?;
            state.applications += 1;
        }
        GlobalAction::RecvCopy { from, tag } => {
            let Some(v) = mailbox.recv(from, tag).map_err(StepError::Comm)? else {
                return Ok(false);
            };
            state.lane = v;
        }
        GlobalAction::CaptureTotal => {
            let old = std::mem::replace(&mut state.lane, op.identity());
            state.total = Some(old);
        }
        GlobalAction::RecvInto { from, tag, reg } => {
            let Some(v) = mailbox.recv(from, tag).map_err(StepError::Comm)? else {
                return Ok(false);
            };
            state.set(reg, v);
        }
        GlobalAction::LaneInto(reg) => {
            let v = state.lane.clone();
            state.set(reg, v);
        }
        GlobalAction::TotalInto(reg) => {
            let v = state.total.clone().expect("total captured before use");
            state.set(reg, v);
        }
        GlobalAction::IdentityInto(reg) => state.set(reg, op.identity()),
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlobalError {
    #[error("global stage expects {expected} values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("worker {worker}: {source}")]
    Op { worker: usize, source: OpError },
    #[error("global stage deadlocked; blocked workers {0:?}")]
    Deadlock(Vec<usize>),
}

#[derive(Debug, Clone)]
pub struct GlobalOutput<E> {
    pub excl: Vec<E>,
    /// Present in inclusive mode.
    pub incl: Option<Vec<E>>,
    pub applications: usize,
    pub messages: usize,
}

struct SharedBoard<'a, E> {
    me: usize,
    board: &'a mut HashMap<(usize, usize, Tag), E>,
    sent: &'a mut usize,
}

impl<E> Mailbox<E> for SharedBoard<'_, E> {
    type Error = std::convert::Infallible;

    fn send(&mut self, to: usize, tag: Tag, value: E) -> Result<(), Self::Error> {
        *self.sent += 1;
        self.board.insert((self.me, to, tag), value);
        Ok(())
    }

    fn recv(&mut self, from: usize, tag: Tag) -> Result<Option<E>, Self::Error> {
        Ok(self.board.remove(&(from, self.me, tag)))
    }
}

/// Runs the global stage in-process by interleaving the workers' action
/// lists. Workers only interact through messages.
pub fn global_stage<O: Operator>(
    values: &[O::Elem],
    op: &O,
    kind: ScanKind,
    mode: GlobalMode,
) -> Result<GlobalOutput<O::Elem>, GlobalError> {
    let p = values.len();
    let plan = build_global_plan(kind, p, mode)?;
    run_plan(&plan, values, op)
}

pub fn run_plan<O: Operator>(
    plan: &GlobalPlan,
    values: &[O::Elem],
    op: &O,
) -> Result<GlobalOutput<O::Elem>, GlobalError> {
    if values.len() != plan.p {
        return Err(GlobalError::WrongLength {
            expected: plan.p,
            got: values.len(),
        });
    }
    let mut states: Vec<_> = values.iter().cloned().map(GlobalState::new).collect();
    let mut pcs = vec![0usize; plan.p];
    let mut board = HashMap::new();
    let mut messages = 0;
    loop {
        let mut progressed = false;
        for w in 0..plan.p {
            let mut mailbox = SharedBoard {
                me: w,
                board: &mut board,
                sent: &mut messages,
            };
            while let Some(action) = plan.workers[w].get(pcs[w]) {
                let done = match step_action(action, &mut states[w], op, &mut mailbox) {
                    Ok(done) => done,
                    Err(StepError::Op(source)) => return Err(GlobalError::Op { worker: w, source }),
                    Err(StepError::Comm(never)) => match never {},
                };
                if !done {
                    break;
                }
                pcs[w] += 1;
                progressed = true;
            }
        }
        let blocked: Vec<usize> = (0..plan.p)
            .filter(|&w| pcs[w] < plan.workers[w].len())
            .collect();
        if blocked.is_empty() {
            break;
        }
        if !progressed {
            return Err(GlobalError::Deadlock(blocked));
        }
    }
    let applications = states.iter().map(|s| s.applications).sum();
    let incl = (plan.mode == GlobalMode::Inclusive)
        .then(|| states.iter().map(|s| s.incl.clone().expect("inclusive result")).collect());
    let excl = states
        .into_iter()
        .map(|s| s.excl.expect("exclusive result"))
        .collect();
    Ok(GlobalOutput {
        excl,
        incl,
        applications,
        messages,
    })
}
