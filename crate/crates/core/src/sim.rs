//! Discrete-event replay of distributed scan schedules.
//!
//! Every application takes a sampled amount of time, messages take a fixed
//! latency, and sends never block. Events are processed in time order; at
//! equal times probes run last so that a message sent at the probing
//! instant counts as arrived.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::global::Tag;
use crate::network::ScanKind;
use crate::strategy::{build_schedule, Schedule, SimOp, Stage, StrategyError, StrategyVariant};

#[derive(Debug, Clone, PartialEq)]
pub enum CostDistribution {
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// Resampled with replacement.
    Trace(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub distribution: CostDistribution,
    pub latency: f64,
    pub seed: u64,
}

impl CostModel {
    pub fn constant(c: f64) -> Self {
        Self {
            distribution: CostDistribution::Constant(c),
            latency: 0.0,
            seed: 0,
        }
    }

    pub fn with_latency(mut self, latency: f64) -> Self {
        self.latency = latency;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidCost(msg.to_string()));
        if !(self.latency.is_finite() && self.latency >= 0.0) {
            return bad("latency must be finite and non-negative");
        }
        match &self.distribution {
            CostDistribution::Constant(c) if !(c.is_finite() && *c > 0.0) => bad("constant cost must be positive"),
            CostDistribution::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && lo <= hi) => {
                bad("uniform bounds must satisfy 0 < lo <= hi")
            }
            CostDistribution::LogNormal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && *sigma >= 0.0) => {
                bad("lognormal needs finite mu and sigma >= 0")
            }
            CostDistribution::Trace(t) if t.is_empty() => bad("trace is empty"),
            CostDistribution::Trace(t) if t.iter().any(|c| !(c.is_finite() && *c > 0.0)) => {
                bad("trace costs must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Independent sample stream; stream 0 is reserved for serial baselines.
    pub fn sampler(&self, stream: u64) -> CostSampler<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let lognormal = match self.distribution {
            CostDistribution::LogNormal { mu, sigma } => LogNormal::new(mu, sigma).ok(),
            _ => None,
        };
        CostSampler {
            model: self,
            rng,
            lognormal,
        }
    }
}

pub struct CostSampler<'a> {
    model: &'a CostModel,
    rng: ChaCha8Rng,
    lognormal: Option<LogNormal<f64>>,
}

impl CostSampler<'_> {
    pub fn sample(&mut self) -> f64 {
        match &self.model.distribution {
            CostDistribution::Constant(c) => *c,
            CostDistribution::Uniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    self.rng.random_range(*lo..=*hi)
                }
            }
            CostDistribution::LogNormal { .. } => {
                let d = self.lognormal.as_ref().expect("validated lognormal");
                d.sample(&mut self.rng).max(f64::MIN_POSITIVE)
            }
            CostDistribution::Trace(t) => t[self.rng.random_range(0..t.len())],
        }
    }
}

/// Maximum-likelihood lognormal parameters for positive samples.
pub fn fit_lognormal(samples: &[f64]) -> Option<(f64, f64)> {
    if samples.len() < 2 || samples.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return None;
    }
    let logs: Vec<f64> = samples.iter().map(|s| s.ln()).collect();
    let n = logs.len() as f64;
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n;
    Some((mu, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid cost model: {0}")]
    InvalidCost(String),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("simulation deadlocked; blocked workers {0:?}")]
    Deadlock(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event {
    Apply(Stage),
    Wait,
    ProbeHit,
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Apply(Stage::Local1) => "local1",
            Event::Apply(Stage::Global) => "global",
            Event::Apply(Stage::Local2) => "local2",
            Event::Wait => "wait",
            Event::ProbeHit => "probe-hit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub worker: usize,
    pub event: Event,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub makespan: f64,
    pub finish: Vec<f64>,
    /// Time spent blocked in receives.
    pub idle: Vec<f64>,
    /// Applications per worker, indexed by stage.
    pub applications: Vec<[usize; 3]>,
    pub probe_hits: Vec<bool>,
    pub timeline: Vec<Segment>,
}

impl SimReport {
    pub fn stage_totals(&self) -> [usize; 3] {
        let mut t = [0; 3];
        for w in &self.applications {
            for s in 0..3 {
                t[s] += w[s];
            }
        }
        t
    }

    pub fn total_applications(&self) -> usize {
        self.stage_totals().iter().sum()
    }

    pub fn probe_hit_count(&self) -> usize {
        self.probe_hits.iter().filter(|h| **h).count()
    }

    pub fn total_idle(&self) -> f64 {
        self.idle.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key {
    time: f64,
    probe: bool,
    worker: usize,
}

impl Eq for Key {}

impl Ord for Key {
    // reversed so that BinaryHeap pops the earliest key
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.probe.cmp(&self.probe))
            .then(other.worker.cmp(&self.worker))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn simulate(
    variant: StrategyVariant,
    kind: ScanKind,
    n: usize,
    p: usize,
    model: &CostModel,
) -> Result<SimReport, SimError> {
    model.validate()?;
    let schedule = build_schedule(variant, kind, n, p)?;
    simulate_schedule(&schedule, model)
}

pub fn simulate_schedule(schedule: &Schedule, model: &CostModel) -> Result<SimReport, SimError> {
    model.validate()?;
    let programs = &schedule.programs;
    let p = programs.len();
    // a lone worker is the serial baseline and shares its stream
    let stream = |w: usize| if p == 1 { 0 } else { w as u64 + 1 };
    let mut samplers: Vec<_> = (0..p).map(|w| model.sampler(stream(w))).collect();
    let mut pc = vec![0usize; p];
    let mut clock = vec![0.0f64; p];
    let mut idle = vec![0.0f64; p];
    let mut skip_next = vec![false; p];
    let mut waiting: Vec<Option<(usize, Tag)>> = vec![None; p];
    let mut applications = vec![[0usize; 3]; p];
    let mut probe_hits = vec![false; p];
    let mut timeline = Vec::new();
    let mut mailbox: HashMap<(usize, usize, Tag), f64> = HashMap::new();
    let mut heap = BinaryHeap::new();

    let key_for = |w: usize, pc: usize, clock: f64, mailbox: &HashMap<(usize, usize, Tag), f64>| {
        let (time, probe) = match programs[w][pc] {
            SimOp::Recv { from, tag } => match mailbox.get(&(from, w, tag)) {
                Some(&arrival) => (clock.max(arrival), false),
                None => (clock, false),
            },
            SimOp::Probe { .. } => (clock, true),
            _ => (clock, false),
        };
        Key {
            time,
            probe,
            worker: w,
        }
    };

    for w in 0..p {
        if !programs[w].is_empty() {
            heap.push(key_for(w, 0, 0.0, &mailbox));
        }
    }

    while let Some(Key { worker: w, .. }) = heap.pop() {
        let mut advance = true;
        match programs[w][pc[w]] {
            SimOp::Apply(stage) => {
                if std::mem::take(&mut skip_next[w]) {
                    // replaced by the probed value
                } else {
                    let cost = samplers[w].sample();
                    timeline.push(Segment {
                        worker: w,
                        event: Event::Apply(stage),
                        start: clock[w],
                        end: clock[w] + cost,
                    });
                    clock[w] += cost;
                    applications[w][stage.index()] += 1;
                }
            }
            SimOp::Send { to, tag } => {
                let arrival = clock[w] + model.latency;
                mailbox.insert((w, to, tag), arrival);
                if waiting[to] == Some((w, tag)) {
                    waiting[to] = None;
                    heap.push(key_for(to, pc[to], clock[to], &mailbox));
                }
            }
            SimOp::Recv { from, tag } => match mailbox.remove(&(from, w, tag)) {
                Some(arrival) => {
                    if arrival > clock[w] {
                        timeline.push(Segment {
                            worker: w,
                            event: Event::Wait,
                            start: clock[w],
                            end: arrival,
                        });
                        idle[w] += arrival - clock[w];
                        clock[w] = arrival;
                    }
                }
                None => {
                    waiting[w] = Some((from, tag));
                    advance = false;
                }
            },
            SimOp::Probe { from, tag } => {
                let key = (from, w, tag);
                if mailbox.get(&key).is_some_and(|&arrival| arrival <= clock[w]) {
                    mailbox.remove(&key);
                    skip_next[w] = true;
                    probe_hits[w] = true;
                    timeline.push(Segment {
                        worker: w,
                        event: Event::ProbeHit,
                        start: clock[w],
                        end: clock[w],
                    });
                }
            }
        }
        if advance {
            pc[w] += 1;
            if pc[w] < programs[w].len() {
                heap.push(key_for(w, pc[w], clock[w], &mailbox));
            }
        }
    }

    let blocked: Vec<usize> = (0..p).filter(|&w| pc[w] < programs[w].len()).collect();
    if !blocked.is_empty() {
        return Err(SimError::Deadlock(blocked));
    }
    let makespan = clock.iter().copied().fold(0.0, f64::max);
    Ok(SimReport {
        makespan,
        finish: clock,
        idle,
        applications,
        probe_hits,
        timeline,
    })
}

/// Time of a serial scan over `n` elements, drawn from stream 0.
pub fn simulate_serial(n: usize, model: &CostModel) -> Result<f64, SimError> {
    model.validate()?;
    let mut sampler = model.sampler(0);
    Ok((1..n).map(|_| sampler.sample()).sum())
}
