//! Distributed scan strategies and their per-worker operation schedules.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::global::{build_global_plan, GlobalAction, GlobalMode, GlobalPlan, PlanError, Tag};
use crate::network::ScanKind;
use crate::partition::{partition, Partition, PartitionError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyVariant {
    /// Local scan, exclusive global scan, then every later worker applies
    /// its prefix to all of its elements.
    GeneralExclusive,
    /// Local scan, inclusive global scan plus a shift; the inclusive value
    /// replaces the last local application.
    GeneralInclusive,
    /// As `GeneralExclusive`, but the successor's prefix, when it arrives
    /// in time, replaces the last local application.
    GeneralExclusiveOptimized,
    /// Local reduction, exclusive global scan, then a local scan seeded by
    /// the received prefix.
    Alternative,
}

impl StrategyVariant {
    pub const ALL: [StrategyVariant; 4] = [
        StrategyVariant::GeneralExclusive,
        StrategyVariant::GeneralInclusive,
        StrategyVariant::GeneralExclusiveOptimized,
        StrategyVariant::Alternative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyVariant::GeneralExclusive => "general-exclusive",
            StrategyVariant::GeneralInclusive => "general-inclusive",
            StrategyVariant::GeneralExclusiveOptimized => "general-exclusive-optimized",
            StrategyVariant::Alternative => "alternative",
        }
    }

    pub fn global_mode(self) -> GlobalMode {
        match self {
            StrategyVariant::GeneralInclusive => GlobalMode::Inclusive,
            _ => GlobalMode::Exclusive,
        }
    }
}

impl fmt::Display for StrategyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown strategy variant `{0}`")]
pub struct UnknownVariant(pub String);

impl FromStr for StrategyVariant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "generalexclusive" | "exclusive" => Ok(StrategyVariant::GeneralExclusive),
            "generalinclusive" | "inclusive" => Ok(StrategyVariant::GeneralInclusive),
            "generalexclusiveoptimized" | "optimized" => Ok(StrategyVariant::GeneralExclusiveOptimized),
            "alternative" | "reducethenscan" => Ok(StrategyVariant::Alternative),
            _ => Err(UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Local1,
    Global,
    Local2,
}

impl Stage {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Local1 => "local1",
            Stage::Global => "global",
            Stage::Local2 => "local2",
        }
    }
}

/// Data-free view of a worker's schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimOp {
    Apply(Stage),
    Send { to: usize, tag: Tag },
    Recv { from: usize, tag: Tag },
    /// If the message has already arrived, the next `Apply` is skipped.
    Probe { from: usize, tag: Tag },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone)]
pub struct Schedule {
    pub variant: StrategyVariant,
    pub kind: ScanKind,
    pub partition: Partition,
    /// `None` for a single worker.
    pub plan: Option<GlobalPlan>,
    pub programs: Vec<Vec<SimOp>>,
}

/// Per-worker operation lists for `variant` over `n` elements and `p`
/// workers. A single worker always runs a plain serial scan.
pub fn build_schedule(
    variant: StrategyVariant,
    kind: ScanKind,
    n: usize,
    p: usize,
) -> Result<Schedule, StrategyError> {
    let partition = partition(n, p)?;
    if p == 1 {
        return Ok(Schedule {
            variant,
            kind,
            partition,
            plan: None,
            programs: vec![vec![SimOp::Apply(Stage::Local1); n - 1]],
        });
    }
    let plan = build_global_plan(kind, p, variant.global_mode())?;
    let mut programs = Vec::with_capacity(p);
    for w in 0..p {
        let k = partition.len(w);
        let mut ops = vec![SimOp::Apply(Stage::Local1); k - 1];
        for action in &plan.workers[w] {
            match *action {
                GlobalAction::Send { to, tag } => ops.push(SimOp::Send { to, tag }),
                GlobalAction::RecvApply { from, tag } | GlobalAction::RecvApplyAfter { from, tag } => {
                    ops.push(SimOp::Recv { from, tag });
                    ops.push(SimOp::Apply(Stage::Global));
                }
                GlobalAction::RecvCopy { from, tag } | GlobalAction::RecvInto { from, tag, .. } => {
                    ops.push(SimOp::Recv { from, tag })
                }
                _ => {}
            }
        }
        let local2 = SimOp::Apply(Stage::Local2);
        match variant {
            StrategyVariant::GeneralExclusive if w > 0 => ops.extend(std::iter::repeat_n(local2, k)),
            StrategyVariant::GeneralInclusive if w > 0 => ops.extend(std::iter::repeat_n(local2, k - 1)),
            StrategyVariant::GeneralExclusiveOptimized => {
                if w >= 2 {
                    ops.push(SimOp::Send {
                        to: w - 1,
                        tag: Tag::Lookahead,
                    });
                }
                if w > 0 {
                    ops.extend(std::iter::repeat_n(local2, k - 1));
                    if w + 1 < p {
                        ops.push(SimOp::Probe {
                            from: w + 1,
                            tag: Tag::Lookahead,
                        });
                    }
                    ops.push(local2);
                }
            }
            StrategyVariant::Alternative => ops.extend(std::iter::repeat_n(local2, k)),
            _ => {}
        }
        programs.push(ops);
    }
    Ok(Schedule {
        variant,
        kind,
        partition,
        plan: Some(plan),
        programs,
    })
}

impl Schedule {
    /// Applications per stage, counting probed applications as performed.
    pub fn nominal_applications(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for op in self.programs.iter().flatten() {
            if let SimOp::Apply(stage) = op {
                counts[stage.index()] += 1;
            }
        }
        counts
    }
}
