//! Closed-form span and work of the prefix algorithms and the distributed
//! strategies, in operator applications.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::global::GlobalMode;
use crate::network::ScanKind;
use crate::sim::{simulate_schedule, CostModel, SimError};
use crate::strategy::{build_schedule, Stage, StrategyError, StrategyVariant};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("width {n} is invalid for {kind}")]
    InvalidWidth { kind: ScanKind, n: usize },
    #[error("{p} workers for {n} elements")]
    TooManyWorkers { n: usize, p: usize },
    #[error("need at least one worker")]
    NoWorkers,
    #[error(transparent)]
    Strategy(#[from] StrategyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostFigures {
    pub span: u64,
    pub work: u64,
}

fn log2(n: usize) -> u64 {
    n.trailing_zeros() as u64
}

fn check_width(kind: ScanKind, n: usize) -> Result<(), CostError> {
    if n < 2 || (kind.requires_power_of_two() && !n.is_power_of_two()) {
        return Err(CostError::InvalidWidth { kind, n });
    }
    Ok(())
}

pub fn span(kind: ScanKind, n: usize) -> Result<u64, CostError> {
    check_width(kind, n)?;
    let (nn, l) = (n as u64, log2(n));
    Ok(match kind {
        ScanKind::Serial => nn - 1,
        ScanKind::Blelloch => 2 * l,
        ScanKind::BrentKung => 2 * l - 1,
        ScanKind::KoggeStone | ScanKind::Sklansky => l,
    })
}

pub fn work(kind: ScanKind, n: usize) -> Result<u64, CostError> {
    check_width(kind, n)?;
    let (nn, l) = (n as u64, log2(n));
    Ok(match kind {
        ScanKind::Serial => nn - 1,
        ScanKind::Blelloch => 2 * (nn - 1),
        ScanKind::BrentKung => 2 * nn - l - 2,
        ScanKind::KoggeStone => nn * l - nn + 1,
        ScanKind::Sklansky => nn / 2 * l,
    })
}

pub fn figures(kind: ScanKind, n: usize) -> Result<CostFigures, CostError> {
    Ok(CostFigures {
        span: span(kind, n)?,
        work: work(kind, n)?,
    })
}

/// `2n - 2 - size - depth`; zero for zero-deficiency circuits.
pub fn snir_deficiency(size: usize, depth: usize, n: usize) -> i64 {
    2 * n as i64 - 2 - size as i64 - depth as i64
}

/// Critical path of the global stage over `p` workers, when all workers
/// enter it at the same time. Messages are free; each worker runs its
/// actions in order.
pub fn global_span(kind: ScanKind, p: usize, mode: GlobalMode) -> Result<u64, CostError> {
    if p == 0 {
        return Err(CostError::NoWorkers);
    }
    if p == 1 {
        return Ok(0);
    }
    check_width(kind, p)?;
    let l = log2(p);
    Ok(match (kind, mode) {
        (ScanKind::Serial, GlobalMode::Exclusive) => p as u64 - 2,
        (ScanKind::Serial, GlobalMode::Inclusive) => p as u64 - 1,
        (ScanKind::Blelloch, _) => 2 * l,
        (ScanKind::KoggeStone | ScanKind::Sklansky, _) => l,
        // the first down-sweep level overlaps the last up-sweep level
        (ScanKind::BrentKung, _) if p == 2 => 1,
        (ScanKind::BrentKung, _) => 2 * l - 2,
    })
}

pub fn global_work(kind: ScanKind, p: usize, mode: GlobalMode) -> Result<u64, CostError> {
    if p == 0 {
        return Err(CostError::NoWorkers);
    }
    if p == 1 {
        return Ok(0);
    }
    check_width(kind, p)?;
    Ok(match (kind, mode) {
        (ScanKind::Serial, GlobalMode::Exclusive) => p as u64 - 2,
        _ => work(kind, p)?,
    })
}

/// The three named cost variants. `General` uses the exclusive global
/// scan for serial and Blelloch global stages and the inclusive one for
/// the other kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CostVariant {
    General,
    Alternative,
    InclusiveOptimized,
}

impl CostVariant {
    pub const ALL: [CostVariant; 3] = [
        CostVariant::General,
        CostVariant::Alternative,
        CostVariant::InclusiveOptimized,
    ];

    pub fn strategy(self, kind: ScanKind) -> StrategyVariant {
        match (self, kind) {
            (CostVariant::General, ScanKind::Serial | ScanKind::Blelloch) => StrategyVariant::GeneralExclusive,
            (CostVariant::General, _) | (CostVariant::InclusiveOptimized, _) => StrategyVariant::GeneralInclusive,
            (CostVariant::Alternative, _) => StrategyVariant::Alternative,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CostVariant::General => "general",
            CostVariant::Alternative => "alternative",
            CostVariant::InclusiveOptimized => "inclusive-optimized",
        }
    }
}

impl fmt::Display for CostVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown cost variant `{0}`")]
pub struct UnknownCostVariant(pub String);

impl FromStr for CostVariant {
    type Err = UnknownCostVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "general" => Ok(CostVariant::General),
            "alternative" => Ok(CostVariant::Alternative),
            "inclusive-optimized" | "inclusive" => Ok(CostVariant::InclusiveOptimized),
            _ => Err(UnknownCostVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistributedCostFigures {
    pub n: usize,
    pub p: usize,
    pub local1_span: u64,
    pub global_span: u64,
    pub local2_span: u64,
    pub total_span: u64,
    pub total_work: u64,
    /// False when `p` does not divide `n`; the total then comes from the
    /// per-worker critical path rather than the stage sum.
    pub even: bool,
}

fn check_workers(n: usize, p: usize) -> Result<(), CostError> {
    if p == 0 {
        return Err(CostError::NoWorkers);
    }
    if p > n {
        return Err(CostError::TooManyWorkers { n, p });
    }
    Ok(())
}

/// Span and work of a distributed strategy.
///
/// With `p | n` the stage spans follow the closed forms (each clamped at
/// zero). Otherwise, and for the work of the optimized exclusive variant,
/// the figures come from a unit-cost replay of the schedule.
pub fn strategy_cost(
    kind: ScanKind,
    n: usize,
    p: usize,
    variant: StrategyVariant,
) -> Result<DistributedCostFigures, CostError> {
    check_workers(n, p)?;
    if p == 1 {
        return Ok(DistributedCostFigures {
            n,
            p,
            local1_span: n as u64 - 1,
            global_span: 0,
            local2_span: 0,
            total_span: n as u64 - 1,
            total_work: n as u64 - 1,
            even: true,
        });
    }
    let mode = variant.global_mode();
    let even = n % p == 0 && (kind == ScanKind::Serial || p.is_power_of_two());
    if !even || variant == StrategyVariant::GeneralExclusiveOptimized {
        return replayed_cost(kind, n, p, variant);
    }
    let (k, pp) = (n as u64 / p as u64, p as u64);
    let gs = global_span(kind, p, mode)?;
    let gw = global_work(kind, p, mode)?;
    let local1 = k - 1;
    let (local2, work2) = match variant {
        StrategyVariant::GeneralExclusive => (k, (pp - 1) * k),
        StrategyVariant::GeneralInclusive => (k - 1, (pp - 1) * (k - 1)),
        StrategyVariant::Alternative => (k, pp * k),
        StrategyVariant::GeneralExclusiveOptimized => unreachable!(),
    };
    Ok(DistributedCostFigures {
        n,
        p,
        local1_span: local1,
        global_span: gs,
        local2_span: local2,
        total_span: local1 + gs + local2,
        total_work: pp * local1 + gw + work2,
        even: true,
    })
}

fn replayed_cost(
    kind: ScanKind,
    n: usize,
    p: usize,
    variant: StrategyVariant,
) -> Result<DistributedCostFigures, CostError> {
    let schedule = build_schedule(variant, kind, n, p)?;
    let report = match simulate_schedule(&schedule, &CostModel::constant(1.0)) {
        Ok(r) => r,
        Err(SimError::Strategy(e)) => return Err(e.into()),
        Err(e) => panic!("unit-cost replay failed: {e}"),
    };
    let stage_max = |stage: Stage| {
        report
            .applications
            .iter()
            .map(|a| a[stage.index()] as u64)
            .max()
            .unwrap_or(0)
    };
    let local1 = stage_max(Stage::Local1);
    let local2 = stage_max(Stage::Local2);
    let total = report.makespan as u64;
    let mode = variant.global_mode();
    let gs = global_span(kind, p, mode)
        .ok()
        .filter(|_| n % p == 0)
        .unwrap_or_else(|| total.saturating_sub(local1 + local2));
    Ok(DistributedCostFigures {
        n,
        p,
        local1_span: local1,
        global_span: gs,
        local2_span: local2,
        total_span: total,
        total_work: report.total_applications() as u64,
        even: n % p == 0,
    })
}

pub fn distributed_span(
    kind: ScanKind,
    n: usize,
    p: usize,
    variant: CostVariant,
) -> Result<DistributedCostFigures, CostError> {
    strategy_cost(kind, n, p, variant.strategy(kind))
}

/// `(n - 1) / total_span`.
pub fn theoretical_speedup(kind: ScanKind, n: usize, p: usize, variant: CostVariant) -> Result<f64, CostError> {
    let c = distributed_span(kind, n, p, variant)?;
    Ok(if c.total_span == 0 {
        1.0
    } else {
        (n as f64 - 1.0) / c.total_span as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalWorkers {
    /// Stationary point of the general-variant span.
    pub p0: f64,
    /// `p0` lies in the last doubling interval `[n/2, ∞)`, so on a
    /// power-of-two grid the best worker count is `n/2` or `n`.
    pub saturates: bool,
}

pub fn optimal_workers(kind: ScanKind, n: usize) -> OptimalWorkers {
    let nf = n as f64;
    let p0 = match kind {
        ScanKind::Serial => (2.0 * nf).sqrt(),
        ScanKind::Blelloch | ScanKind::BrentKung => nf * std::f64::consts::LN_2,
        ScanKind::KoggeStone | ScanKind::Sklansky => 2.0 * nf * std::f64::consts::LN_2,
    };
    OptimalWorkers {
        p0,
        saturates: p0 >= nf / 2.0,
    }
}

/// Divisors of `n` in increasing order.
pub fn divisors(n: usize) -> Vec<usize> {
    (1..=n).filter(|p| n % p == 0).collect()
}
