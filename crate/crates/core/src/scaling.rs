//! Strong and weak scaling experiments, either simulated or on threads.

use std::hint::black_box;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::network::ScanKind;
use crate::operator::{OpError, Operator};
use crate::runtime::{run_distributed, RuntimeError};
use crate::scan::{serial_scan, ScanError};
use crate::sim::{simulate, simulate_serial, CostModel, SimError};
use crate::strategy::StrategyVariant;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalingError {
    #[error("repetition counts differ: {0} serial vs {1} parallel")]
    MismatchedRepetitions(usize, usize),
    #[error("no repetitions")]
    NoRepetitions,
    #[error("empty worker list")]
    NoWorkers,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Scan(#[from] ScanError),
}

/// Source of serial and parallel execution times.
pub trait Timer {
    fn serial(&mut self, n: usize, rep: usize) -> Result<f64, ScalingError>;
    fn parallel(
        &mut self,
        variant: StrategyVariant,
        kind: ScanKind,
        n: usize,
        p: usize,
        rep: usize,
    ) -> Result<f64, ScalingError>;
}

/// Times from the discrete-event simulator; repetition `r` uses seed
/// `model.seed + r`.
#[derive(Debug, Clone)]
pub struct SimulatedTimer {
    pub model: CostModel,
}

impl SimulatedTimer {
    fn model_for(&self, rep: usize) -> CostModel {
        self.model.clone().with_seed(self.model.seed.wrapping_add(rep as u64))
    }
}

impl Timer for SimulatedTimer {
    fn serial(&mut self, n: usize, rep: usize) -> Result<f64, ScalingError> {
        Ok(simulate_serial(n, &self.model_for(rep))?)
    }

    fn parallel(
        &mut self,
        variant: StrategyVariant,
        kind: ScanKind,
        n: usize,
        p: usize,
        rep: usize,
    ) -> Result<f64, ScalingError> {
        Ok(simulate(variant, kind, n, p, &self.model_for(rep))?.makespan)
    }
}

/// Busy-waits for a sampled multiple of `unit` on every application, then
/// adds the integers. Lets thread-backed runs mimic an expensive operator.
#[derive(Debug)]
pub struct Delay {
    pub model: CostModel,
    pub unit: Duration,
    calls: AtomicU64,
}

impl Delay {
    pub fn new(model: CostModel, unit: Duration) -> Self {
        Self {
            model,
            unit,
            calls: AtomicU64::new(0),
        }
    }
}

impl Operator for Delay {
    type Elem = i64;

    fn identity(&self) -> i64 {
        0
    }

    fn apply(&self, l: &i64, r: &i64) -> Result<i64, OpError> {
        let call = self.calls.fetch_add(1, Ordering::Relaxed);
        let cost = self.model.sampler(call).sample();
        let until = Instant::now() + self.unit.mul_f64(cost);
        while Instant::now() < until {
            std::hint::spin_loop();
        }
        Ok(l.wrapping_add(*r))
    }

    fn approx_eq(&self, a: &i64, b: &i64, _tolerance: f64) -> bool {
        a == b
    }
}

/// Wall-clock times of real threaded runs over `op`.
pub struct ThreadTimer<O: Operator> {
    pub op: O,
    pub make_input: Box<dyn Fn(usize) -> Vec<O::Elem>>,
}

impl<O: Operator> Timer for ThreadTimer<O> {
    fn serial(&mut self, n: usize, _rep: usize) -> Result<f64, ScalingError> {
        let data = (self.make_input)(n);
        let start = Instant::now();
        black_box(serial_scan(&data, &self.op)?);
        Ok(start.elapsed().as_secs_f64())
    }

    fn parallel(
        &mut self,
        variant: StrategyVariant,
        kind: ScanKind,
        n: usize,
        p: usize,
        _rep: usize,
    ) -> Result<f64, ScalingError> {
        let data = (self.make_input)(n);
        Ok(run_distributed(&data, &self.op, variant, kind, p)?.elapsed.as_secs_f64())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for a single observation.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Speedup of mean times and its propagated standard deviation
/// `SP·√((σ₁/t₁)² + (σ₂/t₂)²)`.
pub fn speedup_sigma(t_serial: &[f64], t_parallel: &[f64]) -> Result<(f64, f64), ScalingError> {
    if t_serial.len() != t_parallel.len() {
        return Err(ScalingError::MismatchedRepetitions(t_serial.len(), t_parallel.len()));
    }
    if t_serial.is_empty() {
        return Err(ScalingError::NoRepetitions);
    }
    let (m1, m2) = (mean(t_serial), mean(t_parallel));
    let sp = m1 / m2;
    let r1 = sample_std(t_serial) / m1;
    let r2 = sample_std(t_parallel) / m2;
    Ok((sp, sp * (r1 * r1 + r2 * r2).sqrt()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub variant: StrategyVariant,
    pub kind: ScanKind,
    pub n: usize,
    pub p: usize,
    /// `None` for the aggregate row.
    pub rep: Option<usize>,
    pub t_serial: f64,
    pub t_parallel: f64,
    pub speedup: f64,
    /// Only set on aggregate rows.
    pub sigma: Option<f64>,
}

/// Per-repetition rows followed by one aggregate row for each `p`.
pub fn strong_scaling_experiment(
    variant: StrategyVariant,
    kind: ScanKind,
    n: usize,
    p_list: &[usize],
    repetitions: usize,
    timer: &mut dyn Timer,
) -> Result<Vec<ScalingRow>, ScalingError> {
    if p_list.is_empty() {
        return Err(ScalingError::NoWorkers);
    }
    if repetitions == 0 {
        return Err(ScalingError::NoRepetitions);
    }
    let mut rows = Vec::new();
    for &p in p_list {
        let mut t1 = Vec::with_capacity(repetitions);
        let mut t2 = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            let ts = timer.serial(n, rep)?;
            let tp = timer.parallel(variant, kind, n, p, rep)?;
            rows.push(ScalingRow {
                variant,
                kind,
                n,
                p,
                rep: Some(rep),
                t_serial: ts,
                t_parallel: tp,
                speedup: ts / tp,
                sigma: None,
            });
            t1.push(ts);
            t2.push(tp);
        }
        let (speedup, sigma) = speedup_sigma(&t1, &t2)?;
        rows.push(ScalingRow {
            variant,
            kind,
            n,
            p,
            rep: None,
            t_serial: mean(&t1),
            t_parallel: mean(&t2),
            speedup,
            sigma: Some(sigma),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakRow {
    pub variant: StrategyVariant,
    pub kind: ScanKind,
    pub k: usize,
    pub n: usize,
    pub p: usize,
    pub rep: Option<usize>,
    pub t_parallel: f64,
    /// Sample standard deviation; aggregate rows only.
    pub sigma: Option<f64>,
    /// Growth of the mean time relative to the first entry of `p_list`;
    /// aggregate rows only.
    pub growth_pct: Option<f64>,
}

/// `k` elements per worker; `n = k·p` grows with `p`.
pub fn weak_scaling_experiment(
    variant: StrategyVariant,
    kind: ScanKind,
    k: usize,
    p_list: &[usize],
    repetitions: usize,
    timer: &mut dyn Timer,
) -> Result<Vec<WeakRow>, ScalingError> {
    if p_list.is_empty() {
        return Err(ScalingError::NoWorkers);
    }
    if repetitions == 0 {
        return Err(ScalingError::NoRepetitions);
    }
    let mut rows = Vec::new();
    let mut baseline = None;
    for &p in p_list {
        let n = k * p;
        let mut ts = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            let t = timer.parallel(variant, kind, n, p, rep)?;
            rows.push(WeakRow {
                variant,
                kind,
                k,
                n,
                p,
                rep: Some(rep),
                t_parallel: t,
                sigma: None,
                growth_pct: None,
            });
            ts.push(t);
        }
        let m = mean(&ts);
        let base = *baseline.get_or_insert(m);
        rows.push(WeakRow {
            variant,
            kind,
            k,
            n,
            p,
            rep: None,
            t_parallel: m,
            sigma: Some(sample_std(&ts)),
            growth_pct: Some((m / base - 1.0) * 100.0),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_example() {
        // t1 = 100 ± 1, t2 = 10 ± 0.5 with two samples each
        let (sp, sigma) = speedup_sigma(&[99.0, 101.0], &[9.5, 10.5]).unwrap();
        assert_eq!(sp, 10.0);
        let r1 = 2f64.sqrt() / 100.0;
        let r2 = 0.5 * 2f64.sqrt() / 10.0;
        assert!((sigma - 10.0 * (r1 * r1 + r2 * r2).sqrt()).abs() < 1e-12);
        assert!(matches!(
            speedup_sigma(&[1.0], &[1.0, 2.0]),
            Err(ScalingError::MismatchedRepetitions(1, 2))
        ));
    }

    #[test]
    fn single_worker_speedup_is_one() {
        let mut timer = SimulatedTimer {
            model: CostModel::constant(3.0),
        };
        let rows = strong_scaling_experiment(
            StrategyVariant::GeneralExclusive,
            ScanKind::Serial,
            64,
            &[1],
            5,
            &mut timer,
        )
        .unwrap();
        let agg = rows.last().unwrap();
        assert_eq!((agg.speedup, agg.sigma), (1.0, Some(0.0)));
    }

    #[test]
    fn weak_scaling_flat_for_repeated_p() {
        let mut timer = SimulatedTimer {
            model: CostModel::constant(1.0),
        };
        let rows = weak_scaling_experiment(
            StrategyVariant::GeneralExclusive,
            ScanKind::Blelloch,
            16,
            &[1, 1],
            2,
            &mut timer,
        )
        .unwrap();
        assert!(rows.iter().filter_map(|r| r.growth_pct).all(|g| g == 0.0));
    }
}
