use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanforge::cost::{global_span, global_work, strategy_cost, theoretical_speedup, CostVariant};
use scanforge::global::{global_stage, GlobalMode};
use scanforge::network::ScanKind;
use scanforge::operator::{FreeMonoid, IntAdd, OpError, Operator};
use scanforge::partition::partition;
use scanforge::runtime::{run_distributed, RuntimeError};
use scanforge::scan::serial_scan;
use scanforge::sim::{simulate, CostDistribution, CostModel};
use scanforge::strategy::{build_schedule, Stage, StrategyVariant};

fn worker_counts(kind: ScanKind) -> Vec<usize> {
    match kind {
        ScanKind::Blelloch => vec![1, 2, 4, 8, 16, 32],
        _ => (1..=33).collect(),
    }
}

/// Independent timing oracle: per-worker clocks, unit costs, free messages.
/// Walks the schedule round-robin until every worker has finished.
fn unit_makespan(variant: StrategyVariant, kind: ScanKind, n: usize, p: usize) -> u64 {
    use scanforge::strategy::SimOp;
    use std::collections::HashMap;
    let s = build_schedule(variant, kind, n, p).unwrap();
    let mut pc = vec![0; p];
    let mut clock = vec![0u64; p];
    let mut sent: HashMap<(usize, usize, scanforge::global::Tag), u64> = HashMap::new();
    let mut skip = vec![false; p];
    loop {
        let mut progress = false;
        // probes are resolved only when nothing else can move
        for probes in [false, true] {
            for w in 0..p {
                while let Some(op) = s.programs[w].get(pc[w]) {
                    match *op {
                        SimOp::Apply(_) => {
                            if !std::mem::take(&mut skip[w]) {
                                clock[w] += 1;
                            }
                        }
                        SimOp::Send { to, tag } => {
                            sent.insert((w, to, tag), clock[w]);
                        }
                        SimOp::Recv { from, tag } => match sent.get(&(from, w, tag)) {
                            Some(&t) => clock[w] = clock[w].max(t),
                            None => break,
                        },
                        SimOp::Probe { from, tag } => {
                            if !probes {
                                break;
                            }
                            if sent.get(&(from, w, tag)).is_some_and(|&t| t <= clock[w]) {
                                skip[w] = true;
                            }
                        }
                    }
                    pc[w] += 1;
                    progress = true;
                }
            }
            if progress {
                break;
            }
        }
        if !progress {
            break;
        }
    }
    assert!((0..p).all(|w| pc[w] == s.programs[w].len()), "oracle stalled");
    clock.into_iter().max().unwrap()
}

#[test]
fn closed_form_spans_match_unit_cost_replay() {
    for kind in ScanKind::ALL {
        for variant in StrategyVariant::ALL {
            for p in worker_counts(kind) {
                for k in [1, 2, 3, 8] {
                    let n = p * k;
                    let cost = strategy_cost(kind, n, p, variant).unwrap();
                    let sim = simulate(variant, kind, n, p, &CostModel::constant(1.0)).unwrap();
                    assert_eq!(sim.makespan, cost.total_span as f64, "{kind} {variant} n={n} p={p}");
                    assert_eq!(
                        sim.total_applications() as u64,
                        cost.total_work,
                        "{kind} {variant} n={n} p={p}"
                    );
                }
            }
        }
    }
}

#[test]
fn power_of_two_spans_match_independent_oracle() {
    for kind in ScanKind::ALL {
        for variant in StrategyVariant::ALL {
            for p in [1, 2, 4, 8, 16, 64] {
                for k in [1, 2, 5] {
                    let n = p * k;
                    if variant == StrategyVariant::GeneralExclusiveOptimized {
                        // the oracle resolves probes late, which only matters for work
                        continue;
                    }
                    let cost = strategy_cost(kind, n, p, variant).unwrap();
                    assert_eq!(
                        unit_makespan(variant, kind, n, p),
                        cost.total_span,
                        "{kind} {variant} n={n} p={p}"
                    );
                }
            }
        }
    }
}

#[test]
fn global_stage_closed_forms() {
    for kind in ScanKind::ALL {
        for mode in [GlobalMode::Exclusive, GlobalMode::Inclusive] {
            for logp in 1..=8 {
                let p = 1usize << logp;
                let out = global_stage(&vec![1_i64; p], &IntAdd, kind, mode).unwrap();
                assert_eq!(out.applications as u64, global_work(kind, p, mode).unwrap(), "{kind} {mode:?} {p}");
            }
        }
    }
    assert_eq!(global_span(ScanKind::KoggeStone, 8, GlobalMode::Inclusive).unwrap(), 3);
    assert_eq!(global_span(ScanKind::Blelloch, 8, GlobalMode::Exclusive).unwrap(), 6);
}

#[test]
fn documented_span_formulas() {
    for (n, p) in [(64, 8), (4096, 16), (1024, 1024), (512, 2)] {
        let (nf, pf) = (n as f64, p as f64);
        let l = pf.log2();
        let blelloch = strategy_cost(ScanKind::Blelloch, n, p, StrategyVariant::GeneralExclusive).unwrap();
        assert_eq!(blelloch.total_span as f64, 2.0 * nf / pf - 1.0 + 2.0 * l);
        let serial = strategy_cost(ScanKind::Serial, n, p, StrategyVariant::GeneralExclusive).unwrap();
        assert_eq!(serial.total_span as f64, 2.0 * nf / pf + pf - 3.0);
        for kind in [ScanKind::KoggeStone, ScanKind::Sklansky] {
            let c = strategy_cost(kind, n, p, StrategyVariant::GeneralInclusive).unwrap();
            assert_eq!(c.total_span as f64, 2.0 * nf / pf - 2.0 + l);
        }
    }
}

#[test]
fn speedup_is_one_for_single_worker() {
    for kind in ScanKind::ALL {
        for v in CostVariant::ALL {
            assert_eq!(theoretical_speedup(kind, 100, 1, v).unwrap(), 1.0);
        }
    }
}

#[test]
fn uneven_partitions_run_correctly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [5, 17, 31, 100] {
        let data: Vec<i64> = (0..n).map(|_| rng.random_range(-1000..1000)).collect();
        let expected = serial_scan(&data, &IntAdd).unwrap();
        for kind in [ScanKind::Serial, ScanKind::BrentKung, ScanKind::KoggeStone, ScanKind::Sklansky] {
            for variant in StrategyVariant::ALL {
                for p in [3, 5, 7] {
                    if p > n {
                        continue;
                    }
                    let out = run_distributed(&data, &IntAdd, variant, kind, p).unwrap();
                    assert_eq!(out.values, expected, "{kind} {variant} n={n} p={p}");
                    let sizes = partition(n, p).unwrap().sizes();
                    let stage1: usize = out.stats.iter().map(|s| s.stage1).sum();
                    assert_eq!(stage1, sizes.iter().map(|k| k - 1).sum::<usize>());
                }
            }
        }
    }
}

#[test]
fn free_monoid_never_reorders() {
    let n = 96;
    let data = FreeMonoid::generators(n);
    let expected = serial_scan(&data, &FreeMonoid).unwrap();
    for kind in ScanKind::ALL {
        for variant in StrategyVariant::ALL {
            for p in [1, 2, 4, 8, 16, 32] {
                let out = run_distributed(&data, &FreeMonoid, variant, kind, p).unwrap();
                assert_eq!(out.values, expected, "{kind} {variant} p={p}");
            }
        }
    }
}

#[test]
fn threaded_counts_match_schedule() {
    let data = vec![1_i64; 256];
    for kind in ScanKind::ALL {
        for variant in StrategyVariant::ALL {
            let p = 8;
            let out = run_distributed(&data, &IntAdd, variant, kind, p).unwrap();
            let cost = strategy_cost(kind, 256, p, variant).unwrap();
            let global: usize = out.stats.iter().map(|s| s.global).sum();
            let local: usize = out.stats.iter().map(|s| s.stage1 + s.stage2).sum();
            assert_eq!(global as u64, global_work(kind, p, variant.global_mode()).unwrap());
            if variant != StrategyVariant::GeneralExclusiveOptimized {
                assert_eq!((global + local) as u64, cost.total_work, "{kind} {variant}");
            }
            match variant {
                StrategyVariant::GeneralExclusive => assert_eq!(out.stats[0].stage2, 0),
                StrategyVariant::Alternative => {
                    assert!(out.stats.iter().all(|s| s.stage1 == 31 && s.stage2 == 32))
                }
                _ => {}
            }
        }
    }
}

#[test]
fn optimized_variant_probe_hits_under_skewed_timing() {
    // zero-latency unit costs: worker I+1 is never later than worker I by
    // more than K-1 in a serial global stage, so every middle worker hits
    let s = simulate(
        StrategyVariant::GeneralExclusiveOptimized,
        ScanKind::Serial,
        64,
        8,
        &CostModel::constant(1.0),
    )
    .unwrap();
    let base = strategy_cost(ScanKind::Serial, 64, 8, StrategyVariant::GeneralExclusive).unwrap();
    let opt = strategy_cost(ScanKind::Serial, 64, 8, StrategyVariant::GeneralExclusiveOptimized).unwrap();
    assert_eq!(opt.total_span, base.total_span);
    assert_eq!(opt.total_work, base.total_work - s.probe_hit_count() as u64);
    assert_eq!(
        s.applications.iter().map(|a| a[Stage::Local2.index()]).sum::<usize>(),
        7 * 8 - s.probe_hit_count()
    );
}

#[test]
fn lognormal_costs_create_idle_time() {
    let model = CostModel {
        distribution: CostDistribution::LogNormal { mu: 0.0, sigma: 0.6 },
        latency: 0.0,
        seed: 42,
    };
    let mean_cost = (0.6f64 * 0.6 / 2.0).exp();
    let stochastic = simulate(StrategyVariant::GeneralExclusive, ScanKind::KoggeStone, 128, 16, &model).unwrap();
    let constant = simulate(
        StrategyVariant::GeneralExclusive,
        ScanKind::KoggeStone,
        128,
        16,
        &CostModel::constant(mean_cost),
    )
    .unwrap();
    assert!(stochastic.makespan > constant.makespan);
    assert!(stochastic.idle.iter().any(|&i| i > 0.0));
}

struct Faulty {
    fail_on: i64,
    panic: bool,
}

impl Operator for Faulty {
    type Elem = i64;

    fn identity(&self) -> i64 {
        0
    }

    fn apply(&self, l: &i64, r: &i64) -> Result<i64, OpError> {
        if *r == self.fail_on {
            if self.panic {
                panic!("injected");
            }
            return Err(OpError::new("injected failure"));
        }
        Ok(l + r)
    }

    fn approx_eq(&self, a: &i64, b: &i64, _: f64) -> bool {
        a == b
    }
}

#[test]
fn worker_failures_are_reported() {
    let data: Vec<i64> = (1..=32).collect();
    let err = run_distributed(
        &data,
        &Faulty { fail_on: 20, panic: false },
        StrategyVariant::GeneralExclusive,
        ScanKind::KoggeStone,
        4,
    )
    .unwrap_err();
    match err {
        RuntimeError::Operator { worker, stage, index, .. } => {
            assert_eq!((worker, stage, index), (2, Stage::Local1, 3));
        }
        other => panic!("unexpected {other:?}"),
    }
    let err = run_distributed(
        &data,
        &Faulty { fail_on: 30, panic: true },
        StrategyVariant::Alternative,
        ScanKind::Blelloch,
        4,
    )
    .unwrap_err();
    assert_eq!(err, RuntimeError::WorkerPanicked { worker: 3 });
}
