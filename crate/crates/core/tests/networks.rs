use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanforge::cost::{
    distributed_span, figures, optimal_workers, snir_deficiency, span, theoretical_speedup, work, CostVariant,
};
use scanforge::network::{build_network, verify_network, Node, ScanNetwork};
use scanforge::operator::{Counted, FloatAdd, IntAdd, Operator};
use scanforge::scan::*;
use scanforge::ScanKind;

fn random_ints(rng: &mut ChaCha8Rng, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1_000_000..1_000_000)).collect()
}

/// Independent left fold.
fn fold_oracle(data: &[i64]) -> Vec<i64> {
    let mut acc = 0i64;
    data.iter()
        .map(|x| {
            acc = acc.wrapping_add(*x);
            acc
        })
        .collect()
}

fn run_kind(kind: ScanKind, data: &[i64], op: &Counted<IntAdd>) -> Vec<i64> {
    match kind {
        ScanKind::Blelloch => blelloch_scan(data, op).unwrap().0,
        _ => inclusive_scan(kind, data, op).unwrap(),
    }
}

#[test]
fn eight_lane_figures() {
    // (size, depth) of each 8-lane circuit
    let expected = [
        (ScanKind::Serial, 7, 7),
        (ScanKind::Blelloch, 14, 6),
        (ScanKind::BrentKung, 11, 5),
        (ScanKind::KoggeStone, 17, 3),
        (ScanKind::Sklansky, 12, 3),
    ];
    for (kind, size, depth) in expected {
        let net = build_network(kind, 8).unwrap();
        assert_eq!((net.size(), net.depth()), (size, depth), "{kind}");
        assert_eq!((work(kind, 8).unwrap(), span(kind, 8).unwrap()), (size as u64, depth as u64), "{kind}");
        let op = Counted::new(IntAdd);
        run_kind(kind, &[1; 8], &op);
        assert_eq!(op.count(), size as u64, "{kind}");
    }
}

#[test]
fn small_examples() {
    assert_eq!(serial_scan(&[1, 2, 3, 4], &IntAdd).unwrap(), vec![1, 3, 6, 10]);
    let op = Counted::new(IntAdd);
    assert_eq!(serial_scan(&[5], &op).unwrap(), vec![5]);
    assert_eq!(op.count(), 0);
    assert_eq!(serial_scan::<IntAdd>(&[], &IntAdd), Err(ScanError::EmptyInput));
    let (ex, total) = blelloch_scan(&[1; 8], &IntAdd).unwrap();
    assert_eq!((ex, total), ((0..8).collect(), 8));
    assert_eq!(brent_kung_scan(&(1..=8).collect::<Vec<_>>(), &IntAdd).unwrap(), vec![1, 3, 6, 10, 15, 21, 28, 36]);
    assert_eq!(sklansky_scan(&[1, 2], &IntAdd).unwrap(), vec![1, 3]);
    assert_eq!(kogge_stone_scan(&[0; 16], &IntAdd).unwrap(), vec![0; 16]);
    assert!(matches!(blelloch_scan(&[1; 6], &IntAdd), Err(ScanError::NotPowerOfTwo(6))));
    assert_eq!(inclusive_to_exclusive(&[1, 3, 6, 10], &IntAdd), vec![0, 1, 3, 6]);
    assert_eq!(inclusive_to_exclusive(&[7], &IntAdd), vec![0]);
    let op = Counted::new(IntAdd);
    assert_eq!(exclusive_to_inclusive(&[0, 1, 3, 6], &4, &op).unwrap(), vec![1, 3, 6, 10]);
    assert_eq!(op.count(), 1);
}

#[test]
fn every_kind_matches_fold_oracle_and_work_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for logn in 1..=10 {
        let n = 1usize << logn;
        for _ in 0..100 {
            let data = random_ints(&mut rng, n);
            let inclusive = fold_oracle(&data);
            for kind in ScanKind::ALL {
                let op = Counted::new(IntAdd);
                let got = run_kind(kind, &data, &op);
                if kind == ScanKind::Blelloch {
                    assert_eq!(got, inclusive_to_exclusive(&inclusive, &IntAdd), "{kind} n={n}");
                } else {
                    assert_eq!(got, inclusive, "{kind} n={n}");
                }
                assert_eq!(op.count(), work(kind, n).unwrap(), "{kind} n={n}");
            }
        }
    }
}

#[test]
fn networks_execute_like_executors_and_verify() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for logn in 1..=8 {
        let n = 1usize << logn;
        let data = random_ints(&mut rng, n);
        for kind in ScanKind::ALL {
            let net = build_network(kind, n).unwrap();
            let report = verify_network(&net).unwrap();
            assert!(report.is_valid(), "{kind} n={n}: {:?}", report.invalid_lanes());
            let f = figures(kind, n).unwrap();
            assert_eq!((net.size() as u64, net.depth() as u64), (f.work, f.span), "{kind} n={n}");
            assert!(f.span <= f.work);
            assert!(snir_deficiency(net.size(), net.depth(), n) <= 0, "{kind} n={n}");
            let (lanes, _) = net.execute(&data, &IntAdd).unwrap();
            assert_eq!(lanes, run_kind(kind, &data, &Counted::new(IntAdd)), "{kind} n={n}");
            let back = ScanNetwork::from_text(&net.to_text()).unwrap();
            assert_eq!(back, net);
            assert!(net.to_dot().starts_with("digraph"));
        }
    }
}

#[test]
fn deficiency_examples() {
    assert_eq!(snir_deficiency(7, 7, 8), 0);
    let s = build_network(ScanKind::Sklansky, 8).unwrap();
    assert_eq!(snir_deficiency(s.size(), s.depth(), 8), -1);
    let b = build_network(ScanKind::Blelloch, 2).unwrap();
    assert_eq!(snir_deficiency(b.size(), b.depth(), 2), -2);
}

#[test]
fn broken_networks_are_flagged() {
    let mut net = build_network(ScanKind::KoggeStone, 8).unwrap();
    let removed = net.steps[2].pop().unwrap();
    let report = verify_network(&net).unwrap();
    assert_eq!(report.invalid_lanes(), vec![removed.dst]);
    let mut dup = build_network(ScanKind::Sklansky, 4).unwrap();
    let first = dup.steps[0][0];
    dup.steps[0].push(first);
    assert!(verify_network(&dup).is_err());
    let mut oob = build_network(ScanKind::Serial, 4).unwrap();
    oob.steps[0].push(Node::apply(0, 9));
    assert!(verify_network(&oob).is_err());
    let single = build_network(ScanKind::Serial, 1).unwrap();
    assert_eq!((single.size(), single.depth()), (0, 0));
    assert!(verify_network(&single).unwrap().is_valid());
}

#[test]
fn float_addition_stays_near_serial() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for logn in 1..=10 {
        let n = 1usize << logn;
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let serial = serial_scan(&data, &FloatAdd).unwrap();
        for kind in [ScanKind::BrentKung, ScanKind::KoggeStone, ScanKind::Sklansky, ScanKind::Blelloch] {
            let got = inclusive_scan(kind, &data, &FloatAdd).unwrap();
            for (a, b) in got.iter().zip(&serial) {
                assert!(((a - b) / b).abs() <= 1e-10, "{kind} n={n}");
                assert!(FloatAdd.approx_eq(a, b, 1e-10));
            }
        }
    }
}

#[test]
fn padded_widths() {
    let data: Vec<i64> = (1..=13).collect();
    for kind in ScanKind::ALL {
        let res = padded_scan(kind, &data, &IntAdd).unwrap();
        let want = if kind.is_exclusive() {
            inclusive_to_exclusive(&fold_oracle(&data), &IntAdd)
        } else {
            fold_oracle(&data)
        };
        assert_eq!(res.values, want, "{kind}");
        assert!(res.padding_applications <= res.applications);
    }
}

#[test]
fn cost_table_examples() {
    assert_eq!(work(ScanKind::KoggeStone, 8).unwrap(), 17);
    assert_eq!(span(ScanKind::Blelloch, 8).unwrap(), 6);
    assert_eq!(work(ScanKind::Serial, 2).unwrap(), 1);
    let b = distributed_span(ScanKind::Blelloch, 64, 8, CostVariant::General).unwrap();
    assert_eq!(b.total_span, 21);
    assert_eq!(b.total_span, b.local1_span + b.global_span + b.local2_span);
    for n in [2, 17, 100] {
        assert_eq!(distributed_span(ScanKind::Serial, n, 1, CostVariant::General).unwrap().total_span, n as u64 - 1);
    }
    let ks = distributed_span(ScanKind::KoggeStone, 512, 512, CostVariant::InclusiveOptimized).unwrap();
    assert_eq!((ks.local1_span, ks.local2_span, ks.global_span), (0, 0, 9));
    assert!(distributed_span(ScanKind::Serial, 4, 5, CostVariant::General).is_err());
}

#[test]
fn optimal_worker_counts_agree_with_sweeps() {
    // Serial: the real-valued optimum sits next to the best integer divisor
    for n in [512usize, 2048, 8] {
        let p0 = optimal_workers(ScanKind::Serial, n).p0;
        assert_eq!(p0, (2.0 * n as f64).sqrt());
        let f = |p: f64| 2.0 * n as f64 / p + p - 3.0;
        let best = (1..=n).map(|p| p as f64).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        assert!((best - p0).abs() <= 1.0, "n={n}");
    }
    assert_eq!(optimal_workers(ScanKind::Serial, 2).p0, 2.0);
    let bl = optimal_workers(ScanKind::Blelloch, 4096);
    assert!((bl.p0 - 2839.0).abs() < 0.5 && bl.saturates);
    let sweep_best = |kind: ScanKind, n: usize| {
        (1..=n.trailing_zeros())
            .map(|l| 1usize << l)
            .max_by(|a, b| {
                let sa = theoretical_speedup(kind, n, *a, CostVariant::General).unwrap();
                let sb = theoretical_speedup(kind, n, *b, CostVariant::General).unwrap();
                sa.total_cmp(&sb)
            })
            .unwrap()
    };
    for kind in [ScanKind::Blelloch, ScanKind::KoggeStone, ScanKind::Sklansky] {
        let n = 4096;
        assert!(optimal_workers(kind, n).saturates);
        assert!(sweep_best(kind, n) >= n / 2, "{kind}");
    }
    // the stationary point of the continuous span
    for kind in [ScanKind::KoggeStone, ScanKind::Sklansky] {
        let n = 100.0;
        let f = |p: f64| 2.0 * n / p - 2.0 + p.log2();
        let p0 = optimal_workers(kind, 100).p0;
        assert!(f(p0) <= f(p0 * 0.99) && f(p0) <= f(p0 * 1.01));
    }
}

#[test]
fn speedup_curve_for_4096() {
    let mut prev_serial = 0.0;
    for l in 1..=9 {
        let p = 1usize << l;
        for v in CostVariant::ALL {
            for kind in ScanKind::ALL {
                let sp = theoretical_speedup(kind, 4096, p, v).unwrap();
                let c = distributed_span(kind, 4096, p, v).unwrap();
                assert_eq!(sp, 4095.0 / c.total_span as f64);
            }
        }
        let s = theoretical_speedup(ScanKind::Serial, 4096, p, CostVariant::General).unwrap();
        if p as f64 <= (2.0 * 4096f64).sqrt() {
            assert!(s > prev_serial);
        }
        prev_serial = s;
    }
}
