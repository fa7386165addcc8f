use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanforge::operator::Operator;
use scanforge::registration::flow::{armijo_accepts, StopReason};
use scanforge::registration::series::{cumulative_distributed, cumulative_serial, series_elements};
use scanforge::registration::*;
use scanforge::{ScanKind, StrategyVariant};

fn random_image(rng: &mut ChaCha8Rng, level: u32) -> GridImage {
    let a: [f64; 6] = std::array::from_fn(|_| rng.random_range(-3.0..3.0));
    let k: [f64; 4] = std::array::from_fn(|_| rng.random_range(1.0..9.0));
    GridImage::from_fn(level, |x, y| {
        a[0] * (k[0] * x + a[1]).sin() + a[2] * (k[1] * y).cos() + a[3] * (k[2] * x * y).sin() + a[4] * x + a[5] * (k[3] * (x - y)).cos()
    })
}

/// Quadrature written out directly with per-node weights.
fn oracle_ncc(r: &GridImage, t: &GridImage) -> f64 {
    let side = r.side();
    let w = |i: usize| if i == 0 || i == side - 1 { 0.5 } else { 1.0 };
    let mut sw = 0.0;
    let (mut sr, mut st) = (0.0, 0.0);
    for y in 0..side {
        for x in 0..side {
            let wt = w(x) * w(y);
            sw += wt;
            sr += wt * r.at(x, y);
            st += wt * t.at(x, y);
        }
    }
    let (mr, mt) = (sr / sw, st / sw);
    let (mut c, mut vr, mut vt) = (0.0, 0.0, 0.0);
    for y in 0..side {
        for x in 0..side {
            let wt = w(x) * w(y) / sw;
            let (dr, dt) = (r.at(x, y) - mr, t.at(x, y) - mt);
            c += wt * dr * dt;
            vr += wt * dr * dr;
            vt += wt * dt * dt;
        }
    }
    c / (vr.sqrt() * vt.sqrt())
}

#[test]
fn ncc_matches_direct_quadrature_and_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let level = rng.random_range(2..6);
        let r = random_image(&mut rng, level);
        let t = random_image(&mut rng, level);
        let v = ncc(&r, &t).unwrap();
        assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&v));
        assert!((v - oracle_ncc(&r, &t)).abs() < 1e-12);
        let (a, b, c, d) = (rng.random_range(-4.0..4.0), 1.5, rng.random_range(-4.0..4.0), -2.0);
        if a == 0.0 || c == 0.0 {
            continue;
        }
        let affine = ncc(&r.map(|x| a * x + b), &t.map(|x| c * x + d)).unwrap();
        assert!((affine - (a * c).signum() * v).abs() < 1e-10);
    }
}

#[test]
fn checkerboard_mean_is_near_zero() {
    for level in 1..7 {
        let side = (1usize << level) + 1;
        let f = GridImage::new(level, (0..side * side).map(|k| if (k % side + k / side) % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        // direct weighted sum
        let w = |i: usize| if i == 0 || i == side - 1 { 0.5 } else { 1.0 };
        let (mut s, mut sw) = (0.0, 0.0);
        for y in 0..side {
            for x in 0..side {
                s += w(x) * w(y) * f.at(x, y);
                sw += w(x) * w(y);
            }
        }
        assert!((image_mean(&f) - s / sw).abs() < 1e-14);
        assert!(image_mean(&f).abs() <= 1.0 / (side - 1) as f64);
        let g = f.map(|v| 3.0 * v + 2.0);
        assert!((image_mean(&g) - (3.0 * image_mean(&f) + 2.0)).abs() < 1e-13);
    }
}

#[test]
fn rectangle_alignment_and_grid_shift() {
    let level = 4;
    let rect0 = GridImage::from_fn(level, |x, y| if (0.25..=0.5).contains(&x) && (0.25..=0.75).contains(&y) { 1.0 } else { 0.0 });
    let rect1 = GridImage::from_fn(level, |x, y| if (0.5..=0.75).contains(&x) && (0.25..=0.75).contains(&y) { 1.0 } else { 0.0 });
    let aligned = apply_deformation(&rect1, &RigidDeformation::translation(0.25, 0.0));
    let side = rect0.side();
    for y in 1..side - 1 {
        for x in 1..side - 1 {
            if x as f64 / 16.0 <= 0.75 {
                assert_eq!(aligned.at(x, y), rect0.at(x, y), "({x},{y})");
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = random_image(&mut rng, 5);
    let h = f.h();
    let g = apply_deformation(&f, &RigidDeformation::translation(h, -2.0 * h));
    for y in 2..f.side() - 1 {
        for x in 1..f.side() - 1 {
            assert_eq!(g.at(x, y), f.at(x + 1, y - 2));
        }
    }
}

#[test]
fn compose_is_pointwise_application() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let mut r = || RigidDeformation::new(rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (a, b, c) = (r(), r(), r());
        let ab = compose(&a, &b);
        for _ in 0..100 {
            let x = [rng.random_range(-1.0..2.0), rng.random_range(-1.0..2.0)];
            let (p, q) = (ab.apply(x), a.apply(b.apply(x)));
            assert!((p[0] - q[0]).abs() < 1e-14 && (p[1] - q[1]).abs() < 1e-14);
        }
        let l = compose(&compose(&a, &b), &c);
        let rr = compose(&a, &compose(&b, &c));
        assert!(l.max_difference(&rr) < 1e-13);
    }
}

/// Cell index and clamp state of every sample position. The energy is
/// smooth in `φ` only while none of these change.
fn cell_signature(t: &GridImage, phi: &RigidDeformation) -> Vec<(i64, i64)> {
    let n = (t.side() - 1) as f64;
    let cell = |u: f64| if u < 0.0 { -1 } else if u > 1.0 { n as i64 + 1 } else { ((u * n).floor() as i64).min(n as i64 - 1) };
    let mut sig = Vec::new();
    for y in 0..t.side() {
        for x in 0..t.side() {
            let p = phi.apply([x as f64 * t.h(), y as f64 * t.h()]);
            sig.push((cell(p[0]), cell(p[1])));
        }
    }
    sig
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let step = 1e-6;
    let mut checked = 0;
    let mut straddling = 0;
    while checked < 50 {
        let level = rng.random_range(3..6);
        let r = random_image(&mut rng, level);
        let t = random_image(&mut rng, level);
        let phi = RigidDeformation::new(rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        let lambda = rng.random_range(0.0..1.0);
        let p = phi.params();
        let probes: Vec<[f64; 3]> = (0..6)
            .map(|k| {
                let mut q = p;
                q[k / 2] += if k % 2 == 0 { step } else { -step };
                q
            })
            .collect();
        let base_sig = cell_signature(&t, &phi);
        if probes.iter().any(|q| cell_signature(&t, &RigidDeformation::from_params(*q)) != base_sig) {
            straddling += 1;
            continue;
        }
        let g = energy_gradient(&r, &t, &phi, lambda).unwrap();
        let e = |q: [f64; 3]| energy(&r, &t, &RigidDeformation::from_params(q), lambda).unwrap();
        let fd: Vec<f64> = (0..3).map(|i| (e(probes[2 * i]) - e(probes[2 * i + 1])) / (2.0 * step)).collect();
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = (0..3).map(|i| (g[i] - fd[i]).powi(2)).sum::<f64>().sqrt();
        assert!(err / norm < 1e-5, "triple {checked}: analytic {g:?} fd {fd:?}");
        checked += 1;
    }
    assert!(straddling < 50, "{straddling} draws straddled a cell edge");
}

#[test]
fn gradient_vanishes_at_constructed_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = random_image(&mut rng, 5);
    let g = energy_gradient(&f, &f, &RigidDeformation::IDENTITY, 0.3).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-10), "{g:?}");
}

#[test]
fn flow_descends_monotonically_with_armijo_steps() {
    let cfg = GradientFlowConfig::default();
    for seed in 0..4 {
        let (frames, _) = generate_series(&SeriesSpec {
            frames: 2,
            level: 6,
            t_scale: 8e-3,
            alpha_scale: 2e-3,
            seed,
            ..Default::default()
        })
        .unwrap();
        let res = gradient_flow(&frames[0], &frames[1], RigidDeformation::IDENTITY, &cfg).unwrap();
        assert!(res.energies.windows(2).all(|w| w[1] <= w[0]), "{:?}", res.energies);
        assert!(res.stop != StopReason::IterationLimit || res.iterations() == cfg.iter_max);
        // each accepted step passes the acceptance test against the
        // previous energy; the slope is not stored, so recheck the cap only
        assert!(res.taus.iter().all(|&t| t > 0.0 && t <= cfg.tau_max));
        assert!(armijo_accepts(1.0, 1.0 - 0.75, -1.0, 0.5, &cfg));
    }
}

#[test]
fn transfer_operators_exact_on_bilinear_fields() {
    let bilinear = |x: f64, y: f64| 0.3 + 2.0 * x - 1.5 * y + 0.75 * x * y;
    for level in 2..7 {
        let fine = GridImage::from_fn(level, bilinear);
        let coarse = restrict(&fine).unwrap();
        let expect = GridImage::from_fn(level - 1, bilinear);
        let s = coarse.side();
        for y in 1..s - 1 {
            for x in 1..s - 1 {
                assert!((coarse.at(x, y) - expect.at(x, y)).abs() < 1e-13);
            }
        }
        let up = prolongate(&expect).unwrap();
        for (a, b) in up.values().iter().zip(fine.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let round = restrict(&prolongate(&expect).unwrap()).unwrap();
        for y in 1..s - 1 {
            for x in 1..s - 1 {
                assert!((round.at(x, y) - expect.at(x, y)).abs() < 1e-13);
            }
        }
        let k = prolongate(&GridImage::constant(level, -2.0)).unwrap();
        assert!(k.values().iter().all(|&v| v == -2.0));
    }
}

#[test]
fn identical_frames_register_to_identity() {
    let (frames, _) = generate_series(&SeriesSpec { frames: 2, level: 7, ..Default::default() }).unwrap();
    let ml = MultilevelConfig { m0: 5, m1: 7 };
    let phi = register_pair(&frames[0], &frames[0], RigidDeformation::IDENTITY, &ml, &GradientFlowConfig::default()).unwrap();
    assert!(phi.alpha.abs() < 1e-6 && phi.t[0].abs() < 1e-6 && phi.t[1].abs() < 1e-6, "{phi:?}");
}

#[test]
fn known_shift_is_recovered() {
    // single translated pair, zero rotation
    let spec = SeriesSpec { frames: 2, level: 8, seed: 21, ..Default::default() };
    let (frames0, truth) = generate_series(&SeriesSpec { alpha_scale: 0.0, t_scale: 0.0, ..spec }).unwrap();
    assert_eq!(truth.drifts[0], RigidDeformation::IDENTITY);
    let shift = RigidDeformation::translation(0.01, -0.005);
    let moved = apply_deformation(&frames0[0], &shift.inverse());
    let ml = MultilevelConfig::default();
    let phi = register_pair(&frames0[0], &moved, RigidDeformation::IDENTITY, &ml, &GradientFlowConfig::default()).unwrap();
    assert!(phi.max_difference(&shift) < 0.5 * ml.fine_spacing(), "{phi:?}");
}

#[test]
fn series_round_trip_and_parenthesizations() {
    let spec = SeriesSpec { frames: 8, level: 8, seed: 4, ..Default::default() };
    let (frames, truth) = generate_series(&spec).unwrap();
    let ml = MultilevelConfig::default();
    let h = ml.fine_spacing();
    let store = Arc::new(FrameStore::new(&frames, ml).unwrap());
    let gf = GradientFlowConfig::default();
    let neighbors = preprocess_series(&store, &gf).unwrap();
    for (i, (got, want)) in neighbors.iter().zip(&truth.drifts).enumerate() {
        assert!(got.max_difference(want) < 0.5 * h, "pair {i}: {got:?} vs {want:?}");
        // determinism of the parallel preprocessing
        assert_eq!(*got, store.register(i, i + 1, RigidDeformation::IDENTITY, &gf).unwrap());
    }
    let op = RegistrationOp::new(store.clone(), gf);
    let e = series_elements(&neighbors);
    let left = op.apply(&op.apply(&e[1], &e[2]).unwrap(), &e[3]).unwrap();
    let right = op.apply(&e[1], &op.apply(&e[2], &e[3]).unwrap()).unwrap();
    assert!(op.approx_eq(&left, &right, h), "{left:?} vs {right:?}");
    let serial = cumulative_serial(&op, &neighbors).unwrap();
    let par = cumulative_distributed(&op, &neighbors, StrategyVariant::GeneralExclusive, ScanKind::Blelloch, 4).unwrap();
    for i in 0..8 {
        assert!(serial[i].max_difference(&truth.cumulative[i]) < 0.5 * h, "frame {i}");
        assert!(serial[i].max_difference(&par[i]) < h, "frame {i}");
    }
    let (RegElem::Pair { phi: a, .. }, RegElem::Pair { phi: b, .. }) = (left, right) else { panic!() };
    let line = store.energy_line(1, 4, &a, &b, gf.lambda, 21).unwrap();
    assert_eq!(line.len(), 21);
    assert_eq!((line[0].0, line[20].0), (0.0, 1.0));
    let mean = store.aligned_mean(&serial).unwrap();
    assert_eq!(mean.level(), 8);
}

#[test]
fn refine_with_identity_extension_is_noop() {
    let (frames, truth) = generate_series(&SeriesSpec { frames: 2, level: 7, seed: 8, ..Default::default() }).unwrap();
    let ml = MultilevelConfig { m0: 5, m1: 7 };
    let gf = GradientFlowConfig::default();
    let phi01 = register_pair(&frames[0], &frames[1], RigidDeformation::IDENTITY, &ml, &gf).unwrap();
    let r = series::refine(&phi01, &RigidDeformation::IDENTITY, &frames[0], &frames[1], &ml, &gf).unwrap();
    assert!(r.max_difference(&phi01) < ml.fine_spacing());
    assert!(r.max_difference(&truth.drifts[0]) < ml.fine_spacing());
}
