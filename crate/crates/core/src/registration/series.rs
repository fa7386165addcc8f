use std::f64::consts::TAU;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use super::deformation::{compose, RigidDeformation};
use super::energy::{apply_deformation, EnergyProblem};
use super::flow::GradientFlowConfig;
use super::image::{image_std, GridImage};
use super::multilevel::{register_pair, register_pyramids, MultilevelConfig, Pyramid};
use super::RegError;
use crate::network::ScanKind;
use crate::operator::{OpError, Operator};
use crate::runtime::{run_distributed, RuntimeError};
use crate::scan::{serial_scan, ScanError};
use crate::strategy::StrategyVariant;

/// Parameters of a synthetic drifting series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSpec {
    pub frames: usize,
    pub level: u32,
    /// Typical per-frame rotation, radians.
    pub alpha_scale: f64,
    /// Typical per-frame translation length, domain units.
    pub t_scale: f64,
    /// Noise standard deviation over signal standard deviation.
    pub noise_ratio: f64,
    pub seed: u64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        Self {
            frames: 16,
            level: 8,
            alpha_scale: 4e-4,
            t_scale: 2e-3,
            noise_ratio: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesGroundTruth {
    /// `drifts[i] = φ_{i,i+1}`.
    pub drifts: Vec<RigidDeformation>,
    /// `cumulative[i] = φ_{0,i}`; `cumulative[0]` is the identity.
    pub cumulative: Vec<RigidDeformation>,
    pub noise_std: f64,
    pub seed: u64,
}

struct Wave {
    k: [f64; 2],
    amp: f64,
    phase: f64,
}

struct Blob {
    c: [f64; 2],
    width: f64,
    amp: f64,
}

/// Smooth mixture of plane waves and Gaussian blobs that fades to zero
/// within `MARGIN` of the border.
struct BasePattern {
    waves: Vec<Wave>,
    blobs: Vec<Blob>,
}

const MARGIN: f64 = 0.1;
const FINE: (f64, f64) = (10.0, 20.0);

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

impl BasePattern {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..8)
            .map(|i| {
                let freq = if i < 2 { rng.random_range(2.0..4.0) } else { rng.random_range(FINE.0..FINE.1) };
                let dir = rng.random_range(0.0..TAU);
                Wave {
                    k: [TAU * freq * dir.cos(), TAU * freq * dir.sin()],
                    amp: if i < 2 { 0.5 } else { 1.0 },
                    phase: rng.random_range(0.0..TAU),
                }
            })
            .collect();
        let blobs = (0..5)
            .map(|_| Blob {
                c: [rng.random_range(0.25..0.75), rng.random_range(0.25..0.75)],
                width: rng.random_range(0.03..0.08),
                amp: rng.random_range(1.0..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            })
            .collect();
        Self { waves, blobs }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let window = smoothstep(x / MARGIN)
            * smoothstep((1.0 - x) / MARGIN)
            * smoothstep(y / MARGIN)
            * smoothstep((1.0 - y) / MARGIN);
        if window == 0.0 {
            return 0.0;
        }
        let waves: f64 = self
            .waves
            .iter()
            .map(|w| w.amp * (w.k[0] * x + w.k[1] * y + w.phase).sin())
            .sum();
        let blobs: f64 = self
            .blobs
            .iter()
            .map(|b| {
                let r2 = (x - b.c[0]).powi(2) + (y - b.c[1]).powi(2);
                b.amp * (-r2 / (2.0 * b.width * b.width)).exp()
            })
            .sum();
        window * (waves + blobs)
    }
}

/// Frames `f_i(y) = base(φ_{0,i}⁻¹(y)) + noise` with slowly drifting
/// neighbor deformations.
pub fn generate_series(spec: &SeriesSpec) -> Result<(Vec<GridImage>, SeriesGroundTruth), RegError> {
    if spec.frames < 2 {
        return Err(RegError::InvalidConfig("a series needs at least two frames".into()));
    }
    if spec.level > 12 {
        return Err(RegError::InvalidLevel(spec.level));
    }
    for (name, v) in [
        ("alpha_scale", spec.alpha_scale),
        ("t_scale", spec.t_scale),
        ("noise_ratio", spec.noise_ratio),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(RegError::InvalidConfig(format!("{name} must be >= 0, got {v}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = BasePattern::random(&mut rng);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let heading = rng.random_range(0.0..TAU);
    let wobble = Normal::new(0.0, 0.4).expect("valid normal");
    let drifts: Vec<RigidDeformation> = (1..spec.frames)
        .map(|_| {
            let alpha = sign * spec.alpha_scale * rng.random_range(0.5..1.5);
            let len = spec.t_scale * rng.random_range(0.5..1.5);
            let dir = heading + wobble.sample(&mut rng);
            RigidDeformation::new(alpha, len * dir.cos(), len * dir.sin())
        })
        .collect();
    let mut cumulative = vec![RigidDeformation::IDENTITY];
    for d in &drifts {
        let last = *cumulative.last().expect("non-empty");
        cumulative.push(compose(d, &last));
    }
    let clean = GridImage::from_fn(spec.level, |x, y| base.eval(x, y));
    let noise_std = spec.noise_ratio * image_std(&clean);
    let frames = cumulative
        .par_iter()
        .enumerate()
        .map(|(i, phi)| {
            let inv = phi.inverse();
            let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
            noise_rng.set_stream(i as u64 + 1);
            let clean = GridImage::from_fn(spec.level, |x, y| {
                let p = inv.apply([x, y]);
                base.eval(p[0], p[1])
            });
            if noise_std == 0.0 {
                return clean;
            }
            let noise = Normal::new(0.0, noise_std).expect("valid normal");
            let values = clean.into_values().into_iter().map(|v| v + noise.sample(&mut noise_rng)).collect();
            GridImage::new(spec.level, values).expect("finite samples")
        })
        .collect();
    Ok((
        frames,
        SeriesGroundTruth {
            drifts,
            cumulative,
            noise_std,
            seed: spec.seed,
        },
    ))
}

/// Multilevel pyramids of every frame, built once and shared read-only.
#[derive(Debug)]
pub struct FrameStore {
    ml: MultilevelConfig,
    pyramids: Vec<Pyramid>,
}

impl FrameStore {
    pub fn new(frames: &[GridImage], ml: MultilevelConfig) -> Result<Self, RegError> {
        ml.validate()?;
        let pyramids = frames
            .par_iter()
            .enumerate()
            .map(|(i, f)| Pyramid::build(f, &ml).map_err(|e| e.for_pair(i, i)))
            .collect::<Result<_, _>>()?;
        Ok(Self { ml, pyramids })
    }

    pub fn len(&self) -> usize {
        self.pyramids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pyramids.is_empty()
    }

    pub fn multilevel(&self) -> MultilevelConfig {
        self.ml
    }

    pub fn pyramid(&self, i: usize) -> Result<&Pyramid, RegError> {
        self.pyramids.get(i).ok_or(RegError::FrameOutOfRange {
            index: i,
            len: self.pyramids.len(),
        })
    }

    pub fn frame(&self, i: usize) -> Result<&GridImage, RegError> {
        Ok(self.pyramid(i)?.image(self.ml.m1))
    }

    /// Function A on stored frames.
    pub fn register(
        &self,
        i: usize,
        j: usize,
        phi0: RigidDeformation,
        gf: &GradientFlowConfig,
    ) -> Result<RigidDeformation, RegError> {
        let run = || -> Result<RigidDeformation, RegError> {
            let levels = register_pyramids(self.pyramid(i)?, self.pyramid(j)?, phi0, gf)?;
            Ok(levels.last().expect("at least two levels").phi)
        };
        run().map_err(|e| e.for_pair(i, j))
    }

    /// Energy at the finest level along `s·a + (1−s)·b` for `samples`
    /// evenly spaced `s ∈ [0,1]`.
    pub fn energy_line(
        &self,
        i: usize,
        j: usize,
        a: &RigidDeformation,
        b: &RigidDeformation,
        lambda: f64,
        samples: usize,
    ) -> Result<Vec<(f64, f64)>, RegError> {
        let level = self.ml.m1;
        let problem = EnergyProblem::new(self.pyramid(i)?.prepared(level), self.pyramid(j)?.image(level), lambda)?;
        (0..samples)
            .map(|k| {
                let s = if samples == 1 { 0.0 } else { k as f64 / (samples - 1) as f64 };
                Ok((s, problem.value(&a.blend(b, s))?))
            })
            .collect()
    }

    /// Mean of all frames after aligning each to frame 0 with `cumulative`.
    pub fn aligned_mean(&self, cumulative: &[RigidDeformation]) -> Result<GridImage, RegError> {
        if cumulative.len() != self.len() {
            return Err(RegError::InvalidConfig(format!(
                "{} deformations for {} frames",
                cumulative.len(),
                self.len()
            )));
        }
        let mut acc = vec![0.0; self.frame(0)?.values().len()];
        for (i, phi) in cumulative.iter().enumerate() {
            let aligned = apply_deformation(self.frame(i)?, phi);
            for (a, v) in acc.iter_mut().zip(aligned.values()) {
                *a += v;
            }
        }
        let n = self.len() as f64;
        GridImage::new(self.ml.m1, acc.into_iter().map(|v| v / n).collect())
    }
}

/// Function B: `A(f_i, f_k, φ_{j,k} ∘ φ_{i,j})`.
pub fn refine(
    phi_ij: &RigidDeformation,
    phi_jk: &RigidDeformation,
    f_i: &GridImage,
    f_k: &GridImage,
    ml: &MultilevelConfig,
    gf: &GradientFlowConfig,
) -> Result<RigidDeformation, RegError> {
    register_pair(f_i, f_k, compose(phi_jk, phi_ij), ml, gf)
}

/// `φ_{i,i+1}` for every neighbor pair, registered in parallel.
pub fn preprocess_series(store: &FrameStore, gf: &GradientFlowConfig) -> Result<Vec<RigidDeformation>, RegError> {
    Ok(preprocess_series_timed(store, gf)?.into_iter().map(|(phi, _)| phi).collect())
}

/// As [`preprocess_series`], with the wall time of each pair in seconds.
pub fn preprocess_series_timed(
    store: &FrameStore,
    gf: &GradientFlowConfig,
) -> Result<Vec<(RigidDeformation, f64)>, RegError> {
    gf.validate()?;
    if store.len() < 2 {
        return Err(RegError::InvalidConfig("a series needs at least two frames".into()));
    }
    (0..store.len() - 1)
        .into_par_iter()
        .map(|i| {
            let start = Instant::now();
            let phi = store.register(i, i + 1, RigidDeformation::IDENTITY, gf)?;
            Ok((phi, start.elapsed().as_secs_f64()))
        })
        .collect()
}

/// Scan element: either the neutral element or `φ_{from,to}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegElem {
    Identity,
    Pair {
        from: usize,
        to: usize,
        phi: RigidDeformation,
    },
}

/// `[Identity, φ_{0,1}, φ_{1,2}, …]`; its inclusive scan holds `φ_{0,i}` in
/// lane `i`.
pub fn series_elements(neighbors: &[RigidDeformation]) -> Vec<RegElem> {
    std::iter::once(RegElem::Identity)
        .chain(neighbors.iter().enumerate().map(|(i, phi)| RegElem::Pair {
            from: i,
            to: i + 1,
            phi: *phi,
        }))
        .collect()
}

/// `⊙_B` over a shared frame store. Optionally records the wall time of
/// every registration it performs.
#[derive(Debug)]
pub struct RegistrationOp {
    store: Arc<FrameStore>,
    config: GradientFlowConfig,
    timings: Option<Mutex<Vec<f64>>>,
}

impl RegistrationOp {
    pub fn new(store: Arc<FrameStore>, config: GradientFlowConfig) -> Self {
        Self {
            store,
            config,
            timings: None,
        }
    }

    pub fn with_timings(mut self) -> Self {
        self.timings = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn store(&self) -> &FrameStore {
        &self.store
    }

    pub fn config(&self) -> &GradientFlowConfig {
        &self.config
    }

    /// Recorded durations in seconds, in completion order.
    pub fn take_timings(&self) -> Vec<f64> {
        self.timings
            .as_ref()
            .map(|t| std::mem::take(&mut *t.lock().unwrap_or_else(|e| e.into_inner())))
            .unwrap_or_default()
    }

    pub fn combine(&self, left: &RegElem, right: &RegElem) -> Result<RegElem, RegError> {
        match (left, right) {
            (RegElem::Identity, x) | (x, RegElem::Identity) => Ok(*x),
            (
                RegElem::Pair { from, to: mid, phi: a },
                RegElem::Pair {
                    from: mid2,
                    to,
                    phi: b,
                },
            ) => {
                if mid != mid2 {
                    return Err(RegError::IndexMismatch {
                        left_to: *mid,
                        right_from: *mid2,
                    });
                }
                let start = Instant::now();
                let phi = self.store.register(*from, *to, compose(b, a), &self.config)?;
                if let Some(t) = &self.timings {
                    t.lock().unwrap_or_else(|e| e.into_inner()).push(start.elapsed().as_secs_f64());
                }
                Ok(RegElem::Pair {
                    from: *from,
                    to: *to,
                    phi,
                })
            }
        }
    }
}

impl Operator for RegistrationOp {
    type Elem = RegElem;

    fn identity(&self) -> RegElem {
        RegElem::Identity
    }

    fn apply(&self, left: &RegElem, right: &RegElem) -> Result<RegElem, OpError> {
        self.combine(left, right).map_err(|e| OpError::new(e.to_string()))
    }

    /// Same frame indices and deformations within `tolerance` of each other
    /// at every point of the domain.
    fn approx_eq(&self, a: &RegElem, b: &RegElem, tolerance: f64) -> bool {
        match (a, b) {
            (RegElem::Identity, RegElem::Identity) => true,
            (
                RegElem::Pair { from, to, phi },
                RegElem::Pair {
                    from: f2,
                    to: t2,
                    phi: p2,
                },
            ) => from == f2 && to == t2 && phi.max_difference(p2) < tolerance,
            _ => false,
        }
    }

    fn default_tolerance(&self) -> f64 {
        self.store.ml.fine_spacing()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error(transparent)]
    Registration(#[from] RegError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("lane {lane} does not hold a deformation from frame 0")]
    UnexpectedElement { lane: usize },
}

fn cumulative_from(elems: Vec<RegElem>) -> Result<Vec<RigidDeformation>, SeriesError> {
    elems
        .into_iter()
        .enumerate()
        .map(|(lane, e)| match e {
            RegElem::Identity if lane == 0 => Ok(RigidDeformation::IDENTITY),
            RegElem::Pair { from: 0, to, phi } if to == lane => Ok(phi),
            _ => Err(SeriesError::UnexpectedElement { lane }),
        })
        .collect()
}

/// `φ_{0,i}` for every frame by a serial left-to-right scan.
pub fn cumulative_serial(op: &RegistrationOp, neighbors: &[RigidDeformation]) -> Result<Vec<RigidDeformation>, SeriesError> {
    cumulative_from(serial_scan(&series_elements(neighbors), op)?)
}

/// `φ_{0,i}` for every frame by a distributed scan on `p` threads.
pub fn cumulative_distributed(
    op: &RegistrationOp,
    neighbors: &[RigidDeformation],
    variant: StrategyVariant,
    kind: ScanKind,
    p: usize,
) -> Result<Vec<RigidDeformation>, SeriesError> {
    cumulative_from(run_distributed(&series_elements(neighbors), op, variant, kind, p)?.values)
}
