//! `register`: align a frame series through a prefix scan of deformations.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use scanforge::registration::io::{format_deformations, read_manifest, write_frame};
use scanforge::registration::series::{cumulative_distributed, cumulative_serial, preprocess_series_timed};
use scanforge::registration::{
    generate_series, FrameStore, GridImage, RegError, RegistrationOp, RigidDeformation, SeriesGroundTruth,
};
use scanforge::{ScanKind, StrategyVariant};

use crate::output::{num, write_file, Table};
use crate::scaling::hardware_threads;
use crate::{CliError, ExperimentSpec};

pub const DEFORMATIONS_HEADER: &[&str] = &["frame", "alpha", "t0", "t1", "drift_alpha", "drift_t0", "drift_t1"];
pub const TRUTH_HEADER: &[&str] = &["frame", "alpha", "t0", "t1", "error_h"];
pub const TIMINGS_HEADER: &[&str] = &["phase", "index", "seconds"];
pub const ENERGY_HEADER: &[&str] = &["s", "energy"];

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterReport {
    /// `φ_{0,i}` for every frame.
    pub cumulative: Vec<RigidDeformation>,
    /// `φ_{i,i+1}`.
    pub neighbors: Vec<RigidDeformation>,
    pub truth: Option<SeriesGroundTruth>,
    /// Fine grid spacing.
    pub h: f64,
    /// Largest cumulative error against the ground truth, in units of `h`.
    pub max_error_h: Option<f64>,
    pub preprocess_seconds: Vec<f64>,
    /// One entry per operator application during the scan.
    pub scan_seconds: Vec<f64>,
    pub out_dir: PathBuf,
    pub warnings: Vec<String>,
}

fn reg_err(e: RegError) -> CliError {
    match e {
        RegError::Io { path, message } => CliError::Io { path, message },
        RegError::Format(m) => CliError::Io {
            path: "<input>".into(),
            message: m,
        },
        other => CliError::compute(other),
    }
}

fn load_frames(spec: &ExperimentSpec) -> Result<(Vec<GridImage>, Option<SeriesGroundTruth>), CliError> {
    match &spec.manifest {
        Some(path) => {
            let frames = read_manifest(path).map_err(reg_err)?;
            if frames.len() < 2 {
                return Err(CliError::Usage(format!("{} lists {} frames; need two or more", path.display(), frames.len())));
            }
            if let Some(i) = frames.iter().position(|f| f.level() != frames[0].level()) {
                return Err(CliError::Usage(format!(
                    "frame {i} has level {}, frame 0 has level {}",
                    frames[i].level(),
                    frames[0].level()
                )));
            }
            Ok((frames, None))
        }
        None => {
            let (frames, truth) = generate_series(&spec.series()).map_err(|e| CliError::Usage(e.to_string()))?;
            Ok((frames, Some(truth)))
        }
    }
}

fn save_frames(dir: &Path, frames: &[GridImage]) -> Result<(), CliError> {
    let mut manifest = String::new();
    for (i, f) in frames.iter().enumerate() {
        let name = format!("frame_{i:03}.pgm");
        let path = dir.join(&name);
        if let Some(d) = path.parent() {
            std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
        }
        write_frame(&path, f).map_err(reg_err)?;
        manifest.push_str(&name);
        manifest.push('\n');
    }
    write_file(&dir.join("manifest.txt"), &manifest)
}

/// Registers every frame to frame 0 and writes the results under `out`.
///
/// `p = 1` (the default) scans serially; otherwise the first listed
/// variant and kind run on `p` threads.
pub fn cmd_register(spec: &ExperimentSpec, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<RegisterReport, CliError> {
    let out_dir = spec.out.clone().unwrap_or_else(|| PathBuf::from("scanforge-register"));
    let (frames, truth) = load_frames(spec)?;
    let mut ml = spec.multilevel();
    ml.m1 = frames[0].level();
    ml.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let gf = spec.gradient_flow();
    if spec.save_frames {
        save_frames(&out_dir.join("frames"), &frames)?;
    }

    let store = Arc::new(FrameStore::new(&frames, ml).map_err(reg_err)?);
    let timed = preprocess_series_timed(&store, &gf).map_err(reg_err)?;
    let neighbors: Vec<RigidDeformation> = timed.iter().map(|(phi, _)| *phi).collect();
    let preprocess_seconds: Vec<f64> = timed.iter().map(|(_, t)| *t).collect();

    let op = RegistrationOp::new(Arc::clone(&store), gf).with_timings();
    let p = spec.p.as_ref().map_or(1, |ps| ps[0]);
    let variant = spec.variants_or(&[StrategyVariant::GeneralExclusive])[0];
    let kind = spec.kinds_or(&[ScanKind::Blelloch])[0];
    let mut warnings = Vec::new();
    if p > hardware_threads() {
        warnings.push(format!("p={p} oversubscribes {} hardware threads", hardware_threads()));
    }
    for w in &warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let cumulative = if p == 1 {
        cumulative_serial(&op, &neighbors)
    } else {
        cumulative_distributed(&op, &neighbors, variant, kind, p)
    }
    .map_err(CliError::compute)?;
    let scan_seconds = op.take_timings();

    let h = ml.fine_spacing();
    let max_error_h = truth.as_ref().map(|t| {
        cumulative
            .iter()
            .zip(&t.cumulative)
            .map(|(a, b)| a.max_difference(b) / h)
            .fold(0.0, f64::max)
    });

    write_file(&out_dir.join("deformations.txt"), &format_deformations(&cumulative))?;
    let mut table = Table::new(DEFORMATIONS_HEADER);
    for (i, phi) in cumulative.iter().enumerate() {
        let drift = if i == 0 { RigidDeformation::IDENTITY } else { neighbors[i - 1] };
        table.push(vec![
            i.to_string(),
            num(phi.alpha),
            num(phi.t[0]),
            num(phi.t[1]),
            num(drift.alpha),
            num(drift.t[0]),
            num(drift.t[1]),
        ]);
    }
    write_file(&out_dir.join("deformations.csv"), &table.to_csv())?;
    if let Some(t) = &truth {
        let mut table = Table::new(TRUTH_HEADER);
        for (i, (phi, est)) in t.cumulative.iter().zip(&cumulative).enumerate() {
            table.push(vec![
                i.to_string(),
                num(phi.alpha),
                num(phi.t[0]),
                num(phi.t[1]),
                num(phi.max_difference(est) / h),
            ]);
        }
        write_file(&out_dir.join("truth.csv"), &table.to_csv())?;
    }
    let mut timings = Table::new(TIMINGS_HEADER);
    for (i, s) in preprocess_seconds.iter().enumerate() {
        timings.push(vec!["preprocess".into(), i.to_string(), num(*s)]);
    }
    for (i, s) in scan_seconds.iter().enumerate() {
        timings.push(vec!["scan".into(), i.to_string(), num(*s)]);
    }
    write_file(&out_dir.join("timings.csv"), &timings.to_csv())?;
    let mean = store.aligned_mean(&cumulative).map_err(reg_err)?;
    let mean_path = out_dir.join("mean.pgm");
    write_frame(&mean_path, &mean).map_err(reg_err)?;
    if spec.energy_line > 0 {
        let line = store
            .energy_line(0, 1, &cumulative[1], &RigidDeformation::IDENTITY, gf.lambda, spec.energy_line)
            .map_err(reg_err)?;
        let mut table = Table::new(ENERGY_HEADER);
        for (s, e) in line {
            table.push(vec![num(s), num(e)]);
        }
        write_file(&out_dir.join("energy_line.csv"), &table.to_csv())?;
    }

    let mode = if p == 1 { "serial".to_string() } else { format!("{variant}/{kind} p={p}") };
    let _ = writeln!(stdout, "frames: {} at level {}", frames.len(), ml.m1);
    let _ = writeln!(stdout, "scan: {mode}, {} applications", scan_seconds.len());
    if let Some(e) = max_error_h {
        let _ = writeln!(stdout, "max cumulative error: {e:.4} h");
    }
    let _ = writeln!(stdout, "output: {}", out_dir.display());
    Ok(RegisterReport {
        cumulative,
        neighbors,
        truth,
        h,
        max_error_h,
        preprocess_seconds,
        scan_seconds,
        out_dir,
        warnings,
    })
}
