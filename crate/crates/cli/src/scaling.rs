//! `simulate` and `scaling`: speedup tables from the simulator or threads.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use scanforge::cost::{distributed_span, strategy_cost, CostVariant};
use scanforge::scaling::{
    strong_scaling_experiment, weak_scaling_experiment, Delay, ScalingRow, SimulatedTimer, ThreadTimer, Timer, WeakRow,
};
use scanforge::sim::{simulate, CostModel};
use scanforge::{ScanKind, StrategyVariant};

use crate::config::{CostKind, Runner, ScalingMode};
use crate::output::{emit, num, opt_num, read_csv, write_file, Table};
use crate::{CliError, ExperimentSpec};

pub const STRONG_HEADER: &[&str] = &["variant", "kind", "n", "p", "rep", "t_serial", "t_parallel", "speedup", "sigma"];
pub const SIMULATE_HEADER: &[&str] = &[
    "variant",
    "kind",
    "n",
    "p",
    "rep",
    "t_serial",
    "t_parallel",
    "speedup",
    "sigma",
    "theoretical_speedup",
];
pub const WEAK_HEADER: &[&str] = &["variant", "kind", "k", "n", "p", "rep", "t_parallel", "sigma", "growth_pct"];
pub const THEORY_HEADER: &[&str] = &[
    "kind",
    "variant",
    "N",
    "P",
    "local1",
    "global",
    "local2",
    "total_span",
    "total_work",
    "speedup",
];
pub const TIMELINE_HEADER: &[&str] = &["variant", "kind", "n", "p", "worker", "event", "start", "end"];

const POW2_TO_512: [usize; 10] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512];

#[derive(Debug, Clone, PartialEq)]
pub struct StrongRow {
    pub row: ScalingRow,
    /// `(n − 1) / total_span` of the strategy; `simulate` only.
    pub theoretical: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalingReport {
    pub strong: Vec<StrongRow>,
    pub weak: Vec<WeakRow>,
    pub warnings: Vec<String>,
    /// The CSV as written.
    pub csv: String,
}

/// Costs from a timing CSV with a `seconds` column, or one number per line.
pub fn load_trace(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |m: String| CliError::io(path, m);
    let first = text.lines().next().unwrap_or("");
    let values: Vec<f64> = if first.split(',').any(|h| h.trim() == "seconds") {
        let (header, rows) = read_csv(&text).map_err(|e| bad(e.to_string()))?;
        let col = header.iter().position(|h| h == "seconds").expect("checked above");
        rows.iter()
            .map(|r| r.get(col).and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("bad row {r:?}"))))
            .collect::<Result<_, _>>()?
    } else {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.parse().map_err(|_| bad(format!("bad value {l:?}"))))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(bad("trace is empty".into()));
    }
    Ok(values)
}

fn cost_model(spec: &ExperimentSpec) -> Result<CostModel, CliError> {
    let trace = match (spec.cost, &spec.cost_trace) {
        (CostKind::Trace, Some(p)) => load_trace(p)?,
        (CostKind::Trace, None) => return Err(CliError::Usage("cost=trace needs cost-trace".into())),
        _ => Vec::new(),
    };
    let model = spec.cost_model(|| trace);
    model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(model)
}

fn strong_fields(r: &ScalingRow) -> Vec<String> {
    vec![
        r.variant.to_string(),
        r.kind.to_string(),
        r.n.to_string(),
        r.p.to_string(),
        r.rep.map_or("mean".to_string(), |k| k.to_string()),
        num(r.t_serial),
        num(r.t_parallel),
        num(r.speedup),
        opt_num(r.sigma),
    ]
}

fn weak_fields(r: &WeakRow) -> Vec<String> {
    vec![
        r.variant.to_string(),
        r.kind.to_string(),
        r.k.to_string(),
        r.n.to_string(),
        r.p.to_string(),
        r.rep.map_or("mean".to_string(), |k| k.to_string()),
        num(r.t_parallel),
        opt_num(r.sigma),
        opt_num(r.growth_pct),
    ]
}

pub fn theoretical_speedup(variant: StrategyVariant, kind: ScanKind, n: usize, p: usize) -> Result<f64, CliError> {
    let c = strategy_cost(kind, n, p, variant).map_err(CliError::compute)?;
    Ok(if c.total_span == 0 { 1.0 } else { (n as f64 - 1.0) / c.total_span as f64 })
}

/// Cost table for the named cost variants.
pub fn theory_table(kinds: &[ScanKind], ns: &[usize], ps: &[usize]) -> Result<Table, CliError> {
    let mut t = Table::new(THEORY_HEADER);
    for &kind in kinds {
        for variant in CostVariant::ALL {
            for &n in ns {
                for &p in ps.iter().filter(|&&p| p <= n) {
                    let c = distributed_span(kind, n, p, variant).map_err(CliError::compute)?;
                    let sp = if c.total_span == 0 { 1.0 } else { (n as f64 - 1.0) / c.total_span as f64 };
                    t.push(vec![
                        kind.to_string(),
                        variant.to_string(),
                        n.to_string(),
                        p.to_string(),
                        c.local1_span.to_string(),
                        c.global_span.to_string(),
                        c.local2_span.to_string(),
                        c.total_span.to_string(),
                        c.total_work.to_string(),
                        num(sp),
                    ]);
                }
            }
        }
    }
    Ok(t)
}

fn gnuplot_script(csv: &Path, with_theory: bool) -> String {
    let mut s = format!(
        "set datafile separator ','\n\
         set logscale xy 2\n\
         set xlabel 'workers'\n\
         set ylabel 'speedup'\n\
         set key left top\n\
         # aggregate rows only\n\
         plot '{0}' using (strcol(5) eq 'mean' ? $4 : 1/0):8 with linespoints title 'measured'",
        csv.display()
    );
    if with_theory {
        s.push_str(&format!(
            ", \\\n     '{}' using (strcol(5) eq 'mean' ? $4 : 1/0):10 with lines title 'bound'",
            csv.display()
        ));
    }
    s.push('\n');
    s
}

fn check_sizes(variant: StrategyVariant, kind: ScanKind, n: usize, p: usize) -> Result<(), CliError> {
    if p > n {
        return Err(CliError::Usage(format!("p={p} exceeds n={n}")));
    }
    if kind != ScanKind::Serial && p > 1 && !p.is_power_of_two() {
        return Err(CliError::Usage(format!("{variant}/{kind} needs a power-of-two p, got {p}")));
    }
    Ok(())
}

/// Simulated strong scaling with a theoretical-bound column.
pub fn cmd_simulate(spec: &ExperimentSpec, stdout: &mut dyn Write) -> Result<ScalingReport, CliError> {
    let model = cost_model(spec)?;
    let kinds = spec.kinds_or(&ScanKind::ALL);
    let variants = spec.variants_or(&StrategyVariant::ALL);
    let ns = spec.n_or(&[4096]);
    let ps = spec.p_or(&POW2_TO_512);
    let mut timer = SimulatedTimer { model: model.clone() };
    let mut table = Table::new(SIMULATE_HEADER);
    let mut timeline = Table::new(TIMELINE_HEADER);
    let mut report = ScalingReport::default();
    for &variant in &variants {
        for &kind in &kinds {
            for &n in &ns {
                for &p in &ps {
                    check_sizes(variant, kind, n, p)?;
                }
                let rows = strong_scaling_experiment(variant, kind, n, &ps, spec.repetitions, &mut timer)
                    .map_err(CliError::compute)?;
                for row in rows {
                    let theoretical = theoretical_speedup(variant, kind, n, row.p)?;
                    let mut fields = strong_fields(&row);
                    fields.push(num(theoretical));
                    table.push(fields);
                    report.strong.push(StrongRow {
                        row,
                        theoretical: Some(theoretical),
                    });
                }
                if spec.timeline.is_some() {
                    let p = *ps.iter().max().expect("non-empty p list");
                    let sim = simulate(variant, kind, n, p, &model).map_err(CliError::compute)?;
                    for s in &sim.timeline {
                        timeline.push(vec![
                            variant.to_string(),
                            kind.to_string(),
                            n.to_string(),
                            p.to_string(),
                            s.worker.to_string(),
                            s.event.name().to_string(),
                            num(s.start),
                            num(s.end),
                        ]);
                    }
                }
            }
        }
    }
    report.csv = table.to_csv();
    emit(spec.out.as_deref(), &report.csv, stdout)?;
    if let Some(path) = &spec.timeline {
        write_file(path, &timeline.to_csv())?;
    }
    if let Some(path) = &spec.theory_csv {
        write_file(path, &theory_table(&kinds, &ns, &ps)?.to_csv())?;
    }
    if let Some(path) = &spec.gnuplot {
        let csv = spec.out.as_deref().unwrap_or(Path::new("simulate.csv"));
        write_file(path, &gnuplot_script(csv, true))?;
    }
    Ok(report)
}

/// Hardware threads, or 1 if unknown.
pub fn hardware_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Caps every entry at `limit`, keeping order and dropping repeats.
pub fn cap_workers(ps: &[usize], limit: usize, warnings: &mut Vec<String>) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &p in ps {
        let q = if p > limit {
            warnings.push(format!("p={p} exceeds {limit} hardware threads; running p={limit}"));
            limit
        } else {
            p
        };
        if seen.insert(q) {
            out.push(q);
        }
    }
    out
}

/// Strong or weak scaling on the simulator or on threads.
pub fn cmd_scaling(spec: &ExperimentSpec, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<ScalingReport, CliError> {
    let model = cost_model(spec)?;
    let kinds = spec.kinds_or(&ScanKind::ALL);
    let variants = spec.variants_or(&StrategyVariant::ALL);
    let mut report = ScalingReport::default();
    let ps = match spec.runner {
        Runner::Sim => spec.p_or(&POW2_TO_512),
        Runner::Threads => {
            let hw = hardware_threads();
            let default: Vec<usize> = POW2_TO_512.iter().copied().filter(|&p| p <= hw).collect();
            cap_workers(&spec.p_or(&default), hw, &mut report.warnings)
        }
    };
    for w in &report.warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    let mut timer: Box<dyn Timer> = match spec.runner {
        Runner::Sim => Box::new(SimulatedTimer { model }),
        Runner::Threads => Box::new(ThreadTimer {
            op: Delay::new(model, Duration::from_secs_f64(spec.unit_us * 1e-6)),
            make_input: Box::new(|n| (0..n as i64).collect()),
        }),
    };
    let mut table = Table::new(match spec.mode {
        ScalingMode::Strong => STRONG_HEADER,
        ScalingMode::Weak => WEAK_HEADER,
    });
    for &variant in &variants {
        for &kind in &kinds {
            match spec.mode {
                ScalingMode::Strong => {
                    for n in spec.n_or(&[512]) {
                        for &p in &ps {
                            check_sizes(variant, kind, n, p)?;
                        }
                        let rows = strong_scaling_experiment(variant, kind, n, &ps, spec.repetitions, timer.as_mut())
                            .map_err(CliError::compute)?;
                        for row in rows {
                            table.push(strong_fields(&row));
                            report.strong.push(StrongRow { row, theoretical: None });
                        }
                    }
                }
                ScalingMode::Weak => {
                    for &p in &ps {
                        check_sizes(variant, kind, spec.k * p, p)?;
                    }
                    let rows = weak_scaling_experiment(variant, kind, spec.k, &ps, spec.repetitions, timer.as_mut())
                        .map_err(CliError::compute)?;
                    for row in rows {
                        table.push(weak_fields(&row));
                        report.weak.push(row);
                    }
                }
            }
        }
    }
    report.csv = table.to_csv();
    emit(spec.out.as_deref(), &report.csv, stdout)?;
    if let Some(path) = &spec.gnuplot {
        let csv = spec.out.as_deref().unwrap_or(Path::new("scaling.csv"));
        write_file(path, &gnuplot_script(csv, false))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capping_dedupes() {
        let mut w = Vec::new();
        assert_eq!(cap_workers(&[1, 2, 4, 8], 2, &mut w), vec![1, 2]);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn trace_formats() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        fs::write(&a, "phase,index,seconds\nscan,0,0.5\nscan,1,1.5\n").unwrap();
        assert_eq!(load_trace(&a).unwrap(), vec![0.5, 1.5]);
        let b = dir.path().join("b.txt");
        fs::write(&b, "# costs\n2\n3\n").unwrap();
        assert_eq!(load_trace(&b).unwrap(), vec![2.0, 3.0]);
        fs::write(&b, "").unwrap();
        assert!(load_trace(&b).is_err());
    }
}
