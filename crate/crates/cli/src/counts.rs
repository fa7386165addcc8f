//! `verify` and `counts`: circuits against their closed-form size and depth.

use std::fs;
use std::io::Write;

use scanforge::cost::{snir_deficiency, span, work};
use scanforge::network::{build_network, verify_network, ScanNetwork};
use scanforge::operator::{Counted, IntAdd};
use scanforge::scan::{inclusive_to_exclusive, serial_scan};
use scanforge::ScanKind;

use crate::output::{emit, Table};
use crate::{CliError, ExperimentSpec};

pub const VERIFY_HEADER: &[&str] = &["kind", "n", "size", "formula_size", "depth", "formula_depth", "deficiency", "valid"];
pub const COUNTS_HEADER: &[&str] = &["kind", "n", "span", "work", "formula_span", "formula_work", "match"];

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub kind: ScanKind,
    pub n: usize,
    pub size: usize,
    pub depth: usize,
    /// `None` when the width has no closed form for this kind.
    pub formula: Option<(u64, u64)>,
    pub deficiency: i64,
    pub invalid_lanes: Vec<usize>,
    pub total_valid: Option<bool>,
}

impl VerifyRow {
    pub fn lanes_valid(&self) -> bool {
        self.invalid_lanes.is_empty() && self.total_valid.unwrap_or(true)
    }

    pub fn matches_formula(&self) -> bool {
        self.formula == Some((self.size as u64, self.depth as u64))
    }

    pub fn ok(&self) -> bool {
        self.lanes_valid() && self.matches_formula()
    }
}

/// Size and depth from the closed forms; a single lane needs nothing.
fn formula(kind: ScanKind, n: usize) -> Option<(u64, u64)> {
    if n == 1 {
        return Some((0, 0));
    }
    Some((work(kind, n).ok()?, span(kind, n).ok()?))
}

fn verify_one(net: &ScanNetwork, stderr: &mut dyn Write) -> Result<VerifyRow, CliError> {
    let report = verify_network(net).map_err(|e| CliError::Mismatch(format!("{} n={}: {e}", net.kind, net.n)))?;
    for lane in report.lanes.iter().filter(|l| !l.valid) {
        let _ = writeln!(
            stderr,
            "{} n={} lane {}: expected {:?}, got {:?}",
            net.kind, net.n, lane.lane, lane.expected, lane.actual
        );
    }
    if report.total_valid == Some(false) {
        let _ = writeln!(stderr, "{} n={}: captured total is wrong", net.kind, net.n);
    }
    Ok(VerifyRow {
        kind: net.kind,
        n: net.n,
        size: report.size,
        depth: report.depth,
        formula: formula(net.kind, net.n),
        deficiency: snir_deficiency(report.size, report.depth, net.n),
        invalid_lanes: report.invalid_lanes(),
        total_valid: report.total_valid,
    })
}

/// Verifies generated networks for every kind and width, or the network
/// in `spec.network`. Writes the table and returns its rows; lane failures
/// go to `stderr`.
pub fn cmd_verify(spec: &ExperimentSpec, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<Vec<VerifyRow>, CliError> {
    let mut rows = Vec::new();
    if let Some(path) = &spec.network {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let net = ScanNetwork::from_text(&text).map_err(|e| CliError::io(path, e))?;
        rows.push(verify_one(&net, stderr)?);
    } else {
        let widths = spec.n_or(&[1, 2, 4, 8, 16, 32, 64, 128, 256]);
        for kind in spec.kinds_or(&ScanKind::ALL) {
            for &n in &widths {
                let net = build_network(kind, n).map_err(|e| CliError::Usage(e.to_string()))?;
                rows.push(verify_one(&net, stderr)?);
            }
        }
    }
    let mut table = Table::new(VERIFY_HEADER);
    for r in &rows {
        let (fs, fd) = r.formula.map_or((String::new(), String::new()), |(s, d)| (s.to_string(), d.to_string()));
        table.push(vec![
            r.kind.to_string(),
            r.n.to_string(),
            r.size.to_string(),
            fs,
            r.depth.to_string(),
            fd,
            r.deficiency.to_string(),
            r.lanes_valid().to_string(),
        ]);
    }
    emit(spec.out.as_deref(), &table.to_csv(), stdout)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountRow {
    pub kind: ScanKind,
    pub n: usize,
    /// Steps containing at least one application.
    pub span: u64,
    /// Applications performed while executing the circuit.
    pub work: u64,
    pub formula_span: u64,
    pub formula_work: u64,
    /// The circuit's output agreed with a serial scan.
    pub correct: bool,
}

impl CountRow {
    pub fn ok(&self) -> bool {
        self.correct && self.span == self.formula_span && self.work == self.formula_work
    }
}

/// Executes one circuit under a counting operator.
pub fn count(kind: ScanKind, n: usize) -> Result<CountRow, CliError> {
    let (formula_work, formula_span) = formula(kind, n).ok_or_else(|| CliError::Usage(format!("width {n} is invalid for {kind}")))?;
    let net = build_network(kind, n).map_err(|e| CliError::Usage(e.to_string()))?;
    let data: Vec<i64> = (0..n as i64).map(|i| i.wrapping_mul(7919).wrapping_add(13) % 1009 - 500).collect();
    let op = Counted::new(IntAdd);
    let (got, _) = net.execute(&data, &op).map_err(CliError::compute)?;
    let serial = serial_scan(&data, &IntAdd).map_err(CliError::compute)?;
    let want = if kind.is_exclusive() { inclusive_to_exclusive(&serial, &IntAdd) } else { serial };
    let span = net.steps.iter().filter(|s| s.iter().any(|node| !node.is_copy())).count() as u64;
    Ok(CountRow {
        kind,
        n,
        span,
        work: op.count(),
        formula_span,
        formula_work,
        correct: got == want,
    })
}

pub fn cmd_counts(spec: &ExperimentSpec, stdout: &mut dyn Write) -> Result<Vec<CountRow>, CliError> {
    let widths = spec.n_or(&[2, 4, 8, 16, 32, 64, 128, 256, 512, 1024]);
    let mut rows = Vec::new();
    for kind in spec.kinds_or(&ScanKind::ALL) {
        for &n in &widths {
            rows.push(count(kind, n)?);
        }
    }
    let mut table = Table::new(COUNTS_HEADER);
    for r in &rows {
        table.push(vec![
            r.kind.to_string(),
            r.n.to_string(),
            r.span.to_string(),
            r.work.to_string(),
            r.formula_span.to_string(),
            r.formula_work.to_string(),
            r.ok().to_string(),
        ]);
    }
    emit(spec.out.as_deref(), &table.to_csv(), stdout)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rows() {
        let ks = count(ScanKind::KoggeStone, 8).unwrap();
        assert_eq!((ks.span, ks.work), (3, 17));
        assert!(ks.ok());
        let s = count(ScanKind::Serial, 2).unwrap();
        assert_eq!((s.span, s.work), (1, 1));
        assert!(count(ScanKind::Sklansky, 6).is_err());
    }

    #[test]
    fn single_lane_is_trivially_valid() {
        let spec = ExperimentSpec {
            n: Some(vec![1]),
            ..Default::default()
        };
        let rows = cmd_verify(&spec, &mut Vec::new(), &mut Vec::new()).unwrap();
        assert_eq!(rows.len(), ScanKind::ALL.len());
        assert!(rows.iter().all(|r| r.ok() && r.size == 0));
    }
}
