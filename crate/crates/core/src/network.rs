//! Prefix circuits as explicit step-by-step data.
//!
//! A [`ScanNetwork`] lists, for every step, the nodes that fire
//! simultaneously. All nodes of a step read the values left by the previous
//! step (double buffering), so a lane may be both read and written within a
//! step. Nodes either combine two lanes or copy one lane into another; see
//! [`NodeAction`].

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::operator::{FreeMonoid, OpError, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScanKind {
    Serial,
    Blelloch,
    BrentKung,
    KoggeStone,
    Sklansky,
}

impl ScanKind {
    pub const ALL: [ScanKind; 5] = [
        ScanKind::Serial,
        ScanKind::Blelloch,
        ScanKind::BrentKung,
        ScanKind::KoggeStone,
        ScanKind::Sklansky,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScanKind::Serial => "serial",
            ScanKind::Blelloch => "blelloch",
            ScanKind::BrentKung => "brent-kung",
            ScanKind::KoggeStone => "kogge-stone",
            ScanKind::Sklansky => "sklansky",
        }
    }

    /// Blelloch leaves exclusive results in its lanes; every other kind is
    /// inclusive.
    pub fn is_exclusive(self) -> bool {
        matches!(self, ScanKind::Blelloch)
    }

    pub fn requires_power_of_two(self) -> bool {
        !matches!(self, ScanKind::Serial)
    }
}

impl fmt::Display for ScanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown scan kind `{0}`")]
pub struct UnknownKind(pub String);

impl FromStr for ScanKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "serial" => Ok(ScanKind::Serial),
            "blelloch" => Ok(ScanKind::Blelloch),
            "brentkung" | "bk" => Ok(ScanKind::BrentKung),
            "koggestone" | "ks" => Ok(ScanKind::KoggeStone),
            "sklansky" => Ok(ScanKind::Sklansky),
            _ => Err(UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeAction {
    /// `lane[dst] = lane[src] ⊙ lane[dst]`
    Apply,
    /// `lane[dst] = lane[dst] ⊙ lane[src]`
    ApplyAfter,
    /// `lane[dst] = lane[src]`
    Copy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Node {
    pub src: usize,
    pub dst: usize,
    pub action: NodeAction,
}

impl Node {
    pub fn apply(src: usize, dst: usize) -> Self {
        Self {
            src,
            dst,
            action: NodeAction::Apply,
        }
    }

    pub fn apply_after(src: usize, dst: usize) -> Self {
        Self {
            src,
            dst,
            action: NodeAction::ApplyAfter,
        }
    }

    pub fn copy(src: usize, dst: usize) -> Self {
        Self {
            src,
            dst,
            action: NodeAction::Copy,
        }
    }

    pub fn is_copy(&self) -> bool {
        self.action == NodeAction::Copy
    }
}

/// Replace a lane with the identity once `after_steps` steps have run. The
/// previous lane value is captured as the network's total reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Reset {
    pub after_steps: usize,
    pub lane: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanNetwork {
    pub n: usize,
    pub kind: ScanKind,
    pub steps: Vec<Vec<Node>>,
    pub resets: Vec<Reset>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("unsupported width {n} for {kind}")]
    UnsupportedWidth { kind: ScanKind, n: usize },
    #[error("step {step}: node ({src},{dst}) out of range for width {n}")]
    OutOfRange {
        step: usize,
        src: usize,
        dst: usize,
        n: usize,
    },
    #[error("step {step}: node ({src},{dst}) reads its own destination")]
    SelfLoop { step: usize, src: usize, dst: usize },
    #[error("step {step}: lane {dst} written twice")]
    DuplicateDst { step: usize, dst: usize },
    #[error("reset of lane {lane} after {after_steps} steps is out of range")]
    BadReset { after_steps: usize, lane: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn log2_exact(n: usize) -> Option<u32> {
    (n.is_power_of_two()).then(|| n.trailing_zeros())
}

/// Builds the circuit of `kind` over `n` lanes.
pub fn build_network(kind: ScanKind, n: usize) -> Result<ScanNetwork, NetworkError> {
    if n == 0 {
        return Err(NetworkError::UnsupportedWidth { kind, n });
    }
    let mut steps: Vec<Vec<Node>> = Vec::new();
    let mut resets = Vec::new();
    if kind == ScanKind::Serial {
        for i in 1..n {
            steps.push(vec![Node::apply(i - 1, i)]);
        }
        return Ok(ScanNetwork {
            n,
            kind,
            steps,
            resets,
        });
    }
    let logn = log2_exact(n).ok_or(NetworkError::UnsupportedWidth { kind, n })? as usize;

    let up_sweep = |steps: &mut Vec<Vec<Node>>| {
        for i in 0..logn {
            let stride = 1 << (i + 1);
            let step = (stride - 1..n)
                .step_by(stride)
                .map(|j| Node::apply(j - (1 << i), j))
                .collect();
            steps.push(step);
        }
    };

    match kind {
        ScanKind::Serial => unreachable!(),
        ScanKind::Blelloch => {
            up_sweep(&mut steps);
            resets.push(Reset {
                after_steps: steps.len(),
                lane: n - 1,
            });
            for i in (0..logn).rev() {
                let stride = 1 << (i + 1);
                let mut step = Vec::new();
                let mut j = 0;
                while j < n - 1 {
                    let left = j + (1 << i) - 1;
                    let right = j + stride - 1;
                    step.push(Node::copy(right, left));
                    step.push(Node::apply_after(left, right));
                    j += stride;
                }
                steps.push(step);
            }
        }
        ScanKind::BrentKung => {
            up_sweep(&mut steps);
            for i in (0..logn.saturating_sub(1)).rev() {
                let stride = 1 << (i + 1);
                let step = (stride..n)
                    .step_by(stride)
                    .filter(|j| j + (1 << i) - 1 < n)
                    .map(|j| Node::apply(j - 1, j + (1 << i) - 1))
                    .collect();
                steps.push(step);
            }
        }
        ScanKind::KoggeStone => {
            for i in 0..logn {
                steps.push((1 << i..n).map(|j| Node::apply(j - (1 << i), j)).collect());
            }
        }
        ScanKind::Sklansky => {
            for i in 0..logn {
                let half = 1 << i;
                let mut step = Vec::new();
                for j in (half - 1..n).step_by(2 * half) {
                    for k in 0..half {
                        step.push(Node::apply(j, j + k + 1));
                    }
                }
                steps.push(step);
            }
        }
    }
    steps.retain(|s| !s.is_empty());
    Ok(ScanNetwork {
        n,
        kind,
        steps,
        resets,
    })
}

impl ScanNetwork {
    /// Number of apply nodes.
    pub fn size(&self) -> usize {
        self.steps
            .iter()
            .flatten()
            .filter(|node| !node.is_copy())
            .count()
    }

    /// Number of non-empty steps.
    pub fn depth(&self) -> usize {
        self.steps.iter().filter(|s| !s.is_empty()).count()
    }

    pub fn is_exclusive(&self) -> bool {
        self.kind.is_exclusive()
    }

    /// Checks index ranges, self loops and duplicate writes.
    pub fn check(&self) -> Result<(), NetworkError> {
        for (step, nodes) in self.steps.iter().enumerate() {
            let mut written = vec![false; self.n];
            for node in nodes {
                if node.src >= self.n || node.dst >= self.n {
                    return Err(NetworkError::OutOfRange {
                        step,
                        src: node.src,
                        dst: node.dst,
                        n: self.n,
                    });
                }
                if node.src == node.dst {
                    return Err(NetworkError::SelfLoop {
                        step,
                        src: node.src,
                        dst: node.dst,
                    });
                }
                if std::mem::replace(&mut written[node.dst], true) {
                    return Err(NetworkError::DuplicateDst { step, dst: node.dst });
                }
            }
        }
        for reset in &self.resets {
            if reset.lane >= self.n || reset.after_steps > self.steps.len() {
                return Err(NetworkError::BadReset {
                    after_steps: reset.after_steps,
                    lane: reset.lane,
                });
            }
        }
        Ok(())
    }

    /// Executes the network over `lanes` with double buffering. Returns the
    /// lane values and the value captured by a reset, if any.
    ///
    /// `on_apply` observes the destination lane of every application.
    pub fn execute_with<O: Operator>(
        &self,
        lanes: &[O::Elem],
        op: &O,
        mut on_apply: impl FnMut(usize),
    ) -> Result<(Vec<O::Elem>, Option<O::Elem>), OpError> {
        assert_eq!(lanes.len(), self.n, "lane count does not match network width");
        let mut cur = lanes.to_vec();
        let mut total = None;
        let apply_resets = |cur: &mut Vec<O::Elem>, total: &mut Option<O::Elem>, done: usize| {
            for reset in self.resets.iter().filter(|r| r.after_steps == done) {
                let old = std::mem::replace(&mut cur[reset.lane], op.identity());
                *total = Some(old);
            }
        };
        apply_resets(&mut cur, &mut total, 0);
        for (s, nodes) in self.steps.iter().enumerate() {
            let mut next = cur.clone();
            for node in nodes {
                next[node.dst] = match node.action {
                    NodeAction::Copy => cur[node.src].clone(),
                    NodeAction::Apply => {
                        on_apply(node.dst);
                        op.apply(&cur[node.src], &cur[node.dst])?
                    }
                    NodeAction::ApplyAfter => {
                        on_apply(node.dst);
                        op.apply(&cur[node.dst], &cur[node.src])?
                    }
                };
            }
            cur = next;
            apply_resets(&mut cur, &mut total, s + 1);
        }
        Ok((cur, total))
    }

    pub fn execute<O: Operator>(
        &self,
        lanes: &[O::Elem],
        op: &O,
    ) -> Result<(Vec<O::Elem>, Option<O::Elem>), OpError> {
        self.execute_with(lanes, op, |_| {})
    }

    /// Line-based text form, readable by [`ScanNetwork::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = format!("n {} kind {}\n", self.n, self.kind);
        for (k, nodes) in self.steps.iter().enumerate() {
            let _ = write!(out, "step {k}:");
            for node in nodes {
                let _ = match node.action {
                    NodeAction::Apply => write!(out, " ({},{})", node.src, node.dst),
                    NodeAction::ApplyAfter => write!(out, " ({},{},after)", node.src, node.dst),
                    NodeAction::Copy => write!(out, " ({},{},copy)", node.src, node.dst),
                };
            }
            out.push('\n');
        }
        for reset in &self.resets {
            let _ = writeln!(out, "reset {} {}", reset.after_steps, reset.lane);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NetworkError> {
        let err = |line: usize, message: &str| NetworkError::Parse {
            line,
            message: message.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let words: Vec<&str> = header.split_whitespace().collect();
        let (n, kind) = match words.as_slice() {
            ["n", n, "kind", kind] => (
                n.parse::<usize>()
                    .map_err(|_| err(hline, "bad width"))?,
                kind.parse::<ScanKind>()
                    .map_err(|e| err(hline, &e.to_string()))?,
            ),
            _ => return Err(err(hline, "expected `n <width> kind <name>`")),
        };
        let mut steps = Vec::new();
        let mut resets = Vec::new();
        for (lineno, line) in lines {
            if let Some(rest) = line.strip_prefix("reset") {
                let nums: Vec<usize> = rest
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| err(lineno, "bad reset"))?;
                match nums.as_slice() {
                    [after_steps, lane] => resets.push(Reset {
                        after_steps: *after_steps,
                        lane: *lane,
                    }),
                    _ => return Err(err(lineno, "expected `reset <after> <lane>`")),
                }
                continue;
            }
            let rest = line
                .strip_prefix("step")
                .ok_or_else(|| err(lineno, "expected `step`"))?;
            let (index, body) = rest
                .split_once(':')
                .ok_or_else(|| err(lineno, "missing `:`"))?;
            let index: usize = index
                .trim()
                .parse()
                .map_err(|_| err(lineno, "bad step index"))?;
            if index != steps.len() {
                return Err(err(lineno, "steps out of order"));
            }
            let mut nodes = Vec::new();
            for tok in body.split(')').map(str::trim).filter(|t| !t.is_empty()) {
                let inner = tok
                    .strip_prefix('(')
                    .ok_or_else(|| err(lineno, "expected `(`"))?;
                let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
                let num = |s: &str| s.parse::<usize>().map_err(|_| err(lineno, "bad lane"));
                let node = match parts.as_slice() {
                    [s, d] => Node::apply(num(s)?, num(d)?),
                    [s, d, "copy"] => Node::copy(num(s)?, num(d)?),
                    [s, d, "after"] => Node::apply_after(num(s)?, num(d)?),
                    _ => return Err(err(lineno, "bad node")),
                };
                nodes.push(node);
            }
            steps.push(nodes);
        }
        let net = ScanNetwork {
            n,
            kind,
            steps,
            resets,
        };
        net.check()?;
        Ok(net)
    }

    /// Graphviz rendering with one column per lane and one row per step.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph scan {\n  rankdir=TB;\n  node [shape=circle,label=\"\"];\n");
        for lane in 0..self.n {
            let _ = writeln!(out, "  n0_{lane} [label=\"x{lane}\",shape=box];");
        }
        let mut last = vec![0usize; self.n];
        for (s, nodes) in self.steps.iter().enumerate() {
            let row = s + 1;
            for node in nodes {
                let style = if node.is_copy() { "dashed" } else { "solid" };
                let _ = writeln!(out, "  n{row}_{} ;", node.dst);
                let _ = writeln!(
                    out,
                    "  n{}_{} -> n{row}_{} [style={style}];",
                    last[node.src], node.src, node.dst
                );
                if !node.is_copy() {
                    let _ = writeln!(out, "  n{}_{} -> n{row}_{};", last[node.dst], node.dst, node.dst);
                }
            }
            for node in nodes {
                last[node.dst] = row;
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneReport {
    pub lane: usize,
    pub valid: bool,
    pub expected: Vec<u32>,
    pub actual: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub lanes: Vec<LaneReport>,
    /// Only present for networks that capture a total.
    pub total_valid: Option<bool>,
    pub size: usize,
    pub depth: usize,
}

impl VerificationReport {
    pub fn is_valid(&self) -> bool {
        self.lanes.iter().all(|l| l.valid) && self.total_valid.unwrap_or(true)
    }

    pub fn invalid_lanes(&self) -> Vec<usize> {
        self.lanes.iter().filter(|l| !l.valid).map(|l| l.lane).collect()
    }
}

/// Runs the network over the words `[0], [1], …` and checks that lane `i`
/// ends up holding `0 1 … i` (or `0 … i-1` for exclusive kinds).
pub fn verify_network(net: &ScanNetwork) -> Result<VerificationReport, NetworkError> {
    net.check()?;
    let (out, total) = net
        .execute(&FreeMonoid::generators(net.n), &FreeMonoid)
        .expect("free monoid never fails");
    let lanes = out
        .into_iter()
        .enumerate()
        .map(|(lane, actual)| {
            let end = if net.is_exclusive() { lane } else { lane + 1 };
            let expected: Vec<u32> = (0..end as u32).collect();
            LaneReport {
                lane,
                valid: actual == expected,
                expected,
                actual,
            }
        })
        .collect();
    let total_valid = if net.is_exclusive() {
        Some(total.is_some_and(|t| t == (0..net.n as u32).collect::<Vec<_>>()))
    } else {
        None
    };
    Ok(VerificationReport {
        lanes,
        total_valid,
        size: net.size(),
        depth: net.depth(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_lane_counts() {
        let cases = [
            (ScanKind::Serial, 7, 7),
            (ScanKind::Blelloch, 14, 6),
            (ScanKind::BrentKung, 11, 5),
            (ScanKind::KoggeStone, 17, 3),
            (ScanKind::Sklansky, 12, 3),
        ];
        for (kind, size, depth) in cases {
            let net = build_network(kind, 8).unwrap();
            assert_eq!((net.size(), net.depth()), (size, depth), "{kind}");
        }
    }

    #[test]
    fn all_generated_networks_verify() {
        for kind in ScanKind::ALL {
            for logn in 0..=8 {
                let net = build_network(kind, 1 << logn).unwrap();
                let report = verify_network(&net).unwrap();
                assert!(report.is_valid(), "{kind} n={}", 1 << logn);
            }
        }
    }

    #[test]
    fn dropping_a_node_flags_its_lane() {
        let mut net = build_network(ScanKind::KoggeStone, 8).unwrap();
        let removed = net.steps[2].remove(0);
        let report = verify_network(&net).unwrap();
        assert_eq!(report.invalid_lanes(), vec![removed.dst]);
    }

    #[test]
    fn structural_errors() {
        let mut net = build_network(ScanKind::Sklansky, 4).unwrap();
        net.steps[0].push(Node::apply(0, 1));
        assert!(matches!(net.check(), Err(NetworkError::DuplicateDst { step: 0, dst: 1 })));
        let mut net = build_network(ScanKind::Serial, 4).unwrap();
        net.steps[1][0] = Node::apply(2, 2);
        assert!(matches!(net.check(), Err(NetworkError::SelfLoop { step: 1, .. })));
        net.steps[1][0] = Node::apply(0, 9);
        assert!(matches!(verify_network(&net), Err(NetworkError::OutOfRange { dst: 9, .. })));
    }

    #[test]
    fn single_lane_is_trivially_valid() {
        for kind in ScanKind::ALL {
            let net = build_network(kind, 1).unwrap();
            assert_eq!(net.depth(), 0);
            assert!(verify_network(&net).unwrap().is_valid());
        }
    }

    #[test]
    fn text_round_trip() {
        for kind in ScanKind::ALL {
            let net = build_network(kind, 16).unwrap();
            let parsed = ScanNetwork::from_text(&net.to_text()).unwrap();
            assert_eq!(parsed, net);
        }
        assert!(ScanNetwork::from_text("n 4 kind serial\nstep 0: (0,7)\n").is_err());
    }

    #[test]
    fn kind_names_parse() {
        for kind in ScanKind::ALL {
            assert_eq!(kind.name().parse::<ScanKind>().unwrap(), kind);
        }
        assert_eq!("KoggeStone".parse::<ScanKind>().unwrap(), ScanKind::KoggeStone);
        assert!("ladner".parse::<ScanKind>().is_err());
    }

    #[test]
    fn non_power_of_two_rejected_for_parallel_kinds() {
        assert!(build_network(ScanKind::Serial, 6).is_ok());
        for kind in &ScanKind::ALL[1..] {
            assert!(build_network(*kind, 6).is_err());
        }
    }
}
