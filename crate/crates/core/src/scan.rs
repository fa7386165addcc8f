//! Single-threaded reference executors for the five prefix algorithms.

use thiserror::Error;

use crate::network::{build_network, ScanKind};
use crate::operator::{OpError, Operator};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScanError {
    #[error("input is empty")]
    EmptyInput,
    #[error("width {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error(transparent)]
    Op(#[from] OpError),
}

fn check_width<E>(data: &[E]) -> Result<(), ScanError> {
    if data.is_empty() {
        return Err(ScanError::EmptyInput);
    }
    if !data.len().is_power_of_two() {
        return Err(ScanError::NotPowerOfTwo(data.len()));
    }
    Ok(())
}

/// Left-to-right inclusive fold; `len - 1` applications.
pub fn serial_scan<O: Operator>(data: &[O::Elem], op: &O) -> Result<Vec<O::Elem>, ScanError> {
    if data.is_empty() {
        return Err(ScanError::EmptyInput);
    }
    let mut out = data.to_vec();
    for i in 1..out.len() {
        out[i] = op.apply(&out[i - 1], &out[i])?;
    }
    Ok(out)
}

/// Up-sweep then down-sweep. Returns the exclusive scan and the total
/// reduction.
pub fn blelloch_scan<O: Operator>(
    data: &[O::Elem],
    op: &O,
) -> Result<(Vec<O::Elem>, O::Elem), ScanError> {
    check_width(data)?;
    let n = data.len();
    let logn = n.trailing_zeros();
    let mut d = data.to_vec();
    for i in 0..logn {
        let stride = 1usize << (i + 1);
        for j in (stride - 1..n).step_by(stride) {
            d[j] = op.apply(&d[j - (1 << i)], &d[j])?;
        }
    }
    let total = std::mem::replace(&mut d[n - 1], op.identity());
    for i in (0..logn).rev() {
        let stride = 1usize << (i + 1);
        let mut j = 0;
        while j < n - 1 {
            let left = j + (1 << i) - 1;
            let right = j + stride - 1;
            let temp = d[left].clone();
            d[left] = d[right].clone();
            d[right] = op.apply(&d[right], &temp)?;
            j += stride;
        }
    }
    Ok((d, total))
}

/// How a Blelloch scan is turned into an inclusive one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlellochInclusive {
    /// Shift left and append `excl[n-1] ⊙ x[n-1]`: one more application.
    #[default]
    ExtraApplication,
    /// Shift left and append the captured total: no extra application.
    NeighborExchange,
}

pub fn blelloch_inclusive<O: Operator>(
    data: &[O::Elem],
    op: &O,
    variant: BlellochInclusive,
) -> Result<Vec<O::Elem>, ScanError> {
    let (excl, total) = blelloch_scan(data, op)?;
    match variant {
        BlellochInclusive::ExtraApplication => {
            exclusive_to_inclusive(&excl, &data[data.len() - 1], op)
        }
        BlellochInclusive::NeighborExchange => {
            let mut out: Vec<_> = excl.into_iter().skip(1).collect();
            out.push(total);
            Ok(out)
        }
    }
}

pub fn brent_kung_scan<O: Operator>(data: &[O::Elem], op: &O) -> Result<Vec<O::Elem>, ScanError> {
    check_width(data)?;
    let n = data.len();
    let logn = n.trailing_zeros();
    let mut d = data.to_vec();
    for i in 0..logn {
        let stride = 1usize << (i + 1);
        for j in (stride - 1..n).step_by(stride) {
            d[j] = op.apply(&d[j - (1 << i)], &d[j])?;
        }
    }
    for i in (0..logn.saturating_sub(1)).rev() {
        let stride = 1usize << (i + 1);
        for j in (stride..n).step_by(stride) {
            let k = j + (1 << i) - 1;
            d[k] = op.apply(&d[j - 1], &d[k])?;
        }
    }
    Ok(d)
}

/// Each level reads the previous level's buffer.
pub fn kogge_stone_scan<O: Operator>(data: &[O::Elem], op: &O) -> Result<Vec<O::Elem>, ScanError> {
    check_width(data)?;
    let n = data.len();
    let mut cur = data.to_vec();
    let mut next = cur.clone();
    let mut offset = 1;
    while offset < n {
        for j in 0..n {
            next[j] = if j >= offset {
                op.apply(&cur[j - offset], &cur[j])?
            } else {
                cur[j].clone()
            };
        }
        std::mem::swap(&mut cur, &mut next);
        offset <<= 1;
    }
    Ok(cur)
}

pub fn sklansky_scan<O: Operator>(data: &[O::Elem], op: &O) -> Result<Vec<O::Elem>, ScanError> {
    check_width(data)?;
    let n = data.len();
    let mut d = data.to_vec();
    let mut half = 1;
    while half < n {
        for j in (half - 1..n).step_by(2 * half) {
            for k in 0..half {
                d[j + k + 1] = op.apply(&d[j], &d[j + k + 1])?;
            }
        }
        half <<= 1;
    }
    Ok(d)
}

/// Right shift with the identity in front. No applications.
pub fn inclusive_to_exclusive<O: Operator>(results: &[O::Elem], op: &O) -> Vec<O::Elem> {
    let mut out = Vec::with_capacity(results.len());
    if results.is_empty() {
        return out;
    }
    out.push(op.identity());
    out.extend_from_slice(&results[..results.len() - 1]);
    out
}

/// Left shift; the last slot becomes `results[n-1] ⊙ last_input`. One
/// application.
pub fn exclusive_to_inclusive<O: Operator>(
    results: &[O::Elem],
    last_input: &O::Elem,
    op: &O,
) -> Result<Vec<O::Elem>, ScanError> {
    let Some(last) = results.last() else {
        return Err(ScanError::EmptyInput);
    };
    let mut out = results[1..].to_vec();
    out.push(op.apply(last, last_input)?);
    Ok(out)
}

/// Inclusive scan with any kind; Blelloch uses its extra-application form.
pub fn inclusive_scan<O: Operator>(
    kind: ScanKind,
    data: &[O::Elem],
    op: &O,
) -> Result<Vec<O::Elem>, ScanError> {
    match kind {
        ScanKind::Serial => serial_scan(data, op),
        ScanKind::Blelloch => blelloch_inclusive(data, op, BlellochInclusive::default()),
        ScanKind::BrentKung => brent_kung_scan(data, op),
        ScanKind::KoggeStone => kogge_stone_scan(data, op),
        ScanKind::Sklansky => sklansky_scan(data, op),
    }
}

#[derive(Debug, Clone)]
pub struct PaddedScan<E> {
    /// Lane values for the original width. Exclusive for Blelloch.
    pub values: Vec<E>,
    /// Total reduction captured by Blelloch.
    pub total: Option<E>,
    /// Applications whose destination is a padding lane.
    pub padding_applications: usize,
    pub applications: usize,
}

/// Runs `kind` on any non-empty width by padding with identity lanes up to
/// the next power of two.
pub fn padded_scan<O: Operator>(
    kind: ScanKind,
    data: &[O::Elem],
    op: &O,
) -> Result<PaddedScan<O::Elem>, ScanError> {
    if data.is_empty() {
        return Err(ScanError::EmptyInput);
    }
    let n = data.len();
    let width = if kind.requires_power_of_two() {
        n.next_power_of_two()
    } else {
        n
    };
    let net = build_network(kind, width).expect("power-of-two width");
    let mut lanes = data.to_vec();
    lanes.resize(width, op.identity());
    let mut applications = 0;
    let mut padding_applications = 0;
    let (mut values, total) = net.execute_with(&lanes, op, |dst| {
        applications += 1;
        if dst >= n {
            padding_applications += 1;
        }
    })?;
    values.truncate(n);
    Ok(PaddedScan {
        values,
        total,
        padding_applications,
        applications,
    })
}
