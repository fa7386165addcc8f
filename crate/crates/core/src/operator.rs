//! Binary operators for prefix sums.
//!
//! An [`Operator`] is only required to be *approximately* associative: the
//! scan algorithms in this crate re-parenthesize evaluations but never
//! reorder operands, and results of different evaluation orders are compared
//! with [`Operator::approx_eq`] instead of `==`.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

/// Failure of a single operator application.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message}")]
pub struct OpError {
    message: String,
}

impl OpError {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }

    pub fn message(&self) -> &str {
        &self.message
    }
}

/// A binary operator with an identity element.
///
/// Implementations must be shareable across worker threads; the distributed
/// runtime invokes `apply` concurrently on distinct workers.
pub trait Operator: Sync {
    type Elem: Clone + Send + Sync + fmt::Debug;

    fn identity(&self) -> Self::Elem;

    /// Computes `left ⊙ right`. Operand order is significant.
    fn apply(&self, left: &Self::Elem, right: &Self::Elem) -> Result<Self::Elem, OpError>;

    /// Equality up to `tolerance`, in whatever metric is meaningful for the
    /// element type.
    fn approx_eq(&self, a: &Self::Elem, b: &Self::Elem, tolerance: f64) -> bool;

    /// Tolerance used when callers have no better choice.
    fn default_tolerance(&self) -> f64 {
        0.0
    }
}

impl<O: Operator + ?Sized> Operator for &O {
    type Elem = O::Elem;

    fn identity(&self) -> Self::Elem {
        (**self).identity()
    }

    fn apply(&self, left: &Self::Elem, right: &Self::Elem) -> Result<Self::Elem, OpError> {
        (**self).apply(left, right)
    }

    fn approx_eq(&self, a: &Self::Elem, b: &Self::Elem, tolerance: f64) -> bool {
        (**self).approx_eq(a, b, tolerance)
    }

    fn default_tolerance(&self) -> f64 {
        (**self).default_tolerance()
    }
}

/// Wraps an operator and counts every call to `apply`.
#[derive(Debug, Default)]
pub struct Counted<O> {
    inner: O,
    applications: AtomicU64,
}

impl<O> Counted<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            applications: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.applications.load(Ordering::Relaxed)
    }

    /// Returns the current count and resets it to zero.
    pub fn take(&self) -> u64 {
        self.applications.swap(0, Ordering::Relaxed)
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Operator> Operator for Counted<O> {
    type Elem = O::Elem;

    fn identity(&self) -> Self::Elem {
        self.inner.identity()
    }

    fn apply(&self, left: &Self::Elem, right: &Self::Elem) -> Result<Self::Elem, OpError> {
        self.applications.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(left, right)
    }

    fn approx_eq(&self, a: &Self::Elem, b: &Self::Elem, tolerance: f64) -> bool {
        self.inner.approx_eq(a, b, tolerance)
    }

    fn default_tolerance(&self) -> f64 {
        self.inner.default_tolerance()
    }
}

/// Wrapping 64-bit integer addition. Exactly associative.
#[derive(Debug, Clone, Copy, Default)]
pub struct IntAdd;

impl Operator for IntAdd {
    type Elem = i64;

    fn identity(&self) -> i64 {
        0
    }

    fn apply(&self, left: &i64, right: &i64) -> Result<i64, OpError> {
        Ok(left.wrapping_add(*right))
    }

    fn approx_eq(&self, a: &i64, b: &i64, _tolerance: f64) -> bool {
        a == b
    }
}

/// IEEE double addition; associative only up to rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct FloatAdd;

impl Operator for FloatAdd {
    type Elem = f64;

    fn identity(&self) -> f64 {
        0.0
    }

    fn apply(&self, left: &f64, right: &f64) -> Result<f64, OpError> {
        Ok(left + right)
    }

    /// Relative comparison, falling back to absolute near zero.
    fn approx_eq(&self, a: &f64, b: &f64, tolerance: f64) -> bool {
        let scale = a.abs().max(b.abs()).max(1.0);
        (a - b).abs() <= tolerance * scale
    }

    fn default_tolerance(&self) -> f64 {
        1e-10
    }
}

/// Concatenation of words over input indices: the free monoid.
///
/// A scan over the singleton words `[0], [1], …` yields, in each lane, the
/// exact sequence of operands that were combined, which exposes any
/// reordering. Re-parenthesization is invisible because concatenation is
/// associative.
#[derive(Debug, Clone, Copy, Default)]
pub struct FreeMonoid;

impl FreeMonoid {
    /// Singleton words `[0], [1], …, [n-1]`.
    pub fn generators(n: usize) -> Vec<Vec<u32>> {
        (0..n as u32).map(|i| vec![i]).collect()
    }
}

impl Operator for FreeMonoid {
    type Elem = Vec<u32>;

    fn identity(&self) -> Vec<u32> {
        Vec::new()
    }

    fn apply(&self, left: &Vec<u32>, right: &Vec<u32>) -> Result<Vec<u32>, OpError> {
        let mut word = Vec::with_capacity(left.len() + right.len());
        word.extend_from_slice(left);
        word.extend_from_slice(right);
        Ok(word)
    }

    fn approx_eq(&self, a: &Vec<u32>, b: &Vec<u32>, _tolerance: f64) -> bool {
        a == b
    }
}
