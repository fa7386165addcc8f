/// Rotation by `alpha` about the origin followed by translation by `t`:
/// `φ(x) = R(α)x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidDeformation {
    pub alpha: f64,
    pub t: [f64; 2],
}

impl RigidDeformation {
    pub const IDENTITY: RigidDeformation = RigidDeformation {
        alpha: 0.0,
        t: [0.0, 0.0],
    };

    pub fn new(alpha: f64, t0: f64, t1: f64) -> Self {
        Self { alpha, t: [t0, t1] }
    }

    pub fn translation(t0: f64, t1: f64) -> Self {
        Self::new(0.0, t0, t1)
    }

    pub fn params(&self) -> [f64; 3] {
        [self.alpha, self.t[0], self.t[1]]
    }

    pub fn from_params(p: [f64; 3]) -> Self {
        Self::new(p[0], p[1], p[2])
    }

    #[inline]
    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.alpha.sin_cos();
        [c * x[0] - s * x[1] + self.t[0], s * x[0] + c * x[1] + self.t[1]]
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = (-self.alpha).sin_cos();
        Self {
            alpha: -self.alpha,
            t: [
                -(c * self.t[0] - s * self.t[1]),
                -(s * self.t[0] + c * self.t[1]),
            ],
        }
    }

    /// Largest displacement between `self` and `other` over `[0,1]²`. The
    /// difference of two rigid maps is affine, so the maximum sits at a
    /// corner.
    pub fn max_difference(&self, other: &Self) -> f64 {
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
            .iter()
            .map(|&x| {
                let (a, b) = (self.apply(x), other.apply(x));
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }

    /// Parameter-wise `s·self + (1-s)·other`.
    pub fn blend(&self, other: &Self, s: f64) -> Self {
        let (a, b) = (self.params(), other.params());
        Self::from_params([0, 1, 2].map(|i| s * a[i] + (1.0 - s) * b[i]))
    }
}

/// `outer ∘ inner`.
pub fn compose(outer: &RigidDeformation, inner: &RigidDeformation) -> RigidDeformation {
    let (s, c) = outer.alpha.sin_cos();
    RigidDeformation {
        alpha: outer.alpha + inner.alpha,
        t: [
            c * inner.t[0] - s * inner.t[1] + outer.t[0],
            s * inner.t[0] + c * inner.t[1] + outer.t[1],
        ],
    }
}
