use super::RegError;

/// Scalar field on the `(2^level + 1)²` node grid over `[0,1]²`, stored row
/// major: `values[y * side + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    level: u32,
    values: Vec<f64>,
}

pub const MAX_LEVEL: u32 = 14;

pub fn side_for(level: u32) -> usize {
    (1usize << level) + 1
}

impl GridImage {
    pub fn new(level: u32, values: Vec<f64>) -> Result<Self, RegError> {
        if level > MAX_LEVEL {
            return Err(RegError::InvalidLevel(level));
        }
        let side = side_for(level);
        if values.len() != side * side {
            return Err(RegError::Format(format!(
                "level {level} needs {} values, got {}",
                side * side,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RegError::NonFinite);
        }
        Ok(Self { level, values })
    }

    pub fn from_fn(level: u32, f: impl Fn(f64, f64) -> f64) -> Self {
        let side = side_for(level);
        let h = 1.0 / (side - 1) as f64;
        let values = (0..side * side)
            .map(|k| f((k % side) as f64 * h, (k / side) as f64 * h))
            .collect();
        Self { level, values }
    }

    pub fn constant(level: u32, c: f64) -> Self {
        let side = side_for(level);
        Self {
            level,
            values: vec![c; side * side],
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn side(&self) -> usize {
        side_for(self.level)
    }

    /// Grid spacing in domain units.
    pub fn h(&self) -> f64 {
        1.0 / (1u64 << self.level) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.side() + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            level: self.level,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Bilinear value and domain-space gradient at `(x0, x1)`. Coordinates
    /// outside `[0,1]` are clamped, and the gradient component along a
    /// clamped axis is zero.
    #[inline]
    pub fn sample(&self, x0: f64, x1: f64) -> Sample {
        let n = (self.side() - 1) as f64;
        let (u, cu) = clamp_unit(x0);
        let (v, cv) = clamp_unit(x1);
        let gu = u * n;
        let gv = v * n;
        let i = (gu.floor() as usize).min(self.side() - 2);
        let j = (gv.floor() as usize).min(self.side() - 2);
        let fx = gu - i as f64;
        let fy = gv - j as f64;
        let side = self.side();
        let v00 = self.values[j * side + i];
        let v10 = self.values[j * side + i + 1];
        let v01 = self.values[(j + 1) * side + i];
        let v11 = self.values[(j + 1) * side + i + 1];
        let value = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11);
        let d0 = if cu {
            0.0
        } else {
            n * ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01))
        };
        let d1 = if cv {
            0.0
        } else {
            n * ((1.0 - fx) * (v01 - v00) + fx * (v11 - v10))
        };
        Sample {
            value,
            grad: [d0, d1],
            clamped: cu || cv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub grad: [f64; 2],
    pub clamped: bool,
}

#[inline]
fn clamp_unit(x: f64) -> (f64, bool) {
    if x < 0.0 {
        (0.0, true)
    } else if x > 1.0 {
        (1.0, true)
    } else {
        (x, false)
    }
}

/// Trapezoidal weight of node index `i` along one axis of `side` nodes.
#[inline]
pub(crate) fn axis_weight(i: usize, side: usize) -> f64 {
    if i == 0 || i == side - 1 {
        0.5
    } else {
        1.0
    }
}

/// Quadrature weights normalized to sum to one (`|Ω| = 1`).
pub(crate) fn normalized_weights(level: u32) -> Vec<f64> {
    let side = side_for(level);
    let total = ((side - 1) * (side - 1)) as f64;
    let mut w = Vec::with_capacity(side * side);
    for y in 0..side {
        let wy = axis_weight(y, side);
        for x in 0..side {
            w.push(wy * axis_weight(x, side) / total);
        }
    }
    w
}

/// Integral mean over `Ω`.
pub fn image_mean(f: &GridImage) -> f64 {
    normalized_weights(f.level)
        .iter()
        .zip(f.values())
        .map(|(w, v)| w * v)
        .sum()
}

/// Root of the integral mean square deviation over `Ω`.
pub fn image_std(f: &GridImage) -> f64 {
    let m = image_mean(f);
    normalized_weights(f.level)
        .iter()
        .zip(f.values())
        .map(|(w, v)| w * (v - m) * (v - m))
        .sum::<f64>()
        .sqrt()
}
