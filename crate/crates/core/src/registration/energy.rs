use super::deformation::RigidDeformation;
use super::image::{normalized_weights, GridImage};
use super::RegError;

/// Reference image with its weighted, centered and scaled values cached, so
/// repeated NCC evaluations against it cost one pass over the template.
#[derive(Debug, Clone)]
pub struct PreparedReference {
    level: u32,
    weights: Vec<f64>,
    centered: Vec<f64>,
    weight_sum_centered: f64,
}

fn degenerate(std: f64, mean: f64) -> bool {
    !(std > 1e-13 * (1.0 + mean.abs()))
}

impl PreparedReference {
    pub fn new(r: &GridImage) -> Result<Self, RegError> {
        let weights = normalized_weights(r.level());
        let (mean, var) = weighted_moments(&weights, r.values());
        let std = var.sqrt();
        if degenerate(std, mean) {
            return Err(RegError::DegenerateImage);
        }
        let centered: Vec<f64> = r.values().iter().map(|v| (v - mean) / std).collect();
        let weight_sum_centered = weights.iter().zip(&centered).map(|(w, a)| w * a).sum();
        Ok(Self {
            level: r.level(),
            weights,
            centered,
            weight_sum_centered,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    fn check(&self, level: u32) -> Result<(), RegError> {
        if level != self.level {
            return Err(RegError::LevelMismatch(self.level, level));
        }
        Ok(())
    }

    /// Returns `(ncc, mean, std)` of the template values.
    fn correlate(&self, t: &[f64]) -> Result<(f64, f64, f64), RegError> {
        let (mean, var) = weighted_moments(&self.weights, t);
        let std = var.sqrt();
        if degenerate(std, mean) {
            return Err(RegError::DegenerateImage);
        }
        let cov: f64 = self
            .weights
            .iter()
            .zip(&self.centered)
            .zip(t)
            .map(|((w, a), v)| w * a * (v - mean))
            .sum();
        Ok((cov / std, mean, std))
    }

    pub fn ncc(&self, t: &GridImage) -> Result<f64, RegError> {
        self.check(t.level())?;
        Ok(self.correlate(t.values())?.0)
    }
}

fn weighted_moments(weights: &[f64], values: &[f64]) -> (f64, f64) {
    let mean: f64 = weights.iter().zip(values).map(|(w, v)| w * v).sum();
    let var: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (v - mean) * (v - mean))
        .sum();
    (mean, var)
}

pub fn ncc(r: &GridImage, t: &GridImage) -> Result<f64, RegError> {
    if r.level() != t.level() {
        return Err(RegError::LevelMismatch(r.level(), t.level()));
    }
    PreparedReference::new(r)?.ncc(t)
}

/// `x ↦ f(φ(x))` on the nodes of `f`'s grid, plus the fraction of nodes whose
/// sample position left `[0,1]²` and was clamped.
pub fn apply_deformation_reported(f: &GridImage, phi: &RigidDeformation) -> (GridImage, f64) {
    let side = f.side();
    let h = f.h();
    let mut clamped = 0usize;
    let mut values = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let p = phi.apply([x as f64 * h, y as f64 * h]);
            let s = f.sample(p[0], p[1]);
            clamped += s.clamped as usize;
            values.push(s.value);
        }
    }
    let image = GridImage::new(f.level(), values).expect("bilinear samples of a valid image are valid");
    (image, clamped as f64 / (side * side) as f64)
}

pub fn apply_deformation(f: &GridImage, phi: &RigidDeformation) -> GridImage {
    apply_deformation_reported(f, phi).0
}

/// `½λ|Ω|·‖R(α) − I‖²_F = 2λ(1 − cos α)`.
pub fn regularization(alpha: f64, lambda: f64) -> f64 {
    2.0 * lambda * (1.0 - alpha.cos())
}

/// Registration energy of one image pair at one level.
#[derive(Debug, Clone, Copy)]
pub struct EnergyProblem<'a> {
    reference: &'a PreparedReference,
    template: &'a GridImage,
    lambda: f64,
}

impl<'a> EnergyProblem<'a> {
    pub fn new(reference: &'a PreparedReference, template: &'a GridImage, lambda: f64) -> Result<Self, RegError> {
        reference.check(template.level())?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(RegError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            reference,
            template,
            lambda,
        })
    }

    pub fn value(&self, phi: &RigidDeformation) -> Result<f64, RegError> {
        let warped = apply_deformation(self.template, phi);
        let (ncc, _, _) = self.reference.correlate(warped.values())?;
        Ok(-ncc + regularization(phi.alpha, self.lambda))
    }

    pub fn value_and_gradient(&self, phi: &RigidDeformation) -> Result<(f64, [f64; 3]), RegError> {
        let t = self.template;
        let side = t.side();
        let h = t.h();
        let (s, c) = phi.alpha.sin_cos();
        let n = side * side;
        let mut vals = Vec::with_capacity(n);
        let mut d = Vec::with_capacity(n);
        for y in 0..side {
            for x in 0..side {
                let (x0, x1) = (x as f64 * h, y as f64 * h);
                let p = phi.apply([x0, x1]);
                let sm = t.sample(p[0], p[1]);
                vals.push(sm.value);
                let [g0, g1] = sm.grad;
                let da = g0 * (-s * x0 - c * x1) + g1 * (c * x0 - s * x1);
                d.push([da, g0, g1]);
            }
        }
        let r = self.reference;
        let (ncc, mean, std) = r.correlate(&vals)?;
        let mut cross = [0.0; 3];
        let mut self_term = [0.0; 3];
        let mut mean_term = [0.0; 3];
        for k in 0..n {
            let w = r.weights[k];
            let dev = vals[k] - mean;
            for i in 0..3 {
                cross[i] += w * r.centered[k] * d[k][i];
                self_term[i] += w * dev * d[k][i];
                mean_term[i] += w * d[k][i];
            }
        }
        let mut grad = [0.0; 3];
        for i in 0..3 {
            let dcov = cross[i] - mean_term[i] * r.weight_sum_centered;
            let dncc = (dcov - ncc * self_term[i] / std) / std;
            grad[i] = -dncc;
        }
        grad[0] += 2.0 * self.lambda * phi.alpha.sin();
        Ok((-ncc + regularization(phi.alpha, self.lambda), grad))
    }
}

pub fn energy(r: &GridImage, t: &GridImage, phi: &RigidDeformation, lambda: f64) -> Result<f64, RegError> {
    let prepared = PreparedReference::new(r)?;
    EnergyProblem::new(&prepared, t, lambda)?.value(phi)
}

pub fn energy_gradient(
    r: &GridImage,
    t: &GridImage,
    phi: &RigidDeformation,
    lambda: f64,
) -> Result<[f64; 3], RegError> {
    let prepared = PreparedReference::new(r)?;
    Ok(EnergyProblem::new(&prepared, t, lambda)?.value_and_gradient(phi)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(level: u32) -> GridImage {
        GridImage::from_fn(level, |x, y| (7.0 * x).sin() + (5.0 * y + 1.0).cos() + x * y)
    }

    #[test]
    fn self_correlation_is_one() {
        let f = pattern(5);
        assert!((ncc(&f, &f).unwrap() - 1.0).abs() < 1e-12);
        assert!((ncc(&f, &f.map(|v| -v)).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ncc(&f, &GridImage::constant(5, 1.0)), Err(RegError::DegenerateImage));
    }

    #[test]
    fn identity_warp_is_exact() {
        let f = pattern(4);
        assert_eq!(apply_deformation(&f, &RigidDeformation::IDENTITY), f);
    }

    #[test]
    fn zero_lambda_energy_is_negative_ncc() {
        let (r, t) = (pattern(4), pattern(4).map(|v| v * v));
        let phi = RigidDeformation::new(0.01, 0.02, -0.01);
        let e = energy(&r, &t, &phi, 0.0).unwrap();
        assert_eq!(e, -ncc(&r, &apply_deformation(&t, &phi)).unwrap());
        let f = pattern(4);
        assert!((energy(&f, &f, &RigidDeformation::IDENTITY, 3.0).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn regularizer_gradient_vanishes_at_identity() {
        let f = pattern(4);
        let g0 = energy_gradient(&f, &f, &RigidDeformation::IDENTITY, 0.0).unwrap();
        let g1 = energy_gradient(&f, &f, &RigidDeformation::IDENTITY, 5.0).unwrap();
        assert_eq!(g0, g1);
    }
}
