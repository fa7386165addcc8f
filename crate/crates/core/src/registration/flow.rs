use super::deformation::RigidDeformation;
use super::energy::{EnergyProblem, PreparedReference};
use super::image::GridImage;
use super::RegError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientFlowConfig {
    /// Stop once an accepted step lowers the energy by less than this.
    pub epsilon: f64,
    /// Iteration cap per level.
    pub iter_max: usize,
    pub tau_max: f64,
    pub sigma: f64,
    pub lambda: f64,
}

impl Default for GradientFlowConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-7,
            iter_max: 200,
            tau_max: 1.0,
            sigma: 0.5,
            lambda: 0.1,
        }
    }
}

impl GradientFlowConfig {
    pub fn validate(&self) -> Result<(), RegError> {
        let bad = |m: String| Err(RegError::InvalidConfig(m));
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("sigma must lie in (0,1), got {}", self.sigma));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return bad(format!("tau_max must be > 0, got {}", self.tau_max));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.iter_max == 0 {
            return bad("iter_max must be positive".into());
        }
        Ok(())
    }

    pub fn tau_min(&self) -> f64 {
        1e-12 * self.tau_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmijoOutcome {
    Accepted { tau: f64, value: f64 },
    /// `slope` was not negative.
    NotDescent,
    /// Halving reached `tau_min` without an acceptable step.
    NoAdmissibleStep,
}

/// Armijo test `(Φ(τ) − Φ(0)) / (Φ'(0)·τ) > σ` with `τ ≤ τ_max`.
pub fn armijo_accepts(phi0: f64, value: f64, slope: f64, tau: f64, config: &GradientFlowConfig) -> bool {
    tau <= config.tau_max && (value - phi0) / (slope * tau) > config.sigma
}

/// Step size along a line `Φ(τ)` with `Φ(0) = phi0` and `Φ'(0) = slope`,
/// starting at `tau_start`. Doubles while acceptable (capped at `tau_max`),
/// otherwise halves until acceptable.
pub fn armijo_step<E>(
    mut line: impl FnMut(f64) -> Result<f64, E>,
    phi0: f64,
    slope: f64,
    tau_start: f64,
    config: &GradientFlowConfig,
) -> Result<ArmijoOutcome, E> {
    if !(slope < 0.0) {
        return Ok(ArmijoOutcome::NotDescent);
    }
    let mut tau = tau_start.min(config.tau_max);
    let mut value = line(tau)?;
    if armijo_accepts(phi0, value, slope, tau, config) {
        while tau < config.tau_max {
            let wider = (2.0 * tau).min(config.tau_max);
            let v = line(wider)?;
            if !armijo_accepts(phi0, v, slope, wider, config) {
                break;
            }
            tau = wider;
            value = v;
        }
        return Ok(ArmijoOutcome::Accepted { tau, value });
    }
    loop {
        tau *= 0.5;
        if tau < config.tau_min() {
            return Ok(ArmijoOutcome::NoAdmissibleStep);
        }
        value = line(tau)?;
        if armijo_accepts(phi0, value, slope, tau, config) {
            return Ok(ArmijoOutcome::Accepted { tau, value });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    IterationLimit,
    StepFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub phi: RigidDeformation,
    /// Energy of the start point followed by every accepted iterate.
    pub energies: Vec<f64>,
    /// Accepted step sizes.
    pub taus: Vec<f64>,
    pub stop: StopReason,
}

impl FlowResult {
    pub fn iterations(&self) -> usize {
        self.taus.len()
    }
}

fn step(phi: &RigidDeformation, dir: [f64; 3], tau: f64) -> RigidDeformation {
    let p = phi.params();
    RigidDeformation::from_params([0, 1, 2].map(|i| p[i] + tau * dir[i]))
}

/// Steepest descent with Armijo widening on a prepared problem.
pub fn gradient_flow_problem(
    problem: &EnergyProblem<'_>,
    phi0: RigidDeformation,
    config: &GradientFlowConfig,
) -> Result<FlowResult, RegError> {
    config.validate()?;
    let mut phi = phi0;
    let (mut e, mut g) = problem.value_and_gradient(&phi)?;
    let mut energies = vec![e];
    let mut taus = Vec::new();
    let mut tau = config.tau_max / 8.0;
    for _ in 0..config.iter_max {
        let dir = g.map(|x| -x);
        let slope = -(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        if slope == 0.0 {
            return Ok(FlowResult { phi, energies, taus, stop: StopReason::Converged });
        }
        let line = |t| match problem.value(&step(&phi, dir, t)) {
            Err(RegError::DegenerateImage) => Ok(f64::INFINITY),
            other => other,
        };
        let outcome = armijo_step(line, e, slope, tau, config)?;
        match outcome {
            ArmijoOutcome::Accepted { tau: accepted, value } => {
                phi = step(&phi, dir, accepted);
                let decrease = e - value;
                energies.push(value);
                taus.push(accepted);
                tau = accepted;
                if decrease < config.epsilon {
                    return Ok(FlowResult { phi, energies, taus, stop: StopReason::Converged });
                }
                (e, g) = problem.value_and_gradient(&phi)?;
            }
            ArmijoOutcome::NotDescent | ArmijoOutcome::NoAdmissibleStep => {
                return Ok(FlowResult { phi, energies, taus, stop: StopReason::StepFailure });
            }
        }
    }
    Ok(FlowResult { phi, energies, taus, stop: StopReason::IterationLimit })
}

pub fn gradient_flow(
    r: &GridImage,
    t: &GridImage,
    phi0: RigidDeformation,
    config: &GradientFlowConfig,
) -> Result<FlowResult, RegError> {
    let prepared = PreparedReference::new(r)?;
    gradient_flow_problem(&EnergyProblem::new(&prepared, t, config.lambda)?, phi0, config)
}
