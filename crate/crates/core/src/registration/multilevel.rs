use super::deformation::RigidDeformation;
use super::energy::{EnergyProblem, PreparedReference};
use super::flow::{gradient_flow_problem, FlowResult, GradientFlowConfig};
use super::image::{side_for, GridImage};
use super::RegError;

const STENCIL: [f64; 3] = [1.0, 2.0, 1.0];

/// Full weighting onto the next coarser grid with the `[1 2 1]⊗[1 2 1]/16`
/// stencil. Weights falling outside the grid are dropped and the rest
/// renormalized.
pub fn restrict(f: &GridImage) -> Result<GridImage, RegError> {
    if f.level() == 0 {
        return Err(RegError::InvalidLevel(0));
    }
    let fine = f.side();
    let coarse = side_for(f.level() - 1);
    let axis = |c: usize| {
        let mut taps = [(0usize, 0.0f64); 3];
        let mut n = 0;
        let mut total = 0.0;
        for (k, w) in STENCIL.iter().enumerate() {
            let i = (2 * c + k) as isize - 1;
            if i >= 0 && (i as usize) < fine {
                taps[n] = (i as usize, *w);
                total += w;
                n += 1;
            }
        }
        for t in &mut taps[..n] {
            t.1 /= total;
        }
        (taps, n)
    };
    let taps: Vec<_> = (0..coarse).map(axis).collect();
    let mut values = Vec::with_capacity(coarse * coarse);
    for (ty, ny) in &taps {
        for (tx, nx) in &taps {
            let mut v = 0.0;
            for &(y, wy) in &ty[..*ny] {
                for &(x, wx) in &tx[..*nx] {
                    v += wy * wx * f.at(x, y);
                }
            }
            values.push(v);
        }
    }
    GridImage::new(f.level() - 1, values)
}

/// Bilinear interpolation onto the next finer grid.
pub fn prolongate(f: &GridImage) -> Result<GridImage, RegError> {
    let side = side_for(f.level() + 1);
    let mut values = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let (cx, cy) = (x / 2, y / 2);
            let v = match (x % 2, y % 2) {
                (0, 0) => f.at(cx, cy),
                (1, 0) => 0.5 * (f.at(cx, cy) + f.at(cx + 1, cy)),
                (0, 1) => 0.5 * (f.at(cx, cy) + f.at(cx, cy + 1)),
                _ => 0.25 * (f.at(cx, cy) + f.at(cx + 1, cy) + f.at(cx, cy + 1) + f.at(cx + 1, cy + 1)),
            };
            values.push(v);
        }
    }
    GridImage::new(f.level() + 1, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultilevelConfig {
    pub m0: u32,
    pub m1: u32,
}

impl Default for MultilevelConfig {
    fn default() -> Self {
        Self { m0: 6, m1: 8 }
    }
}

impl MultilevelConfig {
    pub fn validate(&self) -> Result<(), RegError> {
        if self.m0 >= self.m1 {
            return Err(RegError::InvalidConfig(format!(
                "coarsest level {} must be below finest level {}",
                self.m0, self.m1
            )));
        }
        Ok(())
    }

    pub fn fine_spacing(&self) -> f64 {
        1.0 / (1u64 << self.m1) as f64
    }
}

/// One frame restricted to every level `m0..=m1`, each with its prepared
/// reference form.
#[derive(Debug, Clone)]
pub struct Pyramid {
    m0: u32,
    images: Vec<GridImage>,
    prepared: Vec<PreparedReference>,
}

impl Pyramid {
    pub fn build(f: &GridImage, config: &MultilevelConfig) -> Result<Self, RegError> {
        config.validate()?;
        if f.level() != config.m1 {
            return Err(RegError::LevelMismatch(config.m1, f.level()));
        }
        let mut images = vec![f.clone()];
        for _ in config.m0..config.m1 {
            let next = restrict(images.last().expect("non-empty"))?;
            images.push(next);
        }
        images.reverse();
        let prepared = images.iter().map(PreparedReference::new).collect::<Result<_, _>>()?;
        Ok(Self {
            m0: config.m0,
            images,
            prepared,
        })
    }

    pub fn coarsest(&self) -> u32 {
        self.m0
    }

    pub fn finest(&self) -> u32 {
        self.m0 + self.images.len() as u32 - 1
    }

    pub fn image(&self, level: u32) -> &GridImage {
        &self.images[(level - self.m0) as usize]
    }

    pub fn prepared(&self, level: u32) -> &PreparedReference {
        &self.prepared[(level - self.m0) as usize]
    }
}

/// Gradient flows from the coarsest to the finest level, handing the rigid
/// parameters up unchanged.
pub fn register_pyramids(
    reference: &Pyramid,
    template: &Pyramid,
    phi0: RigidDeformation,
    config: &GradientFlowConfig,
) -> Result<Vec<FlowResult>, RegError> {
    if (reference.coarsest(), reference.finest()) != (template.coarsest(), template.finest()) {
        return Err(RegError::LevelMismatch(reference.finest(), template.finest()));
    }
    let mut phi = phi0;
    let mut out = Vec::new();
    for level in reference.coarsest()..=reference.finest() {
        let problem = EnergyProblem::new(reference.prepared(level), template.image(level), config.lambda)?;
        let res = gradient_flow_problem(&problem, phi, config)?;
        phi = res.phi;
        out.push(res);
    }
    Ok(out)
}

/// Two-frame registration: `φ` minimizing `−NCC(f_i, f_j ∘ φ)` plus the
/// rotation penalty, started from `phi0`.
pub fn register_pair(
    f_i: &GridImage,
    f_j: &GridImage,
    phi0: RigidDeformation,
    ml: &MultilevelConfig,
    gf: &GradientFlowConfig,
) -> Result<RigidDeformation, RegError> {
    let pi = Pyramid::build(f_i, ml)?;
    let pj = Pyramid::build(f_j, ml)?;
    Ok(register_pyramids(&pi, &pj, phi0, gf)?.last().expect("at least two levels").phi)
}
