//! Rigid registration of 2D images on dyadic node grids.
//!
//! `φ_{i,j}` maps frame `i` coordinates into frame `j`, so `f_j ∘ φ_{i,j}`
//! is aligned with `f_i`. Composing neighbor deformations gives
//! `φ_{0,k} = φ_{k-1,k} ∘ … ∘ φ_{0,1}`; [`series::RegistrationOp`] turns that
//! composition into a prefix-sum operator that re-registers each product.

pub mod deformation;
pub mod energy;
pub mod flow;
pub mod image;
pub mod io;
pub mod multilevel;
pub mod series;

use thiserror::Error;

pub use deformation::{compose, RigidDeformation};
pub use energy::{apply_deformation, energy, energy_gradient, ncc, EnergyProblem, PreparedReference};
pub use flow::{armijo_step, gradient_flow, ArmijoOutcome, FlowResult, GradientFlowConfig, StopReason};
pub use image::{image_mean, image_std, GridImage};
pub use multilevel::{prolongate, register_pair, restrict, MultilevelConfig, Pyramid};
pub use series::{generate_series, preprocess_series, FrameStore, RegElem, RegistrationOp, SeriesGroundTruth, SeriesSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegError {
    #[error("image levels differ: {0} vs {1}")]
    LevelMismatch(u32, u32),
    #[error("image has zero standard deviation")]
    DegenerateImage,
    #[error("invalid grid level {0}")]
    InvalidLevel(u32),
    #[error("non-finite image value")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot combine a deformation ending at frame {left_to} with one starting at frame {right_from}")]
    IndexMismatch { left_to: usize, right_from: usize },
    #[error("frame index {index} out of range for {len} frames")]
    FrameOutOfRange { index: usize, len: usize },
    #[error("frames {from}->{to}: {source}")]
    Pair {
        from: usize,
        to: usize,
        #[source]
        source: Box<RegError>,
    },
    #[error("{0}")]
    Format(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl RegError {
    pub fn for_pair(self, from: usize, to: usize) -> Self {
        RegError::Pair {
            from,
            to,
            source: Box::new(self),
        }
    }
}
