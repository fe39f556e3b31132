//! Metric scale for up-to-scale monocular reconstructions from near-light
//! photometry.
//!
//! Endoscope light sources sit a few millimeters from the camera. Because
//! irradiance falls with the inverse square of the light-to-surface distance
//! and depends on the incidence angle, intensities observed from several
//! poses pin down the one scale factor that a monocular reconstruction leaves
//! free. This crate estimates that factor jointly with per-point albedos and
//! per-image gains, and ships a synthetic renderer with known ground truth.
//!
//! Pipeline: [`recon_io`] parses the sparse model, observation table and rig
//! calibration; [`normals`] fits surface normals; [`estimator::estimate`]
//! filters, initializes and refines; [`estimator::measure_diameter`] turns the
//! result into metric lengths. [`experiment`] runs simulated sweeps and
//! ablations on top of [`simulator`].

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod normals;
pub mod photomodel;
pub mod recon_io;
pub mod simulator;
pub mod twoview;

pub use error::{Error, Result};
pub use estimator::{
    estimate, measure_diameter, EstimationReport, EstimatorConfig, Injection, InitSearchConfig, LinearSolver,
    RobustLossConfig, SolverConfig,
};
pub use experiment::{sweep, Ablation, SweepConfig, SweepRow};
pub use normals::NormalConfig;
pub use photomodel::{PhotometricParams, SampleParams};
pub use recon_io::{CalibrationRig, CameraPose, Observation, ObservationSet, Reconstruction, ScenePoint};
pub use simulator::{simulate, Dataset, GroundTruth, SimulationSpec, Surface};
pub use twoview::{solve_two_view_scale, two_view_intensity, TwoViewConfig};
