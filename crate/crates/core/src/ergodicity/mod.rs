//! Contraction parameters and the numerical checks behind them.

pub mod b2;
pub mod contraction;
pub mod distance;
pub mod lyapunov;
pub mod params;
pub mod pipeline;
pub mod probe;
pub mod wasserstein;

pub use b2::{verify_b2, B2Config, B2Report};
pub use contraction::{contraction_experiment, ContractionReport};
pub use distance::{distance_f, distance_r, functional_fg, semi_metric_phi};
pub use lyapunov::{
    drift_agreement, drift_closed_form, drift_mc, mc_grid_nodes, CertificateStatus, DriftAgreement, DriftConfig, DriftMethod,
    DriftReport, Lyapunov,
};
pub use params::{build_params, compute_alpha, geometry, solve_beta, BetaSolution, CouplingParams, Geometry};
pub use pipeline::{certify_geometry, derive_params, Certified, PipelineConfig, PipelineReport};
pub use probe::{coupling_operator_probe, generator_probe, Battery, CouplingProbe, TestFunction};
pub use wasserstein::{assignment, empirical_wasserstein};
