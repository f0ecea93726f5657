//! Nonresponse weighting adjustment for survey totals.
//!
//! Sampled units respond with unknown probabilities modeled as
//! `p_i = 1 / (1 + exp(-x_i' lambda))`. The crate fits `lambda` by maximum
//! likelihood (unweighted or design-weighted score) or by raking calibration
//! to population totals or to full-sample Horvitz-Thompson totals, forms the
//! weighted totals `sum_{S_r} y_i / (pi_i p_i)`, estimates their variance,
//! and evaluates everything by design-based Monte Carlo.

pub mod design;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod montecarlo;
pub mod population;
pub mod report;
pub mod response;
pub mod survey;
pub mod rng;
pub mod solver;
pub mod variance;

pub use design::{draw_sample, joint_inclusion, poisson_design, srs_design, DesignKind, DesignSpec, JointInclusion, Sample};
pub use error::{Error, Result};
pub use estimators::{EstimateRecord, Variant};
pub use linalg::AuxMatrix;
pub use montecarlo::{run_replicate, run_study, ReplicateRecord, Scenario, StudyReport, VariantSummary};
pub use population::{generate_population, logistic, population_total, GenConfig, Population};
pub use response::{draw_response, RespondentSet};
pub use survey::SurveyData;
pub use solver::{solve, EquationKind, EstimatingEquation, FitResult, FitStatus, SolverControls, Weighting};
pub use variance::{confidence_interval, VarianceEstimate};

pub use nalgebra;
