//! Numerical checks of solution properties: residual classification, viscosity
//! touching tests, ordering and convergence experiments, and conservation reports.

mod classify;
mod experiments;
mod residual;
mod touching;

pub use classify::{classify, classify_trajectory, ClassificationReport, Domain, FrontStats, Verdict, ANALYTIC_TOL};
pub use experiments::{
    comparison_experiment, conservation_report, convergence_experiment, ConservationReport, ConvergenceOptions, ConvergenceReport,
    OrderingReport, ORDERING_TOL,
};
pub use residual::{pmed_operator, pmed_residual, pmed_residual_trajectory, Provenance, ResidualSample, ResidualStats};
pub use touching::{
    barrier_no_crossing, touching_margin, touching_test, NoCrossingReport, SpaceTimeField, TouchingDescriptor,
    TouchingMode, TouchingOptions, TouchingReport,
};
