//! Studies built on the integrator: stopping-time ensembles, common-noise
//! refinement, twin runs and the randomized identity/inequality suite.

mod ensemble;
mod refinement;
pub mod stats;
mod suite;
mod twin;

pub use ensemble::{check_deltas, run_ensemble, Ensemble, EnsembleResult, ENSEMBLE_SCHEMA, MIN_RUNS};
pub use refinement::{
    refine_path, refinement_study, sort_cutoffs, PairDifference, PathRefinement, RefinementResult, REFINEMENT_SCHEMA,
};
pub use suite::{
    default_suite_grid, inequality_suite, ExactCheck, FittedConstant, SuiteReport, EXACT_TOL, MIN_TRIALS, SUITE_SCHEMA,
};
pub use twin::{twin_uniqueness, TwinReport, TWIN_SCHEMA};
