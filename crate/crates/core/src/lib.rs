pub mod asymptotics;
pub mod boundaries;
pub mod branching_env;
pub mod brw_engine;
pub mod constants;
pub mod error;
pub mod heavy_tails;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;

pub use asymptotics::{beta_function, eta_limit, eta_mean_tree_independent, example2_constant, h_series, veraverbeke_limit, HSeriesSpec, MuMarginal, SeriesValue, WeightModel};
pub use boundaries::{validate_class, Boundary, ClassCheck, IndependenceClass, MuLaw, StoppingRule};
pub use branching_env::{empirical_moments, BranchingTrajectory, CriterionOutcome, Environment, MomentFunction, OffspringLaw, TailRule};
pub use brw_engine::{run_walk, simulate_crossing, GenerationFront, MuOutcome, Retention, WalkParams, WalkRealization};
pub use montecarlo::{big_jump_estimate, estimate_crossing, ratio_study, EstimateResult, EstimatorKind, Mode, RatioRow};
pub use error::{Error, Result};
pub use heavy_tails::{check_class_membership, check_integrated_class_membership, ClassReport, ClassVerdict, IncrementLaw, TailClass};
