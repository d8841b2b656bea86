//! Hyperbolic splittings and the shadowing solver.

pub mod solver;
pub mod splitting;

pub use solver::{find_shadowing_trajectory, natural_window, ShadowingParams, ShadowingSolution};
pub use splitting::{
    classify_periodic_point, compute_splitting, eigen_moduli, estimate_lipschitz_constant, lipschitz_bound,
    uniform_constants, Classification, HyperbolicSplitting, SplittingCheck,
};
