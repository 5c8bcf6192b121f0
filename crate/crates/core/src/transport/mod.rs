//! Maximal correlation `T(ρ, μ)`: exact discrete LP, semi-discrete dual
//! descent, and one-dimensional quantile couplings.

pub mod lp;
pub mod quantile;
pub mod semidiscrete;

pub use lp::{lp_max_correlation, TransportPlan, LP_VARIABLE_LIMIT};
pub use quantile::{comonotone_correlation, Quantile};
pub use semidiscrete::{eval_t, map_assignment, semi_discrete_dual, total_variation, DualOptions, DualSolveResult};
