//! Numerical q-moment measures.
//!
//! Given a centered discrete probability measure `μ` on R^n (n <= 3) and an
//! exponent `q > 0`, [`solver::solve`] finds a density `ρ = φ^{-(n+q)}` on a
//! grid and a convex piecewise-affine `φ` whose gradient pushes `ρ` onto `μ`,
//! by minimizing `J(ρ) = F(ρ) + T(ρ, μ)`.
//!
//! ```no_run
//! use qmm_core::{measure::DiscreteMeasure, problem::ProblemSpec, solver::solve};
//!
//! let mu = DiscreteMeasure::uniform(1, vec![vec![-1.0], vec![1.0]]).unwrap();
//! let report = solve(&ProblemSpec::new(2.0, mu).with_grid(50.0, 5000)).unwrap();
//! println!("J = {}", report.diagnostics.values.j);
//! ```

pub mod error;
pub mod export;
pub mod functionals;
pub mod grid;
pub mod hemisphere;
pub mod laguerre;
pub mod measure;
pub mod numeric;
pub mod oracle;
pub mod potential;
pub mod problem;
pub mod quadrature;
pub mod solver;
pub mod transport;
pub mod verification;

pub use error::{Error, Result};
