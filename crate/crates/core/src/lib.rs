//! Unified Riccati theory for linear-quadratic optimal control with
//! permanent and sampled-data (zero-order hold) controls, in finite and
//! infinite horizon.
//!
//! One map `F(t, E, h)` drives all four Riccati equations: the permanent
//! differential equation (`h = 0`), the sampled-data difference equation
//! (`h > 0`), and their algebraic counterparts. The [`diagram`] module
//! checks numerically that the four solutions converge to one another as
//! the horizon grows and the sampling step shrinks.

pub mod closedloop;
pub mod diagram;
pub mod error;
pub mod fmap;
pub mod linalg;
pub mod lqdef;
pub mod matfun;
pub mod oracle;
pub mod problem;
pub mod riccati;
pub mod tolerances;

pub use error::{Error, Result};
pub use fmap::{eval_f, eval_parts, gain, FMapParts, IntervalKernel};
pub use linalg::{Mat, Vector};
pub use lqdef::{
    kalman_rank, make_partition, pbh_test, validate, AssumptionReport, Coefficients, Horizon,
    LqProblem, MatFn, PartitionSpec, TimePartition,
};
pub use tolerances::Tolerances;
pub use riccati::{
    solve_pare, solve_pdre, solve_pdre_at, solve_sdare, solve_sddre, stability_constants,
    AreSolution, BoundReport, RiccatiFlow, RiccatiSeq, StabilityConstants,
};
pub use closedloop::{
    decay_check, exact_interval_cost, simulate_permanent, simulate_sampled, DecayReport,
    PermanentFeedback, SampledFeedback, Trajectory,
};
pub use oracle::{build_discrete, permanent_cost_oracle, qp_minimal_cost, DiscreteLqData};
pub use diagram::{full_diagram, ConvergenceReport, DiagramBundle, DiagramConfig};
pub use problem::{benchmark, ProblemFile};
