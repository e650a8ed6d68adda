//! Exact solvers over finite hypothesis classes and the analytic reference example.

mod analytic;
mod class;
mod convert;
mod solve;

pub use analytic::{
    analytic_example_coverage, analytic_one_sided_value, analytic_population, erm_feasibility_trend,
    sample_analytic_example, TrendRow,
};
pub use class::{FiniteHypothesisClass, HypothesisKind};
pub use convert::{confidence_to_sets, gating_to_sets, sets_to_confidence};
pub use solve::{
    decouple, overlap_mass, solve_osp_decoupled, solve_osp_exact, solve_sc_exact, solve_sc_exact_with_cap,
    AlphaAllocation, AlphaOutcome, DecoupledSolution, OracleSolution, DEFAULT_TUPLE_CAP,
};
