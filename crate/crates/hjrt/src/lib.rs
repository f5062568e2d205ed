//! Reachable tubes for two-player differential games on Cartesian grids.
//!
//! The solver marches a Hamilton-Jacobi PDE with a running cost backward in
//! time. Freezing the dynamics and zeroing the cost inside the target set
//! turns the constrained game into an unconstrained one, and the accumulated
//! worst-case cost becomes a single stored field whose sublevel sets are the
//! tubes:
//!
//! * with unit running cost, `{W ≤ T}` is the set of states from which
//!   Player I forces target entry within time `T` against any nonanticipative
//!   Player II — the reachable tube;
//! * with a general positive running cost, `{W ≤ J}` is the set reaching the
//!   target before the accumulated cost exceeds `J` — a cost-limited
//!   reachable tube.
//!
//! One field therefore stores a whole family of tubes. A classical level-set
//! solver (zero sublevel of a freezing PDE started from the target's implicit
//! function) is included as a baseline, along with analytic oracles, set
//! metrics, and trajectory rollouts for validation.
//!
//! # Example
//!
//! ```
//! use hjrt::{builtin_linear2d, run_algorithm1, Grid, DEFAULT_CFL};
//! use std::sync::Arc;
//!
//! let scn = builtin_linear2d();
//! let grid = Arc::new(Grid::new(
//!     vec![-2.0, -2.0], vec![2.0, 2.0], vec![51, 51], vec![false, false],
//! ).unwrap());
//! let (result, masks) =
//!     run_algorithm1(&scn, &grid, &[0.25, 0.5, 0.75, 1.0], None, DEFAULT_CFL).unwrap();
//! assert_eq!(result.final_slice.time, 0.0);
//! assert!(masks[0].count() < masks[3].count());
//! ```

pub mod config;
pub mod grid;
pub mod hamiltonian;
pub mod io;
pub mod render;
pub mod rollout;
pub mod scenario;
pub mod sets;
pub mod solver;

pub use grid::{Grid, GridError, State, ValueField, MAX_DIM};
pub use hamiltonian::{numerical_hamiltonian, optimize_controls, HamiltonianSample};
pub use rollout::{
    simulate, synthesize_controls, verify_crt, Adversary, RolloutError, RolloutRecord,
    VerifyReport,
};
pub use scenario::{
    analytic_rt_linear2d, builtin_linear2d, builtin_pursuit, builtin_pursuit_params,
    compute_gamma, Control, ControlBox, ControlStructure, Scenario, ScenarioError,
};
pub use sets::{
    equal_within_band, jaccard_error, nesting_check, rasterize_analytic, sublevel,
    subset_within_band, symdiff_within_boundary_band, LevelMask, MaskSource, SetsError,
};
pub use solver::{
    dpp_residual, run_algorithm1, solve_classical, solve_improved, DppResidual, SolveConfig,
    SolveMode, SolveResult, SolverError, DEFAULT_CFL,
};
