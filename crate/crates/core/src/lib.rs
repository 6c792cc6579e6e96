//! Asymptotic-preserving time stepping for the quantum Liouville-BGK
//! equation on a periodic one-dimensional grid.
//!
//! Density operators are stored as dense Hermitian matrices in kernel
//! scaling (entry = grid spacing × kernel value), so that the trace is the
//! total mass and the diagonal divided by the spacing is the local density.

pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod operator;
pub mod optimize;
pub mod qdd;
pub mod solvers;

pub use equilibrium::{
    chemical_potential, equilibrium, free_energy, ChemicalPotential, EquilibriumOptions,
    QuantumMaxwellian, Temperature,
};
pub use error::{Error, Result};
pub use grid::{build_grid, DerivativeMethod, DerivativeOperator, GridSpec, HamiltonianSet};
pub use kernels::{a_weighted, kappa, xi, KernelParams, PropagatorBackend};
pub use operator::{DensityOperator, Observables};
pub use qdd::{solve_step, QddOptions, QddStepInput, QddStepResult};
pub use solvers::{
    ap_run, ap_step, qdd_limit_run, sigma1_residual, splitstep_run, ApOptions, ApRun, Problem,
    ReferenceOptions, ReferenceRun, SchemeState, Trajectory,
};
