//! Finite-element reconstruction of transient temperature fields from sparse
//! point measurements, and generation of alternative fields that meet a
//! prescribed total-heat history.
//!
//! The forward model is linear transient conduction on a structured hex mesh
//! with convection on part of the boundary and an unknown heat flux on the
//! rest. Inverse problems are posed per time step as affine least squares in
//! the nodal temperatures.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assembly;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod io;
pub mod mesh;
pub mod multichoice;
pub mod runner;
pub mod solvers;
pub mod sparse;

pub use assembly::{assemble_flux_load, assemble_global, AssembledSystem, MaterialProperties};
pub use error::{Error, Result};
pub use forward::{
    run_forward, sample_measurements, steady_solve, transient_step, FluxSchedule, MeasurementSeries, TransientSolution,
};
pub use inverse::{
    build_reconstruction_stack, error_metrics, loss_and_gradient, reconstruct_series, reconstruct_step, recover_fq,
    ErrorReport, LossWeights, ReconstructionConfig, ResidualStack,
};
pub use io::{read_case_config, CaseConfig, CaseModel};
pub use mesh::{build_box_mesh, classify_boundary, BoundarySets, BoxFace, Mesh};
pub use multichoice::{
    generate_option, generate_options, generate_options_with, random_initial_field, total_heat, GenerationConfig,
    HeatGoal,
};
pub use sparse::{CsrMatrix, SparseSymmetricMatrix};
