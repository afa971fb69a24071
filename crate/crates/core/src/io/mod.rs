//! Case files, measurement and reference CSV, VTK snapshots and CSV reports.

mod config;
mod measurements;
mod report;
mod vtk;

pub use config::{
    read_case_config, CaseConfig, CaseModel, ForwardConfig, GenerationSection, GeometryConfig, Layout,
    ReconstructionSection,
};
pub use measurements::{read_measurements, read_reference, write_measurements, write_reference, MEASUREMENT_HEADER};
pub use report::{
    write_error_series, write_error_summary, write_generation_summary, write_heat_report, write_step_log,
    write_sweep_table, GenerationRow, SweepRow,
};
pub use vtk::{format_g, render_vtk, write_vtk};
