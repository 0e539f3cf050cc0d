//! Experiment driver: configuration, seeded end-to-end runs, table
//! reproduction and plot-ready exports.

mod config;
mod run;
mod table;

pub use config::{
    ExperimentConfig, IpBudget, NetworkShape, NoiseConfig, Regularizers, SamplingCounts, Schedule, Smoothing, Tier,
    UncertaintySchedule, ValidationGrid, SCHEMA_VERSION,
};
pub use run::{
    build_reference, cached_reference, export_slices, prepare_samples, read_report, recompute_mse,
    reference_cache_path, run, write_report_dir, ConservedCurve, ExperimentReport, InitialSamples, RunStatus,
    SliceExtract, SmoothingReport, Timings, UncertaintyReport,
};
pub use table::{
    average_scores, kernel_table, kernel_table_data, reproduce_table, run_rows, table_rows, write_table_csv,
    RowResult, RowSpec, KERNEL_TABLE_LITERATURE,
};
