//! File formats, run configuration and the run pipeline.

mod config;
mod dataset;
mod pipeline;
mod tables;

pub use config::{
    AnalysisSpec, CavitySpec, DemodSpec, MeasurementSpec, OutputFormat, OutputSpec, RunConfig, SampleSpec, ScanSpec,
    ScanTechnique, StateSpec, TwoBeamSpec,
};
pub use dataset::{
    read_dataset, write_dataset, write_dataset_text, Dataset, DatasetHeader, SettingAxis, Technique, FORMAT_NAME,
    FORMAT_VERSION,
};
pub use pipeline::{
    analyze_values, profile_from_header, render_text, run_pipeline, simulate_beams, simulate_scan, PipelineRun,
    ReportBundle, ScanReport, StreamReport, Verdict, BEAM_A, BEAM_B, REPORT_FORMAT, REPORT_VERSION,
};
pub use tables::{
    histogram_table, moment_ratio_table, noise_table, phase_mixed_density, stream_summary_table, table_preamble,
    NoiseRow,
};
