//! Data generation, training and the closed-loop case studies.

pub mod case_study;
pub mod closed_loop;
pub mod datagen;
pub mod pipeline;

pub use case_study::{
    case_study_1, case_study_2, mode_for, open_vs_closed_loop, run_case, tracking_scenario, CaseStudyReport, LoopComparison, Quartiles,
    SweepCell, SweepConfig, SweepReport, SweepSummary,
};
pub use closed_loop::{loop_metrics, rms_tracking_error, run_closed_loop, run_open_loop, ClosedLoopRun, Disturbance, LoopMetrics, LoopSample, ScenarioConfig};
pub use datagen::{derive_seed, generate_data, DataGenConfig, ExcitationPolicy, GeneratedData, InputRanges};
pub use pipeline::{case_study_surrogate_config, test_metrics, train_models};
