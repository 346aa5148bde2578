//! Grid sweeps over feature and model design choices, followed by pruning
//! of the selected baselines, with resumable on-disk results and
//! per-factor summaries.

mod grid;
mod record;
mod run;
mod summary;

pub use grid::{
    expand_grid, experiment_seed, pruning_id, pruning_seed, training_id, ExperimentGrid, GridConfig, LearningRateRule,
    LearningRates, MfccCount, Preset, TrainingPoint,
};
pub use record::{
    latest_records, read_log, read_results, write_results, write_timings, ExperimentRecord, RecordLog, Stage,
    RESULT_COLUMNS,
};
pub use run::{run_sweep, select_baselines, Baseline, BaselineRule, CheckpointMeta, SweepOutcome, SweepPaths, SweepPlan};
pub use summary::{quantile, summarize, write_summary, Factor, LevelSummary, Quartiles};
