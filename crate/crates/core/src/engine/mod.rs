//! Training, evaluation, rollouts and the ablation grid.

pub mod ablation;
pub mod eval;
pub mod metrics;
pub mod rollout;
pub mod train;

pub use ablation::{ablation_grid, ablation_suite, AblationReport, RunResult, RunSpec};
pub use eval::{evaluate, predict_sequence, window_starts, EvalReport, MetricRow, ProfileReport, Split};
pub use metrics::{mpje, pcc_channels, pearson, rmse, ChannelPcc};
pub use rollout::{oracle_torques, rollout_eval, rollout_mse, RolloutCell, RolloutReport, TorqueSource};
pub use train::{curve_csv, restrict_profiles, train, train_with, EpochLoss, TrainOutcome};
