//! End-to-end workflows: compression, completion, outlier handling,
//! calendar derivatives and backtests.

mod backtest;
mod complete;
mod compress;
mod metrics;
mod outliers;
mod theta;

pub use backtest::{run_backtest, BacktestConfig, BacktestReport, DayResult, Method};
pub use complete::{complete, predict, Completion, CompletionConfig};
pub use compress::{
    compress_autoencoder, compress_functional, compress_pca, CompressConfig, CompressionResult,
    DayCode,
};
pub use metrics::{pooled_rmse, rmse, rmse_against};
pub use outliers::{
    correct_observation, correction_distance, corruption_check, detect_outliers,
    reconstruction_score, CorruptionCheck, OutlierReport,
};
pub use theta::{calendar_theta, ThetaReport};
