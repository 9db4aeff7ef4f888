//! Neural surrogate of the loop-integral kernels in the canonical frame.

pub mod dataset;
pub mod io;
pub mod metrics;
pub mod mlp;
pub mod online;
pub mod train;

pub use dataset::{sample_dataset, Dataset, SampleRegion};
pub use metrics::{regression_metrics, ChannelMetrics, RegressionReport};
pub use mlp::{mlp_forward, InferenceNet, MlpParams, RadialScaling, Standardizer};
pub use online::{q_matrix_surrogate, ExtrapolationPolicy, Surrogate, SurrogateQ};
pub use train::{evaluate, train_mlp, EpochStats, TrainConfig, TrainOutcome, DIPOLE_POWERS};
