//! Experiment orchestration for the `fedq` CLI: configuration, data
//! preparation, central and federated training, compression sweeps and
//! reports. The CLI is a thin layer over these functions.

pub mod config;
pub mod overrides;
pub mod pipeline;
pub mod report;

pub use config::{
    CentralConfig, CompressionConfig, DataConfig, DataSource, ExperimentConfig, MetricsConfig, ModelConfig, ModelKind,
    PartitionConfig,
};
