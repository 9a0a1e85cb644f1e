//! Spectral-layer kernels for Fourier neural operators: a pruned Stockham FFT,
//! a tiled complex GEMM, the staged and fused layer pipelines with a byte-level
//! traffic ledger, and a shared-memory bank model for the data layouts.

pub mod bench;
pub mod cgemm;
pub mod fft;
pub mod gpu_model;
pub mod pipeline;
pub mod rawio;
pub mod reference;
pub mod spectral;

pub use cgemm::{gemm_oracle, gemm_tiled, ComplexMatrix, GemmError, GemmProblem};
pub use fft::{full_op_count, plan, Direction, FftError, FftPlan, OpCount, PencilView};
pub use pipeline::{
    run_fused, run_layer, run_staged, traffic_delta, FusedSchedule, GlobalArray, PipelineError, PipelineMode,
    TrafficDelta, TrafficLedger,
};
pub use spectral::{
    validate_config, ComplexF32, ConfigReport, ConfigViolation, FftKernelParams, FnoLayerConfig, LayerSetup,
    SpectralTensor, TileConfig, ValidatedConfig,
};
