//! Shared domain types: complex scalars, the 4-D spectral tensor, layer and
//! tile configuration, and configuration validation.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Single-precision complex scalar. `repr(C)` with `(re, im)` order, 8 bytes.
pub type ComplexF32 = num_complex::Complex32;

/// Size in bytes of one [`ComplexF32`].
pub const COMPLEX_BYTES: u64 = std::mem::size_of::<ComplexF32>() as u64;

/// Threads per warp in the blocking model.
pub const WARP_SIZE: usize = 32;

/// Axis order of a [`SpectralTensor`]. Only one order exists; DimY is contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AxisOrder {
    #[default]
    BatchHiddenXY,
}

/// A 4-D complex tensor `[batch, hidden, dim_x, dim_y]`, row-major with `dim_y` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor {
    pub batch: usize,
    pub hidden: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    pub layout: AxisOrder,
    data: Vec<ComplexF32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("tensor data length {actual} does not match shape {shape:?} (expected {expected})")]
pub struct TensorShapeError {
    pub shape: [usize; 4],
    pub expected: usize,
    pub actual: usize,
}

impl SpectralTensor {
    pub fn zeros(batch: usize, hidden: usize, dim_x: usize, dim_y: usize) -> Self {
        let len = batch * hidden * dim_x * dim_y;
        Self {
            batch,
            hidden,
            dim_x,
            dim_y,
            layout: AxisOrder::BatchHiddenXY,
            data: vec![ComplexF32::new(0.0, 0.0); len],
        }
    }

    pub fn from_vec(
        batch: usize,
        hidden: usize,
        dim_x: usize,
        dim_y: usize,
        data: Vec<ComplexF32>,
    ) -> Result<Self, TensorShapeError> {
        let expected = batch * hidden * dim_x * dim_y;
        if data.len() != expected {
            return Err(TensorShapeError {
                shape: [batch, hidden, dim_x, dim_y],
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            batch,
            hidden,
            dim_x,
            dim_y,
            layout: AxisOrder::BatchHiddenXY,
            data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.batch, self.hidden, self.dim_x, self.dim_y]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat offset of `(b, h, x, y)`.
    #[inline]
    pub fn index(&self, b: usize, h: usize, x: usize, y: usize) -> usize {
        debug_assert!(b < self.batch && h < self.hidden && x < self.dim_x && y < self.dim_y);
        ((b * self.hidden + h) * self.dim_x + x) * self.dim_y + y
    }

    /// Inverse of [`SpectralTensor::index`].
    #[inline]
    pub fn unflatten(&self, flat: usize) -> (usize, usize, usize, usize) {
        let y = flat % self.dim_y;
        let rest = flat / self.dim_y;
        let x = rest % self.dim_x;
        let rest = rest / self.dim_x;
        let h = rest % self.hidden;
        let b = rest / self.hidden;
        (b, h, x, y)
    }

    pub fn get(&self, b: usize, h: usize, x: usize, y: usize) -> ComplexF32 {
        self.data[self.index(b, h, x, y)]
    }

    pub fn data(&self) -> &[ComplexF32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [ComplexF32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<ComplexF32> {
        self.data
    }
}

/// Shape and truncation of one spectral layer.
///
/// `keep_x`/`keep_y` are the numbers of leading frequency bins retained along
/// each axis. For `rank == 1` only DimY is transformed and DimX acts as an
/// extra batch axis, so `keep_x` must equal `dim_x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnoLayerConfig {
    pub batch: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    pub keep_x: usize,
    pub keep_y: usize,
    pub rank: u8,
}

impl FnoLayerConfig {
    /// Rows of the spectral GEMM: `batch * keep_x * keep_y`.
    pub fn gemm_rows(&self) -> usize {
        self.batch * self.keep_x * self.keep_y
    }

    pub fn input_len(&self) -> usize {
        self.batch * self.hidden_dim * self.dim_x * self.dim_y
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.output_dim * self.dim_x * self.dim_y
    }
}

/// GEMM blocking: threadblock, warp and per-thread tile extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub m_tb: usize,
    pub n_tb: usize,
    pub k_tb: usize,
    pub m_w: usize,
    pub n_w: usize,
    pub m_t: usize,
    pub n_t: usize,
}

impl TileConfig {
    /// The CGEMM row of the kernel parameter table.
    pub const TABLE: TileConfig = TileConfig {
        m_tb: 32,
        n_tb: 32,
        k_tb: 8,
        m_w: 32,
        n_w: 16,
        m_t: 4,
        n_t: 4,
    };

    /// The 64x64x8 blocking quoted alongside the table.
    pub const WIDE: TileConfig = TileConfig {
        m_tb: 64,
        n_tb: 64,
        k_tb: 8,
        m_w: 32,
        n_w: 16,
        m_t: 4,
        n_t: 4,
    };

    /// The 64x128x8 blocking used for the epilogue experiments.
    pub const TALL_N: TileConfig = TileConfig {
        m_tb: 64,
        n_tb: 128,
        k_tb: 8,
        m_w: 32,
        n_w: 16,
        m_t: 4,
        n_t: 4,
    };

    /// Thread grid inside one warp tile: `(rows, cols)`.
    pub fn warp_threads(&self) -> (usize, usize) {
        (self.m_w / self.m_t, self.n_w / self.n_t)
    }

    pub fn check(&self) -> Vec<ConfigViolation> {
        let mut out = Vec::new();
        let fields = [
            ("m_tb", self.m_tb),
            ("n_tb", self.n_tb),
            ("k_tb", self.k_tb),
            ("m_w", self.m_w),
            ("n_w", self.n_w),
            ("m_t", self.m_t),
            ("n_t", self.n_t),
        ];
        for (name, v) in fields {
            if v == 0 {
                out.push(ConfigViolation::ZeroExtent { field: name.into() });
            }
        }
        if !out.is_empty() {
            return out;
        }
        let pairs = [
            ("m_tb", self.m_tb, "m_w", self.m_w),
            ("n_tb", self.n_tb, "n_w", self.n_w),
            ("m_w", self.m_w, "m_t", self.m_t),
            ("n_w", self.n_w, "n_t", self.n_t),
        ];
        for (outer, ov, inner, iv) in pairs {
            if ov % iv != 0 {
                out.push(ConfigViolation::TileDivisibilityViolation {
                    detail: format!("{outer}={ov} is not a multiple of {inner}={iv}"),
                });
            }
        }
        if out.is_empty() {
            let (r, c) = self.warp_threads();
            if r * c != WARP_SIZE {
                out.push(ConfigViolation::TileDivisibilityViolation {
                    detail: format!(
                        "warp tile {}x{} with thread tile {}x{} maps {} threads, not {WARP_SIZE}",
                        self.m_w,
                        self.n_w,
                        self.m_t,
                        self.n_t,
                        r * c
                    ),
                });
            }
        }
        out
    }
}

impl Default for TileConfig {
    fn default() -> Self {
        Self::TABLE
    }
}

/// Block-level FFT kernel parameters (the FFT row of the parameter table).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FftKernelParams {
    /// Signals per threadblock; must equal the GEMM `k_tb`.
    pub bs: usize,
    /// Per-thread FFT size for the 128-point kernel.
    #[serde(default = "default_n1")]
    pub n1: usize,
    /// Per-thread FFT size for the 256-point kernel.
    #[serde(default = "default_n2")]
    pub n2: usize,
}

fn default_n1() -> usize {
    8
}

fn default_n2() -> usize {
    16
}

impl Default for FftKernelParams {
    fn default() -> Self {
        Self {
            bs: 8,
            n1: default_n1(),
            n2: default_n2(),
        }
    }
}

/// One constraint that a configuration breaks.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "kind")]
pub enum ConfigViolation {
    #[error("{field} = {value} is not a power of two")]
    NonPowerOfTwoLength { field: String, value: usize },
    #[error("{field} = {keep} exceeds transform length {len}")]
    TruncationExceedsLength { field: String, keep: usize, len: usize },
    #[error("{field} must be at least 1")]
    ZeroExtent { field: String },
    #[error("tile divisibility: {detail}")]
    TileDivisibilityViolation { detail: String },
    #[error("FFT batch size bs = {bs} differs from k_tb = {k_tb}")]
    BatchSizeMismatch { bs: usize, k_tb: usize },
    #[error("rank must be 1 or 2, got {rank}")]
    InvalidRank { rank: u8 },
    #[error("rank-1 layers transform DimY only; keep_x ({keep_x}) must equal dim_x ({dim_x})")]
    RankOneTruncatesX { keep_x: usize, dim_x: usize },
}

/// Every violation found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigReport {
    pub violations: Vec<ConfigViolation>,
}

impl fmt::Display for ConfigReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for v in &self.violations {
            write!(f, " [{v}]")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigReport {}

/// A layer configuration together with the blocking it will run under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSetup {
    pub layer: FnoLayerConfig,
    #[serde(default)]
    pub tiles: TileConfig,
    #[serde(default)]
    pub fft: FftKernelParams,
}

/// A [`LayerSetup`] that passed [`validate_config`]. Only constructible there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidatedConfig(LayerSetup);

impl ValidatedConfig {
    pub fn layer(&self) -> &FnoLayerConfig {
        &self.0.layer
    }

    pub fn tiles(&self) -> &TileConfig {
        &self.0.tiles
    }

    pub fn fft(&self) -> &FftKernelParams {
        &self.0.fft
    }

    pub fn setup(&self) -> &LayerSetup {
        &self.0
    }
}

/// Checks every layer, tile and alignment constraint and returns all violations at once.
pub fn validate_config(setup: &LayerSetup) -> Result<ValidatedConfig, ConfigReport> {
    let cfg = &setup.layer;
    let mut violations = Vec::new();

    for (name, v) in [
        ("batch", cfg.batch),
        ("hidden_dim", cfg.hidden_dim),
        ("output_dim", cfg.output_dim),
        ("keep_x", cfg.keep_x),
        ("keep_y", cfg.keep_y),
    ] {
        if v == 0 {
            violations.push(ConfigViolation::ZeroExtent { field: name.into() });
        }
    }
    for (name, v) in [("dim_x", cfg.dim_x), ("dim_y", cfg.dim_y)] {
        if !v.is_power_of_two() {
            violations.push(ConfigViolation::NonPowerOfTwoLength {
                field: name.into(),
                value: v,
            });
        }
    }
    for (name, keep, len) in [("keep_x", cfg.keep_x, cfg.dim_x), ("keep_y", cfg.keep_y, cfg.dim_y)] {
        if keep > len {
            violations.push(ConfigViolation::TruncationExceedsLength {
                field: name.into(),
                keep,
                len,
            });
        }
    }
    match cfg.rank {
        1 => {
            if cfg.keep_x != cfg.dim_x {
                violations.push(ConfigViolation::RankOneTruncatesX {
                    keep_x: cfg.keep_x,
                    dim_x: cfg.dim_x,
                });
            }
        }
        2 => {}
        rank => violations.push(ConfigViolation::InvalidRank { rank }),
    }
    violations.extend(setup.tiles.check());
    if setup.fft.bs != setup.tiles.k_tb {
        violations.push(ConfigViolation::BatchSizeMismatch {
            bs: setup.fft.bs,
            k_tb: setup.tiles.k_tb,
        });
    }

    if violations.is_empty() {
        Ok(ValidatedConfig(*setup))
    } else {
        Err(ConfigReport { violations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(dim_y: usize, keep_y: usize) -> FnoLayerConfig {
        FnoLayerConfig {
            batch: 4,
            hidden_dim: 32,
            output_dim: 32,
            dim_x: 1,
            dim_y,
            keep_x: 1,
            keep_y,
            rank: 1,
        }
    }

    fn setup(layer: FnoLayerConfig) -> LayerSetup {
        LayerSetup {
            layer,
            tiles: TileConfig::TABLE,
            fft: FftKernelParams::default(),
        }
    }

    #[test]
    fn table_configuration_is_valid() {
        assert!(validate_config(&setup(layer(256, 64))).is_ok());
        let mut s = setup(layer(256, 64));
        s.tiles = TileConfig::WIDE;
        assert!(validate_config(&s).is_ok());
        s.tiles = TileConfig::TALL_N;
        assert!(validate_config(&s).is_ok());
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        let err = validate_config(&setup(layer(100, 64))).unwrap_err();
        assert!(matches!(
            err.violations[0],
            ConfigViolation::NonPowerOfTwoLength { value: 100, .. }
        ));
    }

    #[test]
    fn keep_beyond_length_is_rejected() {
        let err = validate_config(&setup(layer(256, 300))).unwrap_err();
        assert_eq!(
            err.violations,
            vec![ConfigViolation::TruncationExceedsLength {
                field: "keep_y".into(),
                keep: 300,
                len: 256
            }]
        );
    }

    #[test]
    fn bs_must_match_k_tb() {
        let mut s = setup(layer(256, 64));
        s.fft.bs = 4;
        let err = validate_config(&s).unwrap_err();
        assert_eq!(
            err.violations,
            vec![ConfigViolation::BatchSizeMismatch { bs: 4, k_tb: 8 }]
        );
    }

    #[test]
    fn tile_violations_are_reported() {
        let mut s = setup(layer(256, 64));
        s.tiles.m_w = 24;
        let err = validate_config(&s).unwrap_err();
        assert!(err
            .violations
            .iter()
            .all(|v| matches!(v, ConfigViolation::TileDivisibilityViolation { .. })));
        assert_eq!(err.violations.len(), 1);

        let mut s = setup(layer(256, 64));
        s.tiles.n_t = 2;
        let err = validate_config(&s).unwrap_err();
        assert!(matches!(
            err.violations[0],
            ConfigViolation::TileDivisibilityViolation { .. }
        ));
    }

    #[test]
    fn rank_one_cannot_truncate_x() {
        let mut l = layer(128, 64);
        l.dim_x = 4;
        l.keep_x = 2;
        let err = validate_config(&setup(l)).unwrap_err();
        assert_eq!(
            err.violations,
            vec![ConfigViolation::RankOneTruncatesX { keep_x: 2, dim_x: 4 }]
        );
    }

    #[test]
    fn collects_multiple_violations() {
        let mut l = layer(100, 300);
        l.rank = 3;
        let err = validate_config(&setup(l)).unwrap_err();
        assert_eq!(err.violations.len(), 3);
    }

    #[test]
    fn json_field_names() {
        let s = setup(layer(256, 64));
        let v = serde_json::to_value(s).unwrap();
        for key in [
            "batch",
            "hidden_dim",
            "output_dim",
            "dim_x",
            "dim_y",
            "keep_x",
            "keep_y",
            "rank",
        ] {
            assert!(v["layer"].get(key).is_some(), "{key}");
        }
        for key in ["m_tb", "n_tb", "k_tb", "m_w", "n_w", "m_t", "n_t"] {
            assert!(v["tiles"].get(key).is_some(), "{key}");
        }
        let back: LayerSetup = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
        // tiles and fft fall back to the table defaults
        let minimal = serde_json::json!({"layer": serde_json::to_value(s.layer).unwrap()});
        let parsed: LayerSetup = serde_json::from_value(minimal).unwrap();
        assert_eq!(parsed.tiles, TileConfig::TABLE);
        assert_eq!(parsed.fft.bs, 8);
    }

    #[test]
    fn complex_is_eight_bytes() {
        assert_eq!(COMPLEX_BYTES, 8);
    }
}
