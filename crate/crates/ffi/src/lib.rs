//! C ABI over the `fusedfno` kernels.
//!
//! Every function returns an [`FnoStatus`]. On failure a message is stored per
//! thread and can be read with [`fno_last_error`]. Plans and layers are opaque
//! handles that must be released with their `_free` function. Complex buffers
//! are interleaved `(re, im)` `float` pairs.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use fusedfno::cgemm::{gemm_tiled, ComplexMatrix, GemmError, GemmProblem};
use fusedfno::fft::{full_op_count, plan, Direction, FftError, FftPlan, OpCount};
use fusedfno::gpu_model::{layout_pattern, simulate, SwizzleLayout, NUM_BANKS};
use fusedfno::pipeline::{run_layer, GlobalArray, PipelineError, PipelineMode, TrafficLedger};
use fusedfno::spectral::{
    validate_config, ComplexF32, FftKernelParams, FnoLayerConfig as LayerConfig, LayerSetup, SpectralTensor, TileConfig,
};

/// Number of entries in [`FnoLedger::arrays`].
pub const FNO_NUM_ARRAYS: usize = 9;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    ShapeMismatch = 4,
    ScheduleInvalid = 5,
    StrideOverlap = 6,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnoDirection {
    Forward = 0,
    Inverse = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FnoMode {
    Staged = 0,
    FftOptimized = 1,
    FusedFftGemm = 2,
    FusedGemmIfft = 3,
    FullyFused = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FnoComplex {
    pub re: f32,
    pub im: f32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FnoOpCount {
    pub butterflies: u64,
    pub twiddle_muls: u64,
    pub skipped: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FnoLayerConfig {
    pub batch: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub dim_x: usize,
    pub dim_y: usize,
    pub keep_x: usize,
    pub keep_y: usize,
    pub rank: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FnoTileConfig {
    pub m_tb: usize,
    pub n_tb: usize,
    pub k_tb: usize,
    pub m_w: usize,
    pub n_w: usize,
    pub m_t: usize,
    pub n_t: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FnoArrayTraffic {
    pub bytes_read: u64,
    pub bytes_written: u64,
}

/// Traffic of one layer run. `arrays` is indexed like [`fno_array_name`].
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FnoLedger {
    pub arrays: [FnoArrayTraffic; FNO_NUM_ARRAYS],
    pub kernel_launches: u32,
    pub fft_ops: FnoOpCount,
    pub stage2_modeled_ops: u64,
    pub total_bytes: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FnoBankReport {
    pub distinct_banks: u32,
    pub utilization: f64,
    pub max_conflict_degree: u32,
    pub phases: u32,
    pub total_touches: u32,
    pub bank_touches: [u32; 32],
}

/// Opaque FFT plan.
pub struct FnoFftPlan {
    plan: FftPlan,
    scratch: Vec<ComplexF32>,
}

/// Opaque spectral layer: a validated setup plus its weights.
pub struct FnoLayer {
    setup: LayerSetup,
    weights: ComplexMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: FnoStatus, msg: impl std::fmt::Display) -> FnoStatus {
    set_error(&msg.to_string());
    status
}

fn guard(f: impl FnOnce() -> FnoStatus) -> FnoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == FnoStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(FnoStatus::Panic, "internal panic"),
    }
}

fn fft_status(e: FftError) -> FnoStatus {
    let s = match e {
        FftError::StrideOverlap(_) => FnoStatus::StrideOverlap,
        FftError::LengthMismatch(_) => FnoStatus::ShapeMismatch,
        _ => FnoStatus::InvalidArgument,
    };
    fail(s, e)
}

fn gemm_status(e: GemmError) -> FnoStatus {
    let s = match e {
        GemmError::ShapeMismatch(_) => FnoStatus::ShapeMismatch,
        GemmError::InvalidTiles(_) => FnoStatus::InvalidConfig,
    };
    fail(s, e)
}

fn pipeline_status(e: PipelineError) -> FnoStatus {
    let s = match &e {
        PipelineError::Config(_) => FnoStatus::InvalidConfig,
        PipelineError::ScheduleInvalid { .. } => FnoStatus::ScheduleInvalid,
        PipelineError::ShapeMismatch(_) => FnoStatus::ShapeMismatch,
        PipelineError::Fft(_) | PipelineError::Gemm(_) => FnoStatus::InvalidArgument,
    };
    fail(s, e)
}

impl From<OpCount> for FnoOpCount {
    fn from(o: OpCount) -> Self {
        Self {
            butterflies: o.butterflies,
            twiddle_muls: o.twiddle_muls,
            skipped: o.skipped,
        }
    }
}

impl From<FnoTileConfig> for TileConfig {
    fn from(t: FnoTileConfig) -> Self {
        TileConfig {
            m_tb: t.m_tb,
            n_tb: t.n_tb,
            k_tb: t.k_tb,
            m_w: t.m_w,
            n_w: t.n_w,
            m_t: t.m_t,
            n_t: t.n_t,
        }
    }
}

impl From<TileConfig> for FnoTileConfig {
    fn from(t: TileConfig) -> Self {
        FnoTileConfig {
            m_tb: t.m_tb,
            n_tb: t.n_tb,
            k_tb: t.k_tb,
            m_w: t.m_w,
            n_w: t.n_w,
            m_t: t.m_t,
            n_t: t.n_t,
        }
    }
}

impl From<FnoMode> for PipelineMode {
    fn from(m: FnoMode) -> Self {
        match m {
            FnoMode::Staged => PipelineMode::Staged,
            FnoMode::FftOptimized => PipelineMode::FftOptimized,
            FnoMode::FusedFftGemm => PipelineMode::FusedFftGemm,
            FnoMode::FusedGemmIfft => PipelineMode::FusedGemmIfft,
            FnoMode::FullyFused => PipelineMode::FullyFused,
        }
    }
}

impl From<&TrafficLedger> for FnoLedger {
    fn from(l: &TrafficLedger) -> Self {
        let mut arrays = [FnoArrayTraffic::default(); FNO_NUM_ARRAYS];
        for (slot, a) in arrays.iter_mut().zip(GlobalArray::ALL) {
            let t = l.get(a);
            *slot = FnoArrayTraffic {
                bytes_read: t.bytes_read,
                bytes_written: t.bytes_written,
            };
        }
        FnoLedger {
            arrays,
            kernel_launches: l.kernel_launches,
            fft_ops: l.fft_ops.into(),
            stage2_modeled_ops: l.stage2_modeled_ops,
            total_bytes: l.total_bytes(),
        }
    }
}

fn layer_config(c: &FnoLayerConfig) -> LayerConfig {
    LayerConfig {
        batch: c.batch,
        hidden_dim: c.hidden_dim,
        output_dim: c.output_dim,
        dim_x: c.dim_x,
        dim_y: c.dim_y,
        keep_x: c.keep_x,
        keep_y: c.keep_y,
        rank: u8::try_from(c.rank).unwrap_or(u8::MAX),
    }
}

fn make_setup(layer: &FnoLayerConfig, tiles: *const FnoTileConfig, bs: usize) -> LayerSetup {
    let tiles: TileConfig = if tiles.is_null() {
        TileConfig::default()
    } else {
        unsafe { *tiles }.into()
    };
    LayerSetup {
        layer: layer_config(layer),
        tiles,
        fft: FftKernelParams {
            bs: if bs == 0 { tiles.k_tb } else { bs },
            ..FftKernelParams::default()
        },
    }
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn complex_slice<'a>(ptr: *const FnoComplex, len: usize) -> Option<&'a [ComplexF32]> {
    if ptr.is_null() {
        return (len == 0).then_some(&[]);
    }
    // FnoComplex and Complex32 are both two repr(C) f32 fields.
    Some(slice::from_raw_parts(ptr.cast::<ComplexF32>(), len))
}

/// # Safety
/// `ptr` must be null or valid for `len` writes.
unsafe fn complex_slice_mut<'a>(ptr: *mut FnoComplex, len: usize) -> Option<&'a mut [ComplexF32]> {
    if ptr.is_null() {
        return (len == 0).then_some(&mut []);
    }
    Some(slice::from_raw_parts_mut(ptr.cast::<ComplexF32>(), len))
}

/// Message describing the last failure on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fno_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Name of ledger array `index` (`input`, `spectrum_stage1`, ...), or null past the end.
#[no_mangle]
pub extern "C" fn fno_array_name(index: usize) -> *const c_char {
    const NAMES: [&CStr; FNO_NUM_ARRAYS] = [
        c"input",
        c"spectrum_stage1",
        c"spectrum_stage2",
        c"A_panel",
        c"B",
        c"C",
        c"C_padded",
        c"inverse_stage1",
        c"output",
    ];
    NAMES.get(index).map_or(ptr::null(), |n| n.as_ptr())
}

/// `n * log2(n)` butterfly outputs of an unpruned transform.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fno_full_op_count(n: usize, out: *mut u64) -> FnoStatus {
    guard(|| {
        if out.is_null() {
            return fail(FnoStatus::NullPointer, "out is null");
        }
        match full_op_count(n) {
            Ok(v) => {
                *out = v;
                FnoStatus::Ok
            }
            Err(e) => fft_status(e),
        }
    })
}

/// Plans an `n`-point transform keeping `keep` outputs from `src_len` nonzero inputs.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fno_fft_plan_new(
    n: usize,
    direction: FnoDirection,
    keep: usize,
    src_len: usize,
    out: *mut *mut FnoFftPlan,
) -> FnoStatus {
    guard(|| {
        if out.is_null() {
            return fail(FnoStatus::NullPointer, "out is null");
        }
        let dir = match direction {
            FnoDirection::Forward => Direction::Forward,
            FnoDirection::Inverse => Direction::Inverse,
        };
        match plan(n, dir, keep, src_len) {
            Ok(plan) => {
                let scratch = plan.scratch();
                *out = Box::into_raw(Box::new(FnoFftPlan { plan, scratch }));
                FnoStatus::Ok
            }
            Err(e) => fft_status(e),
        }
    })
}

/// # Safety
/// `plan` must be null or a handle from [`fno_fft_plan_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fno_fft_plan_free(plan: *mut FnoFftPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Operations the plan executes per pencil.
///
/// # Safety
/// `plan` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fno_fft_plan_op_budget(plan: *const FnoFftPlan, out: *mut FnoOpCount) -> FnoStatus {
    guard(|| {
        if plan.is_null() || out.is_null() {
            return fail(FnoStatus::NullPointer, "null argument");
        }
        *out = (*plan).plan.op_budget().into();
        FnoStatus::Ok
    })
}

/// Transforms `input[0..src_len]` into `output[0..keep]`. `ops` may be null.
///
/// # Safety
/// `plan` must be a live handle not used concurrently; buffers must be valid
/// for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn fno_fft_execute(
    plan: *mut FnoFftPlan,
    input: *const FnoComplex,
    input_len: usize,
    output: *mut FnoComplex,
    output_len: usize,
    ops: *mut FnoOpCount,
) -> FnoStatus {
    guard(|| {
        if plan.is_null() {
            return fail(FnoStatus::NullPointer, "plan is null");
        }
        let (Some(input), Some(output)) = (complex_slice(input, input_len), complex_slice_mut(output, output_len))
        else {
            return fail(FnoStatus::NullPointer, "null buffer");
        };
        let handle = &mut *plan;
        match handle.plan.execute_with_scratch(input, output, &mut handle.scratch) {
            Ok(count) => {
                if !ops.is_null() {
                    *ops = count.into();
                }
                FnoStatus::Ok
            }
            Err(e) => fft_status(e),
        }
    })
}

/// Writes the default tile configuration.
///
/// # Safety
/// `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fno_default_tiles(out: *mut FnoTileConfig) -> FnoStatus {
    guard(|| {
        if out.is_null() {
            return fail(FnoStatus::NullPointer, "out is null");
        }
        *out = TileConfig::default().into();
        FnoStatus::Ok
    })
}

/// Checks a layer against a tile configuration (null for the default) and an
/// FFT batch size (0 for `k_tb`). `violations` (nullable) receives the number
/// of broken constraints; the message lists them.
///
/// # Safety
/// `layer` must be valid; `tiles` and `violations` may be null.
#[no_mangle]
pub unsafe extern "C" fn fno_validate_config(
    layer: *const FnoLayerConfig,
    tiles: *const FnoTileConfig,
    bs: usize,
    violations: *mut usize,
) -> FnoStatus {
    guard(|| {
        if layer.is_null() {
            return fail(FnoStatus::NullPointer, "layer is null");
        }
        let setup = make_setup(&*layer, tiles, bs);
        let (count, status) = match validate_config(&setup) {
            Ok(_) => (0, FnoStatus::Ok),
            Err(report) => (report.violations.len(), fail(FnoStatus::InvalidConfig, &report)),
        };
        if !violations.is_null() {
            *violations = count;
        }
        status
    })
}

/// Creates a layer. `weights` is the column-major `hidden_dim x output_dim` matrix.
///
/// # Safety
/// `layer` and `out` must be valid; `tiles` may be null; `weights` must be
/// valid for `weights_len` reads.
#[no_mangle]
pub unsafe extern "C" fn fno_layer_new(
    layer: *const FnoLayerConfig,
    tiles: *const FnoTileConfig,
    bs: usize,
    weights: *const FnoComplex,
    weights_len: usize,
    out: *mut *mut FnoLayer,
) -> FnoStatus {
    guard(|| {
        if layer.is_null() || out.is_null() {
            return fail(FnoStatus::NullPointer, "null argument");
        }
        let setup = make_setup(&*layer, tiles, bs);
        let l = setup.layer;
        let Some(w) = complex_slice(weights, weights_len) else {
            return fail(FnoStatus::NullPointer, "weights is null");
        };
        let weights = match ComplexMatrix::from_col_major(l.hidden_dim, l.output_dim, w.to_vec()) {
            Ok(m) => m,
            Err(e) => return gemm_status(e),
        };
        if let Err(report) = validate_config(&setup) {
            let only_bs = report
                .violations
                .iter()
                .all(|v| matches!(v, fusedfno::ConfigViolation::BatchSizeMismatch { .. }));
            // A bs / k_tb mismatch only rules out the block modes; report it at run time.
            if !only_bs {
                return fail(FnoStatus::InvalidConfig, report);
            }
        }
        *out = Box::into_raw(Box::new(FnoLayer { setup, weights }));
        FnoStatus::Ok
    })
}

/// # Safety
/// `layer` must be null or a handle from [`fno_layer_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fno_layer_free(layer: *mut FnoLayer) {
    if !layer.is_null() {
        drop(Box::from_raw(layer));
    }
}

/// Runs the layer on `[batch, hidden_dim, dim_x, dim_y]` input, writing
/// `[batch, output_dim, dim_x, dim_y]` output. `ledger` may be null.
///
/// # Safety
/// `layer` must be a live handle; buffers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn fno_layer_run(
    layer: *const FnoLayer,
    mode: FnoMode,
    input: *const FnoComplex,
    input_len: usize,
    output: *mut FnoComplex,
    output_len: usize,
    ledger: *mut FnoLedger,
) -> FnoStatus {
    guard(|| {
        if layer.is_null() {
            return fail(FnoStatus::NullPointer, "layer is null");
        }
        let layer = &*layer;
        let l = layer.setup.layer;
        let (Some(input), Some(output)) = (complex_slice(input, input_len), complex_slice_mut(output, output_len))
        else {
            return fail(FnoStatus::NullPointer, "null buffer");
        };
        if output.len() != l.output_len() {
            return fail(
                FnoStatus::ShapeMismatch,
                format!(
                    "output has {} elements, layer produces {}",
                    output.len(),
                    l.output_len()
                ),
            );
        }
        let x = match SpectralTensor::from_vec(l.batch, l.hidden_dim, l.dim_x, l.dim_y, input.to_vec()) {
            Ok(x) => x,
            Err(e) => return fail(FnoStatus::ShapeMismatch, e),
        };
        match run_layer(&layer.setup, mode.into(), &x, &layer.weights) {
            Ok((y, traffic)) => {
                output.copy_from_slice(y.data());
                if !ledger.is_null() {
                    *ledger = (&traffic).into();
                }
                FnoStatus::Ok
            }
            Err(e) => pipeline_status(e),
        }
    })
}

/// `c = a * b` for column-major `m x k` and `k x n` matrices. `tiles` may be null.
///
/// # Safety
/// `a`, `b` and `c` must be valid for `m*k`, `k*n` and `m*n` elements.
#[no_mangle]
pub unsafe extern "C" fn fno_gemm_tiled(
    m: usize,
    n: usize,
    k: usize,
    tiles: *const FnoTileConfig,
    a: *const FnoComplex,
    b: *const FnoComplex,
    c: *mut FnoComplex,
) -> FnoStatus {
    guard(|| {
        let tiles: TileConfig = if tiles.is_null() {
            TileConfig::default()
        } else {
            (*tiles).into()
        };
        let (Some(a), Some(b), Some(c)) = (
            complex_slice(a, m * k),
            complex_slice(b, k * n),
            complex_slice_mut(c, m * n),
        ) else {
            return fail(FnoStatus::NullPointer, "null matrix");
        };
        let result = GemmProblem::new(m, n, k, tiles).and_then(|p| {
            let a = ComplexMatrix::from_col_major(m, k, a.to_vec())?;
            let b = ComplexMatrix::from_col_major(k, n, b.to_vec())?;
            gemm_tiled(&p, &a, &b)
        });
        match result {
            Ok(r) => {
                c.copy_from_slice(r.data());
                FnoStatus::Ok
            }
            Err(e) => gemm_status(e),
        }
    })
}

/// Simulates one write phase (`step`) of warp 0 of a named layout. `fft_size`
/// of 0 picks the layout's natural size.
///
/// # Safety
/// `layout` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn fno_simulate_layout(
    layout: *const c_char,
    fft_size: usize,
    step: usize,
    out: *mut FnoBankReport,
) -> FnoStatus {
    guard(|| {
        if layout.is_null() || out.is_null() {
            return fail(FnoStatus::NullPointer, "null argument");
        }
        let Ok(name) = CStr::from_ptr(layout).to_str() else {
            return fail(FnoStatus::InvalidArgument, "layout name is not UTF-8");
        };
        let layout: SwizzleLayout = match name.parse() {
            Ok(l) => l,
            Err(e) => return fail(FnoStatus::InvalidArgument, e),
        };
        let size = if fft_size == 0 {
            layout.default_fft_size()
        } else {
            fft_size
        };
        match layout_pattern(layout, size, step) {
            Ok(p) => {
                let r = simulate(&p);
                let mut touches = [0u32; NUM_BANKS];
                touches.copy_from_slice(&r.bank_touches);
                *out = FnoBankReport {
                    distinct_banks: r.distinct_banks as u32,
                    utilization: r.utilization,
                    max_conflict_degree: r.max_conflict_degree,
                    phases: r.phases,
                    total_touches: r.total_touches,
                    bank_touches: touches,
                };
                FnoStatus::Ok
            }
            Err(e) => fail(FnoStatus::InvalidArgument, e),
        }
    })
}

/// Serializes the traffic of a layer run as JSON into `buf` (NUL-terminated).
/// `needed` (nullable) receives the size including the terminator; a buffer
/// that is too small yields `FNO_STATUS_INVALID_ARGUMENT` and is left untouched.
///
/// # Safety
/// `layer` must be a live handle; `input` valid for `input_len` reads; `buf`
/// valid for `buf_len` writes or null when `buf_len` is 0.
#[no_mangle]
pub unsafe extern "C" fn fno_layer_ledger_json(
    layer: *const FnoLayer,
    mode: FnoMode,
    input: *const FnoComplex,
    input_len: usize,
    buf: *mut c_char,
    buf_len: usize,
    needed: *mut usize,
) -> FnoStatus {
    guard(|| {
        if layer.is_null() {
            return fail(FnoStatus::NullPointer, "layer is null");
        }
        let layer = &*layer;
        let l = layer.setup.layer;
        let Some(input) = complex_slice(input, input_len) else {
            return fail(FnoStatus::NullPointer, "input is null");
        };
        let x = match SpectralTensor::from_vec(l.batch, l.hidden_dim, l.dim_x, l.dim_y, input.to_vec()) {
            Ok(x) => x,
            Err(e) => return fail(FnoStatus::ShapeMismatch, e),
        };
        let traffic = match run_layer(&layer.setup, mode.into(), &x, &layer.weights) {
            Ok((_, t)) => t,
            Err(e) => return pipeline_status(e),
        };
        let json = serde_json::to_string(&traffic).expect("ledger serializes");
        if !needed.is_null() {
            *needed = json.len() + 1;
        }
        if buf.is_null() || buf_len < json.len() + 1 {
            return fail(
                FnoStatus::InvalidArgument,
                format!("buffer needs {} bytes", json.len() + 1),
            );
        }
        ptr::copy_nonoverlapping(json.as_ptr().cast::<c_char>(), buf, json.len());
        *buf.add(json.len()) = 0;
        FnoStatus::Ok
    })
}
