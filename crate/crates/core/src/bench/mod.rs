//! Experiment grids, the `verify` suites and the CSV/JSON report.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cgemm::{gemm_oracle, gemm_tiled, max_rel_error, ComplexMatrix, GemmProblem};
use crate::fft::{execute_unpruned, full_op_count, plan, Direction, FftError, OpCount};
use crate::gpu_model::{gemm_forwarding_report, layout_feeds_gemm, verify_epilogue_swizzle, LayoutTile, SwizzleLayout};
use crate::pipeline::{run_layer, GlobalArray, PipelineMode, TrafficLedger};
use crate::reference;
use crate::spectral::{
    validate_config, ComplexF32, FftKernelParams, FnoLayerConfig, LayerSetup, SpectralTensor, TileConfig,
};

/// Relative error tolerated between pipeline variants and against the f64 reference.
pub const PIPELINE_TOLERANCE: f64 = 1e-3;
/// Relative error tolerated between the FFT and the direct DFT.
pub const FFT_TOLERANCE: f64 = 1e-4;

fn default_max_elements() -> usize {
    1 << 23
}

fn default_modes() -> Vec<PipelineMode> {
    PipelineMode::ALL.to_vec()
}

/// One family of layer shapes.
///
/// For rank 1 each `batch_range` entry is used as the batch directly with
/// `dim_x = 1`. For rank 2 the layer is square (`dim_x = dim_y = dim`) and the
/// batch is `product / dim`; products smaller than `dim` are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    /// `(dim, keep)` pairs.
    pub dims: Vec<(usize, usize)>,
    pub hidden_range: Vec<usize>,
    /// Values of `batch * dim_x`.
    pub batch_range: Vec<usize>,
    pub rank: u8,
    #[serde(default = "default_modes")]
    pub modes: Vec<PipelineMode>,
    #[serde(default)]
    pub tiles: TileConfig,
    /// Output channels; defaults to the hidden dimension.
    #[serde(default)]
    pub output_dim: Option<usize>,
    /// Points whose input or output tensor exceeds this many elements are skipped.
    #[serde(default = "default_max_elements")]
    pub max_elements: usize,
}

impl ExperimentGrid {
    pub fn default_rank1() -> Self {
        Self {
            dims: vec![(128, 64), (128, 128), (256, 64), (256, 128)],
            hidden_range: vec![16, 32, 64, 128],
            batch_range: vec![16, 128],
            rank: 1,
            modes: default_modes(),
            tiles: TileConfig::default(),
            output_dim: None,
            max_elements: default_max_elements(),
        }
    }

    pub fn default_rank2() -> Self {
        Self {
            batch_range: vec![128, 256],
            rank: 2,
            ..Self::default_rank1()
        }
    }

    /// Grid points in enumeration order: dims, then hidden, then batch.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &(dim, keep) in &self.dims {
            for &hidden in &self.hidden_range {
                for &product in &self.batch_range {
                    let (batch, dim_x, keep_x) = if self.rank == 2 {
                        (product / dim.max(1), dim, keep)
                    } else {
                        (product, 1, 1)
                    };
                    if batch == 0 {
                        continue;
                    }
                    let layer = FnoLayerConfig {
                        batch,
                        hidden_dim: hidden,
                        output_dim: self.output_dim.unwrap_or(hidden),
                        dim_x,
                        dim_y: dim,
                        keep_x,
                        keep_y: keep,
                        rank: self.rank,
                    };
                    if layer.input_len() > self.max_elements || layer.output_len() > self.max_elements {
                        continue;
                    }
                    out.push(GridPoint {
                        setup: LayerSetup {
                            layer,
                            tiles: self.tiles,
                            fft: FftKernelParams {
                                bs: self.tiles.k_tb,
                                ..FftKernelParams::default()
                            },
                        },
                        batch_dim_x: product,
                    });
                }
            }
        }
        out
    }
}

/// The default desk-scale grid: both ranks, dims 128 and 256, keeps 64 and 128,
/// hidden 16 to 128, `batch * dim_x` at most 256.
pub fn default_grids() -> Vec<ExperimentGrid> {
    vec![ExperimentGrid::default_rank1(), ExperimentGrid::default_rank2()]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub setup: LayerSetup,
    pub batch_dim_x: usize,
}

impl GridPoint {
    pub fn label(&self) -> String {
        let l = &self.setup.layer;
        format!(
            "rank{} {}x{} keep {}x{} K={} N={} batch={}",
            l.rank, l.dim_x, l.dim_y, l.keep_x, l.keep_y, l.hidden_dim, l.output_dim, l.batch
        )
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Grid file contents: one grid, a list, or `{"grids": [...]}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum GridFile {
    Wrapped { grids: Vec<ExperimentGrid> },
    Many(Vec<ExperimentGrid>),
    One(ExperimentGrid),
}

pub fn parse_grids(json: &str) -> Result<Vec<ExperimentGrid>, BenchError> {
    let parsed: GridFile = serde_json::from_str(json).map_err(|e| BenchError::InvalidGrid(e.to_string()))?;
    Ok(match parsed {
        GridFile::Wrapped { grids } | GridFile::Many(grids) => grids,
        GridFile::One(g) => vec![g],
    })
}

fn point_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn random_values(rng: &mut ChaCha8Rng, len: usize) -> Vec<ComplexF32> {
    (0..len)
        .map(|_| ComplexF32::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// Seeded uniform `[-1, 1)` input tensor and weights for `layer`.
pub fn random_operands(layer: &FnoLayerConfig, seed: u64) -> (SpectralTensor, ComplexMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_values(&mut rng, layer.input_len());
    let w = random_values(&mut rng, layer.hidden_dim * layer.output_dim);
    (
        SpectralTensor::from_vec(layer.batch, layer.hidden_dim, layer.dim_x, layer.dim_y, x).expect("sized"),
        ComplexMatrix::from_col_major(layer.hidden_dim, layer.output_dim, w).expect("sized"),
    )
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: usize,
    pub failed: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
            self.failures.push(what());
        }
    }

    fn merge(&mut self, other: SuiteResult) {
        self.passed += other.passed;
        self.failed += other.failed;
        self.failures.extend(other.failures);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub points: usize,
    pub suites: Vec<SuiteResult>,
    pub warnings: Vec<String>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

impl VerifySummary {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.failed == 0)
    }

    /// 0 on success, 2 if any configuration was rejected, 3 for any other failure.
    pub fn exit_code(&self) -> i32 {
        if self.suites.iter().any(|s| s.name == "config" && s.failed > 0) {
            EXIT_CONFIG
        } else if self.passed() {
            EXIT_OK
        } else {
            EXIT_FAILURE
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for w in &self.warnings {
            s.push_str(&format!("warning: {w}\n"));
        }
        for suite in &self.suites {
            s.push_str(&format!(
                "{:<10} {:>6} passed {:>4} failed\n",
                suite.name, suite.passed, suite.failed
            ));
            for f in &suite.failures {
                s.push_str(&format!("  FAIL {f}\n"));
            }
        }
        s.push_str(if self.passed() {
            "verify: ok\n"
        } else {
            "verify: FAILED\n"
        });
        s
    }
}

struct PointSet {
    valid: Vec<(GridPoint, Vec<PipelineMode>)>,
    config: SuiteResult,
    warnings: Vec<String>,
}

fn collect_points(grids: &[ExperimentGrid]) -> PointSet {
    let mut config = SuiteResult::new("config");
    let mut warnings = Vec::new();
    let mut valid = Vec::new();
    for (gi, g) in grids.iter().enumerate() {
        let points = g.points();
        if points.is_empty() {
            warnings.push(format!("grid {gi} has no points"));
        }
        for p in points {
            match validate_config(&p.setup) {
                Ok(_) => {
                    config.passed += 1;
                    valid.push((p, g.modes.clone()));
                }
                Err(report) => {
                    config.failed += 1;
                    config.failures.push(format!("{}: {report}", p.label()));
                }
            }
        }
    }
    if grids.is_empty() {
        warnings.push("no grids given".to_string());
    }
    PointSet {
        valid,
        config,
        warnings,
    }
}

fn fft_oracle_suite(sizes: &BTreeSet<(usize, usize)>, seed: u64) -> SuiteResult {
    let mut suite = SuiteResult::new("fft_oracle");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF0F0);
    for &(n, keep) in sizes {
        for _ in 0..4 {
            let x = random_values(&mut rng, n);
            let short = &x[..keep];
            let cases = [
                (Direction::Forward, keep, &x[..]),
                (Direction::Inverse, n, short),
                (Direction::Forward, n, &x[..]),
            ];
            for (dir, k, input) in cases {
                let got = plan(n, dir, k, input.len()).and_then(|p| {
                    let mut out = vec![ComplexF32::new(0.0, 0.0); k];
                    p.execute(input, &mut out).map(|_| out)
                });
                let up: Vec<_> = input
                    .iter()
                    .map(|v| num_complex::Complex64::new(v.re as f64, v.im as f64))
                    .collect();
                let want: Vec<ComplexF32> = reference::dft(&up, n, k, dir)
                    .iter()
                    .map(|v| ComplexF32::new(v.re as f32, v.im as f32))
                    .collect();
                match got {
                    Ok(out) => {
                        let err = max_rel_error(&out, &want);
                        suite.check(err <= FFT_TOLERANCE, || {
                            format!("n={n} keep={k} src={} {dir:?}: rel error {err:e}", input.len())
                        });
                    }
                    Err(e) => suite.check(false, || format!("n={n} keep={k}: {e}")),
                }
            }
        }
    }
    suite
}

fn fft_prune_suite(lengths: &BTreeSet<usize>, seed: u64) -> SuiteResult {
    let mut suite = SuiteResult::new("fft_prune");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0F0F);
    for &n in lengths {
        let x = random_values(&mut rng, n);
        let full = execute_unpruned(n, Direction::Forward, &x, n).expect("valid length");
        for keep in 1..=n {
            let result: Result<Vec<ComplexF32>, FftError> = plan(n, Direction::Forward, keep, n).and_then(|p| {
                let mut out = vec![ComplexF32::new(0.0, 0.0); keep];
                p.execute(&x, &mut out).map(|_| out)
            });
            let ok = matches!(&result, Ok(out) if out.iter().zip(&full).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
            suite.check(ok, || format!("n={n} keep={keep}: pruned output differs from unpruned"));
            let src = keep;
            let padded = execute_unpruned(n, Direction::Inverse, &x[..src], n).expect("valid length");
            let result = plan(n, Direction::Inverse, n, src).and_then(|p| {
                let mut out = vec![ComplexF32::new(0.0, 0.0); n];
                p.execute(&x[..src], &mut out).map(|_| out)
            });
            let ok = matches!(&result, Ok(out) if out.iter().zip(&padded).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
            suite.check(ok, || {
                format!("n={n} src_len={src}: zero-padded inverse differs from unpruned")
            });
        }
    }
    suite
}

fn cgemm_suite(grids: &[ExperimentGrid], seed: u64) -> SuiteResult {
    let mut suite = SuiteResult::new("cgemm");
    let tiles: BTreeSet<_> = grids
        .iter()
        .map(|g| {
            (
                g.tiles.m_tb,
                g.tiles.n_tb,
                g.tiles.k_tb,
                g.tiles.m_w,
                g.tiles.n_w,
                g.tiles.m_t,
                g.tiles.n_t,
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC6E3);
    for t in tiles {
        let tiles = TileConfig {
            m_tb: t.0,
            n_tb: t.1,
            k_tb: t.2,
            m_w: t.3,
            n_w: t.4,
            m_t: t.5,
            n_t: t.6,
        };
        for _ in 0..20 {
            let (m, n, k) = (rng.gen_range(1..150), rng.gen_range(1..90), rng.gen_range(1..40));
            let a = ComplexMatrix::from_col_major(m, k, random_values(&mut rng, m * k)).expect("sized");
            let b = ComplexMatrix::from_col_major(k, n, random_values(&mut rng, k * n)).expect("sized");
            let got = GemmProblem::new(m, n, k, tiles).and_then(|p| gemm_tiled(&p, &a, &b));
            let want = gemm_oracle(&a, &b).expect("shapes agree");
            match got {
                Ok(c) => {
                    let err = max_rel_error(c.data(), want.data());
                    suite.check(err <= PIPELINE_TOLERANCE, || format!("{m}x{n}x{k}: rel error {err:e}"));
                }
                Err(e) => suite.check(false, || format!("{m}x{n}x{k}: {e}")),
            }
        }
    }
    suite
}

fn ledger_checks(suite: &mut SuiteResult, label: &str, staged: &TrafficLedger, other: &TrafficLedger) {
    let l = &staged.layer;
    let m = l.gemm_rows() as u64;
    let (k, n) = (l.hidden_dim as u64, l.output_dim as u64);
    let mode = other.mode;
    suite.check(
        staged.get(GlobalArray::APanel).bytes_written == m * k * 8
            && staged.get(GlobalArray::C).bytes_written == m * n * 8,
        || format!("{label}: staged ledger A/C byte counts"),
    );
    if mode.fuses_fft_gemm() {
        suite.check(other.get(GlobalArray::APanel).total() == 0, || {
            format!("{label} {mode}: A_panel touched global memory")
        });
    }
    if mode == PipelineMode::FullyFused {
        suite.check(other.get(GlobalArray::C).total() == 0, || {
            format!("{label} {mode}: C touched global memory")
        });
    }
    if mode.builtin_truncation() {
        let s1 = staged.get(GlobalArray::SpectrumStage1).bytes_written;
        let o1 = other.get(GlobalArray::SpectrumStage1).bytes_written;
        suite.check(o1 * l.dim_x as u64 == s1 * l.keep_x as u64, || {
            format!("{label} {mode}: stage-1 writes {o1} vs staged {s1}")
        });
        suite.check(other.total_bytes() <= staged.total_bytes(), || {
            format!("{label} {mode}: more traffic than staged")
        });
    }
}

fn pipeline_point(point: &GridPoint, modes: &[PipelineMode], seed: u64) -> SuiteResult {
    let mut suite = SuiteResult::new("pipeline");
    let label = point.label();
    let (x, w) = random_operands(&point.setup.layer, seed);
    let (staged_out, staged_ledger) = match run_layer(&point.setup, PipelineMode::Staged, &x, &w) {
        Ok(r) => r,
        Err(e) => {
            suite.check(false, || format!("{label} staged: {e}"));
            return suite;
        }
    };
    let want = reference::spectral_layer(&point.setup.layer, &x, &w);
    let err = max_rel_error(staged_out.data(), &want);
    suite.check(err <= PIPELINE_TOLERANCE, || {
        format!("{label} staged vs reference: rel error {err:e}")
    });
    for &mode in modes.iter().filter(|&&m| m != PipelineMode::Staged) {
        match run_layer(&point.setup, mode, &x, &w) {
            Ok((out, ledger)) => {
                let err = max_rel_error(out.data(), staged_out.data());
                suite.check(err <= PIPELINE_TOLERANCE, || {
                    format!("{label} {mode} vs staged: rel error {err:e}")
                });
                ledger_checks(&mut suite, &label, &staged_ledger, &ledger);
            }
            Err(e) => suite.check(false, || format!("{label} {mode}: {e}")),
        }
    }
    suite
}

fn banks_suite() -> SuiteResult {
    let mut suite = SuiteResult::new("banks");
    let forwarding = |l| gemm_forwarding_report(l).map(|r| r.utilization);
    suite.check(forwarding(SwizzleLayout::StridedVkfft).ok() == Some(0.25), || {
        "strided forwarding utilization != 0.25".into()
    });
    suite.check(
        layout_feeds_gemm(SwizzleLayout::ConsecutiveTurbofno).ok() == Some(true),
        || "consecutive layout does not feed the GEMM conflict-free".into(),
    );
    let phases = |l: SwizzleLayout| LayoutTile::new(l, l.default_fft_size()).map(|t| t.all_reports());
    let all_at = |l, u: f64| phases(l).map(|r| r.iter().all(|b| b.utilization == u)).unwrap_or(false);
    suite.check(all_at(SwizzleLayout::Fft16Naive, 0.0625), || {
        "fft16 naive utilization != 0.0625".into()
    });
    suite.check(all_at(SwizzleLayout::Fft16Swizzled, 1.0), || {
        "fft16 swizzled utilization != 1".into()
    });
    suite.check(all_at(SwizzleLayout::Fft8Swizzled, 1.0), || {
        "fft8 swizzled utilization != 1".into()
    });
    match verify_epilogue_swizzle(&TileConfig::TABLE) {
        Ok(v) => {
            suite.check(v.naive.iter().all(|r| r.max_conflict_degree >= 4), || {
                "naive epilogue conflict degree < 4".into()
            });
            suite.check(v.swizzled.iter().all(|r| r.utilization == 1.0), || {
                "swizzled epilogue utilization != 1".into()
            });
        }
        Err(e) => suite.check(false, || format!("epilogue: {e}")),
    }
    suite
}

/// Runs every suite over `grids` with data derived from `seed`.
pub fn cmd_verify(grids: &[ExperimentGrid], seed: u64) -> VerifySummary {
    let PointSet {
        valid,
        config,
        warnings,
    } = collect_points(grids);
    let mut suites = vec![config];
    if valid.is_empty() {
        return VerifySummary {
            seed,
            points: 0,
            suites,
            warnings,
        };
    }

    let sizes: BTreeSet<(usize, usize)> = valid
        .iter()
        .flat_map(|(p, _)| {
            let l = p.setup.layer;
            [(l.dim_y, l.keep_y), (l.dim_x, l.keep_x)]
        })
        .collect();
    let lengths: BTreeSet<usize> = sizes.iter().map(|&(n, _)| n).collect();
    suites.push(fft_oracle_suite(&sizes, seed));
    suites.push(fft_prune_suite(&lengths, seed));
    suites.push(cgemm_suite(grids, seed));

    let per_point: Vec<SuiteResult> = valid
        .par_iter()
        .enumerate()
        .map(|(i, (p, modes))| pipeline_point(p, modes, point_seed(seed, i)))
        .collect();
    let mut pipeline = SuiteResult::new("pipeline");
    for r in per_point {
        pipeline.merge(r);
    }
    suites.push(pipeline);
    suites.push(banks_suite());

    VerifySummary {
        seed,
        points: valid.len(),
        suites,
        warnings,
    }
}

// ---------------------------------------------------------------------------
// report

/// Column order of the report.
///
/// | column | meaning |
/// |---|---|
/// | `mode`, `variant` | pipeline mode and its evaluation letter (`baseline` for staged) |
/// | `rank`, `dim_x`, `dim_y`, `keep_x`, `keep_y`, `hidden`, `output_dim`, `batch` | layer shape |
/// | `batch_dim_x`, `log2_batch_dim_x` | heatmap axis |
/// | `fft_full_ops` | butterfly outputs of the staged layer (unpruned) |
/// | `fft_ops`, `fft_twiddle_muls` | butterfly outputs and twiddle products executed in this mode |
/// | `pruned_op_ratio`, `pruned_op_reduction` | `fft_ops / fft_full_ops` and `1 -` that |
/// | `kernel_launches` | logical passes |
/// | `<array>_read`, `<array>_written` | ledger bytes per global array |
/// | `total_bytes`, `traffic_ratio_vs_staged` | ledger total and its ratio to staged |
/// | `stage1_write_ratio` | DimX-spectrum write bytes relative to staged (0 for rank 1) |
/// | `stage2_modeled_ops`, `stage2_op_ratio` | DimY-transform work model and its ratio to staged |
/// | `max_rel_error` | against the f64 direct-DFT reference |
pub fn report_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "mode",
        "variant",
        "rank",
        "dim_x",
        "dim_y",
        "keep_x",
        "keep_y",
        "hidden",
        "output_dim",
        "batch",
        "batch_dim_x",
        "log2_batch_dim_x",
        "fft_full_ops",
        "fft_ops",
        "fft_twiddle_muls",
        "pruned_op_ratio",
        "pruned_op_reduction",
        "kernel_launches",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for a in GlobalArray::ALL {
        cols.push(format!("{}_read", a.name()));
        cols.push(format!("{}_written", a.name()));
    }
    cols.extend(
        [
            "total_bytes",
            "traffic_ratio_vs_staged",
            "stage1_write_ratio",
            "stage2_modeled_ops",
            "stage2_op_ratio",
            "max_rel_error",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    cols
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Int(u64),
    Float(f64),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }
}

/// One report row, cells in [`report_columns`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub cells: Vec<Cell>,
}

impl ReportRow {
    pub fn get(&self, column: &str) -> Option<&Cell> {
        report_columns()
            .iter()
            .position(|c| c == column)
            .map(|i| &self.cells[i])
    }

    fn to_json(&self, columns: &[String]) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = columns
            .iter()
            .zip(&self.cells)
            .map(|(c, v)| (c.clone(), serde_json::to_value(v).expect("cell serializes")))
            .collect();
        serde_json::Value::Object(map)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn report_row(point: &GridPoint, ledger: &TrafficLedger, staged: &TrafficLedger, err: f64) -> ReportRow {
    let l = &point.setup.layer;
    let full = staged.fft_ops.butterflies;
    let ops: OpCount = ledger.fft_ops;
    let prune_ratio = ratio(ops.butterflies, full);
    let mut cells = vec![
        Cell::Text(ledger.mode.name().into()),
        Cell::Text(ledger.mode.variant().map_or("baseline".into(), |c| c.to_string())),
        Cell::Int(l.rank as u64),
        Cell::Int(l.dim_x as u64),
        Cell::Int(l.dim_y as u64),
        Cell::Int(l.keep_x as u64),
        Cell::Int(l.keep_y as u64),
        Cell::Int(l.hidden_dim as u64),
        Cell::Int(l.output_dim as u64),
        Cell::Int(l.batch as u64),
        Cell::Int(point.batch_dim_x as u64),
        Cell::Float((point.batch_dim_x as f64).log2()),
        Cell::Int(full),
        Cell::Int(ops.butterflies),
        Cell::Int(ops.twiddle_muls),
        Cell::Float(prune_ratio),
        Cell::Float(1.0 - prune_ratio),
        Cell::Int(ledger.kernel_launches as u64),
    ];
    for a in GlobalArray::ALL {
        let t = ledger.get(a);
        cells.push(Cell::Int(t.bytes_read));
        cells.push(Cell::Int(t.bytes_written));
    }
    let s1 = GlobalArray::SpectrumStage1;
    cells.extend([
        Cell::Int(ledger.total_bytes()),
        Cell::Float(ratio(ledger.total_bytes(), staged.total_bytes())),
        Cell::Float(ratio(ledger.get(s1).bytes_written, staged.get(s1).bytes_written)),
        Cell::Int(ledger.stage2_modeled_ops),
        Cell::Float(ratio(ledger.stage2_modeled_ops, staged.stage2_modeled_ops)),
        Cell::Float(if err.is_finite() { err } else { f64::MAX }),
    ]);
    ReportRow { cells }
}

fn report_point(point: &GridPoint, modes: &[PipelineMode], seed: u64) -> Result<Vec<ReportRow>, String> {
    let (x, w) = random_operands(&point.setup.layer, seed);
    let want = reference::spectral_layer(&point.setup.layer, &x, &w);
    let (staged_out, staged) =
        run_layer(&point.setup, PipelineMode::Staged, &x, &w).map_err(|e| format!("{}: {e}", point.label()))?;
    modes
        .iter()
        .map(|&mode| {
            if mode == PipelineMode::Staged {
                Ok(report_row(
                    point,
                    &staged,
                    &staged,
                    max_rel_error(staged_out.data(), &want),
                ))
            } else {
                let (out, ledger) =
                    run_layer(&point.setup, mode, &x, &w).map_err(|e| format!("{} {mode}: {e}", point.label()))?;
                Ok(report_row(point, &ledger, &staged, max_rel_error(out.data(), &want)))
            }
        })
        .collect()
}

/// Computes the report rows in grid order.
pub fn report_rows(grids: &[ExperimentGrid], seed: u64) -> Result<Vec<ReportRow>, BenchError> {
    let PointSet { valid, config, .. } = collect_points(grids);
    if config.failed > 0 {
        return Err(BenchError::InvalidGrid(config.failures.join("; ")));
    }
    let per_point: Vec<Result<Vec<ReportRow>, String>> = valid
        .par_iter()
        .enumerate()
        .map(|(i, (p, modes))| report_point(p, modes, point_seed(seed, i)))
        .collect();
    let mut rows = Vec::new();
    for r in per_point {
        rows.extend(r.map_err(BenchError::InvalidGrid)?);
    }
    Ok(rows)
}

/// Path of the JSON mirror written next to the CSV.
pub fn json_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the CSV report to `out` and its JSON mirror to `out` with a `.json` extension.
pub fn cmd_report(grids: &[ExperimentGrid], seed: u64, out: &Path) -> Result<Vec<ReportRow>, BenchError> {
    let rows = report_rows(grids, seed)?;
    let columns = report_columns();
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(&columns)?;
    for r in &rows {
        w.write_record(r.cells.iter().map(Cell::csv))?;
    }
    w.flush()?;
    let json: Vec<serde_json::Value> = rows.iter().map(|r| r.to_json(&columns)).collect();
    fs::write(json_path(out), serde_json::to_string_pretty(&json)? + "\n")?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// count-ops

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpCountReport {
    pub n: usize,
    pub keep: usize,
    pub src_len: usize,
    pub budget: OpCount,
    pub full: u64,
    pub ratio: f64,
}

impl std::fmt::Display for OpCountReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "n={} keep={} src_len={}: {} / {} = {} ({} twiddle multiplies, {} skipped)",
            self.n,
            self.keep,
            self.src_len,
            self.budget.butterflies,
            self.full,
            self.ratio,
            self.budget.twiddle_muls,
            self.budget.skipped
        )
    }
}

/// Forward-transform operation budget against the unpruned count.
pub fn count_ops(n: usize, keep: usize, src_len: usize) -> Result<OpCountReport, FftError> {
    let p = plan(n, Direction::Forward, keep, src_len)?;
    let full = full_op_count(n)?;
    let budget = p.op_budget();
    Ok(OpCountReport {
        n,
        keep,
        src_len,
        budget,
        full,
        ratio: ratio(budget.butterflies, full),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shapes() {
        let r1 = ExperimentGrid::default_rank1().points();
        assert_eq!(r1.len(), 32);
        assert!(r1.iter().all(|p| p.setup.layer.dim_x == 1 && p.batch_dim_x <= 1 << 14));
        let r2 = ExperimentGrid::default_rank2().points();
        // dim 128: batch 1 and 2; dim 256: only batch 1.
        assert_eq!(r2.len(), 2 * 4 * 2 + 2 * 4);
        assert!(r2
            .iter()
            .all(|p| p.setup.layer.batch * p.setup.layer.dim_x == p.batch_dim_x));
    }

    #[test]
    fn grid_file_forms() {
        let one = r#"{"dims": [[8, 4]], "hidden_range": [8], "batch_range": [2], "rank": 1}"#;
        let g = parse_grids(one).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].modes.len(), 5);
        assert_eq!(g[0].tiles, TileConfig::TABLE);
        assert_eq!(parse_grids(&format!("[{one}, {one}]")).unwrap().len(), 2);
        assert_eq!(parse_grids(&format!("{{\"grids\": [{one}]}}")).unwrap().len(), 1);
        assert!(parse_grids("{").is_err());
    }

    #[test]
    fn count_ops_examples() {
        let r = count_ops(4, 1, 4).unwrap();
        assert_eq!((r.budget.butterflies, r.full, r.ratio), (3, 8, 0.375));
        assert_eq!(count_ops(4, 4, 4).unwrap().ratio, 1.0);
        assert!(count_ops(6, 1, 6).is_err());
    }

    #[test]
    fn empty_grid_is_a_warning() {
        let s = cmd_verify(&[], 0);
        assert!(s.passed());
        assert_eq!(s.exit_code(), EXIT_OK);
        assert!(!s.warnings.is_empty());
    }

    #[test]
    fn oversized_keep_is_a_config_failure() {
        let g = ExperimentGrid {
            dims: vec![(16, 32)],
            hidden_range: vec![8],
            batch_range: vec![2],
            ..ExperimentGrid::default_rank1()
        };
        let s = cmd_verify(&[g], 0);
        assert_eq!(s.exit_code(), EXIT_CONFIG);
    }
}
