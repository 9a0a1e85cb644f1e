//! The spectral layer `iFFT(pad(FFT(x) truncated · W))` in five executions,
//! from the fully staged baseline to the fully fused kernel.
//!
//! "Global memory" is the set of named arrays handed from one logical pass to
//! the next; every such hand-off is recorded in a [`TrafficLedger`]. Inside a
//! fused threadblock the A panel and the C tile live in block-local scratch and
//! never reach the ledger.
//!
//! Rank-2 layers always run the DimX forward transform and the DimX inverse
//! transform as separate passes; only the DimY transform, the GEMM and the
//! DimY inverse are fusion candidates.

pub mod ledger;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cgemm::{gemm_tiled, mac_panel, ComplexMatrix, GemmError, GemmProblem};
use crate::fft::{plan, Direction, FftError, FftPlan, OpCount, PencilView};
use crate::spectral::{
    validate_config, ComplexF32, ConfigReport, ConfigViolation, FnoLayerConfig, LayerSetup, SpectralTensor, TileConfig,
    COMPLEX_BYTES,
};

pub use ledger::{
    traffic_delta, ArrayDelta, ArrayTraffic, GlobalArray, LedgerError, PassRecord, TrafficDelta, TrafficLedger,
};

/// Execution variants, one per column of the method comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    /// Library-style baseline: full FFTs plus separate truncate and pad copies.
    Staged,
    /// Built-in truncation, zero-padding and pruning; no fusion.
    FftOptimized,
    /// DimY FFT fused into the GEMM k-loop.
    FusedFftGemm,
    /// DimY inverse FFT fused as the GEMM epilogue.
    FusedGemmIfft,
    /// Both fusions.
    FullyFused,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 5] = [
        PipelineMode::Staged,
        PipelineMode::FftOptimized,
        PipelineMode::FusedFftGemm,
        PipelineMode::FusedGemmIfft,
        PipelineMode::FullyFused,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PipelineMode::Staged => "staged",
            PipelineMode::FftOptimized => "fft_optimized",
            PipelineMode::FusedFftGemm => "fused_fft_gemm",
            PipelineMode::FusedGemmIfft => "fused_gemm_ifft",
            PipelineMode::FullyFused => "fully_fused",
        }
    }

    /// Evaluation variant letter; `None` for the baseline.
    pub fn variant(&self) -> Option<char> {
        match self {
            PipelineMode::Staged => None,
            PipelineMode::FftOptimized => Some('A'),
            PipelineMode::FusedFftGemm => Some('B'),
            PipelineMode::FusedGemmIfft => Some('C'),
            PipelineMode::FullyFused => Some('D'),
        }
    }

    pub fn builtin_truncation(&self) -> bool {
        *self != PipelineMode::Staged
    }

    pub fn fuses_fft_gemm(&self) -> bool {
        matches!(self, PipelineMode::FusedFftGemm | PipelineMode::FullyFused)
    }

    pub fn fuses_gemm_ifft(&self) -> bool {
        matches!(self, PipelineMode::FusedGemmIfft | PipelineMode::FullyFused)
    }

    fn uses_blocks(&self) -> bool {
        self.fuses_fft_gemm() || self.fuses_gemm_ifft()
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fused" => return Ok(PipelineMode::FullyFused),
            "A" => return Ok(PipelineMode::FftOptimized),
            "B" => return Ok(PipelineMode::FusedFftGemm),
            "C" => return Ok(PipelineMode::FusedGemmIfft),
            "D" => return Ok(PipelineMode::FullyFused),
            _ => {}
        }
        PipelineMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigReport),
    #[error("fused schedule needs bs == k_tb, got bs = {bs}, k_tb = {k_tb}")]
    ScheduleInvalid { bs: usize, k_tb: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Fft(#[from] FftError),
    #[error(transparent)]
    Gemm(#[from] GemmError),
}

/// Control structure of one fused threadblock.
///
/// A block owns one `(batch, x)` row group: `block_rows = keep_y` GEMM rows,
/// processed by the microkernel in `panel_rows`-row tiles. Each k-loop step
/// transforms `panel_cols == bs` hidden channels into the A panel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FusedSchedule {
    pub block_rows: usize,
    pub panel_rows: usize,
    pub panel_cols: usize,
    /// First hidden channel of each k-loop step, ascending.
    pub k_loop_order: Vec<usize>,
    /// Output-channel ranges visited by the epilogue, in order.
    pub epilogue_tiles: Vec<Range<usize>>,
}

impl FusedSchedule {
    pub fn new(setup: &LayerSetup) -> Result<Self, PipelineError> {
        let t = &setup.tiles;
        if setup.fft.bs != t.k_tb {
            return Err(PipelineError::ScheduleInvalid {
                bs: setup.fft.bs,
                k_tb: t.k_tb,
            });
        }
        let l = &setup.layer;
        Ok(Self {
            block_rows: l.keep_y,
            panel_rows: t.m_tb,
            panel_cols: t.k_tb,
            k_loop_order: (0..l.hidden_dim).step_by(t.k_tb).collect(),
            epilogue_tiles: (0..l.output_dim)
                .step_by(t.n_tb)
                .map(|n0| n0..(n0 + t.n_tb).min(l.output_dim))
                .collect(),
        })
    }
}

/// Validates `setup` for `mode`. The staged baseline does not use the FFT
/// batch size, so a bs / k_tb mismatch only matters for the block modes.
fn prepare(setup: &LayerSetup, mode: PipelineMode) -> Result<(), PipelineError> {
    match validate_config(setup) {
        Ok(_) => Ok(()),
        Err(report) => {
            let mut rest: Vec<ConfigViolation> = Vec::new();
            let mut mismatch = None;
            for v in report.violations {
                match v {
                    ConfigViolation::BatchSizeMismatch { bs, k_tb } => mismatch = Some((bs, k_tb)),
                    other => rest.push(other),
                }
            }
            if !rest.is_empty() {
                return Err(ConfigReport { violations: rest }.into());
            }
            match mismatch {
                Some((bs, k_tb)) if mode.uses_blocks() => Err(PipelineError::ScheduleInvalid { bs, k_tb }),
                _ => Ok(()),
            }
        }
    }
}

fn check_operands(l: &FnoLayerConfig, x: &SpectralTensor, w: &ComplexMatrix) -> Result<(), PipelineError> {
    let want = [l.batch, l.hidden_dim, l.dim_x, l.dim_y];
    if x.shape() != want {
        return Err(PipelineError::ShapeMismatch(format!(
            "input shape {:?}, layer expects {want:?}",
            x.shape()
        )));
    }
    if w.rows != l.hidden_dim || w.cols != l.output_dim {
        return Err(PipelineError::ShapeMismatch(format!(
            "weights are {}x{}, layer expects {}x{}",
            w.rows, w.cols, l.hidden_dim, l.output_dim
        )));
    }
    Ok(())
}

/// Runs the layer under `mode`.
pub fn run_layer(
    setup: &LayerSetup,
    mode: PipelineMode,
    x: &SpectralTensor,
    w: &ComplexMatrix,
) -> Result<(SpectralTensor, TrafficLedger), PipelineError> {
    prepare(setup, mode)?;
    check_operands(&setup.layer, x, w)?;
    Executor::new(setup, mode, w).run(x)
}

/// Library-style execution: every stage is its own pass through global memory.
pub fn run_staged(
    setup: &LayerSetup,
    x: &SpectralTensor,
    w: &ComplexMatrix,
) -> Result<(SpectralTensor, TrafficLedger), PipelineError> {
    run_layer(setup, PipelineMode::Staged, x, w)
}

/// Fully fused execution: DimY FFT inside the GEMM k-loop, DimY iFFT as its epilogue.
pub fn run_fused(
    setup: &LayerSetup,
    x: &SpectralTensor,
    w: &ComplexMatrix,
) -> Result<(SpectralTensor, TrafficLedger), PipelineError> {
    run_layer(setup, PipelineMode::FullyFused, x, w)
}

const ZERO: ComplexF32 = ComplexF32::new(0.0, 0.0);
const PENCILS_PER_TASK: usize = 64;

fn bytes(elements: usize) -> u64 {
    elements as u64 * COMPLEX_BYTES
}

/// Transforms contiguous pencils of `plan.src_len()` into contiguous pencils of `plan.keep()`.
fn transform_rows(plan: &FftPlan, src: &[ComplexF32], pencils: usize) -> Result<(Vec<ComplexF32>, OpCount), FftError> {
    let (n_in, n_out) = (plan.src_len(), plan.keep());
    debug_assert_eq!(src.len(), pencils * n_in);
    let mut out = vec![ZERO; pencils * n_out];
    let ops = out
        .par_chunks_mut(n_out * PENCILS_PER_TASK)
        .zip(src.par_chunks(n_in * PENCILS_PER_TASK))
        .map(|(o, i)| {
            let count = o.len() / n_out;
            let mut scratch = plan.scratch();
            plan.batched_execute_with_scratch(
                i,
                PencilView::contiguous(0, count, n_in),
                o,
                PencilView::contiguous(0, count, n_out),
                &mut scratch,
            )
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok((out, ops))
}

/// Transforms along the second-to-last axis of `[outer, src_len, y_len]`,
/// producing `[outer, keep, y_len]`.
fn transform_cols(
    plan: &FftPlan,
    src: &[ComplexF32],
    outer: usize,
    y_len: usize,
) -> Result<(Vec<ComplexF32>, OpCount), FftError> {
    let (n_in, n_out) = (plan.src_len(), plan.keep());
    debug_assert_eq!(src.len(), outer * n_in * y_len);
    let mut out = vec![ZERO; outer * n_out * y_len];
    let view = PencilView {
        offset: 0,
        count: y_len,
        pencil_stride: 1,
        element_stride: y_len,
    };
    let ops = out
        .par_chunks_mut(n_out * y_len)
        .zip(src.par_chunks(n_in * y_len))
        .map(|(o, i)| {
            let mut scratch = plan.scratch();
            plan.batched_execute_with_scratch(i, view, o, view, &mut scratch)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok((out, ops))
}

/// Where a fused block gets its A panel from.
enum ASource<'a> {
    /// Transform hidden-direction pencils of `[batch, hidden, rows_x, dim_y]`.
    Fft { src: &'a [ComplexF32], plan: &'a FftPlan },
    /// Copy rows out of a materialized A matrix.
    Panel(&'a ComplexMatrix),
}

enum Epilogue<'a> {
    StoreC,
    InverseFft(&'a FftPlan),
}

struct Executor<'a> {
    l: FnoLayerConfig,
    t: TileConfig,
    mode: PipelineMode,
    w: &'a ComplexMatrix,
    schedule: FusedSchedule,
    /// Rows of DimX carried into the DimY stage.
    kx: usize,
    ky: usize,
    ledger: TrafficLedger,
}

impl<'a> Executor<'a> {
    fn new(setup: &LayerSetup, mode: PipelineMode, w: &'a ComplexMatrix) -> Self {
        let l = setup.layer;
        // Only the block modes require bs == k_tb; the schedule is unused otherwise.
        let mut aligned = *setup;
        aligned.fft.bs = setup.tiles.k_tb;
        Self {
            l,
            t: setup.tiles,
            mode,
            w,
            schedule: FusedSchedule::new(&aligned).expect("bs aligned"),
            kx: l.keep_x,
            ky: l.keep_y,
            ledger: TrafficLedger::new(l, mode),
        }
    }

    fn m(&self) -> usize {
        self.l.gemm_rows()
    }

    fn log2_y(&self) -> u64 {
        self.l.dim_y.trailing_zeros() as u64
    }

    fn run(mut self, x: &SpectralTensor) -> Result<(SpectralTensor, TrafficLedger), PipelineError> {
        let out = if self.mode == PipelineMode::Staged {
            self.run_staged(x)?
        } else {
            self.run_optimized(x)?
        };
        let l = self.l;
        let tensor = SpectralTensor::from_vec(l.batch, l.output_dim, l.dim_x, l.dim_y, out)
            .map_err(|e| PipelineError::ShapeMismatch(e.to_string()))?;
        Ok((tensor, self.ledger))
    }

    fn gemm_weight_bytes(&self, m_tiles: usize) -> u64 {
        bytes(m_tiles * self.l.hidden_dim * self.l.output_dim)
    }

    fn run_staged(&mut self, x: &SpectralTensor) -> Result<Vec<ComplexF32>, PipelineError> {
        let l = self.l;
        let (b, h, n) = (l.batch, l.hidden_dim, l.output_dim);
        let (dx, dy, kx, ky) = (l.dim_x, l.dim_y, self.kx, self.ky);
        let m = self.m();
        let full = b * h * dx * dy;

        let (stage2_src, src_array) = if l.rank == 2 {
            let p = plan(dx, Direction::Forward, dx, dx)?;
            let (s1, ops) = transform_cols(&p, x.data(), b * h, dy)?;
            self.ledger.fft_ops += ops;
            self.ledger.pass(
                "fft_x",
                &[(GlobalArray::Input, bytes(full))],
                &[(GlobalArray::SpectrumStage1, bytes(full))],
            );
            (s1, GlobalArray::SpectrumStage1)
        } else {
            (x.data().to_vec(), GlobalArray::Input)
        };

        let p = plan(dy, Direction::Forward, dy, dy)?;
        let (s2, ops) = transform_rows(&p, &stage2_src, b * h * dx)?;
        drop(stage2_src);
        self.ledger.fft_ops += ops;
        self.ledger.stage2_modeled_ops += (b * h * dx * dy) as u64 * self.log2_y();
        self.ledger.pass(
            "fft_y",
            &[(src_array, bytes(full))],
            &[(GlobalArray::SpectrumStage2, bytes(full))],
        );

        let mut a = ComplexMatrix::zeros(m, h);
        a.data_mut().par_chunks_mut(m).enumerate().for_each(|(hh, col)| {
            for bb in 0..b {
                for xx in 0..kx {
                    let src = ((bb * h + hh) * dx + xx) * dy;
                    let dst = (bb * kx + xx) * ky;
                    col[dst..dst + ky].copy_from_slice(&s2[src..src + ky]);
                }
            }
        });
        drop(s2);
        self.ledger.pass(
            "truncate",
            &[(GlobalArray::SpectrumStage2, bytes(m * h))],
            &[(GlobalArray::APanel, bytes(m * h))],
        );

        let problem = GemmProblem::new(m, n, h, self.t)?;
        let c = gemm_tiled(&problem, &a, self.w)?;
        drop(a);
        self.ledger.pass(
            "cgemm",
            &[
                (GlobalArray::APanel, bytes(m * h)),
                (GlobalArray::Weights, self.gemm_weight_bytes(problem.m_tiles())),
            ],
            &[(GlobalArray::C, bytes(m * n))],
        );

        let out_full = b * n * dx * dy;
        let mut padded = vec![ZERO; out_full];
        padded.par_chunks_mut(dx * dy).enumerate().for_each(|(q, slab)| {
            let (bb, nn) = (q / n, q % n);
            for xx in 0..kx {
                let src = nn * m + (bb * kx + xx) * ky;
                slab[xx * dy..xx * dy + ky].copy_from_slice(&c.data()[src..src + ky]);
            }
        });
        drop(c);
        self.ledger.pass(
            "pad",
            &[(GlobalArray::C, bytes(m * n))],
            &[(GlobalArray::CPadded, bytes(out_full))],
        );

        let p = plan(dy, Direction::Inverse, dy, dy)?;
        let (t, ops) = transform_rows(&p, &padded, b * n * dx)?;
        drop(padded);
        self.ledger.fft_ops += ops;
        if l.rank == 2 {
            self.ledger.pass(
                "ifft_y",
                &[(GlobalArray::CPadded, bytes(out_full))],
                &[(GlobalArray::InverseStage1, bytes(out_full))],
            );
            let p = plan(dx, Direction::Inverse, dx, dx)?;
            let (out, ops) = transform_cols(&p, &t, b * n, dy)?;
            self.ledger.fft_ops += ops;
            self.ledger.pass(
                "ifft_x",
                &[(GlobalArray::InverseStage1, bytes(out_full))],
                &[(GlobalArray::Output, bytes(out_full))],
            );
            Ok(out)
        } else {
            self.ledger.pass(
                "ifft_y",
                &[(GlobalArray::CPadded, bytes(out_full))],
                &[(GlobalArray::Output, bytes(out_full))],
            );
            Ok(t)
        }
    }

    fn run_optimized(&mut self, x: &SpectralTensor) -> Result<Vec<ComplexF32>, PipelineError> {
        let l = self.l;
        let (b, h, n) = (l.batch, l.hidden_dim, l.output_dim);
        let (dx, dy, kx, ky) = (l.dim_x, l.dim_y, self.kx, self.ky);
        let m = self.m();
        let mode = self.mode;

        // DimX forward with built-in truncation (rank 2 only).
        let stage1;
        let (src, src_array): (&[ComplexF32], GlobalArray) = if l.rank == 2 {
            let p = plan(dx, Direction::Forward, kx, dx)?;
            let (s1, ops) = transform_cols(&p, x.data(), b * h, dy)?;
            self.ledger.fft_ops += ops;
            self.ledger.pass(
                "fft_x",
                &[(GlobalArray::Input, bytes(b * h * dx * dy))],
                &[(GlobalArray::SpectrumStage1, bytes(b * h * kx * dy))],
            );
            stage1 = s1;
            (&stage1, GlobalArray::SpectrumStage1)
        } else {
            (x.data(), GlobalArray::Input)
        };
        let src_bytes = bytes(b * h * kx * dy);
        self.ledger.stage2_modeled_ops += (b * h * kx * ky) as u64 * self.log2_y();

        let fwd = plan(dy, Direction::Forward, ky, dy)?;
        let inv = plan(dy, Direction::Inverse, dy, ky)?;
        let target = if l.rank == 2 {
            GlobalArray::InverseStage1
        } else {
            GlobalArray::Output
        };
        let t_len = b * n * kx * dy;
        let block_weight_bytes = self.gemm_weight_bytes(b * kx * ky.div_ceil(self.t.m_tb));

        let t: Vec<ComplexF32> = if mode.fuses_fft_gemm() {
            let a_src = ASource::Fft { src, plan: &fwd };
            if mode.fuses_gemm_ifft() {
                let t = self.run_blocks(a_src, Epilogue::InverseFft(&inv))?;
                self.ledger.pass(
                    "fft_cgemm_ifft",
                    &[(src_array, src_bytes), (GlobalArray::Weights, block_weight_bytes)],
                    &[(target, bytes(t_len))],
                );
                t
            } else {
                let c = self.run_blocks(a_src, Epilogue::StoreC)?;
                self.ledger.pass(
                    "fft_cgemm",
                    &[(src_array, src_bytes), (GlobalArray::Weights, block_weight_bytes)],
                    &[(GlobalArray::C, bytes(m * n))],
                );
                self.inverse_from_c(&c, &inv, target)?
            }
        } else {
            let mut a = ComplexMatrix::zeros(m, h);
            let ops = a
                .data_mut()
                .par_chunks_mut(m)
                .enumerate()
                .map(|(hh, col)| -> Result<OpCount, FftError> {
                    let mut scratch = fwd.scratch();
                    let mut ops = OpCount::default();
                    for bb in 0..b {
                        let in_view = PencilView {
                            offset: (bb * h + hh) * kx * dy,
                            count: kx,
                            pencil_stride: dy,
                            element_stride: 1,
                        };
                        let out_view = PencilView::contiguous(bb * kx * ky, kx, ky);
                        ops += fwd.batched_execute_with_scratch(src, in_view, col, out_view, &mut scratch)?;
                    }
                    Ok(ops)
                })
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .sum();
            self.ledger.fft_ops += ops;
            self.ledger.pass(
                "fft_y",
                &[(src_array, src_bytes)],
                &[(GlobalArray::APanel, bytes(m * h))],
            );

            if mode.fuses_gemm_ifft() {
                let t = self.run_blocks(ASource::Panel(&a), Epilogue::InverseFft(&inv))?;
                self.ledger.pass(
                    "cgemm_ifft",
                    &[
                        (GlobalArray::APanel, bytes(m * h)),
                        (GlobalArray::Weights, block_weight_bytes),
                    ],
                    &[(target, bytes(t_len))],
                );
                t
            } else {
                let problem = GemmProblem::new(m, n, h, self.t)?;
                let c = gemm_tiled(&problem, &a, self.w)?;
                self.ledger.pass(
                    "cgemm",
                    &[
                        (GlobalArray::APanel, bytes(m * h)),
                        (GlobalArray::Weights, self.gemm_weight_bytes(problem.m_tiles())),
                    ],
                    &[(GlobalArray::C, bytes(m * n))],
                );
                self.inverse_from_c(c.data(), &inv, target)?
            }
        };

        if l.rank == 2 {
            let p = plan(dx, Direction::Inverse, dx, kx)?;
            let (out, ops) = transform_cols(&p, &t, b * n, dy)?;
            self.ledger.fft_ops += ops;
            self.ledger.pass(
                "ifft_x",
                &[(GlobalArray::InverseStage1, bytes(t_len))],
                &[(GlobalArray::Output, bytes(b * n * dx * dy))],
            );
            Ok(out)
        } else {
            Ok(t)
        }
    }

    /// Separate DimY inverse pass reading the column-major C matrix.
    fn inverse_from_c(
        &mut self,
        c: &[ComplexF32],
        inv: &FftPlan,
        target: GlobalArray,
    ) -> Result<Vec<ComplexF32>, PipelineError> {
        let l = self.l;
        let (n, dy, kx, ky) = (l.output_dim, l.dim_y, self.kx, self.ky);
        let m = self.m();
        let mut t = vec![ZERO; l.batch * n * kx * dy];
        let ops = t
            .par_chunks_mut(kx * dy)
            .enumerate()
            .map(|(q, slab)| {
                let (bb, nn) = (q / n, q % n);
                let mut scratch = inv.scratch();
                let in_view = PencilView::contiguous(nn * m + bb * kx * ky, kx, ky);
                inv.batched_execute_with_scratch(c, in_view, slab, PencilView::contiguous(0, kx, dy), &mut scratch)
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .sum();
        self.ledger.fft_ops += ops;
        self.ledger
            .pass("ifft_y", &[(GlobalArray::C, bytes(m * n))], &[(target, bytes(t.len()))]);
        Ok(t)
    }

    /// Runs one threadblock per `(batch, x)` row group and scatters the block
    /// results into C (column-major `m x n`) or into `[batch, n, kx, dim_y]`.
    fn run_blocks(&mut self, a_src: ASource<'_>, epilogue: Epilogue<'_>) -> Result<Vec<ComplexF32>, PipelineError> {
        let l = self.l;
        let (h, n, dy, kx, ky) = (l.hidden_dim, l.output_dim, l.dim_y, self.kx, self.ky);
        let m = self.m();
        let blocks = l.batch * kx;
        let tiles = self.t;
        let schedule = &self.schedule;
        let w = self.w;
        let k_tb = schedule.panel_cols;

        let results = (0..blocks)
            .into_par_iter()
            .map(|blk| -> Result<(Vec<ComplexF32>, OpCount), FftError> {
                let (bb, xx) = (blk / kx, blk % kx);
                let mut ops = OpCount::default();
                let mut fft_scratch = match &a_src {
                    ASource::Fft { plan, .. } => plan.scratch(),
                    ASource::Panel(_) => Vec::new(),
                };
                // A panel: ky x k_tb, column-major, block-local.
                let mut load = |h0: usize, panel: &mut [ComplexF32]| -> Result<OpCount, FftError> {
                    let kc = k_tb.min(h - h0);
                    match &a_src {
                        ASource::Fft { src, plan } => {
                            let in_view = PencilView {
                                offset: ((bb * h + h0) * kx + xx) * dy,
                                count: kc,
                                pencil_stride: kx * dy,
                                element_stride: 1,
                            };
                            let out_view = PencilView::contiguous(0, kc, ky);
                            plan.batched_execute_with_scratch(src, in_view, panel, out_view, &mut fft_scratch)
                        }
                        ASource::Panel(a) => {
                            for kk in 0..kc {
                                let start = (h0 + kk) * m + blk * ky;
                                panel[kk * ky..(kk + 1) * ky].copy_from_slice(&a.data()[start..start + ky]);
                            }
                            Ok(OpCount::default())
                        }
                    }
                };

                let mut acc = vec![ZERO; ky * n];
                let mut current = vec![ZERO; ky * k_tb];
                let mut next = vec![ZERO; ky * k_tb];
                let steps = &schedule.k_loop_order;
                // First panel before the k-loop, in place of the prefetch.
                ops += load(steps[0], &mut current)?;
                for (i, &h0) in steps.iter().enumerate() {
                    let kc = k_tb.min(h - h0);
                    mac_panel(&tiles, ky, &mut acc, &current, w, h0, kc);
                    if let Some(&h1) = steps.get(i + 1) {
                        ops += load(h1, &mut next)?;
                        std::mem::swap(&mut current, &mut next);
                    }
                }

                match &epilogue {
                    Epilogue::StoreC => Ok((acc, ops)),
                    Epilogue::InverseFft(inv) => {
                        let mut scratch = inv.scratch();
                        let mut out = vec![ZERO; n * dy];
                        for tile in &schedule.epilogue_tiles {
                            for nn in tile.clone() {
                                ops += inv.execute_with_scratch(
                                    &acc[nn * ky..(nn + 1) * ky],
                                    &mut out[nn * dy..(nn + 1) * dy],
                                    &mut scratch,
                                )?;
                            }
                        }
                        Ok((out, ops))
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;

        let ops: OpCount = results.iter().map(|(_, o)| *o).sum();
        self.ledger.fft_ops += ops;
        match epilogue {
            Epilogue::StoreC => {
                let mut c = vec![ZERO; m * n];
                for (blk, (acc, _)) in results.iter().enumerate() {
                    for nn in 0..n {
                        let dst = nn * m + blk * ky;
                        c[dst..dst + ky].copy_from_slice(&acc[nn * ky..(nn + 1) * ky]);
                    }
                }
                Ok(c)
            }
            Epilogue::InverseFft(_) => {
                let mut t = vec![ZERO; l.batch * n * kx * dy];
                for (blk, (out, _)) in results.iter().enumerate() {
                    let (bb, xx) = (blk / kx, blk % kx);
                    for nn in 0..n {
                        let dst = ((bb * n + nn) * kx + xx) * dy;
                        t[dst..dst + dy].copy_from_slice(&out[nn * dy..(nn + 1) * dy]);
                    }
                }
                Ok(t)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FftKernelParams;

    fn setup(rank: u8) -> LayerSetup {
        LayerSetup {
            layer: FnoLayerConfig {
                batch: 2,
                hidden_dim: 16,
                output_dim: 16,
                dim_x: if rank == 2 { 16 } else { 2 },
                dim_y: 32,
                keep_x: if rank == 2 { 8 } else { 2 },
                keep_y: 16,
                rank,
            },
            tiles: TileConfig::TABLE,
            fft: FftKernelParams::default(),
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for m in PipelineMode::ALL {
            assert_eq!(m.name().parse::<PipelineMode>().unwrap(), m);
        }
        assert_eq!("fused".parse::<PipelineMode>().unwrap(), PipelineMode::FullyFused);
        assert!("nope".parse::<PipelineMode>().is_err());
    }

    #[test]
    fn schedule_layout() {
        let s = FusedSchedule::new(&setup(1)).unwrap();
        assert_eq!(s.k_loop_order, vec![0, 8]);
        assert_eq!(s.epilogue_tiles, vec![0..16]);
        assert_eq!(s.panel_cols, 8);
        let mut bad = setup(1);
        bad.fft.bs = 4;
        assert!(matches!(
            FusedSchedule::new(&bad),
            Err(PipelineError::ScheduleInvalid { bs: 4, k_tb: 8 })
        ));
    }

    #[test]
    fn schedule_invalid_only_for_block_modes() {
        let mut s = setup(1);
        s.fft.bs = 4;
        let l = s.layer;
        let x = SpectralTensor::zeros(l.batch, l.hidden_dim, l.dim_x, l.dim_y);
        let w = ComplexMatrix::identity(16);
        assert!(run_staged(&s, &x, &w).is_ok());
        assert!(run_layer(&s, PipelineMode::FftOptimized, &x, &w).is_ok());
        assert!(matches!(
            run_fused(&s, &x, &w),
            Err(PipelineError::ScheduleInvalid { .. })
        ));
    }

    #[test]
    fn shape_checks() {
        let s = setup(1);
        let x = SpectralTensor::zeros(1, 16, 2, 32);
        let w = ComplexMatrix::identity(16);
        assert!(matches!(run_fused(&s, &x, &w), Err(PipelineError::ShapeMismatch(_))));
        let x = SpectralTensor::zeros(2, 16, 2, 32);
        let w = ComplexMatrix::zeros(16, 8);
        assert!(matches!(run_staged(&s, &x, &w), Err(PipelineError::ShapeMismatch(_))));
        let mut bad = s;
        bad.layer.keep_y = 64;
        let w = ComplexMatrix::identity(16);
        assert!(matches!(run_staged(&bad, &x, &w), Err(PipelineError::Config(_))));
    }

    #[test]
    fn launch_counts() {
        for rank in [1u8, 2] {
            let s = setup(rank);
            let l = s.layer;
            let x = SpectralTensor::zeros(l.batch, l.hidden_dim, l.dim_x, l.dim_y);
            let w = ComplexMatrix::identity(16);
            let launches = |mode| run_layer(&s, mode, &x, &w).unwrap().1.kernel_launches;
            let extra = if rank == 2 { 2 } else { 0 };
            assert_eq!(launches(PipelineMode::Staged), 5 + extra);
            assert_eq!(launches(PipelineMode::FftOptimized), 3 + extra);
            assert_eq!(launches(PipelineMode::FusedFftGemm), 2 + extra);
            assert_eq!(launches(PipelineMode::FusedGemmIfft), 2 + extra);
            assert_eq!(launches(PipelineMode::FullyFused), 1 + extra);
        }
    }
}
