//! Warp-level shared-memory bank model: 32 banks of 4 bytes.
//!
//! A warp access touches, for every active lane, each bank covered by
//! `[addr, addr + width)`. An 8-byte complex access touches two banks.
//! Utilization is distinct banks touched over 32 (also for half-warps);
//! the serialized phase count is the largest per-bank touch count.
//!
//! The layouts reproduce the shared-memory exchanges of the fused kernel:
//! the FFT-to-GEMM forwarding store into the column-major A panel, the
//! per-thread writeback at the end of 16- and 8-point FFTs, and the GEMM
//! epilogue store of C for the inverse FFT.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{TileConfig, COMPLEX_BYTES, WARP_SIZE};

pub const NUM_BANKS: usize = 32;
pub const BANK_WIDTH: u64 = 4;

/// Rows of the A panel targeted by the forwarding layouts (one 64-bin truncated pencil).
pub const PANEL_ROWS: usize = 64;
/// Signals per A panel (the FFT batch size `bs`).
pub const PANEL_SIGNALS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GpuModelError {
    #[error("layout {layout} is not defined for a {fft_size}-point FFT")]
    UndefinedCombination { layout: SwizzleLayout, fft_size: usize },
    #[error("phase {step} out of range (layout has {phases} phases)")]
    PhaseOutOfRange { step: usize, phases: usize },
    #[error("unsupported tile: {0}")]
    UnsupportedTile(String),
    #[error("unknown layout name {0:?}")]
    UnknownLayout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaneAccess {
    pub addr: u64,
    pub width: u32,
}

/// One warp-wide access: a slot per lane, `None` for inactive lanes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpAccessPattern {
    pub accesses: [Option<LaneAccess>; WARP_SIZE],
    pub element_width: u32,
}

impl WarpAccessPattern {
    /// All 32 lanes active with `COMPLEX_BYTES`-wide accesses at `addr(lane)`.
    pub fn complex(addr: impl Fn(usize) -> u64) -> Self {
        Self::complex_lanes(WARP_SIZE, addr)
    }

    /// Lanes `0..active` access `addr(lane)`; the rest idle.
    pub fn complex_lanes(active: usize, addr: impl Fn(usize) -> u64) -> Self {
        let mut accesses = [None; WARP_SIZE];
        for (lane, slot) in accesses.iter_mut().enumerate().take(active) {
            *slot = Some(LaneAccess {
                addr: addr(lane),
                width: COMPLEX_BYTES as u32,
            });
        }
        Self {
            accesses,
            element_width: COMPLEX_BYTES as u32,
        }
    }

    pub fn active_lanes(&self) -> usize {
        self.accesses.iter().flatten().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankReport {
    pub distinct_banks: usize,
    pub utilization: f64,
    pub max_conflict_degree: u32,
    pub phases: u32,
    pub total_touches: u32,
    pub bank_touches: Vec<u32>,
}

impl BankReport {
    /// One character per bank: `.` untouched, else the touch count (capped at 9).
    pub fn strip(&self) -> String {
        self.bank_touches
            .iter()
            .map(|&t| match t {
                0 => '.',
                1..=9 => char::from_digit(t, 10).unwrap(),
                _ => '#',
            })
            .collect()
    }
}

pub fn simulate(pattern: &WarpAccessPattern) -> BankReport {
    let mut touches = vec![0u32; NUM_BANKS];
    for acc in pattern.accesses.iter().flatten() {
        if acc.width == 0 {
            continue;
        }
        let first = acc.addr / BANK_WIDTH;
        let last = (acc.addr + acc.width as u64 - 1) / BANK_WIDTH;
        // An access wider than 128 bytes wraps onto the same banks again.
        for word in first..=last {
            touches[(word % NUM_BANKS as u64) as usize] += 1;
        }
    }
    let distinct = touches.iter().filter(|&&t| t > 0).count();
    let max = touches.iter().copied().max().unwrap_or(0);
    BankReport {
        distinct_banks: distinct,
        utilization: distinct as f64 / NUM_BANKS as f64,
        max_conflict_degree: max,
        phases: max,
        total_touches: touches.iter().sum(),
        bank_touches: touches,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwizzleLayout {
    /// Consecutive threads hold different signals at the same offset.
    StridedVkfft,
    /// Consecutive threads hold consecutive elements of one signal.
    ConsecutiveTurbofno,
    Fft16Naive,
    /// Writeback element rotated by `tid`.
    Fft16Swizzled,
    Fft8Naive,
    /// Writeback element rotated by `tid / 2`.
    Fft8Swizzled,
    EpilogueNaive,
    /// Column rotated by `tid / (n_w / n_t)` inside the thread's fragment.
    EpilogueSwizzled,
}

impl SwizzleLayout {
    pub const ALL: [SwizzleLayout; 8] = [
        SwizzleLayout::StridedVkfft,
        SwizzleLayout::ConsecutiveTurbofno,
        SwizzleLayout::Fft16Naive,
        SwizzleLayout::Fft16Swizzled,
        SwizzleLayout::Fft8Naive,
        SwizzleLayout::Fft8Swizzled,
        SwizzleLayout::EpilogueNaive,
        SwizzleLayout::EpilogueSwizzled,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SwizzleLayout::StridedVkfft => "strided_vkfft",
            SwizzleLayout::ConsecutiveTurbofno => "consecutive_turbofno",
            SwizzleLayout::Fft16Naive => "fft16_naive",
            SwizzleLayout::Fft16Swizzled => "fft16_swizzled",
            SwizzleLayout::Fft8Naive => "fft8_naive",
            SwizzleLayout::Fft8Swizzled => "fft8_swizzled",
            SwizzleLayout::EpilogueNaive => "epilogue_naive",
            SwizzleLayout::EpilogueSwizzled => "epilogue_swizzled",
        }
    }

    /// The FFT size the layout is naturally shown with.
    pub fn default_fft_size(&self) -> usize {
        match self {
            SwizzleLayout::Fft8Naive | SwizzleLayout::Fft8Swizzled => 8,
            _ => 16,
        }
    }

    pub fn is_swizzled(&self) -> bool {
        matches!(
            self,
            SwizzleLayout::Fft16Swizzled | SwizzleLayout::Fft8Swizzled | SwizzleLayout::EpilogueSwizzled
        )
    }
}

impl fmt::Display for SwizzleLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SwizzleLayout {
    type Err = GpuModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SwizzleLayout::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| GpuModelError::UnknownLayout(s.to_string()))
    }
}

/// One element written by one thread in one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutCell {
    /// Position of the element in the logical tile.
    pub logical: usize,
    pub addr: u64,
}

/// A layout instantiated for one FFT size: the full tile of `threads` x `phases` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutTile {
    pub layout: SwizzleLayout,
    pub fft_size: usize,
    pub threads: usize,
    pub phases: usize,
    epilogue: TileConfig,
}

impl LayoutTile {
    pub fn new(layout: SwizzleLayout, fft_size: usize) -> Result<Self, GpuModelError> {
        use SwizzleLayout::*;
        let undefined = GpuModelError::UndefinedCombination { layout, fft_size };
        let (threads, phases) = match layout {
            Fft16Naive | Fft16Swizzled if fft_size == 16 => (16, 16),
            Fft8Naive | Fft8Swizzled if fft_size == 8 => (32, 8),
            StridedVkfft | ConsecutiveTurbofno | EpilogueNaive | EpilogueSwizzled
                if fft_size == 8 || fft_size == 16 =>
            {
                match layout {
                    EpilogueNaive | EpilogueSwizzled => {
                        let t = TileConfig::TABLE;
                        (WARP_SIZE, t.m_t * t.n_t)
                    }
                    _ => (
                        PANEL_SIGNALS * PANEL_SIGNALS,
                        PANEL_ROWS * PANEL_SIGNALS / (PANEL_SIGNALS * PANEL_SIGNALS),
                    ),
                }
            }
            _ => return Err(undefined),
        };
        Ok(Self {
            layout,
            fft_size,
            threads,
            phases,
            epilogue: TileConfig::TABLE,
        })
    }

    fn epilogue_for(tiles: &TileConfig, swizzled: bool) -> Self {
        Self {
            layout: if swizzled {
                SwizzleLayout::EpilogueSwizzled
            } else {
                SwizzleLayout::EpilogueNaive
            },
            fft_size: 16,
            threads: WARP_SIZE,
            phases: tiles.m_t * tiles.n_t,
            epilogue: *tiles,
        }
    }

    pub fn warps(&self) -> usize {
        self.threads.div_ceil(WARP_SIZE)
    }

    /// Element written by `thread` in write phase `phase`.
    pub fn cell(&self, thread: usize, phase: usize) -> LayoutCell {
        use SwizzleLayout::*;
        debug_assert!(thread < self.threads && phase < self.phases);
        let logical = match self.layout {
            Fft16Naive | Fft8Naive => thread * self.phases + phase,
            Fft16Swizzled => thread * 16 + (phase + thread) % 16,
            Fft8Swizzled => thread * 8 + (phase + thread / 2) % 8,
            StridedVkfft => {
                let signal = thread % PANEL_SIGNALS;
                let group = thread / PANEL_SIGNALS;
                signal * PANEL_ROWS + group + PANEL_SIGNALS * phase
            }
            ConsecutiveTurbofno => {
                // Each phase the whole block stores one signal, thread t at row t.
                phase * PANEL_ROWS + thread
            }
            EpilogueNaive | EpilogueSwizzled => {
                let t = &self.epilogue;
                let lanes_n = t.n_w / t.n_t;
                let (tm, tn) = (thread / lanes_n, thread % lanes_n);
                let (r, c) = (phase / t.n_t, phase % t.n_t);
                let c = if self.layout == EpilogueSwizzled {
                    (c + tm) % t.n_t
                } else {
                    c
                };
                // C is stored row-major along N inside the warp tile.
                (tm * t.m_t + r) * t.n_w + tn * t.n_t + c
            }
        };
        LayoutCell {
            logical,
            addr: logical as u64 * COMPLEX_BYTES,
        }
    }

    /// The warp-wide access of warp `warp` in phase `step`.
    pub fn pattern(&self, warp: usize, step: usize) -> Result<WarpAccessPattern, GpuModelError> {
        if step >= self.phases {
            return Err(GpuModelError::PhaseOutOfRange {
                step,
                phases: self.phases,
            });
        }
        let base = warp * WARP_SIZE;
        let active = self.threads.saturating_sub(base).min(WARP_SIZE);
        Ok(WarpAccessPattern::complex_lanes(active, |lane| {
            self.cell(base + lane, step).addr
        }))
    }

    /// Reports for every phase of every warp, warp-major.
    pub fn all_reports(&self) -> Vec<BankReport> {
        (0..self.warps())
            .flat_map(|w| (0..self.phases).map(move |p| (w, p)))
            .map(|(w, p)| simulate(&self.pattern(w, p).expect("phase in range")))
            .collect()
    }
}

/// Per-thread addresses of warp 0 for one write phase of `layout`.
pub fn layout_pattern(layout: SwizzleLayout, fft_size: usize, step: usize) -> Result<WarpAccessPattern, GpuModelError> {
    LayoutTile::new(layout, fft_size)?.pattern(0, step)
}

/// Naive vs swizzled epilogue store of a warp's C tile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpilogueVerification {
    pub naive: Vec<BankReport>,
    pub swizzled: Vec<BankReport>,
}

/// Simulates every write phase of the C-tile store for a warp tile of
/// `m_w x n_w` with `m_t x n_t` fragments, with and without the swizzle.
pub fn verify_epilogue_swizzle(tiles: &TileConfig) -> Result<EpilogueVerification, GpuModelError> {
    let violations = tiles.check();
    if !violations.is_empty() {
        return Err(GpuModelError::UnsupportedTile(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    let run = |swizzled| {
        let tile = LayoutTile::epilogue_for(tiles, swizzled);
        (0..tile.phases)
            .map(|p| simulate(&tile.pattern(0, p).expect("phase in range")))
            .collect()
    };
    Ok(EpilogueVerification {
        naive: run(false),
        swizzled: run(true),
    })
}

/// Whether storing FFT output into the column-major A panel under `layout`
/// is conflict-free for every phase.
pub fn layout_feeds_gemm(layout: SwizzleLayout) -> Result<bool, GpuModelError> {
    Ok(gemm_forwarding_report(layout)?.utilization == 1.0)
}

/// Worst (lowest-utilization) phase of the A-panel forwarding store.
pub fn gemm_forwarding_report(layout: SwizzleLayout) -> Result<BankReport, GpuModelError> {
    match layout {
        SwizzleLayout::StridedVkfft | SwizzleLayout::ConsecutiveTurbofno => {}
        _ => {
            return Err(GpuModelError::UndefinedCombination {
                layout,
                fft_size: layout.default_fft_size(),
            })
        }
    }
    let tile = LayoutTile::new(layout, 16)?;
    Ok(tile
        .all_reports()
        .into_iter()
        .min_by(|a, b| a.utilization.total_cmp(&b.utilization))
        .expect("layout has phases"))
}
