//! Byte-exact accounting of the arrays that cross between logical passes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft::OpCount;
use crate::spectral::FnoLayerConfig;

use super::PipelineMode;

/// A named array in modeled global memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GlobalArray {
    #[serde(rename = "input")]
    Input,
    /// Output of the DimX transform (rank 2 only).
    #[serde(rename = "spectrum_stage1")]
    SpectrumStage1,
    /// Untruncated output of the DimY transform (staged baseline only).
    #[serde(rename = "spectrum_stage2")]
    SpectrumStage2,
    /// The truncated spectrum laid out as the GEMM A operand.
    #[serde(rename = "A_panel")]
    APanel,
    /// Spectral weights (GEMM operand B).
    #[serde(rename = "B")]
    Weights,
    /// GEMM result before the inverse transform.
    #[serde(rename = "C")]
    C,
    /// C zero-padded back to full resolution (staged baseline only).
    #[serde(rename = "C_padded")]
    CPadded,
    /// Output of the DimY inverse transform when a DimX inverse follows (rank 2).
    #[serde(rename = "inverse_stage1")]
    InverseStage1,
    #[serde(rename = "output")]
    Output,
}

impl GlobalArray {
    pub const ALL: [GlobalArray; 9] = [
        GlobalArray::Input,
        GlobalArray::SpectrumStage1,
        GlobalArray::SpectrumStage2,
        GlobalArray::APanel,
        GlobalArray::Weights,
        GlobalArray::C,
        GlobalArray::CPadded,
        GlobalArray::InverseStage1,
        GlobalArray::Output,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            GlobalArray::Input => "input",
            GlobalArray::SpectrumStage1 => "spectrum_stage1",
            GlobalArray::SpectrumStage2 => "spectrum_stage2",
            GlobalArray::APanel => "A_panel",
            GlobalArray::Weights => "B",
            GlobalArray::C => "C",
            GlobalArray::CPadded => "C_padded",
            GlobalArray::InverseStage1 => "inverse_stage1",
            GlobalArray::Output => "output",
        }
    }
}

impl fmt::Display for GlobalArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArrayTraffic {
    pub bytes_read: u64,
    pub bytes_written: u64,
}

impl ArrayTraffic {
    pub fn total(&self) -> u64 {
        self.bytes_read + self.bytes_written
    }
}

/// One logical pass (kernel launch) and the bytes it moved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassRecord {
    pub name: String,
    pub reads: Vec<(GlobalArray, u64)>,
    pub writes: Vec<(GlobalArray, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLedger {
    pub layer: FnoLayerConfig,
    pub mode: PipelineMode,
    pub arrays: BTreeMap<GlobalArray, ArrayTraffic>,
    pub kernel_launches: u32,
    pub passes: Vec<PassRecord>,
    /// Butterfly work actually executed by every transform in the layer.
    pub fft_ops: OpCount,
    /// DimY-transform work under the retained-output model:
    /// pencils transformed x outputs produced x log2(dim_y).
    pub stage2_modeled_ops: u64,
}

impl TrafficLedger {
    pub fn new(layer: FnoLayerConfig, mode: PipelineMode) -> Self {
        Self {
            layer,
            mode,
            arrays: GlobalArray::ALL.iter().map(|a| (*a, ArrayTraffic::default())).collect(),
            kernel_launches: 0,
            passes: Vec::new(),
            fft_ops: OpCount::default(),
            stage2_modeled_ops: 0,
        }
    }

    pub fn pass(&mut self, name: &str, reads: &[(GlobalArray, u64)], writes: &[(GlobalArray, u64)]) {
        for (a, bytes) in reads {
            self.arrays.entry(*a).or_default().bytes_read += bytes;
        }
        for (a, bytes) in writes {
            self.arrays.entry(*a).or_default().bytes_written += bytes;
        }
        self.kernel_launches += 1;
        self.passes.push(PassRecord {
            name: name.to_string(),
            reads: reads.to_vec(),
            writes: writes.to_vec(),
        });
    }

    pub fn get(&self, array: GlobalArray) -> ArrayTraffic {
        self.arrays.get(&array).copied().unwrap_or_default()
    }

    pub fn total_bytes(&self) -> u64 {
        self.arrays.values().map(ArrayTraffic::total).sum()
    }

    /// Just the per-array counters, as `{name: {bytes_read, bytes_written}}`.
    pub fn arrays_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.arrays).expect("ledger serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("ledgers describe different layers")]
    ConfigMismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrayDelta {
    pub read_saved: i64,
    pub written_saved: i64,
    /// `other / baseline`; `None` when the baseline moved nothing.
    pub read_ratio: Option<f64>,
    pub write_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficDelta {
    pub arrays: BTreeMap<GlobalArray, ArrayDelta>,
    pub bytes_saved: i64,
    pub total_ratio: Option<f64>,
    pub launches_saved: i64,
}

impl TrafficDelta {
    pub fn get(&self, array: GlobalArray) -> &ArrayDelta {
        &self.arrays[&array]
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

/// Per-array savings of `fused` relative to `staged`.
pub fn traffic_delta(staged: &TrafficLedger, fused: &TrafficLedger) -> Result<TrafficDelta, LedgerError> {
    if staged.layer != fused.layer {
        return Err(LedgerError::ConfigMismatch);
    }
    let arrays = GlobalArray::ALL
        .iter()
        .map(|&a| {
            let s = staged.get(a);
            let f = fused.get(a);
            (
                a,
                ArrayDelta {
                    read_saved: s.bytes_read as i64 - f.bytes_read as i64,
                    written_saved: s.bytes_written as i64 - f.bytes_written as i64,
                    read_ratio: ratio(f.bytes_read, s.bytes_read),
                    write_ratio: ratio(f.bytes_written, s.bytes_written),
                },
            )
        })
        .collect();
    Ok(TrafficDelta {
        arrays,
        bytes_saved: staged.total_bytes() as i64 - fused.total_bytes() as i64,
        total_ratio: ratio(fused.total_bytes(), staged.total_bytes()),
        launches_saved: staged.kernel_launches as i64 - fused.kernel_launches as i64,
    })
}
