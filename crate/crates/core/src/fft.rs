//! Radix-2 Stockham FFT with built-in output truncation, input zero-padding
//! and butterfly pruning.
//!
//! Stage `l` of an `n`-point transform (stride `s = 2^l`, half-span
//! `m = n / 2^(l+1)`) reads `a = x[q + s*p]`, `b = x[q + s*(p + m)]` and writes
//!
//! ```text
//! y[q + 2sp]     = a + b
//! y[q + 2sp + s] = (a - b) * w_p
//! ```
//!
//! ping-ponging between two buffers. After `log2(n)` stages the spectrum is in
//! natural order, so truncation keeps the leading `keep` entries of the final
//! buffer and zero-padding means only the first `src_len` inputs can be nonzero.
//!
//! An operation is one butterfly output. A plan executes an output iff some
//! retained output depends on it *and* some nonzero input reaches it; every
//! other output is written as zero and counted as skipped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::ComplexF32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FftError {
    #[error("transform length {0} is not a power of two")]
    InvalidLength(usize),
    #[error("keep = {keep} outside 1..={n}")]
    InvalidKeep { keep: usize, n: usize },
    #[error("src_len = {src_len} outside 1..={n}")]
    InvalidSrcLen { src_len: usize, n: usize },
    #[error("buffer length mismatch: {0}")]
    LengthMismatch(String),
    #[error("pencil views alias element {0}")]
    StrideOverlap(usize),
}

/// Counted work of one execution (or the budget of a plan).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OpCount {
    pub butterflies: u64,
    pub twiddle_muls: u64,
    pub skipped: u64,
}

impl std::ops::Add for OpCount {
    type Output = OpCount;

    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            butterflies: self.butterflies + rhs.butterflies,
            twiddle_muls: self.twiddle_muls + rhs.twiddle_muls,
            skipped: self.skipped + rhs.skipped,
        }
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, rhs: OpCount) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for OpCount {
    fn sum<I: Iterator<Item = OpCount>>(iter: I) -> Self {
        iter.fold(OpCount::default(), |a, b| a + b)
    }
}

/// One radix-2 stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    /// `s = 2^l`.
    pub stride: usize,
    /// Butterflies per stride class, `n / 2^(l+1)`.
    pub half_span: usize,
    /// Start of this stage's `half_span` twiddles in the plan's table.
    pub twiddle_offset: usize,
}

/// Which outputs of each stage are computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageMask {
    executed: Vec<bool>,
    count: usize,
}

impl StageMask {
    pub fn is_executed(&self, index: usize) -> bool {
        self.executed[index]
    }

    pub fn executed_count(&self) -> usize {
        self.count
    }

    pub fn is_full(&self) -> bool {
        self.count == self.executed.len()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.executed
    }
}

/// `n * log2(n)`: every stage produces `n` outputs.
pub fn full_op_count(n: usize) -> Result<u64, FftError> {
    if !n.is_power_of_two() {
        return Err(FftError::InvalidLength(n));
    }
    Ok(n as u64 * n.trailing_zeros() as u64)
}

/// An immutable, shareable transform plan.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    direction: Direction,
    keep: usize,
    src_len: usize,
    stages: Vec<Stage>,
    twiddles: Vec<ComplexF32>,
    masks: Vec<StageMask>,
    /// Per stage: executed odd outputs with a nontrivial twiddle.
    stage_twiddle_muls: Vec<u64>,
    op_budget: OpCount,
}

/// Builds a plan for an `n`-point transform that reads `src_len` inputs and
/// produces the first `keep` outputs.
pub fn plan(n: usize, direction: Direction, keep: usize, src_len: usize) -> Result<FftPlan, FftError> {
    if !n.is_power_of_two() {
        return Err(FftError::InvalidLength(n));
    }
    if keep == 0 || keep > n {
        return Err(FftError::InvalidKeep { keep, n });
    }
    if src_len == 0 || src_len > n {
        return Err(FftError::InvalidSrcLen { src_len, n });
    }
    let log_n = n.trailing_zeros() as usize;

    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut stages = Vec::with_capacity(log_n);
    let mut twiddles = Vec::with_capacity(n.saturating_sub(1));
    for l in 0..log_n {
        let stride = 1usize << l;
        let span = n >> l;
        let half_span = span / 2;
        stages.push(Stage {
            stride,
            half_span,
            twiddle_offset: twiddles.len(),
        });
        for p in 0..half_span {
            let theta = sign * 2.0 * std::f64::consts::PI * p as f64 / span as f64;
            twiddles.push(ComplexF32::new(theta.cos() as f32, theta.sin() as f32));
        }
    }

    // live[l][i]: node i after l stages feeds a retained output.
    let mut live = vec![vec![false; n]; log_n + 1];
    live[log_n][..keep].iter_mut().for_each(|v| *v = true);
    for (l, st) in stages.iter().enumerate().rev() {
        let (before, after) = live.split_at_mut(l + 1);
        let src = &mut before[l];
        let dst = &after[0];
        for_each_butterfly(st, |a, b, o0, o1| {
            if dst[o0] || dst[o1] {
                src[a] = true;
                src[b] = true;
            }
        });
    }

    // nonzero[l][i]: node i after l stages may be nonzero.
    let mut nonzero = vec![vec![false; n]; log_n + 1];
    nonzero[0][..src_len].iter_mut().for_each(|v| *v = true);
    for (l, st) in stages.iter().enumerate() {
        let (before, after) = nonzero.split_at_mut(l + 1);
        let src = &before[l];
        let dst = &mut after[0];
        for_each_butterfly(st, |a, b, o0, o1| {
            let nz = src[a] || src[b];
            dst[o0] = nz;
            dst[o1] = nz;
        });
    }

    let mut masks = Vec::with_capacity(log_n);
    let mut stage_twiddle_muls = Vec::with_capacity(log_n);
    let mut budget = OpCount::default();
    for (l, st) in stages.iter().enumerate() {
        let executed: Vec<bool> = live[l + 1]
            .iter()
            .zip(&nonzero[l + 1])
            .map(|(&lv, &nz)| lv && nz)
            .collect();
        let count = executed.iter().filter(|&&e| e).count();
        let mut muls = 0u64;
        for p in 1..st.half_span {
            for q in 0..st.stride {
                if executed[q + 2 * st.stride * p + st.stride] {
                    muls += 1;
                }
            }
        }
        budget.butterflies += count as u64;
        budget.twiddle_muls += muls;
        budget.skipped += (n - count) as u64;
        stage_twiddle_muls.push(muls);
        masks.push(StageMask { executed, count });
    }

    Ok(FftPlan {
        n,
        direction,
        keep,
        src_len,
        stages,
        twiddles,
        masks,
        stage_twiddle_muls,
        op_budget: budget,
    })
}

#[inline]
fn for_each_butterfly(st: &Stage, mut f: impl FnMut(usize, usize, usize, usize)) {
    let s = st.stride;
    let m = st.half_span;
    for p in 0..m {
        for q in 0..s {
            let o0 = q + 2 * s * p;
            f(q + s * p, q + s * (p + m), o0, o0 + s);
        }
    }
}

/// Pencils laid out at `offset + i * pencil_stride + j * element_stride`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PencilView {
    pub offset: usize,
    pub count: usize,
    pub pencil_stride: usize,
    pub element_stride: usize,
}

impl PencilView {
    /// `count` back-to-back contiguous pencils of length `len`.
    pub fn contiguous(offset: usize, count: usize, len: usize) -> Self {
        Self {
            offset,
            count,
            pencil_stride: len,
            element_stride: 1,
        }
    }

    #[inline]
    fn at(&self, pencil: usize, element: usize) -> usize {
        self.offset + pencil * self.pencil_stride + element * self.element_stride
    }

    fn check(&self, len: usize, buffer_len: usize, what: &str) -> Result<(), FftError> {
        if self.count == 0 || len == 0 {
            return Ok(());
        }
        let last = self.at(self.count - 1, len - 1);
        if last >= buffer_len {
            return Err(FftError::LengthMismatch(format!(
                "{what} view reaches index {last} of a {buffer_len}-element buffer"
            )));
        }
        if len > 1 && self.element_stride == 0 {
            return Err(FftError::StrideOverlap(self.offset));
        }
        if self.count > 1 && self.pencil_stride == 0 {
            return Err(FftError::StrideOverlap(self.offset));
        }
        // Common disjoint cases: pencils side by side or fully interleaved.
        let span_el = self.element_stride * (len - 1) + 1;
        let span_p = self.pencil_stride * (self.count - 1) + 1;
        if self.count == 1 || len == 1 || span_el <= self.pencil_stride || span_p <= self.element_stride {
            return Ok(());
        }
        let mut idx: Vec<usize> = (0..self.count)
            .flat_map(|p| (0..len).map(move |e| (p, e)))
            .map(|(p, e)| self.at(p, e))
            .collect();
        idx.sort_unstable();
        match idx.windows(2).find(|w| w[0] == w[1]) {
            Some(w) => Err(FftError::StrideOverlap(w[0])),
            None => Ok(()),
        }
    }
}

impl FftPlan {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn keep(&self) -> usize {
        self.keep
    }

    pub fn src_len(&self) -> usize {
        self.src_len
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn prune_mask(&self) -> &[StageMask] {
        &self.masks
    }

    pub fn op_budget(&self) -> OpCount {
        self.op_budget
    }

    pub fn twiddles(&self) -> &[ComplexF32] {
        &self.twiddles
    }

    /// Scratch space for [`FftPlan::execute_with_scratch`].
    pub fn scratch(&self) -> Vec<ComplexF32> {
        vec![ComplexF32::new(0.0, 0.0); 2 * self.n]
    }

    /// Transforms `input` (exactly `src_len` values, implicitly zero-extended to
    /// `n`) and writes the first `keep` outputs to `out`.
    pub fn execute(&self, input: &[ComplexF32], out: &mut [ComplexF32]) -> Result<OpCount, FftError> {
        let mut scratch = self.scratch();
        self.execute_with_scratch(input, out, &mut scratch)
    }

    pub fn execute_with_scratch(
        &self,
        input: &[ComplexF32],
        out: &mut [ComplexF32],
        scratch: &mut [ComplexF32],
    ) -> Result<OpCount, FftError> {
        if input.len() != self.src_len {
            return Err(FftError::LengthMismatch(format!(
                "input has {} elements, plan reads {}",
                input.len(),
                self.src_len
            )));
        }
        if out.len() < self.keep {
            return Err(FftError::LengthMismatch(format!(
                "output holds {} elements, plan writes {}",
                out.len(),
                self.keep
            )));
        }
        self.check_scratch(scratch)?;
        let (buf, other) = scratch.split_at_mut(self.n);
        buf[..self.src_len].copy_from_slice(input);
        buf[self.src_len..].fill(ComplexF32::new(0.0, 0.0));
        let ops = self.run(buf, &mut other[..self.n]);
        let result = if self.stages.len().is_multiple_of(2) {
            &*buf
        } else {
            &*other
        };
        self.finish(result, out.iter_mut());
        Ok(ops)
    }

    fn check_scratch(&self, scratch: &[ComplexF32]) -> Result<(), FftError> {
        if scratch.len() < 2 * self.n {
            return Err(FftError::LengthMismatch(format!(
                "scratch holds {} elements, plan needs {}",
                scratch.len(),
                2 * self.n
            )));
        }
        Ok(())
    }

    fn finish<'a>(&self, result: &[ComplexF32], out: impl Iterator<Item = &'a mut ComplexF32>) {
        match self.direction {
            Direction::Forward => {
                for (o, v) in out.zip(&result[..self.keep]) {
                    *o = *v;
                }
            }
            Direction::Inverse => {
                let scale = 1.0 / self.n as f32;
                for (o, v) in out.zip(&result[..self.keep]) {
                    *o = v * scale;
                }
            }
        }
    }

    /// Runs all stages, ping-ponging between `a` and `b`; the result ends up in
    /// `a` for an even stage count and in `b` otherwise.
    fn run(&self, a: &mut [ComplexF32], b: &mut [ComplexF32]) -> OpCount {
        let mut ops = OpCount::default();
        let zero = ComplexF32::new(0.0, 0.0);
        for (l, st) in self.stages.iter().enumerate() {
            let (x, y): (&[ComplexF32], &mut [ComplexF32]) = if l % 2 == 0 { (&*a, &mut *b) } else { (&*b, &mut *a) };
            let tw = &self.twiddles[st.twiddle_offset..st.twiddle_offset + st.half_span];
            let mask = &self.masks[l];
            let s = st.stride;
            let m = st.half_span;
            if mask.is_full() {
                for p in 0..m {
                    let w = tw[p];
                    for q in 0..s {
                        let va = x[q + s * p];
                        let vb = x[q + s * (p + m)];
                        let o0 = q + 2 * s * p;
                        y[o0] = va + vb;
                        y[o0 + s] = if p == 0 { va - vb } else { (va - vb) * w };
                    }
                }
            } else {
                let ex = mask.as_slice();
                for p in 0..m {
                    let w = tw[p];
                    for q in 0..s {
                        let o0 = q + 2 * s * p;
                        let o1 = o0 + s;
                        let (e0, e1) = (ex[o0], ex[o1]);
                        if !(e0 || e1) {
                            y[o0] = zero;
                            y[o1] = zero;
                            continue;
                        }
                        let va = x[q + s * p];
                        let vb = x[q + s * (p + m)];
                        y[o0] = if e0 { va + vb } else { zero };
                        y[o1] = if !e1 {
                            zero
                        } else if p == 0 {
                            va - vb
                        } else {
                            (va - vb) * w
                        };
                    }
                }
            }
            ops.butterflies += mask.count as u64;
            ops.skipped += (self.n - mask.count) as u64;
            ops.twiddle_muls += self.stage_twiddle_muls[l];
        }
        ops
    }

    /// Transforms `in_view.count` pencils. Input pencils have `src_len`
    /// elements, output pencils receive `keep` elements.
    pub fn batched_execute(
        &self,
        input: &[ComplexF32],
        in_view: PencilView,
        out: &mut [ComplexF32],
        out_view: PencilView,
    ) -> Result<OpCount, FftError> {
        let mut scratch = self.scratch();
        self.batched_execute_with_scratch(input, in_view, out, out_view, &mut scratch)
    }

    pub fn batched_execute_with_scratch(
        &self,
        input: &[ComplexF32],
        in_view: PencilView,
        out: &mut [ComplexF32],
        out_view: PencilView,
        scratch: &mut [ComplexF32],
    ) -> Result<OpCount, FftError> {
        if in_view.count != out_view.count {
            return Err(FftError::LengthMismatch(format!(
                "{} input pencils vs {} output pencils",
                in_view.count, out_view.count
            )));
        }
        in_view.check(self.src_len, input.len(), "input")?;
        out_view.check(self.keep, out.len(), "output")?;
        self.check_scratch(scratch)?;
        let mut total = OpCount::default();
        let (buf, other) = scratch.split_at_mut(self.n);
        let other = &mut other[..self.n];
        for p in 0..in_view.count {
            for (j, slot) in buf[..self.src_len].iter_mut().enumerate() {
                *slot = input[in_view.at(p, j)];
            }
            buf[self.src_len..].fill(ComplexF32::new(0.0, 0.0));
            total += self.run(buf, other);
            let result = if self.stages.len().is_multiple_of(2) {
                &*buf
            } else {
                &*other
            };
            if out_view.element_stride == 1 {
                let start = out_view.at(p, 0);
                self.finish(result, out[start..start + self.keep].iter_mut());
            } else {
                let es = out_view.element_stride;
                let start = out_view.at(p, 0);
                self.finish(result, out[start..].iter_mut().step_by(es));
            }
        }
        Ok(total)
    }
}

/// Unpruned transform of the zero-extended input, truncated afterwards.
/// Shares the arithmetic of the pruned path; used as its reference.
pub fn execute_unpruned(
    n: usize,
    direction: Direction,
    input: &[ComplexF32],
    keep: usize,
) -> Result<Vec<ComplexF32>, FftError> {
    if input.len() > n {
        return Err(FftError::LengthMismatch(format!(
            "input has {} elements, transform length is {n}",
            input.len()
        )));
    }
    let full = plan(n, direction, n, n)?;
    let mut padded = input.to_vec();
    padded.resize(n, ComplexF32::new(0.0, 0.0));
    let mut out = vec![ComplexF32::new(0.0, 0.0); n];
    full.execute(&padded, &mut out)?;
    if keep == 0 || keep > n {
        return Err(FftError::InvalidKeep { keep, n });
    }
    out.truncate(keep);
    Ok(out)
}
