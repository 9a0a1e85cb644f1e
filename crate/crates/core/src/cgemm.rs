//! Tiled complex GEMM following the threadblock / warp / thread blocking
//! hierarchy, plus a double-precision triple-loop oracle.
//!
//! All matrices are column-major. Accumulation is fp32 and, for every output
//! element, strictly k-ascending, so the result does not depend on the tile
//! shape or on how tiles are scheduled across threads.

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::spectral::{ComplexF32, ConfigViolation, TileConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GemmError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid tile configuration: {0:?}")]
    InvalidTiles(Vec<ConfigViolation>),
}

/// Column-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<ComplexF32>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ComplexF32::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, ComplexF32::new(1.0, 0.0));
        }
        m
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<ComplexF32>) -> Result<Self, GemmError> {
        if data.len() != rows * cols {
            return Err(GemmError::ShapeMismatch(format!(
                "{} elements for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> ComplexF32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> ComplexF32 {
        self.data[row + col * self.rows]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: ComplexF32) {
        self.data[row + col * self.rows] = v;
    }

    pub fn data(&self) -> &[ComplexF32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [ComplexF32] {
        &mut self.data
    }

    pub fn transpose(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// `C (m x n) = A (m x k) * B (k x n)` under a given blocking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GemmProblem {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub tiles: TileConfig,
}

impl GemmProblem {
    pub fn new(m: usize, n: usize, k: usize, tiles: TileConfig) -> Result<Self, GemmError> {
        if m == 0 || n == 0 || k == 0 {
            return Err(GemmError::ShapeMismatch(format!("empty problem {m}x{n}x{k}")));
        }
        let violations = tiles.check();
        if !violations.is_empty() {
            return Err(GemmError::InvalidTiles(violations));
        }
        Ok(Self { m, n, k, tiles })
    }

    /// Threadblock tiles along M.
    pub fn m_tiles(&self) -> usize {
        self.m.div_ceil(self.tiles.m_tb)
    }
}

/// Accumulates `acc += panel * b[k0..k0+kc, ..]` for a block of `rows` rows.
///
/// `acc` is `rows x b.cols` and `panel` is `rows x kc`, both column-major with
/// leading dimension `rows`. The block is swept in `m_tb` x `n_tb` threadblock
/// tiles, each split into warp tiles and per-thread `m_t` x `n_t` fragments;
/// fragment elements past `rows` or `b.cols` are predicated off.
pub fn mac_panel(
    tiles: &TileConfig,
    rows: usize,
    acc: &mut [ComplexF32],
    panel: &[ComplexF32],
    b: &ComplexMatrix,
    k0: usize,
    kc: usize,
) {
    let n = b.cols;
    debug_assert!(acc.len() >= rows * n);
    debug_assert!(panel.len() >= rows * kc);
    debug_assert!(k0 + kc <= b.rows);
    let bdata = b.data();
    let ldb = b.rows;
    for m0 in (0..rows).step_by(tiles.m_tb) {
        for n0 in (0..n).step_by(tiles.n_tb) {
            for wm in (m0..(m0 + tiles.m_tb).min(rows)).step_by(tiles.m_w) {
                for wn in (n0..(n0 + tiles.n_tb).min(n)).step_by(tiles.n_w) {
                    for tm in (wm..(wm + tiles.m_w).min(rows)).step_by(tiles.m_t) {
                        for tn in (wn..(wn + tiles.n_w).min(n)).step_by(tiles.n_t) {
                            let i_end = (tm + tiles.m_t).min(rows);
                            let j_end = (tn + tiles.n_t).min(n);
                            for kk in 0..kc {
                                let a_col = &panel[kk * rows..kk * rows + rows];
                                for j in tn..j_end {
                                    let bv = bdata[k0 + kk + j * ldb];
                                    let c_col = &mut acc[j * rows..j * rows + rows];
                                    for i in tm..i_end {
                                        c_col[i] += a_col[i] * bv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Blocked CGEMM. Each threadblock owns an `m_tb`-row slab of C and sweeps all
/// N tiles; the k-loop advances in `k_tb` chunks, staging the A tile through a
/// zero-filled scratch panel.
pub fn gemm_tiled(p: &GemmProblem, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, GemmError> {
    check_shapes(a, b)?;
    if a.rows != p.m || a.cols != p.k || b.cols != p.n {
        return Err(GemmError::ShapeMismatch(format!(
            "problem {}x{}x{} vs A {}x{}, B {}x{}",
            p.m, p.n, p.k, a.rows, a.cols, b.rows, b.cols
        )));
    }
    let t = p.tiles;
    let slabs: Vec<Vec<ComplexF32>> = (0..p.m_tiles())
        .into_par_iter()
        .map(|tile| {
            let row0 = tile * t.m_tb;
            let rows = t.m_tb;
            let valid = (p.m - row0).min(rows);
            let mut acc = vec![ComplexF32::new(0.0, 0.0); rows * p.n];
            let mut panel = vec![ComplexF32::new(0.0, 0.0); rows * t.k_tb];
            for k0 in (0..p.k).step_by(t.k_tb) {
                let kc = t.k_tb.min(p.k - k0);
                for kk in 0..kc {
                    let src = &a.data()[row0 + (k0 + kk) * p.m..][..valid];
                    let dst = &mut panel[kk * rows..(kk + 1) * rows];
                    dst[..valid].copy_from_slice(src);
                    dst[valid..].fill(ComplexF32::new(0.0, 0.0));
                }
                mac_panel(&t, rows, &mut acc, &panel, b, k0, kc);
            }
            acc
        })
        .collect();

    let mut c = ComplexMatrix::zeros(p.m, p.n);
    for (tile, acc) in slabs.iter().enumerate() {
        let row0 = tile * t.m_tb;
        let valid = (p.m - row0).min(t.m_tb);
        for j in 0..p.n {
            c.data[row0 + j * p.m..][..valid].copy_from_slice(&acc[j * t.m_tb..][..valid]);
        }
    }
    Ok(c)
}

fn check_shapes(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<(), GemmError> {
    if a.cols != b.rows {
        return Err(GemmError::ShapeMismatch(format!(
            "A is {}x{} but B is {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    Ok(())
}

/// Triple-loop product accumulated in double precision, rounded once.
pub fn gemm_oracle(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix, GemmError> {
    check_shapes(a, b)?;
    let mut c = ComplexMatrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..a.cols {
                let x = a.get(i, k);
                let y = b.get(k, j);
                s += Complex64::new(x.re as f64, x.im as f64) * Complex64::new(y.re as f64, y.im as f64);
            }
            c.set(i, j, ComplexF32::new(s.re as f32, s.im as f32));
        }
    }
    Ok(c)
}

/// `max |x - y| / max |y|`, with `max |y| == 0` treated as absolute error.
pub fn max_rel_error(actual: &[ComplexF32], expected: &[ComplexF32]) -> f64 {
    assert_eq!(actual.len(), expected.len());
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for (x, y) in actual.iter().zip(expected) {
        let d = Complex64::new((x.re - y.re) as f64, (x.im - y.im) as f64).norm();
        diff = diff.max(d);
        scale = scale.max(Complex64::new(y.re as f64, y.im as f64).norm());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f32, im: f32) -> ComplexF32 {
        ComplexF32::new(re, im)
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn scalar_product() {
        let a = ComplexMatrix::from_col_major(1, 1, vec![c(2.0, 1.0)]).unwrap();
        let b = ComplexMatrix::from_col_major(1, 1, vec![c(3.0, -1.0)]).unwrap();
        let p = GemmProblem::new(1, 1, 1, TileConfig::TABLE).unwrap();
        assert_eq!(gemm_tiled(&p, &a, &b).unwrap().get(0, 0), c(7.0, 1.0));
        assert_eq!(gemm_oracle(&a, &b).unwrap().get(0, 0), c(7.0, 1.0));
    }

    #[test]
    fn identity_weight_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(70, 12, &mut rng);
        let p = GemmProblem::new(70, 12, 12, TileConfig::TABLE).unwrap();
        let out = gemm_tiled(&p, &a, &ComplexMatrix::identity(12)).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn oracle_basics() {
        let z = ComplexMatrix::zeros(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let b = random(4, 5, &mut rng);
        assert!(gemm_oracle(&z, &b).unwrap().data().iter().all(|v| *v == c(0.0, 0.0)));
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(gemm_oracle(&i2, &i2).unwrap(), i2);
    }

    #[test]
    fn oracle_transpose_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(8, 8, &mut rng);
        let b = random(8, 8, &mut rng);
        let ab_t = gemm_oracle(&a, &b).unwrap().transpose();
        let bt_at = gemm_oracle(&b.transpose(), &a.transpose()).unwrap();
        assert!(max_rel_error(ab_t.data(), bt_at.data()) < 1e-6);
    }

    #[test]
    fn tiled_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(64, 16, &mut rng);
        let b = random(16, 32, &mut rng);
        let p = GemmProblem::new(64, 32, 16, TileConfig::TABLE).unwrap();
        let err = max_rel_error(
            gemm_tiled(&p, &a, &b).unwrap().data(),
            gemm_oracle(&a, &b).unwrap().data(),
        );
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn ragged_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(45, 11, &mut rng);
        let b = random(11, 19, &mut rng);
        for tiles in [TileConfig::TABLE, TileConfig::WIDE, TileConfig::TALL_N] {
            let p = GemmProblem::new(45, 19, 11, tiles).unwrap();
            let err = max_rel_error(
                gemm_tiled(&p, &a, &b).unwrap().data(),
                gemm_oracle(&a, &b).unwrap().data(),
            );
            assert!(err < 1e-3, "{err}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = ComplexMatrix::zeros(4, 3);
        let b = ComplexMatrix::zeros(4, 3);
        let p = GemmProblem::new(4, 3, 3, TileConfig::TABLE).unwrap();
        assert!(matches!(gemm_tiled(&p, &a, &b), Err(GemmError::ShapeMismatch(_))));
        assert!(matches!(gemm_oracle(&a, &b), Err(GemmError::ShapeMismatch(_))));
        assert!(ComplexMatrix::from_col_major(2, 2, vec![c(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn invalid_tiles_rejected() {
        let mut t = TileConfig::TABLE;
        t.m_t = 3;
        assert!(matches!(GemmProblem::new(4, 4, 4, t), Err(GemmError::InvalidTiles(_))));
    }
}
