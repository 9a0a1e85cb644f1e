//! Test-only oracles, written independently of the library kernels.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::f64::consts::PI;

use fusedfno::ComplexF32;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<ComplexF32> {
    (0..len)
        .map(|_| ComplexF32::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

pub fn widen(v: &[ComplexF32]) -> Vec<Complex64> {
    v.iter().map(|c| Complex64::new(c.re as f64, c.im as f64)).collect()
}

/// `sum_j x[j] exp(sign 2 pi i k j / n)` for `k < keep`, inputs past `x.len()` zero.
/// Inverse results are divided by `n`.
pub fn naive_dft(x: &[Complex64], n: usize, keep: usize, inverse: bool) -> Vec<Complex64> {
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..keep)
        .map(|k| {
            let s: Complex64 = x
                .iter()
                .enumerate()
                .map(|(j, v)| v * Complex64::from_polar(1.0, sign * 2.0 * PI * ((k * j) % n) as f64 / n as f64))
                .sum();
            if inverse {
                s / n as f64
            } else {
                s
            }
        })
        .collect()
}

/// `max |a - b| / max |b|`.
pub fn rel_err(a: &[ComplexF32], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (Complex64::new(x.re as f64, x.im as f64) - y).norm())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn rel_err_f32(a: &[ComplexF32], b: &[ComplexF32]) -> f64 {
    rel_err(a, &widen(b))
}

/// Column-major complex product in f64.
pub fn matmul_oracle(m: usize, n: usize, k: usize, a: &[ComplexF32], b: &[ComplexF32]) -> Vec<Complex64> {
    let (a, b) = (widen(a), widen(b));
    let mut c = vec![Complex64::new(0.0, 0.0); m * n];
    for j in 0..n {
        for kk in 0..k {
            let bv = b[kk + j * k];
            for i in 0..m {
                c[i + j * m] += a[i + kk * m] * bv;
            }
        }
    }
    c
}

/// Explicit dataflow graph of the radix-2 self-sorting transform.
///
/// Node `(l, i)` for `l in 0..=L` is value `i` of the buffer after `l` stages
/// (`l = 0` are the inputs). Stage `l` has stride `s = 2^l`, half-span
/// `m = n / 2^(l+1)`, and maps positions `q + s*p` and `q + s*(p+m)` to
/// positions `q + 2sp` and `q + 2sp + s`.
pub struct ButterflyDag {
    pub n: usize,
    pub levels: usize,
    /// `preds[l][i]`: predecessors of node `(l + 1, i)` at level `l`.
    preds: Vec<Vec<[usize; 2]>>,
}

impl ButterflyDag {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two());
        let levels = n.trailing_zeros() as usize;
        let mut preds = Vec::with_capacity(levels);
        for l in 0..levels {
            let s = 1usize << l;
            let m = n >> (l + 1);
            let mut level = vec![[usize::MAX; 2]; n];
            for q in 0..s {
                for p in 0..m {
                    let ins = [q + s * p, q + s * (p + m)];
                    level[q + 2 * s * p] = ins;
                    level[q + 2 * s * p + s] = ins;
                }
            }
            assert!(level.iter().all(|e| e[0] != usize::MAX));
            preds.push(level);
        }
        Self { n, levels, preds }
    }

    fn id(&self, level: usize, i: usize) -> usize {
        level * self.n + i
    }

    /// Butterfly-output nodes reachable backward from outputs `< keep` and
    /// forward from inputs `< src_len`, counted by breadth-first search.
    pub fn executed_nodes(&self, keep: usize, src_len: usize) -> usize {
        let total = (self.levels + 1) * self.n;
        let mut succs = vec![Vec::new(); total];
        let mut preds = vec![Vec::new(); total];
        for l in 0..self.levels {
            for i in 0..self.n {
                for &p in &self.preds[l][i] {
                    succs[self.id(l, p)].push(self.id(l + 1, i));
                    preds[self.id(l + 1, i)].push(self.id(l, p));
                }
            }
        }
        let bfs = |starts: Vec<usize>, edges: &Vec<Vec<usize>>| {
            let mut seen = vec![false; total];
            let mut queue: VecDeque<usize> = starts.into();
            for &s in &queue {
                seen[s] = true;
            }
            while let Some(v) = queue.pop_front() {
                for &w in &edges[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            seen
        };
        let live = bfs((0..keep).map(|i| self.id(self.levels, i)).collect(), &preds);
        let nonzero = bfs((0..src_len).map(|i| self.id(0, i)).collect(), &succs);
        (self.n..total).filter(|&v| live[v] && nonzero[v]).count()
    }
}
