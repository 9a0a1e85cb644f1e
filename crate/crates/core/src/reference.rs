//! Double-precision reference for the spectral layer, built from direct DFTs.
//!
//! Independent of the FFT and GEMM kernels: every transform is an explicit
//! O(n^2) sum with exactly reduced twiddle indices.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cgemm::ComplexMatrix;
use crate::fft::Direction;
use crate::spectral::{ComplexF32, FnoLayerConfig, SpectralTensor};

fn twiddles(n: usize, direction: Direction) -> Vec<Complex64> {
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    (0..n)
        .map(|j| Complex64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * j as f64 / n as f64))
        .collect()
}

/// Direct DFT of the zero-extended `input` (length `<= n`), first `keep` bins.
/// The inverse is scaled by `1/n`.
pub fn dft(input: &[Complex64], n: usize, keep: usize, direction: Direction) -> Vec<Complex64> {
    dft_axis(input, 1, input.len(), 1, n, keep, direction)
}

/// DFT along the middle axis of `[outer, src_len, inner]`, producing `[outer, keep, inner]`.
pub fn dft_axis(
    data: &[Complex64],
    outer: usize,
    src_len: usize,
    inner: usize,
    n: usize,
    keep: usize,
    direction: Direction,
) -> Vec<Complex64> {
    assert_eq!(data.len(), outer * src_len * inner);
    assert!(src_len <= n && keep <= n);
    let tw = twiddles(n, direction);
    let scale = match direction {
        Direction::Forward => 1.0,
        Direction::Inverse => 1.0 / n as f64,
    };
    let mut out = vec![Complex64::new(0.0, 0.0); outer * keep * inner];
    out.par_chunks_mut((keep * inner).max(1))
        .zip(data.par_chunks((src_len * inner).max(1)))
        .for_each(|(o, d)| {
            for k in 0..keep {
                for i in 0..inner {
                    let mut s = Complex64::new(0.0, 0.0);
                    for j in 0..src_len {
                        s += d[j * inner + i] * tw[(k * j) % n];
                    }
                    o[k * inner + i] = s * scale;
                }
            }
        });
    out
}

/// The layer `iFFT(pad(trunc(FFT(x)) * W))` in f64.
pub fn spectral_layer(layer: &FnoLayerConfig, x: &SpectralTensor, w: &ComplexMatrix) -> Vec<ComplexF32> {
    let (b, h, n) = (layer.batch, layer.hidden_dim, layer.output_dim);
    let (dx, dy, kx, ky) = (layer.dim_x, layer.dim_y, layer.keep_x, layer.keep_y);
    let up = |v: &ComplexF32| Complex64::new(v.re as f64, v.im as f64);
    let input: Vec<Complex64> = x.data().iter().map(up).collect();

    let mut spec = dft_axis(&input, b * h * dx, dy, 1, dy, ky, Direction::Forward);
    if layer.rank == 2 {
        spec = dft_axis(&spec, b * h, dx, ky, dx, kx, Direction::Forward);
    }
    // spec: [b, h, kx, ky]
    let plane = kx * ky;
    let wd: Vec<Complex64> = w.data().iter().map(up).collect();
    let mut mixed = vec![Complex64::new(0.0, 0.0); b * n * plane];
    mixed.par_chunks_mut(plane).enumerate().for_each(|(q, out)| {
        let (bb, nn) = (q / n, q % n);
        for hh in 0..h {
            let wv = wd[hh + nn * h];
            let src = &spec[(bb * h + hh) * plane..(bb * h + hh + 1) * plane];
            for (o, s) in out.iter_mut().zip(src) {
                *o += s * wv;
            }
        }
    });

    let out = if layer.rank == 2 {
        let t = dft_axis(&mixed, b * n, kx, ky, dx, dx, Direction::Inverse);
        dft_axis(&t, b * n * dx, ky, 1, dy, dy, Direction::Inverse)
    } else {
        dft_axis(&mixed, b * n * dx, ky, 1, dy, dy, Direction::Inverse)
    };
    out.iter().map(|v| ComplexF32::new(v.re as f32, v.im as f32)).collect()
}
