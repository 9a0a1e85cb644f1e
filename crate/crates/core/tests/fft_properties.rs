mod common;

use common::*;
use fusedfno::fft::{execute_unpruned, full_op_count, plan, Direction, PencilView};
use fusedfno::ComplexF32;
use proptest::prelude::*;

fn run(n: usize, dir: Direction, keep: usize, input: &[ComplexF32]) -> Vec<ComplexF32> {
    let p = plan(n, dir, keep, input.len()).unwrap();
    let mut out = vec![ComplexF32::new(0.0, 0.0); keep];
    p.execute(input, &mut out).unwrap();
    out
}

fn bits(v: &[ComplexF32]) -> Vec<(u32, u32)> {
    v.iter().map(|c| (c.re.to_bits(), c.im.to_bits())).collect()
}

#[test]
fn four_point_counts_and_ratios() {
    let full = full_op_count(4).unwrap();
    assert_eq!(full, 8);
    let budget = |keep| plan(4, Direction::Forward, keep, 4).unwrap().op_budget().butterflies;
    assert_eq!(budget(1), 3);
    assert_eq!(budget(2), 6);
    assert_eq!(budget(4), 8);
    assert_eq!(budget(1) as f64 / full as f64, 0.375);
    assert_eq!(budget(2) as f64 / full as f64, 0.75);
}

#[test]
fn budgets_match_graph_reachability() {
    for n in [2usize, 4, 8, 16, 32, 64, 256] {
        let dag = ButterflyDag::new(n);
        assert_eq!(dag.executed_nodes(n, n) as u64, full_op_count(n).unwrap());
        for keep in [1, n / 4, n / 2, n].into_iter().filter(|&k| k >= 1) {
            for src in [1, n / 4, n / 2, n].into_iter().filter(|&s| s >= 1) {
                for dir in [Direction::Forward, Direction::Inverse] {
                    let p = plan(n, dir, keep, src).unwrap();
                    assert_eq!(
                        p.op_budget().butterflies,
                        dag.executed_nodes(keep, src) as u64,
                        "n={n} keep={keep} src={src}"
                    );
                }
            }
        }
    }
}

#[test]
fn truncated_256_budget() {
    let dag = ButterflyDag::new(256);
    let p = plan(256, Direction::Forward, 64, 256).unwrap();
    assert_eq!(p.op_budget().butterflies, dag.executed_nodes(64, 256) as u64);
    assert_eq!(full_op_count(16).unwrap(), 64);
}

#[test]
fn matches_naive_dft_for_all_shapes() {
    let mut r = rng(11);
    let mut n = 2;
    while n <= 1024 {
        for _ in 0..3 {
            let x = random_vec(&mut r, n);
            let keep = r.gen_range(1..=n);
            let src = r.gen_range(1..=n);
            let fwd = run(n, Direction::Forward, keep, &x);
            assert!(rel_err(&fwd, &naive_dft(&widen(&x), n, keep, false)) < 1e-4);
            let inv = run(n, Direction::Inverse, n, &x[..src]);
            assert!(rel_err(&inv, &naive_dft(&widen(&x[..src]), n, n, true)) < 1e-4);
        }
        n *= 2;
    }
}

#[test]
fn strided_pencils_match_contiguous_ones() {
    let mut r = rng(3);
    let (n, count) = (16, 5);
    let data = random_vec(&mut r, n * count);
    let p = plan(n, Direction::Forward, 8, n).unwrap();
    // Pencil j, element i at i * count + j.
    let mut out = vec![ComplexF32::new(0.0, 0.0); 8 * count];
    let view = PencilView {
        offset: 0,
        count,
        pencil_stride: 1,
        element_stride: count,
    };
    p.batched_execute(&data, view, &mut out, view).unwrap();
    for j in 0..count {
        let pencil: Vec<_> = (0..n).map(|i| data[i * count + j]).collect();
        let want = run(n, Direction::Forward, 8, &pencil);
        let got: Vec<_> = (0..8).map(|i| out[i * count + j]).collect();
        assert_eq!(bits(&got), bits(&want));
    }
}

use rand::Rng;

fn length() -> impl Strategy<Value = usize> {
    (1u32..=10).prop_map(|e| 1usize << e)
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<ComplexF32>> {
    prop::collection::vec(
        (-1.0f32..1.0, -1.0f32..1.0).prop_map(|(a, b)| ComplexF32::new(a, b)),
        len,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linearity(
        (n, x, y) in length().prop_flat_map(|n| (Just(n), complex_vec(n), complex_vec(n))),
        a in (-2.0f32..2.0, -2.0f32..2.0),
        b in (-2.0f32..2.0, -2.0f32..2.0),
    ) {
        let (a, b) = (ComplexF32::new(a.0, a.1), ComplexF32::new(b.0, b.1));
        let mix: Vec<_> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = run(n, Direction::Forward, n, &mix);
        let fx = run(n, Direction::Forward, n, &x);
        let fy = run(n, Direction::Forward, n, &y);
        let rhs: Vec<_> = fx.iter().zip(&fy).map(|(u, v)| a * u + b * v).collect();
        prop_assert!(rel_err_f32(&lhs, &rhs) < 1e-4);
    }

    #[test]
    fn round_trip((n, x) in length().prop_flat_map(|n| (Just(n), complex_vec(n)))) {
        let back = run(n, Direction::Inverse, n, &run(n, Direction::Forward, n, &x));
        prop_assert!(rel_err_f32(&back, &x) < 1e-4);
    }

    #[test]
    fn pruned_outputs_are_bitwise_unpruned(
        (n, keep, _src, x) in (1u32..=8)
            .prop_map(|e| 1usize << e)
            .prop_flat_map(|n| (Just(n), 1..=n, 1..=n))
            .prop_flat_map(|(n, k, s)| (Just(n), Just(k), Just(s), complex_vec(s))),
        inverse in any::<bool>(),
    ) {
        let dir = if inverse { Direction::Inverse } else { Direction::Forward };
        let pruned = run(n, dir, keep, &x);
        let full = execute_unpruned(n, dir, &x, keep).unwrap();
        prop_assert_eq!(bits(&pruned), bits(&full));
    }

    #[test]
    fn budget_is_monotone((n, keep, src) in length().prop_flat_map(|n| (Just(n), 1..=n, 1..=n))) {
        let b = |k, s| plan(n, Direction::Forward, k, s).unwrap().op_budget().butterflies;
        let here = b(keep, src);
        if keep < n {
            prop_assert!(b(keep + 1, src) >= here);
        }
        if src < n {
            prop_assert!(b(keep, src + 1) >= here);
        }
        prop_assert!(here <= full_op_count(n).unwrap());
    }
}
