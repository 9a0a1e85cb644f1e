//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::fs;
use std::time::{Duration, Instant};

use common::*;
use fusedfno::bench::{cmd_report, cmd_verify, default_grids, random_operands, ExperimentGrid};
use fusedfno::cgemm::{gemm_tiled, ComplexMatrix, GemmProblem};
use fusedfno::fft::{execute_unpruned, full_op_count, plan, Direction};
use fusedfno::gpu_model::{gemm_forwarding_report, verify_epilogue_swizzle, LayoutTile, SwizzleLayout};
use fusedfno::pipeline::{run_fused, run_layer, run_staged, GlobalArray, PipelineMode};
use fusedfno::spectral::{FftKernelParams, FnoLayerConfig, LayerSetup, TileConfig};
use fusedfno::ComplexF32;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bitwise_eq(a: &[ComplexF32], b: &[ComplexF32]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
}

fn execute(n: usize, dir: Direction, keep: usize, input: &[ComplexF32]) -> Vec<ComplexF32> {
    let p = plan(n, dir, keep, input.len()).expect("valid plan");
    let mut out = vec![ComplexF32::new(0.0, 0.0); keep];
    p.execute(input, &mut out).expect("sized buffers");
    out
}

fn pruning_counts() -> Outcome {
    let budget = |keep| plan(4, Direction::Forward, keep, 4).map(|p| p.op_budget().butterflies);
    let got = (budget(1).unwrap(), budget(2).unwrap(), full_op_count(4).unwrap());
    ensure(got == (3, 6, 8), || format!("got {got:?}"))?;
    Ok("n=4: keep 1 -> 3, keep 2 -> 6, full 8".into())
}

fn prune_soundness() -> Outcome {
    let mut r = rng(21);
    let mut checked = 0;
    let mut n = 4;
    while n <= 256 {
        let x = random_vec(&mut r, n);
        let fwd = execute_unpruned(n, Direction::Forward, &x, n).unwrap();
        for keep in 1..=n {
            ensure(
                bitwise_eq(&execute(n, Direction::Forward, keep, &x), &fwd[..keep]),
                || format!("forward n={n} keep={keep}"),
            )?;
            let padded = execute_unpruned(n, Direction::Inverse, &x[..keep], n).unwrap();
            for out_keep in [1, keep, n] {
                ensure(
                    bitwise_eq(
                        &execute(n, Direction::Inverse, out_keep, &x[..keep]),
                        &padded[..out_keep],
                    ),
                    || format!("inverse n={n} src_len={keep} keep={out_keep}"),
                )?;
            }
            checked += 4;
        }
        n *= 2;
    }
    Ok(format!("{checked} pruned executions bitwise equal to unpruned"))
}

fn fft_vs_naive_dft() -> Outcome {
    let mut r = rng(33);
    let mut worst: f64 = 0.0;
    let mut trials = 0;
    let mut n = 2;
    while n <= 1024 {
        for _ in 0..100 {
            let x = random_vec(&mut r, n);
            let keep = r.gen_range(1..=n);
            let src = r.gen_range(1..=n);
            let cases: [(Direction, usize, &[ComplexF32]); 4] = [
                (Direction::Forward, n, &x),
                (Direction::Inverse, n, &x),
                (Direction::Forward, keep, &x),
                (Direction::Inverse, n, &x[..src]),
            ];
            for (dir, k, input) in cases {
                let got = execute(n, dir, k, input);
                let want = naive_dft(&widen(input), n, k, dir == Direction::Inverse);
                let err = rel_err(&got, &want);
                worst = worst.max(err);
                ensure(err < 1e-4, || {
                    format!("n={n} keep={k} src={} {dir:?}: {err:e}", input.len())
                })?;
                trials += 1;
            }
        }
        n *= 2;
    }
    Ok(format!("{trials} transforms, worst relative error {worst:.2e}"))
}

fn cgemm_vs_oracle() -> Outcome {
    let mut r = rng(44);
    let mut worst: f64 = 0.0;
    let mut ragged = 0;
    for i in 0..200 {
        let tiles = [TileConfig::TABLE, TileConfig::WIDE, TileConfig::TALL_N][i % 3];
        let m: usize = r.gen_range(32..=1500);
        let n: usize = r.gen_range(16..=256);
        let k: usize = r.gen_range(8..=128);
        // Every tenth problem is tile-aligned.
        let (m, n, k) = if i % 10 == 0 {
            (
                m.next_multiple_of(tiles.m_tb),
                n.next_multiple_of(tiles.n_tb),
                k.next_multiple_of(tiles.k_tb),
            )
        } else {
            (m, n, k)
        };
        if m % tiles.m_tb != 0 || n % tiles.n_tb != 0 || k % tiles.k_tb != 0 {
            ragged += 1;
        }
        let a = random_vec(&mut r, m * k);
        let b = random_vec(&mut r, k * n);
        let p = GemmProblem::new(m, n, k, tiles).map_err(|e| e.to_string())?;
        let c = gemm_tiled(
            &p,
            &ComplexMatrix::from_col_major(m, k, a.clone()).unwrap(),
            &ComplexMatrix::from_col_major(k, n, b.clone()).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let err = rel_err(c.data(), &matmul_oracle(m, n, k, &a, &b));
        worst = worst.max(err);
        ensure(err < 1e-3, || format!("{m}x{n}x{k}: {err:e}"))?;
    }
    Ok(format!(
        "200 problems ({ragged} with ragged edges), worst relative error {worst:.2e}"
    ))
}

fn fused_equals_staged() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for g in default_grids() {
        for (i, p) in g.points().into_iter().enumerate() {
            let (x, w) = random_operands(&p.setup.layer, 1000 + i as u64);
            let (staged, _) = run_staged(&p.setup, &x, &w).map_err(|e| e.to_string())?;
            for mode in PipelineMode::ALL.into_iter().skip(1) {
                let (y, _) = run_layer(&p.setup, mode, &x, &w).map_err(|e| e.to_string())?;
                let err = rel_err_f32(y.data(), staged.data());
                worst = worst.max(err);
                ensure(err < 1e-3, || format!("{} {mode}: {err:e}", p.label()))?;
            }
            points += 1;
        }
    }
    Ok(format!(
        "{points} grid points x 4 modes, worst relative error {worst:.2e}"
    ))
}

fn setup(layer: FnoLayerConfig) -> LayerSetup {
    LayerSetup {
        layer,
        tiles: TileConfig::TABLE,
        fft: FftKernelParams::default(),
    }
}

fn traffic_claims() -> Outcome {
    let layer = FnoLayerConfig {
        batch: 1,
        hidden_dim: 16,
        output_dim: 16,
        dim_x: 256,
        dim_y: 256,
        keep_x: 64,
        keep_y: 64,
        rank: 2,
    };
    let (x, w) = random_operands(&layer, 6);
    let (_, s) = run_staged(&setup(layer), &x, &w).map_err(|e| e.to_string())?;
    let (_, f) = run_fused(&setup(layer), &x, &w).map_err(|e| e.to_string())?;
    let untruncated = (layer.batch * 16 * 256 * 256 * 8) as u64;
    let written = f.get(GlobalArray::SpectrumStage1).bytes_written;
    ensure(s.get(GlobalArray::SpectrumStage1).bytes_written == untruncated, || {
        "staged stage-1 bytes".into()
    })?;
    ensure(written * 4 == untruncated, || {
        format!("stage-1 writes {written} of {untruncated}")
    })?;
    // (keep_x / dim_x)^2 = 1/16.
    ensure(f.stage2_modeled_ops * 16 == s.stage2_modeled_ops, || {
        format!("stage-2 ops {} vs {}", f.stage2_modeled_ops, s.stage2_modeled_ops)
    })?;
    Ok(format!(
        "stage-1 writes {written}/{untruncated} = 0.25, stage-2 ops {}/{} = 1/16",
        f.stage2_modeled_ops, s.stage2_modeled_ops
    ))
}

fn fusion_eliminates_intermediates() -> Outcome {
    let mut lines = Vec::new();
    for rank in [1u8, 2] {
        let layer = FnoLayerConfig {
            batch: 4,
            hidden_dim: 32,
            output_dim: 48,
            dim_x: if rank == 2 { 32 } else { 8 },
            dim_y: 128,
            keep_x: if rank == 2 { 16 } else { 8 },
            keep_y: 64,
            rank,
        };
        let (x, w) = random_operands(&layer, 7);
        let (_, s) = run_staged(&setup(layer), &x, &w).map_err(|e| e.to_string())?;
        let (_, f) = run_fused(&setup(layer), &x, &w).map_err(|e| e.to_string())?;
        let m = (layer.batch * layer.keep_x * layer.keep_y) as u64;
        let a_bytes = m * layer.hidden_dim as u64 * 8;
        let c_bytes = m * layer.output_dim as u64 * 8;
        let sa = s.get(GlobalArray::APanel);
        let sc = s.get(GlobalArray::C);
        ensure(sa.bytes_written == a_bytes && sa.bytes_read == a_bytes, || {
            format!("staged A {sa:?}")
        })?;
        ensure(sc.bytes_written == c_bytes && sc.bytes_read == c_bytes, || {
            format!("staged C {sc:?}")
        })?;
        ensure(f.get(GlobalArray::APanel).total() == 0, || {
            "fused A_panel traffic".into()
        })?;
        ensure(f.get(GlobalArray::C).total() == 0, || "fused C traffic".into())?;
        lines.push(format!(
            "rank {rank}: staged A {a_bytes}+{a_bytes} B, C {c_bytes}+{c_bytes} B, fused 0"
        ));
    }
    Ok(lines.join("; "))
}

fn bank_simulator() -> Outcome {
    let forwarding = gemm_forwarding_report(SwizzleLayout::StridedVkfft).unwrap().utilization;
    ensure(forwarding == 0.25, || format!("strided {forwarding}"))?;
    let all = |l: SwizzleLayout, pred: &dyn Fn(f64) -> bool| {
        LayoutTile::new(l, l.default_fft_size())
            .unwrap()
            .all_reports()
            .iter()
            .all(|r| pred(r.utilization))
    };
    ensure(all(SwizzleLayout::Fft16Naive, &|u| u == 0.0625), || {
        "fft16 naive".into()
    })?;
    ensure(all(SwizzleLayout::Fft16Swizzled, &|u| u == 1.0), || {
        "fft16 swizzled".into()
    })?;
    ensure(all(SwizzleLayout::Fft8Swizzled, &|u| u == 1.0), || {
        "fft8 swizzled".into()
    })?;
    let e = verify_epilogue_swizzle(&TileConfig::TABLE).unwrap();
    ensure(e.swizzled.iter().all(|r| r.utilization == 1.0), || {
        "epilogue swizzled".into()
    })?;
    let degree = e.naive.iter().map(|r| r.max_conflict_degree).min().unwrap_or(0);
    ensure(degree >= 4, || format!("naive epilogue degree {degree}"))?;
    Ok(format!(
        "strided 0.25, fft16 naive 0.0625, swizzled 1.0, naive epilogue degree {degree}"
    ))
}

fn determinism_grid() -> Vec<ExperimentGrid> {
    vec![
        ExperimentGrid {
            dims: vec![(128, 64), (256, 128)],
            hidden_range: vec![16, 48],
            batch_range: vec![16],
            ..ExperimentGrid::default_rank1()
        },
        ExperimentGrid {
            dims: vec![(128, 64), (256, 64)],
            hidden_range: vec![16],
            batch_range: vec![256],
            ..ExperimentGrid::default_rank2()
        },
    ]
}

fn determinism() -> Outcome {
    let grids = determinism_grid();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |threads: usize, tag: &str| -> Result<(String, Vec<u8>, Vec<u8>), String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        pool.install(|| {
            let summary = cmd_verify(&grids, 42);
            let csv = dir.path().join(format!("{tag}.csv"));
            cmd_report(&grids, 42, &csv).map_err(|e| e.to_string())?;
            let text = summary.render() + &serde_json::to_string(&summary).unwrap();
            Ok((
                text,
                fs::read(&csv).map_err(|e| e.to_string())?,
                fs::read(csv.with_extension("json")).map_err(|e| e.to_string())?,
            ))
        })
    };
    let first = run(1, "a")?;
    let second = run(1, "b")?;
    let parallel = run(4, "c")?;
    ensure(first.0.contains("verify: ok"), || "verify failed".into())?;
    ensure(first == second, || "two runs differ".into())?;
    ensure(first == parallel, || "1-thread and 4-thread runs differ".into())?;
    Ok(format!(
        "verify summary and {}-byte CSV / {}-byte JSON identical across runs and thread counts",
        first.1.len(),
        first.2.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("pruning op counts", pruning_counts, Duration::from_secs(1)),
        (
            "pruned-output bitwise soundness",
            prune_soundness,
            Duration::from_secs(30),
        ),
        ("FFT vs direct DFT", fft_vs_naive_dft, Duration::from_secs(60)),
        ("CGEMM vs oracle", cgemm_vs_oracle, Duration::from_secs(60)),
        ("fused equals staged", fused_equals_staged, Duration::from_secs(300)),
        (
            "truncation traffic and op ratios",
            traffic_claims,
            Duration::from_secs(60),
        ),
        (
            "fusion eliminates intermediates",
            fusion_eliminates_intermediates,
            Duration::from_secs(60),
        ),
        ("bank simulator", bank_simulator, Duration::from_secs(1)),
        ("determinism", determinism, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > *budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match result {
            Ok(detail) => println!("PASS {}. {name} ({elapsed:.2?}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name} ({elapsed:.2?}): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
