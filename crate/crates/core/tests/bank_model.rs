use std::collections::{HashMap, HashSet};

use fusedfno::gpu_model::{
    gemm_forwarding_report, layout_feeds_gemm, simulate, verify_epilogue_swizzle, GpuModelError, LaneAccess,
    LayoutTile, SwizzleLayout, WarpAccessPattern,
};
use fusedfno::TileConfig;

fn tile(l: SwizzleLayout) -> LayoutTile {
    LayoutTile::new(l, l.default_fft_size()).unwrap()
}

#[test]
fn addresses_are_injective_over_every_tile() {
    for l in SwizzleLayout::ALL {
        let t = tile(l);
        let mut seen = HashSet::new();
        for th in 0..t.threads {
            for ph in 0..t.phases {
                assert!(seen.insert(t.cell(th, ph).addr), "{l}: address reused");
            }
        }
        assert_eq!(seen.len(), t.threads * t.phases);
    }
}

#[test]
fn swizzling_moves_addresses_never_values() {
    let pairs = [
        (SwizzleLayout::Fft16Naive, SwizzleLayout::Fft16Swizzled),
        (SwizzleLayout::Fft8Naive, SwizzleLayout::Fft8Swizzled),
        (SwizzleLayout::EpilogueNaive, SwizzleLayout::EpilogueSwizzled),
    ];
    for (naive, swz) in pairs {
        // Every thread stores the values of its own logical elements; the
        // memory image after all phases must be the same with either order.
        let image = |l: SwizzleLayout| {
            let t = tile(l);
            let mut mem = HashMap::new();
            for th in 0..t.threads {
                for ph in 0..t.phases {
                    let c = t.cell(th, ph);
                    let value = c.logical as u64 * 31 + 7;
                    mem.insert(c.addr, (th, value));
                }
            }
            mem
        };
        let (a, b) = (image(naive), image(swz));
        assert_eq!(a.len(), b.len());
        for (addr, (th, v)) in &a {
            assert_eq!(b[addr], (*th, *v), "{swz} at {addr}");
        }
    }
}

#[test]
fn reproduces_the_published_utilizations() {
    assert_eq!(
        gemm_forwarding_report(SwizzleLayout::StridedVkfft).unwrap().utilization,
        0.25
    );
    assert!(!layout_feeds_gemm(SwizzleLayout::StridedVkfft).unwrap());
    assert!(layout_feeds_gemm(SwizzleLayout::ConsecutiveTurbofno).unwrap());
    for r in tile(SwizzleLayout::Fft16Naive).all_reports() {
        assert_eq!(r.utilization, 0.0625);
    }
    for l in [
        SwizzleLayout::Fft16Swizzled,
        SwizzleLayout::Fft8Swizzled,
        SwizzleLayout::EpilogueSwizzled,
    ] {
        assert!(tile(l).all_reports().iter().all(|r| r.utilization == 1.0), "{l}");
    }
    let v = verify_epilogue_swizzle(&TileConfig::TABLE).unwrap();
    assert!(v.naive.iter().all(|r| r.max_conflict_degree >= 4));
    assert!(v.swizzled.iter().all(|r| r.utilization == 1.0));
}

#[test]
fn forwarding_check_is_limited_to_the_two_panel_layouts() {
    assert!(matches!(
        layout_feeds_gemm(SwizzleLayout::Fft16Naive),
        Err(GpuModelError::UndefinedCombination { .. })
    ));
}

#[test]
fn lone_lane_touches_two_banks() {
    let mut accesses = [None; 32];
    accesses[0] = Some(LaneAccess { addr: 0, width: 8 });
    let r = simulate(&WarpAccessPattern {
        accesses,
        element_width: 8,
    });
    assert_eq!(r.distinct_banks, 2);
    assert_eq!(r.max_conflict_degree, 1);
}
