use std::collections::BTreeSet;

use hexstrat_core::scenario::{generate, unit_count_bounds, ScenarioParams, ScenarioStream, UnitCountMode};
use hexstrat_core::Faction;
use proptest::prelude::*;

#[test]
fn ten_thousand_placements_valid() {
    for i in 0..10_000u64 {
        let len = 3 + (i % 18) as i32;
        let spec = generate(&ScenarioParams::standard(len), i.wrapping_mul(0x9E37_79B9)).unwrap();
        let (lo, hi) = unit_count_bounds(len);
        for f in [Faction::Blue, Faction::Red] {
            let n = spec.count(f) as u32;
            assert!(lo <= n && n <= hi, "L={len} count {n}");
        }
        let pos: BTreeSet<_> = spec.units.iter().map(|u| u.pos).collect();
        assert_eq!(pos.len(), spec.units.len());
        assert!(spec.units.iter().all(|u| spec.dims.contains(u.pos)));
        assert!(spec.urban_hexes.iter().all(|c| spec.dims.contains(*c)));
    }
}

#[test]
fn bounds_match_ceil_half() {
    for len in 3..=20 {
        let (lo, hi) = unit_count_bounds(len);
        assert_eq!(lo, (len as u32).div_ceil(2));
        assert_eq!(hi, len as u32);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hierarchy_labels_complete(seed in any::<u64>(), k in 1u32..=3) {
        let p = ScenarioParams {
            unit_count_mode: UnitCountMode::HierarchyCounts { min_commanders: k, max_commanders: k },
            ..ScenarioParams::hrl()
        };
        let spec = generate(&p, seed).unwrap();
        for f in [Faction::Blue, Faction::Red] {
            let units: Vec<_> = spec.units.iter().filter(|u| u.faction == f).collect();
            prop_assert_eq!(units.len() as u32, 9 * k);
            prop_assert!(units.iter().all(|u| u.manager.is_some() && u.commander.is_some()));
            let mut sizes = std::collections::BTreeMap::new();
            for u in &units {
                *sizes.entry(u.manager.unwrap()).or_insert(0) += 1;
            }
            prop_assert!(sizes.values().all(|&n| n == 3));
        }
        let pos: BTreeSet<_> = spec.units.iter().map(|u| u.pos).collect();
        prop_assert_eq!(pos.len(), spec.units.len());
    }

    #[test]
    fn streams_reproducible(seed in any::<u64>(), cycle in 0u32..4) {
        let a = ScenarioStream::new(seed, cycle, ScenarioParams::standard(7)).unwrap();
        let b = ScenarioStream::new(seed, cycle, ScenarioParams::standard(7)).unwrap();
        for i in 0..6 {
            prop_assert_eq!(a.draw(i).unwrap(), b.draw(i).unwrap());
        }
        if cycle > 0 {
            prop_assert_eq!(a.draw(0).unwrap(), a.draw(cycle as u64).unwrap());
        }
    }
}
