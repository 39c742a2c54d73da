mod common;

use common::{model, random_state};
use hexstrat_core::agents::{OperatorModel, Posture, passagg_decide};
use hexstrat_core::engine::{ActionKind, GameRng};
use hexstrat_core::observation::StateView;
use proptest::prelude::*;
use rand::SeedableRng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn decisions_legal_and_attack_first(seed in any::<u64>(), len in 3i32..10, steps in 0usize..60, m in 0usize..8) {
        let s = random_state(seed, len, steps);
        let Some(id) = s.current_unit() else { return Ok(()) };
        let view = StateView::full(&s);
        let model = model(m);
        let a = model.decide(&view, id, &mut GameRng::seed_from_u64(seed));
        prop_assert!(s.legal_actions(id).unwrap().contains(&a));
        let u = s.unit(id).unwrap();
        let adjacent = !view.adjacent_enemies(u).is_empty();
        if adjacent && model != OperatorModel::Random {
            prop_assert!(a.is_attack(), "{} did not attack", model);
        }
        if model == OperatorModel::Shootback {
            let moved = matches!(a.kind, ActionKind::MoveTo { .. });
            prop_assert!(!moved);
        }
        if model == OperatorModel::City && s.is_urban(u.pos) && !adjacent {
            prop_assert_eq!(a.kind, ActionKind::Pass);
        }
    }

    #[test]
    fn pinned_passagg_matches_variants(seed in any::<u64>(), len in 3i32..10, steps in 0usize..60) {
        let s = random_state(seed, len, steps);
        let Some(id) = s.current_unit() else { return Ok(()) };
        let view = StateView::full(&s);
        let u = s.unit(id).unwrap();
        let rng = GameRng::seed_from_u64(seed);
        let off = passagg_decide(&view, u, &mut rng.clone(), Some(Posture::Offensive));
        let def = passagg_decide(&view, u, &mut rng.clone(), Some(Posture::Defensive));
        prop_assert_eq!(off, OperatorModel::Agg.decide(&view, id, &mut rng.clone()));
        prop_assert_eq!(def, OperatorModel::Pass.decide(&view, id, &mut rng.clone()));
    }

    #[test]
    fn deterministic_decide_ignores_rng(seed in any::<u64>(), steps in 0usize..40, m in 0usize..8) {
        let mut s = random_state(seed, 6, steps);
        s.config.deterministic = true;
        let Some(id) = s.current_unit() else { return Ok(()) };
        let view = StateView::full(&s);
        let a = model(m).decide(&view, id, &mut GameRng::seed_from_u64(1));
        let b = model(m).decide(&view, id, &mut GameRng::seed_from_u64(2));
        prop_assert_eq!(a, b);
    }
}
