use hexstrat_core::env::{EnvConfig, HexEnv};
use hexstrat_core::multimodel::Echelon;
use hexstrat_core::scenario::ScenarioParams;
use proptest::prelude::*;

fn episode(env: &mut HexEnv, policy: u64) -> (usize, f64, f64) {
    let first = env.reset().unwrap();
    let shape = first.shape();
    let n = env.n_actions();
    let (mut steps, mut sum) = (0usize, 0.0);
    let mut k = policy;
    while !env.is_done() {
        k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let r = env.step((k >> 33) as usize % n).unwrap();
        assert_eq!(r.obs.shape(), shape);
        assert!(r.info.phase <= env.state().unwrap().num_phases);
        sum += r.info.raw_delta;
        steps += 1;
    }
    (steps, sum, env.state().unwrap().game_score())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn operator_episode_accounting(seed in any::<u64>(), policy in any::<u64>(), len in 3i32..8) {
        let mut cfg = EnvConfig::new(Echelon::Operator, ScenarioParams::standard(len));
        cfg.seed = seed;
        let mut env = HexEnv::new(cfg).unwrap();
        let (_, sum, score) = episode(&mut env, policy);
        prop_assert_eq!(sum, score);
    }

    #[test]
    fn manager_episodes_no_longer_than_operator(seed in any::<u64>(), policy in any::<u64>()) {
        let mut mcfg = EnvConfig::manager().deterministic(true);
        mcfg.seed = seed;
        let mut ocfg = EnvConfig::new(Echelon::Operator, mcfg.scenario).deterministic(true);
        ocfg.seed = seed;
        let (ms, msum, mscore) = episode(&mut HexEnv::new(mcfg).unwrap(), policy);
        let (os, _, _) = episode(&mut HexEnv::new(ocfg).unwrap(), policy);
        prop_assert_eq!(msum, mscore);
        prop_assert!(ms <= os);
    }
}
