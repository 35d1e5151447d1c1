use std::sync::Arc;

use rlqite::dppo::{greedy_rollout, train, TrainConfig, TrainOptions};
use rlqite::env::{EnvConfig, OrderingEnv, RewardMode, ToyBandit};
use rlqite::models::{build_sk, build_tfim, ground_solution, SkSpec, TfimSpec, DEFAULT_DEGENERACY_TOL};
use rlqite::qite::{replay_schedule, run_qite, standard_schedule, OrderingSchedule, PathTable, QiteConfig};
use rlqite::Statevector;

fn bandit(seed: u64, iterations: usize) -> Vec<f64> {
    let cfg = TrainConfig { iterations, seed, hidden: vec![64, 64], ..Default::default() };
    let out = train(
        &cfg,
        |_| ToyBandit::new(OrderingSchedule::new(3, vec![vec![2, 0, 1]])?, 2),
        &TrainOptions::default(),
    )
    .unwrap();
    out.state.curve.iter().map(|r| r.mean_reward).collect()
}

#[test]
fn bandit_reward_improves_across_windows() {
    let mut improving = 0;
    for seed in 0..5 {
        let curve = bandit(seed, 200);
        let windows: Vec<f64> = curve.chunks(50).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
        if windows.windows(2).all(|p| p[1] >= p[0] - 0.05) && windows[3] > windows[0] {
            improving += 1;
        }
    }
    assert!(improving >= 4, "only {improving}/5 seeds improved");
}

#[test]
fn bandit_converges() {
    let curve = bandit(0, 200);
    let tail = curve[150..].iter().sum::<f64>() / 50.0;
    assert!(tail > 0.9, "tail mean reward {tail}");
}

#[test]
fn bundled_fixtures_resolve() {
    let tfim = build_tfim(&TfimSpec::new(4, 1.0, 1.0).unwrap()).unwrap();
    let t2 = replay_schedule(&PathTable::bundled("table2").unwrap(), &tfim).unwrap();
    assert_eq!((t2.num_steps(), t2.num_terms()), (4, 7));

    let spec = SkSpec::bundled_six_qubit();
    assert_eq!(spec.num_qubits, 6);
    assert_eq!(SkSpec::from_json(&spec.to_json()).unwrap(), spec);
    let sk = build_sk(&spec).unwrap();
    let t4 = replay_schedule(&PathTable::bundled("table4").unwrap(), &sk).unwrap();
    assert_eq!((t4.num_steps(), t4.num_terms()), (6, 15));
}

#[test]
fn replay_beats_standard_on_tfim() {
    let h = build_tfim(&TfimSpec::new(4, 1.0, 1.0).unwrap()).unwrap();
    let init = Statevector::plus_state(4).unwrap();
    let q = QiteConfig::new(0.9, 4, 2).unwrap();
    let replay = replay_schedule(&PathTable::bundled("table2").unwrap(), &h).unwrap();
    let (s_rep, _) = run_qite(&h, &init, &q, &replay, None).unwrap();
    let (s_std, _) = run_qite(&h, &init, &q, &standard_schedule(&h, 4).unwrap(), None).unwrap();
    assert!(s_rep.expectation(&h).unwrap() < s_std.expectation(&h).unwrap());
}

#[test]
fn trained_tfim_agent_never_reports_worse_than_greedy_best() {
    let h = Arc::new(build_tfim(&TfimSpec::new(2, 1.0, 1.0).unwrap()).unwrap());
    let init = Arc::new(Statevector::plus_state(2).unwrap());
    let q = QiteConfig::new(1.0, 2, 2).unwrap();
    let envc = EnvConfig::new(h.clone(), init, q, 4, RewardMode::Shaped).unwrap();
    let cfg = TrainConfig { iterations: 100, seed: 3, hidden: vec![32, 32], ..Default::default() };
    let out = train(&cfg, |_| OrderingEnv::new(envc.clone()), &TrainOptions::default()).unwrap();
    let best = out.state.best.unwrap();
    assert!((envc.evaluate(&best.schedule).unwrap() - best.energy).abs() < 1e-12);
    let mut env = OrderingEnv::new(envc.clone()).unwrap();
    let g = greedy_rollout(&out.params, &mut env).unwrap();
    let gs = ground_solution(&h, DEFAULT_DEGENERACY_TOL).unwrap();
    assert!(g.energy.unwrap() >= gs.energy - 1e-12);
    assert_eq!(g.masks.len(), 4);
}
