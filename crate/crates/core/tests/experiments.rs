use adaptinf::confseq::{Boundary, BoundaryKind};
use adaptinf::design::floor_at;
use adaptinf::mc::{replicate, with_threads};
use adaptinf::rng::derive_stream;
use adaptinf::thompson::beta_greater;
use adaptinf::{clip, run_experiment, CsTarget, Design, OutcomeModel, StoppingRule, ThompsonPrior, Trajectory, TrajectoryRecord};
use proptest::prelude::*;
use rand_distr::{Beta, Distribution};

fn designs() -> Vec<Design> {
    vec![
        Design::Uniform,
        Design::ExploreThenCommit { t0: 10, epsilon: 0.1 },
        Design::EpsilonGreedy { c: 1.0 },
        Design::ThompsonBernoulli { a0: 1.0, b0: 1.0 },
        Design::ThompsonGaussian {
            sigma2: 1.0,
            prior_mean: 0.0,
            prior_var: None,
        },
        Design::BatchedThompson {
            batch_size: 7,
            max_batches: 5,
            prior: ThompsonPrior::Beta { a0: 1.0, b0: 1.0 },
        },
        clip(Design::ThompsonBernoulli { a0: 1.0, b0: 1.0 }, 0.1, 0.5),
        clip(Design::ExploreThenCommit { t0: 5, epsilon: 0.05 }, 0.2, 0.3),
    ]
}

fn bern() -> OutcomeModel {
    OutcomeModel::bernoulli(vec![0.35, 0.6]).unwrap()
}

#[test]
fn replay_reproduces_trajectories_and_propensities() {
    let stopping = StoppingRule::FixedHorizon { horizon: 60 };
    for d in designs() {
        let a = run_experiment(&bern(), &d, &stopping, &mut derive_stream(3, 14)).unwrap();
        let b = run_experiment(&bern(), &d, &stopping, &mut derive_stream(3, 14)).unwrap();
        assert_eq!(a, b, "{}", d.id());
        for t in 0..a.len() {
            let replayed = d.replay_propensities(&a.prefix(t), 0, None).unwrap();
            let recorded = a.propensity_vector(t);
            for (x, y) in replayed.iter().zip(recorded) {
                assert_eq!(x.to_bits(), y.to_bits(), "{} round {}", d.id(), t + 1);
            }
        }
        let rec = a.to_record(3, 14, &d.id(), &bern().id());
        let back = Trajectory::from_record(&TrajectoryRecord::from_json(&rec.to_json().unwrap()).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}

#[test]
fn contextual_replay() {
    let model = OutcomeModel::contextual_bernoulli(0.1, vec![0.2, 0.4, 0.7], vec![0.2, 0.3, 0.5]).unwrap();
    let d = Design::ContextualThompson {
        batch_size: 5,
        a0: 1.0,
        b0: 1.0,
    };
    let traj = run_experiment(&model, &d, &StoppingRule::FixedHorizon { horizon: 80 }, &mut derive_stream(5, 5)).unwrap();
    for t in 0..traj.len() {
        let s = traj.steps()[t];
        let p = d.replay_propensities(&traj.prefix(t), 3, s.context).unwrap();
        assert_eq!(p, traj.propensity_vector(t));
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let d = Design::ThompsonBernoulli { a0: 1.0, b0: 1.0 };
    let stopping = StoppingRule::FixedHorizon { horizon: 50 };
    let run = || replicate(0..64, |r| run_experiment(&bern(), &d, &stopping, &mut derive_stream(8, r)).unwrap());
    assert_eq!(with_threads(1, run), with_threads(3, run));
}

#[test]
fn fixed_design_monte_carlo_means() {
    let model = bern();
    let stopping = StoppingRule::FixedHorizon { horizon: 1 };
    let reps = 100_000u64;
    let trajs = replicate(0..reps, |r| {
        run_experiment(&model, &Design::Uniform, &stopping, &mut derive_stream(2, r)).unwrap()
    });
    for arm in 0..2 {
        let rewards: Vec<f64> = trajs
            .iter()
            .flat_map(|t| t.steps().iter().filter(|s| s.action == arm).map(|s| s.reward).collect::<Vec<_>>())
            .collect();
        let n = rewards.len() as f64;
        let m = rewards.iter().sum::<f64>() / n;
        let mu = model.arm_mean(arm);
        assert!((m - mu).abs() < 4.0 * (mu * (1.0 - mu) / n).sqrt());
    }
    let gauss = OutcomeModel::gaussian(vec![-1.0, 2.0], vec![1.0, 4.0]).unwrap();
    let stopping = StoppingRule::FixedHorizon { horizon: 10 };
    let sums = replicate(0..20_000, |r| {
        let t = run_experiment(&gauss, &Design::Uniform, &stopping, &mut derive_stream(4, r)).unwrap();
        t.steps().iter().filter(|s| s.action == 1).map(|s| s.reward).collect::<Vec<_>>()
    });
    let all: Vec<f64> = sums.into_iter().flatten().collect();
    let n = all.len() as f64;
    let m = all.iter().sum::<f64>() / n;
    assert!((m - 2.0).abs() < 4.0 * (4.0 / n).sqrt());
}

#[test]
fn etc_commits_after_exploration() {
    let model = OutcomeModel::gaussian(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let d = Design::ExploreThenCommit { t0: 10, epsilon: 0.1 };
    let traj = run_experiment(&model, &d, &StoppingRule::FixedHorizon { horizon: 100 }, &mut derive_stream(1, 0)).unwrap();
    let after: Vec<&[f64]> = (10..100).map(|i| traj.propensity_vector(i)).collect();
    assert!(after.iter().all(|p| *p == after[0]));
    assert!(after[0] == [0.9, 0.1] || after[0] == [0.1, 0.9]);
    assert!((0..10).all(|i| traj.propensity_vector(i) == [0.5, 0.5]));
}

#[test]
fn batched_propensities_change_only_between_batches() {
    let d = Design::BatchedThompson {
        batch_size: 25,
        max_batches: 100,
        prior: ThompsonPrior::Beta { a0: 1.0, b0: 1.0 },
    };
    let traj = run_experiment(&bern(), &d, &StoppingRule::FixedHorizon { horizon: 200 }, &mut derive_stream(9, 1)).unwrap();
    for (i, s) in traj.steps().iter().enumerate().skip(1) {
        if s.batch == traj.steps()[i - 1].batch {
            assert_eq!(traj.propensity_vector(i), traj.propensity_vector(i - 1));
        }
    }
    assert_eq!(traj.steps()[0].batch, 1);
    assert_eq!(traj.steps()[199].batch, 8);
}

#[test]
fn thompson_probability_matches_beta_sampling() {
    let exact = beta_greater(10.0, 2.0, 2.0, 10.0).unwrap();
    let x = Beta::new(10.0, 2.0).unwrap();
    let y = Beta::new(2.0, 10.0).unwrap();
    let mut rng = derive_stream(77, 0);
    let n = 10_000_000u64;
    let hits = (0..n).filter(|_| x.sample(&mut rng) > y.sample(&mut rng)).count() as f64;
    let p = hits / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((p - exact).abs() < 3.0 * se.max(1e-7), "{p} vs {exact}");
}

#[test]
fn cs_stop_with_never_excluding_value_exhausts() {
    let model = OutcomeModel::gaussian(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let boundary = Boundary::new(BoundaryKind::stitched(), 0.05, 100, 1.0).unwrap();
    let stopping = StoppingRule::CsExclusion {
        target: CsTarget::ArmMean { arm: 0 },
        value: 0.0,
        boundary,
        max_t: 300,
    };
    let traj = run_experiment(&model, &Design::Uniform, &stopping, &mut derive_stream(2, 2)).unwrap();
    assert_eq!(traj.len(), 300);
    assert!(traj.exhausted());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trajectories_are_well_formed(seed in any::<u64>(), which in 0usize..8, horizon in 1u64..120) {
        let d = designs()[which].clone();
        let traj = run_experiment(&bern(), &d, &StoppingRule::FixedHorizon { horizon }, &mut derive_stream(seed, 0)).unwrap();
        prop_assert_eq!(traj.len() as u64, horizon);
        prop_assert_eq!(traj.arm_counts().iter().sum::<u64>(), horizon);
        for (i, s) in traj.steps().iter().enumerate() {
            prop_assert_eq!(s.round, i as u64 + 1);
            let p = traj.propensity_vector(i);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(s.propensity > 0.0 && s.propensity <= 1.0);
            if let Design::Clipped { c, gamma, .. } = &d {
                let f = floor_at(*c, *gamma, s.round);
                prop_assert!(p.iter().all(|x| *x >= f - 1e-12));
            }
        }
    }
}
