//! Running one experiment.
//!
//! Each round draws, in this order and from the replication's own stream:
//! the context (contextual models only), one uniform for the action via the
//! inverse cdf of the design's propensity vector, then the reward.

use crate::design::Design;
use crate::error::{Error, Result};
use crate::model::OutcomeModel;
use crate::rng::RngStream;
use crate::stopping::StoppingRule;
use crate::trajectory::Trajectory;

/// Checks that model, design and stopping rule fit together.
pub fn check_compatible(model: &OutcomeModel, design: &Design, stopping: &StoppingRule) -> Result<()> {
    model.validate()?;
    design.validate(model)?;
    stopping.validate(model.n_arms())
}

/// Runs one experiment to its stopping time.
pub fn run_experiment(model: &OutcomeModel, design: &Design, stopping: &StoppingRule, rng: &mut RngStream) -> Result<Trajectory> {
    let mut traj = Trajectory::with_capacity(model.n_arms(), stopping.max_t().min(1 << 20) as usize);
    run_experiment_into(model, design, stopping, rng, &mut traj)?;
    Ok(traj)
}

/// Like [`run_experiment`] but reuses the allocation of `traj`, which is
/// cleared first.
pub fn run_experiment_into(
    model: &OutcomeModel,
    design: &Design,
    stopping: &StoppingRule,
    rng: &mut RngStream,
    traj: &mut Trajectory,
) -> Result<()> {
    check_compatible(model, design, stopping)?;
    let k = model.n_arms();
    if traj.n_arms() != k {
        *traj = Trajectory::new(k);
    }
    traj.clear();
    let mut policy = design.policy(k, model.n_contexts())?;
    let mut monitor = stopping.monitor(k);
    let max_t = stopping.max_t();
    let mut probs = vec![0.0; k];
    let mut t = 0u64;
    while t < max_t {
        t += 1;
        let context = model.sample_context(rng);
        policy.propensities(t, context, &mut probs)?;
        let action = rng.categorical(&probs);
        if probs[action] <= 0.0 {
            return Err(Error::ZeroPropensity { arm: action, round: t });
        }
        let reward = model.sample_outcome(action, context, rng)?;
        traj.record_step(t, context, action, &probs, reward, policy.batch(t))?;
        policy.update(context, action, reward);
        if monitor.observe(t, action, reward) {
            if t == max_t && matches!(stopping, StoppingRule::CsExclusion { .. }) {
                let excluded = monitor.interval().is_some_and(|iv| match stopping {
                    StoppingRule::CsExclusion { value, .. } => !iv.contains(*value),
                    _ => false,
                });
                if !excluded {
                    traj.mark_exhausted();
                }
            }
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confseq::{Boundary, BoundaryKind};
    use crate::rng::derive_stream;
    use crate::stopping::CsTarget;

    #[test]
    fn uniform_fixed_horizon() {
        let model = OutcomeModel::bernoulli(vec![0.5, 0.5]).unwrap();
        let traj = run_experiment(
            &model,
            &Design::Uniform,
            &StoppingRule::FixedHorizon { horizon: 5 },
            &mut derive_stream(1, 0),
        )
        .unwrap();
        assert_eq!(traj.len(), 5);
        assert!(traj.steps().iter().all(|s| s.propensity == 0.5));
        assert!(!traj.exhausted());
    }

    #[test]
    fn never_excluding_rule_exhausts() {
        let model = OutcomeModel::gaussian(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let boundary = Boundary::new(BoundaryKind::NormalMixture { rho: None }, 0.05, 1, 1.0).unwrap();
        // A value far outside any plausible interval would stop immediately;
        // a tiny alpha and a value at the truth almost never stops early.
        let stop = StoppingRule::CsExclusion {
            target: CsTarget::ArmMean { arm: 0 },
            value: 0.0,
            boundary: Boundary { alpha: 1e-12, ..boundary },
            max_t: 200,
        };
        let traj = run_experiment(&model, &Design::Uniform, &stop, &mut derive_stream(2, 0)).unwrap();
        assert_eq!(traj.len(), 200);
        assert!(traj.exhausted());
    }

    #[test]
    fn incompatible_design_rejected() {
        let model = OutcomeModel::gaussian(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let d = Design::ThompsonBernoulli { a0: 1.0, b0: 1.0 };
        let r = run_experiment(&model, &d, &StoppingRule::FixedHorizon { horizon: 3 }, &mut derive_stream(0, 0));
        assert!(matches!(r, Err(Error::Incompatible { .. })));
    }
}
