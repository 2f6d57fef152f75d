//! Outcome models: the repeated reward law of each arm.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;

/// Reward law shared by every round of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutcomeModel {
    /// Arm `a` pays 1 with probability `means[a]`.
    Bernoulli { means: Vec<f64> },
    /// Arm `a` pays `N(means[a], variances[a])`.
    Gaussian { means: Vec<f64>, variances: Vec<f64> },
    /// Two arms over a finite context space: arm 1 succeeds with probability
    /// `effect + baseline[s]`, arm 0 with `baseline[s]`. Contexts are drawn
    /// from `context_probs`.
    ContextualBernoulli {
        effect: f64,
        baseline: Vec<f64>,
        context_probs: Vec<f64>,
    },
}

impl OutcomeModel {
    pub fn bernoulli(means: Vec<f64>) -> Result<Self> {
        let m = OutcomeModel::Bernoulli { means };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let m = OutcomeModel::Gaussian { means, variances };
        m.validate()?;
        Ok(m)
    }

    pub fn contextual_bernoulli(effect: f64, baseline: Vec<f64>, context_probs: Vec<f64>) -> Result<Self> {
        let m = OutcomeModel::ContextualBernoulli {
            effect,
            baseline,
            context_probs,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OutcomeModel::Bernoulli { means } => {
                if means.is_empty() {
                    return Err(invalid("means", "at least one arm"));
                }
                if let Some(m) = means.iter().find(|m| !(0.0..=1.0).contains(*m)) {
                    return Err(invalid("means", format!("bernoulli mean {m} outside [0, 1]")));
                }
            }
            OutcomeModel::Gaussian { means, variances } => {
                if means.is_empty() {
                    return Err(invalid("means", "at least one arm"));
                }
                if means.len() != variances.len() {
                    return Err(Error::LengthMismatch {
                        left: means.len(),
                        right: variances.len(),
                    });
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(invalid("means", "must be finite"));
                }
                if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                    return Err(invalid("variances", format!("variance {v} must be positive")));
                }
            }
            OutcomeModel::ContextualBernoulli {
                effect,
                baseline,
                context_probs,
            } => {
                if !(*effect > -1.0 && *effect < 1.0) {
                    return Err(invalid("effect", "must lie in (-1, 1)"));
                }
                if baseline.is_empty() || baseline.len() != context_probs.len() {
                    return Err(Error::LengthMismatch {
                        left: baseline.len(),
                        right: context_probs.len(),
                    });
                }
                let total: f64 = context_probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 || context_probs.iter().any(|p| *p < 0.0) {
                    return Err(invalid("context_probs", format!("not a probability vector (sum {total})")));
                }
                for &b in baseline {
                    let p1 = effect + b;
                    if !(0.0..=1.0).contains(&b) || !(0.0..=1.0).contains(&p1) {
                        return Err(invalid("baseline", format!("success probabilities {b} / {p1} leave [0, 1]")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn n_arms(&self) -> usize {
        match self {
            OutcomeModel::Bernoulli { means } => means.len(),
            OutcomeModel::Gaussian { means, .. } => means.len(),
            OutcomeModel::ContextualBernoulli { .. } => 2,
        }
    }

    pub fn is_contextual(&self) -> bool {
        matches!(self, OutcomeModel::ContextualBernoulli { .. })
    }

    pub fn n_contexts(&self) -> usize {
        match self {
            OutcomeModel::ContextualBernoulli { baseline, .. } => baseline.len(),
            _ => 0,
        }
    }

    /// Mean reward of `arm`, averaged over contexts for contextual models.
    pub fn arm_mean(&self, arm: usize) -> f64 {
        match self {
            OutcomeModel::Bernoulli { means } => means[arm],
            OutcomeModel::Gaussian { means, .. } => means[arm],
            OutcomeModel::ContextualBernoulli {
                effect,
                baseline,
                context_probs,
            } => {
                let base: f64 = baseline.iter().zip(context_probs).map(|(b, q)| b * q).sum();
                if arm == 1 {
                    base + effect
                } else {
                    base
                }
            }
        }
    }

    /// Variance of the reward of `arm` (pooled over contexts).
    pub fn arm_variance(&self, arm: usize) -> f64 {
        match self {
            OutcomeModel::Bernoulli { means } => means[arm] * (1.0 - means[arm]),
            OutcomeModel::Gaussian { variances, .. } => variances[arm],
            OutcomeModel::ContextualBernoulli { .. } => {
                let m = self.arm_mean(arm);
                m * (1.0 - m)
            }
        }
    }

    /// Success probability of `arm` in `context` for the contextual model.
    pub fn success_probability(&self, arm: usize, context: usize) -> f64 {
        match self {
            OutcomeModel::ContextualBernoulli { effect, baseline, .. } => {
                if arm == 1 {
                    effect + baseline[context]
                } else {
                    baseline[context]
                }
            }
            other => other.arm_mean(arm),
        }
    }

    /// Draws a context for the contextual model; `None` otherwise.
    pub fn sample_context(&self, rng: &mut RngStream) -> Option<usize> {
        match self {
            OutcomeModel::ContextualBernoulli { context_probs, .. } => Some(rng.categorical(context_probs)),
            _ => None,
        }
    }

    /// Draws one reward for `arm` (in `context` when the model is contextual).
    pub fn sample_outcome(&self, arm: usize, context: Option<usize>, rng: &mut RngStream) -> Result<f64> {
        let k = self.n_arms();
        if arm >= k {
            return Err(Error::ArmOutOfRange { arm, n_arms: k });
        }
        Ok(match self {
            OutcomeModel::Bernoulli { means } => f64::from(u8::from(rng.bernoulli(means[arm]))),
            OutcomeModel::Gaussian { means, variances } => rng.normal(means[arm], variances[arm].sqrt()),
            OutcomeModel::ContextualBernoulli { baseline, .. } => {
                let s = context.ok_or(Error::MissingContext)?;
                if s >= baseline.len() {
                    return Err(Error::ContextOutOfRange {
                        context: s,
                        n_contexts: baseline.len(),
                    });
                }
                f64::from(u8::from(rng.bernoulli(self.success_probability(arm, s))))
            }
        })
    }

    /// Short stable identifier used in serialized trajectories and tables.
    pub fn id(&self) -> String {
        fn list(v: &[f64]) -> String {
            v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
        }
        match self {
            OutcomeModel::Bernoulli { means } => format!("bernoulli({})", list(means)),
            OutcomeModel::Gaussian { means, variances } => {
                format!("gaussian({};{})", list(means), list(variances))
            }
            OutcomeModel::ContextualBernoulli {
                effect,
                baseline,
                context_probs,
            } => format!("contextual-bernoulli({effect};{};{})", list(baseline), list(context_probs)),
        }
    }
}
