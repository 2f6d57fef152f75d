//! Stopping rules.

use serde::{Deserialize, Serialize};

use std::sync::Arc;

use crate::confseq::{ate_combine, mean_cs, mean_cs_with_radius, radius_table, Boundary, Interval, RADIUS_TABLE_LIMIT};
use crate::error::{invalid, Result};

/// Quantity monitored by a confidence-sequence stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CsTarget {
    /// Mean of one arm.
    ArmMean { arm: usize },
    /// `mean(treated) - mean(control)`.
    Ate { treated: usize, control: usize },
}

/// When an experiment ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StoppingRule {
    FixedHorizon {
        horizon: u64,
    },
    /// Stops at the first round whose confidence sequence for `target`
    /// excludes `value`, or at `max_t`.
    CsExclusion {
        target: CsTarget,
        value: f64,
        boundary: Boundary,
        max_t: u64,
    },
}

impl StoppingRule {
    pub fn max_t(&self) -> u64 {
        match self {
            StoppingRule::FixedHorizon { horizon } => *horizon,
            StoppingRule::CsExclusion { max_t, .. } => *max_t,
        }
    }

    pub fn id(&self) -> String {
        match self {
            StoppingRule::FixedHorizon { horizon } => format!("fixed({horizon})"),
            StoppingRule::CsExclusion {
                target,
                value,
                boundary,
                max_t,
            } => {
                let tgt = match target {
                    CsTarget::ArmMean { arm } => format!("mean{arm}"),
                    CsTarget::Ate { treated, control } => format!("ate{treated}-{control}"),
                };
                format!(
                    "cs-exclusion({tgt}={value},{},alpha={},max={max_t})",
                    boundary.kind.name(),
                    boundary.alpha
                )
            }
        }
    }

    pub fn validate(&self, n_arms: usize) -> Result<()> {
        match self {
            StoppingRule::FixedHorizon { .. } => Ok(()),
            StoppingRule::CsExclusion { target, boundary, .. } => {
                boundary.validate()?;
                let ok = match *target {
                    CsTarget::ArmMean { arm } => arm < n_arms,
                    CsTarget::Ate { treated, control } => treated < n_arms && control < n_arms && treated != control,
                };
                if !ok {
                    return Err(invalid("target", "arm index out of range"));
                }
                Ok(())
            }
        }
    }

    /// Fresh monitor. Confidence-sequence rules look radii up in a table
    /// shared across experiments when `max_t` allows.
    pub fn monitor(&self, n_arms: usize) -> StopMonitor<'_> {
        let table = match self {
            StoppingRule::CsExclusion { boundary, max_t, .. } if *max_t <= RADIUS_TABLE_LIMIT => radius_table(boundary, *max_t).ok(),
            _ => None,
        };
        StopMonitor {
            rule: self,
            counts: vec![0; n_arms],
            sums: vec![0.0; n_arms],
            table,
        }
    }
}

/// Running state of a stopping rule within one experiment.
#[derive(Debug, Clone)]
pub struct StopMonitor<'a> {
    rule: &'a StoppingRule,
    counts: Vec<u64>,
    sums: Vec<f64>,
    table: Option<Arc<Vec<f64>>>,
}

impl StopMonitor<'_> {
    /// Current interval of a confidence-sequence rule.
    pub fn interval(&self) -> Option<Interval> {
        match self.rule {
            StoppingRule::FixedHorizon { .. } => None,
            StoppingRule::CsExclusion { target, boundary, .. } => {
                let cs = |arm: usize| {
                    let n = self.counts[arm];
                    match &self.table {
                        Some(t) if (n as usize) < t.len() => mean_cs_with_radius(self.sums[arm], n, t[n as usize]),
                        _ => mean_cs(self.sums[arm], n, boundary),
                    }
                };
                Some(match *target {
                    CsTarget::ArmMean { arm } => cs(arm),
                    CsTarget::Ate { treated, control } => ate_combine(cs(treated), cs(control)),
                })
            }
        }
    }

    /// Records round `t` and reports whether the experiment stops after it.
    pub fn observe(&mut self, t: u64, action: usize, reward: f64) -> bool {
        self.counts[action] += 1;
        self.sums[action] += reward;
        match self.rule {
            StoppingRule::FixedHorizon { horizon } => t >= *horizon,
            StoppingRule::CsExclusion { value, max_t, .. } => {
                if t >= *max_t {
                    return true;
                }
                let iv = self.interval().expect("confidence-sequence rule");
                !iv.contains(*value)
            }
        }
    }
}
