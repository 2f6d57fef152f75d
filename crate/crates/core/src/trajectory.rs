//! Append-only record of an experiment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One round of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub round: u64,
    pub context: Option<usize>,
    pub action: usize,
    /// Probability the design gave to the realized action.
    pub propensity: f64,
    pub reward: f64,
    /// 1-based batch number for batched designs, 0 otherwise.
    pub batch: u32,
}

/// Realized history of an experiment.
///
/// Steps can only be appended. The full propensity vector of every round is
/// stored next to the step, as emitted by the design at sampling time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    n_arms: usize,
    steps: Vec<Step>,
    propensities: Vec<f64>,
    arm_counts: Vec<u64>,
    exhausted: bool,
}

impl Trajectory {
    pub fn new(n_arms: usize) -> Self {
        Self::with_capacity(n_arms, 0)
    }

    pub fn with_capacity(n_arms: usize, rounds: usize) -> Self {
        Trajectory {
            n_arms,
            steps: Vec::with_capacity(rounds),
            propensities: Vec::with_capacity(rounds * n_arms),
            arm_counts: vec![0; n_arms],
            exhausted: false,
        }
    }

    /// Empties the trajectory while keeping its allocations.
    pub fn clear(&mut self) {
        self.steps.clear();
        self.propensities.clear();
        self.arm_counts.iter_mut().for_each(|c| *c = 0);
        self.exhausted = false;
    }

    /// Appends a round. `propensities` is the full action distribution the
    /// design emitted; the realized propensity is `propensities[action]`.
    pub fn record_step(
        &mut self,
        round: u64,
        context: Option<usize>,
        action: usize,
        propensities: &[f64],
        reward: f64,
        batch: u32,
    ) -> Result<()> {
        let previous = self.steps.last().map_or(0, |s| s.round);
        if round != previous + 1 {
            return Err(Error::NonMonotoneRound { previous, got: round });
        }
        if action >= self.n_arms {
            return Err(Error::ArmOutOfRange {
                arm: action,
                n_arms: self.n_arms,
            });
        }
        if propensities.len() != self.n_arms {
            return Err(Error::LengthMismatch {
                left: propensities.len(),
                right: self.n_arms,
            });
        }
        let p = propensities[action];
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidPropensity(p));
        }
        let total: f64 = propensities.iter().sum();
        if (total - 1.0).abs() > 1e-9 || propensities.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::PropensitySum(total));
        }
        self.steps.push(Step {
            round,
            context,
            action,
            propensity: p,
            reward,
            batch,
        });
        self.propensities.extend_from_slice(propensities);
        self.arm_counts[action] += 1;
        Ok(())
    }

    pub(crate) fn mark_exhausted(&mut self) {
        self.exhausted = true;
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// Round at which the experiment stopped (its length).
    pub fn stopped_at(&self) -> u64 {
        self.steps.len() as u64
    }

    /// True when a data-dependent stopping rule hit its maximum horizon.
    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    /// Full propensity vector of the step at position `i` (round `i + 1`).
    pub fn propensity_vector(&self, i: usize) -> &[f64] {
        &self.propensities[i * self.n_arms..(i + 1) * self.n_arms]
    }

    /// Number of pulls `N_a(τ)` of each arm.
    pub fn arm_counts(&self) -> &[u64] {
        &self.arm_counts
    }

    /// Rounds `1..=t` as a new trajectory.
    pub fn prefix(&self, t: usize) -> Trajectory {
        let t = t.min(self.len());
        let mut out = Trajectory::with_capacity(self.n_arms, t);
        out.steps.extend_from_slice(&self.steps[..t]);
        out.propensities.extend_from_slice(&self.propensities[..t * self.n_arms]);
        for s in &out.steps {
            out.arm_counts[s.action] += 1;
        }
        out
    }

    pub fn to_record(&self, seed: u64, stream: u64, design: &str, model: &str) -> TrajectoryRecord {
        TrajectoryRecord {
            seed,
            stream,
            design: design.to_string(),
            model: model.to_string(),
            n_arms: self.n_arms,
            stopped_at: self.stopped_at(),
            exhausted: self.exhausted,
            steps: self
                .steps
                .iter()
                .enumerate()
                .map(|(i, s)| StepRecord {
                    t: s.round,
                    context: s.context,
                    action: s.action,
                    propensity: s.propensity,
                    propensities: self.propensity_vector(i).to_vec(),
                    reward: s.reward,
                    batch: s.batch,
                })
                .collect(),
        }
    }

    pub fn from_record(record: &TrajectoryRecord) -> Result<Trajectory> {
        let mut traj = Trajectory::with_capacity(record.n_arms, record.steps.len());
        for s in &record.steps {
            traj.record_step(s.t, s.context, s.action, &s.propensities, s.reward, s.batch)?;
            if traj.steps.last().map(|x| x.propensity) != Some(s.propensity) {
                return Err(Error::InvalidPropensity(s.propensity));
            }
        }
        traj.exhausted = record.exhausted;
        Ok(traj)
    }
}

/// Serialized form: one JSON object per replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub stream: u64,
    pub design: String,
    pub model: String,
    pub n_arms: usize,
    pub stopped_at: u64,
    pub exhausted: bool,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub t: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<usize>,
    pub action: usize,
    pub propensity: f64,
    pub propensities: Vec<f64>,
    pub reward: f64,
    pub batch: u32,
}

impl TrajectoryRecord {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}
