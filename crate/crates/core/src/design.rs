//! Adaptive allocation designs.
//!
//! A [`Design`] is a parameter set; [`Design::policy`] turns it into a
//! [`Policy`], the incremental state that maps the history to the action
//! distribution `g_t` of the next round. Propensities at round `t` depend only
//! on rounds `1..t` (and the current context), so replaying a stored prefix
//! through a fresh policy reproduces them bit for bit
//! ([`Design::replay_propensities`]).
//!
//! Arms are 0-based. Ties in empirical means go to the lowest index and arms
//! with no pulls count as mean `-inf`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::OutcomeModel;
use crate::thompson::{beta_propensities, gaussian_propensities, BetaPairTracker};
use crate::trajectory::Trajectory;

fn one() -> f64 {
    1.0
}

/// Posterior family for batched Thompson sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThompsonPrior {
    /// Beta(a0, b0) on each Bernoulli success probability.
    Beta {
        #[serde(default = "one")]
        a0: f64,
        #[serde(default = "one")]
        b0: f64,
    },
    /// N(prior_mean, prior_var) on each arm mean, rewards N(mean, sigma2).
    Gaussian {
        sigma2: f64,
        #[serde(default)]
        prior_mean: f64,
        /// Defaults to `10 * sigma2`.
        #[serde(default)]
        prior_var: Option<f64>,
    },
}

impl Default for ThompsonPrior {
    fn default() -> Self {
        ThompsonPrior::Beta { a0: 1.0, b0: 1.0 }
    }
}

/// Allocation rule specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Design {
    /// Equal probability on every arm.
    Uniform,
    /// Two arms: equiprobable for `t0` rounds, then `1 - epsilon` on the
    /// empirical leader of rounds `1..=t0` and `epsilon` on the other arm.
    ExploreThenCommit { t0: u64, epsilon: f64 },
    /// `eps_t = min(1, c / sqrt(t))` spread uniformly, the rest on the
    /// current empirical leader.
    EpsilonGreedy { c: f64 },
    /// Thompson sampling with Beta(a0, b0) priors, updated every round.
    ThompsonBernoulli {
        #[serde(default = "one")]
        a0: f64,
        #[serde(default = "one")]
        b0: f64,
    },
    /// Thompson sampling for Gaussian rewards with known variance.
    ThompsonGaussian {
        sigma2: f64,
        #[serde(default)]
        prior_mean: f64,
        #[serde(default)]
        prior_var: Option<f64>,
    },
    /// Thompson sampling whose propensities are frozen within batches of
    /// `batch_size` rounds and updated on completed batches only. After
    /// `max_batches` batches the last distribution is kept.
    BatchedThompson {
        batch_size: u64,
        max_batches: u64,
        #[serde(default)]
        prior: ThompsonPrior,
    },
    /// Two-arm Thompson sampling with independent Beta posteriors per
    /// context, batched like [`Design::BatchedThompson`] (`batch_size = 1`
    /// updates every round).
    ContextualThompson {
        #[serde(default = "one_u64")]
        batch_size: u64,
        #[serde(default = "one")]
        a0: f64,
        #[serde(default = "one")]
        b0: f64,
    },
    /// Inner design with every arm probability floored at `c * t^(-gamma)`.
    Clipped { inner: Box<Design>, c: f64, gamma: f64 },
}

fn one_u64() -> u64 {
    1
}

/// Wraps `design` with the floor `c * t^(-gamma)`.
pub fn clip(design: Design, c: f64, gamma: f64) -> Design {
    Design::Clipped {
        inner: Box::new(design),
        c,
        gamma,
    }
}

/// Applies the floor `f` to `p` in place: arms below it are raised to `f`
/// and the excess is taken from the other arms in proportion to their mass,
/// repeating until no arm is below the floor.
pub fn apply_floor(p: &mut [f64], f: f64) -> Result<()> {
    let k = p.len();
    if f * k as f64 > 1.0 + 1e-12 {
        return Err(invalid("c", format!("floor {f} on {k} arms exceeds total mass")));
    }
    if p.iter().all(|&x| x >= f) {
        return Ok(());
    }
    let mut clipped = vec![false; k];
    loop {
        let mut changed = false;
        for a in 0..k {
            if !clipped[a] && p[a] < f {
                clipped[a] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let n_clipped = clipped.iter().filter(|c| **c).count();
        let free: f64 = (0..k).filter(|&a| !clipped[a]).map(|a| p[a]).sum();
        let scale = (1.0 - n_clipped as f64 * f) / free;
        for a in 0..k {
            p[a] = if clipped[a] { f } else { p[a] * scale };
        }
    }
    Ok(())
}

/// Floor value `c * t^(-gamma)`.
pub fn floor_at(c: f64, gamma: f64, t: u64) -> f64 {
    if gamma == 0.0 {
        c
    } else {
        c * (t as f64).powf(-gamma)
    }
}

/// ETC propensity vector at round `t` given the leader of rounds `1..=t0`.
pub fn etc_propensity(t: u64, t0: u64, epsilon: f64, leader: usize) -> [f64; 2] {
    if t <= t0 {
        [0.5, 0.5]
    } else if leader == 0 {
        [1.0 - epsilon, epsilon]
    } else {
        [epsilon, 1.0 - epsilon]
    }
}

/// ETC propensities at round `t` recomputed from a trajectory prefix.
pub fn etc_propensity_from_prefix(prefix: &Trajectory, t: u64, t0: u64, epsilon: f64) -> Result<[f64; 2]> {
    if prefix.n_arms() != 2 {
        return Err(invalid("n_arms", "explore-then-commit is defined for two arms"));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(invalid("epsilon", "must lie in (0, 0.5)"));
    }
    if t == 0 {
        return Err(invalid("t", "rounds start at 1"));
    }
    let mut stats = ArmStats::new(2);
    for s in prefix.steps().iter().take(t0.min(t - 1) as usize) {
        stats.update(s.action, s.reward);
    }
    Ok(etc_propensity(t, t0, epsilon, stats.leader()))
}

impl Design {
    /// Stable string id used in tables and serialized trajectories.
    pub fn id(&self) -> String {
        match self {
            Design::Uniform => "uniform".into(),
            Design::ExploreThenCommit { t0, epsilon } => format!("etc(t0={t0},eps={epsilon})"),
            Design::EpsilonGreedy { c } => format!("epsilon-greedy(c={c})"),
            Design::ThompsonBernoulli { a0, b0 } => format!("thompson-bernoulli(a0={a0},b0={b0})"),
            Design::ThompsonGaussian {
                sigma2,
                prior_mean,
                prior_var,
            } => format!(
                "thompson-gaussian(sigma2={sigma2},m0={prior_mean},v0={})",
                prior_var.unwrap_or(10.0 * sigma2)
            ),
            Design::BatchedThompson {
                batch_size,
                max_batches,
                prior,
            } => {
                let p = match prior {
                    ThompsonPrior::Beta { a0, b0 } => format!("beta({a0},{b0})"),
                    ThompsonPrior::Gaussian {
                        sigma2,
                        prior_mean,
                        prior_var,
                    } => format!("gaussian({sigma2},{prior_mean},{})", prior_var.unwrap_or(10.0 * sigma2)),
                };
                format!("batched-thompson(n={batch_size},b={max_batches},{p})")
            }
            Design::ContextualThompson { batch_size, a0, b0 } => {
                format!("contextual-thompson(n={batch_size},a0={a0},b0={b0})")
            }
            Design::Clipped { inner, c, gamma } => format!("clip({},c={c},gamma={gamma})", inner.id()),
        }
    }

    /// Innermost non-clip design.
    pub fn base(&self) -> &Design {
        match self {
            Design::Clipped { inner, .. } => inner.base(),
            d => d,
        }
    }

    pub fn is_contextual(&self) -> bool {
        matches!(self.base(), Design::ContextualThompson { .. })
    }

    /// Checks parameters and compatibility with `model`.
    pub fn validate(&self, model: &OutcomeModel) -> Result<()> {
        let k = model.n_arms();
        let incompatible = || Error::Incompatible {
            design: self.id(),
            model: model.id(),
        };
        match self {
            Design::Clipped { inner, c, gamma } => {
                if !(*c > 0.0 && *c * k as f64 <= 1.0 + 1e-12) {
                    return Err(invalid("c", format!("must lie in (0, 1/K] with K = {k}")));
                }
                if !(0.0..1.0).contains(gamma) {
                    return Err(invalid("gamma", "must lie in [0, 1)"));
                }
                return inner.validate(model);
            }
            Design::Uniform => return Ok(()),
            _ => {}
        }
        if self.is_contextual() != model.is_contextual() {
            return Err(incompatible());
        }
        match self {
            Design::ExploreThenCommit { epsilon, .. } => {
                if k != 2 {
                    return Err(invalid("n_arms", "explore-then-commit is defined for two arms"));
                }
                if !(*epsilon > 0.0 && *epsilon < 0.5) {
                    return Err(invalid("epsilon", "must lie in (0, 0.5)"));
                }
            }
            Design::EpsilonGreedy { c } => {
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(invalid("c", "must be a non-negative number"));
                }
            }
            Design::ThompsonBernoulli { a0, b0 } => {
                check_beta_prior(*a0, *b0)?;
                if !matches!(model, OutcomeModel::Bernoulli { .. }) {
                    return Err(incompatible());
                }
            }
            Design::ThompsonGaussian { sigma2, prior_var, .. } => check_gaussian_prior(*sigma2, *prior_var)?,
            Design::BatchedThompson {
                batch_size,
                max_batches,
                prior,
            } => {
                if *batch_size == 0 || *max_batches == 0 {
                    return Err(invalid("batch_size", "batch size and count must be positive"));
                }
                match prior {
                    ThompsonPrior::Beta { a0, b0 } => {
                        check_beta_prior(*a0, *b0)?;
                        if !matches!(model, OutcomeModel::Bernoulli { .. }) {
                            return Err(incompatible());
                        }
                    }
                    ThompsonPrior::Gaussian { sigma2, prior_var, .. } => check_gaussian_prior(*sigma2, *prior_var)?,
                }
            }
            Design::ContextualThompson { batch_size, a0, b0 } => {
                if *batch_size == 0 {
                    return Err(invalid("batch_size", "must be positive"));
                }
                check_beta_prior(*a0, *b0)?;
            }
            Design::Uniform | Design::Clipped { .. } => unreachable!(),
        }
        Ok(())
    }

    /// Fresh policy state for a `n_arms`-armed problem with `n_contexts`
    /// contexts (0 when non-contextual).
    pub fn policy(&self, n_arms: usize, n_contexts: usize) -> Result<Policy> {
        let mut clips = Vec::new();
        let mut d = self;
        while let Design::Clipped { inner, c, gamma } = d {
            if !(*c > 0.0 && *c * n_arms as f64 <= 1.0 + 1e-12) {
                return Err(invalid("c", format!("must lie in (0, 1/K] with K = {n_arms}")));
            }
            if !(0.0..1.0).contains(gamma) {
                return Err(invalid("gamma", "must lie in [0, 1)"));
            }
            clips.push((*c, *gamma));
            d = inner;
        }
        // Innermost clip is applied first.
        clips.reverse();
        let core = match d {
            Design::Uniform => Core::Uniform,
            Design::ExploreThenCommit { t0, epsilon } => {
                if n_arms != 2 {
                    return Err(invalid("n_arms", "explore-then-commit is defined for two arms"));
                }
                if !(*epsilon > 0.0 && *epsilon < 0.5) {
                    return Err(invalid("epsilon", "must lie in (0, 0.5)"));
                }
                Core::Etc {
                    t0: *t0,
                    epsilon: *epsilon,
                    leader: None,
                }
            }
            Design::EpsilonGreedy { c } => Core::EpsilonGreedy { c: *c },
            Design::ThompsonBernoulli { a0, b0 } => {
                check_beta_prior(*a0, *b0)?;
                thompson_core(ThompsonPrior::Beta { a0: *a0, b0: *b0 }, 1, u64::MAX, n_arms)?
            }
            Design::ThompsonGaussian {
                sigma2,
                prior_mean,
                prior_var,
            } => {
                check_gaussian_prior(*sigma2, *prior_var)?;
                thompson_core(
                    ThompsonPrior::Gaussian {
                        sigma2: *sigma2,
                        prior_mean: *prior_mean,
                        prior_var: *prior_var,
                    },
                    1,
                    u64::MAX,
                    n_arms,
                )?
            }
            Design::BatchedThompson {
                batch_size,
                max_batches,
                prior,
            } => {
                if *batch_size == 0 || *max_batches == 0 {
                    return Err(invalid("batch_size", "batch size and count must be positive"));
                }
                thompson_core(prior.clone(), *batch_size, *max_batches, n_arms)?
            }
            Design::ContextualThompson { batch_size, a0, b0 } => {
                if n_arms != 2 {
                    return Err(invalid("n_arms", "contextual Thompson sampling is two-armed"));
                }
                if n_contexts == 0 {
                    return Err(Error::MissingContext);
                }
                if *batch_size == 0 {
                    return Err(invalid("batch_size", "must be positive"));
                }
                check_beta_prior(*a0, *b0)?;
                let tracker = BetaPairTracker::new((*a0, *b0), (*a0, *b0))?;
                Core::ContextualThompson {
                    batch_size: *batch_size,
                    trackers: vec![tracker; n_contexts],
                    frozen: vec![[0.5, 0.5]; n_contexts],
                    frozen_batch: 0,
                }
            }
            Design::Clipped { .. } => unreachable!(),
        };
        Ok(Policy {
            n_arms,
            core,
            clips,
            stats: ArmStats::new(n_arms),
        })
    }

    /// Propensity vector of round `prefix.len() + 1`, recomputed from scratch
    /// by feeding `prefix` through a fresh policy.
    pub fn replay_propensities(&self, prefix: &Trajectory, n_contexts: usize, context: Option<usize>) -> Result<Vec<f64>> {
        let mut policy = self.policy(prefix.n_arms(), n_contexts)?;
        let mut buf = vec![0.0; prefix.n_arms()];
        for s in prefix.steps() {
            // Lazy state (ETC leader, frozen batches) is set when queried.
            policy.propensities(s.round, s.context, &mut buf)?;
            policy.update(s.context, s.action, s.reward);
        }
        policy.propensities(prefix.len() as u64 + 1, context, &mut buf)?;
        Ok(buf)
    }
}

fn check_beta_prior(a0: f64, b0: f64) -> Result<()> {
    if !(a0 > 0.0 && b0 > 0.0 && a0.is_finite() && b0.is_finite()) {
        return Err(invalid("a0", "Beta prior parameters must be positive"));
    }
    Ok(())
}

fn check_gaussian_prior(sigma2: f64, prior_var: Option<f64>) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid("sigma2", "must be positive"));
    }
    if let Some(v) = prior_var {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid("prior_var", "must be positive"));
        }
    }
    Ok(())
}

fn thompson_core(prior: ThompsonPrior, batch_size: u64, max_batches: u64, n_arms: usize) -> Result<Core> {
    let pair = match prior {
        ThompsonPrior::Beta { a0, b0 } if n_arms == 2 => Some(BetaPairTracker::new((a0, b0), (a0, b0))?),
        _ => None,
    };
    Ok(Core::Thompson {
        prior,
        batch_size,
        max_batches,
        pair,
        frozen: vec![1.0 / n_arms as f64; n_arms],
        frozen_batch: 0,
    })
}

/// Per-arm running sums.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmStats {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
}

impl ArmStats {
    pub fn new(n_arms: usize) -> Self {
        ArmStats {
            counts: vec![0; n_arms],
            sums: vec![0.0; n_arms],
        }
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.sums[arm] += reward;
    }

    /// Arm with the highest empirical mean; unpulled arms never lead unless
    /// no arm was pulled, ties go to the lowest index.
    pub fn leader(&self) -> usize {
        let mut best = 0;
        let mut best_mean = f64::NEG_INFINITY;
        let mut any = false;
        for a in 0..self.counts.len() {
            if self.counts[a] == 0 {
                continue;
            }
            let m = self.sums[a] / self.counts[a] as f64;
            if !any || m > best_mean {
                best = a;
                best_mean = m;
                any = true;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Core {
    Uniform,
    Etc {
        t0: u64,
        epsilon: f64,
        leader: Option<usize>,
    },
    EpsilonGreedy {
        c: f64,
    },
    Thompson {
        prior: ThompsonPrior,
        batch_size: u64,
        max_batches: u64,
        pair: Option<BetaPairTracker>,
        frozen: Vec<f64>,
        frozen_batch: u64,
    },
    ContextualThompson {
        batch_size: u64,
        trackers: Vec<BetaPairTracker>,
        frozen: Vec<[f64; 2]>,
        frozen_batch: u64,
    },
}

/// Running state of a design within one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_arms: usize,
    core: Core,
    clips: Vec<(f64, f64)>,
    stats: ArmStats,
}

fn batch_of(t: u64, batch_size: u64) -> u64 {
    (t - 1) / batch_size + 1
}

impl Policy {
    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    /// 1-based batch number of round `t` for batched designs, 0 otherwise.
    pub fn batch(&self, t: u64) -> u32 {
        match &self.core {
            Core::Thompson {
                batch_size, max_batches, ..
            } if *batch_size > 1 => batch_of(t, *batch_size).min(*max_batches) as u32,
            Core::ContextualThompson { batch_size, .. } if *batch_size > 1 => batch_of(t, *batch_size) as u32,
            _ => 0,
        }
    }

    /// Writes the action distribution of round `t` into `out`. Must be called
    /// with consecutive rounds, each followed by [`Policy::update`].
    pub fn propensities(&mut self, t: u64, context: Option<usize>, out: &mut [f64]) -> Result<()> {
        if t == 0 {
            return Err(invalid("t", "rounds start at 1"));
        }
        let k = self.n_arms;
        debug_assert_eq!(out.len(), k);
        match &mut self.core {
            Core::Uniform => out.iter_mut().for_each(|p| *p = 1.0 / k as f64),
            Core::Etc { t0, epsilon, leader } => {
                if t > *t0 && leader.is_none() {
                    *leader = Some(self.stats.leader());
                }
                out.copy_from_slice(&etc_propensity(t, *t0, *epsilon, leader.unwrap_or(0)));
            }
            Core::EpsilonGreedy { c } => {
                let eps = (*c / (t as f64).sqrt()).min(1.0);
                let lead = self.stats.leader();
                out.iter_mut().for_each(|p| *p = eps / k as f64);
                out[lead] += 1.0 - eps;
            }
            Core::Thompson {
                prior,
                batch_size,
                max_batches,
                pair,
                frozen,
                frozen_batch,
            } => {
                let b = batch_of(t, *batch_size).min(*max_batches);
                if b != *frozen_batch {
                    if let Some(tr) = pair {
                        frozen.copy_from_slice(&tr.propensities());
                    } else {
                        let p = posterior_propensities(prior, &self.stats)?;
                        frozen.copy_from_slice(&p);
                    }
                    *frozen_batch = b;
                }
                out.copy_from_slice(frozen);
            }
            Core::ContextualThompson {
                batch_size,
                trackers,
                frozen,
                frozen_batch,
            } => {
                let s = context.ok_or(Error::MissingContext)?;
                if s >= trackers.len() {
                    return Err(Error::ContextOutOfRange {
                        context: s,
                        n_contexts: trackers.len(),
                    });
                }
                let b = batch_of(t, *batch_size);
                if b != *frozen_batch {
                    for (f, tr) in frozen.iter_mut().zip(trackers.iter()) {
                        *f = tr.propensities();
                    }
                    *frozen_batch = b;
                }
                out.copy_from_slice(&frozen[s]);
            }
        }
        for &(c, gamma) in &self.clips {
            apply_floor(out, floor_at(c, gamma, t))?;
        }
        Ok(())
    }

    /// Feeds back the realized action and reward of the current round.
    pub fn update(&mut self, context: Option<usize>, action: usize, reward: f64) {
        self.stats.update(action, reward);
        match &mut self.core {
            Core::Thompson { pair: Some(tr), .. } => tr.observe(action, reward > 0.5),
            Core::ContextualThompson { trackers, .. } => {
                if let Some(s) = context {
                    trackers[s].observe(action, reward > 0.5);
                }
            }
            _ => {}
        }
    }
}

fn posterior_propensities(prior: &ThompsonPrior, stats: &ArmStats) -> Result<Vec<f64>> {
    match prior {
        ThompsonPrior::Beta { a0, b0 } => {
            let params: Vec<(f64, f64)> = stats
                .counts
                .iter()
                .zip(&stats.sums)
                .map(|(&n, &s)| (a0 + s, b0 + n as f64 - s))
                .collect();
            beta_propensities(&params)
        }
        ThompsonPrior::Gaussian {
            sigma2,
            prior_mean,
            prior_var,
        } => {
            let v0 = prior_var.unwrap_or(10.0 * sigma2);
            let params: Vec<(f64, f64)> = stats
                .counts
                .iter()
                .zip(&stats.sums)
                .map(|(&n, &s)| {
                    let precision = 1.0 / v0 + n as f64 / sigma2;
                    let v = 1.0 / precision;
                    (v * (prior_mean / v0 + s / sigma2), v)
                })
                .collect();
            gaussian_propensities(&params)
        }
    }
}
