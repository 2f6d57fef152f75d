//! Point estimators, adaptive weights and Wald intervals.
//!
//! All estimators read the propensities stored in the trajectory; nothing is
//! recomputed from the design. Weighted estimators have the self-normalized
//! form `θ̂ = Σ ω_{t-1} φ_t / Σ ω_{t-1}` with standard error
//! `sqrt(Σ ω² (φ − θ̂)²) / Σ ω`.

use serde::{Deserialize, Serialize};

use crate::confseq::Interval;
use crate::error::{invalid, Error, Result};
use crate::special::normal_quantile;
use crate::trajectory::Trajectory;

/// Result of one estimator on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    /// `None` when fewer than two terms carry weight.
    pub stderr: Option<f64>,
    pub scheme: String,
    /// `Σ ω / max ω`.
    pub effective_sample_size: f64,
    pub n_terms: usize,
}

impl EstimatorReport {
    /// `(estimate - truth) / stderr`.
    pub fn studentized(&self, truth: f64) -> Result<f64> {
        match self.stderr {
            Some(se) if se > 0.0 => Ok((self.estimate - truth) / se),
            _ => Err(Error::StderrUnavailable),
        }
    }
}

/// Estimator scheme identifiers used in configs and tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "em")]
    EmpiricalMean,
    #[serde(rename = "ipw")]
    Ipw,
    #[serde(rename = "aipw:sqrtprop")]
    AipwSqrtProp,
    #[serde(rename = "aipw:varstab")]
    AipwVarStab,
    #[serde(rename = "aipw:zhan")]
    AipwZhan,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::EmpiricalMean,
        Scheme::Ipw,
        Scheme::AipwSqrtProp,
        Scheme::AipwVarStab,
        Scheme::AipwZhan,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Scheme::EmpiricalMean => "em",
            Scheme::Ipw => "ipw",
            Scheme::AipwSqrtProp => "aipw:sqrtprop",
            Scheme::AipwVarStab => "aipw:varstab",
            Scheme::AipwZhan => "aipw:zhan",
        }
    }

    pub fn parse(s: &str) -> Result<Scheme> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|x| x.id() == s)
            .ok_or_else(|| invalid("scheme", format!("unknown estimator `{s}`")))
    }
}

fn mean_and_stderr(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Arm-`k` sample mean `N_k^{-1} Σ 1{A_t = k} Y_t`.
pub fn empirical_mean(traj: &Trajectory, arm: usize) -> Result<EstimatorReport> {
    check_arm(traj, arm)?;
    let rewards: Vec<f64> = traj.steps().iter().filter(|s| s.action == arm).map(|s| s.reward).collect();
    if rewards.is_empty() {
        return Err(Error::ArmNeverPulled(arm));
    }
    let (estimate, stderr) = mean_and_stderr(&rewards);
    Ok(EstimatorReport {
        estimate,
        stderr,
        scheme: Scheme::EmpiricalMean.id().into(),
        effective_sample_size: rewards.len() as f64,
        n_terms: rewards.len(),
    })
}

fn check_arm(traj: &Trajectory, arm: usize) -> Result<()> {
    if arm >= traj.n_arms() {
        return Err(Error::ArmOutOfRange {
            arm,
            n_arms: traj.n_arms(),
        });
    }
    Ok(())
}

/// Inverse propensity weighted mean of arm `k`:
/// `T^{-1} Σ 1{A_t = k} Y_t / g_t(k)`.
pub fn ipw_estimate(traj: &Trajectory, arm: usize) -> Result<EstimatorReport> {
    check_arm(traj, arm)?;
    if traj.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    let mut terms = Vec::with_capacity(traj.len());
    for (i, s) in traj.steps().iter().enumerate() {
        let g = traj.propensity_vector(i)[arm];
        if g <= 0.0 {
            return Err(Error::ZeroPropensity { arm, round: s.round });
        }
        terms.push(if s.action == arm { s.reward / g } else { 0.0 });
    }
    let (estimate, stderr) = mean_and_stderr(&terms);
    Ok(EstimatorReport {
        estimate,
        stderr,
        scheme: Scheme::Ipw.id().into(),
        effective_sample_size: terms.len() as f64,
        n_terms: terms.len(),
    })
}

/// Target policy `g*` whose value is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetPolicy {
    /// Always play `arm`: the target is that arm's mean.
    Arm { arm: usize },
    /// One distribution for every context.
    Fixed { probs: Vec<f64> },
    /// `probs[s][a]` per context.
    Contextual { probs: Vec<Vec<f64>> },
}

impl TargetPolicy {
    #[inline]
    pub fn prob(&self, arm: usize, context: Option<usize>) -> f64 {
        match self {
            TargetPolicy::Arm { arm: k } => f64::from(u8::from(*k == arm)),
            TargetPolicy::Fixed { probs } => probs[arm],
            TargetPolicy::Contextual { probs } => probs[context.unwrap_or(0)][arm],
        }
    }

    fn validate(&self, n_arms: usize) -> Result<()> {
        let check = |p: &[f64]| -> Result<()> {
            if p.len() != n_arms {
                return Err(Error::LengthMismatch {
                    left: p.len(),
                    right: n_arms,
                });
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-9 || p.iter().any(|x| *x < 0.0) {
                return Err(Error::PropensitySum(s));
            }
            Ok(())
        };
        match self {
            TargetPolicy::Arm { arm } if *arm >= n_arms => Err(Error::ArmOutOfRange { arm: *arm, n_arms }),
            TargetPolicy::Arm { .. } => Ok(()),
            TargetPolicy::Fixed { probs } => check(probs),
            TargetPolicy::Contextual { probs } => probs.iter().try_for_each(|p| check(p)),
        }
    }
}

/// Outcome regression `η̂(a, s)` used in AIPW terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutcomeRegression {
    /// Fixed table `values[s][a]`; a single row for non-contextual data.
    Table { values: Vec<Vec<f64>> },
    /// Mean of the rewards observed before round `t` for the same arm (and
    /// context), `prior` when there are none.
    RunningMean { prior: f64 },
}

/// AIPW influence-function term
/// `Σ_ã η̂(ã) g*(ã) + g*(a)/g(a) · (y − η̂(a))` for one round, with
/// `eta[a] = η̂(a, s)`, `g` the design's propensities and `target[a] = g*(a|s)`.
pub fn aipw_term(action: usize, reward: f64, eta: &[f64], g: &[f64], target: &[f64]) -> Result<f64> {
    if g[action] <= 0.0 {
        return Err(Error::InvalidPropensity(g[action]));
    }
    let dm: f64 = eta.iter().zip(target).map(|(e, p)| e * p).sum();
    Ok(dm + target[action] / g[action] * (reward - eta[action]))
}

/// Predictable regression values `η̂_{t-1}(·, S_t)`, `K` per round.
pub fn regression_path(traj: &Trajectory, eta: &OutcomeRegression) -> Result<Vec<f64>> {
    let k = traj.n_arms();
    let mut out = Vec::with_capacity(traj.len() * k);
    match eta {
        OutcomeRegression::Table { values } => {
            for s in traj.steps() {
                let row = values.get(s.context.unwrap_or(0)).ok_or(Error::ContextOutOfRange {
                    context: s.context.unwrap_or(0),
                    n_contexts: values.len(),
                })?;
                if row.len() != k {
                    return Err(Error::LengthMismatch { left: row.len(), right: k });
                }
                out.extend_from_slice(row);
            }
        }
        OutcomeRegression::RunningMean { prior } => {
            let n_ctx = traj.steps().iter().filter_map(|s| s.context).max().map_or(1, |m| m + 1);
            let mut counts = vec![0u64; n_ctx * k];
            let mut sums = vec![0.0; n_ctx * k];
            for s in traj.steps() {
                let base = s.context.unwrap_or(0) * k;
                for a in 0..k {
                    let n = counts[base + a];
                    out.push(if n == 0 { *prior } else { sums[base + a] / n as f64 });
                }
                counts[base + s.action] += 1;
                sums[base + s.action] += s.reward;
            }
        }
    }
    Ok(out)
}

/// AIPW terms `φ_t` of every round for `target`.
pub fn aipw_scores(traj: &Trajectory, target: &TargetPolicy, eta: &OutcomeRegression) -> Result<Vec<f64>> {
    let k = traj.n_arms();
    target.validate(k)?;
    let path = regression_path(traj, eta)?;
    let mut tp = vec![0.0; k];
    let mut out = Vec::with_capacity(traj.len());
    for (i, s) in traj.steps().iter().enumerate() {
        for (a, p) in tp.iter_mut().enumerate() {
            *p = target.prob(a, s.context);
        }
        out.push(aipw_term(
            s.action,
            s.reward,
            &path[i * k..(i + 1) * k],
            traj.propensity_vector(i),
            &tp,
        )?);
    }
    Ok(out)
}

/// `ω_{t-1} = sqrt(g_t(k))`.
pub fn sqrt_propensity_weights(traj: &Trajectory, arm: usize) -> Result<Vec<f64>> {
    check_arm(traj, arm)?;
    Ok((0..traj.len()).map(|i| traj.propensity_vector(i)[arm].sqrt()).collect())
}

/// Convention for turning the Zhan display into estimator weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ZhanConvention {
    /// `ω_t^{-1/2}`: inverse square root of the display, the stabilizing form.
    #[default]
    InverseSqrt,
    /// The display value itself.
    Raw,
}

/// Raw values `Σ_a g̃²(a|S_t) / g_t(a|S_t)` for every round.
pub fn zhan_raw(traj: &Trajectory, target: &TargetPolicy) -> Result<Vec<f64>> {
    let k = traj.n_arms();
    target.validate(k)?;
    let mut out = Vec::with_capacity(traj.len());
    for (i, s) in traj.steps().iter().enumerate() {
        let g = traj.propensity_vector(i);
        let mut w = 0.0;
        for (a, &ga) in g.iter().enumerate().take(k) {
            let p = target.prob(a, s.context);
            if p > 0.0 {
                if ga <= 0.0 {
                    return Err(Error::ZeroPropensity { arm: a, round: s.round });
                }
                w += p * p / ga;
            }
        }
        out.push(w);
    }
    Ok(out)
}

/// Zhan weights under the chosen convention.
pub fn zhan_weights(traj: &Trajectory, target: &TargetPolicy, convention: ZhanConvention) -> Result<Vec<f64>> {
    let raw = zhan_raw(traj, target)?;
    Ok(match convention {
        ZhanConvention::Raw => raw,
        ZhanConvention::InverseSqrt => raw.into_iter().map(|w| 1.0 / w.sqrt()).collect(),
    })
}

/// How `Var(φ_t | F_{t-1})` is obtained for variance-stabilized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VarianceSpec {
    /// Conditional variances known per round.
    Known { variances: Vec<f64> },
    /// Importance-sampling estimate from past rounds (see
    /// [`variance_stabilized_weights`]).
    ImportanceSampling {
        /// Number of most recent rounds used; all history when absent.
        #[serde(default)]
        window: Option<usize>,
        #[serde(default = "default_v_min")]
        v_min: f64,
        /// Used while some needed arm has no past pulls, and as the reward
        /// variance of the ridge pseudo-observation.
        #[serde(default = "default_initial_variance")]
        initial_variance: f64,
        /// Weight, in pulls, of a pseudo-observation
        /// with reward variance `initial_variance` added to every arm's
        /// variance estimate. Keeps arms whose few rewards happen to be
        /// equal off the floor.
        #[serde(default = "default_prior_weight")]
        prior_weight: f64,
    },
}

fn default_v_min() -> f64 {
    1e-6
}

fn default_initial_variance() -> f64 {
    1.0
}

fn default_prior_weight() -> f64 {
    1.0
}

impl Default for VarianceSpec {
    fn default() -> Self {
        VarianceSpec::ImportanceSampling {
            window: None,
            v_min: default_v_min(),
            initial_variance: default_initial_variance(),
            prior_weight: default_prior_weight(),
        }
    }
}

/// Weights `V̂_t^{-1/2}` with bookkeeping of the rounds whose estimate was
/// clamped at the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilizedWeights {
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
    pub clamped_rounds: Vec<u64>,
}

/// Variance-stabilized weights `ω_{t-1} = V̂_t^{-1/2}`.
///
/// With importance sampling, `φ_t(a, y) = α_a + d_a·y` is linear in the
/// reward given the predictable `η̂_{t-1}` and `g_t`, so its conditional
/// moments under the current design are
/// `Σ_a g_t(a)·E[(α_a + d_a Y)^m | arm a]`: past data enter only through
/// the arm-`a` reward moments, and the current design reweights them. Without
/// contexts the past pulls of arm `a` are iid draws from arm `a` whatever
/// design chose them, so its moments are plain sample moments; weighting
/// each pull by `1/g_s(a)` would let a single pull at a tiny propensity
/// dominate the variance estimate. Only non-contextual trajectories are
/// supported.
pub fn variance_stabilized_weights(
    traj: &Trajectory,
    target: &TargetPolicy,
    eta: &OutcomeRegression,
    spec: &VarianceSpec,
) -> Result<StabilizedWeights> {
    let n = traj.len();
    match spec {
        VarianceSpec::Known { variances } => {
            if variances.len() != n {
                return Err(Error::LengthMismatch {
                    left: variances.len(),
                    right: n,
                });
            }
            if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
                return Err(invalid("variances", format!("known variance {v} must be positive")));
            }
            Ok(StabilizedWeights {
                weights: variances.iter().map(|v| 1.0 / v.sqrt()).collect(),
                variances: variances.clone(),
                clamped_rounds: Vec::new(),
            })
        }
        VarianceSpec::ImportanceSampling {
            window,
            v_min,
            initial_variance,
            prior_weight,
        } => {
            if traj.steps().iter().any(|s| s.context.is_some()) {
                return Err(Error::Unsupported(
                    "importance-sampling variance estimates for contextual trajectories",
                ));
            }
            if !(*v_min > 0.0) || !(*initial_variance > 0.0) {
                return Err(invalid("v_min", "floor and initial variance must be positive"));
            }
            if !(*prior_weight >= 0.0) {
                return Err(invalid("prior_weight", "must be non-negative"));
            }
            let k = traj.n_arms();
            target.validate(k)?;
            let path = regression_path(traj, eta)?;
            // Per-arm counts and sums of y, y² over the window.
            let mut s0 = vec![0.0; k];
            let mut s1 = vec![0.0; k];
            let mut s2 = vec![0.0; k];
            let mut cnt = vec![0u64; k];
            let mut weights = Vec::with_capacity(n);
            let mut variances = Vec::with_capacity(n);
            let mut clamped = Vec::new();
            let steps = traj.steps();
            for i in 0..n {
                if let Some(w) = window.filter(|w| *w > 0) {
                    if i >= w {
                        let old = &steps[i - w];
                        s0[old.action] -= 1.0;
                        s1[old.action] -= old.reward;
                        s2[old.action] -= old.reward * old.reward;
                        cnt[old.action] -= 1;
                    }
                }
                let g = traj.propensity_vector(i);
                let eta_t = &path[i * k..(i + 1) * k];
                let dm: f64 = (0..k).map(|a| eta_t[a] * target.prob(a, None)).sum();
                let mut m1 = 0.0;
                let mut m2 = 0.0;
                let mut missing = false;
                for a in 0..k {
                    if g[a] <= 0.0 {
                        continue;
                    }
                    let p = target.prob(a, None);
                    let d = p / g[a];
                    let alpha = dm - d * eta_t[a];
                    if d == 0.0 {
                        m1 += g[a] * alpha;
                        m2 += g[a] * alpha * alpha;
                        continue;
                    }
                    if cnt[a] == 0 {
                        missing = true;
                        break;
                    }
                    let y1 = s1[a] / s0[a];
                    let var = (s2[a] - s1[a] * y1).max(0.0);
                    let y2 = y1 * y1 + (var + prior_weight * initial_variance) / (s0[a] + prior_weight);
                    m1 += g[a] * (alpha + d * y1);
                    m2 += g[a] * (alpha * alpha + 2.0 * alpha * d * y1 + d * d * y2);
                }
                let mut v = if missing { *initial_variance } else { m2 - m1 * m1 };
                if !(v >= *v_min) {
                    v = *v_min;
                    clamped.push(steps[i].round);
                }
                variances.push(v);
                weights.push(1.0 / v.sqrt());
                let s = &steps[i];
                s0[s.action] += 1.0;
                s1[s.action] += s.reward;
                s2[s.action] += s.reward * s.reward;
                cnt[s.action] += 1;
            }
            Ok(StabilizedWeights {
                weights,
                variances,
                clamped_rounds: clamped,
            })
        }
    }
}

/// Self-normalized weighted estimate `Σ ω φ / Σ ω`.
pub fn weighted_estimate(phi: &[f64], weights: &[f64]) -> Result<EstimatorReport> {
    if phi.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: phi.len(),
            right: weights.len(),
        });
    }
    if phi.iter().chain(weights).any(|x| x.is_nan()) {
        return Err(Error::NanInput);
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(invalid("weights", "must be non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeights);
    }
    let n = phi.len();
    let constant = weights.iter().all(|w| *w == weights[0]);
    let estimate = if constant {
        phi.iter().sum::<f64>() / n as f64
    } else {
        weights.iter().zip(phi).map(|(w, p)| w * p).sum::<f64>() / total
    };
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    let stderr = if positive >= 2 {
        let ss: f64 = weights.iter().zip(phi).map(|(w, p)| (w * (p - estimate)).powi(2)).sum();
        Some(ss.sqrt() / total)
    } else {
        None
    };
    let max_w = weights.iter().cloned().fold(0.0, f64::max);
    Ok(EstimatorReport {
        estimate,
        stderr,
        scheme: "weighted".into(),
        effective_sample_size: total / max_w,
        n_terms: n,
    })
}

/// Martingale-difference terms `X_t = ω_{t-1}(φ_t − θ_ref)` of a weighted
/// estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedScore {
    pub terms: Vec<f64>,
    pub weights: Vec<f64>,
    /// `Γ_T = (T^{-1} Σ ω)^{-1}`.
    pub gamma: f64,
}

impl WeightedScore {
    pub fn new(phi: &[f64], weights: &[f64], theta_ref: f64) -> Result<Self> {
        if phi.len() != weights.len() {
            return Err(Error::LengthMismatch {
                left: phi.len(),
                right: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroWeights);
        }
        Ok(WeightedScore {
            terms: phi.iter().zip(weights).map(|(p, w)| w * (p - theta_ref)).collect(),
            weights: weights.to_vec(),
            gamma: phi.len() as f64 / total,
        })
    }

    /// `U_T² = Σ X_t²`.
    pub fn qvar(&self) -> f64 {
        self.terms.iter().map(|x| x * x).sum()
    }

    /// Running `U_t²`.
    pub fn qvar_path(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.terms
            .iter()
            .map(|x| {
                acc += x * x;
                acc
            })
            .collect()
    }

    /// Terms divided by `scale` (e.g. `sqrt(T)`), the triangular array
    /// `X_{t,T}` of the martingale CLT.
    pub fn scaled_terms(&self, scale: f64) -> Vec<f64> {
        self.terms.iter().map(|x| x / scale).collect()
    }
}

/// Wald interval with a flag for a zero standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldInterval {
    pub interval: Interval,
    pub degenerate: bool,
}

/// `estimate ± z_{1-α/2}·stderr`.
pub fn wald_ci(report: &EstimatorReport, alpha: f64) -> Result<WaldInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let se = report.stderr.ok_or(Error::StderrUnavailable)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(WaldInterval {
        interval: Interval::new(report.estimate - z * se, report.estimate + z * se),
        degenerate: se == 0.0,
    })
}

/// Convenience dispatcher for the scheme ids: estimate of the mean of `arm`
/// with the running-mean outcome regression for the AIPW variants.
pub fn estimate_arm_mean(traj: &Trajectory, arm: usize, scheme: Scheme, prior: f64) -> Result<EstimatorReport> {
    let target = TargetPolicy::Arm { arm };
    let eta = OutcomeRegression::RunningMean { prior };
    let mut report = match scheme {
        Scheme::EmpiricalMean => return empirical_mean(traj, arm),
        Scheme::Ipw => return ipw_estimate(traj, arm),
        Scheme::AipwSqrtProp => {
            let phi = aipw_scores(traj, &target, &eta)?;
            weighted_estimate(&phi, &sqrt_propensity_weights(traj, arm)?)?
        }
        Scheme::AipwVarStab => {
            let phi = aipw_scores(traj, &target, &eta)?;
            let w = variance_stabilized_weights(traj, &target, &eta, &VarianceSpec::default())?;
            weighted_estimate(&phi, &w.weights)?
        }
        Scheme::AipwZhan => {
            let phi = aipw_scores(traj, &target, &eta)?;
            weighted_estimate(&phi, &zhan_weights(traj, &target, ZhanConvention::default())?)?
        }
    };
    report.scheme = scheme.id().into();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn traj_of(steps: &[(usize, f64, [f64; 2])]) -> Trajectory {
        let mut t = Trajectory::new(2);
        for (i, (a, y, g)) in steps.iter().enumerate() {
            t.record_step(i as u64 + 1, None, *a, g, *y, 0).unwrap();
        }
        t
    }

    #[test]
    fn empirical_mean_examples() {
        let t = traj_of(&[
            (0, 1.0, [0.5, 0.5]),
            (1, 5.0, [0.5, 0.5]),
            (0, 0.0, [0.5, 0.5]),
            (1, 5.0, [0.5, 0.5]),
            (0, 1.0, [0.5, 0.5]),
        ]);
        assert_abs_diff_eq!(empirical_mean(&t, 0).unwrap().estimate, 2.0 / 3.0, epsilon = 1e-15);
        let single = traj_of(&[(0, 0.7, [0.5, 0.5])]);
        let r = empirical_mean(&single, 0).unwrap();
        assert_eq!(r.estimate, 0.7);
        assert_eq!(r.stderr, None);
        assert_eq!(empirical_mean(&single, 1), Err(Error::ArmNeverPulled(1)));
    }

    #[test]
    fn ipw_examples() {
        let t = traj_of(&[(0, 1.0, [0.5, 0.5])]);
        assert_eq!(ipw_estimate(&t, 0).unwrap().estimate, 2.0);
        let always = traj_of(&[(0, 1.0, [1.0, 0.0]), (0, 0.0, [1.0, 0.0]), (0, 0.5, [1.0, 0.0])]);
        assert_eq!(
            ipw_estimate(&always, 0).unwrap().estimate,
            empirical_mean(&always, 0).unwrap().estimate
        );
        assert!(matches!(ipw_estimate(&always, 1), Err(Error::ZeroPropensity { arm: 1, round: 1 })));
    }

    #[test]
    fn aipw_examples() {
        assert_eq!(aipw_term(0, 0.3, &[0.3, 0.8], &[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.55);
        assert_eq!(aipw_term(0, 1.0, &[0.0, 0.0], &[0.5, 0.5], &[1.0, 0.0]).unwrap(), 2.0);
    }

    #[test]
    fn zhan_examples() {
        let t = traj_of(&[(0, 1.0, [0.8, 0.2])]);
        let on_policy = zhan_raw(&t, &TargetPolicy::Fixed { probs: vec![0.8, 0.2] }).unwrap();
        assert_abs_diff_eq!(on_policy[0], 1.0, epsilon = 1e-15);
        let uniform = zhan_raw(&t, &TargetPolicy::Fixed { probs: vec![0.5, 0.5] }).unwrap();
        assert_abs_diff_eq!(uniform[0], 1.5625, epsilon = 1e-15);
        let t = traj_of(&[(0, 1.0, [0.25, 0.75])]);
        assert_eq!(zhan_raw(&t, &TargetPolicy::Arm { arm: 0 }).unwrap(), vec![4.0]);
        assert_eq!(
            zhan_weights(&t, &TargetPolicy::Arm { arm: 0 }, ZhanConvention::InverseSqrt).unwrap(),
            vec![0.5]
        );
    }

    #[test]
    fn weights_examples() {
        let t = traj_of(&[(0, 1.0, [0.25, 0.75])]);
        assert_eq!(sqrt_propensity_weights(&t, 0).unwrap(), vec![0.5]);
        let r = weighted_estimate(&[3.0, 99.0], &[1.0, 0.0]).unwrap();
        assert_eq!(r.estimate, 3.0);
        assert_eq!(r.stderr, None);
        let phi = [0.1, 0.7, 0.3, 0.9];
        assert_eq!(weighted_estimate(&phi, &[1.0; 4]).unwrap().estimate, 2.0 / 4.0);
        let w = [0.3, 1.2, 0.5, 2.0];
        let w7: Vec<f64> = w.iter().map(|x| 7.0 * x).collect();
        assert_abs_diff_eq!(
            weighted_estimate(&phi, &w).unwrap().estimate,
            weighted_estimate(&phi, &w7).unwrap().estimate,
            epsilon = 1e-15
        );
        assert_eq!(weighted_estimate(&phi, &[0.0; 4]), Err(Error::ZeroWeights));
    }

    #[test]
    fn known_variance_weights() {
        let t = traj_of(&[(0, 1.0, [0.5, 0.5]), (1, 0.0, [0.5, 0.5])]);
        let w = variance_stabilized_weights(
            &t,
            &TargetPolicy::Arm { arm: 0 },
            &OutcomeRegression::RunningMean { prior: 0.0 },
            &VarianceSpec::Known {
                variances: vec![2.0, 10.0],
            },
        )
        .unwrap();
        assert_abs_diff_eq!(w.weights[0], 2f64.powf(-0.5), epsilon = 1e-15);
        assert_abs_diff_eq!(w.weights[1], 10f64.powf(-0.5), epsilon = 1e-15);
    }

    #[test]
    fn wald_examples() {
        let r = EstimatorReport {
            estimate: 0.0,
            stderr: Some(1.0),
            scheme: "x".into(),
            effective_sample_size: 1.0,
            n_terms: 2,
        };
        let w = wald_ci(&r, 0.05).unwrap();
        assert_abs_diff_eq!(w.interval.hi, 1.959_963_984_540_054, epsilon = 1e-9);
        assert_abs_diff_eq!(wald_ci(&r, 0.32).unwrap().interval.hi, 0.994_457_883_209_753, epsilon = 1e-9);
        let zero = EstimatorReport {
            stderr: Some(0.0),
            ..r.clone()
        };
        assert!(wald_ci(&zero, 0.05).unwrap().degenerate);
        assert!(wald_ci(&r, 1.5).is_err());
    }

    #[test]
    fn scheme_ids_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(s.id()).unwrap(), s);
        }
        assert!(Scheme::parse("aipw").is_err());
    }
}
