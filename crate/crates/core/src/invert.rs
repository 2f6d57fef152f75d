//! Confidence sets by Monte Carlo test inversion.
//!
//! For Bernoulli arms with mean vector `μ`, the law of the whole trajectory
//! is known once the design and stopping rule are fixed, so the
//! `(1−α)`-quantile `κ_μ` of any statistic `ρ` can be simulated by replaying
//! the experiment at `μ`. The confidence set collects the grid points whose
//! observed statistic does not exceed `κ_μ`. Replication `r` at grid point
//! `p` of outer replication `o` draws from the inner stream `(o, p, r)`, so
//! `κ_μ` is a deterministic function of the seed and the point: evaluating
//! only some points (lazily) gives exactly the values a full sweep would.
//!
//! The contextual procedure sweeps the effect `θ` of the two-arm
//! contextual Bernoulli model while plugging in an estimate of the baseline
//! success probabilities.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::confseq::Interval;
use crate::design::Design;
use crate::error::{invalid, Error, Result};
use crate::estimators::{aipw_scores, ipw_estimate, OutcomeRegression, TargetPolicy};
use crate::experiment::{check_compatible, run_experiment_into};
use crate::mc::{try_replicate, upper_quantile, upper_rank};
use crate::model::OutcomeModel;
use crate::rng::{derive_stream, inner_stream_index};
use crate::stopping::StoppingRule;
use crate::trajectory::Trajectory;

/// Inner point index reserved for the plug-in bootstrap.
const BOOTSTRAP_POINT: u64 = (1 << 22) - 1;

/// Test statistic `ρ`, evaluated on a trajectory under a hypothesised mean
/// vector. An arm that was never pulled contributes the mean `1/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Statistic {
    /// `|μ̂₂ − μ̂₁ − (μ₂ − μ₁)|` with empirical means.
    EmDiff,
    /// The same with IPW means.
    IpwDiff,
    /// The same with AIPW means (running-mean outcome model).
    AipwScore,
    /// `|μ̂_k − μ_k|` for one arm.
    ArmMeanAbs { arm: usize },
    /// Constant zero.
    Zero,
}

impl Statistic {
    pub fn id(&self) -> String {
        match self {
            Statistic::EmDiff => "em-diff".into(),
            Statistic::IpwDiff => "ipw-diff".into(),
            Statistic::AipwScore => "aipw-score".into(),
            Statistic::ArmMeanAbs { arm } => format!("arm-mean-abs:{arm}"),
            Statistic::Zero => "zero".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "em-diff" => Statistic::EmDiff,
            "ipw-diff" => Statistic::IpwDiff,
            "aipw-score" => Statistic::AipwScore,
            "zero" => Statistic::Zero,
            _ => match s.strip_prefix("arm-mean-abs:").map(str::parse) {
                Some(Ok(arm)) => Statistic::ArmMeanAbs { arm },
                _ => return Err(invalid("statistic", format!("unknown statistic `{s}`"))),
            },
        })
    }

    /// `ρ` on `traj` under the hypothesis `means`.
    pub fn eval(&self, traj: &Trajectory, means: &[f64]) -> Result<f64> {
        if means.len() != traj.n_arms() {
            return Err(Error::LengthMismatch {
                left: means.len(),
                right: traj.n_arms(),
            });
        }
        let two_arms = || {
            if traj.n_arms() == 2 {
                Ok(())
            } else {
                Err(invalid("n_arms", "difference statistics need two arms"))
            }
        };
        Ok(match *self {
            Statistic::Zero => 0.0,
            Statistic::ArmMeanAbs { arm } => {
                if arm >= traj.n_arms() {
                    return Err(Error::ArmOutOfRange {
                        arm,
                        n_arms: traj.n_arms(),
                    });
                }
                (arm_mean_or_half(traj, arm) - means[arm]).abs()
            }
            Statistic::EmDiff => {
                two_arms()?;
                (arm_mean_or_half(traj, 1) - arm_mean_or_half(traj, 0) - (means[1] - means[0])).abs()
            }
            Statistic::IpwDiff => {
                two_arms()?;
                let d = ipw_estimate(traj, 1)?.estimate - ipw_estimate(traj, 0)?.estimate;
                (d - (means[1] - means[0])).abs()
            }
            Statistic::AipwScore => {
                two_arms()?;
                let eta = OutcomeRegression::RunningMean { prior: 0.5 };
                let s1 = aipw_scores(traj, &TargetPolicy::Arm { arm: 1 }, &eta)?;
                let s0 = aipw_scores(traj, &TargetPolicy::Arm { arm: 0 }, &eta)?;
                if s1.is_empty() {
                    return Err(Error::SampleTooSmall { needed: 1, got: 0 });
                }
                let d = s1.iter().zip(&s0).map(|(a, b)| a - b).sum::<f64>() / s1.len() as f64;
                (d - (means[1] - means[0])).abs()
            }
        })
    }
}

/// Empirical mean of `arm`, `1/2` when it was never pulled.
pub fn arm_mean_or_half(traj: &Trajectory, arm: usize) -> f64 {
    let (mut n, mut s) = (0u64, 0.0);
    for st in traj.steps().iter().filter(|st| st.action == arm) {
        n += 1;
        s += st.reward;
    }
    if n == 0 {
        0.5
    } else {
        s / n as f64
    }
}

/// Everything needed to replay the experiment at a hypothesised parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub design: Design,
    pub stopping: StoppingRule,
    pub statistic: Statistic,
    pub alpha: f64,
    pub r_inner: u64,
    pub seed: u64,
}

/// Checks `0 < α < 1` and `R_inner ≥ ⌈20/α⌉`.
pub fn check_inner_reps(alpha: f64, r_inner: u64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    let need = (20.0 / alpha).ceil() as u64;
    if r_inner < need {
        return Err(invalid(
            "r_inner",
            format!("{r_inner} replications cannot resolve the quantile; need at least {need}"),
        ));
    }
    Ok(())
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        check_inner_reps(self.alpha, self.r_inner)
    }

    /// The `R_inner` statistic values at `means`, in replication order.
    pub fn simulate(&self, means: &[f64], outer: u64, point: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let model = OutcomeModel::bernoulli(means.to_vec())?;
        check_compatible(&model, &self.design, &self.stopping)?;
        try_replicate(0..self.r_inner, |r| {
            let mut rng = derive_stream(self.seed, inner_stream_index(outer, point, r));
            let mut traj = Trajectory::new(model.n_arms());
            run_experiment_into(&model, &self.design, &self.stopping, &mut rng, &mut traj)?;
            self.statistic.eval(&traj, means)
        })
    }
}

/// `κ_μ(1−α)`: order statistic `⌈(1−α)R_inner⌉` of `ρ` over `R_inner`
/// replays at `means`.
pub fn simulate_quantile(cal: &Calibration, means: &[f64], outer: u64, point: u64) -> Result<f64> {
    let mut v = cal.simulate(means, outer, point)?;
    upper_quantile(&mut v, cal.alpha)
}

/// Regular grid of `[0, 1]^K` with `n` points per axis. Point coordinates
/// are `i/(n−1)`; the flat index is mixed-radix with arm 0 most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub k: usize,
    pub n: usize,
}

impl Grid {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k == 0 || n < 2 {
            return Err(invalid("grid", "need at least one arm and two points per axis"));
        }
        if (n as f64).powi(k as i32) > (1u64 << 22) as f64 - 1.0 {
            return Err(invalid("grid", "too many grid points"));
        }
        Ok(Grid { k, n })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.k as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coords(&self, idx: usize) -> Vec<usize> {
        let mut c = vec![0; self.k];
        let mut r = idx;
        for a in (0..self.k).rev() {
            c[a] = r % self.n;
            r /= self.n;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.n + c)
    }

    pub fn value(&self, i: usize) -> f64 {
        i as f64 / (self.n - 1) as f64
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        self.coords(idx).into_iter().map(|i| self.value(i)).collect()
    }

    /// Index of the grid point nearest to `means`.
    pub fn nearest(&self, means: &[f64]) -> usize {
        let c: Vec<usize> = means
            .iter()
            .map(|m| (m.clamp(0.0, 1.0) * (self.n - 1) as f64).round() as usize)
            .collect();
        self.index(&c)
    }
}

/// `κ` at every grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMap {
    pub grid: Grid,
    pub kappa: Vec<f64>,
    pub r_inner: u64,
    pub statistic: String,
    pub alpha: f64,
    pub seed: u64,
    pub outer: u64,
}

/// Full sweep: `κ` at every grid point.
pub fn quantile_map(cal: &Calibration, grid: Grid, outer: u64) -> Result<QuantileMap> {
    cal.validate()?;
    let kappa = try_replicate(0..grid.len() as u64, |p| simulate_quantile(cal, &grid.point(p as usize), outer, p))?;
    Ok(QuantileMap {
        grid,
        kappa,
        r_inner: cal.r_inner,
        statistic: cal.statistic.id(),
        alpha: cal.alpha,
        seed: cal.seed,
        outer,
    })
}

/// `κ` computed on demand and cached.
pub struct LazyQuantiles<'a> {
    pub cal: &'a Calibration,
    pub grid: Grid,
    pub outer: u64,
    cache: Mutex<HashMap<usize, f64>>,
}

impl<'a> LazyQuantiles<'a> {
    pub fn new(cal: &'a Calibration, grid: Grid, outer: u64) -> Self {
        LazyQuantiles {
            cal,
            grid,
            outer,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn kappa(&self, idx: usize) -> Result<f64> {
        if let Some(k) = self.cache.lock().expect("cache").get(&idx) {
            return Ok(*k);
        }
        let k = simulate_quantile(self.cal, &self.grid.point(idx), self.outer, idx as u64)?;
        self.cache.lock().expect("cache").insert(idx, k);
        Ok(k)
    }

    pub fn evaluated(&self) -> usize {
        self.cache.lock().expect("cache").len()
    }

    /// Whether the observed trajectory accepts grid point `idx`.
    pub fn accepts(&self, traj: &Trajectory, idx: usize) -> Result<bool> {
        let rho = self.cal.statistic.eval(traj, &self.grid.point(idx))?;
        Ok(rho <= self.kappa(idx)?)
    }

    /// Whether the marginal `Δ`-set contains the `Δ` of grid point `idx`
    /// (two arms). Points on the same diagonal are tried nearest first.
    pub fn covers_delta(&self, traj: &Trajectory, idx: usize) -> Result<bool> {
        if self.grid.k != 2 {
            return Err(invalid("grid", "Δ marginalisation needs two arms"));
        }
        let c = self.grid.coords(idx);
        let d = c[1] as i64 - c[0] as i64;
        let n = self.grid.n as i64;
        let mut diag: Vec<i64> = (0.max(-d)..n.min(n - d)).collect();
        diag.sort_by_key(|&i| ((i - c[0] as i64).abs(), i));
        for i in diag {
            let j = self.grid.index(&[i as usize, (i + d) as usize]);
            if self.accepts(traj, j)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Accepted grid points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub grid: Grid,
    pub accepted: Vec<usize>,
    pub alpha: f64,
    /// Set when no point is accepted.
    pub empty: bool,
}

impl ConfidenceSet {
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.accepted.iter().map(|&i| self.grid.point(i)).collect()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.accepted.binary_search(&idx).is_ok()
    }
}

/// Grid points `μ` with `ρ_μ ≤ κ_μ`.
pub fn grid_confidence_set(traj: &Trajectory, statistic: Statistic, map: &QuantileMap) -> Result<ConfidenceSet> {
    if statistic.id() != map.statistic {
        return Err(Error::StatisticMismatch {
            calibrated: map.statistic.clone(),
            requested: statistic.id(),
        });
    }
    if traj.n_arms() != map.grid.k {
        return Err(Error::LengthMismatch {
            left: traj.n_arms(),
            right: map.grid.k,
        });
    }
    let mut accepted = Vec::new();
    for (idx, &k) in map.kappa.iter().enumerate() {
        if statistic.eval(traj, &map.grid.point(idx))? <= k {
            accepted.push(idx);
        }
    }
    Ok(ConfidenceSet {
        grid: map.grid,
        empty: accepted.is_empty(),
        accepted,
        alpha: map.alpha,
    })
}

/// Two-pass approximation of the confidence set: `κ` on the coarse subgrid
/// with spacing `step`, then on every fine point within one coarse cell of
/// an accepted coarse point (of the coarse point closest to acceptance if
/// none is accepted). Fine points far from every accepted coarse point are
/// never evaluated.
pub fn refined_confidence_set(traj: &Trajectory, cal: &Calibration, grid: Grid, outer: u64, step: usize) -> Result<ConfidenceSet> {
    if step == 0 {
        return Err(invalid("step", "must be positive"));
    }
    let lazy = LazyQuantiles::new(cal, grid, outer);
    let axis: Vec<usize> = {
        let mut v: Vec<usize> = (0..grid.n).step_by(step).collect();
        if *v.last().expect("nonempty") != grid.n - 1 {
            v.push(grid.n - 1);
        }
        v
    };
    let coarse: Vec<usize> = (0..axis.len().pow(grid.k as u32))
        .map(|i| {
            let mut c = vec![0; grid.k];
            let mut r = i;
            for a in (0..grid.k).rev() {
                c[a] = axis[r % axis.len()];
                r /= axis.len();
            }
            grid.index(&c)
        })
        .collect();
    let margins = try_replicate(0..coarse.len() as u64, |i| {
        let idx = coarse[i as usize];
        Ok(cal.statistic.eval(traj, &grid.point(idx))? - lazy.kappa(idx)?)
    })?;
    let mut seeds: Vec<usize> = coarse.iter().zip(&margins).filter(|(_, m)| **m <= 0.0).map(|(i, _)| *i).collect();
    if seeds.is_empty() {
        let best = margins
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| coarse[i])
            .expect("nonempty");
        seeds.push(best);
    }
    let mut candidates: Vec<usize> = (0..grid.len())
        .filter(|&idx| {
            let c = grid.coords(idx);
            seeds
                .iter()
                .any(|&s| grid.coords(s).iter().zip(&c).all(|(a, b)| a.abs_diff(*b) <= step))
        })
        .collect();
    candidates.sort_unstable();
    let flags = try_replicate(0..candidates.len() as u64, |i| lazy.accepts(traj, candidates[i as usize]))?;
    let accepted: Vec<usize> = candidates.into_iter().zip(flags).filter(|(_, f)| *f).map(|(i, _)| i).collect();
    Ok(ConfidenceSet {
        grid,
        empty: accepted.is_empty(),
        accepted,
        alpha: cal.alpha,
    })
}

/// Marginal set for `Δ = μ₂ − μ₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSet {
    /// Accepted `Δ` values on the grid `{d/(n−1) : |d| ≤ n−1}`, ascending.
    pub deltas: Vec<f64>,
    pub hull: Interval,
}

/// `Δ` is accepted iff some accepted point `(μ₂ − Δ, μ₂)` exists.
pub fn marginalize_ate(set: &ConfidenceSet) -> Result<DeltaSet> {
    if set.grid.k != 2 {
        return Err(invalid("grid", "Δ marginalisation needs two arms"));
    }
    if set.accepted.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = set.grid.n as i64;
    let mut hit = vec![false; (2 * n - 1) as usize];
    for &idx in &set.accepted {
        let c = set.grid.coords(idx);
        hit[(c[1] as i64 - c[0] as i64 + n - 1) as usize] = true;
    }
    let deltas: Vec<f64> = hit
        .iter()
        .enumerate()
        .filter(|(_, h)| **h)
        .map(|(d, _)| (d as i64 - (n - 1)) as f64 / (n - 1) as f64)
        .collect();
    let hull = Interval::new(deltas[0], *deltas.last().expect("nonempty"));
    Ok(DeltaSet { deltas, hull })
}

/// Per-arm result of the plug-in bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub arm: usize,
    pub estimate: f64,
    /// Mean used for the replays (the estimate, clamped).
    pub plug_in: f64,
    /// Simulated quantiles of the arm mean at ranks `⌈(α/2)R⌉` and
    /// `⌈(1−α/2)R⌉`.
    pub q_lo: f64,
    pub q_hi: f64,
    /// `[2μ̂ − q_hi, 2μ̂ − q_lo] ∩ [0, 1]`.
    pub interval: Interval,
    /// Set when the estimate was clamped away from 0 or 1 (or the arm was
    /// never pulled).
    pub clamped: bool,
}

/// Lower quantile: order statistic `⌈p·n⌉` (at least 1) of sorted `v`.
fn lower_quantile(sorted: &[f64], p: f64) -> f64 {
    sorted[upper_rank(sorted.len(), 1.0 - p) - 1]
}

/// Replays the experiment at the clamped empirical arm means and recentres
/// the simulated quantiles of each arm mean. Approximate, not exact.
pub fn plugin_bootstrap_ci(
    traj: &Trajectory,
    design: &Design,
    stopping: &StoppingRule,
    alpha: f64,
    r_inner: u64,
    seed: u64,
    outer: u64,
) -> Result<Vec<BootstrapInterval>> {
    check_inner_reps(alpha, r_inner)?;
    let k = traj.n_arms();
    let mut estimates = Vec::with_capacity(k);
    let mut plug = Vec::with_capacity(k);
    let mut clamped = Vec::with_capacity(k);
    for a in 0..k {
        let n = traj.arm_counts()[a] as f64;
        let m = arm_mean_or_half(traj, a);
        let lo = 1.0 / (n + 2.0);
        estimates.push(m);
        plug.push(m.clamp(lo, 1.0 - lo));
        clamped.push(n == 0.0 || m < lo || m > 1.0 - lo);
    }
    let model = OutcomeModel::bernoulli(plug.clone())?;
    check_compatible(&model, design, stopping)?;
    let sims = try_replicate(0..r_inner, |r| {
        let mut rng = derive_stream(seed, inner_stream_index(outer, BOOTSTRAP_POINT, r));
        let mut t = Trajectory::new(k);
        run_experiment_into(&model, design, stopping, &mut rng, &mut t)?;
        Ok((0..k).map(|a| arm_mean_or_half(&t, a)).collect::<Vec<_>>())
    })?;
    let mut out = Vec::with_capacity(k);
    for a in 0..k {
        let mut v: Vec<f64> = sims.iter().map(|s| s[a]).collect();
        v.sort_by(|x, y| x.total_cmp(y));
        let q_lo = lower_quantile(&v, alpha / 2.0);
        let q_hi = v[upper_rank(v.len(), alpha / 2.0) - 1];
        let m = estimates[a];
        out.push(BootstrapInterval {
            arm: a,
            estimate: m,
            plug_in: plug[a],
            q_lo,
            q_hi,
            interval: Interval::new((2.0 * m - q_hi).max(0.0), (2.0 * m - q_lo).min(1.0)),
            clamped: clamped[a],
        });
    }
    Ok(out)
}

/// Baseline estimate used both inside `ρ(θ)` and as the plug-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EtaPlugin {
    /// Per-context arm-0 success frequency with one added success and
    /// failure.
    Laplace,
    /// Fixed baseline per context.
    Known { baseline: Vec<f64> },
}

/// Context law used in the replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContextLaw {
    /// Observed context frequencies with one added count per context.
    Empirical,
    Known {
        probs: Vec<f64>,
    },
}

/// Settings of the contextual procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualInversion {
    pub design: Design,
    pub stopping: StoppingRule,
    pub n_contexts: usize,
    pub alpha: f64,
    pub r_inner: u64,
    pub seed: u64,
    pub eta: EtaPlugin,
    pub contexts: ContextLaw,
}

/// Laplace-smoothed arm-0 success frequency per context.
pub fn laplace_eta(traj: &Trajectory, n_contexts: usize) -> Result<Vec<f64>> {
    let mut succ = vec![0.0; n_contexts];
    let mut n = vec![0.0; n_contexts];
    for s in traj.steps() {
        let c = context_of(s.context, n_contexts)?;
        if s.action == 0 {
            succ[c] += s.reward;
            n[c] += 1.0;
        }
    }
    Ok(succ.iter().zip(&n).map(|(s, n)| (s + 1.0) / (n + 2.0)).collect())
}

/// Observed context frequencies with one added count per context.
pub fn context_frequencies(traj: &Trajectory, n_contexts: usize) -> Result<Vec<f64>> {
    let mut counts = vec![1.0; n_contexts];
    for s in traj.steps() {
        counts[context_of(s.context, n_contexts)?] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    Ok(counts.into_iter().map(|c| c / total).collect())
}

fn context_of(context: Option<usize>, n_contexts: usize) -> Result<usize> {
    let c = context.ok_or(Error::MissingContext)?;
    if c >= n_contexts {
        return Err(Error::ContextOutOfRange { context: c, n_contexts });
    }
    Ok(c)
}

/// Whether `(θ, η)` is a valid parameter: `0 ≤ θ + η(s) ≤ 1` and
/// `0 ≤ η(s) ≤ 1` for every context.
pub fn feasible(theta: f64, eta: &[f64]) -> bool {
    theta > -1.0 && theta < 1.0 && eta.iter().all(|&e| (0.0..=1.0).contains(&e) && (0.0..=1.0).contains(&(e + theta)))
}

/// `ρ(θ) = |ρ₁(θ) + ρ₀(θ)|` with `ψ̃₁ = y − θ − η̂(s)` on arm 1,
/// `ψ̃₀ = −(y − η̂(s))` on arm 0, and `η̂` the predictable estimate from
/// earlier rounds (or the known baseline). An arm that was never pulled
/// contributes 0.
pub fn contextual_rho(traj: &Trajectory, theta: f64, n_contexts: usize, eta: &EtaPlugin) -> Result<f64> {
    if traj.n_arms() != 2 {
        return Err(invalid("n_arms", "the contextual procedure needs two arms"));
    }
    let mut succ = vec![0.0; n_contexts];
    let mut pulls = vec![0.0; n_contexts];
    let mut sum = [0.0; 2];
    let mut n = [0u64; 2];
    for s in traj.steps() {
        let c = context_of(s.context, n_contexts)?;
        let e = match eta {
            EtaPlugin::Laplace => (succ[c] + 1.0) / (pulls[c] + 2.0),
            EtaPlugin::Known { baseline } => *baseline.get(c).ok_or(Error::ContextOutOfRange {
                context: c,
                n_contexts: baseline.len(),
            })?,
        };
        if s.action == 1 {
            sum[1] += s.reward - theta - e;
            n[1] += 1;
        } else {
            sum[0] -= s.reward - e;
            n[0] += 1;
            succ[c] += s.reward;
            pulls[c] += 1.0;
        }
    }
    let part = |a: usize| if n[a] == 0 { 0.0 } else { sum[a] / n[a] as f64 };
    Ok((part(1) + part(0)).abs())
}

/// Outcome of the contextual procedure on a `θ` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualSet {
    pub accepted: Vec<f64>,
    /// Grid values excluded because `(θ, η̂_τ)` is not a valid parameter.
    pub infeasible: Vec<f64>,
    pub hull: Option<Interval>,
    pub eta_hat: Vec<f64>,
    pub context_probs: Vec<f64>,
}

impl ContextualInversion {
    pub fn validate(&self) -> Result<()> {
        check_inner_reps(self.alpha, self.r_inner)?;
        if self.n_contexts == 0 {
            return Err(invalid("n_contexts", "must be positive"));
        }
        Ok(())
    }

    /// The plug-ins `(η̂_τ, context law)` fitted on `traj`.
    pub fn plug_ins(&self, traj: &Trajectory) -> Result<(Vec<f64>, Vec<f64>)> {
        let eta = match &self.eta {
            EtaPlugin::Laplace => laplace_eta(traj, self.n_contexts)?,
            EtaPlugin::Known { baseline } => baseline.clone(),
        };
        let probs = match &self.contexts {
            ContextLaw::Empirical => context_frequencies(traj, self.n_contexts)?,
            ContextLaw::Known { probs } => probs.clone(),
        };
        Ok((eta, probs))
    }

    /// `κ_{1−α}(θ, η)` from replays at effect `θ`, baseline `eta` and
    /// context law `probs`.
    pub fn quantile(&self, theta: f64, eta: &[f64], probs: &[f64], outer: u64, point: u64) -> Result<f64> {
        self.validate()?;
        let model = OutcomeModel::contextual_bernoulli(theta, eta.to_vec(), probs.to_vec())?;
        check_compatible(&model, &self.design, &self.stopping)?;
        let mut v = try_replicate(0..self.r_inner, |r| {
            let mut rng = derive_stream(self.seed, inner_stream_index(outer, point, r));
            let mut traj = Trajectory::new(2);
            run_experiment_into(&model, &self.design, &self.stopping, &mut rng, &mut traj)?;
            contextual_rho(&traj, theta, self.n_contexts, &self.eta)
        })?;
        upper_quantile(&mut v, self.alpha)
    }

    /// Whether `θ` (grid point `point`) is accepted; `None` when infeasible.
    pub fn accepts(&self, traj: &Trajectory, theta: f64, point: u64, outer: u64) -> Result<Option<bool>> {
        let (eta, probs) = self.plug_ins(traj)?;
        if !feasible(theta, &eta) {
            return Ok(None);
        }
        let rho = contextual_rho(traj, theta, self.n_contexts, &self.eta)?;
        Ok(Some(rho <= self.quantile(theta, &eta, &probs, outer, point)?))
    }
}

/// `{θ : ρ(θ) ≤ κ_{1−α}(θ, η̂_τ)}` over `theta_grid`.
pub fn contextual_tentative_ci(traj: &Trajectory, inv: &ContextualInversion, theta_grid: &[f64], outer: u64) -> Result<ContextualSet> {
    inv.validate()?;
    let (eta_hat, context_probs) = inv.plug_ins(traj)?;
    let flags = try_replicate(0..theta_grid.len() as u64, |p| inv.accepts(traj, theta_grid[p as usize], p, outer))?;
    let mut accepted = Vec::new();
    let mut infeasible = Vec::new();
    for (&theta, f) in theta_grid.iter().zip(flags) {
        match f {
            None => infeasible.push(theta),
            Some(true) => accepted.push(theta),
            Some(false) => {}
        }
    }
    let hull = accepted.iter().copied().fold(None, |acc: Option<Interval>, x| {
        Some(acc.map_or(Interval::new(x, x), |iv| Interval::new(iv.lo.min(x), iv.hi.max(x))))
    });
    Ok(ContextualSet {
        accepted,
        infeasible,
        hull,
        eta_hat,
        context_probs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(n: u64) -> (Design, StoppingRule) {
        (Design::Uniform, StoppingRule::FixedHorizon { horizon: n })
    }

    #[test]
    fn statistic_ids_round_trip() {
        for s in [
            Statistic::EmDiff,
            Statistic::IpwDiff,
            Statistic::AipwScore,
            Statistic::ArmMeanAbs { arm: 3 },
            Statistic::Zero,
        ] {
            assert_eq!(Statistic::parse(&s.id()).unwrap(), s);
        }
        assert!(Statistic::parse("nope").is_err());
    }

    #[test]
    fn zero_statistic_has_zero_quantile() {
        let (design, stopping) = fixed(10);
        let cal = Calibration {
            design,
            stopping,
            statistic: Statistic::Zero,
            alpha: 0.1,
            r_inner: 200,
            seed: 1,
        };
        for m in [0.0, 0.3, 1.0] {
            assert_eq!(simulate_quantile(&cal, &[m, 0.5], 0, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn too_few_inner_reps() {
        assert!(check_inner_reps(0.1, 199).is_err());
        assert!(check_inner_reps(0.1, 200).is_ok());
        assert!(check_inner_reps(0.0, 1000).is_err());
    }

    #[test]
    fn grid_indexing() {
        let g = Grid::new(2, 101).unwrap();
        let idx = g.index(&[30, 50]);
        assert_eq!(g.coords(idx), vec![30, 50]);
        assert_eq!(g.point(idx), vec![0.3, 0.5]);
        assert_eq!(g.nearest(&[0.3, 0.5]), idx);
        assert_eq!(g.len(), 10_201);
    }

    #[test]
    fn marginal_examples() {
        let g = Grid::new(2, 11).unwrap();
        let single = ConfidenceSet {
            grid: g,
            accepted: vec![g.index(&[3, 5])],
            alpha: 0.1,
            empty: false,
        };
        let d = marginalize_ate(&single).unwrap();
        assert_eq!(d.deltas.len(), 1);
        assert!((d.deltas[0] - 0.2).abs() < 1e-12);
        let full = ConfidenceSet {
            grid: g,
            accepted: (0..g.len()).collect(),
            alpha: 0.1,
            empty: false,
        };
        let d = marginalize_ate(&full).unwrap();
        assert_eq!((d.hull.lo, d.hull.hi), (-1.0, 1.0));
        assert_eq!(d.deltas.len(), 21);
        let empty = ConfidenceSet {
            grid: g,
            accepted: vec![],
            alpha: 0.1,
            empty: true,
        };
        assert_eq!(marginalize_ate(&empty), Err(Error::EmptySet));
    }

    #[test]
    fn feasibility_region() {
        assert!(feasible(0.1, &[0.2, 0.9]));
        assert!(!feasible(0.2, &[0.2, 0.9]));
        assert!(!feasible(-0.3, &[0.2, 0.9]));
    }

    #[test]
    fn contextual_rho_vanishes_at_truth_with_much_data() {
        let model = OutcomeModel::contextual_bernoulli(0.1, vec![0.2, 0.5], vec![0.5, 0.5]).unwrap();
        let mut rng = derive_stream(3, 0);
        let traj = crate::run_experiment(&model, &Design::Uniform, &StoppingRule::FixedHorizon { horizon: 200_000 }, &mut rng).unwrap();
        let rho = contextual_rho(&traj, 0.1, 2, &EtaPlugin::Laplace).unwrap();
        assert!(rho < 0.01, "{rho}");
        let far = contextual_rho(&traj, 0.3, 2, &EtaPlugin::Laplace).unwrap();
        assert!((far - 0.2).abs() < 0.01, "{far}");
    }
}
