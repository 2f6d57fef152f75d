//! Confidence sequences: time-uniform boundaries and the intervals built on
//! them.
//!
//! A [`Boundary`] gives a half-width `u(V)` for a sum `S_t` of centred,
//! sub-Gaussian increments with cumulative variance `V_t`, such that
//! `P(∃ t ≥ t0 : |S_t| > u(V_t)) ≤ α`. Before the warm-up round `t0` the
//! radius is infinite (the interval is the whole line).
//!
//! * `alpha-spending`: doubling epochs `j = 1, 2, …` in `V` with budgets
//!   `α_j = α·2^(-j)`. Epoch `j` contributes the linear Ville-inequality line
//!   `a_j/λ_j + λ_j V/2`, `a_j = ln(2/α_j)`, tuned at `V = m·2^(j-1/2)`; the
//!   radius is the minimum over the lines up to three epochs past the current
//!   one.
//! * `stitched`: polynomial stitching, `u = k1·sqrt(V·ℓ(V))` with
//!   `ℓ(V) = s·ln ln(ηV/m) + ln(ζ(s) / ((α/2)·(ln η)^s))`,
//!   `k1 = (η^(1/4) + η^(-1/4))/√2`; defaults `η = 2`, `s = 1.4`.
//! * `normal-mixture`: `u = sqrt((V+ρ)·ln((V+ρ)/(ρα²)))`, with `ρ` chosen to
//!   minimise `u` at `V = m` unless given.
//!
//! Here `m = σ²·t0` is the variance accumulated by the warm-up round.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::special::riemann_zeta;
use crate::trajectory::Trajectory;

fn default_eta() -> f64 {
    2.0
}

fn default_s() -> f64 {
    1.4
}

/// Shape of the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundaryKind {
    AlphaSpending,
    Stitched {
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default = "default_s")]
        s: f64,
    },
    NormalMixture {
        #[serde(default)]
        rho: Option<f64>,
    },
}

impl BoundaryKind {
    pub fn stitched() -> Self {
        BoundaryKind::Stitched { eta: 2.0, s: 1.4 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BoundaryKind::AlphaSpending => "alpha-spending",
            BoundaryKind::Stitched { .. } => "stitched",
            BoundaryKind::NormalMixture { .. } => "normal-mixture",
        }
    }
}

fn default_warmup() -> u64 {
    100
}

fn default_sigma() -> f64 {
    1.0
}

/// Time-uniform boundary at level `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    pub kind: BoundaryKind,
    pub alpha: f64,
    /// No coverage is claimed before this round.
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    /// Sub-Gaussian scale of one increment.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
}

impl Boundary {
    pub fn new(kind: BoundaryKind, alpha: f64, warmup: u64, sigma: f64) -> Result<Self> {
        let b = Boundary {
            kind,
            alpha,
            warmup,
            sigma,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", "must lie in (0, 1)"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be positive"));
        }
        match &self.kind {
            BoundaryKind::Stitched { eta, s } => {
                if !(*eta > 1.0) || !(*s > 1.0) {
                    return Err(invalid("eta", "stitching needs eta > 1 and s > 1"));
                }
            }
            BoundaryKind::NormalMixture { rho: Some(rho) } if !(*rho > 0.0) => {
                return Err(invalid("rho", "must be positive"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Variance accumulated by the warm-up round, `σ²·max(t0, 1)`.
    pub fn base_variance(&self) -> f64 {
        self.sigma * self.sigma * self.warmup.max(1) as f64
    }

    /// Mixing parameter of the normal-mixture boundary.
    pub fn mixture_rho(&self) -> f64 {
        match self.kind {
            BoundaryKind::NormalMixture { rho: Some(rho) } => rho,
            _ => self.base_variance() * tuned_mixture_ratio(self.alpha),
        }
    }

    /// Half-width for the sum at round `t` with cumulative variance `v`.
    pub fn radius(&self, t: u64, v: f64) -> Result<f64> {
        if t < 1 {
            return Err(invalid("t", "rounds start at 1"));
        }
        if !(v > 0.0) {
            return Err(invalid("v", "cumulative variance must be positive"));
        }
        if t < self.warmup {
            return Ok(f64::INFINITY);
        }
        Ok(self.radius_unchecked(v))
    }

    /// Half-width for the iid case `V = σ²·t`.
    pub fn radius_iid(&self, t: u64) -> Result<f64> {
        self.radius(t, self.sigma * self.sigma * t as f64)
    }

    fn radius_unchecked(&self, v: f64) -> f64 {
        let m = self.base_variance();
        match &self.kind {
            BoundaryKind::AlphaSpending => {
                let epoch = ((v / m).log2().floor() as i64 + 1).max(1) as i32;
                let mut best = f64::INFINITY;
                for j in 1..=epoch + 3 {
                    let alpha_j = self.alpha * 0.5f64.powi(j);
                    let a = (2.0 / alpha_j).ln();
                    let v_star = m * 2f64.powf(j as f64 - 0.5);
                    let lambda = (2.0 * a / v_star).sqrt();
                    best = best.min(a / lambda + lambda * v / 2.0);
                }
                best
            }
            BoundaryKind::Stitched { eta, s } => {
                if v < m {
                    return f64::INFINITY;
                }
                let k1 = (eta.powf(0.25) + eta.powf(-0.25)) / std::f64::consts::SQRT_2;
                let ell = s * (eta * v / m).ln().ln() + (riemann_zeta(*s) / (0.5 * self.alpha * eta.ln().powf(*s))).ln();
                k1 * (v * ell).sqrt()
            }
            BoundaryKind::NormalMixture { .. } => {
                let rho = self.mixture_rho();
                normal_mixture_radius(v, rho, self.alpha)
            }
        }
    }
}

/// `sqrt((V+ρ)·ln((V+ρ)/(ρα²)))`.
pub fn normal_mixture_radius(v: f64, rho: f64, alpha: f64) -> f64 {
    ((v + rho) * ((v + rho) / (rho * alpha * alpha)).ln()).sqrt()
}

/// Ratio `r = ρ/V` minimising the normal-mixture radius at `V`: the root of
/// `ln((1+r)/r) + 2 ln(1/α) − 1/r`.
pub fn tuned_mixture_ratio(alpha: f64) -> f64 {
    let f = |r: f64| ((1.0 + r) / r).ln() + 2.0 * (1.0 / alpha).ln() - 1.0 / r;
    let (mut lo, mut hi) = (1e-6, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed interval, possibly unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn whole_line() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

/// Rewards of arm `k` in the order it was pulled: `Y_{t_k(1)}, Y_{t_k(2)}, …`.
pub fn arm_time_reindex(traj: &Trajectory, arm: usize) -> Vec<f64> {
    traj.steps().iter().filter(|s| s.action == arm).map(|s| s.reward).collect()
}

/// Interval for a mean from `n` iid draws with sum `sum`.
pub fn mean_cs(sum: f64, n: u64, boundary: &Boundary) -> Interval {
    if n == 0 {
        return Interval::whole_line();
    }
    mean_cs_with_radius(sum, n, boundary.radius_iid(n).unwrap_or(f64::INFINITY))
}

/// [`mean_cs`] with the radius for `n` supplied (e.g. from
/// [`radius_table`]).
pub fn mean_cs_with_radius(sum: f64, n: u64, r: f64) -> Interval {
    if n == 0 {
        return Interval::whole_line();
    }
    if !r.is_finite() {
        return Interval::whole_line();
    }
    let nf = n as f64;
    let c = sum / nf;
    Interval::new(c - r / nf, c + r / nf)
}

/// Largest `n_max` served by [`radius_table`].
pub const RADIUS_TABLE_LIMIT: u64 = 1 << 24;

/// `radius_iid(n)` for `n = 0..=n_max` (entry 0 is infinite), computed once
/// per boundary and shared by every caller in the process.
pub fn radius_table(boundary: &Boundary, n_max: u64) -> Result<Arc<Vec<f64>>> {
    boundary.validate()?;
    if n_max > RADIUS_TABLE_LIMIT {
        return Err(invalid("n_max", "radius table too large"));
    }
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<Vec<f64>>>>> = OnceLock::new();
    let key = format!(
        "{:?}|{}|{}|{}|{n_max}",
        boundary.kind,
        boundary.alpha.to_bits(),
        boundary.warmup,
        boundary.sigma.to_bits()
    );
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("radius cache").get(&key) {
        return Ok(Arc::clone(t));
    }
    let mut table = Vec::with_capacity(n_max as usize + 1);
    table.push(f64::INFINITY);
    for n in 1..=n_max {
        table.push(boundary.radius_iid(n)?);
    }
    let table = Arc::new(table);
    cache.lock().expect("radius cache").insert(key, Arc::clone(&table));
    Ok(table)
}

/// Confidence sequence for the mean of arm `k` at the current time, built on
/// the arm's own clock `N_τ(k)`.
pub fn cs_for_arm_mean(traj: &Trajectory, arm: usize, boundary: &Boundary) -> Interval {
    let rewards = arm_time_reindex(traj, arm);
    let sum: f64 = rewards.iter().sum();
    mean_cs(sum, rewards.len() as u64, boundary)
}

/// Interval for `mean_k - mean_k'` from intervals for each mean; joint level
/// `2α` when each input has level `α`.
pub fn ate_combine(cs_k: Interval, cs_other: Interval) -> Interval {
    Interval::new(cs_k.lo - cs_other.hi, cs_k.hi - cs_other.lo)
}

/// Interval for the parameter of a weighted score sequence: the weighted
/// estimate plus or minus `u(U²)/Σω`, where `U² = Σ ω²(φ − θ̂)²`.
pub fn weighted_cs(phi: &[f64], weights: &[f64], boundary: &Boundary) -> Result<Interval> {
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
    let est = weights.iter().zip(phi).map(|(w, p)| w * p).sum::<f64>() / total;
    let v: f64 = weights.iter().zip(phi).map(|(w, p)| (w * (p - est)).powi(2)).sum();
    if !(v > 0.0) {
        return Ok(Interval::new(est, est));
    }
    let r = boundary.radius(phi.len() as u64, v)?;
    if !r.is_finite() {
        return Ok(Interval::whole_line());
    }
    Ok(Interval::new(est - r / total, est + r / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_kinds() -> Vec<BoundaryKind> {
        vec![
            BoundaryKind::AlphaSpending,
            BoundaryKind::stitched(),
            BoundaryKind::NormalMixture { rho: None },
        ]
    }

    #[test]
    fn normal_mixture_plug_in() {
        let b = Boundary::new(BoundaryKind::NormalMixture { rho: Some(1.0) }, 0.05, 1, 1.0).unwrap();
        let expected = (2.0 * (2.0f64 / 0.0025).ln()).sqrt();
        assert_abs_diff_eq!(b.radius(1, 1.0).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn smaller_alpha_is_wider() {
        for kind in all_kinds() {
            let wide = Boundary::new(kind.clone(), 0.01, 10, 1.0).unwrap();
            let narrow = Boundary::new(kind, 0.1, 10, 1.0).unwrap();
            for t in [10u64, 50, 1000, 100_000] {
                assert!(wide.radius_iid(t).unwrap() > narrow.radius_iid(t).unwrap());
            }
        }
    }

    #[test]
    fn stitched_beats_alpha_spending_late() {
        let s = Boundary::new(BoundaryKind::stitched(), 0.05, 100, 1.0).unwrap();
        let a = Boundary::new(BoundaryKind::AlphaSpending, 0.05, 100, 1.0).unwrap();
        assert!(s.radius_iid(100_000).unwrap() < a.radius_iid(100_000).unwrap());
    }

    #[test]
    fn warmup_gives_whole_line() {
        let b = Boundary::new(BoundaryKind::NormalMixture { rho: None }, 0.05, 100, 1.0).unwrap();
        assert_eq!(b.radius_iid(99).unwrap(), f64::INFINITY);
        assert!(b.radius_iid(100).unwrap().is_finite());
        assert!(b.radius(0, 1.0).is_err());
        assert!(b.radius(5, 0.0).is_err());
    }

    #[test]
    fn radius_over_t_nonincreasing_and_growth_bounded() {
        for kind in all_kinds() {
            let b = Boundary::new(kind, 0.05, 100, 1.0).unwrap();
            let mut prev = f64::INFINITY;
            let mut t = 100.0f64;
            while t <= 1e7 {
                let ti = t as u64;
                let u = b.radius_iid(ti).unwrap();
                assert!(u > 0.0 && u.is_finite());
                assert!(u / ti as f64 <= prev * (1.0 + 1e-12));
                prev = u / ti as f64;
                let lil = (ti as f64 * (ti as f64 + std::f64::consts::E.powi(2)).ln().ln()).sqrt();
                assert!(u / lil < 10.0);
                t *= 1.1;
            }
        }
    }

    #[test]
    fn tuned_ratio_is_stationary() {
        let r = tuned_mixture_ratio(0.05);
        let u = |r: f64| normal_mixture_radius(1.0, r, 0.05);
        assert!(u(r) <= u(r * 1.01) && u(r) <= u(r * 0.99));
    }

    #[test]
    fn interval_examples() {
        assert_eq!(
            ate_combine(Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)),
            Interval::new(-1.0, 1.0)
        );
        assert_eq!(
            ate_combine(Interval::new(0.3, 0.3), Interval::new(0.1, 0.1)),
            Interval::new(0.3 - 0.1, 0.3 - 0.1)
        );
        let b = Boundary::new(BoundaryKind::AlphaSpending, 0.05, 1, 1.0).unwrap();
        assert_eq!(mean_cs(0.0, 0, &b), Interval::whole_line());
    }

    #[test]
    fn weighted_cs_centre() {
        let b = Boundary::new(BoundaryKind::NormalMixture { rho: None }, 0.05, 1, 1.0).unwrap();
        let phi = [1.0, 2.0, 3.0, 2.0, 2.5];
        let w = [1.0, 2.0, 1.0, 1.0, 3.0];
        let iv = weighted_cs(&phi, &w, &b).unwrap();
        let est = (1.0 + 4.0 + 3.0 + 2.0 + 7.5) / 8.0;
        assert_abs_diff_eq!(0.5 * (iv.lo + iv.hi), est, epsilon = 1e-12);
        assert!(weighted_cs(&phi, &[0.0; 5], &b).is_err());
    }
}
