//! Two-batch limit Thompson experiment with two arms.
//!
//! Batch 1 splits evenly; its arm means are `Z_1 ~ N(h, diag(σ₁², σ₂²))`.
//! Batch 2 assigns arm 2 the fraction `Π₂,₂ = Φ((Z₁,₂ − Z₁,₁)/√(2(σ₁²+σ₂²)))`
//! and, given `Z_1`, has arm means `Z_2 ~ N(h, diag(σ₁²/Π₂,₁, σ₂²/Π₂,₂))`.
//!
//! Statistics are tested two-sided through `|T|` against thresholds
//! calibrated by simulation under `h = 0`. The likelihood ratio is the exact
//! density ratio of this model; in the closed form
//! `Π_a exp(h_a Σ_b X_{b,a} − ½ h_a² I_a Σ_b w_{b,a})` the scores are
//! `X_{b,a} = I_a w_{b,a} Z_{b,a}` with information fractions `w_{1,a} = 1`
//! (batch 1 has variance `σ_a²`) and `w_{2,a} = Π₂,a`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mc::{proportion_se, replicate, upper_quantile};
use crate::rng::{derive_stream, RngStream};
use crate::special::normal_cdf;

/// Draws per random stream.
const CHUNK: u64 = 4096;

/// One draw of the limit experiment (arm 1 is index 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitDraw {
    pub z1: [f64; 2],
    pub pi2: [f64; 2],
    pub z2: [f64; 2],
    pub h: [f64; 2],
    pub sigma: [f64; 2],
}

/// `Π₂,₂` as a function of the batch-1 means.
pub fn second_batch_fraction(z1: [f64; 2], sigma: [f64; 2]) -> f64 {
    normal_cdf((z1[1] - z1[0]) / (2.0 * (sigma[0].powi(2) + sigma[1].powi(2))).sqrt())
}

pub fn sample_limit(h: [f64; 2], sigma: [f64; 2], rng: &mut RngStream) -> LimitDraw {
    let z1 = [h[0] + sigma[0] * rng.standard_normal(), h[1] + sigma[1] * rng.standard_normal()];
    let p22 = second_batch_fraction(z1, sigma);
    let pi2 = [1.0 - p22, p22];
    let z2 = [
        h[0] + sigma[0] / pi2[0].sqrt() * rng.standard_normal(),
        h[1] + sigma[1] / pi2[1].sqrt() * rng.standard_normal(),
    ];
    LimitDraw { z1, pi2, z2, h, sigma }
}

/// Pooled difference in means, arm 1 minus arm 2.
pub fn t_dim(d: &LimitDraw) -> f64 {
    let m1 = (0.5 * d.z1[0] + d.pi2[0] * d.z2[0]) / (0.5 + d.pi2[0]);
    let m2 = (0.5 * d.z1[1] + d.pi2[1] * d.z2[1]) / (0.5 + d.pi2[1]);
    m1 - m2
}

/// Difference in means exactly as displayed in the source (first pooled mean
/// built from `Z₁,₁` and `Z₁,₂`).
pub fn t_dim_literal(d: &LimitDraw) -> f64 {
    let m1 = (0.5 * d.z1[0] + d.pi2[0] * d.z1[1]) / (0.5 + d.pi2[0]);
    let m2 = (0.5 * d.z1[1] + d.pi2[1] * d.z2[1]) / (0.5 + d.pi2[1]);
    m1 - m2
}

/// Conditional-variance-weighted statistic: batch-1 and batch-2 standardized
/// differences, arm 2 minus arm 1.
pub fn t_zjm(d: &LimitDraw) -> f64 {
    let [s1, s2] = d.sigma.map(|s| s * s);
    (d.z1[1] - d.z1[0]) / (s1 + s2).sqrt() + (d.z2[1] - d.z2[0]) / (s1 / d.pi2[0] + s2 / d.pi2[1]).sqrt()
}

/// The displayed form, with the batch-1 difference in both terms.
pub fn t_zjm_literal(d: &LimitDraw) -> f64 {
    let [s1, s2] = d.sigma.map(|s| s * s);
    (d.z1[1] - d.z1[0]) / (s1 + s2).sqrt() + (d.z1[1] - d.z1[0]) / (s1 / d.pi2[0] + s2 / d.pi2[1]).sqrt()
}

/// `Π_a exp(h_a X_a − ½ h_a² I_a P_a)` for per-arm score sums `X_a` and
/// information-fraction sums `P_a`.
pub fn lrt_closed_form(score_sums: [f64; 2], fraction_sums: [f64; 2], h: [f64; 2], info: [f64; 2]) -> f64 {
    log_lrt_closed_form(score_sums, fraction_sums, h, info).exp()
}

pub fn log_lrt_closed_form(score_sums: [f64; 2], fraction_sums: [f64; 2], h: [f64; 2], info: [f64; 2]) -> f64 {
    (0..2)
        .map(|a| h[a] * score_sums[a] - 0.5 * h[a] * h[a] * info[a] * fraction_sums[a])
        .sum()
}

/// Score and fraction sums of a draw, with `I_a = 1/σ_a²`.
pub fn score_sums(d: &LimitDraw) -> ([f64; 2], [f64; 2]) {
    let info = d.sigma.map(|s| 1.0 / (s * s));
    let x = [0, 1].map(|a| info[a] * (d.z1[a] + d.pi2[a] * d.z2[a]));
    let p = [0, 1].map(|a| 1.0 + d.pi2[a]);
    (x, p)
}

/// Log likelihood ratio of `h` against `0` at a draw.
pub fn log_lrt(d: &LimitDraw, h: [f64; 2]) -> f64 {
    let info = d.sigma.map(|s| 1.0 / (s * s));
    let (x, p) = score_sums(d);
    log_lrt_closed_form(x, p, h, info)
}

/// Likelihood ratio of `h` against `0` at a draw.
pub fn lrt_ratio(d: &LimitDraw, h: [f64; 2]) -> f64 {
    log_lrt(d, h).exp()
}

/// Test statistic choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitStatistic {
    Dim,
    DimLiteral,
    Zjm,
    ZjmLiteral,
}

impl LimitStatistic {
    pub fn id(&self) -> &'static str {
        match self {
            LimitStatistic::Dim => "dim",
            LimitStatistic::DimLiteral => "dim-literal",
            LimitStatistic::Zjm => "zjm",
            LimitStatistic::ZjmLiteral => "zjm-literal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            LimitStatistic::Dim,
            LimitStatistic::DimLiteral,
            LimitStatistic::Zjm,
            LimitStatistic::ZjmLiteral,
        ]
        .into_iter()
        .find(|x| x.id() == s)
        .ok_or_else(|| invalid("statistic", format!("unknown statistic `{s}`")))
    }

    pub fn eval(&self, d: &LimitDraw) -> f64 {
        match self {
            LimitStatistic::Dim => t_dim(d),
            LimitStatistic::DimLiteral => t_dim_literal(d),
            LimitStatistic::Zjm => t_zjm(d),
            LimitStatistic::ZjmLiteral => t_zjm_literal(d),
        }
    }
}

/// `reps` draws at `h`, in stream block `block` of `seed` (each block of
/// draws uses its own range of stream indices).
pub fn draws(seed: u64, block: u64, h: [f64; 2], sigma: [f64; 2], reps: u64) -> Vec<LimitDraw> {
    let chunks = reps.div_ceil(CHUNK);
    let parts = replicate(0..chunks, |c| {
        let mut rng = derive_stream(seed, (block << 32) | c);
        let n = CHUNK.min(reps - c * CHUNK);
        (0..n).map(|_| sample_limit(h, sigma, &mut rng)).collect::<Vec<_>>()
    });
    parts.into_iter().flatten().collect()
}

/// Empirical `(1−α)`-quantile of `|T|` over null draws.
pub fn calibrate_size(stat: LimitStatistic, null_draws: &[LimitDraw], alpha: f64) -> Result<f64> {
    check_reps(null_draws.len(), alpha)?;
    let mut v: Vec<f64> = null_draws.iter().map(|d| stat.eval(d).abs()).collect();
    upper_quantile(&mut v, alpha)
}

/// Empirical `(1−α)`-quantile of an arbitrary statistic sample.
pub fn calibrate_values(mut values: Vec<f64>, alpha: f64) -> Result<f64> {
    check_reps(values.len(), alpha)?;
    upper_quantile(&mut values, alpha)
}

fn check_reps(n: usize, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1)"));
    }
    if (n as f64) < 20.0 / alpha {
        return Err(invalid("reps", format!("need at least 20/alpha = {} draws", (20.0 / alpha).ceil())));
    }
    Ok(())
}

/// One row of a power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub h1: f64,
    pub h2: f64,
    pub stat: String,
    pub power: f64,
    pub se: f64,
    /// Power of the likelihood-ratio test of `h` against `0`.
    pub envelope: f64,
}

/// Settings of a power study.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerStudy {
    pub sigma: [f64; 2],
    pub alpha: f64,
    pub reps: u64,
    pub seed: u64,
}

/// Result of a power study: calibrated thresholds and the power table.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerCurve {
    pub thresholds: Vec<(LimitStatistic, f64)>,
    pub null_rejection: Vec<(LimitStatistic, f64, f64)>,
    pub rows: Vec<PowerRow>,
}

/// Power of each statistic along `h_grid`, plus the likelihood-ratio
/// envelope. Null draws use stream block 0, an independent null sample for
/// size checks block 1, and grid point `j` block `j + 2`.
pub fn power_curve(study: &PowerStudy, stats: &[LimitStatistic], h_grid: &[[f64; 2]]) -> Result<PowerCurve> {
    if !(study.sigma[0] > 0.0 && study.sigma[1] > 0.0) {
        return Err(invalid("sigma", "must be positive"));
    }
    check_reps(study.reps as usize, study.alpha)?;
    let null = draws(study.seed, 0, [0.0, 0.0], study.sigma, study.reps);
    let mut thresholds = Vec::new();
    for &s in stats {
        thresholds.push((s, calibrate_size(s, &null, study.alpha)?));
    }
    let fresh_null = draws(study.seed, 1, [0.0, 0.0], study.sigma, study.reps);
    let n = study.reps as usize;
    let null_rejection = thresholds
        .iter()
        .map(|&(s, c)| {
            let p = fresh_null.iter().filter(|d| s.eval(d).abs() > c).count() as f64 / n as f64;
            (s, p, proportion_se(p, n))
        })
        .collect();
    let mut rows = Vec::new();
    for (j, &h) in h_grid.iter().enumerate() {
        let alt = draws(study.seed, j as u64 + 2, h, study.sigma, study.reps);
        let envelope = if h == [0.0, 0.0] {
            study.alpha
        } else {
            let c = calibrate_values(null.iter().map(|d| log_lrt(d, h)).collect(), study.alpha)?;
            alt.iter().filter(|d| log_lrt(d, h) > c).count() as f64 / n as f64
        };
        for &(s, c) in &thresholds {
            let p = alt.iter().filter(|d| s.eval(d).abs() > c).count() as f64 / n as f64;
            rows.push(PowerRow {
                h1: h[0],
                h2: h[1],
                stat: s.id().into(),
                power: p,
                se: proportion_se(p, n),
                envelope,
            });
        }
    }
    Ok(PowerCurve {
        thresholds,
        null_rejection,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn draw(z1: [f64; 2], pi2: [f64; 2], z2: [f64; 2]) -> LimitDraw {
        LimitDraw {
            z1,
            pi2,
            z2,
            h: [0.0, 0.0],
            sigma: [1.0, 1.0],
        }
    }

    #[test]
    fn fraction_identities() {
        assert_eq!(second_batch_fraction([0.3, 0.3], [1.0, 2.0]), 0.5);
        let s = [1.0f64, 2.0];
        let gap = (2.0 * (s[0] * s[0] + s[1] * s[1])).sqrt();
        assert_abs_diff_eq!(second_batch_fraction([0.0, gap], s), 0.841_344_746_068_543, epsilon = 1e-12);
    }

    #[test]
    fn statistic_examples() {
        assert_eq!(t_dim(&draw([2.0, 2.0], [0.3, 0.7], [2.0, 2.0])), 0.0);
        assert_abs_diff_eq!(t_dim(&draw([1.5, -0.5], [0.5, 0.5], [1.5, -0.5])), 2.0, epsilon = 1e-15);
        assert_eq!(t_zjm(&draw([0.7, 0.7], [0.5, 0.5], [0.1, 0.1])), 0.0);
    }

    #[test]
    fn lrt_examples() {
        let d = draw([0.4, -1.0], [0.2, 0.8], [1.0, 0.5]);
        assert_eq!(lrt_ratio(&d, [0.0, 0.0]), 1.0);
        let (h, i, p) = (0.7, 2.0, 1.3);
        let v = lrt_closed_form([i * h * p, 0.0], [p, 0.0], [h, 0.0], [i, 1.0]);
        assert_abs_diff_eq!(v, (0.5 * h * h * i * p).exp(), epsilon = 1e-12);
    }

    #[test]
    fn zjm_threshold_matches_normal_quantile() {
        let null = draws(5, 0, [0.0, 0.0], [1.0, 1.0], 200_000);
        let c = calibrate_size(LimitStatistic::Zjm, &null, 0.05).unwrap();
        assert!((c - 2f64.sqrt() * 1.959_963_984_540_054).abs() < 0.03, "{c}");
        let mean_pi: f64 = null.iter().map(|d| d.pi2[1]).sum::<f64>() / null.len() as f64;
        assert!((mean_pi - 0.5).abs() < 3.0 * 0.3 / (null.len() as f64).sqrt());
    }
}
