//! Martingale CLT diagnostics, Kolmogorov–Smirnov tests and samplers of the
//! non-normal limit laws of adaptive estimators.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::WeightedScore;
use crate::rng::RngStream;
use crate::special::normal_cdf;

/// Negligibility ratio above which a score sequence is flagged.
pub const NEGLIGIBILITY_FLAG: f64 = 0.1;

/// Summaries of a martingale-difference array `X_{t,T}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsDiagnostics {
    pub max_abs_term: f64,
    /// `U_T² = Σ X²`.
    pub qvar: f64,
    #[serde(skip)]
    pub qvar_path: Vec<f64>,
    /// `max X² / U_T²`.
    pub negligibility_ratio: f64,
    /// Set when `negligibility_ratio > NEGLIGIBILITY_FLAG`.
    pub flagged: bool,
}

/// Diagnostics of the terms of `scores`.
pub fn diagnose(scores: &WeightedScore) -> Result<MdsDiagnostics> {
    diagnose_terms(&scores.terms)
}

/// Diagnostics of an explicit array of terms.
pub fn diagnose_terms(terms: &[f64]) -> Result<MdsDiagnostics> {
    if terms.is_empty() {
        return Err(Error::SampleTooSmall { needed: 1, got: 0 });
    }
    if terms.iter().any(|x| x.is_nan()) {
        return Err(Error::NanInput);
    }
    let mut acc = 0.0;
    let mut max_sq: f64 = 0.0;
    let mut qvar_path = Vec::with_capacity(terms.len());
    for x in terms {
        let sq = x * x;
        acc += sq;
        max_sq = max_sq.max(sq);
        qvar_path.push(acc);
    }
    let ratio = if acc > 0.0 { max_sq / acc } else { 0.0 };
    Ok(MdsDiagnostics {
        max_abs_term: max_sq.sqrt(),
        qvar: acc,
        qvar_path,
        negligibility_ratio: ratio,
        flagged: ratio > NEGLIGIBILITY_FLAG,
    })
}

/// Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p_value: f64,
}

/// `P(K > λ)` for the Kolmogorov distribution, series truncated at 100 terms.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // The alternating series is inaccurate here; the survival function is
        // 1 to within 1e-10.
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

fn check_sample(x: &[f64]) -> Result<()> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInput);
    }
    if x.len() < 10 {
        return Err(Error::SampleTooSmall { needed: 10, got: x.len() });
    }
    Ok(())
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// One-sample KS test of `sample` against the continuous cdf `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<KsResult> {
    check_sample(sample)?;
    let xs = sorted(sample);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(KsResult { d, p_value: ks_p(d, n) })
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    check_sample(a)?;
    check_sample(b)?;
    let xa = sorted(a);
    let xb = sorted(b);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(KsResult {
        d,
        p_value: ks_p(d, na * nb / (na + nb)),
    })
}

/// Variances of the two components of the IPW limit under explore-then-commit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureVariances {
    pub v1: f64,
    pub v2: f64,
}

impl MixtureVariances {
    /// Values displayed alongside the limit statement:
    /// `2 + (1-ε)²/2` and `2 + ε²/2`.
    pub fn display_form(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(MixtureVariances {
            v1: 2.0 + (1.0 - epsilon).powi(2) / 2.0,
            v2: 2.0 + epsilon * epsilon / 2.0,
        })
    }

    /// Direct conditional-variance computation. After the exploration phase
    /// a term `1{A_t=1} Y_t / g_t(1) − μ` has conditional variance
    /// `(σ² + μ²)/g − μ²` with `g = 1 − ε` when arm 1 leads and `g = ε`
    /// otherwise, each with probability 1/2 under equal means; the
    /// exploration phase is negligible for fixed `t0`.
    pub fn conditional_variance_oracle(epsilon: f64, mean: f64, variance: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let m2 = variance + mean * mean;
        Ok(MixtureVariances {
            v1: m2 / (1.0 - epsilon) - mean * mean,
            v2: m2 / epsilon - mean * mean,
        })
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(invalid("epsilon", "must lie in (0, 0.5]"));
    }
    Ok(())
}

/// Sampler of `½ N(0, v1) + ½ N(0, v2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureLimitSampler {
    pub variances: MixtureVariances,
}

impl MixtureLimitSampler {
    pub fn new(variances: MixtureVariances) -> Self {
        MixtureLimitSampler { variances }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let v = if rng.uniform() < 0.5 {
            self.variances.v1
        } else {
            self.variances.v2
        };
        v.sqrt() * rng.standard_normal()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        0.5 * normal_cdf(x / self.variances.v1.sqrt()) + 0.5 * normal_cdf(x / self.variances.v2.sqrt())
    }
}

/// Sampler of the limit of the standardized arm-1 sample mean under
/// explore-then-commit with `t0 = T/2`:
/// `(Z1/√2 + s(ε) Z3) / d(ε)` where `s = √(1−ε)`, `d = √(1/2 + 1 − ε)` when
/// `Z1 > Z2` and `s = √ε`, `d = √(1/2 + ε)` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeZLimitSampler {
    epsilon: f64,
}

impl ThreeZLimitSampler {
    pub fn new(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(ThreeZLimitSampler { epsilon })
    }

    /// The displayed ratio for given normals.
    pub fn transform(&self, z1: f64, z2: f64, z3: f64) -> f64 {
        let e = self.epsilon;
        if z1 > z2 {
            (z1 / 2f64.sqrt() + (1.0 - e).sqrt() * z3) / (1.5 - e).sqrt()
        } else {
            (z1 / 2f64.sqrt() + e.sqrt() * z3) / (0.5 + e).sqrt()
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let z1 = rng.standard_normal();
        let z2 = rng.standard_normal();
        let z3 = rng.standard_normal();
        self.transform(z1, z2, z3)
    }
}

/// Normality summary of a standardized sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ks_vs_std_normal: KsResult,
    /// KS against the normal with the sample's own mean and sd.
    pub best_fit_normal_ks: KsResult,
    pub skewness: f64,
    /// Excess kurtosis.
    pub kurtosis: f64,
    /// Large-sample standard errors `sqrt(6/n)` and `sqrt(24/n)`.
    pub skewness_se: f64,
    pub kurtosis_se: f64,
}

/// Mean, sd, skewness and excess kurtosis.
pub fn moments(x: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    (mean, m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

pub fn normality_report(sample: &[f64]) -> Result<NormalityReport> {
    if sample.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInput);
    }
    if sample.len() < 100 {
        return Err(Error::SampleTooSmall {
            needed: 100,
            got: sample.len(),
        });
    }
    let (mean, sd, skewness, kurtosis) = moments(sample);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("constant sample"));
    }
    let n = sample.len();
    Ok(NormalityReport {
        n,
        mean,
        sd,
        ks_vs_std_normal: ks_one_sample(sample, normal_cdf)?,
        best_fit_normal_ks: ks_one_sample(sample, |x| normal_cdf((x - mean) / sd))?,
        skewness,
        kurtosis,
        skewness_se: (6.0 / n as f64).sqrt(),
        kurtosis_se: (24.0 / n as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn diagnose_examples() {
        let t = 400usize;
        let c = (t as f64).powf(-0.5);
        let d = diagnose_terms(&vec![c; t]).unwrap();
        assert_abs_diff_eq!(d.qvar, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.negligibility_ratio, 1.0 / t as f64, epsilon = 1e-15);
        let mut spike = vec![0.0; t];
        spike[7] = (t as f64).powf(-0.25);
        let d = diagnose_terms(&spike).unwrap();
        assert_eq!(d.negligibility_ratio, 1.0);
        assert!(d.flagged);
        assert!(d.qvar_path.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn ks_self_reference() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.37).collect();
        let r = ks_two_sample(&xs, &xs).unwrap();
        assert!(r.d <= 1.0 / 50.0);
    }

    #[test]
    fn ks_shifted_normal() {
        let mut rng = derive_stream(11, 0);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.standard_normal()).collect();
        let exact = 2.0 * normal_cdf(0.5) - 1.0;
        let r = ks_one_sample(&xs, |x| normal_cdf(x - 1.0)).unwrap();
        assert!((r.d - exact).abs() < 0.02, "{}", r.d);
        assert!(ks_one_sample(&xs, normal_cdf).unwrap().d < 0.0163 * 1.5);
    }

    #[test]
    fn ks_errors() {
        assert!(ks_one_sample(&[0.0; 5], normal_cdf).is_err());
        let mut x = vec![0.0; 20];
        x[3] = f64::NAN;
        assert_eq!(ks_one_sample(&x, normal_cdf), Err(Error::NanInput));
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Critical values of the Kolmogorov distribution.
        assert_abs_diff_eq!(kolmogorov_survival(1.358), 0.05, epsilon = 5e-4);
        assert_abs_diff_eq!(kolmogorov_survival(1.628), 0.01, epsilon = 2e-4);
    }

    #[test]
    fn mixture_variances() {
        let p = MixtureVariances::display_form(0.1).unwrap();
        assert_abs_diff_eq!(p.v1, 2.405, epsilon = 1e-12);
        assert_abs_diff_eq!(p.v2, 2.005, epsilon = 1e-12);
        let o = MixtureVariances::conditional_variance_oracle(0.1, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(o.v1, 1.0 / 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(o.v2, 10.0, epsilon = 1e-12);
        let half = MixtureVariances::display_form(0.5).unwrap();
        assert_eq!(half.v1, half.v2);
    }

    #[test]
    fn three_z_at_half_is_normal() {
        let s = ThreeZLimitSampler::new(0.5).unwrap();
        let mut rng = derive_stream(3, 1);
        let xs: Vec<f64> = (0..10_000).map(|_| s.sample(&mut rng)).collect();
        let r = normality_report(&xs).unwrap();
        assert!(r.ks_vs_std_normal.p_value > 0.001);
        assert!(r.kurtosis.abs() < 5.0 * r.kurtosis_se);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        assert_eq!(normality_report(&[1.0; 200]), Err(Error::Degenerate("constant sample")));
    }
}
