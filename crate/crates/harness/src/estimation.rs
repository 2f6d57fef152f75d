//! Outer replications of a scenario with the configured arm-mean
//! estimators: coverage, width, rejection and standardized-estimate tables.

use adaptinf::estimators::{
    aipw_scores, empirical_mean, ipw_estimate, sqrt_propensity_weights, variance_stabilized_weights, wald_ci, weighted_estimate,
    zhan_weights, EstimatorReport, OutcomeRegression, Scheme, TargetPolicy, VarianceSpec, WeightedScore, ZhanConvention,
};
use adaptinf::mclt::{ks_one_sample, ks_two_sample, normality_report, MixtureLimitSampler, MixtureVariances, ThreeZLimitSampler};
use adaptinf::special::normal_cdf;
use adaptinf::{derive_stream, run_experiment, Result, Trajectory};

use crate::config::{EstimationSpec, LimitLaw, MixtureSource, Scenario};
use crate::runner::{run_range, Partial};
use crate::table::{rate_cells, Cell, ResultTable};

/// Stream index of the limit-law sampler, disjoint from outer replications.
pub const LIMIT_STREAM: u64 = 1 << 62;

/// One estimator on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: Scheme,
    pub estimate: f64,
    pub stderr: f64,
    pub studentized: f64,
    pub root_horizon: f64,
    pub root_arm_count: f64,
    pub covered: bool,
    pub width: f64,
    pub rejected: bool,
    /// `U_T²/T` of the weighted score at the truth (AIPW methods).
    pub qvar_ratio: f64,
    pub error: Option<String>,
}

/// All estimators on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    pub rep: u64,
    pub stopped_at: u64,
    pub exhausted: bool,
    pub arm_pulls: u64,
    pub rows: Vec<MethodRow>,
}

#[derive(Debug)]
pub struct EstimationRun {
    pub reps: Vec<RepResult>,
    pub partial: Option<Partial>,
}

fn failed(method: Scheme, e: &adaptinf::Error) -> MethodRow {
    MethodRow {
        method,
        estimate: f64::NAN,
        stderr: f64::NAN,
        studentized: f64::NAN,
        root_horizon: f64::NAN,
        root_arm_count: f64::NAN,
        covered: false,
        width: f64::NAN,
        rejected: false,
        qvar_ratio: f64::NAN,
        error: Some(e.to_string()),
    }
}

fn report_for(traj: &Trajectory, spec: &EstimationSpec, method: Scheme, truth: f64) -> Result<(EstimatorReport, f64)> {
    let arm = spec.arm;
    let target = TargetPolicy::Arm { arm };
    let eta = OutcomeRegression::RunningMean { prior: spec.prior };
    let weights = match method {
        Scheme::EmpiricalMean => return Ok((empirical_mean(traj, arm)?, f64::NAN)),
        Scheme::Ipw => return Ok((ipw_estimate(traj, arm)?, f64::NAN)),
        Scheme::AipwSqrtProp => sqrt_propensity_weights(traj, arm)?,
        Scheme::AipwVarStab => variance_stabilized_weights(traj, &target, &eta, &VarianceSpec::default())?.weights,
        Scheme::AipwZhan => zhan_weights(traj, &target, ZhanConvention::default())?,
    };
    let phi = aipw_scores(traj, &target, &eta)?;
    let mut report = weighted_estimate(&phi, &weights)?;
    report.scheme = method.id().into();
    let q = WeightedScore::new(&phi, &weights, truth)?.qvar() / traj.len() as f64;
    Ok((report, q))
}

fn method_row(traj: &Trajectory, spec: &EstimationSpec, method: Scheme, truth: f64, alpha: f64) -> MethodRow {
    let (report, qvar_ratio) = match report_for(traj, spec, method, truth) {
        Ok(r) => r,
        Err(e) => return failed(method, &e),
    };
    let null = spec.null_value.unwrap_or(truth);
    let err = report.estimate - truth;
    let n_arm = traj.arm_counts()[spec.arm] as f64;
    let (studentized, covered, width, rejected) = match wald_ci(&report, alpha) {
        Ok(ci) => (
            report.studentized(truth).unwrap_or(f64::NAN),
            ci.interval.contains(truth),
            ci.interval.width(),
            !ci.interval.contains(null),
        ),
        Err(_) => (f64::NAN, false, f64::NAN, false),
    };
    MethodRow {
        method,
        estimate: report.estimate,
        stderr: report.stderr.unwrap_or(f64::NAN),
        studentized,
        root_horizon: (traj.len() as f64).sqrt() * err,
        root_arm_count: n_arm.sqrt() * err,
        covered,
        width,
        rejected,
        qvar_ratio,
        error: None,
    }
}

fn spec_of(scenario: &Scenario) -> Result<&EstimationSpec> {
    scenario.estimation.as_ref().ok_or(adaptinf::Error::InvalidParameter {
        name: "estimation",
        reason: "the scenario has no [estimation] section".into(),
    })
}

/// Runs replications `range` of the scenario. Replication `r` uses stream
/// `r` of the master seed, so any split of the range gives the same rows.
pub fn run_scenario(scenario: &Scenario, range: std::ops::Range<u64>) -> Result<EstimationRun> {
    let spec = spec_of(scenario)?;
    let truth = scenario.true_arm_mean(spec.arm);
    let out = run_range(range, |r| {
        let traj = run_experiment(
            &scenario.model,
            &scenario.design,
            &scenario.stopping,
            &mut derive_stream(scenario.seed, r),
        )?;
        Ok(RepResult {
            rep: r,
            stopped_at: traj.stopped_at(),
            exhausted: traj.exhausted(),
            arm_pulls: traj.arm_counts()[spec.arm],
            rows: spec
                .methods
                .iter()
                .map(|&m| method_row(&traj, spec, m, truth, scenario.alpha))
                .collect(),
        })
    });
    Ok(EstimationRun {
        reps: out.results,
        partial: out.partial,
    })
}

pub const REPLICATION_COLUMNS: [&str; 15] = [
    "rep",
    "method",
    "stopped_at",
    "exhausted",
    "arm_pulls",
    "estimate",
    "stderr",
    "studentized",
    "root_horizon",
    "root_arm_count",
    "covered",
    "width",
    "rejected",
    "qvar_ratio",
    "error",
];

/// One row per replication and method.
pub fn replication_table(run: &EstimationRun) -> ResultTable {
    let mut t = ResultTable::new(&REPLICATION_COLUMNS);
    for rep in &run.reps {
        for m in &rep.rows {
            t.push(vec![
                rep.rep.into(),
                m.method.id().into(),
                rep.stopped_at.into(),
                rep.exhausted.into(),
                rep.arm_pulls.into(),
                m.estimate.into(),
                m.stderr.into(),
                m.studentized.into(),
                m.root_horizon.into(),
                m.root_arm_count.into(),
                m.covered.into(),
                m.width.into(),
                m.rejected.into(),
                m.qvar_ratio.into(),
                m.error.clone().unwrap_or_default().into(),
            ]);
        }
    }
    t
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

fn method_rows(run: &EstimationRun, method: Scheme) -> Vec<&MethodRow> {
    run.reps.iter().filter_map(|r| r.rows.iter().find(|m| m.method == method)).collect()
}

/// Per-method summary. Every rate is followed by its binomial standard
/// error. Failed replications count as non-covering and non-rejecting.
pub fn summary_table(scenario: &Scenario, run: &EstimationRun) -> Result<ResultTable> {
    let spec = spec_of(scenario)?;
    let truth = scenario.true_arm_mean(spec.arm);
    let mut t = ResultTable::new(&[
        "method",
        "reps",
        "failed",
        "coverage",
        "coverage_se",
        "mean_width",
        "rejection_rate",
        "rejection_se",
        "bias",
        "bias_se",
        "rmse",
        "studentized_ks_d",
        "studentized_ks_p",
        "qvar_ratio_mean",
    ]);
    if run.reps.is_empty() {
        return Ok(t);
    }
    for &m in &spec.methods {
        let rows = method_rows(run, m);
        let n = rows.len();
        let ok: Vec<&MethodRow> = rows.iter().copied().filter(|r| r.error.is_none()).collect();
        let covered = rows.iter().filter(|r| r.covered).count();
        let rejected = rows.iter().filter(|r| r.rejected).count();
        let widths: Vec<f64> = ok.iter().map(|r| r.width).filter(|w| w.is_finite()).collect();
        let errs: Vec<f64> = ok.iter().map(|r| r.estimate - truth).collect();
        let stud: Vec<f64> = ok.iter().map(|r| r.studentized).filter(|x| x.is_finite()).collect();
        let (ks_d, ks_p) = match ks_one_sample(&stud, normal_cdf) {
            Ok(k) => (k.d, k.p_value),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let qv: Vec<f64> = ok.iter().map(|r| r.qvar_ratio).filter(|x| x.is_finite()).collect();
        let [cov, cov_se] = rate_cells(covered, n);
        let [rej, rej_se] = rate_cells(rejected, n);
        let opt_mean = |x: &[f64]| if x.is_empty() { f64::NAN } else { mean(x) };
        t.push(vec![
            m.id().into(),
            n.into(),
            (n - ok.len()).into(),
            cov,
            cov_se,
            opt_mean(&widths).into(),
            rej,
            rej_se,
            opt_mean(&errs).into(),
            if errs.len() > 1 {
                sd(&errs) / (errs.len() as f64).sqrt()
            } else {
                f64::NAN
            }
            .into(),
            opt_mean(&errs.iter().map(|e| e * e).collect::<Vec<_>>()).sqrt().into(),
            ks_d.into(),
            ks_p.into(),
            opt_mean(&qv).into(),
        ]);
    }
    Ok(t)
}

/// Standardized values of `method` under the configured scaling, failed
/// and non-finite values dropped.
pub fn standardized(run: &EstimationRun, spec: &EstimationSpec, method: Scheme) -> Vec<f64> {
    method_rows(run, method)
        .iter()
        .map(|r| match spec.scaling {
            crate::config::Scaling::Studentized => r.studentized,
            crate::config::Scaling::RootHorizon => r.root_horizon,
            crate::config::Scaling::RootArmCount => r.root_arm_count,
        })
        .filter(|x| x.is_finite())
        .collect()
}

/// Draws from the configured limit law (`None` for the standard normal,
/// which is compared through its CDF).
pub fn limit_draws(scenario: &Scenario, spec: &EstimationSpec) -> Result<Option<Vec<f64>>> {
    let mut rng = derive_stream(scenario.seed, LIMIT_STREAM);
    let n = spec.limit_draws;
    Ok(match spec.limit {
        LimitLaw::StandardNormal => None,
        LimitLaw::IpwMixture { epsilon, variances } => {
            let v = mixture_variances(scenario, spec, epsilon, variances)?;
            let s = MixtureLimitSampler::new(v);
            Some((0..n).map(|_| s.sample(&mut rng)).collect())
        }
        LimitLaw::ThreeZ { epsilon } => {
            let s = ThreeZLimitSampler::new(epsilon)?;
            Some((0..n).map(|_| s.sample(&mut rng)).collect())
        }
    })
}

pub fn mixture_variances(scenario: &Scenario, spec: &EstimationSpec, epsilon: f64, source: MixtureSource) -> Result<MixtureVariances> {
    match source {
        MixtureSource::Oracle => {
            MixtureVariances::conditional_variance_oracle(epsilon, scenario.model.arm_mean(spec.arm), scenario.model.arm_variance(spec.arm))
        }
        MixtureSource::Display => MixtureVariances::display_form(epsilon),
    }
}

pub const DISTRIBUTION_COLUMNS: [&str; 16] = [
    "method",
    "scaling",
    "n",
    "mean",
    "sd",
    "skewness",
    "kurtosis",
    "ks_std_normal_d",
    "ks_std_normal_p",
    "best_fit_normal_d",
    "best_fit_normal_p",
    "limit",
    "limit_ks_d",
    "limit_ks_p",
    "limit_draws",
    "best_fit_rejected_01",
];

/// Normality diagnostics of the standardized estimates per method, and a
/// Kolmogorov–Smirnov comparison with the configured limit law.
pub fn distribution_table(scenario: &Scenario, run: &EstimationRun) -> Result<ResultTable> {
    let spec = spec_of(scenario)?;
    let mut t = ResultTable::new(&DISTRIBUTION_COLUMNS);
    if run.reps.is_empty() {
        return Ok(t);
    }
    let limit = limit_draws(scenario, spec)?;
    let limit_name = match spec.limit {
        LimitLaw::StandardNormal => "standard-normal",
        LimitLaw::IpwMixture { .. } => "ipw-mixture",
        LimitLaw::ThreeZ { .. } => "three-z",
    };
    for &m in &spec.methods {
        let x = standardized(run, spec, m);
        let rep = match normality_report(&x) {
            Ok(rep) => rep,
            // Too few finite values for the tests: report the count only.
            Err(adaptinf::Error::SampleTooSmall { .. }) => {
                let mut row: Vec<Cell> = vec![m.id().into(), spec.scaling.column().into(), x.len().into()];
                row.extend(std::iter::repeat_n(Cell::Num(f64::NAN), 8));
                row.push(limit_name.into());
                row.extend([Cell::Num(f64::NAN), Cell::Num(f64::NAN)]);
                row.push(limit.as_ref().map_or(0, Vec::len).into());
                row.push(Cell::Flag(false));
                t.push(row);
                continue;
            }
            Err(e) => return Err(e),
        };
        let lim = match &limit {
            Some(draws) => ks_two_sample(&x, draws)?,
            None => ks_one_sample(&x, normal_cdf)?,
        };
        t.push(vec![
            m.id().into(),
            spec.scaling.column().into(),
            rep.n.into(),
            rep.mean.into(),
            rep.sd.into(),
            rep.skewness.into(),
            rep.kurtosis.into(),
            rep.ks_vs_std_normal.d.into(),
            rep.ks_vs_std_normal.p_value.into(),
            rep.best_fit_normal_ks.d.into(),
            rep.best_fit_normal_ks.p_value.into(),
            limit_name.into(),
            lim.d.into(),
            lim.p_value.into(),
            limit.as_ref().map_or(0, Vec::len).into(),
            Cell::Flag(rep.best_fit_normal_ks.p_value < 0.01),
        ]);
    }
    Ok(t)
}

/// Arm counts, stop time and arm means of each replication.
pub fn simulate_table(scenario: &Scenario, range: std::ops::Range<u64>) -> (ResultTable, Vec<Trajectory>, Option<Partial>) {
    let k = scenario.model.n_arms();
    let keep = scenario.output.trajectories;
    let mut cols = vec!["rep".to_owned(), "stopped_at".into(), "exhausted".into()];
    cols.extend((0..k).map(|a| format!("pulls_{a}")));
    cols.extend((0..k).map(|a| format!("mean_{a}")));
    let start = range.start;
    let out = run_range(range, |r| {
        let traj = run_experiment(
            &scenario.model,
            &scenario.design,
            &scenario.stopping,
            &mut derive_stream(scenario.seed, r),
        )?;
        let mut row: Vec<Cell> = vec![r.into(), traj.stopped_at().into(), traj.exhausted().into()];
        row.extend(traj.arm_counts().iter().map(|&c| Cell::from(c)));
        row.extend((0..k).map(|a| Cell::from(empirical_mean(&traj, a).map_or(f64::NAN, |e| e.estimate))));
        Ok((row, (r - start < keep).then_some(traj)))
    });
    let mut t = ResultTable {
        columns: cols,
        rows: Vec::new(),
    };
    let mut trajs = Vec::new();
    for (row, traj) in out.results {
        t.rows.push(row);
        trajs.extend(traj);
    }
    (t, trajs, out.partial)
}
