//! Coverage of confidence sets obtained by Monte Carlo test inversion.
//!
//! Coverage of the true mean vector only needs the quantile at the grid
//! point of the truth, and the marginal `Δ` interval covers the true `Δ`
//! as soon as one point on the truth's diagonal is accepted; both are
//! evaluated lazily. Quantiles are deterministic per `(outer, point)`, so
//! these answers equal the ones a full sweep of the grid would give.
//! Whole sets are computed for the first `full_sets` replications.

use serde::Serialize;

use adaptinf::invert::{
    contextual_tentative_ci, grid_confidence_set, marginalize_ate, quantile_map, refined_confidence_set, Calibration, ConfidenceSet,
    ContextLaw, ContextualInversion, EtaPlugin, Grid, LazyQuantiles, Statistic,
};
use adaptinf::{derive_stream, run_experiment, OutcomeModel, Result};

use crate::config::{InversionSpec, Scenario};
use crate::runner::{run_range, Partial};
use crate::table::{rate_cells, Cell, ResultTable};

/// Whole set of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetSummary {
    pub rep: u64,
    pub accepted: usize,
    pub contains_truth: bool,
    /// Hull of the marginal `Δ` set (grid) or of the accepted effects
    /// (contextual); `NaN` when empty.
    pub lo: f64,
    pub hi: f64,
    /// Grid points excluded as infeasible (contextual only).
    pub infeasible: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set: Option<ConfidenceSet>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub accepted_effects: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionRep {
    pub rep: u64,
    pub covered: bool,
    /// `None` when not applicable (more than two arms, contextual).
    pub delta_covered: Option<bool>,
    /// Contextual: the true effect was infeasible under the plug-in.
    pub infeasible: bool,
    pub points_evaluated: usize,
    pub full: Option<SetSummary>,
}

#[derive(Debug)]
pub struct InversionRun {
    pub truth_on_grid: bool,
    pub reps: Vec<InversionRep>,
    pub partial: Option<Partial>,
}

fn spec_of(scenario: &Scenario) -> Result<&InversionSpec> {
    scenario.inversion.as_ref().ok_or(adaptinf::Error::InvalidParameter {
        name: "inversion",
        reason: "the scenario has no [inversion] section".into(),
    })
}

/// The calibration shared by every replication of a grid scenario.
pub fn calibration(scenario: &Scenario) -> Result<Calibration> {
    let spec = spec_of(scenario)?;
    Ok(Calibration {
        design: scenario.design.clone(),
        stopping: scenario.stopping.clone(),
        statistic: Statistic::parse(&spec.statistic)?,
        alpha: scenario.alpha,
        r_inner: scenario.replications.inner,
        seed: scenario.seed,
    })
}

/// The contextual procedure's settings.
pub fn contextual(scenario: &Scenario) -> Result<ContextualInversion> {
    let spec = spec_of(scenario)?;
    Ok(ContextualInversion {
        design: scenario.design.clone(),
        stopping: scenario.stopping.clone(),
        n_contexts: scenario.model.n_contexts(),
        alpha: scenario.alpha,
        r_inner: scenario.replications.inner,
        seed: scenario.seed,
        eta: spec.eta.clone().unwrap_or(EtaPlugin::Laplace),
        contexts: spec.contexts.clone().unwrap_or(ContextLaw::Empirical),
    })
}

pub fn run_inversion(scenario: &Scenario, range: std::ops::Range<u64>) -> Result<InversionRun> {
    if let OutcomeModel::ContextualBernoulli { effect, .. } = scenario.model {
        run_contextual(scenario, effect, range)
    } else {
        run_grid(scenario, range)
    }
}

fn run_grid(scenario: &Scenario, range: std::ops::Range<u64>) -> Result<InversionRun> {
    let spec = spec_of(scenario)?;
    let cal = calibration(scenario)?;
    cal.validate()?;
    let k = scenario.model.n_arms();
    let grid = Grid::new(k, spec.grid_n)?;
    let means: Vec<f64> = (0..k).map(|a| scenario.model.arm_mean(a)).collect();
    let truth = grid.nearest(&means);
    let truth_on_grid = grid.point(truth) == means;
    let out = run_range(range, |r| {
        let traj = run_experiment(
            &scenario.model,
            &scenario.design,
            &scenario.stopping,
            &mut derive_stream(scenario.seed, r),
        )?;
        let lazy = LazyQuantiles::new(&cal, grid, r);
        let covered = lazy.accepts(&traj, truth)?;
        let delta_covered = if k == 2 { Some(lazy.covers_delta(&traj, truth)?) } else { None };
        let points_evaluated = lazy.evaluated();
        let full = if r < spec.full_sets {
            let set = match spec.refine {
                Some(step) => refined_confidence_set(&traj, &cal, grid, r, step)?,
                None => grid_confidence_set(&traj, cal.statistic, &quantile_map(&cal, grid, r)?)?,
            };
            let (lo, hi) = match marginalize_ate(&set) {
                Ok(d) if k == 2 => (d.hull.lo, d.hull.hi),
                _ => (f64::NAN, f64::NAN),
            };
            Some(SetSummary {
                rep: r,
                accepted: set.accepted.len(),
                contains_truth: set.contains(truth),
                lo,
                hi,
                infeasible: 0,
                set: Some(set),
                accepted_effects: Vec::new(),
            })
        } else {
            None
        };
        Ok(InversionRep {
            rep: r,
            covered,
            delta_covered,
            infeasible: false,
            points_evaluated,
            full,
        })
    });
    Ok(InversionRun {
        truth_on_grid,
        reps: out.results,
        partial: out.partial,
    })
}

fn run_contextual(scenario: &Scenario, effect: f64, range: std::ops::Range<u64>) -> Result<InversionRun> {
    let spec = spec_of(scenario)?;
    let inv = contextual(scenario)?;
    inv.validate()?;
    let thetas = spec
        .theta_grid
        .ok_or(adaptinf::Error::InvalidParameter {
            name: "theta_grid",
            reason: "required for a contextual model".into(),
        })?
        .values();
    let position = thetas.iter().position(|&t| t == effect);
    // Off-grid truths get their own point index past the grid.
    let point = position.unwrap_or(thetas.len()) as u64;
    let out = run_range(range, |r| {
        let traj = run_experiment(
            &scenario.model,
            &scenario.design,
            &scenario.stopping,
            &mut derive_stream(scenario.seed, r),
        )?;
        let verdict = inv.accepts(&traj, effect, point, r)?;
        let full = if r < spec.full_sets {
            let set = contextual_tentative_ci(&traj, &inv, &thetas, r)?;
            Some(SetSummary {
                rep: r,
                accepted: set.accepted.len(),
                contains_truth: set.accepted.contains(&effect),
                lo: set.hull.map_or(f64::NAN, |h| h.lo),
                hi: set.hull.map_or(f64::NAN, |h| h.hi),
                infeasible: set.infeasible.len(),
                set: None,
                accepted_effects: set.accepted,
            })
        } else {
            None
        };
        Ok(InversionRep {
            rep: r,
            covered: verdict == Some(true),
            delta_covered: None,
            infeasible: verdict.is_none(),
            points_evaluated: 1,
            full,
        })
    });
    Ok(InversionRun {
        truth_on_grid: position.is_some(),
        reps: out.results,
        partial: out.partial,
    })
}

pub fn inversion_summary(run: &InversionRun) -> ResultTable {
    let mut t = ResultTable::new(&[
        "reps",
        "coverage",
        "coverage_se",
        "delta_coverage",
        "delta_coverage_se",
        "infeasible_rate",
        "infeasible_se",
        "mean_points_evaluated",
        "truth_on_grid",
    ]);
    let n = run.reps.len();
    if n == 0 {
        return t;
    }
    let [c, c_se] = rate_cells(run.reps.iter().filter(|r| r.covered).count(), n);
    let deltas: Vec<bool> = run.reps.iter().filter_map(|r| r.delta_covered).collect();
    let [d, d_se] = if deltas.is_empty() {
        [Cell::Num(f64::NAN), Cell::Num(f64::NAN)]
    } else {
        rate_cells(deltas.iter().filter(|x| **x).count(), deltas.len())
    };
    let [i, i_se] = rate_cells(run.reps.iter().filter(|r| r.infeasible).count(), n);
    let pts = run.reps.iter().map(|r| r.points_evaluated as f64).sum::<f64>() / n as f64;
    t.push(vec![n.into(), c, c_se, d, d_se, i, i_se, pts.into(), run.truth_on_grid.into()]);
    t
}

pub fn inversion_replications(run: &InversionRun) -> ResultTable {
    let mut t = ResultTable::new(&["rep", "covered", "delta_covered", "infeasible", "points_evaluated"]);
    for r in &run.reps {
        t.push(vec![
            r.rep.into(),
            r.covered.into(),
            r.delta_covered.map_or(Cell::Text(String::new()), Cell::Flag),
            r.infeasible.into(),
            r.points_evaluated.into(),
        ]);
    }
    t
}

/// Whole sets of the first replications.
pub fn set_table(run: &InversionRun) -> ResultTable {
    let mut t = ResultTable::new(&["rep", "accepted", "infeasible", "contains_truth", "lo", "hi"]);
    for s in run.reps.iter().filter_map(|r| r.full.as_ref()) {
        t.push(vec![
            s.rep.into(),
            s.accepted.into(),
            s.infeasible.into(),
            s.contains_truth.into(),
            s.lo.into(),
            s.hi.into(),
        ]);
    }
    t
}

pub fn sets_json(run: &InversionRun) -> String {
    let sets: Vec<&SetSummary> = run.reps.iter().filter_map(|r| r.full.as_ref()).collect();
    let mut s = serde_json::to_string_pretty(&sets).expect("sets serialize");
    s.push('\n');
    s
}
