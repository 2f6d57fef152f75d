//! Time-uniform coverage of confidence sequences along simulated
//! trajectories.
//!
//! For each replication and boundary the arm-mean sequence (on the arm's
//! own clock) and, when configured, the combined ATE sequence are followed
//! round by round; a miss is any round at which the interval excludes the
//! truth. Because stopping rules consume no randomness, rerunning the same
//! stream under the exclusion-stopping rule must stop exactly at the first
//! such round, which `stop_check` verifies.

use std::sync::Arc;

use adaptinf::confseq::{ate_combine, mean_cs, mean_cs_with_radius, radius_table, Boundary, Interval, RADIUS_TABLE_LIMIT};
use adaptinf::{derive_stream, run_experiment, CsTarget, Result, StoppingRule, Trajectory};

use crate::config::{BoundaryName, ConfseqSpec, Scenario};
use crate::runner::{run_range, Partial};
use crate::table::{rate_cells, Cell, ResultTable};

/// Misses of one boundary on one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPath {
    pub boundary: BoundaryName,
    /// First round whose arm interval excludes the arm mean (0 if none).
    pub arm_exclusion: u64,
    /// The same for the ATE interval.
    pub ate_exclusion: u64,
    /// Arm interval width at each checkpoint.
    pub widths: Vec<f64>,
    /// Whether the rerun under the stopping rule agreed (`None` if not
    /// checked).
    pub stop_agrees: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRep {
    pub rep: u64,
    pub rounds: u64,
    pub paths: Vec<BoundaryPath>,
}

#[derive(Debug)]
pub struct SequenceRun {
    pub checkpoints: Vec<u64>,
    pub reps: Vec<SequenceRep>,
    pub partial: Option<Partial>,
}

/// About `points` log-spaced rounds in `[1, max_t]`, deduplicated.
pub fn log_checkpoints(max_t: u64, points: usize) -> Vec<u64> {
    if max_t == 0 || points == 0 {
        return Vec::new();
    }
    let mut v: Vec<u64> = (0..points)
        .map(|i| {
            let f = if points == 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
            ((max_t as f64).powf(f).round() as u64).clamp(1, max_t)
        })
        .collect();
    v.dedup();
    v
}

struct Radii {
    boundary: Boundary,
    table: Option<Arc<Vec<f64>>>,
}

impl Radii {
    fn interval(&self, sum: f64, n: u64) -> Interval {
        match &self.table {
            Some(t) if (n as usize) < t.len() => mean_cs_with_radius(sum, n, t[n as usize]),
            _ => mean_cs(sum, n, &self.boundary),
        }
    }
}

fn follow(traj: &Trajectory, radii: &Radii, spec: &ConfseqSpec, means: &[f64], checkpoints: &[u64]) -> (u64, u64, Vec<f64>) {
    let k = traj.n_arms();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0u64; k];
    let (mut arm_x, mut ate_x) = (0u64, 0u64);
    let mut widths = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0;
    for s in traj.steps() {
        sums[s.action] += s.reward;
        counts[s.action] += 1;
        let arm_iv = radii.interval(sums[spec.arm], counts[spec.arm]);
        if arm_x == 0 && !arm_iv.contains(means[spec.arm]) {
            arm_x = s.round;
        }
        if let Some(p) = spec.ate {
            if ate_x == 0 {
                let iv = ate_combine(
                    radii.interval(sums[p.treated], counts[p.treated]),
                    radii.interval(sums[p.control], counts[p.control]),
                );
                if !iv.contains(means[p.treated] - means[p.control]) {
                    ate_x = s.round;
                }
            }
        }
        while next_cp < checkpoints.len() && checkpoints[next_cp] == s.round {
            widths.push(arm_iv.width());
            next_cp += 1;
        }
    }
    widths.resize(checkpoints.len(), f64::NAN);
    (arm_x, ate_x, widths)
}

fn spec_of(scenario: &Scenario) -> Result<&ConfseqSpec> {
    scenario.confseq.as_ref().ok_or(adaptinf::Error::InvalidParameter {
        name: "confseq",
        reason: "the scenario has no [confseq] section".into(),
    })
}

fn stop_rule(target: CsTarget, value: f64, boundary: &Boundary, max_t: u64) -> StoppingRule {
    StoppingRule::CsExclusion {
        target,
        value,
        boundary: boundary.clone(),
        max_t,
    }
}

/// Runs replications `range` and follows every configured boundary.
pub fn run_sequences(scenario: &Scenario, range: std::ops::Range<u64>) -> Result<SequenceRun> {
    let spec = spec_of(scenario)?;
    let k = scenario.model.n_arms();
    let means: Vec<f64> = (0..k).map(|a| scenario.model.arm_mean(a)).collect();
    let max_t = scenario.stopping.max_t();
    let radii: Vec<Radii> = spec
        .boundaries
        .iter()
        .map(|&b| {
            let boundary = spec.boundary(b, scenario.alpha)?;
            let table = if max_t <= RADIUS_TABLE_LIMIT {
                Some(radius_table(&boundary, max_t)?)
            } else {
                None
            };
            Ok(Radii { boundary, table })
        })
        .collect::<Result<_>>()?;
    let checkpoints = log_checkpoints(max_t, spec.width_points);
    let fixed = matches!(scenario.stopping, StoppingRule::FixedHorizon { .. });
    let out = run_range(range, |r| {
        let traj = run_experiment(
            &scenario.model,
            &scenario.design,
            &scenario.stopping,
            &mut derive_stream(scenario.seed, r),
        )?;
        let mut paths = Vec::with_capacity(radii.len());
        for (name, rd) in spec.boundaries.iter().zip(&radii) {
            let (arm_exclusion, ate_exclusion, widths) = follow(&traj, rd, spec, &means, &checkpoints);
            let stop_agrees = if fixed && r < spec.stop_check {
                let expect = |x: u64| if x == 0 { max_t } else { x };
                let rerun = |rule: &StoppingRule| {
                    run_experiment(&scenario.model, &scenario.design, rule, &mut derive_stream(scenario.seed, r)).map(|t| t.stopped_at())
                };
                let arm_rule = stop_rule(CsTarget::ArmMean { arm: spec.arm }, means[spec.arm], &rd.boundary, max_t);
                let mut ok = rerun(&arm_rule)? == expect(arm_exclusion);
                if let Some(p) = spec.ate {
                    let target = CsTarget::Ate {
                        treated: p.treated,
                        control: p.control,
                    };
                    let ate_rule = stop_rule(target, means[p.treated] - means[p.control], &rd.boundary, max_t);
                    ok &= rerun(&ate_rule)? == expect(ate_exclusion);
                }
                Some(ok)
            } else {
                None
            };
            paths.push(BoundaryPath {
                boundary: *name,
                arm_exclusion,
                ate_exclusion,
                widths,
                stop_agrees,
            });
        }
        Ok(SequenceRep {
            rep: r,
            rounds: traj.stopped_at(),
            paths,
        })
    });
    Ok(SequenceRun {
        checkpoints,
        reps: out.results,
        partial: out.partial,
    })
}

fn name(b: BoundaryName) -> &'static str {
    b.kind().name()
}

/// Per-boundary miscoverage with standard errors.
pub fn sequence_summary(scenario: &Scenario, run: &SequenceRun) -> Result<ResultTable> {
    let spec = spec_of(scenario)?;
    let mut t = ResultTable::new(&[
        "boundary",
        "reps",
        "arm",
        "arm_miscoverage",
        "arm_miscoverage_se",
        "ate_miscoverage",
        "ate_miscoverage_se",
        "stop_checked",
        "stop_mismatches",
    ]);
    if run.reps.is_empty() {
        return Ok(t);
    }
    for (i, &b) in spec.boundaries.iter().enumerate() {
        let paths: Vec<&BoundaryPath> = run.reps.iter().map(|r| &r.paths[i]).collect();
        let n = paths.len();
        let [am, am_se] = rate_cells(paths.iter().filter(|p| p.arm_exclusion > 0).count(), n);
        let [xm, xm_se] = if spec.ate.is_some() {
            rate_cells(paths.iter().filter(|p| p.ate_exclusion > 0).count(), n)
        } else {
            [Cell::Num(f64::NAN), Cell::Num(f64::NAN)]
        };
        let checked: Vec<bool> = paths.iter().filter_map(|p| p.stop_agrees).collect();
        t.push(vec![
            name(b).into(),
            n.into(),
            spec.arm.into(),
            am,
            am_se,
            xm,
            xm_se,
            checked.len().into(),
            checked.iter().filter(|ok| !**ok).count().into(),
        ]);
    }
    Ok(t)
}

/// One row per replication and boundary.
pub fn sequence_replications(scenario: &Scenario, run: &SequenceRun) -> Result<ResultTable> {
    let spec = spec_of(scenario)?;
    let mut t = ResultTable::new(&["rep", "boundary", "rounds", "arm_exclusion", "ate_exclusion", "stop_agrees"]);
    for rep in &run.reps {
        for (p, &b) in rep.paths.iter().zip(&spec.boundaries) {
            t.push(vec![
                rep.rep.into(),
                name(b).into(),
                rep.rounds.into(),
                p.arm_exclusion.into(),
                p.ate_exclusion.into(),
                p.stop_agrees.map_or(Cell::Text(String::new()), Cell::Flag),
            ]);
        }
    }
    Ok(t)
}

/// Long-format mean arm-interval width against rounds. Replications where
/// the interval is still unbounded are counted in `unbounded_fraction`.
pub fn width_table(scenario: &Scenario, run: &SequenceRun) -> Result<ResultTable> {
    let spec = spec_of(scenario)?;
    let mut t = ResultTable::new(&["boundary", "t", "mean_width", "unbounded_fraction", "reps"]);
    if run.reps.is_empty() {
        return Ok(t);
    }
    for (i, &b) in spec.boundaries.iter().enumerate() {
        for (j, &cp) in run.checkpoints.iter().enumerate() {
            let w: Vec<f64> = run.reps.iter().map(|r| r.paths[i].widths[j]).filter(|w| !w.is_nan()).collect();
            let finite: Vec<f64> = w.iter().copied().filter(|x| x.is_finite()).collect();
            let mean = if finite.is_empty() {
                f64::NAN
            } else {
                finite.iter().sum::<f64>() / finite.len() as f64
            };
            let unbounded = if w.is_empty() {
                f64::NAN
            } else {
                (w.len() - finite.len()) as f64 / w.len() as f64
            };
            t.push(vec![name(b).into(), cp.into(), mean.into(), unbounded.into(), w.len().into()]);
        }
    }
    Ok(t)
}
