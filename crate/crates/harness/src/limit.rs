//! Power tables of the two-batch limit experiment.

use adaptinf::limit_exp::{power_curve, LimitStatistic, PowerCurve, PowerStudy};
use adaptinf::Result;

use crate::table::ResultTable;

/// Columns of the power CSV.
pub const POWER_COLUMNS: [&str; 6] = ["h1", "h2", "stat", "power", "se", "envelope"];

/// Parses a local-alternative grid. Entries are separated by commas; an
/// entry `a:b` is the pair `(h1, h2) = (a, b)` and a single number `d`
/// stands for `(−d/2, d/2)`.
pub fn parse_h_grid(text: &str) -> std::result::Result<Vec<[f64; 2]>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|e| {
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("bad number `{s}` in h grid"));
            match e.split_once(':') {
                Some((a, b)) => Ok([num(a)?, num(b)?]),
                None => {
                    let d = num(e)?;
                    Ok([0.0 - d / 2.0, d / 2.0])
                }
            }
        })
        .collect()
}

pub fn parse_sigma(text: &str) -> std::result::Result<[f64; 2], String> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad sigma `{s}`")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [s] => Ok([s, s]),
        [a, b] => Ok([a, b]),
        _ => Err("sigma takes one or two values".into()),
    }
}

pub fn run_power(study: &PowerStudy, stats: &[LimitStatistic], h_grid: &[[f64; 2]]) -> Result<PowerCurve> {
    power_curve(study, stats, h_grid)
}

pub fn power_table(curve: &PowerCurve) -> ResultTable {
    let mut t = ResultTable::new(&POWER_COLUMNS);
    for r in &curve.rows {
        t.push(vec![
            r.h1.into(),
            r.h2.into(),
            r.stat.clone().into(),
            r.power.into(),
            r.se.into(),
            r.envelope.into(),
        ]);
    }
    t
}

/// Calibrated thresholds and the rejection rate on a fresh null sample.
pub fn threshold_table(curve: &PowerCurve) -> ResultTable {
    let mut t = ResultTable::new(&["stat", "threshold", "null_rejection", "null_rejection_se"]);
    for ((s, c), (_, p, se)) in curve.thresholds.iter().zip(&curve.null_rejection) {
        t.push(vec![s.id().into(), (*c).into(), (*p).into(), (*se).into()]);
    }
    t
}
