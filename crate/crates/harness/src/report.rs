//! Plot-ready data files.
//!
//! `report_plots` reads the outputs of earlier runs from a directory and
//! writes tidy long-format CSVs: histograms of the standardized estimates
//! with the limit density alongside, interval width against rounds, and
//! power against the likelihood-ratio envelope. Nothing is rendered. A
//! manifest lists the files written and, for every file that could not be
//! produced, the reason.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use adaptinf::estimators::Scheme;
use adaptinf::special::normal_pdf;

use crate::config::{parse_config, LimitLaw, Scenario};
use crate::estimation::{limit_draws, mixture_variances};
use crate::limit::POWER_COLUMNS;
use crate::table::{Cell, ResultTable};

/// Histogram bins per method.
pub const BINS: usize = 101;

/// `BINS` equal-width bins over `[min, max]` of `x`, the last one closed.
/// Returns `(lo, hi, count)` per bin; a constant sample fills the first
/// bin of zero width.
pub fn histogram(x: &[f64], bins: usize) -> Vec<(f64, f64, u64)> {
    if x.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in x {
        let i = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[i] += 1;
    }
    (0..bins)
        .map(|i| {
            (
                lo + i as f64 * width,
                if i + 1 == bins { hi } else { lo + (i + 1) as f64 * width },
                counts[i],
            )
        })
        .collect()
}

fn bin_density(edges: &[(f64, f64, u64)], sample: &[f64]) -> Vec<f64> {
    let mut counts = vec![0u64; edges.len()];
    let lo = edges[0].0;
    let hi = edges[edges.len() - 1].1;
    let width = (hi - lo) / edges.len() as f64;
    for &v in sample {
        if v < lo || v > hi || !(width > 0.0) {
            continue;
        }
        counts[(((v - lo) / width) as usize).min(edges.len() - 1)] += 1;
    }
    counts.iter().map(|&c| c as f64 / (sample.len() as f64 * width)).collect()
}

/// Histogram rows of the configured standardized column of
/// `replications`, with the limit density at bin midpoints (or, for a law
/// without a closed-form density, the binned limit draws).
pub fn histogram_table(scenario: &Scenario, replications: &ResultTable) -> adaptinf::Result<ResultTable> {
    let spec = scenario.estimation.as_ref().ok_or(adaptinf::Error::InvalidParameter {
        name: "estimation",
        reason: "no [estimation] section".into(),
    })?;
    let col = spec.scaling.column();
    let mut t = ResultTable::new(&["method", "scaling", "bin", "lo", "hi", "count", "density", "limit_density"]);
    let (mi, vi) = match (replications.column_index("method"), replications.column_index(col)) {
        (Some(m), Some(v)) => (m, v),
        _ => return Ok(t),
    };
    let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in &replications.rows {
        if let Some(v) = row[vi].as_f64().filter(|v| v.is_finite()) {
            by_method.entry(row[mi].render()).or_default().push(v);
        }
    }
    let draws = limit_draws(scenario, spec)?;
    let density: Box<dyn Fn(f64) -> f64> = match spec.limit {
        LimitLaw::StandardNormal => Box::new(normal_pdf),
        LimitLaw::IpwMixture { epsilon, variances } => {
            let v = mixture_variances(scenario, spec, epsilon, variances)?;
            Box::new(move |x| {
                let (s1, s2) = (v.v1.sqrt(), v.v2.sqrt());
                0.5 * normal_pdf(x / s1) / s1 + 0.5 * normal_pdf(x / s2) / s2
            })
        }
        LimitLaw::ThreeZ { .. } => Box::new(|_| f64::NAN),
    };
    // Keep the configured method order.
    let order: Vec<String> = spec.methods.iter().map(|m: &Scheme| m.id().to_owned()).collect();
    for m in order {
        let Some(x) = by_method.get(&m) else { continue };
        let h = histogram(x, BINS);
        let sampled = match (&draws, spec.limit) {
            (Some(d), LimitLaw::ThreeZ { .. }) => Some(bin_density(&h, d)),
            _ => None,
        };
        for (i, &(lo, hi, c)) in h.iter().enumerate() {
            let w = hi - lo;
            let dens = if w > 0.0 { c as f64 / (x.len() as f64 * w) } else { f64::NAN };
            let lim = match &sampled {
                Some(s) => s[i],
                None => density(0.5 * (lo + hi)),
            };
            t.push(vec![
                m.clone().into(),
                spec.scaling.column().into(),
                i.into(),
                lo.into(),
                hi.into(),
                c.into(),
                dens.into(),
                lim.into(),
            ]);
        }
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub source: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Omitted {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Manifest {
    pub written: Vec<ManifestEntry>,
    pub omitted: Vec<Omitted>,
}

fn read_table(path: &Path) -> Option<ResultTable> {
    let text = std::fs::read_to_string(path).ok()?;
    ResultTable::from_csv(&text).ok()
}

/// Reads earlier outputs in `input` and writes the plot files to `output`.
pub fn report_plots(input: &Path, output: &Path) -> anyhow::Result<Manifest> {
    std::fs::create_dir_all(output)?;
    let mut m = Manifest::default();
    let emit = |m: &mut Manifest, name: &str, source: &str, t: Option<ResultTable>, why: &str| -> anyhow::Result<()> {
        match t {
            Some(t) if !t.is_empty() => {
                std::fs::write(output.join(name), t.to_csv())?;
                m.written.push(ManifestEntry {
                    file: name.into(),
                    source: source.into(),
                    rows: t.len(),
                });
            }
            _ => m.omitted.push(Omitted {
                file: name.into(),
                reason: why.into(),
            }),
        }
        Ok(())
    };

    let scenario = std::fs::read_to_string(input.join("scenario.toml"))
        .ok()
        .and_then(|s| parse_config(&s).ok());
    let reps = read_table(&input.join("replications.csv"));
    let hist = match (&scenario, &reps) {
        (Some(s), Some(r)) if s.estimation.is_some() && r.column_index("method").is_some() => Some(histogram_table(s, r)?),
        _ => None,
    };
    emit(
        &mut m,
        "histogram.csv",
        "replications.csv",
        hist,
        "no estimator replications (run `coverage` or `distribution` first)",
    )?;

    let widths = read_table(&input.join("cs_widths.csv")).map(|t| {
        let mut out = ResultTable::new(&["boundary", "t", "mean_width"]);
        let (b, ti, w) = (t.column_index("boundary"), t.column_index("t"), t.column_index("mean_width"));
        if let (Some(b), Some(ti), Some(w)) = (b, ti, w) {
            for r in &t.rows {
                out.push(vec![r[b].clone(), r[ti].clone(), r[w].clone()]);
            }
        }
        out
    });
    emit(
        &mut m,
        "cs_width_plot.csv",
        "cs_widths.csv",
        widths,
        "no confidence-sequence trace (run `confseq` first)",
    )?;

    let power = read_table(&input.join("power.csv")).map(|t| {
        let idx: Option<Vec<usize>> = POWER_COLUMNS.iter().map(|c| t.column_index(c)).collect();
        let mut out = ResultTable::new(&POWER_COLUMNS);
        if let Some(idx) = idx {
            for r in &t.rows {
                out.push(idx.iter().map(|&i| r[i].clone()).collect::<Vec<Cell>>());
            }
        }
        out
    });
    emit(
        &mut m,
        "power_plot.csv",
        "power.csv",
        power,
        "no power table (run `limit-exp` first)",
    )?;

    std::fs::write(output.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(m)
}
