use adaptinf::limit_exp::*;
use adaptinf::mclt::{ks_one_sample, ks_two_sample, normality_report};
use adaptinf::rng::derive_stream;
use adaptinf::special::normal_cdf;

#[test]
fn draws_satisfy_fraction_invariants() {
    let sigma = [0.7, 1.6];
    for d in draws(1, 0, [0.3, -0.2], sigma, 5000) {
        assert_eq!(d.pi2[0] + d.pi2[1], 1.0);
        let again = normal_cdf((d.z1[1] - d.z1[0]) / (2.0 * (sigma[0] * sigma[0] + sigma[1] * sigma[1])).sqrt());
        assert!((d.pi2[1] - again).abs() < 1e-12);
    }
}

#[test]
fn zjm_is_normal_with_variance_two_under_null() {
    let null = draws(2, 0, [0.0, 0.0], [1.0, 1.0], 1_000_000);
    let t: Vec<f64> = null.iter().map(t_zjm).collect();
    let ks = ks_one_sample(&t, |x| normal_cdf(x / 2f64.sqrt())).unwrap();
    assert!(ks.d < 0.002, "{}", ks.d);
    let mean_pi = null.iter().map(|d| d.pi2[1]).sum::<f64>() / null.len() as f64;
    let sd = (null.iter().map(|d| (d.pi2[1] - mean_pi).powi(2)).sum::<f64>() / null.len() as f64).sqrt();
    assert!((mean_pi - 0.5).abs() < 3.0 * sd / (null.len() as f64).sqrt());
}

#[test]
fn dim_null_departure_from_normality_is_reported() {
    let null = draws(3, 0, [0.0, 0.0], [1.0, 1.0], 1_000_000);
    let t: Vec<f64> = null.iter().map(t_dim).collect();
    let rep = normality_report(&t).unwrap();
    assert!(rep.best_fit_normal_ks.d > 0.0);
    assert!(rep.sd.is_finite());
}

#[test]
fn likelihood_ratio_has_unit_mean_under_null() {
    let null = draws(4, 0, [0.0, 0.0], [1.0, 1.0], 200_000);
    for h in [[-0.25, 0.25], [0.5, 0.0], [-0.5, 0.5]] {
        let lr: Vec<f64> = null.iter().map(|d| lrt_ratio(d, h)).collect();
        let n = lr.len() as f64;
        let m = lr.iter().sum::<f64>() / n;
        let se = (lr.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!((m - 1.0).abs() < 3.0 * se, "h={h:?}: mean {m}, se {se}");
    }
}

#[test]
fn likelihood_ratio_reweights_null_to_alternative() {
    // E_0[LR·1{T > c}] = P_h(T > c).
    let h = [-0.5, 0.5];
    let null = draws(5, 0, [0.0, 0.0], [1.0, 1.0], 400_000);
    let alt = draws(5, 1, h, [1.0, 1.0], 400_000);
    let c = 1.0;
    let via_lr = null.iter().filter(|d| t_zjm(d) > c).map(|d| lrt_ratio(d, h)).sum::<f64>() / null.len() as f64;
    let direct = alt.iter().filter(|d| t_zjm(d) > c).count() as f64 / alt.len() as f64;
    assert!((via_lr - direct).abs() < 0.01, "{via_lr} vs {direct}");
}

#[test]
fn relabelling_arms_negates_statistics() {
    let (h, s) = ([0.2, 0.9], [1.0, 1.5]);
    let a = draws(6, 0, h, s, 100_000);
    let b = draws(6, 1, [h[1], h[0]], [s[1], s[0]], 100_000);
    for stat in [t_dim as fn(&LimitDraw) -> f64, t_zjm] {
        let x: Vec<f64> = a.iter().map(stat).collect();
        let y: Vec<f64> = b.iter().map(|d| -stat(d)).collect();
        assert!(ks_two_sample(&x, &y).unwrap().d < 0.01);
    }
}

#[test]
fn zjm_mean_increases_with_effect() {
    let mut last = f64::NEG_INFINITY;
    for d in [0.0, 0.5, 1.0, 2.0] {
        let x = draws(7, 0, [-d / 2.0, d / 2.0], [1.0, 1.0], 50_000);
        let m = x.iter().map(t_zjm).sum::<f64>() / x.len() as f64;
        assert!(m > last);
        last = m;
    }
}

#[test]
fn constant_statistic_threshold() {
    let v = vec![3.5; 1000];
    assert_eq!(calibrate_values(v, 0.05).unwrap(), 3.5);
    assert!(calibrate_values(vec![1.0; 399], 0.05).is_err());
}

#[test]
fn recalibration_is_stable() {
    let a = draws(8, 0, [0.0, 0.0], [1.0, 1.0], 100_000);
    let b = draws(8, 0, [0.0, 0.0], [1.0, 1.0], 200_000);
    let ca = calibrate_size(LimitStatistic::Zjm, &a, 0.05).unwrap();
    let cb = calibrate_size(LimitStatistic::Zjm, &b, 0.05).unwrap();
    // Compare with the spacing of the larger sample around the quantile.
    let mut v: Vec<f64> = b.iter().map(|d| t_zjm(d).abs()).collect();
    v.sort_by(|x, y| x.total_cmp(y));
    let r = adaptinf::mc::upper_rank(v.len(), 0.05) - 1;
    let gap = (v[r + 200] - v[r - 200]) / 400.0;
    assert!((ca - cb).abs() < 200.0 * gap, "{ca} {cb} gap {gap}");
}

#[test]
fn power_curve_is_calibrated_and_increasing() {
    let study = PowerStudy {
        sigma: [1.0, 1.0],
        alpha: 0.05,
        reps: 40_000,
        seed: 9,
    };
    let grid: Vec<[f64; 2]> = [0.0, 1.0, 2.0, 3.0].iter().map(|d| [-d / 2.0, d / 2.0]).collect();
    let curve = power_curve(&study, &[LimitStatistic::Dim, LimitStatistic::Zjm], &grid).unwrap();
    // The threshold is itself estimated from as many draws, which doubles
    // the variance of the rejection rate on fresh null draws.
    for (_, p, se) in &curve.null_rejection {
        assert!((p - 0.05).abs() < 3.0 * 2f64.sqrt() * se, "{p}");
    }
    for r in curve.rows.iter().filter(|r| r.h1 == 0.0 && r.h2 == 0.0) {
        assert!((r.power - 0.05).abs() < 3.0 * 2f64.sqrt() * r.se, "{r:?}");
    }
    for stat in ["dim", "zjm"] {
        let rows: Vec<_> = curve.rows.iter().filter(|r| r.stat == stat).collect();
        assert!(rows.windows(2).all(|w| w[1].power >= w[0].power - 2.0 * w[0].se));
        for r in &rows[1..] {
            assert!(r.power <= r.envelope + 0.02, "{r:?}");
        }
    }
    let a = power_curve(&study, &[LimitStatistic::Dim], &grid[..2]).unwrap();
    let b = adaptinf::mc::with_threads(1, || power_curve(&study, &[LimitStatistic::Dim], &grid[..2]).unwrap());
    assert_eq!(a, b);
}

#[test]
fn literal_forms_differ_from_corrected_forms() {
    let mut rng = derive_stream(10, 0);
    let d = sample_limit([0.0, 0.0], [1.0, 1.0], &mut rng);
    assert_ne!(t_dim(&d), t_dim_literal(&d));
    assert_ne!(t_zjm(&d), t_zjm_literal(&d));
    for s in ["dim", "dim-literal", "zjm", "zjm-literal"] {
        assert_eq!(LimitStatistic::parse(s).unwrap().id(), s);
    }
}
