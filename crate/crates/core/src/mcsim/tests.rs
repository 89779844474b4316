use super::*;
use crate::coverage::{CoverageModel, Method};
use crate::pathloss::{gpp, make_3gpp_case};

fn faithful(lambda: f64, n: usize) -> SimConfig {
    SimConfig::new(
        NetworkConfig::reference(lambda),
        make_3gpp_case(),
        SchedulerKind::ProportionalFair,
        SimMode::ModelFaithful,
    )
    .with_drops(n)
    .with_seed(42)
}

#[test]
fn reproducible_under_any_thread_count() {
    for mode in [SimMode::ModelFaithful, SimMode::FullDrop] {
        let mut cfg = faithful(30.0, 64);
        cfg.mode = mode;
        let sim = Simulator::new(cfg).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sim.run_all_paired())
        };
        let one = run(1);
        let eight = run(8);
        assert_eq!(one, eight);
        // out of order, one at a time
        for i in (0..64).rev().step_by(7) {
            assert_eq!(sim.run_paired(i as u64), one[i]);
        }
    }
}

#[test]
fn seed_changes_outcomes() {
    let a = Simulator::new(faithful(30.0, 8)).unwrap().run_all();
    let b = Simulator::new(faithful(30.0, 8).with_seed(43)).unwrap().run_all();
    assert_ne!(a, b);
}

#[test]
fn sinr_identity_holds_exactly() {
    for mode in [SimMode::ModelFaithful, SimMode::FullDrop] {
        for fading in [FadingKind::Rayleigh, FadingKind::RicianDistanceDependent] {
            let mut cfg = faithful(100.0, 200).with_fading(fading);
            cfg.mode = mode;
            for d in Simulator::new(cfg.clone()).unwrap().run_all_paired() {
                for o in [d.pf, d.rr] {
                    assert_eq!(o.sinr, o.recompute_sinr(&cfg.base, &cfg.model));
                    assert!(o.k_served >= 1);
                }
                assert!(d.pf.gain >= d.rr.gain);
                assert_eq!(d.pf.i_agg, d.rr.i_agg);
            }
        }
    }
}

/// Interference-limited coverage of a single-slope Rayleigh HPPP where all
/// BSs transmit: 1 / (1 + g^(2/a) int_{g^(-2/a)}^inf du / (1 + u^(a/2))).
fn classical_coverage(gamma: f64, alpha: f64) -> f64 {
    let lo = gamma.powf(-2.0 / alpha);
    // u = lo / t maps (lo, inf) onto (0, 1]
    let n = 200_000;
    let mut acc = 0.0;
    for i in 0..n {
        let t = (i as f64 + 0.5) / n as f64;
        let u = lo / t;
        acc += lo / (t * t) / (1.0 + u.powf(alpha / 2.0));
    }
    1.0 / (1.0 + gamma.powf(2.0 / alpha) * acc / n as f64)
}

#[test]
fn degenerate_model_matches_classical_coverage() {
    let alpha = 3.75;
    let model = PathLossModel::single_slope(gpp::A_NLOS, alpha, 0.0).unwrap();
    let mut base = NetworkConfig::reference(10.0);
    base.rho = 1e7; // every BS active
    base.noise_power = 1e-30;
    let cfg = SimConfig::new(base, model.clone(), SchedulerKind::RoundRobin, SimMode::ModelFaithful)
        .with_drops(20_000)
        .with_seed(3);
    for gamma in [0.5, 1.0, 4.0] {
        let est = estimate_coverage(&cfg, gamma).unwrap();
        let oracle = classical_coverage(gamma, alpha);
        assert!(
            (est.p_hat - oracle).abs() < 4.0 * est.sigma() + 0.003,
            "gamma {gamma}: {} vs {oracle}",
            est.p_hat
        );
        let analytic = CoverageModel::new(base, &model)
            .unwrap()
            .coverage(gamma, SchedulerKind::RoundRobin, Method::Exact)
            .unwrap()
            .value;
        assert!((analytic - oracle).abs() < 1e-5, "{analytic} vs {oracle}");
    }
}

#[test]
fn serving_distance_and_branch_match_analytic() {
    let cfg = faithful(100.0, 20_000);
    let drops = Simulator::new(cfg.clone()).unwrap().run_all();
    let engine = CoverageModel::new(cfg.base, &cfg.model).unwrap();
    let n = drops.len() as f64;
    for r in [0.02, 0.05, 0.0677, 0.1, 0.2] {
        let emp = drops.iter().filter(|d| d.serving_distance <= r).count() as f64 / n;
        let p = engine.serving_distance_cdf(r);
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((emp - p).abs() < 4.0 * sigma + 1e-3, "r {r}: {emp} vs {p}");
    }
    let los_emp = drops.iter().filter(|d| d.serving_branch == Branch::Los).count() as f64 / n;
    let los = engine.serving_los_probability();
    let sigma = (los * (1.0 - los) / n).sqrt();
    assert!((los_emp - los).abs() < 4.0 * sigma, "{los_emp} vs {los}");
}

#[test]
fn estimate_edge_cases() {
    let cfg = faithful(100.0, 500);
    let all = estimate_coverage(&cfg, 1e-300).unwrap();
    assert_eq!(all.p_hat, 1.0);
    assert!(matches!(
        estimate_coverage(&faithful(100.0, 99), 1.0),
        Err(Error::InsufficientData(_))
    ));
    let mut bad = faithful(100.0, 500);
    bad.n_drops = 0;
    assert!(Simulator::new(bad).is_err());
    assert!(Simulator::new(faithful(1.0, 100).with_radius(2.0)).is_err());
}

#[test]
fn ci_width_scales_with_root_n() {
    let small = estimate_coverage(&faithful(100.0, 2_000), 1.0).unwrap();
    let large = estimate_coverage(&faithful(100.0, 8_000), 1.0).unwrap();
    let ratio = small.ci_width() / large.ci_width();
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}

#[test]
fn curve_is_monotone_and_matches_pointwise() {
    let cfg = faithful(300.0, 2_000);
    let gammas: Vec<f64> = (-10..=30).step_by(5).map(|db| 10f64.powf(db as f64 / 10.0)).collect();
    let curve = estimate_curve(&cfg, &gammas).unwrap();
    for w in curve.windows(2) {
        assert!(w[1].p_hat <= w[0].p_hat);
    }
    for pt in &curve {
        assert_eq!(*pt, estimate_coverage(&cfg, pt.gamma).unwrap());
    }
}

#[test]
fn pf_and_rr_agree_in_ultra_dense_limit() {
    let mut cfg = faithful(1e4, 2_000);
    let pf = estimate_coverage(&cfg, 1.0).unwrap();
    cfg.scheduler = SchedulerKind::RoundRobin;
    let rr = estimate_coverage(&cfg, 1.0).unwrap();
    assert!(pf.ci_lo <= rr.ci_hi && rr.ci_lo <= pf.ci_hi, "{pf:?} {rr:?}");
}

#[test]
fn wilson_reference_values() {
    let (lo, hi) = wilson_interval(0, 10);
    assert_eq!(lo, 0.0);
    assert!((hi - 0.277_532).abs() < 1e-5);
    let (lo, hi) = wilson_interval(50, 100);
    assert!((lo - 0.403_832).abs() < 1e-5 && (hi - 0.596_168).abs() < 1e-5);
}

#[test]
fn summary_counts_add_up() {
    let cfg = faithful(100.0, 300);
    let drops = Simulator::new(cfg.clone()).unwrap().run_all_paired();
    let s = SimSummary::from_paired(&cfg, &drops, &[1.0, 10.0]);
    assert_eq!(s.k_counts.iter().sum::<u64>(), 300);
    assert_eq!(s.serving_distance.total(), 300);
    assert_eq!(s.coverage.len(), 2);
    assert!(s.active_fraction > 0.8 && s.active_fraction < 1.0);
}
