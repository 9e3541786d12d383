mod common;

use vae_replica::replica::*;

fn solve(alpha: f64, beta: f64, lambda: f64, init: Init) -> FixedPointResult {
    let p = ModelPoint::new(alpha, beta, lambda, 1.0, 1.0);
    saddle_point_solve(&p, &SolverOptions::default().with_init(init)).unwrap()
}

#[test]
fn matches_spectral_reference_across_regimes() {
    let points = [
        (4.0, 1.0, 1.0),
        (2.0, 0.5, 1.0),
        (0.5, 1.0, 1.0),
        (8.0, 1.5, 1.0),
        (0.5, 0.1, 0.1),
        (1.0, 0.1, 0.1),
        (2.0, 0.1, 0.1),
        (4.0, 1.0, 0.0),
        (100.0, 1.0, 1.0),
        (0.3, 0.0, 1.0),
        (10.0, 0.0, 1.0),
        (1.5, 1.5, 1.0),
    ];
    for (a, b, l) in points {
        let oracle = common::asymptotic(a, b, l, 1.0, 1.0);
        let mut best: Option<FixedPointResult> = None;
        for init in [Init::Collapsed, Init::Informed] {
            let r = solve(a, b, l, init);
            if r.converged && best.as_ref().is_none_or(|x| r.free_energy < x.free_energy) {
                best = Some(r);
            }
        }
        let r = best.expect("no branch converged");
        let s = r.stats;
        let tol = 1e-5;
        assert!((s.q - oracle.q).abs() < tol, "Q at {a},{b},{l}: {} vs {}", s.q, oracle.q);
        assert!((s.m - oracle.m).abs() < 1e-4, "m at {a},{b},{l}: {} vs {}", s.m, oracle.m);
        assert!((s.e - oracle.e).abs() < tol, "E at {a},{b},{l}");
        assert!((s.r - oracle.r).abs() < tol, "R at {a},{b},{l}");
        assert!((s.b - oracle.b).abs() < 1e-4, "b at {a},{b},{l}");
        assert!((r.free_energy - oracle.f).abs() < 1e-6 * (1.0 + oracle.f.abs()), "f at {a},{b},{l}: {} vs {}", r.free_energy, oracle.f);
        if b > 0.0 {
            let tr = training_rate(&s, &ModelPoint::new(a, b, l, 1.0, 1.0)).unwrap();
            assert!((tr - oracle.train_rate).abs() < 1e-5, "train rate at {a},{b},{l}: {tr} vs {}", oracle.train_rate);
        }
        assert!(r.stationarity < 1e-6, "stationarity {} at {a},{b},{l}", r.stationarity);
    }
}

fn physical(alpha: f64, beta: f64, lambda: f64) -> FixedPointResult {
    let mut best: Option<FixedPointResult> = None;
    for init in [Init::Collapsed, Init::Informed] {
        let r = solve(alpha, beta, lambda, init);
        if r.converged && best.as_ref().is_none_or(|x| r.free_energy < x.free_energy) {
            best = Some(r);
        }
    }
    best.expect("no branch converged")
}

#[test]
fn strong_beta_collapses_from_informed_start() {
    let r = solve(100.0, 3.0, 1.0, Init::Informed);
    assert!(r.converged);
    assert_eq!(r.branch, Branch::Collapsed);
    assert!(r.stats.m.abs() < 1e-8);
    let m = asymptotic_metrics(&r.stats, 3.0, 1.0, 1.0).unwrap();
    assert!((m.eps_g - 1.0).abs() < 1e-8);
}

#[test]
fn very_large_alpha_reaches_closed_form() {
    let r = physical(1e5, 1.0, 1.0);
    let s = r.stats;
    assert!((s.m - 1.0).abs() < 1e-3 && (s.q - 1.0).abs() < 1e-3, "{s:?}");
    assert!((s.b - 0.5).abs() < 1e-3 && (s.e - 0.25).abs() < 1e-3, "{s:?}");
}

#[test]
fn intermediate_alpha_has_partial_recovery() {
    let r = physical(4.0, 1.0, 1.0);
    let eps = asymptotic_metrics(&r.stats, 1.0, 1.0, 1.0).unwrap().eps_g;
    assert!(eps > 0.0 && eps < 1.0, "{eps}");
    assert_eq!(r.branch, Branch::Learning);
}

#[test]
fn matches_large_alpha_limit() {
    for lambda in [0.0, 1.0] {
        for beta in [0.5, 1.0, 1.5, 1.99, 2.5] {
            let r = physical(1e6, beta, lambda);
            let lim = large_alpha_limit(beta, 1.0, 1.0);
            let (a, b) = (r.stats, lim.stats);
            for (name, x, y) in [("Q", a.q, b.q), ("E", a.e, b.e), ("R", a.r, b.r), ("m", a.m, b.m), ("b", a.b, b.b)] {
                assert!((x - y).abs() < 1e-3, "{name} at beta {beta}, lambda {lambda}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn collapsed_start_stays_collapsed_above_threshold() {
    for beta in [2.0, 2.5, 3.0] {
        for alpha in [0.1, 1.0, 10.0, 100.0, 1e4] {
            let r = solve(alpha, beta, 1.0, Init::Collapsed);
            assert!(r.converged, "beta {beta} alpha {alpha}");
            assert_eq!(r.branch, Branch::Collapsed, "beta {beta} alpha {alpha}");
        }
    }
}

#[test]
fn converged_results_are_fixed_points_and_stationary() {
    for (alpha, beta, lambda) in [(0.3, 0.5, 1.0), (3.0, 0.2, 0.0), (6.0, 1.8, 1.0), (5.0, 3.0, 1.0), (1.0, 0.0, 0.5)] {
        for init in [Init::Collapsed, Init::Informed, Init::Random(3)] {
            let p = ModelPoint::new(alpha, beta, lambda, 1.0, 1.0);
            let opts = SolverOptions::default().with_init(init);
            let r = saddle_point_solve(&p, &opts).unwrap();
            if !r.converged {
                continue;
            }
            assert!(r.residual <= opts.tol);
            let (next, _) = apply_update(&r.stats, &p, opts.ridge_eps);
            let diff = next.to_array().iter().zip(r.stats.to_array()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(diff <= opts.tol, "{diff} at {alpha},{beta},{lambda}");
            assert!(r.stationarity < 1e-6, "{} at {alpha},{beta},{lambda}", r.stationarity);
            let g = free_energy_gradient(&r.stats, &r.conj, &p).unwrap();
            assert!(g.iter().all(|v| v.abs() < 1e-6));
            let s = r.stats;
            assert!(s.q >= 0.0 && s.e >= 0.0 && s.chi >= 0.0 && s.zeta >= 0.0);
            assert!(s.q * s.e - s.r * s.r >= -1e-10);
        }
    }
}

#[test]
fn collapsed_point_is_stationary_with_its_responses() {
    // Q = E = R = m = b = 0 with the responses of the collapsed fixed point.
    let p = ModelPoint::new(5.0, 3.0, 1.0, 1.0, 1.0);
    let r = saddle_point_solve(&p, &SolverOptions::default().with_init(Init::Collapsed)).unwrap();
    let s = r.stats;
    assert_eq!((s.q, s.e, s.r, s.m, s.b), (0.0, 0.0, 0.0, 0.0, 0.0));
    let g = free_energy_gradient(&r.stats, &r.conj, &p).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-6), "{g:?}");
}

#[test]
fn learning_branch_has_lower_free_energy() {
    let mut both = 0;
    for alpha in [0.5, 1.0, 2.0, 5.0, 20.0, 100.0] {
        for beta in [0.0, 0.3, 0.8, 1.2, 1.7, 1.95] {
            let c = solve(alpha, beta, 1.0, Init::Collapsed);
            let l = solve(alpha, beta, 1.0, Init::Informed);
            if c.converged && l.converged && l.branch == Branch::Learning && c.branch == Branch::Collapsed {
                both += 1;
                assert!(l.free_energy <= c.free_energy + 1e-12, "{alpha},{beta}: {} vs {}", l.free_energy, c.free_energy);
            }
        }
    }
    assert!(both > 5, "{both}");
}

#[test]
fn update_map_is_odd_in_the_signal_overlaps() {
    let p = ModelPoint::new(3.0, 0.7, 0.5, 1.3, 0.8);
    let s = SummaryStatistics { q: 0.7, e: 0.3, r: 0.4, m: 0.5, b: 0.2, chi: 0.6, zeta: 0.4, omega: 0.1 };
    let flipped = SummaryStatistics { m: -s.m, b: -s.b, ..s };
    let (a, _) = apply_update(&s, &p, 1e-12);
    let (b, _) = apply_update(&flipped, &p, 1e-12);
    assert!((a.m + b.m).abs() < 1e-12 && (a.b + b.b).abs() < 1e-12);
    for (x, y) in [(a.q, b.q), (a.e, b.e), (a.r, b.r), (a.chi, b.chi), (a.zeta, b.zeta), (a.omega, b.omega)] {
        assert!((x - y).abs() < 1e-12);
    }
    let r = solve(4.0, 1.0, 1.0, Init::Random(11));
    assert!(r.stats.m >= 0.0);
}

#[test]
fn budget_exhaustion_is_reported() {
    let p = ModelPoint::new(4.0, 1.0, 1.0, 1.0, 1.0);
    let opts = SolverOptions { max_iter: 1, ..SolverOptions::default() }.with_init(Init::Random(5));
    let r = saddle_point_solve(&p, &opts).unwrap();
    assert!(!r.converged);
    assert_eq!(r.branch, Branch::Unknown);
    assert!(r.residual > opts.tol);
}

#[test]
fn invalid_inputs_are_rejected() {
    let ok = ModelPoint::new(1.0, 1.0, 1.0, 1.0, 1.0);
    for bad in [
        ModelPoint::new(0.0, 1.0, 1.0, 1.0, 1.0),
        ModelPoint::new(1.0, -1.0, 1.0, 1.0, 1.0),
        ModelPoint::new(1.0, 1.0, -0.1, 1.0, 1.0),
        ModelPoint::new(1.0, 1.0, 1.0, -1.0, 1.0),
        ModelPoint::new(1.0, 1.0, 1.0, 1.0, 0.0),
        ModelPoint::new(f64::NAN, 1.0, 1.0, 1.0, 1.0),
    ] {
        assert!(saddle_point_solve(&bad, &SolverOptions::default()).is_err(), "{bad:?}");
    }
    for opts in [
        SolverOptions { damping: 0.0, ..SolverOptions::default() },
        SolverOptions { damping: 1.5, ..SolverOptions::default() },
        SolverOptions { tol: 0.0, ..SolverOptions::default() },
        SolverOptions { max_iter: 0, ..SolverOptions::default() },
        SolverOptions { ridge_eps: -1.0, ..SolverOptions::default() },
    ] {
        assert!(saddle_point_solve(&ok, &opts).is_err());
    }
}

#[test]
fn result_serializes_to_json() {
    let r = solve(2.0, 1.0, 1.0, Init::Informed);
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert!(v["stats"]["m"].is_number() && v["stats"]["Q"].is_number());
    assert_eq!(v["branch"], "Learning");
    assert_eq!(v["converged"], true);
    let back: FixedPointResult = serde_json::from_value(v).unwrap();
    assert_eq!(back, r);
}

#[test]
fn asymptotic_metric_values() {
    let z = asymptotic_metrics(&SummaryStatistics::zero(), 1.0, 1.0, 1.0).unwrap();
    assert_eq!((z.eps_g, z.rate, z.distortion), (1.0, 0.0, 1.0));
    let lim = large_alpha_limit(1.0, 1.0, 1.0);
    let m = asymptotic_metrics(&lim.stats, 1.0, 1.0, 1.0).unwrap();
    assert!(m.eps_g.abs() < 1e-15);
    assert!((m.rate - 0.5 * 2f64.ln()).abs() < 1e-15);
    assert!((m.distortion - 0.5).abs() < 1e-15);
    assert!(asymptotic_metrics(&SummaryStatistics::zero(), 0.0, 1.0, 1.0).is_err());
    let neg = SummaryStatistics { q: -2.0, ..SummaryStatistics::zero() };
    assert!(asymptotic_metrics(&neg, 1.0, 1.0, 1.0).is_err());
    assert_eq!(asymptotic_metrics(&SummaryStatistics { q: 1.0, ..SummaryStatistics::zero() }, 0.0, 1.0, 1.0).unwrap().rate, f64::INFINITY);
}

#[test]
fn rate_vanishes_only_at_zero_encoder_and_decoder() {
    let base = SummaryStatistics::zero();
    assert_eq!(asymptotic_metrics(&base, 1.0, 1.0, 1.0).unwrap().rate, 0.0);
    for s in [
        SummaryStatistics { b: 0.1, ..base },
        SummaryStatistics { e: 0.1, ..base },
        SummaryStatistics { q: 0.1, ..base },
    ] {
        assert!(asymptotic_metrics(&s, 1.0, 1.0, 1.0).unwrap().rate > 0.0);
    }
}

#[test]
fn closed_form_limit_values() {
    let l = large_alpha_limit(2.0, 1.0, 1.0);
    assert_eq!((l.eps_g, l.rate, l.distortion), (1.0, 0.0, 1.0));
    assert!(large_alpha_limit(1.0, 1.0, 1.0).eps_g.abs() < 1e-15);
    let l = large_alpha_limit(0.5, 1.0, 1.0);
    assert!((l.rate - 2f64.ln()).abs() < 1e-15 && (l.distortion - 0.25).abs() < 1e-15);
    assert_eq!(large_alpha_limit(0.0, 1.0, 1.0).rate, f64::INFINITY);
    let l = large_alpha_limit(1.5, 1.0, 1.0);
    assert!((l.eps_g - (1.5 - 2f64.sqrt())).abs() < 1e-14);
}

#[test]
fn closed_form_metrics_are_self_consistent() {
    for (rho, eta) in [(1.0, 1.0), (2.0, 0.5), (0.3, 1.7)] {
        for i in 1..60 {
            let beta = 0.05 * i as f64;
            let lim = large_alpha_limit(beta, rho, eta);
            let m = asymptotic_metrics(&lim.stats, beta, rho, eta).unwrap();
            assert!((m.eps_g - lim.eps_g).abs() < 1e-12, "{beta}");
            assert!((m.rate - lim.rate).abs() < 1e-12, "{beta}");
            assert!((m.distortion - lim.distortion).abs() < 1e-12, "{beta}");
        }
    }
}

#[test]
fn thresholds_and_eigenvalues() {
    assert_eq!(collapse_threshold(1.0, 1.0), 2.0);
    assert_eq!(collapse_threshold(0.0, 1.0), 1.0);
    assert_eq!(collapse_threshold(3.0, 0.5), 3.5);
    assert_eq!(collapse_stability_eigenvalue(2.0, 1.0, 1.0).unwrap(), 1.0);
    assert_eq!(collapse_stability_eigenvalue(3.0, 1.0, 1.0).unwrap(), 0.5);
    assert!(collapse_stability_eigenvalue(1.001, 1.0, 1.0).unwrap() > 100.0);
    assert!(collapse_stability_eigenvalue(1.0, 1.0, 1.0).is_err());
}

#[test]
fn gaussian_source_rate_distortion() {
    assert_eq!(gaussian_source_rd(1.0, 1.0, 1.0).unwrap(), 0.0);
    assert!((gaussian_source_rd(0.5, 1.0, 1.0).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
    assert!(gaussian_source_rd(0.0, 1.0, 1.0).is_err());
    let mut last = f64::INFINITY;
    for i in 1..100 {
        let r = gaussian_source_rd(0.02 * i as f64, 1.0, 1.0).unwrap();
        assert!(r <= last);
        last = r;
    }
}
