use vae_replica::scm::*;

fn cfg(rho: f64, eta: f64, d: usize, alpha: f64) -> GenerativeConfig {
    GenerativeConfig::new(rho, eta, d, 1, alpha).unwrap()
}

#[test]
fn signal_matrix_two_columns() {
    let w = generate_signal_matrix(1000, 2, 7).unwrap();
    let g = w.transpose() * &w;
    assert!(g[(0, 1)].abs() < 1e-9);
    assert!((g[(0, 0)] - 1000.0).abs() < 1e-9);
    assert!((g[(1, 1)] - 1000.0).abs() < 1e-9);
}

#[test]
fn generation_is_deterministic_and_seed_dependent() {
    let c = cfg(1.0, 1.0, 50, 2.0);
    let a = generate_dataset(&c, 5).unwrap();
    let b = generate_dataset(&c, 5).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.w_star, b.w_star);
    assert_eq!(a.c, b.c);
    assert_eq!(a.seed, 5);
    assert_ne!(generate_dataset(&c, 6).unwrap().x, a.x);
}

#[test]
fn dataset_reconstructs_from_parts() {
    let c = cfg(2.0, 0.5, 40, 1.5);
    let ds = generate_dataset(&c, 3).unwrap();
    let signal = &ds.c * ds.w_star.transpose() * (c.rho / c.d as f64).sqrt();
    let noise = (&ds.x - signal) / c.eta.sqrt();
    // the implied noise is standard normal: mean ≈ 0, variance ≈ 1
    let n = noise.len() as f64;
    let mean = noise.sum() / n;
    let var = noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.05 && (var - 1.0).abs() < 0.1, "{mean} {var}");
}

#[test]
fn zero_signal_is_pure_noise() {
    let c = cfg(0.0, 2.5, 200, 5.0);
    let ds = generate_dataset(&c, 1).unwrap();
    let var = ds.x.iter().map(|v| v * v).sum::<f64>() / ds.x.len() as f64;
    assert!((var - 2.5).abs() < 0.05, "{var}");
}

#[test]
fn vanishing_noise_gives_rank_one() {
    let c = cfg(1.0, 1e-20, 30, 2.0);
    let ds = generate_dataset(&c, 2).unwrap();
    let sv = ds.x.clone().singular_values();
    let mut s: Vec<f64> = sv.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    assert!(s[1] < 1e-8 * s[0], "{:?}", &s[..3]);
}

#[test]
fn row_power_law_of_large_numbers() {
    // (1/d)‖x‖² has mean η + ρ/d: the signal adds ρ in total, not per coordinate.
    let c = cfg(1.0, 1.0, 2000, 4.0);
    let ds = generate_dataset(&c, 11).unwrap();
    let d = c.d as f64;
    let powers: Vec<f64> = ds.x.row_iter().map(|r| r.norm_squared() / d).collect();
    let n = powers.len() as f64;
    let mean = powers.iter().sum::<f64>() / n;
    let se = (powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let expected = c.eta + c.rho / d;
    assert!((mean - expected).abs() < 3.0 * se, "mean {mean} expected {expected} se {se}");
}

#[test]
fn row_power_concentrates_like_one_over_d() {
    let var_at = |d: usize| {
        let ds = generate_dataset(&cfg(1.0, 1.0, d, 4.0), 4).unwrap();
        let p: Vec<f64> = ds.x.row_iter().map(|r| r.norm_squared() / d as f64).collect();
        let m = p.iter().sum::<f64>() / p.len() as f64;
        p.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (p.len() as f64 - 1.0)
    };
    let ratio = var_at(500) / var_at(2000);
    // Var[(1/d)‖x‖²] ≈ 2η²/d, so quadrupling d divides it by about four
    assert!(ratio > 3.0 && ratio < 5.3, "{ratio}");
}

#[test]
fn spectrum_trace_identity_and_nonnegativity() {
    let ds = generate_dataset(&cfg(1.0, 1.0, 60, 2.0), 8).unwrap();
    let ev = covariance_spectrum(&ds).unwrap();
    assert_eq!(ev.len(), 60);
    assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    assert!(ev.iter().all(|&v| v >= 0.0));
    let mean = ev.iter().sum::<f64>() / 60.0;
    let frob = ds.x.iter().map(|v| v * v).sum::<f64>() / (ds.n() * ds.d()) as f64;
    assert!((mean - frob).abs() < 1e-12 * frob);
}

#[test]
fn spectrum_with_fewer_samples_than_dimensions() {
    let ds = generate_dataset(&cfg(1.0, 1.0, 50, 0.5), 9).unwrap();
    let ev = covariance_spectrum(&ds).unwrap();
    assert_eq!(ev.len(), 50);
    assert!(ev[25..].iter().all(|&v| v == 0.0));
    let mean = ev.iter().sum::<f64>() / 50.0;
    let frob = ds.x.iter().map(|v| v * v).sum::<f64>() / (ds.n() * ds.d()) as f64;
    assert!((mean - frob).abs() < 1e-12 * frob);
}

#[test]
fn spectrum_needs_two_samples() {
    let c = GenerativeConfig::new(1.0, 1.0, 10, 1, 0.1).unwrap();
    assert_eq!(c.n, 1);
    let ds = generate_dataset(&c, 0).unwrap();
    assert!(covariance_spectrum(&ds).is_err());
}

#[test]
fn pure_noise_top_eigenvalue_at_bulk_edge() {
    let ds = generate_dataset(&cfg(0.0, 1.0, 1000, 4.0), 21).unwrap();
    let ev = covariance_spectrum(&ds).unwrap();
    let edge = bulk_edge(1.0, 4.0);
    assert!((ev[0] - edge).abs() < 0.05 * edge, "{} vs {edge}", ev[0]);
}

#[test]
fn strong_spike_separates_from_bulk() {
    let edge = bulk_edge(1.0, 4.0) * 1.05;
    for seed in 0..5 {
        let ds = generate_dataset(&GenerativeConfig::new(5.0, 1.0, 1000, 1, 4.0).unwrap(), seed).unwrap();
        let ev = covariance_spectrum(&ds).unwrap();
        assert_eq!(ev.iter().filter(|&&v| v > edge).count(), 1, "seed {seed}");
    }
}

fn noise_estimates(rho: f64, eta: f64, rate: f64) -> Vec<f64> {
    (0..5)
        .map(|seed| {
            let ds = generate_dataset(&cfg(rho, eta, 1000, 4.0), 100 + seed).unwrap();
            estimate_noise_strength(&ds, rate).unwrap()
        })
        .collect()
}

#[test]
fn noise_estimate_on_pure_noise() {
    for est in noise_estimates(0.0, 1.0, 0.8) {
        assert!((est - 1.0).abs() < 0.15, "{est}");
    }
    for est in noise_estimates(0.0, 4.0, 0.8) {
        assert!((est - 4.0).abs() < 0.6, "{est}");
    }
}

#[test]
fn noise_estimate_is_stable_across_rates() {
    let ds = generate_dataset(&cfg(1.0, 1.0, 1000, 4.0), 77).unwrap();
    let ev = covariance_spectrum(&ds).unwrap();
    let est: Vec<f64> = [0.7, 0.8, 0.9].iter().map(|&r| noise_strength_from_spectrum(&ev, ds.n(), r).unwrap()).collect();
    let max = est.iter().cloned().fold(f64::MIN, f64::max);
    let min = est.iter().cloned().fold(f64::MAX, f64::min);
    let mean = est.iter().sum::<f64>() / 3.0;
    assert!((max - min) / mean < 0.25, "{est:?}");
}

#[test]
fn raw_bulk_variance_is_biased_low() {
    let ds = generate_dataset(&cfg(0.0, 1.0, 1000, 4.0), 5).unwrap();
    let ev = covariance_spectrum(&ds).unwrap();
    let raw = raw_bulk_variance(&ev, 0.8).unwrap();
    let corrected = noise_strength_from_spectrum(&ev, ds.n(), 0.8).unwrap();
    assert!(raw < 0.5, "{raw}");
    assert!((corrected - 1.0).abs() < 0.05, "{corrected}");
}

#[test]
fn noise_rate_outside_unit_interval_is_rejected() {
    let ds = generate_dataset(&cfg(0.0, 1.0, 20, 2.0), 5).unwrap();
    assert!(estimate_noise_strength(&ds, 0.0).is_err());
    assert!(estimate_noise_strength(&ds, 1.5).is_err());
}
