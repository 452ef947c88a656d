use ehaoi::closed_form::{np_ps_steady_state, pw_steady_state};
use ehaoi::model::{Discipline, EhMode, SystemParams};
use ehaoi::sim::{replicate, simulate, SimConfig, SimError};

fn config(rho: f64, beta: f64, b: usize, d: Discipline, m: EhMode) -> SimConfig {
    SimConfig::new(SystemParams::from_utilization(rho, beta, 1.0, b).unwrap(), d, m)
}

#[test]
fn long_run_matches_the_mean_and_second_moment() {
    let mut cfg = config(1.0, 1.0, 1, Discipline::LcfsNp, EhMode::WhenEmpty);
    cfg.horizon = 1e6;
    cfg.seed = 7;
    let r = simulate(&cfg).unwrap();
    assert!((r.mean_age.value - 3.0).abs() / 3.0 < 0.02, "{:?}", r.mean_age);
    assert!((r.mean_age_sq.value - 38.0 / 3.0).abs() / (38.0 / 3.0) < 0.03, "{:?}", r.mean_age_sq);
    assert!(r.effective_time > 0.99 * (cfg.horizon - cfg.warmup));
}

#[test]
fn pooled_interval_covers_the_mean() {
    let mut cfg = config(1.0, 1.0, 1, Discipline::LcfsNp, EhMode::WhenEmpty);
    cfg.seed = 11;
    let r = replicate(&cfg, 10).unwrap();
    assert_eq!(r.replications, 10);
    assert_eq!(r.mean_age.dof, 9);
    let (lo, hi) = r.mean_age.confidence_interval(0.95);
    assert!(lo <= 3.0 && 3.0 <= hi, "[{lo}, {hi}]");
}

#[test]
fn one_replication_is_a_plain_run() {
    let mut cfg = config(0.7, 1.8, 2, Discipline::LcfsPw, EhMode::Anytime);
    cfg.horizon = 2e4;
    cfg.mgf_points = vec![-0.5, 0.0];
    assert_eq!(replicate(&cfg, 1).unwrap(), simulate(&cfg).unwrap());
}

#[test]
fn runs_are_deterministic() {
    let mut cfg = config(1.5, 0.6, 3, Discipline::LcfsPs, EhMode::WhenEmpty);
    cfg.horizon = 2e4;
    cfg.seed = 99;
    cfg.mgf_points = vec![-0.3];
    assert_eq!(replicate(&cfg, 4).unwrap(), replicate(&cfg, 4).unwrap());
    let other = SimConfig { seed: 100, ..cfg.clone() };
    assert_ne!(simulate(&cfg).unwrap(), simulate(&other).unwrap());
}

#[test]
fn sample_path_statistics_are_consistent() {
    for (d, m) in ehaoi::verify::configurations() {
        let mut cfg = config(1.2, 0.9, 2, d, m);
        cfg.horizon = 3e4;
        cfg.mgf_points = vec![-1.0, -0.1, 0.0, 0.2];
        let r = simulate(&cfg).unwrap();
        assert!(r.mean_age.value > 0.0);
        assert!(r.mean_age_sq.value >= r.mean_age.value.powi(2));
        for (s, est) in &r.empirical_mgf {
            if *s < 0.0 {
                assert!(est.value > 0.0 && est.value <= 1.0);
            } else if *s == 0.0 {
                assert_eq!(est.value, 1.0);
            } else {
                assert!(est.value > 1.0);
            }
        }
        assert!((r.occupancy.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn occupancy_reproduces_the_stationary_distribution() {
    let reps = 20;
    for (d, b) in [(Discipline::LcfsNp, 2), (Discipline::LcfsPw, 2), (Discipline::LcfsPw, 3)] {
        let mut cfg = config(0.8, 1.5, b, d, EhMode::WhenEmpty);
        cfg.horizon = 5e4;
        let runs: Vec<Vec<f64>> = (0..reps)
            .map(|seed| simulate(&SimConfig { seed, ..cfg.clone() }).unwrap().occupancy)
            .collect();
        let exact = match d {
            Discipline::LcfsPw => pw_steady_state(&cfg.params).0,
            _ => np_ps_steady_state(&cfg.params).0,
        };
        for (q, pi) in exact.iter().enumerate() {
            let xs: Vec<f64> = runs.iter().map(|o| o[q]).collect();
            let mean = xs.iter().sum::<f64>() / reps as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
            let se = (var / reps as f64).sqrt();
            assert!((mean - pi).abs() <= 3.0 * se, "{d} B={b} state {q}: {mean} vs {pi} (se {se})");
        }
    }
}

#[test]
fn rejects_invalid_windows() {
    let mut cfg = config(1.0, 1.0, 1, Discipline::LcfsNp, EhMode::WhenEmpty);
    cfg.warmup = -1.0;
    assert!(matches!(simulate(&cfg), Err(SimError::Window { .. })));
    cfg.warmup = 0.0;
    cfg.horizon = f64::INFINITY;
    assert!(simulate(&cfg).is_err());
}
