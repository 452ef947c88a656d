use ehaoi::closed_form::{self, BranchTag};
use ehaoi::model::{build_model, Discipline, EhMode, SystemParams, AOI_COMPONENT};
use ehaoi::solver::{self, balance_residual, first_order_residual, moment_vectors, steady_state};

const RHOS: [f64; 4] = [0.3, 1.0, 1.7, 4.0];
const BETAS: [f64; 4] = [0.5, 1.0, 2.5, 20.0];

fn params(rho: f64, beta: f64, b: usize) -> SystemParams {
    SystemParams::from_utilization(rho, beta, 1.0, b).unwrap()
}

fn grid() -> impl Iterator<Item = ehaoi::ShsModel> {
    RHOS.into_iter().flat_map(|r| {
        BETAS.into_iter().flat_map(move |b| {
            [1, 2, 4].into_iter().flat_map(move |cap| {
                EhMode::ALL
                    .into_iter()
                    .flat_map(move |m| Discipline::ALL.into_iter().map(move |d| build_model(params(r, b, cap), d, m)))
            })
        })
    })
}

fn assert_close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol * b.abs().max(1e-300), "{a} vs {b} (tol {tol})");
}

#[test]
fn steady_state_examples() {
    let pi = steady_state(&build_model(params(1.0, 1.0, 1), Discipline::LcfsNp, EhMode::WhenEmpty)).unwrap();
    for v in &pi.pi {
        assert_close(*v, 1.0 / 3.0, 1e-14);
    }
    let pi = steady_state(&build_model(params(1.0, 2.0, 1), Discipline::LcfsNp, EhMode::WhenEmpty)).unwrap();
    for (v, e) in pi.pi.iter().zip([0.2, 0.4, 0.4]) {
        assert_close(*v, e, 1e-14);
    }
}

#[test]
fn stationary_distribution_is_balanced() {
    for model in grid() {
        let pi = steady_state(&model).unwrap();
        assert!(pi.pi.iter().all(|v| *v >= 0.0));
        assert!((pi.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let worst = balance_residual(&model, &pi).into_iter().fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(worst < 1e-12, "{}/{}: residual {worst}", model.discipline, model.eh_mode);
    }
}

#[test]
fn steady_state_matches_closed_form_probabilities() {
    for model in grid().filter(|m| m.eh_mode == EhMode::WhenEmpty) {
        let pi = steady_state(&model).unwrap();
        let (exact, _) = match model.discipline {
            Discipline::LcfsPw => closed_form::pw_steady_state(&model.params),
            _ => closed_form::np_ps_steady_state(&model.params),
        };
        for (a, b) in pi.pi.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn first_order_vectors_solve_the_linear_system() {
    for model in grid() {
        let pi = steady_state(&model).unwrap();
        let mv = moment_vectors(&model, &pi, 2).unwrap();
        assert!(first_order_residual(&model, &pi, &mv) < 1e-10);
        for q in 0..model.n_states() {
            assert!(mv.vector(1, q).iter().all(|v| *v >= 0.0));
        }
        assert!(mv.aggregate(2) >= mv.aggregate(1).powi(2));
    }
}

#[test]
fn moment_examples() {
    let np = build_model(params(1.0, 1.0, 1), Discipline::LcfsNp, EhMode::WhenEmpty);
    let ps = build_model(params(1.0, 1.0, 1), Discipline::LcfsPs, EhMode::WhenEmpty);
    assert_close(solver::aoi_moment(&np, 1).unwrap(), 3.0, 1e-12);
    assert_close(solver::aoi_moment(&np, 2).unwrap(), 38.0 / 3.0, 1e-12);
    assert_close(solver::aoi_moment(&ps, 1).unwrap(), 2.5, 1e-12);
    assert!(solver::aoi_moment(&np, 0).is_err());
}

#[test]
fn pw_matches_the_boundary_branch() {
    let p = params(1.0, 2.0, 2);
    let model = build_model(p, Discipline::LcfsPw, EhMode::WhenEmpty);
    let cf = closed_form::moments_closed(&p, Discipline::LcfsPw, EhMode::WhenEmpty, 1).unwrap();
    assert_eq!(cf.branch, BranchTag::BetaEqRhoOnePlusRho);
    assert_close(solver::aoi_moment(&model, 1).unwrap(), cf.value, 1e-9);
}

#[test]
fn mgf_examples() {
    let model = build_model(params(1.0, 1.0, 1), Discipline::LcfsNp, EhMode::WhenEmpty);
    let at_zero = solver::mgf(&model, 0.0).unwrap();
    assert!(at_zero.converged);
    assert!((at_zero.value - 1.0).abs() < 1e-12);
    assert_close(solver::mgf(&model, -1.0).unwrap().value, 7.0 / 48.0, 1e-12);
    let pole = solver::mgf(&model, 1.5).unwrap();
    assert!(!pole.converged);
    assert!(pole.value.is_infinite());
}

#[test]
fn mgf_is_one_at_zero_everywhere() {
    for model in grid() {
        let m = solver::mgf(&model, 0.0).unwrap();
        assert!(m.converged && (m.value - 1.0).abs() < 1e-12);
    }
}

#[test]
fn divergence_matches_the_first_pole() {
    // The NP empty-only transform has its first pole at min(1, rho, beta).
    for r in RHOS {
        for b in BETAS {
            let p = params(r, b, 2);
            let model = build_model(p, Discipline::LcfsNp, EhMode::WhenEmpty);
            let pole = closed_form::first_pole(&p);
            assert!(solver::mgf(&model, 0.99 * pole).unwrap().converged);
            assert!(!solver::mgf(&model, 1.01 * pole).unwrap().converged);
        }
    }
}

#[test]
fn empty_state_component_has_closed_form() {
    for (r, b, cap) in [(1.0, 1.0, 1), (0.5, 2.0, 3), (2.0, 0.7, 2), (1.3, 1.3, 5)] {
        let p = params(r, b, cap);
        let model = build_model(p, Discipline::LcfsNp, EhMode::WhenEmpty);
        let pi = steady_state(&model).unwrap();
        for s in [-2.0, -0.5, 0.0, 0.2] {
            if s >= closed_form::first_pole(&p) {
                continue;
            }
            let sample = solver::mgf_with(&model, &pi, s).unwrap();
            let v10 = sample.vectors.unwrap()[AOI_COMPONENT];
            let expect = b * pi.pi[0] / ((1.0 - s) * (b - s));
            assert_close(v10, expect, 1e-10);
        }
    }
}

#[test]
fn mgf_curve_derivative_and_shape() {
    let model = build_model(params(1.0, 1.0, 1), Discipline::LcfsNp, EhMode::WhenEmpty);
    let curve = solver::mgf_curve(&model, &[-0.01, 0.0, 0.01]).unwrap();
    assert_close(curve.first_derivative.unwrap(), 3.0, 1e-3);

    let single = solver::mgf_curve(&model, &[0.0]).unwrap();
    assert_eq!(single.samples.len(), 1);
    assert!((single.samples[0].value - 1.0).abs() < 1e-12);
    assert!(single.first_derivative.is_none());

    let grid: Vec<f64> = (0..40).map(|i| -3.0 + 0.1 * i as f64).collect();
    let curve = solver::mgf_curve(&model, &grid).unwrap();
    let values: Vec<f64> = curve.samples.iter().filter(|s| s.converged).map(|s| s.value).collect();
    assert!(values.len() > 30);
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn solve_bundles_everything() {
    let model = build_model(params(0.8, 1.9, 3), Discipline::LcfsPw, EhMode::Anytime);
    let out = solver::solve(&model, 3, &[-0.5, 0.0]).unwrap();
    assert_eq!(out.aoi_moments.len(), 3);
    assert_close(out.aoi_moments[0], solver::aoi_moment(&model, 1).unwrap(), 1e-14);
    assert!(out.aoi_moments[2] > out.aoi_moments[1] * out.aoi_moments[0]);
    assert_eq!(out.mgf.len(), 2);
}

#[test]
fn rates_scale_with_mu() {
    for d in Discipline::ALL {
        let slow = build_model(SystemParams::from_utilization(0.9, 1.4, 1.0, 2).unwrap(), d, EhMode::Anytime);
        let fast = build_model(SystemParams::from_utilization(0.9, 1.4, 4.0, 2).unwrap(), d, EhMode::Anytime);
        assert_close(solver::aoi_moment(&fast, 1).unwrap(), solver::aoi_moment(&slow, 1).unwrap() / 4.0, 1e-12);
        assert_close(solver::aoi_moment(&fast, 2).unwrap(), solver::aoi_moment(&slow, 2).unwrap() / 16.0, 1e-12);
        assert_close(solver::mgf(&fast, -2.0).unwrap().value, solver::mgf(&slow, -0.5).unwrap().value, 1e-12);
    }
}
