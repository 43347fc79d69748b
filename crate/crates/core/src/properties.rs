use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::experiment::{
    run_spatial_study, run_temporal_study, SpatialReference, StudyConfig, StudyError, StudyKind,
};
use crate::fem::{l2_norm, NodalField};
use crate::noise::{build_spectrum, eigenfunctions, sample_path, NoiseEvaluator, NoiseSpec};
use crate::problem::{InitialData, ProblemSpec};
use crate::stepper::{step_count, Scheme, StepperConfig, TimeStepper};

fn noise(n: usize) -> NoiseSpec {
    build_spectrum(2.0, 0.001, n, n, 1.0, 1.0).unwrap()
}

fn study(problem: ProblemSpec, noise: Option<NoiseSpec>, samples: usize, kind: StudyKind) -> StudyConfig {
    StudyConfig {
        problem,
        noise,
        samples,
        master_seed: 99,
        schemes: vec![Scheme::Implicit],
        stepper: StepperConfig::new(Scheme::Implicit, 0.01),
        workers: 1,
        kind,
    }
}

#[test]
fn nodal_increment_variance_matches_spectrum() {
    let spec = noise(6);
    let problem = ProblemSpec::heat_benchmark(1.0);
    let mesh = problem.mesh(8, 8).unwrap();
    let eval = NoiseEvaluator::new(&spec, &mesh).unwrap();
    let node = mesh.node_id(3, 5);
    let [x, y] = mesh.nodes[node];
    let (ex, ey) = (eigenfunctions(6, 1.0, x), eigenfunctions(6, 1.0, y));
    let dt = 0.01;
    let mut expected = 0.0;
    for i in 0..=6 {
        for j in 0..=6 {
            expected += dt * spec.q_at(i, j) * (ex[i] * ey[j]).powi(2);
        }
    }
    let samples = 4000;
    let path = sample_path(&spec, samples, dt, 5, 0).unwrap();
    let values: Vec<f64> = (0..samples).map(|s| eval.evaluate(path.step(s))[node]).collect();
    let mean = values.iter().sum::<f64>() / samples as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    assert!((var / expected - 1.0).abs() < 0.15, "{var} vs {expected}");
}

#[test]
fn nodal_increments_telescope() {
    // modal increments sum exactly; the nodal map is linear, so the coarse
    // nodal increment matches the sum of fine ones up to round-off
    let spec = noise(8);
    let problem = ProblemSpec::heat_benchmark(1.0);
    let mesh = problem.mesh(8, 8).unwrap();
    let eval = NoiseEvaluator::new(&spec, &mesh).unwrap();
    let path = sample_path(&spec, 64, 1.0 / 64.0, 11, 4).unwrap();
    for k in [1, 2, 8, 64] {
        let mut coarse_total = vec![0.0; mesh.node_count()];
        for c in 0..64 / k {
            let z = eval.evaluate(&path.aggregated(c, k).unwrap());
            coarse_total.iter_mut().zip(z.iter()).for_each(|(a, b)| *a += b);
        }
        let mut fine_total = vec![0.0; mesh.node_count()];
        for s in 0..64 {
            let z = eval.evaluate(path.step(s));
            fine_total.iter_mut().zip(z.iter()).for_each(|(a, b)| *a += b);
        }
        for (a, b) in coarse_total.iter().zip(&fine_total) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "k={k}: {a} vs {b}");
        }
    }
}

/// Terminal gap between the schemes on a shared path.
fn scheme_gap(disc: &crate::problem::Discretization, x0: &NodalField, eval: &NoiseEvaluator,
              path: &crate::noise::BrownianPath, dt: f64) -> f64 {
    let n = step_count(1.0, dt).unwrap();
    let run = |scheme| {
        TimeStepper::new(&disc.system, &disc.drift, StepperConfig::new(scheme, dt))
            .unwrap()
            .run_with_noise(x0, n, Some((eval, path)))
            .unwrap()
            .terminal
    };
    let (a, b) = (run(Scheme::Implicit), run(Scheme::SemiImplicit));
    let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(u, v)| u - v).collect();
    l2_norm(&disc.system.mass, &diff).unwrap()
}

#[test]
fn schemes_differ_by_first_order_in_dt() {
    let problem = ProblemSpec::reaction_benchmark();
    let disc = problem.discretize(16, 16).unwrap();
    let spec = noise(16);
    let eval = NoiseEvaluator::new(&spec, &disc.mesh).unwrap();
    let x0 = disc.initial_field(&problem);
    let (coarse, fine) = (1.0 / 256.0, 1.0 / 512.0);
    let (mut gap_coarse, mut gap_fine) = (0.0, 0.0);
    for sample in 0..10 {
        let path = sample_path(&spec, 512, fine, 3, sample).unwrap();
        gap_coarse += scheme_gap(&disc, &x0, &eval, &path, coarse);
        gap_fine += scheme_gap(&disc, &x0, &eval, &path, fine);
    }
    let ratio = gap_coarse / gap_fine;
    assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn benchmark_moments_stay_bounded() {
    let problem = ProblemSpec::reaction_benchmark();
    let disc = problem.discretize(32, 32).unwrap();
    let spec = noise(64);
    let eval = NoiseEvaluator::new(&spec, &disc.mesh).unwrap();
    let x0 = disc.initial_field(&problem);
    let dt = 1.0 / 64.0;
    let stepper = TimeStepper::new(&disc.system, &disc.drift, StepperConfig::new(Scheme::Implicit, dt)).unwrap();
    let mut worst: f64 = 0.0;
    let mut newton_max = 0;
    for sample in 0..50 {
        let path = sample_path(&spec, 64, dt, 2024, sample).unwrap();
        let sol = stepper.run_with_noise(&x0, 64, Some((&eval, &path))).unwrap();
        assert!(sol.terminal.iter().all(|v| v.is_finite()));
        worst = worst.max(sol.max_mass_norm);
        newton_max = newton_max.max(sol.newton_iterations_max);
    }
    // the stable states are ±1; the noise moves the field by O(1)
    assert!(worst < 10.0, "max ‖X_m‖_M = {worst}");
    assert!(newton_max <= 8, "{newton_max} Newton iterations");
}

#[test]
fn coupled_reference_has_zero_error_at_unit_aggregation() {
    let kind = StudyKind::Temporal {
        dt_list: vec![1.0 / 32.0],
        reference_dt: 1.0 / 32.0,
        nx: 8,
        ny: 8,
    };
    let report = run_temporal_study(&study(ProblemSpec::reaction_benchmark(), Some(noise(8)), 4, kind)).unwrap();
    let p = &report.schemes[0].points[0];
    assert!(p.rms_error <= 1e-12, "{}", p.rms_error);
    // a single point leaves the order undefined
    assert!(report.schemes[0].fitted_order.is_nan());
}

#[test]
fn deterministic_linear_problem_is_first_order_in_time() {
    let mut problem = ProblemSpec::heat_benchmark(0.1);
    problem.initial = InitialData::Variable(std::sync::Arc::new(|x: f64, y: f64| (x * x + y).sin()));
    let kind = StudyKind::Temporal {
        dt_list: vec![0.1 / 8.0, 0.1 / 16.0, 0.1 / 32.0, 0.1 / 64.0],
        reference_dt: 0.1 / 1024.0,
        nx: 8,
        ny: 8,
    };
    let report = run_temporal_study(&study(problem, None, 1, kind)).unwrap();
    let order = report.schemes[0].fitted_order;
    assert!(order >= 0.9, "{order}");
    let points = &report.schemes[0].points;
    assert!(points.windows(2).all(|w| w[0].resolution < w[1].resolution));
}

#[test]
fn spatial_study_against_nested_reference() {
    let kind = StudyKind::Spatial {
        meshes: vec![(4, 4), (8, 8), (16, 16)],
        reference: SpatialReference::Mesh { nx: 64, ny: 64 },
        dt: 1e-4,
    };
    let report = run_spatial_study(&study(ProblemSpec::heat_benchmark(0.1), None, 1, kind)).unwrap();
    let order = report.schemes[0].fitted_order;
    assert!((1.8..=2.3).contains(&order), "{order}");
    let single = StudyKind::Spatial {
        meshes: vec![(8, 8)],
        reference: SpatialReference::Exact,
        dt: 1e-3,
    };
    let report = run_spatial_study(&study(ProblemSpec::heat_benchmark(0.1), None, 1, single)).unwrap();
    assert!(report.schemes[0].fitted_order.is_nan());
    assert_eq!(report.schemes[0].points.len(), 1);
}

#[test]
fn invalid_study_grids_are_rejected() {
    let non_nested = StudyKind::Spatial {
        meshes: vec![(3, 3)],
        reference: SpatialReference::Mesh { nx: 8, ny: 8 },
        dt: 0.01,
    };
    let err = run_spatial_study(&study(ProblemSpec::heat_benchmark(0.1), None, 1, non_nested)).unwrap_err();
    assert!(matches!(err, StudyError::Config(m) if m.contains("nested")));
    let non_multiple = StudyKind::Temporal {
        dt_list: vec![0.03],
        reference_dt: 0.02,
        nx: 4,
        ny: 4,
    };
    let err = run_temporal_study(&study(ProblemSpec::heat_benchmark(0.12), None, 1, non_multiple)).unwrap_err();
    assert!(matches!(err, StudyError::Config(m) if m.contains("multiple")));
}

#[test]
fn failing_sample_aborts_with_provenance() {
    // the explicit quintic overflows within a few steps from a large start
    let mut problem = ProblemSpec::heat_benchmark(1.0);
    problem.drift = crate::drift::DriftPolynomial::allen_cahn_quintic();
    problem.initial = InitialData::Constant(10.0);
    let mut cfg = study(
        problem,
        None,
        3,
        StudyKind::Temporal {
            dt_list: vec![1.0 / 16.0],
            reference_dt: 1.0 / 32.0,
            nx: 2,
            ny: 2,
        },
    );
    cfg.schemes = vec![Scheme::SemiImplicit];
    let err = run_temporal_study(&cfg).unwrap_err();
    match err {
        StudyError::Sample { sample, scheme, source, .. } => {
            assert_eq!(sample, 0);
            assert_eq!(scheme, "semi_implicit");
            assert!(source.is_numerical());
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn shifted_form_is_nonnegative_on_random_vectors() {
    use crate::fem::{DiffusionField, OperatorSpec, VelocityField};
    let problem = ProblemSpec {
        operator: OperatorSpec {
            diffusion: DiffusionField::Isotropic(0.05),
            advection: VelocityField::Uniform([1.0, -2.0]),
            robin_alpha0: 0.0,
            garding_shift: 0.0,
        },
        ..ProblemSpec::reaction_benchmark()
    };
    let disc = problem.discretize(12, 12).unwrap();
    assert!(disc.shift > 0.0);
    let sys = &disc.system;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let v: Vec<f64> = (0..sys.n_free()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kv = sys.stiffness_ff.bilinear(&v, &v).unwrap();
        let mv = sys.mass_ff.bilinear(&v, &v).unwrap();
        assert!(kv >= -1e-10 * mv, "{kv} {mv}");
    }
}
