//! Backward Euler time stepping of the semi-discrete system
//!
//! ```text
//! (M + Δt K) y − Δt M φ(y) = M (x + ζ)          (implicit)
//! (M + Δt K) y = M (x + Δt φ(x) + ζ)            (semi-implicit)
//! ```
//!
//! on free nodes, with Dirichlet nodes pinned and the noise at Dirichlet
//! nodes discarded.

use thiserror::Error;

use crate::drift::{DriftError, DriftPolynomial};
use crate::fem::{DiscreteSystem, NodalField};
use crate::linalg::{
    dot, gmres, BandedLu, LinalgError, LinearSolver, Preconditioner, SolveMethod, SolveSettings,
    SparseMatrix,
};
use crate::noise::{BrownianPath, NoiseError, NoiseEvaluator};
use crate::problem::{Discretization, ProblemSpec};

/// Seed of the fixed sample used for the well-posedness guard.
const GUARD_SEED: u64 = 0x5eed_0f_1d;
const GUARD_TRIALS: usize = 2_000;

#[derive(Debug, Error)]
pub enum StepError {
    #[error("stepper configuration: {0}")]
    Config(String),
    #[error("Newton did not converge in {iterations} iterations (residual history {history:?})")]
    NewtonNotConverged { iterations: usize, history: Vec<f64> },
    #[error("solution blew up at iteration {iteration} (residual {residual})")]
    Divergence { iteration: usize, residual: f64 },
    #[error(transparent)]
    Linear(#[from] LinalgError),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<StepError>,
    },
}

impl StepError {
    /// True for failures of the numerical method itself.
    pub fn is_numerical(&self) -> bool {
        match self {
            StepError::Config(_) | StepError::Noise(_) => false,
            StepError::AtStep { source, .. } => source.is_numerical(),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Implicit,
    SemiImplicit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Implicit => "implicit",
            Scheme::SemiImplicit => "semi_implicit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "implicit" => Some(Scheme::Implicit),
            "semi_implicit" | "semi-implicit" => Some(Scheme::SemiImplicit),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// Newton stops once the residual M-norm drops below this fraction of
    /// the right-hand side M-norm.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub solve: SolveSettings,
}

impl StepperConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        Self {
            scheme,
            dt,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            solve: SolveSettings::default(),
        }
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..*self }
    }

    pub fn with_scheme(&self, scheme: Scheme) -> Self {
        Self { scheme, ..*self }
    }

    /// Checks `dt > 0` and `dt · L0 < 1`, with `L0` the one-sided
    /// Lipschitz estimate of the (compensated) drift.
    pub fn check(&self, drift: &DriftPolynomial) -> Result<(), StepError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(StepError::Config("Newton tolerance and iteration cap must be positive".into()));
        }
        if !(self.solve.rel_tol > 0.0) || self.solve.max_iterations == Some(0) {
            return Err(StepError::Config("linear tolerance and iteration cap must be positive".into()));
        }
        let l0 = drift.one_sided_constant_estimate(GUARD_TRIALS, GUARD_SEED);
        if self.dt * l0 >= 1.0 {
            return Err(StepError::Config(format!(
                "dt * L0 = {} * {l0} >= 1; the implicit equation may not be uniquely solvable",
                self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution {
    pub terminal: NodalField,
    pub step_count: usize,
    pub newton_iterations_total: usize,
    /// Largest Newton iteration count of any single step.
    pub newton_iterations_max: usize,
    /// `max_m max_i |X_m(i)|`, including the initial state.
    pub max_abs: f64,
    /// `max_m ‖X_m‖_M` over free nodes.
    pub max_mass_norm: f64,
}

/// A step operator for one `(system, drift, dt, scheme)` with `M + Δt K`
/// factored once.
#[derive(Debug, Clone)]
pub struct TimeStepper<'a> {
    system: &'a DiscreteSystem,
    drift: &'a DriftPolynomial,
    cfg: StepperConfig,
    base: LinearSolver,
    /// Frozen `M + Δt K` factorization used to precondition Krylov Newton
    /// solves.
    precond: Option<BandedLu>,
    lift: Vec<f64>,
}

impl<'a> TimeStepper<'a> {
    pub fn new(
        system: &'a DiscreteSystem,
        drift: &'a DriftPolynomial,
        cfg: StepperConfig,
    ) -> Result<Self, StepError> {
        cfg.check(drift)?;
        let a0 = SparseMatrix::linear_combination(1.0, &system.mass_ff, cfg.dt, &system.stiffness_ff)?;
        let base = LinearSolver::new(a0, cfg.solve)?;
        let precond = match (cfg.solve.method, cfg.scheme) {
            (SolveMethod::KrylovNonsymmetric, Scheme::Implicit) if system.n_free() > 0 => {
                Some(BandedLu::factor(base.matrix())?)
            }
            _ => None,
        };
        // free rows of  Δt M φ(g) − Δt K g  from the Dirichlet columns
        let phi_g: Vec<f64> = system.dirichlet_values.iter().map(|&g| drift.eval(g)).collect();
        let mass_phi_g = system.mass_fd.matvec(&phi_g)?;
        let lift = mass_phi_g
            .iter()
            .zip(&system.stiffness_lift)
            .map(|(m, k)| cfg.dt * (m - k))
            .collect();
        Ok(Self {
            system,
            drift,
            cfg,
            base,
            precond,
            lift,
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn system(&self) -> &DiscreteSystem {
        self.system
    }

    /// Advances a full nodal field by one step. Returns the new field and
    /// the number of Newton iterations (0 for the semi-implicit scheme).
    pub fn step(&self, x_prev: &NodalField, zeta: &NodalField) -> Result<(NodalField, usize), StepError> {
        let n = self.system.n_nodes();
        if x_prev.len() != n || zeta.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: x_prev.len().min(zeta.len()),
            }
            .into());
        }
        let x = self.system.restrict(x_prev);
        let z = self.system.restrict(zeta);
        let (y, its) = self.step_free(&x, &z)?;
        Ok((self.system.expand(&y), its))
    }

    /// One step on free-node vectors.
    pub fn step_free(&self, x: &[f64], zeta: &[f64]) -> Result<(Vec<f64>, usize), StepError> {
        if self.system.n_free() == 0 {
            return Ok((Vec::new(), 0));
        }
        match self.cfg.scheme {
            Scheme::Implicit => self.newton(x, zeta),
            Scheme::SemiImplicit => {
                let dt = self.cfg.dt;
                let mut load = Vec::with_capacity(x.len());
                for (i, (&xi, &zi)) in x.iter().zip(zeta).enumerate() {
                    if !xi.is_finite() {
                        return Err(DriftError::NonFinite { node: self.system.free_nodes[i], value: xi }.into());
                    }
                    let li = xi + dt * self.drift.eval(xi) + zi;
                    if !li.is_finite() {
                        // the explicit drift overflowed: the step has blown up
                        return Err(StepError::Divergence {
                            iteration: 0,
                            residual: li,
                        });
                    }
                    load.push(li);
                }
                let mut rhs = self.system.mass_ff.matvec(&load)?;
                rhs.iter_mut().zip(&self.lift).for_each(|(r, l)| *r += l);
                Ok((self.base.solve(&rhs)?, 0))
            }
        }
    }

    fn mass_norm(&self, v: &[f64]) -> f64 {
        let mv = self.system.mass_ff.matvec(v).expect("free vector length");
        dot(v, &mv).max(0.0).sqrt()
    }

    fn newton(&self, x: &[f64], zeta: &[f64]) -> Result<(Vec<f64>, usize), StepError> {
        let dt = self.cfg.dt;
        let sys = self.system;
        let n = x.len();
        let load: Vec<f64> = x.iter().zip(zeta).map(|(a, b)| a + b).collect();
        let mut rhs = sys.mass_ff.matvec(&load)?;
        rhs.iter_mut().zip(&self.lift).for_each(|(r, l)| *r += l);
        let rhs_norm = self.mass_norm(&rhs);

        let a0 = self.base.matrix();
        let mut y = x.to_vec();
        let mut phi = vec![0.0; n];
        let mut history = Vec::new();
        for iteration in 0..=self.cfg.newton_max_iter {
            for (i, (p, &yi)) in phi.iter_mut().zip(&y).enumerate() {
                if !yi.is_finite() {
                    return Err(if iteration == 0 {
                        DriftError::NonFinite { node: sys.free_nodes[i], value: yi }.into()
                    } else {
                        StepError::Divergence { iteration, residual: f64::NAN }
                    });
                }
                *p = self.drift.eval(yi);
            }
            let a0y = a0.matvec(&y)?;
            let m_phi = sys.mass_ff.matvec(&phi)?;
            let residual: Vec<f64> = (0..n).map(|i| a0y[i] - dt * m_phi[i] - rhs[i]).collect();
            let r_norm = self.mass_norm(&residual);
            history.push(r_norm);
            if !r_norm.is_finite() {
                return Err(StepError::Divergence {
                    iteration,
                    residual: r_norm,
                });
            }
            let scale = rhs_norm.max(self.mass_norm(&a0y));
            if r_norm <= self.cfg.newton_tol * scale || r_norm == 0.0 {
                return Ok((y, iteration));
            }
            if iteration == self.cfg.newton_max_iter {
                break;
            }
            // J = M + ΔtK − Δt M diag(φ′(y))
            let slope: Vec<f64> = y.iter().map(|&v| self.drift.derivative(v)).collect();
            let jacobian = SparseMatrix::linear_combination(1.0, a0, -dt, &sys.mass_ff.scale_columns(&slope)?)?;
            let neg_r: Vec<f64> = residual.iter().map(|r| -r).collect();
            let delta = match self.cfg.solve.method {
                SolveMethod::DirectLu => LinearSolver::new(jacobian, self.cfg.solve)?.solve(&neg_r)?,
                SolveMethod::KrylovNonsymmetric => {
                    let pc = self.precond.as_ref().map(|p| p as &dyn Preconditioner);
                    gmres(&jacobian, &neg_r, None, &self.cfg.solve, pc)?.0
                }
            };
            y.iter_mut().zip(&delta).for_each(|(yi, di)| *yi += di);
        }
        Err(StepError::NewtonNotConverged {
            iterations: self.cfg.newton_max_iter,
            history,
        })
    }

    /// Runs `n_steps` steps from `x0` (full field). `noise` supplies the
    /// nodal increment for each step.
    pub fn run(
        &self,
        x0: &NodalField,
        n_steps: usize,
        mut noise: impl FnMut(usize, &mut [f64]) -> Result<(), StepError>,
    ) -> Result<PathSolution, StepError> {
        let sys = self.system;
        let mut x = sys.restrict(x0);
        let mut zeta_full = vec![0.0; sys.n_nodes()];
        let mut max_abs = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut max_mass_norm = self.mass_norm(&x);
        let mut total = 0;
        let mut worst = 0;
        for step in 0..n_steps {
            let wrap = |e: StepError| StepError::AtStep {
                step,
                source: Box::new(e),
            };
            noise(step, &mut zeta_full).map_err(wrap)?;
            let zeta = sys.restrict(&zeta_full);
            let (y, its) = self.step_free(&x, &zeta).map_err(wrap)?;
            x = y;
            total += its;
            worst = worst.max(its);
            if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
                return Err(wrap(DriftError::NonFinite { node: sys.free_nodes[bad], value: x[bad] }.into()));
            }
            max_abs = x.iter().fold(max_abs, |m, v| m.max(v.abs()));
            max_mass_norm = max_mass_norm.max(self.mass_norm(&x));
        }
        let mut terminal = sys.expand(&x);
        sys.pin(&mut terminal);
        Ok(PathSolution {
            terminal,
            step_count: n_steps,
            newton_iterations_total: total,
            newton_iterations_max: worst,
            max_abs,
            max_mass_norm,
        })
    }

    /// Runs with noise increments aggregated from `path`.
    pub fn run_with_noise(
        &self,
        x0: &NodalField,
        n_steps: usize,
        noise: Option<(&NoiseEvaluator, &BrownianPath)>,
    ) -> Result<PathSolution, StepError> {
        match noise {
            None => self.run(x0, n_steps, |_, z| {
                z.iter_mut().for_each(|v| *v = 0.0);
                Ok(())
            }),
            Some((eval, path)) => {
                if n_steps == 0 {
                    return self.run(x0, 0, |_, _| Ok(()));
                }
                if path.n_fine_steps % n_steps != 0 {
                    return Err(NoiseError::Aggregation {
                        aggregation: path.n_fine_steps / n_steps.max(1),
                        n_fine_steps: path.n_fine_steps,
                    }
                    .into());
                }
                let aggregation = path.n_fine_steps / n_steps;
                self.run(x0, n_steps, |step, z| {
                    let modal = path.aggregated(step, aggregation)?;
                    eval.evaluate_into(&modal, z);
                    Ok(())
                })
            }
        }
    }
}

pub fn backward_euler_step(
    system: &DiscreteSystem,
    drift: &DriftPolynomial,
    x_prev: &NodalField,
    zeta: &NodalField,
    cfg: &StepperConfig,
) -> Result<NodalField, StepError> {
    let cfg = cfg.with_scheme(Scheme::Implicit);
    TimeStepper::new(system, drift, cfg)?.step(x_prev, zeta).map(|(y, _)| y)
}

pub fn semi_implicit_step(
    system: &DiscreteSystem,
    drift: &DriftPolynomial,
    x_prev: &NodalField,
    zeta: &NodalField,
    cfg: &StepperConfig,
) -> Result<NodalField, StepError> {
    let cfg = cfg.with_scheme(Scheme::SemiImplicit);
    TimeStepper::new(system, drift, cfg)?.step(x_prev, zeta).map(|(y, _)| y)
}

/// Number of steps of size `dt` in `[0, t_final]`; `dt` must divide
/// `t_final` up to round-off.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize, StepError> {
    if t_final == 0.0 {
        return Ok(0);
    }
    let n = (t_final / dt).round();
    if !(n >= 1.0) || (n * dt - t_final).abs() > 1e-9 * t_final {
        return Err(StepError::Config(format!(
            "dt = {dt} does not divide the final time {t_final}"
        )));
    }
    Ok(n as usize)
}

/// Solves one path from the interpolated initial data to the final time.
pub fn solve_path(
    problem: &ProblemSpec,
    disc: &Discretization,
    noise: Option<(&NoiseEvaluator, &BrownianPath)>,
    cfg: &StepperConfig,
) -> Result<PathSolution, StepError> {
    let x0 = disc.initial_field(problem);
    let n_steps = step_count(problem.t_final, cfg.dt)?;
    if n_steps == 0 {
        return Ok(PathSolution {
            max_abs: x0.iter().fold(0.0, |m, v| m.max(v.abs())),
            max_mass_norm: disc.system.free_mass_norm(&disc.system.restrict(&x0)),
            terminal: x0,
            step_count: 0,
            newton_iterations_total: 0,
            newton_iterations_max: 0,
        });
    }
    if let Some((_, path)) = noise {
        let span = path.dt_fine * path.n_fine_steps as f64;
        if (span - problem.t_final).abs() > 1e-9 * problem.t_final {
            return Err(StepError::Config(format!(
                "Brownian path covers [0, {span}] but the final time is {}",
                problem.t_final
            )));
        }
    }
    let stepper = TimeStepper::new(&disc.system, &disc.drift, *cfg)?;
    stepper.run_with_noise(&x0, n_steps, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::l2_norm;
    use crate::linalg::build_sparse;

    fn scalar_system(lambda: f64) -> DiscreteSystem {
        let m = SparseMatrix::identity(1);
        let k = build_sparse(1, 1, &[(0, 0, lambda)]).unwrap();
        DiscreteSystem::from_matrices(m, k, &[]).unwrap()
    }

    fn one(v: f64) -> NodalField {
        NodalField::new(vec![v])
    }

    #[test]
    fn scalar_linear_resolvent() {
        let sys = scalar_system(3.0);
        let cfg = StepperConfig::new(Scheme::Implicit, 0.1);
        let y = backward_euler_step(&sys, &DriftPolynomial::zero(), &one(2.0), &one(0.0), &cfg).unwrap();
        assert!((y[0] - 2.0 / 1.3).abs() < 1e-14);
    }

    #[test]
    fn scalar_cubic_root() {
        let sys = scalar_system(0.0);
        let cfg = StepperConfig {
            newton_tol: 1e-14,
            ..StepperConfig::new(Scheme::Implicit, 1.0)
        };
        let cubic = DriftPolynomial::new(&[0.0, 0.0, 0.0, -1.0]);
        let y = backward_euler_step(&sys, &cubic, &one(2.0), &one(0.0), &cfg).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12, "{}", y[0]);
    }

    #[test]
    fn zero_state_is_fixed() {
        let p = ProblemSpec::heat_benchmark(0.1);
        let d = p.discretize(4, 4).unwrap();
        let quintic = DriftPolynomial::allen_cahn_quintic();
        let zero = NodalField::zeros(d.system.n_nodes());
        let cfg = StepperConfig::new(Scheme::Implicit, 0.01);
        let y = backward_euler_step(&d.system, &quintic, &zero, &zero, &cfg).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        let y = semi_implicit_step(&d.system, &quintic, &zero, &zero, &cfg).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn schemes_coincide_without_drift() {
        let p = ProblemSpec::reaction_benchmark();
        let d = p.discretize(6, 6).unwrap();
        let n = d.system.n_nodes();
        let x: NodalField = d.mesh.interpolate(|x, y| 1.0 + 0.3 * (3.0 * x).sin() * y).into();
        let zeta: NodalField = d.mesh.interpolate(|x, y| 0.05 * (x - y)).into();
        let drift = DriftPolynomial::zero();
        let cfg = StepperConfig::new(Scheme::Implicit, 0.05);
        let a = backward_euler_step(&d.system, &drift, &x, &zeta, &cfg).unwrap();
        let b = semi_implicit_step(&d.system, &drift, &x, &zeta, &cfg).unwrap();
        for i in 0..n {
            assert!((a[i] - b[i]).abs() < 1e-12, "node {i}");
        }
        for &node in &d.system.dirichlet_nodes {
            assert_eq!(a[node], 1.0);
            assert_eq!(b[node], 1.0);
        }
    }

    #[test]
    fn scalar_semi_implicit_linear_drift() {
        let (lambda, dt, x) = (2.0, 0.25, 1.5);
        let sys = scalar_system(lambda);
        let cfg = StepperConfig::new(Scheme::SemiImplicit, dt);
        let y = semi_implicit_step(&sys, &DriftPolynomial::new(&[0.0, 1.0]), &one(x), &one(0.0), &cfg)
            .unwrap();
        assert!((y[0] - x * (1.0 + dt) / (1.0 + dt * lambda)).abs() < 1e-14);
    }

    #[test]
    fn krylov_path_matches_direct() {
        let p = ProblemSpec::reaction_benchmark();
        let d = p.discretize(6, 6).unwrap();
        let x: NodalField = d.mesh.interpolate(|x, y| 1.0 - 0.8 * x * y).into();
        let zeta: NodalField = d.mesh.interpolate(|x, _| 0.1 * x).into();
        let direct = StepperConfig::new(Scheme::Implicit, 1.0 / 16.0);
        let krylov = StepperConfig {
            solve: SolveSettings {
                rel_tol: 1e-12,
                ..SolveSettings::krylov()
            },
            ..direct
        };
        for scheme in [Scheme::Implicit, Scheme::SemiImplicit] {
            let a = TimeStepper::new(&d.system, &d.drift, direct.with_scheme(scheme))
                .unwrap()
                .step(&x, &zeta)
                .unwrap()
                .0;
            let b = TimeStepper::new(&d.system, &d.drift, krylov.with_scheme(scheme))
                .unwrap()
                .step(&x, &zeta)
                .unwrap()
                .0;
            for i in 0..a.len() {
                assert!((a[i] - b[i]).abs() < 1e-9, "{scheme:?} node {i}");
            }
        }
    }

    #[test]
    fn guard_rejects_large_steps() {
        let sys = scalar_system(1.0);
        let drift = DriftPolynomial::allen_cahn_quintic();
        let err = TimeStepper::new(&sys, &drift, StepperConfig::new(Scheme::Implicit, 1.5)).unwrap_err();
        assert!(matches!(err, StepError::Config(m) if m.contains("L0")));
        assert!(TimeStepper::new(&sys, &drift, StepperConfig::new(Scheme::Implicit, 0.5)).is_ok());
        assert!(TimeStepper::new(&sys, &drift, StepperConfig::new(Scheme::Implicit, 0.0)).is_err());
    }

    #[test]
    fn newton_failure_reports_history() {
        let sys = scalar_system(0.0);
        let cfg = StepperConfig {
            newton_max_iter: 1,
            newton_tol: 1e-15,
            ..StepperConfig::new(Scheme::Implicit, 1.0)
        };
        let cubic = DriftPolynomial::new(&[0.0, 0.0, 0.0, -1.0]);
        match backward_euler_step(&sys, &cubic, &one(5.0), &one(0.0), &cfg) {
            Err(StepError::NewtonNotConverged { history, .. }) => assert_eq!(history.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_and_zero_paths() {
        let p = ProblemSpec {
            t_final: 0.0,
            ..ProblemSpec::heat_benchmark(0.0)
        };
        let d = p.discretize(4, 4).unwrap();
        let cfg = StepperConfig::new(Scheme::Implicit, 0.01);
        let sol = solve_path(&p, &d, None, &cfg).unwrap();
        assert_eq!(sol.step_count, 0);
        assert_eq!(sol.terminal, d.initial_field(&p));

        let p = ProblemSpec {
            initial: crate::problem::InitialData::Constant(0.0),
            ..ProblemSpec::heat_benchmark(0.1)
        };
        let d = p.discretize(4, 4).unwrap();
        let sol = solve_path(&p, &d, None, &cfg).unwrap();
        assert!(sol.terminal.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heat_path_matches_separation_of_variables() {
        let p = ProblemSpec::heat_benchmark(0.1);
        let d = p.discretize(32, 32).unwrap();
        let cfg = StepperConfig::new(Scheme::Implicit, 1e-3);
        let sol = solve_path(&p, &d, None, &cfg).unwrap();
        let exact = p.exact.as_ref().unwrap();
        let err = d
            .mesh
            .nodes
            .iter()
            .zip(sol.terminal.iter())
            .map(|(pt, v)| (v - exact(pt[0], pt[1], 0.1)).abs())
            .fold(0.0, f64::max);
        assert!(err <= 2e-2, "{err}");
        assert_eq!(sol.step_count, 100);
    }

    #[test]
    fn contraction_without_drift_or_noise() {
        let p = ProblemSpec::reaction_benchmark();
        let d = p.discretize(8, 8).unwrap();
        let constraints: Vec<(usize, f64)> =
            d.system.dirichlet_nodes.iter().map(|&n| (n, 0.0)).collect();
        let sys = DiscreteSystem::from_matrices(d.system.mass.clone(), d.system.stiffness.clone(), &constraints)
            .unwrap();
        let x: NodalField = d
            .mesh
            .interpolate(|x, y| x * (1.0 - y) + (5.0 * y).cos() * x)
            .into();
        let mut x = x;
        sys.pin(&mut x);
        let zero = NodalField::zeros(sys.n_nodes());
        let y = backward_euler_step(&sys, &DriftPolynomial::zero(), &x, &zero, &StepperConfig::new(Scheme::Implicit, 0.1))
            .unwrap();
        let before = l2_norm(&sys.mass, &x).unwrap();
        let after = l2_norm(&sys.mass, &y).unwrap();
        assert!(after <= before * (1.0 + 1e-12), "{after} > {before}");
    }
}
