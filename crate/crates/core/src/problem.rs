//! Problem definition `dX + AX dt = F(X) dt + dW` on a rectangle and its
//! P1 discretization.

use std::fmt;
use std::sync::Arc;

use crate::drift::DriftPolynomial;
use crate::fem::{
    apply_dirichlet, assemble_mass, assemble_stiffness, coercivity_diagnostic, round_up_one_digit,
    CoercivityReport, DiffusionField, DiscreteSystem, FemError, NodalField, OperatorSpec,
    VelocityField,
};
use crate::mesh::{build_rectangle_mesh, classify_boundary, BoundarySpec, Mesh, Side};

/// Shifts below this are round-off in the eigenvalue estimate, not a
/// genuine loss of coercivity.
const SHIFT_FLOOR: f64 = 1e-9;

#[derive(Clone)]
pub enum InitialData {
    Constant(f64),
    /// `cos(πx/L1) cos(πy/L2)`
    CosineMode,
    Variable(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialData::Constant(c) => write!(f, "Constant({c})"),
            InitialData::CosineMode => write!(f, "CosineMode"),
            InitialData::Variable(_) => write!(f, "Variable(<fn>)"),
        }
    }
}

pub type ExactSolution = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GardingShift {
    /// Use the coercivity diagnostic, rounded up to one significant digit.
    Auto,
    Fixed(f64),
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub l1: f64,
    pub l2: f64,
    pub operator: OperatorSpec,
    pub shift: GardingShift,
    pub boundary: BoundarySpec,
    pub drift: DriftPolynomial,
    pub initial: InitialData,
    pub t_final: f64,
    /// Closed-form solution `(x, y, t) ↦ X`, for deterministic problems.
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("l1", &self.l1)
            .field("l2", &self.l2)
            .field("operator", &self.operator)
            .field("shift", &self.shift)
            .field("boundary", &self.boundary)
            .field("drift", &self.drift)
            .field("initial", &self.initial)
            .field("t_final", &self.t_final)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// Reaction-dominated advection–diffusion on the unit square:
    /// `D = 0.01 I`, cellular velocity of unit amplitude, `φ(x) = x − x⁵`,
    /// `X = 1` on `x = 0`, homogeneous Neumann elsewhere, `X₀ ≡ 1`, `T = 1`.
    pub fn reaction_benchmark() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            operator: OperatorSpec {
                diffusion: DiffusionField::Isotropic(0.01),
                advection: VelocityField::Cellular {
                    amplitude: 1.0,
                    l1: 1.0,
                    l2: 1.0,
                },
                robin_alpha0: 0.0,
                garding_shift: 0.0,
            },
            shift: GardingShift::Auto,
            boundary: BoundarySpec::dirichlet(&[Side::Left], 1.0),
            drift: DriftPolynomial::allen_cahn_quintic(),
            initial: InitialData::Constant(1.0),
            t_final: 1.0,
            exact: None,
        }
    }

    /// Heat equation with homogeneous Neumann data on the unit square and
    /// exact solution `e^{−2π²t} cos(πx) cos(πy)`.
    pub fn heat_benchmark(t_final: f64) -> Self {
        use std::f64::consts::PI;
        Self {
            l1: 1.0,
            l2: 1.0,
            operator: OperatorSpec::laplacian(),
            shift: GardingShift::Fixed(0.0),
            boundary: BoundarySpec::neumann(),
            drift: DriftPolynomial::zero(),
            initial: InitialData::CosineMode,
            t_final,
            exact: Some(Arc::new(|x, y, t| {
                (-2.0 * PI * PI * t).exp() * (PI * x).cos() * (PI * y).cos()
            })),
        }
    }

    pub fn initial_value(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        match &self.initial {
            InitialData::Constant(c) => *c,
            InitialData::CosineMode => (PI * x / self.l1).cos() * (PI * y / self.l2).cos(),
            InitialData::Variable(f) => f(x, y),
        }
    }

    pub fn mesh(&self, nx: usize, ny: usize) -> Result<Mesh, FemError> {
        let mesh = build_rectangle_mesh(self.l1, self.l2, nx, ny)?;
        Ok(classify_boundary(&mesh, &self.boundary)?)
    }

    /// Mesh, assembled system with the shift applied, and the compensated
    /// drift.
    pub fn discretize(&self, nx: usize, ny: usize) -> Result<Discretization, FemError> {
        let mesh = self.mesh(nx, ny)?;
        let mass = assemble_mass(&mesh)?;
        let unshifted = assemble_stiffness(&mesh, &self.operator.with_shift(0.0))?;
        let base = apply_dirichlet(&mass, &unshifted, &self.boundary, &mesh)?;
        let coercivity = coercivity_diagnostic(&base);
        let c0 = match self.shift {
            GardingShift::Fixed(c) => c,
            GardingShift::Auto if coercivity.required_c0 > SHIFT_FLOOR => {
                round_up_one_digit(coercivity.required_c0)
            }
            GardingShift::Auto => 0.0,
        };
        let system = if c0 == 0.0 {
            base
        } else {
            let stiffness = assemble_stiffness(&mesh, &self.operator.with_shift(c0))?;
            apply_dirichlet(&mass, &stiffness, &self.boundary, &mesh)?
        };
        Ok(Discretization {
            mesh,
            system,
            drift: self.drift.with_compensation(c0),
            shift: c0,
            coercivity,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub system: DiscreteSystem,
    /// φ plus the shift compensation.
    pub drift: DriftPolynomial,
    pub shift: f64,
    /// Diagnostic of the unshifted operator.
    pub coercivity: CoercivityReport,
}

impl Discretization {
    /// Nodal interpolant of `X₀` with Dirichlet nodes pinned.
    pub fn initial_field(&self, problem: &ProblemSpec) -> NodalField {
        let mut values = self.mesh.interpolate(|x, y| problem.initial_value(x, y));
        self.system.pin(&mut values);
        NodalField::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_velocity_is_tangential_and_bounded() {
        let p = ProblemSpec::reaction_benchmark();
        for k in 0..=20 {
            let s = k as f64 / 20.0;
            for (x, y, normal) in [(0.0, s, 0), (1.0, s, 0), (s, 0.0, 1), (s, 1.0, 1)] {
                let q = p.operator.advection.at(x, y);
                assert!(q[normal].abs() < 1e-15);
            }
            for t in 0..=20 {
                let q = p.operator.advection.at(s, t as f64 / 20.0);
                assert!(q[0].hypot(q[1]) <= 1.0 + 1e-15);
            }
        }
    }

    #[test]
    fn benchmark_discretization() {
        let p = ProblemSpec::reaction_benchmark();
        let d = p.discretize(8, 8).unwrap();
        assert_eq!(d.system.dirichlet_nodes.len(), 9);
        assert!(d.coercivity.converged());
        assert!(d.shift >= d.coercivity.required_c0);
        assert_eq!(d.drift.compensation(), d.shift);
        let x0 = d.initial_field(&p);
        assert!(x0.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn heat_benchmark_has_no_shift() {
        let p = ProblemSpec::heat_benchmark(0.1);
        let d = p.discretize(4, 4).unwrap();
        assert_eq!(d.shift, 0.0);
        assert_eq!(d.system.n_free(), 25);
        let x0 = d.initial_field(&p);
        let exact = p.exact.as_ref().unwrap();
        for (n, pt) in d.mesh.nodes.iter().enumerate() {
            assert!((x0[n] - exact(pt[0], pt[1], 0.0)).abs() < 1e-15);
        }
    }
}
