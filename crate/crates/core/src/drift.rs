//! Polynomial Nemytskii drift `F(u)(x) = φ(u(x)) + c0 u(x)`.
//!
//! `c0` compensates the shift folded into the stiffness matrix, so the
//! continuous problem is unchanged by the shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fem::NodalField;
use crate::mesh::Mesh;

/// Gauss–Legendre nodes and weights on [0, 1], exact to degree 7.
const GAUSS4: [(f64, f64); 4] = [
    (0.069_431_844_202_973_71, 0.173_927_422_568_726_93),
    (0.330_009_478_207_571_9, 0.326_072_577_431_273_07),
    (0.669_990_521_792_428_1, 0.326_072_577_431_273_07),
    (0.930_568_155_797_026_3, 0.173_927_422_568_726_93),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error("drift polynomial violates admissibility: {0}")]
    Inadmissible(String),
    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftPolynomial {
    /// `a_0, a_1, …, a_l`, constant term first, trailing zeros removed.
    coefficients: Vec<f64>,
    compensation: f64,
}

impl DriftPolynomial {
    pub fn new(coefficients: &[f64]) -> Self {
        let mut coefficients = coefficients.to_vec();
        while coefficients.last() == Some(&0.0) {
            coefficients.pop();
        }
        Self {
            coefficients,
            compensation: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self::new(&[])
    }

    /// `φ(x) = x − x⁵`.
    pub fn allen_cahn_quintic() -> Self {
        Self::new(&[0.0, 1.0, 0.0, 0.0, 0.0, -1.0])
    }

    pub fn with_compensation(&self, c0: f64) -> Self {
        Self {
            compensation: c0,
            ..self.clone()
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn compensation(&self) -> f64 {
        self.compensation
    }

    /// Degree of φ; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn leading_coefficient(&self) -> f64 {
        self.coefficients.last().copied().unwrap_or(0.0)
    }

    /// Accepts polynomials of degree ≤ 1, or of odd degree with negative
    /// leading coefficient.
    pub fn assert_admissible(&self) -> Result<(), DriftError> {
        if let Some(bad) = self.coefficients.iter().find(|c| !c.is_finite()) {
            return Err(DriftError::Inadmissible(format!(
                "coefficient {bad} is not finite"
            )));
        }
        let degree = self.degree();
        if degree <= 1 {
            return Ok(());
        }
        if degree % 2 == 0 {
            return Err(DriftError::Inadmissible(format!(
                "degree {degree} is even; an odd degree is required"
            )));
        }
        if self.leading_coefficient() > 0.0 {
            return Err(DriftError::Inadmissible(format!(
                "leading coefficient {} is positive; it must be negative",
                self.leading_coefficient()
            )));
        }
        Ok(())
    }

    /// `φ(x) + c0 x` by Horner's rule.
    pub fn eval(&self, x: f64) -> f64 {
        let phi = self.coefficients.iter().rev().fold(0.0, |acc, &a| acc * x + a);
        phi + self.compensation * x
    }

    /// `φ′(x) + c0`.
    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.coefficients.len();
        let mut acc = 0.0;
        for k in (1..n).rev() {
            acc = acc * x + k as f64 * self.coefficients[k];
        }
        acc + self.compensation
    }

    pub fn eval_nemytskii(&self, u: &NodalField) -> Result<NodalField, DriftError> {
        self.map_checked(u, |x| self.eval(x))
    }

    pub fn eval_derivative(&self, u: &NodalField) -> Result<NodalField, DriftError> {
        self.map_checked(u, |x| self.derivative(x))
    }

    fn map_checked(
        &self,
        u: &NodalField,
        f: impl Fn(f64) -> f64,
    ) -> Result<NodalField, DriftError> {
        u.iter()
            .enumerate()
            .map(|(node, &value)| {
                if value.is_finite() {
                    Ok(f(value))
                } else {
                    Err(DriftError::NonFinite { node, value })
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(NodalField::new)
    }

    /// Largest difference quotient `(φ(a) − φ(b)) / (a − b)` over
    /// `trials` random pairs drawn in each of `[−1, 1]`, `[−10, 10]` and
    /// `[−100, 100]`. Since the Nemytskii inner product integrates the same
    /// pointwise quotient, this bounds the one-sided Lipschitz constant
    /// from below and approaches it for smooth φ.
    pub fn one_sided_constant_estimate(&self, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = f64::NEG_INFINITY;
        for radius in [1.0, 10.0, 100.0] {
            for _ in 0..trials.max(1) {
                let a: f64 = rng.random_range(-radius..=radius);
                let b: f64 = rng.random_range(-radius..=radius);
                if a == b {
                    continue;
                }
                best = best.max((self.eval(a) - self.eval(b)) / (a - b));
            }
        }
        best
    }

    /// `∫ (u_h − v_h)(F(u_h) − F(v_h)) dx` for the piecewise linear
    /// functions with nodal values `u`, `v`, integrated with a collapsed
    /// Gauss rule that is exact for polynomials of degree 7 on each triangle.
    ///
    /// This is the true L² pairing of the Nemytskii operator on the finite
    /// element space. The algebraic form `(u − v)ᵀ M (F(u) − F(v))`
    /// integrates the interpolant of `F(u)` instead and is not monotone in
    /// general.
    pub fn l2_pairing(&self, mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
        let mut total = 0.0;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let area = mesh.area(t);
            let (ua, va) = (tri.map(|n| u[n]), tri.map(|n| v[n]));
            let mut local = 0.0;
            for &(s, ws) in &GAUSS4 {
                for &(r, wr) in &GAUSS4 {
                    // (s, r) ↦ barycentric (1 − s, s(1 − r), s r), Jacobian s
                    let b = [1.0 - s, s * (1.0 - r), s * r];
                    let uq = b[0] * ua[0] + b[1] * ua[1] + b[2] * ua[2];
                    let vq = b[0] * va[0] + b[1] * va[1] + b[2] * va[2];
                    local += ws * wr * s * (uq - vq) * (self.eval(uq) - self.eval(vq));
                }
            }
            total += 2.0 * area * local;
        }
        total
    }

    /// `max_{|s| ≤ R} |φ′(s) + c0|` by sampling `samples` equispaced points.
    pub fn lipschitz_on_ball(&self, radius: f64, samples: usize) -> f64 {
        let samples = samples.max(2);
        (0..samples)
            .map(|k| {
                let s = -radius + 2.0 * radius * k as f64 / (samples - 1) as f64;
                self.derivative(s).abs()
            })
            .fold(0.0, f64::max)
    }
}
