//! P1 assembly of the mass matrix and of the bilinear form
//!
//! ```text
//! a(u, v) = ∫ (D ∇u · ∇v + (q · ∇u) v) dx + ∫_{∂Λ_R} α₀ u v ds + c₀ ∫ u v dx
//! ```
//!
//! with Dirichlet data eliminated by lifting, plus the discrete norms and a
//! coercivity diagnostic.

use std::fmt;
use std::ops::{Deref, DerefMut};
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::{
    dot, is_positive_definite, BandedLu, LinalgError, SparseMatrix,
};
use crate::mesh::{classify_boundary, BoundarySpec, BoundaryTag, Mesh, MeshError};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("diffusion tensor is not symmetric positive definite at ({x}, {y}): {tensor:?}")]
    NotElliptic { x: f64, y: f64, tensor: [[f64; 2]; 2] },
    #[error("field has {got} values, mesh has {expected} nodes")]
    FieldLength { expected: usize, got: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Continuous piecewise linear function given by its nodal values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for NodalField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for NodalField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for NodalField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

type TensorFn = Arc<dyn Fn(f64, f64) -> [[f64; 2]; 2] + Send + Sync>;
type VectorFn = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub enum DiffusionField {
    Isotropic(f64),
    Constant([[f64; 2]; 2]),
    Variable(TensorFn),
}

impl DiffusionField {
    pub fn at(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        match self {
            DiffusionField::Isotropic(d) => [[*d, 0.0], [0.0, *d]],
            DiffusionField::Constant(t) => *t,
            DiffusionField::Variable(f) => f(x, y),
        }
    }
}

impl fmt::Debug for DiffusionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiffusionField::Isotropic(d) => write!(f, "Isotropic({d})"),
            DiffusionField::Constant(t) => write!(f, "Constant({t:?})"),
            DiffusionField::Variable(_) => write!(f, "Variable(<fn>)"),
        }
    }
}

/// Advection velocity `q(x, y)`.
#[derive(Clone)]
pub enum VelocityField {
    Zero,
    Uniform([f64; 2]),
    /// Cellular flow with stream function `(A/π) sin(πx/L1) sin(πy/L2)`
    /// rescaled to the rectangle: divergence free, tangential on the
    /// boundary, and `|q| ≤ amplitude` on the unit square.
    Cellular { amplitude: f64, l1: f64, l2: f64 },
    Variable(VectorFn),
}

impl VelocityField {
    pub fn at(&self, x: f64, y: f64) -> [f64; 2] {
        use std::f64::consts::PI;
        match self {
            VelocityField::Zero => [0.0, 0.0],
            VelocityField::Uniform(q) => *q,
            VelocityField::Cellular { amplitude, l1, l2 } => {
                let (sx, cx) = (PI * x / l1).sin_cos();
                let (sy, cy) = (PI * y / l2).sin_cos();
                [amplitude * sx * cy / l2, -amplitude * cx * sy / l1]
            }
            VelocityField::Variable(f) => f(x, y),
        }
    }
}

impl fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VelocityField::Zero => write!(f, "Zero"),
            VelocityField::Uniform(q) => write!(f, "Uniform({q:?})"),
            VelocityField::Cellular { amplitude, .. } => write!(f, "Cellular({amplitude})"),
            VelocityField::Variable(_) => write!(f, "Variable(<fn>)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub diffusion: DiffusionField,
    pub advection: VelocityField,
    pub robin_alpha0: f64,
    /// Shift `c0 ≥ 0` folded into the stiffness matrix as `c0 M`.
    pub garding_shift: f64,
}

impl OperatorSpec {
    pub fn laplacian() -> Self {
        Self {
            diffusion: DiffusionField::Isotropic(1.0),
            advection: VelocityField::Zero,
            robin_alpha0: 0.0,
            garding_shift: 0.0,
        }
    }

    pub fn with_shift(&self, c0: f64) -> Self {
        Self {
            garding_shift: c0,
            ..self.clone()
        }
    }
}

/// Smallest eigenvalue of a symmetric 2×2 tensor.
pub fn min_eigenvalue(t: &[[f64; 2]; 2]) -> f64 {
    let mean = 0.5 * (t[0][0] + t[1][1]);
    let diff = 0.5 * (t[0][0] - t[1][1]);
    mean - diff.hypot(t[0][1])
}

fn check_elliptic(t: &[[f64; 2]; 2], x: f64, y: f64) -> Result<(), FemError> {
    let sym = (t[0][1] - t[1][0]).abs() <= 1e-14 * (t[0][1].abs() + t[1][0].abs() + 1.0);
    let finite = t.iter().flatten().all(|v| v.is_finite());
    if sym && finite && min_eigenvalue(t) > 0.0 {
        Ok(())
    } else {
        Err(FemError::NotElliptic { x, y, tensor: *t })
    }
}

struct Element {
    area: f64,
    grads: [[f64; 2]; 3],
}

fn element(mesh: &Mesh, t: usize) -> Result<Element, FemError> {
    let [a, b, c] = mesh.triangles[t];
    let (p0, p1, p2) = (mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]);
    let det = mesh.signed_area2(t);
    let scale = mesh.h * mesh.h;
    if !(det > 1e-14 * scale) {
        return Err(FemError::DegenerateTriangle {
            triangle: t,
            area: 0.5 * det,
        });
    }
    let grads = [
        [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
        [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
        [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
    ];
    Ok(Element {
        area: 0.5 * det,
        grads,
    })
}

fn local_mass(area: f64, i: usize, j: usize) -> f64 {
    if i == j {
        area / 6.0
    } else {
        area / 12.0
    }
}

/// Consistent P1 mass matrix (exact integration of barycentric products).
pub fn assemble_mass(mesh: &Mesh) -> Result<SparseMatrix, FemError> {
    let mut triplets = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let el = element(mesh, t)?;
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], local_mass(el.area, i, j)));
            }
        }
    }
    Ok(SparseMatrix::from_triplets(
        mesh.node_count(),
        mesh.node_count(),
        &triplets,
    )?)
}

/// `K[i][j] = a(χ_j, χ_i) + c0 ⟨χ_j, χ_i⟩`.
///
/// Coefficients are sampled at triangle centroids. The Robin term is
/// integrated exactly over boundary edges that are not on a Dirichlet side
/// of `mesh`.
pub fn assemble_stiffness(mesh: &Mesh, op: &OperatorSpec) -> Result<SparseMatrix, FemError> {
    let mut triplets = Vec::with_capacity(9 * mesh.triangle_count() + 4 * mesh.boundary_edges.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let el = element(mesh, t)?;
        let [cx, cy] = mesh.centroid(t);
        let d = op.diffusion.at(cx, cy);
        check_elliptic(&d, cx, cy)?;
        let q = op.advection.at(cx, cy);
        for i in 0..3 {
            let gi = el.grads[i];
            for j in 0..3 {
                let gj = el.grads[j];
                let dg = [d[0][0] * gj[0] + d[0][1] * gj[1], d[1][0] * gj[0] + d[1][1] * gj[1]];
                let diffusion = el.area * (gi[0] * dg[0] + gi[1] * dg[1]);
                // ∫ χ_i = area / 3, ∇χ_j constant on the element
                let advection = el.area / 3.0 * (q[0] * gj[0] + q[1] * gj[1]);
                let shift = op.garding_shift * local_mass(el.area, i, j);
                triplets.push((tri[i], tri[j], diffusion + advection + shift));
            }
        }
    }
    if op.robin_alpha0 != 0.0 {
        for &(a, b, side) in &mesh.boundary_edges {
            if mesh.is_dirichlet_side(side) {
                continue;
            }
            let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
            let len = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            let diag = op.robin_alpha0 * len / 3.0;
            let off = op.robin_alpha0 * len / 6.0;
            triplets.extend([(a, a, diag), (b, b, diag), (a, b, off), (b, a, off)]);
        }
    }
    Ok(SparseMatrix::from_triplets(
        mesh.node_count(),
        mesh.node_count(),
        &triplets,
    )?)
}

/// Mass and stiffness split into free and Dirichlet blocks.
///
/// With `g` the Dirichlet values, the free rows of `A u` for a full field
/// `u` are `A_ff u_f + A_fd g`; the `A_fd g` products are stored as the
/// lifting vectors.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub mass: SparseMatrix,
    pub stiffness: SparseMatrix,
    pub free_nodes: Vec<usize>,
    pub dirichlet_nodes: Vec<usize>,
    pub dirichlet_values: Vec<f64>,
    pub mass_ff: SparseMatrix,
    pub stiffness_ff: SparseMatrix,
    pub mass_fd: SparseMatrix,
    pub stiffness_fd: SparseMatrix,
    pub mass_lift: Vec<f64>,
    pub stiffness_lift: Vec<f64>,
}

impl DiscreteSystem {
    /// Builds the block structure from full matrices and a list of
    /// `(node, value)` Dirichlet constraints.
    pub fn from_matrices(
        mass: SparseMatrix,
        stiffness: SparseMatrix,
        dirichlet: &[(usize, f64)],
    ) -> Result<Self, FemError> {
        let n = mass.n_rows();
        if stiffness.n_rows() != n || !mass.is_square() || !stiffness.is_square() {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                got: stiffness.n_rows(),
            }
            .into());
        }
        let mut value = vec![None; n];
        for &(node, v) in dirichlet {
            if node >= n {
                return Err(FemError::FieldLength {
                    expected: n,
                    got: node + 1,
                });
            }
            value[node] = Some(v);
        }
        let dirichlet_nodes: Vec<usize> = (0..n).filter(|&i| value[i].is_some()).collect();
        let dirichlet_values: Vec<f64> = dirichlet_nodes.iter().map(|&i| value[i].unwrap()).collect();
        let free_nodes: Vec<usize> = (0..n).filter(|&i| value[i].is_none()).collect();

        let mass_ff = mass.submatrix(&free_nodes, &free_nodes);
        let stiffness_ff = stiffness.submatrix(&free_nodes, &free_nodes);
        let mass_fd = mass.submatrix(&free_nodes, &dirichlet_nodes);
        let stiffness_fd = stiffness.submatrix(&free_nodes, &dirichlet_nodes);
        let mass_lift = mass_fd.matvec(&dirichlet_values)?;
        let stiffness_lift = stiffness_fd.matvec(&dirichlet_values)?;
        Ok(Self {
            mass,
            stiffness,
            free_nodes,
            dirichlet_nodes,
            dirichlet_values,
            mass_ff,
            stiffness_ff,
            mass_fd,
            stiffness_fd,
            mass_lift,
            stiffness_lift,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.mass.n_rows()
    }

    pub fn n_free(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_nodes.iter().map(|&i| full[i]).collect()
    }

    /// Full field from free values with Dirichlet nodes pinned.
    pub fn expand(&self, free: &[f64]) -> NodalField {
        let mut full = vec![0.0; self.n_nodes()];
        self.scatter_into(free, &mut full);
        NodalField::new(full)
    }

    pub fn scatter_into(&self, free: &[f64], full: &mut [f64]) {
        for (&i, &v) in self.free_nodes.iter().zip(free) {
            full[i] = v;
        }
        self.pin(full);
    }

    pub fn pin(&self, full: &mut [f64]) {
        for (&i, &g) in self.dirichlet_nodes.iter().zip(&self.dirichlet_values) {
            full[i] = g;
        }
    }

    /// `u_fᵀ M_ff u_f`, the squared M-norm on free nodes.
    pub fn free_mass_norm(&self, free: &[f64]) -> f64 {
        let mu = self.mass_ff.matvec(free).expect("free vector length");
        dot(free, &mu).max(0.0).sqrt()
    }
}

/// Eliminates the Dirichlet nodes selected by `boundary` from `M` and `K`.
pub fn apply_dirichlet(
    mass: &SparseMatrix,
    stiffness: &SparseMatrix,
    boundary: &BoundarySpec,
    mesh: &Mesh,
) -> Result<DiscreteSystem, FemError> {
    let tagged = classify_boundary(mesh, boundary)?;
    let constraints: Vec<(usize, f64)> = (0..tagged.node_count())
        .filter(|&n| tagged.boundary_tag[n] == BoundaryTag::Dirichlet)
        .map(|n| (n, boundary.dirichlet_value))
        .collect();
    DiscreteSystem::from_matrices(mass.clone(), stiffness.clone(), &constraints)
}

/// `sqrt(uᵀ M u)`.
pub fn l2_norm(mass: &SparseMatrix, u: &[f64]) -> Result<f64, FemError> {
    if u.len() != mass.n_cols() {
        return Err(FemError::FieldLength {
            expected: mass.n_cols(),
            got: u.len(),
        });
    }
    Ok(mass.bilinear(u, u)?.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    /// Smallest eigenvalue of `(K + Kᵀ)/2` relative to `M` on free nodes;
    /// NaN if the iteration failed.
    pub lambda_min_sym: f64,
    pub required_c0: f64,
    pub iterations: usize,
}

impl CoercivityReport {
    pub fn converged(&self) -> bool {
        self.lambda_min_sym.is_finite()
    }
}

const COERCIVITY_MAX_ITER: usize = 500;

/// Estimates `min λ` of `S v = λ M v` with `S` the symmetric part of the
/// free stiffness block.
///
/// A shift `σ ≤ λ_min` is located with positive-definiteness tests on
/// `S − σM` (bracketed by bisection against a Rayleigh quotient), then
/// inverse iteration with that shift converges to the lowest eigenpair.
pub fn coercivity_diagnostic(system: &DiscreteSystem) -> CoercivityReport {
    let failed = |iterations| CoercivityReport {
        lambda_min_sym: f64::NAN,
        required_c0: f64::NAN,
        iterations,
    };
    let n = system.n_free();
    if n == 0 {
        return CoercivityReport {
            lambda_min_sym: f64::INFINITY,
            required_c0: 0.0,
            iterations: 0,
        };
    }
    let m = &system.mass_ff;
    let s = match system.stiffness_ff.symmetric_part() {
        Ok(s) => s,
        Err(_) => return failed(0),
    };
    let shifted = |sigma: f64| SparseMatrix::linear_combination(1.0, &s, -sigma, m);
    let pd = |sigma: f64| shifted(sigma).map(|a| is_positive_definite(&a)).unwrap_or(false);
    let rayleigh = |v: &[f64]| -> f64 {
        let num = s.bilinear(v, v).unwrap_or(f64::NAN);
        let den = m.bilinear(v, v).unwrap_or(f64::NAN);
        num / den
    };

    let scale = (0..n)
        .map(|i| (s.get(i, i) / m.get(i, i)).abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (1.2345 * i as f64).sin()).collect();

    // bracket: lo has S - lo M positive definite, hi is an upper bound
    let mut hi = rayleigh(&v);
    if !hi.is_finite() {
        return failed(0);
    }
    let mut lo = if pd(0.0) { 0.0f64.min(hi) } else { f64::NAN };
    if lo.is_nan() {
        let mut step = 1e-3 * scale;
        for _ in 0..80 {
            if pd(-step) {
                lo = -step;
                break;
            }
            hi = hi.min(-step);
            step *= 4.0;
        }
        if lo.is_nan() {
            return failed(0);
        }
    }
    if lo >= hi {
        hi = lo + 1e-3 * scale;
    }
    for _ in 0..60 {
        if hi - lo <= 1e-7 * (lo.abs() + hi.abs()).max(scale * 1e-6) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if pd(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let lu = match shifted(lo).and_then(|a| BandedLu::factor(&a)) {
        Ok(lu) => lu,
        Err(_) => return failed(0),
    };
    let normalize = |v: &mut Vec<f64>| {
        let norm = m.bilinear(v, v).unwrap_or(f64::NAN).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    normalize(&mut v);
    let mut mu = rayleigh(&v);
    let tol = 1e-12 * scale;
    for it in 1..=COERCIVITY_MAX_ITER {
        let mv = match m.matvec(&v) {
            Ok(x) => x,
            Err(_) => return failed(it),
        };
        v = match lu.solve(&mv) {
            Ok(x) => x,
            Err(_) => return failed(it),
        };
        normalize(&mut v);
        let next = rayleigh(&v);
        if !next.is_finite() {
            return failed(it);
        }
        let done = (next - mu).abs() <= tol;
        mu = next;
        if done {
            return CoercivityReport {
                lambda_min_sym: mu,
                required_c0: (-mu).max(0.0),
                iterations: it,
            };
        }
    }
    failed(COERCIVITY_MAX_ITER)
}

/// Rounds a nonnegative value up to one significant digit (0.0123 → 0.02).
pub fn round_up_one_digit(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return 0.0;
    }
    let e = x.log10().floor();
    let unit = 10f64.powf(e);
    let digit = (x / unit - 1e-9).ceil().max(1.0);
    digit * unit
}
