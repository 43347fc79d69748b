//! Truncated Karhunen–Loève expansion of a Q-Wiener process on a rectangle.
//!
//! The covariance shares the eigenfunctions of the Neumann Laplacian,
//! `e_i(x) e_j(y)` with `e_0 = sqrt(1/L)` and `e_i = sqrt(2/L) cos(iπx/L)`,
//! and has eigenvalues `q_ij = (i² + j²)^{−(β+δ)}`. The `(0, 0)` entry is
//! set to zero.
//!
//! # Random stream
//!
//! Brownian increments come from ChaCha8 keyed with
//! `ChaCha8Rng::seed_from_u64(master_seed)` and stream id `sample_index`.
//! The increment of mode `m` at fine step `s` uses the 64-bit word at
//! position `2 (s · n_modes + m)` of that stream. The word becomes a
//! uniform `u = (⌊w / 2¹¹⌋ + ½) 2⁻⁵³ ∈ (0, 1)`, then a standard normal
//! `z = Φ⁻¹(u)` (inverse CDF), then `sqrt(dt) z` rounded to the nearest
//! multiple of 2⁻⁴⁰. The rounding makes every partial sum of increments
//! exact in double precision, so increments aggregated over any coarse
//! grid are independent of summation grouping.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::fem::NodalField;
use crate::mesh::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise specification: {0}")]
    InvalidSpec(String),
    #[error("aggregation {aggregation} does not divide {n_fine_steps} fine steps")]
    Aggregation {
        aggregation: usize,
        n_fine_steps: usize,
    },
    #[error("coarse step {coarse_step} with aggregation {aggregation} exceeds {n_fine_steps} fine steps")]
    StepOutOfRange {
        coarse_step: usize,
        aggregation: usize,
        n_fine_steps: usize,
    },
    #[error("mesh domain {mesh_l1} x {mesh_l2} differs from noise domain {l1} x {l2}")]
    DomainMismatch {
        mesh_l1: f64,
        mesh_l2: f64,
        l1: f64,
        l2: f64,
    },
}

const QUANTUM: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub beta: f64,
    pub delta: f64,
    pub n1: usize,
    pub n2: usize,
    pub l1: f64,
    pub l2: f64,
    /// Row-major `(n1 + 1) × (n2 + 1)`.
    pub q: Vec<f64>,
    /// `Σ λ_ij^{β−1} q_ij` over the retained modes.
    pub trace_check: f64,
}

pub fn build_spectrum(
    beta: f64,
    delta: f64,
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
) -> Result<NoiseSpec, NoiseError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(NoiseError::InvalidSpec(format!("beta must be positive, got {beta}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(NoiseError::InvalidSpec(format!("delta must be positive, got {delta}")));
    }
    if n1 == 0 || n2 == 0 {
        return Err(NoiseError::InvalidSpec("at least one mode per axis is required".into()));
    }
    if !(l1 > 0.0 && l2 > 0.0) {
        return Err(NoiseError::InvalidSpec(format!("domain {l1} x {l2} must be positive")));
    }
    use std::f64::consts::PI;
    let mut q = vec![0.0; (n1 + 1) * (n2 + 1)];
    let mut trace_check = 0.0;
    for i in 0..=n1 {
        for j in 0..=n2 {
            if i == 0 && j == 0 {
                continue;
            }
            let qij = ((i * i + j * j) as f64).powf(-(beta + delta));
            q[i * (n2 + 1) + j] = qij;
            let lambda = (i as f64 * PI / l1).powi(2) + (j as f64 * PI / l2).powi(2);
            trace_check += lambda.powf(beta - 1.0) * qij;
        }
    }
    Ok(NoiseSpec {
        beta,
        delta,
        n1,
        n2,
        l1,
        l2,
        q,
        trace_check,
    })
}

impl NoiseSpec {
    pub fn n_modes(&self) -> usize {
        (self.n1 + 1) * (self.n2 + 1)
    }

    pub fn q_at(&self, i: usize, j: usize) -> f64 {
        self.q[i * (self.n2 + 1) + j]
    }

    /// Keeps only the listed modes; used to isolate single terms.
    pub fn restricted_to(&self, modes: &[(usize, usize)]) -> Self {
        let mut out = self.clone();
        out.q.iter_mut().for_each(|v| *v = 0.0);
        for &(i, j) in modes {
            out.q[i * (self.n2 + 1) + j] = self.q_at(i, j);
        }
        out
    }

    /// `Σ q_ij (e_i(x) e_j(y))²`, the variance of `W(1)` at `(x, y)`.
    pub fn pointwise_variance(&self, x: f64, y: f64) -> f64 {
        let ex = eigenfunctions(self.n1, self.l1, x);
        let ey = eigenfunctions(self.n2, self.l2, y);
        let mut total = 0.0;
        for i in 0..=self.n1 {
            for j in 0..=self.n2 {
                total += self.q_at(i, j) * (ex[i] * ey[j]).powi(2);
            }
        }
        total
    }
}

/// `e_0(x), …, e_n(x)` of the Neumann Laplacian on `[0, l]`.
pub fn eigenfunctions(n: usize, l: f64, x: f64) -> Vec<f64> {
    use std::f64::consts::PI;
    let c0 = (1.0 / l).sqrt();
    let c = (2.0 / l).sqrt();
    (0..=n)
        .map(|i| {
            if i == 0 {
                c0
            } else {
                c * (i as f64 * PI * x / l).cos()
            }
        })
        .collect()
}

/// Fine-grid tableau of modal Brownian increments for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub master_seed: u64,
    pub sample_index: u64,
    pub n_fine_steps: usize,
    pub dt_fine: f64,
    pub n_modes: usize,
    /// Row-major `n_fine_steps × n_modes`.
    increments: Vec<f64>,
}

fn standard_normal() -> Normal {
    Normal::standard()
}

fn word_to_uniform(w: u64) -> f64 {
    ((w >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn quantize(x: f64) -> f64 {
    (x / QUANTUM).round() * QUANTUM
}

fn stream(master_seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample_index);
    rng
}

pub fn sample_path(
    spec: &NoiseSpec,
    n_fine_steps: usize,
    dt_fine: f64,
    master_seed: u64,
    sample_index: u64,
) -> Result<BrownianPath, NoiseError> {
    if n_fine_steps == 0 {
        return Err(NoiseError::InvalidSpec("a path needs at least one step".into()));
    }
    if !(dt_fine > 0.0 && dt_fine.is_finite()) {
        return Err(NoiseError::InvalidSpec(format!("dt must be positive, got {dt_fine}")));
    }
    let n_modes = spec.n_modes();
    let normal = standard_normal();
    let scale = dt_fine.sqrt();
    let mut rng = stream(master_seed, sample_index);
    rng.set_word_pos(0);
    let increments = (0..n_fine_steps * n_modes)
        .map(|_| quantize(scale * normal.inverse_cdf(word_to_uniform(rng.next_u64()))))
        .collect();
    Ok(BrownianPath {
        master_seed,
        sample_index,
        n_fine_steps,
        dt_fine,
        n_modes,
        increments,
    })
}

impl BrownianPath {
    /// Regenerates a single increment straight from its counter position.
    pub fn draw(
        master_seed: u64,
        sample_index: u64,
        n_modes: usize,
        dt_fine: f64,
        step: usize,
        mode: usize,
    ) -> f64 {
        let mut rng = stream(master_seed, sample_index);
        rng.set_word_pos(2 * (step as u128 * n_modes as u128 + mode as u128));
        quantize(dt_fine.sqrt() * standard_normal().inverse_cdf(word_to_uniform(rng.next_u64())))
    }

    pub fn step(&self, s: usize) -> &[f64] {
        &self.increments[s * self.n_modes..(s + 1) * self.n_modes]
    }

    /// Sum of `aggregation` consecutive fine increments for every mode,
    /// accumulated in ascending fine step order.
    pub fn aggregated(&self, coarse_step: usize, aggregation: usize) -> Result<Vec<f64>, NoiseError> {
        if aggregation == 0 || self.n_fine_steps % aggregation != 0 {
            return Err(NoiseError::Aggregation {
                aggregation,
                n_fine_steps: self.n_fine_steps,
            });
        }
        if (coarse_step + 1) * aggregation > self.n_fine_steps {
            return Err(NoiseError::StepOutOfRange {
                coarse_step,
                aggregation,
                n_fine_steps: self.n_fine_steps,
            });
        }
        let mut out = vec![0.0; self.n_modes];
        for s in coarse_step * aggregation..(coarse_step + 1) * aggregation {
            out.iter_mut().zip(self.step(s)).for_each(|(o, v)| *o += v);
        }
        Ok(out)
    }
}

/// Eigenfunction tables for one mesh.
///
/// The node × mode table factors as `e_i(x_a) e_j(y_b)` on the structured
/// grid, so only the two axis tables are stored and a nodal evaluation is
/// two small matrix products.
#[derive(Debug, Clone)]
pub struct NoiseEvaluator {
    n1: usize,
    n2: usize,
    nx: usize,
    ny: usize,
    /// `(nx + 1) × (n1 + 1)`
    ex: Vec<f64>,
    /// `(ny + 1) × (n2 + 1)`
    ey: Vec<f64>,
    sqrt_q: Vec<f64>,
}

impl NoiseEvaluator {
    pub fn new(spec: &NoiseSpec, mesh: &Mesh) -> Result<Self, NoiseError> {
        if (spec.l1 - mesh.l1).abs() > 1e-12 * spec.l1 || (spec.l2 - mesh.l2).abs() > 1e-12 * spec.l2 {
            return Err(NoiseError::DomainMismatch {
                mesh_l1: mesh.l1,
                mesh_l2: mesh.l2,
                l1: spec.l1,
                l2: spec.l2,
            });
        }
        let ex = mesh
            .x_coords()
            .iter()
            .flat_map(|&x| eigenfunctions(spec.n1, spec.l1, x))
            .collect();
        let ey = mesh
            .y_coords()
            .iter()
            .flat_map(|&y| eigenfunctions(spec.n2, spec.l2, y))
            .collect();
        Ok(Self {
            n1: spec.n1,
            n2: spec.n2,
            nx: mesh.nx,
            ny: mesh.ny,
            ex,
            ey,
            sqrt_q: spec.q.iter().map(|q| q.sqrt()).collect(),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.sqrt_q.len()
    }

    /// `ζ(x_a, y_b) = Σ_ij sqrt(q_ij) e_i(x_a) e_j(y_b) B_ij`.
    pub fn evaluate_into(&self, modal: &[f64], out: &mut [f64]) {
        let (m1, m2) = (self.n1 + 1, self.n2 + 1);
        let (px, py) = (self.nx + 1, self.ny + 1);
        debug_assert_eq!(modal.len(), m1 * m2);
        debug_assert_eq!(out.len(), px * py);
        let weighted: Vec<f64> = modal.iter().zip(&self.sqrt_q).map(|(b, s)| b * s).collect();
        // partial[b][i] = Σ_j w_ij e_j(y_b)
        let mut partial = vec![0.0; py * m1];
        for b in 0..py {
            let eyb = &self.ey[b * m2..(b + 1) * m2];
            for i in 0..m1 {
                let row = &weighted[i * m2..(i + 1) * m2];
                partial[b * m1 + i] = row.iter().zip(eyb).map(|(w, e)| w * e).sum();
            }
        }
        for b in 0..py {
            let pb = &partial[b * m1..(b + 1) * m1];
            for a in 0..px {
                let exa = &self.ex[a * m1..(a + 1) * m1];
                out[b * px + a] = pb.iter().zip(exa).map(|(p, e)| p * e).sum();
            }
        }
    }

    pub fn evaluate(&self, modal: &[f64]) -> NodalField {
        let mut out = vec![0.0; (self.nx + 1) * (self.ny + 1)];
        self.evaluate_into(modal, &mut out);
        NodalField::new(out)
    }
}

/// Nodal values of the noise increment over coarse step `coarse_step`,
/// each coarse step spanning `aggregation` fine steps of `path`.
pub fn nodal_increment(
    spec: &NoiseSpec,
    path: &BrownianPath,
    coarse_step: usize,
    aggregation: usize,
    mesh: &Mesh,
) -> Result<NodalField, NoiseError> {
    let modal = path.aggregated(coarse_step, aggregation)?;
    Ok(NoiseEvaluator::new(spec, mesh)?.evaluate(&modal))
}
