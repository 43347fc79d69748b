//! Finite element / backward Euler solvers for semilinear parabolic SPDEs
//! with additive Q-Wiener noise, and Monte Carlo harnesses that measure
//! their strong convergence orders.

pub mod config;
pub mod drift;
pub mod experiment;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod noise;
pub mod problem;
pub mod stepper;

#[cfg(test)]
mod properties;
