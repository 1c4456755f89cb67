//! Numerical toolkit for the spectral theory of finite Hilbert transform
//! operators on multi-interval systems.
//!
//! Given two multi-intervals J and E with disjoint interiors, the operator
//!
//! ```text
//! (Af)(x) = (1/π) ∫_J f(y)/(x−y) dy ,   x ∈ E,
//! ```
//!
//! and the self-adjoint block operator 𝒦 = [[0, A], [A†, 0]] on L²(E)⊕L²(J)
//! have spectra governed by the *double points* of the configuration — the
//! endpoints shared by a J interval and an E interval (including ∞ when both
//! sets are unbounded). This crate provides:
//!
//! - [`geometry`] — validated interval configurations, endpoint
//!   classification, Möbius transformations acting on points, configurations,
//!   and sampled functions;
//! - [`discretize`] — graded composite Gauss–Legendre grids, weight-symmetrized
//!   Nyström matrices for 𝒦 and A, and the contour factorization that
//!   exhibits A as a product of two Hilbert–Schmidt maps when dist(J,E) > 0;
//! - [`spectral`] — eigen/singular analysis: ± pairing, exponential decay
//!   fits, partial trace norms, counting histograms;
//! - [`exact_diag`] — the explicit diagonalization available when J ∪ E = ℝ
//!   and every endpoint is double: β-polynomials, logarithmic charts, Bézout
//!   matrix, orthogonal matrix fields, the isometries onto n-component line
//!   functions, and the sech-multiplier convolution;
//! - [`rhp`] — the ρ↔λ conformal chart, monodromy/eigenframe matrices, local
//!   parametrices, reconstruction of the Riemann–Hilbert solution Γ(z;λ) from
//!   resolvent data, and residual diagnostics for its defining properties;
//! - [`cli`] — a configuration-driven front end emitting CSV/JSON artifacts.

pub mod cli;
pub mod discretize;
pub mod exact_diag;
pub mod geometry;
pub mod rhp;
pub mod spectral;
