//! Explicit diagonalization of the transform in the fully-merged geometry
//! where the 2n endpoints b₁ < … < b_{2n} are all double points, so the line
//! splits into alternating charts: J occupies the odd charts (b₁,b₂),
//! (b₃,b₄), …, and E the even charts together with the chart through ∞.
//!
//! The machinery rests on three explicit objects:
//!
//! - the chart coordinate φ(x) = ln|β_ev(x)/β_od(x)|, where β_od and β_ev are
//!   the monic polynomials with the odd-indexed and even-indexed endpoints as
//!   roots; φ maps each chart diffeomorphically onto ℝ and
//!   φ′ = Q/(β_od β_ev) with Q = β_ev′β_od − β_evβ_od′ > 0 everywhere;
//! - the Bézout matrix of the pair (β_od, β_ev), whose eigendecomposition
//!   yields weights ρ_j > 0 and polynomials P_j of degree ≤ n−1 mixing the
//!   n charts of a side into decoupled channels;
//! - the convolution kernel 1/(π cosh t), diagonal in Fourier space with
//!   multiplier sech(πξ/2), which is what the transform becomes in chart
//!   coordinates.
//!
//! Together: A = T_ex⁻¹ M_exᵀ 𝒞 M_in T_in, where T_in/T_ex are the unitary
//! chart transforms, M_in/M_ex the pointwise orthogonal Bézout mixings, and
//! 𝒞 the sech-kernel convolution acting channel by channel. The spectrum of
//! the coupled operator is read off the multiplier: purely absolutely
//! continuous, filling [−1, 1] with multiplicity n.

use crate::geometry::SetLabel;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use thiserror::Error;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Errors from the explicit-diagonalization pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactDiagError {
    /// Endpoints must be strictly ascending.
    #[error("endpoints must be strictly ascending; violation at index {index}")]
    NotAscending { index: usize },
    /// A fully-merged configuration has an even number of endpoints.
    #[error("need an even, positive number of endpoints, got {len}")]
    OddLength { len: usize },
    /// The requested point is one of the double points, where the chart
    /// coordinate is singular.
    #[error("point x = {x} is a double point; charts are open intervals")]
    AtDoublePoint { x: f64 },
    /// The requested point is not interior to any chart of the given side.
    #[error("point x = {x} is not interior to a {side:?}-side chart")]
    OutsideCharts { x: f64, side: SetLabel },
    /// The chart-coordinate equation φ(x) = target failed to converge.
    #[error("chart {chart} inversion at target {target} stalled with residual {residual:.3e}")]
    NoConvergence {
        chart: usize,
        target: f64,
        residual: f64,
    },
    /// A Bézout eigenvalue came out non-positive, contradicting the positive
    /// definiteness of the Bézout form for interlacing roots.
    #[error("Bézout eigenvalue ρ_{index} = {value:.3e} is not positive")]
    NonPositiveRho { index: usize, value: f64 },
    /// Sampled chart data has not decayed at the ends of the transform
    /// window, so the periodized convolution would wrap around.
    #[error("window endpoints carry amplitude {edge:.3e} against peak {peak:.3e}; enlarge the window or the decay is too slow")]
    InsufficientDecay { edge: f64, peak: f64 },
}

/// A dense real polynomial with ascending coefficients: c₀ + c₁z + c₂z² + ….
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// The monic polynomial Π (z − r) over the given roots.
    pub fn from_roots(roots: &[f64]) -> Self {
        let mut coeffs = vec![1.0];
        for &r in roots {
            // Multiply by (z − r).
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, &c) in coeffs.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= r * c;
            }
            coeffs = next;
        }
        Self { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::new(vec![0.0]);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// c₁·p₁ + c₂·p₂.
    fn linear_comb(c1: f64, p1: &Poly, c2: f64, p2: &Poly) -> Poly {
        let len = p1.coeffs.len().max(p2.coeffs.len());
        let mut out = vec![0.0; len];
        for (k, slot) in out.iter_mut().enumerate() {
            let a = p1.coeffs.get(k).copied().unwrap_or(0.0);
            let b = p2.coeffs.get(k).copied().unwrap_or(0.0);
            *slot = c1 * a + c2 * b;
        }
        Poly::new(out)
    }

    /// Multiplication by z (coefficient shift).
    fn shift_up(&self) -> Poly {
        let mut out = vec![0.0];
        out.extend_from_slice(&self.coeffs);
        Poly::new(out)
    }

    /// Drops trailing exactly-zero coefficients so the length reflects the
    /// true degree (cancellations of monic leading terms are exact).
    fn trimmed(mut self) -> Poly {
        while self.coeffs.len() > 1 && *self.coeffs.last().expect("nonempty") == 0.0 {
            self.coeffs.pop();
        }
        self
    }
}

/// Sign with sgn(0) = 0, so that values pinned at chart endpoints vanish
/// cleanly instead of producing spurious ±1 factors.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A fully-merged endpoint system b₁ < … < b_{2n} with its chart polynomials.
///
/// Chart k (1-based, k < 2n) is the open interval (b_k, b_{k+1}); chart 2n is
/// the complement through ∞, the pair of rays (b_{2n}, ∞) ∪ (−∞, b₁). Odd
/// charts carry J, even charts (including chart 2n) carry E.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublePointSystem {
    /// Endpoints, ascending, length 2n.
    pub b: Vec<f64>,
    pub n: usize,
    /// Monic polynomial with roots b₁, b₃, … (odd 1-based indices).
    pub beta_od: Poly,
    /// Monic polynomial with roots b₂, b₄, … (even 1-based indices).
    pub beta_ev: Poly,
    /// Q = β_ev′ β_od − β_ev β_od′, positive on all of ℝ, with leading
    /// coefficient equal to the total length |J|.
    pub q: Poly,
}

impl DoublePointSystem {
    pub fn new(b: &[f64]) -> Result<Self, ExactDiagError> {
        if b.is_empty() || b.len() % 2 != 0 {
            return Err(ExactDiagError::OddLength { len: b.len() });
        }
        for (i, pair) in b.windows(2).enumerate() {
            if !(pair[0] < pair[1]) {
                return Err(ExactDiagError::NotAscending { index: i + 1 });
            }
        }
        let n = b.len() / 2;
        let od: Vec<f64> = b.iter().step_by(2).copied().collect();
        let ev: Vec<f64> = b.iter().skip(1).step_by(2).copied().collect();
        let beta_od = Poly::from_roots(&od);
        let beta_ev = Poly::from_roots(&ev);
        let q = Poly::linear_comb(
            1.0,
            &beta_ev.derivative().mul(&beta_od),
            -1.0,
            &beta_ev.mul(&beta_od.derivative()),
        )
        .trimmed();
        Ok(Self {
            b: b.to_vec(),
            n,
            beta_od,
            beta_ev,
            q,
        })
    }

    fn odd_roots(&self) -> impl Iterator<Item = f64> + '_ {
        self.b.iter().step_by(2).copied()
    }

    fn even_roots(&self) -> impl Iterator<Item = f64> + '_ {
        self.b.iter().skip(1).step_by(2).copied()
    }

    /// Total length of J (the odd charts); equals the leading coefficient
    /// of Q.
    pub fn interior_length(&self) -> f64 {
        self.even_roots()
            .zip(self.odd_roots())
            .map(|(e, o)| e - o)
            .sum()
    }

    /// Leading coefficient of Q, used for the x → ∞ limits on chart 2n.
    pub fn q_lead(&self) -> f64 {
        *self.q.coeffs.last().expect("Q is nonempty")
    }

    /// The chart coordinate φ(x) = ln|β_ev(x)/β_od(x)|, evaluated as a sum of
    /// paired log terms so it stays accurate both near the roots and for
    /// |x| → ∞ (where φ(x) ≈ −|J|/x and the polynomial ratio loses all
    /// precision). φ(±∞) = 0.
    pub fn phi(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return 0.0;
        }
        self.even_roots()
            .zip(self.odd_roots())
            .map(|(e, o)| {
                // ln|x−e| − ln|x−o| = ln|1 + (o−e)/(x−o)|, accurate when the
                // correction is small; fall back to the direct ratio when the
                // point is close to either root.
                let u = (o - e) / (x - o);
                if u.abs() < 0.5 {
                    u.ln_1p()
                } else {
                    ((x - e) / (x - o)).abs().ln()
                }
            })
            .sum()
    }

    /// φ′(x) = Q(x)/(β_od(x) β_ev(x)) = Σ (e_k − o_k)/((x−e_k)(x−o_k));
    /// negative on the J charts, positive on the E charts, and O(1/x²) at ∞.
    pub fn phi_deriv(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return 0.0;
        }
        self.even_roots()
            .zip(self.odd_roots())
            .map(|(e, o)| (e - o) / ((x - e) * (x - o)))
            .sum()
    }

    pub fn q_of(&self, x: f64) -> f64 {
        self.q.eval(x)
    }

    pub fn chart_count(&self) -> usize {
        2 * self.n
    }

    /// 1-based chart indices of the J side: 1, 3, …, 2n−1.
    pub fn j_charts(&self) -> Vec<usize> {
        (1..=self.chart_count()).step_by(2).collect()
    }

    /// 1-based chart indices of the E side: 2, 4, …, 2n (the last wraps
    /// through ∞).
    pub fn e_charts(&self) -> Vec<usize> {
        (2..=self.chart_count()).step_by(2).collect()
    }

    /// The chart containing x, or None when x is exactly a double point.
    /// Chart 2n contains both rays beyond the endpoint span (and ±∞).
    pub fn chart_of(&self, x: f64) -> Option<usize> {
        if x < self.b[0] || x > self.b[2 * self.n - 1] {
            return Some(self.chart_count());
        }
        for (k, pair) in self.b.windows(2).enumerate() {
            if pair[0] < x && x < pair[1] {
                return Some(k + 1);
            }
        }
        None
    }

    /// Whether a 1-based chart index belongs to the J side.
    pub fn chart_is_j(k: usize) -> bool {
        k % 2 == 1
    }

    /// Solves φ(x) = target on chart k (1-based).
    ///
    /// Finite charts use a safeguarded bisection–Newton iteration between the
    /// log singularities at the chart ends. Chart 2n substitutes
    /// v = 1/(x − midpoint), on which φ is smooth, decreasing, and covers all
    /// of ℝ across both rays (target 0 maps to x = ∞, returned as
    /// `f64::INFINITY`). Targets beyond the floating-point resolution of the
    /// chart saturate to the exact endpoint, where downstream chart weights
    /// vanish.
    pub fn phi_inverse(&self, chart: usize, target: f64) -> Result<f64, ExactDiagError> {
        assert!(
            chart >= 1 && chart <= self.chart_count(),
            "chart index out of range"
        );
        if chart == self.chart_count() {
            return self.phi_inverse_outer(target);
        }
        let (lo, hi) = (self.b[chart - 1], self.b[chart]);
        // Even charts increase from −∞ to +∞; odd (J) charts decrease.
        let increasing = chart % 2 == 0;
        solve_monotone(&|x| self.phi(x), lo, hi, increasing, target, 1e-13)
            .map_err(|residual| ExactDiagError::NoConvergence {
                chart,
                target,
                residual,
            })
    }

    /// Chart-2n inversion through the substitution v = 1/(x − m), m the
    /// midpoint of the endpoint span: v runs over (1/(b₁−m), 1/(b_{2n}−m))
    /// and φ̂(v) = φ(m + 1/v) decreases from +∞ to −∞ across it, passing
    /// through 0 at v = 0 (x = ∞).
    fn phi_inverse_outer(&self, target: f64) -> Result<f64, ExactDiagError> {
        if target == 0.0 {
            return Ok(f64::INFINITY);
        }
        let (b_first, b_last) = (self.b[0], self.b[2 * self.n - 1]);
        let m = 0.5 * (b_first + b_last);
        let v_lo = 1.0 / (b_first - m);
        let v_hi = 1.0 / (b_last - m);
        let phat = |v: f64| {
            if v == 0.0 {
                0.0
            } else {
                self.phi(m + 1.0 / v)
            }
        };
        let v = solve_monotone(&phat, v_lo, v_hi, false, target, 1e-13).map_err(|residual| {
            ExactDiagError::NoConvergence {
                chart: self.chart_count(),
                target,
                residual,
            }
        })?;
        // Saturation at the v-bracket ends means x pinned at the endpoints.
        if v == v_lo {
            return Ok(b_first);
        }
        if v == v_hi {
            return Ok(b_last);
        }
        let x = m + 1.0 / v;
        // Guard the last rounding so the result stays on the outer rays.
        Ok(if v > 0.0 { x.max(b_last) } else { x.min(b_first) })
    }

    /// Chart points x_k = φ_k⁻¹(2t) for all charts of a side, ascending in
    /// the chart index. For the E side the final entry may be ±∞ (chart 2n
    /// at t = 0) or a saturated endpoint.
    pub fn chart_points(&self, side: SetLabel, t: f64) -> Result<Vec<f64>, ExactDiagError> {
        let charts = match side {
            SetLabel::J => self.j_charts(),
            SetLabel::E => self.e_charts(),
        };
        charts
            .into_iter()
            .map(|k| self.phi_inverse(k, 2.0 * t))
            .collect()
    }
}

/// Safeguarded root solve of f(x) = target on (lo, hi) for strictly monotone
/// f diverging at both ends. Brackets by shrinking the distance to the ends,
/// then alternates Newton-free bisection with secant steps. Returns the
/// endpoint itself when the target is beyond floating-point resolution.
/// On stall, returns Err(best residual).
fn solve_monotone(
    f: &dyn Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    increasing: bool,
    target: f64,
    tol: f64,
) -> Result<f64, f64> {
    let scale = target.abs().max(1.0);
    let mut delta = 0.25 * (hi - lo);
    let (mut a, mut b, mut fa, mut fb);
    loop {
        a = lo + delta;
        b = hi - delta;
        fa = f(a) - target;
        fb = f(b) - target;
        if fa == 0.0 {
            return Ok(a);
        }
        if fb == 0.0 {
            return Ok(b);
        }
        if fa.signum() != fb.signum() {
            break;
        }
        delta *= 0.5;
        if lo + delta == lo || hi - delta == hi || delta < f64::MIN_POSITIVE * 4.0 {
            // The preimage is closer to a singular endpoint than the nearest
            // representable interior point: saturate to the endpoint.
            let toward_lo = (fa > 0.0) == increasing;
            return Ok(if toward_lo { lo } else { hi });
        }
    }
    // Maintain fa·fb < 0 on [a, b].
    let mut best = (a, fa.abs());
    for _ in 0..256 {
        // Secant proposal, clipped into the bracket; bisection fallback.
        let secant = a - fa * (b - a) / (fb - fa);
        let x = if secant.is_finite() && a < secant && secant < b {
            secant
        } else {
            0.5 * (a + b)
        };
        let fx = f(x) - target;
        if fx.abs() < best.1 {
            best = (x, fx.abs());
        }
        if fx.abs() <= tol * scale {
            return Ok(x);
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // Bracket collapsed to adjacent floats: x is the correctly-rounded
        // preimage even if the residual (measured through a near-singular f)
        // stays large.
        if b - a <= f64::EPSILON * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
            return Ok(best.0);
        }
        // Force a bisection every other step if the secant stalls.
        if (b - a) > 0.5 * (hi - lo) {
            let mid = 0.5 * (a + b);
            let fm = f(mid) - target;
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
                fb = fm;
            }
        }
    }
    Err(best.1)
}

/// Eigendecomposition of the Bézout matrix of (β_od, β_ev): positive weights
/// ρ_j and orthonormal-coefficient polynomials P_j of degree ≤ n−1 with
///
/// ```text
/// β_ev(z) β_od(x) − β_od(z) β_ev(x) = (z − x) Σ_j ρ_j P_j(z) P_j(x).
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct BezoutData {
    /// The symmetric Bézout matrix B, B[i][j] = coefficient of zⁱxʲ in the
    /// divided difference above (0-based).
    pub matrix: DMatrix<f64>,
    /// Eigenvalues of B, ascending, all positive.
    pub rho: Vec<f64>,
    /// Corresponding eigenpolynomials, coefficients ascending in z.
    pub p_polys: Vec<Poly>,
}

/// Builds the Bézout matrix by synthetic division of
/// N(z, x) = β_ev(z)β_od(x) − β_od(z)β_ev(x) by (z − x), then diagonalizes.
pub fn bezout_matrix(sys: &DoublePointSystem) -> Result<BezoutData, ExactDiagError> {
    let n = sys.n;
    // Coefficients of N in powers of z; each is a polynomial in x.
    let a: Vec<Poly> = (0..=n)
        .map(|p| {
            let be = sys.beta_ev.coeffs.get(p).copied().unwrap_or(0.0);
            let bo = sys.beta_od.coeffs.get(p).copied().unwrap_or(0.0);
            Poly::linear_comb(be, &sys.beta_od, -bo, &sys.beta_ev)
        })
        .collect();
    // Synthetic division by (z − x): s_{n−1} = a_n, s_{p−1} = a_p + x·s_p.
    let mut s = vec![Poly::new(vec![0.0]); n];
    s[n - 1] = a[n].clone();
    for p in (1..n).rev() {
        s[p - 1] = Poly::linear_comb(1.0, &a[p], 1.0, &s[p].shift_up());
    }
    let remainder = Poly::linear_comb(1.0, &a[0], 1.0, &s[0].shift_up());
    debug_assert!(
        remainder.coeffs.iter().all(|c| c.abs() < 1e-9),
        "synthetic division must be exact"
    );

    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = s[i].coeffs.get(j).copied().unwrap_or(0.0);
        }
    }
    // Symmetrize rounding noise; the Bézout form is symmetric by construction.
    let b = 0.5 * (&b + b.transpose());

    let eig = nalgebra::SymmetricEigen::new(b.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("finite eigenvalues")
    });
    let mut rho = Vec::with_capacity(n);
    let mut p_polys = Vec::with_capacity(n);
    for (rank, &idx) in order.iter().enumerate() {
        let value = eig.eigenvalues[idx];
        if value <= 0.0 {
            return Err(ExactDiagError::NonPositiveRho { index: rank, value });
        }
        rho.push(value);
        p_polys.push(Poly::new(eig.eigenvectors.column(idx).iter().copied().collect()));
    }
    Ok(BezoutData {
        matrix: b,
        rho,
        p_polys,
    })
}

/// The orthogonal chart-mixing field of one side: the n×n matrix
/// M[j][k](t) = P_j(x_k) √(ρ_j / Q(x_k)) with x_k = φ_k⁻¹(2t) over the side's
/// charts ascending. Satisfies M(t)ᵀ M(t) = I for every t.
///
/// On the E side the chart-2n column at x = ±∞ takes its limit value
/// p_j[n−1] √(ρ_j / lead(Q)), with the +∞-side sign convention.
pub fn m_field(
    sys: &DoublePointSystem,
    bez: &BezoutData,
    side: SetLabel,
    t: f64,
) -> Result<DMatrix<f64>, ExactDiagError> {
    let xs = sys.chart_points(side, t)?;
    Ok(m_field_at(sys, bez, &xs))
}

/// The mixing matrix evaluated at explicit chart points (columns follow the
/// order of `xs`).
fn m_field_at(sys: &DoublePointSystem, bez: &BezoutData, xs: &[f64]) -> DMatrix<f64> {
    let n = sys.n;
    let mut m = DMatrix::zeros(n, xs.len());
    for (col, &x) in xs.iter().enumerate() {
        if x.is_infinite() {
            let q_lead = sys.q_lead();
            for j in 0..n {
                let lead = bez.p_polys[j].coeffs.get(n - 1).copied().unwrap_or(0.0);
                m[(j, col)] = lead * (bez.rho[j] / q_lead).sqrt();
            }
        } else {
            let q = sys.q_of(x);
            for j in 0..n {
                m[(j, col)] = bez.p_polys[j].eval(x) * (bez.rho[j] / q).sqrt();
            }
        }
    }
    m
}

/// Chart-transform values of a function on J at parameter t: for each J
/// chart k (ascending), (T_in f)_k(t) = √2 · sgn(β_od(x)) · f(x) / √|φ′(x)|
/// with x = φ_k⁻¹(2t). Values at saturated chart endpoints are 0.
pub fn t_in(
    sys: &DoublePointSystem,
    f: &dyn Fn(f64) -> f64,
    t: f64,
) -> Result<Vec<f64>, ExactDiagError> {
    let xs = sys.chart_points(SetLabel::J, t)?;
    Ok(xs.iter().map(|&x| t_in_value(sys, f, x)).collect())
}

fn t_in_value(sys: &DoublePointSystem, f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    if sys.chart_of(x).is_none() {
        return 0.0; // pinned at an endpoint: the chart weight vanishes
    }
    let weight = 1.0 / sys.phi_deriv(x).abs().sqrt();
    SQRT_2 * sgn(sys.beta_od.eval(x)) * f(x) * weight
}

/// Chart-transform values of a function on E at parameter t: for each E
/// chart k (ascending, chart 2n last),
/// (T_ex g)_k(t) = √2 · sgn(β_od(z)) · g(z) / √(φ′(z)). The chart-2n value at
/// z = ±∞ is 0 (g is assumed to decay at ∞).
pub fn t_ex(
    sys: &DoublePointSystem,
    g: &dyn Fn(f64) -> f64,
    t: f64,
) -> Result<Vec<f64>, ExactDiagError> {
    let xs = sys.chart_points(SetLabel::E, t)?;
    Ok(xs.iter().map(|&z| t_ex_value(sys, g, z)).collect())
}

fn t_ex_value(sys: &DoublePointSystem, g: &dyn Fn(f64) -> f64, z: f64) -> f64 {
    if z.is_infinite() || sys.chart_of(z).is_none() {
        return 0.0;
    }
    let weight = 1.0 / sys.phi_deriv(z).sqrt();
    SQRT_2 * sgn(sys.beta_od.eval(z)) * g(z) * weight
}

/// Inverse chart transform on the J side: given the chart components
/// v(ordinal, t), reconstructs f(x) = sgn(β_od(x)) √|φ′(x)| v(k, φ(x)/2) / √2
/// at a point x interior to a J chart.
pub fn t_in_inverse(
    sys: &DoublePointSystem,
    v: &dyn Fn(usize, f64) -> f64,
    x: f64,
) -> Result<f64, ExactDiagError> {
    let chart = sys
        .chart_of(x)
        .ok_or(ExactDiagError::AtDoublePoint { x })?;
    if !DoublePointSystem::chart_is_j(chart) {
        return Err(ExactDiagError::OutsideCharts {
            x,
            side: SetLabel::J,
        });
    }
    let ordinal = (chart - 1) / 2;
    let t = 0.5 * sys.phi(x);
    Ok(sgn(sys.beta_od.eval(x)) * sys.phi_deriv(x).abs().sqrt() * v(ordinal, t) / SQRT_2)
}

/// Inverse chart transform on the E side: given the chart components
/// w(ordinal, s), reconstructs g(z) = sgn(β_od(z)) √(φ′(z)) w(k, φ(z)/2) / √2
/// at a point z interior to an E chart.
pub fn t_ex_inverse(
    sys: &DoublePointSystem,
    w: &dyn Fn(usize, f64) -> f64,
    z: f64,
) -> Result<f64, ExactDiagError> {
    let chart = sys
        .chart_of(z)
        .ok_or(ExactDiagError::AtDoublePoint { x: z })?;
    if DoublePointSystem::chart_is_j(chart) {
        return Err(ExactDiagError::OutsideCharts {
            x: z,
            side: SetLabel::E,
        });
    }
    let ordinal = chart / 2 - 1;
    let s = 0.5 * sys.phi(z);
    Ok(sgn(sys.beta_od.eval(z)) * sys.phi_deriv(z).sqrt() * w(ordinal, s) / SQRT_2)
}

/// Uniform sampling window for the Fourier convolution step: N samples at
/// t_i = −span + i·dt, dt = 2·span/N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FftWindow {
    pub span: f64,
    pub n: usize,
}

impl Default for FftWindow {
    fn default() -> Self {
        Self {
            span: 30.0,
            n: 1 << 14,
        }
    }
}

impl FftWindow {
    pub fn dt(&self) -> f64 {
        2.0 * self.span / self.n as f64
    }

    fn t_at(&self, i: usize) -> f64 {
        -self.span + i as f64 * self.dt()
    }

    /// Signed Fourier frequency of DFT bin m.
    fn xi(&self, m: usize) -> f64 {
        let m_signed = if m <= self.n / 2 {
            m as f64
        } else {
            m as f64 - self.n as f64
        };
        2.0 * PI * m_signed / (self.n as f64 * self.dt())
    }
}

/// Convolution with the kernel 1/(π cosh t) on a uniform grid with spacing
/// dt, via the FFT and the exact Fourier multiplier sech(πξ/2).
///
/// Errors with [`ExactDiagError::InsufficientDecay`] when the samples have
/// not decayed at the window ends (the periodization would wrap).
pub fn sech_convolve(v: &[f64], dt: f64) -> Result<Vec<f64>, ExactDiagError> {
    let n = v.len();
    assert!(n >= 2, "need at least two samples");
    check_decay(v)?;
    let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (m, slot) in buf.iter_mut().enumerate() {
        let m_signed = if m <= n / 2 {
            m as f64
        } else {
            m as f64 - n as f64
        };
        let xi = 2.0 * PI * m_signed / (n as f64 * dt);
        *slot *= 1.0 / (PI * xi / 2.0).cosh();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|z| z.re / n as f64).collect())
}

fn check_decay(v: &[f64]) -> Result<(), ExactDiagError> {
    let peak = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let edge = v[0].abs().max(v[v.len() - 1].abs());
    if peak > 0.0 && edge > 1e-10 * peak {
        return Err(ExactDiagError::InsufficientDecay { edge, peak });
    }
    Ok(())
}

/// Samples the mixed chart components of one side on the window grid:
/// channel j at t_i is Σ_k M[j,k](t_i) · (T f)_k(t_i). Chart inversions are
/// shared between the transform and the mixing field.
fn side_channels(
    sys: &DoublePointSystem,
    bez: &BezoutData,
    side: SetLabel,
    f: &dyn Fn(f64) -> f64,
    window: &FftWindow,
) -> Result<Vec<Vec<f64>>, ExactDiagError> {
    let n = sys.n;
    let mut channels = vec![vec![0.0; window.n]; n];
    for i in 0..window.n {
        let t = window.t_at(i);
        let xs = sys.chart_points(side, t)?; // x_k = φ_k⁻¹(2t)
        let m = m_field_at(sys, bez, &xs);
        for (col, &x) in xs.iter().enumerate() {
            let value = match side {
                SetLabel::J => t_in_value(sys, f, x),
                SetLabel::E => t_ex_value(sys, f, x),
            };
            if value != 0.0 {
                for (j, channel) in channels.iter_mut().enumerate() {
                    channel[i] += m[(j, col)] * value;
                }
            }
        }
    }
    Ok(channels)
}

/// FFT of each channel multiplied by the convolution multiplier
/// sign · sech(πξ/2).
fn channel_spectra(
    channels: &[Vec<f64>],
    window: &FftWindow,
    multiplier_sign: f64,
) -> Result<Vec<Vec<Complex64>>, ExactDiagError> {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(window.n);
    channels
        .iter()
        .map(|ch| {
            check_decay(ch)?;
            let mut buf: Vec<Complex64> = ch.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fft.process(&mut buf);
            for (m, slot) in buf.iter_mut().enumerate() {
                let xi = window.xi(m);
                *slot *= multiplier_sign / (PI * xi / 2.0).cosh();
            }
            Ok(buf)
        })
        .collect()
}

/// Trigonometric interpolation of a processed spectrum at an arbitrary
/// parameter s: (1/N) Σ_m Ŵ[m] e^{i ξ_m (s − t₀)}.
fn eval_spectrum(spectrum: &[Complex64], window: &FftWindow, s: f64) -> f64 {
    let shift = s + window.span; // s − t₀
    let mut acc = Complex64::new(0.0, 0.0);
    for (m, &c) in spectrum.iter().enumerate() {
        acc += c * Complex64::from_polar(1.0, window.xi(m) * shift);
    }
    acc.re / window.n as f64
}

/// Evaluates the E-side output at a point z from processed channel spectra:
/// the inverse chart transform of M_exᵀ applied to the channels at
/// s = φ(z)/2. Because z itself is the chart point of its own chart at s, no
/// inversion is needed here.
fn e_output_at(
    sys: &DoublePointSystem,
    bez: &BezoutData,
    spectra: &[Vec<Complex64>],
    window: &FftWindow,
    z: f64,
) -> Result<f64, ExactDiagError> {
    let chart = sys
        .chart_of(z)
        .ok_or(ExactDiagError::AtDoublePoint { x: z })?;
    if DoublePointSystem::chart_is_j(chart) {
        return Err(ExactDiagError::OutsideCharts {
            x: z,
            side: SetLabel::E,
        });
    }
    let s = 0.5 * sys.phi(z);
    let q = sys.q_of(z);
    let mut component = 0.0;
    for (j, spectrum) in spectra.iter().enumerate() {
        let m_entry = bez.p_polys[j].eval(z) * (bez.rho[j] / q).sqrt();
        component += m_entry * eval_spectrum(spectrum, window, s);
    }
    Ok(sgn(sys.beta_od.eval(z)) * sys.phi_deriv(z).sqrt() * component / SQRT_2)
}

/// J-side analogue of [`e_output_at`].
fn j_output_at(
    sys: &DoublePointSystem,
    bez: &BezoutData,
    spectra: &[Vec<Complex64>],
    window: &FftWindow,
    x: f64,
) -> Result<f64, ExactDiagError> {
    let chart = sys
        .chart_of(x)
        .ok_or(ExactDiagError::AtDoublePoint { x })?;
    if !DoublePointSystem::chart_is_j(chart) {
        return Err(ExactDiagError::OutsideCharts {
            x,
            side: SetLabel::J,
        });
    }
    let t = 0.5 * sys.phi(x);
    let q = sys.q_of(x);
    let mut component = 0.0;
    for (j, spectrum) in spectra.iter().enumerate() {
        let m_entry = bez.p_polys[j].eval(x) * (bez.rho[j] / q).sqrt();
        component += m_entry * eval_spectrum(spectrum, window, t);
    }
    Ok(sgn(sys.beta_od.eval(x)) * sys.phi_deriv(x).abs().sqrt() * component / SQRT_2)
}

/// Applies the transform through the explicit diagonalization:
/// g = T_ex⁻¹ M_exᵀ 𝒞 M_in T_in f, evaluated at the given points of E.
///
/// f must be finite on the closure of J; the output points must be interior
/// to E charts.
pub fn apply_a_diag(
    sys: &DoublePointSystem,
    f: &dyn Fn(f64) -> f64,
    z_points: &[f64],
    window: &FftWindow,
) -> Result<Vec<f64>, ExactDiagError> {
    let bez = bezout_matrix(sys)?;
    let channels = side_channels(sys, &bez, SetLabel::J, f, window)?;
    let spectra = channel_spectra(&channels, window, 1.0)?;
    z_points
        .iter()
        .map(|&z| e_output_at(sys, &bez, &spectra, window, z))
        .collect()
}

/// Applies the full coupled operator [[0, A], [A†, 0]] through the factorized
/// sign-diagonal form: the symmetric/antisymmetric combinations
/// V(p, q) = ((p+q)/√2, (p−q)/√2) of the E- and J-side channels are
/// convolved with ±sech kernels and recombined with the same V (V² = I),
/// which lands (𝒞q, 𝒞p) — the E output driven by v and the J output driven
/// by u.
///
/// Returns (Av at `e_points`, A†u at `j_points`).
pub fn apply_k_factorized(
    sys: &DoublePointSystem,
    u: &dyn Fn(f64) -> f64,
    v: &dyn Fn(f64) -> f64,
    e_points: &[f64],
    j_points: &[f64],
    window: &FftWindow,
) -> Result<(Vec<f64>, Vec<f64>), ExactDiagError> {
    let bez = bezout_matrix(sys)?;
    let p = side_channels(sys, &bez, SetLabel::E, u, window)?;
    let q = side_channels(sys, &bez, SetLabel::J, v, window)?;
    let combine = |a: &[Vec<f64>], b: &[Vec<f64>], sign: f64| -> Vec<Vec<f64>> {
        a.iter()
            .zip(b)
            .map(|(pa, qa)| {
                pa.iter()
                    .zip(qa)
                    .map(|(x, y)| (x + sign * y) / SQRT_2)
                    .collect()
            })
            .collect()
    };
    let plus = combine(&p, &q, 1.0);
    let minus = combine(&p, &q, -1.0);
    // diag(𝒞, −𝒞) in the V basis.
    let s_plus = channel_spectra(&plus, window, 1.0)?;
    let s_minus = channel_spectra(&minus, window, -1.0)?;
    // Recombining with V: first = (𝒞⁺ + 𝒞⁻)/√2 = 𝒞q, second = (𝒞⁺ − 𝒞⁻)/√2 = 𝒞p.
    let recombine = |sa: &[Vec<Complex64>], sb: &[Vec<Complex64>], sign: f64| {
        sa.iter()
            .zip(sb)
            .map(|(x, y)| {
                x.iter()
                    .zip(y)
                    .map(|(a, b)| (a + sign * b) / SQRT_2)
                    .collect::<Vec<Complex64>>()
            })
            .collect::<Vec<_>>()
    };
    let e_spectra = recombine(&s_plus, &s_minus, 1.0);
    let j_spectra = recombine(&s_plus, &s_minus, -1.0);

    let a_v = e_points
        .iter()
        .map(|&z| e_output_at(sys, &bez, &e_spectra, window, z))
        .collect::<Result<Vec<f64>, _>>()?;
    let at_u = j_points
        .iter()
        .map(|&x| j_output_at(sys, &bez, &j_spectra, window, x))
        .collect::<Result<Vec<f64>, _>>()?;
    Ok((a_v, at_u))
}
