//! Nyström discretization of the coupling kernel on a multi-interval
//! configuration: graded composite Gauss–Legendre grids, symmetric matrix
//! assembly, quadrature application of the transform, and a contour
//! factorization that writes the transform as a product of two smooth
//! integral operators through an encircling ellipse.
//!
//! The kernel being discretized is
//!
//! ```text
//! K(x, y) = [χ_J(y) χ_E(x) − χ_J(x) χ_E(y)] / (π (x − y)),
//! ```
//!
//! which is symmetric, vanishes identically when x and y lie in the same
//! set, and restricted to x ∈ E, y ∈ J is the kernel 1/(π(x−y)) of the
//! transform (Af)(x) = (1/π) ∫_J f(y)/(x−y) dy. The square-root-weighted
//! collocation matrix M_ij = √w_i K(x_i, x_j) √w_j is symmetric with the
//! block shape [[0, B], [Bᵀ, 0]], so its eigenvalues are ± the singular
//! values of the rectangular block B.

use crate::geometry::{Configuration, MultiInterval, SetLabel};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read as _, Write as _};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Errors from grid construction, operator assembly, and export.
#[derive(Debug, Error)]
pub enum DiscretizeError {
    /// The configuration has an unbounded part; apply a compactifying Möbius
    /// map first (grids only cover bounded sets).
    #[error("configuration has an unbounded part; compactify before building a grid")]
    UnboundedWithoutCompactification,
    /// `panels`, `order`, or `grading` outside their valid ranges.
    #[error("invalid grid parameters: panels = {panels}, order = {order}, grading = {grading} (need panels ≥ 1, order ≥ 1, 0 < grading ≤ 1)")]
    InvalidGridParameters {
        panels: usize,
        order: usize,
        grading: f64,
    },
    /// An evaluation point coincides exactly with a quadrature node, making
    /// the denominator of the kernel vanish.
    #[error("evaluation point coincides with a quadrature node at x = {x}")]
    CoincidentPoints { x: f64 },
    /// The transform was requested at a point of J itself, where the integral
    /// is singular and plain quadrature does not apply.
    #[error("cannot evaluate the transform at x = {x} inside J")]
    EvaluationInsideJ { x: f64 },
    /// The factorization ellipse fails to separate J (strictly inside) from
    /// E (strictly outside).
    #[error("contour does not separate the sets: J must lie strictly inside and E strictly outside the ellipse")]
    ContourTouchesSets,
    #[error("matrix export/import failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("matrix metadata is invalid: {0}")]
    Meta(#[from] serde_json::Error),
}

/// Gauss–Legendre nodes and weights on [−1, 1], ascending in the node.
///
/// Computed by Newton iteration on the three-term Legendre recurrence from
/// Chebyshev-point initial guesses; nodes come in exact ± pairs and the
/// weights are w = 2 / ((1 − x²) P′_n(x)²).
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1, "quadrature order must be at least 1");
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut deriv = 0.0;
        for _ in 0..64 {
            let (p, dp) = legendre_with_derivative(n, z);
            deriv = dp;
            let step = p / dp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                let (_, dp) = legendre_with_derivative(n, z);
                deriv = dp;
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * deriv * deriv);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at x, via the recurrence
/// j P_j = (2j−1) x P_{j−1} − (j−1) P_{j−2}.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p_next = ((2.0 * jf - 1.0) * x * p - (jf - 1.0) * p_prev) / jf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// One contiguous interval of the grid with its node range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPart {
    pub lo: f64,
    pub hi: f64,
    pub set: SetLabel,
    /// First index into the grid node arrays.
    pub first_node: usize,
    pub n_nodes: usize,
}

/// A composite graded Gauss–Legendre grid over J ∪ E.
///
/// Node ordering: all E nodes first, then all J nodes; within each set the
/// parts appear in ascending order and nodes ascend within each part. Each
/// bounded part is split at its midpoint and each half carries `panels`
/// quadrature panels whose lengths decrease geometrically (ratio `grading`)
/// toward the endpoint, concentrating nodes where eigenfunctions oscillate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Set membership of each node (parallel to `nodes`).
    pub node_set: Vec<SetLabel>,
    /// Index into `parts` for each node.
    pub node_part: Vec<usize>,
    /// E parts first, then J parts, matching the node ordering.
    pub parts: Vec<GridPart>,
    pub n_e: usize,
    pub n_j: usize,
    pub panels: usize,
    pub order: usize,
    pub grading: f64,
    /// Smallest distance between adjacent nodes within a part.
    pub min_spacing: f64,
}

impl Grid {
    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Indices of the E nodes (they come first).
    pub fn e_indices(&self) -> std::ops::Range<usize> {
        0..self.n_e
    }

    /// Indices of the J nodes (they follow the E nodes).
    pub fn j_indices(&self) -> std::ops::Range<usize> {
        self.n_e..self.n_e + self.n_j
    }
}

/// Builds a grid with the default quadrature order 8.
pub fn build_grid(
    cfg: &Configuration,
    panels: usize,
    grading: f64,
) -> Result<Grid, DiscretizeError> {
    build_grid_with_order(cfg, panels, grading, 8)
}

/// Builds a composite graded grid with an explicit Gauss–Legendre order.
///
/// Every part of J and E must be bounded; each part receives
/// `2 · panels · order` nodes.
pub fn build_grid_with_order(
    cfg: &Configuration,
    panels: usize,
    grading: f64,
    order: usize,
) -> Result<Grid, DiscretizeError> {
    if panels == 0 || order == 0 || !(grading > 0.0 && grading <= 1.0) {
        return Err(DiscretizeError::InvalidGridParameters {
            panels,
            order,
            grading,
        });
    }
    if !cfg.is_bounded() {
        return Err(DiscretizeError::UnboundedWithoutCompactification);
    }
    let (gl_nodes, gl_weights) = gauss_legendre(order);

    let mut grid = Grid {
        nodes: Vec::new(),
        weights: Vec::new(),
        node_set: Vec::new(),
        node_part: Vec::new(),
        parts: Vec::new(),
        n_e: 0,
        n_j: 0,
        panels,
        order,
        grading,
        min_spacing: f64::INFINITY,
    };

    let add_set = |grid: &mut Grid, set: &MultiInterval| {
        for part in &set.parts {
            let first_node = grid.nodes.len();
            let part_index = grid.parts.len();
            for (lo, hi) in panel_bounds(part.lo, part.hi, panels, grading) {
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (lo + hi);
                for (u, w) in gl_nodes.iter().zip(&gl_weights) {
                    grid.nodes.push(mid + half * u);
                    grid.weights.push(half * w);
                    grid.node_set.push(set.label);
                    grid.node_part.push(part_index);
                }
            }
            grid.parts.push(GridPart {
                lo: part.lo,
                hi: part.hi,
                set: set.label,
                first_node,
                n_nodes: grid.nodes.len() - first_node,
            });
        }
    };
    add_set(&mut grid, &cfg.e);
    grid.n_e = grid.nodes.len();
    add_set(&mut grid, &cfg.j);
    grid.n_j = grid.nodes.len() - grid.n_e;

    for part in &grid.parts {
        let r = part.first_node..part.first_node + part.n_nodes;
        for pair in grid.nodes[r].windows(2) {
            grid.min_spacing = grid.min_spacing.min(pair[1] - pair[0]);
        }
    }
    Ok(grid)
}

/// Panel boundaries for one part: the part is halved at its midpoint and each
/// half is covered by `panels` panels whose lengths form a geometric sequence
/// with ratio `grading`, smallest panel at the part endpoint.
fn panel_bounds(lo: f64, hi: f64, panels: usize, grading: f64) -> Vec<(f64, f64)> {
    let half_len = 0.5 * (hi - lo);
    let mid = 0.5 * (lo + hi);
    // Largest panel length (adjacent to the midpoint).
    let l0 = if grading == 1.0 {
        half_len / panels as f64
    } else {
        half_len * (1.0 - grading) / (1.0 - grading.powi(panels as i32))
    };
    // Interior boundaries measured from the midpoint outward.
    let mut offsets = Vec::with_capacity(panels);
    let mut acc = 0.0;
    let mut len = l0;
    for _ in 0..panels - 1 {
        acc += len;
        offsets.push(acc);
        len *= grading;
    }
    let mut bounds = Vec::with_capacity(2 * panels);
    // Left half, ascending from lo to mid.
    let mut prev = lo;
    for &off in offsets.iter().rev() {
        let b = mid - off;
        bounds.push((prev, b));
        prev = b;
    }
    bounds.push((prev, mid));
    // Right half, ascending from mid to hi.
    let mut prev = mid;
    for &off in offsets.iter() {
        let b = mid + off;
        bounds.push((prev, b));
        prev = b;
    }
    bounds.push((prev, hi));
    bounds
}

/// The coupling kernel K(x, y) = [χ_J(y)χ_E(x) − χ_J(x)χ_E(y)] / (π(x−y)).
///
/// Symmetric in (x, y); identically zero when both points lie in the same
/// set (including the diagonal, where the limit is taken as 0).
pub fn kernel_k(cfg: &Configuration, x: f64, y: f64) -> f64 {
    if x == y {
        return 0.0;
    }
    let chi = |set: &MultiInterval, p: f64| if set.contains(p) { 1.0 } else { 0.0 };
    let num = chi(&cfg.j, y) * chi(&cfg.e, x) - chi(&cfg.j, x) * chi(&cfg.e, y);
    num / (PI * (x - y))
}

/// Which operator an assembled matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    /// The symmetric matrix of the full coupling operator on E ⊕ J.
    FullK,
    /// The rectangular block of the transform from J to E.
    BlockA,
}

/// A dense operator matrix tagged with what it discretizes.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub entries: DMatrix<f64>,
    pub kind: MatrixKind,
}

#[derive(Debug, Serialize, Deserialize)]
struct MatrixMeta {
    rows: usize,
    cols: usize,
    kind: MatrixKind,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl OperatorMatrix {
    /// Writes the matrix as CSV (one row per line, full precision) plus a
    /// JSON sidecar `<path>.json` recording dimensions and kind.
    pub fn write_csv(&self, path: &Path) -> Result<(), DiscretizeError> {
        let mut writer = csv::Writer::from_path(path)?;
        for i in 0..self.entries.nrows() {
            let row: Vec<String> = (0..self.entries.ncols())
                .map(|j| format!("{:.17e}", self.entries[(i, j)]))
                .collect();
            writer.write_record(&row)?;
        }
        writer.flush()?;
        self.write_sidecar(path)
    }

    /// Writes the matrix as row-major little-endian f64 plus a JSON sidecar
    /// `<path>.json` recording dimensions and kind.
    pub fn write_binary(&self, path: &Path) -> Result<(), DiscretizeError> {
        let mut file = std::fs::File::create(path)?;
        let mut buf = Vec::with_capacity(8 * self.entries.len());
        for i in 0..self.entries.nrows() {
            for j in 0..self.entries.ncols() {
                buf.extend_from_slice(&self.entries[(i, j)].to_le_bytes());
            }
        }
        file.write_all(&buf)?;
        self.write_sidecar(path)
    }

    fn write_sidecar(&self, path: &Path) -> Result<(), DiscretizeError> {
        let meta = MatrixMeta {
            rows: self.entries.nrows(),
            cols: self.entries.ncols(),
            kind: self.kind,
        };
        let file = std::fs::File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(file, &meta)?;
        Ok(())
    }

    /// Reads a matrix written by [`OperatorMatrix::write_binary`], using the
    /// JSON sidecar for dimensions and kind.
    pub fn read_binary(path: &Path) -> Result<Self, DiscretizeError> {
        let meta: MatrixMeta = serde_json::from_reader(std::fs::File::open(sidecar_path(path))?)?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let expected = 8 * meta.rows * meta.cols;
        if bytes.len() != expected {
            return Err(DiscretizeError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("expected {expected} bytes, found {}", bytes.len()),
            )));
        }
        let mut entries = DMatrix::zeros(meta.rows, meta.cols);
        for i in 0..meta.rows {
            for j in 0..meta.cols {
                let off = 8 * (i * meta.cols + j);
                let chunk: [u8; 8] = bytes[off..off + 8].try_into().expect("8-byte chunk");
                entries[(i, j)] = f64::from_le_bytes(chunk);
            }
        }
        Ok(Self {
            entries,
            kind: meta.kind,
        })
    }
}

/// Kernel value between two grid nodes, from their set labels. Same-set
/// pairs are exactly zero.
fn node_kernel(grid: &Grid, i: usize, j: usize) -> f64 {
    match (grid.node_set[i], grid.node_set[j]) {
        (SetLabel::E, SetLabel::J) => 1.0 / (PI * (grid.nodes[i] - grid.nodes[j])),
        (SetLabel::J, SetLabel::E) => 1.0 / (PI * (grid.nodes[j] - grid.nodes[i])),
        _ => 0.0,
    }
}

/// Assembles the symmetric square-root-weighted collocation matrix
/// M_ij = √w_i K(x_i, x_j) √w_j over all nodes (E block first).
///
/// M is exactly symmetric, has zero diagonal blocks, and anticommutes with
/// the signature S = diag(+1 on E, −1 on J): S M S = −M. Its spectrum is
/// therefore symmetric about zero.
pub fn assemble_full(grid: &Grid) -> OperatorMatrix {
    let n = grid.len();
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = sw[i] * node_kernel(grid, i, j) * sw[j];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    OperatorMatrix {
        entries: m,
        kind: MatrixKind::FullK,
    }
}

/// Assembles the rectangular weighted block B_ij = √w_i √w_j / (π (x_i − y_j))
/// with rows over E nodes and columns over J nodes. The singular values of B
/// are the nonnegative eigenvalues of the full matrix.
pub fn assemble_block(grid: &Grid) -> OperatorMatrix {
    let sw: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let mut b = DMatrix::zeros(grid.n_e, grid.n_j);
    for (bi, i) in grid.e_indices().enumerate() {
        for (bj, j) in grid.j_indices().enumerate() {
            b[(bi, bj)] = sw[i] * sw[j] / (PI * (grid.nodes[i] - grid.nodes[j]));
        }
    }
    OperatorMatrix {
        entries: b,
        kind: MatrixKind::BlockA,
    }
}

/// Applies the transform by quadrature to samples of f at the J nodes,
/// returning (Af)(x) at every E node.
pub fn apply_a(grid: &Grid, f_at_j: &[f64]) -> Vec<f64> {
    assert_eq!(f_at_j.len(), grid.n_j, "need one sample per J node");
    grid.e_indices()
        .map(|i| {
            let x = grid.nodes[i];
            grid.j_indices()
                .zip(f_at_j)
                .map(|(j, f)| grid.weights[j] * f / (x - grid.nodes[j]))
                .sum::<f64>()
                / PI
        })
        .collect()
}

/// Applies the transform by quadrature to a function on J, evaluated at an
/// arbitrary point x outside J: (Af)(x) = (1/π) Σ_j w_j f(y_j)/(x − y_j).
///
/// Errors when x lies in J (the integral is singular there) or coincides
/// exactly with a quadrature node.
pub fn apply_a_function(
    grid: &Grid,
    f: &dyn Fn(f64) -> f64,
    x: f64,
) -> Result<f64, DiscretizeError> {
    let inside_j = grid
        .parts
        .iter()
        .any(|p| p.set == SetLabel::J && p.lo <= x && x <= p.hi);
    if inside_j {
        return Err(DiscretizeError::EvaluationInsideJ { x });
    }
    let mut acc = 0.0;
    for j in grid.j_indices() {
        let dy = x - grid.nodes[j];
        if dy == 0.0 {
            return Err(DiscretizeError::CoincidentPoints { x });
        }
        acc += grid.weights[j] * f(grid.nodes[j]) / dy;
    }
    Ok(acc / PI)
}

/// A clockwise ellipse w(θ) = center + semi_x·cos θ − i·semi_y·sin θ used to
/// factor the transform through an intermediate contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseContour {
    pub center: f64,
    pub semi_x: f64,
    pub semi_y: f64,
    /// Number of equispaced trapezoid points on the contour.
    pub points: usize,
}

/// The two factors and the reconstruction residual of the contour
/// factorization A = T₂ T₁.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourFactorization {
    /// Cauchy transform from the J nodes to the contour points:
    /// T₁[k, j] = w_j / (π (w_k − y_j)).
    pub t1: DMatrix<Complex64>,
    /// Contour-to-E Cauchy quadrature:
    /// T₂[i, k] = w′(θ_k) / (i·m·(w_k − x_i)).
    pub t2: DMatrix<Complex64>,
    /// max_{ij} |(T₂T₁ − A)_{ij}| against the plain quadrature matrix of A.
    pub residual: f64,
}

/// Factors the discretized transform through a clockwise ellipse that
/// encloses J and excludes E:
///
/// ```text
/// (T₁ f)(w) = (1/π) ∫_J f(y)/(w − y) dy,      w on the contour,
/// (T₂ g)(x) = (1/2πi) ∮ g(w)/(w − x) dw,      x ∈ E,
/// ```
///
/// so that T₂ T₁ = A by the residue theorem (clockwise orientation makes the
/// sign positive). The trapezoid rule on the analytic contour integrand
/// converges geometrically in `points`.
pub fn contour_factorize(
    grid: &Grid,
    contour: &EllipseContour,
) -> Result<ContourFactorization, DiscretizeError> {
    if contour.points < 4 || !(contour.semi_x > 0.0) || !(contour.semi_y > 0.0) {
        return Err(DiscretizeError::InvalidGridParameters {
            panels: grid.panels,
            order: grid.order,
            grading: grid.grading,
        });
    }
    let (inner_lo, inner_hi) = (contour.center - contour.semi_x, contour.center + contour.semi_x);
    for part in &grid.parts {
        match part.set {
            SetLabel::J => {
                if !(part.lo > inner_lo && part.hi < inner_hi) {
                    return Err(DiscretizeError::ContourTouchesSets);
                }
            }
            SetLabel::E => {
                if !(part.hi < inner_lo || part.lo > inner_hi) {
                    return Err(DiscretizeError::ContourTouchesSets);
                }
            }
        }
    }

    let m = contour.points;
    let mf = m as f64;
    let mut w_pts = Vec::with_capacity(m);
    let mut w_der = Vec::with_capacity(m);
    for k in 0..m {
        let theta = 2.0 * PI * k as f64 / mf;
        w_pts.push(Complex64::new(
            contour.center + contour.semi_x * theta.cos(),
            -contour.semi_y * theta.sin(),
        ));
        w_der.push(Complex64::new(
            -contour.semi_x * theta.sin(),
            -contour.semi_y * theta.cos(),
        ));
    }
    for &w in &w_pts {
        if grid.nodes.iter().any(|&x| Complex64::new(x, 0.0) == w) {
            return Err(DiscretizeError::CoincidentPoints { x: w.re });
        }
    }

    let mut t1 = DMatrix::zeros(m, grid.n_j);
    for k in 0..m {
        for (bj, j) in grid.j_indices().enumerate() {
            t1[(k, bj)] = grid.weights[j] / (PI * (w_pts[k] - grid.nodes[j]));
        }
    }
    let mut t2 = DMatrix::zeros(grid.n_e, m);
    let i_m = Complex64::new(0.0, mf);
    for (bi, i) in grid.e_indices().enumerate() {
        for k in 0..m {
            t2[(bi, k)] = w_der[k] / (i_m * (w_pts[k] - grid.nodes[i]));
        }
    }

    let product = &t2 * &t1;
    let mut residual = 0.0_f64;
    for (bi, i) in grid.e_indices().enumerate() {
        for (bj, j) in grid.j_indices().enumerate() {
            let direct = grid.weights[j] / (PI * (grid.nodes[i] - grid.nodes[j]));
            residual = residual.max((product[(bi, bj)] - direct).norm());
        }
    }
    Ok(ContourFactorization { t1, t2, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{validate_configuration, Interval};
    use approx::assert_abs_diff_eq;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn disjoint_config() -> Configuration {
        validate_configuration(&[iv(0.0, 1.0)], &[iv(2.0, 3.0)]).unwrap()
    }

    #[test]
    fn gauss_legendre_order_8_matches_reference() {
        let (nodes, weights) = gauss_legendre(8);
        let ref_nodes = [
            -0.9602898564975363,
            -0.7966664774136267,
            -0.5255324099163290,
            -0.1834346424956498,
            0.1834346424956498,
            0.5255324099163290,
            0.7966664774136267,
            0.9602898564975363,
        ];
        let ref_weights = [
            0.1012285362903763,
            0.2223810344533745,
            0.3137066458778873,
            0.3626837833783620,
            0.3626837833783620,
            0.3137066458778873,
            0.2223810344533745,
            0.1012285362903763,
        ];
        for i in 0..8 {
            assert_abs_diff_eq!(nodes[i], ref_nodes[i], epsilon = 1e-15);
            assert_abs_diff_eq!(weights[i], ref_weights[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        // Order n is exact through degree 2n − 1.
        let (nodes, weights) = gauss_legendre(8);
        let quad: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * x.powi(14))
            .sum();
        assert_abs_diff_eq!(quad, 2.0 / 15.0, epsilon = 1e-14);
        let odd: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * x.powi(15))
            .sum();
        assert_abs_diff_eq!(odd, 0.0, epsilon = 1e-15);

        let (nodes3, weights3) = gauss_legendre(3);
        assert_abs_diff_eq!(nodes3[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nodes3[2], (3.0_f64 / 5.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(weights3[1], 8.0 / 9.0, epsilon = 1e-15);
        let quad: f64 = nodes3
            .iter()
            .zip(&weights3)
            .map(|(x, w)| w * x.powi(4))
            .sum();
        assert_abs_diff_eq!(quad, 2.0 / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn grid_has_expected_counts_and_ordering() {
        let cfg = disjoint_config();
        let grid = build_grid(&cfg, 4, 0.5).unwrap();
        // 2 halves × 4 panels × order 8 per part.
        assert_eq!(grid.n_e, 64);
        assert_eq!(grid.n_j, 64);
        assert_eq!(grid.len(), 128);
        // E nodes first, each set ascending and inside its part.
        assert!(grid.nodes[..64].iter().all(|&x| 2.0 < x && x < 3.0));
        assert!(grid.nodes[64..].iter().all(|&x| 0.0 < x && x < 1.0));
        assert!(grid.nodes[..64].windows(2).all(|p| p[0] < p[1]));
        assert!(grid.nodes[64..].windows(2).all(|p| p[0] < p[1]));
        assert_eq!(grid.parts.len(), 2);
        assert_eq!(grid.parts[0].set, SetLabel::E);
        assert_eq!(grid.parts[1].first_node, 64);
        // Weights of each part sum to its length.
        let we: f64 = grid.weights[..64].iter().sum();
        let wj: f64 = grid.weights[64..].iter().sum();
        assert_abs_diff_eq!(we, 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(wj, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn grading_concentrates_nodes_at_part_endpoints() {
        let cfg = disjoint_config();
        let grid = build_grid(&cfg, 6, 0.5).unwrap();
        let j_nodes = &grid.nodes[grid.j_indices()];
        // Gap at the endpoint is much smaller than near the midpoint.
        let edge_gap = j_nodes[1] - j_nodes[0];
        let n = j_nodes.len();
        let mid_gap = j_nodes[n / 2] - j_nodes[n / 2 - 1];
        assert!(edge_gap < mid_gap / 8.0);
        // The first node sits close to the endpoint 0 but strictly inside.
        assert!(j_nodes[0] > 0.0 && j_nodes[0] < 0.01);
        assert!(grid.min_spacing > 0.0);
    }

    #[test]
    fn grid_rejects_unbounded_and_invalid_parameters() {
        let unbounded = validate_configuration(
            &[iv(f64::NEG_INFINITY, 0.0)],
            &[iv(1.0, 2.0)],
        )
        .unwrap();
        assert!(matches!(
            build_grid(&unbounded, 4, 0.5),
            Err(DiscretizeError::UnboundedWithoutCompactification)
        ));
        let cfg = disjoint_config();
        assert!(matches!(
            build_grid(&cfg, 0, 0.5),
            Err(DiscretizeError::InvalidGridParameters { .. })
        ));
        assert!(matches!(
            build_grid(&cfg, 4, 1.5),
            Err(DiscretizeError::InvalidGridParameters { .. })
        ));
        assert!(matches!(
            build_grid_with_order(&cfg, 4, 0.5, 0),
            Err(DiscretizeError::InvalidGridParameters { .. })
        ));
    }

    #[test]
    fn kernel_is_symmetric_and_supported_across_sets() {
        let cfg = disjoint_config();
        let expect = 1.0 / (2.0 * PI);
        assert_abs_diff_eq!(kernel_k(&cfg, 2.5, 0.5), expect, epsilon = 1e-16);
        assert_abs_diff_eq!(kernel_k(&cfg, 0.5, 2.5), expect, epsilon = 1e-16);
        // Same-set pairs and the diagonal vanish.
        assert_eq!(kernel_k(&cfg, 0.2, 0.7), 0.0);
        assert_eq!(kernel_k(&cfg, 2.2, 2.7), 0.0);
        assert_eq!(kernel_k(&cfg, 0.5, 0.5), 0.0);
        // Points outside both sets see a zero kernel.
        assert_eq!(kernel_k(&cfg, 1.5, 0.5), 0.0);
    }

    #[test]
    fn full_matrix_is_symmetric_and_anticommutes_with_signature() {
        let cfg = disjoint_config();
        let grid = build_grid(&cfg, 3, 0.5).unwrap();
        let m = assemble_full(&grid).entries;
        assert_eq!(m.nrows(), grid.len());
        for i in 0..m.nrows() {
            assert_eq!(m[(i, i)], 0.0);
            for j in 0..m.ncols() {
                assert_eq!(m[(i, j)], m[(j, i)]);
                let si = if i < grid.n_e { 1.0 } else { -1.0 };
                let sj = if j < grid.n_e { 1.0 } else { -1.0 };
                // S M S = −M holds exactly: same-set entries are exactly 0.
                assert_eq!(si * m[(i, j)] * sj, -m[(i, j)]);
            }
        }
    }

    #[test]
    fn block_singular_values_match_full_eigenvalues() {
        let cfg = disjoint_config();
        let grid = build_grid(&cfg, 3, 0.5).unwrap();
        let full = assemble_full(&grid).entries;
        let block = assemble_block(&grid).entries;
        let eig = nalgebra::SymmetricEigen::new(full).eigenvalues;
        let mut positive: Vec<f64> = eig.iter().copied().filter(|&l| l > 1e-14).collect();
        positive.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut sv: Vec<f64> = nalgebra::SVD::new(block, false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
        // Compare the singular values above rounding noise (the spectrum of
        // well-separated sets decays geometrically, so only a handful are).
        assert!(positive.len() >= 5);
        for k in 0..positive.len() {
            assert_abs_diff_eq!(positive[k], sv[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn quadrature_application_matches_logarithm() {
        // For f ≡ 1 on J = [0,1]: (Af)(x) = ln(x/(x−1))/π.
        let cfg = disjoint_config();
        let grid = build_grid(&cfg, 4, 0.5).unwrap();
        let ones = vec![1.0; grid.n_j];
        let out = apply_a(&grid, &ones);
        for (k, i) in grid.e_indices().enumerate() {
            let x = grid.nodes[i];
            let exact = (x / (x - 1.0)).ln() / PI;
            assert_abs_diff_eq!(out[k], exact, epsilon = 1e-12);
        }
        let at = apply_a_function(&grid, &|_| 1.0, 2.5).unwrap();
        assert_abs_diff_eq!(at, (2.5_f64 / 1.5).ln() / PI, epsilon = 1e-12);
        assert!(matches!(
            apply_a_function(&grid, &|_| 1.0, 0.5),
            Err(DiscretizeError::EvaluationInsideJ { .. })
        ));
    }

    #[test]
    fn contour_factorization_reproduces_the_transform() {
        let cfg = disjoint_config();
        let grid = build_grid(&cfg, 3, 0.5).unwrap();
        let contour = EllipseContour {
            center: 0.5,
            semi_x: 1.2,
            semi_y: 0.5,
            points: 128,
        };
        let fact = contour_factorize(&grid, &contour).unwrap();
        assert_eq!(fact.t1.nrows(), 128);
        assert_eq!(fact.t2.ncols(), 128);
        assert!(
            fact.residual <= 1e-10,
            "factorization residual {} too large",
            fact.residual
        );
    }

    #[test]
    fn contour_must_separate_the_sets() {
        let cfg = disjoint_config();
        let grid = build_grid(&cfg, 3, 0.5).unwrap();
        // Reaches into E = [2,3].
        let wide = EllipseContour {
            center: 0.5,
            semi_x: 1.8,
            semi_y: 0.5,
            points: 64,
        };
        assert!(matches!(
            contour_factorize(&grid, &wide),
            Err(DiscretizeError::ContourTouchesSets)
        ));
        // Fails to contain all of J = [0,1].
        let narrow = EllipseContour {
            center: 0.5,
            semi_x: 0.4,
            semi_y: 0.3,
            points: 64,
        };
        assert!(matches!(
            contour_factorize(&grid, &narrow),
            Err(DiscretizeError::ContourTouchesSets)
        ));
    }

    #[test]
    fn matrix_export_round_trips() {
        let cfg = disjoint_config();
        let grid = build_grid(&cfg, 2, 0.5).unwrap();
        let m = assemble_block(&grid);
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("block.f64");
        m.write_binary(&bin).unwrap();
        let back = OperatorMatrix::read_binary(&bin).unwrap();
        assert_eq!(back.kind, MatrixKind::BlockA);
        assert_eq!(back.entries, m.entries);

        let csv_path = dir.path().join("block.csv");
        m.write_csv(&csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(text.lines().count(), m.entries.nrows());
        let meta: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("block.csv.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(meta["rows"], m.entries.nrows());
        assert_eq!(meta["kind"], "block_a");
    }
}
