//! Spectrum post-processing for the discretized operators: singular values,
//! paired eigenvalues, exponential-decay fits, partial trace norms, and
//! counting histograms.
//!
//! The full coupling matrix anticommutes with the signature S = diag(+1 on E,
//! −1 on J), so its spectrum is symmetric about zero; [`eigenvalues_k`]
//! reports how well the computed eigenvalues realize that pairing. When the
//! sets are well separated the operator is trace class and its singular
//! values decay geometrically, which [`decay_fit`] quantifies by a linear
//! regression of ln σ_j on j.

use crate::discretize::{Grid, MatrixKind, OperatorMatrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Singular values below this are indistinguishable from rounding noise in
/// the double-precision eigensolver; decay fits over such values would fit
/// noise, not decay.
pub const NOISE_FLOOR: f64 = 1e-13;

/// Errors from spectrum post-processing.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    /// The requested fit window contains singular values at or below the
    /// noise floor.
    #[error("decay-fit window [{j_min}, {j_max}] reaches σ = {sigma:.3e}, at or below the noise floor {floor:.0e}")]
    WindowBelowNoiseFloor {
        j_min: usize,
        j_max: usize,
        sigma: f64,
        floor: f64,
    },
    /// Histogram edges must be strictly ascending, at least two, and finite.
    #[error("invalid histogram bin edges")]
    InvalidBins,
}

/// Singular values of the rectangular transform block, sorted descending.
pub fn singular_values(block: &OperatorMatrix) -> Vec<f64> {
    assert_eq!(block.kind, MatrixKind::BlockA, "expected the block matrix");
    let mut sv: Vec<f64> = nalgebra::SVD::new(block.entries.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
    sv
}

/// Eigenvalues of the full symmetric matrix together with the residual of the
/// ±pairing forced by the signature symmetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPairing {
    /// Eigenvalues sorted ascending.
    pub eigenvalues: Vec<f64>,
    /// max_i |λ_i + λ_{n−1−i}| over the sorted list: how far the computed
    /// spectrum is from exact symmetry about zero.
    pub pairing_residual: f64,
}

/// Diagonalizes the full coupling matrix and measures the ±pairing residual.
pub fn eigenvalues_k(full: &OperatorMatrix) -> EigenPairing {
    assert_eq!(full.kind, MatrixKind::FullK, "expected the full matrix");
    let mut eigenvalues: Vec<f64> = nalgebra::SymmetricEigen::new(full.entries.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    let n = eigenvalues.len();
    let pairing_residual = (0..n)
        .map(|i| (eigenvalues[i] + eigenvalues[n - 1 - i]).abs())
        .fold(0.0, f64::max);
    EigenPairing {
        eigenvalues,
        pairing_residual,
    }
}

/// Least-squares line through (j, ln σ_j) over a 1-based index window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of ln σ_j against j (negative for decaying spectra).
    pub rate: f64,
    /// Intercept of the fitted line at j = 0.
    pub intercept: f64,
    /// Coefficient of determination of the fit.
    pub r_squared: f64,
}

/// Fits ln σ_j = intercept + rate · j over the window j_min ..= j_max
/// (1-based indices into the descending singular-value list).
///
/// Errors when the window dips to the noise floor, where logarithms measure
/// rounding instead of decay.
pub fn decay_fit(sigma: &[f64], j_min: usize, j_max: usize) -> Result<DecayFit, SpectralError> {
    assert!(
        1 <= j_min && j_min < j_max && j_max <= sigma.len(),
        "window must satisfy 1 ≤ j_min < j_max ≤ len"
    );
    let window = &sigma[j_min - 1..j_max];
    if let Some(&worst) = window
        .iter()
        .find(|&&s| s <= NOISE_FLOOR)
    {
        return Err(SpectralError::WindowBelowNoiseFloor {
            j_min,
            j_max,
            sigma: worst,
            floor: NOISE_FLOOR,
        });
    }
    let n = window.len() as f64;
    let xs = || (j_min..=j_max).map(|j| j as f64);
    let ys: Vec<f64> = window.iter().map(|s| s.ln()).collect();
    let mean_x = xs().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let rate = sxy / sxx;
    let intercept = mean_y - rate * mean_x;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + rate * x)).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(DecayFit {
        rate,
        intercept,
        r_squared,
    })
}

/// Partial sums Σ_{j ≤ N} σ_j at the checkpoints N = 10, 20, … and finally
/// N = len when it is not a multiple of 10. Successive differences expose
/// how quickly the trace norm saturates.
pub fn partial_trace_norms(sigma: &[f64]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut acc = 0.0;
    let mut next_checkpoint = 10;
    for (k, s) in sigma.iter().enumerate() {
        acc += s;
        let n = k + 1;
        if n == next_checkpoint {
            out.push((n, acc));
            next_checkpoint += 10;
        } else if n == sigma.len() {
            out.push((n, acc));
        }
    }
    out
}

/// Strictly ascending uniform bin edges: nbins bins spanning [lo, hi].
pub fn uniform_edges(lo: f64, hi: f64, nbins: usize) -> Vec<f64> {
    assert!(nbins >= 1 && lo < hi, "need nbins ≥ 1 and lo < hi");
    (0..=nbins)
        .map(|k| lo + (hi - lo) * k as f64 / nbins as f64)
        .collect()
}

/// Counts eigenvalues per bin. Bins are half-open [e_k, e_{k+1}) except the
/// last, which is closed so the top edge is not lost. Values outside the
/// edge span are ignored.
pub fn counting_histogram(eigenvalues: &[f64], edges: &[f64]) -> Result<Vec<usize>, SpectralError> {
    let ascending = edges.windows(2).all(|p| p[0] < p[1]);
    if edges.len() < 2 || !ascending || edges.iter().any(|e| !e.is_finite()) {
        return Err(SpectralError::InvalidBins);
    }
    let mut counts = vec![0usize; edges.len() - 1];
    let last = counts.len() - 1;
    for &l in eigenvalues {
        if l < edges[0] || l > edges[edges.len() - 1] {
            continue;
        }
        // partition_point gives the first edge strictly greater than l.
        let k = edges.partition_point(|&e| e <= l);
        let bin = if k == 0 {
            0 // l == edges[0] exactly with negative zero subtleties
        } else {
            (k - 1).min(last)
        };
        counts[bin] += 1;
    }
    Ok(counts)
}

/// Grid metadata carried with a spectral report so serialized results state
/// the resolution they were computed at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub n_nodes: usize,
    pub n_e: usize,
    pub n_j: usize,
    pub panels: usize,
    pub order: usize,
    pub grading: f64,
}

impl GridMeta {
    pub fn of(grid: &Grid) -> Self {
        GridMeta {
            n_nodes: grid.len(),
            n_e: grid.n_e,
            n_j: grid.n_j,
            panels: grid.panels,
            order: grid.order,
            grading: grid.grading,
        }
    }
}

/// Eigenvalue counts over explicit bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Complete spectral summary of one discretized configuration: singular
/// values of the transform block, eigenvalues of the full coupling matrix
/// with their ±pairing residual, the fitted log-slope of the singular-value
/// decay, partial sums of Σσ_jᵖ at checkpoints, and a counting histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// σ_j of the block, descending.
    pub singular_values: Vec<f64>,
    /// λ_j of the full matrix, ascending.
    pub eigenvalues: Vec<f64>,
    /// max_i |λ_i + λ_{n−1−i}|.
    pub pairing_residual: f64,
    /// Slope of ln σ_j against j over the usable window.
    pub decay_rate: f64,
    /// Full regression diagnostics behind `decay_rate`.
    pub decay: DecayFit,
    /// p ↦ checkpointed partial sums of Σ_j σ_jᵖ.
    pub partial_p_sums: BTreeMap<u32, Vec<(usize, f64)>>,
    pub histogram: Histogram,
    pub grid: GridMeta,
}

/// Assembles the full spectral summary from the two matrix views of one
/// grid. The decay window runs from σ₁ down to the last value safely above
/// the noise floor; the histogram spans the given symmetric range.
pub fn spectral_report(
    grid: &Grid,
    full: &OperatorMatrix,
    block: &OperatorMatrix,
    histogram_range: (f64, f64),
    histogram_bins: usize,
) -> Result<SpectralReport, SpectralError> {
    let sv = singular_values(block);
    let pairing = eigenvalues_k(full);
    // One decade above the floor keeps every fitted value out of the noise.
    let usable = sv.iter().take_while(|&&s| s > 10.0 * NOISE_FLOOR).count();
    if usable < 3 {
        return Err(SpectralError::WindowBelowNoiseFloor {
            j_min: 1,
            j_max: usable.max(1),
            sigma: sv.get(usable).copied().unwrap_or(0.0),
            floor: NOISE_FLOOR,
        });
    }
    let decay = decay_fit(&sv, 1, usable)?;
    let mut partial_p_sums = BTreeMap::new();
    for p in [1u32, 2u32] {
        let powers: Vec<f64> = sv.iter().map(|s| s.powi(p as i32)).collect();
        partial_p_sums.insert(p, partial_trace_norms(&powers));
    }
    let edges = uniform_edges(histogram_range.0, histogram_range.1, histogram_bins);
    let counts = counting_histogram(&pairing.eigenvalues, &edges)?;
    Ok(SpectralReport {
        singular_values: sv,
        eigenvalues: pairing.eigenvalues,
        pairing_residual: pairing.pairing_residual,
        decay_rate: decay.rate,
        decay,
        partial_p_sums,
        histogram: Histogram { edges, counts },
        grid: GridMeta::of(grid),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn full(entries: DMatrix<f64>) -> OperatorMatrix {
        OperatorMatrix {
            entries,
            kind: MatrixKind::FullK,
        }
    }

    fn block(entries: DMatrix<f64>) -> OperatorMatrix {
        OperatorMatrix {
            entries,
            kind: MatrixKind::BlockA,
        }
    }

    #[test]
    fn eigenvalues_of_coupling_block_pair_up() {
        // [[0, a], [a, 0]] has eigenvalues ±a.
        let m = full(DMatrix::from_row_slice(2, 2, &[0.0, 0.75, 0.75, 0.0]));
        let pairing = eigenvalues_k(&m);
        assert_abs_diff_eq!(pairing.eigenvalues[0], -0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(pairing.eigenvalues[1], 0.75, epsilon = 1e-15);
        assert!(pairing.pairing_residual <= 1e-15);
    }

    #[test]
    fn singular_values_sorted_descending() {
        let b = block(DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 5.0]));
        let sv = singular_values(&b);
        assert_abs_diff_eq!(sv[0], 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sv[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn decay_fit_recovers_exact_exponential() {
        let sigma: Vec<f64> = (1..=30).map(|j| 3.0 * (-0.7 * j as f64).exp()).collect();
        let fit = decay_fit(&sigma, 1, 30).unwrap();
        assert_abs_diff_eq!(fit.rate, -0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3.0_f64.ln(), epsilon = 1e-11);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn decay_fit_rejects_noise_floor_windows() {
        let mut sigma: Vec<f64> = (1..=20).map(|j| (-j as f64).exp()).collect();
        sigma.extend([1e-14, 1e-15]);
        assert!(decay_fit(&sigma, 1, 20).is_ok());
        assert!(matches!(
            decay_fit(&sigma, 1, 22),
            Err(SpectralError::WindowBelowNoiseFloor { .. })
        ));
    }

    #[test]
    fn partial_sums_hit_checkpoints() {
        let sigma = vec![1.0; 25];
        let sums = partial_trace_norms(&sigma);
        assert_eq!(sums.len(), 3);
        assert_eq!(sums[0], (10, 10.0));
        assert_eq!(sums[1], (20, 20.0));
        assert_eq!(sums[2].0, 25);
        assert_abs_diff_eq!(sums[2].1, 25.0, epsilon = 1e-14);
    }

    #[test]
    fn histogram_counts_with_half_open_bins() {
        let eigs = [-0.5, 0.0, 0.3, 1.0, 2.0];
        let counts = counting_histogram(&eigs, &[-1.0, 0.0, 1.0]).unwrap();
        // [−1, 0) holds −0.5; [0, 1] holds 0, 0.3 and the closing edge 1.0;
        // 2.0 is outside and ignored.
        assert_eq!(counts, vec![1, 3]);
        let edges = uniform_edges(-0.9, 0.9, 6);
        assert_eq!(edges.len(), 7);
        assert_abs_diff_eq!(edges[0], -0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(edges[3], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(edges[6], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn histogram_rejects_bad_edges() {
        assert!(matches!(
            counting_histogram(&[0.0], &[1.0]),
            Err(SpectralError::InvalidBins)
        ));
        assert!(matches!(
            counting_histogram(&[0.0], &[0.0, 0.0, 1.0]),
            Err(SpectralError::InvalidBins)
        ));
        assert!(matches!(
            counting_histogram(&[0.0], &[0.0, f64::NAN]),
            Err(SpectralError::InvalidBins)
        ));
    }

    #[test]
    fn report_builder_summarizes_disjoint_configuration() {
        use crate::discretize::{assemble_block, assemble_full, build_grid_with_order};
        use crate::geometry::{validate_configuration, Interval};

        let cfg = validate_configuration(
            &[Interval::new(0.0, 1.0).unwrap()],
            &[Interval::new(2.0, 3.0).unwrap()],
        )
        .unwrap();
        let grid = build_grid_with_order(&cfg, 6, 0.5, 8).unwrap();
        let full_m = assemble_full(&grid);
        let block_m = assemble_block(&grid);
        let report = spectral_report(&grid, &full_m, &block_m, (-0.9, 0.9), 9).unwrap();

        // Disjoint intervals give a discrete, exponentially decaying spectrum
        // inside (−1, 1); eigenvalues pair as ±σ.
        assert!(report.pairing_residual <= 1e-8);
        assert!(report.decay_rate < 0.0);
        assert!(report.decay.r_squared > 0.99);
        assert!(report
            .eigenvalues
            .iter()
            .all(|l| l.abs() <= 1.0 + 1e-3));
        assert!(report.singular_values.windows(2).all(|w| w[0] >= w[1]));

        // Both trace-norm exponents are tabulated and the partial sums of
        // each increase monotonically.
        for p in [1u32, 2u32] {
            let sums = &report.partial_p_sums[&p];
            assert!(!sums.is_empty());
            assert!(sums.windows(2).all(|w| w[1].1 >= w[0].1));
        }

        assert_eq!(report.histogram.counts.len(), 9);
        assert_eq!(report.histogram.edges.len(), 10);
        let counted: usize = report.histogram.counts.iter().sum();
        let in_range = report
            .eigenvalues
            .iter()
            .filter(|l| (-0.9..=0.9).contains(*l))
            .count();
        assert_eq!(counted, in_range);

        assert_eq!(report.grid.n_nodes, grid.len());
        assert_eq!(report.grid.panels, 6);
        assert_eq!(report.grid.order, 8);
    }
}
