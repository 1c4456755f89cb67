//! Spectral pipeline integration: eigenvalue/singular-value consistency,
//! decay-rate stability under refinement, geometric trace-norm increments,
//! and the histogram signature separating discrete from continuous spectra.

use finite_hilbert::discretize::{assemble_block, assemble_full, build_grid};
use finite_hilbert::geometry::{validate_configuration, Configuration, Interval};
use finite_hilbert::spectral::{
    counting_histogram, decay_fit, eigenvalues_k, partial_trace_norms, singular_values,
    spectral_report, uniform_edges,
};

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

fn two_part_disjoint() -> Configuration {
    // A two-part J facing a single E across genuine gaps.
    validate_configuration(&[iv(0.0, 1.0), iv(4.0, 5.0)], &[iv(2.0, 3.0)]).unwrap()
}

#[test]
fn eigenvalues_realize_plus_minus_singular_values() {
    let grid = build_grid(&two_part_disjoint(), 6, 0.5).unwrap();
    let sv = singular_values(&assemble_block(&grid));
    let pairing = eigenvalues_k(&assemble_full(&grid));
    assert!(pairing.pairing_residual <= 1e-8);
    // The positive spectrum, descending, is exactly the singular value list.
    let mut positive: Vec<f64> = pairing.eigenvalues.clone();
    positive.sort_by(|a, b| b.total_cmp(a));
    for (s, l) in sv.iter().zip(&positive).take(20) {
        assert!(
            (s - l).abs() <= 1e-10,
            "sigma {s} vs positive eigenvalue {l}"
        );
    }
}

#[test]
fn decay_rate_is_stable_under_refinement() {
    // The exponential decay rate of the singular values is a property of the
    // configuration; two refinement levels must agree within ±10%.
    let cfg = two_part_disjoint();
    let mut rates = Vec::new();
    for panels in [6, 10] {
        let grid = build_grid(&cfg, panels, 0.5).unwrap();
        let sv = singular_values(&assemble_block(&grid));
        let usable = sv.iter().take_while(|&&s| s > 1e-12).count();
        let fit = decay_fit(&sv, 1, usable).unwrap();
        assert!(fit.rate < 0.0);
        assert!(fit.r_squared > 0.99);
        rates.push(fit.rate);
    }
    let rel = (rates[1] - rates[0]).abs() / rates[0].abs();
    assert!(
        rel <= 0.10,
        "decay rate drifted {rel:.3} across refinement: {rates:?}"
    );
}

#[test]
fn trace_norm_increments_decay_geometrically() {
    let grid = build_grid(&two_part_disjoint(), 8, 0.5).unwrap();
    let sv = singular_values(&assemble_block(&grid));
    let sums = partial_trace_norms(&sv);
    assert!(sums.windows(2).all(|w| w[1].1 >= w[0].1));
    // Increments between successive checkpoints shrink by a decade or more
    // once clear of the head of the spectrum.
    let increments: Vec<f64> = sums.windows(2).map(|w| w[1].1 - w[0].1).collect();
    for pair in increments.windows(2).take(3) {
        assert!(
            pair[1] <= 0.5 * pair[0] || pair[1] <= 1e-12,
            "increment did not shrink: {pair:?}"
        );
    }
}

#[test]
fn touching_configuration_fills_histogram_bins_with_refinement() {
    // One double point ⟹ eigenvalues fill (−1, 1): interior bin counts grow
    // with the grid. A disjoint configuration's interior counts stay put.
    let touching = validate_configuration(&[iv(-1.0, 0.0)], &[iv(0.0, 1.0)]).unwrap();
    let disjoint = validate_configuration(&[iv(0.0, 1.0)], &[iv(2.0, 3.0)]).unwrap();
    let edges = uniform_edges(-0.9, 0.9, 9);
    let outer_count = |cfg: &Configuration, panels: usize| -> usize {
        let grid = build_grid(cfg, panels, 0.5).unwrap();
        let pairing = eigenvalues_k(&assemble_full(&grid));
        let counts = counting_histogram(&pairing.eigenvalues, &edges).unwrap();
        // Drop the central bin: spectra of both kinds accumulate at 0.
        counts
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != 4)
            .map(|(_, c)| c)
            .sum()
    };
    let touch_coarse = outer_count(&touching, 6);
    let touch_fine = outer_count(&touching, 12);
    assert!(
        touch_fine as f64 >= 1.6 * touch_coarse as f64,
        "touching counts failed to scale: {touch_coarse} → {touch_fine}"
    );
    let disj_coarse = outer_count(&disjoint, 6);
    let disj_fine = outer_count(&disjoint, 12);
    assert!(
        disj_fine <= disj_coarse + 1,
        "disjoint counts should saturate: {disj_coarse} → {disj_fine}"
    );
}

#[test]
fn report_rejects_windows_below_the_noise_floor() {
    // A grid so coarse that almost no singular value clears the noise floor
    // cannot support a decay fit; the report must refuse rather than fit
    // rounding noise. Widely separated sets make every σ tiny.
    let cfg = validate_configuration(&[iv(0.0, 0.2)], &[iv(60.0, 60.2)]).unwrap();
    let grid = build_grid(&cfg, 2, 0.5).unwrap();
    let full = assemble_full(&grid);
    let block = assemble_block(&grid);
    let result = spectral_report(&grid, &full, &block, (-0.9, 0.9), 9);
    assert!(result.is_err());
}
