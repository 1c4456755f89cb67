//! Acceptance gate: one end-to-end check per shipped guarantee, each printed
//! as a single `ACCEPTANCE <n> <name>: PASS/FAIL` line with its key measured
//! numbers and runtime. Every check is self-contained (its own grids, RNG,
//! and context), carries a wall-clock budget measured on a single core, and
//! the gate fails if any line fails. The lines are written straight to the
//! process stdout so they stay visible in captured test logs.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use finite_hilbert::discretize::{
    apply_a_function, assemble_block, assemble_full, build_grid, build_grid_with_order,
    contour_factorize, gauss_legendre, EllipseContour,
};
use finite_hilbert::exact_diag::{
    apply_a_diag, bezout_matrix, m_field, DoublePointSystem, FftWindow,
};
use finite_hilbert::geometry::{
    mobius_conjugate_function, validate_configuration, Configuration, Interval, Mobius, SetLabel,
};
use finite_hilbert::rhp::{
    frames, lambda_of_rho, rho_of_lambda, KernelRoute, RhpContext,
};
use finite_hilbert::spectral::{
    counting_histogram, decay_fit, eigenvalues_k, singular_values, uniform_edges,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Writes a line to the real stdout, bypassing the test harness capture so
/// the gate lines appear in plain `cargo test` logs.
fn emit(line: &str) {
    match std::fs::File::options().write(true).open("/dev/stdout") {
        Ok(mut f) => {
            let _ = writeln!(f, "{line}");
        }
        Err(_) => println!("{line}"),
    }
}

struct Outcome {
    number: usize,
    name: &'static str,
    pass: bool,
}

/// Runs one numbered check under a wall-clock budget, catching panics so the
/// remaining checks still execute, and emits its summary line.
fn run_criterion(
    number: usize,
    name: &'static str,
    budget_secs: f64,
    check: impl FnOnce() -> Result<String, String>,
) -> Outcome {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check));
    let elapsed = start.elapsed().as_secs_f64();
    let (mut pass, detail) = match result {
        Ok(Ok(detail)) => (true, detail),
        Ok(Err(reason)) => (false, reason),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            (false, format!("panicked: {msg}"))
        }
    };
    let mut budget_note = String::new();
    if elapsed > budget_secs {
        pass = false;
        budget_note = format!(", over budget {budget_secs}s");
    }
    emit(&format!(
        "ACCEPTANCE {number} {name}: {} ({detail}; {elapsed:.1}s{budget_note})",
        if pass { "PASS" } else { "FAIL" }
    ));
    Outcome { number, name, pass }
}

fn interval(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).expect("test intervals are ordered")
}

fn configuration(j: &[(f64, f64)], e: &[(f64, f64)]) -> Configuration {
    let jv: Vec<Interval> = j.iter().map(|&(a, b)| interval(a, b)).collect();
    let ev: Vec<Interval> = e.iter().map(|&(a, b)| interval(a, b)).collect();
    validate_configuration(&jv, &ev).expect("test configurations are valid")
}

/// The five reference configurations: disjoint, touching at one point,
/// touching at two points, a mixed four-part chain, and a wide one-point
/// touching pair.
fn five_configurations() -> Vec<(&'static str, Configuration)> {
    vec![
        ("disjoint", configuration(&[(0.0, 1.0)], &[(2.0, 3.0)])),
        ("touch-1", configuration(&[(-1.0, 0.0)], &[(0.0, 1.0)])),
        (
            "touch-2",
            configuration(&[(0.0, 1.0)], &[(-1.0, 0.0), (1.0, 2.0)]),
        ),
        (
            "mixed",
            configuration(&[(0.0, 1.0), (3.0, 4.0)], &[(1.0, 2.0), (5.0, 6.0)]),
        ),
        ("touch-1-wide", configuration(&[(-2.0, -1.0)], &[(-1.0, 3.0)])),
    ]
}

fn norm_excess(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .fold(0.0_f64, |worst, &l| worst.max(l.abs() - 1.0))
}

fn relative_frobenius(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            num += (a[(i, j)] - b[(i, j)]).norm_sqr();
            den += b[(i, j)].norm_sqr();
        }
    }
    (num / den).sqrt()
}

// ---------------------------------------------------------------------------
// Criterion bodies.
// ---------------------------------------------------------------------------

/// 1 — every discrete eigenvalue lies in [−1 − 1e−3, 1 + 1e−3] on all five
/// configurations at 16 panels, and the excess does not grow at 24 panels.
fn criterion_norm_bound() -> Result<String, String> {
    let mut worst_16 = 0.0_f64;
    let mut worst_24 = 0.0_f64;
    for (name, cfg) in five_configurations() {
        let mut excess = [0.0_f64; 2];
        for (slot, panels) in [16_usize, 24].into_iter().enumerate() {
            let grid = build_grid(&cfg, panels, 0.5).map_err(|e| e.to_string())?;
            let eig = eigenvalues_k(&assemble_full(&grid));
            excess[slot] = norm_excess(&eig.eigenvalues);
        }
        if excess[0] > 1e-3 {
            return Err(format!("{name}: excess {:.3e} > 1e-3 at 16 panels", excess[0]));
        }
        if excess[1] > excess[0] + 1e-12 {
            return Err(format!(
                "{name}: excess grew under refinement ({:.3e} -> {:.3e})",
                excess[0], excess[1]
            ));
        }
        worst_16 = worst_16.max(excess[0]);
        worst_24 = worst_24.max(excess[1]);
    }
    Ok(format!(
        "max excess {worst_16:.1e} at 16 panels, {worst_24:.1e} at 24"
    ))
}

/// 2 — the spectrum pairs as ±λ: max_i |λ_i + λ_{n−1−i}| ≤ 1e−8 on every
/// configuration.
fn criterion_pairing() -> Result<String, String> {
    let mut worst = 0.0_f64;
    for (name, cfg) in five_configurations() {
        let grid = build_grid(&cfg, 16, 0.5).map_err(|e| e.to_string())?;
        let eig = eigenvalues_k(&assemble_full(&grid));
        if eig.pairing_residual > 1e-8 {
            return Err(format!(
                "{name}: pairing residual {:.3e} > 1e-8",
                eig.pairing_residual
            ));
        }
        worst = worst.max(eig.pairing_residual);
    }
    Ok(format!("max pairing residual {worst:.1e}"))
}

/// 3 — disjoint J = [0,1], E = [2,3]: the singular values decay
/// exponentially (log-linear fit r² > 0.99), the trace-norm increments fall
/// below 1e−8 within 40 terms, and the operator factors through a contour
/// separating the two sets to 1e−6.
fn criterion_disjoint_decay() -> Result<String, String> {
    let cfg = configuration(&[(0.0, 1.0)], &[(2.0, 3.0)]);
    let grid = build_grid(&cfg, 16, 0.5).map_err(|e| e.to_string())?;
    let sigma = singular_values(&assemble_block(&grid));

    let fit_len = sigma.iter().take_while(|&&s| s > 1e-12).count();
    if fit_len < 5 {
        return Err(format!("only {fit_len} singular values above 1e-12"));
    }
    let fit = decay_fit(&sigma, 1, fit_len).map_err(|e| e.to_string())?;
    if !(fit.r_squared > 0.99 && fit.rate < 0.0) {
        return Err(format!(
            "decay fit r2={:.4} rate={:.3} fails exponential profile",
            fit.r_squared, fit.rate
        ));
    }

    // The 40th partial-sum increment of Σσ_j is σ_40 itself.
    if sigma[39] > 1e-8 {
        return Err(format!("sigma_40 = {:.3e} > 1e-8", sigma[39]));
    }

    let contour = EllipseContour {
        center: 0.5,
        semi_x: 1.2,
        semi_y: 0.5,
        points: 256,
    };
    let fac = contour_factorize(&grid, &contour).map_err(|e| e.to_string())?;
    if fac.residual > 1e-6 {
        return Err(format!("contour residual {:.3e} > 1e-6", fac.residual));
    }
    Ok(format!(
        "r2={:.4}, sigma40={:.1e}, contour={:.1e}",
        fit.r_squared, sigma[39], fac.residual
    ))
}

/// 4 — the Bézout matrix reconstructs its defining divided difference at 100
/// random point pairs per system (1e−10); the chart-mixing field has
/// orthonormal rows on 1000 parameters per side for one, two, and three
/// double points (1e−10); frozen spot values for the four-point chain and a
/// symmetric interval.
fn criterion_bezout_field() -> Result<String, String> {
    let systems: Vec<Vec<f64>> = vec![
        vec![-1.3, 0.7],
        vec![0.0, 1.0, 2.0, 3.0],
        vec![-2.0, -1.0, -0.2, 0.8, 1.7, 3.1],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0_17);
    let mut worst_recon = 0.0_f64;
    let mut worst_gram = 0.0_f64;
    for b in &systems {
        let sys = DoublePointSystem::new(b).map_err(|e| e.to_string())?;
        let bez = bezout_matrix(&sys).map_err(|e| e.to_string())?;
        let span = b[0].abs().max(b[b.len() - 1].abs()) + 3.0;

        for _ in 0..100 {
            let z: f64 = rng.gen_range(-span..span);
            let x: f64 = rng.gen_range(-span..span);
            let direct = sys.beta_ev.eval(z) * sys.beta_od.eval(x)
                - sys.beta_od.eval(z) * sys.beta_ev.eval(x);
            let series: f64 = (0..sys.n)
                .map(|j| bez.rho[j] * bez.p_polys[j].eval(z) * bez.p_polys[j].eval(x))
                .sum();
            let rel = ((z - x) * series - direct).abs() / direct.abs().max(1.0);
            if rel > 1e-10 {
                return Err(format!("Bezout reconstruction off by {rel:.3e} (n={})", sys.n));
            }
            worst_recon = worst_recon.max(rel);
        }

        for _ in 0..1000 {
            let t: f64 = rng.gen_range(-3.0..3.0);
            for side in [SetLabel::J, SetLabel::E] {
                let m = m_field(&sys, &bez, side, t).map_err(|e| e.to_string())?;
                let gram = &m * m.transpose();
                for i in 0..sys.n {
                    for j in 0..sys.n {
                        let target = if i == j { 1.0 } else { 0.0 };
                        let dev = (gram[(i, j)] - target).abs();
                        if dev > 1e-10 {
                            return Err(format!(
                                "mixing rows lose orthonormality by {dev:.3e} (n={}, t={t:.3})",
                                sys.n
                            ));
                        }
                        worst_gram = worst_gram.max(dev);
                    }
                }
            }
        }
    }

    // Frozen spots: the four-point chain and a symmetric interval.
    let chain = DoublePointSystem::new(&[0.0, 1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    let bez = bezout_matrix(&chain).map_err(|e| e.to_string())?;
    let expect = [[6.0, -3.0], [-3.0, 2.0]];
    for i in 0..2 {
        for j in 0..2 {
            if (bez.matrix[(i, j)] - expect[i][j]).abs() > 1e-12 {
                return Err(format!("chain Bezout entry ({i},{j}) = {}", bez.matrix[(i, j)]));
            }
        }
    }
    let beta = 1.25;
    let sym = DoublePointSystem::new(&[-beta, beta]).map_err(|e| e.to_string())?;
    let sym_bez = bezout_matrix(&sym).map_err(|e| e.to_string())?;
    if sym.q.coeffs != vec![2.0 * beta] {
        return Err(format!("symmetric interval Q = {:?}", sym.q.coeffs));
    }
    if (sym_bez.rho[0] - 2.0 * beta).abs() > 1e-12 {
        return Err(format!("symmetric interval rho = {:?}", sym_bez.rho));
    }
    Ok(format!(
        "recon max {worst_recon:.1e}, gram max {worst_gram:.1e}, spots exact"
    ))
}

/// 5 — one double point, J = (−1, 1), f = 1 − x²: the sech-convolution
/// diagonalization matches plain quadrature at 20 exterior points to 1e−4
/// relative.
fn criterion_diagonalized_transform() -> Result<String, String> {
    let sys = DoublePointSystem::new(&[-1.0, 1.0]).map_err(|e| e.to_string())?;
    let f = |x: f64| 1.0 - x * x;
    let mut zs = Vec::new();
    for k in 1..=10 {
        let z = 1.0 + 0.15 * k as f64;
        zs.push(z);
        zs.push(-z);
    }
    zs.sort_by(f64::total_cmp);
    let diag = apply_a_diag(&sys, &f, &zs, &FftWindow::default()).map_err(|e| e.to_string())?;

    // Quadrature route over the same J; the far dummy E part never enters
    // the J-only sum.
    let cfg = configuration(&[(-1.0, 1.0)], &[(201.0, 203.0)]);
    let grid = build_grid_with_order(&cfg, 16, 0.5, 8).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for (&z, &d) in zs.iter().zip(&diag) {
        let q = apply_a_function(&grid, &f, z).map_err(|e| e.to_string())?;
        let rel = (d - q).abs() / q.abs().max(1e-12);
        if rel > 1e-4 {
            return Err(format!("z={z:.2}: routes differ by {rel:.3e} > 1e-4"));
        }
        worst = worst.max(rel);
    }
    Ok(format!("max relative deviation {worst:.1e} at 20 points"))
}

/// 6 — the strip chart ρ(λ): round-trip ≤ 1e−12 and |Re ρ| < 1/2 on 1000
/// random off-cut λ, monodromy eigenvalues e^{±2πiρ} to 1e−10, and the
/// frozen spots ρ(2) = −1/6, λ(∓1/2) = ±1.
fn criterion_spectral_chart() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4A7);
    let mut accepted = 0_usize;
    let mut worst_round = 0.0_f64;
    let mut worst_mono = 0.0_f64;
    while accepted < 1000 {
        let re: f64 = rng.gen_range(-3.0..3.0);
        let im: f64 = rng.gen_range(-3.0..3.0);
        if im.abs() < 0.1 && re.abs() < 1.3 {
            continue; // too close to the cut [−1, 1]
        }
        accepted += 1;
        let lambda = Complex64::new(re, im);
        let chart = rho_of_lambda(lambda).map_err(|e| e.to_string())?;
        if !(chart.branch_ok && chart.rho.re.abs() < 0.5) {
            return Err(format!("rho {} escaped the strip at λ {lambda}", chart.rho));
        }
        let back = lambda_of_rho(chart.rho).map_err(|e| e.to_string())?;
        let err = (back - lambda).norm();
        if err > 1e-12 {
            return Err(format!("round-trip error {err:.3e} at λ {lambda}"));
        }
        worst_round = worst_round.max(err);

        let m0 = frames(chart.rho).map_err(|e| e.to_string())?.m0;
        let tr = m0[(0, 0)] + m0[(1, 1)];
        let det = m0[(0, 0)] * m0[(1, 1)] - m0[(0, 1)] * m0[(1, 0)];
        let disc = (tr * tr - det * 4.0).sqrt();
        let mu = [(tr + disc) * 0.5, (tr - disc) * 0.5];
        let target = (Complex64::i() * 2.0 * PI * chart.rho).exp();
        let paired = ((mu[0] - target).norm().max((mu[1] - target.inv()).norm()))
            .min((mu[0] - target.inv()).norm().max((mu[1] - target).norm()));
        if paired > 1e-10 {
            return Err(format!("monodromy eigenvalues off by {paired:.3e} at ρ {}", chart.rho));
        }
        worst_mono = worst_mono.max(paired);
    }

    let spot = rho_of_lambda(Complex64::new(2.0, 0.0)).map_err(|e| e.to_string())?;
    if (spot.rho - Complex64::new(-1.0 / 6.0, 0.0)).norm() > 1e-12 {
        return Err(format!("rho(2) = {}", spot.rho));
    }
    let plus = lambda_of_rho(Complex64::new(-0.5, 0.0)).map_err(|e| e.to_string())?;
    let minus = lambda_of_rho(Complex64::new(0.5, 0.0)).map_err(|e| e.to_string())?;
    if (plus - Complex64::new(1.0, 0.0)).norm() > 1e-12
        || (minus - Complex64::new(-1.0, 0.0)).norm() > 1e-12
    {
        return Err(format!("strip-wall spots λ(−1/2)={plus}, λ(1/2)={minus}"));
    }
    Ok(format!(
        "round-trip max {worst_round:.1e}, monodromy max {worst_mono:.1e}, spots exact"
    ))
}

/// 7 — the Riemann–Hilbert certificate at λ = 2i on the disjoint pair:
/// unit determinant (1e−6 at 20 points), jump residuals (1e−4, 10 probes per
/// part), both discrete symmetries (1e−8), the resolvent identity (1e−8),
/// and the Γ-boundary kernel against the matrix resolvent (1e−4).
fn criterion_rhp_certificate() -> Result<String, String> {
    let cfg = configuration(&[(0.0, 1.0)], &[(2.0, 3.0)]);
    let ctx = RhpContext::new(cfg, 16, 0.5).map_err(|e| e.to_string())?;
    let lambda = Complex64::new(0.0, 2.0);
    let fs = ctx.solve_f(lambda).map_err(|e| e.to_string())?;

    let field = ctx
        .gamma_field(&fs, &ctx.probe_points(20))
        .map_err(|e| e.to_string())?;
    if field.det_deviation > 1e-6 {
        return Err(format!("det deviation {:.3e} > 1e-6", field.det_deviation));
    }

    let jump = ctx.check_jump(&fs, 10).map_err(|e| e.to_string())?;
    if jump.max_residual > 1e-4 {
        return Err(format!("jump residual {:.3e} > 1e-4", jump.max_residual));
    }

    let sym_zs = ctx.probe_points(6);
    let conj = ctx
        .symmetry_conjugation(lambda, &sym_zs)
        .map_err(|e| e.to_string())?;
    let flip = ctx
        .symmetry_sign_flip(lambda, &sym_zs)
        .map_err(|e| e.to_string())?;
    if conj > 1e-8 || flip > 1e-8 {
        return Err(format!("symmetry deviations {conj:.3e}/{flip:.3e} > 1e-8"));
    }

    let density = ctx
        .resolvent_matrix(&fs, KernelRoute::SolvedDensity)
        .map_err(|e| e.to_string())?;
    let identity = ctx.resolvent_identity_residual(&fs, &density);
    if identity > 1e-8 {
        return Err(format!("resolvent identity residual {identity:.3e} > 1e-8"));
    }

    let gamma_route = ctx
        .resolvent_matrix(&fs, KernelRoute::GammaBoundary)
        .map_err(|e| e.to_string())?;
    let direct = ctx.direct_resolvent(lambda).map_err(|e| e.to_string())?;
    let routes = relative_frobenius(&gamma_route, &direct);
    if routes > 1e-4 {
        return Err(format!("kernel routes differ by {routes:.3e} > 1e-4"));
    }
    Ok(format!(
        "det={:.1e}, jump={:.1e}, sym={:.1e}, identity={identity:.1e}, routes={routes:.1e}",
        field.det_deviation,
        jump.max_residual,
        conj.max(flip)
    ))
}

/// 8 — contour-averaged residues at the two largest ±eigenvalues of the
/// disjoint pair are rank one: stacked σ₂/σ₁ ≤ 1e−3.
fn criterion_residue_rank() -> Result<String, String> {
    let cfg = configuration(&[(0.0, 1.0)], &[(2.0, 3.0)]);
    let ctx = RhpContext::new(cfg, 16, 0.5).map_err(|e| e.to_string())?;
    let top = ctx
        .eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &l| m.max(l));
    let mut worst = 0.0_f64;
    let mut norms = Vec::new();
    for lambda0 in [top, -top] {
        let probe = ctx
            .residue_rank_probe(lambda0, None)
            .map_err(|e| e.to_string())?;
        if probe.sigma_ratio > 1e-3 {
            return Err(format!(
                "sigma ratio {:.3e} > 1e-3 at λ0 {lambda0:.4}",
                probe.sigma_ratio
            ));
        }
        worst = worst.max(probe.sigma_ratio);
        norms.push(probe.residue_norm);
    }
    Ok(format!(
        "max sigma ratio {worst:.1e} at ±{top:.4} (residues {:.2e}/{:.2e})",
        norms[0], norms[1]
    ))
}

/// Principal-value Hilbert transform of the conjugated function 𝒰f at x,
/// through the substitution t = tan θ with the pole subtracted:
///
///   ℋg(x) = (1/π)(∫ H(θ) dθ − g(x)·ln((π/2 − θ₀)/(π/2 + θ₀))),
///   H(θ)  = g(tan θ)(1 + tan²θ)/(x − tan θ) + g(x)/(θ − θ₀),  θ₀ = atan x,
///
/// where H is bounded on (−π/2, π/2) and analytic up to the complex poles of
/// g, which stay at least ~0.03 (about 0.8 panel widths) off the contour for
/// the coefficient ranges sampled below; composite Gauss–Legendre of order
/// 12 on 60 panels per side then resolves the integral to ~1e−13.
fn oracle_hilbert_of_conjugated(m: &Mobius, x: f64) -> Result<f64, String> {
    let f = |u: f64| 1.0 / (1.0 + u * u);
    let (gl_nodes, gl_weights) = gauss_legendre(12);
    let theta0 = x.atan();

    let mut thetas = Vec::new();
    let mut weights = Vec::new();
    for (lo, hi) in [(-FRAC_PI_2, theta0), (theta0, FRAC_PI_2)] {
        let panels = 60_usize;
        let width = (hi - lo) / panels as f64;
        for p in 0..panels {
            let a = lo + width * p as f64;
            for (node, weight) in gl_nodes.iter().zip(&gl_weights) {
                thetas.push(a + 0.5 * width * (node + 1.0));
                weights.push(0.5 * width * weight);
            }
        }
    }
    let ts: Vec<f64> = thetas.iter().map(|t| t.tan()).collect();
    let g_vals = mobius_conjugate_function(m, &f, &ts).map_err(|e| e.to_string())?;
    let gx = mobius_conjugate_function(m, &f, &[x]).map_err(|e| e.to_string())?[0];

    let mut integral = 0.0;
    for i in 0..thetas.len() {
        let t = ts[i];
        let h = g_vals[i] * (1.0 + t * t) / (x - t) + gx / (thetas[i] - theta0);
        integral += weights[i] * h;
    }
    let log_term = ((FRAC_PI_2 - theta0) / (FRAC_PI_2 + theta0)).ln();
    Ok((integral - gx * log_term) / PI)
}

/// 9 — the unitary Möbius conjugation commutes with the Hilbert transform:
/// ‖ℋ(𝒰f) − 𝒰(ℋf)‖/‖f‖ ≤ 1e−6 in RMS over 25 samples for three random
/// orientation-preserving maps, with ℋ(𝒰f) evaluated by the quadrature
/// oracle and 𝒰(ℋf) in closed form from ℋ[1/(1+t²)] = x/(1+x²).
fn criterion_mobius_commutation() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x90B1);
    let xs: Vec<f64> = (0..25).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let f_rms = (xs
        .iter()
        .map(|&x| (1.0 / (1.0 + x * x)).powi(2))
        .sum::<f64>()
        / xs.len() as f64)
        .sqrt();

    // The oracle itself must reproduce the known transform under the
    // identity map before it may certify anything.
    let identity = Mobius::new(1.0, 0.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    for &x in &xs {
        let oracle = oracle_hilbert_of_conjugated(&identity, x)?;
        let exact = x / (1.0 + x * x);
        if (oracle - exact).abs() > 1e-10 {
            return Err(format!(
                "oracle self-check off by {:.3e} at x={x:.3}",
                (oracle - exact).abs()
            ));
        }
    }

    let mut worst = 0.0_f64;
    for map_index in 0..3 {
        let map = loop {
            let a: f64 = rng.gen_range(-1.5..1.5);
            let b: f64 = rng.gen_range(-1.5..1.5);
            let c: f64 = rng.gen_range(-1.5..1.5);
            let d: f64 = rng.gen_range(-1.5..1.5);
            if a * d - b * c > 0.3 {
                break Mobius::new(a, b, c, d).map_err(|e| e.to_string())?;
            }
        };
        let mut err_sq = 0.0;
        for &x in &xs {
            let lhs = oracle_hilbert_of_conjugated(&map, x)?;
            let num = map.a * x + map.b;
            let den = map.c * x + map.d;
            let rhs = num / (den * den + num * num);
            err_sq += (lhs - rhs).powi(2);
        }
        let rel = (err_sq / xs.len() as f64).sqrt() / f_rms;
        if rel > 1e-6 {
            return Err(format!("map {map_index}: commutator RMS {rel:.3e} > 1e-6"));
        }
        worst = worst.max(rel);
    }
    Ok(format!("max commutator RMS {worst:.1e} over 3 maps"))
}

/// 10 — touching J = [−1, 0], E = [0, 1]: the eigenvalue count over
/// (−0.9, 0.9) outside the central bin grows with the node count (ratio
/// within 15% of 2 when panels double 16 → 32, no bin shrinking), while the
/// disjoint pair on the same grids does not scale.
fn criterion_touching_histogram() -> Result<String, String> {
    let edges = uniform_edges(-0.9, 0.9, 9);
    let central = 4_usize;
    let count = |cfg: &Configuration, panels: usize| -> Result<(usize, Vec<usize>), String> {
        let grid = build_grid(cfg, panels, 0.5).map_err(|e| e.to_string())?;
        let eig = eigenvalues_k(&assemble_full(&grid));
        let counts = counting_histogram(&eig.eigenvalues, &edges).map_err(|e| e.to_string())?;
        Ok((grid.nodes.len(), counts))
    };

    let touching = configuration(&[(-1.0, 0.0)], &[(0.0, 1.0)]);
    let (n16, c16) = count(&touching, 16)?;
    let (n32, c32) = count(&touching, 32)?;
    let node_ratio = n32 as f64 / n16 as f64;
    let outer = |c: &[usize]| -> usize {
        c.iter()
            .enumerate()
            .filter(|(i, _)| *i != central)
            .map(|(_, &v)| v)
            .sum()
    };
    let (s16, s32) = (outer(&c16), outer(&c32));
    if s16 < 5 {
        return Err(format!("only {s16} off-central eigenvalues at 16 panels"));
    }
    for (i, (&a, &b)) in c16.iter().zip(&c32).enumerate() {
        if i != central && b < a {
            return Err(format!("bin {i} shrank under refinement ({a} -> {b})"));
        }
    }
    let growth = s32 as f64 / s16 as f64;
    if (growth / node_ratio - 1.0).abs() > 0.15 {
        return Err(format!(
            "off-central count ratio {growth:.2} vs node ratio {node_ratio:.2} beyond 15%"
        ));
    }

    let disjoint = configuration(&[(0.0, 1.0)], &[(2.0, 3.0)]);
    let (_, d16) = count(&disjoint, 16)?;
    let (_, d32) = count(&disjoint, 32)?;
    let (t16, t32) = (outer(&d16), outer(&d32));
    if t32 > t16 + 1 {
        return Err(format!(
            "disjoint off-central count scaled ({t16} -> {t32}); it must not"
        ));
    }
    Ok(format!(
        "touching {s16}->{s32} (ratio {growth:.2}, nodes {node_ratio:.2}), disjoint {t16}->{t32}"
    ))
}

// ---------------------------------------------------------------------------
// The gate.
// ---------------------------------------------------------------------------

#[test]
fn acceptance_gate() {
    let outcomes = vec![
        run_criterion(1, "norm-bound", 60.0, criterion_norm_bound),
        run_criterion(2, "eigenvalue-pairing", 10.0, criterion_pairing),
        run_criterion(3, "disjoint-decay", 30.0, criterion_disjoint_decay),
        run_criterion(4, "bezout-field", 20.0, criterion_bezout_field),
        run_criterion(5, "diagonalized-transform", 20.0, criterion_diagonalized_transform),
        run_criterion(6, "spectral-chart", 5.0, criterion_spectral_chart),
        run_criterion(7, "rhp-certificate", 60.0, criterion_rhp_certificate),
        run_criterion(8, "residue-rank", 60.0, criterion_residue_rank),
        run_criterion(9, "mobius-commutation", 10.0, criterion_mobius_commutation),
        run_criterion(10, "touching-histogram", 90.0, criterion_touching_histogram),
    ];
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("{} {}", o.number, o.name))
        .collect();
    assert!(failed.is_empty(), "failing acceptance criteria: {failed:?}");
}
