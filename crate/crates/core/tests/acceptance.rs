//! Full-system acceptance suite. Each test certifies one gate at its stated
//! tolerance and prints a summary line with the measured numbers; the test
//! harness emits one pass/fail line per criterion.

use std::process::{Command, Output};

use nalgebra::{Matrix2, Matrix4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use qnoise::bloch::{c, density_from_bloch, ModelParams, TwoQubitBloch};
use qnoise::correlations::{
    discord_bell_diagonal, fidelity_complement_curve, negativity, optimize_gamma_rtn,
};
use qnoise::montecarlo::evolve_single_mc;
use qnoise::noise::{ou_values_at, trajectory_rng, EnsembleConfig, NoiseKind, TimeGrid};
use qnoise::nonmarkov::{blp_measure, default_measure_grid, rhp_measure, BlpSearchConfig};
use qnoise::numeric::{cubic_residual_relative, dominant_angular_frequency, linear_fit};
use qnoise::transfer::{
    apply_transfer_single, apply_transfer_two, eigen_cubics, generator_spectrum,
    limiting_decay_time, real_region_boundaries, transfer_single_series, transfer_two_ce_series,
    transfer_two_ie_series, NoiseRegime,
};
use qnoise::C64;

#[test]
fn criterion_01_sampled_and_exact_single_qubit_dynamics_agree() {
    let grid = TimeGrid::new(0.05, 100).unwrap();
    let n0 = Vector3::new(1.0, 0.0, 0.0);
    let rho0 = density_from_bloch(&n0);
    let combos: Vec<(f64, f64)> = [0.1, 0.5, 1.0, 10.0]
        .iter()
        .flat_map(|&g| [0.1, 1.0].map(|w| (g, w)))
        .collect();
    let mut worst_sigma = 0.0f64;
    for (i, &(gamma, omega)) in combos.iter().enumerate() {
        let p = ModelParams::new(omega, gamma);
        let ens = EnsembleConfig::new(100_000, 0xBA5E + i as u64);
        let mc = evolve_single_mc(&p, NoiseKind::Rtn, &rho0, &grid, &ens).unwrap();
        let exact = transfer_single_series(&p, &grid).unwrap();
        for (k, tm) in exact.iter().enumerate() {
            let rho_exact = density_from_bloch(&apply_transfer_single(tm, &n0));
            let dev = (mc.states[k] - rho_exact)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            let tol = (3.0 * mc.stderr[k]).max(5e-3);
            assert!(
                dev <= tol,
                "gamma {gamma} omega {omega} t {}: deviation {dev:.2e} > {tol:.2e}",
                tm.t
            );
            if mc.stderr[k] > 0.0 {
                worst_sigma = worst_sigma.max(dev / mc.stderr[k]);
            }
        }
    }
    println!(
        "criterion 1 PASS: 8 parameter combos x 100 steps, worst deviation {worst_sigma:.2} sigma"
    );
}

#[test]
fn criterion_02_relaxation_cubics_have_tiny_residuals_and_map_onto_each_other() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97);
    let span = (10.0f64 / 0.01).ln();
    let mut worst_res = 0.0f64;
    let mut worst_map = 0.0f64;
    for _ in 0..10_000 {
        let gamma = 0.01 * (rng.gen_range(0.0..span)).exp();
        let omega = 0.01 * (rng.gen_range(0.0..span)).exp();
        let w2 = omega * omega;
        let mu_coef = (2.0 * gamma, 4.0 * (1.0 + w2), 8.0 * w2 * gamma);
        let eta_coef = (
            4.0 * gamma,
            4.0 * (1.0 + gamma * gamma + w2),
            8.0 * gamma,
        );
        let e = eigen_cubics(&ModelParams::new(omega, gamma));
        for root in e.mu {
            let r = cubic_residual_relative(mu_coef.0, mu_coef.1, mu_coef.2, root);
            worst_res = worst_res.max(r);
            assert!(r <= 1e-10, "mu residual {r:.2e} at gamma {gamma} omega {omega}");
            // the substitution eta = -mu - 2 gamma carries one cubic into the other
            let mapped = -root - c(2.0 * gamma, 0.0);
            let rm = cubic_residual_relative(eta_coef.0, eta_coef.1, eta_coef.2, mapped);
            worst_map = worst_map.max(rm);
            assert!(rm <= 1e-9, "map residual {rm:.2e} at gamma {gamma} omega {omega}");
        }
        for root in e.eta {
            let r = cubic_residual_relative(eta_coef.0, eta_coef.1, eta_coef.2, root);
            worst_res = worst_res.max(r);
            assert!(r <= 1e-10, "eta residual {r:.2e} at gamma {gamma} omega {omega}");
        }
    }
    println!(
        "criterion 2 PASS: 10000 samples, worst residual {worst_res:.2e}, worst mapped residual {worst_map:.2e}"
    );
}

#[test]
fn criterion_03_all_real_spectral_region_has_the_predicted_shape() {
    let (lo, _) = real_region_boundaries(1e-3).unwrap();
    assert!((lo - 2.0).abs() <= 0.01, "lower edge {lo} at omega 1e-3");

    let w_star = 0.5 / 2.0f64.sqrt();
    let (dlo, dhi) = real_region_boundaries(w_star).unwrap();
    assert!(
        (dhi - dlo).abs() <= 1e-5 * dhi,
        "edges {dlo} and {dhi} should coincide at the critical splitting"
    );
    assert!(real_region_boundaries(w_star + 1e-3).is_none());
    assert!(real_region_boundaries(1.0).is_none());

    let (rlo, rhi) = real_region_boundaries(0.1).unwrap();
    let inside = ModelParams::new(0.1, (rlo * rhi).sqrt());
    let max_im_in = generator_spectrum(&inside)
        .iter()
        .map(|z| z.im.abs())
        .fold(0.0, f64::max);
    assert!(max_im_in <= 1e-8, "imaginary part {max_im_in:.2e} inside the region");
    for gamma in [0.8 * rlo, 1.25 * rhi] {
        let max_im = generator_spectrum(&ModelParams::new(0.1, gamma))
            .iter()
            .map(|z| z.im.abs())
            .fold(0.0, f64::max);
        assert!(max_im > 1e-3, "spectrum at gamma {gamma} should oscillate");
    }
    println!(
        "criterion 3 PASS: region at omega 0.1 is ({rlo:.4}, {rhi:.4}), lower edge {lo:.4} at omega 1e-3, degenerate at omega {w_star:.4}"
    );
}

fn norm_decay_rate(p: &ModelParams, dt: f64, n: usize, fit_from: f64) -> f64 {
    let grid = TimeGrid::new(dt, n).unwrap();
    let series = transfer_single_series(p, &grid).unwrap();
    let mut ts = Vec::new();
    let mut lns = Vec::new();
    for tm in &series {
        if tm.t >= fit_from {
            ts.push(tm.t);
            lns.push(tm.entries.norm().ln());
        }
    }
    let (slope, _) = linear_fit(&ts, &lns);
    -slope
}

#[test]
fn criterion_04_limiting_decay_rates_and_the_stationary_werner_line() {
    let fast = ModelParams::new(1.0, 100.0);
    let rate_fast = norm_decay_rate(&fast, 0.5, 1200, 300.0);
    let want_fast = 1.0 / limiting_decay_time(&fast, NoiseRegime::Fast);
    assert!(
        (rate_fast - want_fast).abs() <= 0.1 * want_fast,
        "fast-noise rate {rate_fast:.5} vs {want_fast:.5}"
    );

    let slow = ModelParams::new(2.0, 0.01);
    let rate_slow = norm_decay_rate(&slow, 1.0, 4000, 2500.0);
    let want_slow = 1.0 / limiting_decay_time(&slow, NoiseRegime::Slow);
    assert!(
        (rate_slow - want_slow).abs() <= 0.1 * want_slow,
        "slow-noise rate {rate_slow:.6} vs {want_slow:.6}"
    );

    // the shared-noise generator leaves the whole Werner family fixed
    let p = ModelParams::new(1.0, 0.5);
    let grid = TimeGrid::new(0.25, 200).unwrap();
    let w = TwoQubitBloch::werner(0.7);
    let mut drift = 0.0f64;
    for tm in transfer_two_ce_series(&p, &grid).unwrap() {
        let s = apply_transfer_two(&tm, &w);
        drift = drift
            .max((s.a - w.a).amax())
            .max((s.b - w.b).amax())
            .max((s.c - w.c).amax());
    }
    assert!(drift <= 1e-8, "Werner drift {drift:.2e} over [0, 50]");
    println!(
        "criterion 4 PASS: decay rates {rate_fast:.5}/{want_fast:.5} fast and {rate_slow:.6}/{want_slow:.6} slow, Werner drift {drift:.1e}"
    );
}

fn entropy_bits(eigs: &[f64]) -> f64 {
    let mut s = 0.0;
    for &l in eigs {
        if l > 1e-15 {
            s -= l * l.log2();
        }
    }
    s
}

fn entropy2(m: &Matrix2<C64>) -> f64 {
    let tr = (m[(0, 0)] + m[(1, 1)]).re;
    let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    entropy_bits(&[tr / 2.0 + disc, tr / 2.0 - disc])
}

fn reduced_b(x: &Matrix4<C64>) -> Matrix2<C64> {
    let mut out = Matrix2::zeros();
    for k in 0..2 {
        for l in 0..2 {
            out[(k, l)] = x[(k, l)] + x[(2 + k, 2 + l)];
        }
    }
    out
}

fn reduced_a(x: &Matrix4<C64>) -> Matrix2<C64> {
    let mut out = Matrix2::zeros();
    for a in 0..2 {
        for ap in 0..2 {
            out[(a, ap)] = x[(2 * a, 2 * ap)] + x[(2 * a + 1, 2 * ap + 1)];
        }
    }
    out
}

/// Average entropy of B conditioned on projecting A along (theta, phi).
fn conditional_entropy(rho: &Matrix4<C64>, theta: f64, phi: f64) -> f64 {
    let a = Vector3::new(
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    );
    let mut s = 0.0;
    for sign in [1.0f64, -1.0] {
        let proj = Matrix2::new(
            c(0.5 * (1.0 + sign * a.z), 0.0),
            c(0.5 * sign * a.x, -0.5 * sign * a.y),
            c(0.5 * sign * a.x, 0.5 * sign * a.y),
            c(0.5 * (1.0 - sign * a.z), 0.0),
        );
        let m = proj.kronecker(&Matrix2::identity());
        let rb = reduced_b(&(m * rho * m));
        let p = (rb[(0, 0)] + rb[(1, 1)]).re;
        if p > 1e-14 {
            s += p * entropy2(&(rb * c(1.0 / p, 0.0)));
        }
    }
    s
}

/// Discord by direct minimization over projective measurements on A,
/// from the raw density matrix alone.
fn brute_force_discord(rho: &Matrix4<C64>) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let (mut best_t, mut best_p, mut best) = (0.0, 0.0, f64::INFINITY);
    for i in 0..=40 {
        let theta = half_pi * i as f64 / 40.0;
        for j in 0..80 {
            let phi = std::f64::consts::TAU * j as f64 / 80.0;
            let v = conditional_entropy(rho, theta, phi);
            if v < best {
                (best_t, best_p, best) = (theta, phi, v);
            }
        }
    }
    let (mut span_t, mut span_p) = (half_pi / 40.0, std::f64::consts::TAU / 80.0);
    for _ in 0..4 {
        let (ct, cp) = (best_t, best_p);
        for i in -4i32..=4 {
            for j in -4i32..=4 {
                let theta = ct + span_t * i as f64 / 4.0;
                let phi = cp + span_p * j as f64 / 4.0;
                let v = conditional_entropy(rho, theta, phi);
                if v < best {
                    (best_t, best_p, best) = (theta, phi, v);
                }
            }
        }
        span_t /= 4.0;
        span_p /= 4.0;
    }
    let s_a = entropy2(&reduced_a(rho));
    let s_ab = entropy_bits(rho.symmetric_eigen().eigenvalues.as_slice());
    s_a - s_ab + best
}

#[test]
fn criterion_05_discord_matches_a_direct_measurement_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD15C0);
    let mut coords = Vec::with_capacity(200);
    for _ in 0..200 {
        let e: [f64; 4] = std::array::from_fn(|_| -(rng.gen_range(1e-12..1.0f64)).ln());
        let total: f64 = e.iter().sum();
        let l: Vec<f64> = e.iter().map(|x| x / total).collect();
        coords.push(Vector3::new(
            l[0] - l[1] + l[2] - l[3],
            -l[0] + l[1] + l[2] - l[3],
            l[0] + l[1] - l[2] - l[3],
        ));
    }
    let worst = coords
        .par_iter()
        .map(|cv| {
            let fast = discord_bell_diagonal(cv).unwrap();
            let slow = brute_force_discord(&TwoQubitBloch::bell_diagonal(*cv).to_density());
            let err = (fast - slow).abs();
            assert!(err <= 1e-6, "discord mismatch {err:.2e} at {cv:?}");
            err
        })
        .reduce(|| 0.0, f64::max);

    for axis in [
        Vector3::new(0.9, 0.0, 0.0),
        Vector3::new(0.0, -0.5, 0.0),
        Vector3::new(0.0, 0.0, 0.7),
        Vector3::zeros(),
    ] {
        let d = discord_bell_diagonal(&axis).unwrap();
        assert!(d.abs() <= 1e-12, "single-axis state has discord {d:.2e}");
    }
    let pure = discord_bell_diagonal(&Vector3::new(1.0, -1.0, 1.0)).unwrap();
    assert!((pure - 1.0).abs() <= 1e-12);
    println!("criterion 5 PASS: 200 random states within {worst:.2e} of the search, axis states exactly classical");
}

fn negativity_curve(series: &[qnoise::transfer::Transfer15], s0: &TwoQubitBloch) -> Vec<f64> {
    series
        .iter()
        .map(|tm| negativity(&apply_transfer_two(tm, s0).to_density()).unwrap())
        .collect()
}

fn death_counts(vals: &[f64]) -> (usize, usize) {
    let (mut deaths, mut rebirths, mut alive) = (0, 0, true);
    for &v in vals {
        if alive && v < 1e-9 {
            deaths += 1;
            alive = false;
        } else if !alive && v > 1e-3 {
            rebirths += 1;
            alive = true;
        }
    }
    (deaths, rebirths)
}

#[test]
fn criterion_06_entanglement_deaths_rebirths_and_the_frequency_doubling() {
    let bell = TwoQubitBloch::bell_psi_plus();
    let slow = ModelParams::new(1.0, 0.01);
    let grid = TimeGrid::new(0.01, 8192).unwrap();
    let ce = negativity_curve(&transfer_two_ce_series(&slow, &grid).unwrap(), &bell);
    let ie = negativity_curve(&transfer_two_ie_series(&slow, &grid).unwrap(), &bell);

    let (deaths, rebirths) = death_counts(&ce);
    assert!(
        deaths >= 2 && rebirths >= 2,
        "slow shared noise: {deaths} deaths, {rebirths} rebirths"
    );

    let w_ce = dominant_angular_frequency(grid.dt, &ce);
    let w_ie = dominant_angular_frequency(grid.dt, &ie);
    let ratio = w_ce / w_ie;
    assert!(
        (ratio - 2.0).abs() <= 0.2,
        "shared/independent frequency ratio {ratio:.3}"
    );

    let fast = ModelParams::new(1.0, 100.0);
    let fgrid = TimeGrid::new(0.05, 3000).unwrap();
    let fce = negativity_curve(&transfer_two_ce_series(&fast, &fgrid).unwrap(), &bell);
    let (fdeaths, frebirths) = death_counts(&fce);
    assert!(
        fdeaths == 1 && frebirths == 0,
        "fast shared noise: {fdeaths} deaths, {frebirths} rebirths"
    );
    println!(
        "criterion 6 PASS: {deaths} deaths / {rebirths} rebirths at gamma 0.01, single death at gamma 100, frequency ratio {ratio:.3}"
    );
}

fn trapezoid_average(values: &[f64], dt: f64, horizon: f64) -> f64 {
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[values.len() - 1])) * dt / horizon
}

#[test]
fn criterion_07_best_telegraph_rate_mimics_the_ou_reference() {
    let p_ou = ModelParams::new(1.0, 1.0);
    let rho0 = density_from_bloch(&Vector3::new(1.0, 0.0, 0.0));
    let horizon = 10.0;
    let search = (0.05, 20.0);
    let ens = EnsembleConfig::new(100_000, 0xF1DE);
    let res = optimize_gamma_rtn(&p_ou, &rho0, horizon, search, &ens).unwrap();
    assert!(
        res.value < 1e-4,
        "optimized mean infidelity {:.3e}",
        res.value
    );
    assert!(res.gamma_star > search.0 && res.gamma_star < search.1);

    let grid = TimeGrid::default_for(&ModelParams::new(p_ou.omega, search.1), horizon).unwrap();
    let matched =
        fidelity_complement_curve(&p_ou, &ModelParams::new(1.0, 1.0), &rho0, &grid, &ens).unwrap();
    let tuned = fidelity_complement_curve(
        &p_ou,
        &ModelParams::new(1.0, res.gamma_star),
        &rho0,
        &grid,
        &ens,
    )
    .unwrap();

    // spectrum matching is a poor proxy: averaged over the window the
    // rate-matched dynamics is tens of times less faithful, and pointwise
    // the gap opens beyond two orders of magnitude
    let same_rate = trapezoid_average(&matched.values, grid.dt, horizon);
    assert!(
        same_rate >= 20.0 * res.value,
        "gamma 1 averages {same_rate:.3e}, optimum {:.3e}",
        res.value
    );
    let pointwise = matched
        .values
        .iter()
        .zip(&tuned.values)
        .map(|(&m, &t)| m / t.max(1e-12))
        .fold(0.0f64, f64::max);
    assert!(
        pointwise >= 100.0,
        "largest instantaneous gap is only {pointwise:.0}x"
    );
    println!(
        "criterion 7 PASS: optimum {:.3e} at gamma {:.3}, rate matching {:.0}x worse on average and up to {:.0}x pointwise",
        res.value,
        res.gamma_star,
        same_rate / res.value,
        pointwise
    );
}

fn blp_value(omega: f64, gamma: f64) -> (f64, Option<(Vector3<f64>, Vector3<f64>)>) {
    let p = ModelParams::new(omega, gamma);
    let cfg = BlpSearchConfig::default_for(&p).unwrap();
    let r = blp_measure(&p, &cfg).unwrap();
    (r.value, r.optimal_pair)
}

fn rhp_value(omega: f64, gamma: f64) -> f64 {
    let p = ModelParams::new(omega, gamma);
    rhp_measure(&p, &default_measure_grid(&p).unwrap()).unwrap().value
}

/// Largest rate in [lo, hi] at which `positive` still holds, by bisection;
/// `positive` must hold at lo and fail at hi.
fn vanishing_point(mut lo: f64, mut hi: f64, iters: usize, positive: impl Fn(f64) -> bool) -> f64 {
    assert!(positive(lo) && !positive(hi));
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if positive(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn criterion_08_memory_measures_across_the_rate_range() {
    // trace-distance measure stays positive over four decades of switching
    // rate, and every optimizing pair sits on the equator
    let gammas = [0.01, 0.1, 1.0, 10.0, 100.0];
    for &g in &gammas {
        let (v, pair) = blp_value(1.0, g);
        assert!(v > 1e-9, "measure vanished at gamma {g}: {v:.3e}");
        let (u, w) = pair.expect("positive measure reports its argmax pair");
        assert!(
            u.z.abs() < 1e-3 && w.z.abs() < 1e-3,
            "pair at gamma {g} leaves the equator: {:.2e}, {:.2e}",
            u.z,
            w.z
        );
    }

    // slow-noise scaling: both measures fall off as 1/gamma
    let slow = [0.01, (0.01f64 * 0.1).sqrt(), 0.1];
    let logs: Vec<f64> = slow.iter().map(|g| g.ln()).collect();
    let blp_logs: Vec<f64> = slow.iter().map(|&g| blp_value(1.0, g).0.ln()).collect();
    let rhp_logs: Vec<f64> = slow.iter().map(|&g| rhp_value(1.0, g).ln()).collect();
    let (blp_slope, _) = linear_fit(&logs, &blp_logs);
    let (rhp_slope, _) = linear_fit(&logs, &rhp_logs);
    assert!(
        (blp_slope + 1.0).abs() <= 0.1 && (rhp_slope + 1.0).abs() <= 0.1,
        "log-log slopes across [0.01, 0.1]: {blp_slope:.3}, {rhp_slope:.3}"
    );

    // entanglement measure: positive at slow switching, identically zero
    // past a finite threshold
    assert!(rhp_value(1.0, 0.1) > 1e-9);
    assert!(rhp_value(1.0, 100.0) <= 1e-12);
    let threshold = {
        let (mut lo, mut hi) = (0.1f64, 100.0f64);
        for _ in 0..12 {
            let mid = (lo * hi).sqrt();
            if rhp_value(1.0, mid) > 1e-12 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    };
    assert!(threshold > 0.1 && threshold < 10.0);
    assert!(rhp_value(1.0, 0.9 * threshold) > 1e-12);
    assert!(rhp_value(1.0, 1.1 * threshold) <= 1e-12);

    // near the dephasing limit the two measures coincide and die together
    // at the real-spectrum edge of the averaged map
    let (blp_slow, _) = blp_value(0.01, 1.5);
    let rhp_slow = rhp_value(0.01, 1.5);
    assert!(blp_slow > 1e-2 && rhp_slow > 1e-2);
    assert!(
        (blp_slow - rhp_slow).abs() <= 0.05 * blp_slow,
        "measures split in the dephasing limit: {blp_slow:.4e} vs {rhp_slow:.4e}"
    );
    let (lo_edge, _) = real_region_boundaries(0.01).expect("real window exists");
    assert!(
        (lo_edge - 2.0).abs() <= 0.01,
        "oscillations persist past gamma 2: edge {lo_edge:.4}"
    );
    for g in [1.9, 2.1] {
        let (b, _) = blp_value(0.01, g);
        assert!(
            rhp_value(0.01, g) <= 1e-12,
            "entanglement revivals survive at gamma {g}"
        );
        assert!(
            b <= 2e-5 && b <= 1e-3 * blp_slow,
            "trace-distance measure at gamma {g} has not collapsed: {b:.3e}"
        );
    }
    let blp_edge = vanishing_point(1.5, 2.5, 8, |g| blp_value(0.01, g).0 > 1e-4);
    let rhp_edge = vanishing_point(1.5, 2.5, 8, |g| rhp_value(0.01, g) > 1e-12);
    assert!(
        (blp_edge - 2.0).abs() <= 0.2 && (rhp_edge - 2.0).abs() <= 0.2,
        "collapse points stray from the spectral edge: {blp_edge:.3}, {rhp_edge:.3}"
    );
    assert!(
        (blp_edge - rhp_edge).abs() <= 0.05,
        "collapse points disagree: {blp_edge:.3} vs {rhp_edge:.3}"
    );
    println!(
        "criterion 8 PASS: slopes {blp_slope:.3}/{rhp_slope:.3}, equatorial pairs, threshold {threshold:.2} at omega 1, collapse at {blp_edge:.3}/{rhp_edge:.3} for omega 0.01"
    );
}

#[test]
fn criterion_09_ou_samples_reproduce_their_autocovariance() {
    let n_traj = 100_000usize;
    let dt = 0.05;
    let times: Vec<f64> = (0..=20).map(|k| k as f64 * dt).collect();
    let mut worst_z = 0.0f64;
    for (gi, &gamma) in [0.1, 1.0, 10.0].iter().enumerate() {
        let n_lags = times.len();
        let (sum, sumsq) = (0..n_traj)
            .into_par_iter()
            .map(|i| {
                let mut rng = trajectory_rng(0x0AC0 + gi as u64, i as u64);
                let v = ou_values_at(gamma, &times, &mut rng);
                let prods: Vec<f64> = v.iter().map(|x| v[0] * x).collect();
                (prods.clone(), prods.iter().map(|p| p * p).collect::<Vec<f64>>())
            })
            .reduce(
                || (vec![0.0; n_lags], vec![0.0; n_lags]),
                |(mut a, mut b), (x, y)| {
                    for k in 0..n_lags {
                        a[k] += x[k];
                        b[k] += y[k];
                    }
                    (a, b)
                },
            );
        for k in 0..n_lags {
            let mean = sum[k] / n_traj as f64;
            let var = (sumsq[k] - sum[k] * sum[k] / n_traj as f64) / (n_traj as f64 - 1.0);
            let se = (var / n_traj as f64).sqrt();
            let want = (-2.0 * gamma * times[k]).exp();
            let z = (mean - want).abs() / se.max(1e-300);
            worst_z = worst_z.max(z);
            assert!(
                z <= 3.0,
                "gamma {gamma} lag {k}: mean {mean:.5} vs {want:.5} is {z:.2} se"
            );
        }
    }
    println!("criterion 9 PASS: 3 rates x 21 lags x 100000 trajectories, worst deviation {worst_z:.2} se");
}

fn run_bin(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnoise"))
        .args(args)
        .env("QNOISE_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn out_string(o: &Output) -> String {
    assert!(
        o.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn criterion_10_every_command_reproduces_its_output_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<(&str, Vec<&str>)> = vec![
        ("simulate", vec!["--gamma", "0.8", "--dt", "0.05", "--steps", "50"]),
        (
            "simulate",
            vec!["--solver", "mc", "--n-traj", "2000", "--dt", "0.05", "--steps", "30"],
        ),
        (
            "simulate",
            vec!["--noise", "ou", "--n-traj", "2000", "--dt", "0.05", "--steps", "30"],
        ),
        ("correlations", vec!["--gamma", "0.5", "--dt", "0.1", "--steps", "40"]),
        (
            "correlations",
            vec![
                "--solver",
                "mc",
                "--env",
                "independent",
                "--n-traj",
                "600",
                "--dt",
                "0.1",
                "--steps",
                "15",
            ],
        ),
        (
            "nonmark",
            vec!["--gamma-list", "0.8,2.5", "--azimuth-samples", "45"],
        ),
        (
            "compare",
            vec!["--horizon", "4", "--gamma-range", "0.3..3", "--n-traj", "1200"],
        ),
        ("region", vec!["--omega-range", "0.001..0.3:6"]),
        (
            "trajectory",
            vec!["--gamma", "1.5", "--dt", "0.02", "--steps", "200", "--index", "4"],
        ),
    ];
    for (i, (cmd, extra)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("case{i}.csv"));
        let mut write_args: Vec<&str> = vec![cmd];
        write_args.extend(extra);
        write_args.push("--output");
        write_args.push(path.to_str().unwrap());
        let w = run_bin(&write_args, "2");
        assert!(w.status.success(), "{cmd}: {}", String::from_utf8_lossy(&w.stderr));
        let written = std::fs::read_to_string(&path).unwrap();

        let mut direct_args: Vec<&str> = vec![cmd];
        direct_args.extend(extra);
        let direct = out_string(&run_bin(&direct_args, "7"));
        assert_eq!(written, direct, "{cmd} case {i} depends on the thread count");

        let replay = out_string(&run_bin(&["run", "--from", path.to_str().unwrap()], "5"));
        assert_eq!(written, replay, "{cmd} case {i} does not replay from its metadata");
    }
    println!("criterion 10 PASS: 9 command cases, bitwise identical across reruns, replays, and thread counts");
}

#[test]
fn oracle_discord_search_hits_known_values() {
    // anchor the search itself before trusting it as an oracle: the
    // maximally mixed state and a pure Bell state have known discord
    let mixed = Matrix4::<C64>::identity() * c(0.25, 0.0);
    assert!(brute_force_discord(&mixed).abs() < 1e-12);
    let bell = TwoQubitBloch::bell_psi_plus().to_density();
    assert!((brute_force_discord(&bell) - 1.0).abs() < 1e-9);
    // a state with a single correlation axis measures classically
    let axis = TwoQubitBloch::bell_diagonal(Vector3::new(0.6, 0.0, 0.0)).to_density();
    assert!(brute_force_discord(&axis).abs() < 1e-9);
}
