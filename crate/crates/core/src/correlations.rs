//! State comparison and correlation measures: negativity, mutual
//! information, discord on Bell-diagonal states, Uhlmann fidelity and trace
//! distance, and the fidelity-complement machinery that tunes a telegraph
//! switching rate to mimic an OU-driven qubit.
//!
//! Entropies are base 2 throughout. Fidelity uses the squared convention
//! F = (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, so 1 - F is the quantity
//! driven below 1e-4 by the rate optimizer.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::bloch::{
    bloch_from_density, c, check_density2, check_density4, density_from_bloch, partial_trace_a,
    partial_trace_b, partial_transpose, C64, ModelParams,
};
use crate::montecarlo::evolve_single_mc;
use crate::noise::{EnsembleConfig, NoiseKind, TimeGrid};
use crate::numeric::golden_min;
use crate::transfer::{apply_transfer_single, transfer_single_series};
use crate::{Error, EPS_TOL};

/// A scalar observable sampled on a time grid.
#[derive(Debug, Clone)]
pub struct MeasureCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

fn entropy_bits(eigs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    for lam in eigs {
        if lam > 1e-15 {
            s -= lam * lam.log2();
        }
    }
    s
}

fn hermitize2(m: &Matrix2<C64>) -> Matrix2<C64> {
    (m + m.adjoint()) * c(0.5, 0.0)
}

fn hermitize4(m: &Matrix4<C64>) -> Matrix4<C64> {
    (m + m.adjoint()) * c(0.5, 0.0)
}

/// Entanglement negativity: twice the absolute sum of negative eigenvalues
/// of the partial transpose. 1 for Bell states, 0 exactly on separable
/// two-qubit states.
pub fn negativity(rho: &Matrix4<C64>) -> Result<f64, Error> {
    check_density4(rho)?;
    let pt = hermitize4(&partial_transpose(rho));
    let eigs = SymmetricEigen::new(pt).eigenvalues;
    Ok(eigs.iter().map(|&l| 2.0 * (-l).max(0.0)).sum())
}

/// S(A) + S(B) - S(AB) in bits.
pub fn mutual_information(rho: &Matrix4<C64>) -> Result<f64, Error> {
    check_density4(rho)?;
    let sa = entropy_bits(SymmetricEigen::new(hermitize2(&partial_trace_b(rho))).eigenvalues.iter().copied());
    let sb = entropy_bits(SymmetricEigen::new(hermitize2(&partial_trace_a(rho))).eigenvalues.iter().copied());
    let sab = entropy_bits(SymmetricEigen::new(hermitize4(rho)).eigenvalues.iter().copied());
    Ok(sa + sb - sab)
}

/// Eigenvalues of the Bell-diagonal state with correlation coordinates
/// (c1, c2, c3); errors out when the point lies outside the state
/// tetrahedron.
pub fn bell_diagonal_probabilities(coords: &Vector3<f64>) -> Result<[f64; 4], Error> {
    let (c1, c2, c3) = (coords.x, coords.y, coords.z);
    let lams = [
        0.25 * (1.0 + c1 - c2 + c3),
        0.25 * (1.0 - c1 + c2 + c3),
        0.25 * (1.0 + c1 + c2 - c3),
        0.25 * (1.0 - c1 - c2 - c3),
    ];
    for lam in lams {
        if lam < -EPS_TOL {
            return Err(Error::NonPhysical(format!(
                "correlation coordinates ({c1}, {c2}, {c3}) leave the state tetrahedron"
            )));
        }
    }
    Ok(lams.map(|l| l.max(0.0)))
}

/// Largest factor in [0, 1] by which `coords` can be scaled toward the
/// origin so the point lands inside the state tetrahedron; 1 when it is
/// already inside. Scaling by this factor repairs sampling means that sit
/// a statistical error outside the physical set.
pub fn tetrahedron_clamp(coords: &Vector3<f64>) -> f64 {
    let (c1, c2, c3) = (coords.x, coords.y, coords.z);
    let lams = [
        0.25 * (1.0 + c1 - c2 + c3),
        0.25 * (1.0 - c1 + c2 + c3),
        0.25 * (1.0 + c1 + c2 - c3),
        0.25 * (1.0 - c1 - c2 - c3),
    ];
    let mut s = 1.0f64;
    for lam in lams {
        if lam < 0.0 {
            // lam(s c) = 1/4 + s (lam - 1/4) crosses zero at this s
            s = s.min(0.25 / (0.25 - lam));
        }
    }
    s
}

/// Quantum discord of a Bell-diagonal state: total correlations minus the
/// classical correlations extractable by a projective measurement, which
/// for this family is attained along the dominant correlation axis.
pub fn discord_bell_diagonal(coords: &Vector3<f64>) -> Result<f64, Error> {
    let lams = bell_diagonal_probabilities(coords)?;
    let info = 2.0 - entropy_bits(lams);
    let cmax = coords.x.abs().max(coords.y.abs()).max(coords.z.abs());
    let classical = binary_channel_bits(cmax);
    Ok((info - classical).max(0.0))
}

/// ((1-c)/2) log2(1-c) + ((1+c)/2) log2(1+c), the classical correlation
/// across a binary symmetric channel of bias c.
fn binary_channel_bits(cm: f64) -> f64 {
    let mut s = 0.0;
    for sign in [1.0, -1.0] {
        let x = 1.0 + sign * cm;
        if x > 1e-15 {
            s += 0.5 * x * x.log2();
        }
    }
    s
}

fn psd_sqrt2(m: &Matrix2<C64>) -> Matrix2<C64> {
    let eig = SymmetricEigen::new(hermitize2(m));
    let q = eig.eigenvectors;
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| c(l.max(0.0).sqrt(), 0.0)));
    q * d * q.adjoint()
}

/// Uhlmann fidelity, squared convention: (Tr sqrt(sqrt(rho) sigma
/// sqrt(rho)))^2. Symmetric, 1 iff the states coincide.
pub fn fidelity(rho: &Matrix2<C64>, sigma: &Matrix2<C64>) -> Result<f64, Error> {
    check_density2(rho)?;
    check_density2(sigma)?;
    let sr = psd_sqrt2(rho);
    let inner = hermitize2(&(sr * sigma * sr));
    let eigs = SymmetricEigen::new(inner).eigenvalues;
    let root_sum: f64 = eigs.iter().map(|&l| l.max(0.0).sqrt()).sum();
    Ok((root_sum * root_sum).clamp(0.0, 1.0))
}

/// Half the trace norm of rho - sigma.
pub fn trace_distance(rho: &Matrix2<C64>, sigma: &Matrix2<C64>) -> Result<f64, Error> {
    check_density2(rho)?;
    check_density2(sigma)?;
    let eigs = SymmetricEigen::new(hermitize2(&(rho - sigma))).eigenvalues;
    Ok(0.5 * eigs.iter().map(|l| l.abs()).sum::<f64>())
}

pub fn trace_distance4(rho: &Matrix4<C64>, sigma: &Matrix4<C64>) -> Result<f64, Error> {
    check_density4(rho)?;
    check_density4(sigma)?;
    let eigs = SymmetricEigen::new(hermitize4(&(rho - sigma))).eigenvalues;
    Ok(0.5 * eigs.iter().map(|l| l.abs()).sum::<f64>())
}

/// 1 - F(reference(t), telegraph-driven analytic state(t)) on the grid.
/// The reference is any precomputed single-qubit evolution; this is the
/// comparison the rate optimizer minimizes, with the telegraph arm exact so
/// that only the reference carries sampling noise.
pub fn fidelity_complement_against(
    reference: &[Matrix2<C64>],
    p_rtn: &ModelParams,
    rho0: &Matrix2<C64>,
    grid: &TimeGrid,
) -> Result<MeasureCurve, Error> {
    if reference.len() != grid.n_steps + 1 {
        return Err(Error::InvalidConfig(format!(
            "reference has {} samples but the grid has {}",
            reference.len(),
            grid.n_steps + 1
        )));
    }
    let n0 = bloch_from_density(rho0);
    let series = transfer_single_series(p_rtn, grid)?;
    let mut values = Vec::with_capacity(reference.len());
    for (tm, rho_ref) in series.iter().zip(reference) {
        let rho_rtn = density_from_bloch(&apply_transfer_single(tm, &n0));
        values.push((1.0 - fidelity(rho_ref, &rho_rtn)?).max(0.0));
    }
    Ok(MeasureCurve {
        times: grid.times(),
        values,
    })
}

/// 1 - F between an OU-driven qubit (sampled) and a telegraph-driven one
/// (exact), both started in rho0.
pub fn fidelity_complement_curve(
    p_ou: &ModelParams,
    p_rtn: &ModelParams,
    rho0: &Matrix2<C64>,
    grid: &TimeGrid,
    ens: &EnsembleConfig,
) -> Result<MeasureCurve, Error> {
    let ou = evolve_single_mc(p_ou, NoiseKind::Ou, rho0, grid, ens)?;
    fidelity_complement_against(&ou.states, p_rtn, rho0, grid)
}

fn trapezoid_mean(curve: &MeasureCurve, horizon: f64) -> Result<f64, Error> {
    let dt = curve.times[1] - curve.times[0];
    let steps = horizon / dt;
    let n = steps.round() as usize;
    if !(horizon > 0.0) || (steps - steps.round()).abs() > 1e-6 || n + 1 > curve.times.len() {
        return Err(Error::InvalidConfig(format!(
            "averaging horizon {horizon} does not land on the curve's grid"
        )));
    }
    let mut sum = 0.5 * (curve.values[0] + curve.values[n]);
    sum += curve.values[1..n].iter().sum::<f64>();
    Ok(sum * dt / horizon)
}

/// Time average (1/T) integral of 1 - F over [0, T], composite trapezoid.
pub fn average_fidelity_complement(
    p_ou: &ModelParams,
    p_rtn: &ModelParams,
    rho0: &Matrix2<C64>,
    horizon: f64,
    grid: &TimeGrid,
    ens: &EnsembleConfig,
) -> Result<f64, Error> {
    trapezoid_mean(&fidelity_complement_curve(p_ou, p_rtn, rho0, grid, ens)?, horizon)
}

/// Default number of coarse scan points before golden-section refinement.
pub const OPTIMIZER_SCAN_POINTS: usize = 16;

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub gamma_star: f64,
    pub value: f64,
    /// Coarse (gamma, objective) scan, for inspection.
    pub scan: Vec<(f64, f64)>,
}

/// Minimizes the averaged fidelity complement against a fixed reference
/// evolution over the telegraph switching rate. `noise_floor` is the
/// resolution limit of the objective (sampling noise on the reference);
/// a scan flatter than that cannot be minimized meaningfully.
pub fn optimize_gamma_against(
    reference: &[Matrix2<C64>],
    omega: f64,
    rho0: &Matrix2<C64>,
    horizon: f64,
    grid: &TimeGrid,
    search: (f64, f64),
    noise_floor: f64,
) -> Result<OptimizeResult, Error> {
    let (lo, hi) = search;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidConfig(format!("bad search interval ({lo}, {hi})")));
    }
    let objective = |gamma: f64| -> Result<f64, Error> {
        let curve = fidelity_complement_against(reference, &ModelParams::new(omega, gamma), rho0, grid)?;
        trapezoid_mean(&curve, horizon)
    };
    let step = (hi - lo) / (OPTIMIZER_SCAN_POINTS - 1) as f64;
    let scan: Vec<(f64, f64)> = (0..OPTIMIZER_SCAN_POINTS)
        .into_par_iter()
        .map(|i| {
            let g = lo + i as f64 * step;
            objective(g).map(|v| (g, v))
        })
        .collect::<Result<_, _>>()?;
    let (mut best_i, mut best) = (0usize, scan[0].1);
    let mut worst = scan[0].1;
    for (i, &(_, v)) in scan.iter().enumerate() {
        if v < best {
            best = v;
            best_i = i;
        }
        worst = worst.max(v);
    }
    if worst - best < noise_floor {
        return Err(Error::Unconverged(format!(
            "objective varies by {:.3e} over the scan, below the resolution {noise_floor:.3e}",
            worst - best
        )));
    }
    let bracket_lo = if best_i == 0 { lo } else { scan[best_i - 1].0 };
    let bracket_hi = if best_i + 1 == scan.len() { hi } else { scan[best_i + 1].0 };
    let (gamma_star, value) = golden_min(
        |g| objective(g).unwrap_or(f64::INFINITY),
        bracket_lo,
        bracket_hi,
        1e-4 * (hi - lo),
    );
    Ok(OptimizeResult {
        gamma_star,
        value,
        scan,
    })
}

/// Finds the telegraph rate whose exact dynamics best mimics an OU-driven
/// qubit, judged by the time-averaged fidelity complement over [0, T].
/// One OU ensemble is drawn and reused across every candidate rate.
pub fn optimize_gamma_rtn(
    p_ou: &ModelParams,
    rho0: &Matrix2<C64>,
    horizon: f64,
    search: (f64, f64),
    ens: &EnsembleConfig,
) -> Result<OptimizeResult, Error> {
    let scale = p_ou.gamma.max(search.1);
    let grid = TimeGrid::default_for(&ModelParams::new(p_ou.omega, scale), horizon)?;
    let ou = evolve_single_mc(p_ou, NoiseKind::Ou, rho0, &grid, ens)?;
    // matched states sit a fidelity complement of about stderr^2 above
    // zero, so that is the finest contrast the scan can resolve
    let floor = 4.0 * ou.stderr_max * ou.stderr_max + 1e-12;
    optimize_gamma_against(&ou.states, p_ou.omega, rho0, horizon, &grid, search, floor)
}
