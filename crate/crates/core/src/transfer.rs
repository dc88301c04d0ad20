//! Exact ensemble-averaged dynamics for telegraph noise. Conditioning on
//! the current noise sign turns the average over switching histories into a
//! linear flow on a doubled Bloch space: a 6x6 generator for one qubit and
//! a 30x30 generator for two qubits sharing the field. The transfer matrix
//! at time t is the fluctuator average of exp(-tP), and its decay rates are
//! the roots of two cubics.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::bloch::{c, C64, ModelParams, TwoQubitBloch};
use crate::noise::TimeGrid;
use crate::numeric::cubic_roots;
use crate::Error;

/// Matrix of n -> 2 e_axis x n, the Bloch-space generator of rotation about
/// a coordinate axis (0 = x, 1 = y, 2 = z) at angular speed 2.
pub fn rotation_generator(axis: usize) -> Matrix3<f64> {
    let mut g = Matrix3::zeros();
    let (j, k) = ((axis + 1) % 3, (axis + 2) % 3);
    g[(k, j)] = 2.0;
    g[(j, k)] = -2.0;
    g
}

fn set_block<const D: usize, const B: usize>(
    m: &mut SMatrix<C64, D, D>,
    r: usize,
    co: usize,
    block: &SMatrix<f64, B, B>,
    scale: f64,
) {
    for i in 0..B {
        for j in 0..B {
            m[(r + i, co + j)] += c(scale * block[(i, j)], 0.0);
        }
    }
}

/// Generator of the conditioned single-qubit flow, acting on the pair of
/// Bloch vectors conditioned on the noise sign. The averaged map is
/// exp(-tP) contracted with equiprobable fluctuator vectors.
pub fn build_p(p: &ModelParams) -> SMatrix<C64, 6, 6> {
    let gx = rotation_generator(0);
    let gz = rotation_generator(2);
    let flow_plus = gz * p.omega + gx;
    let flow_minus = gz * p.omega - gx;
    let mut m = SMatrix::<C64, 6, 6>::zeros();
    let eye = Matrix3::identity();
    set_block(&mut m, 0, 0, &eye, p.gamma);
    set_block(&mut m, 3, 3, &eye, p.gamma);
    set_block(&mut m, 0, 3, &eye, -p.gamma);
    set_block(&mut m, 3, 0, &eye, -p.gamma);
    // exp(-tP) must reproduce the conditioned flows, so they enter negated
    set_block(&mut m, 0, 0, &flow_plus, -1.0);
    set_block(&mut m, 3, 3, &flow_minus, -1.0);
    m
}

/// Same construction on the 15-dimensional two-qubit Bloch vector
/// (a, b, vec C) for two qubits driven by one shared field.
pub fn build_p2_ce(p: &ModelParams) -> SMatrix<C64, 30, 30> {
    let eye3 = Matrix3::identity();
    let block15 = |g: &Matrix3<f64>| -> SMatrix<f64, 15, 15> {
        let mut q = SMatrix::<f64, 15, 15>::zeros();
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(g);
        q.fixed_view_mut::<3, 3>(3, 3).copy_from(g);
        let pair = g.kronecker(&eye3) + eye3.kronecker(g);
        q.fixed_view_mut::<9, 9>(6, 6).copy_from(&pair);
        q
    };
    let qx = block15(&rotation_generator(0));
    let qz = block15(&rotation_generator(2));
    let flow_plus = qz * p.omega + qx;
    let flow_minus = qz * p.omega - qx;
    let mut m = SMatrix::<C64, 30, 30>::zeros();
    let eye15 = SMatrix::<f64, 15, 15>::identity();
    set_block(&mut m, 0, 0, &eye15, p.gamma);
    set_block(&mut m, 15, 15, &eye15, p.gamma);
    set_block(&mut m, 0, 15, &eye15, -p.gamma);
    set_block(&mut m, 15, 0, &eye15, -p.gamma);
    set_block(&mut m, 0, 0, &flow_plus, -1.0);
    set_block(&mut m, 15, 15, &flow_minus, -1.0);
    m
}

/// Roots of the two decay-rate cubics,
/// mu^3 + 2g mu^2 + 4(1+w^2) mu + 8 w^2 g = 0 and
/// eta^3 + 4g eta^2 + 4(1+g^2+w^2) eta + 8g = 0.
/// The substitution eta = -mu - 2g carries one root set to the other, and
/// the spectrum of P is the union of the negated root sets.
#[derive(Debug, Clone, Copy)]
pub struct EigenSet {
    pub mu: [C64; 3],
    pub eta: [C64; 3],
}

pub fn eigen_cubics(p: &ModelParams) -> EigenSet {
    let (w2, g) = (p.omega * p.omega, p.gamma);
    EigenSet {
        mu: cubic_roots(2.0 * g, 4.0 * (1.0 + w2), 8.0 * w2 * g),
        eta: cubic_roots(4.0 * g, 4.0 * (1.0 + g * g + w2), 8.0 * g),
    }
}

/// All six eigenvalues of P (negated cubic roots), mu sector first.
pub fn generator_spectrum(p: &ModelParams) -> [C64; 6] {
    let e = eigen_cubics(p);
    [-e.mu[0], -e.mu[1], -e.mu[2], -e.eta[0], -e.eta[1], -e.eta[2]]
}

/// Decay and oscillation scales read off the spectrum, for choosing
/// integration horizons.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumSummary {
    /// Smallest nonzero decay rate over all modes (infinite if every mode
    /// is conserved).
    pub rate_min: f64,
    /// Smallest decay rate among oscillating modes only.
    pub rate_min_osc: Option<f64>,
    /// Largest angular frequency present.
    pub im_max: f64,
}

pub fn spectrum_summary(p: &ModelParams) -> SpectrumSummary {
    let mut rate_min = f64::INFINITY;
    let mut rate_min_osc: Option<f64> = None;
    let mut im_max = 0.0f64;
    for lam in generator_spectrum(p) {
        let rate = lam.re.abs();
        im_max = im_max.max(lam.im.abs());
        if rate > 1e-12 {
            rate_min = rate_min.min(rate);
            if lam.im.abs() > 1e-10 {
                rate_min_osc = Some(rate_min_osc.map_or(rate, |r: f64| r.min(rate)));
            }
        }
    }
    SpectrumSummary {
        rate_min,
        rate_min_osc,
        im_max,
    }
}

/// Switching-rate window (gamma1, gamma2) inside which every decay exponent
/// is real, from the positive roots of
/// 4 w^2 g^4 + (8 w^4 - 20 w^2 - 1) g^2 + 4 (w^2+1)^3 = 0.
/// The window exists for omega <= 1/(2 sqrt 2) and collapses to a point at
/// the threshold; at omega = 0 it is (2, infinity).
pub fn real_region_boundaries(omega: f64) -> Option<(f64, f64)> {
    let w2 = omega * omega;
    if omega == 0.0 {
        return Some((2.0, f64::INFINITY));
    }
    let a = 4.0 * w2;
    let b = 8.0 * w2 * w2 - 20.0 * w2 - 1.0;
    let cc = 4.0 * (w2 + 1.0) * (w2 + 1.0) * (w2 + 1.0);
    let mut disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        // the threshold case lands a hair below zero in floating point
        if disc > -1e-12 * b * b {
            disc = 0.0;
        } else {
            return None;
        }
    }
    let x_big = (-b + disc.sqrt()) / (2.0 * a);
    let x_small = cc / (a * x_big);
    Some((x_small.sqrt(), x_big.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseRegime {
    Fast,
    Slow,
}

/// Longest decay time in the stated limit: gamma for fast noise; for slow
/// noise (1+w^2)/gamma when w > 1/sqrt(2), else (1+1/w^2)/(2 gamma).
/// Consistency of the regime with the parameters is the caller's call; the
/// formulas are asymptotic and are not validated here.
pub fn limiting_decay_time(p: &ModelParams, regime: NoiseRegime) -> f64 {
    match regime {
        NoiseRegime::Fast => p.gamma,
        NoiseRegime::Slow => {
            let w2 = p.omega * p.omega;
            if p.omega > std::f64::consts::FRAC_1_SQRT_2 {
                (1.0 + w2) / p.gamma
            } else {
                0.5 * (1.0 + 1.0 / w2) / p.gamma
            }
        }
    }
}

/// Linear map on Bloch coordinates implementing the averaged channel at
/// time t. D = 3 for one qubit, 15 for two.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix<const D: usize> {
    pub t: f64,
    pub entries: SMatrix<f64, D, D>,
}

pub type Transfer3 = TransferMatrix<3>;
pub type Transfer15 = TransferMatrix<15>;

fn average_blocks<const D: usize, const H: usize>(m: &SMatrix<C64, D, D>) -> SMatrix<C64, H, H> {
    let mut out = SMatrix::<C64, H, H>::zeros();
    for i in 0..H {
        for j in 0..H {
            out[(i, j)] = (m[(i, j)] + m[(i, H + j)] + m[(H + i, j)] + m[(H + i, H + j)]) * c(0.5, 0.0);
        }
    }
    out
}

fn realize<const D: usize>(m: &SMatrix<C64, D, D>, t: f64) -> Result<TransferMatrix<D>, Error> {
    let mut out = SMatrix::<f64, D, D>::zeros();
    let mut defect = 0.0f64;
    for i in 0..D {
        for j in 0..D {
            defect = defect.max(m[(i, j)].im.abs());
            out[(i, j)] = m[(i, j)].re;
        }
    }
    if defect > 1e-9 {
        return Err(Error::Unconverged(format!(
            "transfer matrix at t = {t} has imaginary residue {defect:.3e}"
        )));
    }
    Ok(TransferMatrix { t, entries: out })
}

/// Averaged single-qubit map at time t under telegraph noise.
pub fn transfer_single(p: &ModelParams, t: f64) -> Result<Transfer3, Error> {
    let e = (build_p(p) * c(-t, 0.0)).exp();
    realize(&average_blocks::<6, 3>(&e), t)
}

/// Averaged map at every grid time, via powers of the one-step exponential;
/// exact at grid points because the generator is time independent.
pub fn transfer_single_series(p: &ModelParams, grid: &TimeGrid) -> Result<Vec<Transfer3>, Error> {
    let step = (build_p(p) * c(-grid.dt, 0.0)).exp();
    let mut cur = SMatrix::<C64, 6, 6>::identity();
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    for k in 0..=grid.n_steps {
        out.push(realize(&average_blocks::<6, 3>(&cur), k as f64 * grid.dt)?);
        if k < grid.n_steps {
            cur = step * cur;
        }
    }
    Ok(out)
}

/// Two-qubit map when both qubits ride the same noise realization.
pub fn transfer_two_ce(p: &ModelParams, t: f64) -> Result<Transfer15, Error> {
    let e = (build_p2_ce(p) * c(-t, 0.0)).exp();
    realize(&average_blocks::<30, 15>(&e), t)
}

pub fn transfer_two_ce_series(p: &ModelParams, grid: &TimeGrid) -> Result<Vec<Transfer15>, Error> {
    let step = (build_p2_ce(p) * c(-grid.dt, 0.0)).exp();
    let mut cur = SMatrix::<C64, 30, 30>::identity();
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    for k in 0..=grid.n_steps {
        out.push(realize(&average_blocks::<30, 15>(&cur), k as f64 * grid.dt)?);
        if k < grid.n_steps {
            cur = step * cur;
        }
    }
    Ok(out)
}

fn ie_from_single(t3: &Transfer3) -> Transfer15 {
    let mut m = SMatrix::<f64, 15, 15>::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&t3.entries);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&t3.entries);
    let tt = t3.entries.kronecker(&t3.entries);
    m.fixed_view_mut::<9, 9>(6, 6).copy_from(&tt);
    TransferMatrix { t: t3.t, entries: m }
}

/// Two-qubit map when each qubit has its own independent environment:
/// marginals evolve by the single-qubit map and correlations by its tensor
/// square, because independent averages factorize.
pub fn transfer_two_ie(p: &ModelParams, t: f64) -> Result<Transfer15, Error> {
    Ok(ie_from_single(&transfer_single(p, t)?))
}

pub fn transfer_two_ie_series(p: &ModelParams, grid: &TimeGrid) -> Result<Vec<Transfer15>, Error> {
    Ok(transfer_single_series(p, grid)?.iter().map(ie_from_single).collect())
}

pub fn apply_transfer_single(t: &Transfer3, n: &Vector3<f64>) -> Vector3<f64> {
    t.entries * n
}

/// Flattened coordinates (a, b, C row-major), matching the ordering the
/// two-qubit generators act on.
pub fn pair_to_vec15(s: &TwoQubitBloch) -> SVector<f64, 15> {
    let mut v = SVector::<f64, 15>::zeros();
    for i in 0..3 {
        v[i] = s.a[i];
        v[3 + i] = s.b[i];
        for j in 0..3 {
            v[6 + 3 * i + j] = s.c[(i, j)];
        }
    }
    v
}

pub fn vec15_to_pair(v: &SVector<f64, 15>) -> TwoQubitBloch {
    let mut s = TwoQubitBloch::new(Vector3::zeros(), Vector3::zeros(), Matrix3::zeros());
    for i in 0..3 {
        s.a[i] = v[i];
        s.b[i] = v[3 + i];
        for j in 0..3 {
            s.c[(i, j)] = v[6 + 3 * i + j];
        }
    }
    s
}

pub fn apply_transfer_two(t: &Transfer15, s: &TwoQubitBloch) -> TwoQubitBloch {
    vec15_to_pair(&(t.entries * pair_to_vec15(s)))
}

/// Nonzero single-qubit transfer entries in closed form: the top-left
/// block holds t11, t12 (with t21 = -t12) and t22, and t33 sits alone.
#[derive(Debug, Clone, Copy)]
pub struct TransferElements {
    pub t: f64,
    pub t11: f64,
    pub t12: f64,
    pub t22: f64,
    pub t33: f64,
}

/// Gap below which two decay exponents are treated as degenerate and the
/// spectral form is refused.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Transfer entries as an explicit sum of decaying exponentials over the
/// six eigenvalues, with residue matrices from Lagrange projectors. Errors
/// out when exponents nearly coincide, where the projector denominators
/// lose all precision.
pub fn transfer_elements_closed_form(p: &ModelParams, t: f64) -> Result<TransferElements, Error> {
    let lam = generator_spectrum(p);
    let mut min_gap = f64::INFINITY;
    for i in 0..6 {
        for j in (i + 1)..6 {
            min_gap = min_gap.min((lam[i] - lam[j]).norm());
        }
    }
    if min_gap < DEGENERACY_GAP {
        return Err(Error::DegenerateRoots(min_gap));
    }
    let pm = build_p(p);
    let id = SMatrix::<C64, 6, 6>::identity();
    let mut total = SMatrix::<C64, 3, 3>::zeros();
    for j in 0..6 {
        let mut proj = id;
        for k in 0..6 {
            if k != j {
                proj = proj * (pm - id * lam[k]) / (lam[j] - lam[k]);
            }
        }
        total += average_blocks::<6, 3>(&proj) * (-lam[j] * t).exp();
    }
    let defect = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .fold(0.0f64, |a, (i, j)| a.max(total[(i, j)].im.abs()));
    if defect > 1e-9 {
        return Err(Error::Unconverged(format!(
            "spectral transfer at t = {t} has imaginary residue {defect:.3e}"
        )));
    }
    Ok(TransferElements {
        t,
        t11: total[(0, 0)].re,
        t12: total[(0, 1)].re,
        t22: total[(1, 1)].re,
        t33: total[(2, 2)].re,
    })
}
