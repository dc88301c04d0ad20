//! C interface to the qnoise library.
//!
//! Handles returned through out-pointers are opaque; free them with the
//! matching `*_free` function. Every entry point returns a [`QnStatus`] and
//! writes results only on `QN_STATUS_OK`. Matrices cross the boundary as
//! row-major double buffers, complex ones split into real and imaginary
//! parts. No function ever unwinds across the boundary: a Rust panic is
//! caught and reported as `QN_STATUS_PANIC`.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{Matrix4, Vector3};
use qnoise::bloch::{bloch_from_density, density_from_bloch, ModelParams};
use qnoise::correlations::{discord_bell_diagonal, negativity};
use qnoise::montecarlo::evolve_single_mc;
use qnoise::noise::{EnsembleConfig, NoiseKind, TimeGrid};
use qnoise::nonmarkov::{blp_measure, default_measure_grid, rhp_measure, BlpSearchConfig};
use qnoise::transfer::{eigen_cubics, real_region_boundaries, transfer_single, transfer_two_ce,
    transfer_two_ie};
use qnoise::{C64, Error};

/// Result of every call. Nonzero values mean the out-parameters were not
/// written; `qn_status_message` renders them readable.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnStatus {
    Ok = 0,
    NullArg = 1,
    InvalidArg = 2,
    NonPhysical = 3,
    Unconverged = 4,
    DegenerateRoots = 5,
    Panic = 6,
}

/// Noise process selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QnNoise {
    Rtn = 0,
    Ou = 1,
}

/// Opaque pair of a level splitting and a switching rate.
pub struct QnModel {
    p: ModelParams,
}

/// Opaque ensemble-averaged evolution: times, Bloch vectors, and the
/// standard error of the mean at each step.
pub struct QnEvolution {
    times: Vec<f64>,
    bloch: Vec<f64>,
    stderr: Vec<f64>,
}

fn status_of(e: &Error) -> QnStatus {
    match e {
        Error::NonPhysical(_) => QnStatus::NonPhysical,
        Error::AsymmetricCorrelation(_) => QnStatus::InvalidArg,
        Error::InvalidConfig(_) => QnStatus::InvalidArg,
        Error::Unconverged(_) => QnStatus::Unconverged,
        Error::DegenerateRoots(_) => QnStatus::DegenerateRoots,
    }
}

fn guarded(f: impl FnOnce() -> QnStatus) -> QnStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(QnStatus::Panic)
}

macro_rules! require {
    ($($ptr:expr),+) => {
        $(if $ptr.is_null() { return QnStatus::NullArg; })+
    };
}

/// Creates a model handle for level splitting `omega` and switching rate
/// `gamma` (nonnegative, finite). On success writes the handle to `out`.
///
/// # Safety
/// `out` must be a valid pointer. The handle must be released with
/// `qn_model_free`.
#[no_mangle]
pub unsafe extern "C" fn qn_model_new(
    omega: f64,
    gamma: f64,
    out: *mut *mut QnModel,
) -> QnStatus {
    guarded(|| {
        require!(out);
        if !omega.is_finite() || !gamma.is_finite() || gamma < 0.0 {
            return QnStatus::InvalidArg;
        }
        let h = Box::new(QnModel {
            p: ModelParams::new(omega, gamma),
        });
        unsafe { out.write(Box::into_raw(h)) };
        QnStatus::Ok
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `m` must be a handle from `qn_model_new` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn qn_model_free(m: *mut QnModel) {
    if !m.is_null() {
        drop(unsafe { Box::from_raw(m) });
    }
}

/// Roots of the two spectral cubics. Each buffer holds 3 doubles: `mu_*`
/// receive the transverse branch, `eta_*` the longitudinal one.
///
/// # Safety
/// `m` must be a live model handle; the four buffers must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_eigen_cubics(
    m: *const QnModel,
    mu_re: *mut f64,
    mu_im: *mut f64,
    eta_re: *mut f64,
    eta_im: *mut f64,
) -> QnStatus {
    guarded(|| {
        require!(m, mu_re, mu_im, eta_re, eta_im);
        let e = eigen_cubics(unsafe { &(*m).p });
        for k in 0..3 {
            unsafe {
                mu_re.add(k).write(e.mu[k].re);
                mu_im.add(k).write(e.mu[k].im);
                eta_re.add(k).write(e.eta[k].re);
                eta_im.add(k).write(e.eta[k].im);
            }
        }
        QnStatus::Ok
    })
}

/// Single-qubit averaged map at time `t`, written as 9 row-major doubles.
///
/// # Safety
/// `m` must be a live model handle; `out` must hold 9 doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_transfer_single(
    m: *const QnModel,
    t: f64,
    out: *mut f64,
) -> QnStatus {
    guarded(|| {
        require!(m, out);
        match transfer_single(unsafe { &(*m).p }, t) {
            Ok(tr) => {
                for r in 0..3 {
                    for c in 0..3 {
                        unsafe { out.add(3 * r + c).write(tr.entries[(r, c)]) };
                    }
                }
                QnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

unsafe fn write_two_qubit(
    res: Result<qnoise::transfer::Transfer15, Error>,
    out: *mut f64,
) -> QnStatus {
    match res {
        Ok(tr) => {
            for r in 0..15 {
                for c in 0..15 {
                    unsafe { out.add(15 * r + c).write(tr.entries[(r, c)]) };
                }
            }
            QnStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Two-qubit averaged map at time `t` for a shared noise source, written
/// as 225 row-major doubles acting on (a, b, vec C).
///
/// # Safety
/// `m` must be a live model handle; `out` must hold 225 doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_transfer_two_common(
    m: *const QnModel,
    t: f64,
    out: *mut f64,
) -> QnStatus {
    guarded(|| {
        require!(m, out);
        unsafe { write_two_qubit(transfer_two_ce(&(*m).p, t), out) }
    })
}

/// Two-qubit averaged map at time `t` for independent noise sources.
///
/// # Safety
/// `m` must be a live model handle; `out` must hold 225 doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_transfer_two_independent(
    m: *const QnModel,
    t: f64,
    out: *mut f64,
) -> QnStatus {
    guarded(|| {
        require!(m, out);
        unsafe { write_two_qubit(transfer_two_ie(&(*m).p, t), out) }
    })
}

/// Switching-rate window in which the whole relaxation spectrum is real.
/// Writes the boundaries and sets `exists` accordingly; when no window
/// exists the boundaries are NaN.
///
/// # Safety
/// `lower`, `upper`, and `exists` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn qn_real_region(
    omega: f64,
    lower: *mut f64,
    upper: *mut f64,
    exists: *mut bool,
) -> QnStatus {
    guarded(|| {
        require!(lower, upper, exists);
        if !omega.is_finite() {
            return QnStatus::InvalidArg;
        }
        let (lo, hi, ex) = match real_region_boundaries(omega) {
            Some((lo, hi)) => (lo, hi, true),
            None => (f64::NAN, f64::NAN, false),
        };
        unsafe {
            lower.write(lo);
            upper.write(hi);
            exists.write(ex);
        }
        QnStatus::Ok
    })
}

/// Averages `n_traj` noise realizations acting on the Bloch vector
/// `(nx, ny, nz)` over `n_steps` steps of length `dt`, and returns an
/// evolution handle with `n_steps + 1` records. Deterministic in `seed`.
///
/// # Safety
/// `out` must be a valid pointer. The handle must be released with
/// `qn_evolution_free`.
#[no_mangle]
pub unsafe extern "C" fn qn_evolve_single_mc(
    m: *const QnModel,
    noise: QnNoise,
    nx: f64,
    ny: f64,
    nz: f64,
    dt: f64,
    n_steps: usize,
    n_traj: usize,
    seed: u64,
    out: *mut *mut QnEvolution,
) -> QnStatus {
    guarded(|| {
        require!(m, out);
        let n0 = Vector3::new(nx, ny, nz);
        if n0.norm() > 1.0 + qnoise::EPS_TOL {
            return QnStatus::NonPhysical;
        }
        if n_traj == 0 {
            return QnStatus::InvalidArg;
        }
        let kind = match noise {
            QnNoise::Rtn => NoiseKind::Rtn,
            QnNoise::Ou => NoiseKind::Ou,
        };
        let grid = match TimeGrid::new(dt, n_steps) {
            Ok(g) => g,
            Err(e) => return status_of(&e),
        };
        let ens = EnsembleConfig::new(n_traj, seed);
        let rho0 = density_from_bloch(&n0);
        match evolve_single_mc(unsafe { &(*m).p }, kind, &rho0, &grid, &ens) {
            Ok(res) => {
                let mut bloch = Vec::with_capacity(3 * res.states.len());
                for rho in &res.states {
                    let n = bloch_from_density(rho);
                    bloch.extend_from_slice(&[n.x, n.y, n.z]);
                }
                let h = Box::new(QnEvolution {
                    times: res.times,
                    bloch,
                    stderr: res.stderr,
                });
                unsafe { out.write(Box::into_raw(h)) };
                QnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Number of records in an evolution handle; 0 for null.
///
/// # Safety
/// `e` must be null or a live evolution handle.
#[no_mangle]
pub unsafe extern "C" fn qn_evolution_len(e: *const QnEvolution) -> usize {
    if e.is_null() {
        0
    } else {
        unsafe { (*e).times.len() }
    }
}

/// Copies the record times into `buf` (`qn_evolution_len` doubles).
///
/// # Safety
/// `e` must be a live evolution handle; `buf` must hold enough doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_evolution_times(e: *const QnEvolution, buf: *mut f64) -> QnStatus {
    guarded(|| {
        require!(e, buf);
        let times = unsafe { &(*e).times };
        unsafe { std::ptr::copy_nonoverlapping(times.as_ptr(), buf, times.len()) };
        QnStatus::Ok
    })
}

/// Copies the mean Bloch vectors into `buf` as x,y,z triples
/// (`3 * qn_evolution_len` doubles).
///
/// # Safety
/// `e` must be a live evolution handle; `buf` must hold enough doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_evolution_bloch(e: *const QnEvolution, buf: *mut f64) -> QnStatus {
    guarded(|| {
        require!(e, buf);
        let b = unsafe { &(*e).bloch };
        unsafe { std::ptr::copy_nonoverlapping(b.as_ptr(), buf, b.len()) };
        QnStatus::Ok
    })
}

/// Copies the per-record standard error bound into `buf`
/// (`qn_evolution_len` doubles). Bloch components carry twice this value.
///
/// # Safety
/// `e` must be a live evolution handle; `buf` must hold enough doubles.
#[no_mangle]
pub unsafe extern "C" fn qn_evolution_stderr(e: *const QnEvolution, buf: *mut f64) -> QnStatus {
    guarded(|| {
        require!(e, buf);
        let s = unsafe { &(*e).stderr };
        unsafe { std::ptr::copy_nonoverlapping(s.as_ptr(), buf, s.len()) };
        QnStatus::Ok
    })
}

/// Releases an evolution handle. Null is ignored.
///
/// # Safety
/// `e` must be a handle from `qn_evolve_single_mc` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn qn_evolution_free(e: *mut QnEvolution) {
    if !e.is_null() {
        drop(unsafe { Box::from_raw(e) });
    }
}

/// Entanglement negativity of a two-qubit density matrix given as 16
/// row-major real and imaginary parts.
///
/// # Safety
/// `rho_re` and `rho_im` must hold 16 doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qn_negativity(
    rho_re: *const f64,
    rho_im: *const f64,
    out: *mut f64,
) -> QnStatus {
    guarded(|| {
        require!(rho_re, rho_im, out);
        let mut rho = Matrix4::<C64>::zeros();
        for r in 0..4 {
            for c in 0..4 {
                let k = 4 * r + c;
                rho[(r, c)] = C64::new(unsafe { rho_re.add(k).read() }, unsafe {
                    rho_im.add(k).read()
                });
            }
        }
        match negativity(&rho) {
            Ok(v) => {
                unsafe { out.write(v) };
                QnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Quantum discord of the Bell-diagonal state with correlation
/// coordinates `(c1, c2, c3)`, in bits.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qn_discord_bell_diagonal(
    c1: f64,
    c2: f64,
    c3: f64,
    out: *mut f64,
) -> QnStatus {
    guarded(|| {
        require!(out);
        match discord_bell_diagonal(&Vector3::new(c1, c2, c3)) {
            Ok(v) => {
                unsafe { out.write(v) };
                QnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Trace-distance memory measure with the default search settings.
/// `converged` reports whether the integration horizon captured the tail.
///
/// # Safety
/// `m` must be a live model handle; `value` and `converged` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qn_blp_measure(
    m: *const QnModel,
    value: *mut f64,
    converged: *mut bool,
) -> QnStatus {
    guarded(|| {
        require!(m, value, converged);
        let p = unsafe { &(*m).p };
        let res = BlpSearchConfig::default_for(p).and_then(|cfg| blp_measure(p, &cfg));
        match res {
            Ok(r) => {
                unsafe {
                    value.write(r.value);
                    converged.write(r.converged);
                }
                QnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Entanglement-revival memory measure on the default grid.
///
/// # Safety
/// `m` must be a live model handle; `value` and `converged` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qn_rhp_measure(
    m: *const QnModel,
    value: *mut f64,
    converged: *mut bool,
) -> QnStatus {
    guarded(|| {
        require!(m, value, converged);
        let p = unsafe { &(*m).p };
        let res = default_measure_grid(p).and_then(|grid| rhp_measure(p, &grid));
        match res {
            Ok(r) => {
                unsafe {
                    value.write(r.value);
                    converged.write(r.converged);
                }
                QnStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Static description of a status code.
///
/// # Safety
/// Always safe; the returned string is static and must not be freed.
#[no_mangle]
pub unsafe extern "C" fn qn_status_message(status: QnStatus) -> *const c_char {
    let s: &'static CStr = match status {
        QnStatus::Ok => c"ok",
        QnStatus::NullArg => c"a required pointer was null",
        QnStatus::InvalidArg => c"an argument was out of range or malformed",
        QnStatus::NonPhysical => c"the input does not describe a physical state",
        QnStatus::Unconverged => c"the computation did not converge",
        QnStatus::DegenerateRoots => c"the spectrum is too degenerate to separate",
        QnStatus::Panic => c"internal error",
    };
    s.as_ptr()
}

/// Library version as a static string.
///
/// # Safety
/// Always safe; the returned string is static and must not be freed.
#[no_mangle]
pub unsafe extern "C" fn qn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}
