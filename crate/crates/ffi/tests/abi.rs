//! Exercises the C entry points the way a foreign caller would: handles,
//! status codes, raw buffers, and the generated header on disk.

use std::ffi::CStr;
use std::ptr;

use qnoise::bloch::TwoQubitBloch;
use qnoise_ffi::*;

fn model(omega: f64, gamma: f64) -> *mut QnModel {
    let mut m = ptr::null_mut();
    let st = unsafe { qn_model_new(omega, gamma, &mut m) };
    assert_eq!(st, QnStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn model_creation_validates_arguments() {
    unsafe {
        assert_eq!(qn_model_new(1.0, 1.0, ptr::null_mut()), QnStatus::NullArg);
        let mut m = ptr::null_mut();
        assert_eq!(qn_model_new(1.0, -2.0, &mut m), QnStatus::InvalidArg);
        assert_eq!(qn_model_new(f64::NAN, 1.0, &mut m), QnStatus::InvalidArg);
        assert_eq!(qn_model_new(0.5, 0.0, &mut m), QnStatus::Ok);
        qn_model_free(m);
        qn_model_free(ptr::null_mut());
    }
}

#[test]
fn cubic_roots_match_the_library() {
    let m = model(0.7, 1.3);
    let (mut mu_re, mut mu_im) = ([0.0; 3], [0.0; 3]);
    let (mut eta_re, mut eta_im) = ([0.0; 3], [0.0; 3]);
    unsafe {
        assert_eq!(
            qn_eigen_cubics(
                m,
                mu_re.as_mut_ptr(),
                mu_im.as_mut_ptr(),
                eta_re.as_mut_ptr(),
                eta_im.as_mut_ptr()
            ),
            QnStatus::Ok
        );
        qn_model_free(m);
    }
    let p = qnoise::bloch::ModelParams::new(0.7, 1.3);
    let e = qnoise::transfer::eigen_cubics(&p);
    for k in 0..3 {
        assert!((mu_re[k] - e.mu[k].re).abs() < 1e-15);
        assert!((mu_im[k] - e.mu[k].im).abs() < 1e-15);
        assert!((eta_re[k] - e.eta[k].re).abs() < 1e-15);
        assert!((eta_im[k] - e.eta[k].im).abs() < 1e-15);
    }
}

#[test]
fn transfer_buffers_start_at_identity() {
    let m = model(1.0, 0.5);
    let mut one = [0.0; 9];
    let mut two = [0.0; 225];
    unsafe {
        assert_eq!(qn_transfer_single(m, 0.0, one.as_mut_ptr()), QnStatus::Ok);
        assert_eq!(
            qn_transfer_two_common(m, 0.0, two.as_mut_ptr()),
            QnStatus::Ok
        );
    }
    for r in 0..3 {
        for c in 0..3 {
            let want = if r == c { 1.0 } else { 0.0 };
            assert!((one[3 * r + c] - want).abs() < 1e-12);
        }
    }
    for r in 0..15 {
        for c in 0..15 {
            let want = if r == c { 1.0 } else { 0.0 };
            assert!((two[15 * r + c] - want).abs() < 1e-12);
        }
    }
    let mut ind = [0.0; 225];
    unsafe {
        assert_eq!(
            qn_transfer_two_independent(m, 0.3, ind.as_mut_ptr()),
            QnStatus::Ok
        );
        assert_eq!(qn_transfer_single(m, 0.3, ptr::null_mut()), QnStatus::NullArg);
        qn_model_free(m);
    }
    let trace: f64 = (0..15).map(|k| ind[16 * k]).sum();
    assert!(trace < 15.0); // strictly contracting at t > 0
}

#[test]
fn real_region_reports_presence_and_absence() {
    let (mut lo, mut hi, mut ex) = (0.0, 0.0, false);
    unsafe {
        assert_eq!(qn_real_region(1e-3, &mut lo, &mut hi, &mut ex), QnStatus::Ok);
        assert!(ex);
        assert!((lo - 2.0).abs() < 0.01);
        assert!(hi > lo);

        assert_eq!(qn_real_region(1.0, &mut lo, &mut hi, &mut ex), QnStatus::Ok);
        assert!(!ex);
        assert!(lo.is_nan() && hi.is_nan());

        assert_eq!(
            qn_real_region(1.0, ptr::null_mut(), &mut hi, &mut ex),
            QnStatus::NullArg
        );
    }
}

#[test]
fn evolution_handles_round_trip() {
    let m = model(1.0, 1.0);
    let mut e = ptr::null_mut();
    unsafe {
        assert_eq!(
            qn_evolve_single_mc(m, QnNoise::Rtn, 1.0, 0.0, 0.0, 0.05, 30, 400, 7, &mut e),
            QnStatus::Ok
        );
        assert_eq!(qn_evolution_len(e), 31);
        assert_eq!(qn_evolution_len(ptr::null()), 0);

        let mut times = vec![0.0; 31];
        let mut bloch = vec![0.0; 93];
        let mut se = vec![0.0; 31];
        assert_eq!(qn_evolution_times(e, times.as_mut_ptr()), QnStatus::Ok);
        assert_eq!(qn_evolution_bloch(e, bloch.as_mut_ptr()), QnStatus::Ok);
        assert_eq!(qn_evolution_stderr(e, se.as_mut_ptr()), QnStatus::Ok);
        assert_eq!(qn_evolution_times(e, ptr::null_mut()), QnStatus::NullArg);

        assert_eq!(times[0], 0.0);
        assert!((times[30] - 1.5).abs() < 1e-12);
        assert_eq!(&bloch[..3], &[1.0, 0.0, 0.0]);
        assert!(bloch.iter().all(|v| v.is_finite() && v.abs() <= 1.0 + 1e-9));
        assert_eq!(se[0], 0.0);
        assert!(se[1..].iter().all(|v| *v >= 0.0));
        qn_evolution_free(e);
        qn_evolution_free(ptr::null_mut());

        // same seed, same ensemble: bitwise identical means
        let mut e2 = ptr::null_mut();
        qn_evolve_single_mc(m, QnNoise::Rtn, 1.0, 0.0, 0.0, 0.05, 30, 400, 7, &mut e2);
        let mut bloch2 = vec![0.0; 93];
        qn_evolution_bloch(e2, bloch2.as_mut_ptr());
        assert!(bloch
            .iter()
            .zip(&bloch2)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        qn_evolution_free(e2);

        let mut bad = ptr::null_mut();
        assert_eq!(
            qn_evolve_single_mc(m, QnNoise::Ou, 2.0, 0.0, 0.0, 0.05, 5, 10, 7, &mut bad),
            QnStatus::NonPhysical
        );
        assert_eq!(
            qn_evolve_single_mc(m, QnNoise::Ou, 0.0, 0.0, 0.0, 0.05, 5, 0, 7, &mut bad),
            QnStatus::InvalidArg
        );
        qn_model_free(m);
    }
}

#[test]
fn correlation_measures_cross_the_boundary() {
    let rho = TwoQubitBloch::bell_psi_plus().to_density();
    let mut re = [0.0; 16];
    let mut im = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            re[4 * r + c] = rho[(r, c)].re;
            im[4 * r + c] = rho[(r, c)].im;
        }
    }
    let mut neg = 0.0;
    unsafe {
        assert_eq!(
            qn_negativity(re.as_ptr(), im.as_ptr(), &mut neg),
            QnStatus::Ok
        );
        assert!((neg - 1.0).abs() < 1e-12);
        assert_eq!(
            qn_negativity(ptr::null(), im.as_ptr(), &mut neg),
            QnStatus::NullArg
        );
    }

    let mut d = 0.0;
    unsafe {
        assert_eq!(qn_discord_bell_diagonal(1.0, -1.0, 1.0, &mut d), QnStatus::Ok);
        assert!((d - 1.0).abs() < 1e-12);
        assert_eq!(qn_discord_bell_diagonal(0.0, 0.0, 0.0, &mut d), QnStatus::Ok);
        assert_eq!(d, 0.0);
        assert_eq!(
            qn_discord_bell_diagonal(1.0, 1.0, 1.0, &mut d),
            QnStatus::NonPhysical
        );
    }
}

#[test]
fn memory_measures_agree_across_the_boundary_without_precession() {
    // with no level splitting the two measures are analytically equal
    let m = model(0.0, 0.8);
    let (mut blp, mut rhp) = (0.0, 0.0);
    let (mut cb, mut cr) = (false, false);
    unsafe {
        assert_eq!(qn_blp_measure(m, &mut blp, &mut cb), QnStatus::Ok);
        assert_eq!(qn_rhp_measure(m, &mut rhp, &mut cr), QnStatus::Ok);
        qn_model_free(m);
    }
    assert!(blp > 0.0);
    assert!((blp - rhp).abs() < 1e-6 * blp.max(rhp));
    assert!(cb && cr);
}

#[test]
fn status_messages_are_static_strings() {
    for s in [
        QnStatus::Ok,
        QnStatus::NullArg,
        QnStatus::InvalidArg,
        QnStatus::NonPhysical,
        QnStatus::Unconverged,
        QnStatus::DegenerateRoots,
        QnStatus::Panic,
    ] {
        let msg = unsafe { CStr::from_ptr(qn_status_message(s)) };
        assert!(!msg.to_str().unwrap().is_empty());
    }
    let v = unsafe { CStr::from_ptr(qn_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_the_surface() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/qnoise.h");
    let text = std::fs::read_to_string(path).expect("build script wrote the header");
    for sym in [
        "qn_model_new",
        "qn_model_free",
        "qn_eigen_cubics",
        "qn_transfer_single",
        "qn_transfer_two_common",
        "qn_transfer_two_independent",
        "qn_real_region",
        "qn_evolve_single_mc",
        "qn_evolution_len",
        "qn_evolution_free",
        "qn_negativity",
        "qn_discord_bell_diagonal",
        "qn_blp_measure",
        "qn_rhp_measure",
        "qn_status_message",
        "QN_STATUS_OK",
        "typedef struct QnModel QnModel;",
    ] {
        assert!(text.contains(sym), "header is missing `{sym}`");
    }
}
