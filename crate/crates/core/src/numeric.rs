//! Shared numerics: closed-form cubic roots with Newton polish, a
//! golden-section line search, a deterministic chunked parallel reduction,
//! and spectral peak estimation for oscillation frequencies.

use nalgebra::Complex;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::bloch::C64;

/// Roots of x^3 + a2 x^2 + a1 x + a0 (real coefficients), polished by two
/// Newton steps. Ordered by descending real part, ties by ascending
/// imaginary part.
pub fn cubic_roots(a2: f64, a1: f64, a0: f64) -> [C64; 3] {
    let a2c = Complex::new(a2, 0.0);
    let third = a2 / 3.0;
    let p = a1 - a2 * a2 / 3.0;
    let q = 2.0 * a2 * a2 * a2 / 27.0 - a2 * a1 / 3.0 + a0;

    let mut roots = if p == 0.0 && q == 0.0 {
        [Complex::new(-third, 0.0); 3]
    } else {
        let disc = Complex::new((q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0), 0.0);
        let s = disc.sqrt();
        let t1 = Complex::new(-q / 2.0, 0.0) + s;
        let t2 = Complex::new(-q / 2.0, 0.0) - s;
        let u = if t1.norm() >= t2.norm() { t1.cbrt() } else { t2.cbrt() };
        let v = -Complex::new(p / 3.0, 0.0) / u;
        let zeta = Complex::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let mut r = [Complex::new(0.0, 0.0); 3];
        let mut w = Complex::new(1.0, 0.0);
        for root in &mut r {
            *root = u * w + v * w.conj() - third;
            w *= zeta;
        }
        r
    };

    for r in &mut roots {
        for _ in 0..2 {
            let f = ((*r + a2c) * *r + a1) * *r + a0;
            let df = (*r * 3.0 + a2c * 2.0) * *r + a1;
            if df.norm() > 1e-300 {
                *r -= f / df;
            }
        }
    }

    // Conjugate pairs carry O(eps) real-part noise; snap near-ties so the
    // ordering is stable.
    let scale = roots.iter().fold(1.0f64, |a, r| a.max(r.norm()));
    roots.sort_by(|x, y| {
        let re_cmp = if (x.re - y.re).abs() <= 1e-9 * scale {
            std::cmp::Ordering::Equal
        } else {
            y.re.partial_cmp(&x.re).unwrap()
        };
        re_cmp.then(x.im.partial_cmp(&y.im).unwrap())
    });
    roots
}

/// |f(x)| of the monic cubic at x.
pub fn cubic_residual(a2: f64, a1: f64, a0: f64, x: C64) -> f64 {
    (((x + a2) * x + a1) * x + a0).norm()
}

/// Backward-relative residual: |f(x)| scaled by the magnitude of the terms
/// that were summed, which is the resolution floating point actually offers.
pub fn cubic_residual_relative(a2: f64, a1: f64, a0: f64, x: C64) -> f64 {
    let m = x.norm();
    let scale = m * m * m + (a2 * m * m).abs() + (a1 * m).abs() + a0.abs();
    cubic_residual(a2, a1, a0, x) / scale.max(1.0)
}

/// Golden-section minimizer on [a, b]; f must be unimodal there for the
/// bracket to be meaningful. Deterministic.
pub fn golden_min(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..300 {
        if hi - lo < tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, f(mid))
}

/// Number of items each parallel work unit covers in ensemble reductions.
/// Fixed so the reduction tree, and therefore the floating-point result,
/// does not depend on the thread count.
pub const REDUCE_CHUNK: usize = 256;

/// Map fixed index ranges in parallel, then fold the partials pairwise in
/// index order. Bitwise deterministic for any rayon pool size.
pub fn chunked_reduce<R, M, C>(n: usize, map: M, combine: C) -> Option<R>
where
    R: Send,
    M: Fn(std::ops::Range<usize>) -> R + Sync,
    C: Fn(R, R) -> R,
{
    if n == 0 {
        return None;
    }
    let ranges: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(REDUCE_CHUNK)
        .map(|s| s..(s + REDUCE_CHUNK).min(n))
        .collect();
    let mut parts: Vec<R> = ranges.into_par_iter().map(&map).collect();
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(x) = it.next() {
            match it.next() {
                Some(y) => next.push(combine(x, y)),
                None => next.push(x),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// Dominant angular frequency of a uniformly sampled signal, from the peak
/// of the Hann-windowed periodogram with parabolic bin refinement. Returns
/// 0 when no interior peak exists.
pub fn dominant_angular_frequency(dt: f64, values: &[f64]) -> f64 {
    let n = values.len();
    if n < 8 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<C64> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos());
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf.iter().take(n / 2).map(|z| z.norm_sqr()).collect();
    let mut best = 1usize;
    for j in 2..power.len() {
        if power[j] > power[best] {
            best = j;
        }
    }
    if power[best] == 0.0 {
        return 0.0;
    }
    let mut jstar = best as f64;
    if best + 1 < power.len() && best >= 1 {
        let (pm, p0, pp) = (power[best - 1], power[best], power[best + 1]);
        let denom = pm - 2.0 * p0 + pp;
        if denom.abs() > 1e-300 {
            jstar += 0.5 * (pm - pp) / denom;
        }
    }
    2.0 * std::f64::consts::PI * jstar / (n as f64 * dt)
}

/// Least-squares line through (x, y) points; returns (slope, intercept).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}
