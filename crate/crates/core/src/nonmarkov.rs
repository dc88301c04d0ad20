//! Memory measures for the averaged single-qubit map: integrated trace
//! distance revivals maximized over state pairs, integrated negativity
//! revivals of one half of an entangled pair, and a Monte Carlo trace
//! distance probe for noise kinds without an analytic transfer matrix.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::bloch::{density_from_bloch, ModelParams, TwoQubitBloch};
use crate::correlations::{negativity, MeasureCurve};
use crate::montecarlo::{evolve_mean_conjugation, SamplingScheme};
use crate::noise::{EnsembleConfig, NoiseKind, TimeGrid};
use crate::numeric::golden_min;
use crate::transfer::{generator_spectrum, transfer_single_series, Transfer3};
use crate::Error;

/// Absolute floor for the tail test on a measure curve.
pub const TAIL_EPS: f64 = 1e-6;

/// Hard cap on measure-grid length. Horizons past the cap are truncated
/// rather than coarsened, so oscillations stay resolved and the tail flag
/// reports what was cut off.
pub const MAX_MEASURE_STEPS: usize = 60_000;

const MIN_MEASURE_STEPS: usize = 200;

// exp(-14.5) < 1e-6: revivals beyond the default horizon are below TAIL_EPS.
const HORIZON_EFOLDS: f64 = 14.5;

/// Grid sized from the generator spectrum: at least 40 samples per period of
/// the fastest oscillation, long enough for the slowest oscillatory mode to
/// decay through 14.5 e-folds and for two full periods of the slowest one.
pub fn default_measure_grid(p: &ModelParams) -> Result<TimeGrid, Error> {
    if p.gamma <= 0.0 {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    let mut rate_min = f64::INFINITY;
    let mut rate_osc = f64::INFINITY;
    let mut im_min = f64::INFINITY;
    let mut im_max = 0.0f64;
    for ev in generator_spectrum(p) {
        // decaying modes of exp(-tP) have positive real part; a conserved
        // component (omega = 0) sits at zero and sets no timescale
        let rate = ev.re.abs();
        if rate <= 1e-12 {
            continue;
        }
        rate_min = rate_min.min(rate);
        if ev.im.abs() > 1e-10 {
            rate_osc = rate_osc.min(rate);
            im_min = im_min.min(ev.im.abs());
            im_max = im_max.max(ev.im.abs());
        }
    }
    let mut dt = 0.05 / p.omega.abs().max(p.gamma).max(1.0);
    let horizon = if rate_osc.is_finite() {
        dt = dt.min(2.0 * PI / im_max / 40.0);
        (HORIZON_EFOLDS / rate_osc).max(2.2 * 2.0 * PI / im_min)
    } else {
        // monotone spectra produce no revivals; any horizon gives value zero
        HORIZON_EFOLDS / rate_min
    };
    let n = ((horizon / dt).ceil() as usize)
        .max(MIN_MEASURE_STEPS)
        .min(MAX_MEASURE_STEPS);
    TimeGrid::new(dt, n)
}

/// Search settings for the trace-distance measure.
#[derive(Debug, Clone)]
pub struct BlpSearchConfig {
    /// Equator samples on [0, pi); antipodal pairs repeat with period pi.
    pub azimuth_samples: usize,
    /// Bracket width in radians at which angle refinement stops.
    pub refinement_tol: f64,
    /// Increments are summed for grid times up to this horizon.
    pub horizon: f64,
    pub grid: TimeGrid,
}

impl BlpSearchConfig {
    pub fn default_for(p: &ModelParams) -> Result<Self, Error> {
        let grid = default_measure_grid(p)?;
        Ok(Self {
            azimuth_samples: 180,
            refinement_tol: 1e-4,
            horizon: grid.t_max(),
            grid,
        })
    }
}

/// Outcome of a memory measure. `value` is the summed positive increment of
/// the stored curve, so value = 0 exactly when the curve never rises.
#[derive(Debug, Clone)]
pub struct NonMarkovResult {
    pub value: f64,
    /// Antipodal Bloch pair attaining the value; None for the channel
    /// measure, which needs no optimization.
    pub optimal_pair: Option<(Vector3<f64>, Vector3<f64>)>,
    pub curve: MeasureCurve,
    /// False when the tail window still accumulates increments beyond
    /// max(TAIL_EPS, 1e-4 * value), meaning the horizon cut revivals off.
    pub converged: bool,
    /// Summed |increment| of the negativity curve. The positive-part sum is
    /// the measure proper; this diagnostic stays nonzero even for monotone
    /// decay. None for trace-distance results.
    pub total_variation: Option<f64>,
}

/// Trace distance between the antipodal pure pair along u at each grid time.
/// The pair (u, -u) has separation 2u, so D(t) collapses to |T(t) u|.
pub fn pair_distance_curve(series: &[Transfer3], u: &Vector3<f64>) -> Vec<f64> {
    series.iter().map(|tr| (tr.entries * u).norm()).collect()
}

/// Sum of positive consecutive differences.
pub fn positive_increment_sum(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum()
}

fn measure_converged(values: &[f64], value: f64) -> bool {
    let w = (values.len() / 20).max(10).min(values.len());
    let tail = positive_increment_sum(&values[values.len() - w..]);
    tail <= (1e-4 * value).max(TAIL_EPS)
}

fn unit_from_angles(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(
        theta.sin() * phi.cos(),
        theta.sin() * phi.sin(),
        theta.cos(),
    )
}

/// Trace-distance memory measure, maximized over antipodal pure pairs.
///
/// An equator scan seeds golden-section refinement of the azimuth, then the
/// polar angle is refined without constraint. The angle dependence is not
/// always smooth, so every refinement stage is treated as a candidate and
/// the best scoring one wins; ties keep the earlier, coarser candidate, so
/// the result does not depend on thread count.
pub fn blp_measure(p: &ModelParams, cfg: &BlpSearchConfig) -> Result<NonMarkovResult, Error> {
    if p.gamma <= 0.0 {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    if cfg.azimuth_samples == 0 {
        return Err(Error::InvalidConfig("azimuth_samples must be positive".into()));
    }
    if !(cfg.refinement_tol > 0.0) {
        return Err(Error::InvalidConfig("refinement_tol must be positive".into()));
    }
    let k_max = ((cfg.horizon / cfg.grid.dt) + 1e-9).floor() as usize;
    if k_max < 1 {
        return Err(Error::InvalidConfig(
            "horizon is shorter than one grid step".into(),
        ));
    }
    let k_max = k_max.min(cfg.grid.n_steps);
    let series_full = transfer_single_series(p, &cfg.grid)?;
    let series = &series_full[..=k_max];
    let objective = |theta: f64, phi: f64| {
        positive_increment_sum(&pair_distance_curve(series, &unit_from_angles(theta, phi)))
    };

    let step = PI / cfg.azimuth_samples as f64;
    let scanned: Vec<f64> = (0..cfg.azimuth_samples)
        .into_par_iter()
        .map(|i| objective(FRAC_PI_2, i as f64 * step))
        .collect();
    let mut best_i = 0;
    for (i, &v) in scanned.iter().enumerate() {
        if v > scanned[best_i] {
            best_i = i;
        }
    }
    let phi0 = best_i as f64 * step;

    let (phi1, _) = golden_min(
        |phi| -objective(FRAC_PI_2, phi),
        phi0 - step,
        phi0 + step,
        cfg.refinement_tol,
    );
    let (theta1, _) = golden_min(
        |th| -objective(th, phi1),
        FRAC_PI_2 - 0.5,
        FRAC_PI_2 + 0.5,
        cfg.refinement_tol,
    );
    let (phi2, _) = golden_min(
        |phi| -objective(theta1, phi),
        phi1 - step,
        phi1 + step,
        cfg.refinement_tol,
    );

    let mut best_angles = (FRAC_PI_2, phi0);
    let mut best_value = scanned[best_i];
    for cand in [(FRAC_PI_2, phi1), (theta1, phi1), (theta1, phi2)] {
        let v = objective(cand.0, cand.1);
        if v > best_value {
            best_value = v;
            best_angles = cand;
        }
    }

    let u = unit_from_angles(best_angles.0, best_angles.1);
    let values = pair_distance_curve(series, &u);
    let converged = measure_converged(&values, best_value);
    Ok(NonMarkovResult {
        value: best_value,
        optimal_pair: Some((u, -u)),
        curve: MeasureCurve {
            times: cfg.grid.times()[..=k_max].to_vec(),
            values,
        },
        converged,
        total_variation: None,
    })
}

/// Entanglement-flow memory measure. One side of a maximally entangled pair
/// passes through the averaged map and revivals of negativity are summed;
/// no optimization is involved, so repeated runs agree bitwise.
pub fn rhp_measure(p: &ModelParams, grid: &TimeGrid) -> Result<NonMarkovResult, Error> {
    if p.gamma <= 0.0 {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    let series = transfer_single_series(p, grid)?;
    let probe = TwoQubitBloch::bell_diagonal(Vector3::new(1.0, -1.0, 1.0));
    let mut values = Vec::with_capacity(series.len());
    for tr in &series {
        let rho = apply_channel_one_side(tr, &probe).to_density();
        values.push(negativity(&rho)?);
    }
    let value = positive_increment_sum(&values);
    let total_variation = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let converged = measure_converged(&values, value);
    Ok(NonMarkovResult {
        value,
        optimal_pair: None,
        curve: MeasureCurve {
            times: grid.times(),
            values,
        },
        converged,
        total_variation: Some(total_variation),
    })
}

/// Noise acting on qubit A only: a -> T a, b -> b, C -> T C.
pub fn apply_channel_one_side(tr: &Transfer3, s: &TwoQubitBloch) -> TwoQubitBloch {
    TwoQubitBloch::new(tr.entries * s.a, s.b, tr.entries * s.c)
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub curve: MeasureCurve,
    /// Summed positive increments of the sampled trace distance; a lower
    /// bound on the pair-optimized measure.
    pub revival_sum: f64,
    /// Three times the worst elementwise standard error of the evolved
    /// difference operator.
    pub noise_threshold: f64,
    /// True when the detected increments clear the noise threshold.
    pub conclusive: bool,
}

/// Monte Carlo trace distance for one chosen state pair under OU noise.
///
/// The pair difference is conjugated through shared realizations, so both
/// states see identical noise and the sampled curve is smooth in time. The
/// difference operator stays traceless Hermitian, where the trace norm has
/// the closed form 2 sqrt(a^2 + |b|^2) from the diagonal a and corner b.
pub fn trace_distance_probe_ou(
    p: &ModelParams,
    n1: &Vector3<f64>,
    n2: &Vector3<f64>,
    grid: &TimeGrid,
    ens: &EnsembleConfig,
) -> Result<ProbeOutcome, Error> {
    for n in [n1, n2] {
        if n.norm() > 1.0 + crate::EPS_TOL {
            return Err(Error::NonPhysical(format!(
                "Bloch vector of length {} leaves the unit ball",
                n.norm()
            )));
        }
    }
    let delta0 = density_from_bloch(n1) - density_from_bloch(n2);
    let res = evolve_mean_conjugation(
        p,
        NoiseKind::Ou,
        &delta0,
        grid,
        ens,
        SamplingScheme::default(),
    )?;
    let values: Vec<f64> = res
        .states
        .iter()
        .map(|m| (m[(0, 0)].re.powi(2) + m[(0, 1)].norm_sqr()).sqrt())
        .collect();
    let revival_sum = positive_increment_sum(&values);
    let noise_threshold = 3.0 * res.stderr_max;
    Ok(ProbeOutcome {
        conclusive: revival_sum > noise_threshold,
        curve: MeasureCurve {
            times: res.times,
            values,
        },
        revival_sum,
        noise_threshold,
    })
}
