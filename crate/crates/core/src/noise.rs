//! Classical noise processes driving the transverse coupling: random
//! telegraph noise (RTN) switching between +-1 at rate gamma, and a
//! stationary unit-variance Ornstein-Uhlenbeck (OU) process. Both share the
//! autocorrelation exp(-2 gamma |t - t'|) and the Lorentzian spectrum
//! 4 gamma / (4 gamma^2 + w^2).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::bloch::ModelParams;
use crate::Error;

/// Uniform time grid over [0, dt * n_steps]; samples live at the n_steps + 1
/// grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self, Error> {
        if !(dt > 0.0) || dt.is_infinite() {
            return Err(Error::InvalidConfig(format!("step size {dt} must be positive")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidConfig("need at least one step".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// dt = 0.05 / max(1, omega, gamma), raised to at least 200 steps over
    /// the horizon.
    pub fn default_for(p: &ModelParams, t_max: f64) -> Result<Self, Error> {
        if !(t_max > 0.0) {
            return Err(Error::InvalidConfig(format!("horizon {t_max} must be positive")));
        }
        let dt0 = 0.05 / p.omega.abs().max(p.gamma.abs()).max(1.0);
        let n = ((t_max / dt0).ceil() as usize).max(200);
        Self::new(t_max / n as f64, n)
    }

    pub fn t_max(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt).collect()
    }

    /// Points t_k + dt/2 for k < n_steps.
    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_steps)
            .map(|k| (k as f64 + 0.5) * self.dt)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Rtn,
    Ou,
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseKind::Rtn => "rtn",
            NoiseKind::Ou => "ou",
        })
    }
}

/// One realization sampled on a set of time points.
#[derive(Debug, Clone)]
pub struct NoiseTrajectory {
    pub kind: NoiseKind,
    pub values: Vec<f64>,
}

/// Ensemble size and master seed. Realization i draws from an independent
/// ChaCha stream derived from (master_seed, i), so ensembles are
/// reproducible for any thread count and any evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub master_seed: u64,
}

impl EnsembleConfig {
    pub fn new(n_realizations: usize, master_seed: u64) -> Self {
        Self {
            n_realizations,
            master_seed,
        }
    }
}

/// Default master seed used by the command-line tools.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// RTN values at the given increasing time points: start in +-1 with equal
/// probability, flip at exponential waiting times with rate gamma. The
/// recorded value at each point is the exact state of the process there, so
/// grid samples carry the exact joint law.
pub fn rtn_values_at(gamma: f64, times: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    if gamma == 0.0 {
        return vec![s; times.len()];
    }
    let exp = Exp::new(gamma).expect("positive rate");
    let mut next_flip: f64 = exp.sample(rng);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        while next_flip <= t {
            s = -s;
            next_flip += exp.sample(rng);
        }
        out.push(s);
    }
    out
}

/// Initial sign and ordered switch instants of one telegraph realization on
/// [0, t_max]. Consumes randomness exactly like `rtn_values_at` on a grid
/// ending at t_max, so the two views of a stream describe the same path.
pub fn rtn_switches(gamma: f64, t_max: f64, rng: &mut ChaCha8Rng) -> (f64, Vec<f64>) {
    let s0 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let mut flips = Vec::new();
    if gamma == 0.0 {
        return (s0, flips);
    }
    let exp = Exp::new(gamma).expect("positive rate");
    let mut t: f64 = exp.sample(rng);
    while t <= t_max {
        flips.push(t);
        t += exp.sample(rng);
    }
    (s0, flips)
}

/// Value of the switch path (s0, flips) at each of the given ordered times;
/// a switch at exactly t counts as having happened by t.
pub fn switch_values_at(s0: f64, flips: &[f64], times: &[f64]) -> Vec<f64> {
    let mut s = s0;
    let mut j = 0;
    times
        .iter()
        .map(|&t| {
            while j < flips.len() && flips[j] <= t {
                s = -s;
                j += 1;
            }
            s
        })
        .collect()
}

/// Stationary OU values at the given increasing time points, by the exact
/// one-step update B' = B e^(-2 gamma dt) + sqrt(1 - e^(-4 gamma dt)) xi.
pub fn ou_values_at(gamma: f64, times: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut prev: f64 = StandardNormal.sample(rng);
    let mut prev_t = match times.first() {
        Some(&t0) => {
            out.push(prev);
            t0
        }
        None => return out,
    };
    for &t in &times[1..] {
        let rho = (-2.0 * gamma * (t - prev_t)).exp();
        let xi: f64 = StandardNormal.sample(rng);
        prev = rho * prev + (1.0 - rho * rho).sqrt() * xi;
        prev_t = t;
        out.push(prev);
    }
    out
}

/// Telegraph realization on the grid points of `grid`.
pub fn sample_rtn(gamma: f64, grid: &TimeGrid, rng: &mut ChaCha8Rng) -> NoiseTrajectory {
    NoiseTrajectory {
        kind: NoiseKind::Rtn,
        values: rtn_values_at(gamma, &grid.times(), rng),
    }
}

/// OU realization on the grid points of `grid`.
pub fn sample_ou(gamma: f64, grid: &TimeGrid, rng: &mut ChaCha8Rng) -> NoiseTrajectory {
    NoiseTrajectory {
        kind: NoiseKind::Ou,
        values: ou_values_at(gamma, &grid.times(), rng),
    }
}

pub fn sample_noise(kind: NoiseKind, gamma: f64, grid: &TimeGrid, rng: &mut ChaCha8Rng) -> NoiseTrajectory {
    match kind {
        NoiseKind::Rtn => sample_rtn(gamma, grid, rng),
        NoiseKind::Ou => sample_ou(gamma, grid, rng),
    }
}

/// Power spectrum shared by both processes: 4 gamma / (4 gamma^2 + w^2),
/// normalized so that its inverse transform at lag 0 is 1.
pub fn lorentzian_spectrum(gamma: f64, w: f64) -> f64 {
    4.0 * gamma / (4.0 * gamma * gamma + w * w)
}
