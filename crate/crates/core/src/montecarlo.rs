//! Monte Carlo propagation under the Hamiltonian omega sigma_z + b(t) sigma_x.
//! Telegraph realizations are integrated exactly: the propagator multiplies
//! SU(2) rotations between switch instants, so the ensemble mean carries no
//! time-step bias at any switching rate. OU realizations freeze b over each
//! step, which is the integrator's only discretization error.

use nalgebra::{Matrix2, Matrix4};

use crate::bloch::{c, C64, ModelParams};
use crate::noise::{ou_values_at, rtn_switches, trajectory_rng, EnsembleConfig, NoiseKind, TimeGrid};
use crate::numeric::chunked_reduce;
use crate::Error;

/// Where the frozen OU value for step k is read. Telegraph paths are evolved
/// through their switch times exactly, so the scheme has no effect on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingScheme {
    /// b(t_k), matching the recorded trajectory samples.
    #[default]
    LeftEndpoint,
    /// b(t_k + dt/2).
    Midpoint,
}

/// Whether two qubits see one shared field or independent ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvironmentTopology {
    Common,
    Independent,
}

/// Ensemble mean of the evolved matrix at every grid time, with a
/// per-time standard error (largest over matrix entries).
#[derive(Debug, Clone)]
pub struct EvolutionResult<M> {
    pub times: Vec<f64>,
    pub states: Vec<M>,
    pub stderr: Vec<f64>,
    pub stderr_max: f64,
}

/// Exact propagator for H = omega sigma_z + b sigma_x over a step dt:
/// cos(r dt) I - i sin(r dt) (omega sigma_z + b sigma_x) / r with
/// r = sqrt(omega^2 + b^2).
pub fn step_unitary(omega: f64, b: f64, dt: f64) -> Matrix2<C64> {
    let r = (omega * omega + b * b).sqrt();
    if r == 0.0 {
        return Matrix2::identity();
    }
    let (s, co) = (r * dt).sin_cos();
    let sw = s * omega / r;
    let sb = s * b / r;
    Matrix2::new(c(co, -sw), c(0.0, -sb), c(0.0, -sb), c(co, sw))
}

/// Per-step propagator increments for one realization.
pub(crate) enum StepSequence {
    /// Telegraph path evolved exactly through its switch instants. The two
    /// fixed-sign full-step rotations are precomputed; steps containing a
    /// switch compose rotations over the sub-intervals between switches.
    Switches {
        omega: f64,
        dt: f64,
        plus: Matrix2<C64>,
        minus: Matrix2<C64>,
        sign: f64,
        flips: Vec<f64>,
        next: usize,
        step: usize,
    },
    /// Field frozen over each step at the sampled value.
    Frozen { omega: f64, dt: f64, values: Vec<f64> },
}

impl StepSequence {
    fn new(
        params: &ModelParams,
        kind: NoiseKind,
        scheme: SamplingScheme,
        grid: &TimeGrid,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Self {
        match kind {
            NoiseKind::Rtn => {
                let (sign, flips) = rtn_switches(params.gamma, grid.t_max(), rng);
                StepSequence::Switches {
                    omega: params.omega,
                    dt: grid.dt,
                    plus: step_unitary(params.omega, 1.0, grid.dt),
                    minus: step_unitary(params.omega, -1.0, grid.dt),
                    sign,
                    flips,
                    next: 0,
                    step: 0,
                }
            }
            NoiseKind::Ou => {
                let pts = match scheme {
                    SamplingScheme::LeftEndpoint => grid.times(),
                    SamplingScheme::Midpoint => grid.midpoints(),
                };
                StepSequence::Frozen {
                    omega: params.omega,
                    dt: grid.dt,
                    values: ou_values_at(params.gamma, &pts, rng),
                }
            }
        }
    }

    /// Exact stepper for a switch path the caller already holds, for
    /// single-trajectory views that also display the path itself.
    pub(crate) fn from_switch_path(omega: f64, dt: f64, sign: f64, flips: Vec<f64>) -> Self {
        StepSequence::Switches {
            omega,
            dt,
            plus: step_unitary(omega, 1.0, dt),
            minus: step_unitary(omega, -1.0, dt),
            sign,
            flips,
            next: 0,
            step: 0,
        }
    }

    /// Propagator across step k, for k counting up from 0 on each call.
    pub(crate) fn advance(&mut self, k: usize) -> Matrix2<C64> {
        match self {
            StepSequence::Switches {
                omega,
                dt,
                plus,
                minus,
                sign,
                flips,
                next,
                step,
            } => {
                debug_assert_eq!(*step, k);
                let t0 = *step as f64 * *dt;
                let t1 = (*step + 1) as f64 * *dt;
                *step += 1;
                if *next >= flips.len() || flips[*next] > t1 {
                    return if *sign > 0.0 { *plus } else { *minus };
                }
                let mut u = Matrix2::identity();
                let mut t_cur = t0;
                while *next < flips.len() && flips[*next] <= t1 {
                    u = step_unitary(*omega, *sign, flips[*next] - t_cur) * u;
                    t_cur = flips[*next];
                    *sign = -*sign;
                    *next += 1;
                }
                step_unitary(*omega, *sign, t1 - t_cur) * u
            }
            StepSequence::Frozen { omega, dt, values } => step_unitary(*omega, values[k], *dt),
        }
    }
}

struct Accum<const D: usize> {
    sum: Vec<nalgebra::SMatrix<C64, D, D>>,
    sumsq: Vec<nalgebra::SMatrix<f64, D, D>>,
}

impl<const D: usize> Accum<D> {
    fn zero(n_times: usize) -> Self {
        Self {
            sum: vec![nalgebra::SMatrix::zeros(); n_times],
            sumsq: vec![nalgebra::SMatrix::zeros(); n_times],
        }
    }

    fn add(&mut self, k: usize, m: &nalgebra::SMatrix<C64, D, D>) {
        self.sum[k] += m;
        for i in 0..D {
            for j in 0..D {
                let z = m[(i, j)];
                self.sumsq[k][(i, j)] += z.re * z.re + z.im * z.im;
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
        self
    }

    fn finish(self, times: Vec<f64>, n: usize) -> EvolutionResult<nalgebra::SMatrix<C64, D, D>> {
        let nf = n as f64;
        let mut states = Vec::with_capacity(self.sum.len());
        let mut stderr = Vec::with_capacity(self.sum.len());
        let mut worst = 0.0f64;
        for (s, sq) in self.sum.iter().zip(&self.sumsq) {
            let mean = s / c(nf, 0.0);
            let mut se_k = 0.0f64;
            if n > 1 {
                for i in 0..D {
                    for j in 0..D {
                        let m = mean[(i, j)];
                        let var = (sq[(i, j)] - nf * (m.re * m.re + m.im * m.im)) / (nf - 1.0);
                        se_k = se_k.max((var.max(0.0) / nf).sqrt());
                    }
                }
            }
            worst = worst.max(se_k);
            states.push(mean);
            stderr.push(se_k);
        }
        EvolutionResult {
            times,
            states,
            stderr,
            stderr_max: worst,
        }
    }
}

/// Mean over realizations of U(t) m0 U(t)^dagger for a single qubit. The
/// seed matrix need not be a density matrix; traceless differences evolve
/// the same way, which is how paired trajectories are compared.
pub fn evolve_mean_conjugation(
    params: &ModelParams,
    kind: NoiseKind,
    m0: &Matrix2<C64>,
    grid: &TimeGrid,
    ens: &EnsembleConfig,
    scheme: SamplingScheme,
) -> Result<EvolutionResult<Matrix2<C64>>, Error> {
    if ens.n_realizations == 0 {
        return Err(Error::InvalidConfig("ensemble size must be positive".into()));
    }
    let n_times = grid.n_steps + 1;
    let acc = chunked_reduce(
        ens.n_realizations,
        |range| {
            let mut acc = Accum::<2>::zero(n_times);
            for i in range {
                let mut rng = trajectory_rng(ens.master_seed, i as u64);
                let mut seq = StepSequence::new(params, kind, scheme, grid, &mut rng);
                let mut u: Matrix2<C64> = Matrix2::identity();
                acc.add(0, m0);
                for k in 0..grid.n_steps {
                    u = seq.advance(k) * u;
                    acc.add(k + 1, &(u * m0 * u.adjoint()));
                }
            }
            acc
        },
        Accum::merge,
    )
    .expect("nonzero ensemble");
    Ok(acc.finish(grid.times(), ens.n_realizations))
}

/// Ensemble-mean density matrix of one qubit, starting from rho0.
pub fn evolve_single_mc(
    params: &ModelParams,
    kind: NoiseKind,
    rho0: &Matrix2<C64>,
    grid: &TimeGrid,
    ens: &EnsembleConfig,
) -> Result<EvolutionResult<Matrix2<C64>>, Error> {
    crate::bloch::check_density2(rho0)?;
    evolve_mean_conjugation(params, kind, rho0, grid, ens, SamplingScheme::default())
}

pub fn evolve_single_mc_with(
    params: &ModelParams,
    kind: NoiseKind,
    rho0: &Matrix2<C64>,
    grid: &TimeGrid,
    ens: &EnsembleConfig,
    scheme: SamplingScheme,
) -> Result<EvolutionResult<Matrix2<C64>>, Error> {
    crate::bloch::check_density2(rho0)?;
    evolve_mean_conjugation(params, kind, rho0, grid, ens, scheme)
}

fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Ensemble-mean density matrix of two non-interacting qubits, each coupled
/// transversally to telegraph or OU noise. With a common environment both
/// qubits see the same realization; with independent environments each
/// trajectory draws two.
pub fn evolve_two_mc(
    params: &ModelParams,
    kind: NoiseKind,
    rho0: &Matrix4<C64>,
    grid: &TimeGrid,
    ens: &EnsembleConfig,
    topology: EnvironmentTopology,
) -> Result<EvolutionResult<Matrix4<C64>>, Error> {
    evolve_two_mc_with(params, kind, rho0, grid, ens, topology, SamplingScheme::default())
}

pub fn evolve_two_mc_with(
    params: &ModelParams,
    kind: NoiseKind,
    rho0: &Matrix4<C64>,
    grid: &TimeGrid,
    ens: &EnsembleConfig,
    topology: EnvironmentTopology,
    scheme: SamplingScheme,
) -> Result<EvolutionResult<Matrix4<C64>>, Error> {
    crate::bloch::check_density4(rho0)?;
    if ens.n_realizations == 0 {
        return Err(Error::InvalidConfig("ensemble size must be positive".into()));
    }
    let n_times = grid.n_steps + 1;
    let acc = chunked_reduce(
        ens.n_realizations,
        |range| {
            let mut acc = Accum::<4>::zero(n_times);
            for i in range {
                match topology {
                    EnvironmentTopology::Common => {
                        // both qubits ride the same realization, so one step
                        // increment drives them in lockstep
                        let mut rng = trajectory_rng(ens.master_seed, i as u64);
                        let mut seq = StepSequence::new(params, kind, scheme, grid, &mut rng);
                        let mut ua: Matrix2<C64> = Matrix2::identity();
                        acc.add(0, rho0);
                        for k in 0..grid.n_steps {
                            ua = seq.advance(k) * ua;
                            let u = kron2(&ua, &ua);
                            acc.add(k + 1, &(u * rho0 * u.adjoint()));
                        }
                    }
                    EnvironmentTopology::Independent => {
                        let mut ra = trajectory_rng(ens.master_seed, 2 * i as u64);
                        let mut rb = trajectory_rng(ens.master_seed, 2 * i as u64 + 1);
                        let mut seq_a = StepSequence::new(params, kind, scheme, grid, &mut ra);
                        let mut seq_b = StepSequence::new(params, kind, scheme, grid, &mut rb);
                        let mut ua: Matrix2<C64> = Matrix2::identity();
                        let mut ub: Matrix2<C64> = Matrix2::identity();
                        acc.add(0, rho0);
                        for k in 0..grid.n_steps {
                            ua = seq_a.advance(k) * ua;
                            ub = seq_b.advance(k) * ub;
                            let u = kron2(&ua, &ub);
                            acc.add(k + 1, &(u * rho0 * u.adjoint()));
                        }
                    }
                }
            }
            acc
        },
        Accum::merge,
    )
    .expect("nonzero ensemble");
    Ok(acc.finish(grid.times(), ens.n_realizations))
}
