//! Experiment runner behind the command line binary.
//!
//! Every command reads a flat key=value configuration (file entries first,
//! command-line flags override) and writes CSV. The `#`-prefixed metadata
//! header records the resolved configuration, so feeding an output file back
//! through `run --from` reproduces it byte for byte. Monte Carlo reductions
//! are chunked deterministically, which makes the files independent of the
//! worker thread count; `QNOISE_THREADS` only changes how fast they appear.
//!
//! Commands and their columns:
//! - `simulate`: single qubit; `time,nx,ny,nz` (analytic) plus `stderr` (mc)
//! - `correlations`: two qubits; `time,negativity,discord` plus `stderr` (mc)
//! - `nonmark`: `gamma,blp,blp_converged,rhp,rhp_converged` (per `measure`)
//! - `compare`: `gamma,mean_infidelity,is_optimum`
//! - `region`: `omega,gamma_lower,gamma_upper` (empty fields: no real region)
//! - `trajectory`: one realization; `time,b,nx,ny,nz`
//!
//! The `stderr` column bounds the standard error of every value column on
//! its row. Exit codes: 0 on success, 2 for configuration problems, 3 when
//! a computation reports non-convergence.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use rayon::prelude::*;

use crate::bloch::{
    bloch_from_density, density_from_bloch, diagonalize_correlation, ModelParams, TwoQubitBloch,
};
use crate::correlations::{
    bell_diagonal_probabilities, discord_bell_diagonal, negativity, optimize_gamma_rtn,
    tetrahedron_clamp,
};
use crate::montecarlo::{evolve_single_mc, evolve_two_mc, step_unitary, EnvironmentTopology};
use crate::noise::{
    rtn_switches, sample_noise, switch_values_at, trajectory_rng, EnsembleConfig, NoiseKind,
    TimeGrid, DEFAULT_SEED,
};
use crate::nonmarkov::{blp_measure, default_measure_grid, rhp_measure, BlpSearchConfig};
use crate::transfer::{
    apply_transfer_single, apply_transfer_two, real_region_boundaries, transfer_single_series,
    transfer_two_ce_series, transfer_two_ie_series,
};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentCommand {
    Simulate,
    Correlations,
    Nonmark,
    Compare,
    Region,
    Trajectory,
}

impl ExperimentCommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Correlations => "correlations",
            Self::Nonmark => "nonmark",
            Self::Compare => "compare",
            Self::Region => "region",
            Self::Trajectory => "trajectory",
        }
    }

    pub fn from_name(s: &str) -> Result<Self, Error> {
        match s {
            "simulate" => Ok(Self::Simulate),
            "correlations" => Ok(Self::Correlations),
            "nonmark" => Ok(Self::Nonmark),
            "compare" => Ok(Self::Compare),
            "region" => Ok(Self::Region),
            "trajectory" => Ok(Self::Trajectory),
            other => Err(Error::InvalidConfig(format!("unknown command `{other}`"))),
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Self::Simulate => &[
                "noise", "solver", "omega", "gamma", "state", "t_max", "dt", "steps", "n_traj",
                "seed", "output",
            ],
            Self::Correlations => &[
                "noise", "solver", "env", "omega", "gamma", "state", "t_max", "dt", "steps",
                "n_traj", "seed", "output",
            ],
            Self::Nonmark => &["omega", "measure", "gamma_list", "azimuth_samples", "output"],
            Self::Compare => &[
                "omega",
                "gamma_ou",
                "state",
                "horizon",
                "gamma_range",
                "n_traj",
                "seed",
                "output",
            ],
            Self::Region => &["omega_range", "output"],
            Self::Trajectory => &[
                "noise", "omega", "gamma", "state", "t_max", "dt", "steps", "seed", "index",
                "output",
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Analytic,
    Mc,
}

impl Solver {
    fn name(self) -> &'static str {
        match self {
            Self::Analytic => "analytic",
            Self::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureChoice {
    Blp,
    Rhp,
    Both,
}

impl MeasureChoice {
    fn name(self) -> &'static str {
        match self {
            Self::Blp => "blp",
            Self::Rhp => "rhp",
            Self::Both => "both",
        }
    }
}

fn parse_float(s: &str) -> Result<f64, Error> {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::InvalidConfig(format!(
            "expected a finite number, got `{t}`"
        ))),
    }
}

fn parse_count(s: &str) -> Result<usize, Error> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::InvalidConfig(format!("expected a point count, got `{}`", s.trim())))
}

fn parse_seed(s: &str) -> Result<u64, Error> {
    let t = s.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse::<u64>(),
    };
    parsed.map_err(|_| {
        Error::InvalidConfig(format!(
            "seed must be an unsigned integer (decimal or 0x hex), got `{t}`"
        ))
    })
}

/// Parses sweep syntax: comma-separated values and ranges `a..b[:n|:logn]`
/// (n defaults to 25, spacing linear). Returns the values together with a
/// normalized spelling that parses back to exactly the same floats.
pub fn parse_sweep(spec: &str) -> Result<(Vec<f64>, String), Error> {
    let mut values = Vec::new();
    let mut parts = Vec::new();
    for seg in spec.split(',') {
        let seg = seg.trim();
        if let Some(pos) = seg.find("..") {
            let a = parse_float(&seg[..pos])?;
            let rest = &seg[pos + 2..];
            let (b_str, count) = match rest.find(':') {
                Some(i) => (&rest[..i], Some(&rest[i + 1..])),
                None => (rest, None),
            };
            let b = parse_float(b_str)?;
            let (n, log) = match count {
                None => (25usize, false),
                Some(cs) => match cs.strip_prefix("log") {
                    Some(digits) => (parse_count(digits)?, true),
                    None => (parse_count(cs)?, false),
                },
            };
            if n < 2 {
                return Err(Error::InvalidConfig(format!(
                    "range `{seg}` needs at least two points"
                )));
            }
            if !(b > a) {
                return Err(Error::InvalidConfig(format!(
                    "range `{seg}` must have increasing endpoints"
                )));
            }
            if log && a <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "log spacing in `{seg}` needs positive endpoints"
                )));
            }
            for i in 0..n {
                let f = i as f64 / (n - 1) as f64;
                values.push(if log {
                    a * (b / a).powf(f)
                } else {
                    a + (b - a) * f
                });
            }
            let tag = if log { "log" } else { "" };
            parts.push(format!("{a}..{b}:{tag}{n}"));
        } else {
            let v = parse_float(seg)?;
            values.push(v);
            parts.push(format!("{v}"));
        }
    }
    Ok((values, parts.join(",")))
}

/// A plain interval `a..b` with 0 < a < b.
pub fn parse_interval(spec: &str) -> Result<(f64, f64), Error> {
    let pos = spec.find("..").ok_or_else(|| {
        Error::InvalidConfig(format!("expected an interval `a..b`, got `{spec}`"))
    })?;
    let a = parse_float(&spec[..pos])?;
    let b = parse_float(&spec[pos + 2..])?;
    if !(a > 0.0 && b > a) {
        return Err(Error::InvalidConfig(format!(
            "interval `{spec}` must satisfy 0 < a < b"
        )));
    }
    Ok((a, b))
}

#[derive(Debug, Clone)]
pub enum InitialState {
    Single(Vector3<f64>),
    Two(TwoQubitBloch),
    /// Maximally mixed; usable wherever either dimension is expected.
    Mixed,
}

impl InitialState {
    pub fn as_single(&self) -> Result<Vector3<f64>, Error> {
        match self {
            Self::Single(v) => Ok(*v),
            Self::Mixed => Ok(Vector3::zeros()),
            Self::Two(_) => Err(Error::InvalidConfig(
                "this command drives one qubit, but the state is two-qubit".into(),
            )),
        }
    }

    pub fn as_two(&self) -> Result<TwoQubitBloch, Error> {
        match self {
            Self::Two(s) => Ok(s.clone()),
            Self::Mixed => Ok(TwoQubitBloch::new(
                Vector3::zeros(),
                Vector3::zeros(),
                nalgebra::Matrix3::zeros(),
            )),
            Self::Single(_) => Err(Error::InvalidConfig(
                "this command drives two qubits, but the state is single-qubit".into(),
            )),
        }
    }
}

fn parse_triple(s: &str) -> Result<Vector3<f64>, Error> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "`{s}` is not a state: expected three comma-separated numbers, \
             `bloch:x,y,z`, `tetra:c1,c2,c3`, `werner:p`, `bell-psi-plus`, \
             `bell-phi-minus`, or `mixed`"
        )));
    }
    Ok(Vector3::new(
        parse_float(parts[0])?,
        parse_float(parts[1])?,
        parse_float(parts[2])?,
    ))
}

/// Accepts named states (`bell-psi-plus` for (|00>+|11>)/sqrt2,
/// `bell-phi-minus` for the singlet, `werner:p`, `mixed`), a Bloch vector
/// `x,y,z` (optionally prefixed `bloch:`), or Bell-diagonal correlation
/// coordinates `tetra:c1,c2,c3`.
pub fn parse_state(spec: &str) -> Result<InitialState, Error> {
    let spec = spec.trim();
    match spec {
        "mixed" => return Ok(InitialState::Mixed),
        "bell-psi-plus" => return Ok(InitialState::Two(TwoQubitBloch::bell_psi_plus())),
        "bell-phi-minus" => return Ok(InitialState::Two(TwoQubitBloch::bell_singlet())),
        _ => {}
    }
    if let Some(rest) = spec.strip_prefix("werner:") {
        let p = parse_float(rest)?;
        if !(-1.0 / 3.0 - 1e-12..=1.0 + 1e-12).contains(&p) {
            return Err(Error::NonPhysical(format!(
                "werner weight {p} is outside [-1/3, 1]"
            )));
        }
        return Ok(InitialState::Two(TwoQubitBloch::werner(p)));
    }
    if let Some(rest) = spec.strip_prefix("tetra:") {
        let coords = parse_triple(rest)?;
        bell_diagonal_probabilities(&coords)?;
        return Ok(InitialState::Two(TwoQubitBloch::bell_diagonal(coords)));
    }
    let rest = spec.strip_prefix("bloch:").unwrap_or(spec);
    let v = parse_triple(rest)?;
    if v.norm() > 1.0 + crate::EPS_TOL {
        return Err(Error::NonPhysical(format!(
            "Bloch vector of length {:.6} leaves the unit ball",
            v.norm()
        )));
    }
    Ok(InitialState::Single(v))
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: ExperimentCommand,
    pub omega: f64,
    pub gamma: f64,
    pub gamma_ou: f64,
    pub noise: NoiseKind,
    pub solver: Solver,
    pub env: EnvironmentTopology,
    pub state: String,
    pub dt: Option<f64>,
    pub steps: Option<usize>,
    pub t_max: Option<f64>,
    pub n_traj: usize,
    pub seed: u64,
    pub index: u64,
    pub measure: MeasureChoice,
    pub gamma_list: String,
    pub omega_range: String,
    pub gamma_range: (f64, f64),
    pub horizon: f64,
    pub azimuth_samples: usize,
    pub output: Option<PathBuf>,
}

fn default_state(cmd: ExperimentCommand) -> &'static str {
    match cmd {
        ExperimentCommand::Correlations => "bell-psi-plus",
        _ => "1,0,0",
    }
}

impl ExperimentConfig {
    /// Builds a config for `command` from ordered key=value entries; later
    /// entries override earlier ones and unknown keys are rejected. The
    /// `command` and `version` keys from replayed metadata are accepted.
    pub fn from_entries(
        command: ExperimentCommand,
        entries: &[(String, String)],
    ) -> Result<Self, Error> {
        let allowed = command.keys();
        let mut map = std::collections::HashMap::new();
        for (k, v) in entries {
            let key = k.trim().replace('-', "_");
            match key.as_str() {
                "command" => {
                    if v.trim() != command.name() {
                        return Err(Error::InvalidConfig(format!(
                            "config is for `{}` but `{}` was invoked",
                            v.trim(),
                            command.name()
                        )));
                    }
                }
                "version" => {}
                _ if allowed.contains(&key.as_str()) => {
                    map.insert(key, v.trim().to_string());
                }
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown key `{key}` for `{}`",
                        command.name()
                    )));
                }
            }
        }

        let opt_f64 = |k: &str| -> Result<Option<f64>, Error> {
            map.get(k).map(|s| parse_float(s)).transpose()
        };
        let opt_usize = |k: &str| -> Result<Option<usize>, Error> {
            map.get(k).map(|s| parse_count(s)).transpose()
        };
        let positive = |k: &str, v: f64| -> Result<f64, Error> {
            if v > 0.0 {
                Ok(v)
            } else {
                Err(Error::InvalidConfig(format!("{k} must be positive")))
            }
        };

        let omega = opt_f64("omega")?.unwrap_or(1.0);
        let gamma = opt_f64("gamma")?.unwrap_or(1.0);
        if gamma < 0.0 {
            return Err(Error::InvalidConfig("gamma must be nonnegative".into()));
        }
        let gamma_ou = opt_f64("gamma_ou")?.unwrap_or(1.0);
        if gamma_ou < 0.0 {
            return Err(Error::InvalidConfig("gamma_ou must be nonnegative".into()));
        }
        let noise = match map.get("noise").map(String::as_str) {
            None | Some("rtn") => NoiseKind::Rtn,
            Some("ou") => NoiseKind::Ou,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "noise must be `rtn` or `ou`, got `{other}`"
                )));
            }
        };
        let solver = match map.get("solver").map(String::as_str) {
            None => match noise {
                NoiseKind::Rtn => Solver::Analytic,
                NoiseKind::Ou => Solver::Mc,
            },
            Some("analytic") => {
                if noise == NoiseKind::Ou {
                    return Err(Error::InvalidConfig(
                        "no analytic propagator exists for ou noise; use solver=mc".into(),
                    ));
                }
                Solver::Analytic
            }
            Some("mc") => Solver::Mc,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "solver must be `analytic` or `mc`, got `{other}`"
                )));
            }
        };
        let env = match map.get("env").map(String::as_str) {
            None | Some("common") => EnvironmentTopology::Common,
            Some("independent") => EnvironmentTopology::Independent,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "env must be `common` or `independent`, got `{other}`"
                )));
            }
        };
        let state = map
            .get("state")
            .cloned()
            .unwrap_or_else(|| default_state(command).to_string());
        parse_state(&state)?;
        let dt = opt_f64("dt")?.map(|v| positive("dt", v)).transpose()?;
        let steps = match opt_usize("steps")? {
            Some(0) => return Err(Error::InvalidConfig("steps must be positive".into())),
            other => other,
        };
        let t_max = opt_f64("t_max")?.map(|v| positive("t_max", v)).transpose()?;
        let n_traj = opt_usize("n_traj")?.unwrap_or(10_000).max(1);
        let seed = match map.get("seed") {
            Some(s) => parse_seed(s)?,
            None => DEFAULT_SEED,
        };
        let index = match map.get("index") {
            Some(s) => parse_seed(s)?,
            None => 0,
        };
        let measure = match map.get("measure").map(String::as_str) {
            None | Some("both") => MeasureChoice::Both,
            Some("blp") => MeasureChoice::Blp,
            Some("rhp") => MeasureChoice::Rhp,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "measure must be `blp`, `rhp`, or `both`, got `{other}`"
                )));
            }
        };
        let raw_gamma_list = map
            .get("gamma_list")
            .map(String::as_str)
            .unwrap_or("0.01..100:log25");
        let (gamma_values, gamma_list) = parse_sweep(raw_gamma_list)?;
        if gamma_values.iter().any(|&g| g <= 0.0) {
            return Err(Error::InvalidConfig(
                "gamma_list entries must be positive".into(),
            ));
        }
        let raw_omega_range = map
            .get("omega_range")
            .map(String::as_str)
            .unwrap_or("0.001..0.35:36");
        let (omega_values, omega_range) = parse_sweep(raw_omega_range)?;
        if omega_values.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidConfig(
                "omega_range entries must be nonnegative".into(),
            ));
        }
        let gamma_range = match map.get("gamma_range") {
            Some(s) => parse_interval(s)?,
            None => (0.05, 20.0),
        };
        let horizon = positive("horizon", opt_f64("horizon")?.unwrap_or(10.0))?;
        let azimuth_samples = opt_usize("azimuth_samples")?.unwrap_or(180).max(1);
        let output = map.get("output").map(PathBuf::from);

        Ok(Self {
            command,
            omega,
            gamma,
            gamma_ou,
            noise,
            solver,
            env,
            state,
            dt,
            steps,
            t_max,
            n_traj,
            seed,
            index,
            measure,
            gamma_list,
            omega_range,
            gamma_range,
            horizon,
            azimuth_samples,
            output,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Vec<(String, String)>,
}

impl ResultTable {
    /// `#` metadata lines, a header row, one line per data row. NaN cells
    /// render as empty fields. Unix line endings throughout.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                if !v.is_nan() {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Rebuilds the configuration recorded in a CSV metadata header. Together
/// with [`run_command`] this closes the loop: the returned config rewrites
/// the file it came from byte for byte.
pub fn config_from_metadata(text: &str) -> Result<ExperimentConfig, Error> {
    let mut entries = Vec::new();
    let mut command = None;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else {
            break;
        };
        let rest = rest.trim_start();
        let Some(eq) = rest.find('=') else { continue };
        let key = rest[..eq].trim().to_string();
        let value = rest[eq + 1..].trim().to_string();
        if key == "command" {
            command = Some(ExperimentCommand::from_name(&value)?);
        }
        entries.push((key, value));
    }
    let command = command.ok_or_else(|| {
        Error::InvalidConfig("no command recorded in the metadata header".into())
    })?;
    ExperimentConfig::from_entries(command, &entries)
}

fn resolve_grid(cfg: &ExperimentConfig, p: &ModelParams) -> Result<TimeGrid, Error> {
    match (cfg.dt, cfg.steps) {
        (Some(dt), Some(n)) => TimeGrid::new(dt, n),
        (Some(dt), None) => {
            let t = cfg.t_max.unwrap_or(10.0);
            TimeGrid::new(dt, (t / dt).ceil().max(1.0) as usize)
        }
        (None, Some(n)) => {
            let t = cfg.t_max.unwrap_or(10.0);
            TimeGrid::new(t / n as f64, n)
        }
        (None, None) => TimeGrid::default_for(p, cfg.t_max.unwrap_or(10.0)),
    }
}

struct Meta(Vec<(String, String)>);

impl Meta {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self(vec![
            ("command".into(), cfg.command.name().into()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ])
    }

    fn push(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.0.push((key.into(), value.to_string()));
        self
    }
}

fn grid_meta(meta: &mut Meta, grid: &TimeGrid) {
    meta.push("dt", grid.dt).push("steps", grid.n_steps);
}

fn ensemble_meta(meta: &mut Meta, cfg: &ExperimentConfig) {
    meta.push("n_traj", cfg.n_traj)
        .push("seed", format!("{:#x}", cfg.seed));
}

/// Discord of a two-qubit state with maximally mixed marginals, evaluated
/// in the Bell-diagonal frame of its correlation matrix. Sampling means are
/// symmetrized and pulled back inside the state tetrahedron first.
fn pair_discord(s: &TwoQubitBloch) -> Result<f64, Error> {
    let sym = (s.c + s.c.transpose()) * 0.5;
    let (coords, _, _) = diagonalize_correlation(&sym)?;
    discord_bell_diagonal(&(coords * tetrahedron_clamp(&coords)))
}

fn cmd_simulate(cfg: &ExperimentConfig) -> Result<ResultTable, Error> {
    let p = ModelParams::new(cfg.omega, cfg.gamma);
    let n0 = parse_state(&cfg.state)?.as_single()?;
    let grid = resolve_grid(cfg, &p)?;
    let mut meta = Meta::new(cfg);
    meta.push("noise", cfg.noise)
        .push("solver", cfg.solver.name())
        .push("omega", cfg.omega)
        .push("gamma", cfg.gamma)
        .push("state", &cfg.state);
    grid_meta(&mut meta, &grid);
    let (columns, rows) = match cfg.solver {
        Solver::Analytic => {
            let series = transfer_single_series(&p, &grid)?;
            let rows = series
                .iter()
                .map(|tm| {
                    let n = apply_transfer_single(tm, &n0);
                    vec![tm.t, n.x, n.y, n.z]
                })
                .collect();
            (vec!["time", "nx", "ny", "nz"], rows)
        }
        Solver::Mc => {
            ensemble_meta(&mut meta, cfg);
            let ens = EnsembleConfig::new(cfg.n_traj, cfg.seed);
            let res = evolve_single_mc(&p, cfg.noise, &density_from_bloch(&n0), &grid, &ens)?;
            let rows = res
                .times
                .iter()
                .zip(res.states.iter().zip(&res.stderr))
                .map(|(&t, (rho, &se))| {
                    let n = bloch_from_density(rho);
                    // Bloch components are twice a density matrix element
                    vec![t, n.x, n.y, n.z, 2.0 * se]
                })
                .collect();
            (vec!["time", "nx", "ny", "nz", "stderr"], rows)
        }
    };
    Ok(ResultTable {
        columns: columns.into_iter().map(String::from).collect(),
        rows,
        metadata: meta.0,
    })
}

fn cmd_correlations(cfg: &ExperimentConfig) -> Result<ResultTable, Error> {
    let p = ModelParams::new(cfg.omega, cfg.gamma);
    let s0 = parse_state(&cfg.state)?.as_two()?;
    let grid = resolve_grid(cfg, &p)?;
    let env_name = match cfg.env {
        EnvironmentTopology::Common => "common",
        EnvironmentTopology::Independent => "independent",
    };
    let mut meta = Meta::new(cfg);
    meta.push("noise", cfg.noise)
        .push("solver", cfg.solver.name())
        .push("env", env_name)
        .push("omega", cfg.omega)
        .push("gamma", cfg.gamma)
        .push("state", &cfg.state);
    grid_meta(&mut meta, &grid);
    let (columns, rows) = match cfg.solver {
        Solver::Analytic => {
            let series = match cfg.env {
                EnvironmentTopology::Common => transfer_two_ce_series(&p, &grid)?,
                EnvironmentTopology::Independent => transfer_two_ie_series(&p, &grid)?,
            };
            let mut rows = Vec::with_capacity(series.len());
            for tm in &series {
                let s = apply_transfer_two(tm, &s0);
                let neg = negativity(&s.to_density())?;
                rows.push(vec![tm.t, neg, pair_discord(&s)?]);
            }
            (vec!["time", "negativity", "discord"], rows)
        }
        Solver::Mc => {
            ensemble_meta(&mut meta, cfg);
            let ens = EnsembleConfig::new(cfg.n_traj, cfg.seed);
            let res = evolve_two_mc(&p, cfg.noise, &s0.to_density(), &grid, &ens, cfg.env)?;
            let mut rows = Vec::with_capacity(res.times.len());
            for (k, &t) in res.times.iter().enumerate() {
                let s = TwoQubitBloch::from_density(&res.states[k]);
                let neg = negativity(&res.states[k])?;
                rows.push(vec![t, neg, pair_discord(&s)?, res.stderr[k]]);
            }
            (vec!["time", "negativity", "discord", "stderr"], rows)
        }
    };
    Ok(ResultTable {
        columns: columns.into_iter().map(String::from).collect(),
        rows,
        metadata: meta.0,
    })
}

fn cmd_nonmark(cfg: &ExperimentConfig) -> Result<ResultTable, Error> {
    let (gammas, _) = parse_sweep(&cfg.gamma_list)?;
    let mut meta = Meta::new(cfg);
    meta.push("omega", cfg.omega)
        .push("measure", cfg.measure.name())
        .push("gamma_list", &cfg.gamma_list);
    let mut columns = vec!["gamma".to_string()];
    if cfg.measure != MeasureChoice::Rhp {
        meta.push("azimuth_samples", cfg.azimuth_samples);
        columns.push("blp".into());
        columns.push("blp_converged".into());
    }
    if cfg.measure != MeasureChoice::Blp {
        columns.push("rhp".into());
        columns.push("rhp_converged".into());
    }
    let rows = gammas
        .par_iter()
        .map(|&g| -> Result<Vec<f64>, Error> {
            let p = ModelParams::new(cfg.omega, g);
            let mut row = vec![g];
            if cfg.measure != MeasureChoice::Rhp {
                let mut bcfg = BlpSearchConfig::default_for(&p)?;
                bcfg.azimuth_samples = cfg.azimuth_samples;
                let b = blp_measure(&p, &bcfg)?;
                row.push(b.value);
                row.push(if b.converged { 1.0 } else { 0.0 });
            }
            if cfg.measure != MeasureChoice::Blp {
                let r = rhp_measure(&p, &default_measure_grid(&p)?)?;
                row.push(r.value);
                row.push(if r.converged { 1.0 } else { 0.0 });
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ResultTable {
        columns,
        rows,
        metadata: meta.0,
    })
}

fn cmd_compare(cfg: &ExperimentConfig) -> Result<ResultTable, Error> {
    let n0 = parse_state(&cfg.state)?.as_single()?;
    let p_ou = ModelParams::new(cfg.omega, cfg.gamma_ou);
    let ens = EnsembleConfig::new(cfg.n_traj, cfg.seed);
    let res = optimize_gamma_rtn(
        &p_ou,
        &density_from_bloch(&n0),
        cfg.horizon,
        cfg.gamma_range,
        &ens,
    )?;
    let mut meta = Meta::new(cfg);
    meta.push("omega", cfg.omega)
        .push("gamma_ou", cfg.gamma_ou)
        .push("state", &cfg.state)
        .push("horizon", cfg.horizon)
        .push(
            "gamma_range",
            format!("{}..{}", cfg.gamma_range.0, cfg.gamma_range.1),
        );
    ensemble_meta(&mut meta, cfg);
    let mut rows: Vec<Vec<f64>> = res.scan.iter().map(|&(g, v)| vec![g, v, 0.0]).collect();
    rows.push(vec![res.gamma_star, res.value, 1.0]);
    Ok(ResultTable {
        columns: vec![
            "gamma".into(),
            "mean_infidelity".into(),
            "is_optimum".into(),
        ],
        rows,
        metadata: meta.0,
    })
}

fn cmd_region(cfg: &ExperimentConfig) -> Result<ResultTable, Error> {
    let (omegas, _) = parse_sweep(&cfg.omega_range)?;
    let mut meta = Meta::new(cfg);
    meta.push("omega_range", &cfg.omega_range);
    let rows = omegas
        .iter()
        .map(|&w| match real_region_boundaries(w) {
            Some((lo, hi)) => vec![w, lo, hi],
            None => vec![w, f64::NAN, f64::NAN],
        })
        .collect();
    Ok(ResultTable {
        columns: vec!["omega".into(), "gamma_lower".into(), "gamma_upper".into()],
        rows,
        metadata: meta.0,
    })
}

fn cmd_trajectory(cfg: &ExperimentConfig) -> Result<ResultTable, Error> {
    let p = ModelParams::new(cfg.omega, cfg.gamma);
    let n0 = parse_state(&cfg.state)?.as_single()?;
    let grid = resolve_grid(cfg, &p)?;
    let mut meta = Meta::new(cfg);
    meta.push("noise", cfg.noise)
        .push("omega", cfg.omega)
        .push("gamma", cfg.gamma)
        .push("state", &cfg.state);
    grid_meta(&mut meta, &grid);
    meta.push("seed", format!("{:#x}", cfg.seed))
        .push("index", cfg.index);

    let mut rng = trajectory_rng(cfg.seed, cfg.index);
    let times = grid.times();
    // telegraph paths are integrated exactly through their switch instants;
    // the displayed b column samples the same path at the grid points
    let (values, mut exact) = match cfg.noise {
        NoiseKind::Rtn => {
            let (s0, flips) = rtn_switches(p.gamma, grid.t_max(), &mut rng);
            let vals = switch_values_at(s0, &flips, &times);
            (
                vals,
                Some(crate::montecarlo::StepSequence::from_switch_path(
                    p.omega, grid.dt, s0, flips,
                )),
            )
        }
        NoiseKind::Ou => (sample_noise(cfg.noise, p.gamma, &grid, &mut rng).values, None),
    };
    let rho0 = density_from_bloch(&n0);
    let mut u = nalgebra::Matrix2::<crate::C64>::identity();
    let mut rows = Vec::with_capacity(times.len());
    rows.push(vec![times[0], values[0], n0.x, n0.y, n0.z]);
    for k in 0..grid.n_steps {
        u = match &mut exact {
            Some(seq) => seq.advance(k) * u,
            None => step_unitary(p.omega, values[k], grid.dt) * u,
        };
        let n = bloch_from_density(&(u * rho0 * u.adjoint()));
        rows.push(vec![times[k + 1], values[k + 1], n.x, n.y, n.z]);
    }
    Ok(ResultTable {
        columns: vec![
            "time".into(),
            "b".into(),
            "nx".into(),
            "ny".into(),
            "nz".into(),
        ],
        rows,
        metadata: meta.0,
    })
}

/// Runs one command to a table; writing it anywhere is the caller's job.
pub fn run_command(cfg: &ExperimentConfig) -> Result<ResultTable, Error> {
    match cfg.command {
        ExperimentCommand::Simulate => cmd_simulate(cfg),
        ExperimentCommand::Correlations => cmd_correlations(cfg),
        ExperimentCommand::Nonmark => cmd_nonmark(cfg),
        ExperimentCommand::Compare => cmd_compare(cfg),
        ExperimentCommand::Region => cmd_region(cfg),
        ExperimentCommand::Trajectory => cmd_trajectory(cfg),
    }
}

/// Parses a flat key=value config file. Blank lines and `#` comments are
/// skipped; keys are validated later against the command's whitelist.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>, Error> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(eq) = line.find('=') else {
            return Err(Error::InvalidConfig(format!(
                "config line {}: expected key=value, got `{line}`",
                lineno + 1
            )));
        };
        out.push((
            line[..eq].trim().to_string(),
            line[eq + 1..].trim().to_string(),
        ));
    }
    Ok(out)
}

#[derive(Parser)]
#[command(
    name = "qnoise",
    version,
    about = "Qubit dynamics under telegraph and Ornstein-Uhlenbeck noise"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Single-qubit evolution, analytic transfer matrix or Monte Carlo
    Simulate(KeyArgs),
    /// Two-qubit negativity and discord curves
    Correlations(KeyArgs),
    /// Trace-distance and entanglement memory measures over a rate sweep
    Nonmark(KeyArgs),
    /// Fit the telegraph rate that best mimics an OU-driven qubit
    Compare(KeyArgs),
    /// Boundaries of the all-real spectral region as omega varies
    Region(KeyArgs),
    /// One noise realization and the Bloch path it drives
    Trajectory(KeyArgs),
    /// Re-run the configuration recorded in a previous output file
    Run(ReplayArgs),
}

#[derive(Args)]
struct KeyArgs {
    /// Flat key=value config file; flags below override its entries
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// OU reference rate for `compare`
    #[arg(long)]
    gamma_ou: Option<f64>,
    /// rtn | ou
    #[arg(long)]
    noise: Option<String>,
    /// analytic | mc
    #[arg(long)]
    solver: Option<String>,
    /// common | independent
    #[arg(long)]
    env: Option<String>,
    /// Initial state; see `parse_state` forms
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    n_traj: Option<usize>,
    /// Master seed, decimal or 0x hex
    #[arg(long)]
    seed: Option<String>,
    /// Trajectory index within the ensemble
    #[arg(long)]
    index: Option<u64>,
    /// blp | rhp | both
    #[arg(long)]
    measure: Option<String>,
    /// Sweep of switching rates, e.g. 0.01..100:log25
    #[arg(long)]
    gamma_list: Option<String>,
    /// Sweep of energy splittings, e.g. 0.001..0.35:36
    #[arg(long)]
    omega_range: Option<String>,
    /// Search interval a..b for the fitted rate
    #[arg(long)]
    gamma_range: Option<String>,
    /// Averaging horizon for `compare`
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    azimuth_samples: Option<usize>,
    /// Output CSV path; omitted prints to stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Previous output file whose metadata header is the config
    #[arg(long, value_name = "FILE")]
    from: PathBuf,
    /// Output CSV path; omitted prints to stdout
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl KeyArgs {
    fn entries(&self) -> Result<Vec<(String, String)>, Error> {
        let mut e = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|err| {
                Error::InvalidConfig(format!("cannot read config {}: {err}", path.display()))
            })?;
            e.extend(parse_config_file(&text)?);
        }
        fn opt(e: &mut Vec<(String, String)>, key: &str, v: &Option<impl std::fmt::Display>) {
            if let Some(v) = v {
                e.push((key.to_string(), v.to_string()));
            }
        }
        opt(&mut e, "omega", &self.omega);
        opt(&mut e, "gamma", &self.gamma);
        opt(&mut e, "gamma_ou", &self.gamma_ou);
        opt(&mut e, "noise", &self.noise);
        opt(&mut e, "solver", &self.solver);
        opt(&mut e, "env", &self.env);
        opt(&mut e, "state", &self.state);
        opt(&mut e, "t_max", &self.t_max);
        opt(&mut e, "dt", &self.dt);
        opt(&mut e, "steps", &self.steps);
        opt(&mut e, "n_traj", &self.n_traj);
        opt(&mut e, "seed", &self.seed);
        opt(&mut e, "index", &self.index);
        opt(&mut e, "measure", &self.measure);
        opt(&mut e, "gamma_list", &self.gamma_list);
        opt(&mut e, "omega_range", &self.omega_range);
        opt(&mut e, "gamma_range", &self.gamma_range);
        opt(&mut e, "horizon", &self.horizon);
        opt(&mut e, "azimuth_samples", &self.azimuth_samples);
        if let Some(o) = &self.output {
            e.push(("output".to_string(), o.display().to_string()));
        }
        Ok(e)
    }
}

/// QNOISE_THREADS pins the global worker pool; unset keeps rayon's default.
/// Results never depend on it, only wall time does.
pub fn configure_threads_from_env() -> Result<(), String> {
    let Ok(v) = std::env::var("QNOISE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("QNOISE_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot size the thread pool: {e}"))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Unconverged(_) | Error::DegenerateRoots(_) => 3,
        _ => 2,
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    let cfg = match &cli.command {
        CliCommand::Simulate(a) => {
            ExperimentConfig::from_entries(ExperimentCommand::Simulate, &a.entries()?)?
        }
        CliCommand::Correlations(a) => {
            ExperimentConfig::from_entries(ExperimentCommand::Correlations, &a.entries()?)?
        }
        CliCommand::Nonmark(a) => {
            ExperimentConfig::from_entries(ExperimentCommand::Nonmark, &a.entries()?)?
        }
        CliCommand::Compare(a) => {
            ExperimentConfig::from_entries(ExperimentCommand::Compare, &a.entries()?)?
        }
        CliCommand::Region(a) => {
            ExperimentConfig::from_entries(ExperimentCommand::Region, &a.entries()?)?
        }
        CliCommand::Trajectory(a) => {
            ExperimentConfig::from_entries(ExperimentCommand::Trajectory, &a.entries()?)?
        }
        CliCommand::Run(r) => {
            let text = std::fs::read_to_string(&r.from).map_err(|err| {
                Error::InvalidConfig(format!("cannot read {}: {err}", r.from.display()))
            })?;
            let mut cfg = config_from_metadata(&text)?;
            cfg.output = r.output.clone();
            cfg
        }
    };
    let table = run_command(&cfg)?;
    let csv = table.to_csv();
    match &cfg.output {
        Some(path) => std::fs::write(path, &csv).map_err(|err| {
            Error::InvalidConfig(format!("cannot write {}: {err}", path.display()))
        })?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// Full command-line entry point; returns the process exit code.
pub fn main_entry() -> i32 {
    if let Err(msg) = configure_threads_from_env() {
        eprintln!("error: {msg}");
        return 2;
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
