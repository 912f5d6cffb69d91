//! Run configuration, orchestration and file output.
//!
//! A run is described by a plain `key = value` file (`#` starts a comment).
//! Every subcommand starts from its own defaults, which reproduce the
//! published experiment settings; keys that the subcommand does not use are
//! rejected.
//!
//! | key | meaning |
//! |---|---|
//! | `seed` | RNG seed (particles, random initial fields) |
//! | `t_end` | final time |
//! | `dt` | time step (not for `kinetic1d`, whose step follows from `cfl`) |
//! | `snapshot_stride` | steps between written snapshots |
//! | `formats` | comma separated subset of `csv`, `pgm` |
//! | `domain.side` | torus side `L` |
//! | `domain.dim` | 1 or 2 (particles only) |
//! | `kernel.profile` | `indicator` or `bump` |
//! | `kernel.radius` | sampling radius `R` |
//! | `kernel.cone` | `full`, `forward`, or the cosine threshold `cos α` |
//! | `kernel.normalization` | `raw` or `unit` |
//! | `noise` | `G`: `exp_decay(a)`, `constant(c)`, `hard_cutoff(s0)` or `hard_cutoff(s0, level)` |
//! | `damping` | `H`: `constant(c)` or `linear(c0, c1)` |
//! | `particles.n`, `particles.cluster_radius` | ensemble size, linking distance |
//! | `grid.m` | grid points per axis (`pde1d`, `pde2d`) |
//! | `solver.tolerance`, `steady_threshold` | linear solve residual, steady-state test |
//! | `init`, `init.rho0`, `init.amplitude`, `init.mode` | initial datum |
//! | `grid.nx`, `velocity.min`, `velocity.max`, `velocity.dv`, `cfl` | kinetic grid |
//! | `rho0`, `max_mode` | constant state and mode range (`stability`) |
//!
//! Output goes to a staging directory next to the target and is moved into
//! place only after the run succeeded.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tempfile::TempDir;

use crate::error::{Error, Result};
use crate::geometry::TorusGeometry;
use crate::kernel::{Cone, KernelSpec, Normalization, Profile};
use crate::kinetic::{run_kinetic, KineticConfig, MomentRecord, PhaseField};
use crate::meanfield::{
    aggregate_count, aggregate_count_2d, random_initial_field, run_pde, DensityField, PdeSimConfig,
};
use crate::particles::{run_particles, ModelOrder, ParticleSimConfig, Snapshot};
use crate::response::{Response, ResponseFunctions};
use crate::stability::{classify_both, StabilityReport};

/// Relative excess over the mean that marks a grid cell as part of an
/// aggregate in run summaries.
pub const AGGREGATE_LEVEL: f64 = 0.25;

const COMMON_KEYS: &[&str] = &[
    "seed",
    "formats",
    "domain.side",
    "kernel.profile",
    "kernel.radius",
    "kernel.cone",
    "kernel.normalization",
    "noise",
    "damping",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Particles1,
    Particles2,
    Pde1d,
    Pde2d,
    Kinetic1d,
    Stability,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Particles1,
        Subcommand::Particles2,
        Subcommand::Pde1d,
        Subcommand::Pde2d,
        Subcommand::Kinetic1d,
        Subcommand::Stability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Particles1 => "particles1",
            Subcommand::Particles2 => "particles2",
            Subcommand::Pde1d => "pde1d",
            Subcommand::Pde2d => "pde2d",
            Subcommand::Kinetic1d => "kinetic1d",
            Subcommand::Stability => "stability",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        const PARTICLES: &[&str] = &[
            "t_end",
            "dt",
            "snapshot_stride",
            "domain.dim",
            "particles.n",
            "particles.cluster_radius",
        ];
        const PDE: &[&str] = &[
            "t_end",
            "dt",
            "snapshot_stride",
            "grid.m",
            "solver.tolerance",
            "steady_threshold",
            "init",
            "init.rho0",
            "init.amplitude",
            "init.mode",
        ];
        const KINETIC: &[&str] = &[
            "t_end",
            "snapshot_stride",
            "grid.nx",
            "velocity.min",
            "velocity.max",
            "velocity.dv",
            "cfl",
            "solver.tolerance",
            "init",
            "init.amplitude",
            "init.mode",
        ];
        const STABILITY: &[&str] = &["rho0", "max_mode"];
        match self {
            Subcommand::Particles1 | Subcommand::Particles2 => PARTICLES,
            Subcommand::Pde1d | Subcommand::Pde2d => PDE,
            Subcommand::Kinetic1d => KINETIC,
            Subcommand::Stability => STABILITY,
        }
    }

    fn accepts(self, key: &str) -> bool {
        COMMON_KEYS.contains(&key) || self.keys().contains(&key)
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("subcommand", format!("unknown subcommand `{s}`")))
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// I.i.d. uniform `[0, 1)` per grid point.
    Random,
    /// `ρ₀(1 + ε cos(2πnx/L))`; uniform in `v` for the kinetic model.
    Cosine,
    /// Uniform times `1 + ε·u`, `u` uniform on `[−1, 1]` per x cell.
    Noisy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub pgm: bool,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub formats: Formats,
    pub side: f64,
    pub dim: usize,
    pub kernel: KernelSpec,
    pub responses: ResponseFunctions,
    pub t_end: f64,
    pub dt: f64,
    pub snapshot_stride: usize,
    pub n_particles: usize,
    pub cluster_radius: Option<f64>,
    pub grid_m: usize,
    pub tolerance: f64,
    pub steady_threshold: f64,
    pub init: InitKind,
    pub init_rho0: f64,
    pub init_amplitude: f64,
    pub init_mode: usize,
    pub nx: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub dv: f64,
    pub cfl: f64,
    pub rho0: f64,
    pub max_mode: usize,
}

impl RunConfig {
    /// Defaults of each subcommand.
    pub fn defaults(subcommand: Subcommand) -> Self {
        let mut c = RunConfig {
            subcommand,
            seed: 1,
            out_dir: PathBuf::from("out"),
            formats: Formats {
                csv: true,
                pgm: false,
            },
            side: 1.0,
            dim: 2,
            kernel: KernelSpec::indicator(0.1),
            responses: ResponseFunctions::new(Response::exp_decay(3.0), Response::Constant(2.0)),
            t_end: 1.0,
            dt: 1e-3,
            snapshot_stride: 100,
            n_particles: 400,
            cluster_radius: None,
            grid_m: 200,
            tolerance: 1e-12,
            steady_threshold: 1e-6,
            init: InitKind::Random,
            init_rho0: 1.0,
            init_amplitude: 0.05,
            init_mode: 1,
            nx: 100,
            v_min: -1.0,
            v_max: 1.0,
            dv: 0.02,
            cfl: 1.0,
            rho0: 0.5,
            max_mode: 20,
        };
        match subcommand {
            Subcommand::Particles1 => {
                c.t_end = 8.3;
            }
            Subcommand::Particles2 => {
                c.kernel = KernelSpec::indicator(0.05).with_cone(Cone::forward_half());
                c.t_end = 0.104;
                c.snapshot_stride = 4;
            }
            Subcommand::Pde1d => {
                c.dim = 1;
                c.dt = 1e-4;
                c.t_end = 12.0;
                c.snapshot_stride = 1000;
            }
            Subcommand::Pde2d => {
                c.grid_m = 100;
                c.dt = 1e-4;
                c.t_end = 0.95;
                c.snapshot_stride = 500;
                c.kernel = KernelSpec::indicator(0.07);
                c.formats = Formats {
                    csv: false,
                    pgm: true,
                };
            }
            Subcommand::Kinetic1d => {
                c.dim = 1;
                c.kernel = KernelSpec::indicator(0.07)
                    .with_cone(Cone::forward_half())
                    .with_normalization(Normalization::UnitIntegral);
                c.responses = ResponseFunctions::new(Response::exp_decay(0.5), Response::Constant(2.0));
                c.t_end = 20.0;
                c.snapshot_stride = 50;
                c.init = InitKind::Cosine;
                c.formats = Formats { csv: true, pgm: true };
            }
            Subcommand::Stability => {
                c.dim = 1;
            }
        }
        c
    }

    pub fn geometry(&self) -> Result<TorusGeometry> {
        TorusGeometry::new(self.dim, self.side).map_err(|e| Error::config("domain", e.to_string()))
    }

    /// Number of time steps to reach `t_end`.
    pub fn n_steps(&self, dt: f64) -> usize {
        (self.t_end / dt).round() as usize
    }

    /// Particle model settings; the order follows the subcommand.
    pub fn particle_config(&self) -> Result<ParticleSimConfig> {
        let order = if self.subcommand == Subcommand::Particles2 {
            ModelOrder::Second
        } else {
            ModelOrder::First
        };
        Ok(ParticleSimConfig {
            order,
            n_particles: self.n_particles,
            geometry: self.geometry()?,
            dt: self.dt,
            kernel: self.kernel,
            responses: self.responses.clone(),
            n_steps: self.n_steps(self.dt),
            snapshot_stride: self.snapshot_stride,
            seed: self.seed,
            cluster_radius: self.cluster_radius,
        })
    }

    pub fn initial_field(&self) -> Result<DensityField> {
        let geom = self.geometry()?;
        match self.init {
            InitKind::Random => random_initial_field(geom, self.grid_m, self.seed),
            _ => {
                let k = 2.0 * std::f64::consts::PI * self.init_mode as f64 / self.side;
                let (rho0, eps) = (self.init_rho0, self.init_amplitude);
                DensityField::from_fn(geom, self.grid_m, |x, _| rho0 * (1.0 + eps * (k * x).cos()))
            }
        }
    }

    pub fn pde_config(&self) -> PdeSimConfig {
        let mut sim = PdeSimConfig::new(self.dt, self.kernel, self.responses.clone());
        sim.n_steps = self.n_steps(self.dt);
        sim.snapshot_stride = self.snapshot_stride;
        sim.tolerance = self.tolerance;
        sim.steady_threshold = self.steady_threshold;
        sim
    }

    /// Mass-one initial datum of the kinetic model.
    pub fn initial_phase(&self) -> Result<PhaseField> {
        match self.init {
            InitKind::Noisy => PhaseField::noisy_uniform(
                self.side,
                self.nx,
                self.v_min,
                self.v_max,
                self.dv,
                self.init_amplitude,
                self.seed,
            ),
            _ => PhaseField::perturbed_uniform(
                self.side,
                self.nx,
                self.v_min,
                self.v_max,
                self.dv,
                self.init_amplitude,
                self.init_mode,
            ),
        }
    }

    pub fn kinetic_config(&self, f0: &PhaseField) -> KineticConfig {
        let mut kc = KineticConfig::new(self.kernel, self.responses.clone());
        kc.cfl = self.cfl;
        kc.tolerance = self.tolerance;
        kc.snapshot_stride = self.snapshot_stride;
        kc.n_steps = self.n_steps(kc.dt(f0));
        kc
    }

    fn validate(&self) -> Result<()> {
        let positive = |key: &str, what: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("{what} must be positive")))
            }
        };
        positive("domain.side", "L", self.side)?;
        positive("kernel.radius", "R", self.kernel.radius)?;
        if self.kernel.radius >= self.side / 2.0 {
            return Err(Error::config("kernel.radius", "R < L/2 required"));
        }
        self.kernel
            .validate()
            .map_err(|e| Error::config("kernel.cone", e.to_string()))?;
        self.responses
            .noise
            .validate_as_noise()
            .map_err(|e| Error::config("noise", e.to_string()))?;
        self.responses
            .damping
            .validate_as_damping()
            .map_err(|e| Error::config("damping", e.to_string()))?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config("t_end", "t_end must be nonnegative"));
        }
        positive("dt", "dt", self.dt)?;
        if self.snapshot_stride == 0 {
            return Err(Error::config("snapshot_stride", "snapshot_stride must be ≥ 1"));
        }
        if !self.formats.csv && !self.formats.pgm {
            return Err(Error::config("formats", "at least one format required"));
        }
        match self.subcommand {
            Subcommand::Particles1 | Subcommand::Particles2 => {
                if self.n_particles == 0 {
                    return Err(Error::config("particles.n", "at least one particle required"));
                }
                if let Some(r) = self.cluster_radius {
                    positive("particles.cluster_radius", "cluster radius", r)?;
                }
                if self.subcommand == Subcommand::Particles2 && self.responses.h(0.0) * self.dt >= 1.0 {
                    return Err(Error::config("dt", "H·dt < 1 required"));
                }
                if self.subcommand == Subcommand::Particles1 && self.kernel.is_directed() {
                    return Err(Error::config("kernel.cone", "first-order model has no heading"));
                }
                if self.formats.pgm {
                    return Err(Error::config("formats", "pgm is only written for 2D and phase fields"));
                }
            }
            Subcommand::Pde1d | Subcommand::Pde2d => {
                if self.grid_m < 3 {
                    return Err(Error::config("grid.m", "grid.m must be at least 3"));
                }
                positive("solver.tolerance", "tolerance", self.tolerance)?;
                positive("steady_threshold", "steady_threshold", self.steady_threshold)?;
                positive("init.rho0", "init.rho0", self.init_rho0)?;
                if self.init == InitKind::Noisy {
                    return Err(Error::config("init", "use `random` or `cosine` for density fields"));
                }
                if self.kernel.is_directed() {
                    return Err(Error::config("kernel.cone", "density fields have no heading"));
                }
                if self.subcommand == Subcommand::Pde1d && self.formats.pgm {
                    return Err(Error::config("formats", "pgm is only written for 2D and phase fields"));
                }
                self.check_amplitude()?;
            }
            Subcommand::Kinetic1d => {
                if self.nx < 3 {
                    return Err(Error::config("grid.nx", "grid.nx must be at least 3"));
                }
                positive("velocity.dv", "dv", self.dv)?;
                if !(self.v_max > self.v_min) {
                    return Err(Error::config("velocity.max", "velocity.min < velocity.max required"));
                }
                if !(self.cfl > 0.0 && self.cfl <= 1.0) {
                    return Err(Error::config("cfl", "cfl must lie in (0, 1]"));
                }
                positive("solver.tolerance", "tolerance", self.tolerance)?;
                if self.init == InitKind::Random {
                    return Err(Error::config("init", "use `cosine` or `noisy` for phase fields"));
                }
                PhaseField::zeros(self.side, self.nx, self.v_min, self.v_max, self.dv)
                    .map_err(|e| Error::config("velocity.dv", e.to_string()))?;
                self.check_amplitude()?;
            }
            Subcommand::Stability => {
                positive("rho0", "rho0", self.rho0)?;
                if self.max_mode == 0 {
                    return Err(Error::config("max_mode", "max_mode must be at least 1"));
                }
                if self.formats.pgm {
                    return Err(Error::config("formats", "pgm is only written for 2D and phase fields"));
                }
            }
        }
        Ok(())
    }

    fn check_amplitude(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.init_amplitude) {
            return Err(Error::config("init.amplitude", "init.amplitude must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}` as a number")))
}

/// `name(a, b, …)` → (`name`, [a, b, …]).
fn parse_call(key: &str, value: &str) -> Result<(String, Vec<f64>)> {
    let bad = || Error::config(key, format!("expected `name(args)`, got `{value}`"));
    let open = value.find('(').ok_or_else(bad)?;
    let inner = value[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let args = inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num::<f64>(key, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((value[..open].trim().to_string(), args))
}

fn parse_response(key: &str, value: &str) -> Result<Response> {
    let (name, args) = parse_call(key, value)?;
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(Error::config(key, format!("{name} takes {n} argument(s)")))
        }
    };
    match name.as_str() {
        "exp_decay" => {
            arity(1)?;
            Ok(Response::exp_decay(args[0]))
        }
        "constant" => {
            arity(1)?;
            Ok(Response::Constant(args[0]))
        }
        "hard_cutoff" if args.len() == 2 => Ok(Response::HardCutoff {
            s0: args[0],
            level: args[1],
        }),
        "hard_cutoff" => {
            arity(1)?;
            Ok(Response::hard_cutoff(args[0]))
        }
        "linear" => {
            arity(2)?;
            Ok(Response::Linear {
                intercept: args[0],
                slope: args[1],
            })
        }
        _ => Err(Error::config(key, format!("unknown response `{name}`"))),
    }
}

/// Split `key = value` lines, dropping comments and blank lines.
fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", no + 1), "expected `key = value`"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::config(format!("line {}", no + 1), "expected `key = value`"));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::config(k, "duplicate key"));
        }
    }
    Ok(out)
}

/// Parse and validate a configuration for `subcommand`.
pub fn parse_config(subcommand: Subcommand, text: &str) -> Result<RunConfig> {
    let mut c = RunConfig::defaults(subcommand);
    for (key, value) in parse_pairs(text)? {
        let k = key.as_str();
        let v = value.as_str();
        if !subcommand.accepts(k) {
            return Err(Error::config(k, format!("unknown key for {subcommand}")));
        }
        match k {
            "seed" => c.seed = parse_num(k, v)?,
            "formats" => {
                let mut f = Formats { csv: false, pgm: false };
                for part in v.split(',').map(str::trim) {
                    match part {
                        "csv" => f.csv = true,
                        "pgm" => f.pgm = true,
                        _ => return Err(Error::config(k, format!("unknown format `{part}`"))),
                    }
                }
                c.formats = f;
            }
            "domain.side" => c.side = parse_num(k, v)?,
            "domain.dim" => c.dim = parse_num(k, v)?,
            "kernel.profile" => {
                c.kernel.profile = match v {
                    "indicator" => Profile::Indicator,
                    "bump" => Profile::Bump,
                    _ => return Err(Error::config(k, "expected `indicator` or `bump`")),
                }
            }
            "kernel.radius" => c.kernel.radius = parse_num(k, v)?,
            "kernel.cone" => {
                c.kernel.cone = match v {
                    "full" => Cone::Full,
                    "forward" => Cone::forward_half(),
                    _ => Cone::Cosine(parse_num(k, v)?),
                }
            }
            "kernel.normalization" => {
                c.kernel.normalization = match v {
                    "raw" => Normalization::Raw,
                    "unit" => Normalization::UnitIntegral,
                    _ => return Err(Error::config(k, "expected `raw` or `unit`")),
                }
            }
            "noise" => c.responses.noise = parse_response(k, v)?,
            "damping" => c.responses.damping = parse_response(k, v)?,
            "t_end" => c.t_end = parse_num(k, v)?,
            "dt" => c.dt = parse_num(k, v)?,
            "snapshot_stride" => c.snapshot_stride = parse_num(k, v)?,
            "particles.n" => c.n_particles = parse_num(k, v)?,
            "particles.cluster_radius" => c.cluster_radius = Some(parse_num(k, v)?),
            "grid.m" => c.grid_m = parse_num(k, v)?,
            "solver.tolerance" => c.tolerance = parse_num(k, v)?,
            "steady_threshold" => c.steady_threshold = parse_num(k, v)?,
            "init" => {
                c.init = match v {
                    "random" => InitKind::Random,
                    "cosine" => InitKind::Cosine,
                    "noisy" => InitKind::Noisy,
                    _ => return Err(Error::config(k, "expected `random`, `cosine` or `noisy`")),
                }
            }
            "init.rho0" => c.init_rho0 = parse_num(k, v)?,
            "init.amplitude" => c.init_amplitude = parse_num(k, v)?,
            "init.mode" => c.init_mode = parse_num(k, v)?,
            "grid.nx" => c.nx = parse_num(k, v)?,
            "velocity.min" => c.v_min = parse_num(k, v)?,
            "velocity.max" => c.v_max = parse_num(k, v)?,
            "velocity.dv" => c.dv = parse_num(k, v)?,
            "cfl" => c.cfl = parse_num(k, v)?,
            "rho0" => c.rho0 = parse_num(k, v)?,
            "max_mode" => c.max_mode = parse_num(k, v)?,
            _ => unreachable!("accepted key {k} not handled"),
        }
    }
    if c.dim != 1 && c.dim != 2 {
        return Err(Error::config("domain.dim", "domain.dim must be 1 or 2"));
    }
    c.validate()?;
    Ok(c)
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_particles_csv(w: &mut impl Write, snap: &Snapshot, dim: usize) -> Result<()> {
    let mut header = String::from("id,x");
    if dim == 2 {
        header.push_str(",y");
    }
    if snap.velocities.is_some() {
        header.push_str(if dim == 2 { ",vx,vy" } else { ",vx" });
    }
    writeln!(w, "{header},theta")?;
    for (i, p) in snap.positions.iter().enumerate() {
        write!(w, "{i},{}", fmt_f64(p[0]))?;
        if dim == 2 {
            write!(w, ",{}", fmt_f64(p[1]))?;
        }
        if let Some(v) = &snap.velocities {
            write!(w, ",{}", fmt_f64(v[i][0]))?;
            if dim == 2 {
                write!(w, ",{}", fmt_f64(v[i][1]))?;
            }
        }
        writeln!(w, ",{}", fmt_f64(snap.theta[i]))?;
    }
    Ok(())
}

/// `x,rho` rows of a 1D profile sampled at `x_i = iΔx`.
pub fn write_profile_csv(w: &mut impl Write, dx: f64, values: &[f64]) -> Result<()> {
    writeln!(w, "x,rho")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{},{}", fmt_f64(i as f64 * dx), fmt_f64(*v))?;
    }
    Ok(())
}

/// `x,rho` for 1D fields, `x,y,rho` for 2D.
pub fn write_field_csv(w: &mut impl Write, field: &DensityField) -> Result<()> {
    let dx = field.dx();
    if field.geometry.dim() == 1 {
        return write_profile_csv(w, dx, &field.values);
    }
    writeln!(w, "x,y,rho")?;
    for (k, v) in field.values.iter().enumerate() {
        let (i, j) = (k % field.m, k / field.m);
        writeln!(w, "{},{},{}", fmt_f64(i as f64 * dx), fmt_f64(j as f64 * dx), fmt_f64(*v))?;
    }
    Ok(())
}

/// Read back the rows of a CSV written by [`write_profile_csv`].
pub fn read_profile_csv(r: impl BufRead) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        if no == 0 {
            if line.trim() != "x,rho" {
                return Err(Error::config("csv", "expected header `x,rho`"));
            }
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::config("csv", format!("malformed row {}", no + 1)))?;
        out.push((parse_num("csv", a)?, parse_num("csv", b)?));
    }
    Ok(out)
}

pub fn write_moments_csv(w: &mut impl Write, history: &[MomentRecord]) -> Result<()> {
    writeln!(w, "t,mass,momentum,energy")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_f64(r.time),
            fmt_f64(r.mass),
            fmt_f64(r.momentum),
            fmt_f64(r.energy)
        )?;
    }
    Ok(())
}

pub fn write_stability_csv(w: &mut impl Write, report: &StabilityReport) -> Result<()> {
    writeln!(w, "n,xi,ReW,lambda,stable")?;
    for m in &report.modes {
        writeln!(
            w,
            "{},{},{},{},{}",
            m.n,
            fmt_f64(m.xi),
            fmt_f64(m.re_w),
            fmt_f64(m.lambda),
            m.stable
        )?;
    }
    Ok(())
}

/// Binary P5 greyscale image, first row on top. Values map linearly to
/// `0..=255` via `p = round(255·(v − min)/(max − min))`; a constant image is
/// written as mid grey 128. The comment line records `min` and `max`.
pub fn write_pgm(w: &mut impl Write, width: usize, height: usize, rows: &[f64]) -> Result<()> {
    assert_eq!(rows.len(), width * height, "image size mismatch");
    let lo = rows.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if rows.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    write!(
        w,
        "P5\n# min={} max={} scale=linear\n{width} {height}\n255\n",
        fmt_f64(lo),
        fmt_f64(hi)
    )?;
    let bytes: Vec<u8> = rows
        .iter()
        .map(|&v| {
            if hi > lo {
                (255.0 * (v - lo) / (hi - lo)).round().clamp(0.0, 255.0) as u8
            } else {
                128
            }
        })
        .collect();
    w.write_all(&bytes)?;
    Ok(())
}

/// 2D field as an image, `y` increasing downwards.
pub fn write_field_pgm(w: &mut impl Write, field: &DensityField) -> Result<()> {
    let m = field.m;
    let h = if field.geometry.dim() == 2 { m } else { 1 };
    write_pgm(w, m, h, &field.values)
}

/// Phase field with `x` across and `v` decreasing downwards (`v_max` on top).
pub fn write_phase_pgm(w: &mut impl Write, f: &PhaseField) -> Result<()> {
    let mut rows = Vec::with_capacity(f.values.len());
    for j in (0..f.nv).rev() {
        rows.extend_from_slice(f.row(j));
    }
    write_pgm(w, f.nx, f.nv, &rows)
}

/// Files written to a private directory and moved into the output directory
/// only on [`Staging::commit`]. Dropping without commit removes everything.
pub struct Staging {
    dir: TempDir,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self> {
        let mut base = out.parent().map(Path::to_path_buf).unwrap_or_default();
        while !base.as_os_str().is_empty() && !base.is_dir() {
            base = base.parent().map(Path::to_path_buf).unwrap_or_default();
        }
        if base.as_os_str().is_empty() {
            base = PathBuf::from(".");
        }
        Ok(Staging {
            dir: tempfile::Builder::new().prefix(".aggrsim-").tempdir_in(base)?,
            files: Vec::new(),
        })
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.path().join(name))?))
    }

    pub fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn commit(self, out: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(out)?;
        let mut written = Vec::new();
        for name in &self.files {
            let from = self.dir.path().join(name);
            let to = out.join(name);
            if fs::rename(&from, &to).is_err() {
                fs::copy(&from, &to)?;
            }
            written.push(to);
        }
        Ok(written)
    }
}

fn snapshot_name(prefix: &str, k: usize, ext: &str) -> String {
    format!("{prefix}_{k:05}.{ext}")
}

/// Time for the human summary, with step-accumulation noise rounded away.
fn fmt_time(t: f64) -> String {
    fmt_f64((t * 1e9).round() / 1e9)
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn run_particle_model(cfg: &RunConfig, st: &mut Staging) -> Result<String> {
    let sim = cfg.particle_config()?;
    let snaps = run_particles(&sim)?;
    for (k, s) in snaps.iter().enumerate() {
        st.write(&snapshot_name("particles", k, "csv"), |w| write_particles_csv(w, s, cfg.dim))?;
    }
    st.write("clusters.csv", |w| {
        writeln!(w, "t,clusters")?;
        for s in &snaps {
            writeln!(w, "{},{}", fmt_f64(s.time), s.clusters)?;
        }
        Ok(())
    })?;
    let last = snaps.last().expect("initial snapshot");
    Ok(format!(
        "{}: t = {}, N = {}, {}",
        cfg.subcommand,
        fmt_time(last.time),
        last.positions.len(),
        plural(last.clusters, "cluster")
    ))
}

fn run_density(cfg: &RunConfig, st: &mut Staging) -> Result<String> {
    let initial = cfg.initial_field()?;
    let sim = cfg.pde_config();
    let run = run_pde(&initial, &sim)?;
    for (k, s) in run.snapshots.iter().enumerate() {
        if cfg.formats.csv {
            st.write(&snapshot_name("rho", k, "csv"), |w| write_field_csv(w, s))?;
        }
        if cfg.formats.pgm {
            st.write(&snapshot_name("rho", k, "pgm"), |w| write_field_pgm(w, s))?;
        }
    }
    st.write("mass.csv", |w| {
        writeln!(w, "t,mass,min,max")?;
        for s in &run.snapshots {
            writeln!(w, "{},{},{},{}", fmt_f64(s.time), fmt_f64(s.mass()), fmt_f64(s.min()), fmt_f64(s.max()))?;
        }
        Ok(())
    })?;
    let last = run.last();
    let aggregates = if cfg.dim == 1 {
        aggregate_count(&last.values, AGGREGATE_LEVEL)
    } else {
        aggregate_count_2d(&last.values, last.m, AGGREGATE_LEVEL)
    };
    let steady = match run.steady_time {
        Some(t) => format!("steady at t = {}", fmt_time(t)),
        None => format!("no steady state by t = {}", fmt_time(last.time)),
    };
    Ok(format!(
        "{}: final mass {}, {}, {steady}, mass drift {:e}",
        cfg.subcommand,
        fmt_f64(last.mass()),
        plural(aggregates, "aggregate"),
        run.max_mass_drift
    ))
}

fn run_kinetic_model(cfg: &RunConfig, st: &mut Staging) -> Result<String> {
    let f0 = cfg.initial_phase()?;
    let kc = cfg.kinetic_config(&f0);
    let run = run_kinetic(&f0, &kc)?;
    for (k, s) in run.snapshots.iter().enumerate() {
        if cfg.formats.csv {
            st.write(&snapshot_name("rho", k, "csv"), |w| write_profile_csv(w, s.dx(), &s.density()))?;
        }
        if cfg.formats.pgm {
            st.write(&snapshot_name("f", k, "pgm"), |w| write_phase_pgm(w, s))?;
        }
    }
    st.write("moments.csv", |w| write_moments_csv(w, &run.history))?;
    let last = run.last();
    let rho = last.density();
    let mut line = format!(
        "{}: t = {}, final mass {}, {}, mass drift {:e}",
        cfg.subcommand,
        fmt_time(last.time),
        fmt_f64(last.mass()),
        plural(aggregate_count(&rho, AGGREGATE_LEVEL), "aggregate"),
        run.max_mass_drift
    );
    if run.upwind_columns > 0 {
        line.push_str(&format!(", upwind drift used in {} column solves", run.upwind_columns));
    }
    Ok(line)
}

fn run_stability(cfg: &RunConfig, st: &mut Staging) -> Result<String> {
    let geom = cfg.geometry()?;
    let (raw, unit) = classify_both(cfg.rho0, &cfg.kernel, &cfg.responses, &geom, cfg.max_mode)?;
    st.write("stability_raw.csv", |w| write_stability_csv(w, &raw))?;
    st.write("stability_unit.csv", |w| write_stability_csv(w, &unit))?;
    let (main, other, other_name) = match cfg.kernel.normalization {
        Normalization::Raw => (&raw, &unit, "unit-integral"),
        Normalization::UnitIntegral => (&unit, &raw, "raw"),
    };
    st.write("stability.csv", |w| write_stability_csv(w, main))?;
    let mut line = format!("{} unstable modes", main.unstable.len());
    if let (Some(f), Some(wl)) = (main.fastest, main.fastest_wavelength) {
        line.push_str(&format!(", fastest n = {} (wavelength {})", f.n, fmt_f64(wl)));
    }
    if main.degenerate {
        line.push_str(", degenerate (G = 0)");
    }
    line.push_str(&format!(
        ", threshold {}, local problem {} (D = {}); {} kernel: {} unstable",
        fmt_f64(main.threshold),
        if main.local.well_posed { "well-posed" } else { "ill-posed" },
        fmt_f64(main.local.diffusivity),
        other_name,
        other.unstable.len()
    ));
    Ok(line)
}

/// Run the configured experiment, writing its output atomically. Returns the
/// one-line summary.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    let mut st = Staging::new(&cfg.out_dir)?;
    let summary = match cfg.subcommand {
        Subcommand::Particles1 | Subcommand::Particles2 => run_particle_model(cfg, &mut st)?,
        Subcommand::Pde1d | Subcommand::Pde2d => run_density(cfg, &mut st)?,
        Subcommand::Kinetic1d => run_kinetic_model(cfg, &mut st)?,
        Subcommand::Stability => run_stability(cfg, &mut st)?,
    };
    st.commit(&cfg.out_dir)?;
    Ok(summary)
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

/// [`execute`] with the summary on stdout and errors on stderr.
pub fn run(cfg: &RunConfig) -> i32 {
    match execute(cfg) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("aggrsim {}: {e}", cfg.subcommand);
            exit_code(&e)
        }
    }
}
