use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::TorusGeometry;
use crate::kernel::{KernelSpec, Side};
use crate::meanfield::linalg::solve_tridiagonal;
use crate::meanfield::PeriodicConvolution;
use crate::response::ResponseFunctions;

use super::phase::{moments, PhaseField};

const CLAMP_LIMIT: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct KineticConfig {
    pub kernel: KernelSpec,
    pub responses: ResponseFunctions,
    /// `dt = cfl·Δx/max|v|`; 1 is the stated rule.
    pub cfl: f64,
    pub n_steps: usize,
    pub snapshot_stride: usize,
    pub tolerance: f64,
}

impl KineticConfig {
    pub fn new(kernel: KernelSpec, responses: ResponseFunctions) -> Self {
        KineticConfig {
            kernel,
            responses,
            cfl: 1.0,
            n_steps: 0,
            snapshot_stride: 1,
            tolerance: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "CFL multiplier must lie in (0, 1], got {}",
                self.cfl
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("solver tolerance must be positive".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidParameter("snapshot stride must be ≥ 1".into()));
        }
        self.kernel.validate()?;
        self.responses.validate()
    }

    pub fn dt(&self, f: &PhaseField) -> f64 {
        let vmax = f.v_min.abs().max(f.v_max.abs());
        self.cfl * f.dx() / vmax
    }
}

/// One-step diagnostics of a single history entry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentRecord {
    pub time: f64,
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
    /// `∫∫ H v f`.
    pub friction: f64,
    /// `∫∫ H v² f`.
    pub damping: f64,
    /// `½∫∫ G² f`.
    pub source: f64,
}

/// Caches the sampled kernels for a fixed grid.
#[derive(Clone, Debug)]
pub struct KineticSolver {
    cfg: KineticConfig,
    dt: f64,
    both: PeriodicConvolution,
    forward: Option<PeriodicConvolution>,
    backward: Option<PeriodicConvolution>,
    /// Velocity-step columns re-solved with upwind drift faces after the
    /// central solve went negative.
    pub upwind_columns: usize,
    /// Largest relative increase of a row's total variation over a transport
    /// half-step.
    pub max_tv_growth: f64,
    pub max_clamped: f64,
    pub max_residual: f64,
}

impl KineticSolver {
    pub fn new(grid: &PhaseField, cfg: &KineticConfig) -> Result<Self> {
        cfg.validate()?;
        let geom = TorusGeometry::new(1, grid.side)?;
        let directed = cfg.kernel.is_directed();
        let one_sided = |side| PeriodicConvolution::with_side(&cfg.kernel, &geom, grid.nx, side);
        Ok(KineticSolver {
            dt: cfg.dt(grid),
            both: PeriodicConvolution::new(&cfg.kernel.with_cone(crate::Cone::Full), &geom, grid.nx)?,
            forward: if directed { Some(one_sided(Side::Forward)?) } else { None },
            backward: if directed { Some(one_sided(Side::Backward)?) } else { None },
            cfg: cfg.clone(),
            upwind_columns: 0,
            max_tv_growth: 0.0,
            max_clamped: 0.0,
            max_residual: 0.0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `W⊛f` at every `(x_i, v_j)`, stored like `f`.
    pub fn perceived(&self, f: &PhaseField) -> Vec<f64> {
        let rho = f.density();
        let nx = f.nx;
        let mut out = vec![0.0; nx * f.nv];
        let both = self.both.apply(&rho);
        let (fwd, bwd) = match (&self.forward, &self.backward) {
            (Some(a), Some(b)) => (Some(a.apply(&rho)), Some(b.apply(&rho))),
            _ => (None, None),
        };
        for j in 0..f.nv {
            let v = f.velocity(j);
            let src = match (&fwd, &bwd) {
                (Some(a), _) if v > 0.0 => a,
                (_, Some(b)) if v < 0.0 => b,
                _ => &both,
            };
            out[j * nx..(j + 1) * nx].copy_from_slice(src);
        }
        out
    }

    /// Advect every velocity row over `dt/2`.
    pub fn transport_half(&mut self, f: &PhaseField) -> Result<PhaseField> {
        let tau = 0.5 * self.dt;
        let nx = f.nx;
        let worst = (0..f.nv)
            .map(|j| (f.velocity(j) * tau / f.dx()).abs())
            .fold(0.0, f64::max);
        if worst > 1.0 + 1e-12 {
            return Err(Error::CflViolated(worst));
        }
        let mut out = f.clone();
        let growth = out
            .values
            .par_chunks_mut(nx)
            .enumerate()
            .map(|(j, row)| {
                let c = f.velocity(j) * tau / f.dx();
                let src = f.row(j);
                advect_row(src, c, row);
                let before = total_variation(src);
                let after = total_variation(row);
                if after > before {
                    (after - before) / before.max(f64::MIN_POSITIVE)
                } else {
                    0.0
                }
            })
            .reduce(|| 0.0, f64::max);
        self.max_tv_growth = self.max_tv_growth.max(growth);
        out.time += tau;
        Ok(out)
    }

    /// One backward-Euler step of the velocity convection–diffusion over `dt`,
    /// coefficients frozen at `f`.
    pub fn velocity(&mut self, f: &PhaseField) -> Result<PhaseField> {
        let theta = self.perceived(f);
        let nx = f.nx;
        let nv = f.nv;
        let r = &self.cfg.responses;
        let h: Vec<f64> = theta.iter().map(|&s| r.h(s)).collect();
        let d: Vec<f64> = theta.iter().map(|&s| r.g(s).powi(2)).collect();
        let dt = self.dt;
        let tol = self.cfg.tolerance;

        let columns: Vec<Result<(Vec<f64>, bool, f64)>> = (0..nx)
            .into_par_iter()
            .map(|i| {
                let col = |a: &[f64]| (0..nv).map(|j| a[j * nx + i]).collect::<Vec<f64>>();
                velocity_column(f, &col(&f.values), &col(&h), &col(&d), dt, tol)
            })
            .collect();

        let mut out = f.clone();
        let mut min = f64::INFINITY;
        for (i, c) in columns.into_iter().enumerate() {
            let (x, upwind, res) = c?;
            self.upwind_columns += upwind as usize;
            self.max_residual = self.max_residual.max(res);
            for (j, v) in x.into_iter().enumerate() {
                min = min.min(v);
                out.values[j * nx + i] = v;
            }
        }
        if min < -CLAMP_LIMIT {
            return Err(Error::PositivityViolated { min });
        }
        if min < 0.0 {
            self.max_clamped = self.max_clamped.max(-min);
            for v in out.values.iter_mut() {
                *v = v.max(0.0);
            }
        }
        out.time += dt;
        Ok(out)
    }

    /// transport(dt/2) ∘ velocity(dt) ∘ transport(dt/2); the time stamp
    /// advances by `dt`.
    pub fn step(&mut self, f: &PhaseField) -> Result<PhaseField> {
        let a = self.transport_half(f)?;
        let mut b = self.velocity(&a)?;
        b.time = a.time;
        let mut c = self.transport_half(&b)?;
        c.time = f.time + self.dt;
        Ok(c)
    }

    pub fn record(&self, f: &PhaseField) -> MomentRecord {
        let (mass, momentum, energy) = moments(f).totals(f.dx());
        let theta = self.perceived(f);
        let r = &self.cfg.responses;
        let (mut fr, mut dm, mut src) = (0.0, 0.0, 0.0);
        for j in 0..f.nv {
            let v = f.velocity(j);
            let w = f.weight(j) * f.dv * f.dx();
            for i in 0..f.nx {
                let k = j * f.nx + i;
                let x = f.values[k] * w;
                let h = r.h(theta[k]);
                fr += h * v * x;
                dm += h * v * v * x;
                src += 0.5 * r.g(theta[k]).powi(2) * x;
            }
        }
        MomentRecord {
            time: f.time,
            mass,
            momentum,
            energy,
            friction: fr,
            damping: dm,
            source: src,
        }
    }
}

#[inline]
fn superbee(r: f64) -> f64 {
    0.0f64.max((2.0 * r).min(1.0)).max(r.min(2.0))
}

/// Flux-limited upwind update of one periodic row at Courant number `c`.
fn advect_row(f: &[f64], c: f64, out: &mut [f64]) {
    let n = f.len();
    if c == 0.0 {
        out.copy_from_slice(f);
        return;
    }
    let a = c.abs();
    let at = |k: isize| f[k.rem_euclid(n as isize) as usize];
    // flux through face i+1/2 divided by Δx/τ
    let flux = |i: isize| {
        let jump = at(i + 1) - at(i);
        let (up, upstream) = if c > 0.0 {
            (c * at(i), at(i) - at(i - 1))
        } else {
            (c * at(i + 1), at(i + 2) - at(i + 1))
        };
        if jump == 0.0 {
            return up;
        }
        up + 0.5 * a * (1.0 - a) * superbee(upstream / jump) * jump
    };
    let mut left = flux(-1);
    for i in 0..n {
        let right = flux(i as isize);
        out[i] = f[i] - (right - left);
        left = right;
    }
}

fn total_variation(row: &[f64]) -> f64 {
    let n = row.len();
    (0..n).map(|i| (row[(i + 1) % n] - row[i]).abs()).sum()
}

/// Solve one velocity column. Returns the new column, whether upwind drift
/// faces were needed, and the relative residual.
fn velocity_column(
    grid: &PhaseField,
    f: &[f64],
    h: &[f64],
    d: &[f64],
    dt: f64,
    tol: f64,
) -> Result<(Vec<f64>, bool, f64)> {
    let (x, res) = velocity_solve(grid, f, h, d, dt, tol, false)?;
    if x.iter().all(|&v| v >= -CLAMP_LIMIT) {
        return Ok((x, false, res));
    }
    let (x, res) = velocity_solve(grid, f, h, d, dt, tol, true)?;
    Ok((x, true, res))
}

fn velocity_solve(
    grid: &PhaseField,
    f: &[f64],
    h: &[f64],
    d: &[f64],
    dt: f64,
    tol: f64,
    upwind: bool,
) -> Result<(Vec<f64>, f64)> {
    let nv = f.len();
    let dv = grid.dv;
    // face flux J = α f_j + β f_{j+1}
    let coef: Vec<(f64, f64)> = (0..nv - 1)
        .map(|j| {
            let vf = 0.5 * (grid.velocity(j) + grid.velocity(j + 1));
            let hb = 0.5 * (h[j] + h[j + 1]);
            let diff = 0.25 * (d[j] + d[j + 1]) / dv;
            if !upwind {
                (0.5 * hb * vf - diff, 0.5 * hb * vf + diff)
            } else if vf > 0.0 {
                (-diff, hb * vf + diff)
            } else {
                (hb * vf - diff, diff)
            }
        })
        .collect();

    // rows scaled by dt/(w_j Δv) so the right-hand side is f itself
    let mut lower = vec![0.0; nv];
    let mut diag = vec![1.0; nv];
    let mut upper = vec![0.0; nv];
    for j in 0..nv {
        let s = dt / (grid.weight(j) * dv);
        if j + 1 < nv {
            let (a, b) = coef[j];
            diag[j] -= s * a;
            upper[j] = -s * b;
        }
        if j > 0 {
            let (a, b) = coef[j - 1];
            diag[j] += s * b;
            lower[j] = s * a;
        }
    }
    let mut x = solve_tridiagonal(&lower, &diag, &upper, f)?;
    let residual = |x: &[f64]| -> (Vec<f64>, f64) {
        let r: Vec<f64> = (0..nv)
            .map(|j| {
                let mut ax = diag[j] * x[j];
                if j > 0 {
                    ax += lower[j] * x[j - 1];
                }
                if j + 1 < nv {
                    ax += upper[j] * x[j + 1];
                }
                ax - f[j]
            })
            .collect();
        let bn: f64 = f.iter().map(|v| v.abs()).sum();
        let rn: f64 = r.iter().map(|v| v.abs()).sum();
        let rel = if bn > 0.0 { rn / bn } else { rn };
        (r, rel)
    };
    let (r, mut res) = residual(&x);
    if res > tol {
        let delta = solve_tridiagonal(&lower, &diag, &upper, &r)?;
        for (xi, di) in x.iter_mut().zip(&delta) {
            *xi -= di;
        }
        res = residual(&x).1;
        if res > tol {
            return Err(Error::SolverFailed {
                residual: res,
                tolerance: tol,
            });
        }
    }
    Ok((x, res))
}

/// `W⊛f`; for directed 1D kernels the heading is the sign of `v`, and the
/// `v = 0` row uses the undirected kernel.
pub fn perceived_density_field(f: &PhaseField, spec: &KernelSpec) -> Result<Vec<f64>> {
    let cfg = KineticConfig::new(*spec, ResponseFunctions::default());
    Ok(KineticSolver::new(f, &cfg)?.perceived(f))
}

pub fn transport_halfstep(f: &PhaseField, cfg: &KineticConfig) -> Result<PhaseField> {
    KineticSolver::new(f, cfg)?.transport_half(f)
}

pub fn velocity_step(f: &PhaseField, cfg: &KineticConfig) -> Result<PhaseField> {
    KineticSolver::new(f, cfg)?.velocity(f)
}

pub fn strang_step(f: &PhaseField, cfg: &KineticConfig) -> Result<PhaseField> {
    KineticSolver::new(f, cfg)?.step(f)
}

#[derive(Clone, Debug)]
pub struct KineticRun {
    pub snapshots: Vec<PhaseField>,
    /// One record per step, including the initial state.
    pub history: Vec<MomentRecord>,
    pub max_mass_drift: f64,
    pub min_value: f64,
    pub max_tv_growth: f64,
    pub upwind_columns: usize,
    pub dt: f64,
}

impl KineticRun {
    pub fn last(&self) -> &PhaseField {
        self.snapshots.last().expect("initial snapshot")
    }
}

pub fn run_kinetic(initial: &PhaseField, cfg: &KineticConfig) -> Result<KineticRun> {
    let mut solver = KineticSolver::new(initial, cfg)?;
    let m0 = initial.mass();
    let mut run = KineticRun {
        snapshots: vec![initial.clone()],
        history: vec![solver.record(initial)],
        max_mass_drift: 0.0,
        min_value: initial.min(),
        max_tv_growth: 0.0,
        upwind_columns: 0,
        dt: solver.dt(),
    };
    let mut f = initial.clone();
    for step in 1..=cfg.n_steps {
        f = solver.step(&f)?;
        let rec = solver.record(&f);
        if m0 > 0.0 {
            run.max_mass_drift = run.max_mass_drift.max((rec.mass - m0).abs() / m0);
        }
        run.min_value = run.min_value.min(f.min()).min(-solver.max_clamped);
        run.history.push(rec);
        if step % cfg.snapshot_stride == 0 || step == cfg.n_steps {
            run.snapshots.push(f.clone());
        }
    }
    run.max_tv_growth = solver.max_tv_growth;
    run.upwind_columns = solver.upwind_columns;
    Ok(run)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalanceReport {
    /// `max |d/dt ∫ρu + ∫∫Hvf|`, relative to `max |∫∫Hvf|` when nonzero.
    pub momentum_residual: f64,
    /// `max |d/dt ∫ρE + ∫∫Hv²f − ½∫∫G²f|`, relative to the larger of the
    /// two source terms when nonzero.
    pub energy_residual: f64,
}

/// Compare centred time differences of the stored totals with the momentum
/// and energy balance laws.
pub fn momentum_energy_balance(history: &[MomentRecord]) -> BalanceReport {
    let (mut pm, mut pe, mut sm, mut se) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for w in history.windows(3) {
        let span = w[2].time - w[0].time;
        let dm = (w[2].momentum - w[0].momentum) / span;
        let de = (w[2].energy - w[0].energy) / span;
        let c = &w[1];
        pm = pm.max((dm + c.friction).abs());
        pe = pe.max((de + c.damping - c.source).abs());
        sm = sm.max(c.friction.abs());
        se = se.max(c.damping.abs()).max(c.source.abs());
    }
    let rel = |a: f64, s: f64| if s > 0.0 { a / s } else { a };
    BalanceReport {
        momentum_residual: rel(pm, sm),
        energy_residual: rel(pe, se),
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::kernel::{Cone, Normalization};
    use crate::kinetic::maxwellian;
    use crate::response::Response;
    use proptest::prelude::*;

    fn frozen(g: f64, h: f64) -> ResponseFunctions {
        ResponseFunctions::new(Response::Constant(g), Response::Constant(h))
    }

    fn cfg(g: f64, h: f64) -> KineticConfig {
        KineticConfig::new(KernelSpec::indicator(0.07), frozen(g, h))
    }

    #[test]
    fn superbee_values() {
        assert_eq!(superbee(-1.0), 0.0);
        assert_eq!(superbee(0.25), 0.5);
        assert_eq!(superbee(0.75), 1.0);
        assert_eq!(superbee(1.5), 1.5);
        assert_eq!(superbee(5.0), 2.0);
    }

    #[test]
    fn unit_courant_number_shifts_exactly() {
        let pulse: Vec<f64> = (0..20).map(|i| if (5..9).contains(&i) { 1.0 } else { 0.0 }).collect();
        let mut out = vec![0.0; 20];
        advect_row(&pulse, 1.0, &mut out);
        for i in 0..20 {
            assert_eq!(out[i], pulse[(i + 19) % 20]);
        }
        advect_row(&pulse, -1.0, &mut out);
        for i in 0..20 {
            assert_eq!(out[i], pulse[(i + 1) % 20]);
        }
    }

    #[test]
    fn constant_rows_and_resting_row_are_untouched() {
        let f = PhaseField::from_fn(1.0, 50, -1.0, 1.0, 0.02, |_, v| 1.0 + v * v).unwrap();
        let g = transport_halfstep(&f, &cfg(1.0, 2.0)).unwrap();
        assert_eq!(g.values, f.values);
        let f = PhaseField::from_fn(1.0, 50, -1.0, 1.0, 0.02, |x, _| (2.0 * PI * x).sin() + 2.0).unwrap();
        let g = transport_halfstep(&f, &cfg(1.0, 2.0)).unwrap();
        assert_eq!(g.row(50), f.row(50));
    }

    #[test]
    fn free_streaming_is_pure_transport() {
        let f = PhaseField::from_fn(1.0, 40, -1.0, 1.0, 0.5, |x, v| {
            1.5 + 0.5 * (2.0 * PI * x).cos() * (1.0 + v)
        })
        .unwrap();
        let c = cfg(0.0, 0.0);
        let a = strang_step(&f, &c).unwrap();
        let t1 = transport_halfstep(&f, &c).unwrap();
        let t2 = transport_halfstep(&t1, &c).unwrap();
        assert_eq!(a.values, t2.values);
        assert_eq!(velocity_step(&f, &c).unwrap().values, f.values);
    }

    #[test]
    fn cfl_violation_is_rejected() {
        let f = PhaseField::zeros(1.0, 10, -1.0, 1.0, 0.5).unwrap();
        let mut c = cfg(1.0, 1.0);
        c.cfl = 1.5;
        assert!(c.validate().is_err());
        assert!(transport_halfstep(&f, &c).is_err());
    }

    #[test]
    fn velocity_step_conserves_each_column() {
        let f = PhaseField::from_fn(1.0, 10, -1.0, 1.0, 0.02, |x, v| {
            (1.0 + x) * (1.0 + 0.5 * (3.0 * v).sin()).max(0.0)
        })
        .unwrap();
        let c = KineticConfig::new(
            KernelSpec::indicator(0.2),
            ResponseFunctions::new(Response::exp_decay(0.5), Response::Constant(2.0)),
        );
        let g = velocity_step(&f, &c).unwrap();
        let (a, b) = (f.density(), g.density());
        for i in 0..10 {
            assert!((a[i] - b[i]).abs() <= 1e-13 * a[i]);
        }
        assert!(g.min() >= 0.0);
    }

    #[test]
    fn stationary_profile_is_the_maxwellian() {
        // V = [−2, 2] keeps the tail truncation negligible
        let mut f = PhaseField::from_fn(1.0, 3, -2.0, 2.0, 0.02, |_, _| 0.25).unwrap();
        let c = cfg(1.0, 2.0);
        let mut solver = KineticSolver::new(&f, &c).unwrap();
        for _ in 0..20_000 {
            let g = solver.velocity(&f).unwrap();
            let change = g.values.iter().zip(&f.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            f = g;
            if change < 1e-15 {
                break;
            }
        }
        let m = moments(&f);
        let var = 2.0 * m.energy[0] / m.density[0];
        assert!((var - 0.25).abs() < 0.02 * 0.25, "{var}");
        let mx = maxwellian(m.density[0], 0.0, &c.responses, &f).unwrap();
        let err = (0..f.nv)
            .map(|j| ((f.at(0, j) - mx.values[j]) / mx.values[j]).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn friction_only_momentum_decays_exponentially() {
        // G ≡ 0 forces the upwind drift, whose momentum bias is O(Δv/⟨v⟩);
        // a fine velocity grid keeps it well inside the band
        let f = PhaseField::from_fn(1.0, 4, -1.0, 1.0, 1e-3, |_, v| {
            (-20.0 * (v - 0.3) * (v - 0.3)).exp()
        })
        .unwrap();
        let mut c = cfg(0.0, 2.0);
        c.cfl = 0.02;
        let solver = KineticSolver::new(&f, &c).unwrap();
        c.n_steps = (1.0 / solver.dt()).round() as usize;
        c.snapshot_stride = c.n_steps;
        let run = run_kinetic(&f, &c).unwrap();
        let p0 = run.history[0].momentum;
        for r in &run.history {
            let expect = p0 * (-2.0 * r.time).exp();
            assert!((r.momentum - expect).abs() <= 0.02 * expect.abs(), "{} {}", r.time, r.momentum);
        }
        assert!(run.min_value >= -1e-13);
    }

    #[test]
    fn balance_laws_hold_for_undirected_kernel() {
        // drifting Gaussian well inside V so the wall terms stay negligible
        let f = PhaseField::from_fn(1.0, 100, -2.0, 2.0, 0.04, |x, v| {
            (1.0 + 0.3 * (2.0 * PI * x).cos()) * (-4.0 * (v - 0.3) * (v - 0.3)).exp()
        })
        .unwrap();
        let mut c = KineticConfig::new(
            KernelSpec::indicator(0.1),
            ResponseFunctions::new(Response::exp_decay(3.0), Response::Constant(2.0)),
        );
        c.cfl = 0.25;
        c.n_steps = 200;
        c.snapshot_stride = 200;
        let run = run_kinetic(&f, &c).unwrap();
        let b = momentum_energy_balance(&run.history);
        assert!(b.energy_residual < 0.05, "{b:?}");
        assert!(b.momentum_residual < 0.05, "{b:?}");
    }

    #[test]
    fn free_streaming_conserves_momentum_and_energy() {
        let f = PhaseField::perturbed_uniform(1.0, 50, -1.0, 1.0, 0.04, 0.3, 2).unwrap();
        let mut c = cfg(0.0, 0.0);
        c.n_steps = 30;
        let run = run_kinetic(&f, &c).unwrap();
        let h0 = run.history[0];
        for r in &run.history {
            assert!((r.momentum - h0.momentum).abs() < 1e-14);
            assert!((r.energy - h0.energy).abs() < 1e-14);
        }
    }

    #[test]
    fn perceived_density_of_constant_field() {
        let f = PhaseField::from_fn(1.0, 100, -1.0, 1.0, 0.02, |_, _| 0.5).unwrap();
        let w = perceived_density_field(&f, &KernelSpec::indicator(0.07)).unwrap();
        // 15 cells of width 0.01 inside the closed ball, |V| = 2
        for v in &w {
            assert!((v - 0.5 * 0.15 * 2.0).abs() < 1e-12);
        }
        let unit = KernelSpec::indicator(0.07).with_normalization(Normalization::UnitIntegral);
        let g = PhaseField::perturbed_uniform(1.0, 100, -1.0, 1.0, 0.02, 0.3, 3).unwrap();
        let w = perceived_density_field(&g, &unit).unwrap();
        for j in 1..g.nv {
            assert_eq!(&w[j * 100..(j + 1) * 100], &w[..100]);
        }
    }

    #[test]
    fn directed_kernel_ignores_mass_behind() {
        // mass only at x ∈ [0.2, 0.3); test point x = 0.5
        let f = PhaseField::from_fn(1.0, 100, -1.0, 1.0, 0.02, |x, _| {
            if (0.2..0.3).contains(&x) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let spec = KernelSpec::indicator(0.25).with_cone(Cone::forward_half());
        let w = perceived_density_field(&f, &spec).unwrap();
        let i = 50;
        for j in 0..f.nv {
            let v = f.velocity(j);
            let val = w[j * 100 + i];
            if v > 0.0 {
                assert_eq!(val, 0.0);
            } else {
                assert!(val > 0.0);
            }
        }
    }

    #[test]
    fn zero_steps_echo() {
        let f = PhaseField::perturbed_uniform(1.0, 20, -1.0, 1.0, 0.1, 0.05, 1).unwrap();
        let run = run_kinetic(&f, &cfg(1.0, 2.0)).unwrap();
        assert_eq!(run.snapshots, vec![f]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn transport_is_tvd_conservative_and_positive(
            row in prop::collection::vec(0.0..1.0f64, 8..60),
            c in -1.0..1.0f64,
        ) {
            let mut out = vec![0.0; row.len()];
            advect_row(&row, c, &mut out);
            let before = total_variation(&row);
            prop_assert!(total_variation(&out) <= before * (1.0 + 1e-12) + 1e-15);
            let (m0, m1): (f64, f64) = (row.iter().sum(), out.iter().sum());
            prop_assert!((m0 - m1).abs() <= 1e-13 * m0.max(1.0));
            prop_assert!(out.iter().all(|&v| v >= -1e-15));
        }

        #[test]
        fn strang_step_conserves_mass_and_positivity(seed in 0u64..1000, amp in 0.0..0.9f64) {
            let f = PhaseField::noisy_uniform(1.0, 40, -1.0, 1.0, 0.05, amp, seed).unwrap();
            let c = KineticConfig::new(
                KernelSpec::indicator(0.1).with_cone(Cone::forward_half()),
                ResponseFunctions::new(Response::exp_decay(0.5), Response::Constant(2.0)),
            );
            let mut solver = KineticSolver::new(&f, &c).unwrap();
            let mut g = f.clone();
            for _ in 0..5 {
                g = solver.step(&g).unwrap();
            }
            prop_assert!((g.mass() - f.mass()).abs() <= 50.0 * c.tolerance * f.mass());
            prop_assert!(g.min() >= 0.0);
            prop_assert!(solver.max_tv_growth <= 1e-12);
        }
    }
}
