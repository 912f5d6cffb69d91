use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::response::ResponseFunctions;

use super::convolution::PeriodicConvolution;
use super::field::DensityField;
use super::linalg::{bicgstab, l1_norm, solve_cyclic_tridiagonal};

/// Negative values smaller in magnitude than this are rounding noise and get
/// clamped to zero; anything larger is reported as a positivity failure.
const CLAMP_LIMIT: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct PdeSimConfig {
    pub dt: f64,
    pub kernel: KernelSpec,
    pub responses: ResponseFunctions,
    pub n_steps: usize,
    pub snapshot_stride: usize,
    /// Relative ℓ¹ residual required of the linear solve.
    pub tolerance: f64,
    /// Stop once `max |Δρ|/dt` falls below this.
    pub steady_threshold: f64,
}

impl PdeSimConfig {
    pub fn new(dt: f64, kernel: KernelSpec, responses: ResponseFunctions) -> Self {
        PdeSimConfig {
            dt,
            kernel,
            responses,
            n_steps: 0,
            snapshot_stride: 1,
            tolerance: 1e-12,
            steady_threshold: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
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
}

/// `(I − dt·D₂·diag(a)) ρ_new = ρ_old` with `a_i = ½G((W∗ρ_old)_i)²` and `D₂`
/// the periodic second-difference Laplacian. Row `i` reads
/// `(1 + 2d·λa_i) x_i − λ Σ_{nbr j} a_j x_j` with `λ = dt/Δx²`; every column
/// sums to one.
#[derive(Clone, Debug)]
pub struct SemiImplicitSystem {
    pub dim: usize,
    pub m: usize,
    pub lambda: f64,
    pub coeff: Vec<f64>,
}

impl SemiImplicitSystem {
    pub fn len(&self) -> usize {
        self.coeff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeff.is_empty()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let c = 2.0 * self.dim as f64 * self.lambda;
        self.coeff.iter().map(|a| 1.0 + c * a).collect()
    }

    fn neighbours(&self, k: usize) -> [usize; 4] {
        let m = self.m;
        if self.dim == 1 {
            let l = (k + m - 1) % m;
            let r = (k + 1) % m;
            [l, r, l, r]
        } else {
            let (i, j) = (k % m, k / m);
            [
                j * m + (i + m - 1) % m,
                j * m + (i + 1) % m,
                ((j + m - 1) % m) * m + i,
                ((j + 1) % m) * m + i,
            ]
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let c = 2.0 * self.dim as f64 * self.lambda;
        let nb = 2 * self.dim;
        let a = &self.coeff;
        out.par_iter_mut().enumerate().with_min_len(1024).for_each(|(k, o)| {
            let ns = self.neighbours(k);
            let off: f64 = ns[..nb].iter().map(|&j| a[j] * x[j]).sum();
            *o = x[k] + c * a[k] * x[k] - self.lambda * off;
        });
    }

    /// Dense matrix, for inspection and small tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut rows = vec![vec![0.0; n]; n];
        let diag = self.diagonal();
        for (k, row) in rows.iter_mut().enumerate() {
            row[k] += diag[k];
            for &j in &self.neighbours(k)[..2 * self.dim] {
                row[j] -= self.lambda * self.coeff[j];
            }
        }
        rows
    }

    /// Solve to relative ℓ¹ residual `tol`; returns solution and residual.
    pub fn solve(&self, rhs: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
        let diag = self.diagonal();
        let bnorm = l1_norm(rhs);
        if self.dim == 1 && self.m >= 3 {
            let n = self.m;
            let lower: Vec<f64> = (0..n).map(|i| -self.lambda * self.coeff[(i + n - 1) % n]).collect();
            let upper: Vec<f64> = (0..n).map(|i| -self.lambda * self.coeff[(i + 1) % n]).collect();
            let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, rhs)?;
            let res = self.residual(&x, rhs, bnorm);
            if res <= tol {
                return Ok((x, res));
            }
            // fall through to the iterative solver, warm-started
            return bicgstab(|v, o| self.apply(v, o), &diag, rhs, &x, tol, 10_000);
        }
        bicgstab(|v, o| self.apply(v, o), &diag, rhs, rhs, tol, 10_000)
    }

    fn residual(&self, x: &[f64], b: &[f64], bnorm: f64) -> f64 {
        if bnorm == 0.0 {
            return l1_norm(x);
        }
        let mut ax = vec![0.0; x.len()];
        self.apply(x, &mut ax);
        ax.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / bnorm
    }
}

/// Assemble the semi-implicit system for one step from `field`.
pub fn assemble_semi_implicit(field: &DensityField, cfg: &PdeSimConfig) -> Result<SemiImplicitSystem> {
    let conv = PeriodicConvolution::new(&cfg.kernel, &field.geometry, field.m)?;
    Ok(system_from(&conv, field, cfg))
}

fn system_from(conv: &PeriodicConvolution, field: &DensityField, cfg: &PdeSimConfig) -> SemiImplicitSystem {
    let perceived = conv.apply(&field.values);
    let coeff = perceived
        .iter()
        .map(|&s| {
            let g = cfg.responses.g(s);
            0.5 * g * g
        })
        .collect();
    let dx = field.dx();
    SemiImplicitSystem {
        dim: field.geometry.dim(),
        m: field.m,
        lambda: cfg.dt / (dx * dx),
        coeff,
    }
}

/// Reusable stepper: keeps the sampled kernel across steps.
#[derive(Clone, Debug)]
pub struct PdeStepper {
    conv: PeriodicConvolution,
    cfg: PdeSimConfig,
    /// Largest residual seen so far.
    pub max_residual: f64,
    /// Largest magnitude of negative values clamped to zero so far.
    pub max_clamped: f64,
}

impl PdeStepper {
    pub fn new(field: &DensityField, cfg: &PdeSimConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(PdeStepper {
            conv: PeriodicConvolution::new(&cfg.kernel, &field.geometry, field.m)?,
            cfg: cfg.clone(),
            max_residual: 0.0,
            max_clamped: 0.0,
        })
    }

    pub fn step(&mut self, field: &DensityField) -> Result<DensityField> {
        let sys = system_from(&self.conv, field, &self.cfg);
        let (mut x, res) = sys.solve(&field.values, self.cfg.tolerance)?;
        self.max_residual = self.max_residual.max(res);

        let min = x.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -CLAMP_LIMIT {
            return Err(Error::PositivityViolated { min });
        }
        if min < 0.0 {
            self.max_clamped = self.max_clamped.max(-min);
            for v in x.iter_mut() {
                *v = v.max(0.0);
            }
        }
        let old_mass: f64 = field.values.iter().sum();
        let new_mass: f64 = x.iter().sum();
        if old_mass > 0.0 {
            let drift = (new_mass - old_mass).abs() / old_mass;
            if drift > 10.0 * self.cfg.tolerance {
                return Err(Error::SolverFailed {
                    residual: drift,
                    tolerance: 10.0 * self.cfg.tolerance,
                });
            }
        }
        Ok(DensityField {
            geometry: field.geometry,
            m: field.m,
            values: x,
            time: field.time + self.cfg.dt,
        })
    }
}

/// One semi-implicit step.
pub fn step_pde(field: &DensityField, cfg: &PdeSimConfig) -> Result<DensityField> {
    PdeStepper::new(field, cfg)?.step(field)
}

#[derive(Clone, Debug)]
pub struct PdeRun {
    pub snapshots: Vec<DensityField>,
    /// Time at which `max|Δρ|/dt` first fell below the threshold.
    pub steady_time: Option<f64>,
    pub initial_mass: f64,
    /// Largest relative mass deviation from the initial mass over the run.
    pub max_mass_drift: f64,
    /// Smallest grid value observed after any step, before clamping.
    pub min_value: f64,
    pub steps: usize,
}

impl PdeRun {
    pub fn last(&self) -> &DensityField {
        self.snapshots.last().expect("at least the initial snapshot")
    }
}

/// Step until `n_steps` or steady state, whichever comes first.
pub fn run_pde(initial: &DensityField, cfg: &PdeSimConfig) -> Result<PdeRun> {
    let mut stepper = PdeStepper::new(initial, cfg)?;
    let initial_mass = initial.mass();
    let mut run = PdeRun {
        snapshots: vec![initial.clone()],
        steady_time: None,
        initial_mass,
        max_mass_drift: 0.0,
        min_value: initial.min(),
        steps: 0,
    };
    let mut current = initial.clone();
    for step in 1..=cfg.n_steps {
        let next = stepper.step(&current)?;
        let change = next
            .values
            .iter()
            .zip(&current.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / cfg.dt;
        run.min_value = run.min_value.min(next.min()).min(-stepper.max_clamped);
        if initial_mass > 0.0 {
            run.max_mass_drift = run
                .max_mass_drift
                .max((next.mass() - initial_mass).abs() / initial_mass);
        }
        current = next;
        run.steps = step;
        let steady = change < cfg.steady_threshold;
        if steady {
            run.steady_time = Some(current.time);
        }
        if step % cfg.snapshot_stride == 0 || step == cfg.n_steps || steady {
            run.snapshots.push(current.clone());
        }
        if steady {
            break;
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::geometry::TorusGeometry;
    use crate::meanfield::{convolve_periodic, random_initial_field};
    use crate::response::Response;

    fn cfg(dt: f64, kernel: KernelSpec, g: Response) -> PdeSimConfig {
        PdeSimConfig::new(dt, kernel, ResponseFunctions::new(g, Response::Constant(0.0)))
    }

    #[test]
    fn degenerate_diffusivity_gives_identity() {
        let f = random_initial_field(TorusGeometry::unit(1), 16, 1).unwrap();
        let c = cfg(1e-3, KernelSpec::indicator(0.1), Response::Constant(0.0));
        let sys = assemble_semi_implicit(&f, &c).unwrap();
        for (i, row) in sys.to_dense().iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(step_pde(&f, &c).unwrap().values, f.values);
    }

    #[test]
    fn four_point_circulant() {
        // a ≡ 1 requires G ≡ √2
        let f = DensityField::constant(TorusGeometry::unit(1), 4, 1.0).unwrap();
        let dt = 1e-2;
        let c = cfg(dt, KernelSpec::indicator(0.1), Response::Constant(2f64.sqrt()));
        let sys = assemble_semi_implicit(&f, &c).unwrap();
        let lam = dt / (0.25 * 0.25);
        let a = sys.to_dense();
        for i in 0..4 {
            let expect = [1.0 + 2.0 * lam, -lam, 0.0, -lam];
            for j in 0..4 {
                assert!((a[i][(i + j) % 4] - expect[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn columns_of_the_operator_sum_to_zero() {
        for dim in [1, 2] {
            let f = random_initial_field(TorusGeometry::unit(dim), 8, 3).unwrap();
            let c = cfg(1e-3, KernelSpec::indicator(0.2), Response::exp_decay(0.5));
            let a = assemble_semi_implicit(&f, &c).unwrap().to_dense();
            let n = a.len();
            for j in 0..n {
                // columns of I − dt·D₂·diag(a) sum to 1
                let s: f64 = (0..n).map(|i| a[i][j]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_state_is_stationary() {
        for dim in [1, 2] {
            let f = DensityField::constant(TorusGeometry::unit(dim), 40, 0.8).unwrap();
            let c = cfg(1e-4, KernelSpec::indicator(0.1), Response::exp_decay(3.0));
            let next = step_pde(&f, &c).unwrap();
            for v in &next.values {
                assert!((v - 0.8).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hard_cutoff_plateau_is_stationary() {
        // R = 0.1, M = 200: W∗ρ ≥ 0.205·min ρ ≥ s0 = 0.1 when ρ ≥ 0.5
        let g = TorusGeometry::unit(1);
        let f = DensityField::from_fn(g, 200, |x, _| 0.8 + 0.2 * (2.0 * PI * x).sin()).unwrap();
        let spec = KernelSpec::indicator(0.1);
        let perceived = convolve_periodic(&f, &spec).unwrap();
        assert!(perceived.values.iter().all(|&s| s >= 0.1));
        let c = cfg(1e-4, spec, Response::hard_cutoff(0.1));
        assert_eq!(step_pde(&f, &c).unwrap().values, f.values);
    }

    #[test]
    fn heat_mode_decays_by_backward_euler_symbol() {
        let g = TorusGeometry::unit(1);
        let m = 128;
        let dt = 1e-4;
        let c = cfg(dt, KernelSpec::indicator(0.1), Response::Constant(2f64.sqrt()));
        for n in [1usize, 3, 10] {
            let xi = 2.0 * PI * n as f64;
            let f = DensityField::from_fn(g, m, |x, _| 2.0 + (xi * x).cos()).unwrap();
            let next = step_pde(&f, &c).unwrap();
            let dx = 1.0 / m as f64;
            let xi_h2 = (2.0 / dx * (xi * dx / 2.0).sin()).powi(2);
            let amp: f64 = next
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (v - 2.0) * (xi * i as f64 * dx).cos())
                .sum::<f64>()
                * 2.0
                / m as f64;
            assert!((amp - 1.0 / (1.0 + xi_h2 * dt)).abs() < 1e-12);
            // and within O(dt²) of the exact heat kernel factor
            assert!((amp - (-xi * xi * dt).exp()).abs() < 2.0 * (xi * xi * dt).powi(2));
        }
    }

    #[test]
    fn mass_and_positivity_on_random_runs() {
        for dim in [1, 2] {
            let g = TorusGeometry::unit(dim);
            let m = if dim == 1 { 200 } else { 40 };
            let f = random_initial_field(g, m, 9).unwrap();
            let mut c = cfg(1e-4, KernelSpec::indicator(0.1), Response::exp_decay(3.0));
            c.n_steps = 200;
            c.snapshot_stride = 50;
            let run = run_pde(&f, &c).unwrap();
            assert!(run.max_mass_drift <= 10.0 * c.tolerance * run.steps as f64);
            assert!(run.min_value >= -1e-13);
        }
    }

    #[test]
    fn zero_steps_echo_initial_field() {
        let f = random_initial_field(TorusGeometry::unit(1), 20, 2).unwrap();
        let c = cfg(1e-4, KernelSpec::indicator(0.1), Response::exp_decay(3.0));
        let run = run_pde(&f, &c).unwrap();
        assert_eq!(run.snapshots, vec![f]);
        assert_eq!(run.steady_time, None);
    }

    #[test]
    fn steady_state_is_detected() {
        let g = TorusGeometry::unit(1);
        let f = DensityField::from_fn(g, 50, |x, _| 1.0 + 0.01 * (2.0 * PI * x).cos()).unwrap();
        let mut c = cfg(1e-3, KernelSpec::indicator(0.1), Response::Constant(1.0));
        c.n_steps = 100_000;
        c.snapshot_stride = 1000;
        let run = run_pde(&f, &c).unwrap();
        let t = run.steady_time.expect("diffusion settles");
        // 0.01·(ξ²/2)·e^{−ξ²t/2} < 1e−6 once t ≈ 0.62
        assert!(t > 0.55 && t < 0.7, "{t}");
    }
}
