use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{TorusGeometry, Vec2};
use crate::kernel::KernelSpec;
use crate::response::ResponseFunctions;

use super::clusters::cluster_count;
use super::density::perceived_density_all;
use super::ensemble::{init_uniform, normal_vec, ModelOrder, ParticleEnsemble};

#[derive(Clone, Debug)]
pub struct ParticleSimConfig {
    pub order: ModelOrder,
    pub n_particles: usize,
    pub geometry: TorusGeometry,
    pub dt: f64,
    pub kernel: KernelSpec,
    pub responses: ResponseFunctions,
    pub n_steps: usize,
    pub snapshot_stride: usize,
    pub seed: u64,
    /// Linking distance for cluster diagnostics; the kernel radius if unset.
    pub cluster_radius: Option<f64>,
}

impl ParticleSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidParameter("snapshot stride must be ≥ 1".into()));
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidParameter("at least one particle required".into()));
        }
        self.kernel.validate()?;
        self.responses.validate()
    }

    pub fn cluster_radius(&self) -> f64 {
        self.cluster_radius.unwrap_or(self.kernel.radius)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub positions: Vec<Vec2>,
    pub velocities: Option<Vec<Vec2>>,
    pub theta: Vec<f64>,
    pub clusters: usize,
}

/// One Euler–Maruyama step of `dx_i = G(ϑ_i) dB_i`, all `ϑ_i` taken from
/// the pre-step positions.
pub fn step_first_order(ens: &mut ParticleEnsemble, cfg: &ParticleSimConfig) -> Result<()> {
    let theta = perceived_density_all(ens, &cfg.kernel)?;
    step_first_order_with(ens, cfg, &theta);
    Ok(())
}

fn step_first_order_with(ens: &mut ParticleEnsemble, cfg: &ParticleSimConfig, theta: &[f64]) {
    let geom = ens.geometry;
    let dim = geom.dim();
    let sqrt_dt = cfg.dt.sqrt();
    ens.positions
        .par_iter_mut()
        .zip(ens.streams.par_iter_mut())
        .zip(theta.par_iter())
        .for_each(|((x, rng), &th)| {
            let amp = cfg.responses.g(th) * sqrt_dt;
            let xi = normal_vec(rng, dim);
            *x = geom.wrap([x[0] + amp * xi[0], x[1] + amp * xi[1]]);
        });
    ens.time += cfg.dt;
}

/// One step of `dx = v dt`, `dv = −H(ϑ)v dt + G(ϑ) dB`: velocity first, then
/// position with the updated velocity.
pub fn step_second_order(ens: &mut ParticleEnsemble, cfg: &ParticleSimConfig) -> Result<()> {
    let theta = perceived_density_all(ens, &cfg.kernel)?;
    step_second_order_with(ens, cfg, &theta)
}

fn step_second_order_with(
    ens: &mut ParticleEnsemble,
    cfg: &ParticleSimConfig,
    theta: &[f64],
) -> Result<()> {
    let dt = cfg.dt;
    let worst = theta
        .iter()
        .map(|&t| cfg.responses.h(t) * dt)
        .fold(0.0, f64::max);
    if worst >= 1.0 {
        return Err(Error::DampingOvershoot(worst));
    }
    let geom = ens.geometry;
    let dim = geom.dim();
    let sqrt_dt = dt.sqrt();
    let velocities = ens
        .velocities
        .as_mut()
        .ok_or_else(|| Error::InvalidParameter("second-order step needs velocities".into()))?;
    ens.positions
        .par_iter_mut()
        .zip(velocities.par_iter_mut())
        .zip(ens.streams.par_iter_mut())
        .zip(theta.par_iter())
        .for_each(|(((x, v), rng), &th)| {
            let keep = 1.0 - cfg.responses.h(th) * dt;
            let amp = cfg.responses.g(th) * sqrt_dt;
            let xi = normal_vec(rng, dim);
            v[0] = v[0] * keep + amp * xi[0];
            v[1] = if dim == 2 { v[1] * keep + amp * xi[1] } else { 0.0 };
            *x = geom.wrap([x[0] + v[0] * dt, x[1] + v[1] * dt]);
        });
    ens.time += dt;
    Ok(())
}

fn snapshot(ens: &ParticleEnsemble, theta: Vec<f64>, cluster_radius: f64) -> Snapshot {
    Snapshot {
        time: ens.time,
        positions: ens.positions.clone(),
        velocities: ens.velocities.clone(),
        theta,
        clusters: cluster_count(ens, cluster_radius).count,
    }
}

/// Run from a fresh uniform ensemble.
pub fn run_particles(cfg: &ParticleSimConfig) -> Result<Vec<Snapshot>> {
    cfg.validate()?;
    let mut ens = init_uniform(cfg.n_particles, cfg.geometry, cfg.seed, cfg.order)?;
    run_from(&mut ens, cfg)
}

/// Advance `ens` by `cfg.n_steps`, recording a snapshot at step 0, every
/// `snapshot_stride` steps, and at the final step.
pub fn run_from(ens: &mut ParticleEnsemble, cfg: &ParticleSimConfig) -> Result<Vec<Snapshot>> {
    cfg.validate()?;
    if ens.order() != cfg.order {
        return Err(Error::InvalidParameter(
            "ensemble and configuration disagree on model order".into(),
        ));
    }
    let radius = cfg.cluster_radius();
    let mut out = Vec::new();
    // with constant responses ϑ only feeds the snapshots
    let inert = cfg.responses.noise.is_constant() && cfg.responses.damping.is_constant();
    let mut theta = perceived_density_all(ens, &cfg.kernel)?;
    out.push(snapshot(ens, theta.clone(), radius));
    for step in 1..=cfg.n_steps {
        match cfg.order {
            ModelOrder::First => step_first_order_with(ens, cfg, &theta),
            ModelOrder::Second => step_second_order_with(ens, cfg, &theta)?,
        }
        let emit = step % cfg.snapshot_stride == 0 || step == cfg.n_steps;
        if !inert || emit {
            theta = perceived_density_all(ens, &cfg.kernel)?;
        }
        if emit {
            out.push(snapshot(ens, theta.clone(), radius));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Cone;
    use crate::response::Response;

    fn config(order: ModelOrder, n: usize, g: Response, h: Response, radius: f64) -> ParticleSimConfig {
        ParticleSimConfig {
            order,
            n_particles: n,
            geometry: TorusGeometry::unit(2),
            dt: 1e-3,
            kernel: KernelSpec::indicator(radius),
            responses: ResponseFunctions::new(g, h),
            n_steps: 10,
            snapshot_stride: 1,
            seed: 17,
            cluster_radius: None,
        }
    }

    #[test]
    fn frozen_when_noise_vanishes() {
        // all particles within 0.05 of each other: ϑ = (N−1)/N ≥ s0
        let g = TorusGeometry::unit(2);
        let pts: Vec<_> = (0..20).map(|k| [0.5 + 0.001 * k as f64, 0.5]).collect();
        let mut ens = ParticleEnsemble::from_state(g, pts.clone(), None, 3).unwrap();
        let cfg = config(ModelOrder::First, 20, Response::hard_cutoff(0.5), Response::Constant(0.0), 0.1);
        let snaps = run_from(&mut ens, &cfg).unwrap();
        for s in &snaps {
            assert_eq!(s.positions, pts);
        }
    }

    #[test]
    fn ballistic_motion_without_noise_or_damping() {
        let g = TorusGeometry::unit(2);
        let v = vec![[0.3, -0.2], [-1.0, 0.5]];
        let mut ens =
            ParticleEnsemble::from_state(g, vec![[0.1, 0.1], [0.7, 0.4]], Some(v.clone()), 1).unwrap();
        let cfg = config(ModelOrder::Second, 2, Response::Constant(0.0), Response::Constant(0.0), 0.01);
        let before = ens.positions.clone();
        step_second_order(&mut ens, &cfg).unwrap();
        assert_eq!(ens.velocities.as_ref().unwrap(), &v);
        for k in 0..2 {
            for a in 0..2 {
                assert_eq!(ens.positions[k][a], g.wrap_coord(before[k][a] + v[k][a] * 1e-3));
            }
        }
    }

    #[test]
    fn damping_overshoot_is_an_error() {
        let mut cfg = config(ModelOrder::Second, 4, Response::Constant(1.0), Response::Constant(2.0), 0.01);
        cfg.dt = 0.5;
        let mut ens = init_uniform(4, cfg.geometry, 1, ModelOrder::Second).unwrap();
        assert!(matches!(
            step_second_order(&mut ens, &cfg),
            Err(Error::DampingOvershoot(_))
        ));
    }

    #[test]
    fn zero_steps_echo_initial_state() {
        let mut cfg = config(ModelOrder::First, 50, Response::exp_decay(3.0), Response::Constant(0.0), 0.1);
        cfg.n_steps = 0;
        let snaps = run_particles(&cfg).unwrap();
        let init = init_uniform(50, cfg.geometry, cfg.seed, ModelOrder::First).unwrap();
        assert_eq!(snaps.len(), 1);
        assert_eq!(snaps[0].positions, init.positions);
        assert_eq!(snaps[0].time, 0.0);
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = config(ModelOrder::Second, 200, Response::exp_decay(3.0), Response::Constant(2.0), 0.05);
        cfg.kernel = cfg.kernel.with_cone(Cone::forward_half());
        cfg.n_steps = 30;
        cfg.snapshot_stride = 7;
        let a = run_particles(&cfg).unwrap();
        let b = run_particles(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1 + 4 + 1);
        assert!(a.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn parallel_and_serial_agree() {
        let mut cfg = config(ModelOrder::First, 300, Response::exp_decay(3.0), Response::Constant(0.0), 0.1);
        cfg.n_steps = 20;
        let par = run_particles(&cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ser = pool.install(|| run_particles(&cfg).unwrap());
        assert_eq!(par, ser);
    }

    #[test]
    fn positions_stay_in_domain() {
        let mut cfg = config(ModelOrder::Second, 100, Response::Constant(5.0), Response::Constant(0.5), 0.05);
        cfg.n_steps = 200;
        cfg.snapshot_stride = 50;
        for s in run_particles(&cfg).unwrap() {
            assert_eq!(s.positions.len(), 100);
            assert!(s.positions.iter().all(|&p| cfg.geometry.contains(p)));
        }
    }
}
