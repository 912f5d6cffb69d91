use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{TorusGeometry, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelOrder {
    First,
    Second,
}

/// Positions (and, for the second-order model, velocities) of `N` individuals.
///
/// Every particle owns a ChaCha8 stream (`seed`, stream id = particle index),
/// so the noise a particle sees never depends on how the work is scheduled.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub geometry: TorusGeometry,
    pub positions: Vec<Vec2>,
    pub velocities: Option<Vec<Vec2>>,
    pub time: f64,
    pub(crate) streams: Vec<ChaCha8Rng>,
}

pub(crate) fn particle_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[inline]
pub(crate) fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec2 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = if dim == 2 { rng.sample(StandardNormal) } else { 0.0 };
    [a, b]
}

/// Uniform positions on the torus; standard normal velocities when `order`
/// is second. Identical `(n, geometry, seed, order)` give bit-identical
/// ensembles.
pub fn init_uniform(
    n: usize,
    geometry: TorusGeometry,
    seed: u64,
    order: ModelOrder,
) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one particle required".into()));
    }
    let dim = geometry.dim();
    let l = geometry.side();
    let mut streams: Vec<ChaCha8Rng> = (0..n).map(|i| particle_stream(seed, i)).collect();
    let positions = streams
        .iter_mut()
        .map(|rng| {
            let x = rng.random::<f64>() * l;
            let y = if dim == 2 { rng.random::<f64>() * l } else { 0.0 };
            geometry.wrap([x, y])
        })
        .collect();
    let velocities = match order {
        ModelOrder::First => None,
        ModelOrder::Second => Some(streams.iter_mut().map(|rng| normal_vec(rng, dim)).collect()),
    };
    Ok(ParticleEnsemble {
        geometry,
        positions,
        velocities,
        time: 0.0,
        streams,
    })
}

impl ParticleEnsemble {
    /// Build an ensemble from given state. Positions are wrapped into the
    /// domain; noise streams are derived from `seed`.
    pub fn from_state(
        geometry: TorusGeometry,
        positions: Vec<Vec2>,
        velocities: Option<Vec<Vec2>>,
        seed: u64,
    ) -> Result<Self> {
        if let Some(v) = &velocities {
            if v.len() != positions.len() {
                return Err(Error::InvalidParameter(
                    "velocity and position counts differ".into(),
                ));
            }
        }
        let positions: Vec<Vec2> = positions.into_iter().map(|p| geometry.wrap(p)).collect();
        let streams = (0..positions.len()).map(|i| particle_stream(seed, i)).collect();
        Ok(ParticleEnsemble {
            geometry,
            positions,
            velocities,
            time: 0.0,
            streams,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn order(&self) -> ModelOrder {
        if self.velocities.is_some() {
            ModelOrder::Second
        } else {
            ModelOrder::First
        }
    }
}
