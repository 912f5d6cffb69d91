use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::response::ResponseFunctions;

/// Phase-space density `f(x, v)` on a periodic `x` grid `x_i = iΔx` and a
/// bounded velocity grid `v_j = v_min + jΔv`, `j = 0..nv` (both ends are
/// nodes). Stored by velocity row: `values[j*nx + i]`.
///
/// Velocity integrals use the trapezoidal weights `Δv·w_j`, `w_j = ½` at the
/// two end nodes and 1 elsewhere; these are also the control volumes of the
/// finite-volume velocity step, so the quadrature and the scheme conserve the
/// same mass.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    pub side: f64,
    pub nx: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub dv: f64,
    pub nv: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl PhaseField {
    /// A zero field. `(v_max − v_min)/dv` must be an integer.
    pub fn zeros(side: f64, nx: usize, v_min: f64, v_max: f64, dv: f64) -> Result<Self> {
        if !(side > 0.0) || nx < 3 {
            return Err(Error::InvalidParameter("need L > 0 and at least 3 x cells".into()));
        }
        if !(v_max > v_min && dv > 0.0) {
            return Err(Error::InvalidParameter("need v_min < v_max and dv > 0".into()));
        }
        let cells = (v_max - v_min) / dv;
        let k = cells.round();
        if (cells - k).abs() > 1e-9 * k.max(1.0) || k < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "velocity range {v_min}..{v_max} is not a multiple of dv = {dv}"
            )));
        }
        let nv = k as usize + 1;
        Ok(PhaseField {
            side,
            nx,
            v_min,
            v_max: v_min + k * dv,
            dv,
            nv,
            values: vec![0.0; nx * nv],
            time: 0.0,
        })
    }

    pub fn from_fn(
        side: f64,
        nx: usize,
        v_min: f64,
        v_max: f64,
        dv: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut out = Self::zeros(side, nx, v_min, v_max, dv)?;
        for j in 0..out.nv {
            let v = out.velocity(j);
            for i in 0..nx {
                out.values[j * nx + i] = f(i as f64 * out.dx(), v);
            }
        }
        Ok(out)
    }

    /// `(1/(L|V|))·(1 + ε cos(2πnx/L))`: mass one, uniform in `v`.
    pub fn perturbed_uniform(
        side: f64,
        nx: usize,
        v_min: f64,
        v_max: f64,
        dv: f64,
        amplitude: f64,
        mode: usize,
    ) -> Result<Self> {
        let c = 1.0 / (side * (v_max - v_min));
        let k = 2.0 * PI * mode as f64 / side;
        Self::from_fn(side, nx, v_min, v_max, dv, |x, _| c * (1.0 + amplitude * (k * x).cos()))
    }

    /// Uniform mass-one state times `1 + ε·u_i`, `u_i` i.i.d. uniform on
    /// `[−1, 1]` per x cell.
    pub fn noisy_uniform(
        side: f64,
        nx: usize,
        v_min: f64,
        v_max: f64,
        dv: f64,
        amplitude: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bumps: Vec<f64> = (0..nx)
            .map(|_| 1.0 + amplitude * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let c = 1.0 / (side * (v_max - v_min));
        let mut out = Self::zeros(side, nx, v_min, v_max, dv)?;
        for j in 0..out.nv {
            for i in 0..nx {
                out.values[j * nx + i] = c * bumps[i];
            }
        }
        Ok(out)
    }

    pub fn dx(&self) -> f64 {
        self.side / self.nx as f64
    }

    /// `v_j`, computed so that mirrored nodes of a symmetric range are exact
    /// negatives and the centre node is exactly zero.
    #[inline]
    pub fn velocity(&self, j: usize) -> f64 {
        let n = (self.nv - 1) as f64;
        let j = j as f64;
        (self.v_min * (n - j) + self.v_max * j) / n
    }

    /// Trapezoidal weight of velocity node `j` (without the `Δv`).
    #[inline]
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.nv {
            0.5
        } else {
            1.0
        }
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn mass(&self) -> f64 {
        self.density().iter().sum::<f64>() * self.dx()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `ρ_i = Σ_j w_j f_ij Δv`.
    pub fn density(&self) -> Vec<f64> {
        moments(self).density
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub density: Vec<f64>,
    pub momentum: Vec<f64>,
    pub energy: Vec<f64>,
}

impl Moments {
    pub fn totals(&self, dx: f64) -> (f64, f64, f64) {
        let s = |v: &[f64]| v.iter().sum::<f64>() * dx;
        (s(&self.density), s(&self.momentum), s(&self.energy))
    }
}

/// Mass, momentum and energy densities `ρ`, `ρu = ∫vf`, `ρE = ½∫v²f`.
pub fn moments(f: &PhaseField) -> Moments {
    let nx = f.nx;
    let mut m = Moments {
        density: vec![0.0; nx],
        momentum: vec![0.0; nx],
        energy: vec![0.0; nx],
    };
    // mirrored nodes are summed in pairs so odd profiles cancel exactly
    let last = f.nv - 1;
    for j in 0..=last / 2 {
        let k = last - j;
        let (v, u) = (f.velocity(j), f.velocity(k));
        let w = f.weight(j) * f.dv;
        let wk = f.weight(k) * f.dv;
        for i in 0..nx {
            let (a, b) = (f.at(i, j), if k != j { f.at(i, k) } else { 0.0 });
            m.density[i] += w * a + wk * b;
            m.momentum[i] += w * v * a + wk * u * b;
            m.energy[i] += 0.5 * (w * v * v * a + wk * u * u * b);
        }
    }
    m
}

#[derive(Clone, Debug)]
pub struct SampledMaxwellian {
    pub values: Vec<f64>,
    /// `ρ − Σ w_j M(v_j) Δv`: mass lost to the bounded velocity range.
    pub mass_deficit: f64,
    /// `G²/(2H)`.
    pub temperature: f64,
}

/// `M(v) = (H/(πG²))^{1/2} ρ exp(−Hv²/G²)` with `G, H` evaluated at `θ`,
/// sampled at the velocity nodes of `grid`. The prefactor is the one that
/// gives `∫M dv = ρ`; `(H/(2πG²))^{1/2}` would leave `ρ/√2`.
pub fn maxwellian(
    rho: f64,
    theta: f64,
    responses: &ResponseFunctions,
    grid: &PhaseField,
) -> Result<SampledMaxwellian> {
    let g = responses.g(theta);
    let h = responses.h(theta);
    if !(g > 0.0) {
        return Err(Error::DegenerateTemperature);
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("Maxwellian needs H > 0".into()));
    }
    let g2 = g * g;
    let amp = (h / (PI * g2)).sqrt() * rho;
    let values: Vec<f64> = (0..grid.nv)
        .map(|j| {
            let v = grid.velocity(j);
            amp * (-h * v * v / g2).exp()
        })
        .collect();
    let discrete: f64 = values
        .iter()
        .enumerate()
        .map(|(j, m)| grid.weight(j) * m * grid.dv)
        .sum();
    Ok(SampledMaxwellian {
        values,
        mass_deficit: rho - discrete,
        temperature: g2 / (2.0 * h),
    })
}
