use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::TorusGeometry;

/// Grid samples of a density on the torus: `m` equidistant points per axis,
/// 2D values stored row by row (`values[j*m + i]` at `(iΔx, jΔx)`).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    pub geometry: TorusGeometry,
    pub m: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(geometry: TorusGeometry, m: usize, values: Vec<f64>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 points per axis".into()));
        }
        let expected = m.pow(geometry.dim() as u32);
        if values.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "expected {expected} grid values, got {}",
                values.len()
            )));
        }
        Ok(DensityField {
            geometry,
            m,
            values,
            time: 0.0,
        })
    }

    pub fn from_fn(geometry: TorusGeometry, m: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let dx = geometry.side() / m as f64;
        let values = if geometry.dim() == 1 {
            (0..m).map(|i| f(i as f64 * dx, 0.0)).collect()
        } else {
            (0..m * m)
                .map(|k| f((k % m) as f64 * dx, (k / m) as f64 * dx))
                .collect()
        };
        Self::new(geometry, m, values)
    }

    pub fn constant(geometry: TorusGeometry, m: usize, c: f64) -> Result<Self> {
        Self::from_fn(geometry, m, |_, _| c)
    }

    pub fn dx(&self) -> f64 {
        self.geometry.side() / self.m as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.geometry.dim() as i32)
    }

    /// `Σ ρ_i Δx^d`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// I.i.d. uniform `[0, 1)` values at every grid point.
pub fn random_initial_field(geometry: TorusGeometry, m: usize, seed: u64) -> Result<DensityField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = m.pow(geometry.dim() as u32);
    let values = (0..len).map(|_| rng.random::<f64>()).collect();
    DensityField::new(geometry, m, values)
}

/// Number of strict local maxima of a periodic 1D profile; a flat-topped
/// plateau counts once. A constant profile has none.
pub fn periodic_local_maxima(values: &[f64]) -> usize {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    // start the scan just after a global minimum so plateaus do not straddle the seam
    let start = (0..n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    let at = |k: usize| values[(start + k) % n];
    let mut count = 0;
    let mut k = 1;
    while k < n {
        if at(k) > at(k - 1) {
            let mut e = k;
            while e + 1 < n && at(e + 1) == at(k) {
                e += 1;
            }
            if at((e + 1) % n) < at(k) || e + 1 == n {
                count += 1;
            }
            k = e + 1;
        } else {
            k += 1;
        }
    }
    count
}

/// Number of periodic runs where the profile exceeds its mean by more than
/// `rel` times the mean.
pub fn aggregate_count(values: &[f64], rel: f64) -> usize {
    let n = values.len();
    if n == 0 {
        return 0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let above: Vec<bool> = values.iter().map(|&v| v > mean * (1.0 + rel)).collect();
    if above.iter().all(|&a| a) {
        return 0;
    }
    (0..n).filter(|&i| above[i] && !above[(i + n - 1) % n]).count()
}

/// Number of 4-connected periodic clumps of an `m × m` field where it exceeds
/// its mean by more than `rel` times the mean.
pub fn aggregate_count_2d(values: &[f64], m: usize, rel: f64) -> usize {
    let n = values.len();
    if n == 0 || m * m != n {
        return 0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let above: Vec<bool> = values.iter().map(|&v| v > mean * (1.0 + rel)).collect();
    if above.iter().all(|&a| a) {
        return 0;
    }
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if !above[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (i, j) = (k % m, k / m);
            for (a, b) in [((i + 1) % m, j), ((i + m - 1) % m, j), (i, (j + 1) % m), (i, (j + m - 1) % m)] {
                let q = b * m + a;
                if above[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    count
}
