//! The periodic domain `[0, L)^d`, `d ∈ {1, 2}`.
//!
//! Points and vectors are stored as `[f64; 2]` in both dimensions; for `d = 1`
//! the second component is unused and kept at zero.

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGeometry {
    dim: usize,
    side: f64,
}

impl Default for TorusGeometry {
    fn default() -> Self {
        TorusGeometry { dim: 2, side: 1.0 }
    }
}

impl TorusGeometry {
    pub fn new(dim: usize, side: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "side length must be positive, got {side}"
            )));
        }
        Ok(TorusGeometry { dim, side })
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(dim, 1.0).expect("unit torus")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Maps a coordinate into `[0, L)`.
    #[inline]
    pub fn wrap_coord(&self, x: f64) -> f64 {
        if (0.0..self.side).contains(&x) {
            return x;
        }
        let y = x - self.side * (x / self.side).floor();
        // x slightly below zero can round up to exactly L
        if y >= self.side {
            0.0
        } else {
            y
        }
    }

    #[inline]
    pub fn wrap(&self, p: Vec2) -> Vec2 {
        let mut q = [self.wrap_coord(p[0]), 0.0];
        if self.dim == 2 {
            q[1] = self.wrap_coord(p[1]);
        }
        q
    }

    #[inline]
    fn min_image_coord(&self, d: f64) -> f64 {
        let half = 0.5 * self.side;
        let mut d = d;
        if d >= half {
            d -= self.side;
        } else if d < -half {
            d += self.side;
        }
        // Only reachable for inputs outside [0, L).
        if !(-half..half).contains(&d) {
            d -= self.side * ((d + half) / self.side).floor();
        }
        d
    }

    /// Minimal-image vector `δ` with `y + δ ≡ x (mod L)` and every component
    /// in `[−L/2, L/2)`.
    #[inline]
    pub fn displacement(&self, x: Vec2, y: Vec2) -> Vec2 {
        let mut d = [self.min_image_coord(x[0] - y[0]), 0.0];
        if self.dim == 2 {
            d[1] = self.min_image_coord(x[1] - y[1]);
        }
        d
    }

    #[inline]
    pub fn contains(&self, p: Vec2) -> bool {
        let ok = |c: f64| (0.0..self.side).contains(&c);
        ok(p[0]) && (self.dim == 1 || ok(p[1]))
    }
}

#[inline]
pub fn norm(v: Vec2) -> f64 {
    v[0].hypot(v[1])
}

#[inline]
pub fn norm_sq(v: Vec2) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

#[inline]
pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
