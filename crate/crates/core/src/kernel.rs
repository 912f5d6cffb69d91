//! Interaction kernels `W(x, v) = w(|x|) · χ[cos α, 1](x·v / |x||v|)`.
//!
//! The displacement passed to a kernel always points from the observer to the
//! observed individual, so a forward cone sees what lies ahead of the
//! observer's heading.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{dot, norm_sq, TorusGeometry, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    /// `w(s) = 1` for `s ≤ R`, else 0.
    Indicator,
    /// `w(s) = (1 − (s/R)²)²` for `s ≤ R`, else 0. C¹ at the edge.
    Bump,
}

/// Angular restriction of the kernel, stored as the cosine threshold `cos α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cone {
    Full,
    Cosine(f64),
}

impl Cone {
    pub fn from_angle(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= PI) {
            return Err(Error::InvalidParameter(format!(
                "cone angle must lie in (0, π], got {alpha}"
            )));
        }
        if alpha == PI {
            Ok(Cone::Full)
        } else {
            Ok(Cone::Cosine(alpha.cos()))
        }
    }

    /// The forward half-space, `z ≥ 0`.
    pub fn forward_half() -> Self {
        Cone::Cosine(0.0)
    }

    pub fn is_directed(&self) -> bool {
        matches!(*self, Cone::Cosine(c) if c > -1.0)
    }

    /// Half-opening angle α.
    pub fn half_angle(&self) -> f64 {
        match *self {
            Cone::Full => PI,
            Cone::Cosine(c) => c.clamp(-1.0, 1.0).acos(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    UnitIntegral,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub profile: Profile,
    pub radius: f64,
    pub cone: Cone,
    pub normalization: Normalization,
}

impl KernelSpec {
    pub fn indicator(radius: f64) -> Self {
        KernelSpec {
            profile: Profile::Indicator,
            radius,
            cone: Cone::Full,
            normalization: Normalization::Raw,
        }
    }

    pub fn bump(radius: f64) -> Self {
        KernelSpec {
            profile: Profile::Bump,
            ..Self::indicator(radius)
        }
    }

    pub fn with_cone(mut self, cone: Cone) -> Self {
        self.cone = cone;
        self
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel radius must be positive, got {}",
                self.radius
            )));
        }
        if let Cone::Cosine(c) = self.cone {
            if !(-1.0..1.0).contains(&c) {
                return Err(Error::InvalidParameter(format!(
                    "cone cosine threshold must lie in [-1, 1), got {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_directed(&self) -> bool {
        self.cone.is_directed()
    }

    /// Radial profile `w(s)` without normalization.
    #[inline]
    pub fn profile_at(&self, s: f64) -> f64 {
        self.profile_at_sq(s * s)
    }

    #[inline]
    fn profile_at_sq(&self, s2: f64) -> f64 {
        let r2 = self.radius * self.radius;
        if s2 > r2 {
            return 0.0;
        }
        match self.profile {
            Profile::Indicator => 1.0,
            Profile::Bump => {
                let u = 1.0 - s2 / r2;
                u * u
            }
        }
    }

    /// `∫ W` over `ℝ^d` for the raw (unnormalized) kernel, cone included.
    pub fn raw_integral(&self, dim: usize) -> f64 {
        let r = self.radius;
        let radial = match (dim, self.profile) {
            (1, Profile::Indicator) => 2.0 * r,
            (1, Profile::Bump) => 16.0 * r / 15.0,
            (_, Profile::Indicator) => PI * r * r,
            (_, Profile::Bump) => PI * r * r / 3.0,
        };
        let fraction = if !self.is_directed() {
            1.0
        } else if dim == 1 {
            // headings in 1D are ±1: only the forward half-line survives
            0.5
        } else {
            self.cone.half_angle() / PI
        };
        radial * fraction
    }

    /// Multiplier applied to the profile so that `∫ W = 1` when normalized.
    pub fn scale(&self, dim: usize) -> f64 {
        match self.normalization {
            Normalization::Raw => 1.0,
            Normalization::UnitIntegral => 1.0 / self.raw_integral(dim),
        }
    }

    /// Evaluate `W(delta, heading)`.
    ///
    /// `delta` is the minimal-image displacement from the observer to the
    /// observed point. Directed kernels need a nonzero heading; a zero
    /// displacement counts as inside the cone.
    #[inline]
    pub fn eval(&self, delta: Vec2, heading: Option<Vec2>, dim: usize) -> Result<f64> {
        Ok(self.eval_unscaled(delta, heading)? * self.scale(dim))
    }

    #[inline]
    pub(crate) fn eval_unscaled(&self, delta: Vec2, heading: Option<Vec2>) -> Result<f64> {
        let s2 = norm_sq(delta);
        match self.cone {
            Cone::Cosine(c) if c > -1.0 => {
                let v = heading.ok_or(Error::UndefinedHeading)?;
                let v2 = norm_sq(v);
                if v2 == 0.0 {
                    return Err(Error::UndefinedHeading);
                }
                let w = self.profile_at_sq(s2);
                if w == 0.0 || s2 == 0.0 {
                    return Ok(w);
                }
                let z_num = dot(delta, v);
                // z ≥ c  ⇔  δ·v ≥ c |δ||v|
                if z_num >= c * (s2 * v2).sqrt() {
                    Ok(w)
                } else {
                    Ok(0.0)
                }
            }
            _ => Ok(self.profile_at_sq(s2)),
        }
    }
}

/// Which part of a 1D kernel to sample on a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Both,
    /// Offsets `k ≥ 0` (looking towards +x).
    Forward,
    /// Offsets `k ≤ 0`.
    Backward,
}

/// A kernel sampled on an equidistant periodic grid with `m` points per axis,
/// stored as the nonzero offsets and their quadrature weights `W(kΔx)·Δx^d`.
#[derive(Clone, Debug)]
pub struct GridStencil {
    pub dim: usize,
    pub m: usize,
    pub offsets: Vec<[isize; 2]>,
    pub weights: Vec<f64>,
}

impl GridStencil {
    /// Sample `spec` on the grid. A point at distance exactly `R` counts as
    /// inside. With unit-integral normalization the weights are rescaled so
    /// that their discrete sum is exactly one.
    pub fn new(spec: &KernelSpec, geom: &TorusGeometry, m: usize, side: Side) -> Result<Self> {
        spec.validate()?;
        let half = 0.5 * geom.side();
        if spec.radius >= half {
            return Err(Error::KernelTooWide {
                radius: spec.radius,
                half,
            });
        }
        let dim = geom.dim();
        let dx = geom.side() / m as f64;
        let r_cells = spec.radius / dx;
        let r2_cells = r_cells * r_cells * (1.0 + 1e-12);
        let kmax = (r_cells * (1.0 + 1e-12)).floor() as isize;
        let cell_vol = dx.powi(dim as i32);

        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let (k2lo, k2hi) = if dim == 2 { (-kmax, kmax) } else { (0, 0) };
        let (k1lo, k1hi) = match side {
            Side::Both => (-kmax, kmax),
            Side::Forward => (0, kmax),
            Side::Backward => (-kmax, 0),
        };
        for k2 in k2lo..=k2hi {
            for k1 in k1lo..=k1hi {
                let kk = (k1 * k1 + k2 * k2) as f64;
                if kk > r2_cells {
                    continue;
                }
                let u = (kk / (r_cells * r_cells)).min(1.0);
                let w = match spec.profile {
                    Profile::Indicator => 1.0,
                    Profile::Bump => (1.0 - u) * (1.0 - u),
                };
                if w > 0.0 {
                    offsets.push([k1, k2]);
                    weights.push(w * cell_vol);
                }
            }
        }
        if spec.normalization == Normalization::UnitIntegral {
            let total: f64 = weights.iter().sum();
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        Ok(GridStencil {
            dim,
            m,
            offsets,
            weights,
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Dense periodic kernel array of length `m^d` (index 0 is the origin),
    /// as used by FFT-based convolution.
    pub fn periodic_array(&self) -> Vec<f64> {
        let m = self.m as isize;
        let len = if self.dim == 2 { self.m * self.m } else { self.m };
        let mut out = vec![0.0; len];
        for (off, &w) in self.offsets.iter().zip(&self.weights) {
            let i = off[0].rem_euclid(m) as usize;
            let j = off[1].rem_euclid(m) as usize;
            out[j * self.m + i] += w;
        }
        out
    }
}

/// Real part of the kernel's Fourier coefficients `Ŵ(ξ_n)`, `ξ_n = 2πn/L`,
/// `n = 0..=max_mode`, along the first axis (heading `+x₁` for directed
/// kernels).
///
/// Computed by composite Simpson quadrature over the kernel support, doubling
/// the resolution until no coefficient changes by more than `1e-10`.
pub fn kernel_fourier(spec: &KernelSpec, geom: &TorusGeometry, max_mode: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    if max_mode < 1 {
        return Err(Error::InvalidParameter("max_mode must be ≥ 1".into()));
    }
    let half = 0.5 * geom.side();
    if spec.radius >= half {
        return Err(Error::KernelTooWide {
            radius: spec.radius,
            half,
        });
    }
    let xis: Vec<f64> = (0..=max_mode)
        .map(|n| 2.0 * PI * n as f64 / geom.side())
        .collect();

    let mut panels = 64usize;
    let mut prev = fourier_quadrature(spec, geom.dim(), &xis, panels);
    loop {
        panels *= 2;
        let next = fourier_quadrature(spec, geom.dim(), &xis, panels);
        let change = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        prev = next;
        if change <= 1e-10 || panels >= 1 << 16 {
            break;
        }
    }
    if spec.normalization == Normalization::UnitIntegral {
        let w0 = prev[0];
        for c in prev.iter_mut() {
            *c /= w0;
        }
    }
    Ok(prev)
}

fn simpson(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

fn fourier_quadrature(spec: &KernelSpec, dim: usize, xis: &[f64], panels: usize) -> Vec<f64> {
    let r = spec.radius;
    xis.iter()
        .map(|&xi| {
            if dim == 1 {
                let one_side = simpson(panels, 0.0, r, |s| spec.profile_at(s.min(r)) * (xi * s).cos());
                if spec.is_directed() {
                    one_side
                } else {
                    2.0 * one_side
                }
            } else {
                let alpha = spec.cone.half_angle();
                let angular_panels = (panels / 4).max(16) & !1;
                simpson(panels, 0.0, r, |s| {
                    let ang = simpson(angular_panels, -alpha, alpha, |phi| (xi * s * phi.cos()).cos());
                    s * spec.profile_at(s.min(r)) * ang
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_inside_and_outside() {
        let k = KernelSpec::indicator(0.1);
        assert_eq!(k.eval([0.05, 0.0], None, 2).unwrap(), 1.0);
        assert_eq!(k.eval([0.15, 0.0], None, 2).unwrap(), 0.0);
        assert_eq!(k.eval([0.1, 0.0], None, 2).unwrap(), 1.0);
    }

    #[test]
    fn directed_kernel_ignores_points_behind() {
        let k = KernelSpec::indicator(0.1).with_cone(Cone::from_angle(PI / 2.0).unwrap());
        // cos(π/2) rounds to 6e-17; the antiparallel point is well outside
        assert_eq!(k.eval([-0.05, 0.0], Some([1.0, 0.0]), 2).unwrap(), 0.0);
        assert_eq!(k.eval([0.05, 0.0], Some([1.0, 0.0]), 2).unwrap(), 1.0);
        // coincident points are inside the cone
        assert_eq!(k.eval([0.0, 0.0], Some([1.0, 0.0]), 2).unwrap(), 1.0);
    }

    #[test]
    fn directed_kernel_requires_heading() {
        let k = KernelSpec::indicator(0.1).with_cone(Cone::forward_half());
        assert!(matches!(
            k.eval([0.01, 0.0], Some([0.0, 0.0]), 2),
            Err(Error::UndefinedHeading)
        ));
        assert!(matches!(k.eval([0.01, 0.0], None, 2), Err(Error::UndefinedHeading)));
    }

    #[test]
    fn full_cone_reduces_to_undirected() {
        assert_eq!(Cone::from_angle(PI).unwrap(), Cone::Full);
        let full = KernelSpec::bump(0.2);
        let cone = full.with_cone(Cone::from_angle(PI).unwrap());
        for &d in &[[0.0, 0.0], [0.1, -0.05], [-0.15, 0.1], [0.3, 0.0]] {
            assert_eq!(
                full.eval(d, None, 2).unwrap(),
                cone.eval(d, Some([0.0, 1.0]), 2).unwrap()
            );
        }
    }

    #[test]
    fn profiles_are_monotone() {
        for spec in [KernelSpec::indicator(0.3), KernelSpec::bump(0.3)] {
            let mut last = f64::INFINITY;
            for k in 0..400 {
                let w = spec.profile_at(k as f64 * 1e-3);
                assert!(w >= 0.0 && w <= last);
                last = w;
            }
            assert_eq!(spec.profile_at(0.30001), 0.0);
        }
    }

    #[test]
    fn indicator_fourier_matches_closed_form() {
        let spec = KernelSpec::indicator(0.1);
        let geom = TorusGeometry::unit(1);
        let c = kernel_fourier(&spec, &geom, 30).unwrap();
        assert!((c[0] - 0.2).abs() < 1e-12);
        // 2 sin(2π·0.1)/(2π) = 0.187097...
        assert!((c[1] - 0.18710).abs() < 1e-5);
        for (n, &cn) in c.iter().enumerate().skip(1) {
            let xi = 2.0 * PI * n as f64;
            assert!((cn - 2.0 * (xi * 0.1).sin() / xi).abs() < 1e-8, "mode {n}");
        }
    }

    #[test]
    fn unit_integral_mode_zero_is_one() {
        for dim in [1, 2] {
            let geom = TorusGeometry::unit(dim);
            for spec in [KernelSpec::indicator(0.07), KernelSpec::bump(0.12)] {
                let spec = spec.with_normalization(Normalization::UnitIntegral);
                let c = kernel_fourier(&spec, &geom, 3).unwrap();
                assert!((c[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadrature_matches_analytic_integrals() {
        let geom1 = TorusGeometry::unit(1);
        let geom2 = TorusGeometry::unit(2);
        for spec in [
            KernelSpec::indicator(0.1),
            KernelSpec::bump(0.1),
            KernelSpec::indicator(0.1).with_cone(Cone::forward_half()),
            KernelSpec::bump(0.1).with_cone(Cone::from_angle(1.0).unwrap()),
        ] {
            let c1 = kernel_fourier(&spec, &geom1, 1).unwrap();
            assert!((c1[0] - spec.raw_integral(1)).abs() < 1e-10 * spec.raw_integral(1));
            let c2 = kernel_fourier(&spec, &geom2, 1).unwrap();
            assert!((c2[0] - spec.raw_integral(2)).abs() < 1e-8 * spec.raw_integral(2));
        }
    }

    #[test]
    fn grid_stencil_counts_edge_points() {
        let geom = TorusGeometry::unit(1);
        let s = GridStencil::new(&KernelSpec::indicator(0.1), &geom, 200, Side::Both).unwrap();
        assert_eq!(s.offsets.len(), 41);
        assert!((s.total_weight() - 41.0 * 0.005).abs() < 1e-15);
        let f = GridStencil::new(&KernelSpec::indicator(0.1), &geom, 200, Side::Forward).unwrap();
        assert_eq!(f.offsets.len(), 21);
        assert!(f.offsets.iter().all(|o| o[0] >= 0));
    }

    #[test]
    fn unit_stencil_sums_to_one() {
        for dim in [1, 2] {
            let geom = TorusGeometry::unit(dim);
            for spec in [KernelSpec::indicator(0.07), KernelSpec::bump(0.13)] {
                let spec = spec.with_normalization(Normalization::UnitIntegral);
                let s = GridStencil::new(&spec, &geom, 100, Side::Both).unwrap();
                assert!((s.total_weight() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wide_kernels_are_rejected_on_grids() {
        let geom = TorusGeometry::unit(1);
        assert!(matches!(
            GridStencil::new(&KernelSpec::indicator(0.5), &geom, 100, Side::Both),
            Err(Error::KernelTooWide { .. })
        ));
    }
}
