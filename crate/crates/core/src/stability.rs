//! Linear stability of constant states `ρ ≡ ρ₀` of the mean-field equation.
//!
//! A Fourier mode `e^{iξx}` of a small perturbation evolves like `e^{λ(ξ)t}`,
//!
//! `λ(ξ) = −|ξ|² (G/2) (G + 2G′ρ₀ Re Ŵ(ξ))`, with `G, G′` taken at `θ₀ = ρ₀Ŵ(0)`,
//!
//! so mode `n` grows iff `Re Ŵ(ξ_n) > −G/(2G′ρ₀)`. For a unit-integral kernel
//! `θ₀ = ρ₀`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::TorusGeometry;
use crate::kernel::{kernel_fourier, GridStencil, KernelSpec, Normalization, Side};
use crate::response::{Response, ResponseFunctions};

/// Value and derivative of `G` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSlope {
    pub g: f64,
    pub g_prime: f64,
    /// True when `G′` came from finite differences and the Richardson
    /// estimate disagreed with the plain central difference.
    pub suspect: bool,
}

/// `G(s)` and `G′(s)`: analytic where available, otherwise a central
/// difference with step `1e−6·max(1, s)` refined by one Richardson step.
pub fn noise_slope(noise: &Response, s: f64) -> NoiseSlope {
    let g = noise.eval(s);
    if let Some(d) = noise.derivative(s) {
        return NoiseSlope {
            g,
            g_prime: d,
            suspect: false,
        };
    }
    let h = 1e-6 * s.abs().max(1.0);
    let central = |h: f64| {
        // one-sided at the origin, where G is only defined for s ≥ 0
        if s - h < 0.0 {
            (noise.eval(s + h) - g) / h
        } else {
            (noise.eval(s + h) - noise.eval(s - h)) / (2.0 * h)
        }
    };
    let d1 = central(h);
    let d2 = central(2.0 * h);
    let rich = (4.0 * d1 - d2) / 3.0;
    NoiseSlope {
        g,
        g_prime: rich,
        suspect: (rich - d1).abs() > 1e-4 * d1.abs().max(1.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeRate {
    pub n: usize,
    pub xi: f64,
    pub re_w: f64,
    pub lambda: f64,
    /// `λ ≤ 0`.
    pub stable: bool,
    /// `Re Ŵ` equals the threshold to within `1e−12` relative.
    pub tie: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wellposedness {
    /// `(G(ρ)²ρ)′ = G² + 2GG′ρ` at `ρ₀`.
    pub diffusivity: f64,
    pub well_posed: bool,
    /// `D = 0`: the local problem is degenerate.
    pub degenerate: bool,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub rho0: f64,
    pub theta0: f64,
    pub normalization: Normalization,
    pub g: f64,
    pub g_prime: f64,
    /// `−G/(2G′ρ₀)`; infinite when `G′ = 0`.
    pub threshold: f64,
    pub modes: Vec<ModeRate>,
    pub unstable: Vec<usize>,
    /// Largest unstable mode; every higher computed mode is stable.
    pub n_star: Option<usize>,
    pub fastest: Option<ModeRate>,
    /// `L/n` of the fastest-growing mode.
    pub fastest_wavelength: Option<f64>,
    /// `G(θ₀) = 0`: every rate is reported as zero.
    pub degenerate: bool,
    pub derivative_suspect: bool,
    pub local: Wellposedness,
}

fn check_rho(rho0: f64) -> Result<()> {
    if rho0 > 0.0 && rho0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("ρ₀ must be positive, got {rho0}")))
    }
}

/// `λ(ξ_n)` for `ξ_n = 2πn/L`.
pub fn growth_rate(
    n: usize,
    rho0: f64,
    spec: &KernelSpec,
    responses: &ResponseFunctions,
    geom: &TorusGeometry,
) -> Result<f64> {
    let report = classify_modes(rho0, spec, responses, geom, n.max(1))?;
    Ok(report.modes[n].lambda)
}

/// Growth rates of modes `0..=max_mode` and their classification.
pub fn classify_modes(
    rho0: f64,
    spec: &KernelSpec,
    responses: &ResponseFunctions,
    geom: &TorusGeometry,
    max_mode: usize,
) -> Result<StabilityReport> {
    check_rho(rho0)?;
    let w = kernel_fourier(spec, geom, max_mode)?;
    let theta0 = rho0 * w[0];
    let slope = noise_slope(&responses.noise, theta0);
    let (g, gp) = (slope.g, slope.g_prime);
    let degenerate = g == 0.0;
    let threshold = if gp == 0.0 {
        f64::INFINITY
    } else {
        -g / (2.0 * gp * rho0)
    };
    let modes: Vec<ModeRate> = w
        .iter()
        .enumerate()
        .map(|(n, &re_w)| {
            let xi = 2.0 * PI * n as f64 / geom.side();
            let lambda = if n == 0 || degenerate {
                0.0
            } else {
                -xi * xi * 0.5 * g * (g + 2.0 * gp * rho0 * re_w)
            };
            let tie = threshold.is_finite()
                && (re_w - threshold).abs() <= 1e-12 * threshold.abs().max(1.0);
            ModeRate {
                n,
                xi,
                re_w,
                lambda,
                stable: lambda <= 0.0,
                tie,
            }
        })
        .collect();
    let unstable: Vec<usize> = modes.iter().filter(|m| !m.stable).map(|m| m.n).collect();
    let fastest = modes
        .iter()
        .filter(|m| !m.stable)
        .max_by(|a, b| a.lambda.total_cmp(&b.lambda))
        .copied();
    Ok(StabilityReport {
        rho0,
        theta0,
        normalization: spec.normalization,
        g,
        g_prime: gp,
        threshold,
        n_star: unstable.last().copied(),
        fastest_wavelength: fastest.map(|m| geom.side() / m.n as f64),
        fastest,
        unstable,
        modes,
        degenerate,
        derivative_suspect: slope.suspect,
        local: local_wellposedness(rho0, responses),
    })
}

/// The same constant state classified with the raw kernel and with its
/// unit-integral rescaling.
pub fn classify_both(
    rho0: f64,
    spec: &KernelSpec,
    responses: &ResponseFunctions,
    geom: &TorusGeometry,
    max_mode: usize,
) -> Result<(StabilityReport, StabilityReport)> {
    let raw = spec.with_normalization(Normalization::Raw);
    let unit = spec.with_normalization(Normalization::UnitIntegral);
    Ok((
        classify_modes(rho0, &raw, responses, geom, max_mode)?,
        classify_modes(rho0, &unit, responses, geom, max_mode)?,
    ))
}

/// Well-posedness of the local problem `∂ρ/∂t = ½Δ(G(ρ)²ρ)` linearized at
/// `ρ₀`.
pub fn local_wellposedness(rho0: f64, responses: &ResponseFunctions) -> Wellposedness {
    let s = noise_slope(&responses.noise, rho0);
    let d = s.g * s.g + 2.0 * s.g * s.g_prime * rho0;
    Wellposedness {
        diffusivity: d,
        well_posed: d > 0.0,
        degenerate: d == 0.0,
    }
}

/// One-step amplification factor of mode `n` under the semi-implicit grid
/// scheme with `m` points and step `dt`:
/// `(1 − dt ξ_h² ρ₀GG′Ŵ_h)/(1 + dt ξ_h² G²/2)` with `ξ_h² = (4/Δx²)sin²(ξΔx/2)`
/// and `Ŵ_h` the symbol of the sampled kernel.
pub fn discrete_amplification(
    n: usize,
    rho0: f64,
    spec: &KernelSpec,
    responses: &ResponseFunctions,
    geom: &TorusGeometry,
    m: usize,
    dt: f64,
) -> Result<f64> {
    check_rho(rho0)?;
    let st = GridStencil::new(spec, geom, m, Side::Both)?;
    let dx = geom.side() / m as f64;
    let xi = 2.0 * PI * n as f64 / geom.side();
    let w_h: f64 = st
        .offsets
        .iter()
        .zip(&st.weights)
        .map(|(o, w)| w * (xi * o[0] as f64 * dx).cos())
        .sum();
    let theta0 = rho0 * st.total_weight();
    let s = noise_slope(&responses.noise, theta0);
    let xi_h2 = (2.0 / dx * (0.5 * xi * dx).sin()).powi(2);
    Ok((1.0 - dt * xi_h2 * rho0 * s.g * s.g_prime * w_h) / (1.0 + dt * xi_h2 * 0.5 * s.g * s.g))
}
