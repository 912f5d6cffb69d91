//! Density responses: the noise amplitude `G` (nonincreasing) and the
//! damping rate `H` (nondecreasing), both functions of perceived density.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone)]
pub enum Response {
    /// `exp(−s/a)`.
    ExpDecay { a: f64 },
    Constant(f64),
    /// `level` for `s < s0`, zero for `s ≥ s0`.
    HardCutoff { s0: f64, level: f64 },
    /// `intercept + slope·s`; only meaningful as a damping term.
    Linear { intercept: f64, slope: f64 },
    /// A user supplied function without an analytic derivative.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::ExpDecay { a } => write!(f, "exp_decay({a})"),
            Response::Constant(c) => write!(f, "constant({c})"),
            Response::HardCutoff { s0, level } => write!(f, "hard_cutoff({s0}, {level})"),
            Response::Linear { intercept, slope } => write!(f, "linear({intercept}, {slope})"),
            Response::Custom(_) => write!(f, "custom"),
        }
    }
}

impl Response {
    pub fn exp_decay(a: f64) -> Self {
        Response::ExpDecay { a }
    }

    pub fn hard_cutoff(s0: f64) -> Self {
        Response::HardCutoff { s0, level: 1.0 }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Response::ExpDecay { a } => (-s / a).exp(),
            Response::Constant(c) => *c,
            Response::HardCutoff { s0, level } => {
                if s >= *s0 {
                    0.0
                } else {
                    *level
                }
            }
            Response::Linear { intercept, slope } => intercept + slope * s,
            Response::Custom(f) => f(s),
        }
    }

    /// Analytic derivative, if the form provides one. The hard cutoff reports
    /// zero everywhere (its jump at `s0` has no classical derivative).
    pub fn derivative(&self, s: f64) -> Option<f64> {
        match self {
            Response::ExpDecay { a } => Some(-self.eval(s) / a),
            Response::Constant(_) | Response::HardCutoff { .. } => Some(0.0),
            Response::Linear { slope, .. } => Some(*slope),
            Response::Custom(_) => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Response::Constant(_) => true,
            Response::Linear { slope, .. } => *slope == 0.0,
            _ => false,
        }
    }

    fn samples() -> impl Iterator<Item = f64> {
        // dense near zero, reaching well past any perceived density in use
        (0..=2000).map(|k| {
            let u = k as f64 / 2000.0;
            1e3 * u * u * u
        })
    }

    fn check_params(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            Response::ExpDecay { a } if !(*a > 0.0 && a.is_finite()) => {
                bad(format!("exp_decay scale must be positive, got {a}"))
            }
            Response::HardCutoff { s0, level } if !(*s0 > 0.0 && *level >= 0.0) => {
                bad(format!("hard_cutoff needs s0 > 0 and level ≥ 0, got {s0}, {level}"))
            }
            _ => Ok(()),
        }
    }

    /// Sampled check that this is an admissible `G`: nonnegative, bounded,
    /// nonincreasing.
    pub fn validate_as_noise(&self) -> Result<()> {
        self.check_params()?;
        let mut last = f64::INFINITY;
        for s in Self::samples() {
            let g = self.eval(s);
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "G must be finite and nonnegative; G({s}) = {g}"
                )));
            }
            if g > last {
                return Err(Error::InvalidParameter(format!(
                    "G must be nonincreasing; increases at s = {s}"
                )));
            }
            last = g;
        }
        Ok(())
    }

    /// Sampled check that this is an admissible `H`: nonnegative,
    /// nondecreasing.
    pub fn validate_as_damping(&self) -> Result<()> {
        self.check_params()?;
        let mut last = -f64::INFINITY;
        for s in Self::samples() {
            let h = self.eval(s);
            if !(h >= 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "H must be finite and nonnegative; H({s}) = {h}"
                )));
            }
            if h < last {
                return Err(Error::InvalidParameter(format!(
                    "H must be nondecreasing; decreases at s = {s}"
                )));
            }
            last = h;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ResponseFunctions {
    pub noise: Response,
    pub damping: Response,
}

impl Default for ResponseFunctions {
    fn default() -> Self {
        ResponseFunctions {
            noise: Response::exp_decay(3.0),
            damping: Response::Constant(2.0),
        }
    }
}

impl ResponseFunctions {
    pub fn new(noise: Response, damping: Response) -> Self {
        ResponseFunctions { noise, damping }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate_as_noise()?;
        self.damping.validate_as_damping()
    }

    #[inline]
    pub fn g(&self, s: f64) -> f64 {
        self.noise.eval(s)
    }

    #[inline]
    pub fn h(&self, s: f64) -> f64 {
        self.damping.eval(s)
    }
}
