//! Entropy-transport models.
//!
//! A model pairs a marginal discrepancy `F` (with conjugate `F*`) and a
//! radial cost `c(x, y) = l(|x - y| / epsilon)`. Four models are provided:
//!
//! | kind | `F(s)`            | `F*(z)`                        | `l(t)`                      |
//! |------|-------------------|--------------------------------|-----------------------------|
//! | W2   | indicator of {1}  | `z`                            | `t^2`                       |
//! | GHK  | `s log s - s + 1` | `e^z - 1`                      | `t^2`                       |
//! | WFR  | `s log s - s + 1` | `e^z - 1`                      | `-2 log cos t`, `t < pi/2`  |
//! | QR   | `(s - 1)^2`       | `z^2/4 + z` (`z >= -2`), else `-1` | `t^2`                   |
//!
//! Extended reals are plain `f64` with `INFINITY` / `NEG_INFINITY`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, UotError};

/// Tolerance around `s = 1` used to realize the balanced indicator `F`.
pub const BALANCED_TOL: f64 = 1e-9;

/// WFR costs for `t` in `[pi/2 - WFR_CLAMP, pi/2)` are clamped to the value
/// at `pi/2 - WFR_CLAMP`.
pub const WFR_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    W2,
    Ghk,
    Wfr,
    Qr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::W2, ModelKind::Ghk, ModelKind::Wfr, ModelKind::Qr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::W2 => "w2",
            ModelKind::Ghk => "ghk",
            ModelKind::Wfr => "wfr",
            ModelKind::Qr => "qr",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = UotError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "w2" => Ok(ModelKind::W2),
            "ghk" => Ok(ModelKind::Ghk),
            "wfr" => Ok(ModelKind::Wfr),
            "qr" => Ok(ModelKind::Qr),
            other => Err(invalid(format!("unknown model '{other}', expected w2|ghk|wfr|qr"))),
        }
    }
}

/// A transport model with its length scale `epsilon > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct EntropyModel {
    pub kind: ModelKind,
    pub epsilon: f64,
}

#[derive(Deserialize)]
struct RawModel {
    kind: ModelKind,
    #[serde(default = "one")]
    epsilon: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawModel> for EntropyModel {
    type Error = UotError;

    fn try_from(raw: RawModel) -> Result<Self> {
        EntropyModel::new(raw.kind, raw.epsilon)
    }
}

impl EntropyModel {
    pub fn new(kind: ModelKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be finite and > 0, got {epsilon}")));
        }
        Ok(EntropyModel { kind, epsilon })
    }

    /// The model at unit length scale.
    pub fn unit(kind: ModelKind) -> Self {
        EntropyModel { kind, epsilon: 1.0 }
    }

    pub fn with_epsilon(self, epsilon: f64) -> Result<Self> {
        Self::new(self.kind, epsilon)
    }

    pub fn is_balanced(&self) -> bool {
        self.kind == ModelKind::W2
    }

    /// `F(s)` for `s >= 0`.
    pub fn f_value(&self, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(invalid(format!("F is evaluated on s >= 0, got {s}")));
        }
        Ok(match self.kind {
            ModelKind::W2 => {
                if (s - 1.0).abs() <= BALANCED_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ModelKind::Ghk | ModelKind::Wfr => kl(s),
            ModelKind::Qr => (s - 1.0) * (s - 1.0),
        })
    }

    /// `F(0)`; also `-F*(-inf)`.
    pub fn f_zero(&self) -> f64 {
        match self.kind {
            ModelKind::W2 => f64::INFINITY,
            ModelKind::Ghk | ModelKind::Wfr | ModelKind::Qr => 1.0,
        }
    }

    /// `F*(z)`; `z = -inf` gives `-F(0)`.
    pub fn f_star(&self, z: f64) -> f64 {
        match self.kind {
            ModelKind::W2 => z,
            ModelKind::Ghk | ModelKind::Wfr => z.exp_m1(),
            ModelKind::Qr => {
                if z >= -2.0 {
                    z * (0.25 * z + 1.0)
                } else {
                    -1.0
                }
            }
        }
    }

    /// `(F*)'(z)`; `z = -inf` gives the limit (0, or 1 for W2).
    pub fn f_star_prime(&self, z: f64) -> f64 {
        match self.kind {
            ModelKind::W2 => 1.0,
            ModelKind::Ghk | ModelKind::Wfr => z.exp(),
            ModelKind::Qr => (0.5 * z + 1.0).max(0.0),
        }
    }

    /// Radial cost profile `l(t)` at unit scale.
    #[inline]
    pub fn radial_cost(&self, t: f64) -> f64 {
        match self.kind {
            ModelKind::W2 | ModelKind::Ghk | ModelKind::Qr => t * t,
            ModelKind::Wfr => {
                if t < FRAC_PI_2 - WFR_CLAMP {
                    -2.0 * t.cos().ln()
                } else if t < FRAC_PI_2 {
                    -2.0 * (FRAC_PI_2 - WFR_CLAMP).cos().ln()
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `c = l(s / epsilon)` for the Euclidean distance `s`.
    #[inline]
    pub fn cost(&self, s: f64) -> f64 {
        self.radial_cost(s / self.epsilon)
    }

    /// Cost from the squared Euclidean distance; skips the square root for
    /// the quadratic costs.
    #[inline]
    pub fn cost_from_sq(&self, d2: f64) -> f64 {
        match self.kind {
            ModelKind::Wfr => self.radial_cost(d2.sqrt() / self.epsilon),
            _ => d2 / (self.epsilon * self.epsilon),
        }
    }

    /// Distance beyond which the cost is infinite.
    pub fn cutoff_radius(&self) -> f64 {
        match self.kind {
            ModelKind::Wfr => self.epsilon * FRAC_PI_2,
            _ => f64::INFINITY,
        }
    }

    /// Gradient kernel `r(s) = [-F* o (-l)]'(s) / s` at the scaled distance
    /// `s = d / epsilon`.
    pub fn r_kernel(&self, s: f64) -> f64 {
        match self.kind {
            ModelKind::W2 => 2.0,
            ModelKind::Ghk => 2.0 * (-s * s).exp(),
            ModelKind::Wfr => {
                if s == 0.0 {
                    2.0
                } else if s <= FRAC_PI_2 {
                    (2.0 * s).sin() / s
                } else {
                    0.0
                }
            }
            ModelKind::Qr => (2.0 - s * s).max(0.0),
        }
    }

    /// Quantization integrand `-F*(-l(t))` at the scaled distance `t`,
    /// equal to `F(0)` where the cost is infinite.
    #[inline]
    pub fn profile(&self, t: f64) -> f64 {
        match self.kind {
            ModelKind::W2 => t * t,
            ModelKind::Ghk => -(-t * t).exp_m1(),
            ModelKind::Wfr => {
                if t >= FRAC_PI_2 {
                    1.0
                } else {
                    let s = t.sin();
                    s * s
                }
            }
            ModelKind::Qr => {
                let t2 = t * t;
                if t2 <= 2.0 {
                    t2 - 0.25 * t2 * t2
                } else {
                    1.0
                }
            }
        }
    }

    /// `F(0) - profile(t)`, computed without cancellation. Infinite for W2.
    #[inline]
    pub fn profile_gap(&self, t: f64) -> f64 {
        match self.kind {
            ModelKind::W2 => f64::INFINITY,
            ModelKind::Ghk => (-t * t).exp(),
            ModelKind::Wfr => {
                if t >= FRAC_PI_2 {
                    0.0
                } else {
                    let c = t.cos();
                    c * c
                }
            }
            ModelKind::Qr => {
                let u = 1.0 - 0.5 * t * t;
                if u > 0.0 {
                    u * u
                } else {
                    0.0
                }
            }
        }
    }

    /// `(F*)'(-l(t))`: the density of the retained marginal at scaled
    /// distance `t` from its site when the site weight is zero.
    #[inline]
    pub fn mass_density(&self, t: f64) -> f64 {
        match self.kind {
            ModelKind::W2 => 1.0,
            ModelKind::Ghk => (-t * t).exp(),
            ModelKind::Wfr => {
                if t >= FRAC_PI_2 {
                    0.0
                } else {
                    let c = t.cos();
                    c * c
                }
            }
            ModelKind::Qr => (1.0 - 0.5 * t * t).max(0.0),
        }
    }

    /// Scaled radius beyond which `profile` is constant (`inf` if never).
    pub fn profile_support(&self) -> f64 {
        match self.kind {
            ModelKind::W2 | ModelKind::Ghk => f64::INFINITY,
            ModelKind::Wfr => FRAC_PI_2,
            ModelKind::Qr => std::f64::consts::SQRT_2,
        }
    }
}

fn kl(s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else {
        s * s.ln() - s + 1.0
    }
}
