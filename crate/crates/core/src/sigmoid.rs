//! Scalar sigmoid families.
//!
//! Each family bundles a strictly increasing odd sigmoid `unlift: ℝ → (-1, 1)`,
//! its inverse `lift: (-1, 1) → ℝ`, both derivatives, and the sigmoid
//! integral `integral(ζ) = ∫₀^ζ unlift(s) ds`. The integral is quadratic near
//! the origin and asymptotically linear, which is what makes it a good
//! Lyapunov building block for lifted coordinates.
//!
//! [`SigmoidFamily::Identity`] is not a sigmoid. It stands in for
//! unconstrained components: lift and unlift are the identity and the
//! integral is `ζ²/2`.

use std::f64::consts::{FRAC_2_PI, FRAC_2_SQRT_PI, FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};

use crate::error::{Error, Result};
use crate::quad;

/// Inputs with `|x| >= 1 - BOUNDARY_GUARD` are rejected by [`SigmoidFamily::lift`].
pub const BOUNDARY_GUARD: f64 = 1e-15;

/// Absolute tolerance of the quadrature behind the `AsinhTan` integral.
pub const QUADRATURE_TOL: f64 = 1e-10;

// ∫₀^a r sech r dr is within 1e-23 of its limit 2G (Catalan) past this point.
const SECH_MOMENT_CUTOFF: f64 = 60.0;

/// Largest value strictly below one; sigmoid outputs are clamped to it so
/// that `|unlift(z)| < 1` survives rounding for large `|z|`.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidFamily {
    Tan,
    Atanh,
    RationalAbs,
    RationalSqrt,
    Erf,
    AsinhTan,
    Identity,
}

/// Human-readable row of the family table.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyInfo {
    pub family: SigmoidFamily,
    pub id: &'static str,
    pub lift: &'static str,
    pub unlift: &'static str,
    pub integral: &'static str,
    pub unconstrained_only: bool,
}

impl SigmoidFamily {
    pub const ALL: [SigmoidFamily; 7] = [
        SigmoidFamily::Tan,
        SigmoidFamily::Atanh,
        SigmoidFamily::RationalAbs,
        SigmoidFamily::RationalSqrt,
        SigmoidFamily::Erf,
        SigmoidFamily::AsinhTan,
        SigmoidFamily::Identity,
    ];

    /// The six genuine sigmoid families (everything except `Identity`).
    pub const SIGMOIDS: [SigmoidFamily; 6] = [
        SigmoidFamily::Tan,
        SigmoidFamily::Atanh,
        SigmoidFamily::RationalAbs,
        SigmoidFamily::RationalSqrt,
        SigmoidFamily::Erf,
        SigmoidFamily::AsinhTan,
    ];

    pub fn id(self) -> &'static str {
        match self {
            SigmoidFamily::Tan => "tan",
            SigmoidFamily::Atanh => "atanh",
            SigmoidFamily::RationalAbs => "rational_abs",
            SigmoidFamily::RationalSqrt => "rational_sqrt",
            SigmoidFamily::Erf => "erf",
            SigmoidFamily::AsinhTan => "asinh_tan",
            SigmoidFamily::Identity => "identity",
        }
    }

    /// `true` for every family that maps onto a bounded interval.
    pub fn is_constraining(self) -> bool {
        self != SigmoidFamily::Identity
    }

    fn check_domain(self, x: f64) -> Result<()> {
        if self.is_constraining() && !(x.abs() < 1.0 - BOUNDARY_GUARD) {
            return Err(Error::Domain {
                family: self.id(),
                value: x,
            });
        }
        Ok(())
    }

    /// The constraint-lifting map φ on (-1, 1).
    pub fn lift(self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        // evaluated on |x| so that oddness holds bit for bit
        let a = x.abs();
        let y = match self {
            SigmoidFamily::Tan => (FRAC_PI_2 * a).tan(),
            SigmoidFamily::Atanh => a.atanh(),
            SigmoidFamily::RationalAbs => a / (1.0 - a),
            SigmoidFamily::RationalSqrt => a / ((1.0 - a) * (1.0 + a)).sqrt(),
            SigmoidFamily::Erf => FRAC_2_SQRT_PI * inverse_erf(a),
            SigmoidFamily::AsinhTan => FRAC_2_PI * (FRAC_PI_2 * a).tan().asinh(),
            SigmoidFamily::Identity => return Ok(x),
        };
        Ok(y.copysign(x))
    }

    /// The sigmoid ψ = φ⁻¹, defined on all of ℝ.
    pub fn unlift(self, z: f64) -> f64 {
        let a = z.abs();
        let y = match self {
            SigmoidFamily::Tan => FRAC_2_PI * a.atan(),
            SigmoidFamily::Atanh => a.tanh(),
            SigmoidFamily::RationalAbs => a / (1.0 + a),
            SigmoidFamily::RationalSqrt => a / a.hypot(1.0),
            SigmoidFamily::Erf => erf(0.5 * PI.sqrt() * a),
            SigmoidFamily::AsinhTan => FRAC_2_PI * (FRAC_PI_2 * a).sinh().atan(),
            SigmoidFamily::Identity => return z,
        };
        if y.is_nan() {
            return y;
        }
        y.min(ONE_BELOW).copysign(z)
    }

    /// dφ/dx, strictly positive on (-1, 1).
    pub fn lift_deriv(self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(match self {
            SigmoidFamily::Tan => {
                let c = (FRAC_PI_2 * x).cos();
                FRAC_PI_2 / (c * c)
            }
            SigmoidFamily::Atanh => 1.0 / ((1.0 - x) * (1.0 + x)),
            SigmoidFamily::RationalAbs => (1.0 - x.abs()).powi(-2),
            SigmoidFamily::RationalSqrt => ((1.0 - x) * (1.0 + x)).powf(-1.5),
            SigmoidFamily::Erf => {
                let y = inverse_erf(x);
                (y * y).exp()
            }
            SigmoidFamily::AsinhTan => 1.0 / (FRAC_PI_2 * x).cos(),
            SigmoidFamily::Identity => 1.0,
        })
    }

    /// dψ/dz, strictly positive (up to underflow far in the tails).
    pub fn unlift_deriv(self, z: f64) -> f64 {
        match self {
            SigmoidFamily::Tan => FRAC_2_PI / (1.0 + z * z),
            SigmoidFamily::Atanh => {
                let c = z.cosh();
                1.0 / (c * c)
            }
            SigmoidFamily::RationalAbs => (1.0 + z.abs()).powi(-2),
            SigmoidFamily::RationalSqrt => (1.0 + z * z).powf(-1.5),
            SigmoidFamily::Erf => (-0.25 * PI * z * z).exp(),
            SigmoidFamily::AsinhTan => 1.0 / (FRAC_PI_2 * z).cosh(),
            SigmoidFamily::Identity => 1.0,
        }
    }

    /// The sigmoid integral `∫₀^ζ ψ(s) ds`.
    pub fn integral(self, zeta: f64) -> f64 {
        let s = zeta.abs();
        match self {
            SigmoidFamily::Tan => FRAC_2_PI * (s * s.atan() - s.hypot(1.0).ln()),
            // log cosh s = s - ln 2 + ln(1 + e^{-2s}), overflow-free
            SigmoidFamily::Atanh => s - std::f64::consts::LN_2 + (-2.0 * s).exp().ln_1p(),
            SigmoidFamily::RationalAbs => s - s.ln_1p(),
            SigmoidFamily::RationalSqrt => s * s / (s.hypot(1.0) + 1.0),
            SigmoidFamily::Erf => {
                s * erf(0.5 * PI.sqrt() * s) + FRAC_2_PI * (-0.25 * PI * s * s).exp_m1()
            }
            SigmoidFamily::AsinhTan => {
                let a = FRAC_PI_2 * s;
                FRAC_2_PI * s * a.sinh().atan() - FRAC_2_PI * FRAC_2_PI * sech_first_moment(a)
            }
            SigmoidFamily::Identity => 0.5 * s * s,
        }
        .max(0.0)
    }

    pub fn info(self) -> FamilyInfo {
        let (lift, unlift, integral) = match self {
            SigmoidFamily::Tan => (
                "tan(pi*x/2)",
                "(2/pi)*atan(z)",
                "(2/pi)*(s*atan(s) - log(1 + s^2)/2)",
            ),
            SigmoidFamily::Atanh => ("atanh(x)", "tanh(z)", "log(cosh(s))"),
            SigmoidFamily::RationalAbs => ("x/(1 - |x|)", "z/(1 + |z|)", "|s| - log(1 + |s|)"),
            SigmoidFamily::RationalSqrt => {
                ("x/sqrt(1 - x^2)", "z/sqrt(1 + z^2)", "sqrt(1 + s^2) - 1")
            }
            SigmoidFamily::Erf => (
                "(2/sqrt(pi))*erfinv(x)",
                "erf(sqrt(pi)*z/2)",
                "s*erf(sqrt(pi)*s/2) + (2/pi)*(exp(-pi*s^2/4) - 1)",
            ),
            SigmoidFamily::AsinhTan => (
                "(2/pi)*asinh(tan(pi*x/2))",
                "(2/pi)*atan(sinh(pi*z/2))",
                "(2/pi)*s*atan(sinh(pi*s/2)) - (4/pi^2)*int_0^(pi*s/2) r*sech(r) dr",
            ),
            SigmoidFamily::Identity => ("x", "z", "s^2/2"),
        };
        FamilyInfo {
            family: self,
            id: self.id(),
            lift,
            unlift,
            integral,
            unconstrained_only: !self.is_constraining(),
        }
    }
}

impl fmt::Display for SigmoidFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for SigmoidFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SigmoidFamily::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown sigmoid family `{s}` (expected one of: {})",
                    SigmoidFamily::ALL.map(|f| f.id()).join(", ")
                ))
            })
    }
}

/// All families with their formulas, in table order.
pub fn list_families() -> Vec<FamilyInfo> {
    SigmoidFamily::ALL.into_iter().map(SigmoidFamily::info).collect()
}

/// ∫₀^a r sech(r) dr for a ≥ 0.
fn sech_first_moment(a: f64) -> f64 {
    let upper = a.min(SECH_MOMENT_CUTOFF);
    quad::integrate(|r| r / r.cosh(), 0.0, upper, QUADRATURE_TOL)
}

/// erf⁻¹ on (-1, 1): library estimate, then bracketed Newton polish.
fn inverse_erf(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let target = x.abs();
    let mut y = erf_inv(target);
    // erf is increasing, so the root is bracketed by [lo, hi] once we see a sign change.
    let (mut lo, mut hi) = (0.0_f64, 6.0_f64);
    for _ in 0..50 {
        let r = erf(y) - target;
        if r == 0.0 {
            break;
        }
        if r > 0.0 {
            hi = hi.min(y);
        } else {
            lo = lo.max(y);
        }
        let slope = FRAC_2_SQRT_PI * (-y * y).exp();
        let mut next = y - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-14 * y.abs().max(1e-300) {
            y = next;
            break;
        }
        y = next;
    }
    y.copysign(x)
}
