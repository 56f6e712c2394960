//! Regularized incomplete beta function `I_x(alpha, beta)`.
//!
//! Both the per-sample policy and the epoch schedule shape their inputs with
//! the Beta CDF. Parameters are carried as a concentration `s` and a skew `a`,
//! with `alpha = s * (1 - a)` and `beta = s * a`. The default `(s = 2, a = 0.5)`
//! gives `alpha = beta = 1`, for which `I_x` is the identity on `[0, 1]`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Shape parameters above this are rejected.
pub const MAX_SHAPE: f64 = 1.0e4;

const CF_MAX_ITER: usize = 10_000;
const CF_EPS: f64 = 1.0e-16;
const CF_TINY: f64 = 1.0e-300;

/// Validated `(s, a)` pair together with the implied Beta shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIbfParams", into = "RawIbfParams")]
pub struct IbfParams {
    s: f64,
    a: f64,
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIbfParams {
    s: f64,
    a: f64,
}

impl TryFrom<RawIbfParams> for IbfParams {
    type Error = Error;

    fn try_from(raw: RawIbfParams) -> Result<Self> {
        IbfParams::new(raw.s, raw.a)
    }
}

impl From<IbfParams> for RawIbfParams {
    fn from(p: IbfParams) -> Self {
        RawIbfParams { s: p.s, a: p.a }
    }
}

impl Default for IbfParams {
    fn default() -> Self {
        IbfParams {
            s: 2.0,
            a: 0.5,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl IbfParams {
    pub fn new(s: f64, a: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Domain(format!("ibf concentration s must be > 0, got {s}")));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Domain(format!("ibf skew a must lie in (0, 1), got {a}")));
        }
        let alpha = s * (1.0 - a);
        let beta = s * a;
        Self::check_shape(alpha, beta)?;
        Ok(IbfParams { s, a, alpha, beta })
    }

    /// Builds parameters directly from the Beta shape pair.
    pub fn from_shape(alpha: f64, beta: f64) -> Result<Self> {
        Self::check_shape(alpha, beta)?;
        let s = alpha + beta;
        Ok(IbfParams {
            s,
            a: beta / s,
            alpha,
            beta,
        })
    }

    fn check_shape(alpha: f64, beta: f64) -> Result<()> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("ibf shape {name} must be > 0, got {v}")));
            }
            if v > MAX_SHAPE {
                return Err(Error::Domain(format!(
                    "ibf shape {name} = {v} exceeds the supported maximum {MAX_SHAPE}"
                )));
            }
        }
        Ok(())
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Evaluates `I_x(alpha, beta)` for these parameters.
    pub fn eval(&self, x: f64) -> Result<f64> {
        regularized_ibf(x, self)
    }
}

/// Regularized incomplete beta `I_x(alpha, beta)`.
///
/// Uses the Lentz continued fraction on whichever of `I_x(alpha, beta)` and
/// `1 - I_{1-x}(beta, alpha)` converges faster. Returns a domain error for
/// `x` outside `[0, 1]`; the argument is never clamped.
pub fn regularized_ibf(x: f64, params: &IbfParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("ibf argument must lie in [0, 1], got {x}")));
    }
    let (a, b) = (params.alpha, params.beta);
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    // closed forms; alpha = beta = 1 reduces to the identity exactly
    if b == 1.0 {
        return Ok(x.powf(a));
    }
    if a == 1.0 {
        return Ok(-(b * (-x).ln_1p()).exp_m1());
    }
    // log of x^a (1-x)^b / B(a, b)
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (-x).ln_1p();
    let front = ln_front.exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * continued_fraction(a, b, x) / a
    } else {
        1.0 - front * continued_fraction(b, a, 1.0 - x) / b
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;

        if (del - 1.0).abs() <= CF_EPS {
            break;
        }
    }
    h
}
