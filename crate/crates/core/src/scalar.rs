//! Library of real scalar functions of time with closed-form antiderivatives.
//! They serve as the time profile `g` of separable generators and as forcing
//! components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn {
    Const(f64),
    Cos,
    Sin,
    /// Coefficients in ascending powers.
    Poly(Vec<f64>),
    /// `|t|^γ`, 0 < γ.
    AbsPow(f64),
}

impl ScalarFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ScalarFn::Const(c) => *c,
            ScalarFn::Cos => t.cos(),
            ScalarFn::Sin => t.sin(),
            ScalarFn::Poly(cs) => cs.iter().rev().fold(0.0, |acc, &c| acc * t + c),
            ScalarFn::AbsPow(g) => t.abs().powf(*g),
        }
    }

    /// Antiderivative normalised to vanish at 0.
    pub fn antiderivative(&self, t: f64) -> f64 {
        match self {
            ScalarFn::Const(c) => c * t,
            ScalarFn::Cos => t.sin(),
            ScalarFn::Sin => 1.0 - t.cos(),
            ScalarFn::Poly(cs) => {
                cs.iter().enumerate().rev().fold(0.0, |acc, (k, &c)| acc * t + c / (k as f64 + 1.0)) * t
            }
            ScalarFn::AbsPow(g) => t.signum() * t.abs().powf(g + 1.0) / (g + 1.0),
        }
    }

    /// `∫ₛᵗ g(τ) dτ`.
    pub fn integral(&self, s: f64, t: f64) -> f64 {
        if s == t {
            return 0.0;
        }
        self.antiderivative(t) - self.antiderivative(s)
    }

    /// An upper bound on `sup |g|` over `[−T, T]`.
    pub fn sup_abs(&self, horizon: f64) -> f64 {
        match self {
            ScalarFn::Const(c) => c.abs(),
            ScalarFn::Cos => 1.0,
            ScalarFn::Sin => {
                if horizon < std::f64::consts::FRAC_PI_2 {
                    horizon.sin()
                } else {
                    1.0
                }
            }
            ScalarFn::Poly(cs) => {
                cs.iter().enumerate().map(|(k, c)| c.abs() * horizon.powi(k as i32)).sum()
            }
            ScalarFn::AbsPow(g) => horizon.powf(*g),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalarFn::Const(_) => "const",
            ScalarFn::Cos => "cos",
            ScalarFn::Sin => "sin",
            ScalarFn::Poly(_) => "poly",
            ScalarFn::AbsPow(_) => "abs_pow",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            ScalarFn::Const(c) => vec![*c],
            ScalarFn::Cos | ScalarFn::Sin => vec![],
            ScalarFn::Poly(cs) => cs.clone(),
            ScalarFn::AbsPow(g) => vec![*g],
        }
    }

    pub fn from_parts(name: &str, params: &[f64]) -> Result<Self> {
        let bad = |msg: &str| Error::SchemaViolation { field: "g".into(), message: msg.into() };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("parameters must be finite"));
        }
        match name {
            "const" => match params {
                [c] => Ok(ScalarFn::Const(*c)),
                _ => Err(bad("const takes exactly one parameter")),
            },
            "cos" | "sin" => {
                if !params.is_empty() {
                    return Err(bad("cos/sin take no parameters"));
                }
                Ok(if name == "cos" { ScalarFn::Cos } else { ScalarFn::Sin })
            }
            "poly" => {
                if params.is_empty() {
                    return Err(bad("poly needs at least one coefficient"));
                }
                Ok(ScalarFn::Poly(params.to_vec()))
            }
            "abs_pow" => match params {
                [g] if *g > 0.0 => Ok(ScalarFn::AbsPow(*g)),
                _ => Err(bad("abs_pow takes one positive exponent")),
            },
            other => Err(bad(&format!("unknown function `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScalarWire {
    name: String,
    #[serde(default)]
    params: Vec<f64>,
}

impl Serialize for ScalarFn {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScalarWire { name: self.name().to_string(), params: self.params() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ScalarFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = ScalarWire::deserialize(d)?;
        ScalarFn::from_parts(&w.name, &w.params).map_err(serde::de::Error::custom)
    }
}
