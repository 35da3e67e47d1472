use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diffusion coefficient `g` of the active layer; noise is `√g dw`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionFunction {
    /// `g(x) = d·x(1−x)`.
    FisherWright { d: f64 },
    /// `g(x) = d·[x(1−x)]²`.
    KimuraOhta { d: f64 },
    /// Piecewise-linear interpolation of values on a uniform grid over [0,1].
    Tabulated { values: Vec<f64> },
}

impl DiffusionFunction {
    pub fn fisher_wright(d: f64) -> Self {
        DiffusionFunction::FisherWright { d }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DiffusionFunction::FisherWright { d } => d * x * (1.0 - x),
            DiffusionFunction::KimuraOhta { d } => {
                let h = x * (1.0 - x);
                d * h * h
            }
            DiffusionFunction::Tabulated { values } => {
                let n = values.len() - 1;
                let s = x.clamp(0.0, 1.0) * n as f64;
                let i = (s.floor() as usize).min(n - 1);
                let w = s - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    /// Resampling rate `d` when `g = d·g_FW`, the only case with a moment dual.
    pub fn fisher_wright_rate(&self) -> Option<f64> {
        match self {
            DiffusionFunction::FisherWright { d } => Some(*d),
            _ => None,
        }
    }

    /// Lipschitz constant on [0,1].
    pub fn lipschitz(&self) -> f64 {
        match self {
            DiffusionFunction::FisherWright { d } => *d,
            // max |d/dx [x(1−x)]²| = 1/(3√3)
            DiffusionFunction::KimuraOhta { d } => d / (3.0 * 3f64.sqrt()),
            DiffusionFunction::Tabulated { values } => {
                let n = (values.len() - 1) as f64;
                values
                    .windows(2)
                    .map(|w| (w[1] - w[0]).abs() * n)
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Checks `g(0) = g(1) = 0` and `g > 0` on an interior grid.
    pub fn validate(&self) -> Result<()> {
        match self {
            DiffusionFunction::FisherWright { d } | DiffusionFunction::KimuraOhta { d } => {
                if !(d.is_finite() && *d > 0.0) {
                    return Err(Error::invalid("g.d", format!("must be positive, got {d}")));
                }
            }
            DiffusionFunction::Tabulated { values } => {
                if values.len() < 3 {
                    return Err(Error::invalid("g.values", "need at least 3 grid values"));
                }
                if values[0] != 0.0 || values[values.len() - 1] != 0.0 {
                    return Err(Error::invalid("g.values", "g must vanish at 0 and 1"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("g.values", "values must be finite"));
                }
            }
        }
        for k in 1..100 {
            let x = k as f64 / 100.0;
            if self.eval(x) <= 0.0 {
                return Err(Error::invalid(
                    "g",
                    format!("g must be positive inside (0,1), g({x}) <= 0"),
                ));
            }
        }
        Ok(())
    }
}
