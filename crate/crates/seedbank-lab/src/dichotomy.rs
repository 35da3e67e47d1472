//! Clustering versus coexistence.
//!
//! Two dual lineages coalesce with probability one exactly when their total
//! hazard of meeting is infinite. Depending on the model this hazard is
//!
//! * `∫₁^∞ â_t(0,0) dt` when `ρ < ∞`,
//! * `∫₁^∞ t^{-(1-γ)/γ} â_t(0,0) dt` when `ρ = ∞` with wake-up tail `t^{-γ}`,
//! * the same with `â_t` replaced by `(â_t ∗ â†_t)(0,0)` when dormancy
//!   displaces individuals (model 3),
//! * the `γ` form multiplied by `φ̂(t)^{-1/γ}` when the wake-up density carries a
//!   slowly varying factor `φ`.
//!
//! A divergent integral means clustering, a finite one coexistence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::WalkKernel;
use crate::quadrature::{
    integrate, Convergence, ConvolvedReturn, IntegralEstimate, QuadratureOptions, ReturnCurve,
    TorusReturn, Weight,
};
use crate::seedbank::SeedBankSpec;
use crate::stats::{linear_fit, logspace};
use crate::system::Model;

/// Slowly varying factor `φ` of the wake-up density `φ(t) t^{-(1+γ)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SlowlyVarying {
    Constant {
        c: f64,
    },
    /// `φ(t) = log(e + t)^p`.
    LogPower {
        p: f64,
    },
    /// Log-log interpolation through `(t, φ(t))`, constant outside the table.
    Tabulated {
        t: Vec<f64>,
        values: Vec<f64>,
    },
}

/// Ratios `φ(2t)/φ(t)` on a geometric grid.
#[derive(Clone, Debug, Serialize)]
pub struct SlowVariationReport {
    pub t: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Numerical view of `φ̂(t) = exp ∫ ψ(u) du/u`.
#[derive(Clone, Debug, Serialize)]
pub struct RepresentationCheck {
    pub u: Vec<f64>,
    pub psi: Vec<f64>,
    /// `max |ψ(u)| log u` over the grid; finite means `|ψ| ≤ C / log u` holds there.
    pub log_bound: f64,
    /// `ψ` keeps one sign over the upper half of the grid.
    pub eventually_signed: bool,
}

impl RepresentationCheck {
    pub fn passes(&self) -> bool {
        self.eventually_signed
            && self.log_bound.is_finite()
            && self.psi.last().is_some_and(|p| p.abs() < 0.1)
    }
}

impl SlowlyVarying {
    pub fn validate(&self) -> Result<()> {
        match self {
            SlowlyVarying::Constant { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(Error::invalid("slowvar.c", "must be positive"));
                }
            }
            SlowlyVarying::LogPower { p } => {
                if !p.is_finite() {
                    return Err(Error::invalid("slowvar.p", "must be finite"));
                }
            }
            SlowlyVarying::Tabulated { t, values } => {
                if t.len() < 2 || t.len() != values.len() {
                    return Err(Error::invalid(
                        "slowvar.values",
                        "need at least two (t, value) pairs of equal length",
                    ));
                }
                if t.windows(2).any(|w| w[1] <= w[0]) || t[0] <= 0.0 {
                    return Err(Error::invalid(
                        "slowvar.t",
                        "must be positive and increasing",
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::invalid("slowvar.values", "must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SlowlyVarying::Constant { c } => *c,
            SlowlyVarying::LogPower { p } => (std::f64::consts::E + t).ln().powf(*p),
            SlowlyVarying::Tabulated { t: ts, values } => {
                if t <= ts[0] {
                    return values[0];
                }
                if t >= ts[ts.len() - 1] {
                    return values[values.len() - 1];
                }
                let i = ts.partition_point(|&s| s <= t) - 1;
                let w = (t / ts[i]).ln() / (ts[i + 1] / ts[i]).ln();
                (values[i].ln() * (1.0 - w) + values[i + 1].ln() * w).exp()
            }
        }
    }

    /// `φ̂(t)`: `φ(t)` when `γ < 1`, else `∫₁^{e+t} φ(s) ds/s`. The shift by
    /// `e` keeps `φ̂` away from zero at `t = 1` and leaves the tail unchanged.
    pub fn hat(&self, t: f64, gamma: f64) -> f64 {
        if gamma < 1.0 {
            return self.eval(t);
        }
        let upper = (std::f64::consts::E + t).ln();
        match self {
            SlowlyVarying::Constant { c } => c * upper,
            _ => log_integral(|s| self.eval(s), upper),
        }
    }

    /// Exponent `κ` with `φ̂(t) ≈ (log t)^κ`, when known in closed form.
    pub fn hat_log_exponent(&self, gamma: f64) -> Option<f64> {
        match (self, gamma < 1.0) {
            (SlowlyVarying::Constant { .. }, true) => Some(0.0),
            (SlowlyVarying::Constant { .. }, false) => Some(1.0),
            (SlowlyVarying::LogPower { p }, true) => Some(*p),
            (SlowlyVarying::LogPower { p }, false) => Some((p + 1.0).max(0.0)),
            (SlowlyVarying::Tabulated { .. }, _) => None,
        }
    }

    /// Checks that `φ(2t)/φ(t)` settles towards 1 on `t = 10², …, 10¹²`.
    pub fn verify(&self) -> Result<SlowVariationReport> {
        self.validate()?;
        let t = logspace(1e2, 1e12, 11);
        let ratios: Vec<f64> = t
            .iter()
            .map(|&s| self.eval(2.0 * s) / self.eval(s))
            .collect();
        let gaps: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
        let settling = gaps.windows(2).rev().take(4).all(|w| w[1] <= w[0] + 1e-12);
        // A regularly varying t^ε keeps a constant gap 2^ε − 1; a slowly varying
        // one must shrink it.
        let (first, last) = (gaps[0], gaps[gaps.len() - 1]);
        if !settling || (last > 1e-9 && last > 0.5 * first) {
            return Err(Error::invalid(
                "slowvar",
                format!(
                    "phi(2t)/phi(t) does not approach 1 (last ratio {:.4})",
                    ratios[ratios.len() - 1]
                ),
            ));
        }
        Ok(SlowVariationReport { t, ratios })
    }

    /// Estimates `ψ(u) = u φ̂'(u) / φ̂(u)` on `u = 10², …, 10¹²`.
    pub fn representation_check(&self, gamma: f64) -> RepresentationCheck {
        let u = logspace(1e2, 1e12, 41);
        let h: f64 = 0.05;
        let psi: Vec<f64> = u
            .iter()
            .map(|&v| {
                (self.hat(v * h.exp(), gamma).ln() - self.hat(v * (-h).exp(), gamma).ln())
                    / (2.0 * h)
            })
            .collect();
        let log_bound = u
            .iter()
            .zip(&psi)
            .map(|(v, p)| p.abs() * v.ln())
            .fold(0.0, f64::max);
        let half = &psi[psi.len() / 2..];
        let eventually_signed = half.iter().all(|p| *p >= 0.0) || half.iter().all(|p| *p <= 0.0);
        RepresentationCheck {
            u,
            psi,
            log_bound,
            eventually_signed,
        }
    }
}

/// `∫₀^{upper} f(e^v) dv`, i.e. `∫₁^{e^upper} f(s) ds/s`.
fn log_integral(f: impl Fn(f64) -> f64, upper: f64) -> f64 {
    let n = ((upper * 64.0).ceil() as usize).max(64) * 2;
    let h = upper / n as f64;
    let mut s = f(1.0) + f(upper.exp());
    for i in 1..n {
        s += f((i as f64 * h).exp()) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Clustering,
    Coexistence,
    BoundaryInconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    MigrationDominated,
    Interplay,
    SeedbankDominated,
}

/// Regime from `γ`; `None` stands for `ρ < ∞`.
pub fn regime_of(gamma: Option<f64>) -> Regime {
    match gamma {
        None => Regime::MigrationDominated,
        Some(g) if g > 1.0 => Regime::MigrationDominated,
        Some(g) if g >= 0.5 => Regime::Interplay,
        Some(_) => Regime::SeedbankDominated,
    }
}

/// Inputs of a classification.
#[derive(Clone, Debug)]
pub struct DichotomyInput {
    pub model: Model,
    pub kernel: WalkKernel,
    pub seedbank: SeedBankSpec,
    pub displacement: Option<WalkKernel>,
    pub slow: Option<SlowlyVarying>,
}

#[derive(Clone, Debug, Serialize)]
pub struct DichotomyIntegral {
    /// Which integral was evaluated, e.g. `I_a` or `I_{a*a',gamma,phi}`.
    pub name: String,
    pub gamma: Option<f64>,
    pub weight_power: f64,
    pub estimate: IntegralEstimate,
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Evaluates the integral that decides the dichotomy for `input`.
pub fn dichotomy_integral(
    input: &DichotomyInput,
    opts: &QuadratureOptions,
) -> Result<DichotomyIntegral> {
    input.seedbank.validate()?;
    let colours = input.seedbank.colours()?;
    let gamma = if colours.rho().is_finite() {
        None
    } else {
        input.seedbank.gamma()
    };
    if let Some(g) = gamma {
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::invalid(
                "seedbank",
                format!("gamma must lie in (0,1], got {g}"),
            ));
        }
    }
    if input.slow.is_some() && gamma.is_none() {
        return Err(Error::invalid(
            "slowvar",
            "a slowly varying modulation needs fat-tailed wake-up times (rho = infinity)",
        ));
    }
    let curve: Box<dyn ReturnCurve> = match input.model {
        Model::One => {
            if !matches!(input.seedbank, SeedBankSpec::Single { .. }) {
                return Err(Error::invalid(
                    "seedbank",
                    "model 1 takes a single-colour seed-bank",
                ));
            }
            Box::new(TorusReturn::new(input.kernel.symmetrize(), opts))
        }
        Model::Two | Model::Three => {
            if !input.kernel.is_symmetric(SYMMETRY_TOL) {
                return Err(Error::invalid(
                    "kernel",
                    "models 2 and 3 need a symmetric migration kernel",
                ));
            }
            if input.model == Model::Two {
                if input.displacement.is_some() {
                    return Err(Error::invalid(
                        "displacement",
                        "only model 3 uses a displacement kernel",
                    ));
                }
                Box::new(TorusReturn::new(input.kernel.clone(), opts))
            } else {
                let disp = input.displacement.as_ref().ok_or_else(|| {
                    Error::invalid("displacement", "model 3 needs a displacement kernel")
                })?;
                if !disp.is_symmetric(SYMMETRY_TOL) {
                    return Err(Error::invalid("displacement", "must be symmetric"));
                }
                Box::new(ConvolvedReturn::new(
                    input.kernel.normalized()?,
                    disp.normalized()?,
                    opts,
                )?)
            }
        }
    };
    let base = match input.model {
        Model::Three => "I_{a*a'",
        _ => "I_{a",
    };
    let estimate;
    let weight_power;
    let name;
    match (gamma, &input.slow) {
        (None, _) => {
            weight_power = 0.0;
            name = format!("{base}}}");
            estimate = integrate(curve.as_ref(), &Weight::power(0.0), opts)?;
        }
        (Some(g), None) => {
            weight_power = -(1.0 - g) / g;
            name = format!("{base},gamma}}");
            estimate = integrate(curve.as_ref(), &Weight::power(weight_power), opts)?;
        }
        (Some(g), Some(slow)) => {
            slow.verify()?;
            weight_power = -(1.0 - g) / g;
            name = format!("{base},gamma,phi}}");
            let factor = |t: f64| slow.hat(t, g).powf(-1.0 / g);
            let w = Weight {
                power: weight_power,
                slow: Some(&factor),
                log_exponent: slow.hat_log_exponent(g).map(|k| k / g),
            };
            estimate = integrate(curve.as_ref(), &w, opts)?;
        }
    }
    Ok(DichotomyIntegral {
        name,
        gamma,
        weight_power,
        estimate,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeVerdict {
    pub verdict: Verdict,
    pub regime: Regime,
    /// Set when the tail sat on the integrability boundary.
    pub boundary: bool,
    pub integral: DichotomyIntegral,
}

/// Clustering iff the dichotomy integral diverges.
pub fn classify(input: &DichotomyInput, opts: &QuadratureOptions) -> Result<RegimeVerdict> {
    let integral = dichotomy_integral(input, opts)?;
    let c = integral.estimate.convergence;
    let verdict = match c {
        Convergence::Finite => Verdict::Coexistence,
        Convergence::Divergent | Convergence::Critical => Verdict::Clustering,
        Convergence::Inconclusive => Verdict::BoundaryInconclusive,
    };
    Ok(RegimeVerdict {
        verdict,
        regime: regime_of(integral.gamma),
        boundary: matches!(c, Convergence::Critical | Convergence::Inconclusive),
        integral,
    })
}

/// Parameters of the drifted-walk diagnostic
/// `f(t) = (2π)^{-2} ∫ exp(−{Bt|φ|² + At|½Cη(φ₁+φ₂)|^γ}) dφ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymmetricOptions {
    pub eta: f64,
    pub gamma: f64,
    #[serde(rename = "A", default = "one")]
    pub a: f64,
    #[serde(rename = "B", default = "one")]
    pub b: f64,
    #[serde(rename = "C", default = "one")]
    pub c: f64,
    /// Points per axis of the frequency grid.
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    /// Shrink the window to the dominant scale at each `t` (otherwise `[−π, π]`).
    #[serde(default = "yes")]
    pub adaptive: bool,
}

fn one() -> f64 {
    1.0
}
fn default_grid() -> usize {
    4001
}
fn yes() -> bool {
    true
}

impl AsymmetricOptions {
    pub fn new(eta: f64, gamma: f64) -> Self {
        AsymmetricOptions {
            eta,
            gamma,
            a: 1.0,
            b: 1.0,
            c: 1.0,
            grid_points: default_grid(),
            adaptive: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymmetricDiagnostic {
    pub t: Vec<f64>,
    pub f: Vec<f64>,
    pub exponent: f64,
    pub exponent_se: f64,
    /// `1/γ + 1/2`.
    pub predicted: f64,
    /// Fitted exponent with the asymmetric term switched off (the symmetric walk).
    pub symmetric_exponent: f64,
    pub integral_finite: bool,
    /// Times at which the dominant frequency scale spanned fewer than two grid cells.
    pub resolution_warnings: Vec<f64>,
}

fn simpson_grid(h: f64, vals: &[f64]) -> f64 {
    let n = vals.len() - 1;
    let mut s = vals[0] + vals[n];
    for (i, v) in vals.iter().enumerate().take(n).skip(1) {
        s += v * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// In rotated frequencies `u = (φ₁+φ₂)/√2`, `v = (φ₁−φ₂)/√2` the exponent is
/// `Bt(u²+v²) + At|c'u|^γ` with `c' = ½Cη√2`, so `f` factorises.
fn diagnostic_value(o: &AsymmetricOptions, a: f64, t: f64) -> (f64, bool) {
    let cp = 0.5 * o.c * o.eta * std::f64::consts::SQRT_2;
    let gauss_scale = (o.b * t).powf(-0.5);
    let stable_scale = if a > 0.0 {
        (a * t).powf(-1.0 / o.gamma) / cp
    } else {
        f64::INFINITY
    };
    let u_scale = gauss_scale.min(stable_scale);
    let n = o.grid_points.max(3) | 1;
    let pi = std::f64::consts::PI;
    let (u_half, v_half) = if o.adaptive {
        ((40.0 * u_scale).min(pi), (40.0 * gauss_scale).min(pi))
    } else {
        (pi, pi)
    };
    let hu = 2.0 * u_half / (n - 1) as f64;
    let hv = 2.0 * v_half / (n - 1) as f64;
    let fu: Vec<f64> = (0..n)
        .map(|i| {
            let u = -u_half + i as f64 * hu;
            (-(o.b * t * u * u) - a * t * (cp * u.abs()).powf(o.gamma)).exp()
        })
        .collect();
    let fv: Vec<f64> = (0..n)
        .map(|i| {
            let v = -v_half + i as f64 * hv;
            (-(o.b * t * v * v)).exp()
        })
        .collect();
    let value = simpson_grid(hu, &fu) * simpson_grid(hv, &fv) / (4.0 * pi * pi);
    (value, u_scale < 2.0 * hu || gauss_scale < 2.0 * hv)
}

/// Evaluates `f(t)` on `t_grid` and fits its decay exponent by log-log regression.
pub fn asymmetric_diagnostic(
    o: &AsymmetricOptions,
    t_grid: &[f64],
) -> Result<AsymmetricDiagnostic> {
    if !(o.eta > 0.0 && o.eta < 1.0) {
        return Err(Error::invalid("eta", "must lie in (0,1)"));
    }
    if !(o.gamma > 1.0 && o.gamma < 2.0) {
        return Err(Error::invalid("gamma", "must lie in (1,2)"));
    }
    if t_grid.len() < 2 || t_grid.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::invalid("t_grid", "need at least two positive times"));
    }
    let mut f = Vec::with_capacity(t_grid.len());
    let mut sym = Vec::with_capacity(t_grid.len());
    let mut resolution_warnings = Vec::new();
    for &t in t_grid {
        let (v, warn) = diagnostic_value(o, o.a, t);
        if warn {
            resolution_warnings.push(t);
        }
        f.push(v);
        sym.push(diagnostic_value(o, 0.0, t).0);
    }
    let lt: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let fit = linear_fit(&lt, &f.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let sym_fit = linear_fit(&lt, &sym.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let exponent = -fit.slope;
    Ok(AsymmetricDiagnostic {
        t: t_grid.to_vec(),
        f,
        exponent,
        exponent_se: fit.slope_se,
        predicted: 1.0 / o.gamma + 0.5,
        symmetric_exponent: -sym_fit.slope,
        integral_finite: exponent > 1.0 + QuadratureOptions::default().boundary_tol,
        resolution_warnings,
    })
}
