//! Integrals `∫₁^∞ w(t) p(t) dt` of return-probability curves.
//!
//! The integral is computed on `[1, H]` by Simpson's rule in `log t`, where `H`
//! is the smaller of `t_max` and the horizon up to which a finite torus still
//! looks like the infinite lattice. The tail beyond `H` is replaced by a power
//! law fitted to `p` over the last decade. Whether the tail is integrable is
//! decided from the fitted exponent of the full integrand:
//!
//! * exponent above `1 + boundary_tol`: finite, tail added in closed form;
//! * exponent below `1 - boundary_tol`: divergent;
//! * exponent within `critical_tol` of 1: the power part is exactly critical,
//!   and the logarithmic factor of the weight decides (`∫ dt / (t log^κ t)` is
//!   finite iff `κ > 1`);
//! * anything else: inconclusive.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{convolved_return, WalkKernel};
use crate::stats::{linear_fit, logspace};

/// A nonincreasing function `t ↦ p(t)` standing in for a return probability.
pub trait ReturnCurve: Sync {
    fn value(&self, t: f64) -> f64;

    /// Time up to which values are trusted.
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }
}

/// `coeff · t^{-exponent}`.
#[derive(Clone, Copy, Debug)]
pub struct PowerLaw {
    pub coeff: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn new(exponent: f64) -> Self {
        PowerLaw {
            coeff: 1.0,
            exponent,
        }
    }
}

impl ReturnCurve for PowerLaw {
    fn value(&self, t: f64) -> f64 {
        self.coeff * t.powf(-self.exponent)
    }
}

/// Any closure, trusted everywhere.
pub struct FnCurve<F>(pub F);

impl<F: Fn(f64) -> f64 + Sync> ReturnCurve for FnCurve<F> {
    fn value(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct QuadratureOptions {
    pub t_max: f64,
    pub boundary_tol: f64,
    pub critical_tol: f64,
    pub points_per_decade: usize,
    /// Torus curves are trusted while `p(t) ≥ plateau_factor / L^d`.
    pub plateau_factor: f64,
    pub fit_decades: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            t_max: 1e6,
            boundary_tol: 0.02,
            critical_tol: 0.005,
            points_per_decade: 32,
            plateau_factor: 50.0,
            fit_decades: 1.0,
        }
    }
}

/// Return probability of a single torus walk, `a_t(0,0)`.
pub struct TorusReturn {
    kernel: WalkKernel,
    horizon: f64,
}

impl TorusReturn {
    pub fn new(kernel: WalkKernel, opts: &QuadratureOptions) -> Self {
        let n = kernel.torus().sites() as f64;
        let horizon = plateau_horizon(|t| kernel.return_probability(t), opts.plateau_factor / n);
        TorusReturn { kernel, horizon }
    }
}

impl ReturnCurve for TorusReturn {
    fn value(&self, t: f64) -> f64 {
        self.kernel.return_probability(t)
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Return probability of the sum of two independent torus walks run for the same time.
pub struct ConvolvedReturn {
    a: WalkKernel,
    b: WalkKernel,
    horizon: f64,
}

impl ConvolvedReturn {
    pub fn new(a: WalkKernel, b: WalkKernel, opts: &QuadratureOptions) -> Result<Self> {
        convolved_return(&a, &b, 1.0)?;
        let n = a.torus().sites() as f64;
        let horizon = plateau_horizon(
            |t| convolved_return(&a, &b, t).expect("checked"),
            opts.plateau_factor / n,
        );
        Ok(ConvolvedReturn { a, b, horizon })
    }
}

impl ReturnCurve for ConvolvedReturn {
    fn value(&self, t: f64) -> f64 {
        convolved_return(&self.a, &self.b, t).expect("checked at construction")
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Smallest `t ≥ 1` (up to `1e15`) with `p(t) ≤ level`, by bisection in `log t`.
fn plateau_horizon(p: impl Fn(f64) -> f64, level: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 15.0 * std::f64::consts::LN_10);
    if p(1.0) <= level {
        return 1.0;
    }
    if p(hi.exp()) > level {
        return f64::INFINITY;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if p(mid.exp()) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo.exp()
}

/// Multiplier applied to the curve inside the integral: `t^power · slow(t)`,
/// where `slow(t) ~ (log t)^{-log_exponent}` is slowly varying.
pub struct Weight<'a> {
    pub power: f64,
    pub slow: Option<&'a (dyn Fn(f64) -> f64 + Sync)>,
    /// Known logarithmic decay exponent of `slow`; `None` when only numerics are available.
    pub log_exponent: Option<f64>,
}

impl Weight<'_> {
    pub fn power(power: f64) -> Self {
        Weight {
            power,
            slow: None,
            log_exponent: Some(0.0),
        }
    }

    fn eval(&self, t: f64) -> f64 {
        t.powf(self.power) * self.slow.map_or(1.0, |s| s(t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convergence {
    Finite,
    Divergent,
    /// Power decay exactly at exponent 1 with a logarithmic factor too weak to
    /// make the tail integrable; divergent, and flagged as a boundary case.
    Critical,
    Inconclusive,
}

impl Convergence {
    pub fn is_infinite(self) -> bool {
        matches!(self, Convergence::Divergent | Convergence::Critical)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IntegralEstimate {
    pub convergence: Convergence,
    /// Total with tail when finite, otherwise the integral up to `upper`.
    pub value: f64,
    pub partial: f64,
    /// Decay exponent of the full integrand.
    pub tail_exponent: f64,
    /// Decay exponent of the curve alone.
    pub curve_exponent: f64,
    pub upper: f64,
    pub fit_window: (f64, f64),
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// `∫₁^∞ weight(t) · curve(t) dt` with tail extrapolation.
pub fn integrate(
    curve: &dyn ReturnCurve,
    weight: &Weight<'_>,
    opts: &QuadratureOptions,
) -> Result<IntegralEstimate> {
    let upper = opts.t_max.min(curve.horizon());
    let lower_fit = upper / 10f64.powf(opts.fit_decades);
    if lower_fit < 1.0 {
        return Err(Error::Inconclusive(format!(
            "integration horizon {upper:.3e} leaves less than {} decade(s) for the tail fit; enlarge the torus",
            opts.fit_decades
        )));
    }
    let lu = upper.ln();
    let intervals = (opts.points_per_decade as f64 * upper.log10()).ceil() as usize;
    let partial = simpson(
        |u| {
            let t = u.exp();
            weight.eval(t) * curve.value(t) * t
        },
        0.0,
        lu,
        intervals,
    );

    let ts = logspace(lower_fit, upper, 17);
    let vals: Vec<f64> = ts.iter().map(|&t| curve.value(t)).collect();
    if vals.iter().any(|&v| !(v > 0.0)) {
        // Curve underflowed inside the fit window: decay faster than any power.
        return Ok(IntegralEstimate {
            convergence: Convergence::Finite,
            value: partial,
            partial,
            tail_exponent: f64::INFINITY,
            curve_exponent: f64::INFINITY,
            upper,
            fit_window: (lower_fit, upper),
        });
    }
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
    let curve_exponent = -linear_fit(&lx, &ly).slope;
    let q = curve_exponent - weight.power;
    let h_upper = weight.eval(upper) * curve.value(upper);

    let (convergence, tail) = if (q - 1.0).abs() <= opts.critical_tol {
        match weight.log_exponent {
            Some(k) if k > 1.0 + opts.boundary_tol => {
                (Convergence::Finite, h_upper * upper * lu / (k - 1.0))
            }
            Some(k) if k <= 1.0 => (Convergence::Critical, f64::INFINITY),
            _ => (Convergence::Inconclusive, f64::NAN),
        }
    } else if (q - 1.0).abs() <= opts.boundary_tol {
        (Convergence::Inconclusive, f64::NAN)
    } else if q > 1.0 {
        let tail = match weight.slow {
            None => h_upper * upper / (q - 1.0),
            Some(slow) => {
                let s_max = 50.0 / (q - 1.0);
                let base = slow(upper);
                h_upper
                    * upper
                    * simpson(
                        |s| ((1.0 - q) * s).exp() * slow(upper * s.exp()) / base,
                        0.0,
                        s_max,
                        4000,
                    )
            }
        };
        (Convergence::Finite, tail)
    } else {
        (Convergence::Divergent, f64::INFINITY)
    };
    let value = if convergence == Convergence::Finite {
        partial + tail
    } else {
        partial
    };
    Ok(IntegralEstimate {
        convergence,
        value,
        partial,
        tail_exponent: q,
        curve_exponent,
        upper,
        fit_window: (lower_fit, upper),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeEstimate {
    /// Largest grid value with a finite integral.
    pub lower: Option<f64>,
    /// Smallest grid value with an infinite or undecided integral.
    pub upper: Option<f64>,
    /// Set when some grid point sat on the integrability boundary.
    pub boundary: bool,
    pub per_zeta: Vec<(f64, Convergence)>,
}

/// Bracket `δ = sup{ζ : ∫₁^∞ t^ζ p(t) dt < ∞}` on a grid of `ζ > -1`.
pub fn walk_degree(
    curve: &dyn ReturnCurve,
    zeta_grid: &[f64],
    opts: &QuadratureOptions,
) -> Result<DegreeEstimate> {
    let mut grid = zeta_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    if grid.first().is_none_or(|&z| z <= -1.0) {
        return Err(Error::invalid(
            "zeta_grid",
            "must be nonempty with every value above -1",
        ));
    }
    let mut per_zeta = Vec::with_capacity(grid.len());
    for &z in &grid {
        per_zeta.push((z, integrate(curve, &Weight::power(z), opts)?.convergence));
    }
    let lower = per_zeta
        .iter()
        .filter(|p| p.1 == Convergence::Finite)
        .map(|p| p.0)
        .fold(None, |m: Option<f64>, z| Some(m.map_or(z, |m| m.max(z))));
    let upper = per_zeta
        .iter()
        .filter(|p| p.1 != Convergence::Finite)
        .map(|p| p.0)
        .find(|&z| lower.is_none_or(|l| z > l));
    let boundary = per_zeta
        .iter()
        .any(|p| matches!(p.1, Convergence::Critical | Convergence::Inconclusive));
    Ok(DegreeEstimate {
        lower,
        upper,
        boundary,
        per_zeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> QuadratureOptions {
        QuadratureOptions::default()
    }

    #[test]
    fn closed_form_power_integral() {
        // ∫₁^∞ t^{-3/2} dt = 2
        let e = integrate(&PowerLaw::new(1.5), &Weight::power(0.0), &opts()).unwrap();
        assert_eq!(e.convergence, Convergence::Finite);
        assert!((e.value - 2.0).abs() < 1e-6, "{}", e.value);
    }

    #[test]
    fn slow_decay_diverges() {
        let e = integrate(&PowerLaw::new(0.5), &Weight::power(0.0), &opts()).unwrap();
        assert_eq!(e.convergence, Convergence::Divergent);
    }

    #[test]
    fn near_boundary_is_inconclusive() {
        let e = integrate(&PowerLaw::new(1.01), &Weight::power(0.0), &opts()).unwrap();
        assert_eq!(e.convergence, Convergence::Inconclusive);
        let e = integrate(&PowerLaw::new(1.0), &Weight::power(0.0), &opts()).unwrap();
        assert_eq!(e.convergence, Convergence::Critical);
    }

    #[test]
    fn log_factor_decides_critical_decay() {
        let slow = |t: f64| (1.0 + t.ln()).powf(-2.0);
        let w = Weight {
            power: 0.0,
            slow: Some(&slow),
            log_exponent: Some(2.0),
        };
        let e = integrate(&PowerLaw::new(1.0), &w, &opts()).unwrap();
        assert_eq!(e.convergence, Convergence::Finite);
        // ∫₁^∞ dt / (t (1 + ln t)^2) = 1; the extrapolated tail is asymptotic only.
        assert!((e.value - 1.0).abs() < 0.1, "{}", e.value);
    }
}
