//! Wake-up times and the activity clock of a single lineage.
//!
//! A lineage alternates active periods `σ ~ Exp(χ)` with dormant periods
//! `τ` drawn from the colour mixture. Migration does not touch the clock, so
//! everything here depends on the colour table only.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{replicate, replicate_reduce, tag, Merge};
use crate::seedbank::WakeTimeLaw;
use crate::stats::{linear_fit, logspace, Estimate, Welford};

const SAMPLE_BLOCK: usize = 4096;

/// `n` dormancy lengths; block `b` draws from replica stream `b`.
pub fn sample_taus(law: &WakeTimeLaw, n: usize, seed: u64) -> Vec<f64> {
    let blocks = n.div_ceil(SAMPLE_BLOCK);
    replicate(blocks, seed, tag::TAU, |b, rng| {
        let len = SAMPLE_BLOCK.min(n - b * SAMPLE_BLOCK);
        (0..len).map(|_| law.sample_tau(rng).0).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TailFit {
    pub gamma: f64,
    pub gamma_se: f64,
    /// `exp(intercept)` of the log-log fit.
    pub constant: f64,
    /// Lower and upper `t` of the window.
    pub window: (f64, f64),
    /// Survival levels spanned by the window.
    pub survival_window: (f64, f64),
    pub samples: usize,
    pub exceedances: usize,
    /// `(C_remark, C_tail)` and the relative error of `Ĉ` against each.
    pub candidates: Option<TailCandidates>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailCandidates {
    pub wakeup_remark: f64,
    pub tail_formula: f64,
    pub rel_err_wakeup_remark: f64,
    pub rel_err_tail_formula: f64,
}

/// Survival levels bracketing the fit.
pub const TAIL_UPPER_SURVIVAL: f64 = 1e-1;
pub const TAIL_LOWER_SURVIVAL: f64 = 1e-3;
pub const MIN_EXCEEDANCES: usize = 1000;
const TAIL_LEVELS: usize = 41;

/// Regress `ln P̂(τ > t)` on `ln t` over survival levels in
/// `[1e-3, 1e-1]`. Sorts `samples` in place.
pub fn tail_fit_window(samples: &mut [f64], candidates: Option<(f64, f64)>) -> Result<TailFit> {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    let exceedances = (n as f64 * TAIL_UPPER_SURVIVAL).floor() as usize;
    if exceedances < MIN_EXCEEDANCES {
        return Err(Error::Inconclusive(format!(
            "tail fit needs {MIN_EXCEEDANCES} exceedances, have {exceedances} of {n} samples"
        )));
    }
    // keep at least 50 points past the deepest level
    let lower = TAIL_LOWER_SURVIVAL.max(50.0 / n as f64);
    let mut xs = Vec::with_capacity(TAIL_LEVELS);
    let mut ys = Vec::with_capacity(TAIL_LEVELS);
    for s in logspace(TAIL_UPPER_SURVIVAL, lower, TAIL_LEVELS) {
        // empirical quantile with P̂(τ > t) = s
        let k = ((1.0 - s) * n as f64).round() as usize;
        let t = samples[k.min(n - 1)];
        if t > 0.0 {
            xs.push(t.ln());
            ys.push(s.ln());
        }
    }
    let fit = linear_fit(&xs, &ys);
    let constant = fit.intercept.exp();
    Ok(TailFit {
        gamma: -fit.slope,
        gamma_se: fit.slope_se,
        constant,
        window: (xs[0].exp(), xs[xs.len() - 1].exp()),
        survival_window: (TAIL_UPPER_SURVIVAL, lower),
        samples: n,
        exceedances,
        candidates: candidates.map(|(r, t)| TailCandidates {
            wakeup_remark: r,
            tail_formula: t,
            rel_err_wakeup_remark: (constant / r - 1.0).abs(),
            rel_err_tail_formula: (constant / t - 1.0).abs(),
        }),
    })
}

/// Convenience wrapper that leaves the caller's samples untouched.
pub fn tau_tail_fit(samples: &[f64], candidates: Option<(f64, f64)>) -> Result<TailFit> {
    let mut owned = samples.to_vec();
    tail_fit_window(&mut owned, candidates)
}

#[derive(Clone, Debug, Serialize)]
pub struct ActivityPoint {
    pub t: f64,
    /// `T(t)/t^s`.
    pub active_time: Estimate,
    /// `t^{1-s} P(active at t)`.
    pub active_probability: Estimate,
    /// `N(t)/t^s`.
    pub cycles: Estimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct ActivitySummary {
    /// `s = 1` when `ρ < ∞`, `s = γ` otherwise.
    pub scale_exponent: f64,
    /// `1/(1+ρ)` when `ρ < ∞`.
    pub active_fraction_limit: Option<f64>,
    pub points: Vec<ActivityPoint>,
}

#[derive(Clone)]
struct ActivityAcc(Vec<[Welford; 3]>);

impl Merge for ActivityAcc {
    fn merge(&mut self, other: Self) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
    }
}

/// Cross-replica means of the activity clock at every `t` in `t_grid`.
/// `gamma` selects the fat-tailed scaling; `None` scales by `t`.
pub fn activity_asymptotics(
    law: &WakeTimeLaw,
    gamma: Option<f64>,
    t_grid: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<ActivitySummary> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(Error::invalid(
            "tGrid",
            "must be positive and strictly increasing",
        ));
    }
    let s = gamma.unwrap_or(1.0);
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::invalid("gamma", "must lie in (0, 1]"));
    }
    let rho = law.colours().rho();
    let limit = match (gamma, rho.is_finite()) {
        (None, true) => Some(1.0 / (1.0 + rho.effective())),
        _ => None,
    };
    let acc = replicate_reduce(
        replicas,
        seed,
        tag::ACTIVITY,
        || ActivityAcc(vec![Default::default(); t_grid.len()]),
        |acc, _, rng| {
            let mut now = 0.0;
            let mut active_total = 0.0;
            let mut cycles = 0u64;
            let mut g = 0;
            while g < t_grid.len() {
                let sigma = law.sample_sigma(rng);
                // grid points inside the active period
                while g < t_grid.len() && t_grid[g] <= now + sigma {
                    record(
                        &mut acc.0[g],
                        t_grid[g],
                        s,
                        active_total + t_grid[g] - now,
                        1.0,
                        cycles,
                    );
                    g += 1;
                }
                now += sigma;
                active_total += sigma;
                let (tau, _) = law.sample_tau(rng);
                while g < t_grid.len() && t_grid[g] < now + tau {
                    record(&mut acc.0[g], t_grid[g], s, active_total, 0.0, cycles);
                    g += 1;
                }
                now += tau;
                cycles += 1;
            }
        },
    );
    let points = t_grid
        .iter()
        .zip(acc.0)
        .map(|(&t, [a, p, c])| ActivityPoint {
            t,
            active_time: a.estimate(),
            active_probability: p.estimate(),
            cycles: c.estimate(),
        })
        .collect();
    Ok(ActivitySummary {
        scale_exponent: s,
        active_fraction_limit: limit,
        points,
    })
}

fn record(w: &mut [Welford; 3], t: f64, s: f64, active: f64, is_active: f64, cycles: u64) {
    let scale = t.powf(s);
    w[0].push(active / scale);
    w[1].push(is_active * t / scale);
    w[2].push(cycles as f64 / scale);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seedbank::SeedBankSpec;
    use crate::stats::ks_critical;
    use crate::stats::ks_statistic;

    fn law(spec: &SeedBankSpec) -> WakeTimeLaw {
        WakeTimeLaw::new(spec.colours().unwrap())
    }

    #[test]
    fn single_colour_is_exponential() {
        let l = law(&SeedBankSpec::Single { k: 2.0, e: 0.5 });
        let mut x = sample_taus(&l, 20_000, 3);
        let d = ks_statistic(&mut x, |t| 1.0 - (-0.5 * t).exp());
        assert!(d < ks_critical(x.len(), 0.01), "{d}");
    }

    #[test]
    fn sampling_is_reproducible_and_sized() {
        let l = law(&SeedBankSpec::Single { k: 1.0, e: 1.0 });
        let a = sample_taus(&l, 5000, 9);
        assert_eq!(a.len(), 5000);
        assert_eq!(a, sample_taus(&l, 5000, 9));
    }

    #[test]
    fn too_few_samples_is_inconclusive() {
        let x: Vec<f64> = (1..=5000).map(|i| i as f64).collect();
        assert!(matches!(
            tau_tail_fit(&x, None),
            Err(Error::Inconclusive(_))
        ));
    }

    #[test]
    fn exact_pareto_quantiles_recover_exponent() {
        // P(τ > t) = t^{-1/2} on [1, ∞), placed at exact quantiles
        let n = 100_000;
        let x: Vec<f64> = (0..n)
            .map(|i| (1.0 - (i as f64 + 0.5) / n as f64).powi(-2))
            .collect();
        let f = tau_tail_fit(&x, None).unwrap();
        assert!((f.gamma - 0.5).abs() < 1e-3, "{}", f.gamma);
        assert!((f.constant - 1.0).abs() < 1e-2, "{}", f.constant);
    }

    #[test]
    fn clock_without_dormancy_mass_is_exact_at_zero_cycles() {
        let l = law(&SeedBankSpec::Single { k: 1.0, e: 1.0 });
        let s = activity_asymptotics(&l, None, &[1e-9], 100, 1).unwrap();
        assert!((s.points[0].active_time.mean - 1.0).abs() < 1e-6);
        assert_eq!(s.active_fraction_limit, Some(0.5));
    }
}
