//! Seed-bank parameters: relative sizes `K_m`, wake-up rates `e_m`, the derived
//! constants `χ = Σ K_m e_m` and `ρ = Σ K_m`, the wake-up time law and the
//! conserved density `θ`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// User-facing seed-bank description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedBankSpec {
    /// One dormant colour.
    Single {
        #[serde(rename = "K")]
        k: f64,
        e: f64,
    },
    /// Finitely many colours listed explicitly.
    Explicit {
        #[serde(rename = "K")]
        k: Vec<f64>,
        e: Vec<f64>,
    },
    /// `K_m = A (m+1)^{-α}`, `e_m = B (m+1)^{-β}` for `m < truncation`.
    Asymptotic {
        #[serde(rename = "A")]
        a: f64,
        alpha: f64,
        #[serde(rename = "B")]
        b: f64,
        beta: f64,
        truncation: u64,
    },
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            field,
            format!("must be a finite positive number, got {v}"),
        ))
    }
}

impl SeedBankSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SeedBankSpec::Single { k, e } => {
                positive("seedbank.K", *k)?;
                positive("seedbank.e", *e)
            }
            SeedBankSpec::Explicit { k, e } => {
                if k.is_empty() {
                    return Err(Error::invalid("seedbank.K", "needs at least one colour"));
                }
                if k.len() != e.len() {
                    return Err(Error::invalid(
                        "seedbank.e",
                        format!("has {} entries but seedbank.K has {}", e.len(), k.len()),
                    ));
                }
                k.iter().try_for_each(|&v| positive("seedbank.K", v))?;
                e.iter().try_for_each(|&v| positive("seedbank.e", v))
            }
            SeedBankSpec::Asymptotic {
                a,
                alpha,
                b,
                beta,
                truncation,
            } => {
                positive("seedbank.A", *a)?;
                positive("seedbank.B", *b)?;
                if !alpha.is_finite() || *alpha > 1.0 {
                    return Err(Error::invalid(
                        "seedbank.alpha",
                        "must satisfy alpha <= 1 (otherwise rho is finite; use an explicit spec)",
                    ));
                }
                if !beta.is_finite() || alpha + beta <= 1.0 {
                    return Err(Error::invalid(
                        "seedbank.beta",
                        "alpha + beta must exceed 1 so that chi = sum K_m e_m is finite",
                    ));
                }
                if *truncation == 0 {
                    return Err(Error::invalid("seedbank.truncation", "must be at least 1"));
                }
                Ok(())
            }
        }
    }

    /// `(α + β - 1)/β` for an asymptotic spec; `None` when `ρ < ∞`.
    pub fn gamma(&self) -> Option<f64> {
        match self {
            SeedBankSpec::Asymptotic { alpha, beta, .. } => Some((alpha + beta - 1.0) / beta),
            _ => None,
        }
    }

    pub fn colours(&self) -> Result<Colours> {
        self.validate()?;
        Ok(match self {
            SeedBankSpec::Single { k, e } => Colours::table(vec![*k], vec![*e]),
            SeedBankSpec::Explicit { k, e } => Colours::table(k.clone(), e.clone()),
            SeedBankSpec::Asymptotic {
                a,
                alpha,
                b,
                beta,
                truncation,
            } => Colours::PowerLaw {
                a: *a,
                alpha: *alpha,
                b: *b,
                beta: *beta,
                m: *truncation,
                zipf: Zipf::new(*truncation, alpha + beta).expect("validated"),
            },
        })
    }

    /// Candidate constants `C` in `P(τ > t) ~ C t^{-γ}`: the one stated with the
    /// wake-up remark, `A/(χβ) B^{1-γ} Γ(γ)`, and the one stated with the tail
    /// formula, `(A/β) B^{1-γ} γ Γ(γ)`.
    pub fn tail_constant_candidates(&self) -> Option<(f64, f64)> {
        let SeedBankSpec::Asymptotic { a, b, beta, .. } = self else {
            return None;
        };
        let g = self.gamma()?;
        let chi = self.colours().ok()?.chi_untruncated();
        let gg = statrs::function::gamma::gamma(g);
        Some((
            a / (chi * beta) * b.powf(1.0 - g) * gg,
            a / beta * b.powf(1.0 - g) * g * gg,
        ))
    }
}

/// Resolved colour table.
#[derive(Clone, Debug)]
pub enum Colours {
    Table {
        k: Vec<f64>,
        e: Vec<f64>,
        /// Cumulative `K_m e_m`.
        cum: Vec<f64>,
    },
    PowerLaw {
        a: f64,
        alpha: f64,
        b: f64,
        beta: f64,
        m: u64,
        zipf: Zipf<f64>,
    },
}

/// `ρ`: finite, or infinite with the truncated partial sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Rho {
    Finite(f64),
    Infinite { truncated: f64 },
}

impl Rho {
    pub fn is_finite(&self) -> bool {
        matches!(self, Rho::Finite(_))
    }

    /// The value used inside a truncated system.
    pub fn effective(&self) -> f64 {
        match *self {
            Rho::Finite(v) => v,
            Rho::Infinite { truncated } => truncated,
        }
    }
}

const EXACT_TERMS: u64 = 10_000;

/// `Σ_{k=1}^n k^{-s}`.
pub fn power_sum(s: f64, n: u64) -> f64 {
    let head = n.min(EXACT_TERMS);
    let mut sum: f64 = (1..=head).rev().map(|k| (k as f64).powf(-s)).sum();
    if n > head {
        sum += euler_maclaurin(s, head as f64, n as f64);
    }
    sum
}

/// `Σ_{k>n} k^{-s}` for `s > 1`.
pub fn power_tail(s: f64, n: u64) -> f64 {
    assert!(s > 1.0);
    let start = n.max(EXACT_TERMS);
    let mut sum: f64 = ((n + 1)..=start).rev().map(|k| (k as f64).powf(-s)).sum();
    let x = start as f64;
    sum += x.powf(1.0 - s) / (s - 1.0) - 0.5 * x.powf(-s) + s * x.powf(-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * x.powf(-s - 3.0) / 720.0;
    sum
}

/// `Σ_{k=a+1}^{b} k^{-s}` by Euler-Maclaurin; accurate for `a ≥ 10^4`.
fn euler_maclaurin(s: f64, a: f64, b: f64) -> f64 {
    let f = |x: f64| x.powf(-s);
    let f1 = |x: f64| -s * x.powf(-s - 1.0);
    let f3 = |x: f64| -s * (s + 1.0) * (s + 2.0) * x.powf(-s - 3.0);
    let integral = if (s - 1.0).abs() < 1e-15 {
        (b / a).ln()
    } else {
        (b.powf(1.0 - s) - a.powf(1.0 - s)) / (1.0 - s)
    };
    integral + 0.5 * (f(b) - f(a)) + (f1(b) - f1(a)) / 12.0 - (f3(b) - f3(a)) / 720.0
}

impl Colours {
    pub fn table(k: Vec<f64>, e: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cum = k
            .iter()
            .zip(&e)
            .map(|(k, e)| {
                acc += k * e;
                acc
            })
            .collect();
        Colours::Table { k, e, cum }
    }

    pub fn len(&self) -> u64 {
        match self {
            Colours::Table { k, .. } => k.len() as u64,
            Colours::PowerLaw { m, .. } => *m,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn k(&self, m: u64) -> f64 {
        match self {
            Colours::Table { k, .. } => k[m as usize],
            Colours::PowerLaw { a, alpha, .. } => a * ((m + 1) as f64).powf(-alpha),
        }
    }

    pub fn e(&self, m: u64) -> f64 {
        match self {
            Colours::Table { e, .. } => e[m as usize],
            Colours::PowerLaw { b, beta, .. } => b * ((m + 1) as f64).powf(-beta),
        }
    }

    /// Largest wake-up rate.
    pub fn max_e(&self) -> f64 {
        match self {
            Colours::Table { e, .. } => e.iter().cloned().fold(0.0, f64::max),
            Colours::PowerLaw { b, beta, m, .. } => {
                if *beta >= 0.0 {
                    *b
                } else {
                    b * (*m as f64).powf(-beta)
                }
            }
        }
    }

    /// `χ` of the truncated system.
    pub fn chi(&self) -> f64 {
        match self {
            Colours::Table { cum, .. } => *cum.last().expect("nonempty"),
            Colours::PowerLaw {
                a,
                alpha,
                b,
                beta,
                m,
                ..
            } => a * b * power_sum(alpha + beta, *m),
        }
    }

    /// Exchange mass `Σ_{m ≥ M} K_m e_m` dropped by truncation.
    pub fn neglected_mass(&self) -> f64 {
        match self {
            Colours::Table { .. } => 0.0,
            Colours::PowerLaw {
                a,
                alpha,
                b,
                beta,
                m,
                ..
            } => a * b * power_tail(alpha + beta, *m),
        }
    }

    pub fn chi_untruncated(&self) -> f64 {
        self.chi() + self.neglected_mass()
    }

    pub fn rho(&self) -> Rho {
        match self {
            Colours::Table { k, .. } => Rho::Finite(k.iter().sum()),
            Colours::PowerLaw { a, alpha, m, .. } => Rho::Infinite {
                truncated: a * power_sum(*alpha, *m),
            },
        }
    }

    /// Colour drawn with probability `K_m e_m / χ`.
    pub fn sample_colour<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Colours::Table { cum, .. } => {
                let u = rng.gen::<f64>() * cum[cum.len() - 1];
                cum.partition_point(|&c| c <= u).min(cum.len() - 1) as u64
            }
            Colours::PowerLaw { zipf, .. } => zipf.sample(rng) as u64 - 1,
        }
    }

    /// Materialise `(K_m, e_m)` for `m < len`, refusing tables longer than `limit`.
    pub fn to_vecs(&self, limit: u64) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.len() > limit {
            return Err(Error::invalid(
                "seedbank.truncation",
                format!(
                    "{} colours exceeds the limit of {limit} for this experiment",
                    self.len()
                ),
            ));
        }
        Ok((0..self.len()).map(|m| (self.k(m), self.e(m))).unzip())
    }
}

/// Law of a dormancy period: colour `m` w.p. `K_m e_m / χ`, then `Exp(e_m)`.
#[derive(Clone, Debug)]
pub struct WakeTimeLaw {
    colours: Colours,
    chi: f64,
}

impl WakeTimeLaw {
    pub fn new(colours: Colours) -> Self {
        let chi = colours.chi();
        WakeTimeLaw { colours, chi }
    }

    pub fn colours(&self) -> &Colours {
        &self.colours
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// Active period length `σ ~ Exp(χ)`.
    pub fn sample_sigma<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x: f64 = Exp1.sample(rng);
        x / self.chi
    }

    /// `(τ, colour)`.
    pub fn sample_tau<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, u64) {
        let m = self.colours.sample_colour(rng);
        let x: f64 = Exp1.sample(rng);
        (x / self.colours.e(m), m)
    }

    /// `E[τ] = ρ/χ` of the truncated law.
    pub fn mean(&self) -> f64 {
        self.colours.rho().effective() / self.chi
    }

    /// `P(τ > t) = Σ_m (K_m e_m / χ) e^{-e_m t}`.
    pub fn survival(&self, t: f64) -> f64 {
        let n = self.colours.len();
        let head = match self.colours {
            Colours::Table { .. } => n,
            Colours::PowerLaw { .. } => n.min(100_000),
        };
        let term = |m: f64| {
            // colour index as a real, for the midpoint integral of the remainder
            let (k, e) = match &self.colours {
                Colours::PowerLaw {
                    a, alpha, b, beta, ..
                } => (a * (m + 1.0).powf(-alpha), b * (m + 1.0).powf(-beta)),
                Colours::Table { .. } => unreachable!(),
            };
            k * e * (-e * t).exp()
        };
        let mut s: f64 = (0..head)
            .rev()
            .map(|m| {
                let e = self.colours.e(m);
                self.colours.k(m) * e * (-e * t).exp()
            })
            .sum();
        if n > head {
            // Smooth slowly varying summand: Σ_{m=head}^{n-1} f(m) ≈ ∫_{head-½}^{n-½} f.
            let (lo, hi) = ((head as f64 - 0.5).ln(), (n as f64 - 0.5).ln());
            let steps = 4000;
            let h = (hi - lo) / steps as f64;
            let mut acc = 0.0;
            for i in 0..=steps {
                let u = lo + i as f64 * h;
                let w = if i == 0 || i == steps {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * term(u.exp()) * u.exp();
            }
            s += acc * h / 3.0;
        }
        s / self.chi
    }
}

/// `θ = (x + Σ K_m y_m)/(1 + ρ)`. When `ρ = ∞` the truncated ratio is evaluated
/// at `M/8, M/4, M/2, M` colours and must settle.
pub fn theta_of(x: f64, y: &[f64], colours: &Colours) -> Result<f64> {
    if y.len() as u64 != colours.len() {
        return Err(Error::invalid(
            "state",
            format!("{} dormant entries for {} colours", y.len(), colours.len()),
        ));
    }
    if !(0.0..=1.0).contains(&x) || y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("state", "frequencies must lie in [0, 1]"));
    }
    let ratio = |upto: usize| {
        let (mut num, mut den) = (x, 1.0);
        for (m, &ym) in y.iter().enumerate().take(upto) {
            let k = colours.k(m as u64);
            num += k * ym;
            den += k;
        }
        num / den
    };
    match colours.rho() {
        Rho::Finite(_) => Ok(ratio(y.len())),
        Rho::Infinite { .. } => {
            let n = y.len();
            if n < 8 {
                return Err(Error::invalid(
                    "seedbank.truncation",
                    "need at least 8 colours for the limit",
                ));
            }
            let r: Vec<f64> = [n / 8, n / 4, n / 2, n].iter().map(|&u| ratio(u)).collect();
            let (d1, d2, d3) = (
                (r[1] - r[0]).abs(),
                (r[2] - r[1]).abs(),
                (r[3] - r[2]).abs(),
            );
            if d3 > 0.05 || d3 > d2.max(d1) + 1e-12 {
                return Err(Error::Numeric(format!(
                    "truncated density ratios {r:?} do not settle; the dormant profile is not colour regular"
                )));
            }
            Ok(r[3])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn asym(alpha: f64, beta: f64, m: u64) -> SeedBankSpec {
        SeedBankSpec::Asymptotic {
            a: 1.0,
            alpha,
            b: 1.0,
            beta,
            truncation: m,
        }
    }

    #[test]
    fn gamma_values() {
        assert_eq!(asym(0.0, 2.0, 10).gamma(), Some(0.5));
        assert_eq!(asym(0.5, 1.0, 10).gamma(), Some(0.5));
        assert_eq!(SeedBankSpec::Single { k: 1.0, e: 1.0 }.gamma(), None);
    }

    #[test]
    fn validation_names_fields() {
        let e = SeedBankSpec::Single { k: -1.0, e: 1.0 }
            .validate()
            .unwrap_err();
        assert!(e.to_string().contains("seedbank.K"));
        let e = asym(0.2, 0.5, 10).validate().unwrap_err();
        assert!(e.to_string().contains("chi"));
    }

    #[test]
    fn power_sums() {
        let direct: f64 = (1..=50_000u64).map(|k| (k as f64).powf(-1.5)).sum();
        assert!((power_sum(1.5, 50_000) - direct).abs() < 1e-10);
        let zeta2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((power_sum(2.0, 20) + power_tail(2.0, 20) - zeta2).abs() < 1e-12);
        let harmonic: f64 = (1..=30_000u64).map(|k| 1.0 / k as f64).sum();
        assert!((power_sum(1.0, 30_000) - harmonic).abs() < 1e-10);
    }

    #[test]
    fn single_colour_constants() {
        let c = SeedBankSpec::Single { k: 2.0, e: 0.5 }.colours().unwrap();
        assert_eq!(c.chi(), 1.0);
        assert_eq!(c.rho(), Rho::Finite(2.0));
        assert_eq!(WakeTimeLaw::new(c).mean(), 2.0);
    }

    #[test]
    fn zipf_colour_frequencies() {
        let c = asym(0.0, 2.0, 1000).colours().unwrap();
        let mut rng = stream(1, 0, 0);
        let n = 200_000;
        let zeros = (0..n).filter(|_| c.sample_colour(&mut rng) == 0).count();
        let p0 = c.k(0) * c.e(0) / c.chi();
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!(((zeros as f64 / n as f64) - p0).abs() < 4.0 * se);
    }

    #[test]
    fn survival_midpoint_remainder() {
        let law = WakeTimeLaw::new(asym(0.5, 1.0, 400_000).colours().unwrap());
        let c = law.colours();
        let t = 50.0;
        let direct: f64 = (0..400_000u64)
            .map(|m| c.k(m) * c.e(m) * (-c.e(m) * t).exp())
            .sum::<f64>()
            / law.chi();
        assert!((law.survival(t) - direct).abs() < 1e-9 * direct.max(1e-3));
    }

    #[test]
    fn theta_examples() {
        let single = SeedBankSpec::Single { k: 1.0, e: 1.0 }.colours().unwrap();
        assert_eq!(theta_of(0.0, &[1.0], &single).unwrap(), 0.5);
        assert_eq!(theta_of(1.0, &[1.0], &single).unwrap(), 1.0);
        let c = asym(0.5, 1.0, 1000).colours().unwrap();
        let y = vec![0.3; 1000];
        assert!((theta_of(0.3, &y, &c).unwrap() - 0.3).abs() < 1e-12);
        // Alternating blocks of doubling length never settle.
        let y: Vec<f64> = (0..1000)
            .map(|m| {
                if (m + 1usize).ilog2() % 2 == 0 {
                    0.0
                } else {
                    1.0
                }
            })
            .collect();
        assert!(theta_of(0.0, &y, &c).is_err());
    }
}
