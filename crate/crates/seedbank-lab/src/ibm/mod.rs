//! Individual-based single-colony models: discrete Fisher-Wright with an
//! exchanging seed-bank, and the continuous-time Moran model with independent
//! switching.

mod moran;

pub use moran::{
    moran_first_moment_check, moran_fixed_point, moran_fixed_point_exact, moran_gillespie,
    moran_ode, moran_relaxation_rate, moran_to_seedbank_transform, MoranMomentReport, MoranParams,
    MoranPath, MoranState, SeedbankPath,
};

use std::collections::BTreeMap;

use nalgebra::Matrix2;
use num_rational::Ratio;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{DiffusionFunction, ForwardModel, Scratch, SystemState};
use crate::lattice::{Torus, WalkKernel};
use crate::rng::{replicate, tag};
use crate::seedbank::SeedBankSpec;
use crate::stats::{linear_fit, wasserstein1, Estimate, Welford};
use crate::system::{Model, SeedBankSystem};

/// `N` active and `M` dormant slots, `c` of each swapped per generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DiscreteColony {
    pub n: u64,
    pub m: u64,
    pub c: u64,
    /// ♥ among the active individuals.
    pub active: u64,
    /// ♥ among the dormant individuals.
    pub dormant: u64,
}

impl DiscreteColony {
    pub fn new(n: u64, m: u64, c: u64, active: u64, dormant: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::invalid("ibm.N", "population sizes must be positive"));
        }
        if c > n.min(m) {
            return Err(Error::invalid(
                "ibm.c",
                format!("exchange size {c} exceeds min(N, M) = {}", n.min(m)),
            ));
        }
        if active > n || dormant > m {
            return Err(Error::invalid(
                "ibm.initial",
                "♥ counts exceed the population sizes",
            ));
        }
        Ok(DiscreteColony {
            n,
            m,
            c,
            active,
            dormant,
        })
    }

    pub fn x(&self) -> f64 {
        self.active as f64 / self.n as f64
    }

    pub fn y(&self) -> f64 {
        self.dormant as f64 / self.m as f64
    }
}

/// One generation: `Z ~ Hyp(M, c, yM)` dormant ♥ wake up, `U ~ Bin(N−c, x)`
/// active offspring are ♥, `V ~ Bin(c, x)` new dormant individuals are ♥.
pub fn fw_step<R: Rng + ?Sized>(col: &DiscreteColony, rng: &mut R) -> DiscreteColony {
    let x = col.x();
    let z = if col.c == 0 {
        0
    } else {
        Hypergeometric::new(col.m, col.dormant, col.c)
            .expect("valid colony")
            .sample(rng)
    };
    let u = Binomial::new(col.n - col.c, x)
        .expect("x in [0,1]")
        .sample(rng);
    let v = Binomial::new(col.c, x).expect("x in [0,1]").sample(rng);
    DiscreteColony {
        active: u + z,
        dormant: col.dormant + v - z,
        ..*col
    }
}

pub type Rational = Ratio<i128>;

fn binom(n: u64, k: u64) -> i128 {
    if k > n {
        return 0;
    }
    let mut out: i128 = 1;
    for i in 0..k.min(n - k) as i128 {
        out = out * (n as i128 - i) / (i + 1);
    }
    out
}

fn binomial_pmf(n: u64, p: Rational, k: u64) -> Rational {
    let q = Rational::from_integer(1) - p;
    Rational::from_integer(binom(n, k)) * pow(p, k) * pow(q, n - k)
}

fn pow(p: Rational, k: u64) -> Rational {
    (0..k).fold(Rational::from_integer(1), |acc, _| acc * p)
}

/// Exact law of the next `(active, dormant)` counts, by enumerating `(Z, U, V)`.
/// Meant for oracle sizes (`N, M ≤ 8`).
pub fn fw_step_distribution(col: &DiscreteColony) -> Result<BTreeMap<(u64, u64), Rational>> {
    if col.n > 16 || col.m > 16 {
        return Err(Error::invalid(
            "ibm.N",
            "exact enumeration is limited to N, M ≤ 16",
        ));
    }
    let x = Rational::new(col.active as i128, col.n as i128);
    let total = binom(col.m, col.c);
    let mut out = BTreeMap::new();
    for z in 0..=col.c.min(col.dormant) {
        let pz = Rational::new(
            binom(col.dormant, z) * binom(col.m - col.dormant, col.c - z),
            total,
        );
        if pz == Rational::from_integer(0) {
            continue;
        }
        for u in 0..=col.n - col.c {
            let pu = binomial_pmf(col.n - col.c, x, u);
            for v in 0..=col.c {
                let p = pz * pu * binomial_pmf(col.c, x, v);
                if p != Rational::from_integer(0) {
                    *out.entry((u + z, col.dormant + v - z))
                        .or_insert(Rational::from_integer(0)) += p;
                }
            }
        }
    }
    Ok(out)
}

/// `E[active₁] = (N−c)x + c·y` and `E[dormant₁] = yM + c·x − c·y`, exactly.
pub fn fw_step_mean(col: &DiscreteColony) -> (Rational, Rational) {
    let x = Rational::new(col.active as i128, col.n as i128);
    let y = Rational::new(col.dormant as i128, col.m as i128);
    let c = Rational::from_integer(col.c as i128);
    let n = Rational::from_integer(col.n as i128);
    (
        (n - c) * x + c * y,
        Rational::from_integer(col.dormant as i128) + c * x - c * y,
    )
}

/// Parameters of the diffusion-limit sweep.
#[derive(Clone, Debug, Serialize)]
pub struct FwLimitConfig {
    pub n_sweep: Vec<u64>,
    /// `K = M/N`, held fixed; `K·N` must be an integer for every `N`.
    pub k_ratio: f64,
    pub c: u64,
    pub x0: f64,
    pub y0: f64,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Step of the limiting SDE.
    pub dt: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FwLimitPoint {
    pub n: u64,
    pub m: u64,
    pub steps: u64,
    /// Wasserstein-1 distance between the chain's and the SDE's laws of `x(t)`.
    pub w1: f64,
    pub chain_mean: Estimate,
    /// Exact mean of the chain from the linear recursion.
    pub chain_mean_exact: f64,
    /// `|chain_mean_exact − ode_mean|`.
    pub mean_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FwLimitReport {
    pub points: Vec<FwLimitPoint>,
    pub sde_mean: Estimate,
    /// `E[x(t)]` of the limiting drift ODE.
    pub ode_mean: f64,
    /// Slope of `ln mean_error` against `ln N`.
    pub mean_error_slope: f64,
}

/// Drift matrix of the limit: `x' = c(y−x)`, `y' = (c/K)(x−y)`.
fn limit_drift(c: f64, k: f64) -> Matrix2<f64> {
    Matrix2::new(-c, c, c / k, -c / k)
}

/// Discrete chain for `⌊N t⌋` generations against the single-colony SDE with
/// drift `c(y−x)`, `(c/K)(x−y)` and noise `√(x(1−x))`.
pub fn fw_diffusion_limit_check(cfg: &FwLimitConfig) -> Result<FwLimitReport> {
    if cfg.n_sweep.is_empty() {
        return Err(Error::invalid("ibm.nSweep", "must not be empty"));
    }
    if !(cfg.k_ratio > 0.0) || cfg.c == 0 || !(cfg.t >= 0.0) {
        return Err(Error::invalid("ibm", "need K > 0, c ≥ 1 and t ≥ 0"));
    }
    let k = cfg.k_ratio;
    let c = cfg.c as f64;
    // limiting SDE as a model-1 colony: K e = c, e = c/K
    let torus = Torus::new(1, 1)?;
    let sys = SeedBankSystem::from_spec(
        Model::One,
        WalkKernel::none(&torus),
        &SeedBankSpec::Single { k, e: c / k },
        vec![],
    )?;
    let model = ForwardModel::new(&sys)?;
    let g = DiffusionFunction::fisher_wright(1.0);
    model.check_dt(cfg.dt)?;
    let steps = (cfg.t / cfg.dt).ceil().max(1.0) as usize;
    let h = cfg.t / steps as f64;
    let mut sde: Vec<f64> = replicate(cfg.replicas, cfg.seed, tag::IBM_FW_LIMIT, |_, rng| {
        let mut s = SystemState::constant(1, 1, cfg.x0, cfg.y0);
        let mut scratch = Scratch::default();
        for _ in 0..steps {
            model.em_step(&mut s, &g, h, rng, &mut scratch);
        }
        s.x[0]
    });
    let sde_mean = {
        let mut w = Welford::default();
        sde.iter().for_each(|&v| w.push(v));
        w.estimate()
    };
    let ode_mean = ((limit_drift(c, k) * cfg.t).exp() * nalgebra::Vector2::new(cfg.x0, cfg.y0))[0];

    let mut points = Vec::new();
    for &n in &cfg.n_sweep {
        let m_f = k * n as f64;
        if (m_f - m_f.round()).abs() > 1e-9 {
            return Err(Error::invalid(
                "ibm.K",
                format!("K·N = {m_f} is not an integer for N = {n}"),
            ));
        }
        let m = m_f.round() as u64;
        let start = DiscreteColony::new(
            n,
            m,
            cfg.c,
            (cfg.x0 * n as f64).round() as u64,
            (cfg.y0 * m as f64).round() as u64,
        )?;
        let gens = (n as f64 * cfg.t).floor() as u64;
        let mut chain: Vec<f64> = replicate(
            cfg.replicas,
            cfg.seed.wrapping_add(n),
            tag::IBM_FW,
            |_, rng| {
                let mut col = start;
                for _ in 0..gens {
                    col = fw_step(&col, rng);
                }
                col.x()
            },
        );
        let mut w = Welford::default();
        chain.iter().for_each(|&v| w.push(v));
        // the chain's mean obeys v ← (I + A/N) v exactly
        let step = Matrix2::identity() + limit_drift(c, k) / n as f64;
        let exact = (step.pow(gens as u32) * nalgebra::Vector2::new(start.x(), start.y()))[0];
        let w1 = wasserstein1(&mut chain, &mut sde);
        points.push(FwLimitPoint {
            n,
            m,
            steps: gens,
            w1,
            chain_mean: w.estimate(),
            chain_mean_exact: exact,
            mean_error: (exact - ode_mean).abs(),
        });
    }
    let usable: Vec<&FwLimitPoint> = points.iter().filter(|p| p.mean_error > 0.0).collect();
    let mean_error_slope = if usable.len() >= 2 {
        let xs: Vec<f64> = usable.iter().map(|p| (p.n as f64).ln()).collect();
        let ys: Vec<f64> = usable.iter().map(|p| p.mean_error.ln()).collect();
        linear_fit(&xs, &ys).slope
    } else {
        f64::NAN
    };
    Ok(FwLimitReport {
        points,
        sde_mean,
        ode_mean,
        mean_error_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn no_exchange_freezes_the_bank() {
        let col = DiscreteColony::new(20, 10, 0, 7, 3).unwrap();
        let mut rng = stream(1, tag::IBM_FW, 0);
        for _ in 0..50 {
            let next = fw_step(&col, &mut rng);
            assert_eq!(next.dormant, 3);
        }
    }

    #[test]
    fn monomorphic_is_absorbing() {
        let col = DiscreteColony::new(12, 8, 3, 12, 8).unwrap();
        let mut rng = stream(2, tag::IBM_FW, 0);
        assert_eq!(fw_step(&col, &mut rng), col);
    }

    #[test]
    fn enumeration_is_a_distribution_with_exact_mean() {
        for (n, m, c, a, d) in [(4, 4, 1, 2, 2), (8, 5, 3, 3, 4), (6, 8, 6, 1, 7)] {
            let col = DiscreteColony::new(n, m, c, a, d).unwrap();
            let law = fw_step_distribution(&col).unwrap();
            let total: Rational = law.values().sum();
            assert_eq!(total, Rational::from_integer(1));
            let ea: Rational = law
                .iter()
                .map(|(&(x, _), p)| *p * Rational::from_integer(x as i128))
                .sum();
            let ed: Rational = law
                .iter()
                .map(|(&(_, y), p)| *p * Rational::from_integer(y as i128))
                .sum();
            assert_eq!((ea, ed), fw_step_mean(&col));
            assert!(law.keys().all(|&(x, y)| x <= n && y <= m));
        }
    }

    #[test]
    fn rejects_oversized_exchange() {
        assert!(DiscreteColony::new(4, 2, 3, 0, 0).is_err());
    }

    #[test]
    fn point_mass_start_has_zero_distance() {
        let r = fw_diffusion_limit_check(&FwLimitConfig {
            n_sweep: vec![10, 20],
            k_ratio: 1.0,
            c: 2,
            x0: 1.0,
            y0: 1.0,
            t: 0.5,
            replicas: 200,
            seed: 3,
            dt: 0.01,
        })
        .unwrap();
        assert!(r.points.iter().all(|p| p.w1 == 0.0));
    }
}
