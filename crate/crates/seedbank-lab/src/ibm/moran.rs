//! Moran model with independent switching between active and dormant states.
//!
//! Each active individual resamples at rate 1, falls dormant in colour `m`
//! at rate `ε_m = c^A_m/N`, and a colour-`m` dormant individual wakes at rate
//! `δ_m = c^D_m/N`. Times in this module are in units of `N` events, so the
//! limit is taken on paths `Z(N s)/N`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::Rational;
use crate::error::{Error, Result};
use crate::forward::SystemState;
use crate::lattice::{Torus, WalkKernel};
use crate::rng::{replicate_reduce, tag};
use crate::seedbank::SeedBankSpec;
use crate::stats::{Estimate, Welford};
use crate::system::{EffSite, Model, SeedBankSystem};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MoranParams {
    pub n: u64,
    pub c_a: Vec<f64>,
    pub c_d: Vec<f64>,
}

impl MoranParams {
    pub fn new(n: u64, c_a: Vec<f64>, c_d: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("moran.N", "must be positive"));
        }
        if c_a.is_empty() || c_a.len() != c_d.len() {
            return Err(Error::invalid(
                "moran.cA",
                "need one (cA, cD) pair per colour",
            ));
        }
        if c_a.iter().chain(&c_d).any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid(
                "moran.cA",
                "rates must be positive and finite",
            ));
        }
        Ok(MoranParams { n, c_a, c_d })
    }

    pub fn colours(&self) -> usize {
        self.c_a.len()
    }

    /// `K_m = c^A_m / c^D_m`.
    pub fn k(&self) -> Vec<f64> {
        self.c_a.iter().zip(&self.c_d).map(|(a, d)| a / d).collect()
    }

    /// `1 + Σ K_m`, the time and scale factor of the variable change.
    pub fn scale(&self) -> f64 {
        1.0 + self.k().iter().sum::<f64>()
    }

    /// `e_m = c^D_m / (1 + Σ K_n)`.
    pub fn e(&self) -> Vec<f64> {
        let s = self.scale();
        self.c_d.iter().map(|d| d / s).collect()
    }
}

/// Counts: ♥ active `x`, ♥ dormant `y_m`, dormant sizes `z_d_m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MoranState {
    pub x: u64,
    pub y: Vec<u64>,
    pub z_d: Vec<u64>,
}

impl MoranState {
    pub fn validate(&self, p: &MoranParams) -> Result<()> {
        if self.y.len() != p.colours() || self.z_d.len() != p.colours() {
            return Err(Error::invalid(
                "moran.initial",
                "one dormant count per colour",
            ));
        }
        let dormant: u64 = self.z_d.iter().sum();
        if dormant > p.n
            || self.x > p.n - dormant
            || self.y.iter().zip(&self.z_d).any(|(y, z)| y > z)
        {
            return Err(Error::invalid(
                "moran.initial",
                "need X ≤ Z_A, Y_m ≤ Z_Dm and Σ Z ≤ N",
            ));
        }
        Ok(())
    }

    pub fn z_a(&self, n: u64) -> u64 {
        n - self.z_d.iter().sum::<u64>()
    }
}

/// Fractions of `N` along a path, at scaled times.
#[derive(Clone, Debug, Serialize)]
pub struct MoranPath {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    /// `[time][colour]`.
    pub y: Vec<Vec<f64>>,
    pub z_a: Vec<f64>,
    pub z_d: Vec<Vec<f64>>,
}

/// Exact simulation, recording at the scaled times `times` (nondecreasing).
pub fn moran_gillespie<R: Rng + ?Sized>(
    p: &MoranParams,
    initial: &MoranState,
    times: &[f64],
    rng: &mut R,
) -> Result<MoranPath> {
    initial.validate(p)?;
    let n = p.n;
    let nf = n as f64;
    let eps: Vec<f64> = p.c_a.iter().map(|c| c / nf).collect();
    let del: Vec<f64> = p.c_d.iter().map(|c| c / nf).collect();
    let mc = p.colours();
    let mut s = initial.clone();
    let mut now = 0.0;
    let mut path = MoranPath {
        times: times.to_vec(),
        x: Vec::with_capacity(times.len()),
        y: Vec::with_capacity(times.len()),
        z_a: Vec::with_capacity(times.len()),
        z_d: Vec::with_capacity(times.len()),
    };
    let mut rates = vec![0.0; 2 + 4 * mc];
    for &target in times {
        let t_end = target * nf;
        loop {
            let za = s.z_a(n);
            let hollow = (za - s.x) as f64;
            let resample = if za > 0 {
                hollow * s.x as f64 / za as f64
            } else {
                0.0
            };
            rates[0] = resample;
            rates[1] = resample;
            for m in 0..mc {
                rates[2 + 4 * m] = eps[m] * s.x as f64;
                rates[3 + 4 * m] = del[m] * s.y[m] as f64;
                rates[4 + 4 * m] = eps[m] * hollow;
                rates[5 + 4 * m] = del[m] * (s.z_d[m] - s.y[m]) as f64;
            }
            let total: f64 = rates.iter().sum();
            if total <= 0.0 {
                now = t_end;
                break;
            }
            let wait: f64 = Exp1.sample(rng);
            if now + wait / total > t_end {
                now = t_end;
                break;
            }
            now += wait / total;
            let mut u = rng.gen::<f64>() * total;
            let mut k = rates.len() - 1;
            for (i, &r) in rates.iter().enumerate() {
                if u < r {
                    k = i;
                    break;
                }
                u -= r;
            }
            // rounding can land on a zero rate at the end of the scan
            while rates[k] == 0.0 {
                k -= 1;
            }
            match k {
                0 => s.x += 1,
                1 => s.x -= 1,
                _ => {
                    let m = (k - 2) / 4;
                    match (k - 2) % 4 {
                        0 => {
                            s.x -= 1;
                            s.y[m] += 1;
                            s.z_d[m] += 1;
                        }
                        1 => {
                            s.x += 1;
                            s.y[m] -= 1;
                            s.z_d[m] -= 1;
                        }
                        2 => s.z_d[m] += 1,
                        _ => s.z_d[m] -= 1,
                    }
                }
            }
        }
        path.x.push(s.x as f64 / nf);
        path.y.push(s.y.iter().map(|&v| v as f64 / nf).collect());
        path.z_a.push(s.z_a(n) as f64 / nf);
        path.z_d
            .push(s.z_d.iter().map(|&v| v as f64 / nf).collect());
    }
    Ok(path)
}

/// Linear system `z' = A z` on `(z_A, z_D0, …)`; the same matrix drives the
/// first moments of `(x, y_m)`.
fn switching_matrix(p: &MoranParams) -> DMatrix<f64> {
    let mc = p.colours();
    let mut a = DMatrix::zeros(mc + 1, mc + 1);
    for m in 0..mc {
        a[(0, 0)] -= p.c_a[m];
        a[(0, m + 1)] += p.c_d[m];
        a[(m + 1, 0)] += p.c_a[m];
        a[(m + 1, m + 1)] -= p.c_d[m];
    }
    a
}

/// `z(t) = e^{tA} z₀` at each time.
pub fn moran_ode(p: &MoranParams, z0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    if z0.len() != p.colours() + 1 {
        return Err(Error::invalid(
            "moran.z0",
            "need z_A followed by one z_D per colour",
        ));
    }
    let a = switching_matrix(p);
    let v = DVector::from_column_slice(z0);
    Ok(times
        .iter()
        .map(|&t| ((&a * t).exp() * &v).as_slice().to_vec())
        .collect())
}

/// `z_A = 1/(1 + Σ K_m)`, `z_Dm = K_m z_A`.
pub fn moran_fixed_point(p: &MoranParams) -> Vec<f64> {
    let s = p.scale();
    std::iter::once(1.0 / s)
        .chain(p.k().iter().map(|k| k / s))
        .collect()
}

/// The fixed point in exact arithmetic.
pub fn moran_fixed_point_exact(c_a: &[Rational], c_d: &[Rational]) -> Result<Vec<Rational>> {
    if c_a.is_empty()
        || c_a.len() != c_d.len()
        || c_a
            .iter()
            .chain(c_d)
            .any(|c| *c <= Rational::from_integer(0))
    {
        return Err(Error::invalid(
            "moran.cA",
            "need positive rates, one pair per colour",
        ));
    }
    let k: Vec<Rational> = c_a.iter().zip(c_d).map(|(a, d)| a / d).collect();
    let s = k.iter().fold(Rational::from_integer(1), |acc, v| acc + v);
    Ok(std::iter::once(s.recip())
        .chain(k.iter().map(|v| v / s))
        .collect())
}

/// Smallest nonzero `|λ|` of the switching matrix: the exponential rate at
/// which `z` reaches its fixed point. The single-individual chain is
/// reversible, so symmetrising by the fixed point gives a symmetric matrix.
pub fn moran_relaxation_rate(p: &MoranParams) -> f64 {
    let a = switching_matrix(p);
    let pi = moran_fixed_point(p);
    let n = pi.len();
    let sym = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * (pi[j] / pi[i]).sqrt());
    let sym = (&sym + sym.transpose()) * 0.5;
    let scale = a.amax();
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|l| l.abs())
        .filter(|l| *l > 1e-10 * scale)
        .fold(f64::INFINITY, f64::min)
}

/// A Moran path rewritten in seed-bank variables.
#[derive(Clone, Debug, Serialize)]
pub struct SeedbankPath {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub k: Vec<f64>,
    pub e: Vec<f64>,
    /// Set when some recorded `z` is further than `tol` from the fixed point.
    pub transient_warning: Option<String>,
}

/// `x̄(t) = S x(t/S)`, `ȳ_m(t) = S (c^D_m/c^A_m) y_m(t/S)` with `S = 1 + Σ K_m`.
pub fn moran_to_seedbank_transform(path: &MoranPath, p: &MoranParams, tol: f64) -> SeedbankPath {
    let s = p.scale();
    let k = p.k();
    let star = moran_fixed_point(p);
    let worst = path
        .z_a
        .iter()
        .zip(&path.z_d)
        .map(|(za, zd)| {
            std::iter::once((za - star[0]).abs())
                .chain(zd.iter().zip(&star[1..]).map(|(z, zs)| (z - zs).abs()))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    SeedbankPath {
        times: path.times.iter().map(|t| t * s).collect(),
        x: path.x.iter().map(|x| s * x).collect(),
        y: path
            .y
            .iter()
            .map(|ys| ys.iter().zip(&k).map(|(y, k)| s / k * y).collect())
            .collect(),
        k,
        e: p.e(),
        transient_warning: (worst > tol).then(|| {
            format!("population sizes still {worst:.3} away from equilibrium (tolerance {tol})")
        }),
    }
}

/// Transformed Moran means against the seed-bank first-moment kernel.
#[derive(Clone, Debug, Serialize)]
pub struct MoranMomentReport {
    /// Seed-bank times `S·s`.
    pub times: Vec<f64>,
    pub x: Vec<Estimate>,
    /// `[time][colour]`.
    pub y: Vec<Vec<Estimate>>,
    pub kernel_x: Vec<f64>,
    pub kernel_y: Vec<Vec<f64>>,
    /// Largest `|MC − kernel| / SE` over all coordinates and times.
    pub max_abs_z: f64,
    pub transient_warning: Option<String>,
}

#[derive(Clone)]
struct Sums(Vec<Welford>);

impl crate::rng::Merge for Sums {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
    }
}

/// Runs `replicas` Moran paths from `initial`, transforms them and compares
/// the means with the single-colony seed-bank kernel (model 1 for one colour,
/// model 2 otherwise) with `K_m = c^A_m/c^D_m`, `e_m = c^D_m/S`.
pub fn moran_first_moment_check(
    p: &MoranParams,
    initial: &MoranState,
    times: &[f64],
    replicas: usize,
    seed: u64,
    tol: f64,
) -> Result<MoranMomentReport> {
    initial.validate(p)?;
    let mc = p.colours();
    let width = 1 + mc;
    let mut warning = None;
    let acc = replicate_reduce(
        replicas,
        seed,
        tag::IBM_MORAN,
        || Sums(vec![Welford::default(); times.len() * width]),
        |acc, _, rng| {
            let path = moran_gillespie(p, initial, times, rng).expect("validated");
            let tr = moran_to_seedbank_transform(&path, p, f64::INFINITY);
            for k in 0..times.len() {
                acc.0[k * width].push(tr.x[k]);
                for m in 0..mc {
                    acc.0[k * width + 1 + m].push(tr.y[k][m]);
                }
            }
        },
    );
    // the mean sizes follow the ODE, which is what decides the transient
    let nf = p.n as f64;
    let z0: Vec<f64> = std::iter::once(initial.z_a(p.n) as f64 / nf)
        .chain(initial.z_d.iter().map(|&z| z as f64 / nf))
        .collect();
    let star = moran_fixed_point(p);
    for (t, z) in times.iter().zip(moran_ode(p, &z0, times)?) {
        let gap = z
            .iter()
            .zip(&star)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap > tol {
            warning = Some(format!(
                "mean population sizes {gap:.3} from equilibrium at s = {t}"
            ));
            break;
        }
    }
    let sb = if mc == 1 {
        SeedBankSpec::Single {
            k: p.k()[0],
            e: p.e()[0],
        }
    } else {
        SeedBankSpec::Explicit { k: p.k(), e: p.e() }
    };
    let torus = Torus::new(1, 1)?;
    let model = if mc == 1 { Model::One } else { Model::Two };
    let sys = SeedBankSystem::from_spec(model, WalkKernel::none(&torus), &sb, vec![])?;
    let s = p.scale();
    let k = p.k();
    let start = SystemState {
        x: vec![s * initial.x as f64 / nf],
        y: initial
            .y
            .iter()
            .zip(&k)
            .map(|(&y, k)| s / k * y as f64 / nf)
            .collect(),
        colours: mc,
        t: 0.0,
    };
    let seed_times: Vec<f64> = times.iter().map(|t| t * s).collect();
    let kernel = crate::duality::first_moment_oracle(&sys, &start, &seed_times)?;
    let mut report = MoranMomentReport {
        times: seed_times,
        x: Vec::new(),
        y: Vec::new(),
        kernel_x: Vec::new(),
        kernel_y: Vec::new(),
        max_abs_z: 0.0,
        transient_warning: warning,
    };
    for (kk, row) in kernel.iter().enumerate() {
        let x = acc.0[kk * width].estimate();
        let kx = row[sys.eff_index(EffSite::active(0))];
        report.max_abs_z = report.max_abs_z.max(x.z_score(&Estimate::exact(kx)).abs());
        let mut ys = Vec::new();
        let mut kys = Vec::new();
        for m in 0..mc {
            let y = acc.0[kk * width + 1 + m].estimate();
            let ky = row[sys.eff_index(EffSite::dormant(0, m as u64))];
            report.max_abs_z = report.max_abs_z.max(y.z_score(&Estimate::exact(ky)).abs());
            ys.push(y);
            kys.push(ky);
        }
        report.x.push(x);
        report.kernel_x.push(kx);
        report.y.push(ys);
        report.kernel_y.push(kys);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tag};

    #[test]
    fn all_hearts_stay_hearts() {
        let p = MoranParams::new(30, vec![1.0, 2.0], vec![0.5, 3.0]).unwrap();
        let s = MoranState {
            x: 20,
            y: vec![6, 4],
            z_d: vec![6, 4],
        };
        let mut rng = stream(1, tag::IBM_MORAN, 0);
        let path = moran_gillespie(&p, &s, &[0.5, 1.0, 3.0], &mut rng).unwrap();
        for i in 0..3 {
            assert!((path.x[i] - path.z_a[i]).abs() < 1e-15);
            for m in 0..2 {
                assert!((path.y[i][m] - path.z_d[i][m]).abs() < 1e-15);
            }
            let total = path.z_a[i] + path.z_d[i].iter().sum::<f64>();
            assert!((total - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_rates_split_evenly() {
        let p = MoranParams::new(10, vec![1.7], vec![1.7]).unwrap();
        assert_eq!(moran_fixed_point(&p), vec![0.5, 0.5]);
    }

    #[test]
    fn exact_two_colour_fixed_point() {
        let r = |v: i128| Rational::from_integer(v);
        let z = moran_fixed_point_exact(&[r(1), r(3)], &[r(2), r(4)]).unwrap();
        assert_eq!(
            z,
            vec![
                Rational::new(4, 9),
                Rational::new(2, 9),
                Rational::new(3, 9)
            ]
        );
    }

    #[test]
    fn fixed_point_balances_and_is_stationary() {
        let p = MoranParams::new(10, vec![1.0, 3.0], vec![2.0, 4.0]).unwrap();
        let z = moran_fixed_point(&p);
        for m in 0..2 {
            assert!((p.c_a[m] * z[0] - p.c_d[m] * z[m + 1]).abs() < 1e-15);
        }
        let later = moran_ode(&p, &z, &[3.0]).unwrap();
        for (a, b) in later[0].iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_colour_relaxation_rate() {
        let p = MoranParams::new(10, vec![2.0], vec![1.0]).unwrap();
        assert!((moran_relaxation_rate(&p) - 3.0).abs() < 1e-12);
        // z_A(t) − z* = (z₀ − z*) e^{−3t}
        let z = moran_ode(&p, &[1.0, 0.0], &[0.7]).unwrap();
        assert!((z[0][0] - 1.0 / 3.0 - (2.0 / 3.0) * (-2.1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn seedbank_parameters_from_rates() {
        let p = MoranParams::new(10, vec![2.0], vec![1.0]).unwrap();
        assert_eq!(p.k(), vec![2.0]);
        assert!((p.e()[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_one_maps_to_constant_one() {
        let p = MoranParams::new(9, vec![1.0, 3.0], vec![2.0, 4.0]).unwrap();
        let z = moran_fixed_point(&p);
        let path = MoranPath {
            times: vec![0.0, 1.0],
            x: vec![z[0]; 2],
            y: vec![vec![z[1], z[2]]; 2],
            z_a: vec![z[0]; 2],
            z_d: vec![vec![z[1], z[2]]; 2],
        };
        let out = moran_to_seedbank_transform(&path, &p, 1e-9);
        assert!(out.transient_warning.is_none());
        for i in 0..2 {
            assert!((out.x[i] - 1.0).abs() < 1e-14);
            assert!(out.y[i].iter().all(|y| (y - 1.0).abs() < 1e-14));
        }
        assert!((out.times[1] - 2.25).abs() < 1e-15);
    }

    #[test]
    fn transient_is_flagged() {
        let p = MoranParams::new(10, vec![1.0], vec![1.0]).unwrap();
        let path = MoranPath {
            times: vec![0.0],
            x: vec![0.9],
            y: vec![vec![0.1]],
            z_a: vec![0.9],
            z_d: vec![vec![0.1]],
        };
        assert!(moran_to_seedbank_transform(&path, &p, 0.05)
            .transient_warning
            .is_some());
    }
}
