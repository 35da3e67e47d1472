//! Finite tori, translation-invariant walk kernels and their Fourier symbols.
//!
//! A kernel stores only offsets from the origin, so `a(i, j) = a(0, j - i)`
//! holds by construction. The symbol `a(φ) = Σ_o a(0, o) e^{i φ·o}` is computed
//! once per kernel by FFT and cached; return probabilities are then sums over
//! the `L^d` torus frequencies.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{FftDirection, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest torus the library will build.
pub const MAX_SITES: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Torus {
    dim: usize,
    side: usize,
}

impl Torus {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("geometry.dim", "must be at least 1"));
        }
        if side == 0 {
            return Err(Error::invalid("geometry.side", "must be at least 1"));
        }
        let sites = (side as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if sites > MAX_SITES as u128 {
            return Err(Error::invalid(
                "geometry",
                format!("{side}^{dim} sites exceeds the limit of {MAX_SITES}"),
            ));
        }
        Ok(Torus { dim, side })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Coordinates of a site; coordinate 0 varies fastest.
    pub fn coords(&self, mut site: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            c.push(site % self.side);
            site /= self.side;
        }
        c
    }

    /// Site index of an integer vector, wrapping every coordinate.
    pub fn site(&self, coords: &[i64]) -> usize {
        assert_eq!(coords.len(), self.dim, "coordinate vector has wrong length");
        let l = self.side as i64;
        coords
            .iter()
            .rev()
            .fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(l) as usize)
    }

    pub fn add(&self, a: usize, b: usize) -> usize {
        self.combine(a, b, |x, y| (x + y) % self.side)
    }

    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.combine(a, b, |x, y| (x + self.side - y) % self.side)
    }

    pub fn neg(&self, a: usize) -> usize {
        self.sub(0, a)
    }

    fn combine(&self, mut a: usize, mut b: usize, op: impl Fn(usize, usize) -> usize) -> usize {
        if self.dim == 1 {
            return op(a, b);
        }
        let mut out = 0;
        let mut stride = 1;
        for _ in 0..self.dim {
            out += op(a % self.side, b % self.side) * stride;
            a /= self.side;
            b /= self.side;
            stride *= self.side;
        }
        out
    }

    /// Table `t[i] = i + offset` for every site.
    pub fn shift_table(&self, offset: usize) -> Vec<u32> {
        (0..self.sites())
            .map(|i| self.add(i, offset) as u32)
            .collect()
    }

    /// Squared Euclidean length of the shortest representative of `site`.
    pub fn norm_sq(&self, site: usize) -> f64 {
        self.coords(site)
            .into_iter()
            .map(|c| {
                let w = c.min(self.side - c) as f64;
                w * w
            })
            .sum()
    }
}

impl std::fmt::Display for Torus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(Z/{}Z)^{}", self.side, self.dim)
    }
}

/// Cached symbol of a kernel: `re[k] = totalRate - Re a(φ_k)`, `im[k] = Im a(φ_k)`.
#[derive(Debug)]
pub struct Symbol {
    pub re_gap: Vec<f64>,
    pub im: Vec<f64>,
    pub asymmetric: bool,
}

/// Translation-invariant jump rates on a torus.
#[derive(Clone, Debug)]
pub struct WalkKernel {
    torus: Torus,
    entries: Vec<(usize, f64)>,
    total: f64,
    symbol: OnceLock<Arc<Symbol>>,
}

impl WalkKernel {
    /// Build from `(offset, rate)` pairs. Offsets are wrapped onto the torus
    /// and merged; zero rates are dropped.
    pub fn from_offsets(torus: &Torus, entries: &[(Vec<i64>, f64)]) -> Result<Self> {
        let mut sites = Vec::with_capacity(entries.len());
        for (o, r) in entries {
            if o.len() != torus.dim() {
                return Err(Error::invalid(
                    "kernel",
                    format!(
                        "offset {o:?} has dimension {} but the torus has {}",
                        o.len(),
                        torus.dim()
                    ),
                ));
            }
            sites.push((torus.site(o), *r));
        }
        Self::from_sites(torus, sites)
    }

    pub fn from_sites(torus: &Torus, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut dense = std::collections::BTreeMap::new();
        for (o, r) in entries {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::invalid(
                    "kernel",
                    format!("rate {r} is not a finite nonnegative number"),
                ));
            }
            if o >= torus.sites() {
                return Err(Error::invalid(
                    "kernel",
                    format!("offset site {o} is off the torus"),
                ));
            }
            *dense.entry(o).or_insert(0.0) += r;
        }
        let entries: Vec<(usize, f64)> = dense.into_iter().filter(|&(_, r)| r > 0.0).collect();
        let total = entries.iter().map(|e| e.1).sum();
        Ok(WalkKernel {
            torus: torus.clone(),
            entries,
            total,
            symbol: OnceLock::new(),
        })
    }

    /// Nearest-neighbour walk with total jump rate `rate`, split evenly over the `2d` neighbours.
    pub fn simple_walk(torus: &Torus, rate: f64) -> Result<Self> {
        let d = torus.dim();
        let mut e = Vec::with_capacity(2 * d);
        for k in 0..d {
            for s in [1i64, -1] {
                let mut o = vec![0i64; d];
                o[k] = s;
                e.push((o, rate / (2 * d) as f64));
            }
        }
        Self::from_offsets(torus, &e)
    }

    /// Planar walk drifting towards `+e1 + e2`: rate `(1+η)/4` on `+e1, +e2`
    /// and `(1-η)/4` on `-e1, -e2`.
    pub fn drifted_2d(torus: &Torus, eta: f64) -> Result<Self> {
        if torus.dim() != 2 {
            return Err(Error::invalid(
                "kernel",
                "drifted_2d needs a 2-dimensional torus",
            ));
        }
        if !(0.0..1.0).contains(&eta) {
            return Err(Error::invalid("kernel.eta", "must lie in [0, 1)"));
        }
        let up = 0.25 * (1.0 + eta);
        let down = 0.25 * (1.0 - eta);
        Self::from_offsets(
            torus,
            &[
                (vec![1, 0], up),
                (vec![0, 1], up),
                (vec![-1, 0], down),
                (vec![0, -1], down),
            ],
        )
    }

    /// Symmetric 1-d probability kernel with `a(0, x) ∝ |x|^{-δ}` for `1 ≤ |x| ≤ L/2`.
    pub fn power_law_1d(torus: &Torus, delta: f64) -> Result<Self> {
        if torus.dim() != 1 {
            return Err(Error::invalid(
                "kernel",
                "power_law_1d needs a 1-dimensional torus",
            ));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("kernel.delta", "must be positive"));
        }
        let l = torus.side();
        if l < 2 {
            return Err(Error::invalid(
                "geometry.side",
                "power_law_1d needs at least 2 sites",
            ));
        }
        let half = l / 2;
        let mut e = Vec::with_capacity(l);
        for x in 1..=half {
            let w = (x as f64).powf(-delta);
            if 2 * x == l {
                e.push((x, w));
            } else {
                e.push((x, w));
                e.push((l - x, w));
            }
        }
        let total: f64 = e.iter().map(|p| p.1).sum();
        Self::from_sites(torus, e.into_iter().map(|(o, w)| (o, w / total)).collect())
    }

    /// Probability kernel concentrated on the zero offset (no displacement).
    pub fn point_mass(torus: &Torus) -> Self {
        Self::from_sites(torus, vec![(0, 1.0)]).expect("valid")
    }

    /// Kernel without any jumps.
    pub fn none(torus: &Torus) -> Self {
        Self::from_sites(torus, Vec::new()).expect("valid")
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    /// Nonzero `(offset site, rate)` pairs in increasing offset order.
    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn total_rate(&self) -> f64 {
        self.total
    }

    pub fn rate(&self, offset: usize) -> f64 {
        self.entries
            .binary_search_by_key(&offset, |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn is_normalized(&self) -> bool {
        (self.total - 1.0).abs() < 1e-12
    }

    /// Rates divided by the total rate.
    pub fn normalized(&self) -> Result<Self> {
        if self.total <= 0.0 {
            return Err(Error::invalid(
                "kernel",
                "cannot normalise a kernel with zero total rate",
            ));
        }
        let e = self
            .entries
            .iter()
            .map(|&(o, r)| (o, r / self.total))
            .collect();
        Self::from_sites(&self.torus, e)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.entries
            .iter()
            .all(|&(o, r)| (self.rate(self.torus.neg(o)) - r).abs() <= tol * self.total.max(1.0))
    }

    /// `½[a(0, o) + a(0, -o)]`.
    pub fn symmetrize(&self) -> Self {
        let mut e = Vec::with_capacity(2 * self.entries.len());
        for &(o, r) in &self.entries {
            e.push((o, 0.5 * r));
            e.push((self.torus.neg(o), 0.5 * r));
        }
        Self::from_sites(&self.torus, e).expect("rates stay valid")
    }

    /// True when the offsets generate the whole torus.
    pub fn is_irreducible(&self) -> bool {
        let t = &self.torus;
        if t.sites() == 1 {
            return true;
        }
        if t.dim() == 1 {
            let g = self.entries.iter().fold(t.side(), |g, &(o, _)| gcd(g, o));
            return g == 1;
        }
        let mut seen = vec![false; t.sites()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(s) = stack.pop() {
            for &(o, _) in &self.entries {
                let n = t.add(s, o);
                if !seen[n] {
                    seen[n] = true;
                    count += 1;
                    stack.push(n);
                }
            }
        }
        count == t.sites()
    }

    /// Fourier symbol on the torus frequencies, computed on first use.
    pub fn symbol(&self) -> Arc<Symbol> {
        self.symbol
            .get_or_init(|| Arc::new(compute_symbol(&self.torus, &self.entries, self.total)))
            .clone()
    }

    /// `a_t(0,0) = L^{-d} Σ_φ exp(-t[totalRate - a(φ)])`; the real part of the sum.
    pub fn return_probability(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 1.0;
        }
        let s = self.symbol();
        let n = s.re_gap.len() as f64;
        let sum = if s.asymmetric {
            chunked_sum(s.re_gap.len(), |k| {
                (-t * s.re_gap[k]).exp() * (t * s.im[k]).cos()
            })
        } else {
            chunked_sum(s.re_gap.len(), |k| (-t * s.re_gap[k]).exp())
        };
        sum / n
    }

    /// `a_t(0, j)` by full Fourier inversion.
    pub fn transition_probability(&self, t: f64, j: usize) -> f64 {
        let s = self.symbol();
        let t_ = &self.torus;
        let l = t_.side() as f64;
        let jc = t_.coords(j);
        let n = s.re_gap.len();
        let sum = chunked_sum(n, |k| {
            let kc = t_.coords(k);
            let phase: f64 = kc
                .iter()
                .zip(&jc)
                .map(|(&a, &b)| 2.0 * std::f64::consts::PI * (a * b) as f64 / l)
                .sum();
            let im = if s.asymmetric { s.im[k] } else { 0.0 };
            (-t * s.re_gap[k]).exp() * (t * im - phase).cos()
        });
        sum / n as f64
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Sum `f(0..n)` in fixed chunks so the result is independent of the thread count.
pub(crate) fn chunked_sum(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    const BLOCK: usize = 4096;
    if n <= BLOCK {
        return (0..n).map(&f).sum();
    }
    let parts: Vec<f64> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| (b * BLOCK..((b + 1) * BLOCK).min(n)).map(&f).sum())
        .collect();
    parts.iter().sum()
}

fn compute_symbol(torus: &Torus, entries: &[(usize, f64)], total: f64) -> Symbol {
    let n = torus.sites();
    let l = torus.side();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for &(o, r) in entries {
        buf[o].re += r;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft(l, FftDirection::Inverse);
    let mut line = vec![Complex64::new(0.0, 0.0); l];
    let mut stride = 1;
    for _ in 0..torus.dim() {
        let block = stride * l;
        for outer in 0..n / block {
            for inner in 0..stride {
                let base = outer * block + inner;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = buf[base + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    buf[base + j * stride] = *v;
                }
            }
        }
        stride = block;
    }
    let scale = total.max(1.0);
    let asymmetric = buf.iter().any(|z| z.im.abs() > 1e-12 * scale);
    Symbol {
        re_gap: buf.iter().map(|z| (total - z.re).max(0.0)).collect(),
        im: if asymmetric {
            buf.iter().map(|z| z.im).collect()
        } else {
            Vec::new()
        },
        asymmetric,
    }
}

/// `L^{-d} Σ_φ exp(-t[1 - â1(φ)]) exp(-t[1 - â2(φ)])` with each symbol divided by
/// its total rate; the return probability of the sum of the two walks.
pub fn convolved_return(k1: &WalkKernel, k2: &WalkKernel, t: f64) -> Result<f64> {
    if k1.torus() != k2.torus() {
        return Err(Error::TorusMismatch {
            left: k1.torus().to_string(),
            right: k2.torus().to_string(),
        });
    }
    if k1.total_rate() <= 0.0 || k2.total_rate() <= 0.0 {
        return Err(Error::invalid(
            "kernel",
            "convolution needs kernels with positive total rate",
        ));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let (s1, s2) = (k1.symbol(), k2.symbol());
    let (c1, c2) = (t / k1.total_rate(), t / k2.total_rate());
    let n = s1.re_gap.len();
    Ok(chunked_sum(n, |k| (-c1 * s1.re_gap[k] - c2 * s2.re_gap[k]).exp()) / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(l: usize) -> Torus {
        Torus::new(1, l).unwrap()
    }

    #[test]
    fn torus_group_laws() {
        let t = Torus::new(3, 5).unwrap();
        assert_eq!(t.sites(), 125);
        for a in [0, 7, 33, 124] {
            assert_eq!(t.add(a, 0), a);
            assert_eq!(t.add(a, t.neg(a)), 0);
            for b in [1, 58, 99] {
                assert_eq!(t.add(a, b), t.add(b, a));
                assert_eq!(t.add(t.add(a, b), 17), t.add(a, t.add(b, 17)));
                assert_eq!(t.sub(t.add(a, b), b), a);
            }
        }
        assert_eq!(t.site(&[-1, 0, 0]), 4);
        assert_eq!(t.coords(t.site(&[2, 3, 4])), vec![2, 3, 4]);
    }

    #[test]
    fn symmetrize_single_offset() {
        let t = line(10);
        let k = WalkKernel::from_offsets(&t, &[(vec![1], 1.0)]).unwrap();
        let s = k.symmetrize();
        assert_eq!(s.entries(), &[(1, 0.5), (9, 0.5)]);
        assert_eq!(s.symmetrize().entries(), s.entries());
    }

    #[test]
    fn symmetrize_drifted_walk() {
        let t = Torus::new(2, 8).unwrap();
        let s = WalkKernel::drifted_2d(&t, 0.5).unwrap().symmetrize();
        assert_eq!(s.entries().len(), 4);
        assert!(s.entries().iter().all(|&(_, r)| (r - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_site_return_probability() {
        let k = WalkKernel::simple_walk(&line(2), 1.0).unwrap();
        let exact = 0.5 * (1.0 + (-2.0f64).exp());
        assert!((k.return_probability(1.0) - exact).abs() < 1e-15);
        assert_eq!(k.return_probability(0.0), 1.0);
    }

    #[test]
    fn symbol_at_zero_is_total_rate() {
        let t = Torus::new(2, 6).unwrap();
        let k = WalkKernel::from_offsets(&t, &[(vec![1, 2], 0.3), (vec![-1, 0], 1.1)]).unwrap();
        let s = k.symbol();
        assert!(s.re_gap[0].abs() < 1e-14);
        assert!(s.asymmetric);
    }

    #[test]
    fn irreducibility() {
        let t = line(12);
        assert!(
            !WalkKernel::from_offsets(&t, &[(vec![2], 1.0), (vec![-2], 1.0)])
                .unwrap()
                .is_irreducible()
        );
        assert!(
            WalkKernel::from_offsets(&t, &[(vec![3], 1.0), (vec![4], 1.0)])
                .unwrap()
                .is_irreducible()
        );
        let p = Torus::new(2, 4).unwrap();
        assert!(WalkKernel::simple_walk(&p, 1.0).unwrap().is_irreducible());
        assert!(!WalkKernel::from_offsets(&p, &[(vec![1, 0], 1.0)])
            .unwrap()
            .is_irreducible());
    }

    #[test]
    fn power_law_is_normalised_and_symmetric() {
        let k = WalkKernel::power_law_1d(&line(64), 1.5).unwrap();
        assert!(k.is_normalized());
        assert!(k.is_symmetric(1e-15));
        assert!((k.rate(1) / k.rate(2) - 2f64.powf(1.5)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_tori_rejected() {
        let a = WalkKernel::simple_walk(&line(8), 1.0).unwrap();
        let b = WalkKernel::simple_walk(&line(9), 1.0).unwrap();
        assert!(matches!(
            convolved_return(&a, &b, 1.0),
            Err(Error::TorusMismatch { .. })
        ));
    }
}
