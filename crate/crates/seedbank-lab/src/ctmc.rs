//! Sparse continuous-time Markov chain generators with transient, hitting-time
//! and stationary solvers.
//!
//! Transients use uniformization: `e^{tQ} = Σ_n Pois(Λt; n) P^n` with
//! `P = I + Q/Λ`. All terms are nonnegative, so there is no cancellation and
//! the truncation error is the neglected Poisson mass.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest system handed to the dense LU solver.
pub const DENSE_LIMIT: usize = 4000;

#[derive(Clone, Debug)]
pub struct SparseGenerator {
    /// Off-diagonal rates `(target, rate)` per row, merged and sorted.
    rows: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
}

impl SparseGenerator {
    pub fn new(states: usize) -> Self {
        SparseGenerator {
            rows: vec![Vec::new(); states],
            exit: vec![0.0; states],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Add `rate` to the `from → to` transition; self-loops are ignored.
    pub fn add(&mut self, from: usize, to: usize, rate: f64) {
        if from == to || rate == 0.0 {
            return;
        }
        let row = &mut self.rows[from];
        match row.binary_search_by_key(&to, |e| e.0) {
            Ok(i) => row[i].1 += rate,
            Err(i) => row.insert(i, (to, rate)),
        }
        self.exit[from] += rate;
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut q = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            q[(i, i)] = -self.exit[i];
            for &(j, r) in row {
                q[(i, j)] += r;
            }
        }
        q
    }

    fn uniform_rate(&self) -> f64 {
        self.exit.iter().cloned().fold(0.0, f64::max) * 1.02
    }

    /// `p0 e^{tQ}`: the law at time `t` from initial law `p0`.
    pub fn evolve_distribution(&self, p0: &[f64], t: f64) -> Vec<f64> {
        self.uniformize(p0, t, |v, out, lam| {
            for (j, o) in out.iter_mut().enumerate() {
                *o = v[j] * (1.0 - self.exit[j] / lam);
            }
            for (i, row) in self.rows.iter().enumerate() {
                if v[i] != 0.0 {
                    for &(j, r) in row {
                        out[j] += v[i] * r / lam;
                    }
                }
            }
        })
    }

    /// `e^{tQ} f`: the expectation of `f` at time `t` from every start state.
    pub fn evolve_function(&self, f: &[f64], t: f64) -> Vec<f64> {
        self.uniformize(f, t, |v, out, lam| {
            for (i, row) in self.rows.iter().enumerate() {
                let mut acc = v[i] * (1.0 - self.exit[i] / lam);
                for &(j, r) in row {
                    acc += r / lam * v[j];
                }
                out[i] = acc;
            }
        })
    }

    fn uniformize(&self, v0: &[f64], t: f64, step: impl Fn(&[f64], &mut [f64], f64)) -> Vec<f64> {
        assert_eq!(v0.len(), self.len());
        let lam = self.uniform_rate();
        if t == 0.0 || lam == 0.0 {
            return v0.to_vec();
        }
        // Keep Λ·Δt moderate so e^{-ΛΔt} never underflows.
        let pieces = (lam * t / 20.0).ceil().max(1.0) as usize;
        let dt = t / pieces as f64;
        let mean = lam * dt;
        let mut v = v0.to_vec();
        let mut term = vec![0.0; v.len()];
        let mut next = vec![0.0; v.len()];
        for _ in 0..pieces {
            let mut w = (-mean).exp();
            let mut mass = w;
            let mut acc: Vec<f64> = v.iter().map(|x| x * w).collect();
            term.copy_from_slice(&v);
            let mut n = 0usize;
            while 1.0 - mass > 1e-17 && n < 2000 {
                n += 1;
                step(&term, &mut next, lam);
                std::mem::swap(&mut term, &mut next);
                w *= mean / n as f64;
                mass += w;
                for (a, x) in acc.iter_mut().zip(&term) {
                    *a += w * x;
                }
            }
            v = acc;
        }
        v
    }

    /// Expected time to hit `target` from every state; `Numeric` error if some
    /// state cannot reach it.
    pub fn mean_hitting_time(&self, target: &[bool]) -> Result<Vec<f64>> {
        let n = self.len();
        assert_eq!(target.len(), n);
        let free: Vec<usize> = (0..n).filter(|&i| !target[i]).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = k;
        }
        let mut h = vec![0.0; n];
        if free.is_empty() {
            return Ok(h);
        }
        if free.len() <= DENSE_LIMIT {
            let m = free.len();
            let mut a = DMatrix::zeros(m, m);
            for (k, &i) in free.iter().enumerate() {
                a[(k, k)] = self.exit[i];
                for &(j, r) in &self.rows[i] {
                    if !target[j] {
                        a[(k, pos[j])] -= r;
                    }
                }
            }
            let sol = a
                .lu()
                .solve(&DVector::from_element(m, 1.0))
                .ok_or_else(|| {
                    Error::Numeric("target set is not reachable from every state".into())
                })?;
            for (k, &i) in free.iter().enumerate() {
                h[i] = sol[k];
            }
        } else {
            // Gauss-Seidel on h_i = (1 + Σ_j q_ij h_j) / q_i.
            for sweep in 0.. {
                let mut delta: f64 = 0.0;
                for &i in &free {
                    if self.exit[i] == 0.0 {
                        return Err(Error::Numeric(
                            "absorbing state outside the target set".into(),
                        ));
                    }
                    let s: f64 = self.rows[i].iter().map(|&(j, r)| r * h[j]).sum();
                    let new = (1.0 + s) / self.exit[i];
                    delta = delta.max((new - h[i]).abs() / new.max(1.0));
                    h[i] = new;
                }
                if delta < 1e-13 {
                    break;
                }
                if sweep > 1_000_000 {
                    return Err(Error::Numeric(
                        "hitting-time iteration did not converge".into(),
                    ));
                }
            }
        }
        if h.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Numeric(
                "target set is not reachable from every state".into(),
            ));
        }
        Ok(h)
    }

    /// Stationary law of an irreducible chain (dense solve).
    pub fn stationary(&self) -> Result<Vec<f64>> {
        let n = self.len();
        if n > DENSE_LIMIT {
            return Err(Error::StateSpaceOverflow { cap: DENSE_LIMIT });
        }
        let mut a = self.to_dense().transpose();
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::zeros(n);
        b[n - 1] = 1.0;
        let pi = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numeric("generator is not irreducible".into()))?;
        Ok(pi.iter().cloned().collect())
    }
}
