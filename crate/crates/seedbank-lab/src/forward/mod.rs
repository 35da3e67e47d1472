//! Euler–Maruyama integration of the seed-bank SSDEs on a torus.
//!
//! The active layer follows
//! `dx_i = Σ_j a(i,j)(x_j − x_i) dt + Σ_m K_m e_m Σ_j a_m(j,i)(y_{j,m} − x_i) dt + √g(x_i) dw_i`
//! and each dormant layer `dy_{i,m} = e_m Σ_j a_m(i,j)(x_j − y_{i,m}) dt`.
//! Models 1 and 2 are the point-mass case `a_m = δ_0`.

mod diffusion;
mod run;

pub use diffusion::DiffusionFunction;
pub use run::{
    coupled_simulate, simulate, theta_trajectory, CoupledSummary, ForwardRun, ForwardSummary,
    InitialCondition, Observable, TimeSeries,
};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::system::{EffSite, Layer, SeedBankSystem};

/// Colour tables larger than this are not materialised for the forward layer.
pub const FORWARD_COLOUR_LIMIT: u64 = 4096;

/// Stability guard on `dt` times the fastest rate.
pub const STABILITY_LIMIT: f64 = 0.1;

/// Active and dormant frequencies; `y` is site-major, `y[i·M + m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub colours: usize,
    pub t: f64,
}

impl SystemState {
    pub fn constant(sites: usize, colours: usize, x: f64, y: f64) -> Self {
        SystemState {
            x: vec![x; sites],
            y: vec![y; sites * colours],
            colours,
            t: 0.0,
        }
    }

    pub fn sites(&self) -> usize {
        self.x.len()
    }

    pub fn y(&self, site: usize, m: usize) -> f64 {
        self.y[site * self.colours + m]
    }

    pub fn get(&self, u: EffSite) -> f64 {
        match u.layer {
            Layer::Active => self.x[u.site],
            Layer::Dormant(m) => self.y(u.site, m as usize),
        }
    }

    pub fn set(&mut self, u: EffSite, v: f64) {
        match u.layer {
            Layer::Active => self.x[u.site] = v,
            Layer::Dormant(m) => self.y[u.site * self.colours + m as usize] = v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.len() != self.x.len() * self.colours {
            return Err(Error::invalid(
                "initial",
                "dormant layer shape does not match sites × colours",
            ));
        }
        if self
            .x
            .iter()
            .chain(&self.y)
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::invalid("initial", "frequencies must lie in [0,1]"));
        }
        Ok(())
    }
}

struct Displacement {
    /// `(i ↦ i+o, i ↦ i−o, a_m(0,o))` per support point.
    entries: Vec<(Vec<u32>, Vec<u32>, f64)>,
}

/// The forward dynamics of one [`SeedBankSystem`], with shift tables prebuilt.
pub struct ForwardModel {
    system: SeedBankSystem,
    sites: usize,
    k: Vec<f64>,
    e: Vec<f64>,
    ke: Vec<f64>,
    migration: Vec<(Vec<u32>, f64)>,
    /// Empty for models 1 and 2; else one shared entry or one per colour.
    displacement: Vec<Displacement>,
}

impl ForwardModel {
    pub fn new(system: &SeedBankSystem) -> Result<Self> {
        let torus = system.torus();
        let (k, e) = system.colours().to_vecs(FORWARD_COLOUR_LIMIT)?;
        let ke = k.iter().zip(&e).map(|(a, b)| a * b).collect();
        let migration = system
            .migration()
            .entries()
            .iter()
            .filter(|(o, _)| *o != 0)
            .map(|&(o, r)| (torus.shift_table(o), r))
            .collect();
        let mut displacement = Vec::new();
        if system.model() == crate::system::Model::Three {
            let shared = (0..k.len() as u64)
                .all(|m| std::ptr::eq(system.displacement(m), system.displacement(0)));
            let count = if shared { 1 } else { k.len() as u64 };
            for m in 0..count {
                let entries = system
                    .displacement(m)
                    .entries()
                    .iter()
                    .map(|&(o, p)| (torus.shift_table(o), torus.shift_table(torus.neg(o)), p))
                    .collect();
                displacement.push(Displacement { entries });
            }
        }
        Ok(ForwardModel {
            system: system.clone(),
            sites: torus.sites(),
            k,
            e,
            ke,
            migration,
            displacement,
        })
    }

    pub fn system(&self) -> &SeedBankSystem {
        &self.system
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn colours(&self) -> usize {
        self.k.len()
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn e(&self) -> &[f64] {
        &self.e
    }

    /// `Σ K_m` over the materialised colours.
    pub fn rho(&self) -> f64 {
        self.k.iter().sum()
    }

    /// Exchange rate `Σ_{m>M} K_m e_m` dropped by truncation.
    pub fn neglected_mass(&self) -> f64 {
        self.system.colours().neglected_mass()
    }

    fn displacement_of(&self, m: usize) -> Option<&Displacement> {
        match self.displacement.len() {
            0 => None,
            1 => Some(&self.displacement[0]),
            _ => Some(&self.displacement[m]),
        }
    }

    /// Drift of every coordinate, written into `dx` and `dy`.
    pub fn drift(&self, s: &SystemState, dx: &mut [f64], dy: &mut [f64]) {
        let nc = self.colours();
        for i in 0..self.sites {
            let xi = s.x[i];
            let mut a = 0.0;
            for (tab, r) in &self.migration {
                a += r * (s.x[tab[i] as usize] - xi);
            }
            for m in 0..nc {
                let idx = i * nc + m;
                match self.displacement_of(m) {
                    None => {
                        a += self.ke[m] * (s.y[idx] - xi);
                        dy[idx] = self.e[m] * (xi - s.y[idx]);
                    }
                    Some(d) => {
                        let (mut sy, mut sx) = (0.0, 0.0);
                        for (plus, minus, p) in &d.entries {
                            sy += p * s.y[minus[i] as usize * nc + m];
                            sx += p * s.x[plus[i] as usize];
                        }
                        a += self.ke[m] * (sy - xi);
                        dy[idx] = self.e[m] * (sx - s.y[idx]);
                    }
                }
            }
            dx[i] = a;
        }
    }

    /// Drift of a single coordinate.
    pub fn drift_at(&self, s: &SystemState, u: EffSite) -> f64 {
        let sys = &self.system;
        sys.lineage_rates(u)
            .into_iter()
            .map(|(v, r)| r * (s.get(v) - s.get(u)))
            .sum()
    }

    /// Time step used when the configuration leaves `dt` unset.
    pub fn default_dt(&self, g: &DiffusionFunction) -> f64 {
        let rate = self.system.migration().total_rate() + self.system.chi() + g.lipschitz();
        let dt = 0.01 / rate;
        dt.min(0.5 * STABILITY_LIMIT / self.system.max_rate())
    }

    /// Rejects steps with `dt·(rate) > 0.1`, where the rate is the larger of
    /// `totalRate + χ` and the fastest wake-up rate.
    pub fn check_dt(&self, dt: f64) -> Result<()> {
        let rate = self.system.max_rate();
        if !(dt > 0.0) || dt * rate > STABILITY_LIMIT {
            return Err(Error::Stability {
                dt,
                rate,
                product: dt * rate,
            });
        }
        Ok(())
    }

    /// One Euler–Maruyama step driven by the standard normals `xi` (one per
    /// site). Returns the number of clamped coordinates.
    pub fn em_step_with_noise(
        &self,
        s: &mut SystemState,
        g: &DiffusionFunction,
        dt: f64,
        xi: &[f64],
        scratch: &mut Scratch,
    ) -> usize {
        scratch.resize(self.sites, self.colours());
        self.drift(s, &mut scratch.dx, &mut scratch.dy);
        let sq = dt.sqrt();
        let mut clamps = 0;
        for i in 0..self.sites {
            let noise = g.eval(s.x[i]).max(0.0).sqrt() * sq * xi[i];
            let v = s.x[i] + scratch.dx[i] * dt + noise;
            s.x[i] = clamp_count(v, &mut clamps);
        }
        for (y, d) in s.y.iter_mut().zip(&scratch.dy) {
            *y = clamp_count(*y + d * dt, &mut clamps);
        }
        s.t += dt;
        clamps
    }

    pub fn em_step<R: Rng + ?Sized>(
        &self,
        s: &mut SystemState,
        g: &DiffusionFunction,
        dt: f64,
        rng: &mut R,
        scratch: &mut Scratch,
    ) -> usize {
        let mut xi = std::mem::take(&mut scratch.xi);
        xi.clear();
        xi.extend((0..self.sites).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let c = self.em_step_with_noise(s, g, dt, &xi, scratch);
        scratch.xi = xi;
        c
    }

    /// Volume average of `(x_i + Σ K_m y_{i,m}) / (1 + Σ K_m)`.
    pub fn theta(&self, s: &SystemState) -> f64 {
        let nc = self.colours();
        let mut total = 0.0;
        for i in 0..self.sites {
            let mut v = s.x[i];
            for m in 0..nc {
                v += self.k[m] * s.y[i * nc + m];
            }
            total += v;
        }
        total / (self.sites as f64 * (1.0 + self.rho()))
    }

    /// `(Gf)(s)` with the Itô convention `½ g ∂²` on active coordinates.
    pub fn generator_apply(
        &self,
        g: &DiffusionFunction,
        f: &dyn TestFunction,
        s: &SystemState,
    ) -> f64 {
        let mut out = 0.0;
        for u in f.support() {
            out += self.drift_at(s, u) * f.d1(s, u);
            if u.layer == Layer::Active {
                out += 0.5 * g.eval(s.x[u.site]) * f.d2(s, u);
            }
        }
        out
    }
}

fn clamp_count(v: f64, clamps: &mut usize) -> f64 {
    if v < 0.0 {
        *clamps += 1;
        0.0
    } else if v > 1.0 {
        *clamps += 1;
        1.0
    } else {
        v
    }
}

/// Reusable buffers for [`ForwardModel::em_step`].
#[derive(Default)]
pub struct Scratch {
    dx: Vec<f64>,
    dy: Vec<f64>,
    xi: Vec<f64>,
}

impl Scratch {
    fn resize(&mut self, sites: usize, colours: usize) {
        self.dx.resize(sites, 0.0);
        self.dy.resize(sites * colours, 0.0);
    }
}

/// A smooth function of finitely many coordinates.
pub trait TestFunction {
    fn value(&self, s: &SystemState) -> f64;
    /// Coordinates the function depends on, without repeats.
    fn support(&self) -> Vec<EffSite>;
    fn d1(&self, s: &SystemState, u: EffSite) -> f64;
    /// Pure second derivative `∂²f/∂u²`; mixed partials never enter the
    /// generator because the noises are independent.
    fn d2(&self, s: &SystemState, u: EffSite) -> f64;
}

/// `∏ z_u^{p_u}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    factors: Vec<(EffSite, u32)>,
}

impl Monomial {
    /// Merges repeated coordinates and drops zero powers.
    pub fn new(factors: &[(EffSite, u32)]) -> Self {
        let mut v: Vec<(EffSite, u32)> = Vec::new();
        for &(u, p) in factors {
            match v.iter_mut().find(|(w, _)| *w == u) {
                Some(e) => e.1 += p,
                None => v.push((u, p)),
            }
        }
        v.retain(|f| f.1 > 0);
        v.sort();
        Monomial { factors: v }
    }

    pub fn factors(&self) -> &[(EffSite, u32)] {
        &self.factors
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|f| f.1).sum()
    }

    fn product_except(&self, s: &SystemState, skip: EffSite) -> f64 {
        self.factors
            .iter()
            .filter(|f| f.0 != skip)
            .map(|&(u, p)| s.get(u).powi(p as i32))
            .product()
    }

    fn power(&self, u: EffSite) -> u32 {
        self.factors.iter().find(|f| f.0 == u).map_or(0, |f| f.1)
    }
}

impl TestFunction for Monomial {
    fn value(&self, s: &SystemState) -> f64 {
        self.factors
            .iter()
            .map(|&(u, p)| s.get(u).powi(p as i32))
            .product()
    }

    fn support(&self) -> Vec<EffSite> {
        self.factors.iter().map(|f| f.0).collect()
    }

    fn d1(&self, s: &SystemState, u: EffSite) -> f64 {
        let p = self.power(u);
        if p == 0 {
            return 0.0;
        }
        p as f64 * s.get(u).powi(p as i32 - 1) * self.product_except(s, u)
    }

    fn d2(&self, s: &SystemState, u: EffSite) -> f64 {
        let p = self.power(u);
        if p < 2 {
            return 0.0;
        }
        (p * (p - 1)) as f64 * s.get(u).powi(p as i32 - 2) * self.product_except(s, u)
    }
}
