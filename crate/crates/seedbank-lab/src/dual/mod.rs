//! The block-counting dual: lineages on effective sites that migrate while
//! active, fall dormant with a random colour, wake up, and pairwise coalesce
//! at rate `d` when active at the same site.
//!
//! The state is stored as a list of lineages. Counts `L_u` are recovered on
//! demand; the duality function `∏_u z_u^{L_u}` is a product over the list.

mod oracle;
mod wake;

pub use oracle::DualOracle;
pub use wake::{
    activity_asymptotics, sample_taus, tau_tail_fit, ActivityPoint, ActivitySummary, TailFit,
};

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{replicate, replicate_reduce, tag};
use crate::stats::{Estimate, Welford};
use crate::system::{EffSite, Layer, SeedBankSystem};

#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub lineages: Vec<EffSite>,
    pub t: f64,
}

impl DualState {
    pub fn new(lineages: Vec<EffSite>) -> Self {
        DualState { lineages, t: 0.0 }
    }

    pub fn from_counts(counts: &[(EffSite, u32)]) -> Self {
        let mut lineages = Vec::new();
        for &(u, c) in counts {
            lineages.extend(std::iter::repeat(u).take(c as usize));
        }
        DualState::new(lineages)
    }

    pub fn total(&self) -> usize {
        self.lineages.len()
    }

    pub fn counts(&self) -> BTreeMap<EffSite, u32> {
        let mut m = BTreeMap::new();
        for &u in &self.lineages {
            *m.entry(u).or_insert(0) += 1;
        }
        m
    }

    /// `∏_u z_u^{L_u}`.
    pub fn duality_value(&self, z: &dyn Fn(EffSite) -> f64) -> f64 {
        self.lineages.iter().map(|&u| z(u)).product()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum DualEvent {
    Migrate { from: EffSite, to: EffSite },
    Sleep { from: EffSite, to: EffSite },
    Wake { from: EffSite, to: EffSite },
    Coalesce { at: EffSite },
}

/// Every transition out of a lineage configuration with its rate, listed per
/// lineage and per active pair. Equal targets are not merged.
pub fn transitions(sys: &SeedBankSystem, d: f64, lineages: &[EffSite]) -> Vec<(Vec<EffSite>, f64)> {
    let mut out = Vec::new();
    for (l, &u) in lineages.iter().enumerate() {
        for (v, r) in sys.lineage_rates(u) {
            let mut next = lineages.to_vec();
            next[l] = v;
            out.push((next, r));
        }
    }
    for i in 0..lineages.len() {
        for j in i + 1..lineages.len() {
            if lineages[i] == lineages[j] && lineages[i].layer == Layer::Active && d > 0.0 {
                let mut next = lineages.to_vec();
                next.remove(j);
                out.push((next, d));
            }
        }
    }
    out
}

/// Cumulative table for sampling offsets; empty when the kernel has one entry.
struct OffsetSampler {
    offsets: Vec<usize>,
    cum: Vec<f64>,
}

impl OffsetSampler {
    fn new(entries: &[(usize, f64)]) -> Self {
        let mut acc = 0.0;
        let (offsets, cum) = entries
            .iter()
            .map(|&(o, r)| {
                acc += r;
                (o, acc)
            })
            .unzip();
        OffsetSampler { offsets, cum }
    }

    /// Single-entry kernels consume no randomness.
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.offsets.len() == 1 {
            return self.offsets[0];
        }
        let u = rng.gen::<f64>() * self.cum[self.cum.len() - 1];
        let i = self
            .cum
            .partition_point(|&c| c <= u)
            .min(self.offsets.len() - 1);
        self.offsets[i]
    }
}

/// Gillespie stepping of the dual of one system.
pub struct DualDynamics<'a> {
    sys: &'a SeedBankSystem,
    d: f64,
    migration: OffsetSampler,
    migration_rate: f64,
    chi: f64,
    displacement: Vec<OffsetSampler>,
}

impl<'a> DualDynamics<'a> {
    pub fn new(sys: &'a SeedBankSystem, d: f64) -> Result<Self> {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::invalid(
                "d",
                "coalescence rate must be finite and nonnegative",
            ));
        }
        let moving: Vec<(usize, f64)> = sys
            .migration()
            .entries()
            .iter()
            .filter(|e| e.0 != 0)
            .cloned()
            .collect();
        let migration_rate = moving.iter().map(|e| e.1).sum();
        let migration = OffsetSampler::new(&moving);
        let colours = sys.colours().len();
        let per_colour = colours > 1 && !std::ptr::eq(sys.displacement(0), sys.displacement(1));
        let displacement = if per_colour {
            (0..colours)
                .map(|m| OffsetSampler::new(sys.displacement(m).entries()))
                .collect()
        } else {
            vec![OffsetSampler::new(sys.displacement(0).entries())]
        };
        Ok(DualDynamics {
            sys,
            d,
            migration,
            migration_rate,
            chi: sys.chi(),
            displacement,
        })
    }

    pub fn system(&self) -> &SeedBankSystem {
        self.sys
    }

    fn displacement(&self, m: u64) -> &OffsetSampler {
        if self.displacement.len() == 1 {
            &self.displacement[0]
        } else {
            &self.displacement[m as usize]
        }
    }

    fn lineage_rate(&self, u: EffSite) -> f64 {
        match u.layer {
            Layer::Active => self.migration_rate + self.chi,
            Layer::Dormant(m) => self.sys.colours().e(m),
        }
    }

    /// Advances to the next event, or to `t_end` if no event happens before it.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: &mut DualState,
        t_end: f64,
        rng: &mut R,
    ) -> Option<DualEvent> {
        let n = s.lineages.len();
        let mut total = 0.0;
        for &u in &s.lineages {
            total += self.lineage_rate(u);
        }
        let mut pairs = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                if s.lineages[i] == s.lineages[j] && s.lineages[i].layer == Layer::Active {
                    pairs += 1;
                }
            }
        }
        total += self.d * pairs as f64;
        if total <= 0.0 {
            s.t = t_end;
            return None;
        }
        let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
        if s.t + dt > t_end {
            s.t = t_end;
            return None;
        }
        s.t += dt;
        let torus = self.sys.torus();
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = None;
        for l in 0..n {
            let r = self.lineage_rate(s.lineages[l]);
            if u < r {
                chosen = Some(l);
                break;
            }
            u -= r;
        }
        if chosen.is_none() && pairs == 0 {
            // Rounding pushed `u` past the last lineage.
            chosen = Some(n - 1);
            u = 0.0;
        }
        if let Some(l) = chosen {
            let from = s.lineages[l];
            let to = match from.layer {
                Layer::Active if u < self.migration_rate => {
                    let o = self.migration.sample(rng);
                    EffSite::active(torus.add(from.site, o))
                }
                Layer::Active => {
                    let m = self.sys.colours().sample_colour(rng);
                    let o = self.displacement(m).sample(rng);
                    EffSite::dormant(torus.sub(from.site, o), m)
                }
                Layer::Dormant(m) => {
                    let o = self.displacement(m).sample(rng);
                    EffSite::active(torus.add(from.site, o))
                }
            };
            s.lineages[l] = to;
            return Some(match (from.layer, to.layer) {
                (Layer::Active, Layer::Active) => DualEvent::Migrate { from, to },
                (Layer::Active, _) => DualEvent::Sleep { from, to },
                _ => DualEvent::Wake { from, to },
            });
        }
        let mut k = ((u / self.d) as usize).min(pairs - 1);
        for i in 0..n {
            for j in i + 1..n {
                if s.lineages[i] == s.lineages[j] && s.lineages[i].layer == Layer::Active {
                    if k == 0 {
                        let at = s.lineages.remove(j);
                        return Some(DualEvent::Coalesce { at });
                    }
                    k -= 1;
                }
            }
        }
        unreachable!("pairs > 0 guarantees a coalescing pair")
    }

    /// Runs until `t_end`, calling `on_event` after each event.
    pub fn run<R: Rng + ?Sized>(
        &self,
        s: &mut DualState,
        t_end: f64,
        rng: &mut R,
        mut on_event: impl FnMut(&DualEvent, &DualState),
    ) {
        while let Some(ev) = self.step(s, t_end, rng) {
            on_event(&ev, s);
        }
    }
}

/// Monte Carlo `E[∏ z_u^{L_u(t)}]` at each of `times` (nondecreasing).
pub fn dual_moment(
    dynamics: &DualDynamics,
    initial: &DualState,
    times: &[f64],
    z: &(dyn Fn(EffSite) -> f64 + Sync),
    replicas: usize,
    seed: u64,
) -> Vec<Estimate> {
    let acc = replicate_reduce(
        replicas,
        seed,
        tag::DUAL,
        || vec![Welford::default(); times.len()],
        |acc, _r, rng| {
            let mut s = initial.clone();
            for (k, &t) in times.iter().enumerate() {
                dynamics.run(&mut s, t, rng, |_, _| {});
                acc[k].push(s.duality_value(z));
            }
        },
    );
    acc.iter().map(Welford::estimate).collect()
}

/// Empirical law of a single lineage's position at each time, as estimates of
/// the occupation probability of every effective site in `sites`.
pub fn single_lineage_occupation(
    dynamics: &DualDynamics,
    start: EffSite,
    times: &[f64],
    sites: &[EffSite],
    replicas: usize,
    seed: u64,
) -> Vec<Vec<Estimate>> {
    let acc = replicate_reduce(
        replicas,
        seed,
        tag::DUAL,
        || vec![Welford::default(); times.len() * sites.len()],
        |acc, _r, rng| {
            let mut s = DualState::new(vec![start]);
            for (k, &t) in times.iter().enumerate() {
                dynamics.run(&mut s, t, rng, |_, _| {});
                for (j, u) in sites.iter().enumerate() {
                    acc[k * sites.len() + j].push(if s.lineages[0] == *u { 1.0 } else { 0.0 });
                }
            }
        },
    );
    (0..times.len())
        .map(|k| {
            (0..sites.len())
                .map(|j| acc[k * sites.len() + j].estimate())
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CoalescencePoint {
    pub horizon: f64,
    /// Fraction of replicas whose two lineages merged before the horizon.
    pub probability: Estimate,
    /// Fraction still separate at the horizon: censored, not evidence against coalescence.
    pub censored: f64,
}

/// Two lineages started at `a` and `b`; coalescence fractions at each horizon.
pub fn coalescence_probability(
    dynamics: &DualDynamics,
    a: EffSite,
    b: EffSite,
    horizons: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<CoalescencePoint>> {
    if replicas == 0 {
        return Err(Error::invalid("replicas", "must be at least 1"));
    }
    if horizons.is_empty() || horizons.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid(
            "horizons",
            "must be nonempty and nondecreasing",
        ));
    }
    let t_max = horizons[horizons.len() - 1];
    let times = replicate(replicas, seed, tag::COALESCENCE, |_r, rng| {
        let mut s = DualState::new(vec![a, b]);
        let mut when = f64::INFINITY;
        while let Some(ev) = dynamics.step(&mut s, t_max, rng) {
            if matches!(ev, DualEvent::Coalesce { .. }) {
                when = s.t;
                break;
            }
        }
        when
    });
    Ok(horizons
        .iter()
        .map(|&h| {
            let mut w = Welford::default();
            for &t in &times {
                w.push(if t <= h { 1.0 } else { 0.0 });
            }
            let probability = w.estimate();
            CoalescencePoint {
                horizon: h,
                probability,
                censored: 1.0 - probability.mean,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Torus, WalkKernel};
    use crate::rng::stream;
    use crate::seedbank::SeedBankSpec;
    use crate::system::Model;

    fn colony(k: f64, e: f64) -> SeedBankSystem {
        let t = Torus::new(1, 1).unwrap();
        SeedBankSystem::from_spec(
            Model::One,
            WalkKernel::none(&t),
            &SeedBankSpec::Single { k, e },
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn lineage_count_never_increases() {
        let t = Torus::new(1, 3).unwrap();
        let sys = SeedBankSystem::from_spec(
            Model::Two,
            WalkKernel::simple_walk(&t, 1.0).unwrap(),
            &SeedBankSpec::Explicit {
                k: vec![1.0, 0.5],
                e: vec![2.0, 0.3],
            },
            vec![],
        )
        .unwrap();
        let dy = DualDynamics::new(&sys, 1.5).unwrap();
        let mut rng = stream(1, tag::DUAL, 0);
        let mut s = DualState::from_counts(&[(EffSite::active(0), 3), (EffSite::dormant(1, 1), 1)]);
        let mut prev = s.total();
        dy.run(&mut s, 50.0, &mut rng, |ev, st| {
            match ev {
                DualEvent::Coalesce { at } => {
                    assert_eq!(st.total() + 1, prev);
                    assert_eq!(at.layer, Layer::Active);
                }
                _ => assert_eq!(st.total(), prev),
            }
            prev = st.total();
        });
        assert_eq!(s.t, 50.0);
    }

    #[test]
    fn pure_coalescence_is_exponential() {
        let sys = colony(1e-300, 1.0);
        let dy = DualDynamics::new(&sys, 1.0).unwrap();
        let times = replicate(20_000, 3, tag::DUAL, |_r, rng| {
            let mut s = DualState::from_counts(&[(EffSite::active(0), 2)]);
            let mut when = 0.0;
            while let Some(ev) = dy.step(&mut s, f64::INFINITY, rng) {
                if matches!(ev, DualEvent::Coalesce { .. }) {
                    when = s.t;
                    break;
                }
            }
            when
        });
        let mut w = Welford::default();
        times.iter().for_each(|&t| w.push(t));
        assert!(
            (w.mean() - 1.0).abs() < 3.0 * w.estimate().stderr,
            "{}",
            w.mean()
        );
    }

    #[test]
    fn single_entry_displacement_is_free() {
        let t = Torus::new(1, 1).unwrap();
        let pm = WalkKernel::point_mass(&t);
        let sampler = OffsetSampler::new(pm.entries());
        let mut a = stream(9, 0, 0);
        let b = a.clone();
        assert_eq!(sampler.sample(&mut a), 0);
        assert_eq!(a, b);
    }

    #[test]
    fn transitions_of_pair_in_colony() {
        let sys = colony(1.0, 1.0);
        let tr = transitions(&sys, 1.0, &[EffSite::active(0), EffSite::active(0)]);
        let total: f64 = tr.iter().map(|t| t.1).sum();
        // two sleep moves at K e = 1 each, one coalescence at d = 1
        assert_eq!(total, 3.0);
    }
}
