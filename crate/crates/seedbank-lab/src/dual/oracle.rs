//! Exact dual on tiny instances: enumerate every reachable lineage
//! configuration and work with the generator directly.

use std::collections::{HashMap, VecDeque};

use crate::ctmc::SparseGenerator;
use crate::error::{Error, Result};
use crate::system::{EffSite, SeedBankSystem};

use super::transitions;

pub struct DualOracle {
    states: Vec<Vec<EffSite>>,
    generator: SparseGenerator,
    start: usize,
    initial_size: usize,
}

impl DualOracle {
    pub const DEFAULT_CAP: usize = 20_000;

    /// Breadth-first enumeration from `initial`; `StateSpaceOverflow` past `cap` states.
    pub fn build(sys: &SeedBankSystem, d: f64, initial: &[EffSite], cap: usize) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::invalid("initial", "need at least one lineage"));
        }
        let mut start = initial.to_vec();
        start.sort();
        let mut index: HashMap<Vec<EffSite>, usize> = HashMap::new();
        let mut states = vec![start.clone()];
        index.insert(start, 0);
        let mut edges: Vec<(usize, usize, f64)> = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let current = states[i].clone();
            for (mut next, rate) in transitions(sys, d, &current) {
                next.sort();
                let j = match index.get(&next) {
                    Some(&j) => j,
                    None => {
                        if states.len() >= cap {
                            return Err(Error::StateSpaceOverflow { cap });
                        }
                        let j = states.len();
                        index.insert(next.clone(), j);
                        states.push(next);
                        queue.push_back(j);
                        j
                    }
                };
                edges.push((i, j, rate));
            }
        }
        let mut generator = SparseGenerator::new(states.len());
        for (i, j, r) in edges {
            generator.add(i, j, r);
        }
        Ok(DualOracle {
            states,
            generator,
            start: 0,
            initial_size: initial.len(),
        })
    }

    pub fn states(&self) -> &[Vec<EffSite>] {
        &self.states
    }

    pub fn generator(&self) -> &SparseGenerator {
        &self.generator
    }

    pub fn index_of(&self, lineages: &[EffSite]) -> Option<usize> {
        let mut key = lineages.to_vec();
        key.sort();
        self.states.iter().position(|s| *s == key)
    }

    /// Law at time `t` from the initial configuration.
    pub fn distribution(&self, t: f64) -> Vec<f64> {
        let mut p0 = vec![0.0; self.states.len()];
        p0[self.start] = 1.0;
        self.generator.evolve_distribution(&p0, t)
    }

    pub fn expectation(&self, t: f64, f: impl Fn(&[EffSite]) -> f64) -> f64 {
        self.distribution(t)
            .iter()
            .zip(&self.states)
            .map(|(p, s)| p * f(s))
            .sum()
    }

    /// `E[∏ z_u^{L_u(t)}]`.
    pub fn moment(&self, t: f64, z: &dyn Fn(EffSite) -> f64) -> f64 {
        self.expectation(t, |s| s.iter().map(|&u| z(u)).product())
    }

    /// Probability that at least one coalescence happened by time `t`.
    pub fn coalescence_probability(&self, t: f64) -> f64 {
        self.expectation(t, |s| {
            if s.len() < self.initial_size {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Expected time of the first coalescence.
    pub fn mean_coalescence_time(&self) -> Result<f64> {
        let target: Vec<bool> = self
            .states
            .iter()
            .map(|s| s.len() < self.initial_size)
            .collect();
        Ok(self.generator.mean_hitting_time(&target)?[self.start])
    }

    pub fn stationary(&self) -> Result<Vec<f64>> {
        self.generator.stationary()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Torus, WalkKernel};
    use crate::seedbank::SeedBankSpec;
    use crate::system::Model;

    fn colony() -> SeedBankSystem {
        let t = Torus::new(1, 1).unwrap();
        SeedBankSystem::from_spec(
            Model::One,
            WalkKernel::none(&t),
            &SeedBankSpec::Single { k: 1.0, e: 1.0 },
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn two_lineages_in_a_colony() {
        let sys = colony();
        let a = EffSite::active(0);
        let o = DualOracle::build(&sys, 1.0, &[a, a], 100).unwrap();
        // {AA, AD, DD} with two lineages plus {A, D} after coalescence
        assert_eq!(o.states().len(), 5);
        assert_eq!(o.distribution(0.0)[0], 1.0);
        // Hand solve: h_AA = (1 + 2 h_AD)/3, h_AD = (1 + h_AA + h_DD)/2, h_DD = 1/2 + h_AD
        // gives h_AA = 4, h_AD = 5.5, h_DD = 6.
        assert!((o.mean_coalescence_time().unwrap() - 4.0).abs() < 1e-12);
        assert!(o.coalescence_probability(200.0) > 1.0 - 1e-12);
    }

    #[test]
    fn one_lineage_balance() {
        let sys = colony();
        let o = DualOracle::build(&sys, 1.0, &[EffSite::active(0)], 100).unwrap();
        let pi = o.stationary().unwrap();
        let a = o.index_of(&[EffSite::active(0)]).unwrap();
        assert!((pi[a] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn overflow_is_reported() {
        let t = Torus::new(1, 16).unwrap();
        let sys = SeedBankSystem::from_spec(
            Model::One,
            WalkKernel::simple_walk(&t, 1.0).unwrap(),
            &SeedBankSpec::Single { k: 1.0, e: 1.0 },
            vec![],
        )
        .unwrap();
        let u = EffSite::active(0);
        assert!(matches!(
            DualOracle::build(&sys, 1.0, &[u, u, u], 100),
            Err(Error::StateSpaceOverflow { cap: 100 })
        ));
    }
}
