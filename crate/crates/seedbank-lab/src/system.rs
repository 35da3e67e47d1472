//! The three spatial seed-bank models as one parameter bundle.
//!
//! Model 1 has one dormant colour, model 2 any number of colours exchanging
//! within the colony, model 3 adds displacement kernels `a_m` for individuals
//! entering or leaving the seed-bank. Model 2 is model 3 with every `a_m` a
//! point mass, which is how the dynamics below are written.

use serde::{Deserialize, Serialize};

use crate::ctmc::SparseGenerator;
use crate::error::{Error, Result};
use crate::lattice::{Torus, WalkKernel};
use crate::seedbank::{Colours, Rho, SeedBankSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Model {
    One,
    Two,
    Three,
}

impl TryFrom<u8> for Model {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Model::One),
            2 => Ok(Model::Two),
            3 => Ok(Model::Three),
            _ => Err(format!("model must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Model> for u8 {
    fn from(m: Model) -> u8 {
        match m {
            Model::One => 1,
            Model::Two => 2,
            Model::Three => 3,
        }
    }
}

/// Layer of an effective site: active, or dormant with a colour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Layer {
    Active,
    Dormant(u64),
}

/// A coordinate of the state: a site together with a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EffSite {
    pub site: usize,
    pub layer: Layer,
}

impl EffSite {
    pub fn active(site: usize) -> Self {
        EffSite {
            site,
            layer: Layer::Active,
        }
    }

    pub fn dormant(site: usize, colour: u64) -> Self {
        EffSite {
            site,
            layer: Layer::Dormant(colour),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SeedBankSystem {
    model: Model,
    migration: WalkKernel,
    colours: Colours,
    /// Model 3 only: one shared kernel or one per colour.
    displacement: Vec<WalkKernel>,
    point_mass: WalkKernel,
}

impl SeedBankSystem {
    pub fn new(
        model: Model,
        migration: WalkKernel,
        colours: Colours,
        displacement: Vec<WalkKernel>,
    ) -> Result<Self> {
        let torus = migration.torus().clone();
        if model == Model::One && colours.len() != 1 {
            return Err(Error::invalid(
                "seedbank",
                "model 1 takes a single-colour seed-bank",
            ));
        }
        match model {
            Model::Three => {
                if displacement.is_empty() {
                    return Err(Error::invalid(
                        "displacement",
                        "model 3 needs displacement kernels",
                    ));
                }
                if displacement.len() != 1 && displacement.len() as u64 != colours.len() {
                    return Err(Error::invalid(
                        "displacement",
                        format!(
                            "give one kernel or one per colour ({} colours)",
                            colours.len()
                        ),
                    ));
                }
                for k in &displacement {
                    if k.torus() != &torus {
                        return Err(Error::TorusMismatch {
                            left: torus.to_string(),
                            right: k.torus().to_string(),
                        });
                    }
                    if !k.is_normalized() {
                        return Err(Error::invalid("displacement", "rates must sum to 1"));
                    }
                }
            }
            _ => {
                if !displacement.is_empty() {
                    return Err(Error::invalid(
                        "displacement",
                        "only model 3 uses displacement kernels",
                    ));
                }
            }
        }
        Ok(SeedBankSystem {
            model,
            point_mass: WalkKernel::point_mass(&torus),
            migration,
            colours,
            displacement,
        })
    }

    pub fn from_spec(
        model: Model,
        migration: WalkKernel,
        seedbank: &SeedBankSpec,
        displacement: Vec<WalkKernel>,
    ) -> Result<Self> {
        Self::new(model, migration, seedbank.colours()?, displacement)
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn torus(&self) -> &Torus {
        self.migration.torus()
    }

    pub fn sites(&self) -> usize {
        self.torus().sites()
    }

    pub fn migration(&self) -> &WalkKernel {
        &self.migration
    }

    pub fn colours(&self) -> &Colours {
        &self.colours
    }

    pub fn chi(&self) -> f64 {
        self.colours.chi()
    }

    pub fn rho(&self) -> Rho {
        self.colours.rho()
    }

    /// Displacement kernel of colour `m`; the point mass outside model 3.
    pub fn displacement(&self, m: u64) -> &WalkKernel {
        match self.displacement.len() {
            0 => &self.point_mass,
            1 => &self.displacement[0],
            _ => &self.displacement[m as usize],
        }
    }

    /// Fastest single-coordinate rate, used by the step-size guard.
    pub fn max_rate(&self) -> f64 {
        (self.migration.total_rate() + self.chi()).max(self.colours.max_e())
    }

    /// Number of colours as a table size, refusing more than `limit`.
    pub fn colour_table_len(&self, limit: u64) -> Result<usize> {
        if self.colours.len() > limit {
            return Err(Error::invalid(
                "seedbank.truncation",
                format!(
                    "{} colours exceeds the limit of {limit} for this experiment",
                    self.colours.len()
                ),
            ));
        }
        Ok(self.colours.len() as usize)
    }

    /// Dense index `site·(1+M) + layer` of an effective site.
    pub fn eff_index(&self, u: EffSite) -> usize {
        let width = 1 + self.colours.len() as usize;
        u.site * width
            + match u.layer {
                Layer::Active => 0,
                Layer::Dormant(m) => 1 + m as usize,
            }
    }

    pub fn eff_site(&self, index: usize) -> EffSite {
        let width = 1 + self.colours.len() as usize;
        let (site, l) = (index / width, index % width);
        EffSite {
            site,
            layer: if l == 0 {
                Layer::Active
            } else {
                Layer::Dormant(l as u64 - 1)
            },
        }
    }

    /// Outgoing rates of a single lineage at `u` (the first-moment kernel).
    pub fn lineage_rates(&self, u: EffSite) -> Vec<(EffSite, f64)> {
        let t = self.torus();
        let mut out = Vec::new();
        match u.layer {
            Layer::Active => {
                for &(o, r) in self.migration.entries() {
                    if o != 0 {
                        out.push((EffSite::active(t.add(u.site, o)), r));
                    }
                }
                for m in 0..self.colours.len() {
                    let ke = self.colours.k(m) * self.colours.e(m);
                    for &(o, p) in self.displacement(m).entries() {
                        out.push((EffSite::dormant(t.sub(u.site, o), m), ke * p));
                    }
                }
            }
            Layer::Dormant(m) => {
                let e = self.colours.e(m);
                for &(o, p) in self.displacement(m).entries() {
                    out.push((EffSite::active(t.add(u.site, o)), e * p));
                }
            }
        }
        out
    }

    /// Generator of one lineage on the effective sites, indexed by [`Self::eff_index`].
    pub fn b_kernel(&self, cap: usize) -> Result<SparseGenerator> {
        let width = 1 + self.colour_table_len(cap as u64)?;
        let n = self.sites() * width;
        if n > cap {
            return Err(Error::StateSpaceOverflow { cap });
        }
        let mut q = SparseGenerator::new(n);
        for i in 0..n {
            for (v, r) in self.lineage_rates(self.eff_site(i)) {
                q.add(i, self.eff_index(v), r);
            }
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_one_needs_one_colour() {
        let t = Torus::new(1, 4).unwrap();
        let k = WalkKernel::simple_walk(&t, 1.0).unwrap();
        let sb = SeedBankSpec::Explicit {
            k: vec![1.0, 1.0],
            e: vec![1.0, 1.0],
        };
        assert!(SeedBankSystem::from_spec(Model::One, k.clone(), &sb, vec![]).is_err());
        assert!(SeedBankSystem::from_spec(Model::Two, k, &sb, vec![]).is_ok());
    }

    #[test]
    fn single_colony_b_kernel() {
        let t = Torus::new(1, 1).unwrap();
        let sys = SeedBankSystem::from_spec(
            Model::One,
            WalkKernel::none(&t),
            &SeedBankSpec::Single { k: 2.0, e: 0.5 },
            vec![],
        )
        .unwrap();
        let q = sys.b_kernel(100).unwrap();
        assert_eq!(q.row(0), &[(1, 1.0)]);
        assert_eq!(q.row(1), &[(0, 0.5)]);
        let pi = q.stationary().unwrap();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn eff_index_round_trip() {
        let t = Torus::new(2, 3).unwrap();
        let sys = SeedBankSystem::from_spec(
            Model::Two,
            WalkKernel::simple_walk(&t, 1.0).unwrap(),
            &SeedBankSpec::Explicit {
                k: vec![1.0, 2.0],
                e: vec![1.0, 0.5],
            },
            vec![],
        )
        .unwrap();
        for i in 0..27 {
            assert_eq!(sys.eff_index(sys.eff_site(i)), i);
        }
    }
}
