//! Run configuration: a JSON document with nested sections.
//!
//! Only `experiment` and `masterSeed` are always required. Everything else is
//! defaulted per experiment by [`load_config`], which also rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dichotomy::{AsymmetricOptions, SlowlyVarying};
use crate::error::{Error, Result};
use crate::forward::{DiffusionFunction, ForwardModel, InitialCondition, Observable};
use crate::lattice::{Torus, WalkKernel};
use crate::seedbank::SeedBankSpec;
use crate::system::{EffSite, Model, SeedBankSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SimulateForward,
    SimulateDual,
    CheckDuality,
    Classify,
    TauTail,
    CoalescenceProb,
    IbmFw,
    IbmMoran,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::SimulateForward,
        Experiment::SimulateDual,
        Experiment::CheckDuality,
        Experiment::Classify,
        Experiment::TauTail,
        Experiment::CoalescenceProb,
        Experiment::IbmFw,
        Experiment::IbmMoran,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Experiment::SimulateForward => "simulate-forward",
            Experiment::SimulateDual => "simulate-dual",
            Experiment::CheckDuality => "check-duality",
            Experiment::Classify => "classify",
            Experiment::TauTail => "tau-tail",
            Experiment::CoalescenceProb => "coalescence-prob",
            Experiment::IbmFw => "ibm-fw",
            Experiment::IbmMoran => "ibm-moran",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.id() == id)
    }

    fn needs_lattice(self) -> bool {
        !matches!(
            self,
            Experiment::TauTail | Experiment::IbmFw | Experiment::IbmMoran
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
}

impl Geometry {
    /// Side long enough that the torus return curve stays off its plateau up
    /// to the default quadrature horizon.
    pub fn classify_default(d: usize) -> Self {
        let l = match d {
            1 => 1 << 16,
            2 => 512,
            _ => 64,
        };
        Geometry { d, l }
    }
}

/// Migration or displacement kernel. In a config file either a list of
/// `[offset, rate]` pairs or an object with `kind` naming a preset.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Nearest-neighbour walk with total rate `rate`.
    #[serde(rename = "simple_walk")]
    Simple { rate: f64 },
    /// Two-dimensional walk with drift parameter `eta`.
    #[serde(rename = "drifted_2d")]
    Drifted { eta: f64 },
    /// One-dimensional kernel with `a(0,x) ∝ |x|^{-delta}`.
    #[serde(rename = "power_law_1d")]
    PowerLaw { delta: f64 },
    /// Explicit `(offset, rate)` pairs.
    Offsets { entries: Vec<(Vec<i64>, f64)> },
    /// Stay put.
    PointMass,
    /// No jumps at all.
    None,
}

impl<'de> Deserialize<'de> for KernelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
        enum Named {
            SimpleWalk {
                #[serde(default = "one")]
                rate: f64,
            },
            #[serde(rename = "drifted_2d")]
            Drifted2d {
                eta: f64,
            },
            #[serde(rename = "power_law_1d")]
            PowerLaw1d {
                delta: f64,
            },
            Offsets {
                entries: Vec<(Vec<i64>, f64)>,
            },
            PointMass,
            None,
        }
        #[derive(Deserialize)]
        #[serde(
            untagged,
            expecting = "a list of [offset, rate] pairs or a kernel object with `kind`"
        )]
        enum Literal {
            Pairs(Vec<(Vec<i64>, f64)>),
            Named(Named),
        }
        Ok(match Literal::deserialize(d)? {
            Literal::Pairs(entries) => KernelSpec::Offsets { entries },
            Literal::Named(n) => match n {
                Named::SimpleWalk { rate } => KernelSpec::Simple { rate },
                Named::Drifted2d { eta } => KernelSpec::Drifted { eta },
                Named::PowerLaw1d { delta } => KernelSpec::PowerLaw { delta },
                Named::Offsets { entries } => KernelSpec::Offsets { entries },
                Named::PointMass => KernelSpec::PointMass,
                Named::None => KernelSpec::None,
            },
        })
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Simple { rate: 1.0 }
    }
}

impl KernelSpec {
    pub fn build(&self, torus: &Torus) -> Result<WalkKernel> {
        match self {
            KernelSpec::Simple { rate } => WalkKernel::simple_walk(torus, *rate),
            KernelSpec::Drifted { eta } => WalkKernel::drifted_2d(torus, *eta),
            KernelSpec::PowerLaw { delta } => WalkKernel::power_law_1d(torus, *delta),
            KernelSpec::Offsets { entries } => WalkKernel::from_offsets(torus, entries),
            KernelSpec::PointMass => Ok(WalkKernel::point_mass(torus)),
            KernelSpec::None => Ok(WalkKernel::none(torus)),
        }
    }

    /// Command-line shorthand: `simple_walk[:RATE]`, `drifted_2d:ETA`,
    /// `power_law_1d:DELTA`, `point_mass`, `none`, or JSON as in a config file.
    pub fn parse_short(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.starts_with('{') || s.starts_with('[') {
            return serde_json::from_str(s).map_err(|e| Error::invalid("kernel", e.to_string()));
        }
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |field: &str| -> Result<f64> {
            arg.ok_or_else(|| Error::invalid(field, "missing value after ':'"))?
                .parse()
                .map_err(|_| Error::invalid(field, format!("not a number in `{s}`")))
        };
        match name {
            "simple_walk" | "simple" => Ok(KernelSpec::Simple {
                rate: if arg.is_some() {
                    num("kernel.rate")?
                } else {
                    1.0
                },
            }),
            "drifted_2d" => Ok(KernelSpec::Drifted {
                eta: num("kernel.eta")?,
            }),
            "power_law_1d" => Ok(KernelSpec::PowerLaw {
                delta: num("kernel.delta")?,
            }),
            "point_mass" => Ok(KernelSpec::PointMass),
            "none" => Ok(KernelSpec::None),
            _ => Err(Error::invalid("kernel", format!("unknown kernel `{s}`"))),
        }
    }
}

/// Numeric knobs shared across experiments.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Numeric {
    /// Euler step; defaulted from the model's rates.
    pub dt: Option<f64>,
    /// Last output time; used when `outputTimes` is absent.
    pub t_end: Option<f64>,
    pub output_times: Option<Vec<f64>>,
    /// Integration horizon of the dichotomy integral.
    #[serde(rename = "T_max")]
    pub t_max: Option<f64>,
    pub boundary_tol: Option<f64>,
}

/// Lineage start position for the dual; `colour` absent means active.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineageSpec {
    pub site: usize,
    #[serde(default)]
    pub colour: Option<u64>,
}

impl LineageSpec {
    pub fn eff_site(&self) -> EffSite {
        match self.colour {
            None => EffSite::active(self.site),
            Some(c) => EffSite::dormant(self.site, c),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DualSection {
    pub lineages: Option<Vec<LineageSpec>>,
    /// Pair coalescence rate; defaults to the resampling rate of the diffusion.
    pub coalescence_rate: Option<f64>,
    /// Also solve the dual exactly when its state space stays below this many states.
    pub exact_cap: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DualitySection {
    pub threshold: Option<f64>,
    /// Random probes of the generator identity.
    pub probes: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ClassifySection {
    pub slow: Option<SlowlyVarying>,
    /// Run the drifted-walk decay diagnostic as well.
    pub asymmetric: Option<AsymmetricOptions>,
    pub t_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TauSection {
    pub samples: Option<usize>,
    /// Times at which the activity clock is read.
    pub activity_grid: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IbmFwSection {
    pub n_sweep: Option<Vec<u64>>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub c: Option<u64>,
    pub x0: Option<f64>,
    pub y0: Option<f64>,
    pub t: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct MoranStart {
    pub x: u64,
    pub y: Vec<u64>,
    pub z_d: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct IbmMoranSection {
    #[serde(rename = "N")]
    pub n: Option<u64>,
    #[serde(rename = "cA")]
    pub c_a: Option<Vec<f64>>,
    #[serde(rename = "cD")]
    pub c_d: Option<Vec<f64>>,
    pub initial: Option<MoranStart>,
    /// Fraction of the transformed path allowed outside `[0,1]` before a warning.
    pub tol: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub master_seed: u64,
    pub geometry: Option<Geometry>,
    #[serde(default = "model_one")]
    pub model: Model,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Model 3: one kernel per colour, or a single kernel shared by all.
    #[serde(default)]
    pub displacement: Vec<KernelSpec>,
    pub seedbank: Option<SeedBankSpec>,
    #[serde(default = "fisher_wright_one")]
    pub diffusion: DiffusionFunction,
    #[serde(default)]
    pub numeric: Numeric,
    pub replicas: Option<usize>,
    pub output: Option<PathBuf>,
    pub initial: Option<InitialCondition>,
    /// Second start for the coupled run of `simulate-forward`.
    pub coupled_initial: Option<InitialCondition>,
    pub observables: Option<Vec<String>>,
    #[serde(default)]
    pub dual: DualSection,
    #[serde(default)]
    pub duality: DualitySection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default)]
    pub tau: TauSection,
    #[serde(default)]
    pub ibm_fw: IbmFwSection,
    #[serde(default)]
    pub ibm_moran: IbmMoranSection,
}

fn one() -> f64 {
    1.0
}
fn model_one() -> Model {
    Model::One
}
fn fisher_wright_one() -> DiffusionFunction {
    DiffusionFunction::fisher_wright(1.0)
}

pub const DEFAULT_REPLICAS: usize = 1000;
pub const DEFAULT_OUTPUT_TIMES: [f64; 3] = [0.5, 1.0, 2.0];
pub const DEFAULT_TAU_SAMPLES: usize = 1_000_000;

/// Reads, parses and validates a configuration file, filling defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}

/// As [`load_config`] on text already in memory; `path` only labels errors.
pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig> {
    let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.resolve()?;
    Ok(cfg)
}

impl RunConfig {
    /// Minimal configuration for `experiment`; call [`RunConfig::resolve`] after editing.
    pub fn minimal(experiment: Experiment, master_seed: u64) -> Self {
        serde_json::from_value(serde_json::json!({
            "experiment": experiment.id(),
            "masterSeed": master_seed,
        }))
        .expect("minimal config is well formed")
    }

    pub fn replicas(&self) -> usize {
        self.replicas.unwrap_or(DEFAULT_REPLICAS)
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry.unwrap_or(Geometry { d: 1, l: 8 })
    }

    pub fn seedbank(&self) -> SeedBankSpec {
        self.seedbank
            .clone()
            .unwrap_or(SeedBankSpec::Single { k: 1.0, e: 1.0 })
    }

    pub fn output_times(&self) -> Vec<f64> {
        self.numeric.output_times.clone().unwrap_or_default()
    }

    pub fn torus(&self) -> Result<Torus> {
        let g = self.geometry();
        Torus::new(g.d, g.l)
    }

    /// Builds the lattice system described by the config.
    pub fn system(&self) -> Result<SeedBankSystem> {
        let torus = self.torus()?;
        let migration = self.kernel.build(&torus)?;
        let displacement = self
            .displacement
            .iter()
            .map(|k| k.build(&torus))
            .collect::<Result<Vec<_>>>()?;
        SeedBankSystem::from_spec(self.model, migration, &self.seedbank(), displacement)
    }

    pub fn observables(&self, sites: usize, colours: usize) -> Result<Vec<Observable>> {
        let names = self.observables.clone().unwrap_or_else(|| {
            vec![
                "theta".into(),
                "theta_drift".into(),
                "heterozygosity".into(),
            ]
        });
        names
            .iter()
            .map(|n| parse_observable(n, sites, colours))
            .collect()
    }

    /// Validates every field and fills the defaults that depend on the model.
    pub fn resolve(&mut self) -> Result<()> {
        if self.replicas == Some(0) {
            return Err(Error::invalid("replicas", "must be at least 1"));
        }
        if let Some(seedbank) = &self.seedbank {
            seedbank.validate()?;
        }
        self.diffusion.validate()?;
        if let Some(t) = self.numeric.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("numeric.tEnd", "must be positive"));
            }
        }
        if let Some(times) = &self.numeric.output_times {
            if times.is_empty()
                || times[0] < 0.0
                || times.windows(2).any(|w| w[1] < w[0])
                || times.iter().any(|t| !t.is_finite())
            {
                return Err(Error::invalid(
                    "numeric.outputTimes",
                    "must be nonempty, finite, nonnegative and nondecreasing",
                ));
            }
        }
        if let Some(tol) = self.numeric.boundary_tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::invalid("numeric.boundaryTol", "must lie in (0,1)"));
            }
        }
        if let Some(t) = self.numeric.t_max {
            if !(t > 1.0 && t.is_finite()) {
                return Err(Error::invalid("numeric.T_max", "must exceed 1"));
            }
        }
        if self.numeric.output_times.is_none() {
            self.numeric.output_times = Some(match self.numeric.t_end {
                Some(t) => vec![t / 4.0, t / 2.0, t],
                None => match self.experiment {
                    Experiment::CoalescenceProb => vec![1e2, 1e3, 1e4],
                    _ => DEFAULT_OUTPUT_TIMES.to_vec(),
                },
            });
        }
        if self.geometry.is_none() && self.experiment == Experiment::Classify {
            self.geometry = Some(Geometry::classify_default(1));
        }
        if self.experiment.needs_lattice() {
            self.resolve_lattice()?;
        }
        match self.experiment {
            Experiment::TauTail => {
                self.seedbank().validate()?;
                if self.tau.samples == Some(0) {
                    return Err(Error::invalid("tau.samples", "must be at least 1"));
                }
                self.tau.samples.get_or_insert(DEFAULT_TAU_SAMPLES);
                let grid = self
                    .tau
                    .activity_grid
                    .get_or_insert_with(|| vec![1e1, 1e2, 1e3]);
                if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::invalid(
                        "tau.activityGrid",
                        "must be positive and strictly increasing",
                    ));
                }
            }
            Experiment::IbmFw => {
                let s = &mut self.ibm_fw;
                s.n_sweep.get_or_insert_with(|| vec![50, 100, 200, 400]);
                s.k.get_or_insert(1.0);
                s.c.get_or_insert(1);
                s.x0.get_or_insert(0.5);
                s.y0.get_or_insert(0.5);
                s.t.get_or_insert(0.5);
                self.numeric.dt.get_or_insert(1e-3);
            }
            Experiment::IbmMoran => {
                let s = &mut self.ibm_moran;
                s.n.get_or_insert(100);
                s.c_a.get_or_insert_with(|| vec![2.0]);
                s.c_d.get_or_insert_with(|| vec![1.0]);
                s.tol.get_or_insert(0.05);
                let n = s.n.unwrap_or(100);
                let colours = s.c_a.as_ref().map_or(1, Vec::len);
                s.initial.get_or_insert_with(|| {
                    // dormant classes twice the type count, active class the remainder
                    let share = n / (2 * (colours as u64 + 1)).max(1);
                    MoranStart {
                        x: share,
                        y: vec![share; colours],
                        z_d: vec![2 * share; colours],
                    }
                });
            }
            _ => {}
        }
        Ok(())
    }

    fn resolve_lattice(&mut self) -> Result<()> {
        let sys = self.system()?;
        match self.experiment {
            Experiment::SimulateForward | Experiment::CheckDuality => {
                let model = ForwardModel::new(&sys)?;
                let dt = match self.numeric.dt {
                    Some(dt) => dt,
                    None if self.experiment == Experiment::CheckDuality => 1e-3,
                    None => model.default_dt(&self.diffusion),
                };
                model.check_dt(dt)?;
                self.numeric.dt = Some(dt);
                let initial = self
                    .initial
                    .get_or_insert(InitialCondition::Constant { x: 0.5, y: 0.5 });
                initial.validate(model.sites(), model.colours())?;
                if let Some(second) = &self.coupled_initial {
                    second.validate(model.sites(), model.colours())?;
                }
                self.observables(model.sites(), model.colours())?;
                if self.experiment == Experiment::CheckDuality
                    && self.diffusion.fisher_wright_rate().is_none()
                {
                    return Err(Error::invalid(
                        "diffusion",
                        "the moment dual exists only for g = d·x(1−x)",
                    ));
                }
                if let Some(t) = self.duality.threshold {
                    if !(t > 0.0) {
                        return Err(Error::invalid("duality.threshold", "must be positive"));
                    }
                }
            }
            Experiment::SimulateDual | Experiment::CoalescenceProb => {
                let rate = match self.dual.coalescence_rate {
                    Some(r) => r,
                    None => self.diffusion.fisher_wright_rate().ok_or_else(|| {
                        Error::invalid(
                            "dual.coalescenceRate",
                            "required when the diffusion is not Fisher-Wright",
                        )
                    })?,
                };
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::invalid(
                        "dual.coalescenceRate",
                        "must be finite and nonnegative",
                    ));
                }
                self.dual.coalescence_rate = Some(rate);
                let sites = sys.sites();
                let lineages = self.dual.lineages.get_or_insert_with(|| {
                    if self.experiment == Experiment::CoalescenceProb {
                        // two lineages as far apart as the torus allows
                        let far = Geometry::far_site(&sys);
                        vec![
                            LineageSpec {
                                site: 0,
                                colour: None,
                            },
                            LineageSpec {
                                site: far,
                                colour: None,
                            },
                        ]
                    } else {
                        vec![
                            LineageSpec {
                                site: 0,
                                colour: None,
                            };
                            2
                        ]
                    }
                });
                if lineages.is_empty() {
                    return Err(Error::invalid("dual.lineages", "need at least one lineage"));
                }
                if self.experiment == Experiment::CoalescenceProb && lineages.len() != 2 {
                    return Err(Error::invalid(
                        "dual.lineages",
                        "coalescence-prob follows exactly two lineages",
                    ));
                }
                for l in lineages.iter() {
                    if l.site >= sites {
                        return Err(Error::invalid(
                            "dual.lineages.site",
                            format!("site {} outside a torus of {sites} sites", l.site),
                        ));
                    }
                    if let Some(c) = l.colour {
                        if c >= sys.colours().len() {
                            return Err(Error::invalid(
                                "dual.lineages.colour",
                                format!("colour {c} beyond the colour table"),
                            ));
                        }
                    }
                }
                if let Some(init) = &self.initial {
                    init.validate(sites, sys.colours().len() as usize)?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl Geometry {
    /// Site with every coordinate at half the side.
    fn far_site(sys: &SeedBankSystem) -> usize {
        let t = sys.torus();
        let half = vec![(t.side() / 2) as i64; t.dim()];
        t.site(&half)
    }
}

/// `theta`, `theta_drift`, `heterozygosity`, `heterozygosity[i]`, `x[i]`, `y[i,m]`.
pub fn parse_observable(name: &str, sites: usize, colours: usize) -> Result<Observable> {
    let bad = || Error::invalid("observables", format!("unknown observable `{name}`"));
    let index = |s: &str| -> Result<Vec<usize>> {
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
            .collect()
    };
    let obs = match name {
        "theta" => Observable::Theta,
        "theta_drift" => Observable::ThetaDrift,
        "heterozygosity" => Observable::MeanHeterozygosity,
        _ => {
            let (head, rest) = name.split_once('[').ok_or_else(bad)?;
            let inner = rest.strip_suffix(']').ok_or_else(bad)?;
            let idx = index(inner)?;
            match (head, idx.as_slice()) {
                ("heterozygosity", &[site]) => Observable::Heterozygosity { site },
                ("x", &[site]) => Observable::Active { site },
                ("y", &[site, colour]) => Observable::Dormant { site, colour },
                _ => return Err(bad()),
            }
        }
    };
    let (site, colour) = match obs {
        Observable::Heterozygosity { site } | Observable::Active { site } => (site, 0),
        Observable::Dormant { site, colour } => (site, colour),
        _ => (0, 0),
    };
    if site >= sites || (matches!(obs, Observable::Dormant { .. }) && colour >= colours) {
        return Err(Error::invalid(
            "observables",
            format!("`{name}` is out of range"),
        ));
    }
    Ok(obs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_forward_config_gets_model_default_dt() {
        let cfg = parse(r#"{"experiment": "simulate-forward", "masterSeed": 7}"#).unwrap();
        let model = ForwardModel::new(&cfg.system().unwrap()).unwrap();
        assert_eq!(cfg.numeric.dt, Some(model.default_dt(&cfg.diffusion)));
        assert_eq!(cfg.model, Model::One);
        assert_eq!(cfg.replicas(), DEFAULT_REPLICAS);
        assert_eq!(cfg.output_times(), DEFAULT_OUTPUT_TIMES.to_vec());
        assert_eq!(
            cfg.initial,
            Some(InitialCondition::Constant { x: 0.5, y: 0.5 })
        );
    }

    #[test]
    fn seed_is_mandatory() {
        let err = parse(r#"{"experiment": "classify"}"#).unwrap_err();
        assert!(err.to_string().contains("masterSeed"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn negative_k_names_the_field() {
        let err = parse(
            r#"{"experiment": "simulate-forward", "masterSeed": 1,
                "seedbank": {"single": {"K": -1.0, "e": 1.0}}}"#,
        )
        .unwrap_err();
        assert!(
            matches!(&err, Error::Invalid { field, .. } if field == "seedbank.K"),
            "{err}"
        );
    }

    #[test]
    fn slow_wakeups_with_infinite_chi_are_rejected() {
        let err = parse(
            r#"{"experiment": "tau-tail", "masterSeed": 1,
                "seedbank": {"asymptotic": {"A": 1, "alpha": 0.5, "B": 1, "beta": 0.5, "truncation": 1000}}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("chi"), "{err}");
    }

    #[test]
    fn unknown_keys_report_line_and_column() {
        let err =
            parse("{\n  \"experiment\": \"classify\",\n  \"masterSeed\": 1,\n  \"bogus\": 3\n}")
                .unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 4);
                assert!(column > 0);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn zero_replicas_is_invalid() {
        let err = parse(r#"{"experiment": "simulate-dual", "masterSeed": 1, "replicas": 0}"#)
            .unwrap_err();
        assert!(matches!(&err, Error::Invalid { field, .. } if field == "replicas"));
    }

    #[test]
    fn coalescence_defaults_start_far_apart() {
        let cfg = parse(
            r#"{"experiment": "coalescence-prob", "masterSeed": 1, "geometry": {"d": 1, "L": 64}}"#,
        )
        .unwrap();
        let l = cfg.dual.lineages.unwrap();
        assert_eq!((l[0].site, l[1].site), (0, 32));
        assert_eq!(cfg.dual.coalescence_rate, Some(1.0));
        assert_eq!(cfg.numeric.output_times, Some(vec![1e2, 1e3, 1e4]));
    }

    #[test]
    fn kernel_shorthand() {
        assert_eq!(
            KernelSpec::parse_short("simple").unwrap(),
            KernelSpec::Simple { rate: 1.0 }
        );
        assert_eq!(
            KernelSpec::parse_short("power_law_1d:2.5").unwrap(),
            KernelSpec::PowerLaw { delta: 2.5 }
        );
        assert_eq!(
            KernelSpec::parse_short(r#"{"kind": "drifted_2d", "eta": 0.3}"#).unwrap(),
            KernelSpec::Drifted { eta: 0.3 }
        );
        assert_eq!(
            KernelSpec::parse_short("[[[1], 0.25], [[-1], 0.75]]").unwrap(),
            KernelSpec::Offsets {
                entries: vec![(vec![1], 0.25), (vec![-1], 0.75)]
            }
        );
        let back: KernelSpec = serde_json::from_value(
            serde_json::to_value(KernelSpec::PowerLaw { delta: 2.0 }).unwrap(),
        )
        .unwrap();
        assert_eq!(back, KernelSpec::PowerLaw { delta: 2.0 });
        assert!(KernelSpec::parse_short("levy").is_err());
    }

    #[test]
    fn observable_names() {
        assert_eq!(
            parse_observable("y[2,1]", 4, 2).unwrap(),
            Observable::Dormant { site: 2, colour: 1 }
        );
        assert!(parse_observable("x[9]", 4, 2).is_err());
        assert!(parse_observable("y[0]", 4, 2).is_err());
    }

    #[test]
    fn every_experiment_accepts_a_minimal_config() {
        for e in Experiment::ALL {
            let text = format!(r#"{{"experiment": "{}", "masterSeed": 3}}"#, e.id());
            parse(&text).unwrap_or_else(|err| panic!("{}: {err}", e.id()));
            assert_eq!(Experiment::from_id(e.id()), Some(e));
        }
    }
}
