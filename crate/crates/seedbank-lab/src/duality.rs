//! Forward moments against the block-counting dual.
//!
//! With noise `d·x(1−x)` on every active coordinate the forward system and
//! the dual with pair coalescence rate `d` satisfy
//! `E[∏ x(t)^m y(t)^n] = E[∏ x^{L_A(t)} y^{L_D(t)}]`.

use rand::Rng;
use serde::Serialize;

use crate::dual::{transitions, DualDynamics, DualOracle, DualState};
use crate::error::{Error, Result};
use crate::forward::{
    simulate, DiffusionFunction, ForwardModel, ForwardRun, InitialCondition, Monomial, Observable,
    SystemState,
};
use crate::rng::{stream, tag};
use crate::stats::Estimate;
use crate::system::{EffSite, Layer, SeedBankSystem};

pub const DEFAULT_DEGREE_CAP: u32 = 4;

/// Exponents on effective sites; doubles as the dual's initial configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSpec {
    monomial: Monomial,
}

impl MomentSpec {
    pub fn new(factors: &[(EffSite, u32)], cap: u32) -> Result<Self> {
        let monomial = Monomial::new(factors);
        let deg = monomial.degree();
        if deg == 0 || deg > cap {
            return Err(Error::invalid(
                "spec",
                format!("degree {deg} outside 1..={cap}"),
            ));
        }
        Ok(MomentSpec { monomial })
    }

    pub fn monomial(&self) -> &Monomial {
        &self.monomial
    }

    pub fn degree(&self) -> u32 {
        self.monomial.degree()
    }

    pub fn lineages(&self) -> Vec<EffSite> {
        self.monomial
            .factors()
            .iter()
            .flat_map(|&(u, p)| std::iter::repeat(u).take(p as usize))
            .collect()
    }

    pub fn name(&self) -> String {
        Observable::Moment(self.monomial.clone()).name()
    }

    fn check(&self, sys: &SeedBankSystem) -> Result<()> {
        for &(u, _) in self.monomial.factors() {
            let bad_colour = matches!(u.layer, Layer::Dormant(m) if m >= sys.colours().len());
            if u.site >= sys.sites() || bad_colour {
                return Err(Error::invalid(
                    "spec",
                    format!("{u:?} is not an effective site of the system"),
                ));
            }
        }
        Ok(())
    }
}

/// The `d` of a Fisher-Wright diffusion function, rejecting anything else.
pub fn fisher_wright_rate(g: &DiffusionFunction) -> Result<f64> {
    g.fisher_wright_rate()
        .ok_or_else(|| Error::invalid("g", "moment duality needs g = d·x(1−x)"))
}

/// Forward estimates of each spec's moment; `series.values[time][spec]`.
pub fn forward_moment(
    model: &ForwardModel,
    run: &ForwardRun,
    specs: &[MomentSpec],
) -> Result<Vec<Vec<Estimate>>> {
    fisher_wright_rate(&run.g)?;
    for s in specs {
        s.check(model.system())?;
    }
    let obs: Vec<Observable> = specs
        .iter()
        .map(|s| Observable::Moment(s.monomial.clone()))
        .collect();
    Ok(simulate(model, run, &obs)?.series.values)
}

fn z_of(state: &SystemState) -> impl Fn(EffSite) -> f64 + Sync + '_ {
    move |u| state.get(u)
}

/// Dual Monte Carlo of `E[∏ z^{L(t)}]` started from the spec's lineages.
pub fn dual_moment(
    sys: &SeedBankSystem,
    d: f64,
    spec: &MomentSpec,
    z: &SystemState,
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    spec.check(sys)?;
    let dynamics = DualDynamics::new(sys, d)?;
    Ok(crate::dual::dual_moment(
        &dynamics,
        &DualState::new(spec.lineages()),
        times,
        &z_of(z),
        replicas,
        seed,
    ))
}

/// The same expectation from the enumerated dual chain.
pub fn dual_moment_exact(
    sys: &SeedBankSystem,
    d: f64,
    spec: &MomentSpec,
    z: &SystemState,
    times: &[f64],
) -> Result<Vec<f64>> {
    spec.check(sys)?;
    let oracle = DualOracle::build(sys, d, &spec.lineages(), DualOracle::DEFAULT_CAP)?;
    let z = z_of(z);
    Ok(times.iter().map(|&t| oracle.moment(t, &z)).collect())
}

/// Standardised difference; exactly zero when both sides are exact and equal.
pub fn duality_gap(forward: &Estimate, dual: &Estimate) -> f64 {
    forward.z_score(dual)
}

/// `(G H(·, L))(z) − (F H(z, ·))(L)`.
pub fn generator_identity_check(
    model: &ForwardModel,
    d: f64,
    z: &SystemState,
    spec: &MomentSpec,
) -> Result<f64> {
    spec.check(model.system())?;
    let g = DiffusionFunction::fisher_wright(d);
    let forward = model.generator_apply(&g, spec.monomial(), z);
    let lineages = spec.lineages();
    let h = |l: &[EffSite]| l.iter().map(|&u| z.get(u)).product::<f64>();
    let here = h(&lineages);
    let dual: f64 = transitions(model.system(), d, &lineages)
        .iter()
        .map(|(next, rate)| rate * (h(next) - here))
        .sum();
    Ok(forward - dual)
}

/// Random state in `[0,1]` and random spec of degree `1..=cap`.
pub fn random_probe<R: Rng + ?Sized>(
    sys: &SeedBankSystem,
    cap: u32,
    rng: &mut R,
) -> (SystemState, MomentSpec) {
    let sites = sys.sites();
    let colours = sys.colours().len() as usize;
    let z = SystemState {
        x: (0..sites).map(|_| rng.gen()).collect(),
        y: (0..sites * colours).map(|_| rng.gen()).collect(),
        colours,
        t: 0.0,
    };
    let degree = rng.gen_range(1..=cap);
    let factors: Vec<(EffSite, u32)> = (0..degree)
        .map(|_| {
            let site = rng.gen_range(0..sites);
            let layer = rng.gen_range(0..=colours);
            let u = if layer == 0 {
                EffSite::active(site)
            } else {
                EffSite::dormant(site, layer as u64 - 1)
            };
            (u, 1)
        })
        .collect();
    (z, MomentSpec::new(&factors, cap).expect("degree in range"))
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityReport {
    pub probes: usize,
    pub max_residual: f64,
    pub max_scale: f64,
}

/// Largest residual over `probes` random draws.
pub fn generator_identity_battery(
    model: &ForwardModel,
    d: f64,
    probes: usize,
    seed: u64,
) -> Result<IdentityReport> {
    let mut rng = stream(seed, tag::INITIAL, 0);
    let g = DiffusionFunction::fisher_wright(d);
    let mut max_residual: f64 = 0.0;
    let mut max_scale: f64 = 0.0;
    for _ in 0..probes {
        let (z, spec) = random_probe(model.system(), DEFAULT_DEGREE_CAP, &mut rng);
        max_residual = max_residual.max(generator_identity_check(model, d, &z, &spec)?.abs());
        max_scale = max_scale.max(model.generator_apply(&g, spec.monomial(), &z).abs());
    }
    Ok(IdentityReport {
        probes,
        max_residual,
        max_scale,
    })
}

/// First moments `E[x_i(t)]` for any diffusion function, from the lineage
/// kernel: `E[z_u(t)] = Σ_v P_t(u, v) z_v`. Returns `[time][effective index]`.
pub fn first_moment_oracle(
    sys: &SeedBankSystem,
    z: &SystemState,
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let q = sys.b_kernel((crate::forward::FORWARD_COLOUR_LIMIT as usize + 1) * sys.sites())?;
    let f: Vec<f64> = (0..q.len()).map(|i| z.get(sys.eff_site(i))).collect();
    Ok(times.iter().map(|&t| q.evolve_function(&f, t)).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityCase {
    pub spec: String,
    pub degree: u32,
    pub t: f64,
    pub forward: Estimate,
    pub dual: Estimate,
    pub gap: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub d: f64,
    /// Coalescence rate used on the dual side, `d` unless probing.
    pub dual_rate: f64,
    pub threshold: f64,
    pub cases: Vec<DualityCase>,
    pub pass_fraction: f64,
}

/// Battery settings; the forward side runs once and every spec reads from it.
#[derive(Clone, Debug)]
pub struct BatteryConfig {
    pub d: f64,
    pub dual_rate: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl BatteryConfig {
    pub fn new(d: f64, replicas: usize, seed: u64) -> Self {
        BatteryConfig {
            d,
            dual_rate: d,
            dt: 1e-3,
            times: vec![0.5, 1.0, 2.0],
            replicas,
            seed,
            threshold: 3.0,
        }
    }
}

/// A fixed deterministic start with distinct values on every coordinate.
pub fn battery_state(sys: &SeedBankSystem) -> SystemState {
    let sites = sys.sites();
    let colours = sys.colours().len() as usize;
    let wave = |k: usize, phase: f64| 0.5 + 0.4 * ((k as f64 * 0.9 + phase).sin());
    SystemState {
        x: (0..sites).map(|i| wave(i, 0.0)).collect(),
        y: (0..sites * colours).map(|j| wave(j, 1.7)).collect(),
        colours,
        t: 0.0,
    }
}

/// Ten specs of degree 1 to 4 near site 0, using dormant colours 0 and 1 when present.
pub fn standard_specs(sys: &SeedBankSystem) -> Result<Vec<MomentSpec>> {
    let l = sys.sites();
    let c1 = if sys.colours().len() > 1 { 1 } else { 0 };
    let a = EffSite::active;
    let dm = EffSite::dormant;
    let near = 1 % l;
    let far = (l / 2) % l;
    let lists: Vec<Vec<(EffSite, u32)>> = vec![
        vec![(a(0), 1)],
        vec![(dm(0, c1), 1)],
        vec![(a(0), 2)],
        vec![(a(0), 1), (a(near), 1)],
        vec![(a(0), 1), (dm(0, 0), 1)],
        vec![(dm(0, 0), 1), (dm(near, c1), 1)],
        vec![(a(0), 1), (a(far), 1)],
        vec![(a(0), 3)],
        vec![(a(0), 2), (dm(near, c1), 1)],
        vec![(a(0), 2), (a(near), 2)],
    ];
    lists
        .iter()
        .map(|f| MomentSpec::new(f, DEFAULT_DEGREE_CAP))
        .collect()
}

/// Every `(spec, t)` pair: forward Monte Carlo against dual Monte Carlo.
pub fn battery(
    sys: &SeedBankSystem,
    specs: &[MomentSpec],
    cfg: &BatteryConfig,
) -> Result<DualityReport> {
    let model = ForwardModel::new(sys)?;
    let z = battery_state(sys);
    let run = ForwardRun {
        g: DiffusionFunction::fisher_wright(cfg.d),
        dt: cfg.dt,
        output_times: cfg.times.clone(),
        replicas: cfg.replicas,
        seed: cfg.seed,
        initial: InitialCondition::Explicit {
            x: z.x.clone(),
            y: z.y.clone(),
        },
    };
    let fwd = forward_moment(&model, &run, specs)?;
    let mut cases = Vec::new();
    for (j, spec) in specs.iter().enumerate() {
        // distinct dual streams per spec
        let seed = cfg.seed.wrapping_add(j as u64 + 1);
        let dual = dual_moment(sys, cfg.dual_rate, spec, &z, &cfg.times, cfg.replicas, seed)?;
        for (k, &t) in cfg.times.iter().enumerate() {
            let gap = duality_gap(&fwd[k][j], &dual[k]);
            cases.push(DualityCase {
                spec: spec.name(),
                degree: spec.degree(),
                t,
                forward: fwd[k][j],
                dual: dual[k],
                gap,
                pass: gap.abs() <= cfg.threshold,
            });
        }
    }
    let pass_fraction = cases.iter().filter(|c| c.pass).count() as f64 / cases.len().max(1) as f64;
    Ok(DualityReport {
        d: cfg.d,
        dual_rate: cfg.dual_rate,
        threshold: cfg.threshold,
        cases,
        pass_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Torus, WalkKernel};
    use crate::seedbank::SeedBankSpec;
    use crate::system::Model;

    fn system(model: Model) -> SeedBankSystem {
        let t = Torus::new(1, 3).unwrap();
        let k = WalkKernel::simple_walk(&t, 1.0).unwrap();
        let (sb, disp) = match model {
            Model::One => (SeedBankSpec::Single { k: 1.5, e: 0.7 }, vec![]),
            _ => (
                SeedBankSpec::Explicit {
                    k: vec![0.5, 2.0],
                    e: vec![1.0, 0.3],
                },
                if model == Model::Three {
                    vec![WalkKernel::simple_walk(&t, 1.0)
                        .unwrap()
                        .normalized()
                        .unwrap()]
                } else {
                    vec![]
                },
            ),
        };
        SeedBankSystem::from_spec(model, k, &sb, disp).unwrap()
    }

    #[test]
    fn degree_cap_is_enforced() {
        let u = EffSite::active(0);
        assert!(MomentSpec::new(&[(u, 5)], 4).is_err());
        assert!(MomentSpec::new(&[(u, 0)], 4).is_err());
        assert_eq!(
            MomentSpec::new(&[(u, 2), (u, 2)], 4).unwrap().lineages(),
            vec![u; 4]
        );
    }

    #[test]
    fn degree_one_residual_vanishes() {
        for model in [Model::One, Model::Two, Model::Three] {
            let sys = system(model);
            let fm = ForwardModel::new(&sys).unwrap();
            let z = battery_state(&sys);
            let spec = MomentSpec::new(&[(EffSite::active(1), 1)], 4).unwrap();
            assert!(generator_identity_check(&fm, 2.0, &z, &spec).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn random_probes_satisfy_identity() {
        for model in [Model::One, Model::Two, Model::Three] {
            let fm = ForwardModel::new(&system(model)).unwrap();
            let r = generator_identity_battery(&fm, 1.3, 200, 11).unwrap();
            assert!(r.max_residual <= 1e-10, "{model:?} {}", r.max_residual);
            assert!(r.max_scale > 0.1);
        }
    }

    #[test]
    fn doubled_coalescence_rate_breaks_identity() {
        let sys = system(Model::One);
        let fm = ForwardModel::new(&sys).unwrap();
        let z = battery_state(&sys);
        let spec = MomentSpec::new(&[(EffSite::active(0), 2)], 4).unwrap();
        let g = fm.generator_apply(&DiffusionFunction::fisher_wright(1.0), spec.monomial(), &z);
        let l = spec.lineages();
        let h = |l: &[EffSite]| l.iter().map(|&u| z.get(u)).product::<f64>();
        let dual = |d: f64| -> f64 {
            transitions(&sys, d, &l)
                .iter()
                .map(|(n, r)| r * (h(n) - h(&l)))
                .sum()
        };
        assert!((g - dual(1.0)).abs() < 1e-12);
        // x(1-x) term: d·(x − x²) with x = z_0
        let x = z.x[0];
        assert!(((g - dual(2.0)) - (x * x - x)).abs() < 1e-12);
    }

    #[test]
    fn constant_one_is_exact_on_both_sides() {
        let sys = system(Model::Two);
        let z = SystemState::constant(3, 2, 1.0, 1.0);
        let spec =
            MomentSpec::new(&[(EffSite::active(0), 2), (EffSite::dormant(2, 1), 1)], 4).unwrap();
        let mc = dual_moment(&sys, 1.0, &spec, &z, &[0.3, 2.0], 50, 1).unwrap();
        assert!(mc.iter().all(|e| e.mean == 1.0 && e.stderr == 0.0));
        let ex = dual_moment_exact(&sys, 1.0, &spec, &z, &[0.3]).unwrap();
        assert!((ex[0] - 1.0).abs() < 1e-12);
        assert_eq!(duality_gap(&mc[0], &Estimate::exact(1.0)), 0.0);
    }

    #[test]
    fn non_fisher_wright_is_rejected() {
        assert!(fisher_wright_rate(&DiffusionFunction::KimuraOhta { d: 1.0 }).is_err());
        assert_eq!(
            fisher_wright_rate(&DiffusionFunction::fisher_wright(2.5)).unwrap(),
            2.5
        );
    }

    #[test]
    fn exact_dual_matches_first_moment_kernel() {
        let sys = system(Model::Three);
        let z = battery_state(&sys);
        let spec = MomentSpec::new(&[(EffSite::dormant(2, 1), 1)], 4).unwrap();
        let ex = dual_moment_exact(&sys, 1.0, &spec, &z, &[0.7]).unwrap()[0];
        let km = first_moment_oracle(&sys, &z, &[0.7]).unwrap();
        let idx = sys.eff_index(EffSite::dormant(2, 1));
        assert!((ex - km[0][idx]).abs() < 1e-12);
    }
}
