//! Replica ensembles of the forward dynamics.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DiffusionFunction, ForwardModel, Monomial, Scratch, SystemState, TestFunction};
use crate::error::{Error, Result};
use crate::rng::{replicate_reduce, tag, Merge};
use crate::stats::{Estimate, Welford};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `x ≡ x`, every dormant coordinate `≡ y`.
    Constant { x: f64, y: f64 },
    /// Per-site values; `y` is site-major with one entry per colour.
    Explicit { x: Vec<f64>, y: Vec<f64> },
    /// Independent Uniform[0,1] coordinates.
    Uniform,
    /// Independent Bernoulli(p) coordinates.
    Bernoulli { p: f64 },
}

impl InitialCondition {
    pub fn validate(&self, sites: usize, colours: usize) -> Result<()> {
        match self {
            InitialCondition::Constant { x, y } => {
                if !(0.0..=1.0).contains(x) || !(0.0..=1.0).contains(y) {
                    return Err(Error::invalid("initial", "frequencies must lie in [0,1]"));
                }
            }
            InitialCondition::Explicit { x, y } => {
                SystemState {
                    x: x.clone(),
                    y: y.clone(),
                    colours,
                    t: 0.0,
                }
                .validate()?;
                if x.len() != sites {
                    return Err(Error::invalid(
                        "initial.x",
                        format!("expected {sites} values, got {}", x.len()),
                    ));
                }
            }
            InitialCondition::Uniform => {}
            InitialCondition::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::invalid("initial.p", "must lie in [0,1]"));
                }
            }
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, sites: usize, colours: usize, rng: &mut R) -> SystemState {
        match self {
            InitialCondition::Constant { x, y } => SystemState::constant(sites, colours, *x, *y),
            InitialCondition::Explicit { x, y } => SystemState {
                x: x.clone(),
                y: y.clone(),
                colours,
                t: 0.0,
            },
            InitialCondition::Uniform => SystemState {
                x: (0..sites).map(|_| rng.gen()).collect(),
                y: (0..sites * colours).map(|_| rng.gen()).collect(),
                colours,
                t: 0.0,
            },
            InitialCondition::Bernoulli { p } => {
                let mut b = || if rng.gen::<f64>() < *p { 1.0 } else { 0.0 };
                SystemState {
                    x: (0..sites).map(|_| b()).collect(),
                    y: (0..sites * colours).map(|_| b()).collect(),
                    colours,
                    t: 0.0,
                }
            }
        }
    }
}

/// Per-replica quantity averaged across the ensemble.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    /// Volume-averaged preserved density.
    Theta,
    /// `θ(t) − θ(0)` of the same replica.
    ThetaDrift,
    /// `x_i(1 − x_i)` at one site.
    Heterozygosity {
        site: usize,
    },
    /// Volume average of `x_i(1 − x_i)`.
    MeanHeterozygosity,
    Active {
        site: usize,
    },
    Dormant {
        site: usize,
        colour: usize,
    },
    Moment(Monomial),
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::Theta => "theta".into(),
            Observable::ThetaDrift => "theta_drift".into(),
            Observable::Heterozygosity { site } => format!("heterozygosity[{site}]"),
            Observable::MeanHeterozygosity => "heterozygosity".into(),
            Observable::Active { site } => format!("x[{site}]"),
            Observable::Dormant { site, colour } => format!("y[{site},{colour}]"),
            Observable::Moment(m) => {
                let parts: Vec<String> = m
                    .factors()
                    .iter()
                    .map(|(u, p)| match u.layer {
                        crate::system::Layer::Active => format!("x{}^{p}", u.site),
                        crate::system::Layer::Dormant(c) => format!("y{}.{c}^{p}", u.site),
                    })
                    .collect();
                format!("moment[{}]", parts.join("*"))
            }
        }
    }

    fn eval(&self, model: &ForwardModel, s: &SystemState, theta0: f64) -> f64 {
        match self {
            Observable::Theta => model.theta(s),
            Observable::ThetaDrift => model.theta(s) - theta0,
            Observable::Heterozygosity { site } => s.x[*site] * (1.0 - s.x[*site]),
            Observable::MeanHeterozygosity => {
                s.x.iter().map(|x| x * (1.0 - x)).sum::<f64>() / s.x.len() as f64
            }
            Observable::Active { site } => s.x[*site],
            Observable::Dormant { site, colour } => s.y(*site, *colour),
            Observable::Moment(m) => m.value(s),
        }
    }
}

/// Numeric settings of a forward ensemble.
#[derive(Clone, Debug)]
pub struct ForwardRun {
    pub g: DiffusionFunction,
    pub dt: f64,
    pub output_times: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub initial: InitialCondition,
}

impl ForwardRun {
    pub fn validate(&self, model: &ForwardModel) -> Result<()> {
        self.g.validate()?;
        model.check_dt(self.dt)?;
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be at least 1"));
        }
        if self.output_times.is_empty() {
            return Err(Error::invalid(
                "output_times",
                "need at least one output time",
            ));
        }
        if self.output_times.windows(2).any(|w| w[1] < w[0]) || self.output_times[0] < 0.0 {
            return Err(Error::invalid(
                "output_times",
                "must be nonnegative and nondecreasing",
            ));
        }
        self.initial.validate(model.sites(), model.colours())
    }
}

/// Estimates indexed `[time][observable]`.
#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    pub values: Vec<Vec<Estimate>>,
}

impl TimeSeries {
    pub fn column(&self, obs: usize) -> Vec<Estimate> {
        self.values.iter().map(|row| row[obs]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ForwardSummary {
    pub series: TimeSeries,
    /// Clamped coordinate updates per coordinate update.
    pub clamp_fraction: f64,
    pub neglected_mass: f64,
    pub dt: f64,
}

#[derive(Clone)]
struct Acc {
    w: Vec<Welford>,
    clamps: u64,
    updates: u64,
}

impl Merge for Acc {
    fn merge(&mut self, other: Self) {
        self.w.merge(other.w);
        self.clamps += other.clamps;
        self.updates += other.updates;
    }
}

/// Advance `s` to time `target` in steps of at most `dt`.
fn advance<R: Rng + ?Sized>(
    model: &ForwardModel,
    g: &DiffusionFunction,
    s: &mut SystemState,
    target: f64,
    dt: f64,
    rng: &mut R,
    scratch: &mut Scratch,
) -> (u64, u64) {
    let (mut clamps, mut updates) = (0u64, 0u64);
    let coords = (s.x.len() + s.y.len()) as u64;
    while target - s.t > 1e-12 * target.max(1.0) {
        let h = dt.min(target - s.t);
        clamps += model.em_step(s, g, h, rng, scratch) as u64;
        updates += coords;
    }
    s.t = target;
    (clamps, updates)
}

/// Runs `run.replicas` independent replicas and estimates each observable at
/// each output time.
pub fn simulate(
    model: &ForwardModel,
    run: &ForwardRun,
    observables: &[Observable],
) -> Result<ForwardSummary> {
    run.validate(model)?;
    let nt = run.output_times.len();
    let no = observables.len();
    let acc = replicate_reduce(
        run.replicas,
        run.seed,
        tag::FORWARD,
        || Acc {
            w: vec![Welford::default(); nt * no],
            clamps: 0,
            updates: 0,
        },
        |acc, _r, rng| {
            let mut s = run.initial.draw(model.sites(), model.colours(), rng);
            let theta0 = model.theta(&s);
            let mut scratch = Scratch::default();
            for (k, &t) in run.output_times.iter().enumerate() {
                let (c, u) = advance(model, &run.g, &mut s, t, run.dt, rng, &mut scratch);
                acc.clamps += c;
                acc.updates += u;
                for (o, obs) in observables.iter().enumerate() {
                    acc.w[k * no + o].push(obs.eval(model, &s, theta0));
                }
            }
        },
    );
    let values = (0..nt)
        .map(|k| (0..no).map(|o| acc.w[k * no + o].estimate()).collect())
        .collect();
    Ok(ForwardSummary {
        series: TimeSeries {
            times: run.output_times.clone(),
            names: observables.iter().map(|o| o.name()).collect(),
            values,
        },
        clamp_fraction: if acc.updates == 0 {
            0.0
        } else {
            acc.clamps as f64 / acc.updates as f64
        },
        neglected_mass: model.neglected_mass(),
        dt: run.dt,
    })
}

/// Preserved-density path of a recorded trajectory.
pub fn theta_trajectory(model: &ForwardModel, states: &[SystemState]) -> Vec<f64> {
    states.iter().map(|s| model.theta(s)).collect()
}

#[derive(Clone, Debug)]
pub struct CoupledSummary {
    pub times: Vec<f64>,
    /// `Ê[|Δ| + Σ K_m |δ_m|]`, volume averaged.
    pub lyapunov: Vec<Estimate>,
    /// Paired increments `L(t_k) − L(t_{k−1})`, the first against time 0.
    pub increments: Vec<Estimate>,
}

fn lyapunov(model: &ForwardModel, a: &SystemState, b: &SystemState) -> f64 {
    let nc = model.colours();
    let k = model.k();
    let mut total = 0.0;
    for i in 0..a.x.len() {
        total += (a.x[i] - b.x[i]).abs();
        for m in 0..nc {
            total += k[m] * (a.y[i * nc + m] - b.y[i * nc + m]).abs();
        }
    }
    total / a.x.len() as f64
}

/// Two copies driven by the same Brownian increments.
pub fn coupled_simulate(
    model: &ForwardModel,
    run: &ForwardRun,
    second: &InitialCondition,
) -> Result<CoupledSummary> {
    run.validate(model)?;
    second.validate(model.sites(), model.colours())?;
    if !model.system().rho().is_finite() {
        return Err(Error::invalid(
            "seedbank",
            "the coupling functional needs a finite seed-bank size (rho < infinity)",
        ));
    }
    let nt = run.output_times.len();
    let acc = replicate_reduce(
        run.replicas,
        run.seed,
        tag::COUPLED,
        || vec![Welford::default(); 2 * nt],
        |acc, _r, rng| {
            let mut a = run.initial.draw(model.sites(), model.colours(), rng);
            let mut b = second.draw(model.sites(), model.colours(), rng);
            let (mut sa, mut sb) = (Scratch::default(), Scratch::default());
            let mut xi = vec![0.0; model.sites()];
            let mut prev = lyapunov(model, &a, &b);
            for (k, &t) in run.output_times.iter().enumerate() {
                while t - a.t > 1e-12 * t.max(1.0) {
                    let h = run.dt.min(t - a.t);
                    for v in xi.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    model.em_step_with_noise(&mut a, &run.g, h, &xi, &mut sa);
                    model.em_step_with_noise(&mut b, &run.g, h, &xi, &mut sb);
                }
                a.t = t;
                b.t = t;
                let l = lyapunov(model, &a, &b);
                acc[k].push(l);
                acc[nt + k].push(l - prev);
                prev = l;
            }
        },
    );
    Ok(CoupledSummary {
        times: run.output_times.clone(),
        lyapunov: acc[..nt].iter().map(Welford::estimate).collect(),
        increments: acc[nt..].iter().map(Welford::estimate).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Torus, WalkKernel};
    use crate::seedbank::SeedBankSpec;
    use crate::system::{Model, SeedBankSystem};

    fn ring(l: usize) -> ForwardModel {
        let t = Torus::new(1, l).unwrap();
        let sys = SeedBankSystem::from_spec(
            Model::One,
            WalkKernel::simple_walk(&t, 1.0).unwrap(),
            &SeedBankSpec::Single { k: 1.0, e: 1.0 },
            vec![],
        )
        .unwrap();
        ForwardModel::new(&sys).unwrap()
    }

    #[test]
    fn degenerate_start_stays_put() {
        let model = ring(4);
        let run = ForwardRun {
            g: DiffusionFunction::fisher_wright(1.0),
            dt: 0.01,
            output_times: vec![0.0, 0.5, 1.0],
            replicas: 8,
            seed: 3,
            initial: InitialCondition::Constant { x: 1.0, y: 1.0 },
        };
        let out = simulate(
            &model,
            &run,
            &[Observable::Theta, Observable::MeanHeterozygosity],
        )
        .unwrap();
        for row in &out.series.values {
            assert_eq!(row[0].mean, 1.0);
            assert_eq!(row[1].mean, 0.0);
        }
    }

    #[test]
    fn simulate_is_reproducible() {
        let model = ring(4);
        let run = ForwardRun {
            g: DiffusionFunction::fisher_wright(1.0),
            dt: 0.01,
            output_times: vec![0.3],
            replicas: 300,
            seed: 11,
            initial: InitialCondition::Uniform,
        };
        let a = simulate(&model, &run, &[Observable::Active { site: 0 }]).unwrap();
        let b = simulate(&model, &run, &[Observable::Active { site: 0 }]).unwrap();
        assert_eq!(
            a.series.values[0][0].mean.to_bits(),
            b.series.values[0][0].mean.to_bits()
        );
    }

    #[test]
    fn identical_copies_never_separate() {
        let model = ring(3);
        let run = ForwardRun {
            g: DiffusionFunction::fisher_wright(1.0),
            dt: 0.01,
            output_times: vec![0.5, 1.0],
            replicas: 20,
            seed: 5,
            initial: InitialCondition::Constant { x: 0.4, y: 0.7 },
        };
        let c = coupled_simulate(&model, &run, &run.initial.clone()).unwrap();
        assert!(c.lyapunov.iter().all(|e| e.mean == 0.0));
    }

    #[test]
    fn rejects_replicas_zero() {
        let model = ring(3);
        let run = ForwardRun {
            g: DiffusionFunction::fisher_wright(1.0),
            dt: 0.01,
            output_times: vec![1.0],
            replicas: 0,
            seed: 5,
            initial: InitialCondition::Uniform,
        };
        assert!(simulate(&model, &run, &[]).is_err());
    }
}
