//! The eleven acceptance criteria at their pinned tolerances. Runs without
//! the test harness so every criterion prints one line; exits nonzero if any fails.

use std::time::Instant;

use seedbank_lab::config::Geometry;
use seedbank_lab::dichotomy::{
    asymmetric_diagnostic, classify, AsymmetricOptions, DichotomyInput, Verdict,
};
use seedbank_lab::dual::{
    activity_asymptotics, coalescence_probability, sample_taus, tau_tail_fit, DualDynamics,
};
use seedbank_lab::duality::{
    battery, battery_state, first_moment_oracle, generator_identity_battery, standard_specs,
    BatteryConfig,
};
use seedbank_lab::forward::{
    coupled_simulate, simulate, DiffusionFunction, ForwardModel, ForwardRun, InitialCondition,
    Observable,
};
use seedbank_lab::ibm::{
    fw_diffusion_limit_check, moran_first_moment_check, moran_fixed_point_exact, FwLimitConfig,
    MoranParams, MoranState, Rational,
};
use seedbank_lab::lattice::{Torus, WalkKernel};
use seedbank_lab::quadrature::{integrate, Convergence, PowerLaw, QuadratureOptions, Weight};
use seedbank_lab::seedbank::{SeedBankSpec, WakeTimeLaw};
use seedbank_lab::stats::{logspace, Welford};
use seedbank_lab::system::{EffSite, Model, SeedBankSystem};

type Outcome = Result<String, String>;

fn ring_system(model: Model, sites: usize) -> SeedBankSystem {
    let t = Torus::new(1, sites).unwrap();
    let k = WalkKernel::simple_walk(&t, 1.0).unwrap();
    let (sb, disp) = match model {
        Model::One => (SeedBankSpec::Single { k: 1.5, e: 0.6 }, vec![]),
        _ => (
            SeedBankSpec::Explicit {
                k: vec![0.5, 2.0],
                e: vec![1.0, 0.3],
            },
            if model == Model::Three {
                vec![k.normalized().unwrap()]
            } else {
                vec![]
            },
        ),
    };
    SeedBankSystem::from_spec(model, k, &sb, disp).unwrap()
}

const MODELS: [Model; 3] = [Model::One, Model::Two, Model::Three];

fn fat_tail(gamma: f64) -> SeedBankSpec {
    SeedBankSpec::Asymptotic {
        a: 1.0,
        alpha: 0.0,
        b: 1.0,
        beta: 1.0 / (1.0 - gamma),
        truncation: 1_000_000_000_000,
    }
}

fn verdict(model: Model, kernel: &WalkKernel, seedbank: SeedBankSpec) -> Verdict {
    classify(
        &DichotomyInput {
            model,
            kernel: kernel.clone(),
            seedbank,
            displacement: None,
            slow: None,
        },
        &QuadratureOptions::default(),
    )
    .unwrap()
    .verdict
}

fn simple_kernel(d: usize) -> WalkKernel {
    let t = Torus::new(d, Geometry::classify_default(d).l).unwrap();
    WalkKernel::simple_walk(&t, 1.0).unwrap()
}

fn duality_battery() -> Outcome {
    let mut cases = 0;
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for (i, model) in MODELS.into_iter().enumerate() {
        let sys = ring_system(model, 8);
        let specs = standard_specs(&sys).unwrap();
        let r = battery(
            &sys,
            &specs,
            &BatteryConfig::new(1.0, 100_000, 100 + i as u64),
        )
        .unwrap();
        cases += r.cases.len();
        passed += r.cases.iter().filter(|c| c.pass).count();
        worst = r.cases.iter().fold(worst, |w, c| w.max(c.gap.abs()));
        if r.cases.len() < 30 || r.pass_fraction < 0.95 {
            return Err(format!(
                "model {model:?}: {} cases, pass fraction {:.3}",
                r.cases.len(),
                r.pass_fraction
            ));
        }
    }
    Ok(format!(
        "{passed}/{cases} cases with |gap| <= 3, largest |gap| {worst:.2}"
    ))
}

fn generator_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for model in MODELS {
        let fm = ForwardModel::new(&ring_system(model, 8)).unwrap();
        let r = generator_identity_battery(&fm, 1.0, 100, 21).unwrap();
        worst = worst.max(r.max_residual);
    }
    if worst <= 1e-10 {
        Ok(format!("max residual {worst:.2e} over 3 x 100 probes"))
    } else {
        Err(format!("max residual {worst:.2e}"))
    }
}

/// Largest `|θ drift| / SE` seen by the forward runs, shared with the martingale criterion.
struct ForwardEvidence {
    first_moment_z: f64,
    theta_z: Vec<f64>,
}

fn first_moment_runs() -> ForwardEvidence {
    let sys = ring_system(Model::Two, 8);
    let model = ForwardModel::new(&sys).unwrap();
    let z = battery_state(&sys);
    let times = vec![0.5, 2.0, 10.0];
    let oracle = first_moment_oracle(&sys, &z, &times).unwrap();
    let mut obs: Vec<Observable> = (0..8).map(|site| Observable::Active { site }).collect();
    obs.push(Observable::ThetaDrift);
    let mut worst: f64 = 0.0;
    let mut theta_z = Vec::new();
    for (i, g) in [
        DiffusionFunction::fisher_wright(1.0),
        DiffusionFunction::KimuraOhta { d: 4.0 },
    ]
    .into_iter()
    .enumerate()
    {
        let run = ForwardRun {
            dt: model.default_dt(&g),
            g,
            output_times: times.clone(),
            replicas: 10_000,
            seed: 300 + i as u64,
            initial: InitialCondition::Explicit {
                x: z.x.clone(),
                y: z.y.clone(),
            },
        };
        let s = simulate(&model, &run, &obs).unwrap();
        for (k, row) in s.series.values.iter().enumerate() {
            for site in 0..8 {
                let exact = oracle[k][sys.eff_index(EffSite::active(site))];
                worst = worst.max((row[site].mean - exact).abs() / row[site].stderr);
            }
            let drift = row[8];
            theta_z.push(drift.mean.abs() / drift.stderr);
        }
    }
    ForwardEvidence {
        first_moment_z: worst,
        theta_z,
    }
}

fn first_moment(ev: &ForwardEvidence) -> Outcome {
    let msg = format!(
        "max |forward - kernel| / SE = {:.2} over 48 coordinates",
        ev.first_moment_z
    );
    if ev.first_moment_z <= 3.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn martingale(ev: &ForwardEvidence, lyapunov_theta: &[f64]) -> Outcome {
    let all: Vec<f64> = ev.theta_z.iter().chain(lyapunov_theta).copied().collect();
    let worst = all.iter().fold(0.0f64, |a, b| a.max(*b));
    let msg = format!(
        "max |theta drift| / SE = {worst:.2} over {} checks",
        all.len()
    );
    if worst <= 3.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn wakeup_tail() -> Outcome {
    let mut parts = Vec::new();
    for (alpha, beta) in [(0.0, 2.0), (0.5, 1.0)] {
        let spec = SeedBankSpec::Asymptotic {
            a: 1.0,
            alpha,
            b: 1.0,
            beta,
            truncation: 1_000_000_000_000,
        };
        let law = WakeTimeLaw::new(spec.colours().unwrap());
        let fit =
            tau_tail_fit(&sample_taus(&law, 1_000_000, 51), None).map_err(|e| e.to_string())?;
        if (fit.gamma - 0.5).abs() > 0.05 {
            return Err(format!("alpha={alpha} beta={beta}: gamma {:.4}", fit.gamma));
        }
        parts.push(format!("gamma({alpha},{beta}) = {:.4}", fit.gamma));
    }
    for spec in [
        SeedBankSpec::Single { k: 2.0, e: 0.5 },
        SeedBankSpec::Explicit {
            k: vec![0.5, 2.0],
            e: vec![1.0, 0.3],
        },
    ] {
        let law = WakeTimeLaw::new(spec.colours().unwrap());
        let mut w = Welford::default();
        for t in sample_taus(&law, 1_000_000, 52) {
            w.push(t);
        }
        let est = w.estimate();
        let c = spec.colours().unwrap();
        let exact = c.rho().effective() / c.chi();
        let z = (est.mean - exact) / est.stderr;
        if z.abs() > 3.0 {
            return Err(format!(
                "mean {:.4} vs rho/chi {exact:.4} (z {z:.2})",
                est.mean
            ));
        }
        parts.push(format!("mean/(rho/chi) z = {z:+.2}"));
    }
    Ok(parts.join(", "))
}

fn dichotomy_table() -> Outcome {
    let mut checked = 0;
    let mut fail = Vec::new();
    let mut expect = |what: String, got: Verdict, ok: bool| {
        checked += 1;
        if !ok {
            fail.push(format!("{what}: {got:?}"));
        }
    };
    let single = SeedBankSpec::Single { k: 1.0, e: 1.0 };
    for d in 1..=3 {
        let v = verdict(Model::One, &simple_kernel(d), single.clone());
        let want = if d == 3 {
            Verdict::Coexistence
        } else {
            Verdict::Clustering
        };
        expect(format!("model 1 d={d}"), v, v == want);
    }
    let k1 = simple_kernel(1);
    // boundary window: γ within 0.02 of 2/3 may come back inconclusive
    for gamma in [0.2, 0.4, 0.5, 0.6, 0.65, 0.67, 0.7, 0.75, 0.9] {
        let v = verdict(Model::Two, &k1, fat_tail(gamma));
        let ok = if (gamma - 2.0 / 3.0f64).abs() <= 0.02 {
            v == Verdict::BoundaryInconclusive
                || v == if gamma < 2.0 / 3.0 {
                    Verdict::Coexistence
                } else {
                    Verdict::Clustering
                }
        } else if gamma < 2.0 / 3.0 {
            v == Verdict::Coexistence
        } else {
            v == Verdict::Clustering
        };
        expect(format!("model 2 d=1 gamma={gamma}"), v, ok);
    }
    let k2 = simple_kernel(2);
    for gamma in [0.2, 0.5, 0.9] {
        let v = verdict(Model::Two, &k2, fat_tail(gamma));
        expect(
            format!("model 2 d=2 gamma={gamma}"),
            v,
            v == Verdict::Coexistence,
        );
    }
    let ring = Torus::new(1, 1 << 16).unwrap();
    let kernels = [
        ("simple d=1", simple_kernel(1)),
        ("simple d=2", simple_kernel(2)),
        ("simple d=3", simple_kernel(3)),
        (
            "power-law 2.0",
            WalkKernel::power_law_1d(&ring, 2.0).unwrap(),
        ),
        (
            "power-law 2.5",
            WalkKernel::power_law_1d(&ring, 2.5).unwrap(),
        ),
    ];
    for (name, k) in &kernels {
        for gamma in [0.2, 0.4] {
            let v = verdict(Model::Two, k, fat_tail(gamma));
            expect(
                format!("{name} gamma={gamma}"),
                v,
                v == Verdict::Coexistence,
            );
        }
    }
    // closed-form power-law integrands: ∫₁^∞ t^{w-e} dt = 1/(e-w-1) when e-w > 1
    let opts = QuadratureOptions::default();
    for (e, w) in [
        (1.5, 0.0),
        (2.0, 0.0),
        (0.5, -1.0),
        (1.5, -0.25),
        (0.5, 0.0),
        (0.8, -0.1),
    ] {
        let est = integrate(&PowerLaw::new(e), &Weight::power(w), &opts).unwrap();
        let finite = e - w > 1.0;
        let ok = if finite {
            est.convergence == Convergence::Finite && (est.value * (e - w - 1.0) - 1.0).abs() < 1e-3
        } else {
            est.convergence.is_infinite()
        };
        checked += 1;
        if !ok {
            fail.push(format!("t^{w}·t^-{e}: {:?} {}", est.convergence, est.value));
        }
    }
    if fail.is_empty() {
        Ok(format!(
            "{checked} verdicts and closed-form integrals agree"
        ))
    } else {
        Err(fail.join("; "))
    }
}

fn coalescence_trend() -> Outcome {
    let single = SeedBankSpec::Single { k: 1.0, e: 1.0 };
    let run = |d: usize, l: usize, b: usize, horizons: &[f64], reps: usize| {
        let t = Torus::new(d, l).unwrap();
        let sys = SeedBankSystem::from_spec(
            Model::One,
            WalkKernel::simple_walk(&t, 1.0).unwrap(),
            &single,
            vec![],
        )
        .unwrap();
        let dynamics = DualDynamics::new(&sys, 1.0).unwrap();
        coalescence_probability(
            &dynamics,
            EffSite::active(0),
            EffSite::active(b),
            horizons,
            reps,
            71,
        )
        .unwrap()
    };
    let line = run(1, 64, 32, &[1e2, 1e3, 1e4], 4000);
    let p: Vec<f64> = line.iter().map(|c| c.probability.mean).collect();
    if !(p[0] < p[1] && p[1] < p[2] && p[2] > 0.9) {
        return Err(format!("1-d estimates {p:?}"));
    }
    // same-site start: the meeting probability levels off well below 1
    let cube = run(3, 8, 0, &[25.0, 50.0, 100.0], 20_000);
    let q: Vec<f64> = cube.iter().map(|c| c.probability.mean).collect();
    let last = cube[2].probability;
    let gap = (1.0 - last.mean) / last.stderr;
    let rel = q[2] / q[0] - 1.0;
    if q.windows(2).any(|w| w[1] < w[0]) || gap <= 5.0 || rel >= 0.1 {
        return Err(format!(
            "3-d estimates {q:?}, gap {gap:.1} SE, growth {rel:.3}"
        ));
    }
    Ok(format!(
        "1-d {:.3} -> {:.3} -> {:.3}; 3-d plateau {:.3} (gap {gap:.0} SE, growth {:.1}% over T 25..100)",
        p[0],
        p[1],
        p[2],
        q[2],
        100.0 * rel
    ))
}

fn activity_fractions() -> Outcome {
    let mut parts = Vec::new();
    for k in [0.5, 1.0, 2.0] {
        let law = WakeTimeLaw::new(SeedBankSpec::Single { k, e: 1.0 }.colours().unwrap());
        let s = activity_asymptotics(&law, None, &[1e3], 20_000, 81).unwrap();
        let got = s.points[0].active_time.mean;
        let want = 1.0 / (1.0 + k);
        if (got - want).abs() > 0.02 {
            return Err(format!("K={k}: T/t {got:.4} vs {want:.4}"));
        }
        parts.push(format!("K={k}: {got:.4}"));
    }
    let spec = fat_tail(0.5);
    let law = WakeTimeLaw::new(spec.colours().unwrap());
    let s = activity_asymptotics(&law, spec.gamma(), &logspace(1e2, 1e6, 9), 20_000, 82).unwrap();
    let n = s.points.len();
    let a = s.points[n - 3].active_time.mean;
    let b = s.points[n - 1].active_time.mean;
    let change = (b / a - 1.0).abs();
    if change >= 0.1 {
        return Err(format!(
            "T/t^1/2 moved {:.1}% over the last decade",
            100.0 * change
        ));
    }
    parts.push(format!(
        "T/t^1/2 {a:.3} -> {b:.3} over the last decade ({:.1}%)",
        100.0 * change
    ));
    Ok(parts.join(", "))
}

fn coupled_lyapunov() -> (Outcome, Vec<f64>) {
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut theta_z = Vec::new();
    for (i, model) in MODELS.into_iter().enumerate() {
        let sys = ring_system(model, 8);
        let fm = ForwardModel::new(&sys).unwrap();
        let g = DiffusionFunction::fisher_wright(1.0);
        let run = ForwardRun {
            dt: fm.default_dt(&g),
            g,
            output_times: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            replicas: 4000,
            seed: 900 + i as u64,
            initial: InitialCondition::Constant { x: 0.2, y: 0.9 },
        };
        let second = InitialCondition::Uniform;
        let c = coupled_simulate(&fm, &run, &second).unwrap();
        for inc in &c.increments {
            worst = worst.max(inc.mean / inc.stderr);
        }
        // the first copy's preserved density, checked for the martingale criterion
        let s = simulate(&fm, &run, &[Observable::ThetaDrift]).unwrap();
        theta_z.extend(
            s.series
                .values
                .iter()
                .map(|r| r[0].mean.abs() / r[0].stderr),
        );
    }
    let msg = format!("largest standardized increment {worst:+.2} over 3 models x 5 times");
    (if worst <= 3.0 { Ok(msg) } else { Err(msg) }, theta_z)
}

fn individual_based() -> Outcome {
    let r = fw_diffusion_limit_check(&FwLimitConfig {
        n_sweep: vec![50, 100, 200, 400],
        k_ratio: 1.0,
        c: 1,
        x0: 0.5,
        y0: 0.5,
        t: 0.5,
        replicas: 200_000,
        seed: 4,
        dt: 1e-3,
    })
    .unwrap();
    let w1: Vec<f64> = r.points.iter().map(|p| p.w1).collect();
    if w1.windows(2).any(|w| w[1] >= w[0]) {
        return Err(format!("W1 not strictly decreasing: {w1:?}"));
    }
    let q = |n: i128, d: i128| Rational::new(n, d);
    let fp = moran_fixed_point_exact(&[q(1, 1), q(3, 1)], &[q(2, 1), q(4, 1)]).unwrap();
    if fp != vec![q(4, 9), q(2, 9), q(3, 9)] {
        return Err(format!("fixed point {fp:?}"));
    }
    let mut worst: f64 = 0.0;
    for (p, start) in [
        (
            MoranParams::new(100, vec![2.0], vec![1.0]).unwrap(),
            MoranState {
                x: 20,
                y: vec![50],
                z_d: vec![67],
            },
        ),
        (
            MoranParams::new(90, vec![1.0, 3.0], vec![2.0, 4.0]).unwrap(),
            MoranState {
                x: 10,
                y: vec![20, 5],
                z_d: vec![20, 30],
            },
        ),
    ] {
        let m = moran_first_moment_check(&p, &start, &[0.5, 1.0, 2.0], 20_000, 1, 0.05).unwrap();
        worst = worst.max(m.max_abs_z);
    }
    if worst > 3.0 {
        return Err(format!("transformed Moran moments off by {worst:.2} SE"));
    }
    let w1s: Vec<String> = w1.iter().map(|w| format!("{w:.5}")).collect();
    Ok(format!(
        "W1 {}; fixed point 4/9, 2/9, 3/9; Moran max |z| {worst:.2}",
        w1s.join(" > ")
    ))
}

fn asymmetric() -> Outcome {
    let mut parts = Vec::new();
    for gamma in [1.25, 1.5, 1.75] {
        let d = asymmetric_diagnostic(&AsymmetricOptions::new(0.5, gamma), &logspace(1e8, 1e12, 9))
            .unwrap();
        if (d.exponent - d.predicted).abs() > 0.05 {
            return Err(format!(
                "gamma {gamma}: exponent {:.4} vs {:.4}",
                d.exponent, d.predicted
            ));
        }
        parts.push(format!("{:.4}/{:.4}", d.exponent, d.predicted));
    }
    Ok(format!("fitted/predicted {}", parts.join(", ")))
}

fn main() {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let wanted = |n: usize| filter.is_empty() || filter.iter().any(|f| f == &n.to_string());
    let mut results: Vec<(usize, &str, Outcome, f64)> = Vec::new();
    let mut timed = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if wanted(n) {
            let t = Instant::now();
            let r = f();
            let secs = t.elapsed().as_secs_f64();
            let (tag, msg) = match &r {
                Ok(m) => ("PASS", m),
                Err(m) => ("FAIL", m),
            };
            println!("criterion {n:>2} {tag} [{secs:6.1}s] {name}: {msg}");
            results.push((n, name, r, secs));
        }
    };
    let mut forward: Option<ForwardEvidence> = None;
    let mut lyapunov_theta = Vec::new();
    timed(1, "duality battery", &mut duality_battery);
    timed(2, "generator identity", &mut generator_identity);
    timed(3, "first-moment oracle", &mut || {
        first_moment(forward.get_or_insert_with(first_moment_runs))
    });
    timed(9, "coupled Lyapunov functional", &mut || {
        let (r, th) = coupled_lyapunov();
        lyapunov_theta = th;
        r
    });
    timed(4, "martingale", &mut || {
        martingale(
            forward.get_or_insert_with(first_moment_runs),
            &lyapunov_theta,
        )
    });
    timed(5, "wake-up tail", &mut wakeup_tail);
    timed(6, "dichotomy classifier", &mut dichotomy_table);
    timed(7, "coalescence-probability trend", &mut coalescence_trend);
    timed(8, "activity fractions", &mut activity_fractions);
    timed(10, "individual-based limits", &mut individual_based);
    timed(11, "asymmetric diagnostic", &mut asymmetric);
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
