//! Experiment dispatch and output files.
//!
//! Each experiment produces long-format CSV rows
//! `experiment,time,estimator,value,stderr,replicas` and one JSON record.
//! Files are written through a temporary name and renamed into place, the
//! manifest last.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, Geometry, RunConfig};
use crate::dichotomy::{asymmetric_diagnostic, classify, DichotomyInput};
use crate::dual::{
    activity_asymptotics, coalescence_probability, sample_taus, tau_tail_fit, DualDynamics,
    DualOracle, DualState,
};
use crate::duality::{
    battery, fisher_wright_rate, generator_identity_battery, standard_specs, BatteryConfig,
};
use crate::error::{Error, Result};
use crate::forward::{coupled_simulate, simulate, ForwardModel, ForwardRun, InitialCondition};
use crate::ibm::{
    fw_diffusion_limit_check, moran_first_moment_check, moran_fixed_point, moran_relaxation_rate,
    FwLimitConfig, MoranParams, MoranState,
};
use crate::quadrature::QuadratureOptions;
use crate::rng::{replicate_reduce, tag};
use crate::seedbank::WakeTimeLaw;
use crate::stats::{logspace, Estimate, Welford};
use crate::system::{Layer, SeedBankSystem};

/// One CSV line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub experiment: &'static str,
    pub time: f64,
    pub estimator: String,
    pub value: f64,
    pub stderr: f64,
    pub replicas: u64,
}

impl Row {
    fn new(e: Experiment, time: f64, estimator: impl Into<String>, est: Estimate) -> Self {
        Row {
            experiment: e.id(),
            time,
            estimator: estimator.into(),
            value: est.mean,
            stderr: est.stderr,
            replicas: est.n,
        }
    }
}

/// Everything an experiment produced, before it touches the disk.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub experiment: Experiment,
    pub rows: Vec<Row>,
    pub record: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunManifest {
    pub config: Value,
    pub code_version: &'static str,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputFile>,
}

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs the experiment and writes `<id>.csv`, `<id>.json` and `manifest.json` into `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    let started_at = now();
    let output = execute(cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let id = output.experiment.id();
    let mut outputs = Vec::new();
    if !output.rows.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &output.rows {
            w.serialize(r).map_err(|e| Error::Numeric(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Numeric(e.to_string()))?;
        outputs.push(write_atomic(out, &format!("{id}.csv"), &bytes)?);
    }
    let mut json = serde_json::to_vec_pretty(&output.record).expect("records serialize");
    json.push(b'\n');
    outputs.push(write_atomic(out, &format!("{id}.json"), &json)?);
    let manifest = RunManifest {
        config: serde_json::to_value(cfg).expect("config serializes"),
        code_version: CODE_VERSION,
        started_at,
        finished_at: now(),
        outputs,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(out, "manifest.json", &bytes)?;
    Ok(manifest)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputFile> {
    let target = dir.join(name);
    let tmp: PathBuf = dir.join(format!(".{name}.tmp"));
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
    Ok(OutputFile {
        file: name.to_string(),
        bytes: bytes.len() as u64,
        sha256: format!("{:x}", Sha256::digest(bytes)),
    })
}

/// Structured record printed when a run fails.
pub fn error_record(e: &Error) -> Value {
    let mut v = json!({
        "error": e.kind(),
        "message": e.to_string(),
        "exitCode": e.exit_code(),
    });
    match e {
        Error::Invalid { field, .. } => v["field"] = json!(field),
        Error::Parse { line, column, .. } => {
            v["line"] = json!(line);
            v["column"] = json!(column);
        }
        _ => {}
    }
    v
}

/// Computes the experiment without writing anything.
pub fn execute(cfg: &RunConfig) -> Result<RunOutput> {
    let e = cfg.experiment;
    let (rows, record) = match e {
        Experiment::SimulateForward => simulate_forward(cfg)?,
        Experiment::SimulateDual => simulate_dual(cfg)?,
        Experiment::CheckDuality => check_duality(cfg)?,
        Experiment::Classify => (Vec::new(), classify_record(cfg)?),
        Experiment::TauTail => tau_tail(cfg)?,
        Experiment::CoalescenceProb => coalescence(cfg)?,
        Experiment::IbmFw => ibm_fw(cfg)?,
        Experiment::IbmMoran => ibm_moran(cfg)?,
    };
    Ok(RunOutput {
        experiment: e,
        rows,
        record,
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn forward_run(cfg: &RunConfig, initial: InitialCondition) -> ForwardRun {
    ForwardRun {
        g: cfg.diffusion.clone(),
        dt: cfg.numeric.dt.expect("resolved config carries dt"),
        output_times: cfg.output_times(),
        replicas: cfg.replicas(),
        seed: cfg.master_seed,
        initial,
    }
}

fn simulate_forward(cfg: &RunConfig) -> Result<(Vec<Row>, Value)> {
    let e = Experiment::SimulateForward;
    let sys = cfg.system()?;
    let model = ForwardModel::new(&sys)?;
    let initial = cfg
        .initial
        .clone()
        .unwrap_or(InitialCondition::Constant { x: 0.5, y: 0.5 });
    let run = forward_run(cfg, initial);
    let observables = cfg.observables(model.sites(), model.colours())?;
    let summary = simulate(&model, &run, &observables)?;
    let mut rows = Vec::new();
    for (k, &t) in summary.series.times.iter().enumerate() {
        for (o, name) in summary.series.names.iter().enumerate() {
            rows.push(Row::new(e, t, name.clone(), summary.series.values[k][o]));
        }
    }
    let mut record = json!({
        "experiment": e.id(),
        "dt": summary.dt,
        "clampFraction": summary.clamp_fraction,
        "neglectedMass": summary.neglected_mass,
        "colours": model.colours(),
    });
    if let Some(second) = &cfg.coupled_initial {
        let c = coupled_simulate(&model, &run, second)?;
        let mut worst: f64 = 0.0;
        for (k, &t) in c.times.iter().enumerate() {
            rows.push(Row::new(e, t, "lyapunov", c.lyapunov[k]));
            rows.push(Row::new(e, t, "lyapunov_increment", c.increments[k]));
            let inc = c.increments[k];
            if inc.mean > 0.0 {
                worst = worst.max(inc.mean / inc.stderr);
            }
        }
        // largest standardized increase of the coupling functional
        record["lyapunovMaxIncreaseZ"] = json!(worst);
    }
    Ok((rows, record))
}

#[derive(Clone)]
struct DualAcc(Vec<Welford>);

impl crate::rng::Merge for DualAcc {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
    }
}

fn simulate_dual(cfg: &RunConfig) -> Result<(Vec<Row>, Value)> {
    let e = Experiment::SimulateDual;
    let sys = cfg.system()?;
    let rate = cfg.dual.coalescence_rate.expect("resolved");
    let dynamics = DualDynamics::new(&sys, rate)?;
    let start: Vec<_> = cfg
        .dual
        .lineages
        .as_ref()
        .expect("resolved")
        .iter()
        .map(|l| l.eff_site())
        .collect();
    let times = cfg.output_times();
    let z = moment_function(cfg, &sys);
    // per time: lineages, active lineages, optional moment
    let width = 3;
    let acc = replicate_reduce(
        cfg.replicas(),
        cfg.master_seed,
        tag::DUAL,
        || DualAcc(vec![Welford::default(); width * times.len()]),
        |acc, _, rng| {
            let mut s = DualState::new(start.clone());
            for (k, &t) in times.iter().enumerate() {
                dynamics.run(&mut s, t, rng, |_, _| {});
                let active = s
                    .lineages
                    .iter()
                    .filter(|u| u.layer == Layer::Active)
                    .count();
                acc.0[width * k].push(s.lineages.len() as f64);
                acc.0[width * k + 1].push(active as f64);
                if let Some(z) = &z {
                    acc.0[width * k + 2].push(s.lineages.iter().map(|&u| z(u)).product());
                }
            }
        },
    );
    let mut rows = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        rows.push(Row::new(e, t, "lineages", acc.0[width * k].estimate()));
        rows.push(Row::new(
            e,
            t,
            "active_lineages",
            acc.0[width * k + 1].estimate(),
        ));
        if z.is_some() {
            rows.push(Row::new(e, t, "moment", acc.0[width * k + 2].estimate()));
        }
    }
    let cap = cfg.dual.exact_cap.unwrap_or(DualOracle::DEFAULT_CAP);
    let exact = match DualOracle::build(&sys, rate, &start, cap) {
        Ok(oracle) => {
            let coalesced: Vec<f64> = times
                .iter()
                .map(|&t| oracle.coalescence_probability(t))
                .collect();
            let moment: Option<Vec<f64>> = z
                .as_ref()
                .map(|z| times.iter().map(|&t| oracle.moment(t, z)).collect());
            if let Some(m) = &moment {
                for (k, &t) in times.iter().enumerate() {
                    rows.push(Row::new(e, t, "moment_exact", Estimate::exact(m[k])));
                }
            }
            json!({
                "states": oracle.states().len(),
                "coalescenceProbability": coalesced,
                "moment": moment,
            })
        }
        Err(Error::StateSpaceOverflow { cap }) => {
            json!({ "skipped": format!("more than {cap} states") })
        }
        Err(err) => return Err(err),
    };
    let record = json!({
        "experiment": e.id(),
        "coalescenceRate": rate,
        "lineages": start,
        "exact": exact,
    });
    Ok((rows, record))
}

/// `u ↦ z_u` from a deterministic initial condition, when the colour table is small enough to hold one.
#[allow(clippy::type_complexity)]
fn moment_function(
    cfg: &RunConfig,
    sys: &SeedBankSystem,
) -> Option<Box<dyn Fn(crate::system::EffSite) -> f64 + Sync>> {
    let colours = sys.colours().len();
    if colours > crate::forward::FORWARD_COLOUR_LIMIT {
        return None;
    }
    let colours = colours as usize;
    match cfg.initial.clone()? {
        InitialCondition::Constant { x, y } => Some(Box::new(move |u| match u.layer {
            Layer::Active => x,
            Layer::Dormant(_) => y,
        })),
        InitialCondition::Explicit { x, y } => Some(Box::new(move |u| match u.layer {
            Layer::Active => x[u.site],
            Layer::Dormant(m) => y[u.site * colours + m as usize],
        })),
        _ => None,
    }
}

fn check_duality(cfg: &RunConfig) -> Result<(Vec<Row>, Value)> {
    let e = Experiment::CheckDuality;
    let sys = cfg.system()?;
    let d = fisher_wright_rate(&cfg.diffusion)?;
    let mut bc = BatteryConfig::new(d, cfg.replicas(), cfg.master_seed);
    bc.dt = cfg.numeric.dt.expect("resolved");
    bc.times = cfg.output_times();
    if let Some(t) = cfg.duality.threshold {
        bc.threshold = t;
    }
    let specs = standard_specs(&sys)?;
    let report = battery(&sys, &specs, &bc)?;
    let model = ForwardModel::new(&sys)?;
    let identity = generator_identity_battery(
        &model,
        d,
        cfg.duality.probes.unwrap_or(100),
        cfg.master_seed,
    )?;
    let mut rows = Vec::new();
    for c in &report.cases {
        rows.push(Row::new(e, c.t, format!("forward:{}", c.spec), c.forward));
        rows.push(Row::new(e, c.t, format!("dual:{}", c.spec), c.dual));
    }
    let record = json!({
        "experiment": e.id(),
        "battery": to_value(&report),
        "generatorIdentity": to_value(&identity),
        "batteryPassed": report.pass_fraction >= 0.95,
        "identityPassed": identity.max_residual <= 1e-10,
    });
    Ok((rows, record))
}

/// Quadrature settings from the numeric section.
pub fn quadrature_options(cfg: &RunConfig) -> QuadratureOptions {
    let mut o = QuadratureOptions::default();
    if let Some(t) = cfg.numeric.t_max {
        o.t_max = t;
    }
    if let Some(b) = cfg.numeric.boundary_tol {
        o.boundary_tol = b;
    }
    o
}

/// Verdict record of `classify`, shared with the command-line flags.
pub fn classify_record(cfg: &RunConfig) -> Result<Value> {
    let torus = cfg.torus()?;
    let input = DichotomyInput {
        model: cfg.model,
        kernel: cfg.kernel.build(&torus)?,
        seedbank: cfg.seedbank(),
        displacement: cfg
            .displacement
            .first()
            .map(|k| k.build(&torus))
            .transpose()?,
        slow: cfg.classify.slow.clone(),
    };
    let opts = quadrature_options(cfg);
    let verdict = classify(&input, &opts)?;
    let asymmetric = match &cfg.classify.asymmetric {
        Some(a) => {
            let grid = cfg
                .classify
                .t_grid
                .clone()
                .unwrap_or_else(|| logspace(1e8, 1e12, 9));
            Some(asymmetric_diagnostic(a, &grid)?)
        }
        None => None,
    };
    Ok(json!({
        "experiment": Experiment::Classify.id(),
        "model": cfg.model,
        "geometry": cfg.geometry.unwrap_or(Geometry::classify_default(1)),
        "gamma": cfg.seedbank().gamma(),
        "verdict": to_value(&verdict),
        "quadrature": to_value(&opts),
        "asymmetric": asymmetric.as_ref().map(to_value),
    }))
}

fn tau_tail(cfg: &RunConfig) -> Result<(Vec<Row>, Value)> {
    let e = Experiment::TauTail;
    let spec = cfg.seedbank();
    let law = WakeTimeLaw::new(spec.colours()?);
    let n = cfg.tau.samples.expect("resolved");
    let taus = sample_taus(&law, n, cfg.master_seed);
    let mut w = Welford::default();
    for &t in &taus {
        w.push(t);
    }
    let mean = w.estimate();
    let mut rows = vec![Row::new(e, 0.0, "tau_mean", mean)];
    let gamma = spec.gamma();
    let (fit, mean_check) = match gamma {
        Some(_) => (
            Some(tau_tail_fit(&taus, spec.tail_constant_candidates())?),
            Value::Null,
        ),
        None => {
            let exact = law.mean();
            let z = (mean.mean - exact) / mean.stderr;
            (
                None,
                json!({ "rhoOverChi": exact, "z": z, "within3se": z.abs() <= 3.0 }),
            )
        }
    };
    let grid = cfg.tau.activity_grid.clone().expect("resolved");
    let activity = activity_asymptotics(&law, gamma, &grid, cfg.replicas(), cfg.master_seed)?;
    for p in &activity.points {
        rows.push(Row::new(e, p.t, "active_time_scaled", p.active_time));
        rows.push(Row::new(
            e,
            p.t,
            "active_probability_scaled",
            p.active_probability,
        ));
        rows.push(Row::new(e, p.t, "cycles_scaled", p.cycles));
    }
    let record = json!({
        "experiment": e.id(),
        "gamma": gamma,
        "samples": n,
        "tauMean": to_value(&mean),
        "meanCheck": mean_check,
        "tailFit": fit.as_ref().map(to_value),
        "activity": {
            "scaleExponent": activity.scale_exponent,
            "activeFractionLimit": activity.active_fraction_limit,
        },
    });
    Ok((rows, record))
}

fn coalescence(cfg: &RunConfig) -> Result<(Vec<Row>, Value)> {
    let e = Experiment::CoalescenceProb;
    let sys = cfg.system()?;
    let rate = cfg.dual.coalescence_rate.expect("resolved");
    let dynamics = DualDynamics::new(&sys, rate)?;
    let l = cfg.dual.lineages.as_ref().expect("resolved");
    let horizons = cfg.output_times();
    let points = coalescence_probability(
        &dynamics,
        l[0].eff_site(),
        l[1].eff_site(),
        &horizons,
        cfg.replicas(),
        cfg.master_seed,
    )?;
    let rows = points
        .iter()
        .map(|p| Row::new(e, p.horizon, "coalesced", p.probability))
        .collect();
    let record = json!({
        "experiment": e.id(),
        "coalescenceRate": rate,
        "lineages": l,
        "points": to_value(&points),
    });
    Ok((rows, record))
}

fn ibm_fw(cfg: &RunConfig) -> Result<(Vec<Row>, Value)> {
    let e = Experiment::IbmFw;
    let s = &cfg.ibm_fw;
    let fc = FwLimitConfig {
        n_sweep: s.n_sweep.clone().expect("resolved"),
        k_ratio: s.k.expect("resolved"),
        c: s.c.expect("resolved"),
        x0: s.x0.expect("resolved"),
        y0: s.y0.expect("resolved"),
        t: s.t.expect("resolved"),
        replicas: cfg.replicas(),
        seed: cfg.master_seed,
        dt: cfg.numeric.dt.expect("resolved"),
    };
    let report = fw_diffusion_limit_check(&fc)?;
    let mut rows = vec![Row::new(e, fc.t, "sde_mean", report.sde_mean)];
    for p in &report.points {
        rows.push(Row::new(
            e,
            fc.t,
            format!("chain_mean[N={}]", p.n),
            p.chain_mean,
        ));
    }
    let decreasing = report.points.windows(2).all(|w| w[1].w1 < w[0].w1);
    let record = json!({
        "experiment": e.id(),
        "report": to_value(&report),
        "w1StrictlyDecreasing": decreasing,
    });
    Ok((rows, record))
}

fn ibm_moran(cfg: &RunConfig) -> Result<(Vec<Row>, Value)> {
    let e = Experiment::IbmMoran;
    let s = &cfg.ibm_moran;
    let p = MoranParams::new(
        s.n.expect("resolved"),
        s.c_a.clone().expect("resolved"),
        s.c_d.clone().expect("resolved"),
    )?;
    let start = s.initial.clone().expect("resolved");
    let initial = MoranState {
        x: start.x,
        y: start.y,
        z_d: start.z_d,
    };
    let report = moran_first_moment_check(
        &p,
        &initial,
        &cfg.output_times(),
        cfg.replicas(),
        cfg.master_seed,
        s.tol.expect("resolved"),
    )?;
    let mut rows = Vec::new();
    for (k, &t) in report.times.iter().enumerate() {
        rows.push(Row::new(e, t, "x_bar", report.x[k]));
        rows.push(Row::new(
            e,
            t,
            "x_kernel",
            Estimate::exact(report.kernel_x[k]),
        ));
        for (m, y) in report.y[k].iter().enumerate() {
            rows.push(Row::new(e, t, format!("y_bar[{m}]"), *y));
            rows.push(Row::new(
                e,
                t,
                format!("y_kernel[{m}]"),
                Estimate::exact(report.kernel_y[k][m]),
            ));
        }
    }
    let record = json!({
        "experiment": e.id(),
        "K": p.k(),
        "e": p.e(),
        "fixedPoint": moran_fixed_point(&p),
        "relaxationRate": moran_relaxation_rate(&p),
        "report": to_value(&report),
    });
    Ok((rows, record))
}
