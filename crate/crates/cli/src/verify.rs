//! `collide verify <which>`: numerical checks with a pass/fail verdict.

use collide_core::coupling::{coupled_terminal_states, CoupledState, JumpCoupling};
use collide_core::ergodicity::b2::verify_b2;
use collide_core::ergodicity::probe::Combination;
use collide_core::ergodicity::{
    certify_geometry, coupling_operator_probe, drift_agreement, generator_probe, mc_grid_nodes, Battery, CouplingProbe,
    DriftAgreement, DriftReport, TestFunction,
};
use collide_core::flow::{default_rk4_step, FlowIntegrator};
use collide_core::linalg::norm;
use collide_core::model::{ModelSpec, PhaseState};
use collide_core::pdmp::{simulate, terminal_states};
use collide_core::rng::{stream, StreamId};
use collide_core::stats::{ks_critical_one_sample, ks_critical_two_sample, ks_statistic, ks_two_sample};
use collide_core::Estimate;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::commands::{coupled_init, params_for, pipeline_seed};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Generator,
    Coupling,
    Drift,
    B2,
    Marginals,
    Flow,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub which: Which,
    pub passed: bool,
    pub summary: String,
    pub details: Value,
}

/// KS significance level of the law checks.
pub const KS_LEVEL: f64 = 0.01;
const SIGMAS: f64 = 3.0;

pub fn run(cfg: &RunConfig, which: Which) -> Result<VerifyReport, CliError> {
    let model = cfg.model()?;
    match which {
        Which::Generator => generator(cfg, &model),
        Which::Coupling => coupling(cfg, &model),
        Which::Drift => drift(cfg, &model),
        Which::B2 => b2(cfg, &model),
        Which::Marginals => marginals(cfg, &model),
        Which::Flow => flow(cfg, &model),
    }
}

fn gaussian_state<R: Rng>(dim: usize, scale: f64, rng: &mut R) -> PhaseState {
    let mut draw = || (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>();
    let x = draw();
    let v = draw();
    PhaseState { x, v }
}

/// Probe points for stream `(seed, k)`: standard normal with scale 1.5.
pub fn probe_points(dim: usize, n: usize, seed: u64) -> Vec<PhaseState> {
    let mut rng = stream(seed, u64::MAX);
    (0..n).map(|_| gaussian_state(dim, 1.5, &mut rng)).collect()
}

fn within(e: &Estimate, truth: f64) -> bool {
    (e.mean - truth).abs() <= SIGMAS * e.se + 1e-9 * (1.0 + truth.abs())
}

fn generator(cfg: &RunConfig, model: &ModelSpec) -> Result<VerifyReport, CliError> {
    let e = &cfg.experiment;
    let points = probe_points(model.dim, e.n_probes, cfg.seed);
    let battery = Battery::all(model.dim);
    let rows: Vec<Value> = points
        .par_iter()
        .enumerate()
        .map(|(k, p)| -> Result<Value, CliError> {
            let mut rng = StreamId::new(cfg.seed, k as u64).stream();
            let j = model.rate_at(p);
            let mut checks = Vec::new();
            let one = generator_probe(&Battery::Const(1.0), p, model, e.n_mc, &mut rng)?;
            checks.push(json!({"check": "constant", "value": one.mean, "expected": 0.0, "passed": one.mean == 0.0 && one.se == 0.0}));
            let x1 = generator_probe(&Battery::X1, p, model, e.n_mc, &mut rng)?;
            checks.push(json!({"check": "x1", "value": x1.mean, "expected": p.v[0], "passed": within(&x1, p.v[0])}));
            let grad = model.potential.gradient_vec(&p.x);
            let truth = -model.gamma * p.v[0] - grad[0] - j * p.v[0];
            let v1 = generator_probe(&Battery::V1, p, model, e.n_mc, &mut rng)?;
            checks.push(json!({"check": "v1", "value": v1.mean, "se": v1.se, "expected": truth, "passed": within(&v1, truth)}));
            for w in battery.windows(2) {
                let (f, g) = (&w[0], &w[1]);
                let comb = Combination { a: 0.7, f, b: -1.3, g };
                let lhs = generator_probe(&comb, p, model, e.n_mc, &mut rng)?;
                let pf = generator_probe(f, p, model, e.n_mc, &mut rng)?;
                let pg = generator_probe(g, p, model, e.n_mc, &mut rng)?;
                let rhs = 0.7 * pf.mean - 1.3 * pg.mean;
                let se = (lhs.se.powi(2) + (0.7 * pf.se).powi(2) + (1.3 * pg.se).powi(2)).sqrt();
                let ok = (lhs.mean - rhs).abs() <= SIGMAS * se + 1e-9 * (1.0 + rhs.abs());
                checks.push(json!({"check": "linearity", "f": f.name(), "g": g.name(), "value": lhs.mean, "expected": rhs, "se": se, "passed": ok}));
            }
            Ok(json!({"point": k, "x": p.x, "v": p.v, "checks": checks}))
        })
        .collect::<Result<_, _>>()?;
    let total: usize = rows.iter().map(|r| r["checks"].as_array().unwrap().len()).sum();
    let failed: usize =
        rows.iter().flat_map(|r| r["checks"].as_array().unwrap()).filter(|c| c["passed"] != Value::Bool(true)).count();
    Ok(VerifyReport {
        which: Which::Generator,
        passed: failed == 0,
        summary: format!("{} of {total} generator checks passed", total - failed),
        details: json!({"n_mc": e.n_mc, "points": rows}),
    })
}

/// `(g, h)` combinations: each battery member alone on either chain, and on
/// both.
pub fn coupling_battery(dim: usize) -> Vec<(Battery, Battery)> {
    let mut out = Vec::new();
    for f in Battery::all(dim) {
        if matches!(f, Battery::Zero) {
            continue;
        }
        out.push((f, Battery::Zero));
        out.push((Battery::Zero, f));
        out.push((f, f));
    }
    out
}

/// Runs the coupling-operator probe on every battery combination at each
/// pair; probe `i` uses stream `(seed, i)`.
pub fn coupling_probes(
    model: &ModelSpec,
    coupling: &JumpCoupling,
    pairs: &[CoupledState],
    n_mc: usize,
    seed: u64,
) -> Result<Vec<(usize, CouplingProbe)>, CliError> {
    let combos = coupling_battery(model.dim);
    let jobs: Vec<(usize, usize)> = (0..pairs.len()).flat_map(|p| (0..combos.len()).map(move |c| (p, c))).collect();
    Ok(jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(p, c))| {
            let (g, h) = &combos[c];
            let mut rng = StreamId::new(seed, i as u64).stream();
            coupling_operator_probe(g, h, &pairs[p], model, coupling, n_mc, &mut rng).map(|r| (p, r))
        })
        .collect::<collide_core::Result<_>>()?)
}

pub fn probe_pairs(dim: usize, n: usize, seed: u64) -> Vec<CoupledState> {
    let mut rng = stream(seed, u64::MAX - 1);
    (0..n)
        .map(|_| {
            let a = gaussian_state(dim, 1.5, &mut rng);
            let b = gaussian_state(dim, 1.5, &mut rng);
            CoupledState { first: a, second: b }
        })
        .collect()
}

fn coupling(cfg: &RunConfig, model: &ModelSpec) -> Result<VerifyReport, CliError> {
    let (_, report) = params_for(cfg, model)?;
    let c = JumpCoupling::from(&report.params);
    let pairs = probe_pairs(model.dim, cfg.experiment.n_probes, cfg.seed);
    let probes = coupling_probes(model, &c, &pairs, cfg.experiment.n_mc, cfg.seed)?;
    let failed = probes.iter().filter(|(_, p)| !p.passed).count();
    let worst = probes
        .iter()
        .map(|(_, p)| {
            let scale = 1.0 + p.coupled.mean.abs().max(p.marginal.mean.abs());
            p.residual.abs() / (SIGMAS * p.combined_se + 1e-12 * scale)
        })
        .fold(0.0, f64::max);
    let rows: Vec<Value> = probes
        .iter()
        .map(|(k, p)| json!({"pair": k, "g": p.g, "h": p.h, "residual": p.residual, "combined_se": p.combined_se, "passed": p.passed}))
        .collect();
    Ok(VerifyReport {
        which: Which::Coupling,
        passed: failed == 0,
        summary: format!("{} of {} probes within {SIGMAS} standard errors; worst |residual| / tolerance = {worst:.3}", probes.len() - failed, probes.len()),
        details: json!({"n_mc": cfg.experiment.n_mc, "alpha": c.alpha, "alpha0": c.alpha0, "kappa": c.kappa, "probes": rows}),
    })
}

#[derive(Debug, Serialize)]
struct DriftDetails {
    certificate: DriftReport,
    agreement: Option<DriftAgreement>,
}

fn drift(cfg: &RunConfig, model: &ModelSpec) -> Result<VerifyReport, CliError> {
    let mut p = cfg.pipeline();
    p.seed = pipeline_seed(cfg.seed);
    let cert = certify_geometry(model, &p);
    let certificate = match cert {
        Ok(c) => c.drift,
        Err(collide_core::Error::Inconclusive(msg)) => {
            return Ok(VerifyReport { which: Which::Drift, passed: false, summary: msg, details: Value::Null })
        }
        Err(e) => return Err(e.into()),
    };
    let lyap = collide_core::ergodicity::Lyapunov::new(model, cfg.experiment.beta_exp)?;
    // the closed form is available, so check the Monte Carlo estimator against it
    let agreement = if cfg.experiment.beta_exp == 2.0 && model.density.moment(2.0).is_some() {
        let nodes = mc_grid_nodes(model.dim, certificate.extent);
        Some(drift_agreement(model, &lyap, &nodes, cfg.experiment.n_mc, SIGMAS, &mut StreamId::new(cfg.seed, 0).stream())?)
    } else {
        None
    };
    let passed = certificate.is_valid() && agreement.as_ref().is_none_or(DriftAgreement::passed);
    let mut summary = format!(
        "{:?} certificate: c0 = {}, C0 = {}, R* = {}, min margin {} over {} nodes",
        certificate.method, certificate.c0, certificate.big_c0, certificate.r_star, certificate.min_margin, certificate.n_nodes
    );
    if let Some(a) = &agreement {
        summary += &format!("; Monte Carlo agreement: {} of {} nodes outside {SIGMAS} se", a.violations, a.n_nodes);
    }
    Ok(VerifyReport { which: Which::Drift, passed, summary, details: serde_json::to_value(DriftDetails { certificate, agreement })? })
}

fn b2(cfg: &RunConfig, model: &ModelSpec) -> Result<VerifyReport, CliError> {
    let mut p = cfg.pipeline();
    p.seed = pipeline_seed(cfg.seed);
    let cert = certify_geometry(model, &p)?;
    let g = &cert.geometry;
    let r = verify_b2(model, &cert.lyap, g.alpha, g.kappa, &p.b2, &mut StreamId::new(cfg.seed, 0).stream())?;
    Ok(VerifyReport {
        which: Which::B2,
        passed: r.passed,
        summary: format!("c** = {}, c0** = {}: {}", r.c_double_star, r.c0_double_star, r.reason),
        details: serde_json::to_value(&r)?,
    })
}

fn ks_row(name: &str, d: f64, crit: f64) -> Value {
    json!({"check": name, "statistic": d, "critical": crit, "passed": d < crit})
}

fn marginals(cfg: &RunConfig, model: &ModelSpec) -> Result<VerifyReport, CliError> {
    let e = &cfg.experiment;
    let (_, report) = params_for(cfg, model)?;
    let c = JumpCoupling::from(&report.params);
    let init = coupled_init(cfg)?;
    let n = e.n_traj;
    let coupled = coupled_terminal_states(model, &c, &init, e.t_end, n, cfg.seed)?;
    let first = terminal_states(model, &init.first, e.t_end, n, cfg.seed.wrapping_add(1))?;
    let second = terminal_states(model, &init.second, e.t_end, n, cfg.seed.wrapping_add(2))?;
    let crit2 = ks_critical_two_sample(n, n, KS_LEVEL);
    let norms = |v: &mut dyn Iterator<Item = &Vec<f64>>| v.map(|a| norm(a)).collect::<Vec<f64>>();
    let mut rows = vec![
        ks_row("first |X_T|", ks_two_sample(&norms(&mut coupled.iter().map(|p| &p.first.x)), &norms(&mut first.iter().map(|s| &s.x))), crit2),
        ks_row("first |V_T|", ks_two_sample(&norms(&mut coupled.iter().map(|p| &p.first.v)), &norms(&mut first.iter().map(|s| &s.v))), crit2),
        ks_row("second |X_T|", ks_two_sample(&norms(&mut coupled.iter().map(|p| &p.second.x)), &norms(&mut second.iter().map(|s| &s.x))), crit2),
        ks_row("second |V_T|", ks_two_sample(&norms(&mut coupled.iter().map(|p| &p.second.v)), &norms(&mut second.iter().map(|s| &s.v))), crit2),
    ];
    rows.extend(thinning_rows(model, &init.first, n, cfg.seed)?);
    let failed = rows.iter().filter(|r| r["passed"] != Value::Bool(true)).count();
    Ok(VerifyReport {
        which: Which::Marginals,
        passed: failed == 0,
        summary: format!("{} of {} KS tests pass at level {KS_LEVEL}", rows.len() - failed, rows.len()),
        details: json!({"n": n, "t_end": e.t_end, "tests": rows}),
    })
}

/// First `n` inter-event gaps and post-jump speeds of one long run.
pub fn jump_statistics(model: &ModelSpec, init: &PhaseState, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let lambda = model.rate.lambda2();
    let mut t_end = 1.2 * n as f64 / model.rate.lambda1() + 10.0 / lambda;
    loop {
        let log = simulate(model, init, t_end, StreamId::new(seed, u64::MAX - 2))?;
        if log.events.len() >= n {
            let mut prev = 0.0;
            let gaps = log.events[..n]
                .iter()
                .map(|e| {
                    let g = e.t - prev;
                    prev = e.t;
                    g
                })
                .collect();
            let speeds = log.events[..n].iter().map(|e| norm(&e.post.v)).collect();
            return Ok((gaps, speeds));
        }
        t_end *= 2.0;
    }
}

fn thinning_rows(model: &ModelSpec, init: &PhaseState, n: usize, seed: u64) -> Result<Vec<Value>, CliError> {
    let (gaps, speeds) = jump_statistics(model, init, n, seed)?;
    let crit = ks_critical_one_sample(n, KS_LEVEL);
    let mut rows = vec![ks_row("post-jump speeds vs radial law", ks_statistic(&speeds, |r| model.density.radial_cdf(r)), crit)];
    if model.rate.is_constant() {
        let l = model.rate.lambda2();
        rows.push(ks_row("inter-event gaps vs exponential", ks_statistic(&gaps, |t| 1.0 - (-l * t).exp()), crit));
    }
    Ok(rows)
}

/// Largest gap between the exact quadratic flow and RK4 with step `h` on
/// `[0, 1]`, sampled at every RK4 step, over `starts`.
pub fn flow_gap(model: &ModelSpec, starts: &[PhaseState], h: f64) -> Result<f64, CliError> {
    let exact = FlowIntegrator::exact(model.gamma, model.potential.clone())?;
    let rk = FlowIntegrator::rk4(model.gamma, model.potential.clone(), h)?;
    let steps = (1.0 / h).round() as usize;
    let mut worst: f64 = 0.0;
    for s0 in starts {
        let mut s = s0.clone();
        for k in 1..=steps {
            s = rk.flow(&s, h)?;
            let e = exact.flow(s0, k as f64 * h)?;
            for i in 0..s.dim() {
                worst = worst.max((s.x[i] - e.x[i]).abs()).max((s.v[i] - e.v[i]).abs());
            }
        }
    }
    Ok(worst)
}

/// Number of flow segments along which the Hamiltonian increases (beyond
/// round-off) at any of 20 interior checkpoints.
pub fn hamiltonian_increases(model: &ModelSpec, n: usize, seed: u64) -> Result<usize, CliError> {
    let flow = model.integrator();
    let mut rng = stream(seed, u64::MAX - 3);
    let mut bad = 0;
    for _ in 0..n {
        let s0 = gaussian_state(model.dim, 2.0, &mut rng);
        let dt = 0.05 * rng.random::<f64>();
        let mut s = s0;
        let mut h = flow.hamiltonian(&s);
        let mut ok = true;
        for _ in 0..20 {
            s = flow.flow(&s, dt)?;
            let next = flow.hamiltonian(&s);
            if next > h + 1e-12 * (1.0 + h.abs()) {
                ok = false;
            }
            h = next;
        }
        bad += usize::from(!ok);
    }
    Ok(bad)
}

fn flow(cfg: &RunConfig, model: &ModelSpec) -> Result<VerifyReport, CliError> {
    let e = &cfg.experiment;
    let segs = hamiltonian_increases(model, e.flow_segments, cfg.seed)?;
    if model.potential.theta().is_none() {
        return Err(collide_core::Error::Unsupported("exact flow comparison needs a quadratic potential".into()).into());
    }
    let starts = probe_points(model.dim, e.n_probes, cfg.seed);
    let gap = flow_gap(model, &starts, 1e-3)?;
    let passed = gap < e.flow_tol && segs == 0;
    Ok(VerifyReport {
        which: Which::Flow,
        passed,
        summary: format!(
            "sup |exact - RK4(h = 1e-3)| on [0, 1] = {gap:e} (tolerance {:e}); Hamiltonian increased on {segs} of {} segments",
            e.flow_tol, e.flow_segments
        ),
        details: json!({"sup_gap": gap, "tolerance": e.flow_tol, "rk4_step": 1e-3, "default_rk4_step": default_rk4_step(model.gamma, &model.potential), "segments": e.flow_segments, "hamiltonian_increases": segs}),
    })
}
