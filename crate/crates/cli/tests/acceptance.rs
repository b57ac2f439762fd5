//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Run with `cargo test -p collide-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use collide_cli::commands::{params_for, run_contraction};
use collide_cli::verify::{coupling_battery, coupling_probes, flow_gap, hamiltonian_increases, jump_statistics, probe_pairs, probe_points};
use collide_cli::RunConfig;
use collide_core::coupling::coupled_terminal_states;
use collide_core::ergodicity::params::sample_region_a;
use collide_core::ergodicity::{
    assignment, drift_agreement, drift_closed_form, empirical_wasserstein, mc_grid_nodes, solve_beta, DriftConfig, DriftMethod,
    Lyapunov,
};
use collide_core::linalg::norm;
use collide_core::model::{ModelSpec, PhaseState};
use collide_core::pdmp::terminal_states;
use collide_core::rng::stream;
use collide_core::stats::{ks_critical_one_sample, ks_critical_two_sample, ks_statistic, ks_two_sample};
use collide_core::{CoupledState, JumpCoupling};
use itertools::Itertools;
use rand::Rng;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn example() -> ModelSpec {
    config("example.toml").model().expect("example model")
}

fn grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt).round() as usize;
    (0..=n).map(|k| k as f64 * dt).collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn coupling_marginals() -> Outcome {
    let cfg = config("example.toml");
    let model = cfg.model().map_err(err)?;
    let (_, report) = params_for(&cfg, &model).map_err(err)?;
    let c = JumpCoupling::from(&report.params);
    let n_mc = 1_000_000;
    let start = Instant::now();
    let pairs = probe_pairs(model.dim, 10, cfg.seed);
    let probes = coupling_probes(&model, &c, &pairs, n_mc, cfg.seed).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let failed = probes.iter().filter(|(_, p)| !p.passed).count();
    let n_fns = coupling_battery(model.dim).len();
    let worst = probes
        .iter()
        .map(|(_, p)| {
            let scale = 1.0 + p.coupled.mean.abs().max(p.marginal.mean.abs());
            p.residual.abs() / (3.0 * p.combined_se + 1e-12 * scale)
        })
        .fold(0.0, f64::max);
    let ok = failed == 0 && n_fns >= 6 && secs < 120.0;
    Ok((ok, format!("{} of {} probes within 3 se at n_mc = 1e6 over {n_fns} test functions, worst |residual| / tolerance {worst:.3}, {secs:.1} s", probes.len() - failed, probes.len())))
}

fn coupled_marginal_law() -> Outcome {
    let model = example();
    let cfg = config("example.toml");
    let (_, report) = params_for(&cfg, &model).map_err(err)?;
    let c = JumpCoupling::from(&report.params);
    let init = CoupledState::new(cfg.init().map_err(err)?, cfg.partner().map_err(err)?).map_err(err)?;
    let (n, t) = (10_000, 5.0);
    let start = Instant::now();
    let coupled = coupled_terminal_states(&model, &c, &init, t, n, 101).map_err(err)?;
    let single = terminal_states(&model, &init.first, t, n, 202).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let crit = ks_critical_two_sample(n, n, 0.01);
    let dx = ks_two_sample(
        &coupled.iter().map(|p| norm(&p.first.x)).collect::<Vec<_>>(),
        &single.iter().map(|s| norm(&s.x)).collect::<Vec<_>>(),
    );
    let dv = ks_two_sample(
        &coupled.iter().map(|p| norm(&p.first.v)).collect::<Vec<_>>(),
        &single.iter().map(|s| norm(&s.v)).collect::<Vec<_>>(),
    );
    let ok = dx < crit && dv < crit && secs < 60.0;
    Ok((ok, format!("KS |X_T| {dx:.4}, |V_T| {dv:.4} vs critical {crit:.4} (n = 1e4, T = 5), {secs:.1} s")))
}

fn thinning() -> Outcome {
    let model = example();
    let n = 10_000;
    let init = PhaseState::new(vec![1.0, 0.0], vec![0.0, 0.0]).map_err(err)?;
    let (gaps, speeds) = jump_statistics(&model, &init, n, 7).map_err(err)?;
    let crit = ks_critical_one_sample(n, 0.01);
    let dg = ks_statistic(&gaps, |t| 1.0 - (-2.0 * t).exp());
    let ds = ks_statistic(&speeds, |r| model.density.radial_cdf(r));
    Ok((dg < crit && ds < crit, format!("KS gaps vs Exp(2) {dg:.4}, speeds vs radial law {ds:.4}, critical {crit:.4}")))
}

fn flow() -> Outcome {
    let model = config("flow.toml").model().map_err(err)?;
    let starts = probe_points(model.dim, 10, 1);
    let gap = flow_gap(&model, &starts, 1e-3).map_err(err)?;
    let bad = hamiltonian_increases(&model, 1000, 1).map_err(err)?;
    Ok((gap < 1e-8 && bad == 0, format!("exact vs RK4 (h = 1e-3) max gap {gap:.2e}; Hamiltonian increased on {bad} of 1000 segments")))
}

fn pipeline() -> Outcome {
    let cfg = config("example.toml");
    let model = cfg.model().map_err(err)?;
    let sol = solve_beta(model.gamma, &model.potential).map_err(err)?;
    let theta = model.potential.theta().ok_or("quadratic potential expected")?;
    // dense scan of the feasibility window {beta <= min(2 theta, gamma^2 / 4), beta >= 4 (2 theta - beta)}
    let cap = (2.0 * theta).min(0.25 * model.gamma * model.gamma);
    let n = 100_000;
    let feasible: Vec<f64> =
        (1..=n).map(|i| cap * i as f64 / n as f64).filter(|b| *b >= 4.0 * (2.0 * theta - b)).collect();
    let (scan_lo, scan_hi) = (feasible[0], feasible[feasible.len() - 1]);
    let h = cap / n as f64;
    let beta_ok = (sol.beta - scan_hi).abs() <= h
        && (sol.window.0 - scan_lo).abs() <= h
        && (sol.window.1 - scan_hi).abs() <= h
        && (sol.beta - 2.0).abs() < 1e-12;
    let (lyap, report) = params_for(&cfg, &model).map_err(err)?;
    let p = &report.params;
    let pairs = sample_region_a(&lyap, model.dim, p.c0, p.big_c0, 100_000, &mut stream(cfg.seed, 9));
    let mut outside = 0;
    for [x, v, y, w] in pairs {
        let pair = CoupledState::new(PhaseState::new(x, v).map_err(err)?, PhaseState::new(y, w).map_err(err)?).map_err(err)?;
        if pair.r(p.alpha, p.alpha0) > p.r0 {
            outside += 1;
        }
    }
    let ok = beta_ok && p.all_positive() && p.log_lambda_star.is_finite() && outside == 0;
    Ok((
        ok,
        format!(
            "beta = {} in [{}, {}] (scan [{scan_lo:.5}, {scan_hi:.5}]), all constants positive: {}, log lambda* = {:.2}, {outside} of 1e5 pairs of A outside r <= R0 = {:.1}",
            sol.beta,
            sol.window.0,
            sol.window.1,
            p.all_positive(),
            p.log_lambda_star,
            p.r0
        ),
    ))
}

fn drift() -> Outcome {
    let model = example();
    let lyap = Lyapunov::new(&model, 2.0).map_err(err)?;
    let rep = drift_closed_form(&model, &lyap, &DriftConfig { grid_nodes: 41, ..Default::default() }).map_err(err)?;
    let nodes = mc_grid_nodes(model.dim, rep.extent);
    let agree = drift_agreement(&model, &lyap, &nodes, 100_000, 3.0, &mut stream(5, 0)).map_err(err)?;
    let ok = rep.is_valid() && rep.method == DriftMethod::ClosedForm && agree.passed();
    Ok((
        ok,
        format!(
            "closed form on {} nodes: min margin {:.3e}, c0 = {}, C0 = {}; Monte Carlo outside 3 se at {} of {} nodes",
            rep.n_nodes, rep.min_margin, rep.c0, rep.big_c0, agree.violations, agree.n_nodes
        ),
    ))
}

fn contraction(name: &str) -> Outcome {
    let mut cfg = config(name);
    cfg.experiment.n_traj = 10_000;
    cfg.experiment.t_end = 10.0;
    cfg.experiment.t_grid = Some(grid(10.0, 0.5));
    let start = Instant::now();
    let (r, _) = run_contraction(&cfg).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let rate = r.fitted_rate.unwrap_or(f64::NAN);
    let ok = r.passed && r.fitted_rate_exceeds_lambda_star() && secs < 300.0;
    Ok((
        ok,
        format!(
            "mean F~G {:.4} -> {:.4} within envelope: {}; fitted rate {rate:.4} vs log lambda* = {:.2}; {secs:.1} s",
            r.mean[0],
            r.mean[r.mean.len() - 1],
            r.passed,
            r.log_lambda_star
        ),
    ))
}

fn heavy_tail() -> Outcome {
    let cfg = config("heavy_tail.toml");
    let model = cfg.model().map_err(err)?;
    let (_, report) = params_for(&cfg, &model).map_err(err)?;
    let d = &report.drift;
    let cert = d.is_valid() && d.method == DriftMethod::MonteCarlo;
    let (c_ok, c_msg) = contraction("heavy_tail.toml")?;
    Ok((cert && c_ok, format!("Monte Carlo certificate valid: {cert} (c0 = {}, R* = {:.0}); {c_msg}", d.c0, d.r_star)))
}

fn wasserstein() -> Outcome {
    let mut rng = stream(17, 0);
    let mut mismatches = 0;
    for _ in 0..100 {
        let cost: Vec<Vec<f64>> = (0..6).map(|_| (0..6).map(|_| rng.random::<f64>()).collect()).collect();
        let (_, total) = assignment(&cost).map_err(err)?;
        let brute = (0..6)
            .permutations(6)
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if total != brute {
            mismatches += 1;
        }
    }
    let model = example();
    let lyap = Lyapunov::new(&model, 2.0).map_err(err)?;
    let a = PhaseState::new(vec![2.0, 0.0], vec![0.0, 0.0]).map_err(err)?;
    let b = PhaseState::new(vec![-1.0, 0.0], vec![0.0, 1.0]).map_err(err)?;
    let n = 256;
    let w = |t: f64| -> Result<f64, String> {
        let ea = terminal_states(&model, &a, t, n, 31).map_err(err)?;
        let eb = terminal_states(&model, &b, t, n, 32).map_err(err)?;
        empirical_wasserstein(&ea, &eb, &lyap).map_err(err)
    };
    let (w1, w10) = (w(1.0)?, w(10.0)?);
    Ok((mismatches == 0 && w10 < w1, format!("assignment vs brute force: {mismatches} of 100 mismatches; W(t = 1) = {w1:.4}, W(t = 10) = {w10:.4}")))
}

const SMALL: &str = r#"
seed = 77

[model]
d = 2
gamma = 4.0
potential = { kind = "quadratic", theta = 1.0 }
rate = { kind = "expression", expr = "2 + sin(|x| + |v|)", lambda1 = 1.0, lambda2 = 3.0, lambdaJ = 1.0 }
density = { kind = "gaussian" }

[experiment]
t_end = 2.0
n_traj = 200
dt = 0.5
n_mc = 2000
n_probes = 2
overlap_samples = 5000
flow_segments = 50
init = { x = [1.0, 0.0], v = [0.0, 0.0] }
"#;

fn run_cli(cfg: &Path, out: &Path, threads: usize, args: &[&str]) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_collide"))
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .map_err(err)?;
    if !o.status.success() {
        return Err(format!("{args:?} exited with {}: {}", o.status, String::from_utf8_lossy(&o.stderr)));
    }
    Ok(o.stdout)
}

fn dir_contents(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    files.sort();
    files.into_iter().map(|p| std::fs::read(&p).map(|b| (p.strip_prefix(dir).unwrap().to_path_buf(), b)).map_err(err)).collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let cfg = tmp.path().join("small.toml");
    std::fs::write(&cfg, SMALL).map_err(err)?;
    let commands: [&[&str]; 8] = [
        &["params"],
        &["simulate"],
        &["simulate", "--format", "jsonl"],
        &["couple"],
        &["couple", "--format", "jsonl"],
        &["contract"],
        &["verify", "flow"],
        &["verify", "marginals"],
    ];
    let mut differing = Vec::new();
    for (k, args) in commands.iter().enumerate() {
        let a = tmp.path().join(format!("a{k}"));
        let b = tmp.path().join(format!("b{k}"));
        let sa = run_cli(&cfg, &a, 1, args)?;
        let sb = run_cli(&cfg, &b, 4, args)?;
        let (fa, fb) = (dir_contents(&a)?, dir_contents(&b)?);
        if sa != sb || fa != fb || fa.is_empty() {
            differing.push(args.join(" "));
        }
    }
    Ok((
        differing.is_empty(),
        format!("{} commands compared at 1 and 4 threads; differing outputs: {differing:?}", commands.len()),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("coupling preserves marginal generators", coupling_marginals),
        ("coupled first component has the single-chain law", coupled_marginal_law),
        ("thinning gives the right event times and jumps", thinning),
        ("flow integrator accuracy and dissipation", flow),
        ("parameter pipeline is consistent", pipeline),
        ("Lyapunov drift certificate", drift),
        ("contraction envelope (Gaussian)", || contraction("example.toml")),
        ("heavy-tailed collisions", heavy_tail),
        ("assignment and empirical Wasserstein", wasserstein),
        ("bit-reproducible across thread counts", determinism),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, msg) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "{} [{:>2}] {name}: {msg} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
