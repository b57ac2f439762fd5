//! Lyapunov function `W = W0^{beta/2}` with
//! `W0 = 1 + 2U(x) + theta0 |x|^2 + |v|^2 + theta* <x, v>` and certificates
//! of the drift condition `L W <= -c0 W + C0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::model::{ModelSpec, PhaseState, Potential};
use crate::stats::{Estimate, MeanAccumulator};

#[derive(Debug, Clone)]
pub struct Lyapunov {
    potential: Potential,
    theta0: f64,
    theta_star: f64,
    beta_exp: f64,
}

impl Lyapunov {
    /// `theta0 = (lambda1 + gamma)^2 / 4`,
    /// `theta* = (lambda1 + gamma)^2 / (2 (lambda2 + gamma))`.
    pub fn new(model: &ModelSpec, beta_exp: f64) -> Result<Self> {
        let (l1, l2, g) = (model.rate.lambda1(), model.rate.lambda2(), model.gamma);
        let theta0 = 0.25 * (l1 + g).powi(2);
        let theta_star = (l1 + g).powi(2) / (2.0 * (l2 + g));
        Self::from_constants(model.potential.clone(), theta0, theta_star, beta_exp)
    }

    pub fn from_constants(potential: Potential, theta0: f64, theta_star: f64, beta_exp: f64) -> Result<Self> {
        if !(beta_exp > 0.0 && beta_exp <= 2.0) {
            return invalid(format!("Lyapunov exponent must lie in (0, 2], got {beta_exp}"));
        }
        if !(theta0.is_finite() && theta_star.is_finite() && theta0 > 0.0 && theta_star >= 0.0) {
            return invalid("Lyapunov weights must be finite and positive");
        }
        if theta_star * theta_star >= 4.0 * theta0 {
            return invalid("theta*^2 must be below 4 theta0 for W0 to be coercive");
        }
        Ok(Self { potential, theta0, theta_star, beta_exp })
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    pub fn beta_exp(&self) -> f64 {
        self.beta_exp
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    #[inline]
    pub fn w0(&self, x: &[f64], v: &[f64]) -> f64 {
        1.0 + 2.0 * self.potential.value(x) + self.theta0 * norm_sq(x) + norm_sq(v) + self.theta_star * dot(x, v)
    }

    #[inline]
    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        self.lift(self.w0(x, v))
    }

    pub fn value(&self, s: &PhaseState) -> f64 {
        self.eval(&s.x, &s.v)
    }

    #[inline]
    fn lift(&self, w0: f64) -> f64 {
        if self.beta_exp == 2.0 {
            w0
        } else {
            w0.powf(0.5 * self.beta_exp)
        }
    }

    /// `inf_v W0(x, v) = 1 + 2U(x) + (theta0 - theta*^2/4) |x|^2`.
    pub fn inf_v_w0(&self, x: &[f64]) -> f64 {
        1.0 + 2.0 * self.potential.value(x) + (self.theta0 - 0.25 * self.theta_star.powi(2)) * norm_sq(x)
    }

    pub fn inf_v(&self, x: &[f64]) -> f64 {
        self.lift(self.inf_v_w0(x))
    }

    /// Transport part of `L W0`:
    /// `<2 grad U + 2 theta0 x + theta* v, v> - <2v + theta* x, gamma v + grad U>`.
    pub fn transport_w0(&self, gamma: f64, x: &[f64], v: &[f64]) -> f64 {
        let g = self.potential.gradient_vec(x);
        let mut out = 0.0;
        for i in 0..x.len() {
            out += (2.0 * g[i] + 2.0 * self.theta0 * x[i] + self.theta_star * v[i]) * v[i];
            out -= (2.0 * v[i] + self.theta_star * x[i]) * (gamma * v[i] + g[i]);
        }
        out
    }

    /// `L W0` for `beta_exp = 2`: the jump part is
    /// `J (m2 - |v|^2 - theta* <x, v>)` by radial symmetry of the density.
    pub fn generator_w0(&self, model: &ModelSpec, x: &[f64], v: &[f64]) -> Result<f64> {
        let m2 = second_moment(model)?;
        Ok(self.transport_w0(model.gamma, x, v)
            + model.rate.eval(x, v) * (m2 - norm_sq(v) - self.theta_star * dot(x, v)))
    }

    /// Expansion coefficient of `W = W0^{beta/2}` at the level of
    /// generators: `L_transport W = (beta/2) W0^{beta/2 - 1} L_transport W0`.
    fn transport_factor(&self, w0: f64) -> f64 {
        if self.beta_exp == 2.0 {
            1.0
        } else {
            0.5 * self.beta_exp * w0.powf(0.5 * self.beta_exp - 1.0)
        }
    }

    /// Monte Carlo `L W` at each state with shared velocity draws. The jump
    /// integral uses `|u|^beta` as control variate with its exact mean
    /// `m_beta`, which keeps the variance finite for heavy-tailed densities.
    pub fn generator_mc<R: Rng + ?Sized>(
        &self,
        model: &ModelSpec,
        states: &[PhaseState],
        n_mc: usize,
        rng: &mut R,
    ) -> Result<Vec<Estimate>> {
        if n_mc < 2 {
            return invalid("Monte Carlo drift needs at least two samples");
        }
        let m_beta = moment(model, self.beta_exp)?;
        let draws: Vec<Vec<f64>> = (0..n_mc).map(|_| model.density.sample(rng)).collect();
        let mut out = Vec::with_capacity(states.len());
        for s in states {
            model.check_state(s)?;
            let mut acc = MeanAccumulator::default();
            for u in &draws {
                acc.push(self.eval(&s.x, u) - norm_sq(u).powf(0.5 * self.beta_exp));
            }
            let jump = acc.estimate();
            let w0 = self.w0(&s.x, &s.v);
            let transport = self.transport_factor(w0) * self.transport_w0(model.gamma, &s.x, &s.v);
            let j = model.rate.eval(&s.x, &s.v);
            out.push(Estimate {
                mean: transport + j * (m_beta + jump.mean - self.lift(w0)),
                se: j * jump.se,
                n: n_mc,
            });
        }
        Ok(out)
    }

    /// Largest `|x| + |v|` on `{W <= level}`. Uses `W0 >= 1 + A|x|^2 + |v|^2 +
    /// theta* <x, v>` with `A = 2 theta + theta0` for quadratic `U` and
    /// `A = theta0` otherwise (from `U >= 0`); the maximum of a linear form
    /// over that ellipse is explicit.
    pub fn sublevel_radius(&self, level: f64) -> f64 {
        let l = level.powf(2.0 / self.beta_exp) - 1.0;
        if !(l > 0.0) {
            return 0.0;
        }
        let a = self.theta0 + self.potential.theta().map_or(0.0, |t| 2.0 * t);
        let ts = self.theta_star;
        (l * (1.0 + a + ts) / (a - 0.25 * ts * ts)).sqrt()
    }
}

fn second_moment(model: &ModelSpec) -> Result<f64> {
    moment(model, 2.0)
}

fn moment(model: &ModelSpec, beta: f64) -> Result<f64> {
    model
        .density
        .moment(beta)
        .ok_or_else(|| Error::InvalidArgument(format!("collision density has no finite moment of order {beta}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMethod {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    Certified,
    Failed,
    Inconclusive,
}

/// Outcome of a drift certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub method: DriftMethod,
    pub status: CertificateStatus,
    pub beta_exp: f64,
    pub c0: f64,
    #[serde(rename = "C0")]
    pub big_c0: f64,
    /// `R*` for the sublevel set `{W <= 4 C0 / c0}`.
    pub r_star: f64,
    /// Grid half-width in `|x|` and `|v|`.
    pub extent: f64,
    pub grid: String,
    pub n_nodes: usize,
    /// Minimum of `-L W + C0 - c0 W` over the grid.
    pub min_margin: f64,
    /// `(x, v)` where the minimum is attained.
    pub worst_node: Vec<f64>,
    pub tail: String,
    pub n_mc: Option<usize>,
    pub sigmas: f64,
    /// Threshold `c0*` of the sufficient condition `c* > c0*`.
    pub paper_threshold: f64,
    pub warnings: Vec<String>,
}

impl DriftReport {
    pub fn is_valid(&self) -> bool {
        self.status == CertificateStatus::Certified && self.min_margin >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    /// Nodes per axis of the closed-form check grid.
    pub grid_nodes: usize,
    /// Monte Carlo draws for the jump integral.
    pub n_mc: usize,
    pub sigmas: f64,
    /// Maximum extent refinements for the Monte Carlo certificate.
    pub max_rounds: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self { grid_nodes: 41, n_mc: 100_000, sigmas: 3.0, max_rounds: 8 }
    }
}

/// `c0* = (l1 + g)^2 (l2 - l1)^2 / (4 (2 l1 l2 - l1^2 + 4 l2 g + 3 g^2))`.
pub fn paper_threshold(model: &ModelSpec) -> f64 {
    let (l1, l2, g) = (model.rate.lambda1(), model.rate.lambda2(), model.gamma);
    (l1 + g).powi(2) * (l2 - l1).powi(2) / (4.0 * (2.0 * l1 * l2 - l1 * l1 + 4.0 * l2 * g + 3.0 * g * g))
}

fn threshold_warnings(model: &ModelSpec, warnings: &mut Vec<String>) -> f64 {
    let c0_star = paper_threshold(model);
    // for U = theta |x|^2 one has <x, grad U> = 2 theta |x|^2
    if let Some(theta) = model.potential.theta() {
        if 2.0 * theta <= c0_star {
            warnings.push(format!(
                "2 theta = {} does not exceed the sufficient threshold {c0_star}; certificate is numerical only",
                2.0 * theta
            ));
        }
    }
    c0_star
}

/// Symmetric 2x2 matrix `[[a, b], [b, c]]` is negative semidefinite.
fn nsd(a: f64, b: f64, c: f64) -> bool {
    a <= 0.0 && c <= 0.0 && a * c - b * b >= 0.0
}

/// Per-coordinate quadratic form of `L W0 + c0 W0 - J m2 - c0` at rate `j`.
fn drift_matrix(theta: f64, gamma: f64, l: &Lyapunov, j: f64, c0: f64) -> (f64, f64, f64) {
    let (t0, ts) = (l.theta0, l.theta_star);
    (
        -2.0 * theta * ts + c0 * (2.0 * theta + t0),
        0.5 * (2.0 * t0 - ts * (gamma + j) + c0 * ts),
        ts - 2.0 * gamma - j + c0,
    )
}

/// Closed-form certificate for `beta_exp = 2` and `U = theta |x|^2`.
///
/// `L W0 + c0 W0 = Q_J(x, v) + J m2 + c0` where `Q_J` acts coordinatewise
/// through a 2x2 matrix affine in `J`; if that matrix is negative
/// semidefinite at `J = lambda1` and `J = lambda2` it is so for every
/// admissible rate, giving `C0 = lambda2 m2 + c0`. `c0` is halved from 1
/// until this holds. The bound is then checked on a grid of half-width
/// `3 R*`: Cartesian with `grid_nodes` per coordinate for `d <= 2`, otherwise
/// over `(|x|, |v|, angle)`.
pub fn drift_closed_form(model: &ModelSpec, lyap: &Lyapunov, cfg: &DriftConfig) -> Result<DriftReport> {
    if lyap.beta_exp != 2.0 {
        return invalid("closed-form drift requires beta_exp = 2");
    }
    let theta = model
        .potential
        .theta()
        .ok_or_else(|| Error::Unsupported("closed-form drift requires a quadratic potential".into()))?;
    let m2 = second_moment(model)?;
    let (l1, l2, gamma) = (model.rate.lambda1(), model.rate.lambda2(), model.gamma);
    let mut warnings = Vec::new();
    let paper = threshold_warnings(model, &mut warnings);
    let mut c0 = 1.0;
    let holds = |c0: f64| {
        [l1, l2].iter().all(|&j| {
            let (a, b, c) = drift_matrix(theta, gamma, lyap, j, c0);
            nsd(a, b, c)
        })
    };
    let mut halvings = 0;
    while !holds(c0) {
        c0 *= 0.5;
        halvings += 1;
        if halvings > 60 {
            return Ok(failed_report(DriftMethod::ClosedForm, lyap, paper, warnings, "no c0 > 2^-60 makes the drift matrix negative semidefinite"));
        }
    }
    let big_c0 = l2 * m2 + c0;
    let r_star = lyap.sublevel_radius(4.0 * big_c0 / c0);
    let extent = 3.0 * r_star.max(1.0);
    let margin = |s: &PhaseState| -> f64 {
        let w0 = lyap.w0(&s.x, &s.v);
        let lw = lyap.transport_w0(gamma, &s.x, &s.v)
            + model.rate.eval(&s.x, &s.v) * (m2 - norm_sq(&s.v) - lyap.theta_star * dot(&s.x, &s.v));
        -lw + big_c0 - c0 * w0
    };
    let (grid, n_nodes, min_margin, worst) = scan_grid(model.dim, extent, cfg.grid_nodes, margin)?;
    let status = if min_margin >= 0.0 { CertificateStatus::Certified } else { CertificateStatus::Failed };
    Ok(DriftReport {
        method: DriftMethod::ClosedForm,
        status,
        beta_exp: 2.0,
        c0,
        big_c0,
        r_star,
        extent,
        grid,
        n_nodes,
        min_margin,
        worst_node: worst,
        tail: "per-coordinate drift matrix negative semidefinite at J = lambda1 and J = lambda2".into(),
        n_mc: None,
        sigmas: 0.0,
        paper_threshold: paper,
        warnings,
    })
}

fn failed_report(method: DriftMethod, lyap: &Lyapunov, paper: f64, warnings: Vec<String>, why: &str) -> DriftReport {
    DriftReport {
        method,
        status: CertificateStatus::Failed,
        beta_exp: lyap.beta_exp,
        c0: 0.0,
        big_c0: f64::INFINITY,
        r_star: f64::INFINITY,
        extent: 0.0,
        grid: String::new(),
        n_nodes: 0,
        min_margin: f64::NEG_INFINITY,
        worst_node: Vec::new(),
        tail: why.to_string(),
        n_mc: None,
        sigmas: 0.0,
        paper_threshold: paper,
        warnings,
    }
}

/// State with `x = a e1` and `v = b (cos t e1 + sin t e2)`.
fn reduced_state(dim: usize, a: f64, b: f64, t: f64) -> PhaseState {
    let mut s = PhaseState::origin(dim);
    s.x[0] = a;
    if dim == 1 {
        s.v[0] = b * t.cos().signum();
    } else {
        s.v[0] = b * t.cos();
        s.v[1] = b * t.sin();
    }
    s
}

fn angles(dim: usize, n: usize) -> Vec<f64> {
    if dim == 1 {
        vec![0.0, std::f64::consts::PI]
    } else {
        (0..n).map(|k| std::f64::consts::PI * k as f64 / (n - 1) as f64).collect()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Minimum of `margin` over the check grid.
fn scan_grid<F: Fn(&PhaseState) -> f64>(
    dim: usize,
    extent: f64,
    nodes: usize,
    margin: F,
) -> Result<(String, usize, f64, Vec<f64>)> {
    if nodes < 2 {
        return invalid("drift grid needs at least two nodes per axis");
    }
    let axis = linspace(-extent, extent, nodes);
    let mut best = (f64::INFINITY, Vec::new());
    let mut count = 0;
    let mut visit = |s: &PhaseState| {
        let m = margin(s);
        count += 1;
        if m < best.0 || m.is_nan() {
            let mut node = s.x.clone();
            node.extend_from_slice(&s.v);
            best = (if m.is_nan() { f64::NEG_INFINITY } else { m }, node);
        }
    };
    let desc = if dim <= 2 {
        let coords = 2 * dim;
        let mut idx = vec![0usize; coords];
        let mut s = PhaseState::origin(dim);
        'outer: loop {
            for (k, &i) in idx.iter().enumerate() {
                if k < dim {
                    s.x[k] = axis[i];
                } else {
                    s.v[k - dim] = axis[i];
                }
            }
            visit(&s);
            for k in 0..coords {
                idx[k] += 1;
                if idx[k] < nodes {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        format!("cartesian {nodes}^{coords} on [-{extent:.4}, {extent:.4}]")
    } else {
        let radii = linspace(0.0, extent, nodes);
        let ts = angles(dim, nodes);
        for &a in &radii {
            for &b in &radii {
                for &t in &ts {
                    visit(&reduced_state(dim, a, b, t));
                }
            }
        }
        format!("(|x|, |v|, angle) {nodes}x{nodes}x{} on [0, {extent:.4}]", ts.len())
    };
    Ok((desc, count, best.0, best.1))
}

/// Radii of the Monte Carlo grid: dense near the origin, geometric beyond.
fn mc_radii(extent: f64) -> Vec<f64> {
    let inner = extent.min(4.0);
    let mut r = linspace(0.0, inner, 17);
    if extent > inner {
        let n = 16;
        let ratio = (extent / inner).powf(1.0 / n as f64);
        r.extend((1..=n).map(|k| inner * ratio.powi(k)));
    }
    r
}

/// Shared jump-integral estimator `E[W(a e1, u)]`, evaluated for any `a`.
struct JumpIntegral {
    /// `(|u|^2, u_1, |u|^beta)` per draw.
    draws: Vec<(f64, f64, f64)>,
    m_beta: f64,
}

impl JumpIntegral {
    fn new<R: Rng + ?Sized>(model: &ModelSpec, beta: f64, n: usize, rng: &mut R) -> Result<Self> {
        let m_beta = moment(model, beta)?;
        let mut u = vec![0.0; model.dim];
        let draws = (0..n)
            .map(|_| {
                model.density.sample_into(rng, &mut u);
                let r2 = norm_sq(&u);
                (r2, u[0], r2.powf(0.5 * beta))
            })
            .collect();
        Ok(Self { draws, m_beta })
    }

    /// Estimate at `x = a e1` given `base = 1 + 2U(x) + theta0 a^2`.
    fn at(&self, lyap: &Lyapunov, a: f64, base: f64) -> Estimate {
        let mut acc = MeanAccumulator::default();
        for &(r2, u1, rb) in &self.draws {
            acc.push(lyap.lift(base + r2 + lyap.theta_star * a * u1) - rb);
        }
        let e = acc.estimate();
        Estimate { mean: e.mean + self.m_beta, se: e.se, n: e.n }
    }
}

/// Grid-plus-tail Monte Carlo certificate for `W = W0^{beta/2}` and
/// quadratic `U`.
///
/// By rotation invariance `L W` depends on `(|x|, |v|, <x, v>)` and on `J`
/// only linearly, so each node uses the worse of `J = lambda1` and
/// `J = lambda2`, which covers every admissible rate. `C0` is the largest
/// upper bound (`sigmas` standard errors) of `L W + c0 W` over the grid and
/// over 16 dyadic radii on rays beyond it; the tail passes when every ray
/// ends strictly decreasing and negative. `c0` is halved from 1 until the
/// tail passes, and the grid extent is grown to `3 R*` until stable.
pub fn drift_mc<R: Rng + ?Sized>(model: &ModelSpec, lyap: &Lyapunov, cfg: &DriftConfig, rng: &mut R) -> Result<DriftReport> {
    let theta = model
        .potential
        .theta()
        .ok_or_else(|| Error::Unsupported("Monte Carlo drift requires a quadratic potential".into()))?;
    if cfg.n_mc < 2 {
        return invalid("Monte Carlo drift needs at least two samples");
    }
    let beta = lyap.beta_exp;
    let jump = JumpIntegral::new(model, beta, cfg.n_mc, rng)?;
    let (l1, l2, gamma) = (model.rate.lambda1(), model.rate.lambda2(), model.gamma);
    let mut warnings = Vec::new();
    let paper = threshold_warnings(model, &mut warnings);
    let (t0, ts) = (lyap.theta0, lyap.theta_star);
    let dim = model.dim;
    let thetas = angles(dim, 13);

    // L W + c0 W at (a, b, cos t) as an upper bound over J and MC error
    let node = |a: f64, b: f64, cos_t: f64, m: &Estimate, c0: f64| -> f64 {
        let base = 1.0 + (2.0 * theta + t0) * a * a;
        let xv = a * b * cos_t;
        let w0 = base + b * b + ts * xv;
        let transport_w0 = (2.0 * t0 - ts * gamma) * xv + (ts - 2.0 * gamma) * b * b - 2.0 * theta * ts * a * a;
        let w = lyap.lift(w0);
        let jump_part = m.mean + cfg.sigmas * m.se - w;
        let j = if jump_part > 0.0 { l2 } else { l1 };
        lyap.transport_factor(w0) * transport_w0 + j * jump_part + c0 * w
    };

    let rays: Vec<(f64, f64)> = (0..9)
        .map(|k| {
            let om = 0.5 * std::f64::consts::PI * k as f64 / 8.0;
            (om.cos(), om.sin())
        })
        .collect();

    let mut extent = 4.0;
    for _round in 0..cfg.max_rounds.max(1) {
        let radii = mc_radii(extent);
        let m_grid: Vec<Estimate> = radii
            .iter()
            .map(|&a| jump.at(lyap, a, 1.0 + (2.0 * theta + t0) * a * a))
            .collect();
        let ray_radii: Vec<f64> = (1..=16).map(|k| extent * 2f64.powi(k)).collect();
        let m_rays: Vec<Vec<Estimate>> = rays
            .iter()
            .map(|&(ca, _)| {
                ray_radii
                    .iter()
                    .map(|&rho| {
                        let a = rho * ca;
                        jump.at(lyap, a, 1.0 + (2.0 * theta + t0) * a * a)
                    })
                    .collect()
            })
            .collect();

        let evaluate = |c0: f64| -> (f64, Vec<f64>, bool) {
            let mut best = (f64::NEG_INFINITY, Vec::new());
            for (ia, &a) in radii.iter().enumerate() {
                for &b in &radii {
                    for &t in &thetas {
                        let g = node(a, b, t.cos(), &m_grid[ia], c0);
                        if g > best.0 || g.is_nan() {
                            best = (if g.is_nan() { f64::INFINITY } else { g }, vec![a, b, t]);
                        }
                    }
                }
            }
            let mut tail_ok = true;
            for (ir, &(ca, sa)) in rays.iter().enumerate() {
                for &t in &thetas {
                    let vals: Vec<f64> = ray_radii
                        .iter()
                        .enumerate()
                        .map(|(k, &rho)| node(rho * ca, rho * sa, t.cos(), &m_rays[ir][k], c0))
                        .collect();
                    for (k, &g) in vals.iter().enumerate() {
                        if g > best.0 || g.is_nan() {
                            best = (if g.is_nan() { f64::INFINITY } else { g }, vec![ray_radii[k] * ca, ray_radii[k] * sa, t]);
                        }
                    }
                    let n = vals.len();
                    let decreasing = vals[n - 4..].windows(2).all(|w| w[1] < w[0]);
                    if !(decreasing && vals[n - 1] < 0.0) {
                        tail_ok = false;
                    }
                }
            }
            (best.0, best.1, tail_ok)
        };

        let mut c0 = 1.0;
        let mut found = None;
        for _ in 0..40 {
            let (max, at, tail_ok) = evaluate(c0);
            if tail_ok && max.is_finite() {
                found = Some((max, at));
                break;
            }
            c0 *= 0.5;
        }
        let Some((big_c0, at)) = found else {
            let mut r = failed_report(DriftMethod::MonteCarlo, lyap, paper, warnings, "no c0 > 2^-40 gives a decreasing tail on every ray");
            r.n_mc = Some(cfg.n_mc);
            r.sigmas = cfg.sigmas;
            return Ok(r);
        };
        if !(big_c0 > 0.0) {
            return Err(Error::Inconclusive(format!("drift constant C0 = {big_c0} is not positive")));
        }
        let r_star = lyap.sublevel_radius(4.0 * big_c0 / c0);
        if 3.0 * r_star <= extent {
            let worst = reduced_state(dim, at[0], at[1], at[2]);
            let mut worst_node = worst.x.clone();
            worst_node.extend_from_slice(&worst.v);
            return Ok(DriftReport {
                method: DriftMethod::MonteCarlo,
                status: CertificateStatus::Certified,
                beta_exp: beta,
                c0,
                big_c0,
                r_star,
                extent,
                grid: format!(
                    "(|x|, |v|, angle) {}x{}x{} on [0, {extent:.4}], worst-case J",
                    radii.len(),
                    radii.len(),
                    thetas.len()
                ),
                n_nodes: radii.len() * radii.len() * thetas.len(),
                // C0 is the grid maximum, so the margin is zero at the worst node
                min_margin: 0.0,
                worst_node,
                tail: format!("{} rays x 16 dyadic radii beyond the grid, decreasing and negative", rays.len() * thetas.len()),
                n_mc: Some(cfg.n_mc),
                sigmas: cfg.sigmas,
                paper_threshold: paper,
                warnings,
            });
        }
        extent = 3.0 * r_star;
    }
    Err(Error::Inconclusive(format!(
        "grid extent did not stabilise at 3 R* after {} rounds",
        cfg.max_rounds
    )))
}

/// Nodes of the Monte Carlo certificate grid: `x = a e1`, `v` at angle `t`
/// from `x`, `a, b` on the certificate radii up to `extent`.
pub fn mc_grid_nodes(dim: usize, extent: f64) -> Vec<PhaseState> {
    let radii = mc_radii(extent);
    let ts = angles(dim, 13);
    let mut out = Vec::with_capacity(radii.len() * radii.len() * ts.len());
    for &a in &radii {
        for &b in &radii {
            for &t in &ts {
                out.push(reduced_state(dim, a, b, t));
            }
        }
    }
    out
}

/// Node-wise comparison of Monte Carlo `L W0` against the closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftAgreement {
    pub n_nodes: usize,
    pub n_mc: usize,
    pub sigmas: f64,
    /// Largest `|mc - exact| / se` over nodes with positive standard error.
    pub max_z: f64,
    /// Nodes outside `sigmas` standard errors (plus round-off).
    pub violations: usize,
    pub worst_node: Vec<f64>,
}

impl DriftAgreement {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Compares [`Lyapunov::generator_mc`] with [`Lyapunov::generator_w0`] on
/// `nodes`; needs `beta_exp = 2`.
pub fn drift_agreement<R: Rng + ?Sized>(
    model: &ModelSpec,
    lyap: &Lyapunov,
    nodes: &[PhaseState],
    n_mc: usize,
    sigmas: f64,
    rng: &mut R,
) -> Result<DriftAgreement> {
    if lyap.beta_exp != 2.0 {
        return invalid("closed-form drift needs beta_exp = 2");
    }
    let mc = lyap.generator_mc(model, nodes, n_mc, rng)?;
    let mut out = DriftAgreement { n_nodes: nodes.len(), n_mc, sigmas, max_z: 0.0, violations: 0, worst_node: Vec::new() };
    for (s, e) in nodes.iter().zip(&mc) {
        let exact = lyap.generator_w0(model, &s.x, &s.v)?;
        let gap = (e.mean - exact).abs();
        let tol = sigmas * e.se + 1e-9 * (1.0 + exact.abs());
        if e.se > 0.0 && gap / e.se > out.max_z {
            out.max_z = gap / e.se;
            out.worst_node = s.x.iter().chain(&s.v).copied().collect();
        }
        if !(gap <= tol) {
            out.violations += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Density, JumpRate};
    use crate::rng::stream;

    fn example() -> ModelSpec {
        ModelSpec::new(2, 4.0, Potential::quadratic(1.0).unwrap(), JumpRate::constant(2.0).unwrap(), Density::gaussian(2).unwrap())
            .unwrap()
    }

    #[test]
    fn weights_for_example() {
        let l = Lyapunov::new(&example(), 2.0).unwrap();
        assert_eq!(l.theta0(), 9.0);
        assert_eq!(l.theta_star(), 3.0);
        assert!(l.theta_star().powi(2) <= l.theta0());
    }

    #[test]
    fn example_generator_closed_form() {
        // L W0 = -6|x|^2 - 7|v|^2 + 4
        let m = example();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let x = [0.3, -1.2];
        let v = [0.7, 0.4];
        let expect = -6.0 * norm_sq(&x) - 7.0 * norm_sq(&v) + 4.0;
        assert!((l.generator_w0(&m, &x, &v).unwrap() - expect).abs() < 1e-12);
        assert!((l.generator_w0(&m, &[0.0, 0.0], &[0.0, 0.0]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn jump_part_at_origin_matches_monte_carlo() {
        let m = example();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let mut rng = stream(1, 0);
        let mut acc = MeanAccumulator::default();
        for _ in 0..200_000 {
            let u = m.density.sample(&mut rng);
            acc.push(2.0 * (l.w0(&[0.0, 0.0], &u) - l.w0(&[0.0, 0.0], &[0.0, 0.0])));
        }
        let e = acc.estimate();
        assert!((e.mean - 4.0).abs() < 3.0 * e.se, "{e:?}");
    }

    #[test]
    fn inf_over_velocity() {
        let l = Lyapunov::new(&example(), 2.0).unwrap();
        let x = [0.5, -0.25];
        // minimiser v = -theta* x / 2
        let v = [-0.75, 0.375];
        assert!((l.inf_v_w0(&x) - l.w0(&x, &v)).abs() < 1e-12);
        assert!(l.inf_v_w0(&x) <= l.w0(&x, &[0.1, 0.0]));
    }

    #[test]
    fn example_certificate() {
        let m = example();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let cfg = DriftConfig { grid_nodes: 11, ..Default::default() };
        let r = drift_closed_form(&m, &l, &cfg).unwrap();
        assert_eq!(r.c0, 0.5);
        assert!((r.big_c0 - 4.5).abs() < 1e-12);
        assert!(r.is_valid(), "{r:?}");
        assert!((r.r_star - 7.75).abs() < 0.01, "{}", r.r_star);
        assert_eq!(r.paper_threshold, 0.0);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn sublevel_radius_is_attained_bound() {
        let l = Lyapunov::new(&example(), 2.0).unwrap();
        let level = 36.0;
        let rs = l.sublevel_radius(level);
        let mut rng = stream(2, 0);
        let mut best: f64 = 0.0;
        for _ in 0..20_000 {
            let p: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            // scale onto the boundary of the sublevel set
            let (mut lo, mut hi) = (0.0, 100.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let w = l.w0(&[mid * p[0], mid * p[1]], &[mid * p[2], mid * p[3]]);
                if w <= level { lo = mid } else { hi = mid }
            }
            let s = lo * ((p[0] * p[0] + p[1] * p[1]).sqrt() + (p[2] * p[2] + p[3] * p[3]).sqrt());
            best = best.max(s);
        }
        assert!(best <= rs * (1.0 + 1e-9));
        assert!(best > 0.97 * rs, "{best} vs {rs}");
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let m = ModelSpec::new(2, 4.0, Potential::quadratic(1.0).unwrap(), JumpRate::sinusoidal(1.5, 2.5).unwrap(), Density::gaussian(2).unwrap())
            .unwrap();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let states: Vec<PhaseState> = [(0.0, 0.0, 0.0, 0.0), (1.0, -2.0, 0.5, 3.0), (-4.0, 0.0, 2.0, -1.0)]
            .iter()
            .map(|&(a, b, c, d)| PhaseState::new(vec![a, b], vec![c, d]).unwrap())
            .collect();
        let est = l.generator_mc(&m, &states, 50_000, &mut stream(3, 0)).unwrap();
        for (s, e) in states.iter().zip(&est) {
            let cf = l.generator_w0(&m, &s.x, &s.v).unwrap();
            assert!((e.mean - cf).abs() <= 3.0 * e.se + 1e-9, "{e:?} vs {cf}");
        }
    }

    #[test]
    fn monte_carlo_certificate_for_example() {
        let m = example();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let cfg = DriftConfig { n_mc: 20_000, ..Default::default() };
        let r = drift_mc(&m, &l, &cfg, &mut stream(4, 0)).unwrap();
        assert!(r.is_valid(), "{r:?}");
        assert_eq!(r.c0, 0.5);
        assert!(r.big_c0 >= 4.5 - 1e-6 && r.big_c0 < 4.6, "{}", r.big_c0);
    }

    #[test]
    fn rejects_bad_exponent() {
        assert!(Lyapunov::new(&example(), 2.5).is_err());
        assert!(Lyapunov::new(&example(), 0.0).is_err());
        let l = Lyapunov::new(&example(), 1.0).unwrap();
        assert!(drift_closed_form(&example(), &l, &DriftConfig::default()).is_err());
    }

    #[test]
    fn monte_carlo_matches_closed_form_on_certificate_grid() {
        let m = example();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let nodes = mc_grid_nodes(2, 8.0);
        assert_eq!(nodes.len(), 33 * 33 * 13);
        let sub: Vec<PhaseState> = nodes.into_iter().step_by(97).collect();
        let a = drift_agreement(&m, &l, &sub, 20_000, 3.0, &mut stream(9, 0)).unwrap();
        assert!(a.passed(), "{a:?}");
        let half = Lyapunov::new(&m, 1.0).unwrap();
        assert!(drift_agreement(&m, &half, &sub, 10, 3.0, &mut stream(9, 0)).is_err());
    }
}
