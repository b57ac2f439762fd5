//! The parameter recipe: `beta`, `alpha`, `alpha0`, `R*`, `R0`, `kappa`,
//! `K0`, `a0`, `epsilon` and the contraction rate `lambda*`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lyapunov::{DriftReport, Lyapunov};
use crate::error::{invalid, Error, Result};
use crate::model::{ModelSpec, OverlapConstants, Potential};

/// Relative slack used when comparing against feasibility boundaries.
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSolution {
    pub beta: f64,
    /// Feasible interval containing `beta`.
    pub window: (f64, f64),
    pub k_beta_u: f64,
}

/// Solves `beta >= 4 K_{beta,U}` on `(0, gamma^2 / 4]`, taking the largest
/// admissible `beta`.
///
/// For `U = theta |x|^2` the problem is feasible iff `gamma >= 2 sqrt(2 theta)`,
/// with window `[8 theta / 5, min(2 theta, gamma^2 / 4)]`. Custom potentials
/// need a `K_{beta,U}` evaluator and are scanned on a dense grid.
pub fn solve_beta(gamma: f64, potential: &Potential) -> Result<BetaSolution> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return invalid(format!("gamma must be positive, got {gamma}"));
    }
    let cap = 0.25 * gamma * gamma;
    match potential.theta() {
        Some(theta) => {
            if !(theta > 0.0) {
                return invalid("beta selection needs theta > 0");
            }
            if gamma * gamma < 8.0 * theta * (1.0 - BOUNDARY_TOL) {
                return Err(Error::Infeasible(format!(
                    "gamma = {gamma} is below 2*sqrt(2*theta) = {}",
                    2.0 * (2.0 * theta).sqrt()
                )));
            }
            let hi = (2.0 * theta).min(cap);
            let lo = 1.6 * theta;
            let beta = hi;
            let k = (2.0 * theta - beta).abs();
            if lo > hi || beta < 4.0 * k {
                return Err(Error::Infeasible(format!("empty window [{lo}, {hi}]")));
            }
            Ok(BetaSolution { beta, window: (lo, hi), k_beta_u: k })
        }
        None => scan_beta(cap, |b| potential.k_beta(b)),
    }
}

/// `l1 c* a0 / (4 alpha lJ c**) - 1` with `a0` expanded, so the unit part
/// of `a0` cancels exactly instead of in floating point (`c*` is often tiny).
fn eps_inner(l1cs: f64, c0: f64, k0: f64, alpha: f64, alpha0: f64, lj: f64, cdd1: f64) -> f64 {
    let from_k0 = l1cs * k0 / (alpha0 * alpha * alpha * lj * cdd1);
    from_k0 + (2.0 * l1cs / c0 - 1.0).max(0.0)
}

/// Largest `beta` on a grid of `(0, cap]` with `beta >= 4 K(beta)`.
pub fn scan_beta<F: Fn(f64) -> Option<f64>>(cap: f64, k: F) -> Result<BetaSolution> {
    const N: usize = 20_000;
    let mut best: Option<(f64, f64)> = None;
    let mut lo = f64::NAN;
    for i in (1..=N).rev() {
        let b = cap * i as f64 / N as f64;
        let kb = k(b).ok_or_else(|| Error::Unsupported("potential has no K_{beta,U} evaluator".into()))?;
        if b >= 4.0 * kb {
            if best.is_none() {
                best = Some((b, kb));
            }
            lo = b;
        } else if best.is_some() {
            break;
        }
    }
    match best {
        Some((beta, k_beta_u)) => Ok(BetaSolution { beta, window: (lo, beta), k_beta_u }),
        None => Err(Error::Infeasible(format!("beta >= 4 K_beta,U has no solution on (0, {cap}]"))),
    }
}

/// Smaller root of `alpha^2 - gamma alpha + beta = 0`.
pub fn compute_alpha(beta: f64, gamma: f64) -> Result<f64> {
    let cap = 0.25 * gamma * gamma;
    if !(beta > 0.0 && gamma > 0.0) {
        return invalid(format!("need beta > 0 and gamma > 0, got {beta}, {gamma}"));
    }
    if beta > cap * (1.0 + BOUNDARY_TOL) {
        return invalid(format!("beta = {beta} exceeds gamma^2/4 = {cap}"));
    }
    let disc = (gamma * gamma - 4.0 * beta).max(0.0).sqrt();
    // 2 beta / (gamma + disc) avoids cancellation in (gamma - disc) / 2
    let alpha = 2.0 * beta / (gamma + disc);
    let check = alpha * gamma - alpha * alpha;
    if (check - beta).abs() > 1e-12 * beta.max(1.0) {
        return invalid(format!("alpha = {alpha} fails alpha gamma - alpha^2 = beta ({check} vs {beta})"));
    }
    Ok(alpha)
}

/// `ln(e^x - 1)` without overflow.
pub fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Geometry fixed before the overlap and `(B2)` constants can be measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub beta: f64,
    pub k_beta_u: f64,
    pub alpha: f64,
    pub alpha0: f64,
    pub r_star: f64,
    pub r0: f64,
    pub kappa: f64,
}

/// `alpha0 = gamma / alpha - 1`, `R0 = 2 R* (1 + alpha0 + 1/alpha)`,
/// `kappa = R0 / alpha0`.
pub fn geometry(model: &ModelSpec, beta: &BetaSolution, drift: &DriftReport) -> Result<Geometry> {
    if !drift.is_valid() {
        return invalid("drift certificate is not valid");
    }
    if !(drift.c0 > 0.0 && drift.big_c0 > 0.0) {
        return invalid("drift constants must be positive");
    }
    let alpha = compute_alpha(beta.beta, model.gamma)?;
    let alpha0 = model.gamma / alpha - 1.0;
    if !(alpha0 > 0.0) {
        return invalid(format!("alpha0 = {alpha0} is not positive"));
    }
    let r_star = drift.r_star;
    let r0 = 2.0 * r_star * (1.0 + alpha0 + 1.0 / alpha);
    if !(r0 > 0.0 && r0.is_finite()) {
        return invalid(format!("R0 = {r0} is not positive and finite"));
    }
    Ok(Geometry { beta: beta.beta, k_beta_u: beta.k_beta_u, alpha, alpha0, r_star, r0, kappa: r0 / alpha0 })
}

/// Every constant of the contraction argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    pub beta: f64,
    pub alpha: f64,
    pub alpha0: f64,
    pub kappa: f64,
    pub a0: f64,
    /// May underflow to zero; `log_epsilon` is always finite.
    pub epsilon: f64,
    pub log_epsilon: f64,
    #[serde(rename = "R0")]
    pub r0: f64,
    pub r_star: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    /// May underflow to zero; `log_lambda_star` is always finite.
    pub lambda_star: f64,
    pub log_lambda_star: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_j: f64,
    pub k_beta_u: f64,
    pub theta0: f64,
    pub theta_star: f64,
    pub c0: f64,
    #[serde(rename = "C0")]
    pub big_c0: f64,
    pub c_star: f64,
    pub c_upper_star: f64,
    pub c_double_star: f64,
    /// Moment of the collision density of the Lyapunov order `beta_exp`.
    pub m_beta: f64,
    pub beta_exp: f64,
}

/// Assembles the parameters from the geometry and the measured constants.
pub fn build_params(
    model: &ModelSpec,
    lyap: &Lyapunov,
    geo: &Geometry,
    drift: &DriftReport,
    overlap: &OverlapConstants,
    c_double_star: f64,
) -> Result<CouplingParams> {
    let (c0, big_c0) = (drift.c0, drift.big_c0);
    if !(c0 > 0.0 && big_c0 > 0.0 && c0.is_finite() && big_c0.is_finite()) {
        return invalid("drift constants must be positive and finite");
    }
    let (cs, cus) = (overlap.c_star, overlap.c_upper_star);
    if !(cs > 0.0 && cus > 0.0) {
        return invalid("overlap constants must be positive");
    }
    if !(c_double_star > 0.0 && c_double_star.is_finite()) {
        return invalid("c** must be positive and finite");
    }
    if (overlap.alpha - geo.alpha).abs() > 1e-12 * geo.alpha || (overlap.kappa - geo.kappa).abs() > 1e-12 * geo.kappa {
        return invalid("overlap constants were measured at a different (alpha, kappa)");
    }
    let m_beta = model
        .density
        .moment(lyap.beta_exp())
        .ok_or_else(|| Error::InvalidArgument("collision density lacks the Lyapunov moment".into()))?;
    let (l1, l2, lj) = (model.rate.lambda1(), model.rate.lambda2(), model.rate.lambda_j());
    let (alpha, alpha0, r0) = (geo.alpha, geo.alpha0, geo.r0);
    let cdd1 = c_double_star.max(1.0);

    let k0 = l2 * cus.max(c_double_star * alpha) + 2.0 * lj * (1.0 + alpha) * cdd1;
    let a0 = 4.0 * k0 / (alpha0 * alpha) + 4.0 * (1.0 / (l1 * cs)).max(2.0 / c0) * alpha * lj * cdd1;
    let x = a0 * r0;
    let slow = alpha.min(l1 * cs);

    let log_eps_first = if lj == 0.0 {
        f64::INFINITY
    } else {
        let inner = eps_inner(l1 * cs, c0, k0, alpha, alpha0, lj, cdd1);
        if !(inner > 0.0) {
            return invalid(format!("epsilon is not positive (inner factor {inner})"));
        }
        (c0 / (4.0 * big_c0)).ln() + inner.ln()
    };
    let log_eps_second = x.ln() - (8.0 * big_c0).ln() - ln_expm1(x) + slow.ln();
    let log_epsilon = log_eps_first.min(log_eps_second);
    let epsilon = log_epsilon.exp();

    let log_l1 = c0.ln() + log_epsilon - 2f64.ln() - (2.0 * epsilon).ln_1p();
    let log_l2 = x.ln() + slow.ln() - 4f64.ln() - ln_expm1(x) - (4.0 * epsilon * big_c0 / c0).ln_1p();
    let log_lambda_star = log_l1.min(log_l2);
    if !log_lambda_star.is_finite() {
        return invalid("lambda* is not finite in log scale");
    }

    Ok(CouplingParams {
        beta: geo.beta,
        alpha,
        alpha0,
        kappa: geo.kappa,
        a0,
        epsilon,
        log_epsilon,
        r0,
        r_star: geo.r_star,
        k0,
        lambda_star: log_lambda_star.exp(),
        log_lambda_star,
        lambda1: l1,
        lambda2: l2,
        lambda_j: lj,
        k_beta_u: geo.k_beta_u,
        theta0: lyap.theta0(),
        theta_star: lyap.theta_star(),
        c0,
        big_c0,
        c_star: cs,
        c_upper_star: cus,
        c_double_star,
        m_beta,
        beta_exp: lyap.beta_exp(),
    })
}

impl CouplingParams {
    /// `lambda*` recomputed for a different `R0` with every other input
    /// fixed, in log scale.
    pub fn log_lambda_star_at(&self, r0: f64) -> f64 {
        let x = self.a0 * r0;
        let slow = self.alpha.min(self.lambda1 * self.c_star);
        let log_eps_first = if self.lambda_j == 0.0 {
            f64::INFINITY
        } else {
            let cdd1 = self.c_double_star.max(1.0);
            let inner = eps_inner(self.lambda1 * self.c_star, self.c0, self.k0, self.alpha, self.alpha0, self.lambda_j, cdd1);
            (self.c0 / (4.0 * self.big_c0)).ln() + inner.ln()
        };
        let log_eps = log_eps_first.min(x.ln() - (8.0 * self.big_c0).ln() - ln_expm1(x) + slow.ln());
        let eps = log_eps.exp();
        let l1 = self.c0.ln() + log_eps - 2f64.ln() - (2.0 * eps).ln_1p();
        let l2 = x.ln() + slow.ln() - 4f64.ln() - ln_expm1(x) - (4.0 * eps * self.big_c0 / self.c0).ln_1p();
        l1.min(l2)
    }

    /// Every reported constant is finite and strictly positive (in log scale
    /// for the two that may underflow).
    pub fn all_positive(&self) -> bool {
        let direct = [
            self.beta,
            self.alpha,
            self.alpha0,
            self.kappa,
            self.a0,
            self.r0,
            self.r_star,
            self.k0,
            self.lambda1,
            self.lambda2,
            self.theta0,
            self.theta_star,
            self.c0,
            self.big_c0,
            self.c_star,
            self.c_upper_star,
            self.c_double_star,
            self.m_beta,
        ];
        direct.iter().all(|v| v.is_finite() && *v > 0.0)
            && self.log_epsilon.is_finite()
            && self.log_lambda_star.is_finite()
            && self.lambda_j >= 0.0
            && self.k_beta_u >= 0.0
    }
}

/// Random pairs in `{c0 (W + W') <= 4 C0}` along random directions of
/// `(x, v, x', v')`: even indices on the boundary (found by bisection), odd
/// ones at a uniform fraction of the boundary radius.
pub fn sample_region_a<R: Rng + ?Sized>(
    lyap: &Lyapunov,
    dim: usize,
    c0: f64,
    big_c0: f64,
    n: usize,
    rng: &mut R,
) -> Vec<[Vec<f64>; 4]> {
    let level = 4.0 * big_c0 / c0;
    let scaled = |p: &[Vec<f64>; 4], s: f64| -> [Vec<f64>; 4] { std::array::from_fn(|k| p[k].iter().map(|c| c * s).collect()) };
    let inside = |p: &[Vec<f64>; 4]| lyap.eval(&p[0], &p[1]) + lyap.eval(&p[2], &p[3]) <= level;
    (0..n)
        .map(|i| {
            let p: [Vec<f64>; 4] = std::array::from_fn(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
            let (mut lo, mut hi) = (0.0, 1.0);
            while inside(&scaled(&p, hi)) {
                lo = hi;
                hi *= 2.0;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(&scaled(&p, mid)) {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            let s = if i % 2 == 0 { lo } else { lo * rng.random::<f64>() };
            scaled(&p, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(theta: f64) -> Potential {
        Potential::quadratic(theta).unwrap()
    }

    /// Dense scan of `(0, gamma^2/4]` for `beta >= 4 |2 theta - beta|`
    /// restricted to `beta <= 2 theta`.
    fn grid_oracle(theta: f64, gamma: f64) -> Option<(f64, f64)> {
        let cap = gamma * gamma / 4.0;
        let n = 200_000;
        let ok: Vec<f64> = (1..=n)
            .map(|i| cap * i as f64 / n as f64)
            .filter(|&b| b <= 2.0 * theta && b >= 4.0 * (2.0 * theta - b))
            .collect();
        Some((*ok.first()?, *ok.last()?))
    }

    #[test]
    fn example_beta() {
        let s = solve_beta(4.0, &quad(1.0)).unwrap();
        assert_eq!(s.beta, 2.0);
        assert_eq!(s.k_beta_u, 0.0);
        assert_eq!(s.window, (1.6, 2.0));
        let (lo, hi) = grid_oracle(1.0, 4.0).unwrap();
        assert!((lo - 1.6).abs() < 1e-4 && hi == 2.0);
    }

    #[test]
    fn infeasible_friction() {
        let e = solve_beta(2.0, &quad(1.0)).unwrap_err();
        assert!(matches!(e, Error::Infeasible(_)));
        assert!(e.to_string().contains("2*sqrt(2*theta)"));
    }

    #[test]
    fn boundary_friction() {
        let g = 2.0 * 2f64.sqrt();
        let s = solve_beta(g, &quad(1.0)).unwrap();
        assert!((s.beta - 2.0).abs() < 1e-12);
        let (lo, hi) = grid_oracle(1.0, g).unwrap();
        assert!((lo - 1.6).abs() < 1e-4 && (hi - 2.0).abs() < 1e-4);
    }

    #[test]
    fn scan_matches_quadratic_solution() {
        // beta >= 4 |2 - beta| holds exactly on [1.6, 8/3]
        let s = scan_beta(4.0, |b| Some((2.0 - b).abs())).unwrap();
        assert!(s.beta <= 8.0 / 3.0 && 8.0 / 3.0 - s.beta < 4.0 / 20_000.0, "{}", s.beta);
        assert!((s.window.0 - 1.6).abs() < 4.0 / 20_000.0);
        assert!(s.beta >= 4.0 * s.k_beta_u);
        assert!(scan_beta(1.0, |_| Some(10.0)).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert!((compute_alpha(4.0, 4.0).unwrap() - 2.0).abs() < 1e-12);
        let a = compute_alpha(2.0, 4.0).unwrap();
        assert!((a - (2.0 - 2f64.sqrt())).abs() < 1e-15);
        assert!((a - 0.58579).abs() < 1e-5);
        assert!((4.0 / a - 1.0 - 5.8284).abs() < 1e-4);
        assert!(compute_alpha(4.1, 4.0).is_err());
    }

    #[test]
    fn ln_expm1_is_stable() {
        assert!((ln_expm1(1.0) - (1f64.exp() - 1.0).ln()).abs() < 1e-15);
        assert!((ln_expm1(1000.0) - 1000.0).abs() < 1e-12);
        assert!((ln_expm1(1e-10) - (1e-10f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn eps_inner_matches_direct_form_and_survives_tiny_overlap() {
        let (c0, k0, alpha, alpha0, lj, cdd1): (f64, f64, f64, f64, f64, f64) = (0.5, 3.0, 0.6, 5.8, 1.0, 3.0);
        for l1cs in [0.05f64, 0.2, 0.4] {
            let a0 = 4.0 * k0 / (alpha0 * alpha) + 4.0 * (1.0 / l1cs).max(2.0 / c0) * alpha * lj * cdd1;
            let direct = l1cs * a0 / (4.0 * alpha * lj * cdd1) - 1.0;
            let stable = eps_inner(l1cs, c0, k0, alpha, alpha0, lj, cdd1);
            assert!((direct - stable).abs() < 1e-12 * (1.0 + direct.abs()), "{direct} vs {stable}");
        }
        let tiny = eps_inner(1e-11, c0, k0, alpha, alpha0, lj, cdd1);
        assert!(tiny > 0.0 && (tiny / (1e-11 * k0 / (alpha0 * alpha * alpha * lj * cdd1)) - 1.0).abs() < 1e-12);
    }
}
