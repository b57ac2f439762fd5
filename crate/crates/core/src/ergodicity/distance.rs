//! Concave distance `f`, the functional `F~G` and the semi-metric `Phi`.

use super::lyapunov::Lyapunov;
use super::params::CouplingParams;
use crate::coupling::CoupledState;
use crate::linalg::{distance, norm};

/// `f(s) = (1 - e^{-a0 s}) / a0`.
#[inline]
pub fn distance_f(s: f64, a0: f64) -> f64 {
    -(-a0 * s).exp_m1() / a0
}

/// `f'(s) = e^{-a0 s}`.
#[inline]
pub fn distance_f_prime(s: f64, a0: f64) -> f64 {
    (-a0 * s).exp()
}

/// `r = alpha0 |z| + |q|` with `q = z + w / alpha`.
pub fn distance_r(pair: &CoupledState, alpha: f64, alpha0: f64) -> f64 {
    let mut zn = 0.0;
    let mut qn = 0.0;
    for i in 0..pair.dim() {
        let z = pair.first.x[i] - pair.second.x[i];
        let w = pair.first.v[i] - pair.second.v[i];
        zn += z * z;
        qn += (z + w / alpha).powi(2);
    }
    alpha0 * zn.sqrt() + qn.sqrt()
}

/// `F~G = f(min(r, R0)) (1 + eps W(x, v) + eps W(x', v'))`.
pub fn functional_fg(pair: &CoupledState, params: &CouplingParams, lyap: &Lyapunov) -> f64 {
    let r = distance_r(pair, params.alpha, params.alpha0);
    let g = 1.0 + params.epsilon * (lyap.value(&pair.first) + lyap.value(&pair.second));
    distance_f(r.min(params.r0), params.a0) * g
}

/// `Phi = ((|z| + |w|) ^ 1) (W(x, v) + W(x', v'))`.
pub fn semi_metric_phi(pair: &CoupledState, lyap: &Lyapunov) -> f64 {
    let d = distance(&pair.first.x, &pair.second.x) + distance(&pair.first.v, &pair.second.v);
    if d == 0.0 {
        return 0.0;
    }
    d.min(1.0) * (lyap.value(&pair.first) + lyap.value(&pair.second))
}

/// `|z| + |w|`.
pub fn phase_distance(pair: &CoupledState) -> f64 {
    norm(&pair.z()) + norm(&pair.w())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Density, JumpRate, ModelSpec, PhaseState, Potential};
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn f_limits_and_shape() {
        let a0 = 4.2;
        assert_eq!(distance_f(0.0, a0), 0.0);
        assert!((distance_f(1e3, a0) - 1.0 / a0).abs() < 1e-15);
        let mut rng = stream(1, 0);
        for _ in 0..10_000 {
            let s = rng.random::<f64>() * 5.0;
            assert!(distance_f_prime(s, a0) > 0.0);
            // f'' = -a0 e^{-a0 s} < 0
            assert!(-a0 * distance_f_prime(s, a0) < 0.0);
        }
    }

    #[test]
    fn concavity_estimates() {
        let mut rng = stream(2, 0);
        for _ in 0..10_000 {
            let a0 = 0.1 + 10.0 * rng.random::<f64>();
            let (s, t) = (rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0);
            let diff = distance_f(s, a0) - distance_f(t, a0);
            let tol = 1e-14;
            assert!(diff <= distance_f_prime(t, a0) * (s - t) + tol);
            assert!(diff <= distance_f_prime(t, a0) / a0 + tol);
        }
    }

    #[test]
    fn identical_pair_is_zero() {
        let m = ModelSpec::new(2, 4.0, Potential::quadratic(1.0).unwrap(), JumpRate::constant(2.0).unwrap(), Density::gaussian(2).unwrap())
            .unwrap();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let s = PhaseState::new(vec![1.0, 2.0], vec![-1.0, 0.5]).unwrap();
        let p = CoupledState::diagonal(s);
        assert_eq!(distance_r(&p, 0.5, 3.0), 0.0);
        assert_eq!(semi_metric_phi(&p, &l), 0.0);
    }

    #[test]
    fn phi_caps_distance_at_one() {
        let m = ModelSpec::new(1, 4.0, Potential::quadratic(1.0).unwrap(), JumpRate::constant(2.0).unwrap(), Density::gaussian(1).unwrap())
            .unwrap();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let a = PhaseState::new(vec![5.0], vec![0.0]).unwrap();
        let b = PhaseState::origin(1);
        let p = CoupledState::new(a.clone(), b.clone()).unwrap();
        assert_eq!(semi_metric_phi(&p, &l), l.value(&a) + l.value(&b));
        let c = PhaseState::new(vec![0.25], vec![0.0]).unwrap();
        let p = CoupledState::new(c.clone(), b.clone()).unwrap();
        assert!((semi_metric_phi(&p, &l) - 0.25 * (l.value(&c) + l.value(&b))).abs() < 1e-15);
    }
}
