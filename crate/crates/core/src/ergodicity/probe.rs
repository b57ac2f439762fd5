//! Numerical probes of the generator and of the coupling operator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{CoupledState, JumpCoupling};
use crate::error::{invalid, Result};
use crate::model::primitives::{reflect_in_place, truncate_in_place};
use crate::model::{Density, ModelSpec, PhaseState};
use crate::stats::{Estimate, MeanAccumulator};

/// Central-difference step for gradients without a closed form.
pub const FD_STEP: f64 = 1e-5;

/// Smooth bounded test function `f(x, v)`.
pub trait TestFunction: Send + Sync {
    fn value(&self, x: &[f64], v: &[f64]) -> f64;

    fn grad_x(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let mut y = x.to_vec();
        for i in 0..x.len() {
            y[i] = x[i] + FD_STEP;
            let hi = self.value(&y, v);
            y[i] = x[i] - FD_STEP;
            let lo = self.value(&y, v);
            y[i] = x[i];
            out[i] = (hi - lo) / (2.0 * FD_STEP);
        }
    }

    fn grad_v(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let mut w = v.to_vec();
        for i in 0..v.len() {
            w[i] = v[i] + FD_STEP;
            let hi = self.value(x, &w);
            w[i] = v[i] - FD_STEP;
            let lo = self.value(x, &w);
            w[i] = v[i];
            out[i] = (hi - lo) / (2.0 * FD_STEP);
        }
    }

    fn name(&self) -> String;
}

/// The standard battery, all with analytic gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Battery {
    X1,
    V1,
    V2,
    /// `exp(-|v|^2)`
    GaussV,
    /// `exp(-(|x|^2 + |v|^2) / 2)`
    GaussXV,
    X1V1,
    SinV1,
    Zero,
    Const(f64),
}

impl Battery {
    /// Every member usable in dimension `dim`.
    pub fn all(dim: usize) -> Vec<Battery> {
        let mut b = vec![Battery::X1, Battery::V1];
        if dim >= 2 {
            b.push(Battery::V2);
        }
        b.extend([Battery::GaussV, Battery::GaussXV, Battery::X1V1, Battery::SinV1, Battery::Zero, Battery::Const(1.0)]);
        b
    }
}

fn sq(a: &[f64]) -> f64 {
    a.iter().map(|c| c * c).sum()
}

impl TestFunction for Battery {
    fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        match *self {
            Battery::X1 => x[0],
            Battery::V1 => v[0],
            Battery::V2 => v[1],
            Battery::GaussV => (-sq(v)).exp(),
            Battery::GaussXV => (-0.5 * (sq(x) + sq(v))).exp(),
            Battery::X1V1 => x[0] * v[0],
            Battery::SinV1 => v[0].sin(),
            Battery::Zero => 0.0,
            Battery::Const(c) => c,
        }
    }

    fn grad_x(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|c| *c = 0.0);
        match *self {
            Battery::X1 => out[0] = 1.0,
            Battery::GaussXV => {
                let g = self.value(x, v);
                for i in 0..x.len() {
                    out[i] = -x[i] * g;
                }
            }
            Battery::X1V1 => out[0] = v[0],
            _ => {}
        }
    }

    fn grad_v(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|c| *c = 0.0);
        match *self {
            Battery::V1 => out[0] = 1.0,
            Battery::V2 => out[1] = 1.0,
            Battery::GaussV => {
                let g = self.value(x, v);
                for i in 0..v.len() {
                    out[i] = -2.0 * v[i] * g;
                }
            }
            Battery::GaussXV => {
                let g = self.value(x, v);
                for i in 0..v.len() {
                    out[i] = -v[i] * g;
                }
            }
            Battery::X1V1 => out[0] = x[0],
            Battery::SinV1 => out[0] = v[0].cos(),
            _ => {}
        }
    }

    fn name(&self) -> String {
        match *self {
            Battery::X1 => "x1".into(),
            Battery::V1 => "v1".into(),
            Battery::V2 => "v2".into(),
            Battery::GaussV => "exp(-|v|^2)".into(),
            Battery::GaussXV => "exp(-(|x|^2+|v|^2)/2)".into(),
            Battery::X1V1 => "x1*v1".into(),
            Battery::SinV1 => "sin(v1)".into(),
            Battery::Zero => "0".into(),
            Battery::Const(c) => format!("{c}"),
        }
    }
}

/// `a f + b g`.
pub struct Combination<'a> {
    pub a: f64,
    pub f: &'a dyn TestFunction,
    pub b: f64,
    pub g: &'a dyn TestFunction,
}

impl TestFunction for Combination<'_> {
    fn value(&self, x: &[f64], v: &[f64]) -> f64 {
        self.a * self.f.value(x, v) + self.b * self.g.value(x, v)
    }

    fn grad_x(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.f.grad_x(x, v, out);
        self.g.grad_x(x, v, &mut tmp);
        for (o, t) in out.iter_mut().zip(tmp) {
            *o = self.a * *o + self.b * t;
        }
    }

    fn grad_v(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let mut tmp = vec![0.0; out.len()];
        self.f.grad_v(x, v, out);
        self.g.grad_v(x, v, &mut tmp);
        for (o, t) in out.iter_mut().zip(tmp) {
            *o = self.a * *o + self.b * t;
        }
    }

    fn name(&self) -> String {
        format!("{}*({}) + {}*({})", self.a, self.f.name(), self.b, self.g.name())
    }
}

/// Transport part `<grad_x f, v> - <grad_v f, gamma v + grad U>`.
pub fn transport_part(f: &dyn TestFunction, s: &PhaseState, model: &ModelSpec) -> f64 {
    let d = s.dim();
    let (mut gx, mut gv) = (vec![0.0; d], vec![0.0; d]);
    f.grad_x(&s.x, &s.v, &mut gx);
    f.grad_v(&s.x, &s.v, &mut gv);
    let grad_u = model.potential.gradient_vec(&s.x);
    (0..d).map(|i| gx[i] * s.v[i] - gv[i] * (model.gamma * s.v[i] + grad_u[i])).sum()
}

/// `L f` at `point`: exact transport part plus `J` times a Monte Carlo
/// average of `f(x, u) - f(x, v)`.
pub fn generator_probe<R: Rng + ?Sized>(
    f: &dyn TestFunction,
    point: &PhaseState,
    model: &ModelSpec,
    n_mc: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n_mc == 0 {
        return invalid("generator probe needs at least one sample");
    }
    model.check_state(point)?;
    let j = model.rate_at(point);
    let f0 = f.value(&point.x, &point.v);
    let mut u = vec![0.0; model.dim];
    let mut acc = MeanAccumulator::default();
    for _ in 0..n_mc {
        model.density.sample_into(rng, &mut u);
        acc.push(f.value(&point.x, &u) - f0);
    }
    let e = acc.estimate();
    Ok(Estimate { mean: transport_part(f, point, model) + j * e.mean, se: j * e.se, n: n_mc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingProbe {
    pub g: String,
    pub h: String,
    /// `L~(g + h)` at the pair.
    pub coupled: Estimate,
    /// `L g (x, v) + L h (x', v')`.
    pub marginal: Estimate,
    pub residual: f64,
    /// `sqrt(se_coupled^2 + se_marginal^2)`.
    pub combined_se: f64,
    pub passed: bool,
}

/// Evaluates the coupled generator on `g(x, v) + h(x', v')` by summing the
/// basic, reflection and residual branch integrals (shared draws `u ~ phi`,
/// basic/reflection split weighted by the exact ratio
/// `min(1, phi(u + xi) / phi(u))`) and compares with the two single-chain
/// generators.
pub fn coupling_operator_probe<R: Rng + ?Sized>(
    g: &dyn TestFunction,
    h: &dyn TestFunction,
    pair: &CoupledState,
    model: &ModelSpec,
    coupling: &JumpCoupling,
    n_mc: usize,
    rng: &mut R,
) -> Result<CouplingProbe> {
    if n_mc < 2 {
        return invalid("coupling probe needs at least two samples");
    }
    let c = JumpCoupling::new(coupling.alpha, coupling.alpha0, coupling.kappa)?;
    model.check_state(&pair.first)?;
    model.check_state(&pair.second)?;
    let (p, q) = (&pair.first, &pair.second);
    let d = model.dim;
    let a = model.rate_at(p);
    let b = model.rate_at(q);
    let common = a.min(b);
    let (only_first, only_second) = ((a - b).max(0.0), (b - a).max(0.0));

    let mut axis = pair.z();
    truncate_in_place(&mut axis, c.kappa);
    let xi: Vec<f64> = axis.iter().map(|t| c.alpha * t).collect();

    let (g0, h0) = (g.value(&p.x, &p.v), h.value(&q.x, &q.v));
    let mut u = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    let mut reflected = vec![0.0; d];
    let (mut coupled, mut marginal) = (MeanAccumulator::default(), MeanAccumulator::default());
    for _ in 0..n_mc {
        model.density.sample_into(rng, &mut u);
        let weight = model.density.overlap_ratio(&u, &xi);
        for i in 0..d {
            shifted[i] = u[i] + xi[i];
        }
        reflected.copy_from_slice(&u);
        reflect_in_place(&axis, &mut reflected);
        let gu = g.value(&p.x, &u);
        let hu = h.value(&q.x, &u);
        let basic = gu + h.value(&q.x, &shifted) - g0 - h0;
        let reflection = gu + h.value(&q.x, &reflected) - g0 - h0;
        coupled.push(
            common * (weight * basic + (1.0 - weight) * reflection)
                + only_first * (gu - g0)
                + only_second * (hu - h0),
        );
        marginal.push(a * (gu - g0) + b * (hu - h0));
    }
    let transport = transport_part(g, p, model) + transport_part(h, q, model);
    let shift = |e: Estimate| Estimate { mean: e.mean + transport, ..e };
    let (ce, me) = (shift(coupled.estimate()), shift(marginal.estimate()));
    let residual = ce.mean - me.mean;
    let combined_se = (ce.se * ce.se + me.se * me.se).sqrt();
    let scale = 1.0 + ce.mean.abs().max(me.mean.abs());
    let passed = residual.abs() <= 3.0 * combined_se + 1e-12 * scale;
    Ok(CouplingProbe { g: g.name(), h: h.name(), coupled: ce, marginal: me, residual, combined_se, passed })
}

/// Both sides of the radial change of variables
/// `int T(Pi u) Psi_xi(u) du = int T(u) Psi_{-xi}(u) du` with
/// `xi = alpha (z)_kappa` and `Pi` the reflection about `(z)_kappa`, from
/// independent draws.
pub fn reflection_identity<R: Rng + ?Sized, T: Fn(&[f64]) -> f64>(
    density: &Density,
    z: &[f64],
    alpha: f64,
    kappa: f64,
    test: T,
    n_mc: usize,
    rng: &mut R,
) -> Result<(Estimate, Estimate)> {
    if n_mc < 2 {
        return invalid("reflection identity needs at least two samples");
    }
    if z.len() != density.dim() {
        return invalid("shift dimension differs from density dimension");
    }
    let mut axis = z.to_vec();
    truncate_in_place(&mut axis, kappa);
    let xi: Vec<f64> = axis.iter().map(|t| alpha * t).collect();
    let neg: Vec<f64> = xi.iter().map(|t| -t).collect();
    let (mut lhs, mut rhs) = (MeanAccumulator::default(), MeanAccumulator::default());
    let mut u = vec![0.0; z.len()];
    for _ in 0..n_mc {
        density.sample_into(rng, &mut u);
        let w = 1.0 - density.overlap_ratio(&u, &xi);
        let mut r = u.clone();
        reflect_in_place(&axis, &mut r);
        lhs.push(test(&r) * w);
    }
    for _ in 0..n_mc {
        density.sample_into(rng, &mut u);
        rhs.push(test(&u) * (1.0 - density.overlap_ratio(&u, &neg)));
    }
    Ok((lhs.estimate(), rhs.estimate()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{JumpRate, Potential};
    use crate::rng::stream;

    fn model(rate: JumpRate) -> ModelSpec {
        ModelSpec::new(2, 4.0, Potential::quadratic(1.0).unwrap(), rate, Density::gaussian(2).unwrap()).unwrap()
    }

    fn point() -> PhaseState {
        PhaseState::new(vec![0.4, -0.3], vec![1.1, 0.2]).unwrap()
    }

    fn coupling() -> JumpCoupling {
        JumpCoupling::new(0.5858, 5.83, 2.0).unwrap()
    }

    #[test]
    fn analytic_gradients_match_differences() {
        struct Fd(Battery);
        impl TestFunction for Fd {
            fn value(&self, x: &[f64], v: &[f64]) -> f64 {
                self.0.value(x, v)
            }
            fn name(&self) -> String {
                self.0.name()
            }
        }
        let s = point();
        for f in Battery::all(2) {
            let (mut a, mut b) = (vec![0.0; 2], vec![0.0; 2]);
            f.grad_x(&s.x, &s.v, &mut a);
            Fd(f).grad_x(&s.x, &s.v, &mut b);
            assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-8), "{}", f.name());
            f.grad_v(&s.x, &s.v, &mut a);
            Fd(f).grad_v(&s.x, &s.v, &mut b);
            assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-8), "{}", f.name());
        }
    }

    #[test]
    fn constants_are_killed() {
        let m = model(JumpRate::sinusoidal(1.0, 3.0).unwrap());
        let e = generator_probe(&Battery::Const(3.0), &point(), &m, 100, &mut stream(1, 0)).unwrap();
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn position_coordinate_is_exact() {
        let m = model(JumpRate::sinusoidal(1.0, 3.0).unwrap());
        let e = generator_probe(&Battery::X1, &point(), &m, 100, &mut stream(1, 0)).unwrap();
        assert_eq!(e.mean, point().v[0]);
        assert_eq!(e.se, 0.0);
    }

    #[test]
    fn velocity_coordinate_matches_formula() {
        let m = model(JumpRate::sinusoidal(1.0, 3.0).unwrap());
        let s = point();
        let j = m.rate_at(&s);
        let truth = -4.0 * s.v[0] - 2.0 * s.x[0] - j * s.v[0];
        let e = generator_probe(&Battery::V1, &s, &m, 200_000, &mut stream(2, 0)).unwrap();
        assert!((e.mean - truth).abs() <= 3.0 * e.se, "{e:?} vs {truth}");
        assert!(generator_probe(&Battery::V1, &s, &m, 0, &mut stream(2, 0)).is_err());
    }

    #[test]
    fn generator_is_linear() {
        let m = model(JumpRate::sinusoidal(1.0, 3.0).unwrap());
        let (f, g) = (Battery::GaussV, Battery::SinV1);
        let combo = Combination { a: 2.0, f: &f, b: -0.5, g: &g };
        let n = 200_000;
        let lhs = generator_probe(&combo, &point(), &m, n, &mut stream(3, 0)).unwrap();
        let pf = generator_probe(&f, &point(), &m, n, &mut stream(3, 1)).unwrap();
        let pg = generator_probe(&g, &point(), &m, n, &mut stream(3, 2)).unwrap();
        let rhs = 2.0 * pf.mean - 0.5 * pg.mean;
        let se = (lhs.se.powi(2) + 4.0 * pf.se.powi(2) + 0.25 * pg.se.powi(2)).sqrt();
        assert!((lhs.mean - rhs).abs() <= 3.0 * se);
    }

    #[test]
    fn identical_pair_has_zero_residual() {
        let m = model(JumpRate::sinusoidal(1.0, 3.0).unwrap());
        let pair = CoupledState::diagonal(point());
        let p = coupling_operator_probe(&Battery::GaussV, &Battery::GaussV, &pair, &m, &coupling(), 10_000, &mut stream(4, 0))
            .unwrap();
        assert!(p.residual.abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn residuals_pass_on_random_pairs() {
        let m = model(JumpRate::sinusoidal(1.0, 3.0).unwrap());
        let mut rng = stream(5, 0);
        let c = coupling();
        for k in 0..3 {
            let draw = |rng: &mut crate::rng::Stream| -> Vec<f64> { (0..2).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect() };
            let pair = CoupledState::new(
                PhaseState::new(draw(&mut rng), draw(&mut rng)).unwrap(),
                PhaseState::new(draw(&mut rng), draw(&mut rng)).unwrap(),
            )
            .unwrap();
            for (g, h) in [(Battery::Zero, Battery::GaussV), (Battery::Zero, Battery::V1), (Battery::SinV1, Battery::GaussXV)] {
                let p = coupling_operator_probe(&g, &h, &pair, &m, &c, 100_000, &mut stream(6, k)).unwrap();
                assert!(p.passed, "{p:?}");
            }
        }
    }

    #[test]
    fn reflection_change_of_variables() {
        let d = Density::gaussian(2).unwrap();
        let test = |u: &[f64]| (u[0] - 0.3 * u[1]).sin() + (-(u[0] * u[0])).exp();
        let (l, r) = reflection_identity(&d, &[1.5, -0.5], 0.6, 1.0, test, 200_000, &mut stream(7, 0)).unwrap();
        assert!((l.mean - r.mean).abs() <= 3.0 * (l.se.powi(2) + r.se.powi(2)).sqrt(), "{l:?} {r:?}");
    }
}
