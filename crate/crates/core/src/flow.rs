//! Damped Hamiltonian flow `x' = v, v' = -gamma v - grad U(x)`.

use serde::{Deserialize, Serialize};

use crate::coupling::CoupledState;
use crate::error::{invalid, Result};
use crate::linalg::norm_sq;
use crate::model::{PhaseState, Potential};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FlowMethod {
    ExactQuadratic,
    Rk4 { step: f64 },
}

#[derive(Debug, Clone)]
pub struct FlowIntegrator {
    gamma: f64,
    potential: Potential,
    method: FlowMethod,
}

/// Relative discriminant below which the repeated-root formula is used.
const CRITICAL_REL: f64 = 1e-12;

impl FlowIntegrator {
    pub fn new(gamma: f64, potential: Potential, method: FlowMethod) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return invalid(format!("friction gamma must be positive, got {gamma}"));
        }
        match method {
            FlowMethod::ExactQuadratic if potential.theta().is_none() => {
                return invalid("closed-form flow requires a quadratic potential");
            }
            FlowMethod::Rk4 { step } if !(step.is_finite() && step > 0.0) => {
                return invalid(format!("RK4 step must be positive, got {step}"));
            }
            _ => {}
        }
        Ok(Self { gamma, potential, method })
    }

    pub fn exact(gamma: f64, potential: Potential) -> Result<Self> {
        Self::new(gamma, potential, FlowMethod::ExactQuadratic)
    }

    pub fn rk4(gamma: f64, potential: Potential, step: f64) -> Result<Self> {
        Self::new(gamma, potential, FlowMethod::Rk4 { step })
    }

    /// Closed form when available, otherwise RK4 at the default step.
    pub fn automatic(gamma: f64, potential: Potential) -> Self {
        let method = match potential.theta() {
            Some(_) => FlowMethod::ExactQuadratic,
            None => FlowMethod::Rk4 { step: default_rk4_step(gamma, &potential) },
        };
        Self { gamma, potential, method }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn method(&self) -> FlowMethod {
        self.method
    }

    /// Advances `state` by `dt >= 0`.
    pub fn flow(&self, state: &PhaseState, dt: f64) -> Result<PhaseState> {
        check_dt(dt)?;
        let mut s = state.clone();
        self.advance(&mut s, dt);
        Ok(s)
    }

    /// Synchronous flow of both components.
    pub fn coupled_flow(&self, pair: &CoupledState, dt: f64) -> Result<CoupledState> {
        check_dt(dt)?;
        if pair.first.dim() != pair.second.dim() {
            return invalid("coupled components have different dimensions");
        }
        let mut p = pair.clone();
        self.advance(&mut p.first, dt);
        self.advance(&mut p.second, dt);
        Ok(p)
    }

    /// In-place advance without argument validation; `dt` must be finite and
    /// non-negative.
    pub fn advance(&self, s: &mut PhaseState, dt: f64) {
        if dt == 0.0 {
            return;
        }
        match self.method {
            FlowMethod::ExactQuadratic => {
                let theta = self.potential.theta().expect("checked on construction");
                let c = ExactCoefficients::new(self.gamma, theta, dt);
                for (x, v) in s.x.iter_mut().zip(s.v.iter_mut()) {
                    let (x0, v0) = (*x, *v);
                    *x = c.xx * x0 + c.xv * v0;
                    *v = c.vx * x0 + c.vv * v0;
                }
            }
            FlowMethod::Rk4 { step } => self.rk4_advance(s, dt, step),
        }
    }

    fn vector_field(&self, x: &[f64], v: &[f64], dx: &mut [f64], dv: &mut [f64]) {
        self.potential.gradient(x, dv);
        for i in 0..x.len() {
            dx[i] = v[i];
            dv[i] = -self.gamma * v[i] - dv[i];
        }
    }

    fn rk4_advance(&self, s: &mut PhaseState, dt: f64, h: f64) {
        let d = s.dim();
        let mut k = [(); 4].map(|_| (vec![0.0; d], vec![0.0; d]));
        let (mut xt, mut vt) = (vec![0.0; d], vec![0.0; d]);
        let mut t = 0.0;
        while t < dt {
            let step = h.min(dt - t);
            // Land exactly on dt instead of leaving a sliver step.
            let step = if dt - t - step < 1e-12 * h { dt - t } else { step };
            for stage in 0..4 {
                let c = match stage {
                    0 => 0.0,
                    3 => step,
                    _ => 0.5 * step,
                };
                if stage == 0 {
                    xt.copy_from_slice(&s.x);
                    vt.copy_from_slice(&s.v);
                } else {
                    let (px, pv) = &k[stage - 1];
                    for i in 0..d {
                        xt[i] = s.x[i] + c * px[i];
                        vt[i] = s.v[i] + c * pv[i];
                    }
                }
                let (kx, kv) = &mut k[stage];
                self.vector_field(&xt, &vt, kx, kv);
            }
            for i in 0..d {
                s.x[i] += step / 6.0 * (k[0].0[i] + 2.0 * k[1].0[i] + 2.0 * k[2].0[i] + k[3].0[i]);
                s.v[i] += step / 6.0 * (k[0].1[i] + 2.0 * k[1].1[i] + 2.0 * k[2].1[i] + k[3].1[i]);
            }
            t += step;
        }
    }

    /// `H(x, v) = U(x) + |v|^2 / 2`, non-increasing along the flow.
    pub fn hamiltonian(&self, s: &PhaseState) -> f64 {
        self.potential.value(&s.x) + 0.5 * norm_sq(&s.v)
    }
}

/// `h = 1e-3 * min(1, 1/gamma, 1/sqrt(max(theta, 1)))`.
pub fn default_rk4_step(gamma: f64, potential: &Potential) -> f64 {
    let theta = potential.theta().unwrap_or(1.0);
    1e-3 * 1.0_f64.min(1.0 / gamma).min(1.0 / theta.max(1.0).sqrt())
}

fn check_dt(dt: f64) -> Result<()> {
    if dt.is_finite() && dt >= 0.0 {
        Ok(())
    } else {
        invalid(format!("flow time must be finite and non-negative, got {dt}"))
    }
}

/// Propagator of `x'' + gamma x' + 2 theta x = 0` over time `t`, written as
/// `x(t) = e^{rt}[x0 C + (v0 - r x0) S]`, `v(t) = e^{rt}[v0 C + (r v0 - 2 theta x0) S]`
/// with `r = -gamma/2` and `(C, S)` the cosh/sinh (over-damped), cos/sin
/// (under-damped) or `(1, t)` (critical) pair.
#[derive(Debug, Clone, Copy)]
struct ExactCoefficients {
    xx: f64,
    xv: f64,
    vx: f64,
    vv: f64,
}

impl ExactCoefficients {
    fn new(gamma: f64, theta: f64, t: f64) -> Self {
        let r = -0.5 * gamma;
        let disc = gamma * gamma - 8.0 * theta;
        // e^{rt} C and e^{rt} S
        let (ec, es) = if disc.abs() < CRITICAL_REL * gamma * gamma {
            let e = (r * t).exp();
            (e, e * t)
        } else if disc > 0.0 {
            // roots r +- mu, both <= 0
            let mu = 0.5 * disc.sqrt();
            if mu * t < 1.0 {
                let e = (r * t).exp();
                (e * (mu * t).cosh(), e * (mu * t).sinh() / mu)
            } else {
                let (ep, em) = (((r + mu) * t).exp(), ((r - mu) * t).exp());
                (0.5 * (ep + em), 0.5 * (ep - em) / mu)
            }
        } else {
            let mu = 0.5 * (-disc).sqrt();
            let e = (r * t).exp();
            (e * (mu * t).cos(), e * (mu * t).sin() / mu)
        };
        Self {
            xx: ec - r * es,
            xv: es,
            vx: -2.0 * theta * es,
            vv: ec + r * es,
        }
    }
}
