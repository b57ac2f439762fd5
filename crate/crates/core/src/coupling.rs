//! Coupled pair with synchronous flow and the four-branch jump coupling.
//!
//! At a candidate time with rates `a = J(x, v)` and `b = J(x', v')`, a
//! uniform draw on `[0, lambda2)` selects
//! - the common branch with mass `a ^ b`: `u ~ phi`, then the basic move
//!   `(u, u + xi)` with probability `min(1, phi(u + xi) / phi(u))` and the
//!   reflection move `(u, Pi u)` otherwise, where `xi = alpha (z)_kappa`;
//! - `residual_first` with mass `(a - b)+`, refreshing `v` only;
//! - `residual_second` with mass `(b - a)+`, refreshing `v'` only;
//! - nothing for the remaining mass.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ergodicity::CouplingParams;
use crate::error::{invalid, Result};
use crate::flow::FlowIntegrator;
use crate::linalg::{norm, sub};
use crate::model::primitives::{reflect_in_place, truncate_in_place};
use crate::model::{ModelSpec, PhaseState};
use crate::pdmp::{candidate_gap, check_grid, check_horizon, MAJORANT_SLACK};
use crate::rng::StreamId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledState {
    pub first: PhaseState,
    pub second: PhaseState,
}

impl CoupledState {
    pub fn new(first: PhaseState, second: PhaseState) -> Result<Self> {
        if first.dim() != second.dim() {
            return invalid(format!("coupled components have dimensions {} and {}", first.dim(), second.dim()));
        }
        if !(first.is_finite() && second.is_finite()) {
            return invalid("coupled state has non-finite entries");
        }
        Ok(Self { first, second })
    }

    pub fn diagonal(s: PhaseState) -> Self {
        Self { first: s.clone(), second: s }
    }

    pub fn dim(&self) -> usize {
        self.first.dim()
    }

    /// `z = x - x'`.
    pub fn z(&self) -> Vec<f64> {
        sub(&self.first.x, &self.second.x)
    }

    /// `w = v - v'`.
    pub fn w(&self) -> Vec<f64> {
        sub(&self.first.v, &self.second.v)
    }

    /// `q = z + w / alpha`.
    pub fn q(&self, alpha: f64) -> Vec<f64> {
        self.z().iter().zip(self.w()).map(|(z, w)| z + w / alpha).collect()
    }

    /// `r = alpha0 |z| + |q|`.
    pub fn r(&self, alpha: f64, alpha0: f64) -> f64 {
        alpha0 * norm(&self.z()) + norm(&self.q(alpha))
    }

    pub fn is_coalesced(&self) -> bool {
        self.first == self.second
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Basic,
    Reflection,
    ResidualFirst,
    ResidualSecond,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Basic, Branch::Reflection, Branch::ResidualFirst, Branch::ResidualSecond];

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Basic => "basic",
            Branch::Reflection => "reflection",
            Branch::ResidualFirst => "residual_first",
            Branch::ResidualSecond => "residual_second",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The parameters the jump coupling needs; any positive values are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpCoupling {
    pub alpha: f64,
    pub alpha0: f64,
    pub kappa: f64,
}

impl JumpCoupling {
    pub fn new(alpha: f64, alpha0: f64, kappa: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("alpha0", alpha0), ("kappa", kappa)] {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(Self { alpha, alpha0, kappa })
    }
}

impl From<&CouplingParams> for JumpCoupling {
    fn from(p: &CouplingParams) -> Self {
        Self { alpha: p.alpha, alpha0: p.alpha0, kappa: p.kappa }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledEvent {
    pub t: f64,
    pub branch: Branch,
    pub pre: CoupledState,
    pub post: CoupledState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledEventLog {
    pub stream: StreamId,
    pub coupling: JumpCoupling,
    pub init: CoupledState,
    pub t_end: f64,
    pub events: Vec<CoupledEvent>,
    pub final_state: CoupledState,
    pub candidates: usize,
    /// First time the two components are identical, if within the horizon.
    pub coalesced_at: Option<f64>,
}

/// Scratch buffers for one jump.
struct Workspace {
    axis: Vec<f64>,
    u: Vec<f64>,
    xi: Vec<f64>,
}

pub fn coupled_simulate(
    model: &ModelSpec,
    coupling: &JumpCoupling,
    init: &CoupledState,
    t_end: f64,
    id: StreamId,
) -> Result<CoupledEventLog> {
    let coupling = JumpCoupling::new(coupling.alpha, coupling.alpha0, coupling.kappa)?;
    model.check_state(&init.first)?;
    model.check_state(&init.second)?;
    check_horizon(t_end)?;
    let flow = model.integrator();
    let lambda2 = model.rate.lambda2();
    let d = model.dim;
    let mut ws = Workspace { axis: vec![0.0; d], u: vec![0.0; d], xi: vec![0.0; d] };
    let mut rng = id.stream();
    let mut pair = init.clone();
    let mut events = Vec::new();
    let mut candidates = 0;
    let mut coalesced_at = pair.is_coalesced().then_some(0.0);
    let mut t = 0.0;
    loop {
        let gap = candidate_gap(&mut rng, lambda2);
        if t + gap > t_end {
            flow.advance(&mut pair.first, t_end - t);
            flow.advance(&mut pair.second, t_end - t);
            break;
        }
        t += gap;
        flow.advance(&mut pair.first, gap);
        flow.advance(&mut pair.second, gap);
        candidates += 1;
        let a = model.rate_at(&pair.first);
        let b = model.rate_at(&pair.second);
        let common = a.min(b);
        let total = common + (a - b).max(0.0) + (b - a).max(0.0);
        // the three branch masses always add up to a v b, which thinning needs below lambda2
        if !(total <= lambda2 * (1.0 + MAJORANT_SLACK)) || (total - a.max(b)).abs() > 1e-12 * lambda2 {
            return invalid(format!("branch mass {total} at rates ({a}, {b}) exceeds the majorant {lambda2}"));
        }
        let level = rng.random::<f64>() * lambda2;
        let branch = if level < common {
            Some(common_jump(model, &coupling, &mut pair, &mut ws, &mut rng))
        } else if level < common + (a - b).max(0.0) {
            model.density.sample_into(&mut rng, &mut ws.u);
            Some(Branch::ResidualFirst)
        } else if level < a.max(b) {
            model.density.sample_into(&mut rng, &mut ws.u);
            Some(Branch::ResidualSecond)
        } else {
            None
        };
        let Some(branch) = branch else { continue };
        let pre = pair.clone();
        match branch {
            Branch::Basic => {
                pair.first.v.copy_from_slice(&ws.u);
                for i in 0..d {
                    pair.second.v[i] = ws.u[i] + ws.xi[i];
                }
            }
            Branch::Reflection => {
                pair.first.v.copy_from_slice(&ws.u);
                reflect_in_place(&ws.axis, &mut ws.u);
                pair.second.v.copy_from_slice(&ws.u);
            }
            Branch::ResidualFirst => pair.first.v.copy_from_slice(&ws.u),
            Branch::ResidualSecond => pair.second.v.copy_from_slice(&ws.u),
        }
        if coalesced_at.is_none() && pair.is_coalesced() {
            coalesced_at = Some(t);
        }
        events.push(CoupledEvent { t, branch, pre, post: pair.clone() });
    }
    Ok(CoupledEventLog { stream: id, coupling, init: init.clone(), t_end, events, final_state: pair, candidates, coalesced_at })
}

/// Draws `u ~ phi` into `ws.u` and decides between the basic and reflection
/// moves; fills `ws.axis = (z)_kappa` and `ws.xi = alpha (z)_kappa`.
fn common_jump<R: Rng + ?Sized>(
    model: &ModelSpec,
    c: &JumpCoupling,
    pair: &mut CoupledState,
    ws: &mut Workspace,
    rng: &mut R,
) -> Branch {
    for i in 0..ws.axis.len() {
        ws.axis[i] = pair.first.x[i] - pair.second.x[i];
    }
    truncate_in_place(&mut ws.axis, c.kappa);
    for i in 0..ws.axis.len() {
        ws.xi[i] = c.alpha * ws.axis[i];
    }
    model.density.sample_into(rng, &mut ws.u);
    let ratio = model.density.overlap_ratio(&ws.u, &ws.xi);
    if rng.random::<f64>() < ratio {
        Branch::Basic
    } else {
        Branch::Reflection
    }
}

/// First time the pair is identical, if it ever is.
pub fn coalescence_time(log: &CoupledEventLog) -> Option<f64> {
    log.coalesced_at
}

impl CoupledEventLog {
    /// Pair states on a non-decreasing time grid inside `[0, t_end]`.
    pub fn sample_path(&self, flow: &FlowIntegrator, grid: &[f64]) -> Result<Vec<CoupledState>> {
        check_grid(grid, self.t_end)?;
        let mut out = Vec::with_capacity(grid.len());
        let mut k = 0;
        for &t in grid {
            while k < self.events.len() && self.events[k].t <= t {
                k += 1;
            }
            let (t0, s0) = match k {
                0 => (0.0, &self.init),
                _ => (self.events[k - 1].t, &self.events[k - 1].post),
            };
            let mut s = s0.clone();
            flow.advance(&mut s.first, t - t0);
            flow.advance(&mut s.second, t - t0);
            out.push(s);
        }
        Ok(out)
    }

    pub fn branch_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for e in &self.events {
            c[Branch::ALL.iter().position(|b| *b == e.branch).unwrap()] += 1;
        }
        c
    }
}

/// Terminal pairs of `n` coupled runs; run `i` uses stream `(seed, i)`.
pub fn coupled_terminal_states(
    model: &ModelSpec,
    coupling: &JumpCoupling,
    init: &CoupledState,
    t_end: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<CoupledState>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| coupled_simulate(model, coupling, init, t_end, StreamId::new(seed, i)).map(|l| l.final_state))
        .collect()
}
