//! Single-chain simulation by Poisson thinning.
//!
//! Candidate times arrive at the constant rate `lambda2`; a candidate at
//! `(x, v)` is accepted with probability `J(x, v) / lambda2` and then the
//! velocity is replaced by a fresh draw from the collision density.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::FlowIntegrator;
use crate::model::{ModelSpec, PhaseState};
use crate::rng::StreamId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub t: f64,
    pub pre: PhaseState,
    pub post: PhaseState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub stream: StreamId,
    pub init: PhaseState,
    pub t_end: f64,
    pub events: Vec<JumpEvent>,
    pub final_state: PhaseState,
    /// Number of proposed candidate times, accepted or not.
    pub candidates: usize,
}

pub(crate) fn check_horizon(t_end: f64) -> Result<()> {
    if t_end.is_finite() && t_end > 0.0 {
        Ok(())
    } else {
        invalid(format!("horizon must be positive and finite, got {t_end}"))
    }
}

/// Next candidate gap of a rate-`lambda` Poisson process.
#[inline]
pub(crate) fn candidate_gap<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / lambda
}

/// Majorant slack for floating-point noise in a rate evaluation.
pub(crate) const MAJORANT_SLACK: f64 = 1e-12;

pub fn simulate(model: &ModelSpec, init: &PhaseState, t_end: f64, id: StreamId) -> Result<EventLog> {
    model.check_state(init)?;
    check_horizon(t_end)?;
    let flow = model.integrator();
    let lambda2 = model.rate.lambda2();
    let mut rng = id.stream();
    let mut state = init.clone();
    let mut events = Vec::new();
    let mut candidates = 0;
    let mut t = 0.0;
    loop {
        let gap = candidate_gap(&mut rng, lambda2);
        if t + gap > t_end {
            flow.advance(&mut state, t_end - t);
            break;
        }
        t += gap;
        flow.advance(&mut state, gap);
        candidates += 1;
        let j = model.rate_at(&state);
        if j > lambda2 * (1.0 + MAJORANT_SLACK) {
            return invalid(format!("rate {j} exceeds the majorant {lambda2}"));
        }
        let accept: f64 = rng.random();
        if accept * lambda2 < j {
            let pre = state.clone();
            model.density.sample_into(&mut rng, &mut state.v);
            events.push(JumpEvent { t, pre, post: state.clone() });
        }
    }
    Ok(EventLog { stream: id, init: init.clone(), t_end, events, final_state: state, candidates })
}

impl EventLog {
    /// State at time `t in [0, t_end]`, flowing from the last event at or
    /// before `t`.
    pub fn state_at(&self, flow: &FlowIntegrator, t: f64) -> Result<PhaseState> {
        if !(t >= 0.0 && t <= self.t_end) {
            return invalid(format!("time {t} outside [0, {}]", self.t_end));
        }
        let k = self.events.partition_point(|e| e.t <= t);
        let (t0, s0) = match k {
            0 => (0.0, &self.init),
            _ => (self.events[k - 1].t, &self.events[k - 1].post),
        };
        flow.flow(s0, t - t0)
    }

    /// States on a non-decreasing time grid inside `[0, t_end]`.
    pub fn sample_path(&self, flow: &FlowIntegrator, grid: &[f64]) -> Result<Vec<PhaseState>> {
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
            flow.advance(&mut s, t - t0);
            out.push(s);
        }
        Ok(out)
    }

    /// Accepted over proposed candidates.
    pub fn acceptance_fraction(&self) -> f64 {
        if self.candidates == 0 {
            return f64::NAN;
        }
        self.events.len() as f64 / self.candidates as f64
    }
}

pub(crate) fn check_grid(grid: &[f64], t_end: f64) -> Result<()> {
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t <= t_end)) {
        return invalid(format!("time grid must lie in [0, {t_end}]"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return invalid("time grid must be non-decreasing");
    }
    Ok(())
}

/// `n` independent runs from a common initial state; run `i` uses stream
/// `(seed, i)`, results come back in index order.
pub fn simulate_ensemble(
    model: &ModelSpec,
    init: &PhaseState,
    t_end: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<EventLog>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| simulate(model, init, t_end, StreamId::new(seed, i)))
        .collect()
}

/// Terminal states of [`simulate_ensemble`] without keeping the logs.
pub fn terminal_states(
    model: &ModelSpec,
    init: &PhaseState,
    t_end: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<PhaseState>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| simulate(model, init, t_end, StreamId::new(seed, i)).map(|l| l.final_state))
        .collect()
}
