use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::expr::Expr;
use crate::error::{invalid, Result};
use crate::linalg::{distance, norm};
use crate::rng::stream;

pub type RateFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum RateKind {
    Constant(f64),
    /// `mid + amp * sin(|x| + |v|)`
    Sinusoidal { mid: f64, amp: f64 },
    Expression(Expr),
    Custom(Arc<RateFn>),
}

impl fmt::Debug for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Sinusoidal { mid, amp } => write!(f, "Sinusoidal {{ mid: {mid}, amp: {amp} }}"),
            Self::Expression(e) => write!(f, "Expression({e})"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Jump rate `J(x, v)` with its declared bounds `lambda1 <= J <= lambda2`
/// and Lipschitz constant `lambda_j`.
#[derive(Debug, Clone)]
pub struct JumpRate {
    kind: RateKind,
    lambda1: f64,
    lambda2: f64,
    lambda_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBounds {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_j: f64,
}

const PROBES: usize = 4096;

impl JumpRate {
    pub fn constant(lambda: f64) -> Result<Self> {
        check_bounds(lambda, lambda, 0.0)?;
        Ok(Self { kind: RateKind::Constant(lambda), lambda1: lambda, lambda2: lambda, lambda_j: 0.0 })
    }

    /// Oscillates between `lambda1` and `lambda2`; Lipschitz constant
    /// `(lambda2 - lambda1) / 2`.
    pub fn sinusoidal(lambda1: f64, lambda2: f64) -> Result<Self> {
        check_bounds(lambda1, lambda2, 0.0)?;
        let amp = 0.5 * (lambda2 - lambda1);
        Ok(Self {
            kind: RateKind::Sinusoidal { mid: 0.5 * (lambda1 + lambda2), amp },
            lambda1,
            lambda2,
            lambda_j: amp,
        })
    }

    /// Parses `src`, proves `lambda1 <= J <= lambda2` by interval evaluation
    /// and spot-checks the declared Lipschitz constant.
    pub fn expression(src: &str, lambda1: f64, lambda2: f64, lambda_j: f64, dim: usize) -> Result<Self> {
        check_bounds(lambda1, lambda2, lambda_j)?;
        let expr = Expr::parse(src)?;
        let range = expr.global_range();
        if !range.is_bounded() {
            return invalid(format!("rate expression {expr} is not provably bounded"));
        }
        if range.lo < lambda1 || range.hi > lambda2 {
            return invalid(format!(
                "rate expression range [{}, {}] escapes declared bounds [{lambda1}, {lambda2}]",
                range.lo, range.hi
            ));
        }
        let rate = Self { kind: RateKind::Expression(expr), lambda1, lambda2, lambda_j };
        rate.spot_check(dim)?;
        Ok(rate)
    }

    /// Arbitrary closure; the declared constants are spot-checked on random
    /// probes and violations are rejected.
    pub fn custom<F>(f: F, lambda1: f64, lambda2: f64, lambda_j: f64, dim: usize) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        check_bounds(lambda1, lambda2, lambda_j)?;
        let rate = Self { kind: RateKind::Custom(Arc::new(f)), lambda1, lambda2, lambda_j };
        rate.spot_check(dim)?;
        Ok(rate)
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn lambda_j(&self) -> f64 {
        self.lambda_j
    }

    pub fn bounds(&self) -> RateBounds {
        RateBounds { lambda1: self.lambda1, lambda2: self.lambda2, lambda_j: self.lambda_j }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, RateKind::Constant(_))
    }

    #[inline]
    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        match &self.kind {
            RateKind::Constant(c) => *c,
            RateKind::Sinusoidal { mid, amp } => mid + amp * (norm(x) + norm(v)).sin(),
            RateKind::Expression(e) => e.eval(norm(x), norm(v)),
            RateKind::Custom(f) => f(x, v),
        }
    }

    /// Checks bounds and the Lipschitz estimate on deterministic random
    /// probes: far points across several scales plus nearby pairs.
    pub fn spot_check(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        let mut rng = stream(0x5e_ed0f_4a7e, 0);
        let draw = |scale: f64, rng: &mut crate::rng::Stream| -> Vec<f64> {
            (0..dim).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
        };
        let tol = 1e-9;
        for i in 0..PROBES {
            let scale = 10f64.powi((i % 7) as i32 - 2);
            let (x, v) = (draw(scale, &mut rng), draw(scale, &mut rng));
            let j = self.eval(&x, &v);
            if !(j.is_finite() && j >= self.lambda1 - tol && j <= self.lambda2 + tol) {
                return invalid(format!(
                    "J(x, v) = {j} outside declared [{}, {}] at x = {x:?}, v = {v:?}",
                    self.lambda1, self.lambda2
                ));
            }
            let step = 10f64.powi(-((i % 5) as i32) - 1);
            let (dx, dv) = (draw(step, &mut rng), draw(step, &mut rng));
            let x2: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let v2: Vec<f64> = v.iter().zip(&dv).map(|(a, b)| a + b).collect();
            let dj = (self.eval(&x2, &v2) - j).abs();
            let bound = self.lambda_j * (distance(&x, &x2) + distance(&v, &v2));
            if dj > bound * (1.0 + 1e-6) + 1e-12 {
                return invalid(format!(
                    "declared Lipschitz constant {} violated: |dJ| = {dj} > {bound}",
                    self.lambda_j
                ));
            }
        }
        Ok(())
    }
}

fn check_bounds(lambda1: f64, lambda2: f64, lambda_j: f64) -> Result<()> {
    if !(lambda1.is_finite() && lambda2.is_finite() && lambda_j.is_finite()) {
        return invalid("rate constants must be finite");
    }
    if lambda1 <= 0.0 {
        return invalid(format!("lambda1 must be positive, got {lambda1}"));
    }
    if lambda1 > lambda2 {
        return invalid(format!("lambda1 = {lambda1} exceeds lambda2 = {lambda2}"));
    }
    if lambda_j < 0.0 {
        return invalid(format!("lambda_j must be non-negative, got {lambda_j}"));
    }
    Ok(())
}
