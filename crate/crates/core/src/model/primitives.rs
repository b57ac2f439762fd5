//! Truncation, Householder reflection and the overlap split
//! `phi = psi_xi + Psi_xi` used by the jump coupling.

use super::density::Density;
use crate::error::{ensure_finite, invalid, Result};
use crate::linalg::{dot, norm};

/// `(z)_kappa`: `z` scaled down to norm at most `kappa`; `0` maps to `0`.
pub fn truncate(z: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return invalid(format!("truncation level must be positive, got {kappa}"));
    }
    ensure_finite("vector", z)?;
    let mut out = z.to_vec();
    truncate_in_place(&mut out, kappa);
    Ok(out)
}

#[inline]
pub(crate) fn truncate_in_place(z: &mut [f64], kappa: f64) {
    let n = norm(z);
    if n > kappa {
        let s = kappa / n;
        z.iter_mut().for_each(|c| *c *= s);
    }
}

/// `Pi_axis u`: Householder reflection through the hyperplane orthogonal to
/// `axis`, or `-u` when `axis = 0`.
pub fn reflect(axis: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    if axis.len() != u.len() {
        return invalid(format!("reflection axis has length {}, vector {}", axis.len(), u.len()));
    }
    ensure_finite("axis", axis)?;
    ensure_finite("vector", u)?;
    let mut out = u.to_vec();
    reflect_in_place(axis, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn reflect_in_place(axis: &[f64], u: &mut [f64]) {
    let n2 = dot(axis, axis);
    if n2 == 0.0 {
        u.iter_mut().for_each(|c| *c = -*c);
        return;
    }
    let s = 2.0 * dot(u, axis) / n2;
    for (c, a) in u.iter_mut().zip(axis) {
        *c -= s * a;
    }
}

/// `psi_xi(u) = min(phi(u), phi(u + xi))`.
pub fn psi(density: &Density, xi: &[f64], u: &[f64]) -> f64 {
    let shifted: Vec<f64> = u.iter().zip(xi).map(|(a, b)| a + b).collect();
    density.pdf(u).min(density.pdf(&shifted))
}

/// `Psi_xi(u) = phi(u) - psi_xi(u)`.
pub fn capital_psi(density: &Density, xi: &[f64], u: &[f64]) -> f64 {
    density.pdf(u) - psi(density, xi, u)
}
