//! Overlap mass `A(xi) = int psi_xi(u) du` and the constants bounding it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::density::{sample_direction, Density};
use crate::error::{invalid, Error, Result};
use crate::stats::{Estimate, MeanAccumulator};

/// Standard errors added or subtracted when turning estimates into bounds.
pub const SAFETY_SIGMAS: f64 = 3.0;

/// Monte Carlo estimate of `A(xi) = E_{u~phi}[min(1, phi(u + xi)/phi(u))]`
/// for any `xi` with `|xi| = xi_norm` (the density is radial).
pub fn overlap_a<R: Rng + ?Sized>(
    density: &Density,
    xi_norm: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<Estimate> {
    if n_samples == 0 {
        return invalid("overlap estimate needs at least one sample");
    }
    if !(xi_norm.is_finite() && xi_norm >= 0.0) {
        return invalid(format!("shift norm must be finite and non-negative, got {xi_norm}"));
    }
    if xi_norm == 0.0 {
        return Ok(Estimate { mean: 1.0, se: 0.0, n: n_samples });
    }
    Ok(overlap_many(density, &[xi_norm], n_samples, rng).remove(0))
}

/// Shared-draw estimates of `A` at several shift norms.
fn overlap_many<R: Rng + ?Sized>(
    density: &Density,
    xi_norms: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Vec<Estimate> {
    let dim = density.dim();
    let mut u = vec![0.0; dim];
    let mut xi = vec![0.0; dim];
    let mut accs = vec![MeanAccumulator::default(); xi_norms.len()];
    for _ in 0..n_samples {
        density.sample_into(rng, &mut u);
        for (acc, &s) in accs.iter_mut().zip(xi_norms) {
            xi[0] = s;
            acc.push(density.overlap_ratio(&u, &xi));
        }
    }
    accs.iter().map(MeanAccumulator::estimate).collect()
}

/// Estimates of `A` at several shift norms from the half-space identity
/// `A(xi) = 2 P(u_1 >= |xi|/2)`, valid for radial non-increasing `phi`.
/// Directions are sampled and the radial tail is exact, so the relative
/// error stays bounded for shifts far beyond the bulk of `phi`.
pub fn overlap_a_halfspace<R: Rng + ?Sized>(
    density: &Density,
    xi_norms: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<Estimate>> {
    if n_samples == 0 {
        return invalid("overlap estimate needs at least one sample");
    }
    if let Some(s) = xi_norms.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return invalid(format!("shift norm must be finite and non-negative, got {s}"));
    }
    let mut omega = vec![0.0; density.dim()];
    let mut accs = vec![MeanAccumulator::default(); xi_norms.len()];
    for _ in 0..n_samples {
        sample_direction(rng, &mut omega);
        let c = omega[0].abs();
        for (acc, &s) in accs.iter_mut().zip(xi_norms) {
            acc.push(if s == 0.0 { 1.0 } else { density.radial_sf(0.5 * s / c) });
        }
    }
    Ok(accs.iter().map(MeanAccumulator::estimate).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapConstants {
    /// Lower bound on `A_{alpha,kappa}(z)` over the grid.
    pub c_star: f64,
    /// Upper bound on `(1 - A_{alpha,kappa}(z)) / |z|` over the grid.
    pub c_upper_star: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub grid: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub n_samples: usize,
    pub sigmas: f64,
}

/// Certifies `c_*(alpha, kappa)` and `c^*(alpha, kappa)` on a finite grid of
/// radii `r in (0, kappa]` with a three standard error margin. Uses
/// [`overlap_a_halfspace`], since `alpha kappa` is often deep in the tail.
pub fn estimate_overlap_constants<R: Rng + ?Sized>(
    density: &Density,
    alpha: f64,
    kappa: f64,
    grid: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<OverlapConstants> {
    if !(alpha.is_finite() && alpha > 0.0 && kappa.is_finite() && kappa > 0.0) {
        return invalid(format!("alpha and kappa must be positive, got {alpha}, {kappa}"));
    }
    if grid.is_empty() {
        return invalid("overlap grid is empty");
    }
    if let Some(r) = grid.iter().find(|r| !(r.is_finite() && **r > 0.0 && **r <= kappa)) {
        return invalid(format!("grid radius {r} is outside (0, {kappa}]"));
    }
    if n_samples < 2 {
        return invalid("overlap constants need at least two samples");
    }
    let shifts: Vec<f64> = grid.iter().map(|r| alpha * r.min(kappa)).collect();
    let estimates = overlap_a_halfspace(density, &shifts, n_samples, rng)?;
    let c_star = estimates
        .iter()
        .map(|e| e.lower(SAFETY_SIGMAS))
        .fold(f64::INFINITY, f64::min)
        .min(1.0);
    let c_upper_star = estimates
        .iter()
        .zip(grid)
        .map(|(e, r)| (1.0 - e.mean + SAFETY_SIGMAS * e.se) / r)
        .fold(0.0_f64, f64::max);
    if !(c_star > 0.0) {
        return Err(Error::Inconclusive(format!(
            "overlap lower bound {c_star} is not positive; increase samples or shrink kappa"
        )));
    }
    if !(c_upper_star > 0.0 && c_upper_star.is_finite()) {
        return Err(Error::Inconclusive(format!("overlap slope bound {c_upper_star} is degenerate")));
    }
    Ok(OverlapConstants {
        c_star,
        c_upper_star,
        alpha,
        kappa,
        grid: grid.to_vec(),
        estimates,
        n_samples,
        sigmas: SAFETY_SIGMAS,
    })
}

/// Geometric grid of `n` radii from `kappa * lo_frac` up to `kappa`.
pub fn default_radius_grid(kappa: f64, n: usize, lo_frac: f64) -> Vec<f64> {
    if n == 1 {
        return vec![kappa];
    }
    let ratio = lo_frac.powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| kappa * ratio.powi((n - 1 - i) as i32)).map(|r| r.min(kappa)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Standard normal CDF through `erfc`.
    fn norm_cdf(x: f64) -> f64 {
        0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn zero_shift_is_exactly_one() {
        let g = Density::gaussian(3).unwrap();
        let e = overlap_a(&g, 0.0, 10, &mut stream(1, 0)).unwrap();
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn zero_samples_rejected() {
        let g = Density::gaussian(1).unwrap();
        assert!(overlap_a(&g, 1.0, 0, &mut stream(1, 0)).is_err());
    }

    #[test]
    fn gaussian_overlap_matches_closed_form() {
        for dim in [1, 2, 3] {
            let g = Density::gaussian(dim).unwrap();
            let e = overlap_a(&g, 2.0, 200_000, &mut stream(2, dim as u64)).unwrap();
            let truth = 2.0 * norm_cdf(-1.0);
            assert!((truth - 0.3173).abs() < 1e-4);
            assert!((e.mean - truth).abs() < 3.0 * e.se, "d={dim}: {e:?} vs {truth}");
        }
    }

    #[test]
    fn gaussian_constants_example() {
        let g = Density::gaussian(2).unwrap();
        let c = estimate_overlap_constants(&g, 1.0, 1.0, &[0.25, 0.5, 1.0], 200_000, &mut stream(3, 0))
            .unwrap();
        let worst = 2.0 * norm_cdf(-0.5);
        assert!((worst - 0.6171).abs() < 1e-4);
        assert!(c.c_star <= worst + 1e-3 && c.c_star > worst - 0.01, "{}", c.c_star);
        assert!(c.c_star <= 1.0 && c.c_upper_star >= 0.0);
        // (1 - A(alpha r)) / r is largest at the smallest radius for the Gaussian
        let slope = (1.0 - 2.0 * norm_cdf(-0.125)) / 0.25;
        assert!((c.c_upper_star - slope).abs() < 0.02, "{} vs {slope}", c.c_upper_star);
    }

    #[test]
    fn halfspace_estimator_matches_gaussian_tail() {
        for dim in [1, 2, 3] {
            let g = Density::gaussian(dim).unwrap();
            let shifts = [0.0, 2.0, 13.0];
            let e = overlap_a_halfspace(&g, &shifts, 50_000, &mut stream(4, dim as u64)).unwrap();
            assert_eq!(e[0].mean, 1.0);
            for (est, s) in e.iter().zip(shifts).skip(1) {
                let truth = 2.0 * norm_cdf(-0.5 * s);
                assert!((est.mean - truth).abs() <= 3.0 * est.se + 1e-9 * truth, "d={dim} s={s}: {est:?} vs {truth}");
                assert!(est.se < 0.05 * truth);
            }
        }
    }

    #[test]
    fn halfspace_agrees_with_plain_estimator() {
        for dens in [Density::heavy_tail(2, 1.0).unwrap(), Density::stretched_exp(3, 0.7).unwrap()] {
            for s in [0.3, 1.5] {
                let plain = overlap_a(&dens, s, 200_000, &mut stream(5, 0)).unwrap();
                let half = overlap_a_halfspace(&dens, &[s], 200_000, &mut stream(5, 1)).unwrap()[0];
                let se = (plain.se.powi(2) + half.se.powi(2)).sqrt();
                assert!((plain.mean - half.mean).abs() < 3.0 * se, "{:?} s={s}: {plain:?} vs {half:?}", dens.kind());
            }
        }
    }

    #[test]
    fn bad_grids_rejected() {
        let g = Density::gaussian(1).unwrap();
        let mut rng = stream(0, 0);
        assert!(estimate_overlap_constants(&g, 1.0, 1.0, &[], 100, &mut rng).is_err());
        assert!(estimate_overlap_constants(&g, 1.0, 1.0, &[0.0], 100, &mut rng).is_err());
        assert!(estimate_overlap_constants(&g, 1.0, 1.0, &[1.5], 100, &mut rng).is_err());
        assert!(estimate_overlap_constants(&g, 0.0, 1.0, &[0.5], 100, &mut rng).is_err());
    }

    #[test]
    fn radius_grid_ends_at_kappa() {
        let g = default_radius_grid(2.0, 5, 1e-2);
        assert_eq!(g.len(), 5);
        assert!((g[0] - 0.02).abs() < 1e-12);
        assert_eq!(*g.last().unwrap(), 2.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
