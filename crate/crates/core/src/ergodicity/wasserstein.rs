//! Empirical `W_Phi` between equal-size samples by exact assignment.

use super::distance::semi_metric_phi;
use super::lyapunov::Lyapunov;
use crate::coupling::CoupledState;
use crate::error::{invalid, Result};
use crate::model::PhaseState;

pub const MAX_SAMPLES: usize = 512;

/// Minimum-cost perfect matching of a square cost matrix (Hungarian method
/// with potentials, `O(n^3)`). Returns the column assigned to each row and
/// the total cost summed in row order.
pub fn assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if cost.iter().any(|row| row.len() != n) {
        return invalid("cost matrix must be square");
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return invalid("cost matrix has non-finite entries");
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // 1-based rows/columns, index 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok((assign, total))
}

/// Optimal mean of `Phi` over matchings of `a` with `b`.
pub fn empirical_wasserstein(a: &[PhaseState], b: &[PhaseState], lyap: &Lyapunov) -> Result<f64> {
    if a.len() != b.len() {
        return invalid(format!("samples have sizes {} and {}", a.len(), b.len()));
    }
    if a.is_empty() || a.len() > MAX_SAMPLES {
        return invalid(format!("sample size must be in 1..={MAX_SAMPLES}, got {}", a.len()));
    }
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|p| {
            b.iter()
                .map(|q| CoupledState::new(p.clone(), q.clone()).map(|pair| semi_metric_phi(&pair, lyap)))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let (_, total) = assignment(&cost)?;
    Ok(total / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Density, JumpRate, ModelSpec, Potential};
    use crate::rng::stream;
    use itertools::Itertools;
    use rand::Rng;

    fn brute(cost: &[Vec<f64>]) -> f64 {
        (0..cost.len())
            .permutations(cost.len())
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn greedy_trap() {
        // greedy picks (0,0) first and pays 100 later
        let cost = vec![vec![1.0, 2.0, 100.0], vec![2.0, 100.0, 100.0], vec![100.0, 3.0, 4.0]];
        let (a, total) = assignment(&cost).unwrap();
        assert_eq!(total, brute(&cost));
        assert_eq!(a, vec![1, 0, 2]);
        assert_eq!(total, 8.0);
    }

    #[test]
    fn random_instances_match_brute_force() {
        let mut rng = stream(1, 0);
        for _ in 0..50 {
            let n = 1 + rng.random_range(0..6usize);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
            assert_eq!(assignment(&cost).unwrap().1, brute(&cost));
        }
    }

    #[test]
    fn identical_samples_have_zero_distance() {
        let m = ModelSpec::new(2, 4.0, Potential::quadratic(1.0).unwrap(), JumpRate::constant(2.0).unwrap(), Density::gaussian(2).unwrap())
            .unwrap();
        let l = Lyapunov::new(&m, 2.0).unwrap();
        let mut rng = stream(2, 0);
        let pts: Vec<PhaseState> = (0..20).map(|_| PhaseState::new(m.density.sample(&mut rng), m.density.sample(&mut rng)).unwrap()).collect();
        let mut shuffled = pts.clone();
        shuffled.reverse();
        assert_eq!(empirical_wasserstein(&pts, &shuffled, &l).unwrap(), 0.0);
        let one = empirical_wasserstein(&pts[..1], &pts[1..2], &l).unwrap();
        let pair = CoupledState::new(pts[0].clone(), pts[1].clone()).unwrap();
        assert_eq!(one, semi_metric_phi(&pair, &l));
        assert!(empirical_wasserstein(&pts[..2], &pts[..3], &l).is_err());
    }
}
