//! Greedy `(n, ε)`-spanning sets on finite samples.

use rayon::prelude::*;

use crate::dynamics::{Propagator, StateVector, SystemSpec};
use crate::error::{Error, Result};

/// Orbits `φ_{iτ} x`, `i = 0..n`, of each sample point.
fn orbits(points: &[StateVector], n: usize, tau: f64, sspec: &SystemSpec) -> Result<Vec<Vec<StateVector>>> {
    let stride = sspec.steps_for(tau)?;
    points
        .par_iter()
        .map(|x| {
            let mut p = Propagator::new(sspec, x)?;
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                if i > 0 {
                    for _ in 0..stride {
                        p.step()?;
                    }
                }
                out.push(StateVector::from(p.state().to_vec()));
            }
            Ok(out)
        })
        .collect()
}

fn dn(a: &[StateVector], b: &[StateVector], n: usize, sspec: &SystemSpec) -> f64 {
    a[..n]
        .iter()
        .zip(&b[..n])
        .map(|(u, v)| sspec.distance(u, v))
        .fold(0.0, f64::max)
}

fn greedy_count(orb: &[Vec<StateVector>], n: usize, eps: f64, sspec: &SystemSpec) -> usize {
    let m = orb.len();
    let mut covered = vec![false; m];
    let mut picks = 0;
    for i in 0..m {
        if covered[i] {
            continue;
        }
        picks += 1;
        for j in i..m {
            if !covered[j] && dn(&orb[i], &orb[j], n, sspec) <= eps {
                covered[j] = true;
            }
        }
    }
    picks
}

fn check(points: &[StateVector], n: usize, eps: f64) -> Result<()> {
    if points.is_empty() || n == 0 || !(eps > 0.0) {
        return Err(Error::InvalidInput("spanning number needs points, n >= 1 and eps > 0".into()));
    }
    Ok(())
}

/// Greedy upper bound on `r_n(ε)` for the sample: scan points in order,
/// open a new centre at each uncovered point and cover its `d_n`-ball of
/// radius `eps`.
pub fn spanning_number(points: &[StateVector], n: usize, eps: f64, tau: f64, sspec: &SystemSpec) -> Result<usize> {
    check(points, n, eps)?;
    let orb = orbits(points, n, tau, sspec)?;
    Ok(greedy_count(&orb, n, eps, sspec))
}

/// Greedy counts on a grid of `ns` and `eps`, tightened to a monotone
/// envelope: an `ε'`-cover with `ε' ≤ ε` is an `ε`-cover and an
/// `(n', ε)`-cover with `n' ≥ n` is an `(n, ε)`-cover. Entry `[i][j]` is
/// for `ns[i]`, `eps[j]`; both grids must be increasing.
pub fn spanning_table(
    points: &[StateVector],
    ns: &[usize],
    eps: &[f64],
    tau: f64,
    sspec: &SystemSpec,
) -> Result<Vec<Vec<usize>>> {
    if ns.windows(2).any(|w| w[0] >= w[1]) || eps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("spanning grids must be strictly increasing".into()));
    }
    let n_max = *ns.last().ok_or_else(|| Error::InvalidInput("empty n grid".into()))?;
    check(points, ns[0], *eps.first().unwrap_or(&0.0))?;
    let orb = orbits(points, n_max, tau, sspec)?;
    let mut table: Vec<Vec<usize>> = ns
        .par_iter()
        .map(|&n| eps.iter().map(|&e| greedy_count(&orb, n, e, sspec)).collect())
        .collect();
    for row in table.iter_mut() {
        for j in 1..row.len() {
            row[j] = row[j].min(row[j - 1]);
        }
    }
    for i in (0..table.len().saturating_sub(1)).rev() {
        for j in 0..eps.len() {
            table[i][j] = table[i][j].min(table[i + 1][j]);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{estimate_lipschitz, Region};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus_points(m: usize, seed: u64) -> Vec<StateVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| Region::Torus.sample(&mut rng, 2)).collect()
    }

    fn plane_points(m: usize, seed: u64) -> Vec<StateVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| StateVector::from(vec![rng.random::<f64>(), rng.random::<f64>()]))
            .collect()
    }

    /// Smallest subset whose eps-balls cover all points, by enumeration.
    fn brute_min_cover(points: &[StateVector], eps: f64) -> usize {
        let m = points.len();
        let d = |i: usize, j: usize| {
            let a = &points[i];
            let b = &points[j];
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
        };
        (1u32..(1 << m))
            .filter(|mask| (0..m).all(|j| (0..m).any(|i| mask >> i & 1 == 1 && d(i, j) <= eps)))
            .map(|mask| mask.count_ones() as usize)
            .min()
            .unwrap()
    }

    #[test]
    fn large_eps_gives_one() {
        let sys = SystemSpec::cat_map();
        let pts = torus_points(50, 1);
        assert_eq!(spanning_number(&pts, 3, 1.0, 1.0, &sys).unwrap(), 1);
    }

    #[test]
    fn single_step_greedy_is_within_a_factor_of_the_minimum() {
        let sys = SystemSpec::identity_map(2);
        for seed in 0..20 {
            let pts = plane_points(10, seed);
            for eps in [0.1, 0.2, 0.35, 0.5] {
                let g = spanning_number(&pts, 1, eps, 1.0, &sys).unwrap();
                // greedy centres are eps-separated, so each optimal eps/2-ball holds one
                assert!(g >= brute_min_cover(&pts, eps), "seed {seed} eps {eps}");
                assert!(g <= brute_min_cover(&pts, eps / 2.0), "seed {seed} eps {eps}");
            }
        }
    }

    #[test]
    fn cat_map_growth_stays_below_the_covering_bound() {
        let sys = SystemSpec::cat_map();
        let c = estimate_lipschitz(&sys, 1.0, 400, 3).unwrap();
        let p = 2.0;
        let pts = torus_points(1500, 4);
        let eps = 0.2;
        let ns = [1, 2, 3, 4, 5, 6];
        let table = spanning_table(&pts, &ns, &[eps], 1.0, &sys).unwrap();
        let r1 = table[0][0] as f64;
        for (i, n) in ns.iter().enumerate() {
            let r = table[i][0] as f64;
            // r_n ≤ r_1 C^{p(n-1)} up to the finite-sample factor
            let rate = (r / r1).ln() / *n as f64;
            assert!(rate <= p * c.ln() + 0.1, "n={n}: {rate}");
        }
        assert!(table[5][0] > table[0][0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn table_is_monotone(seed in 0u64..1000) {
            let sys = SystemSpec::cat_map();
            let pts = torus_points(60, seed);
            let ns = [1, 2, 3];
            let eps = [0.05, 0.1, 0.2, 0.4];
            let t = spanning_table(&pts, &ns, &eps, 1.0, &sys).unwrap();
            for i in 0..ns.len() {
                for j in 1..eps.len() {
                    prop_assert!(t[i][j] <= t[i][j - 1]);
                }
                if i > 0 {
                    for j in 0..eps.len() {
                        prop_assert!(t[i][j] >= t[i - 1][j]);
                    }
                }
                for j in 0..eps.len() {
                    prop_assert!(t[i][j] <= spanning_number(&pts, ns[i], eps[j], 1.0, &sys).unwrap());
                }
            }
        }
    }
}
