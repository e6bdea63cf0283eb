//! Prior laws for the initial condition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Region, StateVector};
use crate::error::{Error, Result};

/// Rejection attempts per particle before a truncated Gaussian gives up.
const MAX_REJECTIONS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorKind {
    UniformBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Box with density `∝ Π_j (1 + tilt_j u_j)`, `u_j ∈ [−1, 1]` the
    /// rescaled coordinate. Equivalent to the uniform box for `|tilt_j| < 1`.
    TiltedBox {
        lo: Vec<f64>,
        hi: Vec<f64>,
        tilt: Vec<f64>,
    },
    /// Diagonal Gaussian conditioned on `region`.
    GaussianTruncated {
        mean: Vec<f64>,
        var: Vec<f64>,
        region: Region,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(flatten)]
    pub kind: PriorKind,
    pub n_particles: usize,
    pub seed: u64,
}

impl PriorSpec {
    pub fn uniform_box(lo: Vec<f64>, hi: Vec<f64>, n_particles: usize, seed: u64) -> Self {
        Self {
            kind: PriorKind::UniformBox { lo, hi },
            n_particles,
            seed,
        }
    }

    pub fn tilted_box(lo: Vec<f64>, hi: Vec<f64>, tilt: Vec<f64>, n_particles: usize, seed: u64) -> Self {
        Self {
            kind: PriorKind::TiltedBox { lo, hi, tilt },
            n_particles,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            PriorKind::UniformBox { lo, .. } | PriorKind::TiltedBox { lo, .. } => lo.len(),
            PriorKind::GaussianTruncated { mean, .. } => mean.len(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::InvalidSpec("prior needs at least one particle".into()));
        }
        match &self.kind {
            PriorKind::UniformBox { lo, hi } => check_box(lo, hi),
            PriorKind::TiltedBox { lo, hi, tilt } => {
                check_box(lo, hi)?;
                if tilt.len() != lo.len() || tilt.iter().any(|b| !(b.abs() < 1.0)) {
                    return Err(Error::InvalidSpec("tilt must have |tilt_j| < 1 per coordinate".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| l == h) {
                    return Err(Error::InvalidSpec("tilted box must have positive width".into()));
                }
                Ok(())
            }
            PriorKind::GaussianTruncated { mean, var, region } => {
                if var.len() != mean.len() || var.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::InvalidSpec("gaussian prior needs positive variances".into()));
                }
                if let Some(d) = region.dim() {
                    if d != mean.len() {
                        return Err(Error::DimensionMismatch {
                            expected: mean.len(),
                            got: d,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// A box with `lo == hi` in every coordinate.
    pub fn is_point_mass(&self) -> bool {
        matches!(&self.kind, PriorKind::UniformBox { lo, hi } if lo == hi)
    }

    /// The closed support of the prior.
    pub fn support(&self) -> Region {
        match &self.kind {
            PriorKind::UniformBox { lo, hi } | PriorKind::TiltedBox { lo, hi, .. } => Region::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            PriorKind::GaussianTruncated { region, .. } => region.clone(),
        }
    }

    /// Draw the particles. A point-mass box yields a single particle.
    pub fn sample(&self) -> Result<Vec<StateVector>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match &self.kind {
            PriorKind::UniformBox { lo, .. } if self.is_point_mass() => Ok(vec![lo.clone().into()]),
            PriorKind::UniformBox { lo, hi } => Ok((0..self.n_particles)
                .map(|_| {
                    lo.iter()
                        .zip(hi)
                        .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                        .collect::<Vec<_>>()
                        .into()
                })
                .collect()),
            PriorKind::TiltedBox { lo, hi, tilt } => Ok((0..self.n_particles)
                .map(|_| {
                    lo.iter()
                        .zip(hi)
                        .zip(tilt)
                        .map(|((l, h), b)| {
                            let u = tilted_quantile(*b, rng.random::<f64>());
                            let mid = 0.5 * (l + h);
                            (mid + 0.5 * (h - l) * u).clamp(*l, *h)
                        })
                        .collect::<Vec<_>>()
                        .into()
                })
                .collect()),
            PriorKind::GaussianTruncated { mean, var, region } => (0..self.n_particles)
                .map(|_| {
                    for _ in 0..MAX_REJECTIONS {
                        let x: Vec<f64> = mean
                            .iter()
                            .zip(var)
                            .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
                            .collect();
                        if region.contains(&x) {
                            return Ok(x.into());
                        }
                    }
                    Err(Error::InvalidSpec("truncated gaussian region has negligible mass".into()))
                })
                .collect(),
        }
    }

    /// Log density up to an additive constant that depends only on the spec.
    /// `None` outside the support.
    pub fn log_density(&self, x: &[f64]) -> Option<f64> {
        if !self.support().contains(x) {
            return None;
        }
        match &self.kind {
            PriorKind::UniformBox { lo, hi } => Some(-log_volume(lo, hi)),
            PriorKind::TiltedBox { lo, hi, tilt } => {
                let mut acc = -log_volume(lo, hi);
                for (((v, l), h), b) in x.iter().zip(lo).zip(hi).zip(tilt) {
                    let u = (2.0 * v - l - h) / (h - l);
                    acc += (1.0 + b * u).ln();
                }
                Some(acc)
            }
            PriorKind::GaussianTruncated { mean, var, .. } => Some(
                x.iter()
                    .zip(mean)
                    .zip(var)
                    .map(|((v, m), s2)| -0.5 * (v - m) * (v - m) / s2)
                    .sum(),
            ),
        }
    }

    /// Sampled check that the prior lives inside `region`. Box priors also
    /// test every corner.
    pub fn support_within(&self, region: &Region, n_check: usize) -> Result<bool> {
        if let PriorKind::UniformBox { lo, hi } | PriorKind::TiltedBox { lo, hi, .. } = &self.kind {
            let p = lo.len();
            if p <= 16 {
                for mask in 0u32..(1 << p) {
                    let corner: Vec<f64> = (0..p)
                        .map(|j| if mask >> j & 1 == 1 { hi[j] } else { lo[j] })
                        .collect();
                    if !region.contains(&corner) {
                        return Ok(false);
                    }
                }
            }
        }
        let probe = Self {
            n_particles: n_check.max(1),
            seed: self.seed ^ 0x5u64,
            ..self.clone()
        };
        Ok(probe.sample()?.iter().all(|x| region.contains(x)))
    }

    /// Mean of the prior in closed form (box priors only).
    pub fn box_mean(&self) -> Option<Vec<f64>> {
        match &self.kind {
            PriorKind::UniformBox { lo, hi } => Some(lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect()),
            PriorKind::TiltedBox { lo, hi, tilt } => Some(
                lo.iter()
                    .zip(hi)
                    .zip(tilt)
                    .map(|((l, h), b)| 0.5 * (l + h) + 0.5 * (h - l) * b / 3.0)
                    .collect(),
            ),
            PriorKind::GaussianTruncated { .. } => None,
        }
    }
}

/// `log(dν/dμ)(x)` for two priors on the same support.
pub fn log_density_ratio(nu: &PriorSpec, mu: &PriorSpec, x: &[f64]) -> Result<f64> {
    if nu.support() != mu.support() {
        return Err(Error::InvalidSpec(
            "density ratio needs priors with identical supports".into(),
        ));
    }
    match (nu.log_density(x), mu.log_density(x)) {
        (Some(a), Some(b)) => Ok(a - b),
        _ => Err(Error::InvalidInput("point outside the common support".into())),
    }
}

fn check_box(lo: &[f64], hi: &[f64]) -> Result<()> {
    if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
        return Err(Error::InvalidSpec("box prior needs lo <= hi per coordinate".into()));
    }
    Ok(())
}

fn log_volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(l, h)| (h - l).ln()).sum()
}

/// Inverse CDF of the density `(1 + b u) / 2` on `[−1, 1]`.
fn tilted_quantile(b: f64, v: f64) -> f64 {
    // (b/2) u² + u + (1 − b/2 − 2v) = 0, root in [−1, 1], cancellation-free form
    let c = 1.0 - 0.5 * b - 2.0 * v;
    -2.0 * c / (1.0 + (1.0 - 2.0 * b * c).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_is_a_single_particle() {
        let p = PriorSpec::uniform_box(vec![1.0, 2.0], vec![1.0, 2.0], 50, 0);
        let xs = p.sample().unwrap();
        assert_eq!(xs, vec![StateVector::from([1.0, 2.0])]);
    }

    #[test]
    fn sampling_is_seeded() {
        let p = PriorSpec::uniform_box(vec![0.0; 3], vec![1.0; 3], 10, 7);
        assert_eq!(p.sample().unwrap(), p.sample().unwrap());
        assert_ne!(p.sample().unwrap(), p.with_seed(8).sample().unwrap());
    }

    #[test]
    fn tilted_quantile_endpoints_and_symmetry() {
        for b in [-0.9, -0.3, 0.0, 0.5, 0.99] {
            assert!((tilted_quantile(b, 0.0) + 1.0).abs() < 1e-12);
            assert!((tilted_quantile(b, 1.0) - 1.0).abs() < 1e-12);
            // CDF check at an interior point
            let u = tilted_quantile(b, 0.3);
            let cdf = ((u + 1.0) + b * (u * u - 1.0) / 2.0) / 2.0;
            assert!((cdf - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn tilted_box_mean_matches_closed_form() {
        let p = PriorSpec::tilted_box(vec![-1.0, 0.0], vec![1.0, 4.0], vec![0.6, -0.3], 200_000, 3);
        let xs = p.sample().unwrap();
        let n = xs.len() as f64;
        let m0 = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let m1 = xs.iter().map(|x| x[1]).sum::<f64>() / n;
        let exact = p.box_mean().unwrap();
        assert!((exact[0] - 0.2).abs() < 1e-15);
        assert!((m0 - exact[0]).abs() < 0.01);
        assert!((m1 - exact[1]).abs() < 0.02);
    }

    #[test]
    fn density_ratio_requires_common_support() {
        let mu = PriorSpec::uniform_box(vec![0.0], vec![2.0], 10, 0);
        let nu = PriorSpec::tilted_box(vec![0.0], vec![2.0], vec![0.5], 10, 0);
        // u = 0 at the midpoint, u = 1 at the top
        assert!(log_density_ratio(&nu, &mu, &[1.0]).unwrap().abs() < 1e-15);
        assert!((log_density_ratio(&nu, &mu, &[2.0]).unwrap() - 1.5f64.ln()).abs() < 1e-15);
        let other = PriorSpec::uniform_box(vec![0.0], vec![3.0], 10, 0);
        assert!(log_density_ratio(&other, &mu, &[1.0]).is_err());
        assert!(log_density_ratio(&nu, &mu, &[5.0]).is_err());
    }

    #[test]
    fn support_check() {
        let ball = Region::Ball {
            center: vec![0.0, 0.0, 38.0],
            radius: 40.0,
        };
        let inside = PriorSpec::uniform_box(vec![-1.0, -1.0, 20.0], vec![1.0, 1.0, 22.0], 10, 0);
        assert!(inside.support_within(&ball, 100).unwrap());
        let outside = PriorSpec::uniform_box(vec![-10.0; 3], vec![10.0; 3], 10, 0);
        assert!(!outside.support_within(&ball, 100).unwrap());
    }

    #[test]
    fn truncated_gaussian_respects_region() {
        let region = Region::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let p = PriorSpec {
            kind: PriorKind::GaussianTruncated {
                mean: vec![0.5, 0.0],
                var: vec![1.0, 1.0],
                region: region.clone(),
            },
            n_particles: 500,
            seed: 1,
        };
        assert!(p.sample().unwrap().iter().all(|x| region.contains(x)));
    }
}
