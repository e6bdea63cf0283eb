//! Deterministic flows and maps.
//!
//! A [`SystemSpec`] describes either an ODE integrated with fixed-step RK4 or
//! a discrete map iterated on the integer grid. Every propagation routine
//! lives in [`integrate`]; regularity probes (trapping region, empirical
//! Lipschitz constant) live in [`probes`].

pub mod integrate;
pub mod probes;

use std::ops::{Deref, Index};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use integrate::{flow, inverse_step, trajectory_grid, Propagator};
pub use probes::{check_trapping, estimate_lipschitz, TrappingReport};

pub const DEFAULT_OVERFLOW_BOUND: f64 = 1e12;

/// Relative tolerance used to decide whether a time lies on the integrator grid.
const GRID_TOL: f64 = 1e-9;

/// A point of the state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for StateVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

/// Distance on the state space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// Flat metric on the unit torus: Euclidean distance minimised over integer shifts.
    Torus,
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Torus => a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let d = x - y;
                    let d = d - d.round();
                    d * d
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

/// Region descriptor used for trapping regions and prior supports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// The whole unit torus `[0,1)^p`.
    Torus,
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.excursion(x) == 0.0
    }

    /// Euclidean distance from `x` to the region, zero inside.
    pub fn excursion(&self, x: &[f64]) -> f64 {
        match self {
            Region::Ball { center, radius } => {
                let d = Metric::Euclidean.distance(x, center);
                (d - radius).max(0.0)
            }
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| {
                    let e = if v < l {
                        l - v
                    } else if v > h {
                        v - h
                    } else {
                        0.0
                    };
                    e * e
                })
                .sum::<f64>()
                .sqrt(),
            Region::Torus => 0.0,
        }
    }

    pub fn diameter(&self, dim: usize) -> f64 {
        match self {
            Region::Ball { radius, .. } => 2.0 * radius,
            Region::Box { lo, hi } => Metric::Euclidean.distance(lo, hi),
            Region::Torus => 0.5 * (dim as f64).sqrt(),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Region::Ball { center, .. } => Some(center.len()),
            Region::Box { lo, .. } => Some(lo.len()),
            Region::Torus => None,
        }
    }

    /// Uniform sample from the region.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, dim: usize) -> StateVector {
        match self {
            Region::Ball { center, radius } => {
                let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
                let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                center
                    .iter()
                    .zip(&dir)
                    .map(|(c, d)| c + r * d / norm)
                    .collect::<Vec<_>>()
                    .into()
            }
            Region::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect::<Vec<_>>()
                .into(),
            Region::Torus => (0..dim)
                .map(|_| rng.random::<f64>())
                .collect::<Vec<_>>()
                .into(),
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if let Some(d) = self.dim() {
            if d != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: d });
            }
        }
        match self {
            Region::Ball { radius, .. } if !(*radius > 0.0) => {
                Err(Error::InvalidSpec("ball radius must be positive".into()))
            }
            Region::Box { lo, hi } if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| l > h) => {
                Err(Error::InvalidSpec("box needs lo <= hi per coordinate".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Named vector fields. `dx/dt = field(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum VectorField {
    Lorenz63 { a: f64, b: f64, c: f64 },
    /// Cyclic Lorenz 96; the number of sites is the system dimension.
    Lorenz96 { forcing: f64 },
    /// `dx/dt = f - A x - B(x, x)` with `B` symmetric and `u·B(u,u) = 0`.
    /// `quadratic[i][j][k]` is the coefficient of `u_j v_k` in `B(u, v)_i`.
    Bilinear {
        linear: Vec<Vec<f64>>,
        quadratic: Vec<Vec<Vec<f64>>>,
        forcing: Vec<f64>,
    },
}

/// Named discrete maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum DiscreteMap {
    /// The toral automorphism `[[2,1],[1,1]]` on the unit 2-torus.
    CatMap,
    /// Integer matrix with determinant ±1 acting on the unit 2-torus, plus a translation.
    TorusAffine {
        matrix: [[i64; 2]; 2],
        #[serde(default)]
        shift: [f64; 2],
    },
    /// Linear map `x -> M x` on R^p.
    Linear { matrix: Vec<Vec<f64>> },
}

impl DiscreteMap {
    pub(crate) fn torus_matrix(&self) -> Option<[[i64; 2]; 2]> {
        match self {
            DiscreteMap::CatMap => Some([[2, 1], [1, 1]]),
            DiscreteMap::TorusAffine { matrix, .. } => Some(*matrix),
            DiscreteMap::Linear { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SystemKind {
    Ode { field: VectorField, integrator_dt: f64 },
    Map { map: DiscreteMap },
}

fn default_overflow() -> f64 {
    DEFAULT_OVERFLOW_BOUND
}

/// A deterministic dynamical system together with its integration settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trapping_region: Option<Region>,
    #[serde(default = "default_overflow")]
    pub overflow_bound: f64,
}

impl SystemSpec {
    pub fn new(kind: SystemKind, dimension: usize) -> Self {
        Self {
            kind,
            dimension,
            trapping_region: None,
            overflow_bound: DEFAULT_OVERFLOW_BOUND,
        }
    }

    pub fn lorenz63(a: f64, b: f64, c: f64, integrator_dt: f64) -> Self {
        Self::new(
            SystemKind::Ode {
                field: VectorField::Lorenz63 { a, b, c },
                integrator_dt,
            },
            3,
        )
    }

    /// Lorenz 63 with the classical chaotic parameters (10, 28, 8/3).
    pub fn lorenz63_classic(integrator_dt: f64) -> Self {
        Self::lorenz63(10.0, 28.0, 8.0 / 3.0, integrator_dt)
    }

    pub fn lorenz96(p: usize, forcing: f64, integrator_dt: f64) -> Self {
        Self::new(
            SystemKind::Ode {
                field: VectorField::Lorenz96 { forcing },
                integrator_dt,
            },
            p,
        )
    }

    pub fn bilinear(
        linear: Vec<Vec<f64>>,
        quadratic: Vec<Vec<Vec<f64>>>,
        forcing: Vec<f64>,
        integrator_dt: f64,
    ) -> Self {
        let p = forcing.len();
        Self::new(
            SystemKind::Ode {
                field: VectorField::Bilinear {
                    linear,
                    quadratic,
                    forcing,
                },
                integrator_dt,
            },
            p,
        )
    }

    pub fn cat_map() -> Self {
        Self::new(SystemKind::Map { map: DiscreteMap::CatMap }, 2).with_region(Region::Torus)
    }

    pub fn linear_map(matrix: Vec<Vec<f64>>) -> Self {
        let p = matrix.len();
        Self::new(SystemKind::Map { map: DiscreteMap::Linear { matrix } }, p)
    }

    /// Identity map on R^p.
    pub fn identity_map(p: usize) -> Self {
        Self::linear_map(
            (0..p)
                .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        )
    }

    /// `x -> factor * x` on R^p.
    pub fn scaling_map(p: usize, factor: f64) -> Self {
        Self::linear_map(
            (0..p)
                .map(|i| (0..p).map(|j| if i == j { factor } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.trapping_region = Some(region);
        self
    }

    pub fn with_overflow_bound(mut self, bound: f64) -> Self {
        self.overflow_bound = bound;
        self
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, SystemKind::Map { .. })
    }

    /// Integrator step for ODEs, 1 for maps.
    pub fn step_size(&self) -> f64 {
        match &self.kind {
            SystemKind::Ode { integrator_dt, .. } => *integrator_dt,
            SystemKind::Map { .. } => 1.0,
        }
    }

    pub fn metric(&self) -> Metric {
        match &self.kind {
            SystemKind::Map { map } if map.torus_matrix().is_some() => Metric::Torus,
            _ => Metric::Euclidean,
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.metric().distance(a, b)
    }

    /// The trapping region; torus maps default to the whole torus.
    pub fn region(&self) -> Result<&Region> {
        static TORUS: Region = Region::Torus;
        match &self.trapping_region {
            Some(r) => Ok(r),
            None if self.metric() == Metric::Torus => Ok(&TORUS),
            None => Err(Error::NoRegion),
        }
    }

    /// Number of integrator steps that reach `t`, or `NonGridTime`.
    pub fn steps_for(&self, t: f64) -> Result<u64> {
        let dt = self.step_size();
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::NonGridTime { t, dt });
        }
        let n = (t / dt).round();
        if (n * dt - t).abs() > GRID_TOL * t.abs().max(1.0) {
            return Err(Error::NonGridTime { t, dt });
        }
        Ok(n as u64)
    }

    /// True when `t` is a whole multiple of `step` (both on the integrator grid).
    pub fn divides(step: f64, t: f64) -> bool {
        if !(step > 0.0) {
            return false;
        }
        let n = (t / step).round();
        (n * step - t).abs() <= GRID_TOL * t.abs().max(1.0)
    }

    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("state has non-finite coordinates".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dimension;
        if p == 0 {
            return Err(Error::InvalidSpec("dimension must be positive".into()));
        }
        if !(self.overflow_bound > 0.0) {
            return Err(Error::InvalidSpec("overflow bound must be positive".into()));
        }
        match &self.kind {
            SystemKind::Ode { field, integrator_dt } => {
                if !(*integrator_dt > 0.0) || !integrator_dt.is_finite() {
                    return Err(Error::InvalidSpec("integrator_dt must be positive".into()));
                }
                match field {
                    VectorField::Lorenz63 { .. } if p != 3 => {
                        return Err(Error::DimensionMismatch { expected: 3, got: p });
                    }
                    VectorField::Lorenz96 { .. } if p < 4 => {
                        return Err(Error::InvalidSpec("Lorenz 96 needs at least 4 sites".into()));
                    }
                    VectorField::Bilinear {
                        linear,
                        quadratic,
                        forcing,
                    } => validate_bilinear(p, linear, quadratic, forcing)?,
                    _ => {}
                }
            }
            SystemKind::Map { map } => match map {
                DiscreteMap::CatMap | DiscreteMap::TorusAffine { .. } => {
                    if p != 2 {
                        return Err(Error::DimensionMismatch { expected: 2, got: p });
                    }
                    let m = map.torus_matrix().unwrap();
                    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                    if det.abs() != 1 {
                        return Err(Error::InvalidSpec(format!(
                            "torus automorphism needs determinant ±1, got {det}"
                        )));
                    }
                }
                DiscreteMap::Linear { matrix } => {
                    if matrix.len() != p || matrix.iter().any(|r| r.len() != p) {
                        return Err(Error::InvalidSpec("linear map must be p x p".into()));
                    }
                }
            },
        }
        if let Some(r) = &self.trapping_region {
            r.validate(p)?;
            if matches!(r, Region::Torus) && self.metric() != Metric::Torus {
                return Err(Error::InvalidSpec("torus region on a non-toral system".into()));
            }
        }
        Ok(())
    }
}

/// Evaluate `B(u, v)` for a bilinear tensor.
pub(crate) fn bilinear_apply(quadratic: &[Vec<Vec<f64>>], u: &[f64], v: &[f64], out: &mut [f64]) {
    for (o, plane) in out.iter_mut().zip(quadratic) {
        let mut acc = 0.0;
        for (row, uj) in plane.iter().zip(u) {
            if *uj == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for (b, vk) in row.iter().zip(v) {
                inner += b * vk;
            }
            acc += uj * inner;
        }
        *o = acc;
    }
}

fn validate_bilinear(
    p: usize,
    linear: &[Vec<f64>],
    quadratic: &[Vec<Vec<f64>>],
    forcing: &[f64],
) -> Result<()> {
    if forcing.len() != p || linear.len() != p || linear.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidSpec("bilinear field: A must be p x p and f length p".into()));
    }
    if quadratic.len() != p || quadratic.iter().any(|m| m.len() != p || m.iter().any(|r| r.len() != p)) {
        return Err(Error::InvalidSpec("bilinear field: B must be p x p x p".into()));
    }
    for (i, m) in quadratic.iter().enumerate() {
        for j in 0..p {
            for k in 0..j {
                if (m[j][k] - m[k][j]).abs() > 1e-12 * (m[j][k].abs() + m[k][j].abs()).max(1.0) {
                    return Err(Error::InvalidSpec(format!(
                        "bilinear form is not symmetric at ({i},{j},{k})"
                    )));
                }
            }
        }
    }
    // u·B(u,u) = 0 on sampled directions, relative to |B| |u|^3.
    let scale = quadratic
        .iter()
        .flatten()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0x5eed_b11e);
    let mut out = vec![0.0; p];
    for _ in 0..64 {
        let u: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        bilinear_apply(quadratic, &u, &u, &mut out);
        let dot: f64 = u.iter().zip(&out).map(|(a, b)| a * b).sum();
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dot.abs() > 1e-10 * scale * norm.powi(3) {
            return Err(Error::InvalidSpec(format!(
                "bilinear form violates u·B(u,u) = 0 (residual {dot:e})"
            )));
        }
    }
    Ok(())
}
