//! Fixed-step propagation: classical RK4 for ODEs, plain iteration for maps.

use nalgebra::DMatrix;

use super::{bilinear_apply, DiscreteMap, StateVector, SystemKind, SystemSpec, VectorField};
use crate::error::{Error, Result};

fn eval_field(field: &VectorField, x: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    match field {
        VectorField::Lorenz63 { a, b, c } => {
            out[0] = a * (x[1] - x[0]);
            out[1] = x[0] * (b - x[2]) - x[1];
            out[2] = x[0] * x[1] - c * x[2];
        }
        VectorField::Lorenz96 { forcing } => {
            let p = x.len();
            for i in 0..p {
                let ip1 = (i + 1) % p;
                let im1 = (i + p - 1) % p;
                let im2 = (i + p - 2) % p;
                out[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + forcing;
            }
        }
        VectorField::Bilinear {
            linear,
            quadratic,
            forcing,
        } => {
            bilinear_apply(quadratic, x, x, scratch);
            for (i, o) in out.iter_mut().enumerate() {
                let ax: f64 = linear[i].iter().zip(x).map(|(a, v)| a * v).sum();
                *o = forcing[i] - ax - scratch[i];
            }
        }
    }
}

fn apply_map(map: &DiscreteMap, x: &mut [f64], scratch: &mut [f64]) {
    match map {
        DiscreteMap::CatMap => {
            let (u, v) = (x[0], x[1]);
            x[0] = (2.0 * u + v).rem_euclid(1.0);
            x[1] = (u + v).rem_euclid(1.0);
        }
        DiscreteMap::TorusAffine { matrix, shift } => {
            let (u, v) = (x[0], x[1]);
            x[0] = (matrix[0][0] as f64 * u + matrix[0][1] as f64 * v + shift[0]).rem_euclid(1.0);
            x[1] = (matrix[1][0] as f64 * u + matrix[1][1] as f64 * v + shift[1]).rem_euclid(1.0);
        }
        DiscreteMap::Linear { matrix } => {
            for (s, row) in scratch.iter_mut().zip(matrix) {
                *s = row.iter().zip(x.iter()).map(|(m, v)| m * v).sum();
            }
            x.copy_from_slice(&scratch[..x.len()]);
        }
    }
}

/// Incremental propagator along the integrator grid of one system.
///
/// Advancing never re-integrates from zero, so a sequence of increasing
/// targets costs one forward pass.
pub struct Propagator<'a> {
    spec: &'a SystemSpec,
    state: Vec<f64>,
    steps: u64,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Propagator<'a> {
    pub fn new(spec: &'a SystemSpec, x0: &[f64]) -> Result<Self> {
        spec.check_state(x0)?;
        let p = spec.dimension;
        Ok(Self {
            spec,
            state: x0.to_vec(),
            steps: 0,
            k: [vec![0.0; p], vec![0.0; p], vec![0.0; p], vec![0.0; p]],
            tmp: vec![0.0; p],
            scratch: vec![0.0; p],
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.spec.step_size()
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    /// One integrator step (one map iteration for discrete systems).
    pub fn step(&mut self) -> Result<()> {
        match &self.spec.kind {
            SystemKind::Ode { field, integrator_dt } => {
                let h = *integrator_dt;
                let [k1, k2, k3, k4] = &mut self.k;
                let x = &mut self.state;
                let tmp = &mut self.tmp;
                let sc = &mut self.scratch;
                eval_field(field, x, k1, sc);
                for i in 0..x.len() {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                eval_field(field, tmp, k2, sc);
                for i in 0..x.len() {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                eval_field(field, tmp, k3, sc);
                for i in 0..x.len() {
                    tmp[i] = x[i] + h * k3[i];
                }
                eval_field(field, tmp, k4, sc);
                for i in 0..x.len() {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            SystemKind::Map { map } => apply_map(map, &mut self.state, &mut self.scratch),
        }
        self.steps += 1;
        let bound = self.spec.overflow_bound;
        if self.state.iter().any(|v| !(v.abs() <= bound)) {
            return Err(Error::Diverged {
                t: self.time(),
                bound,
            });
        }
        Ok(())
    }

    /// Advance to grid time `t`, which must not lie in the past.
    pub fn advance_to(&mut self, t: f64) -> Result<&[f64]> {
        let target = self.spec.steps_for(t)?;
        if target < self.steps {
            return Err(Error::InvalidInput(format!(
                "cannot move backwards from t = {} to t = {t}",
                self.time()
            )));
        }
        while self.steps < target {
            self.step()?;
        }
        Ok(&self.state)
    }
}

/// `φ_t(x0)`.
pub fn flow(spec: &SystemSpec, x0: &StateVector, t: f64) -> Result<StateVector> {
    let mut prop = Propagator::new(spec, x0)?;
    prop.advance_to(t)?;
    Ok(StateVector::new(prop.state))
}

/// States at each of the increasing grid times, in a single forward pass.
pub fn trajectory_grid(spec: &SystemSpec, x0: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidInput("times must be non-decreasing".into()));
    }
    let mut prop = Propagator::new(spec, x0)?;
    times
        .iter()
        .map(|&t| prop.advance_to(t).map(|s| StateVector::new(s.to_vec())))
        .collect()
}

/// One step of the inverse map. Fails for ODEs and singular linear maps.
pub fn inverse_step(spec: &SystemSpec, x: &[f64]) -> Result<StateVector> {
    let SystemKind::Map { map } = &spec.kind else {
        return Err(Error::InvalidInput("inverse step is only defined for maps".into()));
    };
    if let Some(m) = map.torus_matrix() {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [[m[1][1] * det, -m[0][1] * det], [-m[1][0] * det, m[0][0] * det]];
        let shift = match map {
            DiscreteMap::TorusAffine { shift, .. } => *shift,
            _ => [0.0, 0.0],
        };
        let (u, v) = (x[0] - shift[0], x[1] - shift[1]);
        let out = vec![
            (inv[0][0] as f64 * u + inv[0][1] as f64 * v).rem_euclid(1.0),
            (inv[1][0] as f64 * u + inv[1][1] as f64 * v).rem_euclid(1.0),
        ];
        return Ok(out.into());
    }
    let DiscreteMap::Linear { matrix } = map else {
        unreachable!()
    };
    let p = matrix.len();
    let m = DMatrix::from_fn(p, p, |i, j| matrix[i][j]);
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("linear map is singular".into()))?;
    Ok((0..p)
        .map(|i| (0..p).map(|j| inv[(i, j)] * x[j]).sum())
        .collect::<Vec<f64>>()
        .into())
}
