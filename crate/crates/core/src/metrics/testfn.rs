//! Bounded continuous test functions for weak merging.

use serde::{Deserialize, Serialize};

use crate::dynamics::Metric;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `clamp(x_index, −bound, bound)`
    ClippedCoordinate { index: usize, bound: f64 },
    /// `exp(−d(x, center)² / (2 width²))`
    GaussianBump { center: Vec<f64>, width: f64 },
    /// 1 on the ball, 0 beyond `radius + mollifier`, cosine ramp between.
    SmoothedBall {
        center: Vec<f64>,
        radius: f64,
        mollifier: f64,
    },
}

impl TestFunction {
    pub fn eval(&self, x: &[f64], metric: Metric) -> f64 {
        match self {
            TestFunction::ClippedCoordinate { index, bound } => x[*index].clamp(-bound, *bound),
            TestFunction::GaussianBump { center, width } => {
                let d = metric.distance(x, center);
                (-d * d / (2.0 * width * width)).exp()
            }
            TestFunction::SmoothedBall {
                center,
                radius,
                mollifier,
            } => {
                let d = metric.distance(x, center);
                if d <= *radius {
                    1.0
                } else if d >= radius + mollifier {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * (d - radius) / mollifier).cos())
                }
            }
        }
    }

    /// Declared sup norm `M`.
    pub fn bound(&self) -> f64 {
        match self {
            TestFunction::ClippedCoordinate { bound, .. } => *bound,
            _ => 1.0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::ClippedCoordinate { index, .. } => format!("coord{}", index + 1),
            TestFunction::GaussianBump { width, .. } => format!("bump_w{width}"),
            TestFunction::SmoothedBall { radius, .. } => format!("ball_r{radius}"),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            TestFunction::ClippedCoordinate { index, bound } => *index < dim && *bound > 0.0,
            TestFunction::GaussianBump { center, width } => center.len() == dim && *width > 0.0,
            TestFunction::SmoothedBall {
                center,
                radius,
                mollifier,
            } => center.len() == dim && *radius >= 0.0 && *mollifier > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("bad test function {self:?} for dimension {dim}")))
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSet {
    pub functions: Vec<TestFunction>,
}

impl TestFunctionSet {
    pub fn new(functions: Vec<TestFunction>) -> Self {
        Self { functions }
    }

    /// Clipped coordinates, one bump and one smoothed ball around `center`.
    pub fn standard(center: &[f64], scale: f64) -> Self {
        let mut functions: Vec<TestFunction> = (0..center.len())
            .map(|index| TestFunction::ClippedCoordinate {
                index,
                bound: center[index].abs() + 4.0 * scale,
            })
            .collect();
        functions.push(TestFunction::GaussianBump {
            center: center.to_vec(),
            width: scale,
        });
        functions.push(TestFunction::SmoothedBall {
            center: center.to_vec(),
            radius: scale,
            mollifier: 0.5 * scale,
        });
        Self { functions }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.functions.iter().map(TestFunction::name).collect()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.functions.iter().try_for_each(|g| g.validate(dim))
    }
}
