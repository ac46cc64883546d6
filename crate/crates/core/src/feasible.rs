//! Norm-ball feasible sets and Euclidean projection onto them.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn of(&self, v: &Vector) -> f64 {
        match self {
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::L2 => v.norm(),
            Norm::Linf => v.amax(),
        }
    }
}

/// `{x' : ||x' - center|| <= epsilon}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub center: Vector,
    pub epsilon: f64,
    pub norm: Norm,
}

impl FeasibleSet {
    pub fn new(center: Vector, epsilon: f64, norm: Norm) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be finite and nonnegative, got {epsilon}")));
        }
        Ok(Self { center, epsilon, norm })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn distance(&self, x: &Vector) -> f64 {
        self.norm.of(&(x - &self.center))
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        self.distance(x) <= self.epsilon + tol
    }

    /// Euclidean projection onto the ball.
    pub fn project(&self, x: &Vector) -> Result<Vector> {
        check_dim("projection input", self.dim(), x.len())?;
        let r = x - &self.center;
        let projected = match self.norm {
            Norm::L2 => {
                let n = r.norm();
                if n <= self.epsilon {
                    r
                } else {
                    r * (self.epsilon / n)
                }
            }
            Norm::Linf => r.map(|v| v.clamp(-self.epsilon, self.epsilon)),
            Norm::L1 => project_l1(&r, self.epsilon),
        };
        Ok(&self.center + projected)
    }
}

/// Projection onto the L1 ball of radius `radius` via the sorted-threshold
/// simplex projection of the absolute values.
fn project_l1(v: &Vector, radius: f64) -> Vector {
    if radius == 0.0 {
        return Vector::zeros(v.len());
    }
    if v.iter().map(|x| x.abs()).sum::<f64>() <= radius {
        return v.clone();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.map(|x| x.signum() * (x.abs() - theta).max(0.0))
}
