//! Likelihood families with closed-form covariate gradients.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, ParamDraw};
use crate::error::{check_dim, Error, Result};
use crate::linalg::Vector;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BnnHead {
    /// Gaussian response with variance `phi`.
    Regression,
    Classification { classes: usize },
}

/// One-hidden-layer tanh network.
///
/// Parameter layout in `ParamDraw::beta`: `W1` (hidden x input, row-major),
/// `b1` (hidden), `W2` (outputs x hidden, row-major), `b2` (outputs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BnnArch {
    pub input_dim: usize,
    pub hidden: usize,
    pub head: BnnHead,
}

impl BnnArch {
    fn outputs(&self) -> usize {
        match self.head {
            BnnHead::Regression => 1,
            BnnHead::Classification { classes } => classes,
        }
    }

    pub fn param_dim(&self) -> usize {
        let (p, h, o) = (self.input_dim, self.hidden, self.outputs());
        h * p + h + o * h + o
    }

    /// Hidden activations and output layer values.
    fn forward(&self, x: &Vector, w: &Vector) -> (Vec<f64>, Vec<f64>) {
        let (p, h, o) = (self.input_dim, self.hidden, self.outputs());
        let b1 = h * p;
        let w2 = b1 + h;
        let b2 = w2 + o * h;
        let hidden: Vec<f64> = (0..h)
            .map(|j| {
                let pre: f64 = (0..p).map(|i| w[j * p + i] * x[i]).sum::<f64>() + w[b1 + j];
                pre.tanh()
            })
            .collect();
        let out = (0..o)
            .map(|k| (0..h).map(|j| w[w2 + k * h + j] * hidden[j]).sum::<f64>() + w[b2 + k])
            .collect();
        (hidden, out)
    }

    /// Backpropagates `d loglik / d out` to the input.
    fn input_gradient(&self, w: &Vector, hidden: &[f64], d_out: &[f64]) -> Vector {
        let (p, h, o) = (self.input_dim, self.hidden, self.outputs());
        let w2 = h * p + h;
        let d_pre: Vec<f64> = (0..h)
            .map(|j| {
                let d_h: f64 = (0..o).map(|k| w[w2 + k * h + j] * d_out[k]).sum();
                d_h * (1.0 - hidden[j] * hidden[j])
            })
            .collect();
        Vector::from_fn(p, |i, _| (0..h).map(|j| w[j * p + i] * d_pre[j]).sum())
    }
}

/// Likelihood family `pi(y | x, gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictiveModel {
    /// `y ~ N(beta^T x, phi)`.
    GaussianLinear { dim: usize },
    /// `y ~ Bernoulli(sigmoid(beta^T x))`.
    BernoulliLogit { dim: usize },
    /// Class logits `W x + b`; `beta` holds `W` row-major then `b`.
    CategoricalSoftmax { dim: usize, classes: usize },
    SmallBnn(BnnArch),
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn class_index(y: f64, classes: usize) -> Result<usize> {
    if y >= 0.0 && y.fract() == 0.0 && (y as usize) < classes {
        Ok(y as usize)
    } else {
        Err(Error::LabelOutOfRange { label: y, classes })
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as f64;
        }
    }
    (probs.len() - 1) as f64
}

impl PredictiveModel {
    pub fn input_dim(&self) -> usize {
        match *self {
            Self::GaussianLinear { dim } | Self::BernoulliLogit { dim } => dim,
            Self::CategoricalSoftmax { dim, .. } => dim,
            Self::SmallBnn(arch) => arch.input_dim,
        }
    }

    pub fn param_dim(&self) -> usize {
        match *self {
            Self::GaussianLinear { dim } | Self::BernoulliLogit { dim } => dim,
            Self::CategoricalSoftmax { dim, classes } => classes * (dim + 1),
            Self::SmallBnn(arch) => arch.param_dim(),
        }
    }

    /// Whether `ParamDraw::phi` is a free noise variance.
    pub fn has_dispersion(&self) -> bool {
        matches!(
            self,
            Self::GaussianLinear { .. }
                | Self::SmallBnn(BnnArch {
                    head: BnnHead::Regression,
                    ..
                })
        )
    }

    /// Number of classes for classifiers, `None` for regression.
    pub fn classes(&self) -> Option<usize> {
        match *self {
            Self::BernoulliLogit { .. } => Some(2),
            Self::CategoricalSoftmax { classes, .. } => Some(classes),
            Self::SmallBnn(BnnArch {
                head: BnnHead::Classification { classes },
                ..
            }) => Some(classes),
            _ => None,
        }
    }

    fn check(&self, x: &Vector, gamma: &ParamDraw) -> Result<()> {
        check_dim("covariate vector", self.input_dim(), x.len())?;
        check_dim("parameter vector", self.param_dim(), gamma.beta.len())
    }

    fn softmax_logits(dim: usize, classes: usize, x: &Vector, w: &Vector) -> Vec<f64> {
        (0..classes)
            .map(|k| (0..dim).map(|i| w[k * dim + i] * x[i]).sum::<f64>() + w[classes * dim + k])
            .collect()
    }

    /// Regression mean `E[y | x, gamma]`.
    pub fn mean(&self, x: &Vector, gamma: &ParamDraw) -> Result<f64> {
        self.check(x, gamma)?;
        match *self {
            Self::GaussianLinear { .. } => Ok(gamma.beta.dot(x)),
            Self::SmallBnn(arch @ BnnArch { head: BnnHead::Regression, .. }) => {
                Ok(arch.forward(x, &gamma.beta).1[0])
            }
            _ => Err(Error::Unsupported("mean of a classification likelihood".into())),
        }
    }

    /// Class probabilities for classifiers.
    pub fn class_probs(&self, x: &Vector, gamma: &ParamDraw) -> Result<Vec<f64>> {
        self.check(x, gamma)?;
        match *self {
            Self::BernoulliLogit { .. } => {
                let p = sigmoid(gamma.beta.dot(x));
                Ok(vec![1.0 - p, p])
            }
            Self::CategoricalSoftmax { dim, classes } => {
                Ok(softmax(&Self::softmax_logits(dim, classes, x, &gamma.beta)))
            }
            Self::SmallBnn(arch @ BnnArch { head: BnnHead::Classification { .. }, .. }) => {
                Ok(softmax(&arch.forward(x, &gamma.beta).1))
            }
            _ => Err(Error::Unsupported("class probabilities of a regression likelihood".into())),
        }
    }

    pub fn loglik(&self, x: &Vector, y: f64, gamma: &ParamDraw) -> Result<f64> {
        self.check(x, gamma)?;
        let gaussian = |mean: f64| -0.5 * (LN_2PI + gamma.phi.ln()) - (y - mean).powi(2) / (2.0 * gamma.phi);
        match *self {
            Self::GaussianLinear { .. } => Ok(gaussian(gamma.beta.dot(x))),
            Self::BernoulliLogit { .. } => {
                let label = class_index(y, 2)? as f64;
                let z = gamma.beta.dot(x);
                Ok(label * z - softplus(z))
            }
            Self::CategoricalSoftmax { dim, classes } => {
                let k = class_index(y, classes)?;
                let z = Self::softmax_logits(dim, classes, x, &gamma.beta);
                Ok(z[k] - log_sum_exp(&z))
            }
            Self::SmallBnn(arch) => {
                let (_, out) = arch.forward(x, &gamma.beta);
                match arch.head {
                    BnnHead::Regression => Ok(gaussian(out[0])),
                    BnnHead::Classification { classes } => {
                        let k = class_index(y, classes)?;
                        Ok(out[k] - log_sum_exp(&out))
                    }
                }
            }
        }
    }

    /// Gradient of `loglik` with respect to the covariates.
    pub fn score_x(&self, x: &Vector, y: f64, gamma: &ParamDraw) -> Result<Vector> {
        self.check(x, gamma)?;
        let w = &gamma.beta;
        match *self {
            Self::GaussianLinear { .. } => Ok(w * ((y - w.dot(x)) / gamma.phi)),
            Self::BernoulliLogit { .. } => {
                let label = class_index(y, 2)? as f64;
                Ok(w * (label - sigmoid(w.dot(x))))
            }
            Self::CategoricalSoftmax { dim, classes } => {
                let k = class_index(y, classes)?;
                let p = softmax(&Self::softmax_logits(dim, classes, x, w));
                Ok(Vector::from_fn(dim, |i, _| {
                    (0..classes)
                        .map(|c| (if c == k { 1.0 } else { 0.0 } - p[c]) * w[c * dim + i])
                        .sum()
                }))
            }
            Self::SmallBnn(arch) => {
                let (hidden, out) = arch.forward(x, w);
                let d_out: Vec<f64> = match arch.head {
                    BnnHead::Regression => vec![(y - out[0]) / gamma.phi],
                    BnnHead::Classification { classes } => {
                        let k = class_index(y, classes)?;
                        softmax(&out)
                            .iter()
                            .enumerate()
                            .map(|(c, p)| if c == k { 1.0 - p } else { -p })
                            .collect()
                    }
                };
                Ok(arch.input_gradient(w, &hidden, &d_out))
            }
        }
    }

    /// Gradient of the likelihood density, `exp(loglik) * score_x`.
    pub fn pdf_grad_x(&self, x: &Vector, y: f64, gamma: &ParamDraw) -> Result<Vector> {
        let ll = self.loglik(x, y, gamma)?;
        Ok(self.score_x(x, y, gamma)? * ll.exp())
    }

    /// One draw from `pi(y | x, gamma)`.
    pub fn sample_predictive<R: Rng + ?Sized>(&self, x: &Vector, gamma: &ParamDraw, rng: &mut R) -> Result<f64> {
        match self.classes() {
            Some(_) => Ok(sample_categorical(&self.class_probs(x, gamma)?, rng)),
            None => {
                let z: f64 = rng.sample(StandardNormal);
                Ok(self.mean(x, gamma)? + gamma.phi.sqrt() * z)
            }
        }
    }

    /// Sum of log-likelihoods over a dataset.
    pub fn dataset_loglik(&self, data: &Dataset, gamma: &ParamDraw) -> Result<f64> {
        (0..data.len()).map(|i| self.loglik(&data.row(i), data.y()[i], gamma)).sum()
    }
}
