use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng::seeded;

/// Design matrix and response vector. Integer class labels are stored as
/// floats (`0.0, 1.0, ...`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vector,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vector) -> Result<Self> {
        check_dim("response length vs design rows", x.nrows(), y.len())?;
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite entry in dataset".into()));
        }
        Ok(Self { x, y })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            x: Matrix::zeros(0, dim),
            y: Vector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
    pub fn x(&self) -> &Matrix {
        &self.x
    }
    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn row(&self, i: usize) -> Vector {
        self.x.row(i).transpose()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y: Vector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            x: self.x.select_columns(cols),
            y: self.y.clone(),
        }
    }

    /// Deterministic shuffled split; the first `round(fraction * n)` rows of
    /// the permutation form the training set.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidParameter(format!("split fraction must lie in (0, 1), got {fraction}")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut seeded(seed));
        let n_train = (fraction * self.len() as f64).round() as usize;
        let (train, test) = order.split_at(n_train);
        Ok((self.select_rows(train), self.select_rows(test)))
    }
}

/// Per-column z-scoring fitted on one dataset and reusable on others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vector,
    pub sds: Vector,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let n = data.len().max(1) as f64;
        let means = Vector::from_iterator(data.dim(), data.x.column_iter().map(|c| c.sum() / n));
        let sds = Vector::from_iterator(
            data.dim(),
            data.x.column_iter().zip(means.iter()).map(|(c, m)| {
                let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                // constant columns are centred but not rescaled
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            }),
        );
        Self { means, sds }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut x = data.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.means[j]) / self.sds[j]);
        }
        Dataset { x, y: data.y.clone() }
    }
}

/// Reads a headed numeric CSV, splits it deterministically and optionally
/// z-scores the covariates with statistics from the training split.
pub fn load_dataset(
    path: impl AsRef<Path>,
    response: &str,
    split: f64,
    standardize: bool,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let response_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::Data(format!("response column '{response}' not found in {}", path.display())))?;
    let p = headers.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!("non-numeric cell '{cell}' at row {} column '{}'", line + 1, &headers[j]))
            })?;
            if j == response_col {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    let data = Dataset::new(Matrix::from_row_slice(n, p, &xs), Vector::from_vec(ys))?;
    let (train, test) = data.split(split, seed)?;
    if standardize {
        let scaler = Standardizer::fit(&train);
        Ok((scaler.apply(&train), scaler.apply(&test)))
    } else {
        Ok((train, test))
    }
}
