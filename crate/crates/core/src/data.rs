//! Datasets and forest hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariates in `[0,1]^d` (row-major), responses, and an optional binary
/// treatment column. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    a: Option<Vec<u8>>,
}

/// One raw input row prior to validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub x: Vec<f64>,
    pub y: f64,
    pub a: Option<f64>,
}

impl Record {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Record { x, y, a: None }
    }

    pub fn treated(x: Vec<f64>, y: f64, a: f64) -> Self {
        Record { x, y, a: Some(a) }
    }
}

/// Validates raw records into a [`Dataset`]. Either every record carries a
/// treatment value or none does.
pub fn validate_dataset(records: &[Record]) -> Result<Dataset> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    let d = first.x.len();
    let has_a = first.a.is_some();
    let mut x = Vec::with_capacity(records.len() * d);
    let mut y = Vec::with_capacity(records.len());
    let mut a = Vec::with_capacity(if has_a { records.len() } else { 0 });
    for (row, rec) in records.iter().enumerate() {
        if rec.x.len() != d {
            return Err(Error::InconsistentWidth {
                row,
                expected: d,
                found: rec.x.len(),
            });
        }
        x.extend_from_slice(&rec.x);
        y.push(rec.y);
        match (has_a, rec.a) {
            (true, Some(v)) => a.push(treatment_value(row, v)?),
            (false, None) => {}
            (true, None) => {
                return Err(Error::Format(format!("row {row}: missing treatment value")))
            }
            (false, Some(_)) => {
                return Err(Error::Format(format!(
                    "row {row}: unexpected treatment value"
                )))
            }
        }
    }
    Dataset::new(x, d, y, has_a.then_some(a))
}

fn treatment_value(row: usize, v: f64) -> Result<u8> {
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::InvalidTreatment { row, value: v })
    }
}

impl Dataset {
    /// Builds a dataset from a row-major covariate buffer.
    pub fn new(x: Vec<f64>, d: usize, y: Vec<f64>, a: Option<Vec<u8>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidConfig("covariate dimension must be >= 1".into()));
        }
        let n = y.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.len() != n * d {
            return Err(Error::LengthMismatch {
                what: "covariate buffer",
                expected: n * d,
                found: x.len(),
            });
        }
        for (i, v) in x.iter().enumerate() {
            // NaN fails this check as well.
            if !(0.0..=1.0).contains(v) {
                return Err(Error::CovariateOutOfRange {
                    row: i / d,
                    col: i % d,
                    value: *v,
                });
            }
        }
        if let Some((row, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteResponse { row, value: *v });
        }
        if let Some(a) = &a {
            if a.len() != n {
                return Err(Error::LengthMismatch {
                    what: "treatment",
                    expected: n,
                    found: a.len(),
                });
            }
            if let Some((row, v)) = a.iter().enumerate().find(|(_, v)| **v > 1) {
                return Err(Error::InvalidTreatment {
                    row,
                    value: f64::from(*v),
                });
            }
        }
        Ok(Dataset { n, d, x, y, a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.d + j]
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn treatment(&self) -> Option<&[u8]> {
        self.a.as_deref()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            n: indices.len(),
            d: self.d,
            x,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            a: self
                .a
                .as_ref()
                .map(|a| indices.iter().map(|&i| a[i]).collect()),
        }
    }

    /// Same covariates with the response replaced.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), self.d, y, self.a.clone())
    }

    /// Same covariates with the treatment column as the response, used for
    /// propensity fits.
    pub fn treatment_as_response(&self) -> Option<Dataset> {
        let a = self.a.as_ref()?;
        Some(Dataset {
            n: self.n,
            d: self.d,
            x: self.x.clone(),
            y: a.iter().map(|&v| f64::from(v)).collect(),
            a: None,
        })
    }
}

/// How split directions are chosen when `mtry == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionRule {
    /// Least-split direction on the current path, ties broken at random.
    #[default]
    Balanced,
    /// A uniformly random direction at every split (comparison baseline).
    Random,
}

/// Forest hyperparameters. Omitted fields take their default values when
/// deserializing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    /// Number of trees.
    pub b_trees: usize,
    /// Minimum fraction of the parent's I-sample each child keeps.
    pub alpha: f64,
    /// Honest fraction: `floor(w * n)` rows form the I-sample.
    pub w: f64,
    /// Minimum leaf size on the I-sample; leaves hold `k..=2k-1` rows.
    pub k: usize,
    /// Candidate directions per split.
    pub mtry: usize,
    /// Leaf polynomial order; 0 means local averaging.
    pub q: usize,
    pub seed: u64,
    #[serde(default)]
    pub direction_rule: DirectionRule,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            b_trees: 200,
            alpha: 0.5,
            w: 0.5,
            k: 5,
            mtry: 1,
            q: 0,
            seed: 0,
            direction_rule: DirectionRule::Balanced,
        }
    }
}

/// `floor(w * n)` with a guard against products like `0.29 * 100 = 28.999..`.
pub fn honest_size(n: usize, w: f64) -> usize {
    ((w * n as f64) + 1e-9).floor() as usize
}

impl ForestConfig {
    /// Checks the data-independent constraints.
    pub fn validate(&self) -> Result<()> {
        if self.b_trees == 0 {
            return Err(Error::InvalidConfig("b_trees must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "alpha = {} must lie in (0, 0.5]",
                self.alpha
            )));
        }
        if !(self.w > 0.0 && self.w <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "w = {} must lie in (0, 1]",
                self.w
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if self.mtry == 0 {
            return Err(Error::InvalidConfig("mtry must be >= 1".into()));
        }
        Ok(())
    }

    /// Checks every constraint against a dataset of `n` rows in `d` dimensions.
    pub fn validate_for(&self, n: usize, d: usize) -> Result<()> {
        self.validate()?;
        if self.mtry > d {
            return Err(Error::InvalidConfig(format!(
                "mtry = {} exceeds dimension d = {d}",
                self.mtry
            )));
        }
        let n_i = honest_size(n, self.w);
        if n_i == 0 {
            return Err(Error::Infeasible(format!(
                "floor(w*N) = floor({} * {n}) = 0; the I-sample is empty",
                self.w
            )));
        }
        if self.k > n_i {
            return Err(Error::Infeasible(format!(
                "k <= floor(w*N) violated: k = {} but floor({} * {n}) = {n_i}",
                self.k, self.w
            )));
        }
        Ok(())
    }
}
