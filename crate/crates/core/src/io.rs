//! CSV ingestion and the model file envelope used by the command line.
//!
//! Tables are comma separated with a header row. Covariates are named
//! `x1..xd`, the response `y` and the treatment `a`; an optional grouping
//! column is named by the caller. Any other column is rejected.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;

pub const MODEL_SCHEMA: &str = "asbf-model/1";

/// A parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Covariates, row-major, in column order `x1..xd`.
    pub x: Vec<f64>,
    pub d: usize,
    pub y: Option<Vec<f64>>,
    pub a: Option<Vec<f64>>,
    pub group: Option<Vec<String>>,
}

impl Table {
    pub fn n(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.x.len() / self.d
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// Row indices per group value, groups in sorted order. Without a group
    /// column there is one unnamed group holding every row.
    pub fn groups(&self) -> Vec<(Option<String>, Vec<usize>)> {
        match &self.group {
            None => vec![(None, (0..self.n()).collect())],
            Some(g) => {
                let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
                for (i, v) in g.iter().enumerate() {
                    map.entry(v.as_str()).or_default().push(i);
                }
                map.into_iter().map(|(k, v)| (Some(k.to_string()), v)).collect()
            }
        }
    }

    /// Dataset over `rows`, requiring a response and optionally the
    /// treatment column.
    pub fn dataset(&self, rows: &[usize], with_treatment: bool) -> Result<Dataset> {
        let y = self
            .y
            .as_ref()
            .ok_or_else(|| Error::Format("table has no response column `y`".into()))?;
        let a = if with_treatment {
            let a = self
                .a
                .as_ref()
                .ok_or_else(|| Error::Format("table has no treatment column `a`".into()))?;
            let mut out = Vec::with_capacity(rows.len());
            for &i in rows {
                let v = a[i];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::InvalidTreatment { row: i, value: v });
                }
                out.push(v as u8);
            }
            Some(out)
        } else {
            None
        };
        let mut x = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            x.extend_from_slice(self.row(i));
        }
        let yy = rows.iter().map(|&i| y[i]).collect();
        Dataset::new(x, self.d, yy, a).map_err(|e| relabel_row(e, rows))
    }
}

/// Maps a row index inside a subset back to the table row.
fn relabel_row(e: Error, rows: &[usize]) -> Error {
    match e {
        Error::CovariateOutOfRange { row, col, value } => Error::CovariateOutOfRange {
            row: rows[row],
            col,
            value,
        },
        Error::NonFiniteResponse { row, value } => Error::NonFiniteResponse {
            row: rows[row],
            value,
        },
        other => other,
    }
}

enum Role {
    X(usize),
    Y,
    A,
    Group,
}

/// Reads a table. Numeric parse failures name the data line (1-based,
/// header excluded) and the column.
pub fn read_table<R: Read>(reader: R, group_by: Option<&str>) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .clone();
    let mut roles = Vec::with_capacity(headers.len());
    let mut xs = Vec::new();
    for h in headers.iter() {
        let role = if Some(h) == group_by {
            Role::Group
        } else if h == "y" {
            Role::Y
        } else if h == "a" {
            Role::A
        } else if let Some(j) = h.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()).filter(|&j| j >= 1) {
            xs.push(j);
            Role::X(j - 1)
        } else {
            return Err(Error::Format(format!("unknown column `{h}`")));
        };
        roles.push(role);
    }
    let d = xs.len();
    let mut sorted = xs.clone();
    sorted.sort_unstable();
    if d == 0 || sorted != (1..=d).collect::<Vec<_>>() {
        return Err(Error::Format(format!(
            "covariate columns must be x1..xd without gaps, found {}",
            xs.iter().map(|j| format!("x{j}")).collect::<Vec<_>>().join(",")
        )));
    }
    let count = |f: fn(&Role) -> bool| roles.iter().filter(|r| f(r)).count();
    if count(|r| matches!(r, Role::Y)) > 1 || count(|r| matches!(r, Role::A)) > 1 {
        return Err(Error::Format("duplicate y or a column".into()));
    }
    if let Some(g) = group_by {
        if count(|r| matches!(r, Role::Group)) != 1 {
            return Err(Error::Format(format!("group column `{g}` not found")));
        }
    }
    let has = |f: fn(&Role) -> bool| roles.iter().any(f);
    let mut table = Table {
        x: Vec::new(),
        d,
        y: has(|r| matches!(r, Role::Y)).then(Vec::new),
        a: has(|r| matches!(r, Role::A)).then(Vec::new),
        group: has(|r| matches!(r, Role::Group)).then(Vec::new),
    };
    let mut row_x = vec![0.0; d];
    for (line, rec) in rdr.records().enumerate() {
        let line = line + 1;
        let rec = rec.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
        if rec.len() != roles.len() {
            return Err(Error::InconsistentWidth {
                row: line,
                expected: roles.len(),
                found: rec.len(),
            });
        }
        for ((field, role), name) in rec.iter().zip(&roles).zip(headers.iter()) {
            let num = || {
                field.parse::<f64>().map_err(|_| {
                    Error::Format(format!("line {line}, column `{name}`: `{field}` is not a number"))
                })
            };
            match role {
                Role::X(j) => row_x[*j] = num()?,
                Role::Y => table.y.as_mut().unwrap().push(num()?),
                Role::A => table.a.as_mut().unwrap().push(num()?),
                Role::Group => table.group.as_mut().unwrap().push(field.to_string()),
            }
        }
        table.x.extend_from_slice(&row_x);
    }
    if table.x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(table)
}

/// Writes `x1..xd[,y][,a]` columns with shortest round-trip formatting.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=data.d()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if data.treatment().is_some() {
        header.push("a".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(data.y()[i].to_string());
        if let Some(a) = data.treatment() {
            rec.push(a[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Format(e.to_string()))
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Per-column min-max map onto `[0, 1]`, fitted on training covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Rescale {
    pub fn fit(x: &[f64], d: usize) -> Result<Rescale> {
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for (i, r) in x.chunks_exact(d).enumerate() {
            for j in 0..d {
                if !r[j].is_finite() {
                    return Err(Error::CovariateOutOfRange {
                        row: i,
                        col: j,
                        value: r[j],
                    });
                }
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
        }
        Ok(Rescale { min, max })
    }

    /// Maps in place; constant columns map to 0.
    pub fn apply(&self, x: &mut [f64]) {
        let d = self.min.len();
        for r in x.chunks_exact_mut(d) {
            for j in 0..d {
                let span = self.max[j] - self.min[j];
                r[j] = if span > 0.0 {
                    (r[j] - self.min[j]) / span
                } else {
                    0.0
                };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupModel {
    pub group: Option<String>,
    pub rows: usize,
    pub forest: Forest,
}

/// What `fit` writes: forests plus the input conventions needed to apply
/// them to new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema: String,
    pub d: usize,
    pub rescale: Option<Rescale>,
    pub group_by: Option<String>,
    pub models: Vec<GroupModel>,
}

impl ModelFile {
    pub fn new(d: usize, rescale: Option<Rescale>, group_by: Option<String>, models: Vec<GroupModel>) -> Self {
        ModelFile {
            schema: MODEL_SCHEMA.into(),
            d,
            rescale,
            group_by,
            models,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<ModelFile> {
        let m: ModelFile = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        if m.schema != MODEL_SCHEMA {
            return Err(Error::Format(format!("unsupported model schema {:?}", m.schema)));
        }
        Ok(m)
    }

    pub fn model_for(&self, group: Option<&str>) -> Result<&Forest> {
        self.models
            .iter()
            .find(|m| m.group.as_deref() == group)
            .map(|m| &m.forest)
            .ok_or_else(|| Error::Format(format!("no model for group {:?}", group.unwrap_or(""))))
    }
}
