//! The (Y, D, X) sample: loading, validation, standardization and the
//! treated/untreated split.
//!
//! Treatment regions are never described analytically. A unit belongs to the
//! treated region exactly when its observed `d` is 1.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validated sample of outcomes, binary treatments and covariates.
///
/// Covariates are stored row-major; `x_row(i)` borrows unit `i`'s vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<bool>,
    x: Vec<f64>,
    k: usize,
    names: Vec<String>,
}

/// Column names used when reading a CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub y: String,
    pub d: String,
    /// Covariate columns; `None` takes every column other than `y` and `d`.
    pub x: Option<Vec<String>>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            y: "y".into(),
            d: "d".into(),
            x: None,
        }
    }
}

/// Per-covariate affine transform to zero mean and unit standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    pub fn identity(k: usize) -> Self {
        Self {
            means: vec![0.0; k],
            scales: vec![1.0; k],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.means)
            .zip(&self.scales)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

impl Dataset {
    pub fn new(y: Vec<f64>, d: Vec<bool>, x: Vec<f64>, names: Vec<String>) -> Result<Self> {
        let n = y.len();
        let k = names.len();
        if k == 0 {
            return Err(Error::Shape("at least one covariate is required".into()));
        }
        if d.len() != n || x.len() != n * k {
            return Err(Error::Shape(format!(
                "lengths disagree: {n} outcomes, {} treatments, {} covariate cells for k = {k}",
                d.len(),
                x.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("outcome at row {} is not finite", i + 1)));
        }
        if let Some(c) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "covariate `{}` at row {} is not finite",
                names[c % k],
                c / k + 1
            )));
        }
        if !d.iter().any(|&t| t) {
            return Err(Error::EmptyGroup(1));
        }
        if d.iter().all(|&t| t) {
            return Err(Error::EmptyGroup(0));
        }
        Ok(Self { y, d, x, k, names })
    }

    /// Builds a dataset from per-unit covariate rows.
    pub fn from_rows(y: Vec<f64>, d: Vec<bool>, rows: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let k = names.len();
        if let Some(r) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::Shape(format!(
                "row {} has {} covariates, expected {k}",
                r + 1,
                rows[r].len()
            )));
        }
        let x = rows.iter().flatten().copied().collect();
        Self::new(y, d, x, names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[bool] {
        &self.d
    }

    /// Row-major covariate matrix.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Splits the row indices into (treated, untreated).
    pub fn partition(&self) -> (Vec<usize>, Vec<usize>) {
        (0..self.n()).partition(|&i| self.d[i])
    }

    /// Indices of the units with treatment status `group`.
    pub fn group(&self, group: bool) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.d[i] == group).collect()
    }

    /// Returns the dataset with covariates rescaled to zero mean and unit
    /// (population) standard deviation, along with the transform.
    pub fn standardize(&self) -> Result<(Dataset, Standardization)> {
        let n = self.n() as f64;
        let k = self.k;
        let mut means = vec![0.0; k];
        for row in self.x.chunks_exact(k) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; k];
        for row in self.x.chunks_exact(k) {
            for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
                *s += (v - m).powi(2);
            }
        }
        let mut scales = Vec::with_capacity(k);
        for (j, v) in vars.iter().enumerate() {
            let sd = (v / n).sqrt();
            let tiny = 1e-12 * means[j].abs().max(1.0);
            if !(sd > tiny) {
                return Err(Error::DegenerateCovariate(self.names[j].clone()));
            }
            scales.push(sd);
        }
        let transform = Standardization { means, scales };
        let x = self.x.chunks_exact(k).flat_map(|row| transform.apply(row)).collect();
        let ds = Dataset {
            y: self.y.clone(),
            d: self.d.clone(),
            x,
            k,
            names: self.names.clone(),
        };
        Ok((ds, transform))
    }

    /// Same sample with covariates replaced (used to apply a transform).
    pub fn with_covariates(&self, x: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.y.clone(), self.d.clone(), x, self.names.clone())
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, schema)
    }

    pub fn read_csv<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_owned()))
        };
        let y_at = find(&schema.y)?;
        let d_at = find(&schema.d)?;
        let x_names: Vec<String> = match &schema.x {
            Some(cols) => cols.clone(),
            None => headers
                .iter()
                .filter(|h| **h != schema.y && **h != schema.d)
                .cloned()
                .collect(),
        };
        let x_at = x_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

        let mut y = Vec::new();
        let mut d = Vec::new();
        let mut x = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let row = r + 1;
            let cell = |at: usize| -> Result<&str> {
                let v = record.get(at).unwrap_or("");
                if v.is_empty() {
                    Err(Error::EmptyCell {
                        row,
                        col: headers[at].clone(),
                    })
                } else {
                    Ok(v)
                }
            };
            let number = |at: usize| -> Result<f64> {
                let v = cell(at)?;
                v.parse::<f64>().map_err(|_| Error::NonNumericCell {
                    row,
                    col: headers[at].clone(),
                    value: v.to_owned(),
                })
            };
            y.push(number(y_at)?);
            let raw = cell(d_at)?;
            let treat = match raw.parse::<f64>() {
                Ok(0.0) => false,
                Ok(1.0) => true,
                _ => {
                    return Err(Error::NonBinaryTreatment {
                        row,
                        value: raw.to_owned(),
                    })
                }
            };
            d.push(treat);
            for &at in &x_at {
                x.push(number(at)?);
            }
        }
        Dataset::new(y, d, x, x_names)
    }

    /// Writes `y,d,<covariates>` with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_owned(), "d".to_owned()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec = Vec::with_capacity(self.k + 2);
            rec.push(self.y[i].to_string());
            rec.push(if self.d[i] { "1".into() } else { "0".into() });
            rec.extend(self.x_row(i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
