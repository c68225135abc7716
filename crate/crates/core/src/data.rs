//! Observation matrices and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n x p` matrix of observations with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.ncols() {
            return Err(Error::input(format!(
                "{} labels for {} columns",
                labels.len(),
                values.ncols()
            )));
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            let (n, _) = values.shape();
            return Err(Error::input(format!(
                "non-finite value at row {}, column {}",
                i % n + 1,
                i / n + 1
            )));
        }
        Ok(Dataset { values, labels })
    }

    /// Columns labelled `X1, X2, ...`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=values.ncols()).map(|j| format!("X{j}")).collect();
        Self::new(values, labels)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Contiguous view of column `j`.
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    /// Subtract each column mean.
    pub fn centered(mut self) -> Self {
        let n = self.n();
        if n == 0 {
            return self;
        }
        for mut col in self.values.column_iter_mut() {
            let mean = crate::moments::neumaier_sum(col.iter().copied()) / n as f64;
            col.iter_mut().for_each(|x| *x -= mean);
        }
        self
    }

    /// Scale each column to unit (uncentered) second moment. Constant-zero
    /// columns are left untouched.
    pub fn standardized(mut self) -> Self {
        let n = self.n() as f64;
        for mut col in self.values.column_iter_mut() {
            let ss = crate::moments::neumaier_sum(col.iter().map(|x| x * x)) / n;
            if ss > 0.0 {
                let s = ss.sqrt();
                col.iter_mut().for_each(|x| *x /= s);
            }
        }
        self
    }

    /// Reorder columns: output column `j` is input column `perm[j]`.
    pub fn select_columns(&self, perm: &[usize]) -> Result<Self> {
        let values = DMatrix::from_fn(self.n(), perm.len(), |i, j| self.values[(i, perm[j])]);
        let labels = perm.iter().map(|&j| self.labels[j].clone()).collect();
        Self::new(values, labels)
    }

    /// Parse comma-separated values with a mandatory header row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let labels: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse(format!("header: {e}")))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let p = labels.len();
        if p == 0 || (p == 1 && labels[0].is_empty()) {
            return Err(Error::Parse("missing header row".into()));
        }
        let mut flat = Vec::new();
        let mut n = 0usize;
        for (i, rec) in rdr.records().enumerate() {
            // data row i is line i + 2 of the file
            let rec = rec.map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            if rec.len() != p {
                return Err(Error::Parse(format!(
                    "row {} (line {}): expected {p} fields, found {}",
                    i + 1,
                    i + 2,
                    rec.len()
                )));
            }
            for (j, field) in rec.iter().enumerate() {
                let x: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!(
                        "row {} (line {}), column {} ({}): cannot parse {:?} as a number",
                        i + 1,
                        i + 2,
                        j + 1,
                        labels[j],
                        field
                    ))
                })?;
                if !x.is_finite() {
                    return Err(Error::Parse(format!(
                        "row {} (line {}), column {} ({}): non-finite value",
                        i + 1,
                        i + 2,
                        j + 1,
                        labels[j]
                    )));
                }
                flat.push(x);
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Parse("no observations after the header".into()));
        }
        let values = DMatrix::from_row_slice(n, p, &flat);
        Self::new(values, labels)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    /// Write the header and one observation per line. Values use the shortest
    /// representation that round-trips exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(writer);
        writeln!(w, "{}", self.labels.join(","))?;
        let mut line = String::new();
        for i in 0..self.n() {
            line.clear();
            for j in 0..self.p() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{:?}", self.values[(i, j)]));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }
}
