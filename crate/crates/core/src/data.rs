//! Run tables: one row per pipeline run, one column per declared variable.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::study::{check_unique, Study, VariableSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    variables: Vec<VariableSpec>,
    data: DMatrix<f64>,
}

impl ObservationMatrix {
    /// Validates shape, finiteness and the [0, 1] range of interventional columns.
    pub fn new(variables: Vec<VariableSpec>, data: DMatrix<f64>) -> Result<Self> {
        check_unique(&variables)?;
        if data.ncols() != variables.len() {
            return Err(Error::Schema(format!(
                "{} columns of data for {} declared variables",
                data.ncols(),
                variables.len()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::Schema("run table has no rows".into()));
        }
        for (j, var) in variables.iter().enumerate() {
            for (row, &value) in data.column(j).iter().enumerate() {
                if !value.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: var.name.clone(),
                        value: value.to_string(),
                    });
                }
                if var.is_interventional() && !(0.0..=1.0).contains(&value) {
                    return Err(Error::Range {
                        row,
                        column: var.name.clone(),
                        value,
                    });
                }
            }
        }
        Ok(Self { variables, data })
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.variables.iter().map(|v| v.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn spec(&self, name: &str) -> Result<&VariableSpec> {
        Ok(&self.variables[self.column_index(name)?])
    }

    pub fn column(&self, name: &str) -> Result<DVector<f64>> {
        Ok(self.data.column(self.column_index(name)?).into_owned())
    }

    /// Columns `names` as an N × |names| matrix.
    pub fn columns(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>>>()?;
        Ok(self.data.select_columns(idx.iter()))
    }

    /// CSV text with a header row; reals use the shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self.names().collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in self.data.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str, study: &Study) -> Result<Self> {
        Self::read_csv(text.as_bytes(), study, Path::new("<memory>"))
    }

    fn read_csv<R: std::io::Read>(reader: R, study: &Study, path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
        let mut position: HashMap<&str, usize> = HashMap::new();
        for (i, h) in header.iter().enumerate() {
            if study.get(h).is_err() {
                return Err(Error::Schema(format!(
                    "{}: column `{h}` is not declared in the study config",
                    path.display()
                )));
            }
            if position.insert(h, i).is_some() {
                return Err(Error::Schema(format!("{}: column `{h}` appears twice", path.display())));
            }
        }
        let order = study
            .variables
            .iter()
            .map(|v| {
                position.get(v.name.as_str()).copied().ok_or_else(|| {
                    Error::Schema(format!(
                        "{}: declared variable `{}` has no column",
                        path.display(),
                        v.name
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut values = Vec::new();
        let mut rows = 0;
        for (row, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            for (j, &src) in order.iter().enumerate() {
                let cell = record.get(src).unwrap_or("");
                let value: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row,
                        column: study.variables[j].name.clone(),
                        value: cell.to_string(),
                    })?;
                values.push(value);
            }
            rows += 1;
        }
        if rows < 2 {
            return Err(Error::Schema(format!(
                "{}: need at least 2 runs, found {rows}",
                path.display()
            )));
        }
        let data = DMatrix::from_row_slice(rows, order.len(), &values);
        Self::new(study.variables.clone(), data)
    }

    /// Standardized copy of the data: zero mean and unit sample variance per
    /// column. Constant columns are centered only.
    pub fn standardized(&self) -> DMatrix<f64> {
        standardize(&self.data)
    }
}

/// Column-wise standardization; constant columns are centered only.
pub fn standardize(data: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.nrows() as f64;
    let mut out = data.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let var = if n > 1.0 { col.norm_squared() / (n - 1.0) } else { 0.0 };
        if var > 0.0 {
            col /= var.sqrt();
        }
    }
    out
}

/// Reads a run table, ordering columns as declared in the study config.
pub fn load_run_table(csv_path: impl AsRef<Path>, config_path: impl AsRef<Path>) -> Result<ObservationMatrix> {
    let study = Study::load(config_path)?;
    load_run_table_with(csv_path, &study)
}

pub fn load_run_table_with(csv_path: impl AsRef<Path>, study: &Study) -> Result<ObservationMatrix> {
    let path = csv_path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ObservationMatrix::read_csv(std::io::BufReader::new(file), study, path)
}
