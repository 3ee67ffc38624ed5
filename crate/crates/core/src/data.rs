//! Observational samples of `(X, Y, Z)`: ingestion, validation,
//! standardization and the half split used for cross-fitting.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CgemError, Result};

/// Smallest sample size any estimator in this crate accepts.
pub const MIN_ROWS: usize = 20;

/// Largest supported covariate dimension.
pub const MAX_COVARIATE_DIM: usize = 2;

/// Row-major `n × d` matrix of covariate samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    values: Vec<f64>,
    dim: usize,
}

impl Covariates {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_COVARIATE_DIM {
            return Err(CgemError::Config(format!(
                "covariate dimension must be 1 or 2, got {dim}"
            )));
        }
        if values.len() % dim != 0 {
            return Err(CgemError::Data(format!(
                "{} covariate values do not fill rows of width {dim}",
                values.len()
            )));
        }
        Ok(Covariates { values, dim })
    }

    /// Builds a matrix from per-column vectors of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.len();
        if dim == 0 || dim > MAX_COVARIATE_DIM {
            return Err(CgemError::Config(format!(
                "covariate dimension must be 1 or 2, got {dim}"
            )));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(CgemError::Data("covariate columns differ in length".into()));
        }
        let mut values = Vec::with_capacity(n * dim);
        for i in 0..n {
            for c in columns {
                values.push(c[i]);
            }
        }
        Ok(Covariates { values, dim })
    }

    pub fn from_column(column: Vec<f64>) -> Self {
        Covariates {
            values: column,
            dim: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nrows(&self) -> usize {
        self.values.len() / self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows().map(|r| r[k]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Covariates {
        let mut values = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Covariates {
            values,
            dim: self.dim,
        }
    }
}

/// Affine map applied to one column at load: `stored = (raw - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub shift: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        shift: 0.0,
        scale: 1.0,
    };

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.shift) / self.scale
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.scale + self.shift
    }

    /// Mean/standard-deviation standardization of `values`.
    pub fn standardizing(values: &[f64]) -> Result<Affine> {
        let (mean, sd) = mean_sd(values);
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(CgemError::Data(
                "cannot standardize a column with zero variance".into(),
            ));
        }
        Ok(Affine {
            shift: mean,
            scale: sd,
        })
    }
}

/// Per-column affine parameters of a standardized [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x: Affine,
    pub y: Affine,
    pub z: Vec<Affine>,
}

/// Optional labels carried through to reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnNames {
    pub x: String,
    pub y: String,
    pub z: Vec<String>,
}

/// Immutable table of `n` samples of `(X, Y, Z)` with `Z` of dimension 1 or 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Covariates,
    names: Option<ColumnNames>,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<f64>, z: Covariates) -> Result<Self> {
        let n = x.len();
        if y.len() != n || z.nrows() != n {
            return Err(CgemError::Data(format!(
                "row counts differ: x={}, y={}, z={}",
                n,
                y.len(),
                z.nrows()
            )));
        }
        if n < MIN_ROWS {
            return Err(CgemError::InsufficientData {
                found: n,
                required: MIN_ROWS,
            });
        }
        if x.iter()
            .chain(y.iter())
            .chain(z.as_slice().iter())
            .any(|v| !v.is_finite())
        {
            return Err(CgemError::Data("non-finite value in dataset".into()));
        }
        Ok(Dataset {
            x,
            y,
            z,
            names: None,
            standardization: None,
        })
    }

    pub fn with_names(mut self, names: ColumnNames) -> Self {
        self.names = Some(names);
        self
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn z(&self) -> &Covariates {
        &self.z
    }

    pub fn names(&self) -> Option<&ColumnNames> {
        self.names.as_ref()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    /// Copy with X and Y exchanged; Z is untouched.
    pub fn swap_xy(&self) -> Dataset {
        Dataset {
            x: self.y.clone(),
            y: self.x.clone(),
            z: self.z.clone(),
            names: self.names.as_ref().map(|n| ColumnNames {
                x: n.y.clone(),
                y: n.x.clone(),
                z: n.z.clone(),
            }),
            standardization: self.standardization.as_ref().map(|s| Standardization {
                x: s.y,
                y: s.x,
                z: s.z.clone(),
            }),
        }
    }

    /// Standardizes every column to mean 0 and unit sample standard
    /// deviation, recording the affine parameters. Already-standardized data
    /// is returned unchanged.
    pub fn standardized(&self) -> Result<Dataset> {
        if self.standardization.is_some() {
            return Ok(self.clone());
        }
        let ax = Affine::standardizing(&self.x)?;
        let ay = Affine::standardizing(&self.y)?;
        let az = (0..self.dim())
            .map(|k| Affine::standardizing(&self.z.column(k)))
            .collect::<Result<Vec<_>>>()?;
        let d = self.dim();
        let z = self
            .z
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| az[i % d].apply(v))
            .collect();
        Ok(Dataset {
            x: self.x.iter().map(|&v| ax.apply(v)).collect(),
            y: self.y.iter().map(|&v| ay.apply(v)).collect(),
            z: Covariates { values: z, dim: d },
            names: self.names.clone(),
            standardization: Some(Standardization {
                x: ax,
                y: ay,
                z: az,
            }),
        })
    }

    /// Undoes [`Dataset::standardized`]; a no-op on raw data.
    pub fn destandardized(&self) -> Dataset {
        let Some(s) = &self.standardization else {
            return self.clone();
        };
        let d = self.dim();
        let z = self
            .z
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| s.z[i % d].invert(v))
            .collect();
        Dataset {
            x: self.x.iter().map(|&v| s.x.invert(v)).collect(),
            y: self.y.iter().map(|&v| s.y.invert(v)).collect(),
            z: Covariates { values: z, dim: d },
            names: self.names.clone(),
            standardization: None,
        }
    }
}

/// Mean and sample (n - 1) standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Which CSV columns play the X, Y and Z roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMap {
    pub x: String,
    pub y: String,
    pub z: Vec<String>,
}

impl RoleMap {
    /// Parses `x=COL,y=COL,z=COL[,COL]`. Bare tokens after `z=` extend the
    /// Z list.
    pub fn parse(spec: &str) -> Result<RoleMap> {
        let mut x = None;
        let mut y = None;
        let mut z: Vec<String> = Vec::new();
        let mut last_key = "";
        for token in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match token.split_once('=') {
                Some((key, col)) => {
                    let col = col.trim().to_string();
                    match key.trim() {
                        "x" => x = Some(col),
                        "y" => y = Some(col),
                        "z" => z.push(col),
                        other => {
                            return Err(CgemError::Config(format!(
                                "--roles: unknown role '{other}'"
                            )))
                        }
                    }
                    last_key = if key.trim() == "z" { "z" } else { "" };
                }
                None if last_key == "z" => z.push(token.to_string()),
                None => {
                    return Err(CgemError::Config(format!(
                        "--roles: token '{token}' is not of the form role=COLUMN"
                    )))
                }
            }
        }
        let x = x.ok_or_else(|| CgemError::Config("--roles: missing x=COLUMN".into()))?;
        let y = y.ok_or_else(|| CgemError::Config("--roles: missing y=COLUMN".into()))?;
        if z.is_empty() || z.len() > MAX_COVARIATE_DIM {
            return Err(CgemError::Config(format!(
                "--roles: z must name 1 or 2 columns, got {}",
                z.len()
            )));
        }
        Ok(RoleMap { x, y, z })
    }
}

/// Reads a comma-separated file with one header row into named numeric columns.
pub struct CsvTable {
    pub headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<CsvTable> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .delimiter(b',')
            .from_path(path)
            .map_err(|e| CgemError::Io(format!("{}: {e}", path.display())))?;
        let headers = reader
            .headers()
            .map_err(|e| CgemError::Data(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| CgemError::Data(e.to_string()))?;
            rows.push(record.iter().map(|s| s.trim().to_string()).collect());
        }
        Ok(CsvTable { headers, rows })
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    /// Parses one column as finite reals. Row numbers in errors are 1-based
    /// data rows (the header is row 0).
    pub fn numeric_column(&self, name: &str, flag: &str) -> Result<Vec<f64>> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| {
                CgemError::Config(format!("{flag}: column '{name}' not found in CSV header"))
            })?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cell = row.get(idx).map(String::as_str).unwrap_or("");
                let v: f64 = cell.parse().map_err(|_| CgemError::Cell {
                    row: r + 1,
                    column: name.to_string(),
                    message: format!("'{cell}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(CgemError::Cell {
                        row: r + 1,
                        column: name.to_string(),
                        message: format!("'{cell}' is not finite"),
                    });
                }
                Ok(v)
            })
            .collect()
    }
}

/// Loads a dataset from CSV using `roles`, optionally standardizing every
/// column.
pub fn load_csv(path: &Path, roles: &RoleMap, standardize: bool) -> Result<Dataset> {
    let table = CsvTable::read(path)?;
    let x = table.numeric_column(&roles.x, "--roles x")?;
    let y = table.numeric_column(&roles.y, "--roles y")?;
    let z = roles
        .z
        .iter()
        .map(|c| table.numeric_column(c, "--roles z"))
        .collect::<Result<Vec<_>>>()?;
    let ds = Dataset::new(x, y, Covariates::from_columns(&z)?)?.with_names(ColumnNames {
        x: roles.x.clone(),
        y: roles.y.clone(),
        z: roles.z.clone(),
    });
    if standardize {
        ds.standardized()
    } else {
        Ok(ds)
    }
}

/// Writes a dataset as CSV with header `x,y,z1[,z2]`.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend((1..=ds.dim()).map(|k| format!("z{k}")));
    w.write_record(&header)
        .map_err(|e| CgemError::Io(e.to_string()))?;
    for i in 0..ds.n() {
        let mut rec = vec![format!("{:e}", ds.x[i]), format!("{:e}", ds.y[i])];
        rec.extend(ds.z.row(i).iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(|e| CgemError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Disjoint halves of `{0..n}` used for cross-fitting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPair {
    pub d1: Vec<usize>,
    pub d2: Vec<usize>,
    pub seed: u64,
}

impl SplitPair {
    /// Uniform random partition; with odd `n` the extra index goes to `d1`.
    /// Both halves are returned sorted.
    pub fn random(n: usize, seed: u64) -> SplitPair {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let cut = n.div_ceil(2);
        let mut d1 = idx[..cut].to_vec();
        let mut d2 = idx[cut..].to_vec();
        d1.sort_unstable();
        d2.sort_unstable();
        SplitPair { d1, d2, seed }
    }

    pub fn swapped(&self) -> SplitPair {
        SplitPair {
            d1: self.d2.clone(),
            d2: self.d1.clone(),
            seed: self.seed,
        }
    }

    pub fn len(&self) -> usize {
        self.d1.len() + self.d2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn split_half(ds: &Dataset, seed: u64) -> SplitPair {
    SplitPair::random(ds.n(), seed)
}
