//! Datasets, standardization to `z = Σ̂ₓ^{-1/2}(x − x̄)`, and CSV ingestion.

use std::path::Path;

use crate::error::{Result, SdrError};
use crate::linalg::{inv_sqrt, norm, Matrix, SymMatrix};

/// Predictor rows `x` (n×p) paired with a response `y` (length n).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(SdrError::DimensionMismatch(format!(
                "{} predictor rows but {} responses",
                x.rows(),
                y.len()
            )));
        }
        if x.rows() < 2 {
            return Err(SdrError::InsufficientData {
                n: x.rows(),
                p: x.cols(),
            });
        }
        if x.cols() == 0 {
            return Err(SdrError::DimensionMismatch("no predictor columns".into()));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(SdrError::InvalidMatrix("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }
}

/// Data in standardized coordinates together with the transform that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedDataset {
    pub z: Matrix,
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
    pub cov_inv_sqrt: SymMatrix,
    pub y: Vec<f64>,
}

impl StandardizedDataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.z.cols()
    }

    /// Takes `x` as already standardized: `z = x`, with zero mean and identity
    /// covariance recorded as the transform. For simulated data whose
    /// predictor distribution is known to be `N(0, Iₚ)`.
    pub fn known_standard(d: &Dataset) -> Self {
        let p = d.p();
        Self {
            z: d.x.clone(),
            mean: vec![0.0; p],
            cov: SymMatrix::identity(p),
            cov_inv_sqrt: SymMatrix::identity(p),
            y: d.y.clone(),
        }
    }
}

/// Column means and the n−1 sample covariance.
pub fn mean_and_cov(x: &Matrix) -> (Vec<f64>, SymMatrix) {
    let n = x.rows();
    let p = x.cols();
    let mut mean = vec![0.0; p];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = SymMatrix::zeros(p);
    let mut centered = vec![0.0; p];
    for i in 0..n {
        for ((c, v), m) in centered.iter_mut().zip(x.row(i)).zip(&mean) {
            *c = v - m;
        }
        cov.add_outer(1.0, &centered);
    }
    cov.mirror_upper();
    (mean, cov.scale(1.0 / (n as f64 - 1.0)))
}

/// Whitens the predictors with the sample mean and the inverse square root
/// of the (n−1) sample covariance.
pub fn standardize(d: &Dataset, rel_floor: f64) -> Result<StandardizedDataset> {
    let (n, p) = (d.n(), d.p());
    if n <= p {
        return Err(SdrError::InsufficientData { n, p });
    }
    let (mean, cov) = mean_and_cov(&d.x);
    let cov_inv_sqrt = inv_sqrt(&cov, rel_floor)?;
    let mut z = Matrix::zeros(n, p);
    let mut centered = vec![0.0; p];
    for i in 0..n {
        for ((c, v), m) in centered.iter_mut().zip(d.x.row(i)).zip(&mean) {
            *c = v - m;
        }
        for (j, v) in cov_inv_sqrt.mul_vec(&centered).into_iter().enumerate() {
            z.set(i, j, v);
        }
    }
    Ok(StandardizedDataset {
        z,
        mean,
        cov,
        cov_inv_sqrt,
        y: d.y.clone(),
    })
}

/// Maps z-scale directions to x-scale, `β_x ∝ Σ̂ₓ^{-1/2}β_z`, with unit columns.
pub fn directions_to_x_scale(betas_z: &Matrix, cov_inv_sqrt: &SymMatrix) -> Result<Matrix> {
    let raw = cov_inv_sqrt.mul_matrix(betas_z)?;
    let mut out = raw.clone();
    for j in 0..raw.cols() {
        let col = raw.column(j);
        let len = norm(&col);
        if !(len > 1e-300) {
            return Err(SdrError::DegenerateDirection { column: j });
        }
        for (i, v) in col.iter().enumerate() {
            out.set(i, j, v / len);
        }
    }
    Ok(out)
}

/// Which CSV column holds the response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnSelector {
    Name(String),
    Index(usize),
}

impl std::str::FromStr for ColumnSelector {
    type Err = std::convert::Infallible;

    /// Numeric strings select by zero-based index, anything else by name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSelector::Index(i),
            Err(_) => ColumnSelector::Name(s.to_string()),
        })
    }
}

/// Reads a headered numeric CSV. The selected column becomes `y`, every
/// other column a predictor in file order.
pub fn load_csv(path: impl AsRef<Path>, y_column: &ColumnSelector) -> Result<Dataset> {
    let path = path.as_ref();
    let io_err = |e: &dyn std::fmt::Display| SdrError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(&e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| io_err(&e))?
        .iter()
        .map(str::to_string)
        .collect();
    let y_idx = match y_column {
        ColumnSelector::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SdrError::MissingColumn(name.clone()))?,
        ColumnSelector::Index(i) if *i < headers.len() => *i,
        ColumnSelector::Index(i) => {
            return Err(SdrError::MissingColumn(format!(
                "index {i} (file has {} columns)",
                headers.len()
            )))
        }
    };
    if headers.len() < 2 {
        return Err(SdrError::Parse {
            row: 1,
            column: headers.first().cloned().unwrap_or_default(),
            message: "need a response column and at least one predictor".into(),
        });
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // header is row 1
        let row_no = r + 2;
        let record = record.map_err(|e| SdrError::Parse {
            row: row_no,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(SdrError::Parse {
                row: row_no,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (c, cell) in record.iter().enumerate() {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| SdrError::Parse {
                    row: row_no,
                    column: headers[c].clone(),
                    message: format!("'{cell}' is not a finite number"),
                })?;
            if c == y_idx {
                ys.push(value);
            } else {
                row.push(value);
            }
        }
        xs.push(row);
    }
    if ys.len() < 2 {
        return Err(SdrError::InsufficientData {
            n: ys.len(),
            p: headers.len() - 1,
        });
    }
    Dataset::new(Matrix::from_rows(&xs)?, ys)
}
