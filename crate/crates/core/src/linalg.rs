//! Small dense matrix toolkit specialised to symmetric problems.
//!
//! Everything here works on row-major `Vec<f64>` storage. Matrices in this
//! crate are at most a few dozen rows wide, so the eigensolver is a cyclic
//! Jacobi iteration rather than a tridiagonal QR.

use crate::error::{Result, SdrError};

/// Dense row-major matrix of arbitrary shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SdrError::DimensionMismatch(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(SdrError::DimensionMismatch(format!(
                    "row {i} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().position(|c| c.len() != rows) {
            return Err(SdrError::DimensionMismatch(format!(
                "column {bad} has {} entries, expected {rows}",
                columns[bad].len()
            )));
        }
        Ok(Self::from_fn(rows, columns.len(), |i, j| columns[j][i]))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(SdrError::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    /// Gram matrix `selfᵀ·self`.
    pub fn gram(&self) -> SymMatrix {
        let p = self.cols;
        let mut data = vec![0.0; p * p];
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..p {
                for j in i..p {
                    data[i * p + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                data[i * p + j] = data[j * p + i];
            }
        }
        SymMatrix { dim: p, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Square symmetric matrix. Construction symmetrizes inputs that are
/// symmetric up to rounding and rejects anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

const SYMMETRY_TOL: f64 = 1e-10;

impl SymMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(SdrError::InvalidMatrix("dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(SdrError::InvalidMatrix(format!(
                "{} entries supplied for a {dim}x{dim} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(SdrError::InvalidMatrix(format!(
                "non-finite entry at ({}, {})",
                pos / dim,
                pos % dim
            )));
        }
        let scale = 1.0 + data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut m = Self { dim, data };
        for i in 0..dim {
            for j in 0..i {
                let a = m.data[i * dim + j];
                let b = m.data[j * dim + i];
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(SdrError::InvalidMatrix(format!(
                        "not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                m.data[i * dim + j] = avg;
                m.data[j * dim + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(SdrError::InvalidMatrix("rows must form a square matrix".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn from_matrix(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(SdrError::InvalidMatrix(format!(
                "{}x{} matrix is not square",
                m.rows(),
                m.cols()
            )));
        }
        Self::new(m.rows(), m.as_slice().to_vec())
    }

    /// Builds from the upper triangle of `f`, mirroring it below the diagonal.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diag(&vec![1.0; dim])
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut data = vec![0.0; dim * dim];
        for (i, v) in values.iter().enumerate() {
            data[i * dim + i] = *v;
        }
        Self { dim, data }
    }

    /// `Σ wᵢ vᵢvᵢᵀ`, the weighted sum of outer products.
    pub fn weighted_outer_sum<'a>(
        dim: usize,
        terms: impl IntoIterator<Item = (f64, &'a [f64])>,
    ) -> Self {
        let mut out = Self::zeros(dim);
        for (w, v) in terms {
            out.add_outer(w, v);
        }
        out.mirror_upper();
        out
    }

    /// Accumulates `w·vvᵀ` into the upper triangle only; call
    /// [`mirror_upper`](Self::mirror_upper) when done.
    pub(crate) fn add_outer(&mut self, w: f64, v: &[f64]) {
        let p = self.dim;
        for i in 0..p {
            let wi = w * v[i];
            if wi == 0.0 {
                continue;
            }
            for j in i..p {
                self.data[i * p + j] += wi * v[j];
            }
        }
    }

    pub(crate) fn mirror_upper(&mut self) {
        let p = self.dim;
        for i in 0..p {
            for j in 0..i {
                self.data[i * p + j] = self.data[j * p + i];
            }
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix {
            rows: self.dim,
            cols: self.dim,
            data: self.data.clone(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_dim(&self, other: &SymMatrix) {
        assert_eq!(
            self.dim, other.dim,
            "symmetric matrices of different dimension"
        );
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &SymMatrix, b: f64) -> SymMatrix {
        self.check_dim(other);
        SymMatrix {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `uᵀ·self·v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.mul_vec(v))
    }

    /// Applies `self` to every column of `m`.
    pub fn mul_matrix(&self, m: &Matrix) -> Result<Matrix> {
        self.to_matrix().matmul(m)
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.check_dim(other);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: Matrix,
}

impl EigenResult {
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }

    /// `V·diag(values)·Vᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        let p = self.values.len();
        SymMatrix::from_fn(p, |i, j| {
            (0..p)
                .map(|l| self.vectors.get(i, l) * self.values[l] * self.vectors.get(j, l))
                .sum()
        })
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;
const SIGN_EPS: f64 = 1e-12;

fn off_and_diag_norms(a: &[f64], p: usize) -> (f64, f64) {
    let mut off = 0.0;
    let mut diag = 0.0;
    for i in 0..p {
        for j in 0..p {
            let v = a[i * p + j];
            if i == j {
                diag += v * v;
            } else {
                off += v * v;
            }
        }
    }
    (off.sqrt(), diag.sqrt())
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Eigenvalues come back in descending order. Each eigenvector is signed so
/// that its first component larger than `1e-12` in magnitude is positive.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenResult> {
    let p = m.dim();
    if let Some(pos) = m.data.iter().position(|v| !v.is_finite()) {
        return Err(SdrError::InvalidMatrix(format!(
            "non-finite entry at ({}, {})",
            pos / p,
            pos % p
        )));
    }
    let mut a = m.data.clone();
    let mut v = vec![0.0; p * p];
    for i in 0..p {
        v[i * p + i] = 1.0;
    }

    let mut converged = false;
    let mut off = 0.0;
    for _ in 0..=JACOBI_MAX_SWEEPS {
        let (o, d) = off_and_diag_norms(&a, p);
        off = o;
        if off == 0.0 || off < JACOBI_REL_TOL * d {
            converged = true;
            break;
        }
        for r in 0..p {
            for s in (r + 1)..p {
                let ars = a[r * p + s];
                if ars == 0.0 {
                    continue;
                }
                let theta = (a[s * p + s] - a[r * p + r]) / (2.0 * ars);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..p {
                    let akr = a[k * p + r];
                    let aks = a[k * p + s];
                    a[k * p + r] = c * akr - sn * aks;
                    a[k * p + s] = sn * akr + c * aks;
                }
                for k in 0..p {
                    let ark = a[r * p + k];
                    let ask = a[s * p + k];
                    a[r * p + k] = c * ark - sn * ask;
                    a[s * p + k] = sn * ark + c * ask;
                }
                a[r * p + s] = 0.0;
                a[s * p + r] = 0.0;
                for k in 0..p {
                    let vkr = v[k * p + r];
                    let vks = v[k * p + s];
                    v[k * p + r] = c * vkr - sn * vks;
                    v[k * p + s] = sn * vkr + c * vks;
                }
            }
        }
    }
    if !converged {
        return Err(SdrError::NumericalFailure {
            sweeps: JACOBI_MAX_SWEEPS,
            off_norm: off,
        });
    }

    let mut order: Vec<usize> = (0..p).collect();
    // stable sort keeps the rotation order for exact ties
    order.sort_by(|&i, &j| a[j * p + j].total_cmp(&a[i * p + i]));

    let values = order.iter().map(|&i| a[i * p + i]).collect();
    let mut vectors = Matrix::zeros(p, p);
    for (col, &src) in order.iter().enumerate() {
        let sign = (0..p)
            .map(|k| v[k * p + src])
            .find(|x| x.abs() > SIGN_EPS)
            .map_or(1.0, f64::signum);
        for k in 0..p {
            vectors.set(k, col, sign * v[k * p + src]);
        }
    }
    Ok(EigenResult { values, vectors })
}

/// Default relative eigenvalue floor for [`inv_sqrt`].
pub const DEFAULT_REL_FLOOR: f64 = 1e-10;

/// `m^{-1/2}` through the eigendecomposition. Refuses matrices whose
/// smallest eigenvalue falls below `rel_floor` times the largest.
pub fn inv_sqrt(m: &SymMatrix, rel_floor: f64) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    let max = eig.values[0];
    let min = *eig.values.last().expect("dimension is positive");
    if !(max > 0.0) || min < rel_floor * max {
        return Err(SdrError::SingularCovariance {
            min,
            max,
            floor: rel_floor,
        });
    }
    let p = m.dim();
    let scale: Vec<f64> = eig.values.iter().map(|l| 1.0 / l.sqrt()).collect();
    Ok(SymMatrix::from_fn(p, |i, j| {
        (0..p)
            .map(|l| eig.vectors.get(i, l) * scale[l] * eig.vectors.get(j, l))
            .sum()
    }))
}

/// Half-vectorization, lower triangle stacked column by column.
pub fn vech(m: &SymMatrix) -> Vec<f64> {
    let p = m.dim();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for j in 0..p {
        for i in j..p {
            out.push(m.get(i, j));
        }
    }
    out
}

/// Inverse of [`vech`].
pub fn unvech(v: &[f64]) -> Result<SymMatrix> {
    // p(p+1)/2 = len  =>  p = (sqrt(8 len + 1) - 1) / 2
    let p = (((8 * v.len() + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
    if p == 0 || p * (p + 1) / 2 != v.len() {
        return Err(SdrError::DimensionMismatch(format!(
            "{} is not a triangular number",
            v.len()
        )));
    }
    let mut data = vec![0.0; p * p];
    let mut k = 0;
    for j in 0..p {
        for i in j..p {
            data[i * p + j] = v[k];
            data[j * p + i] = v[k];
            k += 1;
        }
    }
    SymMatrix::new(p, data)
}

/// `m·mᵀ`, which for symmetric `m` is `m²`.
pub fn mat_square(m: &SymMatrix) -> SymMatrix {
    let p = m.dim();
    SymMatrix::from_fn(p, |i, j| dot(&m.data[i * p..(i + 1) * p], &m.data[j * p..(j + 1) * p]))
}

/// First-order change of the `index`-th eigenpair of `base` under `base + delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPerturbation {
    pub value_shift: f64,
    pub vector_shift: Vec<f64>,
}

const EIGEN_GAP_MIN: f64 = 1e-8;

/// Rayleigh-Schrödinger first-order terms for a simple eigenvalue:
/// `δλᵢ = bᵢᵀΔbᵢ` and `δbᵢ = Σ_{l≠i} bₗ(bₗᵀΔbᵢ)/(λᵢ − λₗ)`.
///
/// `index` counts from the largest eigenvalue.
pub fn eigen_perturb_first_order(
    base: &SymMatrix,
    delta: &SymMatrix,
    index: usize,
) -> Result<EigenPerturbation> {
    if base.dim() != delta.dim() {
        return Err(SdrError::DimensionMismatch(format!(
            "base is {0}x{0}, delta is {1}x{1}",
            base.dim(),
            delta.dim()
        )));
    }
    let p = base.dim();
    if index >= p {
        return Err(SdrError::DimensionMismatch(format!(
            "eigen index {index} out of range for dimension {p}"
        )));
    }
    let eig = sym_eig(base)?;
    let lambda = eig.values[index];
    let gap = eig
        .values
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != index)
        .map(|(_, v)| (lambda - v).abs())
        .fold(f64::INFINITY, f64::min);
    if gap <= EIGEN_GAP_MIN {
        return Err(SdrError::DegenerateEigenvalue { index, gap });
    }

    let bi = eig.vector(index);
    let delta_bi = delta.mul_vec(&bi);
    let value_shift = dot(&bi, &delta_bi);
    let mut vector_shift = vec![0.0; p];
    for l in (0..p).filter(|&l| l != index) {
        let bl = eig.vector(l);
        let coef = dot(&bl, &delta_bi) / (lambda - eig.values[l]);
        for (out, b) in vector_shift.iter_mut().zip(&bl) {
            *out += coef * b;
        }
    }
    Ok(EigenPerturbation {
        value_shift,
        vector_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn rel_frobenius(a: &SymMatrix, b: &SymMatrix) -> f64 {
        a.sub(b).frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn eig_identity() {
        let eig = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0, 1.0]);
        assert_eq!(eig.vectors, SymMatrix::identity(3).to_matrix());
    }

    #[test]
    fn eig_diagonal() {
        let eig = sym_eig(&SymMatrix::diag(&[3.0, 1.0])).unwrap();
        assert_eq!(eig.values, vec![3.0, 1.0]);
        assert_eq!(eig.vectors, SymMatrix::identity(2).to_matrix());

        // unsorted diagonal gets reordered
        let eig = sym_eig(&SymMatrix::diag(&[1.0, 3.0])).unwrap();
        assert_eq!(eig.values, vec![3.0, 1.0]);
        assert_eq!(eig.vector(0), vec![0.0, 1.0]);
    }

    #[test]
    fn eig_two_by_two_matches_quadratic_roots() {
        // det([[a-l, b], [b, d-l]]) = l^2 - (a+d) l + (ad - b^2)
        let (a, b, d) = (2.0, 1.0, 2.0);
        let tr: f64 = a + d;
        let det = a * d - b * b;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let roots = [(tr + disc) / 2.0, (tr - disc) / 2.0];
        assert_eq!(roots, [3.0, 1.0]);

        let eig = sym_eig(&SymMatrix::from_rows(&[vec![a, b], vec![b, d]]).unwrap()).unwrap();
        assert_close(eig.values[0], roots[0], 1e-14);
        assert_close(eig.values[1], roots[1], 1e-14);
        let s = 0.5_f64.sqrt();
        let v0 = eig.vector(0);
        let v1 = eig.vector(1);
        assert_close(v0[0], s, 1e-14);
        assert_close(v0[1], s, 1e-14);
        // first significant component positive
        assert_close(v1[0], s, 1e-14);
        assert_close(v1[1], -s, 1e-14);
    }

    #[test]
    fn eig_zero_matrix() {
        let eig = sym_eig(&SymMatrix::zeros(3)).unwrap();
        assert_eq!(eig.values, vec![0.0; 3]);
    }

    #[test]
    fn construction_rejects_asymmetry_and_nan() {
        assert!(matches!(
            SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]),
            Err(SdrError::InvalidMatrix(_))
        ));
        assert!(matches!(
            SymMatrix::from_rows(&[vec![f64::NAN, 0.0], vec![0.0, 1.0]]),
            Err(SdrError::InvalidMatrix(_))
        ));
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0 + 1e-13, 1.0]]).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn inv_sqrt_closed_forms() {
        let r = inv_sqrt(&SymMatrix::identity(2), DEFAULT_REL_FLOOR).unwrap();
        assert!(r.max_abs_diff(&SymMatrix::identity(2)) < 1e-15);
        let r = inv_sqrt(&SymMatrix::diag(&[4.0, 1.0]), DEFAULT_REL_FLOOR).unwrap();
        assert!(r.max_abs_diff(&SymMatrix::diag(&[0.5, 1.0])) < 1e-15);
    }

    #[test]
    fn inv_sqrt_rejects_singular() {
        let m = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            inv_sqrt(&m, DEFAULT_REL_FLOOR),
            Err(SdrError::SingularCovariance { .. })
        ));
        assert!(matches!(
            inv_sqrt(&SymMatrix::diag(&[1.0, -1.0]), DEFAULT_REL_FLOOR),
            Err(SdrError::SingularCovariance { .. })
        ));
    }

    #[test]
    fn inv_sqrt_random_spd_identity() {
        // A = GᵀG + I for a fixed G
        let g = Matrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
        let a = g.gram().add(&SymMatrix::identity(4));
        let r = inv_sqrt(&a, DEFAULT_REL_FLOOR).unwrap();
        let rar = r.to_matrix().matmul(&a.to_matrix()).unwrap().matmul(&r.to_matrix()).unwrap();
        assert!(rar.max_abs_diff(&SymMatrix::identity(4).to_matrix()) < 1e-6);
    }

    #[test]
    fn vech_examples() {
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(vech(&m), vec![1.0, 2.0, 3.0]);
        assert_eq!(vech(&SymMatrix::identity(3)), vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        // d_ij = i + j with 1-based indices
        let m = SymMatrix::from_fn(3, |i, j| (i + 1 + j + 1) as f64);
        assert_eq!(vech(&m), vec![2.0, 3.0, 4.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn unvech_rejects_bad_length() {
        assert!(unvech(&[1.0, 2.0]).is_err());
        assert!(unvech(&[]).is_err());
    }

    #[test]
    fn mat_square_examples() {
        assert_eq!(mat_square(&SymMatrix::identity(2)), SymMatrix::identity(2));
        assert_eq!(
            mat_square(&SymMatrix::diag(&[2.0, -1.0])),
            SymMatrix::diag(&[4.0, 1.0])
        );
        let swap = SymMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(mat_square(&swap), SymMatrix::identity(2));
    }

    #[test]
    fn perturbation_examples() {
        let base = SymMatrix::diag(&[3.0, 1.0]);
        let eps = 1e-3;
        let d = SymMatrix::diag(&[eps, 0.0]);
        let out = eigen_perturb_first_order(&base, &d, 0).unwrap();
        assert_eq!(out.value_shift, eps);
        assert_eq!(out.vector_shift, vec![0.0, 0.0]);

        let d = SymMatrix::from_rows(&[vec![0.0, eps], vec![eps, 0.0]]).unwrap();
        let out = eigen_perturb_first_order(&base, &d, 0).unwrap();
        assert_eq!(out.value_shift, 0.0);
        assert_close(out.vector_shift[0], 0.0, 1e-18);
        assert_close(out.vector_shift[1], eps / 2.0, 1e-18);

        let out = eigen_perturb_first_order(&base, &SymMatrix::zeros(2), 1).unwrap();
        assert_eq!(out.value_shift, 0.0);
        assert_eq!(out.vector_shift, vec![0.0, 0.0]);
    }

    #[test]
    fn perturbation_rejects_repeated_eigenvalue() {
        let base = SymMatrix::diag(&[2.0, 2.0, 1.0]);
        let err = eigen_perturb_first_order(&base, &SymMatrix::zeros(3), 0).unwrap_err();
        assert!(matches!(err, SdrError::DegenerateEigenvalue { index: 0, .. }));
        assert!(eigen_perturb_first_order(&base, &SymMatrix::zeros(3), 2).is_ok());
    }

    fn sym_strategy(p: usize) -> impl Strategy<Value = SymMatrix> {
        proptest::collection::vec(-10.0_f64..10.0, p * p).prop_map(move |v| {
            SymMatrix::from_fn(p, |i, j| v[i * p + j])
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn eig_reconstructs_and_is_orthonormal(m in (1usize..9).prop_flat_map(sym_strategy)) {
            let eig = sym_eig(&m).unwrap();
            prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
            let vtv = eig.vectors.transpose().matmul(&eig.vectors).unwrap();
            prop_assert!(vtv.max_abs_diff(&SymMatrix::identity(m.dim()).to_matrix()) < 1e-8);
            if m.frobenius_norm() > 0.0 {
                prop_assert!(rel_frobenius(&eig.reconstruct(), &m) < 1e-8);
            }
            for i in 0..m.dim() {
                let lead = eig.vector(i).into_iter().find(|x| x.abs() > SIGN_EPS).unwrap();
                prop_assert!(lead > 0.0);
            }
        }

        #[test]
        fn eig_is_deterministic(m in sym_strategy(5)) {
            prop_assert_eq!(sym_eig(&m).unwrap(), sym_eig(&m).unwrap());
        }

        #[test]
        fn mat_square_is_psd(m in (1usize..8).prop_flat_map(sym_strategy)) {
            let sq = mat_square(&m);
            let eig = sym_eig(&sq).unwrap();
            let floor = -1e-10 * sq.trace().max(1e-300);
            prop_assert!(eig.values.iter().all(|&l| l >= floor));
        }

        #[test]
        fn vech_round_trips(m in (1usize..7).prop_flat_map(sym_strategy)) {
            prop_assert_eq!(unvech(&vech(&m)).unwrap(), m);
        }

        #[test]
        fn inv_sqrt_defining_identity(
            g in proptest::collection::vec(-3.0_f64..3.0, 25),
            ridge in 0.05_f64..2.0,
        ) {
            let a = Matrix::new(5, 5, g).unwrap().gram().add(&SymMatrix::identity(5).scale(ridge));
            let r = inv_sqrt(&a, DEFAULT_REL_FLOOR).unwrap();
            let rar = r.to_matrix().matmul(&a.to_matrix()).unwrap().matmul(&r.to_matrix()).unwrap();
            prop_assert!(rar.max_abs_diff(&SymMatrix::identity(5).to_matrix()) < 1e-6);
        }
    }
}
