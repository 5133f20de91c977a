//! Kernel matrices for slicing-based dimension reduction and extraction of
//! the leading directions.
//!
//! With slices of sizes `c_h` and weights `p̂_h = c_h/n` (all equal to `1/H`
//! when `H` divides `n`):
//!
//! ```text
//! SIR     = Σ p̂_h z̄(h) z̄(h)ᵀ
//! SAVE    = Σ p̂_h (Iₚ − Σ̂(h))²            = Iₚ − 2 Σ p̂_h Σ̂(h) + Λₙ
//! Λₙ      = Σ p̂_h Σ̂(h)²
//! Vₙ      = (1/n) Σ_h Σ_j (d_hj d_hjᵀ)²,   d_hj = z_(h,j) − z̄(h)
//! Λ̃ₙ      = c(c−1)/((c−1)²+1) Λₙ − (c−1)/((c−1)²+1) Vₙ
//! CSAVE   = Iₚ − 2 Σ p̂_h Σ̂(h) + Λ̃ₙ
//! ```
//!
//! `c` in the correction is the nominal slice size `floor(n/H)`.

use serde::{Deserialize, Serialize};

use crate::data::{directions_to_x_scale, StandardizedDataset};
use crate::error::{Result, SdrError};
use crate::linalg::{mat_square, sym_eig, Matrix, SymMatrix};
use crate::slicing::{slice_stats, Divisor, SliceAssignment, SliceStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Sir,
    Save,
    Csave,
    LambdaRaw,
    LambdaCorrected,
    VHat,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sir => "SIR",
            Method::Save => "SAVE",
            Method::Csave => "CSAVE",
            Method::LambdaRaw => "LAMBDA_RAW",
            Method::LambdaCorrected => "LAMBDA_CORRECTED",
            Method::VHat => "V_HAT",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sir" => Ok(Method::Sir),
            "save" => Ok(Method::Save),
            "csave" => Ok(Method::Csave),
            other => Err(format!(
                "unknown method '{other}', expected sir, save or csave"
            )),
        }
    }
}

/// A symmetric kernel matrix tagged with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMatrix {
    pub matrix: SymMatrix,
    pub method: Method,
    /// Slice count H.
    pub slices: usize,
    pub divisor: Divisor,
}

/// Which algebraic form of the SIR kernel to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SirForm {
    /// `Σ p̂_h z̄(h)z̄(h)ᵀ`, always PSD.
    #[default]
    WeightedMeans,
    /// `Iₚ − Σ p̂_h Σ̂(h)`; agrees with the weighted-means form up to O(1/n).
    IdentityMinusPooled,
}

pub fn sir_matrix(s: &SliceStats, form: SirForm) -> CandidateMatrix {
    let matrix = match form {
        SirForm::WeightedMeans => SymMatrix::weighted_outer_sum(
            s.p,
            s.slices.iter().map(|sl| (sl.weight, sl.mean.as_slice())),
        ),
        SirForm::IdentityMinusPooled => SymMatrix::identity(s.p).sub(&s.pooled_cov()),
    };
    CandidateMatrix {
        matrix,
        method: Method::Sir,
        slices: s.len(),
        divisor: s.divisor,
    }
}

fn check_slice_sizes(s: &SliceStats) -> Result<()> {
    match s.slices.iter().position(|sl| sl.count < 2) {
        Some(h) => Err(SdrError::SingletonSlice { slice: h, value: None }),
        None => Ok(()),
    }
}

pub fn save_matrix(s: &SliceStats) -> Result<CandidateMatrix> {
    check_slice_sizes(s)?;
    let eye = SymMatrix::identity(s.p);
    let matrix = s.slices.iter().fold(SymMatrix::zeros(s.p), |acc, sl| {
        acc.lin_comb(1.0, &mat_square(&eye.sub(&sl.cov)), sl.weight)
    });
    Ok(CandidateMatrix {
        matrix,
        method: Method::Save,
        slices: s.len(),
        divisor: s.divisor,
    })
}

/// `Λₙ = Σ p̂_h Σ̂(h)²`.
pub fn lambda_n(s: &SliceStats) -> Result<CandidateMatrix> {
    check_slice_sizes(s)?;
    let matrix = s.slices.iter().fold(SymMatrix::zeros(s.p), |acc, sl| {
        acc.lin_comb(1.0, &mat_square(&sl.cov), sl.weight)
    });
    Ok(CandidateMatrix {
        matrix,
        method: Method::LambdaRaw,
        slices: s.len(),
        divisor: s.divisor,
    })
}

/// `Vₙ`: average over all observations of `(ddᵀ)² = (dᵀd)·ddᵀ`, where `d`
/// is the deviation from the observation's slice mean.
pub fn v_n(z: &Matrix, a: &SliceAssignment) -> Result<CandidateMatrix> {
    if a.n() != z.rows() {
        return Err(SdrError::DimensionMismatch(format!(
            "assignment covers {} observations, data has {} rows",
            a.n(),
            z.rows()
        )));
    }
    let p = z.cols();
    let n = z.rows();
    let mut acc = SymMatrix::zeros(p);
    let mut dev = vec![0.0; p];
    for (h, idx) in a.slices().iter().enumerate() {
        if idx.len() < 2 {
            return Err(SdrError::SingletonSlice { slice: h, value: None });
        }
        let mut mean = vec![0.0; p];
        for &i in idx {
            for (m, v) in mean.iter_mut().zip(z.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
        for &i in idx {
            for ((d, v), m) in dev.iter_mut().zip(z.row(i)).zip(&mean) {
                *d = v - m;
            }
            let sq: f64 = dev.iter().map(|d| d * d).sum();
            acc.add_outer(sq / n as f64, &dev);
        }
    }
    acc.mirror_upper();
    Ok(CandidateMatrix {
        matrix: acc,
        method: Method::VHat,
        slices: a.len(),
        divisor: Divisor::Count,
    })
}

/// Scalar weights `(a, b)` of `Λ̃ₙ = a·Λₙ − b·Vₙ` for slice size `c`.
pub fn correction_coefficients(c: usize) -> Result<(f64, f64)> {
    if c < 2 {
        return Err(SdrError::InvalidSliceSize(c));
    }
    let c = c as f64;
    let denom = (c - 1.0) * (c - 1.0) + 1.0;
    Ok((c * (c - 1.0) / denom, (c - 1.0) / denom))
}

pub fn lambda_corrected(
    lam: &CandidateMatrix,
    v: &CandidateMatrix,
    c: usize,
) -> Result<CandidateMatrix> {
    if lam.method != Method::LambdaRaw || v.method != Method::VHat {
        return Err(SdrError::InvalidConfig(format!(
            "lambda correction expects LAMBDA_RAW and V_HAT inputs, got {} and {}",
            lam.method, v.method
        )));
    }
    if lam.slices != v.slices || lam.matrix.dim() != v.matrix.dim() {
        return Err(SdrError::DimensionMismatch(
            "Λₙ and Vₙ come from different slicings".into(),
        ));
    }
    let (a, b) = correction_coefficients(c)?;
    Ok(CandidateMatrix {
        matrix: lam.matrix.lin_comb(a, &v.matrix, -b),
        method: Method::LambdaCorrected,
        slices: lam.slices,
        divisor: lam.divisor,
    })
}

/// Bias-corrected SAVE kernel. May be indefinite.
pub fn csave_matrix(s: &SliceStats, z: &Matrix, a: &SliceAssignment) -> Result<CandidateMatrix> {
    if s.len() != a.len() || s.n != a.n() {
        return Err(SdrError::DimensionMismatch(
            "slice statistics do not match the assignment".into(),
        ));
    }
    let lam = lambda_n(s)?;
    let v = v_n(z, a)?;
    let corrected = lambda_corrected(&lam, &v, a.nominal_size())?;
    let matrix = SymMatrix::identity(s.p)
        .lin_comb(1.0, &s.pooled_cov(), -2.0)
        .add(&corrected.matrix);
    Ok(CandidateMatrix {
        matrix,
        method: Method::Csave,
        slices: s.len(),
        divisor: s.divisor,
    })
}

/// Slices `z` once and builds the requested kernel.
pub fn kernel(
    method: Method,
    z: &Matrix,
    a: &SliceAssignment,
    divisor: Divisor,
) -> Result<CandidateMatrix> {
    if method == Method::VHat {
        return v_n(z, a);
    }
    let stats = slice_stats(z, a, divisor)?;
    match method {
        Method::Sir => Ok(sir_matrix(&stats, SirForm::default())),
        Method::Save => save_matrix(&stats),
        Method::Csave => csave_matrix(&stats, z, a),
        Method::LambdaRaw => lambda_n(&stats),
        Method::LambdaCorrected => {
            lambda_corrected(&lambda_n(&stats)?, &v_n(z, a)?, a.nominal_size())
        }
        Method::VHat => unreachable!(),
    }
}

/// Estimated basis of the reduction subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct CdrBasis {
    /// p×k, orthonormal columns, z-scale.
    pub betas_z: Matrix,
    /// p×k, unit columns, x-scale.
    pub betas_x: Matrix,
    /// The k leading eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Every eigenvalue of the kernel, descending.
    pub all_eigenvalues: Vec<f64>,
    /// λ_k and λ_{k+1} coincide, so the k-dimensional span is not identified.
    pub ambiguous_dimension: bool,
    /// Number of eigenvalues below zero (only CSAVE and Λ̃ₙ can have any).
    pub negative_eigenvalues: usize,
}

const AMBIGUITY_TOL: f64 = 1e-10;

/// Top-`k` eigenvectors of the kernel, ranked by algebraic value.
pub fn cdr_basis(m: &CandidateMatrix, k: usize, sd: &StandardizedDataset) -> Result<CdrBasis> {
    let p = m.matrix.dim();
    if k == 0 || k > p {
        return Err(SdrError::InvalidConfig(format!(
            "dimension k = {k} must lie in 1..={p}"
        )));
    }
    let eig = sym_eig(&m.matrix)?;
    let betas_z = Matrix::from_fn(p, k, |i, j| eig.vectors.get(i, j));
    let betas_x = directions_to_x_scale(&betas_z, &sd.cov_inv_sqrt)?;
    let ambiguous_dimension = k < p && (eig.values[k - 1] - eig.values[k]).abs() <= AMBIGUITY_TOL;
    let scale = eig.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let negative_eigenvalues = eig
        .values
        .iter()
        .filter(|&&l| l < -1e-12 * scale.max(1e-300))
        .count();
    Ok(CdrBasis {
        betas_z,
        betas_x,
        eigenvalues: eig.values[..k].to_vec(),
        all_eigenvalues: eig.values,
        ambiguous_dimension,
        negative_eigenvalues,
    })
}

/// Leading eigenvector of a kernel.
pub fn leading_direction(m: &CandidateMatrix) -> Result<Vec<f64>> {
    Ok(sym_eig(&m.matrix)?.vector(0))
}
