//! How well an estimated direction or subspace recovers the true one.

use serde::Serialize;

use crate::error::{Result, SdrError};
use crate::linalg::{dot, Matrix, SymMatrix};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubspaceMetrics {
    /// R² for k = 1, squared trace correlation for k > 1.
    pub r2: f64,
    pub k: usize,
    /// R² of each estimated direction against the true span (k > 1 only).
    pub per_direction: Vec<f64>,
}

/// Gram–Schmidt under the inner product `⟨u, v⟩ = uᵀΣv` (Σ = I when `None`).
/// Fails if a column is dependent on the previous ones.
fn orthonormalize(columns: &[Vec<f64>], sigma: Option<&SymMatrix>) -> Result<Vec<Vec<f64>>> {
    let inner = |u: &[f64], v: &[f64]| match sigma {
        Some(s) => s.bilinear(u, v),
        None => dot(u, v),
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(columns.len());
    for col in columns {
        let original = inner(col, col).sqrt();
        if !(original > 0.0) {
            return Err(SdrError::DegenerateSubspace);
        }
        let mut v = col.clone();
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for q in &basis {
                let proj = inner(q, &v);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let len = inner(&v, &v).sqrt();
        if !(len > RANK_TOL * original) {
            return Err(SdrError::DegenerateSubspace);
        }
        v.iter_mut().for_each(|a| *a /= len);
        basis.push(v);
    }
    Ok(basis)
}

/// Squared multiple correlation between `β̂ᵀz` and the true reduced variables:
/// `max_{β ∈ span(B)} (β̂ᵀΣβ)² / (β̂ᵀΣβ̂ · βᵀΣβ)`. With `sigma = None` (standardized
/// predictors) this is `‖P_B β̂‖² / ‖β̂‖²`.
pub fn r2_single(beta_hat: &[f64], true_basis: &Matrix, sigma: Option<&SymMatrix>) -> Result<f64> {
    if beta_hat.len() != true_basis.rows() {
        return Err(SdrError::DimensionMismatch(format!(
            "direction has length {}, basis has {} rows",
            beta_hat.len(),
            true_basis.rows()
        )));
    }
    let q = orthonormalize(&true_basis.columns(), sigma)?;
    let (norm_sq, proj_sq) = match sigma {
        Some(s) => {
            let sb = s.mul_vec(beta_hat);
            (dot(beta_hat, &sb), q.iter().map(|qi| dot(qi, &sb).powi(2)).sum::<f64>())
        }
        None => (
            dot(beta_hat, beta_hat),
            q.iter().map(|qi| dot(qi, beta_hat).powi(2)).sum::<f64>(),
        ),
    };
    if !(norm_sq > 0.0) {
        return Err(SdrError::DegenerateSubspace);
    }
    Ok((proj_sq / norm_sq).min(1.0))
}

/// Squared trace correlation `(1/k) tr(P_B̂ P_B)` for standardized predictors,
/// i.e. the mean squared canonical correlation between the two spans.
pub fn trace_correlation(basis_hat: &Matrix, true_basis: &Matrix) -> Result<SubspaceMetrics> {
    if basis_hat.rows() != true_basis.rows() || basis_hat.cols() != true_basis.cols() {
        return Err(SdrError::DimensionMismatch(format!(
            "bases are {}x{} and {}x{}",
            basis_hat.rows(),
            basis_hat.cols(),
            true_basis.rows(),
            true_basis.cols()
        )));
    }
    let k = basis_hat.cols();
    if k == 0 {
        return Err(SdrError::DegenerateSubspace);
    }
    let a = orthonormalize(&basis_hat.columns(), None)?;
    let b = orthonormalize(&true_basis.columns(), None)?;
    // tr(P_A P_B) = ‖AᵀB‖_F² for orthonormal A, B
    let total: f64 = a
        .iter()
        .flat_map(|ai| b.iter().map(move |bj| dot(ai, bj).powi(2)))
        .sum();
    let per_direction = if k > 1 {
        basis_hat
            .columns()
            .iter()
            .map(|col| r2_single(col, true_basis, None))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(SubspaceMetrics {
        r2: (total / k as f64).min(1.0),
        k,
        per_direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn containment_orthogonality_and_45_degrees() {
        let b = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        assert!((r2_single(&[2.0, 3.0, 3.0], &b, None).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(r2_single(&[0.0, 1.0, -1.0], &b, None).unwrap(), 0.0);

        let s = 0.5_f64.sqrt();
        let r = r2_single(&[s, s], &col(&[1.0, 0.0]), None).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_basis() {
        let b = Matrix::from_columns(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(r2_single(&[1.0, 0.0], &b, None), Err(SdrError::DegenerateSubspace));
        assert_eq!(
            r2_single(&[1.0, 0.0], &col(&[0.0, 0.0]), None),
            Err(SdrError::DegenerateSubspace)
        );
        assert!(trace_correlation(&b, &b).is_err());
    }

    #[test]
    fn trace_correlation_examples() {
        let e = |i: usize| (0..3).map(|j| if i == j { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let a = Matrix::from_columns(&[e(0), e(1)]).unwrap();
        let b = Matrix::from_columns(&[e(0), e(2)]).unwrap();
        let m = trace_correlation(&a, &b).unwrap();
        assert!((m.r2 - 0.5).abs() < 1e-15);
        assert_eq!(m.k, 2);
        assert_eq!(m.per_direction, vec![1.0, 0.0]);

        assert!((trace_correlation(&a, &a).unwrap().r2 - 1.0).abs() < 1e-15);
        let o = trace_correlation(&col(&e(0)), &col(&e(1))).unwrap();
        assert_eq!(o.r2, 0.0);
    }

    #[test]
    fn general_sigma_identity_matches_simple_formula() {
        let b = col(&[1.0, 0.0, 0.0]);
        let beta = [0.3, -0.4, 0.2];
        let plain = r2_single(&beta, &b, None).unwrap();
        let with_i = r2_single(&beta, &b, Some(&SymMatrix::identity(3))).unwrap();
        assert!((plain - with_i).abs() < 1e-14);
    }

    #[test]
    fn general_sigma_against_brute_force() {
        // one-dimensional span: the max is attained at β itself
        let sigma = SymMatrix::from_rows(&[
            vec![2.0, 0.5, 0.0],
            vec![0.5, 1.0, 0.3],
            vec![0.0, 0.3, 1.5],
        ])
        .unwrap();
        let beta_true = [1.0, 0.0, 0.0];
        let beta_hat = [0.6, 0.7, -0.2];
        let num = sigma.bilinear(&beta_hat, &beta_true).powi(2);
        let den = sigma.bilinear(&beta_hat, &beta_hat) * sigma.bilinear(&beta_true, &beta_true);
        let r = r2_single(&beta_hat, &col(&beta_true), Some(&sigma)).unwrap();
        assert!((r - num / den).abs() < 1e-14);

        // two-dimensional span: grid search over angles
        let b = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let mut best = 0.0_f64;
        for t in 0..200_000 {
            let th = std::f64::consts::PI * t as f64 / 200_000.0;
            let v: Vec<f64> = (0..3).map(|i| th.cos() * b.get(i, 0) + th.sin() * b.get(i, 1)).collect();
            let val = sigma.bilinear(&beta_hat, &v).powi(2)
                / (sigma.bilinear(&beta_hat, &beta_hat) * sigma.bilinear(&v, &v));
            best = best.max(val);
        }
        let r = r2_single(&beta_hat, &b, Some(&sigma)).unwrap();
        assert!((r - best).abs() < 1e-8, "{r} vs {best}");
    }

    fn basis(p: usize, k: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-2.0_f64..2.0, p * k)
            .prop_map(move |v| Matrix::new(p, k, v).unwrap())
    }

    fn well_conditioned(m: &Matrix) -> bool {
        orthonormalize(&m.columns(), None).is_ok()
            && crate::linalg::sym_eig(&m.gram()).unwrap().values.last().copied().unwrap() > 1e-3
    }

    proptest! {
        #[test]
        fn invariances(a in basis(5, 2), b in basis(5, 2), mix in proptest::collection::vec(-2.0_f64..2.0, 4)) {
            prop_assume!(well_conditioned(&a) && well_conditioned(&b));
            let r = Matrix::new(2, 2, mix).unwrap();
            let det = r.get(0, 0) * r.get(1, 1) - r.get(0, 1) * r.get(1, 0);
            prop_assume!(det.abs() > 0.1);
            let ar = a.matmul(&r).unwrap();
            prop_assume!(well_conditioned(&ar));

            let base = trace_correlation(&a, &b).unwrap().r2;
            prop_assert!((0.0..=1.0 + 1e-12).contains(&base));
            prop_assert!((trace_correlation(&ar, &b).unwrap().r2 - base).abs() < 1e-10);
            prop_assert!((trace_correlation(&b, &a).unwrap().r2 - base).abs() < 1e-12);
        }

        #[test]
        fn sign_invariance_and_k1_consistency(v in proptest::collection::vec(-2.0_f64..2.0, 4), b in basis(4, 1)) {
            prop_assume!(crate::linalg::norm(&v) > 1e-3 && crate::linalg::norm(&b.column(0)) > 1e-3);
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            let r = r2_single(&v, &b, None).unwrap();
            prop_assert_eq!(r, r2_single(&neg, &b, None).unwrap());
            let t = trace_correlation(&col(&v), &b).unwrap().r2;
            prop_assert!((r - t).abs() < 1e-12);
        }
    }
}
