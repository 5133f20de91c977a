//! Independent oracles for the estimators and numerical kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sdr_core::data::{directions_to_x_scale, standardize, Dataset};
use sdr_core::estimators::{
    kernel, lambda_n, sir_matrix, v_n, Method, SirForm,
};
use sdr_core::linalg::{
    dot, eigen_perturb_first_order, sym_eig, Matrix, SymMatrix, DEFAULT_REL_FLOOR,
};
use sdr_core::metrics::trace_correlation;
use sdr_core::simulation::{gen_model, ModelSpec};
use sdr_core::slicing::{slice_equal_count, slice_stats, Divisor};

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn outer(a: &[f64], b: &[f64]) -> Vec<Vec<f64>> {
    a.iter().map(|x| b.iter().map(|y| x * y).collect()).collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = a.len();
    (0..p)
        .map(|i| (0..p).map(|j| (0..p).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

/// Λₙ as the literal quadruple sum over within-slice pairs,
/// normalized by [n c (c−1)²]⁻¹.
fn lambda_quadruple_sum(z: &Matrix, slices: &[Vec<usize>], c: usize) -> Vec<Vec<f64>> {
    let p = z.cols();
    let n = z.rows();
    let mut acc = vec![vec![0.0; p]; p];
    for idx in slices {
        let diff = |l: usize, j: usize| -> Vec<f64> {
            z.row(idx[l]).iter().zip(z.row(idx[j])).map(|(a, b)| a - b).collect()
        };
        for l in 1..c {
            for j in 0..l {
                let d1 = diff(l, j);
                let a = outer(&d1, &d1);
                for v in 1..c {
                    for u in 0..v {
                        let d2 = diff(v, u);
                        let prod = matmul(&a, &outer(&d2, &d2));
                        for i in 0..p {
                            for k in 0..p {
                                acc[i][k] += prod[i][k];
                            }
                        }
                    }
                }
            }
        }
    }
    let norm = (n * c * (c - 1) * (c - 1)) as f64;
    acc.iter().map(|r| r.iter().map(|v| v / norm).collect()).collect()
}

#[test]
fn lambda_matches_quadruple_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for instance in 0..20 {
        let p = 1 + instance % 3;
        let c = rng.random_range(2..=8);
        let h = rng.random_range(1..=(40 / c).min(5));
        let n = c * h;
        let z = gaussian_matrix(&mut rng, n, p);
        let y: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let a = slice_equal_count(&y, h).unwrap();
        let st = slice_stats(&z, &a, Divisor::CountMinusOne).unwrap();
        let lam = lambda_n(&st).unwrap().matrix;
        let oracle = lambda_quadruple_sum(&z, a.slices(), c);
        let oracle = SymMatrix::from_rows(&oracle).unwrap();
        let rel = lam.sub(&oracle).frobenius_norm() / oracle.frobenius_norm();
        assert!(rel < 1e-9, "instance {instance}: relative error {rel}");
    }
}

#[test]
fn sir_forms_converge_together() {
    // ‖Σp̂ z̄z̄ᵀ − (I − Σp̂Σ̂)‖_F is O(H/n); compare n = 200 against n = 2000
    let spec = ModelSpec::new(1, 4).unwrap();
    let h = 5;
    let avg_gap = |n: usize| -> f64 {
        (0..50)
            .map(|seed| {
                let d = gen_model(&spec, n, 1000 + seed, 0).unwrap();
                let sd = standardize(&d, DEFAULT_REL_FLOOR).unwrap();
                let a = slice_equal_count(&sd.y, h).unwrap();
                let st = slice_stats(&sd.z, &a, Divisor::CountMinusOne).unwrap();
                let means = sir_matrix(&st, SirForm::WeightedMeans).matrix;
                let pooled = sir_matrix(&st, SirForm::IdentityMinusPooled).matrix;
                means.sub(&pooled).frobenius_norm()
            })
            .sum::<f64>()
            / 50.0
    };
    let small = avg_gap(200);
    let large = avg_gap(2000);
    assert!(small / large >= 5.0, "gap {small} -> {large}");
}

#[test]
fn v_n_gaussian_fourth_moment() {
    // z ~ N(0,1) independent of y, slices of c = 10: each deviation from the
    // slice mean is N(0, (c−1)/c), so E d⁴ = 3((c−1)/c)² = 2.43.
    let (n, c) = (20_000, 10);
    let mut total = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = gaussian_matrix(&mut rng, n, 1);
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let a = slice_equal_count(&y, n / c).unwrap();
        total += v_n(&z, &a).unwrap().matrix.get(0, 0);
    }
    let mean = total / 100.0;
    let expected = 3.0 * (0.9_f64).powi(2);
    assert!((mean - expected).abs() < 0.1, "mean Vₙ = {mean}");
}

fn random_symmetric(rng: &mut ChaCha8Rng, p: usize) -> SymMatrix {
    let g = gaussian_matrix(rng, p, p);
    SymMatrix::from_fn(p, |i, j| 0.5 * (g.get(i, j) + g.get(j, i)))
}

#[test]
fn first_order_perturbation_is_second_order_accurate() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 10 {
        let p = rng.random_range(2..=6);
        let base = random_symmetric(&mut rng, p);
        let delta = random_symmetric(&mut rng, p);
        let eig = sym_eig(&base).unwrap();
        let min_gap = eig.values.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        if min_gap < 0.1 {
            continue;
        }
        for i in 0..p {
            let first = eigen_perturb_first_order(&base, &delta, i).unwrap();
            let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&t| {
                    let moved = sym_eig(&base.lin_comb(1.0, &delta, t)).unwrap();
                    (moved.values[i] - eig.values[i] - t * first.value_shift).abs()
                })
                .collect();
            for w in errs.windows(2) {
                let ratio = w[0] / w[1];
                assert!(
                    (50.0..=200.0).contains(&ratio),
                    "eigenvalue {i}: errors {errs:?}, ratio {ratio}"
                );
            }

            // eigenvector: b_i(t) ≈ b_i + t δb_i, with signs aligned
            let vec_errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&t| {
                    let moved = sym_eig(&base.lin_comb(1.0, &delta, t)).unwrap();
                    let bi = eig.vector(i);
                    let mut bt = moved.vector(i);
                    if dot(&bt, &bi) < 0.0 {
                        bt.iter_mut().for_each(|v| *v = -*v);
                    }
                    bt.iter()
                        .zip(&bi)
                        .zip(&first.vector_shift)
                        .map(|((a, b), s)| (a - b - t * s).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            assert!(vec_errs[0] / vec_errs[1] >= 25.0, "eigenvector {i}: {vec_errs:?}");
        }
        checked += 1;
    }
}

#[test]
fn standardize_random_gaussian_is_white() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let x = Matrix::from_fn(50, 3, |_, j| {
        let v: f64 = rng.sample(StandardNormal);
        v * (j + 1) as f64 + 2.0
    });
    let d = Dataset::new(x, (0..50).map(|i| i as f64).collect()).unwrap();
    let s = standardize(&d, DEFAULT_REL_FLOOR).unwrap();
    let (mean, cov) = sdr_core::data::mean_and_cov(&s.z);
    assert!(mean.iter().all(|m| m.abs() < 1e-8));
    assert!(cov.max_abs_diff(&SymMatrix::identity(3)) < 1e-8);
}

#[test]
fn standardize_is_affine_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let (n, p) = (40, 3);
        let x = gaussian_matrix(&mut rng, n, p);
        let a = gaussian_matrix(&mut rng, p, p);
        let b: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        // rows xᵢ ↦ A xᵢ + b
        let moved = Matrix::from_fn(n, p, |i, j| dot(a.row(j), x.row(i)) + b[j]);
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let z_old = standardize(&Dataset::new(x, y.clone()).unwrap(), DEFAULT_REL_FLOOR).unwrap().z;
        let z_new = standardize(&Dataset::new(moved, y).unwrap(), DEFAULT_REL_FLOOR).unwrap().z;
        // z_new = z_old Qᵀ with Q orthogonal ⇒ equal row Gram matrices
        let g_old = z_old.matmul(&z_old.transpose()).unwrap();
        let g_new = z_new.matmul(&z_new.transpose()).unwrap();
        assert!(g_old.max_abs_diff(&g_new) < 1e-6);
    }
}

#[test]
fn back_transform_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let (n, p, k) = (60, 4, 2);
        let mix = gaussian_matrix(&mut rng, p, p);
        let raw = gaussian_matrix(&mut rng, n, p);
        let x = raw.matmul(&mix.transpose()).unwrap();
        let d = Dataset::new(x, (0..n).map(|i| i as f64).collect()).unwrap();
        let sd = standardize(&d, DEFAULT_REL_FLOOR).unwrap();
        let bz_raw = gaussian_matrix(&mut rng, p, k);
        let cols: Vec<Vec<f64>> = bz_raw
            .columns()
            .into_iter()
            .map(|c| {
                let l = dot(&c, &c).sqrt();
                c.into_iter().map(|v| v / l).collect()
            })
            .collect();
        let bz = Matrix::from_columns(&cols).unwrap();
        let bx = directions_to_x_scale(&bz, &sd.cov_inv_sqrt).unwrap();
        // Σ̂^{1/2} = Σ̂ · Σ̂^{-1/2}
        let sqrt_cov = sd.cov.to_matrix().matmul(&sd.cov_inv_sqrt.to_matrix()).unwrap();
        let back = sqrt_cov.matmul(&bx).unwrap();
        let tc = trace_correlation(&back, &bz).unwrap();
        assert!((tc.r2 - 1.0).abs() < 1e-8, "{}", tc.r2);
        for j in 0..k {
            let col = bx.column(j);
            assert!((dot(&col, &col) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn model1_response_tracks_cubic_index() {
    // Var((βᵀz)³) = 15 against unit noise: corr² = 15/16
    let spec = ModelSpec::new(1, 10).unwrap();
    let d = gen_model(&spec, 100_000, 3, 0).unwrap();
    let u: Vec<f64> = (0..d.n()).map(|i| d.x().get(i, 0).powi(3)).collect();
    let y = d.y();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mu, my) = (mean(&u), mean(y));
    let cov: f64 = u.iter().zip(y).map(|(a, b)| (a - mu) * (b - my)).sum();
    let vu: f64 = u.iter().map(|a| (a - mu).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let corr = cov / (vu * vy).sqrt();
    assert!(corr > 0.9, "corr = {corr}");
}

#[test]
fn kernels_are_deterministic_across_calls() {
    let spec = ModelSpec::new(2, 5).unwrap();
    let d = gen_model(&spec, 100, 1, 0).unwrap();
    let sd = standardize(&d, DEFAULT_REL_FLOOR).unwrap();
    let a = slice_equal_count(&sd.y, 5).unwrap();
    for m in [Method::Sir, Method::Save, Method::Csave, Method::LambdaRaw, Method::LambdaCorrected, Method::VHat] {
        assert_eq!(
            kernel(m, &sd.z, &a, Divisor::CountMinusOne).unwrap(),
            kernel(m, &sd.z, &a, Divisor::CountMinusOne).unwrap()
        );
    }
}
