//! Small dense solvers and matrix products.
//!
//! Everything here is sized for the problems this crate ships: matrices up to
//! a few hundred rows for factorizations, and batch-by-layer products for the
//! tape. No pivoting-heavy general-purpose routines are needed.

use super::tensor::{dot_slices, Tensor};
use super::NumericsError;

/// Largest matrix `solve_symmetric` accepts; the Newton-baseline problems all
/// sit far below this.
pub const SYMMETRIC_SOLVE_CAP: usize = 10_000;

/// Solves `a x = b` for a 2x2 system by Cramer's rule.
///
/// The singularity threshold is scale-relative: the system is rejected when
/// `|det| <= 1e-12 * max(1, max_entry^2)`, so uniformly scaling `a` does not
/// flip the verdict.
pub fn solve_2x2(a: &[[f64; 2]; 2], b: &[f64; 2]) -> Result<[f64; 2], NumericsError> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !det.is_finite() || det.abs() <= 1e-12 * (scale * scale).max(1.0) {
        return Err(NumericsError::SingularSystem { det });
    }
    Ok([
        (b[0] * a[1][1] - b[1] * a[0][1]) / det,
        (a[0][0] * b[1] - a[1][0] * b[0]) / det,
    ])
}

/// Solves `a x = b` for symmetric positive definite `a` via an unpivoted
/// Cholesky factorization.
///
/// Only the lower triangle of `a` is read. A non-positive or non-finite pivot
/// reports [`NumericsError::NotPositiveDefinite`]; the Newton baseline reacts
/// by increasing damping and retrying.
pub fn solve_symmetric(a: &Tensor, b: &Tensor) -> Result<Tensor, NumericsError> {
    let n = b.len();
    assert_eq!(a.shape(), &[n, n], "solve_symmetric needs an n x n matrix matching b");
    assert!(n <= SYMMETRIC_SOLVE_CAP, "solve_symmetric capped at {SYMMETRIC_SOLVE_CAP} rows");

    // Lower-triangular factor L with a x = b, a = L L^T.
    let mut l = a.data().to_vec();
    for j in 0..n {
        let mut pivot = l[j * n + j] - dot_slices(&l[j * n..j * n + j], &l[j * n..j * n + j]);
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(NumericsError::NotPositiveDefinite { pivot, index: j });
        }
        pivot = pivot.sqrt();
        l[j * n + j] = pivot;
        for i in j + 1..n {
            let s = dot_slices(&l[i * n..i * n + j], &l[j * n..j * n + j]);
            l[i * n + j] = (l[i * n + j] - s) / pivot;
        }
    }

    // Forward substitution L y = b, then back substitution L^T x = y.
    let mut x = b.data().to_vec();
    for i in 0..n {
        let s = dot_slices(&l[i * n..i * n + i], &x[..i]);
        x[i] = (x[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(Tensor::vector(x))
}

/// `a (m x k)` times `b (k x n)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    assert_eq!(k, k2, "matmul inner dims: {k} vs {k2}");
    let mut c = Tensor::zeros(&[m, n]);
    let (ad, bd, cd) = (a.data(), b.data(), c.data_mut());
    for i in 0..m {
        let crow = &mut cd[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = ad[i * k + kk];
            if aik == 0.0 {
                continue;
            }
            let brow = &bd[kk * n..(kk + 1) * n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
    c
}

/// `a (m x k)` times `b (n x k)` transposed, i.e. rows of `a` dotted with
/// rows of `b`. This is the layout-friendly product for `x W^T`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.rows(), a.cols());
    let (n, k2) = (b.rows(), b.cols());
    assert_eq!(k, k2, "matmul_nt inner dims: {k} vs {k2}");
    let mut c = Tensor::zeros(&[m, n]);
    let (ad, bd, cd) = (a.data(), b.data(), c.data_mut());
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            cd[i * n + j] = dot_slices(arow, &bd[j * k..(j + 1) * k]);
        }
    }
    c
}

/// `a (k x m)` transposed times `b (k x n)`, accumulated row by row. This is
/// the layout-friendly product for gradient pushback `y^T x`.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (k, m) = (a.rows(), a.cols());
    let (k2, n) = (b.rows(), b.cols());
    assert_eq!(k, k2, "matmul_tn inner dims: {k} vs {k2}");
    let mut c = Tensor::zeros(&[m, n]);
    let (ad, bd, cd) = (a.data(), b.data(), c.data_mut());
    for kk in 0..k {
        let arow = &ad[kk * m..(kk + 1) * m];
        let brow = &bd[kk * n..(kk + 1) * n];
        for i in 0..m {
            let aki = arow[i];
            if aki == 0.0 {
                continue;
            }
            let crow = &mut cd[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aki * brow[j];
            }
        }
    }
    c
}

/// Estimates the condition number (ratio of extreme singular values) of a
/// full-rank matrix by power iteration on `a^T a` for the largest value and
/// inverse iteration for the smallest.
pub fn condition_estimate(a: &Tensor, iterations: usize) -> f64 {
    let n = a.cols();
    let gram = matmul_tn(a, a);

    let mut v = Tensor::vector((0..n).map(|i| 1.0 + 0.3 * ((i % 7) as f64)).collect());
    let mut top = 0.0;
    for _ in 0..iterations {
        let w = mat_vec(&gram, &v);
        top = v.dot(&w);
        let norm = w.norm();
        assert!(norm > 0.0, "condition_estimate needs a nonzero matrix");
        v = w.scale(1.0 / norm);
    }

    let mut u = Tensor::vector((0..n).map(|i| 1.0 - 0.2 * ((i % 5) as f64)).collect());
    let mut inv_top = 0.0;
    for _ in 0..iterations {
        let w = solve_symmetric(&gram, &u).expect("gram matrix of a full-rank matrix is SPD");
        inv_top = u.dot(&w);
        u = w.scale(1.0 / w.norm());
    }
    // top ~ sigma_max^2, 1/inv_top ~ sigma_min^2.
    (top * inv_top).sqrt()
}

/// `m (n x n)` times vector `v`.
pub fn mat_vec(m: &Tensor, v: &Tensor) -> Tensor {
    let (rows, cols) = (m.rows(), m.cols());
    assert_eq!(cols, v.len(), "mat_vec dims: {cols} vs {}", v.len());
    let mut out = vec![0.0; rows];
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot_slices(m.row(i), v.data());
    }
    Tensor::vector(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    #[test]
    fn solve_2x2_identity() {
        let x = solve_2x2(&[[1.0, 0.0], [0.0, 1.0]], &[3.0, -2.0]).unwrap();
        assert_eq!(x, [3.0, -2.0]);
    }

    #[test]
    fn solve_2x2_diagonal() {
        let x = solve_2x2(&[[2.0, 0.0], [0.0, 4.0]], &[2.0, 4.0]).unwrap();
        assert_eq!(x, [1.0, 1.0]);
    }

    #[test]
    fn solve_2x2_rank_deficient() {
        let err = solve_2x2(&[[1.0, 1.0], [1.0, 1.0]], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, NumericsError::SingularSystem { .. }));
    }

    #[test]
    fn solve_2x2_threshold_scales_with_entries() {
        // det = 1, but entries of size 1e8 make it negligible at that scale.
        let err = solve_2x2(&[[1e8, 1e8 - 1.0], [1e8 + 1.0, 1e8]], &[1.0, 1.0]);
        assert!(err.is_err());
        // The same structure at unit scale is comfortably solvable.
        let ok = solve_2x2(&[[2.0, 1.0], [1.0, 2.0]], &[1.0, 1.0]).unwrap();
        assert!((ok[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn solve_symmetric_identity() {
        let a = Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let b = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert_eq!(solve_symmetric(&a, &b).unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn solve_symmetric_diagonal() {
        let a = Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 4.0]);
        let b = Tensor::vector(vec![2.0, 4.0]);
        let x = solve_symmetric(&a, &b).unwrap();
        for v in x.data() {
            assert!((v - 1.0).abs() < 1e-14, "{v}");
        }
    }

    #[test]
    fn solve_symmetric_random_spd_residual() {
        let mut rng = Rng::new(99);
        for _ in 0..20 {
            let n = 8;
            let m = Tensor::matrix(n, n, (0..n * n).map(|_| rng.normal()).collect());
            // m^T m + I is SPD with moderate conditioning.
            let mut a = matmul_tn(&m, &m);
            for i in 0..n {
                let v = a.at(i, i) + 1.0;
                a.set(i, i, v);
            }
            let b = Tensor::vector((0..n).map(|_| rng.normal()).collect());
            let x = solve_symmetric(&a, &b).unwrap();
            let r = mat_vec(&a, &x).sub(&b).norm() / b.norm();
            assert!(r <= 1e-10, "residual {r}");
        }
    }

    #[test]
    fn solve_symmetric_rejects_indefinite() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        let b = Tensor::vector(vec![1.0, 1.0]);
        assert!(matches!(
            solve_symmetric(&a, &b),
            Err(NumericsError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn products_match_naive_reference() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Tensor::matrix(3, 2, vec![1.0, -1.0, 0.5, 2.0, -0.5, 1.0]);
        let c = matmul(&a, &b);
        assert_eq!(c.data(), &[0.5, 6.0, 3.5, 12.0]);

        let bt = Tensor::matrix(2, 3, vec![1.0, 0.5, -0.5, -1.0, 2.0, 1.0]);
        assert_eq!(matmul_nt(&a, &bt).data(), c.data());

        let at = Tensor::matrix(3, 2, vec![1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(matmul_tn(&at, &b).data(), c.data());
    }

    #[test]
    fn condition_estimate_on_known_spectrum() {
        // Diagonal matrix: condition number is the ratio of extreme entries.
        let a = Tensor::matrix(4, 4, {
            let mut d = vec![0.0; 16];
            for (i, s) in [10.0, 3.0, 1.0, 0.1].iter().enumerate() {
                d[i * 4 + i] = *s;
            }
            d
        });
        let kappa = condition_estimate(&a, 200);
        assert!((kappa - 100.0).abs() / 100.0 < 1e-6, "kappa {kappa}");
    }

    proptest! {
        #[test]
        fn solve_2x2_residual_bound(
            a00 in -10.0f64..10.0, a01 in -10.0f64..10.0,
            a10 in -10.0f64..10.0, a11 in -10.0f64..10.0,
            b0 in -10.0f64..10.0, b1 in -10.0f64..10.0,
        ) {
            let a = [[a00, a01], [a10, a11]];
            let det = a00 * a11 - a01 * a10;
            let scale = [a00, a01, a10, a11].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // Only well-conditioned systems carry the residual contract.
            prop_assume!(det.abs() > 1e-3 * (scale * scale).max(1.0));
            let x = solve_2x2(&a, &[b0, b1]).unwrap();
            let r0 = (a00 * x[0] + a01 * x[1] - b0).abs();
            let r1 = (a10 * x[0] + a11 * x[1] - b1).abs();
            let bound = 1e-10 * b0.abs().max(b1.abs()).max(1.0);
            prop_assert!(r0.max(r1) <= bound, "residual {} vs {}", r0.max(r1), bound);
        }

        #[test]
        fn matmul_transpose_variants_agree(rows in 1usize..6, inner in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
            let mut rng = Rng::new(seed);
            let a = Tensor::matrix(rows, inner, (0..rows * inner).map(|_| rng.normal()).collect());
            let b = Tensor::matrix(inner, cols, (0..inner * cols).map(|_| rng.normal()).collect());
            let c = matmul(&a, &b);
            // Build the explicit transposes and check both fused variants.
            let mut bt = Tensor::zeros(&[cols, inner]);
            for i in 0..inner { for j in 0..cols { bt.set(j, i, b.at(i, j)); } }
            let mut at = Tensor::zeros(&[inner, rows]);
            for i in 0..rows { for j in 0..inner { at.set(j, i, a.at(i, j)); } }
            let c_nt = matmul_nt(&a, &bt);
            let c_tn = matmul_tn(&at, &b);
            for (x, y) in c.data().iter().zip(c_nt.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
            for (x, y) in c.data().iter().zip(c_tn.data()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
