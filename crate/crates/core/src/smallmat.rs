//! Dense complex linear algebra for small matrices: LU solves, the scaled
//! Pade matrix exponential, and a Cholesky positive-semidefiniteness probe.
//!
//! These kernels back the Krylov propagator (exponentials of Hessenberg
//! matrices), the analytic 2x2/3x3 blocks, and density-matrix invariant
//! checks. Sizes stay small (tens of rows), so plain dense loops suffice.

use crate::error::{Result, SimError};
use ndarray::Array2;
use num_complex::Complex64;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// One-norm (maximum absolute column sum).
pub fn norm_one(a: &Array2<Complex64>) -> f64 {
    let (n, m) = a.dim();
    (0..m)
        .map(|j| (0..n).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense product, written out to keep this module self-contained.
pub fn matmul(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (n, k) = a.dim();
    let (k2, m) = b.dim();
    debug_assert_eq!(k, k2);
    let mut out = Array2::zeros((n, m));
    for i in 0..n {
        for l in 0..k {
            let ail = a[(i, l)];
            if ail == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..m {
                out[(i, j)] += ail * b[(l, j)];
            }
        }
    }
    out
}

/// LU factorization with partial pivoting, in place.
/// Returns the pivot permutation.
pub fn lu_factor(a: &mut Array2<Complex64>) -> Result<Vec<usize>> {
    let n = a.nrows();
    let mut piv: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = a[(k, k)].norm();
        for i in (k + 1)..n {
            let v = a[(i, k)].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best < 1e-300 {
            return Err(SimError::Numerics("singular pivot in LU".into()));
        }
        if p != k {
            piv.swap(k, p);
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = tmp;
            }
        }
        let pivot = a[(k, k)];
        for i in (k + 1)..n {
            let l = a[(i, k)] / pivot;
            a[(i, k)] = l;
            for j in (k + 1)..n {
                let akj = a[(k, j)];
                a[(i, j)] -= l * akj;
            }
        }
    }
    Ok(piv)
}

/// Solves A X = B for matrix B given the LU factors of A.
pub fn lu_solve(lu: &Array2<Complex64>, piv: &[usize], b: &Array2<Complex64>) -> Array2<Complex64> {
    let n = lu.nrows();
    let m = b.ncols();
    let mut x = Array2::zeros((n, m));
    for j in 0..m {
        for i in 0..n {
            x[(i, j)] = b[(piv[i], j)];
        }
    }
    // forward substitution (unit lower triangle)
    for k in 0..n {
        for i in (k + 1)..n {
            let l = lu[(i, k)];
            if l != Complex64::new(0.0, 0.0) {
                for j in 0..m {
                    let xkj = x[(k, j)];
                    x[(i, j)] -= l * xkj;
                }
            }
        }
    }
    // back substitution
    for k in (0..n).rev() {
        let d = lu[(k, k)];
        for j in 0..m {
            x[(k, j)] /= d;
        }
        for i in 0..k {
            let u = lu[(i, k)];
            if u != Complex64::new(0.0, 0.0) {
                for j in 0..m {
                    let xkj = x[(k, j)];
                    x[(i, j)] -= u * xkj;
                }
            }
        }
    }
    x
}

/// Matrix exponential by Pade order 13 with scaling and squaring.
pub fn expm(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    const THETA13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    if n != a.ncols() {
        return Err(SimError::InvalidInput("expm needs a square matrix".into()));
    }
    let norm = norm_one(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let scale = c(1.0 / f64::powi(2.0, s as i32));
    let a1 = a.mapv(|z| z * scale);
    let eye: Array2<Complex64> = Array2::eye(n);
    let a2 = matmul(&a1, &a1);
    let a4 = matmul(&a2, &a2);
    let a6 = matmul(&a2, &a4);

    // U = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
    let mut inner = &a6.mapv(|z| z * c(B[13])) + &a4.mapv(|z| z * c(B[11]));
    inner = &inner + &a2.mapv(|z| z * c(B[9]));
    let mut u = matmul(&a6, &inner);
    u = &u + &a6.mapv(|z| z * c(B[7]));
    u = &u + &a4.mapv(|z| z * c(B[5]));
    u = &u + &a2.mapv(|z| z * c(B[3]));
    u = &u + &eye.mapv(|z| z * c(B[1]));
    let u = matmul(&a1, &u);

    // V = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let mut inner = &a6.mapv(|z| z * c(B[12])) + &a4.mapv(|z| z * c(B[10]));
    inner = &inner + &a2.mapv(|z| z * c(B[8]));
    let mut v = matmul(&a6, &inner);
    v = &v + &a6.mapv(|z| z * c(B[6]));
    v = &v + &a4.mapv(|z| z * c(B[4]));
    v = &v + &a2.mapv(|z| z * c(B[2]));
    v = &v + &eye.mapv(|z| z * c(B[0]));

    let num = &u + &v; // V + U
    let mut den = &v - &u; // V - U
    let piv = lu_factor(&mut den)?;
    let mut r = lu_solve(&den, &piv, &num);
    for _ in 0..s {
        r = matmul(&r, &r);
    }
    Ok(r)
}

/// exp(z * A), a common case for propagators exp(-i t H).
pub fn expm_scaled(a: &Array2<Complex64>, z: Complex64) -> Result<Array2<Complex64>> {
    expm(&a.mapv(|v| v * z))
}

/// Attempts a Cholesky factorization of a Hermitian matrix.
/// Success certifies the matrix is positive definite.
pub fn cholesky_is_pd(a: &Array2<Complex64>) -> bool {
    let n = a.nrows();
    let mut l: Array2<Complex64> = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let dj = d.sqrt();
        l[(j, j)] = c(dj);
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / c(dj);
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn cx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z: Array2<Complex64> = Array2::zeros((4, 4));
        let e = expm(&z).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(e[(i, j)].re, want, epsilon = 1e-15);
                assert_abs_diff_eq!(e[(i, j)].im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn expm_matches_pauli_rotation() {
        // exp(-i theta sigma_x) = cos(theta) I - i sin(theta) sigma_x
        let theta = 0.7713;
        let mut sx: Array2<Complex64> = Array2::zeros((2, 2));
        sx[(0, 1)] = cx(1.0, 0.0);
        sx[(1, 0)] = cx(1.0, 0.0);
        let e = expm_scaled(&sx, cx(0.0, -theta)).unwrap();
        assert_abs_diff_eq!(e[(0, 0)].re, theta.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 1)].im, -theta.sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 0)].im, -theta.sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 1)].re, theta.cos(), epsilon = 1e-14);
    }

    #[test]
    fn expm_large_norm_scaling() {
        // diagonal matrix with large entries exercises the squaring phase
        let mut d: Array2<Complex64> = Array2::zeros((3, 3));
        d[(0, 0)] = cx(0.0, 40.0);
        d[(1, 1)] = cx(-3.0, 17.0);
        d[(2, 2)] = cx(0.0, -55.5);
        let e = expm(&d).unwrap();
        for i in 0..3 {
            let want = d[(i, i)].exp();
            assert!((e[(i, i)] - want).norm() < 1e-11 * want.norm().max(1.0));
        }
    }

    #[test]
    fn lu_solves_random_system() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 9;
        let mut a: Array2<Complex64> = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
            a[(i, i)] += cx(3.0, 0.0);
        }
        let x_true: Array2<Complex64> =
            Array2::from_shape_fn((n, 2), |_| cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let b = matmul(&a, &x_true);
        let mut lu = a.clone();
        let piv = lu_factor(&mut lu).unwrap();
        let x = lu_solve(&lu, &piv, &b);
        for i in 0..n {
            for j in 0..2 {
                assert!((x[(i, j)] - x_true[(i, j)]).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn cholesky_detects_definiteness() {
        let mut pd: Array2<Complex64> = Array2::eye(3);
        pd[(0, 1)] = cx(0.2, 0.1);
        pd[(1, 0)] = cx(0.2, -0.1);
        assert!(cholesky_is_pd(&pd));
        let mut not_pd: Array2<Complex64> = Array2::eye(3);
        not_pd[(2, 2)] = cx(-0.5, 0.0);
        assert!(!cholesky_is_pd(&not_pd));
    }

    #[test]
    fn expm_unitary_for_hermitian_generator() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 6;
        let mut h: Array2<Complex64> = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let z = cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
            h[(i, i)] = cx(rng.gen_range(-2.0..2.0), 0.0);
        }
        let u = expm_scaled(&h, cx(0.0, -1.3)).unwrap();
        let udag = Array2::from_shape_fn((n, n), |(i, j)| u[(j, i)].conj());
        let prod = matmul(&udag, &u);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - cx(want, 0.0)).norm() < 1e-12);
            }
        }
    }
}
