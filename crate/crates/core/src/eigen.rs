//! Dense symmetric eigensolver: Householder reduction to tridiagonal form
//! followed by implicit QL iterations with Wilkinson-style shifts.
//!
//! Follows the classic EISPACK `tred2`/`tql2` pair. The eigenvalue-only path
//! skips accumulating the orthogonal transform, which is most of the cost.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues in ascending order, plus eigenvectors as columns when requested.
pub(crate) struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Option<Array2<T>>,
}

/// Largest `|a_ij - a_ji|`.
pub(crate) fn asymmetry<T: Real>(a: &Array2<T>) -> T {
    let n = a.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

pub(crate) fn symmetric_eigen<T: Real>(a: &Array2<T>, want_vectors: bool) -> Result<SymmetricEigen<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!("matrix is {:?}, not square", a.dim())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite matrix entry".into()));
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: want_vectors.then(|| Array2::zeros((0, 0))),
        });
    }
    // row-major n×n working copy
    let mut v: Vec<T> = a.iter().copied().collect();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut v, &mut d, &mut e, n, want_vectors);

    // QL rotations touch columns of V; keep them contiguous by working on Vᵀ.
    let mut vt = if want_vectors {
        let mut t = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                t[j * n + i] = v[i * n + j];
            }
        }
        Some(t)
    } else {
        None
    };
    ql_implicit(&mut d, &mut e, vt.as_deref_mut(), n)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = vt.map(|t| Array2::from_shape_fn((n, n), |(row, col)| t[order[col] * n + row]));
    Ok(SymmetricEigen { values, vectors })
}

fn tridiagonalize<T: Real>(v: &mut [T], d: &mut [T], e: &mut [T], n: usize, accumulate: bool) {
    let at = |i: usize, j: usize| i * n + j;
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for &dk in &d[..i] {
            scale = scale + dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = T::zero();
                v[at(j, i)] = T::zero();
            }
        } else {
            for dk in &mut d[..i] {
                *dk = *dk / scale;
                h = h + *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }

            for j in 0..i {
                f = d[j];
                v[at(j, i)] = f;
                g = e[j] + v[at(j, j)] * f;
                for k in j + 1..i {
                    g = g + v[at(k, j)] * d[k];
                    e[k] = e[k] + v[at(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[at(k, j)] = v[at(k, j)] - (f * e[k] + g * d[k]);
                }
                d[j] = v[at(i - 1, j)];
                v[at(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }

    if !accumulate {
        for j in 0..n {
            d[j] = v[at(j, j)];
        }
        e[0] = T::zero();
        return;
    }

    for i in 0..n - 1 {
        v[at(n - 1, i)] = v[at(i, i)];
        v[at(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[at(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g = g + v[at(k, i + 1)] * v[at(k, j)];
                }
                for k in 0..=i {
                    v[at(k, j)] = v[at(k, j)] - g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[at(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[at(n - 1, j)];
        v[at(n - 1, j)] = T::zero();
    }
    v[at(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// `vt`, when present, holds the transform transposed: row `i` is column `i`.
fn ql_implicit<T: Real>(d: &mut [T], e: &mut [T], mut vt: Option<&mut [T]>, n: usize) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let two = T::lit(2.0);
    let eps = T::epsilon();
    let max_iter = 30 * n.max(1) + 30;
    let mut f = T::zero();
    let mut tst1 = T::zero();

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        let m = m.min(n - 1);

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::NoConvergence);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    if let Some(vt) = vt.as_deref_mut() {
                        let (lo, hi) = vt.split_at_mut((i + 1) * n);
                        let col_i = &mut lo[i * n..];
                        let col_i1 = &mut hi[..n];
                        for (a, b) in col_i.iter_mut().zip(col_i1.iter_mut()) {
                            let hb = *b;
                            *b = s * *a + c * hb;
                            *a = c * *a - s * hb;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    /// Cyclic Jacobi rotations; slow but independent of the QL path.
    fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
        let mut m = a.clone();
        let n = m.nrows();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += m[[p, q]] * m[[p, q]];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if m[[p, q]].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (mkp, mkq) = (m[[k, p]], m[[k, q]]);
                        m[[k, p]] = c * mkp - s * mkq;
                        m[[k, q]] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let (mpk, mqk) = (m[[p, k]], m[[q, k]]);
                        m[[p, k]] = c * mpk - s * mqk;
                        m[[q, k]] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    fn pseudo_random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = next();
                a[[i, j]] = v;
                a[[j, i]] = v;
            }
        }
        a
    }

    #[test]
    fn matches_jacobi_oracle() {
        for (n, seed) in [(1, 1), (2, 2), (5, 3), (17, 4), (40, 5)] {
            let a = pseudo_random_symmetric(n, seed);
            let ours = symmetric_eigen(&a, true).unwrap();
            let oracle = jacobi_eigenvalues(&a);
            for (x, y) in ours.values.iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-10, "n={n}: {x} vs {y}");
            }
            let vals_only = symmetric_eigen(&a, false).unwrap();
            for (x, y) in vals_only.values.iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn vectors_reconstruct_input() {
        let a = pseudo_random_symmetric(30, 9);
        let eig = symmetric_eigen(&a, true).unwrap();
        let u = eig.vectors.unwrap();
        let lam = Array2::from_diag(&ndarray::Array1::from(eig.values));
        let back = u.dot(&lam).dot(&u.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        let gram = u.t().dot(&u);
        for ((i, j), v) in gram.indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_and_degenerate_inputs() {
        let a = arr2(&[[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]);
        assert_eq!(symmetric_eigen(&a, false).unwrap().values, vec![1.0, 2.0, 3.0]);
        let z = Array2::<f64>::zeros((4, 4));
        assert!(symmetric_eigen(&z, true).unwrap().values.iter().all(|&v| v == 0.0));
        let bad = arr2(&[[f64::NAN, 0.0], [0.0, 1.0]]);
        assert!(symmetric_eigen(&bad, false).is_err());
    }

    #[test]
    fn single_precision_path() {
        let a = arr2(&[[2.0f32, 1.0], [1.0, 2.0]]);
        let eig = symmetric_eigen(&a, true).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-6);
        assert!((eig.values[1] - 3.0).abs() < 1e-6);
    }
}
