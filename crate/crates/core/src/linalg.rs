//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SVD};

fn padded(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() >= a.ncols() {
        return a.clone();
    }
    let mut p = DMatrix::zeros(a.ncols(), a.ncols());
    p.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    p
}

/// Singular values (descending) and right singular vectors as columns.
pub fn right_svd(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.ncols();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    if a.nrows() == 0 {
        return (vec![0.0; n], DMatrix::identity(n, n));
    }
    let svd = SVD::new(padded(a), false, true);
    let vt = svd.v_t.expect("requested V");
    (svd.singular_values.iter().copied().collect(), vt.transpose())
}

/// Orthonormal basis (as columns) of the null space, singular values `<= tol`.
pub fn null_space(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let (s, v) = right_svd(a);
    let k = s.iter().filter(|&&x| x > tol).count();
    v.columns(k, v.ncols() - k).into_owned()
}

/// The `dim` right singular vectors of smallest singular value.
pub fn smallest_right_vectors(a: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let (_, v) = right_svd(a);
    let n = v.ncols();
    v.columns(n - dim, dim).into_owned()
}

/// Orthonormal basis of the column space with singular values `> tol`.
pub fn range_basis(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if a.ncols() == 0 || a.nrows() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.expect("requested U");
    let k = svd.singular_values.iter().filter(|&&x| x > tol).count();
    u.columns(0, k).into_owned()
}

pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    SVD::new(a.clone(), false, false).singular_values.iter().copied().collect()
}

pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    singular_values(a).iter().filter(|&&x| x > tol).count()
}

/// 2-norm condition number (infinite when singular).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    DMatrix::from_fn(ar * br, ac * bc, |r, c| a[(r / br, c / bc)] * b[(r % br, c % bc)])
}

/// Reduced row echelon form with partial pivoting; returns the nonzero rows.
pub fn rref(a: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut m = a.clone();
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (piv, val) = (r..rows)
            .map(|i| (i, m[(i, c)].abs()))
            .fold((r, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if val <= tol {
            for i in r..rows {
                m[(i, c)] = 0.0;
            }
            continue;
        }
        m.swap_rows(r, piv);
        let p = m[(r, c)];
        for j in 0..cols {
            m[(r, j)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = m[(i, c)];
                if f != 0.0 {
                    for j in 0..cols {
                        let v = m[(r, j)];
                        m[(i, j)] -= f * v;
                    }
                }
            }
        }
        r += 1;
    }
    m.rows(0, r).into_owned()
}

/// Canonical basis of the column span of `v`: the transposed RREF rows.
pub fn canonical_basis(v: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut b = rref(&v.transpose(), tol).transpose();
    b.iter_mut().for_each(|x| {
        if x.abs() <= tol {
            *x = 0.0
        }
    });
    b
}

/// Orthonormal basis of the intersection of two column spans.
pub fn intersect(u: &DMatrix<f64>, w: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = u.nrows();
    if u.ncols() == 0 || w.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let uo = range_basis(u, tol);
    let wo = range_basis(w, tol);
    let mut stacked = DMatrix::zeros(n, uo.ncols() + wo.ncols());
    stacked.columns_mut(0, uo.ncols()).copy_from(&uo);
    stacked.columns_mut(uo.ncols(), wo.ncols()).copy_from(&(-&wo));
    let k = null_space(&stacked, tol);
    let vecs = &uo * k.rows(0, uo.ncols());
    range_basis(&vecs, tol)
}

pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let tol = 1e-13 * a.amax().max(1.0) * a.nrows().max(a.ncols()) as f64;
    SVD::new(a.clone(), true, true).pseudo_inverse(tol).expect("tolerance is nonnegative")
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.columns_mut(c, b.ncols()).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(*b);
        r += b.nrows();
    }
    out
}

pub fn column_vector(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v)
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_wide_matrix() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = null_space(&a, 1e-12);
        assert_eq!(k.ncols(), 2);
        assert!(max_abs(&(&a * &k)) < 1e-14);
    }

    #[test]
    fn rref_is_canonical() {
        let v = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let b = canonical_basis(&v, 1e-12);
        assert_eq!(b, DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn intersection_of_planes() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let w = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let i = intersect(&u, &w, 1e-12);
        assert_eq!(i.ncols(), 1);
        assert!((i[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kron_with_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let k = kron(&a, &DMatrix::identity(2, 2));
        assert_eq!(k[(0, 2)], 1.0);
        assert_eq!(k[(1, 3)], 1.0);
        assert_eq!(k[(0, 3)], 0.0);
    }
}
