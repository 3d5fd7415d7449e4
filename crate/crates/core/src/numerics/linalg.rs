//! Dense linear solves over a generic scalar.
//!
//! Sizes here are small (a few dozen unknowns at most), so straightforward
//! Gaussian elimination with partial pivoting is plenty. A specialised
//! cyclic-tridiagonal solver supports the periodic-orbit Newton iteration.

use super::scalar::Scalar;

/// Solves A x = b in place via Gaussian elimination with partial pivoting.
/// `a` is row-major n x n. Returns None if a pivot is exactly zero.
pub fn solve_dense<T: Scalar>(a: &mut [Vec<T>], b: &mut [T]) -> Option<Vec<T>> {
    let n = b.len();
    assert_eq!(a.len(), n);
    for col in 0..n {
        // Pick the largest pivot by magnitude.
        let mut best = col;
        let mut best_mag = a[col][col].mag_log2();
        for (row, arow) in a.iter().enumerate().skip(col + 1) {
            let m = arow[col].mag_log2();
            if m > best_mag {
                best = row;
                best_mag = m;
            }
        }
        if a[best][col].is_zero() {
            return None;
        }
        a.swap(col, best);
        b.swap(col, best);
        let pivot = a[col][col].clone();
        for row in col + 1..n {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone() / pivot.clone();
            for k in col..n {
                let v = a[col][k].clone() * factor.clone();
                a[row][k] = a[row][k].clone() - v;
            }
            b[row] = b[row].clone() - b[col].clone() * factor;
        }
    }
    // Back substitution.
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut s = b[row].clone();
        for (col, xc) in x.iter().enumerate().skip(row + 1) {
            s = s - a[row][col].clone() * xc.clone();
        }
        x[row] = s / a[row][row].clone();
    }
    Some(x)
}

/// Solves a symmetric cyclic tridiagonal system. `diag[i]` is the diagonal,
/// `off[i]` couples unknowns i and i+1 (indices mod n, so `off[n-1]` is the
/// corner term coupling unknowns n-1 and 0). Uses the Sherman–Morrison
/// correction on top of the Thomas algorithm.
pub fn solve_cyclic_tridiag<T: Scalar>(diag: &[T], off: &[T], rhs: &[T]) -> Option<Vec<T>> {
    let n = diag.len();
    assert!(n >= 3);
    assert_eq!(off.len(), n);
    assert_eq!(rhs.len(), n);
    let corner = off[n - 1].clone();
    // A = B + gamma u u^T with u = e_0 + (corner/gamma) e_{n-1}; choose
    // gamma = -diag[0] to keep B's first pivot well-scaled.
    let gamma = -diag[0].clone();
    if gamma.is_zero() {
        return None;
    }
    let mut d = diag.to_vec();
    d[0] = d[0].clone() - gamma.clone();
    d[n - 1] = d[n - 1].clone() - corner.clone() * corner.clone() / gamma.clone();

    let thomas = |d: &[T], rhs: &[T]| -> Option<Vec<T>> {
        let mut c = vec![T::zero(); n];
        let mut x = vec![T::zero(); n];
        let denom = d[0].clone();
        if denom.is_zero() {
            return None;
        }
        c[0] = off[0].clone() / denom.clone();
        x[0] = rhs[0].clone() / denom;
        for i in 1..n {
            let denom_i = d[i].clone()
                - off[i - 1].clone() * c[i - 1].clone();
            if denom_i.is_zero() {
                return None;
            }
            if i < n - 1 {
                c[i] = off[i].clone() / denom_i.clone();
            }
            x[i] = (rhs[i].clone() - off[i - 1].clone() * x[i - 1].clone()) / denom_i;
        }
        for i in (0..n - 1).rev() {
            x[i] = x[i].clone() - c[i].clone() * x[i + 1].clone();
        }
        Some(x)
    };

    let y = thomas(&d, rhs)?;
    let mut u = vec![T::zero(); n];
    u[0] = T::one();
    u[n - 1] = corner / gamma.clone();
    let q = thomas(&d, &u)?;
    // x = y - q * (u . y) * gamma / (1 + gamma (u . q)).
    let dot = |a: &[T], b: &[T]| {
        a.iter()
            .zip(b)
            .fold(T::zero(), |s, (p, r)| s + p.clone() * r.clone())
    };
    let uy = dot(&u, &y);
    let uq = dot(&u, &q);
    let denom = T::one() + gamma.clone() * uq;
    if denom.is_zero() {
        return None;
    }
    let factor = gamma * uy / denom;
    Some(
        y.into_iter()
            .zip(q)
            .map(|(yi, qi)| yi - qi * factor.clone())
            .collect(),
    )
}

/// Least squares solution of an overdetermined system via normal equations.
/// Rows of `a` are the design matrix, `b` the observations.
pub fn solve_lstsq<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let m = a.len();
    assert_eq!(b.len(), m);
    let n = a[0].len();
    let mut ata = vec![vec![T::zero(); n]; n];
    let mut atb = vec![T::zero(); n];
    for (row, bi) in a.iter().zip(b) {
        for i in 0..n {
            for j in 0..n {
                ata[i][j] = ata[i][j].clone() + row[i].clone() * row[j].clone();
            }
            atb[i] = atb[i].clone() + row[i].clone() * bi.clone();
        }
    }
    solve_dense(&mut ata, &mut atb)
}
