//! Exact integer and rational matrix routines on small dense matrices.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type QMatrix = Vec<Vec<BigRational>>;
pub type ZMatrix = Vec<Vec<BigInt>>;

pub fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn to_q_matrix(dim: usize, entries: &[i64]) -> QMatrix {
    (0..dim).map(|i| (0..dim).map(|j| q(entries[i * dim + j])).collect()).collect()
}

/// Leading principal minors `D_1..D_n` via fraction-free elimination.
/// Stops early at the first nonpositive minor and returns what it has.
pub fn leading_minors(dim: usize, entries: &[i64]) -> Vec<BigInt> {
    let mut a: ZMatrix = (0..dim).map(|i| (0..dim).map(|j| BigInt::from(entries[i * dim + j])).collect()).collect();
    let mut out = Vec::with_capacity(dim);
    let mut prev = BigInt::one();
    for k in 0..dim {
        let pivot = a[k][k].clone();
        out.push(pivot.clone());
        if pivot.is_zero() {
            break;
        }
        for i in k + 1..dim {
            for j in k + 1..dim {
                let v = (&a[i][j] * &pivot - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = pivot;
    }
    out
}

/// Determinant by fraction-free Gaussian elimination with row pivoting.
pub fn det_bigint(rows: &ZMatrix) -> BigInt {
    let n = rows.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a = rows.clone();
    let mut prev = BigInt::one();
    let mut sign = BigInt::one();
    for k in 0..n {
        let Some(p) = (k..n).find(|&i| !a[i][k].is_zero()) else {
            return BigInt::zero();
        };
        if p != k {
            a.swap(p, k);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
            }
            a[i][k] = BigInt::zero();
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

/// Inverse of a nonsingular rational matrix by Gauss-Jordan elimination.
pub fn inverse(a: &QMatrix) -> Option<QMatrix> {
    let n = a.len();
    let mut m: QMatrix = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { q(1) } else { q(0) }));
            r
        })
        .collect();
    for col in 0..n {
        let p = (col..n).find(|&i| !m[i][col].is_zero())?;
        m.swap(p, col);
        let inv = m[col][col].recip();
        for x in m[col].iter_mut() {
            *x = &*x * &inv;
        }
        for i in 0..n {
            if i != col && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for j in 0..2 * n {
                    let v = &m[col][j] * &f;
                    m[i][j] -= v;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// `A = L D L^T` with `L` unit lower triangular; `None` if a pivot vanishes.
pub fn ldl(a: &QMatrix) -> Option<(QMatrix, Vec<BigRational>)> {
    let n = a.len();
    let mut l = vec![vec![q(0); n]; n];
    let mut d = vec![q(0); n];
    for j in 0..n {
        let mut dj = a[j][j].clone();
        for k in 0..j {
            dj -= &l[j][k] * &l[j][k] * &d[k];
        }
        if dj.is_zero() {
            return None;
        }
        l[j][j] = q(1);
        for i in j + 1..n {
            let mut s = a[i][j].clone();
            for k in 0..j {
                s -= &l[i][k] * &l[j][k] * &d[k];
            }
            l[i][j] = s / &dj;
        }
        d[j] = dj;
    }
    Some((l, d))
}

/// Row echelon form over the integers by unimodular row operations.
/// Returns the echelon matrix and the transform `T` with `T * rows = echelon`.
pub fn integer_echelon(rows: &ZMatrix) -> (ZMatrix, ZMatrix) {
    let n = rows.len();
    let cols = rows.first().map_or(0, |r| r.len());
    let mut a = rows.clone();
    let mut t: ZMatrix = (0..n).map(|i| (0..n).map(|j| BigInt::from((i == j) as i64)).collect()).collect();
    let mut r = 0;
    for c in 0..cols {
        if r == n {
            break;
        }
        loop {
            // Bring the smallest nonzero entry of column c (rows r..) to row r.
            let best = (r..n).filter(|&i| !a[i][c].is_zero()).min_by(|&i, &j| a[i][c].abs().cmp(&a[j][c].abs()));
            let Some(best) = best else { break };
            a.swap(r, best);
            t.swap(r, best);
            let mut done = true;
            for i in r + 1..n {
                if a[i][c].is_zero() {
                    continue;
                }
                let f = a[i][c].div_floor(&a[r][c]);
                for j in 0..cols {
                    let v = &f * &a[r][j];
                    a[i][j] -= v;
                }
                for j in 0..n {
                    let v = &f * &t[r][j];
                    t[i][j] -= v;
                }
                if !a[i][c].is_zero() {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        if !a[r][c].is_zero() {
            if a[r][c].is_negative() {
                for x in a[r].iter_mut() {
                    *x = -&*x;
                }
                for x in t[r].iter_mut() {
                    *x = -&*x;
                }
            }
            r += 1;
        }
    }
    (a, t)
}

/// Z-basis of the lattice spanned by integer row vectors.
pub fn lattice_basis(rows: &ZMatrix) -> ZMatrix {
    let (e, _) = integer_echelon(rows);
    e.into_iter().filter(|r| r.iter().any(|x| !x.is_zero())).collect()
}

/// Z-basis of `{x in Z^m : M x = 0}` for an integer matrix `M` with `m` columns.
pub fn integer_kernel(m_rows: &ZMatrix, m: usize) -> ZMatrix {
    if m_rows.is_empty() {
        return (0..m).map(|i| (0..m).map(|j| BigInt::from((i == j) as i64)).collect()).collect();
    }
    let transposed: ZMatrix = (0..m).map(|j| m_rows.iter().map(|r| r[j].clone()).collect()).collect();
    let (e, t) = integer_echelon(&transposed);
    e.iter().zip(t).filter(|(row, _)| row.iter().all(|x| x.is_zero())).map(|(_, tr)| tr).collect()
}

pub fn round_rational(x: &BigRational) -> BigInt {
    (x + BigRational::new(BigInt::one(), BigInt::from(2))).floor().to_integer()
}

/// LLL reduction of a positive definite integral Gram matrix.
///
/// Returns `(reduced, u)` with `reduced = u^T * gram * u` and `u` unimodular
/// (columns of `u` are the new basis vectors).
pub fn lll_gram(dim: usize, gram: &[i64], delta: (i64, i64)) -> (Vec<i64>, Vec<i64>) {
    let n = dim;
    let delta = BigRational::new(BigInt::from(delta.0), BigInt::from(delta.1));
    let mut g: ZMatrix = (0..n).map(|i| (0..n).map(|j| BigInt::from(gram[i * n + j])).collect()).collect();
    // u[i] is the i-th basis vector in original coordinates.
    let mut u: ZMatrix = (0..n).map(|i| (0..n).map(|j| BigInt::from((i == j) as i64)).collect()).collect();
    let mut mu = vec![vec![q(0); n]; n];
    let mut b = vec![q(0); n];
    let gso = |g: &ZMatrix, mu: &mut Vec<Vec<BigRational>>, b: &mut Vec<BigRational>, k: usize| {
        for j in 0..k {
            let mut s = BigRational::from_integer(g[k][j].clone());
            for i in 0..j {
                s -= &mu[j][i] * &mu[k][i] * &b[i];
            }
            mu[k][j] = s / &b[j];
        }
        let mut s = BigRational::from_integer(g[k][k].clone());
        for j in 0..k {
            s -= &mu[k][j] * &mu[k][j] * &b[j];
        }
        b[k] = s;
    };
    for k in 0..n {
        gso(&g, &mut mu, &mut b, k);
    }
    // b_k <- b_k - f * b_j
    let reduce = |g: &mut ZMatrix, u: &mut ZMatrix, mu: &mut Vec<Vec<BigRational>>, k: usize, j: usize, f: &BigInt| {
        let fq = BigRational::from_integer(f.clone());
        let gjj = g[j][j].clone();
        let gkj = g[k][j].clone();
        g[k][k] = &g[k][k] - BigInt::from(2) * f * &gkj + f * f * &gjj;
        for l in 0..n {
            if l != k {
                let v = &g[k][l] - f * &g[j][l];
                g[k][l] = v.clone();
                g[l][k] = v;
            }
        }
        for c in 0..n {
            let v = f * &u[j][c];
            u[k][c] -= v;
        }
        for i in 0..j {
            let v = &fq * &mu[j][i];
            mu[k][i] -= v;
        }
        mu[k][j] -= fq;
    };
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut k = 1;
    while k < n {
        if mu[k][k - 1].abs() > half {
            let f = round_rational(&mu[k][k - 1]);
            reduce(&mut g, &mut u, &mut mu, k, k - 1, &f);
        }
        let lhs = b[k].clone();
        let rhs = (&delta - &mu[k][k - 1] * &mu[k][k - 1]) * &b[k - 1];
        if lhs < rhs {
            u.swap(k, k - 1);
            g.swap(k, k - 1);
            for row in g.iter_mut() {
                row.swap(k, k - 1);
            }
            let m = mu[k][k - 1].clone();
            let bnew = &b[k] + &m * &m * &b[k - 1];
            mu[k][k - 1] = &m * &b[k - 1] / &bnew;
            b[k] = &b[k - 1] * &b[k] / &bnew;
            b[k - 1] = bnew;
            for j in 0..k - 1 {
                let t = mu[k][j].clone();
                mu[k][j] = mu[k - 1][j].clone();
                mu[k - 1][j] = t;
            }
            for i in k + 1..n {
                let t = mu[i][k].clone();
                mu[i][k] = &mu[i][k - 1] - &m * &t;
                mu[i][k - 1] = &t + &mu[k][k - 1] * &mu[i][k];
            }
            k = k.saturating_sub(1).max(1);
        } else {
            for j in (0..k.saturating_sub(1)).rev() {
                if mu[k][j].abs() > half {
                    let f = round_rational(&mu[k][j]);
                    reduce(&mut g, &mut u, &mut mu, k, j, &f);
                }
            }
            k += 1;
        }
    }
    let reduced = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| g[i][j].to_i64().expect("reduced Gram entry fits i64"))
        .collect();
    // Transpose so that columns are basis vectors.
    let umat = (0..n)
        .flat_map(|r| (0..n).map(move |c| (r, c)))
        .map(|(r, c)| u[c][r].to_i64().expect("transform entry fits i64"))
        .collect();
    (reduced, umat)
}

/// `P^T A P` for square integer matrices stored row-major.
pub fn congruence(dim: usize, a: &[i64], p: &[i64], cols: usize) -> Vec<i64> {
    let mut ap = vec![0i64; dim * cols];
    for i in 0..dim {
        for j in 0..cols {
            let mut s = 0i64;
            for k in 0..dim {
                s += a[i * dim + k] * p[k * cols + j];
            }
            ap[i * cols + j] = s;
        }
    }
    let mut out = vec![0i64; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut s = 0i64;
            for k in 0..dim {
                s += p[k * cols + i] * ap[k * cols + j];
            }
            out[i * cols + j] = s;
        }
    }
    out
}
