//! Small dense linear-algebra kernel.
//!
//! Everything here is sized for the plant dimensions this crate works with
//! (n <= 8), so the implementations favour robustness and determinism over
//! asymptotics: partial-pivot LU, cyclic Jacobi for symmetric problems and a
//! Hessenberg + double-shift QR iteration for general spectra.

use num_complex::Complex64;
use thiserror::Error;

/// Relative threshold below which a Jacobi off-diagonal is considered zero.
pub const JACOBI_TOL: f64 = 1e-12;
/// Cyclic Jacobi sweep cap; n <= 8 converges in a handful of sweeps.
pub const JACOBI_MAX_SWEEPS: usize = 50;
/// QR iterations allowed per deflated eigenvalue.
pub const QR_ITERS_PER_EIG: usize = 30;
/// Largest matrix order the general eigensolver accepts.
pub const EIG_MAX_N: usize = 8;
/// Pivot magnitude (relative to the largest entry) treated as singular.
pub const PIVOT_TOL: f64 = 1e-12;
/// Real parts strictly below this bound count as "stable" for Hurwitz tests.
pub const HURWITZ_MARGIN: f64 = -1e-12;
/// Residual allowance for a Lyapunov solve, relative to max |S|.
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("matrix entry is not finite ({context})")]
    NonFinite { context: &'static str },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("lyapunov: A not Hurwitz")]
    NotHurwitz,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("singular matrix in {0}")]
    Singular(String),
    #[error("eigenvalue iteration failed to converge ({converged} of {n} deflated)")]
    EigNoConvergence { converged: usize, n: usize },
    #[error("matrix order {n} exceeds supported maximum {max}")]
    TooLarge { n: usize, max: usize },
}

/// Dense row-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumError> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(NumError::Dimension("empty matrix".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumError::Dimension("ragged rows".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { context: "from_rows" });
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        for a in out.data.iter_mut() {
            *a *= c;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Largest |m_ij - m_ji|; zero for exactly symmetric matrices.
    pub fn asymmetry(&self) -> f64 {
        assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl std::ops::Index<(usize, usize)> for RealMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RealMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Solve `m x = rhs` by LU with partial pivoting.
pub fn solve_real(m: &RealMatrix, rhs: &[f64]) -> Result<Vec<f64>, NumError> {
    if !m.is_square() || m.nrows() != rhs.len() {
        return Err(NumError::Dimension(format!(
            "solve_real: {}x{} with rhs {}",
            m.nrows(),
            m.ncols(),
            rhs.len()
        )));
    }
    let n = m.nrows();
    let mut a = m.clone();
    let mut b = rhs.to_vec();
    let scale = a.max_abs().max(1e-300);
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[(r, col)].abs() > a[(piv, col)].abs() {
                piv = r;
            }
        }
        if a[(piv, col)].abs() < PIVOT_TOL * scale {
            return Err(NumError::Singular("solve_real".into()));
        }
        if piv != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = tmp;
            }
            b.swap(col, piv);
        }
        let d = a[(col, col)];
        for r in (col + 1)..n {
            let f = a[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                let v = a[(col, j)];
                a[(r, j)] -= f * v;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= a[(i, j)] * x[j];
        }
        x[i] = s / a[(i, i)];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NumError::NonFinite { context: "solve_real" });
    }
    Ok(x)
}

/// Solve a complex system `a x = rhs` (row-major `a`, order `n`) by Gaussian
/// elimination with partial pivoting on the modulus.
pub fn solve_complex(
    n: usize,
    a: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<Complex64>, NumError> {
    if a.len() != n * n || rhs.len() != n {
        return Err(NumError::Dimension("solve_complex".into()));
    }
    let mut m = a.to_vec();
    let mut b = rhs.to_vec();
    let scale = m.iter().fold(0.0f64, |acc, z| acc.max(z.norm())).max(1e-300);
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if m[r * n + col].norm() > m[piv * n + col].norm() {
                piv = r;
            }
        }
        if m[piv * n + col].norm() < PIVOT_TOL * scale {
            return Err(NumError::Singular("solve_complex".into()));
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in (col + 1)..n {
            let f = m[r * n + col] / d;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in col..n {
                let v = m[col * n + j];
                m[r * n + j] -= f * v;
            }
            let bc = b[col];
            b[r] -= f * bc;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= m[i * n + j] * x[j];
        }
        x[i] = s / m[i * n + i];
    }
    Ok(x)
}

/// Eigenvalues of a square real matrix, sorted by (re, im).
///
/// Householder reduction to Hessenberg form followed by the classic
/// double-shift QR iteration with 2x2 deflation. Complex eigenvalues are
/// produced as exact conjugate pairs.
pub fn eig_general(m: &RealMatrix) -> Result<Vec<Complex64>, NumError> {
    if !m.is_square() {
        return Err(NumError::Dimension("eig_general: not square".into()));
    }
    let n = m.nrows();
    if n > EIG_MAX_N {
        return Err(NumError::TooLarge { n, max: EIG_MAX_N });
    }
    if !m.is_finite() {
        return Err(NumError::NonFinite { context: "eig_general" });
    }
    if n == 1 {
        return Ok(vec![Complex64::new(m[(0, 0)], 0.0)]);
    }
    let mut h = hessenberg(m);
    let eigs = hqr(&mut h, n)?;
    let mut sorted = eigs;
    sorted.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    Ok(sorted)
}

/// Householder reduction to upper Hessenberg form (eigenvalues preserved).
fn hessenberg(m: &RealMatrix) -> RealMatrix {
    let n = m.nrows();
    let mut a = m.clone();
    for k in 0..n.saturating_sub(2) {
        let mut alpha = 0.0f64;
        for i in (k + 1)..n {
            alpha += a[(i, k)] * a[(i, k)];
        }
        alpha = alpha.sqrt();
        if alpha == 0.0 {
            continue;
        }
        if a[(k + 1, k)] > 0.0 {
            alpha = -alpha;
        }
        let mut v = vec![0.0; n];
        v[k + 1] = a[(k + 1, k)] - alpha;
        for i in (k + 2)..n {
            v[i] = a[(i, k)];
        }
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // A <- P A P with P = I - 2 v v^T / (v^T v)
        for j in 0..n {
            let mut dot = 0.0;
            for i in (k + 1)..n {
                dot += v[i] * a[(i, j)];
            }
            let f = 2.0 * dot / vnorm2;
            for i in (k + 1)..n {
                a[(i, j)] -= f * v[i];
            }
        }
        for i in 0..n {
            let mut dot = 0.0;
            for j in (k + 1)..n {
                dot += a[(i, j)] * v[j];
            }
            let f = 2.0 * dot / vnorm2;
            for j in (k + 1)..n {
                a[(i, j)] -= f * v[j];
            }
        }
        a[(k + 1, k)] = alpha;
        for i in (k + 2)..n {
            a[(i, k)] = 0.0;
        }
    }
    a
}

/// Double-shift QR eigenvalue iteration on an upper Hessenberg matrix.
fn hqr(a: &mut RealMatrix, n: usize) -> Result<Vec<Complex64>, NumError> {
    let mut eigs: Vec<Complex64> = Vec::with_capacity(n);
    let mut anorm = 0.0f64;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    if anorm == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }
    let mut t = 0.0f64;
    let mut nn = n as isize - 1;
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            // Locate a negligible subdiagonal element.
            let mut l = nn;
            while l >= 1 {
                let s = a[(l as usize - 1, l as usize - 1)].abs()
                    + a[(l as usize, l as usize)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if a[(l as usize, l as usize - 1)].abs() + s == s {
                    a[(l as usize, l as usize - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let x = a[(nn as usize, nn as usize)];
            if l == nn {
                eigs.push(Complex64::new(x + t, 0.0));
                nn -= 1;
                break;
            }
            let y = a[(nn as usize - 1, nn as usize - 1)];
            let w = a[(nn as usize, nn as usize - 1)] * a[(nn as usize - 1, nn as usize)];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                let xx = x + t;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    let e1 = xx + z;
                    let e2 = if z != 0.0 { xx - w / z } else { e1 };
                    eigs.push(Complex64::new(e1, 0.0));
                    eigs.push(Complex64::new(e2, 0.0));
                } else {
                    eigs.push(Complex64::new(xx + p, z));
                    eigs.push(Complex64::new(xx + p, -z));
                }
                nn -= 2;
                break;
            }
            if its == QR_ITERS_PER_EIG {
                return Err(NumError::EigNoConvergence { converged: eigs.len(), n });
            }
            let (mut xs, mut ys, mut ws) = (x, y, w);
            if its == 10 || its == 20 {
                // Exceptional shift.
                t += x;
                for i in 0..=nn as usize {
                    a[(i, i)] -= x;
                }
                let s = a[(nn as usize, nn as usize - 1)].abs()
                    + a[(nn as usize - 1, nn as usize - 2)].abs();
                xs = 0.75 * s;
                ys = xs;
                ws = -0.4375 * s * s;
            }
            its += 1;
            // Find starting row m of the double QR step.
            let mut mrow = nn - 2;
            let (mut p, mut q, mut r) = (0.0f64, 0.0f64, 0.0f64);
            while mrow >= l {
                let mu = mrow as usize;
                let z = a[(mu, mu)];
                let rr = xs - z;
                let ss = ys - z;
                p = (rr * ss - ws) / a[(mu + 1, mu)] + a[(mu, mu + 1)];
                q = a[(mu + 1, mu + 1)] - z - rr - ss;
                r = a[(mu + 2, mu + 1)];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if mrow == l {
                    break;
                }
                let u = a[(mu, mu - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs()
                    * (a[(mu - 1, mu - 1)].abs() + z.abs() + a[(mu + 1, mu + 1)].abs());
                if u + v == v {
                    break;
                }
                mrow -= 1;
            }
            let m = mrow.max(l) as usize;
            let nnu = nn as usize;
            for i in (m + 2)..=nnu {
                a[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    a[(i, i - 3)] = 0.0;
                }
            }
            // Bulge chase over rows m..nn-1.
            for k in m..nnu {
                let mut xsum = 0.0;
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k + 2 <= nnu { a[(k + 2, k - 1)] } else { 0.0 };
                    xsum = p.abs() + q.abs() + r.abs();
                    if xsum != 0.0 {
                        p /= xsum;
                        q /= xsum;
                        r /= xsum;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l as usize != m {
                        a[(k, k - 1)] = -a[(k, k - 1)];
                    }
                } else {
                    a[(k, k - 1)] = -s * xsum;
                }
                p += s;
                let xh = p / s;
                let yh = q / s;
                let zh = r / s;
                q /= p;
                r /= p;
                for j in k..=nnu {
                    let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                    if k + 2 <= nnu {
                        pp += r * a[(k + 2, j)];
                    }
                    if k + 2 <= nnu {
                        a[(k + 2, j)] -= pp * zh;
                    }
                    a[(k + 1, j)] -= pp * yh;
                    a[(k, j)] -= pp * xh;
                }
                let imax = nnu.min(k + 3);
                for i in (l as usize)..=imax {
                    let mut pp = xh * a[(i, k)] + yh * a[(i, k + 1)];
                    if k + 2 <= nnu {
                        pp += zh * a[(i, k + 2)];
                    }
                    if k + 2 <= nnu {
                        a[(i, k + 2)] -= pp * r;
                    }
                    a[(i, k + 1)] -= pp * q;
                    a[(i, k)] -= pp;
                }
            }
        }
    }
    Ok(eigs)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn eig_sym(m: &RealMatrix) -> Result<Vec<f64>, NumError> {
    eig_sym_with_vectors(m).map(|(vals, _)| vals)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues ascending and the orthogonal matrix whose columns are
/// the matching eigenvectors.
pub fn eig_sym_with_vectors(m: &RealMatrix) -> Result<(Vec<f64>, RealMatrix), NumError> {
    if !m.is_square() {
        return Err(NumError::Dimension("eig_sym: not square".into()));
    }
    if !m.is_finite() {
        return Err(NumError::NonFinite { context: "eig_sym" });
    }
    let n = m.nrows();
    let scale = m.max_abs().max(1e-300);
    if m.asymmetry() > 1e-12 * scale.max(1.0) * 100.0 {
        return Err(NumError::NotSymmetric);
    }
    let mut a = m.clone();
    // Exact symmetrization so rotations preserve symmetry bit-for-bit.
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = RealMatrix::identity(n);
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(a[(i, j)].abs());
            }
        }
        if off <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= JACOBI_TOL * scale * 1e-4 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let vecs = RealMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((vals, vecs))
}

/// True iff every eigenvalue of `m` has real part below [`HURWITZ_MARGIN`].
pub fn hurwitz_check(m: &RealMatrix) -> Result<bool, NumError> {
    let eigs = eig_general(m)?;
    Ok(eigs.iter().all(|l| l.re < HURWITZ_MARGIN))
}

/// Solve `P A + A^T P = -S` for symmetric positive-definite `P`.
///
/// The equation is vectorized through the Kronecker identity into an
/// n^2 x n^2 linear system and solved with partial pivoting; the result is
/// symmetrized, residual-checked and verified positive definite.
pub fn solve_lyapunov(a: &RealMatrix, s: &RealMatrix) -> Result<RealMatrix, NumError> {
    if !a.is_square() || !s.is_square() || a.nrows() != s.nrows() {
        return Err(NumError::Dimension("solve_lyapunov".into()));
    }
    let n = a.nrows();
    let s_scale = s.max_abs().max(1e-300);
    if s.asymmetry() > 1e-12 * s_scale {
        return Err(NumError::NotSymmetric);
    }
    let s_eigs = eig_sym(s)?;
    if s_eigs[0] <= 0.0 {
        return Err(NumError::NotPositiveDefinite);
    }
    if !hurwitz_check(a)? {
        return Err(NumError::NotHurwitz);
    }
    // Unknown p = vec(P) with P[i][j] = p[i*n+j].
    // (P A)[i][j] = sum_k P[i][k] A[k][j]   -> coefficient A[k][j] at (i,k)
    // (A^T P)[i][j] = sum_k A[k][i] P[k][j] -> coefficient A[k][i] at (k,j)
    let nn = n * n;
    let mut big = RealMatrix::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                big[(row, i * n + k)] += a[(k, j)];
                big[(row, k * n + j)] += a[(k, i)];
            }
        }
    }
    let rhs: Vec<f64> = (0..nn).map(|idx| -s[(idx / n, idx % n)]).collect();
    let p_vec = solve_real(&big, &rhs)?;
    let mut p = RealMatrix::from_fn(n, n, |i, j| p_vec[i * n + j]);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = avg;
            p[(j, i)] = avg;
        }
    }
    let residual = p
        .matmul(a)
        .add(&a.transpose().matmul(&p))
        .add(s)
        .max_abs();
    if residual > LYAPUNOV_RESIDUAL_TOL * s_scale {
        return Err(NumError::Singular(format!(
            "lyapunov residual {residual:.3e} exceeds tolerance"
        )));
    }
    let p_eigs = eig_sym(&p)?;
    if p_eigs[0] <= 0.0 {
        return Err(NumError::NotPositiveDefinite);
    }
    Ok(p)
}

/// Evaluate the characteristic polynomial det(M - z I); test support for the
/// eigensolvers.
pub fn char_poly_at(m: &RealMatrix, z: Complex64) -> Complex64 {
    let n = m.nrows();
    let mut a: Vec<Complex64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut v = Complex64::new(m[(i, j)], 0.0);
            if i == j {
                v -= z;
            }
            a.push(v);
        }
    }
    // Determinant by elimination with partial pivoting.
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r * n + col].norm() > a[piv * n + col].norm() {
                piv = r;
            }
        }
        if a[piv * n + col].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            det = -det;
        }
        let d = a[col * n + col];
        det *= d;
        for r in (col + 1)..n {
            let f = a[r * n + col] / d;
            for j in col..n {
                let v = a[col * n + j];
                a[r * n + j] -= f * v;
            }
        }
    }
    det
}
