//! Dense linear algebra helpers shared by the fitting and selection code:
//! orthonormal null-space complements, SPD factorizations with log
//! determinants, and symmetric eigendecompositions.

use crate::error::{Result, SpecdenError};
use ndarray::{Array1, Array2};
use ndarray_linalg::{Cholesky, Diag, Eigh, SolveTriangular, UPLO};

/// Orthonormal basis of the orthogonal complement of the column span of `s`
/// (an n x m full-column-rank matrix, m < n), computed from Householder
/// reflectors. The result `q2` satisfies `s' q2 = 0` and `q2' q2 = I`.
pub fn null_complement(s: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, m) = s.dim();
    if m >= n {
        return Err(SpecdenError::DimensionMismatch(format!(
            "null-space basis is {n}x{m}; need more rows than columns"
        )));
    }
    let mut a = s.clone();
    // reflectors: (v, tau) with H = I - tau v v', v[0..j] = 0
    let mut reflectors: Vec<(Array1<f64>, f64)> = Vec::with_capacity(m);
    for jcol in 0..m {
        let mut v = Array1::<f64>::zeros(n);
        let mut norm2 = 0.0;
        for i in jcol..n {
            let x = a[[i, jcol]];
            v[i] = x;
            norm2 += x * x;
        }
        let norm = norm2.sqrt();
        if norm <= 1e-300 {
            return Err(SpecdenError::Linalg(
                "singular null-space basis in QR".into(),
            ));
        }
        let alpha = if v[jcol] >= 0.0 { -norm } else { norm };
        v[jcol] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let tau = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
        // apply H to remaining columns of a
        for c in jcol..m {
            let mut dot = 0.0;
            for i in jcol..n {
                dot += v[i] * a[[i, c]];
            }
            let scale = tau * dot;
            for i in jcol..n {
                a[[i, c]] -= scale * v[i];
            }
        }
        if jcol + 1 <= m {
            // R diagonal check for rank
            if a[[jcol, jcol]].abs() < 1e-12 * norm.max(1.0) {
                return Err(SpecdenError::Linalg(
                    "rank-deficient null-space basis".into(),
                ));
            }
        }
        reflectors.push((v, tau));
    }
    // q2 = H_0 ... H_{m-1} [e_m .. e_{n-1}]
    let mut q2 = Array2::<f64>::zeros((n, n - m));
    for (col, i) in (m..n).enumerate() {
        q2[[i, col]] = 1.0;
    }
    for (v, tau) in reflectors.iter().rev() {
        for c in 0..(n - m) {
            let mut dot = 0.0;
            for i in 0..n {
                dot += v[i] * q2[[i, c]];
            }
            let scale = tau * dot;
            for i in 0..n {
                q2[[i, c]] -= scale * v[i];
            }
        }
    }
    Ok(q2)
}

/// Cholesky factor of a symmetric positive definite matrix, with triangular
/// solves and the log determinant.
pub struct SpdFactor {
    l: Array2<f64>,
}

impl SpdFactor {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let l = a
            .cholesky(UPLO::Lower)
            .map_err(|e| SpecdenError::Linalg(format!("Cholesky failed: {e}")))?;
        Ok(SpdFactor { l })
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn solve_vec(&self, b: &Array1<f64>) -> Result<Array1<f64>> {
        let y = self
            .l
            .solve_triangular(UPLO::Lower, Diag::NonUnit, b)
            .map_err(|e| SpecdenError::Linalg(e.to_string()))?;
        let x = self
            .l
            .t()
            .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)
            .map_err(|e| SpecdenError::Linalg(e.to_string()))?;
        Ok(x)
    }

    pub fn solve_mat(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        let y = self
            .l
            .solve_triangular(UPLO::Lower, Diag::NonUnit, b)
            .map_err(|e| SpecdenError::Linalg(e.to_string()))?;
        let x = self
            .l
            .t()
            .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)
            .map_err(|e| SpecdenError::Linalg(e.to_string()))?;
        Ok(x)
    }

    /// Forward half-solve `L^{-1} B`, used for diagonals of inverses via
    /// column norms.
    pub fn half_solve_mat(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        self.l
            .solve_triangular(UPLO::Lower, Diag::NonUnit, b)
            .map_err(|e| SpecdenError::Linalg(e.to_string()))
    }
}

/// Symmetric eigendecomposition (ascending eigenvalues).
pub fn sym_eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    a.eigh(UPLO::Lower)
        .map_err(|e| SpecdenError::Linalg(format!("eigendecomposition failed: {e}")))
}

/// Least squares solution of `s x = b` through the m x m normal equations;
/// meant for the small, well-conditioned null-space designs (m <= 2).
pub fn lstsq_small(s: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let m = s.ncols();
    let sts = s.t().dot(s);
    let stb = s.t().dot(b);
    match m {
        1 => {
            if sts[[0, 0]] <= 0.0 {
                return Err(SpecdenError::Linalg("degenerate 1x1 normal matrix".into()));
            }
            Ok(Array1::from_elem(1, stb[0] / sts[[0, 0]]))
        }
        2 => {
            let det = sts[[0, 0]] * sts[[1, 1]] - sts[[0, 1]] * sts[[1, 0]];
            if det.abs() <= 1e-300 {
                return Err(SpecdenError::Linalg("degenerate 2x2 normal matrix".into()));
            }
            let x0 = (sts[[1, 1]] * stb[0] - sts[[0, 1]] * stb[1]) / det;
            let x1 = (sts[[0, 0]] * stb[1] - sts[[1, 0]] * stb[0]) / det;
            Ok(Array1::from_vec(vec![x0, x1]))
        }
        _ => {
            let fac = SpdFactor::new(&sts)?;
            fac.solve_vec(&stb)
        }
    }
}

/// Solve a symmetric `m x m` system (m <= 2) given as dense arrays.
pub fn solve_small_sym(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    match a.nrows() {
        1 => {
            if a[[0, 0]].abs() <= 1e-300 {
                return Err(SpecdenError::Linalg("singular 1x1 system".into()));
            }
            Ok(Array1::from_elem(1, b[0] / a[[0, 0]]))
        }
        2 => {
            let det = a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[1, 0]];
            if det.abs() <= 1e-300 {
                return Err(SpecdenError::Linalg("singular 2x2 system".into()));
            }
            Ok(Array1::from_vec(vec![
                (a[[1, 1]] * b[0] - a[[0, 1]] * b[1]) / det,
                (a[[0, 0]] * b[1] - a[[1, 0]] * b[0]) / det,
            ]))
        }
        _ => {
            let fac = SpdFactor::new(a)?;
            fac.solve_vec(b)
        }
    }
}

/// Log determinant of a small symmetric positive definite matrix (m <= 2).
pub fn ln_det_small(a: &Array2<f64>) -> Result<f64> {
    match a.nrows() {
        1 => {
            if a[[0, 0]] <= 0.0 {
                return Err(SpecdenError::Linalg("non-positive 1x1 determinant".into()));
            }
            Ok(a[[0, 0]].ln())
        }
        2 => {
            let det = a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[1, 0]];
            if det <= 0.0 {
                return Err(SpecdenError::Linalg("non-positive 2x2 determinant".into()));
            }
            Ok(det.ln())
        }
        _ => Ok(SpdFactor::new(a)?.ln_det()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn null_complement_of_ones() {
        let n = 9;
        let s = Array2::from_elem((n, 1), 1.0);
        let q2 = null_complement(&s).unwrap();
        assert_eq!(q2.dim(), (n, n - 1));
        let stq = s.t().dot(&q2);
        for v in stq.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        let qtq = q2.t().dot(&q2);
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(qtq[[i, j]], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn null_complement_of_two_columns() {
        let n = 12;
        let mut s = Array2::zeros((n, 2));
        for i in 0..n {
            s[[i, 0]] = 1.0;
            s[[i, 1]] = i as f64 / (n as f64 - 1.0) - 0.5;
        }
        let q2 = null_complement(&s).unwrap();
        assert_eq!(q2.dim(), (n, n - 2));
        let stq = s.t().dot(&q2);
        for v in stq.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
        let qtq = q2.t().dot(&q2);
        for i in 0..n - 2 {
            for j in 0..n - 2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(qtq[[i, j]], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn null_complement_rejects_rank_deficiency() {
        let mut s = Array2::zeros((6, 2));
        for i in 0..6 {
            s[[i, 0]] = 1.0;
            s[[i, 1]] = 2.0; // collinear with column 0
        }
        assert!(null_complement(&s).is_err());
    }

    #[test]
    fn spd_factor_solves_and_ln_det() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let fac = SpdFactor::new(&a).unwrap();
        let b = array![1.0, 2.0, 3.0];
        let x = fac.solve_vec(&b).unwrap();
        let back = a.dot(&x);
        for (u, v) in back.iter().zip(b.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
        // determinant by cofactor expansion
        let det: f64 = 4.0 * (3.0 * 2.0 - 0.04) - 1.0 * (2.0 - 0.1) + 0.5 * (0.2 - 1.5);
        assert_abs_diff_eq!(fac.ln_det(), det.ln(), epsilon = 1e-12);
    }

    #[test]
    fn lstsq_small_recovers_exact_solution() {
        let mut s = Array2::zeros((8, 2));
        for i in 0..8 {
            s[[i, 0]] = 1.0;
            s[[i, 1]] = i as f64;
        }
        let truth = array![2.5, -0.75];
        let b = s.dot(&truth);
        let x = lstsq_small(&s, &b).unwrap();
        assert_abs_diff_eq!(x[0], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], -0.75, epsilon = 1e-12);
    }
}
