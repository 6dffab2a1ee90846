//! Reproducing kernels of the periodic spline and SS ANOVA model spaces.
//!
//! The log-spectrum of a stationary series lives in a periodic spline space
//! whose non-constant part has reproducing kernel `r1`. The time-varying
//! log-spectrum decomposes into frequency and time main effects plus
//! interactions, with kernels `r1`..`r4` built from scaled Bernoulli
//! polynomials `b2` and `b4`.

use crate::error::{Result, SpecdenError};
use ndarray::Array2;

/// Scaled Bernoulli polynomial of order 2: `(u - 0.5)^2 - 1/12`.
pub fn b2(u: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&u), "b2 argument outside [0,1]: {u}");
    let s = u - 0.5;
    s * s - 1.0 / 12.0
}

/// Scaled Bernoulli polynomial of order 4: `(u - 0.5)^4 - (u - 0.5)^2/2 + 7/240`.
pub fn b4(u: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&u), "b4 argument outside [0,1]: {u}");
    let s = u - 0.5;
    let s2 = s * s;
    s2 * s2 - s2 / 2.0 + 7.0 / 240.0
}

/// Fractional part mapping into `[0, 1)`; exact integers map to 0.
#[inline]
pub fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Periodic spline kernel on the circle: `-B4(frac(w1 - w2)) / 24`.
#[inline]
pub fn r1(w1: f64, w2: f64) -> f64 {
    -b4(frac(w1 - w2)) / 24.0
}

/// Kernel of the smooth time main effect:
/// `B2(u1) B2(u2) / 4 - B4(frac(u1 - u2)) / 24`.
#[inline]
pub fn r2(u1: f64, u2: f64) -> f64 {
    b2(u1) * b2(u2) / 4.0 - b4(frac(u1 - u2)) / 24.0
}

/// Kernel of the frequency-by-linear-time interaction.
#[inline]
pub fn r3(g1: (f64, f64), g2: (f64, f64)) -> f64 {
    r1(g1.0, g2.0) * (g1.1 - 0.5) * (g2.1 - 0.5)
}

/// Kernel of the smooth-by-smooth interaction.
#[inline]
pub fn r4(g1: (f64, f64), g2: (f64, f64)) -> f64 {
    r1(g1.0, g2.0) * r2(g1.1, g2.1)
}

/// Combined SS ANOVA kernel `sum_r theta_r R_r`.
#[inline]
pub fn r_theta(g1: (f64, f64), g2: (f64, f64), theta: &[f64; 4]) -> f64 {
    let rw = r1(g1.0, g2.0);
    let t1 = g1.1 - 0.5;
    let t2 = g2.1 - 0.5;
    theta[0] * rw
        + theta[1] * r2(g1.1, g2.1)
        + theta[2] * rw * t1 * t2
        + theta[3] * rw * r2(g1.1, g2.1)
}

/// Maximum number of points for a dense Gram matrix (about 128 MB of f64).
pub const GRAM_LIMIT: usize = 4096;

/// Points at which a Gram matrix is evaluated, with optional SS ANOVA weights.
#[derive(Debug, Clone)]
pub enum KernelGrid {
    /// Frequencies in `[0,1]`; Gram entries are `R1(w_i, w_j)`.
    Stationary { freqs: Vec<f64> },
    /// Time-frequency pairs with weights `theta`; entries are
    /// `sum_r theta_r R_r(gamma_i, gamma_j)`.
    Ssanova {
        points: Vec<(f64, f64)>,
        theta: [f64; 4],
    },
}

impl KernelGrid {
    pub fn len(&self) -> usize {
        match self {
            KernelGrid::Stationary { freqs } => freqs.len(),
            KernelGrid::Ssanova { points, .. } => points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let check01 = |v: f64, what: &str| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(SpecdenError::InvalidInput(format!(
                    "{what} coordinate {v} outside [0,1]"
                )));
            }
            Ok(())
        };
        match self {
            KernelGrid::Stationary { freqs } => {
                for &w in freqs {
                    check01(w, "frequency")?;
                }
            }
            KernelGrid::Ssanova { points, theta } => {
                for &(w, u) in points {
                    check01(w, "frequency")?;
                    check01(u, "time")?;
                }
                if theta.iter().any(|&t| !(t >= 0.0)) {
                    return Err(SpecdenError::InvalidInput(
                        "theta weights must be nonnegative".into(),
                    ));
                }
            }
        }
        if self.len() > GRAM_LIMIT {
            return Err(SpecdenError::GridLimit(format!(
                "{} points exceeds Gram limit {GRAM_LIMIT}",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Which model space a Gram matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramKind {
    Stationary,
    SsanovaTheta,
}

/// Dense symmetric kernel matrix on a set of points.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    pub entries: Array2<f64>,
    pub kind: GramKind,
}

/// Assemble the full symmetric Gram matrix for a grid.
pub fn gram_matrix(grid: &KernelGrid) -> Result<GramMatrix> {
    grid.validate()?;
    let n = grid.len();
    let mut m = Array2::<f64>::zeros((n, n));
    match grid {
        KernelGrid::Stationary { freqs } => {
            for i in 0..n {
                for j in 0..=i {
                    let v = r1(freqs[i], freqs[j]);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            Ok(GramMatrix {
                entries: m,
                kind: GramKind::Stationary,
            })
        }
        KernelGrid::Ssanova { points, theta } => {
            for i in 0..n {
                for j in 0..=i {
                    let v = r_theta(points[i], points[j], theta);
                    m[[i, j]] = v;
                    m[[j, i]] = v;
                }
            }
            Ok(GramMatrix {
                entries: m,
                kind: GramKind::SsanovaTheta,
            })
        }
    }
}

/// R1 Gram matrix on a frequency list (the stationary `Sigma`).
pub(crate) fn r1_matrix(freqs: &[f64]) -> Array2<f64> {
    let n = freqs.len();
    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = r1(freqs[i], freqs[j]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    m
}

/// The four component kernel matrices on an SS ANOVA point set, in order
/// R1, R2, R3, R4. `Sigma_theta` is their theta-weighted sum.
pub(crate) fn ssanova_kernel_mats(points: &[(f64, f64)]) -> [Array2<f64>; 4] {
    let n = points.len();
    let mut m1 = Array2::<f64>::zeros((n, n));
    let mut m2 = Array2::<f64>::zeros((n, n));
    let mut m3 = Array2::<f64>::zeros((n, n));
    let mut m4 = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let (wi, ui) = points[i];
        for j in 0..=i {
            let (wj, uj) = points[j];
            let rw = r1(wi, wj);
            let rt = r2(ui, uj);
            let lin = (ui - 0.5) * (uj - 0.5);
            m1[[i, j]] = rw;
            m1[[j, i]] = rw;
            m2[[i, j]] = rt;
            m2[[j, i]] = rt;
            m3[[i, j]] = rw * lin;
            m3[[j, i]] = rw * lin;
            m4[[i, j]] = rw * rt;
            m4[[j, i]] = rw * rt;
        }
    }
    [m1, m2, m3, m4]
}

pub(crate) fn sigma_theta(mats: &[Array2<f64>; 4], theta: &[f64; 4]) -> Array2<f64> {
    let mut out = &mats[0] * theta[0];
    for r in 1..4 {
        if theta[r] != 0.0 {
            out.scaled_add(theta[r], &mats[r]);
        }
    }
    out
}

/// Cross-kernel matrix between evaluation points (rows) and data points
/// (columns) for the stationary space.
pub(crate) fn r1_cross(eval: &[f64], data: &[f64]) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((eval.len(), data.len()));
    for (i, &w) in eval.iter().enumerate() {
        for (j, &wj) in data.iter().enumerate() {
            m[[i, j]] = r1(w, wj);
        }
    }
    m
}

/// Cross-kernel matrix for the SS ANOVA space with weights `theta`.
pub(crate) fn ssanova_cross(
    eval: &[(f64, f64)],
    data: &[(f64, f64)],
    theta: &[f64; 4],
) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((eval.len(), data.len()));
    for (i, &gi) in eval.iter().enumerate() {
        for (j, &gj) in data.iter().enumerate() {
            m[[i, j]] = r_theta(gi, gj, theta);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray_linalg::{Eigh, UPLO};

    #[test]
    fn b4_endpoints_and_center() {
        assert_abs_diff_eq!(b4(0.0), -1.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b4(1.0), -1.0 / 30.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b4(0.5), 7.0 / 240.0, epsilon = 1e-15);
    }

    #[test]
    fn b2_center() {
        assert_abs_diff_eq!(b2(0.5), -1.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn r1_diagonal_is_1_over_720() {
        for &w in &[0.0, 0.17, 0.5, 0.99, 1.0] {
            assert_abs_diff_eq!(r1(w, w), 1.0 / 720.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn r1_symmetry_across_half_turn() {
        // frac(+-0.5) both hit B4(0.5)
        assert_abs_diff_eq!(r1(0.2, 0.7), r1(0.7, 0.2), epsilon = 1e-15);
    }

    #[test]
    fn r1_periodic_endpoint() {
        // frac(0 - 1) = 0
        assert_abs_diff_eq!(r1(0.0, 1.0), 1.0 / 720.0, epsilon = 1e-15);
    }

    #[test]
    fn r1_translation_invariant_on_circle() {
        let (w1, w2) = (0.21, 0.83);
        for &d in &[0.1, 0.37, 0.5, 0.93] {
            let a = r1(frac(w1 + d), frac(w2 + d));
            assert_abs_diff_eq!(a, r1(w1, w2), epsilon = 1e-14);
        }
    }

    #[test]
    fn r2_at_center_pair() {
        // B2(0.5)^2/4 - B4(0)/24 = 1/576 + 1/720
        let expect = 1.0 / 576.0 + 1.0 / 720.0;
        assert_abs_diff_eq!(r2(0.5, 0.5), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(expect, 0.0031250, epsilon = 1e-7);
    }

    #[test]
    fn r3_vanishes_at_time_center() {
        for &(w1, w2, u2) in &[(0.1, 0.9, 0.3), (0.4, 0.2, 0.8)] {
            assert_eq!(r3((w1, 0.5), (w2, u2)), 0.0);
        }
    }

    #[test]
    fn r4_is_product_of_r1_and_r2() {
        let g1 = (0.13, 0.71);
        let g2 = (0.58, 0.24);
        assert_abs_diff_eq!(
            r4(g1, g2),
            r1(g1.0, g2.0) * r2(g1.1, g2.1),
            epsilon = 1e-16
        );
    }

    #[test]
    fn kernels_symmetric_in_arguments() {
        let pts = [(0.11, 0.62), (0.47, 0.05), (0.93, 0.93), (0.0, 1.0)];
        for &a in &pts {
            for &b in &pts {
                assert_abs_diff_eq!(r1(a.0, b.0), r1(b.0, a.0), epsilon = 1e-14);
                assert_abs_diff_eq!(r2(a.1, b.1), r2(b.1, a.1), epsilon = 1e-14);
                assert_abs_diff_eq!(r3(a, b), r3(b, a), epsilon = 1e-14);
                assert_abs_diff_eq!(r4(a, b), r4(b, a), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn gram_single_point_stationary() {
        let g = gram_matrix(&KernelGrid::Stationary { freqs: vec![0.3] }).unwrap();
        assert_eq!(g.entries.shape(), &[1, 1]);
        assert_abs_diff_eq!(g.entries[[0, 0]], 1.0 / 720.0, epsilon = 1e-15);
    }

    #[test]
    fn gram_theta_r1_only_depends_on_frequencies() {
        let pts_a = vec![(0.1, 0.2), (0.4, 0.9), (0.7, 0.5)];
        let pts_b = vec![(0.1, 0.8), (0.4, 0.1), (0.7, 0.35)]; // same freqs, other times
        let theta = [1.0, 0.0, 0.0, 0.0];
        let ga = gram_matrix(&KernelGrid::Ssanova {
            points: pts_a,
            theta,
        })
        .unwrap();
        let gb = gram_matrix(&KernelGrid::Ssanova {
            points: pts_b,
            theta,
        })
        .unwrap();
        assert_abs_diff_eq!(ga.entries, gb.entries, epsilon = 1e-15);
    }

    #[test]
    fn gram_random_grid_is_psd() {
        // 20 quasi-random points; smallest eigenvalue within PSD tolerance
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut unit = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let points: Vec<(f64, f64)> = (0..20).map(|_| (unit(), unit())).collect();
        let g = gram_matrix(&KernelGrid::Ssanova {
            points,
            theta: [1.0, 1.0, 1.0, 1.0],
        })
        .unwrap();
        let (vals, _) = g.entries.eigh(UPLO::Lower).unwrap();
        let norm = vals.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
        assert!(vals[0] >= -1e-8 * norm, "min eig {} norm {}", vals[0], norm);
    }

    #[test]
    fn gram_rejects_over_limit_and_bad_domain() {
        let freqs = vec![0.5; GRAM_LIMIT + 1];
        assert!(gram_matrix(&KernelGrid::Stationary { freqs }).is_err());
        let bad = KernelGrid::Stationary { freqs: vec![1.2] };
        assert!(gram_matrix(&bad).is_err());
    }
}
