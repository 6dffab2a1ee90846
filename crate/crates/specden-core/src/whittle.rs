//! Penalized Whittle likelihood fits by iteratively reweighted penalized
//! least squares (IRPLS) with Fisher scoring.
//!
//! At each iteration the working variable `z_k = g_k + y_k exp(-g_k) - 1` is
//! smoothed with unit weights by solving
//!
//! ```text
//! (Sigma + n lambda I) c + S d = z,    S' c = 0,
//! ```
//!
//! where `Sigma` is the reproducing-kernel Gram matrix on the data points and
//! `S` spans the unpenalized null space. Two equivalent solve routes are
//! kept: a spectral route that factors `Q2' Sigma Q2` once and serves every
//! lambda (it also feeds the GML criterion directly), and a Cholesky route on
//! `Sigma + n lambda I` that is cheaper when lambda and theta change on every
//! evaluation, as they do inside the SS ANOVA smoothing-parameter search.

use crate::error::{Result, SpecdenError};
use crate::kernels::{self, GramMatrix};
use crate::linalg::{lstsq_small, null_complement, solve_small_sym, sym_eigh, SpdFactor};
use crate::periodogram::{LocalPeriodogramGrid, PeriodogramSet};
use ndarray::{Array1, Array2};
use std::sync::Arc;

pub const IRPLS_MAX_ITER: usize = 50;
pub const IRPLS_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// solve routes
// ---------------------------------------------------------------------------

/// Spectral decomposition of `Q2' Sigma Q2` cached for reuse across lambdas.
pub(crate) struct EigenRoute {
    /// `Q2 U`, n x (n - m); coefficient solves and criterion contrasts both
    /// factor through this product.
    pub basis: Array2<f64>,
    /// Eigenvalues, ascending, clamped at zero.
    pub delta: Array1<f64>,
}

impl EigenRoute {
    pub fn new(sigma: &Array2<f64>, q2: &Array2<f64>) -> Result<Self> {
        let b = q2.t().dot(sigma).dot(q2);
        let (vals, vecs) = sym_eigh(&b)?;
        let delta = vals.mapv(|v| v.max(0.0));
        let basis = q2.dot(&vecs);
        Ok(EigenRoute { basis, delta })
    }

    fn solve_c(&self, nl: f64, z: &Array1<f64>) -> Array1<f64> {
        let w = self.basis.t().dot(z);
        let gamma = Array1::from_iter(
            w.iter()
                .zip(self.delta.iter())
                .map(|(&wi, &d)| wi / (d + nl)),
        );
        self.basis.dot(&gamma)
    }
}

/// Cholesky factorization of `A = Sigma + n lambda I` with the pieces needed
/// to project out the null space.
pub(crate) struct CholRoute {
    pub factor: SpdFactor,
    /// `A^{-1} S`, n x m.
    pub a_inv_s: Array2<f64>,
    /// `S' A^{-1} S`, m x m.
    pub sas: Array2<f64>,
    pub ln_det_a: f64,
}

impl CholRoute {
    pub fn new(sigma: &Array2<f64>, s: &Array2<f64>, nl: f64) -> Result<Self> {
        let n = sigma.nrows();
        let mut a = sigma.clone();
        for i in 0..n {
            a[[i, i]] += nl;
        }
        let factor = SpdFactor::new(&a)?;
        let a_inv_s = factor.solve_mat(s)?;
        let sas = s.t().dot(&a_inv_s);
        let ln_det_a = factor.ln_det();
        Ok(CholRoute {
            factor,
            a_inv_s,
            sas,
            ln_det_a,
        })
    }

    fn solve_c(&self, s: &Array2<f64>, z: &Array1<f64>) -> Result<Array1<f64>> {
        let az = self.factor.solve_vec(z)?;
        let stz = s.t().dot(&az);
        let d = solve_small_sym(&self.sas, &stz)?;
        Ok(&az - &self.a_inv_s.dot(&d))
    }

    /// `P v` where `P = A^{-1} - A^{-1} S (S' A^{-1} S)^{-1} S' A^{-1}`;
    /// identical to `Q2 (Q2' A Q2)^{-1} Q2' v`.
    pub fn project(&self, s: &Array2<f64>, v: &Array1<f64>) -> Result<Array1<f64>> {
        self.solve_c(s, v)
    }
}

pub(crate) enum Solver<'a> {
    Eigen(&'a EigenRoute),
    Chol(&'a CholRoute, &'a Array2<f64>),
}

impl Solver<'_> {
    fn solve_c(&self, nl: f64, z: &Array1<f64>) -> Result<Array1<f64>> {
        match self {
            Solver::Eigen(er) => Ok(er.solve_c(nl, z)),
            Solver::Chol(cr, s) => cr.solve_c(s, z),
        }
    }
}

// ---------------------------------------------------------------------------
// IRPLS core
// ---------------------------------------------------------------------------

pub(crate) struct RawFit {
    pub g: Array1<f64>,
    pub c: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub last_change: f64,
}

pub(crate) fn whittle_terms(y: &Array1<f64>, g: &Array1<f64>) -> (Array1<f64>, f64) {
    // u_i = 1 - y_i exp(-g_i); second return is sum{g_i + y_i exp(-g_i)}
    let mut u = Array1::zeros(y.len());
    let mut nll = 0.0;
    for i in 0..y.len() {
        let ye = if y[i] == 0.0 { 0.0 } else { y[i] * (-g[i]).exp() };
        u[i] = 1.0 - ye;
        nll += g[i] + ye;
    }
    (u, nll)
}

pub(crate) fn initial_log_level(y: &Array1<f64>) -> f64 {
    (y.mean().unwrap_or(0.0) + 1e-10).ln()
}

/// Fisher-scoring loop at fixed smoothing; stops on max |g_new - g| < tol.
pub(crate) fn irpls(y: &Array1<f64>, nl: f64, solver: &Solver) -> Result<RawFit> {
    let n = y.len();
    let mut g = Array1::from_elem(n, initial_log_level(y));
    let mut c = Array1::zeros(n);
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=IRPLS_MAX_ITER {
        iterations = it;
        let (u, _) = whittle_terms(y, &g);
        let z = &g - &u;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SpecdenError::NonFinite(
                "working response diverged during IRPLS".into(),
            ));
        }
        c = solver.solve_c(nl, &z)?;
        let g_new = &z - &(&c * nl);
        last_change = g_new
            .iter()
            .zip(g.iter())
            .fold(0.0_f64, |a, (&gn, &go)| a.max((gn - go).abs()));
        g = g_new;
        if !last_change.is_finite() {
            return Err(SpecdenError::NonFinite(
                "fitted values diverged during IRPLS".into(),
            ));
        }
        if last_change < IRPLS_TOL {
            converged = true;
            break;
        }
    }
    Ok(RawFit {
        g,
        c,
        converged,
        iterations,
        last_change,
    })
}

/// Recompute fitted values and null-space coefficients from the converged
/// coefficients: `g = S d + Sigma c` with `d` from projecting the residual.
fn finish_fit(
    raw: &RawFit,
    y: &Array1<f64>,
    s: &Array2<f64>,
    sigma: &Array2<f64>,
    nl: f64,
) -> Result<(Array1<f64>, Array1<f64>, f64)> {
    let sc = sigma.dot(&raw.c);
    let resid = &raw.g - &sc;
    let d = lstsq_small(s, &resid)?;
    let fitted = &s.dot(&d) + &sc;
    let (_, nll) = whittle_terms(y, &fitted);
    let objective = nll + 0.5 * nl * raw.c.dot(&sc);
    Ok((d, fitted, objective))
}

// ---------------------------------------------------------------------------
// public one-shot solver
// ---------------------------------------------------------------------------

/// Result of a single penalized least squares / Whittle solve.
#[derive(Debug, Clone)]
pub struct IrplsSolution {
    pub c: Array1<f64>,
    pub d: Array1<f64>,
    pub fitted: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// Minimize the penalized Whittle likelihood for the given observations,
/// null-space basis and Gram matrix at fixed `lam`.
pub fn irpls_solve(
    y: &[f64],
    s: &Array2<f64>,
    sigma: &GramMatrix,
    lam: f64,
) -> Result<IrplsSolution> {
    let n = y.len();
    if !(lam > 0.0) {
        return Err(SpecdenError::InvalidInput(format!(
            "lambda must be positive, got {lam}"
        )));
    }
    if y.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(SpecdenError::InvalidInput(
            "observations must be finite and nonnegative".into(),
        ));
    }
    if s.nrows() != n || sigma.entries.nrows() != n || sigma.entries.ncols() != n {
        return Err(SpecdenError::DimensionMismatch(format!(
            "y has {n} entries, S is {}x{}, Sigma is {}x{}",
            s.nrows(),
            s.ncols(),
            sigma.entries.nrows(),
            sigma.entries.ncols()
        )));
    }
    let y = Array1::from_vec(y.to_vec());
    let nl = n as f64 * lam;
    let chol = CholRoute::new(&sigma.entries, s, nl)?;
    let raw = irpls(&y, nl, &Solver::Chol(&chol, s))?;
    let (d, fitted, objective) = finish_fit(&raw, &y, s, &sigma.entries, nl)?;
    Ok(IrplsSolution {
        c: raw.c,
        d,
        fitted,
        converged: raw.converged,
        iterations: raw.iterations,
        objective,
    })
}

// ---------------------------------------------------------------------------
// stationary fits
// ---------------------------------------------------------------------------

/// Shared per-periodogram state: Gram matrix, contrasts and their spectral
/// decomposition. One of these serves every lambda and every criterion.
pub(crate) struct StationaryContext {
    pub freqs: Vec<f64>,
    pub y: Array1<f64>,
    pub s: Array2<f64>,
    pub q2: Array2<f64>,
    pub sigma: Array2<f64>,
    pub eigen: EigenRoute,
}

impl StationaryContext {
    pub fn new(pgram: &PeriodogramSet) -> Result<Arc<Self>> {
        Self::from_parts(pgram.freqs.clone(), pgram.values.clone())
    }

    pub fn from_parts(freqs: Vec<f64>, values: Vec<f64>) -> Result<Arc<Self>> {
        let n = freqs.len();
        if n != values.len() {
            return Err(SpecdenError::DimensionMismatch(
                "frequency and ordinate lengths differ".into(),
            ));
        }
        if n > kernels::GRAM_LIMIT {
            return Err(SpecdenError::GridLimit(format!(
                "{n} ordinates exceeds Gram limit {}",
                kernels::GRAM_LIMIT
            )));
        }
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(SpecdenError::InvalidInput(
                "periodogram ordinates must be finite and nonnegative".into(),
            ));
        }
        let y = Array1::from_vec(values);
        let s = Array2::from_elem((n, 1), 1.0);
        let q2 = null_complement(&s)?;
        let sigma = kernels::r1_matrix(&freqs);
        let eigen = EigenRoute::new(&sigma, &q2)?;
        Ok(Arc::new(StationaryContext {
            freqs,
            y,
            s,
            q2,
            sigma,
            eigen,
        }))
    }
}

/// Fitted stationary log-spectrum.
pub struct StationaryFit {
    pub freqs: Vec<f64>,
    pub y: Array1<f64>,
    pub d: f64,
    pub c: Array1<f64>,
    pub lambda: f64,
    pub fitted: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub(crate) ctx: Arc<StationaryContext>,
}

impl StationaryFit {
    /// Log-spectrum estimate at an arbitrary frequency in `[0,1]`.
    pub fn evaluate(&self, w: f64) -> Result<f64> {
        if !self.converged {
            return Err(SpecdenError::Nonconvergence {
                iterations: self.iterations,
                last_change: f64::NAN,
            });
        }
        Ok(self.evaluate_unchecked(w))
    }

    pub(crate) fn evaluate_unchecked(&self, w: f64) -> f64 {
        let mut acc = self.d;
        for (ck, &wk) in self.c.iter().zip(&self.freqs) {
            acc += ck * kernels::r1(wk, w);
        }
        acc
    }
}

pub(crate) fn fit_stationary_ctx(ctx: &Arc<StationaryContext>, lam: f64) -> Result<StationaryFit> {
    if !(lam > 0.0) {
        return Err(SpecdenError::InvalidInput(format!(
            "lambda must be positive, got {lam}"
        )));
    }
    let n = ctx.y.len();
    let nl = n as f64 * lam;
    let raw = irpls(&ctx.y, nl, &Solver::Eigen(&ctx.eigen))?;
    let (d, fitted, objective) = finish_fit(&raw, &ctx.y, &ctx.s, &ctx.sigma, nl)?;
    Ok(StationaryFit {
        freqs: ctx.freqs.clone(),
        y: ctx.y.clone(),
        d: d[0],
        c: raw.c,
        lambda: lam,
        fitted,
        converged: raw.converged,
        iterations: raw.iterations,
        objective,
        ctx: Arc::clone(ctx),
    })
}

/// Fit the stationary log-spectrum at fixed `lam` using all T ordinates.
pub fn fit_stationary(pgram: &PeriodogramSet, lam: f64) -> Result<StationaryFit> {
    let ctx = StationaryContext::new(pgram)?;
    fit_stationary_ctx(&ctx, lam)
}

// ---------------------------------------------------------------------------
// SS ANOVA fits
// ---------------------------------------------------------------------------

/// Shared per-grid state for SS ANOVA fits; kernel matrices are cached per
/// component so that `Sigma_theta` assembly is a weighted sum.
pub(crate) struct SsanovaContext {
    pub points: Vec<(f64, f64)>,
    pub k: usize,
    pub j: usize,
    pub y: Array1<f64>,
    pub s: Array2<f64>,
    pub q2: Array2<f64>,
    pub kmats: [Array2<f64>; 4],
}

impl SsanovaContext {
    pub fn new(grid: &LocalPeriodogramGrid) -> Result<Arc<Self>> {
        let points = grid.points();
        let n = points.len();
        if n > kernels::GRAM_LIMIT {
            return Err(SpecdenError::GridLimit(format!(
                "K*J = {n} exceeds Gram limit {}",
                kernels::GRAM_LIMIT
            )));
        }
        let values = grid.flat_values();
        if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(SpecdenError::InvalidInput(
                "local periodogram ordinates must be finite and nonnegative".into(),
            ));
        }
        let y = Array1::from_vec(values);
        let mut s = Array2::zeros((n, 2));
        for (i, &(_, u)) in points.iter().enumerate() {
            s[[i, 0]] = 1.0;
            s[[i, 1]] = u - 0.5;
        }
        let q2 = null_complement(&s)?;
        let kmats = kernels::ssanova_kernel_mats(&points);
        Ok(Arc::new(SsanovaContext {
            points,
            k: grid.k(),
            j: grid.j(),
            y,
            s,
            q2,
            kmats,
        }))
    }

    /// Same geometry, different ordinates (used by permutation refits).
    pub fn with_values(self: &Arc<Self>, values: &[f64]) -> Result<Arc<Self>> {
        if values.len() != self.y.len() {
            return Err(SpecdenError::DimensionMismatch(
                "replacement values have wrong length".into(),
            ));
        }
        Ok(Arc::new(SsanovaContext {
            points: self.points.clone(),
            k: self.k,
            j: self.j,
            y: Array1::from_vec(values.to_vec()),
            s: self.s.clone(),
            q2: self.q2.clone(),
            kmats: self.kmats.clone(),
        }))
    }

    pub fn sigma(&self, theta: &[f64; 4]) -> Array2<f64> {
        kernels::sigma_theta(&self.kmats, theta)
    }
}

fn validate_theta(theta: &[f64; 4]) -> Result<()> {
    if theta.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(SpecdenError::InvalidInput(
            "theta weights must be finite and nonnegative".into(),
        ));
    }
    if theta.iter().all(|&t| t == 0.0) {
        return Err(SpecdenError::InvalidInput(
            "at least one theta weight must be positive".into(),
        ));
    }
    Ok(())
}

/// Fitted time-varying log-spectrum on a K x J grid.
pub struct SsanovaFit {
    pub points: Vec<(f64, f64)>,
    pub k: usize,
    pub j: usize,
    pub y: Array1<f64>,
    pub d: [f64; 2],
    pub c: Array1<f64>,
    pub lambda: f64,
    pub theta: [f64; 4],
    pub fitted: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub(crate) ctx: Arc<SsanovaContext>,
    pub(crate) eigen: Arc<EigenRoute>,
}

impl SsanovaFit {
    /// Log time-varying spectrum at an arbitrary `(w, u)` in the unit square.
    pub fn evaluate(&self, w: f64, u: f64) -> Result<f64> {
        if !self.converged {
            return Err(SpecdenError::Nonconvergence {
                iterations: self.iterations,
                last_change: f64::NAN,
            });
        }
        Ok(self.evaluate_unchecked(w, u))
    }

    pub(crate) fn evaluate_unchecked(&self, w: f64, u: f64) -> f64 {
        let mut acc = self.d[0] + self.d[1] * (u - 0.5);
        for (ci, &gi) in self.c.iter().zip(&self.points) {
            acc += ci * kernels::r_theta(gi, (w, u), &self.theta);
        }
        acc
    }

    /// Evaluate on the outer product of `ws` and `us`, returned as a
    /// `ws.len() x us.len()` matrix.
    pub fn evaluate_lattice(&self, ws: &[f64], us: &[f64]) -> Result<Array2<f64>> {
        if !self.converged {
            return Err(SpecdenError::Nonconvergence {
                iterations: self.iterations,
                last_change: f64::NAN,
            });
        }
        let eval: Vec<(f64, f64)> = ws
            .iter()
            .flat_map(|&w| us.iter().map(move |&u| (w, u)))
            .collect();
        let cross = kernels::ssanova_cross(&eval, &self.points, &self.theta);
        let kb = cross.dot(&self.c);
        let mut out = Array2::zeros((ws.len(), us.len()));
        let mut idx = 0;
        for (iw, _) in ws.iter().enumerate() {
            for (iu, &u) in us.iter().enumerate() {
                out[[iw, iu]] = self.d[0] + self.d[1] * (u - 0.5) + kb[idx];
                idx += 1;
            }
        }
        Ok(out)
    }
}

pub(crate) struct SsanovaRaw {
    pub raw: RawFit,
    pub sigma: Array2<f64>,
}

/// Hot-path fit at (lam, theta) through the Cholesky route; no spectral
/// decomposition, no finishing. Used inside smoothing-parameter searches.
pub(crate) fn fit_ssanova_chol(
    ctx: &SsanovaContext,
    lam: f64,
    theta: &[f64; 4],
) -> Result<(SsanovaRaw, CholRoute)> {
    validate_theta(theta)?;
    let sigma = ctx.sigma(theta);
    let nl = ctx.y.len() as f64 * lam;
    let chol = CholRoute::new(&sigma, &ctx.s, nl)?;
    let raw = irpls(&ctx.y, nl, &Solver::Chol(&chol, &ctx.s))?;
    Ok((SsanovaRaw { raw, sigma }, chol))
}

pub(crate) fn fit_ssanova_ctx(
    ctx: &Arc<SsanovaContext>,
    lam: f64,
    theta: &[f64; 4],
) -> Result<SsanovaFit> {
    if !(lam > 0.0) {
        return Err(SpecdenError::InvalidInput(format!(
            "lambda must be positive, got {lam}"
        )));
    }
    validate_theta(theta)?;
    let sigma = ctx.sigma(theta);
    let eigen = EigenRoute::new(&sigma, &ctx.q2)?;
    let nl = ctx.y.len() as f64 * lam;
    let raw = irpls(&ctx.y, nl, &Solver::Eigen(&eigen))?;
    let (d, fitted, objective) = finish_fit(&raw, &ctx.y, &ctx.s, &sigma, nl)?;
    Ok(SsanovaFit {
        points: ctx.points.clone(),
        k: ctx.k,
        j: ctx.j,
        y: ctx.y.clone(),
        d: [d[0], d[1]],
        c: raw.c,
        lambda: lam,
        theta: *theta,
        fitted,
        converged: raw.converged,
        iterations: raw.iterations,
        objective,
        ctx: Arc::clone(ctx),
        eigen: Arc::new(eigen),
    })
}

/// Fit the SS ANOVA time-varying log-spectrum at fixed `(lam, theta)`.
/// Components with `theta_r = 0` are dropped from the model space.
pub fn fit_ssanova(
    grid: &LocalPeriodogramGrid,
    lam: f64,
    theta: &[f64; 4],
) -> Result<SsanovaFit> {
    let ctx = SsanovaContext::new(grid)?;
    fit_ssanova_ctx(&ctx, lam, theta)
}

// ---------------------------------------------------------------------------
// reduced (frequency-only) fits
// ---------------------------------------------------------------------------

/// Frequency-only fit `g(w, u) = d + s1(w)` obtained by pooling all J time
/// replicates per frequency into one Whittle likelihood.
pub struct ReducedFit {
    /// Distinct frequencies (K of them).
    pub freqs: Vec<f64>,
    /// Representer coefficients collapsed onto the distinct frequencies.
    pub c: Array1<f64>,
    pub d: f64,
    pub lambda: f64,
    /// Fitted value per distinct frequency.
    pub fitted_by_freq: Array1<f64>,
    /// Fitted values expanded over the full K x J grid (constant in time).
    pub fitted: Array1<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub(crate) ctx: Arc<StationaryContext>,
}

impl ReducedFit {
    /// Evaluate at `(w, u)`; independent of `u` by construction.
    pub fn evaluate(&self, w: f64, _u: f64) -> Result<f64> {
        if !self.converged {
            return Err(SpecdenError::Nonconvergence {
                iterations: self.iterations,
                last_change: f64::NAN,
            });
        }
        let mut acc = self.d;
        for (ck, &wk) in self.c.iter().zip(&self.freqs) {
            acc += ck * kernels::r1(wk, w);
        }
        Ok(acc)
    }
}

/// Context over the repeated-frequency observations of a grid, reused by the
/// reduced-model smoothing parameter search.
pub(crate) fn reduced_context(grid: &LocalPeriodogramGrid) -> Result<Arc<StationaryContext>> {
    let points = grid.points();
    let freqs_rep: Vec<f64> = points.iter().map(|p| p.0).collect();
    StationaryContext::from_parts(freqs_rep, grid.flat_values())
}

pub(crate) fn fit_reduced_ctx(
    ctx: &Arc<StationaryContext>,
    k: usize,
    j: usize,
    lam: f64,
) -> Result<ReducedFit> {
    let fit = fit_stationary_ctx(ctx, lam)?;
    // collapse coefficients within each frequency row (points are k-major)
    let mut c = Array1::zeros(k);
    let mut freqs = Vec::with_capacity(k);
    let mut fitted_by_freq = Array1::zeros(k);
    for kk in 0..k {
        freqs.push(fit.freqs[kk * j]);
        fitted_by_freq[kk] = fit.fitted[kk * j];
        let mut acc = 0.0;
        for jj in 0..j {
            acc += fit.c[kk * j + jj];
        }
        c[kk] = acc;
    }
    // expanded fitted vector is exactly row-constant: Sigma rows repeat
    let mut fitted = Array1::zeros(k * j);
    for kk in 0..k {
        for jj in 0..j {
            fitted[kk * j + jj] = fitted_by_freq[kk];
        }
    }
    Ok(ReducedFit {
        freqs,
        c,
        d: fit.d,
        lambda: lam,
        fitted_by_freq,
        fitted,
        converged: fit.converged,
        iterations: fit.iterations,
        objective: fit.objective,
        ctx: Arc::clone(ctx),
    })
}

/// Fit the reduced (stationary) model to a local periodogram grid at fixed
/// `lam`.
pub fn fit_reduced(grid: &LocalPeriodogramGrid, lam: f64) -> Result<ReducedFit> {
    let ctx = reduced_context(grid)?;
    fit_reduced_ctx(&ctx, grid.k(), grid.j(), lam)
}
