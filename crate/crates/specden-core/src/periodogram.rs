//! Periodograms of stationary series and blocked local periodograms of
//! locally stationary series.
//!
//! All frequencies are in cycles per sample, `w` in `[0,1]`; a sampling rate
//! carried by [`TimeSeries`] is metadata used only when reporting axes in Hz.

use crate::error::{Result, SpecdenError};
use ndarray::Array2;
use rayon::prelude::*;
use rustfft::{num_complex::Complex, FftPlanner};

/// A real-valued, regularly sampled series.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    values: Vec<f64>,
    sampling_rate_hz: f64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, sampling_rate_hz: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(SpecdenError::InvalidInput("empty series".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(SpecdenError::NonFinite(format!(
                "series contains non-finite value {bad}"
            )));
        }
        if !(sampling_rate_hz > 0.0) {
            return Err(SpecdenError::InvalidInput(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        Ok(TimeSeries {
            values,
            sampling_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    /// Multiply every value by `s` (handy in equivariance tests).
    pub fn scaled(&self, s: f64) -> TimeSeries {
        TimeSeries {
            values: self.values.iter().map(|v| v * s).collect(),
            sampling_rate_hz: self.sampling_rate_hz,
        }
    }
}

/// Raw periodogram ordinates at all Fourier frequencies `w_k = k/T`.
#[derive(Debug, Clone)]
pub struct PeriodogramSet {
    pub freqs: Vec<f64>,
    pub values: Vec<f64>,
    pub t: usize,
}

/// K x J grid of blocked local periodograms.
#[derive(Debug, Clone)]
pub struct LocalPeriodogramGrid {
    /// K frequencies in `[0,1]`.
    pub freqs: Vec<f64>,
    /// J block-midpoint times in `[0,1]`.
    pub times: Vec<f64>,
    /// K x J matrix of local periodogram ordinates.
    pub values: Array2<f64>,
    /// J+1 increasing sample indices partitioning `0..T`.
    pub block_bounds: Vec<usize>,
}

impl LocalPeriodogramGrid {
    pub fn k(&self) -> usize {
        self.freqs.len()
    }

    pub fn j(&self) -> usize {
        self.times.len()
    }

    /// Grid points flattened row-major: index `i = k * J + j`.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut pts = Vec::with_capacity(self.k() * self.j());
        for &w in &self.freqs {
            for &u in &self.times {
                pts.push((w, u));
            }
        }
        pts
    }

    /// Ordinates flattened in the same order as [`points`](Self::points).
    pub fn flat_values(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }

    /// Grid with the time blocks permuted: column `j` of the result is
    /// column `perm[j]` of `self`.
    pub fn permuted_columns(&self, perm: &[usize]) -> LocalPeriodogramGrid {
        assert_eq!(perm.len(), self.j());
        let mut values = Array2::zeros((self.k(), self.j()));
        for (jnew, &jold) in perm.iter().enumerate() {
            for k in 0..self.k() {
                values[[k, jnew]] = self.values[[k, jold]];
            }
        }
        LocalPeriodogramGrid {
            freqs: self.freqs.clone(),
            times: self.times.clone(),
            values,
            block_bounds: self.block_bounds.clone(),
        }
    }
}

const MIN_T_STATIONARY: usize = 8;
const MIN_T_LOCAL: usize = 64;

/// Internal unvalidated DFT power used by both periodogram paths.
pub(crate) fn dft_power_fft(values: &[f64]) -> Vec<f64> {
    let t = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(t);
    fft.process(&mut buf);
    buf.iter().map(|z| z.norm_sqr() / t as f64).collect()
}

/// Direct O(T^2) summation of the same quantity; second route for audits.
pub(crate) fn dft_power_direct(values: &[f64]) -> Vec<f64> {
    let t = values.len();
    let tf = t as f64;
    (0..t)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (idx, &v) in values.iter().enumerate() {
                let ang = 2.0 * std::f64::consts::PI * (k as f64) * (idx as f64) / tf;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re * re + im * im) / tf
        })
        .collect()
}

fn periodogram_with(x: &TimeSeries, power: impl Fn(&[f64]) -> Vec<f64>) -> Result<PeriodogramSet> {
    let t = x.len();
    if t < MIN_T_STATIONARY {
        return Err(SpecdenError::InvalidInput(format!(
            "need at least {MIN_T_STATIONARY} samples for a periodogram, got {t}"
        )));
    }
    let values = power(x.values());
    let freqs = (0..t).map(|k| k as f64 / t as f64).collect();
    Ok(PeriodogramSet { freqs, values, t })
}

/// Periodogram `y_k = |sum_t X_t e^{i 2 pi k t / T}|^2 / T` at all T Fourier
/// frequencies. The redundant upper half is retained so that smoothing can be
/// periodic over the full circle.
pub fn periodogram(x: &TimeSeries) -> Result<PeriodogramSet> {
    periodogram_with(x, dft_power_fft)
}

/// Same contract as [`periodogram`] via direct summation; retained as an
/// independent route for cross-checks.
pub fn periodogram_direct(x: &TimeSeries) -> Result<PeriodogramSet> {
    periodogram_with(x, dft_power_direct)
}

/// Configuration of the time-frequency grid for local periodograms.
#[derive(Debug, Clone)]
pub struct GridSpec {
    /// Number of frequencies; ignored when `freqs` is given.
    pub k: usize,
    /// Number of time blocks; ignored when `blocks` is given.
    pub j: usize,
    /// Explicit frequency list overriding the default `k/(K+1)` grid.
    pub freqs: Option<Vec<f64>>,
    /// Explicit block boundaries (J+1 increasing values from 0 to T).
    pub blocks: Option<Vec<usize>>,
    /// Subtract each block's own mean before the block DFT.
    pub block_demean: bool,
    /// Maximum allowed K*J.
    pub grid_limit: usize,
}

impl GridSpec {
    pub fn new(k: usize, j: usize) -> Self {
        GridSpec {
            k,
            j,
            freqs: None,
            blocks: None,
            block_demean: true,
            grid_limit: 4096,
        }
    }

    /// Default grid for a series of length `t`: block length near sqrt(T).
    pub fn default_for_len(t: usize) -> Self {
        let j = ((t as f64).sqrt().round() as usize).max(4);
        GridSpec::new(j, j)
    }
}

/// Split `0..t` into `j` blocks whose sizes differ by at most one, larger
/// blocks first.
fn near_equal_blocks(t: usize, j: usize) -> Vec<usize> {
    let base = t / j;
    let rem = t % j;
    let mut bounds = Vec::with_capacity(j + 1);
    let mut pos = 0;
    bounds.push(0);
    for b in 0..j {
        pos += base + usize::from(b < rem);
        bounds.push(pos);
    }
    bounds
}

/// Blocked local periodograms on a K x J time-frequency grid.
///
/// The time axis is split into near-equal blocks (or explicit `blocks`); the
/// frequency grid defaults to `w_k = k/(K+1)`, `k = 1..K`, which avoids
/// `w = 0` where mean-corrected blocks are degenerate.
pub fn local_periodograms(x: &TimeSeries, spec: &GridSpec) -> Result<LocalPeriodogramGrid> {
    let t = x.len();
    if t < MIN_T_LOCAL {
        return Err(SpecdenError::InvalidInput(format!(
            "need at least {MIN_T_LOCAL} samples for local periodograms, got {t}"
        )));
    }
    let bounds = match &spec.blocks {
        Some(b) => {
            if b.len() < 2 || b[0] != 0 || *b.last().unwrap() != t {
                return Err(SpecdenError::InvalidInput(
                    "explicit blocks must start at 0 and end at T".into(),
                ));
            }
            if b.windows(2).any(|w| w[1] <= w[0]) {
                return Err(SpecdenError::InvalidInput(
                    "explicit block bounds must be strictly increasing".into(),
                ));
            }
            b.clone()
        }
        None => {
            if spec.j == 0 {
                return Err(SpecdenError::InvalidInput("J must be positive".into()));
            }
            if spec.j > t / 8 {
                return Err(SpecdenError::InvalidInput(format!(
                    "J = {} too large for T = {t} (need J <= T/8)",
                    spec.j
                )));
            }
            near_equal_blocks(t, spec.j)
        }
    };
    let j = bounds.len() - 1;
    let freqs = match &spec.freqs {
        Some(f) => {
            if f.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(SpecdenError::InvalidInput(
                    "explicit frequencies must lie in [0,1]".into(),
                ));
            }
            f.clone()
        }
        None => {
            if spec.k == 0 {
                return Err(SpecdenError::InvalidInput("K must be positive".into()));
            }
            (1..=spec.k)
                .map(|k| k as f64 / (spec.k as f64 + 1.0))
                .collect()
        }
    };
    let k = freqs.len();
    if k * j > spec.grid_limit {
        return Err(SpecdenError::GridLimit(format!(
            "K*J = {} exceeds grid limit {}",
            k * j,
            spec.grid_limit
        )));
    }

    let times: Vec<f64> = bounds
        .windows(2)
        .map(|w| (w[0] + w[1]) as f64 / 2.0 / t as f64)
        .collect();

    let xs = x.values();
    let columns: Vec<Vec<f64>> = bounds
        .par_windows(2)
        .map(|w| {
            let (b0, b1) = (w[0], w[1]);
            let len = (b1 - b0) as f64;
            let block = &xs[b0..b1];
            let mean = if spec.block_demean {
                block.iter().sum::<f64>() / len
            } else {
                0.0
            };
            freqs
                .iter()
                .map(|&wk| {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for (off, &v) in block.iter().enumerate() {
                        // global time index, as the blocked transform is phased
                        let tt = (b0 + off) as f64;
                        let ang = 2.0 * std::f64::consts::PI * wk * tt;
                        let c = v - mean;
                        re += c * ang.cos();
                        im += c * ang.sin();
                    }
                    (re * re + im * im) / len
                })
                .collect()
        })
        .collect();

    let mut values = Array2::<f64>::zeros((k, j));
    for (jj, col) in columns.iter().enumerate() {
        for (kk, &v) in col.iter().enumerate() {
            values[[kk, jj]] = v;
        }
    }

    Ok(LocalPeriodogramGrid {
        freqs,
        times,
        values,
        block_bounds: bounds,
    })
}

/// Subtract the across-channel mean at every time point; a single channel
/// falls back to subtracting its own time mean.
pub fn normalize_series(channels: &[TimeSeries]) -> Result<Vec<TimeSeries>> {
    if channels.is_empty() {
        return Err(SpecdenError::InvalidInput("no channels".into()));
    }
    let t = channels[0].len();
    if channels.iter().any(|c| c.len() != t) {
        return Err(SpecdenError::DimensionMismatch(
            "channels differ in length".into(),
        ));
    }
    if channels.len() == 1 {
        let mean = channels[0].values().iter().sum::<f64>() / t as f64;
        let vals = channels[0].values().iter().map(|v| v - mean).collect();
        return Ok(vec![TimeSeries {
            values: vals,
            sampling_rate_hz: channels[0].sampling_rate_hz,
        }]);
    }
    let nc = channels.len() as f64;
    let mut out: Vec<Vec<f64>> = channels.iter().map(|c| c.values().to_vec()).collect();
    for i in 0..t {
        let m = channels.iter().map(|c| c.values()[i]).sum::<f64>() / nc;
        for ch in out.iter_mut() {
            ch[i] -= m;
        }
    }
    Ok(out
        .into_iter()
        .zip(channels)
        .map(|(values, c)| TimeSeries {
            values,
            sampling_rate_hz: c.sampling_rate_hz,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ts(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(values, 1.0).unwrap()
    }

    #[test]
    fn zero_series_has_zero_periodogram() {
        let p = periodogram(&ts(vec![0.0; 16])).unwrap();
        assert_eq!(p.values.len(), 16);
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert_abs_diff_eq!(p.freqs[3], 3.0 / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn alternating_series_concentrates_at_nyquist() {
        // hand DFT of (1,-1,1,-1): y_2 = |sum (-1)^t e^{i pi t}|^2 / 4 = 16/4
        let y = dft_power_direct(&[1.0, -1.0, 1.0, -1.0]);
        assert_abs_diff_eq!(y[2], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[3], 0.0, epsilon = 1e-12);
        let yf = dft_power_fft(&[1.0, -1.0, 1.0, -1.0]);
        for (a, b) in y.iter().zip(&yf) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn periodogram_rejects_short_series() {
        assert!(periodogram(&ts(vec![1.0; 7])).is_err());
    }

    #[test]
    fn parseval_holds() {
        let vals: Vec<f64> = (0..37)
            .map(|i| ((i * i + 3) % 17) as f64 / 5.0 - 1.3)
            .collect();
        let sum_sq: f64 = vals.iter().map(|v| v * v).sum();
        let p = periodogram(&ts(vals)).unwrap();
        let sum_y: f64 = p.values.iter().sum();
        assert_abs_diff_eq!(sum_y, sum_sq, epsilon = 1e-9 * sum_sq.max(1.0));
    }

    #[test]
    fn conjugate_symmetry_of_ordinates() {
        let vals: Vec<f64> = (0..24).map(|i| (i as f64 * 0.7).sin() + 0.2).collect();
        let p = periodogram(&ts(vals)).unwrap();
        for k in 1..24 {
            assert_abs_diff_eq!(p.values[k], p.values[24 - k], epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_series_has_zero_local_grid() {
        let g = local_periodograms(&ts(vec![0.0; 256]), &GridSpec::new(8, 4)).unwrap();
        assert_eq!(g.values.shape(), &[8, 4]);
        assert!(g.values.iter().all(|&v| v == 0.0));
        assert_eq!(g.block_bounds, vec![0, 64, 128, 192, 256]);
    }

    #[test]
    fn default_frequency_grid_avoids_zero() {
        let g = local_periodograms(&ts(vec![1.0; 640]), &GridSpec::new(8, 4)).unwrap();
        assert_abs_diff_eq!(g.freqs[0], 1.0 / 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.freqs[7], 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn eeg_style_grid_matches_published_layout() {
        // T = 60000, K = 32, explicit 64 blocks of 938 samples (last one 906)
        let t = 60000usize;
        let vals: Vec<f64> = (0..t).map(|i| ((i % 97) as f64) / 10.0).collect();
        let mut blocks: Vec<usize> = (0..64).map(|j| 938 * j).collect();
        blocks.push(t);
        let mut spec = GridSpec::new(32, 64);
        spec.blocks = Some(blocks);
        let g = local_periodograms(&ts(vals), &spec).unwrap();
        for (k, &w) in g.freqs.iter().enumerate() {
            assert_abs_diff_eq!(w, (k as f64 + 1.0) / 33.0, epsilon = 1e-12);
        }
        for j in 1..=63usize {
            let expect = (938.0 * j as f64 - 468.5) / 60000.0;
            assert!(
                (g.times[j - 1] - expect).abs() <= 1e-5,
                "u_{j} = {} vs {}",
                g.times[j - 1],
                expect
            );
        }
        assert!((g.times[63] - 0.9925).abs() < 5e-5);
    }

    #[test]
    fn blocks_near_equal_sizes() {
        let b = near_equal_blocks(1000, 7);
        let sizes: Vec<usize> = b.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 1000);
        let mx = *sizes.iter().max().unwrap();
        let mn = *sizes.iter().min().unwrap();
        assert!(mx - mn <= 1);
    }

    #[test]
    fn rejects_oversized_grids() {
        let mut spec = GridSpec::new(70, 70);
        spec.grid_limit = 4096;
        assert!(local_periodograms(&ts(vec![0.0; 1024]), &spec).is_err());
        assert!(local_periodograms(&ts(vec![0.0; 128]), &GridSpec::new(4, 32)).is_err());
    }

    #[test]
    fn normalize_identical_channels_to_zero() {
        let a = ts(vec![1.0, 2.0, 3.0]);
        let out = normalize_series(&[a.clone(), a]).unwrap();
        assert!(out[0].values().iter().all(|&v| v == 0.0));
        assert!(out[1].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_constant_channels() {
        let out = normalize_series(&[ts(vec![1.0; 3]), ts(vec![3.0; 3])]).unwrap();
        assert_eq!(out[0].values(), &[-1.0, -1.0, -1.0]);
        assert_eq!(out[1].values(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn normalize_single_channel_subtracts_own_mean() {
        let out = normalize_series(&[ts(vec![1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(out[0].values(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn normalize_rejects_length_mismatch() {
        let r = normalize_series(&[ts(vec![1.0; 3]), ts(vec![1.0; 4])]);
        assert!(r.is_err());
    }

    #[test]
    fn scaling_multiplies_ordinates_by_square() {
        let vals: Vec<f64> = (0..32).map(|i| (i as f64 * 0.3).cos()).collect();
        let x = ts(vals);
        let p1 = periodogram(&x).unwrap();
        let p2 = periodogram(&x.scaled(3.0)).unwrap();
        for (a, b) in p1.values.iter().zip(&p2.values) {
            assert_abs_diff_eq!(9.0 * a, *b, epsilon = 1e-9 * (1.0 + b.abs()));
        }
    }
}
