//! Run statistics. Every estimator keeps mergeable sufficient statistics so
//! replica results can be pooled exactly, independent of worker scheduling.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform-bin histogram with out-of-range weight tracked separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    width: f64,
    counts: Vec<f64>,
    pub underflow: f64,
    pub overflow: f64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, nbins: usize) -> Result<Self> {
        if !(hi > lo) || nbins == 0 {
            return Err(Error::Estimator(format!("bad histogram range [{lo}, {hi}) x {nbins}")));
        }
        Ok(Histogram {
            lo,
            hi,
            width: (hi - lo) / nbins as f64,
            counts: vec![0.0; nbins],
            underflow: 0.0,
            overflow: 0.0,
        })
    }

    /// Bin count chosen so the width divides the range exactly.
    pub fn from_width(lo: f64, hi: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Estimator(format!("bad bin width {width}")));
        }
        let nbins = ((hi - lo) / width).ceil().max(1.0) as usize;
        Self::new(lo, lo + nbins as f64 * width, nbins)
    }

    pub fn nbins(&self) -> usize {
        self.counts.len()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn bin_width(&self) -> f64 {
        self.width
    }

    pub fn add(&mut self, x: f64) {
        self.add_weighted(x, 1.0);
    }

    pub fn add_weighted(&mut self, x: f64, w: f64) {
        if x < self.lo {
            self.underflow += w;
        } else if x >= self.hi {
            self.overflow += w;
        } else {
            let i = (((x - self.lo) / self.width) as usize).min(self.counts.len() - 1);
            self.counts[i] += w;
        }
    }

    pub fn count(&self, i: usize) -> f64 {
        self.counts[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width
    }

    pub fn in_range_total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.in_range_total() + self.underflow + self.overflow
    }

    /// Probability density within the range (normalized by in-range weight,
    /// so it integrates to one over the bins).
    pub fn density(&self, i: usize) -> f64 {
        let t = self.in_range_total();
        if t == 0.0 {
            0.0
        } else {
            self.counts[i] / (t * self.width)
        }
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.lo != other.lo || self.hi != other.hi || self.counts.len() != other.counts.len() {
            return Err(Error::Estimator("histogram merge: bin edges differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        Ok(())
    }

    /// L1 distance between the sample law and an analytic density `f`:
    /// sum over bins of |empirical mass - integral of f| plus the mismatch of
    /// the out-of-range masses. Bin integrals of `f` use 3-point Simpson.
    pub fn l1_vs<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let total = self.total();
        if total == 0.0 {
            return f64::NAN;
        }
        let mut l1 = 0.0;
        let mut f_in = 0.0;
        for i in 0..self.counts.len() {
            let a = self.lo + i as f64 * self.width;
            let fm = self.width / 6.0
                * (f(a) + 4.0 * f(a + 0.5 * self.width) + f(a + self.width));
            f_in += fm;
            l1 += (self.counts[i] / total - fm).abs();
        }
        l1 + ((self.underflow + self.overflow) / total - (1.0 - f_in)).abs()
    }
}

/// Mean-squared displacement accumulator over a fixed lag ladder.
/// `lag` is in ticks for tick curves and in time units for real-time curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsdCurve {
    pub lag: Vec<f64>,
    sum_sq: Vec<f64>,
    count: Vec<u64>,
}

impl MsdCurve {
    fn with_lags(lag: Vec<f64>) -> Self {
        let n = lag.len();
        MsdCurve { lag, sum_sq: vec![0.0; n], count: vec![0; n] }
    }

    /// Tick-lag MSD with sliding origins over one contiguous price series.
    pub fn from_ticks(p: &[f64], lags: &[u64]) -> Self {
        let mut m = Self::with_lags(lags.iter().map(|&k| k as f64).collect());
        m.accumulate_ticks(p, lags);
        m
    }

    pub fn accumulate_ticks(&mut self, p: &[f64], lags: &[u64]) {
        for (j, &k) in lags.iter().enumerate() {
            let k = k as usize;
            if p.len() <= k {
                continue;
            }
            let mut s = 0.0;
            for t in 0..p.len() - k {
                let d = p[t + k] - p[t];
                s += d * d;
            }
            self.sum_sq[j] += s;
            self.count[j] += (p.len() - k) as u64;
        }
    }

    /// Real-time MSD: the transacted price is held between ticks and sampled
    /// on a uniform grid of pitch `grid_dt`, then treated like a tick series.
    /// The grid starts at the first transaction.
    pub fn from_real_time(t: &[f64], p: &[f64], grid_dt: f64, lags: &[u64]) -> Self {
        let mut m = Self::with_lags(lags.iter().map(|&k| k as f64 * grid_dt).collect());
        m.accumulate_real_time(t, p, grid_dt, lags);
        m
    }

    pub fn accumulate_real_time(&mut self, t: &[f64], p: &[f64], grid_dt: f64, lags: &[u64]) {
        assert_eq!(t.len(), p.len());
        if t.is_empty() {
            return;
        }
        let j0 = (t[0] / grid_dt).ceil() as u64;
        let j1 = (t[t.len() - 1] / grid_dt).floor() as u64;
        if j1 < j0 {
            return;
        }
        let mut grid = Vec::with_capacity((j1 - j0 + 1) as usize);
        let mut i = 0usize;
        for j in j0..=j1 {
            let g = j as f64 * grid_dt;
            while i + 1 < t.len() && t[i + 1] <= g {
                i += 1;
            }
            grid.push(p[i]);
        }
        self.accumulate_ticks(&grid, lags);
    }

    pub fn msd(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            f64::NAN
        } else {
            self.sum_sq[i] / self.count[i] as f64
        }
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.lag.len()).map(|i| (self.lag[i], self.msd(i))).collect()
    }

    pub fn merge(&mut self, other: &MsdCurve) -> Result<()> {
        if self.lag != other.lag {
            return Err(Error::Estimator("msd merge: lag ladders differ".into()));
        }
        for i in 0..self.lag.len() {
            self.sum_sq[i] += other.sum_sq[i];
            self.count[i] += other.count[i];
        }
        Ok(())
    }
}

/// Pooled-mean autocorrelation sufficient statistics up to a fixed lag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMoments {
    pub n: u64,
    sum: f64,
    sum_sq: f64,
    lag_xy: Vec<f64>,
    lag_x: Vec<f64>,
    lag_y: Vec<f64>,
    lag_n: Vec<u64>,
}

impl SeriesMoments {
    pub fn new(k_max: usize) -> Self {
        SeriesMoments {
            n: 0,
            sum: 0.0,
            sum_sq: 0.0,
            lag_xy: vec![0.0; k_max + 1],
            lag_x: vec![0.0; k_max + 1],
            lag_y: vec![0.0; k_max + 1],
            lag_n: vec![0; k_max + 1],
        }
    }

    pub fn from_series(x: &[f64], k_max: usize) -> Self {
        let mut m = Self::new(k_max);
        m.accumulate(x);
        m
    }

    pub fn accumulate(&mut self, x: &[f64]) {
        self.n += x.len() as u64;
        for &v in x {
            self.sum += v;
            self.sum_sq += v * v;
        }
        for k in 0..self.lag_xy.len() {
            if x.len() <= k {
                continue;
            }
            let (mut xy, mut sx, mut sy) = (0.0, 0.0, 0.0);
            for t in 0..x.len() - k {
                xy += x[t] * x[t + k];
                sx += x[t];
                sy += x[t + k];
            }
            self.lag_xy[k] += xy;
            self.lag_x[k] += sx;
            self.lag_y[k] += sy;
            self.lag_n[k] += (x.len() - k) as u64;
        }
    }

    pub fn k_max(&self) -> usize {
        self.lag_xy.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.sum_sq / self.n as f64 - m * m
    }

    /// Autocorrelation at lag k, centered on the pooled mean. C(0) = 1.
    pub fn autocorr(&self, k: usize) -> f64 {
        let mu = self.mean();
        let nk = self.lag_n[k] as f64;
        let cov = (self.lag_xy[k] - mu * (self.lag_x[k] + self.lag_y[k]) + nk * mu * mu) / nk;
        cov / self.variance()
    }

    pub fn merge(&mut self, other: &SeriesMoments) -> Result<()> {
        if self.lag_xy.len() != other.lag_xy.len() {
            return Err(Error::Estimator("moments merge: lag depth differs".into()));
        }
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for k in 0..self.lag_xy.len() {
            self.lag_xy[k] += other.lag_xy[k];
            self.lag_x[k] += other.lag_x[k];
            self.lag_y[k] += other.lag_y[k];
            self.lag_n[k] += other.lag_n[k];
        }
        Ok(())
    }
}

/// Consecutive-increment sign bookkeeping. Zero increments are dropped and
/// their neighbors joined, so only strict sign pairs are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignStats {
    pub same: u64,
    pub flipped: u64,
    pub zeros: u64,
}

impl SignStats {
    pub fn from_series(x: &[f64]) -> Self {
        let mut s = SignStats::default();
        s.accumulate(x);
        s
    }

    pub fn accumulate(&mut self, x: &[f64]) {
        let mut prev: Option<f64> = None;
        for &v in x {
            if v == 0.0 {
                self.zeros += 1;
                continue;
            }
            if let Some(p) = prev {
                if (p > 0.0) == (v > 0.0) {
                    self.same += 1;
                } else {
                    self.flipped += 1;
                }
            }
            prev = Some(v);
        }
    }

    pub fn pairs(&self) -> u64 {
        self.same + self.flipped
    }

    pub fn p_same(&self) -> f64 {
        self.same as f64 / self.pairs() as f64
    }

    pub fn p_flip(&self) -> f64 {
        self.flipped as f64 / self.pairs() as f64
    }

    pub fn merge(&mut self, other: &SignStats) {
        self.same += other.same;
        self.flipped += other.flipped;
        self.zeros += other.zeros;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    ExponentialTail,
    GaussianTail,
    LinearLogLog,
}

/// Least-squares fit summary. `params` by model:
/// exponential-tail [kappa, log_amplitude]; gaussian-tail [c0, c1, c2] with
/// log f = c0 + c1 x + c2 x^2; linear-loglog [slope, intercept].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    pub params: Vec<f64>,
    pub window: (f64, f64),
    pub residual: f64,
    pub n_tail: u64,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    ols_weighted(x, y, None)
}

/// Weighted straight-line least squares. For log-counts the natural weight is
/// the bin count (the log of a Poisson count has variance ~ 1/count), which
/// keeps sparse outer bins from tilting the slope.
fn ols_weighted(x: &[f64], y: &[f64], w: Option<&[f64]>) -> (f64, f64, f64) {
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let wt: f64 = (0..x.len()).map(&weight).sum();
    let mx = (0..x.len()).map(|i| weight(i) * x[i]).sum::<f64>() / wt;
    let my = (0..x.len()).map(|i| weight(i) * y[i]).sum::<f64>() / wt;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in 0..x.len() {
        sxx += weight(i) * (x[i] - mx) * (x[i] - mx);
        sxy += weight(i) * (x[i] - mx) * (y[i] - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for i in 0..x.len() {
        let r = y[i] - slope * x[i] - intercept;
        ss += weight(i) * r * r;
    }
    (slope, intercept, (ss / wt).sqrt())
}

/// Weighted quadratic least squares via 3x3 normal equations.
fn ols_quadratic(x: &[f64], y: &[f64], w: Option<&[f64]>) -> ([f64; 3], f64) {
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for i in 0..x.len() {
        let wi = weight(i);
        let pows = [1.0, x[i], x[i] * x[i]];
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += wi * pows[r] * pows[c];
            }
            b[r] += wi * pows[r] * y[i];
        }
    }
    // Gaussian elimination with partial pivoting
    let mut m = [[0.0f64; 4]; 3];
    for r in 0..3 {
        m[r][..3].copy_from_slice(&a[r]);
        m[r][3] = b[r];
    }
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        for r in col + 1..3 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut coef = [0.0f64; 3];
    for r in (0..3).rev() {
        let mut v = m[r][3];
        for c in r + 1..3 {
            v -= m[r][c] * coef[c];
        }
        coef[r] = v / m[r][r];
    }
    let mut ss = 0.0;
    let mut wt = 0.0;
    for i in 0..x.len() {
        let r = y[i] - coef[0] - coef[1] * x[i] - coef[2] * x[i] * x[i];
        ss += weight(i) * r * r;
        wt += weight(i);
    }
    (coef, (ss / wt).sqrt())
}

const TAIL_BINS: usize = 24;
const MIN_TAIL_SAMPLES: u64 = 1000;

/// Default tail window [2 rms, 6 rms] of the sample magnitudes.
fn default_window(samples: &[f64]) -> (f64, f64) {
    let rms =
        (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt();
    (2.0 * rms, 6.0 * rms)
}

type TailBins = (Vec<f64>, Vec<f64>, Vec<f64>, (f64, f64), u64);

fn tail_log_density(samples: &[f64], window: Option<(f64, f64)>) -> Result<TailBins> {
    if samples.is_empty() {
        return Err(Error::Estimator("tail fit: empty sample".into()));
    }
    let window = window.unwrap_or_else(|| default_window(samples));
    if !(window.1 > window.0) || !(window.0 >= 0.0) {
        return Err(Error::Estimator(format!("tail fit: bad window {window:?}")));
    }
    let mut hist = Histogram::new(window.0, window.1, TAIL_BINS)?;
    for &v in samples {
        hist.add(v.abs());
    }
    let n_tail = hist.in_range_total() as u64;
    if n_tail < MIN_TAIL_SAMPLES {
        return Err(Error::Estimator(format!(
            "tail fit: {n_tail} samples in window {window:?}, need >= {MIN_TAIL_SAMPLES}"
        )));
    }
    let total = samples.len() as f64;
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..hist.nbins() {
        let c = hist.count(i);
        if c > 0.0 {
            xs.push(hist.center(i));
            ys.push((c / (total * hist.bin_width())).ln());
            ws.push(c);
        }
    }
    if xs.len() < 4 {
        return Err(Error::Estimator("tail fit: too few occupied bins".into()));
    }
    Ok((xs, ys, ws, window, n_tail))
}

/// Fit log-density of |samples| to a straight line over the tail window;
/// slope -1/kappa gives the exponential scale. Count-weighted least squares.
pub fn fit_exponential_tail(samples: &[f64], window: Option<(f64, f64)>) -> Result<FitResult> {
    let (xs, ys, ws, window, n_tail) = tail_log_density(samples, window)?;
    let (slope, intercept, residual) = ols_weighted(&xs, &ys, Some(&ws));
    if slope >= 0.0 {
        return Err(Error::Estimator(format!(
            "tail fit: log-density slope {slope:.3} is not a decay"
        )));
    }
    Ok(FitResult {
        model: FitModel::ExponentialTail,
        params: vec![-1.0 / slope, intercept],
        window,
        residual,
        n_tail,
    })
}

/// Fit log-density of |samples| to a quadratic over the tail window.
pub fn fit_gaussian_tail(samples: &[f64], window: Option<(f64, f64)>) -> Result<FitResult> {
    let (xs, ys, ws, window, n_tail) = tail_log_density(samples, window)?;
    let (coef, residual) = ols_quadratic(&xs, &ys, Some(&ws));
    Ok(FitResult {
        model: FitModel::GaussianTail,
        params: coef.to_vec(),
        window,
        residual,
        n_tail,
    })
}

/// Straight-line fit of log y against log x restricted to an x-window.
/// Used for diffusion exponents (the distance-vs-lag slope).
pub fn fit_loglog(points: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &(x, y) in points {
        if x >= window.0 && x <= window.1 && x > 0.0 && y > 0.0 {
            xs.push(x.ln());
            ys.push(y.ln());
        }
    }
    if xs.len() < 2 {
        return Err(Error::Estimator(format!(
            "loglog fit: {} usable points in window {window:?}",
            xs.len()
        )));
    }
    let (slope, intercept, residual) = ols(&xs, &ys);
    Ok(FitResult {
        model: FitModel::LinearLogLog,
        params: vec![slope, intercept],
        window,
        residual,
        n_tail: xs.len() as u64,
    })
}

/// Plain linear OLS on (x, y) points within an x-window; params [slope, intercept].
pub fn fit_linear(points: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &(x, y) in points {
        if x >= window.0 && x <= window.1 {
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.len() < 2 {
        return Err(Error::Estimator(format!(
            "linear fit: {} usable points in window {window:?}",
            xs.len()
        )));
    }
    let (slope, intercept, residual) = ols(&xs, &ys);
    Ok(FitResult {
        model: FitModel::LinearLogLog,
        params: vec![slope, intercept],
        window,
        residual,
        n_tail: xs.len() as u64,
    })
}

/// Mean and standard error of a sample.
pub fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::{Exp1, StandardNormal};

    #[test]
    fn histogram_density_integrates_to_one() {
        let mut h = Histogram::new(-1.0, 1.0, 32).unwrap();
        let mut rng = stream(3, "hist", 0);
        for _ in 0..10_000 {
            h.add(rng.random_range(-1.5..1.5));
        }
        let integral: f64 = (0..h.nbins()).map(|i| h.density(i) * h.bin_width()).sum();
        assert!((integral - 1.0).abs() < 1e-12);
        assert!(h.underflow > 0.0 && h.overflow > 0.0);
        assert_eq!(h.total(), 10_000.0);
    }

    #[test]
    fn histogram_merge_equals_pooled_fill() {
        let mut a = Histogram::new(0.0, 1.0, 8).unwrap();
        let mut b = Histogram::new(0.0, 1.0, 8).unwrap();
        let mut whole = Histogram::new(0.0, 1.0, 8).unwrap();
        let mut rng = stream(4, "hist-merge", 0);
        for i in 0..5000 {
            let x = rng.random_range(-0.2..1.2);
            whole.add(x);
            if i % 2 == 0 {
                a.add(x)
            } else {
                b.add(x)
            }
        }
        a.merge(&b).unwrap();
        assert_eq!(a, whole);
        let mismatched = Histogram::new(0.0, 2.0, 8).unwrap();
        assert!(a.merge(&mismatched).is_err());
    }

    #[test]
    fn histogram_l1_against_exact_density() {
        // uniform draws against the uniform density: L1 ~ sampling noise only
        let mut h = Histogram::new(0.0, 1.0, 16).unwrap();
        let mut rng = stream(5, "hist-l1", 0);
        for _ in 0..200_000 {
            h.add(rng.random_range(0.0..1.0));
        }
        // closed-interval density so Simpson's endpoint samples see the plateau
        let l1 = h.l1_vs(|x| if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 });
        assert!(l1 < 0.02, "l1 = {l1}");
        // and a deliberately wrong density is far away
        let bad = h.l1_vs(|x| if (0.0..=0.5).contains(&x) { 2.0 } else { 0.0 });
        assert!(bad > 0.9, "bad = {bad}");
    }

    #[test]
    fn msd_of_linear_price_is_k_squared() {
        let p: Vec<f64> = (0..400).map(|t| t as f64).collect();
        let m = MsdCurve::from_ticks(&p, &[1, 2, 5, 10]);
        for (i, &k) in [1u64, 2, 5, 10].iter().enumerate() {
            assert!((m.msd(i) - (k * k) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn msd_real_time_holds_last_price() {
        // ticks at t = 0.4, 1.2, 2.9; grid pitch 1.0 samples p at t = 1, 2
        let t = vec![0.4, 1.2, 2.9];
        let p = vec![10.0, 11.0, 14.0];
        let m = MsdCurve::from_real_time(&t, &p, 1.0, &[1]);
        // grid prices: [10, 11] -> single pair, displacement 1
        assert_eq!(m.msd(0), 1.0);
        let m2 = MsdCurve::from_real_time(&t, &p, 0.5, &[1, 2]);
        // grid at 0.5..2.5: prices [10, 10, 11, 11, 11]
        assert!((m2.msd(0) - 1.0 / 4.0).abs() < 1e-12);
        assert!((m2.msd(1) - (1.0 + 1.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn msd_merge_pools_replicas() {
        let p1: Vec<f64> = (0..50).map(|t| (t as f64).sin()).collect();
        let p2: Vec<f64> = (0..70).map(|t| (t as f64 * 0.7).cos()).collect();
        let mut a = MsdCurve::from_ticks(&p1, &[1, 3]);
        let b = MsdCurve::from_ticks(&p2, &[1, 3]);
        a.merge(&b).unwrap();
        let mut c = MsdCurve::with_lags(vec![1.0, 3.0]);
        c.accumulate_ticks(&p1, &[1, 3]);
        c.accumulate_ticks(&p2, &[1, 3]);
        assert_eq!(a, c);
    }

    #[test]
    fn autocorr_of_alternating_series() {
        let x: Vec<f64> = (0..1000).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let m = SeriesMoments::from_series(&x, 3);
        assert!((m.autocorr(0) - 1.0).abs() < 1e-12);
        assert!((m.autocorr(1) + 1.0).abs() < 1e-3);
        assert!((m.autocorr(2) - 1.0).abs() < 1e-3);
        assert!(m.variance() > 0.99);
    }

    #[test]
    fn autocorr_merge_is_exact_pooling() {
        let mut rng = stream(6, "acf-merge", 0);
        let x: Vec<f64> = (0..300).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut a = SeriesMoments::from_series(&x, 4);
        a.merge(&SeriesMoments::from_series(&y, 4)).unwrap();
        let mut b = SeriesMoments::new(4);
        b.accumulate(&x);
        b.accumulate(&y);
        // identical up to float reassociation
        assert_eq!(a.n, b.n);
        assert!((a.mean() - b.mean()).abs() < 1e-13);
        assert!((a.variance() - b.variance()).abs() < 1e-12);
        for k in 0..=4 {
            assert!((a.autocorr(k) - b.autocorr(k)).abs() < 1e-12, "lag {k}");
        }
    }

    #[test]
    fn sign_stats_skip_zeros() {
        let s = SignStats::from_series(&[1.0, -2.0, 3.0, -1.0]);
        assert_eq!((s.same, s.flipped, s.zeros), (0, 3, 0));
        assert_eq!(s.p_flip(), 1.0);
        // zeros join their neighbors: (+, 0, +) counts one same-sign pair
        let z = SignStats::from_series(&[2.0, 0.0, 1.0, -1.0]);
        assert_eq!((z.same, z.flipped, z.zeros), (1, 1, 1));
        let mut m = s;
        m.merge(&z);
        assert_eq!(m.pairs(), 5);
    }

    #[test]
    fn exponential_tail_fit_recovers_unit_scale() {
        let mut rng = stream(7, "tail-exp", 0);
        let samples: Vec<f64> = (0..400_000)
            .map(|_| {
                let e: f64 = rng.sample(Exp1);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            })
            .collect();
        let fit = fit_exponential_tail(&samples, None).unwrap();
        let kappa = fit.params[0];
        assert!((kappa - 1.0).abs() < 0.03, "kappa = {kappa}");
        assert!(fit.n_tail >= MIN_TAIL_SAMPLES);
        // rms of a two-sided unit exponential is sqrt(2)
        assert!((fit.window.0 - 2.0 * 2.0f64.sqrt()).abs() < 0.02);
    }

    #[test]
    fn tail_fit_rejects_thin_samples() {
        let samples: Vec<f64> = (0..500).map(|i| (i as f64 * 0.618).sin()).collect();
        assert!(fit_exponential_tail(&samples, None).is_err());
    }

    #[test]
    fn gaussian_tail_fit_recovers_curvature() {
        let mut rng = stream(8, "tail-gauss", 0);
        let sigma = 0.7;
        let samples: Vec<f64> =
            (0..400_000).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = fit_gaussian_tail(&samples, Some((1.0 * sigma, 3.5 * sigma))).unwrap();
        let c2 = fit.params[2];
        let want = -1.0 / (2.0 * sigma * sigma);
        assert!((c2 - want).abs() < 0.12 * want.abs(), "c2 = {c2}, want {want}");
    }

    #[test]
    fn loglog_fit_is_exact_on_power_laws() {
        let pts: Vec<(f64, f64)> = (1..40).map(|i| {
            let x = i as f64 * 0.25;
            (x, 3.0 * x.powf(1.7))
        }).collect();
        let fit = fit_loglog(&pts, (0.2, 10.0)).unwrap();
        assert!((fit.params[0] - 1.7).abs() < 1e-12);
        assert!((fit.params[1] - 3.0f64.ln()).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.5 * i as f64 - 4.0)).collect();
        let fit = fit_linear(&pts, (3.0, 15.0)).unwrap();
        assert!((fit.params[0] - 2.5).abs() < 1e-12);
        assert!((fit.params[1] + 4.0).abs() < 1e-12);
    }
}
