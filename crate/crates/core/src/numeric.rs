//! Small numerical kernels shared by the engines: compensated summation,
//! log-sum-exp, the Walsh–Hadamard transform and a few estimators.

use alloc::vec::Vec;
use core::f64::consts::LN_2;

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(iter);
    acc.value()
}

/// Natural log of a positive finite number, split as `ln(m) + e ln 2` with
/// `m ∈ [1, 2)`, so exact powers of two come out as `e * LN_2` bit-for-bit.
pub fn ln_split(x: f64) -> f64 {
    let (fr, e) = libm::frexp(x);
    libm::log(2.0 * fr) + (e - 1) as f64 * LN_2
}

/// Max-shifted log-sum-exp. Returns `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s = compensated_sum(xs.iter().map(|&x| libm::exp(x - max)));
    max + ln_split(s)
}

/// In-place unnormalized Walsh–Hadamard transform. Length must be a power of two.
pub fn walsh_hadamard(buf: &mut [f64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in buf.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
}

/// XOR correlation `out(x) = Σ_y a(y) b(x ⊕ y)` given `a` and the
/// Walsh–Hadamard spectrum of `b`.
pub fn xor_convolve(a: &[f64], b_spectrum: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b_spectrum.len());
    let mut buf = a.to_vec();
    walsh_hadamard(&mut buf);
    for (x, y) in buf.iter_mut().zip(b_spectrum) {
        *x *= y;
    }
    walsh_hadamard(&mut buf);
    let scale = 1.0 / buf.len() as f64;
    for x in &mut buf {
        *x *= scale;
    }
    buf
}

/// Mean of a column. Constant columns return their common value exactly.
pub fn column_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return xs[0];
    }
    compensated_sum(xs.iter().copied()) / xs.len() as f64
}

/// Sample mean and standard error (sample sd over `√n`). Zero error for a
/// single sample or a constant column.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mean = column_mean(xs);
    if n < 2 || xs.iter().all(|&x| x == xs[0]) {
        return (mean, 0.0);
    }
    let ss = compensated_sum(xs.iter().map(|&x| (x - mean) * (x - mean)));
    let var = ss / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}

/// Delete-one jackknife of a smooth statistic of column means.
///
/// `columns` all have the same length `S` (one entry per disorder sample).
/// Returns the full-sample value of `stat` and its jackknife standard error.
pub fn jackknife<F>(columns: &[&[f64]], stat: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let s = columns.first().map_or(0, |c| c.len());
    debug_assert!(columns.iter().all(|c| c.len() == s));
    let means: Vec<f64> = columns.iter().map(|c| column_mean(c)).collect();
    let full = stat(&means);
    if s < 2 {
        return (full, 0.0);
    }
    let sums: Vec<f64> = columns
        .iter()
        .map(|c| compensated_sum(c.iter().copied()))
        .collect();
    let denom = (s - 1) as f64;
    let mut loo = alloc::vec![0.0; columns.len()];
    let mut thetas = Vec::with_capacity(s);
    for i in 0..s {
        for (k, c) in columns.iter().enumerate() {
            loo[k] = (sums[k] - c[i]) / denom;
        }
        thetas.push(stat(&loo));
    }
    if thetas.iter().all(|&t| t == thetas[0]) {
        return (full, 0.0);
    }
    let tbar = compensated_sum(thetas.iter().copied()) / s as f64;
    let ss = compensated_sum(thetas.iter().map(|&t| (t - tbar) * (t - tbar)));
    (full, libm::sqrt(ss * denom / s as f64))
}

/// Ordinary least squares `y = intercept + slope·x`; returns
/// `(slope, intercept, rms residual)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = compensated_sum(xs.iter().copied()) / n;
    let my = compensated_sum(ys.iter().copied()) / n;
    let sxx = compensated_sum(xs.iter().map(|&x| (x - mx) * (x - mx)));
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = compensated_sum(
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| (y - intercept - slope * x) * (y - intercept - slope * x)),
    );
    (slope, intercept, libm::sqrt(rss / n))
}

/// Least squares line through the origin `y = slope·x`; returns
/// `(slope, rms residual)`.
pub fn origin_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let sxx = compensated_sum(xs.iter().map(|&x| x * x));
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(&x, &y)| x * y));
    let slope = sxy / sxx;
    let rss = compensated_sum(
        xs.iter()
            .zip(ys)
            .map(|(&x, &y)| (y - slope * x) * (y - slope * x)),
    );
    (slope, libm::sqrt(rss / xs.len() as f64))
}

/// Batch-means estimate of a time series mean. Uses the first
/// `n_batches * ⌊len / n_batches⌋` points.
pub fn batch_means(series: &[f64], n_batches: usize) -> Option<(f64, f64)> {
    if n_batches < 2 || series.len() < n_batches {
        return None;
    }
    let size = series.len() / n_batches;
    let batch: Vec<f64> = series
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| compensated_sum(c.iter().copied()) / size as f64)
        .collect();
    Some(mean_stderr(&batch))
}

/// Integrated autocorrelation time `1 + 2 Σ ρ(t)` with Sokal's automatic
/// window (`W ≥ c·τ(W)`, `c = 5`). White noise gives ≈ 1.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    const WINDOW_FACTOR: f64 = 5.0;
    let n = series.len();
    if n < 2 {
        return 1.0;
    }
    let mean = column_mean(series);
    let c0 = compensated_sum(series.iter().map(|&x| (x - mean) * (x - mean))) / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n {
        let ct = compensated_sum(
            series[..n - t]
                .iter()
                .zip(&series[t..])
                .map(|(&a, &b)| (a - mean) * (b - mean)),
        ) / n as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= WINDOW_FACTOR * tau {
            break;
        }
    }
    tau.max(f64::MIN_POSITIVE)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    if a.is_empty() || b.is_empty() {
        return (0.0, 1.0);
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = if xa[i] <= xb[j] { xa[i] } else { xb[j] };
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = libm::sqrt(na * nb / (na + nb));
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// Complementary Kolmogorov distribution `Q(λ) = 2 Σ (-1)^{j-1} e^{-2 j² λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let a = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * libm::exp(a * jf * jf);
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
