//! Unfolding and spectral fluctuation measures: nearest-neighbor
//! spacing distributions, spacing ratios, number variance and spectral
//! rigidity, with distances to the GUE and Poisson references.
//!
//! The only hard-coded reference curves are the ones with closed forms:
//! the 2x2-exact Wigner surmise for the GUE spacing distribution, the
//! exponential for Poisson, and the Poisson ratio mean 2 ln 2 - 1.
//! Everything else (large-N GUE ratio mean, Sigma^2 and Delta_3 bands)
//! is generated empirically by sampling GUE ensembles with this crate,
//! so no unverifiable constants enter the comparisons.

use serde::{Deserialize, Serialize};

use crate::ensemble::{SpectraSet, SpectrumSample};
use crate::error::{Error, Result};

/// Poisson reference for the mean folded spacing ratio: 2 ln 2 - 1.
pub const RTILDE_POISSON: f64 = 2.0 * std::f64::consts::LN_2 - 1.0;

/// Wigner surmise density for GUE spacings: (32/pi^2) s^2 exp(-4 s^2 / pi).
pub fn wigner_surmise_pdf(s: f64) -> f64 {
    let pi = std::f64::consts::PI;
    32.0 / (pi * pi) * s * s * (-4.0 * s * s / pi).exp()
}

/// CDF of the Wigner surmise: erf(2 s / sqrt(pi)) - (4 s / pi) exp(-4 s^2 / pi).
pub fn wigner_surmise_cdf(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let pi = std::f64::consts::PI;
    libm::erf(2.0 * s / pi.sqrt()) - 4.0 * s / pi * (-4.0 * s * s / pi).exp()
}

pub fn poisson_spacing_pdf(s: f64) -> f64 {
    (-s).exp()
}

pub fn poisson_spacing_cdf(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        1.0 - (-s).exp()
    }
}

/// One-sample Kolmogorov-Smirnov statistic against an analytic CDF.
pub fn ks_statistic(data: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    data.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS input"));
    let n = data.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in data.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.partial_cmp(y).expect("NaN"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("NaN"));
    let (na, nb) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    d
}

/// Asymptotic Kolmogorov p-value for a two-sample statistic.
pub fn ks_two_sample_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-1.0f64).powi(k - 1) * (-2.0 * lambda * lambda * (k * k) as f64).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Welford-style mean/variance accumulator with an associative merge.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MeanVar {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &MeanVar) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / total as f64;
        self.m2 += other.m2
            + delta * delta * self.count as f64 * other.count as f64 / total as f64;
        self.count = total;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Fixed-range histogram with an associative merge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total_in_range: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            counts: vec![0; bins],
            total_in_range: 0,
        }
    }

    pub fn push(&mut self, x: f64) {
        if x < self.lo || x >= self.hi || !x.is_finite() {
            return;
        }
        let bins = self.counts.len();
        let k = ((x - self.lo) / (self.hi - self.lo) * bins as f64) as usize;
        self.counts[k.min(bins - 1)] += 1;
        self.total_in_range += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        assert_eq!(self.counts.len(), other.counts.len());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_in_range += other.total_in_range;
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.counts.len()).map(|k| self.lo + k as f64 * w).collect()
    }

    /// Densities normalized so the histogram integrates to one over its range.
    pub fn densities(&self) -> Vec<f64> {
        let norm = self.total_in_range as f64 * self.bin_width();
        self.counts
            .iter()
            .map(|&c| if norm > 0.0 { c as f64 / norm } else { 0.0 })
            .collect()
    }
}

/// How a spectrum is mapped to unit mean spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum UnfoldMethod {
    /// Least-squares polynomial fit to the empirical staircase.
    PolynomialStaircase { degree: usize },
    /// Analytic semicircle CDF at scale lambda.
    SemicircleAnalytic { lambda: f64 },
    /// Interpolated average staircase pooled over the whole ensemble.
    EnsembleAverageStaircase,
}

impl UnfoldMethod {
    pub fn describe(&self) -> String {
        match self {
            UnfoldMethod::PolynomialStaircase { degree } => {
                format!("polynomial-staircase(degree={degree})")
            }
            UnfoldMethod::SemicircleAnalytic { lambda } => {
                format!("semicircle-analytic(lambda={lambda})")
            }
            UnfoldMethod::EnsembleAverageStaircase => "ensemble-average-staircase".into(),
        }
    }
}

/// A spectrum mapped to unit mean spacing, edges discarded.
#[derive(Debug, Clone)]
pub struct UnfoldedSpectrum {
    pub values: Vec<f64>,
    pub method: String,
    pub discarded_edge_fraction: f64,
}

/// Semicircle CDF on [-2, 2] (unit scale).
pub fn semicircle_cdf(e: f64) -> f64 {
    if e <= -2.0 {
        return 0.0;
    }
    if e >= 2.0 {
        return 1.0;
    }
    let pi = std::f64::consts::PI;
    0.5 + (e * (4.0 - e * e).sqrt() + 4.0 * (e / 2.0).asin()) / (4.0 * pi)
}

/// Pooled average staircase for ensemble unfolding.
pub struct EnsembleStaircase {
    pooled: Vec<f64>,
    n_samples: usize,
}

impl EnsembleStaircase {
    pub fn build(samples: &[SpectrumSample]) -> Self {
        let mut pooled: Vec<f64> = samples
            .iter()
            .flat_map(|s| s.eigenvalues.iter().copied())
            .collect();
        pooled.sort_by(|a, b| a.partial_cmp(b).expect("NaN eigenvalue"));
        Self {
            pooled,
            n_samples: samples.len(),
        }
    }

    /// Average cumulative level count at `x`, linearly interpolated.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.pooled.len();
        let k = self.pooled.partition_point(|&v| v < x);
        let frac = if k == 0 || k == n {
            0.0
        } else {
            let (lo, hi) = (self.pooled[k - 1], self.pooled[k]);
            if hi > lo {
                (x - lo) / (hi - lo)
            } else {
                0.0
            }
        };
        (k as f64 + frac) / self.n_samples as f64
    }
}

/// Least-squares polynomial fit in the Chebyshev basis; returns a
/// callable evaluator. Fails on rank deficiency.
fn fit_staircase_polynomial(
    xs: &[f64],
    ys: &[f64],
    degree: usize,
) -> Result<impl Fn(f64) -> f64> {
    let n = xs.len();
    let terms = degree + 1;
    if n < terms {
        return Err(Error::NumericFailure {
            context: format!("staircase fit needs at least {terms} levels, got {n}"),
            matrix_hash: None,
        });
    }
    let (lo, hi) = (xs[0], xs[n - 1]);
    if hi <= lo {
        return Err(Error::NumericFailure {
            context: "degenerate spectrum: zero spread".into(),
            matrix_hash: None,
        });
    }
    let map = move |x: f64| 2.0 * (x - lo) / (hi - lo) - 1.0;
    let cheb = |t: f64, buf: &mut Vec<f64>| {
        buf.clear();
        buf.push(1.0);
        if terms > 1 {
            buf.push(t);
        }
        for k in 2..terms {
            let next = 2.0 * t * buf[k - 1] - buf[k - 2];
            buf.push(next);
        }
    };
    // normal equations in the Chebyshev basis
    let mut ata = vec![0.0; terms * terms];
    let mut atb = vec![0.0; terms];
    let mut row = Vec::with_capacity(terms);
    for (&x, &y) in xs.iter().zip(ys) {
        cheb(map(x), &mut row);
        for i in 0..terms {
            atb[i] += row[i] * y;
            for j in 0..terms {
                ata[i * terms + j] += row[i] * row[j];
            }
        }
    }
    let coeffs = solve_dense(&mut ata, &mut atb, terms)?;
    Ok(move |x: f64| {
        let t = map(x);
        let mut buf = Vec::with_capacity(terms);
        let mut acc = 0.0;
        buf.push(1.0);
        if terms > 1 {
            buf.push(t);
        }
        for k in 2..terms {
            let next = 2.0 * t * buf[k - 1] - buf[k - 2];
            buf.push(next);
        }
        for (c, b) in coeffs.iter().zip(&buf) {
            acc += c * b;
        }
        acc
    })
}

/// Gaussian elimination with partial pivoting for small dense systems.
fn solve_dense(a: &mut [f64], b: &mut [f64], n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-12 {
            return Err(Error::NumericFailure {
                context: "rank-deficient staircase fit".into(),
                matrix_hash: None,
            });
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in (col + 1)..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
    }
    Ok(x)
}

/// Unfolds one spectrum. `staircase` must be supplied for the
/// ensemble-average method.
pub fn unfold(
    sample: &SpectrumSample,
    method: &UnfoldMethod,
    edge_fraction: f64,
    staircase: Option<&EnsembleStaircase>,
) -> Result<UnfoldedSpectrum> {
    let n = sample.eigenvalues.len();
    if n < 20 {
        return Err(Error::invalid(format!(
            "unfolding needs at least 20 levels, got {n}"
        )));
    }
    let xs = &sample.eigenvalues;
    let mapped: Vec<f64> = match method {
        UnfoldMethod::PolynomialStaircase { degree } => {
            let ys: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
            let fit = fit_staircase_polynomial(xs, &ys, *degree)?;
            xs.iter().map(|&x| fit(x)).collect()
        }
        UnfoldMethod::SemicircleAnalytic { lambda } => xs
            .iter()
            .map(|&x| n as f64 * semicircle_cdf(x / lambda))
            .collect(),
        UnfoldMethod::EnsembleAverageStaircase => {
            let st = staircase.ok_or_else(|| {
                Error::invalid("ensemble-average unfolding needs the pooled staircase")
            })?;
            xs.iter().map(|&x| st.eval(x)).collect()
        }
    };
    let discard = ((n as f64 * edge_fraction).floor() as usize).min(n / 4);
    let retained = &mapped[discard..n - discard];
    for w in retained.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::NumericFailure {
                context: "unfolding map is not strictly increasing on the retained window".into(),
                matrix_hash: None,
            });
        }
    }
    Ok(UnfoldedSpectrum {
        values: retained.to_vec(),
        method: method.describe(),
        discarded_edge_fraction: edge_fraction,
    })
}

/// Default method choice: ensemble-average staircase when at least 50
/// samples are available, else a degree-7 polynomial staircase.
pub fn default_method(n_samples: usize) -> UnfoldMethod {
    if n_samples >= 50 {
        UnfoldMethod::EnsembleAverageStaircase
    } else {
        UnfoldMethod::PolynomialStaircase { degree: 7 }
    }
}

/// Unfolds a whole set with one method.
pub fn unfold_set(
    set: &SpectraSet,
    method: &UnfoldMethod,
    edge_fraction: f64,
) -> Result<Vec<UnfoldedSpectrum>> {
    let staircase = match method {
        UnfoldMethod::EnsembleAverageStaircase => Some(EnsembleStaircase::build(&set.samples)),
        _ => None,
    };
    set.samples
        .iter()
        .map(|s| unfold(s, method, edge_fraction, staircase.as_ref()))
        .collect()
}

/// Minimum pooled spacings before KS distances are reported.
pub const MIN_SPACINGS_FOR_DISTANCES: usize = 1000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NnsdReport {
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub spacing_count: usize,
    /// KS distance to the Wigner surmise; absent below the sample floor.
    pub ks_to_gue: Option<f64>,
    /// KS distance to the exponential; absent below the sample floor.
    pub ks_to_poisson: Option<f64>,
}

/// Spacing distribution of pooled unfolded spectra.
pub fn nnsd(unfolded: &[UnfoldedSpectrum], bins: usize, range: f64) -> NnsdReport {
    let mut spacings = pooled_spacings(unfolded);
    let mut hist = Histogram::new(0.0, range, bins);
    for &s in &spacings {
        hist.push(s);
    }
    let (ks_to_gue, ks_to_poisson) = if spacings.len() >= MIN_SPACINGS_FOR_DISTANCES {
        let d_gue = ks_statistic(&mut spacings, wigner_surmise_cdf);
        let d_poi = ks_statistic(&mut spacings, poisson_spacing_cdf);
        (Some(d_gue), Some(d_poi))
    } else {
        (None, None)
    };
    NnsdReport {
        bin_edges: hist.bin_edges(),
        densities: hist.densities(),
        spacing_count: spacings.len(),
        ks_to_gue,
        ks_to_poisson,
    }
}

pub fn pooled_spacings(unfolded: &[UnfoldedSpectrum]) -> Vec<f64> {
    let mut out = Vec::new();
    for u in unfolded {
        for w in u.values.windows(2) {
            out.push(w[1] - w[0]);
        }
    }
    out
}

/// Small-s repulsion exponent: log-log slope of the NNSD histogram over
/// s in [0.05, 0.3].
pub fn repulsion_exponent(report: &NnsdReport) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, &d) in report.densities.iter().enumerate() {
        let mid = 0.5 * (report.bin_edges[k] + report.bin_edges[k + 1]);
        if (0.05..=0.3).contains(&mid) && d > 0.0 {
            xs.push(mid.ln());
            ys.push(d.ln());
        }
    }
    if xs.len() < 3 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
    pub bin_edges: Vec<f64>,
    pub densities: Vec<f64>,
    /// False when fewer than 1000 ratio triples were pooled.
    pub reliable: bool,
}

/// Folded consecutive-spacing ratios min(r, 1/r) on raw spectra, away
/// from the edges. No unfolding enters.
pub fn spacing_ratios(samples: &[SpectrumSample], edge_fraction: f64) -> RatioReport {
    let mut acc = MeanVar::default();
    let mut hist = Histogram::new(0.0, 1.0, 25);
    for s in samples {
        let n = s.eigenvalues.len();
        if n < 4 {
            continue;
        }
        let discard = ((n as f64 * edge_fraction).floor() as usize).min(n / 4);
        let vals = &s.eigenvalues[discard..n - discard];
        for w in vals.windows(3) {
            let s1 = w[1] - w[0];
            let s2 = w[2] - w[1];
            if s1 <= 0.0 || s2 <= 0.0 {
                continue;
            }
            let r = s2 / s1;
            let folded = r.min(1.0 / r);
            acc.push(folded);
            hist.push(folded);
        }
    }
    RatioReport {
        mean: acc.mean,
        stderr: acc.stderr(),
        count: acc.count as usize,
        bin_edges: hist.bin_edges(),
        densities: hist.densities(),
        reliable: acc.count >= 1000,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveReport {
    pub l_values: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Number variance: variance of the level count in windows of length L,
/// averaged over window positions (within a sample) and over samples.
pub fn number_variance(unfolded: &[UnfoldedSpectrum], l_grid: &[f64]) -> Result<CurveReport> {
    per_window_curve(unfolded, l_grid, |window_levels, _l| {
        window_levels.len() as f64
    })
    .map(|(l_values, per_sample)| reduce_window_stat(l_values, per_sample, true))
}

/// Dyson-Mehta least-squares staircase deviation over windows of length
/// L, averaged; computed from the exact integrals of the counting
/// function against {1, u}.
pub fn delta3(unfolded: &[UnfoldedSpectrum], l_grid: &[f64]) -> Result<CurveReport> {
    let (l_values, per_sample) = per_window_values(unfolded, l_grid, delta3_window)?;
    Ok(reduce_window_stat(l_values, per_sample, false))
}

/// Least-squares deviation of the staircase from a straight line on one
/// window; `ts` are the level positions relative to the window start.
fn delta3_window(ts: &[f64], l: f64) -> f64 {
    // S0 = (1/L) int N du, S1 = (1/L) int u N du, S2 = (1/L) int N^2 du
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (k, &t) in ts.iter().enumerate() {
        s0 += l - t;
        s1 += 0.5 * (l * l - t * t);
        s2 += (2 * k + 1) as f64 * (l - t);
    }
    s0 /= l;
    s1 /= l;
    s2 /= l;
    // fit N(u) ~ A + B u under (1/L) int_0^L
    let a = 4.0 * s0 - 6.0 * s1 / l;
    let b = (12.0 * s1 - 6.0 * l * s0) / (l * l);
    (s2 - a * s0 - b * s1).max(0.0)
}

type PerSampleCurves = Vec<Vec<MeanVar>>;

fn per_window_values(
    unfolded: &[UnfoldedSpectrum],
    l_grid: &[f64],
    stat: impl Fn(&[f64], f64) -> f64,
) -> Result<(Vec<f64>, PerSampleCurves)> {
    if unfolded.is_empty() {
        return Err(Error::invalid("no unfolded spectra supplied"));
    }
    let min_span = unfolded
        .iter()
        .map(|u| u.values.last().unwrap() - u.values.first().unwrap())
        .fold(f64::INFINITY, f64::min);
    let l_values: Vec<f64> = l_grid
        .iter()
        .copied()
        .filter(|&l| l > 0.0 && l <= min_span / 10.0)
        .collect();
    if l_values.is_empty() {
        return Err(Error::invalid(format!(
            "no admissible window lengths: retained span {min_span:.1} supports L <= {:.2}",
            min_span / 10.0
        )));
    }
    let step = 0.5;
    let mut per_sample: PerSampleCurves = Vec::with_capacity(unfolded.len());
    for u in unfolded {
        let lo = *u.values.first().unwrap();
        let hi = *u.values.last().unwrap();
        let mut curves = vec![MeanVar::default(); l_values.len()];
        for (li, &l) in l_values.iter().enumerate() {
            let mut pos = lo;
            while pos + l <= hi {
                let start = u.values.partition_point(|&v| v < pos);
                let end = u.values.partition_point(|&v| v < pos + l);
                let ts: Vec<f64> = u.values[start..end].iter().map(|&v| v - pos).collect();
                curves[li].push(stat(&ts, l));
                pos += step;
            }
        }
        per_sample.push(curves);
    }
    Ok((l_values, per_sample))
}

fn per_window_curve(
    unfolded: &[UnfoldedSpectrum],
    l_grid: &[f64],
    stat: impl Fn(&[f64], f64) -> f64,
) -> Result<(Vec<f64>, PerSampleCurves)> {
    per_window_values(unfolded, l_grid, stat)
}

/// Collapses per-sample window accumulators into a curve with a
/// between-sample standard error. For the number variance the
/// per-sample statistic is the within-sample count variance; for
/// Delta_3 it is the within-sample window mean.
fn reduce_window_stat(
    l_values: Vec<f64>,
    per_sample: PerSampleCurves,
    use_variance: bool,
) -> CurveReport {
    let mut values = Vec::with_capacity(l_values.len());
    let mut stderr = Vec::with_capacity(l_values.len());
    for li in 0..l_values.len() {
        let mut across = MeanVar::default();
        for curves in &per_sample {
            let s = &curves[li];
            if s.count == 0 {
                continue;
            }
            across.push(if use_variance { s.variance() } else { s.mean });
        }
        values.push(across.mean);
        stderr.push(across.stderr());
    }
    CurveReport {
        l_values,
        values,
        stderr,
    }
}

/// Everything measured on one ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub label: String,
    pub samples: usize,
    pub levels: usize,
    pub unfold_method: String,
    pub nnsd: NnsdReport,
    pub ratios: RatioReport,
    pub number_variance: CurveReport,
    pub delta3: CurveReport,
    pub repulsion_exponent: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsOptions {
    pub unfold: Option<UnfoldMethod>,
    pub edge_fraction: f64,
    pub nnsd_bins: usize,
    pub nnsd_range: f64,
    pub l_grid: Vec<f64>,
}

impl Default for StatsOptions {
    fn default() -> Self {
        Self {
            unfold: None,
            edge_fraction: 0.05,
            nnsd_bins: 40,
            nnsd_range: 4.0,
            l_grid: (1..=10).map(|k| k as f64).collect(),
        }
    }
}

/// Full fluctuation analysis of one spectra set.
pub fn analyze(set: &SpectraSet, label: &str, opts: &StatsOptions) -> Result<FluctuationReport> {
    let method = opts
        .unfold
        .clone()
        .unwrap_or_else(|| default_method(set.samples.len()));
    let unfolded = unfold_set(set, &method, opts.edge_fraction)?;
    let nnsd_report = nnsd(&unfolded, opts.nnsd_bins, opts.nnsd_range);
    let exponent = repulsion_exponent(&nnsd_report);
    let ratios = spacing_ratios(&set.samples, opts.edge_fraction);
    let number_variance = number_variance(&unfolded, &opts.l_grid)?;
    let d3 = delta3(&unfolded, &opts.l_grid)?;
    Ok(FluctuationReport {
        label: label.to_string(),
        samples: set.samples.len(),
        levels: set.eigenvalue_count(),
        unfold_method: method.describe(),
        nnsd: nnsd_report,
        ratios,
        number_variance,
        delta3: d3,
        repulsion_exponent: exponent,
    })
}

/// Which reference an ensemble's fluctuations match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    GueConsistent,
    PoissonConsistent,
    Inconclusive,
}

/// Coarse classification from the analytic KS distances. The GUE and
/// Poisson spacing laws are far apart (KS distance about 0.3), so the
/// bands are conservative.
pub fn verdict(report: &FluctuationReport) -> Verdict {
    match (report.nnsd.ks_to_gue, report.nnsd.ks_to_poisson) {
        (Some(g), Some(p)) if g < 0.05 && p > 0.15 => Verdict::GueConsistent,
        (Some(g), Some(p)) if p < 0.05 && g > 0.15 => Verdict::PoissonConsistent,
        _ => Verdict::Inconclusive,
    }
}

/// Distance summary between two reports on compatible grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportComparison {
    /// Sup difference of the binned NNSD CDFs.
    pub nnsd_ks: f64,
    pub ratio_mean_diff: f64,
    pub ratio_mean_combined_stderr: f64,
    pub sigma2_sup_diff: f64,
    /// Max over the grid of |diff| / sqrt(se_a^2 + se_b^2).
    pub sigma2_max_sigma_units: f64,
    pub delta3_sup_diff: f64,
    pub delta3_max_sigma_units: f64,
}

pub fn compare(a: &FluctuationReport, b: &FluctuationReport) -> Result<ReportComparison> {
    if a.nnsd.bin_edges != b.nnsd.bin_edges {
        return Err(Error::invalid("NNSD histograms use different grids"));
    }
    if a.number_variance.l_values != b.number_variance.l_values
        || a.delta3.l_values != b.delta3.l_values
    {
        return Err(Error::invalid("curve L grids differ"));
    }
    let w = a.nnsd.bin_edges[1] - a.nnsd.bin_edges[0];
    let mut cdf_a = 0.0;
    let mut cdf_b = 0.0;
    let mut nnsd_ks: f64 = 0.0;
    for (da, db) in a.nnsd.densities.iter().zip(&b.nnsd.densities) {
        cdf_a += da * w;
        cdf_b += db * w;
        nnsd_ks = nnsd_ks.max((cdf_a - cdf_b).abs());
    }
    let curve_diff = |x: &CurveReport, y: &CurveReport| {
        let mut sup: f64 = 0.0;
        let mut sig: f64 = 0.0;
        for i in 0..x.values.len() {
            let d = (x.values[i] - y.values[i]).abs();
            sup = sup.max(d);
            let se = (x.stderr[i].powi(2) + y.stderr[i].powi(2)).sqrt();
            if se > 0.0 {
                sig = sig.max(d / se);
            }
        }
        (sup, sig)
    };
    let (sigma2_sup_diff, sigma2_max_sigma_units) =
        curve_diff(&a.number_variance, &b.number_variance);
    let (delta3_sup_diff, delta3_max_sigma_units) = curve_diff(&a.delta3, &b.delta3);
    Ok(ReportComparison {
        nnsd_ks,
        ratio_mean_diff: (a.ratios.mean - b.ratios.mean).abs(),
        ratio_mean_combined_stderr: (a.ratios.stderr.powi(2) + b.ratios.stderr.powi(2)).sqrt(),
        sigma2_sup_diff,
        sigma2_max_sigma_units,
        delta3_sup_diff,
        delta3_max_sigma_units,
    })
}
