//! Pointwise moments, empirical correlation, histograms, ECDFs and p-boxes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::microdata::SampleSet;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("zero variance: higher moments are undefined")]
    DegenerateVariance,
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
}

/// Pointwise sample moments with population (1/M) normalization.
///
/// `gamma1`/`gamma2` are `NaN` where `sigma == 0`; those grid indices are
/// listed in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCurves {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub degenerate: Vec<usize>,
}

impl MomentCurves {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_um,mu,sigma,gamma1,gamma2\n");
        for j in 0..self.x.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.x[j], self.mu[j], self.sigma[j], self.gamma1[j], self.gamma2[j]
            );
        }
        out
    }

    /// Values of the four moment curves at the non-degenerate points.
    pub fn finite_columns(&self) -> [Vec<f64>; 4] {
        let keep = |v: &Vec<f64>| -> Vec<f64> {
            (0..v.len())
                .filter(|&j| self.gamma1[j].is_finite() && self.gamma2[j].is_finite())
                .map(|j| v[j])
                .collect()
        };
        [keep(&self.mu), keep(&self.sigma), keep(&self.gamma1), keep(&self.gamma2)]
    }
}

/// Mean, standard deviation, skewness and excess kurtosis of one set of
/// values, all with 1/M normalization. Returns `None` for the last two when
/// the variance vanishes.
pub fn four_moments(values: &[f64]) -> (f64, f64, Option<(f64, f64)>) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    let sigma = var.sqrt();
    // Relative threshold so that round-off on constant data counts as zero.
    if !(sigma > 1e-13 * mu.abs().max(f64::MIN_POSITIVE)) {
        return (mu, 0.0, None);
    }
    let (mut s3, mut s4) = (0.0, 0.0);
    for v in values {
        let z = (v - mu) / sigma;
        s3 += z * z * z;
        s4 += z * z * z * z;
    }
    (mu, sigma, Some((s3 / n, s4 / n - 3.0)))
}

pub fn pointwise_moments(s: &SampleSet) -> Result<MomentCurves, StatsError> {
    if s.n_samples() < 2 {
        return Err(StatsError::TooFewValues { needed: 2, got: s.n_samples() });
    }
    let per_point: Vec<(f64, f64, Option<(f64, f64)>)> =
        (0..s.n_x()).into_par_iter().map(|j| four_moments(&s.column(j))).collect();
    let mut out = MomentCurves {
        x: s.x(),
        mu: Vec::with_capacity(s.n_x()),
        sigma: Vec::with_capacity(s.n_x()),
        gamma1: Vec::with_capacity(s.n_x()),
        gamma2: Vec::with_capacity(s.n_x()),
        degenerate: Vec::new(),
    };
    for (j, (mu, sigma, shape)) in per_point.into_iter().enumerate() {
        out.mu.push(mu);
        out.sigma.push(sigma);
        match shape {
            Some((g1, g2)) => {
                out.gamma1.push(g1);
                out.gamma2.push(g2);
            }
            None => {
                out.gamma1.push(f64::NAN);
                out.gamma2.push(f64::NAN);
                out.degenerate.push(j);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub lags: Vec<f64>,
    pub c: Vec<f64>,
}

impl CorrelationCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r_um,C\n");
        for (r, c) in self.lags.iter().zip(&self.c) {
            let _ = writeln!(out, "{r},{c}");
        }
        out
    }

    /// Pointwise mean of several curves over their common lags.
    pub fn mean(curves: &[CorrelationCurve]) -> CorrelationCurve {
        let n = curves.iter().map(|c| c.c.len()).min().unwrap_or(0);
        let c = (0..n)
            .map(|k| curves.iter().map(|cv| cv.c[k]).sum::<f64>() / curves.len() as f64)
            .collect();
        CorrelationCurve { lags: curves.first().map_or(vec![], |c| c.lags[..n].to_vec()), c }
    }
}

/// Normalized empirical correlation of one sample for lags `0..=max_lag`.
///
/// On a uniform grid the pairs at distance `r_n ± h/2` are exactly the index
/// pairs `(i, i + n)`. Each sum in the denominator runs over the members of
/// those pairs, which bounds `|C|` by one.
pub fn correlation_function(sample: &[f64], h: f64, max_lag: usize) -> Result<CorrelationCurve, StatsError> {
    let n = sample.len();
    if n < 2 {
        return Err(StatsError::TooFewValues { needed: 2, got: n });
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = sample.iter().map(|v| v - mean).collect();
    let total: f64 = d.iter().map(|v| v * v).sum();
    if !(total > 1e-26 * mean * mean * n as f64) {
        return Err(StatsError::DegenerateVariance);
    }
    let max_lag = max_lag.min(n - 1);
    let mut lags = Vec::with_capacity(max_lag + 1);
    let mut c = Vec::with_capacity(max_lag + 1);
    for lag in 0..=max_lag {
        let (mut num, mut left, mut right) = (0.0, 0.0, 0.0);
        for i in 0..n - lag {
            let (a, b) = (d[i], d[i + lag]);
            num += a * b;
            left += a * a;
            right += b * b;
        }
        let denom = left.sqrt() * right.sqrt();
        lags.push(lag as f64 * h);
        c.push(if denom > 0.0 { (num / denom).clamp(-1.0, 1.0) } else { 0.0 });
    }
    Ok(CorrelationCurve { lags, c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn midpoints(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_degenerate(&self) -> bool {
        self.counts.len() == 1
    }
}

/// Equal-width histogram over `[min, max]`; the last bin is closed on the
/// right. Constant input yields a single degenerate bin `[v, v]`.
pub fn histogram(values: &[f64], n_bins: usize) -> Result<Histogram, StatsError> {
    if values.is_empty() {
        return Err(StatsError::TooFewValues { needed: 1, got: 0 });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // A spread at round-off level counts as a single value.
    if !(hi - lo > 1e-12 * lo.abs().max(hi.abs())) || n_bins == 0 {
        return Ok(Histogram { edges: vec![lo, hi], counts: vec![values.len()] });
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|k| if k == n_bins { hi } else { lo + k as f64 * width })
        .collect();
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        let mut k = (((v - lo) / width) as usize).min(n_bins - 1);
        // Guard against round-off at interior edges.
        while k > 0 && v < edges[k] {
            k -= 1;
        }
        while k + 1 < n_bins && v >= edges[k + 1] {
            k += 1;
        }
        counts[k] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(values: &[f64]) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::TooFewValues { needed: 1, got: 0 });
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn support(&self) -> &[f64] {
        &self.sorted
    }

    /// `P(X <= x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Generalized inverse `inf { x : F(x) >= p }`; `p <= 0` gives the minimum.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let k = (p * n as f64).ceil() as isize - 1;
        self.sorted[k.clamp(0, n as isize - 1) as usize]
    }

    /// Distinct support values with their step probabilities.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = (i + 1) as f64 / n,
                _ => out.push((v, (i + 1) as f64 / n)),
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,prob\n");
        for (v, p) in self.steps() {
            let _ = writeln!(out, "{v},{p}");
        }
        out
    }

    /// Kolmogorov-Smirnov distance to a continuous CDF.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        let mut d = 0.0_f64;
        for (i, &v) in self.sorted.iter().enumerate() {
            let f = cdf(v);
            d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
        }
        d
    }

    /// Two-sample Kolmogorov-Smirnov distance.
    pub fn ks_distance_to(&self, other: &Ecdf) -> f64 {
        let mut d = 0.0_f64;
        for &v in self.sorted.iter().chain(&other.sorted) {
            d = d.max((self.eval(v) - other.eval(v)).abs());
        }
        d
    }
}

pub fn ecdf(values: &[f64]) -> Result<Ecdf, StatsError> {
    Ecdf::new(values)
}

/// Step function given on sorted breakpoints, right-continuous, `0` to the
/// left of the first breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCdf {
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
}

impl StepCdf {
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.points.partition_point(|&v| v <= x);
        if k == 0 {
            0.0
        } else {
            self.probs[k - 1]
        }
    }
}

/// Family of ECDFs with pointwise envelopes over the union of supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PBox {
    pub members: Vec<Ecdf>,
    /// Pointwise minimum of the member CDFs.
    pub lower: StepCdf,
    /// Pointwise maximum of the member CDFs.
    pub upper: StepCdf,
}

pub fn pbox(members: Vec<Ecdf>) -> Result<PBox, StatsError> {
    if members.is_empty() {
        return Err(StatsError::TooFewValues { needed: 1, got: 0 });
    }
    let mut points: Vec<f64> = members.iter().flat_map(|m| m.support().iter().copied()).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut lower = Vec::with_capacity(points.len());
    let mut upper = Vec::with_capacity(points.len());
    for &x in &points {
        let (lo, hi) = members
            .iter()
            .map(|m| m.eval(x))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f), hi.max(f)));
        lower.push(lo);
        upper.push(hi);
    }
    Ok(PBox {
        members,
        lower: StepCdf { points: points.clone(), probs: lower },
        upper: StepCdf { points, probs: upper },
    })
}

impl PBox {
    pub fn contains(&self, f: &Ecdf, x: f64) -> bool {
        let v = f.eval(x);
        self.lower.eval(x) <= v && v <= self.upper.eval(x)
    }
}
