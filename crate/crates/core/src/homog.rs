//! Windowed homogenization of compliance samples and RVE length selection.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::microdata::{MicroError, Provenance, SampleSet};

#[derive(Debug, Error)]
pub enum HomogError {
    #[error("window {window} um exceeds the sample length {length} um")]
    WindowTooLarge { window: f64, length: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no candidate length reaches epsilon <= {}", .0.tol)]
    NoRve(RveReport),
    #[error(transparent)]
    Micro(#[from] MicroError),
}

fn window_elements(h: f64, window: f64) -> Result<usize, HomogError> {
    let ratio = window / h;
    let w = ratio.round();
    if !(w >= 1.0 && (ratio - w).abs() <= 1e-9 * ratio.max(1.0)) {
        return Err(HomogError::InvalidParameter(format!("window {window} is not a positive multiple of h = {h}")));
    }
    Ok(w as usize)
}

/// Centered moving average of `sample` over `window / h` elements, truncated
/// at the sample ends.
pub fn homogenize(sample: &[f64], h: f64, window: f64) -> Result<Vec<f64>, HomogError> {
    let w = window_elements(h, window)?;
    let n = sample.len();
    if w > n {
        return Err(HomogError::WindowTooLarge { window, length: n as f64 * h });
    }
    if w == 1 {
        return Ok(sample.to_vec());
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in sample {
        acc += v;
        prefix.push(acc);
    }
    let (lo, hi) = sample.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let back = (w - 1) / 2;
    Ok((0..n)
        .map(|j| {
            let start = j.saturating_sub(back);
            let end = (j + w - back).min(n);
            // Prefix-sum round-off must not leave the data range.
            ((prefix[end] - prefix[start]) / (end - start) as f64).clamp(lo, hi)
        })
        .collect())
}

/// [`homogenize`] applied to every sample of a set.
pub fn homogenize_set(s: &SampleSet, window: f64) -> Result<SampleSet, HomogError> {
    let rows: Vec<Vec<f64>> = s
        .samples()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|row| homogenize(row, s.h, window))
        .collect::<Result<_, _>>()?;
    Ok(SampleSet::from_rows(s.h, rows, Provenance::Homogenized { window_um: window })?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RveReport {
    pub lengths: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub tol: f64,
    pub l_rve: Option<f64>,
}

impl RveReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("L_um,epsilon\n");
        for (l, e) in self.lengths.iter().zip(&self.epsilon) {
            let _ = writeln!(out, "{l},{e}");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scatter of the effective parameter: x-averaged std over x-averaged mean.
pub fn rve_epsilon(s: &SampleSet, window: f64) -> Result<f64, HomogError> {
    let eff = homogenize_set(s, window)?;
    let m = eff.n_samples() as f64;
    let (mut mean_sum, mut std_sum) = (0.0, 0.0);
    for j in 0..eff.n_x() {
        let col = eff.column(j);
        let mu = col.iter().sum::<f64>() / m;
        let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
        mean_sum += mu;
        std_sum += var.sqrt();
    }
    Ok(std_sum / mean_sum)
}

/// Smallest candidate length whose scatter is within `tol`.
pub fn rve_length(s: &SampleSet, lengths: &[f64], tol: f64) -> Result<RveReport, HomogError> {
    if lengths.is_empty() || lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HomogError::InvalidParameter("candidate lengths must be ascending".into()));
    }
    if !(tol > 0.0) {
        return Err(HomogError::InvalidParameter(format!("tolerance {tol}")));
    }
    let epsilon = lengths.iter().map(|&l| rve_epsilon(s, l)).collect::<Result<Vec<f64>, _>>()?;
    let l_rve = lengths.iter().zip(&epsilon).find(|(_, &e)| e <= tol).map(|(&l, _)| l);
    let report = RveReport { lengths: lengths.to_vec(), epsilon, tol, l_rve };
    match l_rve {
        Some(_) => Ok(report),
        None => Err(HomogError::NoRve(report)),
    }
}
