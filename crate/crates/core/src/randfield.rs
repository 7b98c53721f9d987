//! Gaussian fields by truncated Karhunen-Loève expansion and their beta
//! translation into fuzzy-stochastic compliance fields.

use std::fmt::Write as _;
use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::{fuzzify_with_fallback, segment_params, FuzzyError, FuzzyVariable, FuzzyVector, Interaction};
use crate::microdata::SampleSet;
use crate::quad::trapezoid_weights;
use crate::special::{beta_pdf_std, inc_beta, inc_beta_inv, std_normal_cdf, std_normal_pdf, SpecialError};
use crate::stats::{histogram, pointwise_moments, StatsError};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("eigen residual {residual:e} exceeds {tolerance:e}")]
    EigenFailure { residual: f64, tolerance: f64 },
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("skewness {gamma1} and excess kurtosis {gamma2} are outside the beta family")]
    InfeasibleMoments { gamma1: f64, gamma2: f64 },
    #[error("beta support starts at {loc}, field would not be positive")]
    NonPositiveSupport { loc: f64 },
    #[error("malformed basis file: {0}")]
    FormatError(String),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn se_covariance(x1: f64, x2: f64, ell: f64) -> f64 {
    let d = x1 - x2;
    (-d * d / (2.0 * ell * ell)).exp()
}

/// Truncated KL basis of the unit-variance squared-exponential kernel on the
/// grid `x_j = j h`, `j < n_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct KLBasis {
    pub h: f64,
    pub n_x: usize,
    pub ell: f64,
    /// All operator eigenvalues (μm), descending.
    pub eigenvalues: Vec<f64>,
    pub n_terms: usize,
    /// Retained standard-deviation fraction `sqrt(Σ_{n<=N} λ / Σ λ)`.
    pub preserved_fraction: f64,
    /// Retained eigenfunctions, `n_terms × n_x` row-major.
    pub modes: Vec<f64>,
    /// `sqrt(λ_n) φ_n(x_j)`, same layout as `modes`.
    scaled: Vec<f64>,
    /// Pointwise standard deviation of the truncated field.
    std: Vec<f64>,
}

/// Largest coarse grid the dense eigen-solver is given.
const MAX_COARSE: usize = 2501;

pub fn kl_decompose(length: f64, h: f64, ell: f64, preserved_std_fraction: f64) -> Result<KLBasis, FieldError> {
    if !(length > 0.0 && h > 0.0 && ell > 0.0) {
        return Err(FieldError::InvalidParameter(format!("L = {length}, h = {h}, ell = {ell}")));
    }
    if !(preserved_std_fraction > 0.0 && preserved_std_fraction <= 1.0) {
        return Err(FieldError::InvalidParameter(format!(
            "preserved fraction {preserved_std_fraction} not in (0, 1]"
        )));
    }
    let n_x = (length / h).round() as usize;
    if n_x < 2 {
        return Err(FieldError::InvalidParameter(format!("grid of {n_x} points")));
    }
    let span = (n_x - 1) as f64 * h;
    let n_c = ((span / (ell / 10.0)).ceil() as usize + 1).clamp(2, MAX_COARSE);
    // Use the fine grid itself when it is no denser than the coarse one.
    let (n_c, hc) = if n_c >= n_x { (n_x, h) } else { (n_c, span / (n_c - 1) as f64) };
    let xc: Vec<f64> = (0..n_c).map(|i| i as f64 * hc).collect();
    let w = trapezoid_weights(n_c, hc);
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();

    let a = DMatrix::from_fn(n_c, n_c, |i, j| sw[i] * se_covariance(xc[i], xc[j], ell) * sw[j]);
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n_c).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();

    let mut acc = 0.0;
    let mut n_terms = n_c;
    for (k, l) in eigenvalues.iter().enumerate() {
        acc += l;
        if (acc / total).sqrt() >= preserved_std_fraction - 1e-15 {
            n_terms = k + 1;
            break;
        }
    }
    let preserved_fraction = (eigenvalues[..n_terms].iter().sum::<f64>() / total).sqrt();

    let norm = eigenvalues[0];
    let tolerance = 1e-8 * norm;
    let mut coarse_modes = Vec::with_capacity(n_terms);
    for &idx in &order[..n_terms] {
        let v = eig.eigenvectors.column(idx);
        let lambda = eig.eigenvalues[idx];
        let residual = (&a * v - v * lambda).norm();
        if residual > tolerance {
            return Err(FieldError::EigenFailure { residual, tolerance });
        }
        coarse_modes.push((lambda, (0..n_c).map(|i| v[i] / sw[i].max(f64::MIN_POSITIVE)).collect::<Vec<f64>>()));
    }

    // Nyström extension φ(x) = λ⁻¹ Σ_i w_i k(x, x_i) φ(x_i), using only the
    // coarse nodes within the kernel's numerical reach.
    let reach = 9.0 * ell;
    let mut modes = vec![0.0; n_terms * n_x];
    for j in 0..n_x {
        let x = j as f64 * h;
        let i0 = (((x - reach) / hc).floor().max(0.0)) as usize;
        let i1 = (((x + reach) / hc).ceil() as usize).min(n_c - 1);
        for i in i0..=i1 {
            let kw = w[i] * se_covariance(x, xc[i], ell);
            if kw == 0.0 {
                continue;
            }
            for (n, (lambda, phi)) in coarse_modes.iter().enumerate() {
                modes[n * n_x + j] += kw * phi[i] / lambda;
            }
        }
    }
    orthonormalize(&mut modes, n_terms, n_x, h);
    orthonormalize(&mut modes, n_terms, n_x, h);

    let mut scaled = modes.clone();
    let mut var = vec![0.0; n_x];
    for n in 0..n_terms {
        let s = eigenvalues[n].sqrt();
        for j in 0..n_x {
            let v = s * modes[n * n_x + j];
            scaled[n * n_x + j] = v;
            var[j] += v * v;
        }
    }
    Ok(KLBasis {
        h,
        n_x,
        ell,
        eigenvalues,
        n_terms,
        preserved_fraction,
        modes,
        scaled,
        std: var.into_iter().map(f64::sqrt).collect(),
    })
}

/// Modified Gram-Schmidt under `<f, g> = h Σ f g`.
fn orthonormalize(modes: &mut [f64], n_terms: usize, n_x: usize, h: f64) {
    for n in 0..n_terms {
        for k in 0..n {
            let (done, rest) = modes.split_at_mut(n * n_x);
            let fk = &done[k * n_x..(k + 1) * n_x];
            let fnn = &mut rest[..n_x];
            let dot = h * fk.iter().zip(fnn.iter()).map(|(a, b)| a * b).sum::<f64>();
            fnn.iter_mut().zip(fk).for_each(|(b, a)| *b -= dot * a);
        }
        let row = &mut modes[n * n_x..(n + 1) * n_x];
        let norm = (h * row.iter().map(|v| v * v).sum::<f64>()).sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
}

impl KLBasis {
    pub fn length(&self) -> f64 {
        self.n_x as f64 * self.h
    }

    pub fn x(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| j as f64 * self.h).collect()
    }

    pub fn mode(&self, n: usize) -> &[f64] {
        &self.modes[n * self.n_x..(n + 1) * self.n_x]
    }

    /// Pointwise standard deviation `sqrt(Σ_n λ_n φ_n(x_j)²)` of the truncated field.
    pub fn pointwise_std(&self) -> &[f64] {
        &self.std
    }

    /// Largest `|h Σ φ_n φ_k - δ_nk|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..self.n_terms {
            for k in 0..=n {
                let dot = self.h * self.mode(n).iter().zip(self.mode(k)).map(|(a, b)| a * b).sum::<f64>();
                let target = if n == k { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    fn check_len(&self, y: &[f64]) -> Result<(), FieldError> {
        if y.len() != self.n_terms {
            return Err(FieldError::LengthMismatch { expected: self.n_terms, got: y.len() });
        }
        Ok(())
    }

    /// `G(x_j) = Σ_n sqrt(λ_n) φ_n(x_j) y_n` on the first `out.len()` nodes.
    pub fn gaussian_into(&self, y: &[f64], out: &mut [f64]) {
        let m = out.len().min(self.n_x);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (n, &yn) in y.iter().enumerate() {
            let row = &self.scaled[n * self.n_x..n * self.n_x + m];
            out[..m].iter_mut().zip(row).for_each(|(o, s)| *o += yn * s);
        }
    }

    /// [`Self::gaussian_into`] divided pointwise by the truncated standard
    /// deviation, so every node is exactly standard normal.
    pub fn standardized_into(&self, y: &[f64], out: &mut [f64]) {
        self.gaussian_into(y, out);
        out.iter_mut().zip(&self.std).for_each(|(v, s)| *v /= s);
    }

    /// CSV `n,lambda` over all eigenvalues, 1-based.
    pub fn eigenvalues_csv(&self) -> String {
        let mut out = String::from("n,lambda\n");
        for (n, l) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(out, "{},{}", n + 1, l);
        }
        out
    }

    /// Binary eigenfunction matrix: `KLB1`, u32 N, u32 N_x, u32 0, then
    /// `N × N_x` little-endian f64 row-major.
    pub fn write_modes(&self, mut out: impl Write) -> Result<(), FieldError> {
        out.write_all(b"KLB1")?;
        out.write_all(&(self.n_terms as u32).to_le_bytes())?;
        out.write_all(&(self.n_x as u32).to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        for v in &self.modes {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Read back a matrix written by [`KLBasis::write_modes`] as `(N, N_x, values)`.
pub fn read_modes(mut input: impl Read) -> Result<(usize, usize, Vec<f64>), FieldError> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != b"KLB1" {
        return Err(FieldError::FormatError("bad magic".into()));
    }
    let word = |k: usize| u32::from_le_bytes(header[k..k + 4].try_into().unwrap()) as usize;
    let (n, n_x) = (word(4), word(8));
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != n * n_x * 8 {
        return Err(FieldError::FormatError(format!("expected {} bytes, got {}", n * n_x * 8, body.len())));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((n, n_x, values))
}

pub fn sample_gaussian_field(kl: &KLBasis, y: &[f64]) -> Result<Vec<f64>, FieldError> {
    kl.check_len(y)?;
    let mut out = vec![0.0; kl.n_x];
    kl.gaussian_into(y, &mut out);
    Ok(out)
}

/// Four-parameter beta on `[loc, loc + scale]`. `scale == 0` is a point mass
/// at `loc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub p: f64,
    pub q: f64,
    pub loc: f64,
    pub scale: f64,
}

impl BetaParams {
    pub fn new(p: f64, q: f64, loc: f64, scale: f64) -> Result<Self, FieldError> {
        if !(p > 0.0 && q > 0.0 && scale >= 0.0 && loc.is_finite() && scale.is_finite()) {
            return Err(FieldError::InvalidParameter(format!("beta({p}, {q}) on [{loc}, {loc}+{scale}]")));
        }
        Ok(Self { p, q, loc, scale })
    }

    pub fn point(value: f64) -> Self {
        Self { p: 1.0, q: 1.0, loc: value, scale: 0.0 }
    }

    pub fn mean(&self) -> f64 {
        self.loc + self.scale * self.p / (self.p + self.q)
    }

    pub fn std_dev(&self) -> f64 {
        let (p, q) = (self.p, self.q);
        self.scale * (p * q / ((p + q) * (p + q) * (p + q + 1.0))).sqrt()
    }

    /// `(mean, std, skewness, excess kurtosis)`.
    pub fn moments(&self) -> [f64; 4] {
        let (g1, g2) = standard_shape_moments(self.p, self.q);
        [self.mean(), self.std_dev(), g1, g2]
    }
}

fn standard_shape_moments(p: f64, q: f64) -> (f64, f64) {
    let s = p + q;
    let g1 = 2.0 * (q - p) * (s + 1.0).sqrt() / ((s + 2.0) * (p * q).sqrt());
    let g2 = 6.0 * ((p - q) * (p - q) * (s + 1.0) - p * q * (s + 2.0)) / (p * q * (s + 2.0) * (s + 3.0));
    (g1, g2)
}

pub fn beta_cdf(v: f64, bp: &BetaParams) -> f64 {
    if bp.scale == 0.0 {
        return if v >= bp.loc { 1.0 } else { 0.0 };
    }
    inc_beta(bp.p, bp.q, (v - bp.loc) / bp.scale)
}

pub fn beta_pdf(v: f64, bp: &BetaParams) -> f64 {
    beta_pdf_std(bp.p, bp.q, (v - bp.loc) / bp.scale) / bp.scale
}

pub fn beta_quantile(p: f64, bp: &BetaParams) -> Result<f64, FieldError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SpecialError::DomainError(p).into());
    }
    Ok(bp.loc + bp.scale * inc_beta_inv(bp.p, bp.q, p)?)
}

/// Bounds on `p + q` used when projecting infeasible shape moments.
pub const PROJECTED_SHAPE_SUM: (f64, f64) = (0.1, 1000.0);

/// Four-moment beta by matching skewness and excess kurtosis to the shapes,
/// then mean and standard deviation to location and scale.
pub fn beta_from_moments(mu: f64, sigma: f64, gamma1: f64, gamma2: f64) -> Result<BetaParams, FieldError> {
    if !(sigma > 0.0 && mu.is_finite() && sigma.is_finite()) {
        return Err(FieldError::InvalidParameter(format!("mean {mu}, std {sigma}")));
    }
    let num = 6.0 * (gamma2 - gamma1 * gamma1 + 2.0);
    let den = 3.0 * gamma1 * gamma1 - 2.0 * gamma2;
    if !(num > 0.0 && den > 0.0) {
        return Err(FieldError::InfeasibleMoments { gamma1, gamma2 });
    }
    let (p, q) = solve_shapes(gamma1, gamma2, num / den)?;
    let m = p / (p + q);
    let sd = (p * q / ((p + q) * (p + q) * (p + q + 1.0))).sqrt();
    let scale = sigma / sd;
    BetaParams::new(p, q, mu - scale * m, scale)
}

/// Like [`beta_from_moments`] but moves infeasible or extreme `(γ₁, γ₂)` to
/// the nearest excess kurtosis with `p + q` inside [`PROJECTED_SHAPE_SUM`].
/// Returns whether the input was moved.
pub fn beta_from_moments_projected(
    mu: f64,
    sigma: f64,
    gamma1: f64,
    gamma2: f64,
) -> Result<(BetaParams, bool), FieldError> {
    let (lo, hi) = PROJECTED_SHAPE_SUM;
    let g1s = gamma1 * gamma1;
    let num = 6.0 * (gamma2 - g1s + 2.0);
    let den = 3.0 * g1s - 2.0 * gamma2;
    let nu = if num <= 0.0 {
        lo
    } else if den <= 0.0 {
        hi
    } else {
        (num / den).clamp(lo, hi)
    };
    if num > 0.0 && den > 0.0 && nu == num / den {
        return Ok((beta_from_moments(mu, sigma, gamma1, gamma2)?, false));
    }
    let g2 = (3.0 * nu * g1s + 6.0 * g1s - 12.0) / (2.0 * nu + 6.0);
    Ok((beta_from_moments(mu, sigma, gamma1, g2)?, true))
}

fn solve_shapes(g1: f64, g2: f64, nu: f64) -> Result<(f64, f64), FieldError> {
    // Closed-form Pearson type I inversion, then Newton polish in (ln p, ln q).
    let r = (nu + 2.0) * g1.abs() / ((nu + 2.0) * (nu + 2.0) * g1 * g1 + 16.0 * (nu + 1.0)).sqrt();
    let (small, large) = (0.5 * nu * (1.0 - r), 0.5 * nu * (1.0 + r));
    let (mut p, mut q) = if g1 >= 0.0 { (small, large) } else { (large, small) };
    let resid = |p: f64, q: f64| {
        let (a, b) = standard_shape_moments(p, q);
        (a - g1, b - g2)
    };
    for _ in 0..50 {
        let (r1, r2) = resid(p, q);
        let norm = r1.hypot(r2);
        if norm <= 1e-12 {
            break;
        }
        let eps = 1e-6;
        let (a1, a2) = resid(p * (1.0 + eps), q);
        let (b1, b2) = resid(p, q * (1.0 + eps));
        let j = [[(a1 - r1) / eps, (b1 - r1) / eps], [(a2 - r2) / eps, (b2 - r2) / eps]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dp = (j[1][1] * r1 - j[0][1] * r2) / det;
        let dq = (-j[1][0] * r1 + j[0][0] * r2) / det;
        let mut step = 1.0;
        loop {
            let (np, nq) = (p * (-step * dp).exp(), q * (-step * dq).exp());
            let (s1, s2) = resid(np, nq);
            if s1.hypot(s2) < norm {
                p = np;
                q = nq;
                break;
            }
            step *= 0.5;
            if step < 1e-6 {
                break;
            }
        }
        if step < 1e-6 {
            break;
        }
    }
    let (r1, r2) = resid(p, q);
    if !(r1.hypot(r2) <= 1e-10 * (1.0 + g2.abs())) || !(p > 0.0 && q > 0.0) {
        return Err(FieldError::InfeasibleMoments { gamma1: g1, gamma2: g2 });
    }
    Ok((p, q))
}

/// Exact translation `Ψ⁻¹(Φ(g))`, evaluated through the complementary tail
/// for positive `g`.
pub fn translate_exact(g: f64, bp: &BetaParams) -> f64 {
    if bp.scale == 0.0 {
        return bp.loc;
    }
    let u = if g <= 0.0 {
        inc_beta_inv(bp.p, bp.q, std_normal_cdf(g)).unwrap_or(0.0)
    } else {
        1.0 - inc_beta_inv(bp.q, bp.p, std_normal_cdf(-g)).unwrap_or(0.0)
    };
    bp.loc + bp.scale * u
}

const TABLE_RANGE: f64 = 8.5;
const TABLE_NODES: usize = 1025;

/// Monotone cubic-Hermite table of `g ↦ Ψ⁻¹(Φ(g))` on `[-8.5, 8.5]`, with
/// exact evaluation outside.
#[derive(Debug, Clone)]
pub struct TranslationMap {
    pub bp: BetaParams,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl TranslationMap {
    pub fn new(bp: BetaParams) -> Self {
        let step = 2.0 * TABLE_RANGE / (TABLE_NODES - 1) as f64;
        if bp.scale == 0.0 {
            return Self { bp, step, values: vec![bp.loc; TABLE_NODES], slopes: vec![0.0; TABLE_NODES] };
        }
        let g: Vec<f64> = (0..TABLE_NODES).map(|k| -TABLE_RANGE + k as f64 * step).collect();
        let mut values: Vec<f64> = g.iter().map(|&gk| translate_exact(gk, &bp)).collect();
        for k in 1..TABLE_NODES {
            values[k] = values[k].max(values[k - 1]);
        }
        let secants: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / step).collect();
        let mut slopes: Vec<f64> = g
            .iter()
            .zip(&values)
            .map(|(&gk, &v)| {
                let dens = beta_pdf(v, &bp);
                if dens.is_finite() && dens > 0.0 {
                    std_normal_pdf(gk) / dens
                } else {
                    f64::NAN
                }
            })
            .collect();
        for k in 0..TABLE_NODES {
            let left = if k > 0 { secants[k - 1] } else { secants[0] };
            let right = if k + 1 < TABLE_NODES { secants[k] } else { secants[k - 1] };
            let limit = 3.0 * left.min(right);
            let s = &mut slopes[k];
            if !s.is_finite() {
                *s = 0.5 * (left + right);
            }
            *s = s.clamp(0.0, limit.max(0.0));
        }
        Self { bp, step, values, slopes }
    }

    pub fn eval(&self, g: f64) -> f64 {
        self.eval_at(&TablePoint::locate(g))
    }

    /// Same as [`TranslationMap::eval`] with the table lookup done once.
    pub fn eval_at(&self, p: &TablePoint) -> f64 {
        let Some(k) = p.k else {
            let v = translate_exact(p.g, &self.bp);
            return if p.g < 0.0 { v.min(self.values[0]) } else { v.max(self.values[TABLE_NODES - 1]) };
        };
        let (v0, v1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let [b0, b1, b2, b3] = p.basis;
        let v = b0 * v0 + b1 * m0 + b2 * v1 + b3 * m1;
        v.clamp(v0, v1)
    }
}

/// Position of a Gaussian value in the translation table grid, shared by all maps.
#[derive(Debug, Clone, Copy)]
pub struct TablePoint {
    g: f64,
    k: Option<usize>,
    basis: [f64; 4],
}

impl TablePoint {
    pub fn locate(g: f64) -> Self {
        let step = 2.0 * TABLE_RANGE / (TABLE_NODES - 1) as f64;
        let t = (g + TABLE_RANGE) / step;
        if !(t >= 0.0 && t < (TABLE_NODES - 1) as f64) {
            return Self { g, k: None, basis: [0.0; 4] };
        }
        let k = t as usize;
        let s = t - k as f64;
        let s2 = s * s;
        let s3 = s2 * s;
        Self { g, k: Some(k), basis: [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2] }
    }
}

/// Field settings for [`build_fuzzy_stochastic_field`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldOptions {
    pub ell: f64,
    pub preserved_std_fraction: f64,
    pub n_bins: usize,
    /// Project infeasible shape moments instead of failing.
    pub project_infeasible: bool,
}

impl Default for FieldOptions {
    fn default() -> Self {
        Self { ell: 100.0, preserved_std_fraction: 0.85, n_bins: 10, project_infeasible: false }
    }
}

/// Fuzzy-stationary translation field `Ψ_z⁻¹(Φ(G(x, y)))` with fuzzy moments
/// `z = (μ, σ, γ₁, γ₂)`.
#[derive(Debug, Clone)]
pub struct FuzzyStochasticField {
    pub kl: KLBasis,
    pub moments: FuzzyVector,
    pub project_infeasible: bool,
}

impl FuzzyStochasticField {
    pub fn new(kl: KLBasis, moments: FuzzyVector, project_infeasible: bool) -> Result<Self, FieldError> {
        if moments.len() != 4 {
            return Err(FieldError::InvalidParameter(format!("{} moment components", moments.len())));
        }
        Ok(Self { kl, moments, project_infeasible })
    }

    pub fn n_terms(&self) -> usize {
        self.kl.n_terms
    }

    /// Beta parameters at a point of moment space.
    pub fn beta_at(&self, z: &[f64]) -> Result<BetaParams, FieldError> {
        if z.len() != 4 {
            return Err(FieldError::LengthMismatch { expected: 4, got: z.len() });
        }
        if z[1] == 0.0 {
            return Ok(BetaParams::point(z[0]));
        }
        let bp = if self.project_infeasible {
            beta_from_moments_projected(z[0], z[1], z[2], z[3])?.0
        } else {
            beta_from_moments(z[0], z[1], z[2], z[3])?
        };
        if !(bp.loc > 0.0) {
            return Err(FieldError::NonPositiveSupport { loc: bp.loc });
        }
        Ok(bp)
    }

    /// Beta parameters on the `m_f`-point grid of the interactive α-cut.
    pub fn segment_betas(&self, alpha: f64, m_f: usize) -> Result<Vec<BetaParams>, FieldError> {
        segment_params(m_f)
            .into_iter()
            .map(|t| self.beta_at(&self.moments.segment_point(alpha, t)))
            .collect()
    }
}

pub fn sample_translation_field(f: &FuzzyStochasticField, y: &[f64], z: &[f64]) -> Result<Vec<f64>, FieldError> {
    f.kl.check_len(y)?;
    let bp = f.beta_at(z)?;
    let mut g = vec![0.0; f.kl.n_x];
    f.kl.standardized_into(y, &mut g);
    Ok(g.into_iter().map(|v| translate_exact(v, &bp)).collect())
}

/// Fuzzy moments from the histograms of the pointwise moment curves.
pub fn fuzzy_moments(s: &SampleSet, n_bins: usize) -> Result<FuzzyVector, FieldError> {
    let curves = pointwise_moments(s)?;
    let columns = curves.finite_columns();
    let mut comps = Vec::with_capacity(4);
    for (k, col) in columns.iter().enumerate() {
        let var = if col.is_empty() {
            // Every point is degenerate: zero spread and no shape information.
            let all = match k {
                0 => &curves.mu,
                _ => &curves.sigma,
            };
            if k < 2 {
                fuzzify_with_fallback(&histogram(all, n_bins)?)
            } else {
                FuzzyVariable::crisp(0.0)
            }
        } else {
            fuzzify_with_fallback(&histogram(col, n_bins)?)
        };
        comps.push(var);
    }
    Ok(FuzzyVector::new(comps, Interaction::CompletelyInteractive)?)
}

pub fn build_fuzzy_stochastic_field(s: &SampleSet, opts: &FieldOptions) -> Result<FuzzyStochasticField, FieldError> {
    let moments = fuzzy_moments(s, opts.n_bins)?;
    let kl = kl_decompose(s.length(), s.h, opts.ell, opts.preserved_std_fraction)?;
    let field = FuzzyStochasticField::new(kl, moments, opts.project_infeasible)?;
    // Fail early when the zero-cut reaches non-positive or infeasible betas.
    field.segment_betas(0.0, 11)?;
    Ok(field)
}
