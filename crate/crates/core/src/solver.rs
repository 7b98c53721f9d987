//! Quadrature solution of `-(a u')' = f` on a bar, and the global-local
//! scheme that couples a coarse effective field with a resolved local one.
//!
//! Lengths are in μm, compliances in GPa⁻¹, displacements in m.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::FuzzyVector;
use crate::homog::{homogenize, homogenize_set, HomogError};
use crate::microdata::SampleSet;
use crate::quad::{cumulative_trapezoid, trapezoid_weights};
use crate::randfield::{
    beta_from_moments, beta_from_moments_projected, kl_decompose, BetaParams, FieldError, FuzzyStochasticField,
    KLBasis, TranslationMap,
};
use crate::stats::four_moments;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("integral of the local compliance is {0}, not positive")]
    DegenerateDenominator(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Homog(#[from] HomogError),
}

const UM_PER_M: f64 = 1e6;

/// Bar of length `length_um` under the load `f = 2` GPa/m on the first half
/// of the unit bar, with `u(0) = 0` and `a u' = 1` GPa at the right end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub length_um: f64,
    pub load_end_um: f64,
    pub x0_um: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self { length_um: 1e6, load_end_um: 0.5e6, x0_um: 0.75e6 }
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(0.0 < self.x0_um && self.x0_um < self.length_um && 0.0 <= self.load_end_um) {
            return Err(SolverError::InvalidParameter(format!("{self:?}")));
        }
        Ok(())
    }

    /// Stress `F(x) = a u'`: `2ξ` (ξ in m) under the load, 1 after.
    pub fn f_antiderivative(&self, x_um: f64) -> f64 {
        if x_um < self.load_end_um {
            2.0 * x_um / UM_PER_M
        } else {
            2.0 * self.load_end_um / UM_PER_M
        }
    }
}

pub fn f_antiderivative(x_um: f64) -> f64 {
    ProblemSpec::default().f_antiderivative(x_um)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x_um: Vec<f64>,
    pub u_m: Vec<f64>,
    pub q: f64,
}

impl Solution {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_um,u_m\n");
        for (x, u) in self.x_um.iter().zip(&self.u_m) {
            let _ = writeln!(out, "{x},{u}");
        }
        out
    }
}

/// Value at `x` of nodal data on `x_j = j h` by linear interpolation.
fn interp_uniform(values: &[f64], h: f64, x: f64) -> f64 {
    let t = x / h;
    let k = (t.floor() as usize).min(values.len().saturating_sub(2));
    let s = t - k as f64;
    if s.abs() < 1e-12 {
        return values[k];
    }
    values[k] + s * (values[k + 1] - values[k])
}

/// `u(x) = ∫₀ˣ b F` on the nodes `x_j = j h` of `b`.
pub fn solve_direct(b: &[f64], h: f64, spec: &ProblemSpec) -> Result<Solution, SolverError> {
    spec.validate()?;
    if b.len() < 2 || !(h > 0.0) {
        return Err(SolverError::InvalidParameter("need at least two nodes and h > 0".into()));
    }
    let x_end = (b.len() - 1) as f64 * h;
    if spec.x0_um > x_end * (1.0 + 1e-12) {
        return Err(SolverError::InvalidParameter(format!("x0 = {} beyond grid end {x_end}", spec.x0_um)));
    }
    let x_um: Vec<f64> = (0..b.len()).map(|j| j as f64 * h).collect();
    let integrand: Vec<f64> = b.iter().zip(&x_um).map(|(bj, &x)| bj * spec.f_antiderivative(x)).collect();
    let u_m: Vec<f64> = cumulative_trapezoid(&integrand, h).into_iter().map(|u| u / UM_PER_M).collect();
    let q = interp_uniform(&u_m, h, spec.x0_um);
    Ok(Solution { x_um, u_m, q })
}

/// QoI `∫₀^{x0} b F` in m, by the trapezoidal rule; `x0` must be a node.
pub fn qoi_direct(b: &[f64], h: f64, spec: &ProblemSpec) -> Result<f64, SolverError> {
    let n = node_index(spec.x0_um, h)?;
    if n >= b.len() {
        return Err(SolverError::InvalidParameter(format!("x0 node {n} beyond {} nodes", b.len())));
    }
    let w = trapezoid_weights(n + 1, h);
    Ok((0..=n).map(|j| w[j] * b[j] * spec.f_antiderivative(j as f64 * h)).sum::<f64>() / UM_PER_M)
}

fn node_index(x: f64, h: f64) -> Result<usize, SolverError> {
    let t = x / h;
    if (t - t.round()).abs() > 1e-9 * t.max(1.0) {
        return Err(SolverError::InvalidParameter(format!("{x} is not a multiple of {h}")));
    }
    Ok(t.round() as usize)
}

/// Local problem with `f ≡ 0` and Dirichlet data: `u` is proportional to the
/// running integral of `b`.
pub fn solve_local_dirichlet(b: &[f64], h: f64, u_left: f64, u_right: f64) -> Result<Vec<f64>, SolverError> {
    if b.len() < 2 {
        return Err(SolverError::InvalidParameter("need at least two nodes".into()));
    }
    let run = cumulative_trapezoid(b, h);
    let total = run[run.len() - 1];
    if !(total > 0.0) {
        return Err(SolverError::DegenerateDenominator(total));
    }
    let mut u: Vec<f64> = run.iter().map(|r| u_left + (u_right - u_left) * r / total).collect();
    let last = u.len() - 1;
    u[0] = u_left;
    u[last] = u_right;
    Ok(u)
}

/// Fritsch-Carlson monotone cubic interpolation on uniform nodes.
pub fn monotone_cubic(values: &[f64], h: f64, x: f64) -> f64 {
    let n = values.len();
    let t = (x / h).clamp(0.0, (n - 1) as f64);
    let k = (t.floor() as usize).min(n - 2);
    let s = t - k as f64;
    if s == 0.0 {
        return values[k];
    }
    let secant = |i: usize| (values[i + 1] - values[i]) / h;
    let slope = |i: usize| -> f64 {
        if i == 0 {
            return secant(0);
        }
        if i == n - 1 {
            return secant(n - 2);
        }
        let (a, b) = (secant(i - 1), secant(i));
        if a * b <= 0.0 {
            0.0
        } else {
            // Harmonic mean keeps the interpolant monotone.
            2.0 * a * b / (a + b)
        }
    };
    let (v0, v1) = (values[k], values[k + 1]);
    let (m0, m1) = (slope(k) * h, slope(k + 1) * h);
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * v0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * v1 + (s3 - s2) * m1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalOptions {
    /// Correlation length as a multiple of the RVE length.
    pub ell_factor: f64,
    pub preserved_std_fraction: f64,
    pub project_infeasible: bool,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        Self { ell_factor: 5.0, preserved_std_fraction: 0.85, project_infeasible: false }
    }
}

/// Non-stationary crisp translation field on a coarse grid over the bar.
#[derive(Debug, Clone)]
pub struct GlobalField {
    pub spec: ProblemSpec,
    pub l_rve: f64,
    pub coarse_h: f64,
    pub betas: Vec<BetaParams>,
    pub kl: KLBasis,
    maps: Vec<TranslationMap>,
}

/// Per-point crisp moments of the effective samples away from the truncated
/// windows at the sample ends.
fn interior_effective_betas(
    effective: &SampleSet,
    l_rve: f64,
    coarse_h: f64,
    project: bool,
) -> Result<Vec<BetaParams>, SolverError> {
    let stride = node_index(coarse_h, effective.h)?.max(1);
    let margin = node_index(0.5 * l_rve, effective.h)?;
    let (first, last) = if effective.n_x() > 2 * margin + stride {
        (margin, effective.n_x() - margin)
    } else {
        (0, effective.n_x())
    };
    let mut betas = Vec::new();
    let mut j = first;
    while j < last {
        let (mu, sigma, shape) = four_moments(&effective.column(j));
        let bp = match shape {
            None => BetaParams::point(mu),
            Some((g1, g2)) if project => beta_from_moments_projected(mu, sigma, g1, g2)?.0,
            Some((g1, g2)) => beta_from_moments(mu, sigma, g1, g2)?,
        };
        if !(bp.loc > 0.0) {
            return Err(FieldError::NonPositiveSupport { loc: bp.loc }.into());
        }
        betas.push(bp);
        j += stride;
    }
    if betas.is_empty() {
        return Err(SolverError::InvalidParameter("no interior effective points".into()));
    }
    Ok(betas)
}

/// Global field from samples homogenized at the RVE length. Per-point betas
/// are repeated periodically when the effective samples are shorter than
/// the bar.
pub fn build_global_field(
    effective: &SampleSet,
    l_rve: f64,
    spec: &ProblemSpec,
    opts: &GlobalOptions,
) -> Result<GlobalField, SolverError> {
    spec.validate()?;
    if !(l_rve > 0.0 && opts.ell_factor > 0.0) {
        return Err(SolverError::InvalidParameter(format!("L_RVE = {l_rve}, factor {}", opts.ell_factor)));
    }
    let coarse_h = l_rve / 10.0;
    let tiles = interior_effective_betas(effective, l_rve, coarse_h, opts.project_infeasible)?;
    // Nodes up to the right end of the local domain are all the QoI needs.
    let x_r = spec.x0_um + 0.5 * l_rve;
    let n_nodes = ((x_r / coarse_h).ceil() as usize + 2).min((spec.length_um / coarse_h).round() as usize + 1);
    let kl = kl_decompose(n_nodes as f64 * coarse_h, coarse_h, opts.ell_factor * l_rve, opts.preserved_std_fraction)?;
    let betas: Vec<BetaParams> = (0..n_nodes).map(|k| tiles[k % tiles.len()]).collect();
    let maps = betas.iter().map(|&bp| TranslationMap::new(bp)).collect();
    Ok(GlobalField { spec: spec.clone(), l_rve, coarse_h, betas, kl, maps })
}

impl GlobalField {
    pub fn n_terms(&self) -> usize {
        self.kl.n_terms
    }

    /// Field values on the coarse nodes for normals `y`.
    pub fn sample(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.kl.n_x];
        self.kl.standardized_into(y, &mut g);
        g.iter().zip(&self.maps).map(|(&v, m)| m.eval(v)).collect()
    }

    /// Global displacement on the coarse nodes.
    pub fn solve(&self, y: &[f64]) -> Result<Solution, SolverError> {
        let b = self.sample(y);
        let mut spec = self.spec.clone();
        spec.x0_um = spec.x0_um.min((b.len() - 1) as f64 * self.coarse_h);
        solve_direct(&b, self.coarse_h, &spec)
    }

    /// Displacements at the two ends of the local domain.
    pub fn boundary_data(&self, y: &[f64]) -> Result<(f64, f64), SolverError> {
        let sol = self.solve(y)?;
        let half = 0.5 * self.l_rve;
        Ok((
            monotone_cubic(&sol.u_m, self.coarse_h, self.spec.x0_um - half),
            monotone_cubic(&sol.u_m, self.coarse_h, self.spec.x0_um + half),
        ))
    }
}

/// Fuzzy-stochastic field on the local domain `[x0 - L/2, x0 + L/2]`.
#[derive(Debug, Clone)]
pub struct LocalField {
    pub field: FuzzyStochasticField,
    pub h: f64,
    pub l_rve: f64,
}

impl LocalField {
    pub fn new(moments: FuzzyVector, l_rve: f64, h: f64, ell: f64, preserved: f64, project: bool) -> Result<Self, SolverError> {
        let n = node_index(l_rve, h)? + 1;
        if n % 2 == 0 {
            return Err(SolverError::InvalidParameter("the local domain needs an even number of elements".into()));
        }
        let kl = kl_decompose(n as f64 * h, h, ell, preserved)?;
        Ok(Self { field: FuzzyStochasticField::new(kl, moments, project)?, h, l_rve })
    }

    pub fn n_nodes(&self) -> usize {
        self.field.kl.n_x
    }

    pub fn n_terms(&self) -> usize {
        self.field.n_terms()
    }
}

/// Ratio `∫_{x_l}^{x0} b / ∫_{x_l}^{x_r} b` for a local field sample with `x0`
/// at the middle node.
pub fn local_ratio(b: &[f64], h: f64) -> Result<f64, SolverError> {
    let mid = (b.len() - 1) / 2;
    let left = cumulative_trapezoid(&b[..=mid], h);
    let total: f64 = cumulative_trapezoid(b, h)[b.len() - 1];
    if !(total > 0.0) {
        return Err(SolverError::DegenerateDenominator(total));
    }
    Ok(left[mid] / total)
}

/// Global-local QoI for one realization `(y_I, y_II)` and moment point `z`.
pub fn global_local_qoi(gf: &GlobalField, lf: &LocalField, y_global: &[f64], y_local: &[f64], z: &[f64]) -> Result<f64, SolverError> {
    let (u_l, u_r) = gf.boundary_data(y_global)?;
    let b = crate::randfield::sample_translation_field(&lf.field, y_local, z)?;
    Ok(u_l + (u_r - u_l) * local_ratio(&b, lf.h)?)
}

/// Global-local QoI for one fine-scale realization `b` on the whole bar: the
/// global problem uses `b` homogenized at `l_rve` on the coarse grid `l_rve / 10`,
/// the local problem uses `b` itself.
pub fn global_local_direct(b: &[f64], h: f64, l_rve: f64, spec: &ProblemSpec) -> Result<f64, SolverError> {
    spec.validate()?;
    let coarse_h = l_rve / 10.0;
    let stride = node_index(coarse_h, h)?;
    let half = node_index(0.5 * l_rve, h)?;
    let mid = node_index(spec.x0_um, h)?;
    if stride == 0 || half == 0 || mid < half || mid + half >= b.len() {
        return Err(SolverError::InvalidParameter(format!("local domain of {l_rve} um around x0 leaves the grid")));
    }
    let eff = homogenize(b, h, l_rve)?;
    let coarse: Vec<f64> = eff.iter().step_by(stride).copied().collect();
    let mut gspec = spec.clone();
    gspec.x0_um = spec.x0_um.min((coarse.len() - 1) as f64 * coarse_h);
    let u = solve_direct(&coarse, coarse_h, &gspec)?.u_m;
    let u_l = monotone_cubic(&u, coarse_h, spec.x0_um - 0.5 * l_rve);
    let u_r = monotone_cubic(&u, coarse_h, spec.x0_um + 0.5 * l_rve);
    Ok(u_l + (u_r - u_l) * local_ratio(&b[mid - half..=mid + half], h)?)
}

/// Effective samples at the RVE length.
pub fn effective_samples(s: &SampleSet, l_rve: f64) -> Result<SampleSet, SolverError> {
    Ok(homogenize_set(s, l_rve)?)
}
