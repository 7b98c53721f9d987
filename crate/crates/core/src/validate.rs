//! Monte-Carlo CDF bands of fuzzy-random quantities of interest, truth
//! p-boxes from data, and containment of one in the other.

use std::fmt::Write as _;

use rand::seq::index::sample as sample_indices;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::microdata::SampleSet;
use crate::quad::trapezoid_weights;
use crate::randfield::{fuzzy_moments, kl_decompose, FieldError, FuzzyStochasticField, KLBasis, TablePoint, TranslationMap};
use crate::rng;
use crate::solver::{build_global_field, qoi_direct, GlobalField, GlobalOptions, LocalField, ProblemSpec, SolverError};
use crate::homog::homogenize_set;
use crate::stats::{pbox, Ecdf, PBox, StatsError};

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Homog(#[from] crate::homog::HomogError),
}

/// A quantity of interest `Q(y, z)` evaluated for one realization `y` at
/// every moment point of every α-level at once.
pub trait FuzzyQoi: Sync {
    fn n_normals(&self) -> usize;

    /// `out[a][k] = Q(y, z_ak)` where `maps[a][k]` translates at `z_ak`.
    fn evaluate(&self, y: &[f64], maps: &[Vec<TranslationMap>], out: &mut [Vec<f64>]) -> Result<(), ValidateError>;
}

/// `Q₀ = ∫₀^{L/2} b` (in m) for a field on `[0, L]`.
pub struct LocalIntegralQoi {
    pub kl: KLBasis,
    weights: Vec<f64>,
}

impl LocalIntegralQoi {
    pub fn new(kl: KLBasis) -> Self {
        let n = local_integral_nodes(kl.n_x);
        let weights = trapezoid_weights(n, kl.h).into_iter().map(|w| w * 1e-6).collect();
        Self { kl, weights }
    }
}

/// Nodes covering `[0, L/2]` on a grid of `n_x` elements of the sample length.
fn local_integral_nodes(n_x: usize) -> usize {
    n_x / 2 + 1
}

/// The same integral on a data sample.
pub fn local_integral(sample: &[f64], h: f64) -> f64 {
    let n = local_integral_nodes(sample.len()).min(sample.len());
    trapezoid_weights(n, h).iter().zip(sample).map(|(w, b)| w * b).sum::<f64>() * 1e-6
}

impl FuzzyQoi for LocalIntegralQoi {
    fn n_normals(&self) -> usize {
        self.kl.n_terms
    }

    fn evaluate(&self, y: &[f64], maps: &[Vec<TranslationMap>], out: &mut [Vec<f64>]) -> Result<(), ValidateError> {
        let mut g = vec![0.0; self.weights.len()];
        self.kl.standardized_into(y, &mut g);
        let points: Vec<TablePoint> = g.iter().map(|&gj| TablePoint::locate(gj)).collect();
        for (level, row) in maps.iter().zip(out.iter_mut()) {
            for (map, q) in level.iter().zip(row.iter_mut()) {
                *q = points.iter().zip(&self.weights).map(|(p, w)| w * map.eval_at(p)).sum();
            }
        }
        Ok(())
    }
}

/// Displacement at `x0` by the global-local scheme. The first
/// `global.n_terms()` normals drive the global field, the rest the local one.
pub struct GlobalLocalQoi {
    pub global: GlobalField,
    pub local: LocalField,
}

impl FuzzyQoi for GlobalLocalQoi {
    fn n_normals(&self) -> usize {
        self.global.n_terms() + self.local.n_terms()
    }

    fn evaluate(&self, y: &[f64], maps: &[Vec<TranslationMap>], out: &mut [Vec<f64>]) -> Result<(), ValidateError> {
        let (yg, yl) = y.split_at(self.global.n_terms());
        let (u_l, u_r) = self.global.boundary_data(yg)?;
        let n = self.local.n_nodes();
        let mid = (n - 1) / 2;
        let mut g = vec![0.0; n];
        self.local.field.kl.standardized_into(yl, &mut g);
        let w = trapezoid_weights(n, 1.0);
        let w_left = trapezoid_weights(mid + 1, 1.0);
        let points: Vec<TablePoint> = g.iter().map(|&gj| TablePoint::locate(gj)).collect();
        for (level, row) in maps.iter().zip(out.iter_mut()) {
            for (map, q) in level.iter().zip(row.iter_mut()) {
                let (mut left, mut total) = (0.0, 0.0);
                for j in 0..n {
                    let b = map.eval_at(&points[j]);
                    total += w[j] * b;
                    if j <= mid {
                        left += w_left[j] * b;
                    }
                }
                if !(total > 0.0) {
                    return Err(SolverError::DegenerateDenominator(total).into());
                }
                *q = u_l + (u_r - u_l) * left / total;
            }
        }
        Ok(())
    }
}

/// Left- and right-limit CDFs of the α-cuts of a fuzzy-random QoI.
#[derive(Debug, Clone)]
pub struct AlphaCutCdfs {
    pub alphas: Vec<f64>,
    pub m_s: usize,
    pub m_f: usize,
    pub seed: u64,
    /// `q_left[a][m]`, per realization.
    pub q_left: Vec<Vec<f64>>,
    pub q_right: Vec<Vec<f64>>,
    pub left: Vec<Ecdf>,
    pub right: Vec<Ecdf>,
}

impl AlphaCutCdfs {
    pub fn level(&self, alpha: f64) -> Option<usize> {
        self.alphas.iter().position(|&a| (a - alpha).abs() < 1e-12)
    }

    /// CSV `alpha,side,value,prob` with the ECDF steps of both limits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,side,value,prob\n");
        for (a, alpha) in self.alphas.iter().enumerate() {
            for (side, cdf) in [("left", &self.left[a]), ("right", &self.right[a])] {
                for (v, p) in cdf.steps() {
                    let _ = writeln!(out, "{alpha},{side},{v},{p}");
                }
            }
        }
        out
    }

    /// CSV `y_index,alpha,Q_left,Q_right`.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("y_index,alpha,Q_left,Q_right\n");
        for m in 0..self.m_s {
            for (a, alpha) in self.alphas.iter().enumerate() {
                let _ = writeln!(out, "{m},{alpha},{},{}", self.q_left[a][m], self.q_right[a][m]);
            }
        }
        out
    }
}

/// Standard normals of realization `m`.
pub fn realization(seed: u64, m: usize, n: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, rng::domain::GAUSSIAN, m as u64);
    (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// Translation maps on the `m_f`-point grid of every α-level.
pub fn alpha_maps(field: &FuzzyStochasticField, alphas: &[f64], m_f: usize) -> Result<Vec<Vec<TranslationMap>>, ValidateError> {
    alphas
        .iter()
        .map(|&a| {
            let betas = field.segment_betas(a, m_f)?;
            Ok(betas.into_par_iter().map(TranslationMap::new).collect())
        })
        .collect()
}

/// Min and max of `Q(y_m, ·)` over each α-cut grid for `m < m_s`.
///
/// The grids of different levels need not be nested point sets, so each
/// level's range is widened to cover all higher levels.
pub fn qoi_alpha_cdfs(
    qoi: &dyn FuzzyQoi,
    maps: &[Vec<TranslationMap>],
    alphas: &[f64],
    m_s: usize,
    seed: u64,
) -> Result<AlphaCutCdfs, ValidateError> {
    if m_s == 0 || maps.is_empty() || maps.len() != alphas.len() || maps.iter().any(|l| l.is_empty()) {
        return Err(ValidateError::InvalidParameter("need M_s >= 1 and a nonempty grid per level".into()));
    }
    let m_f = maps[0].len();
    let mut order: Vec<usize> = (0..alphas.len()).collect();
    order.sort_by(|&i, &j| alphas[j].total_cmp(&alphas[i]));
    let n = qoi.n_normals();
    let ranges: Vec<Vec<(f64, f64)>> = (0..m_s)
        .into_par_iter()
        .map(|m| {
            let y = realization(seed, m, n);
            let mut out: Vec<Vec<f64>> = maps.iter().map(|l| vec![0.0; l.len()]).collect();
            qoi.evaluate(&y, maps, &mut out)?;
            let mut ranges = vec![(0.0, 0.0); alphas.len()];
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &a in &order {
                for &q in &out[a] {
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
                ranges[a] = (lo, hi);
            }
            Ok(ranges)
        })
        .collect::<Result<_, ValidateError>>()?;
    let q_left: Vec<Vec<f64>> = (0..alphas.len()).map(|a| ranges.iter().map(|r| r[a].0).collect()).collect();
    let q_right: Vec<Vec<f64>> = (0..alphas.len()).map(|a| ranges.iter().map(|r| r[a].1).collect()).collect();
    let left = q_left.iter().map(|v| Ecdf::new(v)).collect::<Result<_, _>>()?;
    let right = q_right.iter().map(|v| Ecdf::new(v)).collect::<Result<_, _>>()?;
    Ok(AlphaCutCdfs { alphas: alphas.to_vec(), m_s, m_f, seed, q_left, q_right, left, right })
}

/// P-box of `n_b` ECDFs, each over `m_tilde` values drawn without replacement.
#[derive(Debug, Clone)]
pub struct TruthPBox {
    pub values: Vec<f64>,
    pub groups: Vec<Vec<usize>>,
    pub pbox: PBox,
}

pub fn truth_pbox(values: &[f64], n_b: usize, m_tilde: usize, seed: u64) -> Result<TruthPBox, ValidateError> {
    if n_b == 0 || m_tilde == 0 || m_tilde >= values.len() {
        return Err(ValidateError::InvalidParameter(format!(
            "need N_b >= 1 and 0 < M~ < M, got N_b = {n_b}, M~ = {m_tilde}, M = {}",
            values.len()
        )));
    }
    let groups: Vec<Vec<usize>> = (0..n_b)
        .map(|b| {
            let mut r = rng::stream(seed, rng::domain::PICK, b as u64);
            let mut idx = sample_indices(&mut r, values.len(), m_tilde).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect();
    let members = groups
        .iter()
        .map(|g| Ecdf::new(&g.iter().map(|&i| values[i]).collect::<Vec<f64>>()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TruthPBox { values: values.to_vec(), groups, pbox: pbox(members)? })
}

/// Probability levels at which containment is checked.
pub fn probability_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

/// Share of `(p, member)` points whose member quantile lies between the
/// quantiles of the left and right limits at level `alpha`.
pub fn containment(truth: &TruthPBox, band: &AlphaCutCdfs, alpha: f64) -> Result<f64, ValidateError> {
    let a = band
        .level(alpha)
        .ok_or_else(|| ValidateError::InvalidParameter(format!("band has no level {alpha}")))?;
    let grid = probability_grid();
    let (mut inside, mut total) = (0usize, 0usize);
    for member in &truth.pbox.members {
        for &p in &grid {
            let q = member.quantile(p);
            let lo = band.left[a].quantile(p);
            let hi = band.right[a].quantile(p);
            if lo <= q && q <= hi {
                inside += 1;
            }
            total += 1;
        }
    }
    Ok(inside as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSettings {
    pub alphas: Vec<f64>,
    pub m_s: usize,
    pub m_f: usize,
    pub n_b: usize,
    pub m_tilde: usize,
    pub seed: u64,
    pub preserved_std_fraction: f64,
    pub n_bins: usize,
    pub project_infeasible: bool,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            m_s: 10_000,
            m_f: 100,
            n_b: 20,
            m_tilde: 50,
            seed: 1,
            preserved_std_fraction: 0.85,
            n_bins: 10,
            project_infeasible: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub ell: f64,
    pub n_terms: usize,
    pub containment: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub selected_ell: f64,
    /// `(alpha, fraction)` for the selected correlation length.
    pub containment: Vec<(f64, f64)>,
    pub sweep: Vec<SweepEntry>,
}

impl ContainmentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn at(&self, alpha: f64) -> Option<f64> {
        self.containment.iter().find(|(a, _)| (a - alpha).abs() < 1e-12).map(|&(_, f)| f)
    }
}

pub struct LocalValidation {
    pub truth: TruthPBox,
    pub band: AlphaCutCdfs,
    pub report: ContainmentReport,
}

fn per_alpha(truth: &TruthPBox, band: &AlphaCutCdfs) -> Result<Vec<(f64, f64)>, ValidateError> {
    band.alphas.iter().map(|&a| Ok((a, containment(truth, band, a)?))).collect()
}

/// Picks the correlation length with the best 1-cut containment (the
/// smallest such length on ties) and reports all levels for it.
fn select(sweep: &[SweepEntry]) -> usize {
    let one_cut = |e: &SweepEntry| {
        e.containment.iter().find(|(a, _)| (*a - 1.0).abs() < 1e-12).or(e.containment.last()).map(|&(_, f)| f).unwrap_or(0.0)
    };
    let mut best = 0;
    for (i, e) in sweep.iter().enumerate() {
        if one_cut(e) > one_cut(&sweep[best]) {
            best = i;
        }
    }
    best
}

/// Local validation of `Q₀ = ∫₀^{L/2} b` on the bootstrap set `s` over a
/// grid of correlation lengths.
pub fn validate_local(s: &SampleSet, ells: &[f64], settings: &ValidationSettings) -> Result<LocalValidation, ValidateError> {
    if ells.is_empty() {
        return Err(ValidateError::InvalidParameter("empty correlation-length grid".into()));
    }
    let moments = fuzzy_moments(s, settings.n_bins)?;
    let truth_values: Vec<f64> = s.samples().map(|row| local_integral(row, s.h)).collect();
    let truth = truth_pbox(&truth_values, settings.n_b, settings.m_tilde, settings.seed)?;
    let mut maps = None;
    let mut runs = Vec::with_capacity(ells.len());
    for &ell in ells {
        let kl = kl_decompose(s.length(), s.h, ell, settings.preserved_std_fraction)?;
        let field = FuzzyStochasticField::new(kl.clone(), moments.clone(), settings.project_infeasible)?;
        // The maps depend on the moments only, so one set serves the whole sweep.
        if maps.is_none() {
            maps = Some(alpha_maps(&field, &settings.alphas, settings.m_f)?);
        }
        let qoi = LocalIntegralQoi::new(kl);
        let band = qoi_alpha_cdfs(&qoi, maps.as_ref().unwrap(), &settings.alphas, settings.m_s, settings.seed)?;
        let entry = SweepEntry { ell, n_terms: qoi.n_normals(), containment: per_alpha(&truth, &band)? };
        runs.push((entry, band));
    }
    let sweep: Vec<SweepEntry> = runs.iter().map(|(e, _)| e.clone()).collect();
    let best = select(&sweep);
    let (entry, band) = runs.swap_remove(best);
    let report = ContainmentReport { selected_ell: entry.ell, containment: entry.containment, sweep };
    Ok(LocalValidation { truth, band, report })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalLocalSettings {
    pub l_rve: f64,
    pub local_ell: f64,
    pub global: GlobalOptions,
    pub problem: ProblemSpec,
}

pub struct GlobalLocalValidation {
    pub truth: TruthPBox,
    pub band: AlphaCutCdfs,
    pub report: ContainmentReport,
    pub n_global_terms: usize,
    pub n_local_terms: usize,
}

/// Global-local validation. `local_set` supplies the fuzzy local moments and
/// the effective samples (homogenized at the RVE length); `truth_set` spans
/// the whole bar and gives the true QoI per sample.
pub fn validate_global_local(
    local_set: &SampleSet,
    truth_set: &SampleSet,
    gl: &GlobalLocalSettings,
    settings: &ValidationSettings,
) -> Result<GlobalLocalValidation, ValidateError> {
    let truth_values = truth_set
        .samples()
        .map(|row| qoi_direct(row, truth_set.h, &gl.problem))
        .collect::<Result<Vec<f64>, _>>()?;
    let truth = truth_pbox(&truth_values, settings.n_b, settings.m_tilde, settings.seed)?;
    let effective = homogenize_set(local_set, gl.l_rve)?;
    let global = build_global_field(&effective, gl.l_rve, &gl.problem, &gl.global)?;
    let moments = fuzzy_moments(local_set, settings.n_bins)?;
    let local = LocalField::new(
        moments,
        gl.l_rve,
        local_set.h,
        gl.local_ell,
        settings.preserved_std_fraction,
        settings.project_infeasible,
    )?;
    let maps = alpha_maps(&local.field, &settings.alphas, settings.m_f)?;
    let (n_global_terms, n_local_terms) = (global.n_terms(), local.n_terms());
    let qoi = GlobalLocalQoi { global, local };
    let band = qoi_alpha_cdfs(&qoi, &maps, &settings.alphas, settings.m_s, settings.seed)?;
    let containment = per_alpha(&truth, &band)?;
    let entry = SweepEntry { ell: gl.global.ell_factor * gl.l_rve, n_terms: n_global_terms, containment: containment.clone() };
    let report = ContainmentReport { selected_ell: entry.ell, containment, sweep: vec![entry] };
    Ok(GlobalLocalValidation { truth, band, report, n_global_terms, n_local_terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randfield::BetaParams;

    /// `Q = Σ_j map(g_j)` with a fixed pseudo-Gaussian input per realization.
    struct SumQoi;

    impl FuzzyQoi for SumQoi {
        fn n_normals(&self) -> usize {
            3
        }

        fn evaluate(&self, y: &[f64], maps: &[Vec<TranslationMap>], out: &mut [Vec<f64>]) -> Result<(), ValidateError> {
            for (level, row) in maps.iter().zip(out.iter_mut()) {
                for (map, q) in level.iter().zip(row.iter_mut()) {
                    *q = y.iter().map(|&g| map.eval(g)).sum();
                }
            }
            Ok(())
        }
    }

    fn maps_for(scales: &[&[f64]]) -> Vec<Vec<TranslationMap>> {
        scales
            .iter()
            .map(|lvl| lvl.iter().map(|&s| TranslationMap::new(BetaParams::new(2.0, 3.0, 0.05, s).unwrap())).collect())
            .collect()
    }

    #[test]
    fn crisp_band_collapses() {
        let maps = maps_for(&[&[0.1, 0.1], &[0.1]]);
        let band = qoi_alpha_cdfs(&SumQoi, &maps, &[0.0, 1.0], 200, 3).unwrap();
        assert_eq!(band.q_left, band.q_right);
        assert_eq!(band.left[0].support(), band.right[0].support());
    }

    #[test]
    fn ordering_and_nesting() {
        // The 1-cut point lies outside the 0-cut grid; nesting is restored.
        let maps = maps_for(&[&[0.1, 0.2], &[0.25]]);
        let band = qoi_alpha_cdfs(&SumQoi, &maps, &[0.0, 1.0], 300, 4).unwrap();
        for m in 0..300 {
            assert!(band.q_left[0][m] <= band.q_right[0][m]);
            assert!(band.q_left[0][m] <= band.q_left[1][m] && band.q_right[1][m] <= band.q_right[0][m]);
        }
        for x in [0.3, 0.5, 0.7, 0.9] {
            assert!(band.left[0].eval(x) >= band.right[0].eval(x));
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let maps = maps_for(&[&[0.1, 0.15, 0.2], &[0.15]]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| qoi_alpha_cdfs(&SumQoi, &maps, &[0.0, 1.0], 500, 9).unwrap().to_csv())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn truth_pbox_groups() {
        let values: Vec<f64> = (0..10).map(f64::from).collect();
        let t = truth_pbox(&values, 1, 9, 5).unwrap();
        assert_eq!(t.groups[0].len(), 9);
        assert_eq!(t.pbox.lower.points, t.pbox.upper.points);
        assert!(truth_pbox(&values, 2, 10, 5).is_err());
        let t = truth_pbox(&values, 4, 6, 5).unwrap();
        for g in &t.groups {
            let mut d = g.clone();
            d.dedup();
            assert_eq!(d.len(), 6);
        }
    }

    #[test]
    fn containment_extremes() {
        let values: Vec<f64> = (0..40).map(|k| 1.0 + 0.01 * k as f64).collect();
        let truth = truth_pbox(&values, 5, 30, 2).unwrap();
        let left = Ecdf::new(&[0.0]).unwrap();
        let right = Ecdf::new(&[10.0]).unwrap();
        let wide = AlphaCutCdfs {
            alphas: vec![0.0],
            m_s: 1,
            m_f: 1,
            seed: 0,
            q_left: vec![vec![0.0]],
            q_right: vec![vec![10.0]],
            left: vec![left],
            right: vec![right],
        };
        assert_eq!(containment(&truth, &wide, 0.0).unwrap(), 1.0);
        let far = AlphaCutCdfs {
            left: vec![Ecdf::new(&[100.0]).unwrap()],
            right: vec![Ecdf::new(&[101.0]).unwrap()],
            ..wide.clone()
        };
        assert_eq!(containment(&truth, &far, 0.0).unwrap(), 0.0);
        // The member envelope itself as the band.
        let m = &truth.pbox.members;
        let self_band = AlphaCutCdfs {
            left: vec![m[0].clone()],
            right: vec![m[0].clone()],
            ..wide
        };
        let single = TruthPBox { values: vec![], groups: vec![], pbox: pbox(vec![m[0].clone()]).unwrap() };
        assert_eq!(containment(&single, &self_band, 0.0).unwrap(), 1.0);
    }
}
