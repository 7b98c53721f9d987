//! Convex fuzzy variables as α-cut families.
//!
//! Two arithmetic semantics live here. [`image_alpha_cut`] evaluates the
//! α-cut of `g(z)` as the image of the joint input cut, which respects the
//! interaction between inputs. The [`Interval`] operators combine ranges of
//! two functions worst-case and ignore that `g₁` and `g₂` share arguments, so
//! `g₁ - g₁` is in general not `[0, 0]`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::trapezoid_weights;
use crate::stats::Histogram;

#[derive(Debug, Error, PartialEq)]
pub enum FuzzyError {
    #[error("invalid membership function: {0}")]
    InvalidMembership(String),
    #[error("interval [{lo}, {hi}] contains zero")]
    DivisionByZeroInterval { lo: f64, hi: f64 },
    #[error("least-squares fit failed: {0}")]
    FitFailure(String),
    #[error("invalid fuzzy vector: {0}")]
    InvalidVector(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Point at fraction `t` from `lo` to `hi`.
    pub fn lerp(&self, t: f64) -> f64 {
        self.lo + t * (self.hi - self.lo)
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval::new(self.lo + o.lo, self.hi + o.hi)
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval::new(self.lo - o.hi, self.hi - o.lo)
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Interval::new(
            p.iter().copied().fold(f64::INFINITY, f64::min),
            p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    pub fn div(&self, o: &Interval) -> Result<Interval, FuzzyError> {
        if o.lo <= 0.0 && 0.0 <= o.hi {
            return Err(FuzzyError::DivisionByZeroInterval { lo: o.lo, hi: o.hi });
        }
        let q = [self.lo / o.lo, self.lo / o.hi, self.hi / o.lo, self.hi / o.hi];
        Ok(Interval::new(
            q.iter().copied().fold(f64::INFINITY, f64::min),
            q.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ))
    }
}

pub fn fuzzy_add(r1: &Interval, r2: &Interval) -> Interval {
    r1.add(r2)
}

pub fn fuzzy_sub(r1: &Interval, r2: &Interval) -> Interval {
    r1.sub(r2)
}

pub fn fuzzy_mul(r1: &Interval, r2: &Interval) -> Interval {
    r1.mul(r2)
}

pub fn fuzzy_div(r1: &Interval, r2: &Interval) -> Result<Interval, FuzzyError> {
    r1.div(r2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub z: f64,
    pub mu: f64,
}

/// Normalized convex fuzzy number with a piecewise-linear membership.
///
/// Knots are sorted by `z`; memberships rise to 1, may stay at 1 over a
/// plateau and then fall. The zero-cut is `[first.z, last.z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Knot>", into = "Vec<Knot>")]
pub struct FuzzyVariable {
    knots: Vec<Knot>,
}

impl TryFrom<Vec<Knot>> for FuzzyVariable {
    type Error = FuzzyError;

    fn try_from(knots: Vec<Knot>) -> Result<Self, Self::Error> {
        FuzzyVariable::from_knots(knots)
    }
}

impl From<FuzzyVariable> for Vec<Knot> {
    fn from(v: FuzzyVariable) -> Self {
        v.knots
    }
}

impl FuzzyVariable {
    pub fn from_knots(knots: Vec<Knot>) -> Result<Self, FuzzyError> {
        let bad = |m: &str| Err(FuzzyError::InvalidMembership(m.to_string()));
        if knots.is_empty() {
            return bad("no knots");
        }
        if knots.iter().any(|k| !k.z.is_finite() || !(0.0..=1.0).contains(&k.mu)) {
            return bad("knots must be finite with memberships in [0, 1]");
        }
        if knots.windows(2).any(|w| w[1].z < w[0].z) {
            return bad("knots must be sorted by z");
        }
        let first_peak = knots.iter().position(|k| k.mu == 1.0);
        let Some(first_peak) = first_peak else {
            return bad("membership is not normalized (sup < 1)");
        };
        let last_peak = knots.iter().rposition(|k| k.mu == 1.0).unwrap();
        let rising = knots[..=first_peak].windows(2).all(|w| w[1].mu >= w[0].mu);
        let plateau = knots[first_peak..=last_peak].iter().all(|k| k.mu == 1.0);
        let falling = knots[last_peak..].windows(2).all(|w| w[1].mu <= w[0].mu);
        if !(rising && plateau && falling) {
            return bad("membership is not convex");
        }
        Ok(Self { knots })
    }

    pub fn crisp(value: f64) -> Self {
        Self { knots: vec![Knot { z: value, mu: 1.0 }] }
    }

    pub fn triangular(lo: f64, peak: f64, hi: f64) -> Result<Self, FuzzyError> {
        Self::trapezoidal(lo, peak, peak, hi)
    }

    pub fn trapezoidal(lo: f64, top_lo: f64, top_hi: f64, hi: f64) -> Result<Self, FuzzyError> {
        if !(lo <= top_lo && top_lo <= top_hi && top_hi <= hi) {
            return Err(FuzzyError::InvalidMembership(format!(
                "trapezoid corners out of order: {lo}, {top_lo}, {top_hi}, {hi}"
            )));
        }
        let mut knots = Vec::with_capacity(4);
        if lo < top_lo {
            knots.push(Knot { z: lo, mu: 0.0 });
        }
        knots.push(Knot { z: top_lo, mu: 1.0 });
        if top_hi > top_lo {
            knots.push(Knot { z: top_hi, mu: 1.0 });
        }
        if hi > top_hi {
            knots.push(Knot { z: hi, mu: 0.0 });
        }
        Self::from_knots(knots)
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn is_crisp(&self) -> bool {
        let s = self.support();
        s.lo == s.hi
    }

    pub fn support(&self) -> Interval {
        Interval::new(self.knots[0].z, self.knots[self.knots.len() - 1].z)
    }

    /// Membership grade at `z`.
    pub fn membership(&self, z: f64) -> f64 {
        let k = &self.knots;
        if z < k[0].z || z > k[k.len() - 1].z {
            return 0.0;
        }
        let i = k.partition_point(|kn| kn.z <= z);
        if i == 0 {
            return k[0].mu;
        }
        if i == k.len() {
            // On or beyond the last knot; take the largest grade at that z.
            return k.iter().rev().take_while(|kn| kn.z == z).fold(0.0, |m, kn| kn.mu.max(m));
        }
        let (a, b) = (k[i - 1], k[i]);
        if b.z == a.z {
            return a.mu.max(b.mu);
        }
        a.mu + (b.mu - a.mu) * (z - a.z) / (b.z - a.z)
    }

    /// The α-cut `{z : μ(z) >= α}`; `α = 0` gives the support closure.
    pub fn alpha_cut(&self, alpha: f64) -> Interval {
        let alpha = alpha.clamp(0.0, 1.0);
        if alpha == 0.0 {
            return self.support();
        }
        let k = &self.knots;
        let i = k.iter().position(|kn| kn.mu >= alpha).unwrap();
        let lo = if i == 0 {
            k[0].z
        } else {
            let (a, b) = (k[i - 1], k[i]);
            a.z + (alpha - a.mu) / (b.mu - a.mu) * (b.z - a.z)
        };
        let j = k.iter().rposition(|kn| kn.mu >= alpha).unwrap();
        let hi = if j == k.len() - 1 {
            k[j].z
        } else {
            let (a, b) = (k[j], k[j + 1]);
            a.z + (a.mu - alpha) / (a.mu - b.mu) * (b.z - a.z)
        };
        Interval::new(lo, hi.max(lo))
    }

    /// Knot list as JSON `[{"z": .., "mu": ..}, ...]`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.knots).expect("knots serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, FuzzyError> {
        let knots: Vec<Knot> =
            serde_json::from_str(text).map_err(|e| FuzzyError::InvalidMembership(e.to_string()))?;
        Self::from_knots(knots)
    }

    /// CSV table `alpha,lo,hi`.
    pub fn alpha_table_csv(&self, alphas: &[f64]) -> String {
        let mut out = String::from("alpha,lo,hi\n");
        for &a in alphas {
            let c = self.alpha_cut(a);
            let _ = writeln!(out, "{a},{},{}", c.lo, c.hi);
        }
        out
    }
}

pub fn alpha_cut(v: &FuzzyVariable, alpha: f64) -> Interval {
    v.alpha_cut(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Interaction {
    NonInteractive,
    CompletelyInteractive,
    /// One thickness per unordered pair `(i, j)`, `i < j`, in lexicographic order.
    PartiallyInteractive { beta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyVector {
    pub components: Vec<FuzzyVariable>,
    pub interaction: Interaction,
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

impl FuzzyVector {
    pub fn new(components: Vec<FuzzyVariable>, interaction: Interaction) -> Result<Self, FuzzyError> {
        if components.is_empty() {
            return Err(FuzzyError::InvalidVector("no components".into()));
        }
        if let Interaction::PartiallyInteractive { beta } = &interaction {
            let n = components.len();
            if beta.len() != n * (n - 1) / 2 {
                return Err(FuzzyError::InvalidVector(format!(
                    "{} components need {} pair thicknesses, got {}",
                    n,
                    n * (n - 1) / 2,
                    beta.len()
                )));
            }
            if beta.iter().any(|&b| !(b > 0.0)) {
                return Err(FuzzyError::InvalidVector("thickness must be positive".into()));
            }
        }
        Ok(Self { components, interaction })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn is_crisp(&self) -> bool {
        self.components.iter().all(FuzzyVariable::is_crisp)
    }

    /// Component α-cuts.
    pub fn cuts(&self, alpha: f64) -> Vec<Interval> {
        self.components.iter().map(|c| c.alpha_cut(alpha)).collect()
    }

    /// Point on the interactive segment at parameter `t ∈ [0, 1]`.
    pub fn segment_point(&self, alpha: f64, t: f64) -> Vec<f64> {
        self.cuts(alpha).iter().map(|c| c.lerp(t)).collect()
    }

    /// `m_f` uniformly spaced points of the completely interactive α-cut,
    /// endpoints included.
    pub fn segment_grid(&self, alpha: f64, m_f: usize) -> Vec<Vec<f64>> {
        segment_params(m_f).into_iter().map(|t| self.segment_point(alpha, t)).collect()
    }
}

/// Uniform parameters on `[0, 1]` including both endpoints.
pub fn segment_params(m_f: usize) -> Vec<f64> {
    match m_f {
        0 => vec![],
        1 => vec![0.5],
        _ => (0..m_f).map(|k| k as f64 / (m_f - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CutGeometry {
    Box(Vec<Interval>),
    Segment { lo: Vec<f64>, hi: Vec<f64> },
    /// Box intersected with `|z_i - z_j| <= bound` for each listed pair.
    Hexagonal { bounds: Vec<Interval>, pair_bounds: Vec<(usize, usize, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAlphaCut {
    pub alpha: f64,
    pub geometry: CutGeometry,
}

pub fn joint_alpha_cut(vec: &FuzzyVector, alpha: f64) -> JointAlphaCut {
    let cuts = vec.cuts(alpha);
    let geometry = match &vec.interaction {
        Interaction::NonInteractive => CutGeometry::Box(cuts),
        Interaction::CompletelyInteractive => CutGeometry::Segment {
            lo: cuts.iter().map(|c| c.lo).collect(),
            hi: cuts.iter().map(|c| c.hi).collect(),
        },
        Interaction::PartiallyInteractive { beta } => CutGeometry::Hexagonal {
            bounds: cuts,
            pair_bounds: pairs(vec.len())
                .zip(beta)
                .map(|((i, j), &b)| (i, j, b * (1.0 - alpha.clamp(0.0, 1.0))))
                .collect(),
        },
    };
    JointAlphaCut { alpha, geometry }
}

impl JointAlphaCut {
    pub fn dim(&self) -> usize {
        match &self.geometry {
            CutGeometry::Box(b) => b.len(),
            CutGeometry::Segment { lo, .. } => lo.len(),
            CutGeometry::Hexagonal { bounds, .. } => bounds.len(),
        }
    }

    pub fn contains(&self, z: &[f64], tol: f64) -> bool {
        let in_box = |b: &[Interval]| b.iter().zip(z).all(|(iv, &v)| iv.lo - tol <= v && v <= iv.hi + tol);
        match &self.geometry {
            CutGeometry::Box(b) => in_box(b),
            CutGeometry::Hexagonal { bounds, pair_bounds } => {
                in_box(bounds) && pair_bounds.iter().all(|&(i, j, c)| (z[i] - z[j]).abs() <= c + tol)
            }
            CutGeometry::Segment { lo, hi } => {
                // Common parameter t with z = lo + t (hi - lo) in every coordinate.
                let mut t_range = (0.0_f64, 1.0_f64);
                for k in 0..lo.len() {
                    let span = hi[k] - lo[k];
                    if span.abs() <= tol {
                        if (z[k] - lo[k]).abs() > tol {
                            return false;
                        }
                        continue;
                    }
                    let t = (z[k] - lo[k]) / span;
                    let slack = tol / span.abs();
                    t_range = (t_range.0.max(t - slack), t_range.1.min(t + slack));
                }
                t_range.0 <= t_range.1 + 1e-12
            }
        }
    }

    /// About `m_f` points covering the cut: uniform along segments, a tensor
    /// grid over boxes, and the tensor grid plus projections onto the pair
    /// constraints for hexagonal cuts.
    pub fn discretize(&self, m_f: usize) -> Vec<Vec<f64>> {
        let m_f = m_f.max(2);
        match &self.geometry {
            CutGeometry::Segment { lo, hi } => segment_params(m_f)
                .into_iter()
                .map(|t| lo.iter().zip(hi).map(|(a, b)| a + t * (b - a)).collect())
                .collect(),
            CutGeometry::Box(bounds) => tensor_grid(bounds, per_axis(m_f, bounds.len())),
            CutGeometry::Hexagonal { bounds, pair_bounds } => {
                let grid = tensor_grid(bounds, per_axis(m_f, bounds.len()));
                let mut out = Vec::with_capacity(grid.len());
                for mut z in grid {
                    for &(i, j, c) in pair_bounds {
                        let d = z[i] - z[j];
                        if d.abs() > c {
                            let mid = 0.5 * (z[i] + z[j]);
                            let half = 0.5 * c * d.signum();
                            z[i] = bounds[i].lo.max(bounds[i].hi.min(mid + half));
                            z[j] = bounds[j].lo.max(bounds[j].hi.min(mid - half));
                        }
                    }
                    if self.contains(&z, 1e-12) {
                        out.push(z);
                    }
                }
                out
            }
        }
    }
}

fn per_axis(m_f: usize, dim: usize) -> usize {
    ((m_f as f64).powf(1.0 / dim.max(1) as f64).round() as usize).max(2)
}

fn tensor_grid(bounds: &[Interval], k: usize) -> Vec<Vec<f64>> {
    let params = segment_params(k);
    let mut out = vec![Vec::with_capacity(bounds.len())];
    for b in bounds {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                params.iter().map(move |&t| {
                    let mut p = prefix.clone();
                    p.push(b.lerp(t));
                    p
                })
            })
            .collect();
    }
    out
}

/// Joint membership of Example-1 style partial interaction on the unit box.
pub fn hexagon_membership(z1: f64, z2: f64, beta: f64) -> f64 {
    if z1.abs() > 1.0 || z2.abs() > 1.0 {
        return 0.0;
    }
    let band = 1.0 - (z1 - z2).abs() / beta;
    let boxed = 1.0 - z1.abs().max(z2.abs());
    band.min(boxed).max(0.0)
}

/// α-cut of `g(z)` as the range of `g` over a discretization of the joint cut.
pub fn image_alpha_cut(g: impl Fn(&[f64]) -> f64, cut: &JointAlphaCut, m_f: usize) -> Interval {
    let (lo, hi) = cut
        .discretize(m_f)
        .iter()
        .map(|z| g(z))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Interval::new(lo, hi)
}

/// α-cuts of `∫ g(x, z) dx` by the composite trapezoidal rule on `grid`
/// (uniform), taking the range of the whole sum over the joint cut.
pub fn fuzzy_integrate(
    integrand: impl Fn(f64, &[f64]) -> f64,
    grid: &[f64],
    vec: &FuzzyVector,
    alphas: &[f64],
    m_f: usize,
) -> Vec<(f64, Interval)> {
    let h = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
    let w = trapezoid_weights(grid.len(), h);
    alphas
        .iter()
        .map(|&alpha| {
            let cut = joint_alpha_cut(vec, alpha);
            let range = image_alpha_cut(
                |z| grid.iter().zip(&w).map(|(&x, &wk)| wk * integrand(x, z)).sum(),
                &cut,
                m_f,
            );
            (alpha, range)
        })
        .collect()
}

/// Relative tolerance for the plateau correction: bins whose count is at
/// least `(1 - PLATEAU_TOL) * max` next to the mode form a flat top.
pub const PLATEAU_TOL: f64 = 0.10;

fn least_squares_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

/// Membership from a histogram by two least-squares branches.
///
/// The mode bin (leftmost on ties) and the bins to its left fit the rising
/// branch; the mode bin and the bins to its right fit the falling branch.
/// The branches meet at the peak and their zeros bound the support. A flat
/// top of at least two adjacent near-maximal bins turns the triangle into a
/// trapezoid over that top.
pub fn fuzzify_from_histogram(h: &Histogram) -> Result<FuzzyVariable, FuzzyError> {
    let nonempty = h.counts.iter().filter(|&&c| c > 0).count();
    if nonempty < 2 {
        return Err(FuzzyError::FitFailure("need at least two nonempty bins".into()));
    }
    let mids = h.midpoints();
    let max = *h.counts.iter().max().unwrap();
    let mode = h.counts.iter().position(|&c| c == max).unwrap();
    let pts: Vec<(f64, f64)> = mids.iter().zip(&h.counts).map(|(&x, &c)| (x, c as f64)).collect();

    let (a_l, s_l) = least_squares_line(&pts[..=mode])
        .ok_or_else(|| FuzzyError::FitFailure("rising branch has fewer than two bins".into()))?;
    let (a_r, s_r) = least_squares_line(&pts[mode..])
        .ok_or_else(|| FuzzyError::FitFailure("falling branch has fewer than two bins".into()))?;
    if !(s_l > 0.0) {
        return Err(FuzzyError::FitFailure(format!("rising branch slope {s_l} is not positive")));
    }
    if !(s_r < 0.0) {
        return Err(FuzzyError::FitFailure(format!("falling branch slope {s_r} is not negative")));
    }
    let peak = (a_r - a_l) / (s_l - s_r);
    if !(a_l + s_l * peak > 0.0) {
        return Err(FuzzyError::FitFailure("branches intersect at a non-positive count".into()));
    }
    let mut lo = -a_l / s_l;
    let mut hi = -a_r / s_r;

    let threshold = (1.0 - PLATEAU_TOL) * max as f64;
    let mut first = mode;
    while first > 0 && h.counts[first - 1] as f64 >= threshold {
        first -= 1;
    }
    let mut last = mode;
    while last + 1 < h.counts.len() && h.counts[last + 1] as f64 >= threshold {
        last += 1;
    }
    let (top_lo, top_hi) = if last > first { (mids[first], mids[last]) } else { (peak, peak) };
    // Keep the corners ordered.
    lo = lo.min(top_lo);
    hi = hi.max(top_hi);
    FuzzyVariable::trapezoidal(lo, top_lo, top_hi, hi)
}

/// [`fuzzify_from_histogram`], falling back to the triangle
/// `(min, mode midpoint, max)` of the histogram range when the fit fails,
/// and to a crisp value for a single-bin histogram.
pub fn fuzzify_with_fallback(h: &Histogram) -> FuzzyVariable {
    if h.is_degenerate() {
        return FuzzyVariable::crisp(0.5 * (h.edges[0] + h.edges[h.edges.len() - 1]));
    }
    match fuzzify_from_histogram(h) {
        Ok(v) => v,
        Err(_) => {
            let max = *h.counts.iter().max().unwrap();
            let mode = h.counts.iter().position(|&c| c == max).unwrap();
            let (lo, hi) = (h.edges[0], h.edges[h.edges.len() - 1]);
            FuzzyVariable::triangular(lo, h.midpoints()[mode], hi).expect("ordered triangle")
        }
    }
}
