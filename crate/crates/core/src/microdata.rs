//! Two-phase microstructure maps and the 1D coefficient samples cut from them.
//!
//! Lengths are in μm, moduli in GPa and the stored coefficient is the
//! compliance `b = 1/a` in GPa⁻¹.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, domain};

/// Admissible fiber radii in μm (diameters 4 to 10 μm).
pub const RADIUS_MIN: f64 = 2.0;
pub const RADIUS_MAX: f64 = 5.0;
/// Largest volume fraction the generator accepts.
pub const MAX_VOLUME_FRACTION: f64 = 0.64;

#[derive(Debug, Error)]
pub enum MicroError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("packing failed: {0}")]
    PackingFailure(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("malformed binary map: {0}")]
    FormatError(String),
    #[error("pixel {index} carries label {label}, expected 0 or 1")]
    LabelError { index: usize, label: u8 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberMap {
    pub domain_width: f64,
    pub domain_height: f64,
    pub disks: Vec<Disk>,
    pub target_volume_fraction: f64,
}

impl FiberMap {
    /// Analytic fiber-area fraction of the disks (disks lie fully inside).
    pub fn area_fraction(&self) -> f64 {
        let area: f64 = self.disks.iter().map(|d| PI * d.r * d.r).sum();
        area / (self.domain_width * self.domain_height)
    }

    /// Largest pairwise overlap depth `r_i + r_j - |c_i - c_j|`, or 0 when
    /// no pair overlaps.
    pub fn max_overlap(&self) -> f64 {
        let r_max = self.disks.iter().fold(0.0_f64, |m, d| m.max(d.r));
        if self.disks.len() < 2 || r_max <= 0.0 {
            return 0.0;
        }
        let pos: Vec<(f64, f64)> = self.disks.iter().map(|d| (d.x, d.y)).collect();
        let radii: Vec<f64> = self.disks.iter().map(|d| d.r).collect();
        let grid = CellGrid::build(&pos, 2.0 * r_max, self.domain_width, self.domain_height);
        let mut worst = 0.0_f64;
        grid.for_each_pair(&pos, |i, j| {
            let dx = pos[j].0 - pos[i].0;
            let dy = pos[j].1 - pos[i].1;
            let depth = radii[i] + radii[j] - (dx * dx + dy * dy).sqrt();
            worst = worst.max(depth);
        });
        worst
    }

    pub fn validate(&self, overlap_tolerance: f64) -> Result<(), MicroError> {
        for (i, d) in self.disks.iter().enumerate() {
            if !(RADIUS_MIN..=RADIUS_MAX).contains(&d.r) {
                return Err(MicroError::InvalidParameter(format!(
                    "disk {i} has radius {} outside [{RADIUS_MIN}, {RADIUS_MAX}]",
                    d.r
                )));
            }
            if d.x < 0.0 || d.x > self.domain_width || d.y < 0.0 || d.y > self.domain_height {
                return Err(MicroError::InvalidParameter(format!("disk {i} center outside the domain")));
            }
        }
        let overlap = self.max_overlap();
        if overlap > overlap_tolerance {
            return Err(MicroError::InvalidParameter(format!(
                "disks overlap by {overlap} μm (tolerance {overlap_tolerance})"
            )));
        }
        Ok(())
    }
}

/// Parameters of the synthetic packing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberMapSpec {
    pub width: f64,
    pub height: f64,
    pub volume_fraction: f64,
    pub radius_range: (f64, f64),
    pub seed: u64,
    #[serde(default)]
    pub overlap_tolerance: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
}

fn default_max_sweeps() -> usize {
    20_000
}

impl FiberMapSpec {
    pub fn new(width: f64, height: f64, volume_fraction: f64, seed: u64) -> Self {
        Self {
            width,
            height,
            volume_fraction,
            radius_range: (RADIUS_MIN, RADIUS_MAX),
            seed,
            overlap_tolerance: 0.0,
            max_sweeps: default_max_sweeps(),
        }
    }
}

/// Uniform bucket grid over the domain for neighbour queries.
struct CellGrid {
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl CellGrid {
    fn build(pos: &[(f64, f64)], cell: f64, width: f64, height: f64) -> Self {
        let nx = ((width / cell).floor() as usize).max(1);
        let ny = ((height / cell).floor() as usize).max(1);
        let cell_x = width / nx as f64;
        let cell_y = height / ny as f64;
        let index = |p: &(f64, f64)| {
            let cx = ((p.0 / cell_x) as isize).clamp(0, nx as isize - 1) as usize;
            let cy = ((p.1 / cell_y) as isize).clamp(0, ny as isize - 1) as usize;
            cy * nx + cx
        };
        let mut counts = vec![0usize; nx * ny + 1];
        for p in pos {
            counts[index(p) + 1] += 1;
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; pos.len()];
        for (i, p) in pos.iter().enumerate() {
            let c = index(p);
            items[fill[c]] = i;
            fill[c] += 1;
        }
        Self { cell: cell_x.min(cell_y), nx, ny, start: counts, items }
    }

    fn bucket(&self, cx: usize, cy: usize) -> &[usize] {
        let c = cy * self.nx + cx;
        &self.items[self.start[c]..self.start[c + 1]]
    }

    /// Visits every unordered pair `(i, j)`, `i < j`, in neighbouring cells.
    fn for_each_pair(&self, _pos: &[(f64, f64)], mut f: impl FnMut(usize, usize)) {
        for cy in 0..self.ny {
            for cx in 0..self.nx {
                let here = self.bucket(cx, cy);
                for (a, &i) in here.iter().enumerate() {
                    for &j in &here[a + 1..] {
                        f(i.min(j), i.max(j));
                    }
                }
                // Half of the 8-neighbourhood so each cell pair is visited once.
                for (dx, dy) in [(1isize, 0isize), (-1, 1), (0, 1), (1, 1)] {
                    let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                    if nx < 0 || ny < 0 || nx >= self.nx as isize || ny >= self.ny as isize {
                        continue;
                    }
                    let there = self.bucket(nx as usize, ny as usize);
                    for &i in here {
                        for &j in there {
                            f(i.min(j), i.max(j));
                        }
                    }
                }
            }
        }
    }
}

/// Packs non-overlapping disks to the requested volume fraction.
///
/// Radii are drawn first so that their total area hits the target. The disks
/// are then placed by random sequential adsorption at a reduced scale and
/// grown back to full size in small steps, relaxing overlaps after each step
/// with occasional random jiggles.
pub fn generate_microstructure(spec: &FiberMapSpec) -> Result<FiberMap, MicroError> {
    let (r_lo, r_hi) = spec.radius_range;
    if !(spec.volume_fraction > 0.0 && spec.volume_fraction <= MAX_VOLUME_FRACTION) {
        return Err(MicroError::InvalidParameter(format!(
            "volume fraction {} outside (0, {MAX_VOLUME_FRACTION}]",
            spec.volume_fraction
        )));
    }
    if !(RADIUS_MIN <= r_lo && r_lo <= r_hi && r_hi <= RADIUS_MAX) {
        return Err(MicroError::InvalidParameter(format!(
            "radius range ({r_lo}, {r_hi}) not inside [{RADIUS_MIN}, {RADIUS_MAX}]"
        )));
    }
    if !(spec.width > 2.0 * r_hi && spec.height > 2.0 * r_hi) {
        return Err(MicroError::InvalidParameter("domain smaller than one fiber".into()));
    }
    if spec.overlap_tolerance < 0.0 {
        return Err(MicroError::InvalidParameter("negative overlap tolerance".into()));
    }

    let (w, h) = (spec.width, spec.height);
    let radii = draw_radii(spec);
    let n = radii.len();

    // Largest disks are placed first.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]).then(a.cmp(&b)));

    let mut scale = (0.25 / spec.volume_fraction).sqrt().min(1.0);
    let mut pos = vec![(0.0, 0.0); n];
    place_sequentially(spec, &radii, &order, scale, &mut pos);

    let mut sweeps = 0usize;
    let mut step = 0u64;
    loop {
        let per_step = if scale < 1.0 { 40 } else { spec.max_sweeps };
        let mut converged = false;
        for _ in 0..per_step {
            sweeps += 1;
            if relax_sweep(&mut pos, &radii, scale, w, h) {
                converged = true;
                break;
            }
            if sweeps >= spec.max_sweeps {
                break;
            }
        }
        if scale >= 1.0 {
            if converged {
                break;
            }
            return Err(MicroError::PackingFailure(format!(
                "overlaps remain after {sweeps} relaxation sweeps at volume fraction {}",
                spec.volume_fraction
            )));
        }
        if sweeps >= spec.max_sweeps {
            return Err(MicroError::PackingFailure(format!(
                "sweep budget {} exhausted at radius scale {scale:.3}",
                spec.max_sweeps
            )));
        }
        step += 1;
        if step % 10 == 0 {
            jiggle(spec.seed, step, &mut pos, &radii, scale, w, h);
        }
        scale = (scale * 1.01).min(1.0);
    }

    let disks = pos
        .iter()
        .zip(&radii)
        .map(|(&(x, y), &r)| Disk { x, y, r })
        .collect();
    let map = FiberMap {
        domain_width: w,
        domain_height: h,
        disks,
        target_volume_fraction: spec.volume_fraction,
    };
    let overlap = map.max_overlap();
    if overlap > spec.overlap_tolerance {
        return Err(MicroError::PackingFailure(format!("residual overlap {overlap} μm")));
    }
    Ok(map)
}

fn draw_radii(spec: &FiberMapSpec) -> Vec<f64> {
    let (r_lo, r_hi) = spec.radius_range;
    let target = spec.volume_fraction * spec.width * spec.height;
    let mut rng = rng::stream(spec.seed, domain::RADII, 0);
    let mut radii = Vec::new();
    let mut area = 0.0;
    loop {
        let r = if r_hi > r_lo { rng.random_range(r_lo..=r_hi) } else { r_lo };
        let next = area + PI * r * r;
        // Stop at whichever side of the target is closer, keeping at least one disk.
        if next >= target {
            if radii.is_empty() || (next - target) < (target - area) {
                radii.push(r);
            }
            break;
        }
        radii.push(r);
        area = next;
    }
    radii
}

fn place_sequentially(
    spec: &FiberMapSpec,
    radii: &[f64],
    order: &[usize],
    scale: f64,
    pos: &mut [(f64, f64)],
) {
    let (w, h) = (spec.width, spec.height);
    let r_max = radii.iter().fold(0.0_f64, |m, &r| m.max(r)) * scale;
    let cell = 2.0 * r_max;
    let nx = ((w / cell).floor() as usize).max(1);
    let ny = ((h / cell).floor() as usize).max(1);
    let (cw, ch) = (w / nx as f64, h / ny as f64);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    let cell_of = |x: f64, y: f64| {
        (
            ((x / cw) as usize).min(nx - 1),
            ((y / ch) as usize).min(ny - 1),
        )
    };
    for &i in order {
        let r = radii[i] * scale;
        let mut rng = rng::stream(spec.seed, domain::PLACEMENT, i as u64);
        let mut candidate = (w / 2.0, h / 2.0);
        for _ in 0..200 {
            candidate = (rng.random_range(r..=w - r), rng.random_range(r..=h - r));
            let (cx, cy) = cell_of(candidate.0, candidate.1);
            let mut free = true;
            'scan: for yy in cy.saturating_sub(1)..=(cy + 1).min(ny - 1) {
                for xx in cx.saturating_sub(1)..=(cx + 1).min(nx - 1) {
                    for &j in &buckets[yy * nx + xx] {
                        let dx = pos[j].0 - candidate.0;
                        let dy = pos[j].1 - candidate.1;
                        let reach = r + radii[j] * scale;
                        if dx * dx + dy * dy < reach * reach {
                            free = false;
                            break 'scan;
                        }
                    }
                }
            }
            if free {
                break;
            }
        }
        // A saturated placement keeps its last candidate; relaxation resolves it.
        pos[i] = candidate;
        let (cx, cy) = cell_of(candidate.0, candidate.1);
        buckets[cy * nx + cx].push(i);
    }
}

/// One Gauss-Seidel pass over all overlapping pairs. Returns `true` when the
/// pass found no overlap at all.
fn relax_sweep(pos: &mut [(f64, f64)], radii: &[f64], scale: f64, w: f64, h: f64) -> bool {
    let r_max = radii.iter().fold(0.0_f64, |m, &r| m.max(r)) * scale;
    let grid = CellGrid::build(pos, 2.0 * r_max, w, h);
    debug_assert!(grid.cell >= 2.0 * r_max - 1e-9);
    let mut clean = true;
    let snapshot = pos.to_vec();
    grid.for_each_pair(&snapshot, |i, j| {
        let (ri, rj) = (radii[i] * scale, radii[j] * scale);
        let dx = pos[j].0 - pos[i].0;
        let dy = pos[j].1 - pos[i].1;
        let d2 = dx * dx + dy * dy;
        let reach = ri + rj;
        if d2 >= reach * reach {
            return;
        }
        clean = false;
        let d = d2.sqrt();
        let (ux, uy) = if d > 1e-12 {
            (dx / d, dy / d)
        } else {
            let angle = (i as f64 * 0.618_033_988_75 + j as f64 * 0.414_213_562_37) * 2.0 * PI;
            (angle.cos(), angle.sin())
        };
        // Push slightly past contact; the lighter disk moves further.
        let depth = (reach - d) * 1.02 + 1e-9;
        let (wi, wj) = (ri * ri, rj * rj);
        let (si, sj) = (depth * wj / (wi + wj), depth * wi / (wi + wj));
        pos[i].0 = (pos[i].0 - ux * si).clamp(ri, w - ri);
        pos[i].1 = (pos[i].1 - uy * si).clamp(ri, h - ri);
        pos[j].0 = (pos[j].0 + ux * sj).clamp(rj, w - rj);
        pos[j].1 = (pos[j].1 + uy * sj).clamp(rj, h - rj);
    });
    if !clean {
        return false;
    }
    // The pair list came from a snapshot; confirm against final positions.
    let grid = CellGrid::build(pos, 2.0 * r_max, w, h);
    let mut ok = true;
    grid.for_each_pair(pos, |i, j| {
        let dx = pos[j].0 - pos[i].0;
        let dy = pos[j].1 - pos[i].1;
        let reach = (radii[i] + radii[j]) * scale;
        if dx * dx + dy * dy < reach * reach {
            ok = false;
        }
    });
    ok
}

fn jiggle(seed: u64, step: u64, pos: &mut [(f64, f64)], radii: &[f64], scale: f64, w: f64, h: f64) {
    for (i, p) in pos.iter_mut().enumerate() {
        let mut rng = rng::stream(seed, domain::JIGGLE, (step << 32) ^ i as u64);
        let r = radii[i] * scale;
        let amp = 0.05 * r;
        p.0 = (p.0 + rng.random_range(-amp..=amp)).clamp(r, w - r);
        p.1 = (p.1 + rng.random_range(-amp..=amp)).clamp(r, h - r);
    }
}

/// Rasterized two-phase map, row-major, `1` for fiber.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    pub width_px: usize,
    pub height_px: usize,
    /// Pixel edge length in nm.
    pub pixel_size_nm: u32,
    pub phases: Vec<u8>,
}

impl BinaryMap {
    pub fn pixel_size(&self) -> f64 {
        self.pixel_size_nm as f64 / 1000.0
    }

    pub fn fiber_fraction(&self) -> f64 {
        let fibers = self.phases.iter().filter(|&&p| p == 1).count();
        fibers as f64 / self.phases.len() as f64
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.phases[row * self.width_px + col]
    }
}

/// Labels a pixel as fiber when its center lies inside (or on) some disk.
pub fn rasterize(map: &FiberMap, pixel_size: f64) -> Result<BinaryMap, MicroError> {
    if !(pixel_size > 0.0) {
        return Err(MicroError::InvalidParameter("pixel size must be positive".into()));
    }
    let width_px = (map.domain_width / pixel_size).round() as usize;
    let height_px = (map.domain_height / pixel_size).round() as usize;
    let mut phases = vec![0u8; width_px * height_px];
    for d in &map.disks {
        let r2 = d.r * d.r;
        // Pixel centers at (k + 1/2) * pixel_size.
        let first = |c: f64| ((c / pixel_size - 0.5).ceil().max(0.0)) as usize;
        let last = |c: f64, n: usize| ((c / pixel_size - 0.5).floor().min(n as f64 - 1.0)) as isize;
        let (c0, c1) = (first(d.x - d.r), last(d.x + d.r, width_px));
        let (r0, r1) = (first(d.y - d.r), last(d.y + d.r, height_px));
        for row in r0 as isize..=r1 {
            let py = (row as f64 + 0.5) * pixel_size - d.y;
            for col in c0 as isize..=c1 {
                let px = (col as f64 + 0.5) * pixel_size - d.x;
                if px * px + py * py <= r2 {
                    phases[row as usize * width_px + col as usize] = 1;
                }
            }
        }
    }
    Ok(BinaryMap {
        width_px,
        height_px,
        pixel_size_nm: (pixel_size * 1000.0).round() as u32,
        phases,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseModuli {
    pub a_fiber: f64,
    pub a_matrix: f64,
}

impl Default for PhaseModuli {
    fn default() -> Self {
        Self { a_fiber: 24.0, a_matrix: 3.6 }
    }
}

impl PhaseModuli {
    pub fn validate(&self) -> Result<(), MicroError> {
        if self.a_fiber > 0.0 && self.a_matrix > 0.0 && self.a_fiber > self.a_matrix {
            Ok(())
        } else {
            Err(MicroError::InvalidParameter(format!(
                "moduli must satisfy a_fiber > a_matrix > 0, got {} and {}",
                self.a_fiber, self.a_matrix
            )))
        }
    }

    /// Admissible compliance range `[1/a_fiber, 1/a_matrix]`.
    pub fn compliance_range(&self) -> (f64, f64) {
        (1.0 / self.a_fiber, 1.0 / self.a_matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Extracted,
    Bootstrap,
    Homogenized { window_um: f64 },
}

/// `M` one-dimensional compliance samples on the grid `x_j = j h`,
/// `j = 0..n_x`, where value `j` belongs to the element `[x_j, x_j + h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub h: f64,
    n_samples: usize,
    n_x: usize,
    values: Vec<f64>,
    pub provenance: Provenance,
}

impl SampleSet {
    pub fn from_rows(h: f64, rows: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self, MicroError> {
        let n_x = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || n_x == 0 {
            return Err(MicroError::DimensionMismatch("empty sample set".into()));
        }
        if rows.iter().any(|r| r.len() != n_x) {
            return Err(MicroError::DimensionMismatch("samples have different lengths".into()));
        }
        if !(h > 0.0) {
            return Err(MicroError::InvalidParameter("element size must be positive".into()));
        }
        if rows.iter().flatten().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(MicroError::InvalidParameter("sample values must be finite and positive".into()));
        }
        Ok(Self {
            h,
            n_samples: rows.len(),
            n_x,
            values: rows.into_iter().flatten().collect(),
            provenance,
        })
    }

    pub(crate) fn from_flat(h: f64, n_samples: usize, n_x: usize, values: Vec<f64>, provenance: Provenance) -> Self {
        debug_assert_eq!(values.len(), n_samples * n_x);
        Self { h, n_samples, n_x, values, provenance }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Sample length `n_x * h`.
    pub fn length(&self) -> f64 {
        self.n_x as f64 * self.h
    }

    pub fn x(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| j as f64 * self.h).collect()
    }

    pub fn sample(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_x..(m + 1) * self.n_x]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_x)
    }

    /// Values of all samples at grid index `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_samples).map(|m| self.values[m * self.n_x + j]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Keeps the first `n_x` grid points of every sample.
    pub fn truncated(&self, n_x: usize) -> Result<SampleSet, MicroError> {
        if n_x == 0 || n_x > self.n_x {
            return Err(MicroError::DimensionMismatch(format!(
                "cannot truncate {} points to {n_x}",
                self.n_x
            )));
        }
        let values = self.samples().flat_map(|s| s[..n_x].iter().copied()).collect();
        Ok(Self::from_flat(self.h, self.n_samples, n_x, values, self.provenance))
    }

    /// CSV with header `x_um,b_1,...,b_M`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x_um");
        for m in 1..=self.n_samples {
            let _ = write!(out, ",b_{m}");
        }
        out.push('\n');
        for j in 0..self.n_x {
            let _ = write!(out, "{}", j as f64 * self.h);
            for m in 0..self.n_samples {
                let _ = write!(out, ",{}", self.values[m * self.n_x + j]);
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, provenance: Provenance) -> Result<SampleSet, MicroError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| MicroError::FormatError("empty CSV".into()))?;
        let n_samples = header.split(',').count().saturating_sub(1);
        if !header.starts_with("x_um") || n_samples == 0 {
            return Err(MicroError::FormatError("expected header x_um,b_1,...".into()));
        }
        let mut xs = Vec::new();
        let mut rows: Vec<Vec<f64>> = vec![Vec::new(); n_samples];
        for line in lines {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| MicroError::FormatError(format!("bad number: {e}")))?;
            if fields.len() != n_samples + 1 {
                return Err(MicroError::FormatError("ragged CSV row".into()));
            }
            xs.push(fields[0]);
            for (row, v) in rows.iter_mut().zip(&fields[1..]) {
                row.push(*v);
            }
        }
        if xs.len() < 2 {
            return Err(MicroError::FormatError("need at least two grid points".into()));
        }
        let h = xs[1] - xs[0];
        SampleSet::from_rows(h, rows, provenance)
    }
}

/// Cuts the map into horizontal strips and averages compliance over square
/// elements. The element compliance is the arithmetic mean of pixel-wise
/// `1/a`, i.e. the reciprocal of the harmonic mean of the moduli.
pub fn extract_1d_samples(
    map: &BinaryMap,
    moduli: &PhaseModuli,
    strip_height: f64,
    element: f64,
) -> Result<SampleSet, MicroError> {
    moduli.validate()?;
    let ps = map.pixel_size();
    let to_px = |len: f64, what: &str| -> Result<usize, MicroError> {
        let px = len / ps;
        if !(px >= 1.0) || (px - px.round()).abs() > 1e-9 {
            return Err(MicroError::DimensionMismatch(format!(
                "{what} {len} μm is not a whole number of {ps} μm pixels"
            )));
        }
        Ok(px.round() as usize)
    };
    let strip_px = to_px(strip_height, "strip height")?;
    let elem_px = to_px(element, "element size")?;
    if map.height_px % strip_px != 0 || map.width_px % elem_px != 0 {
        return Err(MicroError::DimensionMismatch(format!(
            "{}x{} px map does not tile into {strip_px} px strips and {elem_px} px elements",
            map.width_px, map.height_px
        )));
    }
    let n_samples = map.height_px / strip_px;
    let n_x = map.width_px / elem_px;
    let (b_fiber, b_matrix) = moduli.compliance_range();
    let pixels = (strip_px * elem_px) as f64;
    let mut values = Vec::with_capacity(n_samples * n_x);
    for m in 0..n_samples {
        for j in 0..n_x {
            let mut fibers = 0usize;
            for row in m * strip_px..(m + 1) * strip_px {
                let base = row * map.width_px + j * elem_px;
                fibers += map.phases[base..base + elem_px].iter().filter(|&&p| p == 1).count();
            }
            let nf = fibers as f64;
            values.push((nf * b_fiber + (pixels - nf) * b_matrix) / pixels);
        }
    }
    Ok(SampleSet::from_flat(element, n_samples, n_x, values, Provenance::Extracted))
}

const BMAP_MAGIC: &[u8; 4] = b"FSM1";

pub fn write_binary_map(map: &BinaryMap, mut out: impl Write) -> Result<(), MicroError> {
    out.write_all(BMAP_MAGIC)?;
    out.write_all(&(map.width_px as u32).to_le_bytes())?;
    out.write_all(&(map.height_px as u32).to_le_bytes())?;
    out.write_all(&map.pixel_size_nm.to_le_bytes())?;
    out.write_all(&map.phases)?;
    Ok(())
}

pub fn read_binary_map(mut input: impl Read) -> Result<BinaryMap, MicroError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    parse_binary_map(&bytes)
}

pub fn parse_binary_map(bytes: &[u8]) -> Result<BinaryMap, MicroError> {
    if bytes.len() < 16 {
        return Err(MicroError::FormatError("truncated header".into()));
    }
    if &bytes[..4] != BMAP_MAGIC {
        return Err(MicroError::FormatError("bad magic".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
    let (width_px, height_px, pixel_size_nm) = (word(4) as usize, word(8) as usize, word(12));
    if pixel_size_nm == 0 {
        return Err(MicroError::FormatError("zero pixel size".into()));
    }
    let n = width_px
        .checked_mul(height_px)
        .ok_or_else(|| MicroError::FormatError("dimensions overflow".into()))?;
    let payload = &bytes[16..];
    if payload.len() < n {
        return Err(MicroError::FormatError(format!(
            "payload has {} bytes, expected {n}",
            payload.len()
        )));
    }
    if payload.len() > n {
        return Err(MicroError::FormatError("trailing bytes after payload".into()));
    }
    if let Some(index) = payload.iter().position(|&b| b > 1) {
        return Err(MicroError::LabelError { index, label: payload[index] });
    }
    Ok(BinaryMap { width_px, height_px, pixel_size_nm, phases: payload.to_vec() })
}

pub fn ingest_binary_map(path: impl AsRef<Path>) -> Result<BinaryMap, MicroError> {
    read_binary_map(std::fs::File::open(path)?)
}

/// Builds `m_out` samples of length `l_out` by concatenating uniformly drawn
/// source samples (with replacement) and cutting the excess off the end.
pub fn bootstrap(src: &SampleSet, m_out: usize, l_out: f64, seed: u64) -> Result<SampleSet, MicroError> {
    if src.provenance != Provenance::Extracted {
        return Err(MicroError::InvalidParameter("bootstrap expects extracted samples".into()));
    }
    let steps = l_out / src.h;
    if (steps - steps.round()).abs() > 1e-9 {
        return Err(MicroError::DimensionMismatch(format!(
            "length {l_out} μm is not a multiple of h = {} μm",
            src.h
        )));
    }
    let n_out = steps.round() as usize;
    if n_out < src.n_x {
        return Err(MicroError::InvalidParameter(format!(
            "output length {l_out} μm is shorter than the source {} μm",
            src.length()
        )));
    }
    if m_out == 0 {
        return Err(MicroError::InvalidParameter("need at least one output sample".into()));
    }
    let segments = n_out.div_ceil(src.n_x);
    let mut values = Vec::with_capacity(m_out * n_out);
    for m in 0..m_out {
        let mut rng = rng::stream(seed, domain::BOOTSTRAP, m as u64);
        let mut row = Vec::with_capacity(segments * src.n_x);
        for _ in 0..segments {
            let pick = rng.random_range(0..src.n_samples);
            row.extend_from_slice(src.sample(pick));
        }
        row.truncate(n_out);
        values.extend(row);
    }
    Ok(SampleSet::from_flat(src.h, m_out, n_out, values, Provenance::Bootstrap))
}

/// Segment count used by [`bootstrap`].
pub fn bootstrap_segments(src_length: f64, l_out: f64) -> usize {
    (l_out / src_length - 1e-12).ceil().max(1.0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_disk(w: f64, h: f64, d: Disk) -> FiberMap {
        FiberMap { domain_width: w, domain_height: h, disks: vec![d], target_volume_fraction: 0.0 }
    }

    #[test]
    fn single_disk_raster_area() {
        let exact = 25.0 * PI;
        let count = |x, y| {
            let bm = rasterize(&one_disk(20.0, 20.0, Disk { x, y, r: 5.0 }), 1.0).unwrap();
            bm.phases.iter().filter(|&&p| p == 1).count()
        };
        // Centered on a pixel corner the four-fold symmetric count is 80.
        assert_eq!(count(10.0, 10.0), 80);
        let area = count(10.3, 9.7) as f64;
        assert!((area - exact).abs() / exact <= 0.01, "area {area} vs {exact}");
    }

    #[test]
    fn empty_and_covered_maps() {
        let empty = FiberMap { domain_width: 10.0, domain_height: 10.0, disks: vec![], target_volume_fraction: 0.0 };
        assert!(rasterize(&empty, 1.0).unwrap().phases.iter().all(|&p| p == 0));
        let huge = one_disk(10.0, 10.0, Disk { x: 5.0, y: 5.0, r: 100.0 });
        assert!(rasterize(&huge, 1.0).unwrap().phases.iter().all(|&p| p == 1));
        assert!(rasterize(&empty, 0.0).is_err());
    }

    #[test]
    fn tiny_fraction_gives_one_disk() {
        let spec = FiberMapSpec::new(100.0, 100.0, 1e-6, 3);
        let map = generate_microstructure(&spec).unwrap();
        assert_eq!(map.disks.len(), 1);
        map.validate(0.0).unwrap();
    }

    #[test]
    fn rejects_bad_spec() {
        assert!(generate_microstructure(&FiberMapSpec::new(100.0, 100.0, 0.7, 1)).is_err());
        assert!(generate_microstructure(&FiberMapSpec::new(100.0, 100.0, 0.0, 1)).is_err());
        let mut spec = FiberMapSpec::new(100.0, 100.0, 0.3, 1);
        spec.radius_range = (1.0, 5.0);
        assert!(generate_microstructure(&spec).is_err());
    }

    #[test]
    fn moderate_packing_is_valid_and_deterministic() {
        let spec = FiberMapSpec::new(200.0, 150.0, 0.55, 11);
        let a = generate_microstructure(&spec).unwrap();
        let b = generate_microstructure(&spec).unwrap();
        assert_eq!(a, b);
        a.validate(0.0).unwrap();
        assert!((a.area_fraction() - 0.55).abs() <= 0.005);
    }

    #[test]
    fn element_compliance_values() {
        let moduli = PhaseModuli::default();
        let mk = |fibers: usize| {
            let mut phases = vec![0u8; 100];
            phases[..fibers].iter_mut().for_each(|p| *p = 1);
            BinaryMap { width_px: 10, height_px: 10, pixel_size_nm: 1000, phases }
        };
        let b = |fibers| extract_1d_samples(&mk(fibers), &moduli, 10.0, 10.0).unwrap().values()[0];
        assert!((b(0) - 1.0 / 3.6).abs() < 1e-15);
        assert!((b(100) - 1.0 / 24.0).abs() < 1e-15);
        // Harmonic mean of 63 fiber and 37 matrix pixels.
        let a: f64 = 100.0 / (63.0 / 24.0 + 37.0 / 3.6);
        assert!((a - 7.7503).abs() < 1e-4);
        assert!((b(63) - 1.0 / a).abs() < 1e-14);
        assert!((b(63) - 0.12903).abs() < 1e-5);
    }

    #[test]
    fn extraction_dimension_mismatch() {
        let bm = BinaryMap { width_px: 15, height_px: 10, pixel_size_nm: 1000, phases: vec![0; 150] };
        assert!(matches!(
            extract_1d_samples(&bm, &PhaseModuli::default(), 10.0, 10.0),
            Err(MicroError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn bmap_errors() {
        let bm = BinaryMap { width_px: 2, height_px: 2, pixel_size_nm: 1000, phases: vec![0, 1, 1, 0] };
        let mut bytes = Vec::new();
        write_binary_map(&bm, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(parse_binary_map(&bytes).unwrap(), bm);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_binary_map(&bad), Err(MicroError::FormatError(_))));
        assert!(matches!(parse_binary_map(&bytes[..19]), Err(MicroError::FormatError(_))));
        let mut label = bytes.clone();
        label[17] = 2;
        assert!(matches!(parse_binary_map(&label), Err(MicroError::LabelError { index: 1, label: 2 })));
    }

    fn ramp_set(m: usize, n_x: usize) -> SampleSet {
        let rows = (0..m)
            .map(|s| (0..n_x).map(|j| 1.0 + (s * 1000 + j) as f64).collect())
            .collect();
        SampleSet::from_rows(10.0, rows, Provenance::Extracted).unwrap()
    }

    #[test]
    fn bootstrap_segment_count_and_trim() {
        assert_eq!(bootstrap_segments(1700.0, 10_000.0), 6);
        assert_eq!(bootstrap_segments(1700.0, 1700.0), 1);
        let src = ramp_set(5, 170);
        let out = bootstrap(&src, 4, 10_000.0, 9).unwrap();
        assert_eq!(out.n_x(), 1000);
        assert_eq!(out.provenance, Provenance::Bootstrap);
    }

    #[test]
    fn bootstrap_same_length_passes_samples_through() {
        let src = ramp_set(6, 17);
        let out = bootstrap(&src, 10, src.length(), 1).unwrap();
        for s in out.samples() {
            assert!(src.samples().any(|t| t == s));
        }
    }

    #[test]
    fn bootstrap_values_keep_their_offsets() {
        // Exhaustive segment matching: every output value must come from the
        // same within-segment offset of some source sample.
        let src = ramp_set(4, 7);
        let out = bootstrap(&src, 5, 10.0 * 25.0, 4).unwrap();
        for s in out.samples() {
            for (j, &v) in s.iter().enumerate() {
                let offset = j % src.n_x();
                assert!(src.samples().any(|t| t[offset] == v));
            }
        }
    }

    #[test]
    fn bootstrap_exact_multiple_is_untrimmed() {
        let src = ramp_set(3, 10);
        let out = bootstrap(&src, 3, 300.0, 2).unwrap();
        assert_eq!(out.n_x(), 30);
        for s in out.samples() {
            for seg in s.chunks(10) {
                assert!(src.samples().any(|t| t == seg));
            }
        }
    }

    #[test]
    fn sample_csv_round_trip() {
        let src = ramp_set(3, 4);
        let text = src.to_csv();
        assert!(text.starts_with("x_um,b_1,b_2,b_3\n0,"));
        let back = SampleSet::from_csv(&text, Provenance::Extracted).unwrap();
        assert_eq!(back, src);
    }
}
