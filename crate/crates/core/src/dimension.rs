//! Covering numbers, box-dimension regression and Hausdorff-content bounds.
//!
//! `N(A,δ)` is approximated by counting occupied cells of an axis-aligned grid
//! of side `δ`, minimized over a few grid offsets. Grid counts and minimal ball
//! covers agree up to a factor depending only on the ambient dimension, which
//! drops out of the log-log slope.

use alloc::vec::Vec;
use hashbrown::HashSet;

use crate::fit;
use crate::grassmannian::{self, Subspace};
use crate::ifs::{self, PointCloud, System};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Largest ambient dimension supported by the grid counters.
pub const MAX_GRID_DIM: usize = 8;

/// Relative nudge added to cell coordinates so that points sitting exactly on a
/// grid line (up to rounding) fall into the cell they start.
const CELL_NUDGE: f64 = 1e-9;

type CellKey = [i64; MAX_GRID_DIM];

fn cell_key(x: &[f64], offset: &[f64], delta: f64) -> CellKey {
    let mut key = [0i64; MAX_GRID_DIM];
    for (i, (xi, oi)) in x.iter().zip(offset).enumerate() {
        key[i] = libm::floor((xi - oi) / delta + CELL_NUDGE) as i64;
    }
    key
}

fn grid_offsets(dim: usize, delta: f64, jitter_count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeededRng::new(seed);
    let mut offsets = alloc::vec![alloc::vec![0.0; dim]];
    for _ in 1..jitter_count.max(1) {
        offsets.push((0..dim).map(|_| rng.uniform() * delta).collect());
    }
    offsets
}

fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map(Vec::len).ok_or_else(|| Error::InsufficientData("empty point set".into()))?;
    if dim > MAX_GRID_DIM {
        return Err(Error::Unsupported(alloc::format!("grid counting supports dimension ≤ {MAX_GRID_DIM}")));
    }
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
    }
    Ok(dim)
}

/// Number of occupied grid cells of side `delta`, minimized over
/// `jitter_count` grid offsets (the first offset is zero, the rest are drawn
/// from `seed`).
pub fn box_count(points: &[Vec<f64>], delta: f64, jitter_count: usize, seed: u64) -> Result<usize> {
    let dim = check_points(points)?;
    if !(delta > 0.0) {
        return Err(Error::Precondition(alloc::format!("δ must be positive, got {delta}")));
    }
    let mut best = usize::MAX;
    let mut cells: HashSet<CellKey> = HashSet::with_capacity(points.len());
    for offset in grid_offsets(dim, delta, jitter_count, seed) {
        cells.clear();
        for p in points {
            cells.insert(cell_key(p, &offset, delta));
        }
        best = best.min(cells.len());
    }
    Ok(best)
}

/// Covering numbers over a list of scales.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCountSeries {
    /// Ambient dimension of the counted set (upper clamp for regression).
    pub ambient_dim: usize,
    /// Scales, strictly decreasing.
    pub scales: Vec<f64>,
    /// `N(A,δ)` per scale.
    pub counts: Vec<usize>,
    /// Number of grid offsets each count was minimized over.
    pub grid_offsets_averaged: usize,
}

/// Runs [`box_count`] at each scale.
pub fn box_count_series(points: &[Vec<f64>], scales: &[f64], jitter_count: usize, seed: u64) -> Result<BoxCountSeries> {
    let dim = check_points(points)?;
    let counts = scales.iter().map(|&d| box_count(points, d, jitter_count, seed)).collect::<Result<Vec<_>>>()?;
    Ok(BoxCountSeries { ambient_dim: dim, scales: scales.to_vec(), counts, grid_offsets_averaged: jitter_count.max(1) })
}

/// How a dimension value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Log-log regression of covering numbers.
    BoxRegression,
    /// Hausdorff-content bound.
    Content,
    /// Closed-form value (e.g. similarity dimension).
    ClosedForm,
}

impl Method {
    /// Lower-case name used in tables.
    pub fn as_str(self) -> &'static str {
        match self {
            Method::BoxRegression => "box_regression",
            Method::Content => "content",
            Method::ClosedForm => "closed_form",
        }
    }
}

/// A dimension estimate with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionEstimate {
    /// Estimated dimension.
    pub value: f64,
    /// Standard error (zero for closed forms).
    pub stderr: f64,
    /// `(δ_min, δ_max)` of the scales used.
    pub scale_range: (f64, f64),
    /// Method.
    pub method: Method,
}

fn regress(scales: &[f64], counts: &[usize], clamp_max: f64) -> Result<DimensionEstimate> {
    if scales.len() < 4 {
        return Err(Error::InsufficientData(alloc::format!("need ≥ 4 scales, got {}", scales.len())));
    }
    let lo = scales.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scales.iter().copied().fold(0.0, f64::max);
    if hi / lo < 4.0 * (1.0 - 1e-12) {
        return Err(Error::InsufficientData("scales must span at least two octaves".into()));
    }
    let x: Vec<f64> = scales.iter().map(|d| -libm::log(*d)).collect();
    let y: Vec<f64> = counts.iter().map(|&c| libm::log(c.max(1) as f64)).collect();
    let f = fit::line(&x, &y).ok_or_else(|| Error::InsufficientData("degenerate scales".into()))?;
    Ok(DimensionEstimate {
        value: f.slope.clamp(0.0, clamp_max),
        stderr: f.stderr,
        scale_range: (lo, hi),
        method: Method::BoxRegression,
    })
}

/// Least-squares slope of `log N` against `log(1/δ)`, clamped to `[0, n]`.
/// Requires at least four scales spanning two octaves.
pub fn upper_box_dimension(series: &BoxCountSeries) -> Result<DimensionEstimate> {
    regress(&series.scales, &series.counts, series.ambient_dim as f64)
}

/// Dyadic scales `2^{-j}` between the coarsest scale with at least
/// `min_cells` occupied cells and the finest scale not below `resolution`.
pub fn dyadic_ladder(points: &[Vec<f64>], resolution: f64, min_cells: usize) -> Result<Vec<f64>> {
    check_points(points)?;
    let mut ladder = Vec::new();
    let mut j = -8i32;
    loop {
        let d = libm::pow(2.0, -(j as f64));
        if d < resolution * (1.0 - 1e-12) || j > 60 {
            break;
        }
        if !ladder.is_empty() || box_count(points, d, 1, 0)? >= min_cells {
            ladder.push(d);
        }
        j += 1;
    }
    Ok(ladder)
}

/// Upper box dimension of a point cloud over its [`dyadic_ladder`].
pub fn cloud_box_dimension(cloud: &PointCloud, jitter_count: usize, seed: u64) -> Result<DimensionEstimate> {
    let ladder = dyadic_ladder(cloud.points(), cloud.resolution(), 10)?;
    upper_box_dimension(&box_count_series(cloud.points(), &ladder, jitter_count, seed)?)
}

/// Upper bound on the `s`-dimensional Hausdorff content `H^s_∞` of a finite
/// point set, from the cheapest cover by dyadic cubes.
///
/// Every cover set is charged `max(diam, min_diameter)^s`; a cube holding a
/// single distinct point costs `min_diameter^s` (a ball of that diameter), so
/// `min_diameter = 0` treats the points as an exact finite set and the cloud
/// resolution treats them as a cover of the underlying attractor. Cubes are
/// refined while that lowers the total, visiting at most `cover_budget` cubes.
pub fn hausdorff_content_upper(points: &[Vec<f64>], s: f64, cover_budget: usize, min_diameter: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::Precondition(alloc::format!("s must be ≥ 0, got {s}")));
    }
    if points.is_empty() {
        return Ok(0.0);
    }
    let dim = check_points(points)?;
    let charge = |d: f64| if s == 0.0 { 1.0 } else { libm::pow(d.max(min_diameter), s) };
    // Smallest aligned dyadic cube containing all points.
    let mut lo = alloc::vec![f64::INFINITY; dim];
    let mut hi = alloc::vec![f64::NEG_INFINITY; dim];
    for p in points {
        for i in 0..dim {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let extent = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    if extent == 0.0 {
        return Ok(charge(0.0));
    }
    // A set on both sides of a coordinate hyperplane fits in no aligned
    // cube; it gets a cube anchored at its lower corner instead. Otherwise the
    // global dyadic grid is used, so covers of subsets stay comparable.
    let mut level = libm::ceil(libm::log2(extent)) as i32;
    let origin = if lo.iter().zip(&hi).any(|(a, b)| *a < 0.0 && *b >= 0.0) {
        level += 1;
        lo.clone()
    } else {
        loop {
            let side = libm::exp2(level as f64);
            let corner: Vec<f64> = lo.iter().map(|v| libm::floor(v / side) * side).collect();
            if hi.iter().zip(&corner).all(|(h, c)| *h < c + side) {
                break corner;
            }
            level += 1;
        }
    };
    let mut state = ContentSearch { dim, points, charge: &charge, min_diameter, visited: 0, budget: cover_budget.max(1) };
    let all: Vec<usize> = (0..points.len()).collect();
    Ok(state.cost(&all, &origin, libm::exp2(level as f64)))
}

struct ContentSearch<'a, F: Fn(f64) -> f64> {
    dim: usize,
    points: &'a [Vec<f64>],
    charge: &'a F,
    min_diameter: f64,
    visited: usize,
    budget: usize,
}

impl<F: Fn(f64) -> f64> ContentSearch<'_, F> {
    fn cost(&mut self, members: &[usize], origin: &[f64], side: f64) -> f64 {
        self.visited += 1;
        let first = &self.points[members[0]];
        if members.iter().all(|&i| self.points[i] == *first) {
            return (self.charge)(0.0);
        }
        let diam = side * libm::sqrt(self.dim as f64);
        let whole = (self.charge)(diam);
        if diam <= self.min_diameter || self.visited >= self.budget {
            return whole;
        }
        let half = side / 2.0;
        let mut buckets: Vec<(usize, Vec<usize>)> = Vec::new();
        for &i in members {
            let p = &self.points[i];
            let mut code = 0usize;
            for d in 0..self.dim {
                if p[d] >= origin[d] + half {
                    code |= 1 << d;
                }
            }
            match buckets.iter_mut().find(|(c, _)| *c == code) {
                Some((_, v)) => v.push(i),
                None => buckets.push((code, alloc::vec![i])),
            }
        }
        buckets.sort_by_key(|(c, _)| *c);
        let mut split = 0.0;
        for (code, sub) in &buckets {
            let child: Vec<f64> =
                (0..self.dim).map(|d| origin[d] + if code & (1 << d) != 0 { half } else { 0.0 }).collect();
            split += self.cost(sub, &child, half);
            if split >= whole {
                break;
            }
        }
        whole.min(split)
    }
}

/// Lower bound on `H^s_∞` of the union of the cylinders represented by a cloud
/// from an equal-ratio self-similar system with strong separation.
///
/// With separation constant `c` the natural measure satisfies
/// `μ(U) ≤ c^{-s}|U|^s` for every `s ≤ dim`, so any cover of the union pays at
/// least `c^s · μ(union)`; the cylinders of the cloud's words carry mass
/// `N^{-|w|}` each. Returns 0 for an empty cloud and for `s` above the
/// similarity dimension (the measure gives no information there).
pub fn hausdorff_content_lower(cloud: &PointCloud, s: f64) -> Result<f64> {
    let (words, source) = match (cloud.words(), cloud.source()) {
        (Some(w), Some(src)) => (w, src),
        _ => return Err(Error::Precondition("cloud has no symbolic provenance".into())),
    };
    let ifs = match source.as_ref() {
        System::SelfSimilar(s) => s,
        System::GraphDirected(_) => {
            return Err(Error::Unsupported("content lower bound needs a self-similar system".into()))
        }
    };
    ifs.equal_ratio().ok_or_else(|| Error::Unsupported("content lower bound needs equal ratios".into()))?;
    let c = ifs::separation_constant(ifs, 8)
        .ok_or_else(|| Error::Precondition("strong separation is not certified".into()))?;
    if words.is_empty() {
        return Ok(0.0);
    }
    let sigma = ifs::similarity_dimension(ifs);
    if s > sigma + 1e-12 {
        return Ok(0.0);
    }
    let n = ifs.maps().len() as f64;
    let mut distinct: Vec<&ifs::SymbolWord> = words.iter().collect();
    distinct.sort();
    distinct.dedup();
    // Drop words that extend an earlier (shorter) word: their cylinders are nested.
    let mut mass = 0.0;
    let mut kept: Vec<&ifs::SymbolWord> = Vec::new();
    for w in distinct {
        if kept.iter().any(|k| w.letters().starts_with(k.letters())) {
            continue;
        }
        mass += libm::pow(n, -(w.len() as f64));
        kept.push(w);
    }
    Ok(mass * libm::pow(c, s))
}

/// Greedy `δ`-cover of a direction set under `d(V,W)`: scan in order and open
/// a new center whenever a direction is farther than `δ` from all centers.
pub fn greedy_cover_count(directions: &[Subspace], delta: f64) -> usize {
    let mut centers: Vec<&Subspace> = Vec::new();
    for v in directions {
        if centers.iter().all(|c| grassmannian::farther_than(c, v, delta)) {
            centers.push(v);
        }
    }
    centers.len()
}

/// Upper-box-dimension estimate of a finite direction set in the Grassmannian
/// metric, via greedy covers at each scale.
///
/// The finite-scale slope is an upper-box proxy: it bounds the packing
/// dimension of the set the sample represents from above, up to sampling.
pub fn direction_set_box_dimension(directions: &[Subspace], scales: &[f64]) -> Result<DimensionEstimate> {
    let first = directions.first().ok_or_else(|| Error::InsufficientData("no directions".into()))?;
    let d = grassmannian::grassmannian_dim(first.ambient_dim(), first.plane_dim()) as f64;
    let counts: Vec<usize> = scales.iter().map(|&s| greedy_cover_count(directions, s)).collect();
    regress(scales, &counts, d)
}
