//! Projection sweeps over direction nets.
//!
//! For a direction `V ∈ Gr(n,k)` and a scale `δ`, the δ-fat planes are the
//! preimages `π_V^{-1}(∏[j_iδ, (j_i+1)δ))` of a half-open cell lattice in `V`.
//! Two points are related, `x ∼_V y`, when they are more than `2η` apart and
//! their open `δ`-balls meet a common fat plane. The energy sums relation
//! counts over a net; the exceptional count tallies directions whose
//! projection has few occupied `δ`-cells.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::dimension::{self, MAX_GRID_DIM};
use crate::fit;
use crate::grassmannian::{self, DeltaNet, Subspace};
use crate::ifs::{self, PointCloud, System};
use crate::linalg;
use crate::{Error, Result};

type CellKey = [i64; MAX_GRID_DIM];

fn key_of(index: &[i64]) -> CellKey {
    let mut key = [0i64; MAX_GRID_DIM];
    key[..index.len()].copy_from_slice(index);
    key
}

fn for_each_direction<T, F>(members: &[Subspace], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &Subspace) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        members.par_iter().enumerate().map(|(i, v)| f(i, v)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        members.iter().enumerate().map(|(i, v)| f(i, v)).collect()
    }
}

/// The lattice of `δ`-fat `(n−k)`-planes orthogonal to a direction `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct FatPlaneGrid {
    direction: Subspace,
    cell_size: f64,
}

impl FatPlaneGrid {
    /// Grid of width `cell_size > 0` over `direction` (`k ≤ 8`).
    pub fn new(direction: Subspace, cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0) {
            return Err(Error::Precondition(alloc::format!("cell size must be positive, got {cell_size}")));
        }
        if direction.plane_dim() > MAX_GRID_DIM {
            return Err(Error::Unsupported(alloc::format!("plane dimension above {MAX_GRID_DIM}")));
        }
        Ok(Self { direction, cell_size })
    }

    /// The direction `V`.
    pub fn direction(&self) -> &Subspace {
        &self.direction
    }

    /// Cell width `δ`.
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    /// `j_i = floor(⟨x, v_i⟩ / δ)` for the frame vectors `v_i` of `V`.
    ///
    /// # Panics
    /// When `x` does not live in the ambient space of `V`.
    pub fn index(&self, x: &[f64]) -> Vec<i64> {
        assert_eq!(x.len(), self.direction.ambient_dim(), "point dimension");
        self.index_of_coords(&self.direction.coords(x))
    }

    /// Cell index of a point given by its `V`-coordinates.
    pub fn index_of_coords(&self, coords: &[f64]) -> Vec<i64> {
        coords.iter().map(|c| libm::floor(c / self.cell_size) as i64).collect()
    }

    /// Cells met by the open ball of `radius ≤ δ` around a point with
    /// `V`-coordinates `coords`. A ball meets a half-open cell iff the distance
    /// from its projected center to the closed cell box is below `radius`.
    pub fn cells_meeting_ball(&self, coords: &[f64], radius: f64) -> Vec<Vec<i64>> {
        let d = self.cell_size;
        let base = self.index_of_coords(coords);
        let k = base.len();
        let r2 = radius * radius;
        let mut out = Vec::new();
        let total = 3usize.pow(k as u32);
        for code in 0..total {
            let mut c = code;
            let mut cell = Vec::with_capacity(k);
            let mut dist2 = 0.0;
            for i in 0..k {
                let j = base[i] + (c % 3) as i64 - 1;
                c /= 3;
                let lo = j as f64 * d;
                let hi = lo + d;
                let gap = (lo - coords[i]).max(coords[i] - hi).max(0.0);
                dist2 += gap * gap;
                cell.push(j);
            }
            if dist2 < r2 {
                out.push(cell);
            }
        }
        out
    }
}

/// `x ∼_V y`: `‖x − y‖ > 2η` and the open `δ`-balls around `x` and `y` meet a
/// common `δ`-fat plane of `V`.
pub fn relate(v: &Subspace, x: &[f64], y: &[f64], delta: f64, eta: f64) -> Result<bool> {
    if !(eta > delta) {
        return Err(Error::Precondition(alloc::format!("need η > δ, got η={eta}, δ={delta}")));
    }
    let n = v.ambient_dim();
    for p in [x, y] {
        if p.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: p.len() });
        }
    }
    if !(linalg::dist(x, y) > 2.0 * eta) {
        return Ok(false);
    }
    let grid = FatPlaneGrid::new(v.clone(), delta)?;
    let cx = grid.cells_meeting_ball(&v.coords(x), delta);
    let cy = grid.cells_meeting_ball(&v.coords(y), delta);
    Ok(cx.iter().any(|c| cy.contains(c)))
}

/// How the separation scale `η` is chosen for a given `δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaMode {
    /// `η = factor · δ` (default factor 4).
    Fixed(f64),
    /// A constant `η`, the same at every scale.
    Absolute(f64),
    /// `η = ε^d / (n^{1/2} 2^{d+2} (2^{n−k}+1)^d)` with `d = (γ − s − ε)^{-1}`,
    /// independent of `δ`; only meaningful far in the asymptotic regime.
    Asymptotic {
        /// `ε > 0`.
        epsilon: f64,
        /// Dimension `γ` of the set.
        gamma: f64,
        /// Threshold `s`.
        s: f64,
    },
}

impl Default for EtaMode {
    fn default() -> Self {
        EtaMode::Fixed(4.0)
    }
}

impl EtaMode {
    /// The `η` for scale `delta` on `Gr(n,k)`.
    pub fn resolve(&self, delta: f64, n: usize, k: usize) -> Result<f64> {
        match *self {
            EtaMode::Fixed(factor) => {
                if !(factor > 1.0) {
                    return Err(Error::Precondition(alloc::format!("η factor must exceed 1, got {factor}")));
                }
                Ok(factor * delta)
            }
            EtaMode::Absolute(eta) => Ok(eta),
            EtaMode::Asymptotic { epsilon, gamma, s } => {
                let gap = gamma - s - epsilon;
                if !(epsilon > 0.0 && gap > 0.0) {
                    return Err(Error::Precondition("asymptotic η needs ε > 0 and γ − s − ε > 0".into()));
                }
                let d = 1.0 / gap;
                let denom = libm::sqrt(n as f64)
                    * libm::pow(2.0, d + 2.0)
                    * libm::pow(libm::pow(2.0, (n - k) as f64) + 1.0, d);
                Ok(libm::pow(epsilon, d) / denom)
            }
        }
    }
}

/// Relation counts of one cloud over one net.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// Cell width `δ` (the cloud resolution).
    pub delta: f64,
    /// Net separation `δ₂`.
    pub net_separation: f64,
    /// Separation scale `η`.
    pub eta: f64,
    /// Number of points `|A′|`.
    pub point_count: usize,
    /// `card{(x,y) : x ∼_V y}` per net direction (ordered pairs).
    pub per_direction: Vec<u64>,
    /// `ℰ`, the sum of `per_direction`.
    pub total: u64,
}

fn check_energy_inputs(cloud: &PointCloud, net: &DeltaNet, eta: f64) -> Result<()> {
    let delta = cloud.resolution();
    if (net.separation() - delta).abs() > 1e-9 * delta {
        return Err(Error::Precondition(alloc::format!(
            "resolution mismatch: cloud δ = {delta}, net separation = {}",
            net.separation()
        )));
    }
    if cloud.dim() != net.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: net.ambient_dim(), found: cloud.dim() });
    }
    if net.plane_dim() > MAX_GRID_DIM {
        return Err(Error::Unsupported(alloc::format!("plane dimension above {MAX_GRID_DIM}")));
    }
    if !(eta > delta) {
        return Err(Error::Precondition(alloc::format!("need η > δ, got η={eta}, δ={delta}")));
    }
    Ok(())
}

fn direction_relation_count(points: &[Vec<f64>], v: &Subspace, delta: f64, eta: f64) -> u64 {
    let grid = FatPlaneGrid { direction: v.clone(), cell_size: delta };
    let mut buckets: HashMap<CellKey, Vec<u32>> = HashMap::new();
    let cells: Vec<Vec<CellKey>> = points
        .iter()
        .map(|p| grid.cells_meeting_ball(&v.coords(p), delta).iter().map(|c| key_of(c)).collect())
        .collect();
    for (i, cs) in cells.iter().enumerate() {
        for c in cs {
            buckets.entry(*c).or_default().push(i as u32);
        }
    }
    let threshold2 = 4.0 * eta * eta;
    let mut stamp = vec![u32::MAX; points.len()];
    let mut count = 0u64;
    for (i, cs) in cells.iter().enumerate() {
        for c in cs {
            for &j in &buckets[c] {
                let j = j as usize;
                if stamp[j] == i as u32 {
                    continue;
                }
                stamp[j] = i as u32;
                let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 > threshold2 {
                    count += 1;
                }
            }
        }
    }
    count
}

/// `ℰ = Σ_{V ∈ net} card{(x,y) ∈ (A′)² : x ∼_V y}` with cell width equal to
/// the cloud resolution. Each point is registered in every cell its `δ`-ball
/// meets (at most `3^k`), and only pairs sharing a bucket are tested.
pub fn energy(cloud: &PointCloud, net: &DeltaNet, eta: f64) -> Result<EnergyReport> {
    check_energy_inputs(cloud, net, eta)?;
    let delta = cloud.resolution();
    let points = cloud.points();
    let per_direction = for_each_direction(net.members(), |_, v| direction_relation_count(points, v, delta, eta));
    Ok(EnergyReport {
        delta,
        net_separation: net.separation(),
        eta,
        point_count: points.len(),
        total: per_direction.iter().sum(),
        per_direction,
    })
}

/// Quadratic reference for [`energy`]: evaluates [`relate`] on every ordered
/// pair for every net member.
pub fn energy_brute_force(cloud: &PointCloud, net: &DeltaNet, eta: f64) -> Result<EnergyReport> {
    check_energy_inputs(cloud, net, eta)?;
    let delta = cloud.resolution();
    let points = cloud.points();
    let mut per_direction = Vec::with_capacity(net.len());
    for v in net.members() {
        let mut count = 0u64;
        for x in points {
            for y in points {
                if relate(v, x, y, delta, eta)? {
                    count += 1;
                }
            }
        }
        per_direction.push(count);
    }
    Ok(EnergyReport {
        delta,
        net_separation: net.separation(),
        eta,
        point_count: points.len(),
        total: per_direction.iter().sum(),
        per_direction,
    })
}

/// Parameters of an energy run over a ladder of scales.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLadderConfig {
    /// Plane dimension `k` of the directions.
    pub k: usize,
    /// Scales `δ`, strictly decreasing.
    pub ladder: Vec<f64>,
    /// Choice of `η`.
    pub eta_mode: EtaMode,
    /// Net oversampling factor.
    pub oversample: f64,
    /// Direction-net separation; `δ` at each scale when unset.
    pub net_separation: Option<f64>,
    /// Seed.
    pub seed: u64,
}

/// Energy at each scale and the fitted growth exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLadderReport {
    /// Per-scale reports, in ladder order.
    pub reports: Vec<EnergyReport>,
    /// Log-log slope of `ℰ` against `1/δ`, one equal-weight point per scale.
    pub fitted_exponent: Option<fit::LineFit>,
    /// The same fit weighted by `ℰ`; dominated by the finest scales.
    pub weighted_exponent: Option<fit::LineFit>,
    /// `k(n−k) − k + 2γ` with `γ` the similarity dimension.
    pub bound_exponent: f64,
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() || ladder.iter().any(|d| !(*d > 0.0)) || ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition("δ-ladder must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Runs [`energy`] at each scale of the ladder: the cloud is the
/// [`ifs::attractor_net`] at resolution `δ`, the net a `δ`-net of `Gr(n,k)`.
pub fn energy_ladder(system: &Arc<System>, config: &EnergyLadderConfig) -> Result<EnergyLadderReport> {
    check_ladder(&config.ladder)?;
    let n = system.dim();
    let mut reports = Vec::with_capacity(config.ladder.len());
    for (i, &delta) in config.ladder.iter().enumerate() {
        let cloud = ifs::attractor_net(system, delta)?;
        let sep = config.net_separation.unwrap_or(delta);
        let net = grassmannian::build_delta_net(n, config.k, sep, config.oversample, config.seed.wrapping_add(i as u64))?;
        let eta = config.eta_mode.resolve(delta, n, config.k)?;
        reports.push(energy(&cloud, &net, eta)?);
    }
    let deltas: Vec<f64> = reports.iter().map(|r| r.delta).collect();
    let totals: Vec<f64> = reports.iter().map(|r| r.total as f64).collect();
    let gamma = ifs::system_dimension(system);
    let k = config.k as f64;
    Ok(EnergyLadderReport {
        fitted_exponent: fit::log_log(&deltas, &totals),
        weighted_exponent: fit::scaling_exponent(&deltas, &totals),
        bound_exponent: grassmannian::grassmannian_dim(n, config.k) as f64 - k + 2.0 * gamma,
        reports,
    })
}

/// Projected occupancy of every net direction at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceptionalScan {
    /// Scale `δ`.
    pub delta: f64,
    /// Threshold `s`.
    pub s: f64,
    /// `N(π_V A, δ)` per direction.
    pub box_counts: Vec<usize>,
    /// `N(π_V A, δ) ≤ δ^{-s}` per direction.
    pub flagged: Vec<bool>,
}

impl ExceptionalScan {
    /// Number of flagged directions.
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|f| **f).count()
    }

    /// Re-thresholds the stored counts at another `s`.
    pub fn with_threshold(&self, s: f64) -> ExceptionalScan {
        let cap = libm::pow(self.delta, -s);
        ExceptionalScan {
            delta: self.delta,
            s,
            box_counts: self.box_counts.clone(),
            flagged: self.box_counts.iter().map(|&c| c as f64 <= cap).collect(),
        }
    }
}

/// Flags the directions `V` of `net` whose projection has
/// `N(π_V A, δ) ≤ δ^{−s}` at `δ` = the cloud resolution (the finite-scale
/// reading of `dim A_V ≤ s`). Counts are minimized over `jitter` grid offsets.
pub fn exceptional_directions(cloud: &PointCloud, net: &DeltaNet, s: f64, jitter: usize, seed: u64) -> Result<ExceptionalScan> {
    if !(s >= 0.0) {
        return Err(Error::Precondition(alloc::format!("s must be ≥ 0, got {s}")));
    }
    if cloud.dim() != net.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: net.ambient_dim(), found: cloud.dim() });
    }
    if cloud.is_empty() {
        return Err(Error::InsufficientData("empty cloud".into()));
    }
    let delta = cloud.resolution();
    let points = cloud.points();
    let counts = for_each_direction(net.members(), |i, v| {
        let projected: Vec<Vec<f64>> = points.iter().map(|p| v.coords(p)).collect();
        dimension::box_count(&projected, delta, jitter, seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
    });
    let box_counts = counts.into_iter().collect::<Result<Vec<_>>>()?;
    let cap = libm::pow(delta, -s);
    let flagged = box_counts.iter().map(|&c| c as f64 <= cap).collect();
    Ok(ExceptionalScan { delta, s, box_counts, flagged })
}

/// One rung of an exceptional-set ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceptionalLevel {
    /// Scale `δ`.
    pub delta: f64,
    /// Net size.
    pub net_size: usize,
    /// Number of flagged directions.
    pub flagged_count: usize,
    /// The full scan.
    pub scan: ExceptionalScan,
    /// The net that was scanned.
    pub net: DeltaNet,
}

/// Flagged-direction counts across scales.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceptionalSetReport {
    /// Threshold `s`.
    pub s: f64,
    /// Plane dimension `k`.
    pub k: usize,
    /// Per-scale results.
    pub levels: Vec<ExceptionalLevel>,
    /// Log-log slope of `1 + flagged` against `1/δ`, weighted by `1 + flagged`
    /// (the shift keeps scales with no flagged direction in the fit).
    pub fitted_exponent: Option<fit::LineFit>,
    /// `k(n−k) − (k − s)`.
    pub bound_exponent: f64,
    /// `s ≥ k`: every projection has dimension `≤ s`, so the bound says nothing.
    pub vacuous: bool,
}

/// Parameters of an exceptional-set ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ExceptionalConfig {
    /// Plane dimension `k`.
    pub k: usize,
    /// Threshold `s`.
    pub s: f64,
    /// Scales, strictly decreasing.
    pub ladder: Vec<f64>,
    /// Net oversampling factor.
    pub oversample: f64,
    /// Grid offsets per box count.
    pub jitter: usize,
    /// Direction-net separation; `δ` at each scale when unset.
    pub net_separation: Option<f64>,
    /// Seed.
    pub seed: u64,
}

/// Runs [`exceptional_directions`] with a `δ`-net at every scale.
pub fn exceptional_ladder(system: &Arc<System>, config: &ExceptionalConfig) -> Result<ExceptionalSetReport> {
    check_ladder(&config.ladder)?;
    let n = system.dim();
    let mut levels = Vec::with_capacity(config.ladder.len());
    for (i, &delta) in config.ladder.iter().enumerate() {
        let cloud = ifs::attractor_net(system, delta)?;
        let sep = config.net_separation.unwrap_or(delta);
        let net = grassmannian::build_delta_net(n, config.k, sep, config.oversample, config.seed.wrapping_add(i as u64))?;
        let scan = exceptional_directions(&cloud, &net, config.s, config.jitter, config.seed)?;
        levels.push(ExceptionalLevel { delta, net_size: net.len(), flagged_count: scan.flagged_count(), scan, net });
    }
    let deltas: Vec<f64> = levels.iter().map(|l| l.delta).collect();
    let counts: Vec<f64> = levels.iter().map(|l| 1.0 + l.flagged_count as f64).collect();
    let k = config.k as f64;
    Ok(ExceptionalSetReport {
        s: config.s,
        k: config.k,
        fitted_exponent: fit::scaling_exponent(&deltas, &counts),
        bound_exponent: grassmannian::grassmannian_dim(n, config.k) as f64 - (k - config.s),
        vacuous: config.s >= k,
        levels,
    })
}

/// Options for the discrete almost-dimension-conservation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmostDcOptions {
    /// Fat-plane width; `None` uses `sqrt(resolution)`.
    pub cell_width: Option<f64>,
    /// Slack allowed in `Δ + dim(y-set) ≥ dim A`.
    pub tolerance: f64,
    /// Minimum points in a cell before its slice dimension is estimated.
    pub min_points: usize,
    /// Grid offsets per box count.
    pub jitter: usize,
    /// Seed.
    pub seed: u64,
}

impl Default for AlmostDcOptions {
    fn default() -> Self {
        Self { cell_width: None, tolerance: 0.1, min_points: 8, jitter: 4, seed: 0 }
    }
}

/// One fat-plane cell of an almost-DC analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberCell {
    /// Cell index in `V`.
    pub index: Vec<i64>,
    /// Points in the cell.
    pub point_count: usize,
    /// Box dimension of the slice in `V^⊥` coordinates, if estimable.
    pub dimension: Option<f64>,
}

/// The parts of an almost-DC check that do not depend on `Δ`.
#[derive(Debug, Clone)]
pub struct AlmostDcAnalysis {
    direction: Subspace,
    cell_width: f64,
    options: AlmostDcOptions,
    cloud_dimension: f64,
    cells: Vec<FiberCell>,
    members: Vec<Vec<usize>>,
    projected: Vec<Vec<f64>>,
    resolution: f64,
}

/// Outcome numbers of one almost-DC evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmostDcEvaluation {
    /// Direction `V`.
    pub direction: Subspace,
    /// `Δ`.
    pub delta: f64,
    /// `ε`.
    pub epsilon: f64,
    /// Box-dimension estimate of the cloud.
    pub cloud_dimension: f64,
    /// Box-dimension estimate of the good `y`-set (projections of good cells).
    pub good_y_dimension: Option<f64>,
    /// Upper bound on `H^{dim A − Δ}_∞` of the good `y`-set.
    pub good_y_content: f64,
    /// Cells whose slice dimension is at least `Δ − ε`.
    pub good_cells: Vec<FiberCell>,
    /// Occupied cells in total.
    pub occupied_cells: usize,
    /// Slack used.
    pub tolerance: f64,
}

impl AlmostDcEvaluation {
    /// `Δ + dim(y-set)`, or `None` when the good set is empty.
    pub fn lhs(&self) -> Option<f64> {
        self.good_y_dimension.map(|d| self.delta + d)
    }
}

/// Result of [`almost_dc_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum AlmostDcOutcome {
    /// `Δ + dim(y-set) ≥ dim A − tolerance` at this scale.
    Witness(AlmostDcEvaluation),
    /// The inequality fails at this scale; asymptotically inconclusive.
    RefutationAtScale(AlmostDcEvaluation, String),
}

impl AlmostDcOutcome {
    /// True for a witness.
    pub fn is_witness(&self) -> bool {
        matches!(self, AlmostDcOutcome::Witness(_))
    }

    /// The evaluation in either case.
    pub fn evaluation(&self) -> &AlmostDcEvaluation {
        match self {
            AlmostDcOutcome::Witness(e) | AlmostDcOutcome::RefutationAtScale(e, _) => e,
        }
    }
}

fn slice_dimension(points: &[Vec<f64>], resolution: f64, jitter: usize, seed: u64) -> Option<f64> {
    let dim = points.first()?.len();
    let mut extent: f64 = 0.0;
    for i in 0..dim {
        let lo = points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
        extent = extent.max(hi - lo);
    }
    let mut scales = Vec::new();
    let mut d = 2.0 * resolution;
    while d <= extent / 2.0 {
        scales.push(d);
        d *= 2.0;
    }
    if scales.len() < 4 {
        return None;
    }
    scales.reverse();
    let series = dimension::box_count_series(points, &scales, jitter, seed).ok()?;
    dimension::upper_box_dimension(&series).ok().map(|e| e.value)
}

impl AlmostDcAnalysis {
    /// Buckets the cloud into fat-plane cells of `V` and estimates every slice
    /// dimension and the dimension of the cloud.
    pub fn new(cloud: &PointCloud, v: &Subspace, options: AlmostDcOptions) -> Result<Self> {
        if cloud.dim() != v.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: v.ambient_dim(), found: cloud.dim() });
        }
        if cloud.is_empty() {
            return Err(Error::InsufficientData("no occupied cells".into()));
        }
        let resolution = cloud.resolution();
        let cell_width = options.cell_width.unwrap_or_else(|| libm::sqrt(resolution));
        let grid = FatPlaneGrid::new(v.clone(), cell_width)?;
        let complement = v.complement();
        let cloud_dimension = dimension::cloud_box_dimension(cloud, options.jitter, options.seed)?.value;
        let projected: Vec<Vec<f64>> = cloud.points().iter().map(|p| v.coords(p)).collect();
        let mut by_cell: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, c) in projected.iter().enumerate() {
            by_cell.entry(grid.index_of_coords(c)).or_default().push(i);
        }
        let mut entries: Vec<(Vec<i64>, Vec<usize>)> = by_cell.into_iter().collect();
        entries.sort();
        let mut cells = Vec::with_capacity(entries.len());
        let mut members = Vec::with_capacity(entries.len());
        for (index, idx) in entries {
            let dimension = match &complement {
                Some(w) if idx.len() >= options.min_points => {
                    let slice: Vec<Vec<f64>> = idx.iter().map(|&i| w.coords(&cloud.points()[i])).collect();
                    slice_dimension(&slice, resolution, options.jitter, options.seed)
                }
                _ => None,
            };
            cells.push(FiberCell { index, point_count: idx.len(), dimension });
            members.push(idx);
        }
        Ok(Self { direction: v.clone(), cell_width, options, cloud_dimension, cells, members, projected, resolution })
    }

    /// Fat-plane width in use.
    pub fn cell_width(&self) -> f64 {
        self.cell_width
    }

    /// Dimension estimate of the whole cloud.
    pub fn cloud_dimension(&self) -> f64 {
        self.cloud_dimension
    }

    /// All occupied cells.
    pub fn cells(&self) -> &[FiberCell] {
        &self.cells
    }

    /// Evaluates the almost-DC inequality at `(Δ, ε)`.
    ///
    /// When `Δ − ε ≤ 0` every occupied cell qualifies (any fiber has
    /// dimension `≥ 0`), so at `Δ = 0` the check is exactly the comparison of
    /// `dim π_V A` with `dim A`.
    pub fn check(&self, delta: f64, epsilon: f64) -> Result<AlmostDcOutcome> {
        if !(delta >= 0.0) || !(epsilon > 0.0) {
            return Err(Error::Precondition(alloc::format!("need Δ ≥ 0 and ε > 0, got Δ={delta}, ε={epsilon}")));
        }
        let threshold = delta - epsilon;
        let good: Vec<usize> = (0..self.cells.len())
            .filter(|&i| threshold <= 0.0 || self.cells[i].dimension.is_some_and(|d| d >= threshold))
            .collect();
        let mut eval = AlmostDcEvaluation {
            direction: self.direction.clone(),
            delta,
            epsilon,
            cloud_dimension: self.cloud_dimension,
            good_y_dimension: None,
            good_y_content: 0.0,
            good_cells: good.iter().map(|&i| self.cells[i].clone()).collect(),
            occupied_cells: self.cells.len(),
            tolerance: self.options.tolerance,
        };
        if threshold > self.cloud_dimension {
            return Ok(AlmostDcOutcome::RefutationAtScale(eval, "Δ − ε exceeds the dimension of the set".into()));
        }
        if good.is_empty() {
            return Ok(AlmostDcOutcome::RefutationAtScale(eval, "no fiber reaches dimension Δ − ε".into()));
        }
        let ys: Vec<Vec<f64>> =
            good.iter().flat_map(|&i| self.members[i].iter().map(|&j| self.projected[j].clone())).collect();
        let y_dim = match dimension::dyadic_ladder(&ys, self.resolution, 10)
            .and_then(|l| dimension::box_count_series(&ys, &l, self.options.jitter, self.options.seed))
            .and_then(|s| dimension::upper_box_dimension(&s))
        {
            Ok(e) => e.value,
            // Too few occupied cells for a slope: the set is finite at this scale.
            Err(Error::InsufficientData(_)) => 0.0,
            Err(e) => return Err(e),
        };
        eval.good_y_dimension = Some(y_dim);
        eval.good_y_content =
            dimension::hausdorff_content_upper(&ys, (self.cloud_dimension - delta).max(0.0), 100_000, self.resolution)?;
        if delta + y_dim >= self.cloud_dimension - self.options.tolerance {
            Ok(AlmostDcOutcome::Witness(eval))
        } else {
            Ok(AlmostDcOutcome::RefutationAtScale(eval, "Δ + dim(y-set) falls short of dim A at this scale".into()))
        }
    }
}

/// Discrete almost-dimension-conservation check of `π_V` on `cloud` at `(Δ, ε)`.
pub fn almost_dc_check(cloud: &PointCloud, v: &Subspace, delta: f64, epsilon: f64, options: AlmostDcOptions) -> Result<AlmostDcOutcome> {
    AlmostDcAnalysis::new(cloud, v, options)?.check(delta, epsilon)
}

/// The sub-grid of `Δ` values that pass [`almost_dc_check`].
pub fn delta_prime_scan(cloud: &PointCloud, v: &Subspace, epsilon: f64, grid: &[f64], options: AlmostDcOptions) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let analysis = AlmostDcAnalysis::new(cloud, v, options)?;
    let mut out = Vec::new();
    for &d in grid {
        if analysis.check(d, epsilon)?.is_witness() {
            out.push(d);
        }
    }
    Ok(out)
}

/// A checkerboard box inside one fat plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckerboardBox {
    /// Index `i` of the box `∏[4i_ℓη, 4(i_ℓ+1)η)` in `V^⊥` coordinates.
    pub index: Vec<i64>,
    /// Lower corner in `V^⊥` coordinates.
    pub lower: Vec<f64>,
    /// Diameter bound `sqrt((n−k)(4η)² + kδ²)`.
    pub diameter: f64,
}

/// Checkerboard boxes of side `4η` (in `V^⊥` coordinates) of the fat plane
/// `cell` that meet the axis-aligned bounding box `[lower, upper]` of a cloud.
pub fn checkerboard_partition(grid: &FatPlaneGrid, cell: &[i64], eta: f64, lower: &[f64], upper: &[f64]) -> Result<Vec<CheckerboardBox>> {
    let delta = grid.cell_size();
    if !(eta > delta) {
        return Err(Error::Precondition(alloc::format!("need η > δ, got η={eta}, δ={delta}")));
    }
    let v = grid.direction();
    let (n, k) = (v.ambient_dim(), v.plane_dim());
    if cell.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: cell.len() });
    }
    for b in [lower, upper] {
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: b.len() });
        }
    }
    let side = 4.0 * eta;
    let diameter = libm::sqrt((n - k) as f64 * side * side + k as f64 * delta * delta);
    let Some(w) = v.complement() else {
        return Ok(vec![CheckerboardBox { index: Vec::new(), lower: Vec::new(), diameter }]);
    };
    // Range of each V^⊥ coordinate over the bounding box.
    let ranges: Vec<(i64, i64)> = (0..n - k)
        .map(|j| {
            let u = w.basis_vector(j);
            let (mut lo, mut hi) = (0.0, 0.0);
            for i in 0..n {
                let (a, b) = (u[i] * lower[i], u[i] * upper[i]);
                lo += a.min(b);
                hi += a.max(b);
            }
            (libm::floor(lo / side) as i64, libm::floor(hi / side) as i64)
        })
        .collect();
    let mut out = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(CheckerboardBox { index: idx.clone(), lower: idx.iter().map(|&i| i as f64 * side).collect(), diameter });
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(out);
            }
            if idx[pos] < ranges[pos].1 {
                idx[pos] += 1;
                break;
            }
            idx[pos] = ranges[pos].0;
            pos += 1;
        }
    }
}
