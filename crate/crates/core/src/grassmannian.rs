//! The Grassmannian `Gr(n,k)` of `k`-planes in `R^n`.
//!
//! A [`Subspace`] is stored as an orthonormal `n×k` frame; the metric is the
//! operator norm of the difference of orthogonal projections,
//! `d(V,W) = ‖π_V − π_W‖`, which for lines is the sine of the angle between
//! them. Uniform samples come from orthonormalized Gaussian matrices, and
//! [`DeltaNet`]s are built by greedy random packing.

use alloc::format;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::linalg::{self, Mat};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Orthonormality tolerance for frames.
pub const FRAME_TOL: f64 = 1e-12;

/// A `k`-dimensional linear subspace of `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    frame: Mat,
}

impl Subspace {
    /// Wraps an `n×k` frame whose columns must be orthonormal within `1e-12`.
    pub fn from_frame(frame: Mat) -> Result<Self> {
        if frame.cols() == 0 || frame.cols() > frame.rows() {
            return Err(Error::Precondition(format!("frame shape {}x{} is not n×k with 1 ≤ k ≤ n", frame.rows(), frame.cols())));
        }
        let defect = frame.column_orthonormality_defect();
        if !(defect <= FRAME_TOL) {
            return Err(Error::Precondition(format!("frame columns are not orthonormal (defect {defect:.3e})")));
        }
        Ok(Self { frame })
    }

    /// Span of linearly independent vectors (orthonormalized).
    pub fn spanned_by(vectors: &[Vec<f64>]) -> Result<Self> {
        let n = vectors.first().map_or(0, Vec::len);
        if let Some(v) = vectors.iter().find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
        let mut cols = vectors.to_vec();
        if !linalg::orthonormalize(&mut cols) {
            return Err(Error::Precondition("spanning vectors are linearly dependent".into()));
        }
        Self::from_frame(Mat::from_columns(&cols))
    }

    /// Span of the given standard basis vectors.
    pub fn coordinate(n: usize, axes: &[usize]) -> Result<Self> {
        let cols: Vec<Vec<f64>> = axes
            .iter()
            .map(|&a| {
                let mut v = alloc::vec![0.0; n];
                if a < n {
                    v[a] = 1.0;
                }
                v
            })
            .collect();
        Self::spanned_by(&cols)
    }

    /// The line through `direction`.
    pub fn line(direction: &[f64]) -> Result<Self> {
        Self::spanned_by(&[direction.to_vec()])
    }

    /// Ambient dimension `n`.
    pub fn ambient_dim(&self) -> usize {
        self.frame.rows()
    }

    /// Plane dimension `k`.
    pub fn plane_dim(&self) -> usize {
        self.frame.cols()
    }

    /// Orthonormal frame, `n×k`.
    pub fn frame(&self) -> &Mat {
        &self.frame
    }

    /// Frame column `i`.
    pub fn basis_vector(&self, i: usize) -> Vec<f64> {
        self.frame.column(i)
    }

    /// `P = frame·frameᵀ`.
    pub fn projection_matrix(&self) -> Mat {
        self.frame.mul(&self.frame.transpose())
    }

    /// Coordinates of `π_V(x)` in the frame, `frameᵀ·x ∈ R^k`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: self.ambient_dim(), found: x.len() });
        }
        Ok(self.frame.tr_mul_vec(x))
    }

    /// `frameᵀ·x` without the dimension check.
    pub(crate) fn coords(&self, x: &[f64]) -> Vec<f64> {
        self.frame.tr_mul_vec(x)
    }

    /// `‖π_V(x)‖`.
    pub fn project_norm(&self, x: &[f64]) -> Result<f64> {
        self.project(x).map(|c| linalg::norm(&c))
    }

    /// The orthogonal complement `V^⊥ ∈ Gr(n, n−k)`; `None` when `k = n`.
    pub fn complement(&self) -> Option<Subspace> {
        let n = self.ambient_dim();
        if self.plane_dim() == n {
            return None;
        }
        let cols: Vec<Vec<f64>> = (0..self.plane_dim()).map(|i| self.frame.column(i)).collect();
        let comp = linalg::orthogonal_complement(&cols, n);
        Some(Subspace { frame: Mat::from_columns(&comp) })
    }
}

/// `d(V,W) = ‖π_V − π_W‖`, the largest singular value of the (symmetric)
/// difference of projection matrices.
///
/// # Panics
/// When `V` and `W` live in different `Gr(n,k)`.
pub fn metric(v: &Subspace, w: &Subspace) -> f64 {
    assert_eq!(
        (v.ambient_dim(), v.plane_dim()),
        (w.ambient_dim(), w.plane_dim()),
        "subspaces from different Grassmannians"
    );
    linalg::symmetric_operator_norm(&v.projection_matrix().sub(&w.projection_matrix()))
}

/// `‖π_V − π_W‖_F = sqrt(2k − 2‖VᵀW‖_F²)`, computed from the frames.
/// Satisfies `d(V,W) ≤ F ≤ sqrt(2k)·d(V,W)`.
pub fn frobenius_gap(v: &Subspace, w: &Subspace) -> f64 {
    let k = v.plane_dim();
    let n = v.ambient_dim();
    let (a, b) = (v.frame.as_slice(), w.frame.as_slice());
    let mut overlap = 0.0;
    for i in 0..k {
        for j in 0..k {
            let mut s = 0.0;
            for r in 0..n {
                s += a[r * k + i] * b[r * k + j];
            }
            overlap += s * s;
        }
    }
    libm::sqrt((2.0 * k as f64 - 2.0 * overlap).max(0.0))
}

/// Is `d(V,W) > threshold`? Decides from the Frobenius bounds when possible,
/// otherwise from the smallest singular value of `VᵀW`:
/// `d(V,W)² = 1 − σ_min(VᵀW)²` for planes of equal dimension.
pub fn farther_than(v: &Subspace, w: &Subspace, threshold: f64) -> bool {
    let f = frobenius_gap(v, w);
    if f <= threshold * (1.0 - 1e-9) {
        return false;
    }
    if f / libm::sqrt(2.0 * v.plane_dim() as f64) > threshold * (1.0 + 1e-9) {
        return true;
    }
    let m = v.frame.transpose().mul(&w.frame);
    let gram = m.transpose().mul(&m);
    let smallest = match gram.rows() {
        1 => gram[(0, 0)],
        2 => {
            let (a, b, c) = (gram[(0, 0)], gram[(0, 1)], gram[(1, 1)]);
            0.5 * (a + c) - libm::sqrt(0.25 * (a - c) * (a - c) + b * b)
        }
        _ => linalg::symmetric_eigenvalues(&gram)[0],
    };
    1.0 - smallest > threshold * threshold
}

fn check_nk(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Precondition(format!("need 1 ≤ k < n, got n={n}, k={k}")));
    }
    Ok(())
}

/// `Gr(n,k)` has dimension `k(n−k)`.
pub fn grassmannian_dim(n: usize, k: usize) -> usize {
    k * (n - k)
}

/// Uniform sample of a single subspace from the invariant measure `γ_{n,k}`.
pub fn sample_one(n: usize, k: usize, rng: &mut SeededRng) -> Subspace {
    loop {
        let mut cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.normal()).collect()).collect();
        if linalg::orthonormalize(&mut cols) {
            return Subspace { frame: Mat::from_columns(&cols) };
        }
    }
}

/// `count` samples from `γ_{n,k}`: orthonormalized `n×k` standard Gaussian
/// matrices, deterministic under `seed`.
pub fn sample_uniform(n: usize, k: usize, count: usize, seed: u64) -> Result<Vec<Subspace>> {
    check_nk(n, k)?;
    let mut rng = SeededRng::new(seed);
    Ok((0..count).map(|_| sample_one(n, k, &mut rng)).collect())
}

/// A `δ₂`-separated family of subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaNet {
    ambient_dim: usize,
    plane_dim: usize,
    separation: f64,
    seed: u64,
    members: Vec<Subspace>,
}

impl DeltaNet {
    /// Wraps members after checking pairwise separation `d > separation`.
    pub fn new(separation: f64, seed: u64, members: Vec<Subspace>) -> Result<Self> {
        let (n, k) = members
            .first()
            .map(|m| (m.ambient_dim(), m.plane_dim()))
            .ok_or_else(|| Error::Precondition("net has no members".into()))?;
        for (i, a) in members.iter().enumerate() {
            if a.ambient_dim() != n || a.plane_dim() != k {
                return Err(Error::DimensionMismatch { expected: n * k, found: a.ambient_dim() * a.plane_dim() });
            }
            for b in &members[i + 1..] {
                if !farther_than(a, b, separation) {
                    return Err(Error::Precondition(format!("members closer than separation {separation}")));
                }
            }
        }
        Ok(Self { ambient_dim: n, plane_dim: k, separation, seed, members })
    }

    /// Ambient dimension `n`.
    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Plane dimension `k`.
    pub fn plane_dim(&self) -> usize {
        self.plane_dim
    }

    /// Separation `δ₂`.
    pub fn separation(&self) -> f64 {
        self.separation
    }

    /// Seed used to build the net.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Members.
    pub fn members(&self) -> &[Subspace] {
        &self.members
    }

    /// Number of members.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// True when the net is empty (never, for constructed nets).
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Floor on the rejection streak that ends net construction.
pub const MIN_PATIENCE: f64 = 256.0;

/// Greedy random packing: stream uniform samples and keep those farther than
/// `separation` from every kept member; stop after
/// `max(oversample_factor · separation^{−k(n−k)}, MIN_PATIENCE)` consecutive
/// rejections.
pub fn build_delta_net(n: usize, k: usize, separation: f64, oversample_factor: f64, seed: u64) -> Result<DeltaNet> {
    check_nk(n, k)?;
    if !(separation > 0.0) {
        return Err(Error::Precondition(format!("separation must be positive, got {separation}")));
    }
    if !(oversample_factor > 0.0) {
        return Err(Error::Precondition("oversample factor must be positive".into()));
    }
    let d = grassmannian_dim(n, k) as f64;
    let patience = libm::ceil(oversample_factor * libm::pow(separation, -d)).max(MIN_PATIENCE) as u64;
    let mut rng = SeededRng::new(seed);
    let mut index = NetIndex::new(n, grassmannian_dim(n, k), separation);
    let mut members: Vec<Subspace> = Vec::new();
    let mut rejections = 0u64;
    while rejections < patience {
        let candidate = sample_one(n, k, &mut rng);
        let key = index.key(&candidate);
        if members.is_empty() || index.neighbours(&key).all(|j| farther_than(&members[j], &candidate, separation)) {
            index.insert(key, members.len());
            members.push(candidate);
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
    Ok(DeltaNet { ambient_dim: n, plane_dim: k, separation, seed, members })
}

/// Grid over a few projection-matrix entries. Entries of `π_V − π_W` are
/// bounded by the operator norm, so members within `separation` of a
/// candidate sit in the `3^m` neighbouring cells of its key.
struct NetIndex {
    entries: Vec<(usize, usize)>,
    cell: f64,
    map: HashMap<[i64; 4], Vec<usize>>,
}

impl NetIndex {
    fn new(n: usize, d: usize, cell: f64) -> Self {
        let mut entries: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|i| (i, i)).collect();
        entries.extend((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))));
        entries.truncate(d.clamp(1, 4));
        Self { entries, cell, map: HashMap::new() }
    }

    fn key(&self, v: &Subspace) -> [i64; 4] {
        let (f, k) = (v.frame.as_slice(), v.plane_dim());
        let mut key = [0i64; 4];
        for (slot, &(i, j)) in self.entries.iter().enumerate() {
            let p: f64 = (0..k).map(|c| f[i * k + c] * f[j * k + c]).sum();
            key[slot] = libm::floor(p / self.cell) as i64;
        }
        key
    }

    fn insert(&mut self, key: [i64; 4], member: usize) {
        self.map.entry(key).or_default().push(member);
    }

    fn neighbours<'a>(&'a self, key: &[i64; 4]) -> impl Iterator<Item = usize> + 'a {
        let m = self.entries.len();
        let key = *key;
        (0..3usize.pow(m as u32)).flat_map(move |code| {
            let mut c = code;
            let mut probe = key;
            for slot in probe.iter_mut().take(m) {
                *slot += (c % 3) as i64 - 1;
                c /= 3;
            }
            self.map.get(&probe).into_iter().flatten().copied()
        })
    }
}

/// One evaluation of the discrete projection counting bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountingRatio {
    /// `card{V ∈ E : ‖π_V(x)‖ ≤ δ₁}`.
    pub lhs_count: usize,
    /// `δ₁^k · δ₂^{−k(n−k)} · ‖x‖^{−k}`.
    pub rhs_bound: f64,
    /// `lhs / rhs`, the empirical implicit constant.
    pub ratio: f64,
}

/// Counts net members that nearly annihilate `x` and compares with the bound
/// `δ₁^k δ₂^{−k(n−k)} ‖x‖^{−k}`, where `δ₂` is the net separation.
pub fn counting_lemma_ratio(x: &[f64], delta1: f64, net: &DeltaNet) -> Result<CountingRatio> {
    if x.len() != net.ambient_dim {
        return Err(Error::DimensionMismatch { expected: net.ambient_dim, found: x.len() });
    }
    let xn = linalg::norm(x);
    if !(xn > 0.0) {
        return Err(Error::Precondition("x must be nonzero".into()));
    }
    let delta2 = net.separation;
    if !(delta1 > 0.0 && delta1 <= 1.0 && delta2 > 0.0 && delta2 <= 1.0) {
        return Err(Error::Precondition(format!("δ₁={delta1}, δ₂={delta2} must lie in (0,1]")));
    }
    let k = net.plane_dim as f64;
    let d = grassmannian_dim(net.ambient_dim, net.plane_dim) as f64;
    let lhs_count = net.members.iter().filter(|v| linalg::norm(&v.coords(x)) <= delta1).count();
    let rhs_bound = libm::pow(delta1, k) * libm::pow(delta2, -d) * libm::pow(xn, -k);
    Ok(CountingRatio { lhs_count, rhs_bound, ratio: lhs_count as f64 / rhs_bound })
}

/// Parameters of a randomized counting-constant experiment on one `Gr(n,k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingConfig {
    /// Ambient dimension.
    pub n: usize,
    /// Plane dimension.
    pub k: usize,
    /// Candidate scales for `δ₁` and `δ₂`, strictly decreasing.
    pub ladder: Vec<f64>,
    /// Number of random `(x, δ₁, δ₂)` instances.
    pub instances: usize,
    /// Largest admissible `δ₂^{−k(n−k)}`; finer nets are skipped.
    pub max_net_scale: f64,
    /// Oversampling factor for net construction.
    pub oversample: f64,
    /// Seed.
    pub seed: u64,
}

/// One random instance of the counting experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountingInstance {
    /// `δ₁`.
    pub delta1: f64,
    /// `δ₂` (net separation).
    pub delta2: f64,
    /// `‖x‖`.
    pub x_norm: f64,
    /// Net size.
    pub net_size: usize,
    /// The counts and ratio.
    pub result: CountingRatio,
}

/// Per-`δ₁` statistics of the counting ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountingBin {
    /// `δ₁`.
    pub delta1: f64,
    /// Number of instances.
    pub count: usize,
    /// Mean ratio.
    pub mean_ratio: f64,
    /// Maximum ratio.
    pub max_ratio: f64,
}

/// Summary of a counting-constant experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingReport {
    /// Ambient dimension.
    pub n: usize,
    /// Plane dimension.
    pub k: usize,
    /// Separations of the nets actually built.
    pub net_scales: Vec<f64>,
    /// All instances.
    pub instances: Vec<CountingInstance>,
    /// Statistics grouped by `δ₁`, coarse to fine.
    pub bins: Vec<CountingBin>,
    /// Largest ratio overall.
    pub max_ratio: f64,
    /// Log-log slope of the per-bin mean ratio against `1/δ₁`.
    pub trend_slope: f64,
    /// Same for the per-bin maximum (sensitive to small-count fluctuation).
    pub max_trend_slope: f64,
}

/// Draws random `(x, δ₁, δ₂)`: `δ₂` from the ladder (restricted to nets of at
/// most `max_net_scale` cells), `δ₁` from the ladder subject to
/// `δ₁^k δ₂^{−k(n−k)} ≥ 1` (the bound is at least one point at `‖x‖ = 1`),
/// `x` uniform in direction with `‖x‖` uniform on `[1/4, 1]`.
///
/// The trend is fitted to per-`δ₁` means: every bin sees the same mix of
/// nets, so a growing constant would show up as a slope.
pub fn counting_experiment(config: &CountingConfig) -> Result<CountingReport> {
    let (n, k) = (config.n, config.k);
    check_nk(n, k)?;
    if config.ladder.len() < 2 || config.ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition("ladder must be strictly decreasing with ≥ 2 entries".into()));
    }
    let d = grassmannian_dim(n, k) as f64;
    let kf = k as f64;
    let net_scales: Vec<f64> =
        config.ladder.iter().copied().filter(|&s| libm::pow(s, -d) <= config.max_net_scale).collect();
    if net_scales.is_empty() {
        return Err(Error::InsufficientData("no ladder scale admits a net within max_net_scale".into()));
    }
    let nets: Vec<DeltaNet> = net_scales
        .iter()
        .enumerate()
        .map(|(i, &s)| build_delta_net(n, k, s, config.oversample, config.seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    let mut rng = SeededRng::derived(config.seed, 0x5eed);
    let mut instances = Vec::with_capacity(config.instances);
    for _ in 0..config.instances {
        let ni = rng.index(nets.len());
        let net = &nets[ni];
        let delta2 = net.separation;
        let admissible: Vec<f64> = config
            .ladder
            .iter()
            .copied()
            .filter(|&d1| libm::pow(d1, kf) * libm::pow(delta2, -d) >= 1.0 - 1e-12)
            .collect();
        let delta1 = admissible[rng.index(admissible.len())];
        let dir = rng.unit_vector(n);
        let r = rng.uniform_in(0.25, 1.0);
        let x: Vec<f64> = dir.iter().map(|v| v * r).collect();
        let result = counting_lemma_ratio(&x, delta1, net)?;
        instances.push(CountingInstance { delta1, delta2, x_norm: r, net_size: net.len(), result });
    }
    let mut bins = Vec::new();
    for &s in &config.ladder {
        let ratios: Vec<f64> =
            instances.iter().filter(|i| (i.delta1 - s).abs() <= 1e-15 * s).map(|i| i.result.ratio).collect();
        if ratios.is_empty() {
            continue;
        }
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        bins.push(CountingBin { delta1: s, count: ratios.len(), mean_ratio, max_ratio });
    }
    let max_ratio = instances.iter().map(|i| i.result.ratio).fold(0.0, f64::max);
    let trend = |f: fn(&CountingBin) -> f64| {
        let kept: Vec<&CountingBin> = bins.iter().filter(|b| f(b) > 0.0).collect();
        let xs: Vec<f64> = kept.iter().map(|b| -libm::log(b.delta1)).collect();
        let ys: Vec<f64> = kept.iter().map(|b| libm::log(f(b))).collect();
        crate::fit::line(&xs, &ys).map(|l| l.slope)
    };
    let trend_slope = trend(|b| b.mean_ratio)
        .ok_or_else(|| Error::InsufficientData("fewer than two populated δ₁ bins".into()))?;
    let max_trend_slope = trend(|b| b.max_ratio).unwrap_or(0.0);
    Ok(CountingReport { n, k, net_scales, instances, bins, max_ratio, trend_slope, max_trend_slope })
}
