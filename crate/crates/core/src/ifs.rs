//! Self-similar and graph-directed iterated function systems.
//!
//! A [`Similarity`] is a contraction `x ↦ a·T(x) + b` with ratio `a ∈ (0,1)`,
//! orthogonal `T` and translation `b`. A [`SelfSimilarIfs`] is a finite list of
//! them; a [`GraphDirectedIfs`] attaches each similarity to an edge of a
//! strongly connected digraph, so that the attractor is a tuple of compacta
//! `K_i = ⋃_{e: i→j} g_e(K_j)`.
//!
//! Point clouds are generated by deterministic cylinder enumeration: every
//! word whose cylinder diameter first drops to the requested resolution
//! contributes one point lying on the attractor, so the cloud is a certified
//! cover of the attractor at that resolution.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::linalg::{self, Mat};
use crate::{Error, Result};

/// Orthogonality tolerance for the linear part of a similarity.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;
/// Entrywise tolerance used to identify orthogonal matrices in group closures.
pub const GROUP_DEDUP_TOL: f64 = 1e-9;
/// Default element budget for [`transformation_group`].
pub const DEFAULT_GROUP_BUDGET: usize = 10_000;
/// Default point budget for [`attractor_cloud`].
pub const DEFAULT_POINT_BUDGET: usize = 4_000_000;

/// A contracting similarity `g(x) = ratio · T(x) + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarity {
    ratio: f64,
    orthogonal: Mat,
    translation: Vec<f64>,
}

impl Similarity {
    /// Validates `0 < ratio < 1`, orthogonality of the linear part and matching
    /// dimensions.
    pub fn new(ratio: f64, orthogonal: Mat, translation: Vec<f64>) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidSystem(format!("ratio {ratio} outside (0,1)")));
        }
        let n = translation.len();
        if n == 0 {
            return Err(Error::InvalidSystem("empty translation".to_string()));
        }
        if orthogonal.rows() != n || orthogonal.cols() != n {
            return Err(Error::DimensionMismatch { expected: n * n, found: orthogonal.rows() * orthogonal.cols() });
        }
        let defect = orthogonal.orthogonality_defect();
        if !(defect <= ORTHOGONALITY_TOL) {
            return Err(Error::InvalidSystem(format!("linear part is not orthogonal (|T·Tᵀ - I| = {defect:.3e})")));
        }
        Ok(Self { ratio, orthogonal, translation })
    }

    /// Homothety `x ↦ ratio·x + translation` (no rotation or reflection).
    pub fn homothety(ratio: f64, translation: Vec<f64>) -> Result<Self> {
        let n = translation.len();
        Self::new(ratio, Mat::identity(n), translation)
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    /// Contraction ratio.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Orthogonal part `T`.
    pub fn orthogonal(&self) -> &Mat {
        &self.orthogonal
    }

    /// Translation `b`.
    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    /// True when the orthogonal part is the identity.
    pub fn is_rotation_free(&self) -> bool {
        self.orthogonal.approx_eq(&Mat::identity(self.dim()), ORTHOGONALITY_TOL)
    }

    /// `g(x)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.orthogonal.mul_vec(x);
        for (yi, bi) in y.iter_mut().zip(&self.translation) {
            *yi = self.ratio * *yi + bi;
        }
        y
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Similarity) -> Similarity {
        let t = self.orthogonal.mul(&inner.orthogonal);
        let b = self.apply(&inner.translation);
        Similarity { ratio: self.ratio * inner.ratio, orthogonal: t, translation: b }
    }

    /// The unique fixed point, solving `(I - aT) x = b`.
    pub fn fixed_point(&self) -> Vec<f64> {
        let n = self.dim();
        let m = Mat::identity(n).sub(&self.orthogonal.scaled(self.ratio));
        // I - aT is invertible since ‖aT‖ = a < 1.
        m.solve(&self.translation).expect("contraction has a fixed point")
    }

    fn identity(n: usize) -> Similarity {
        Similarity { ratio: 1.0, orthogonal: Mat::identity(n), translation: vec![0.0; n] }
    }
}

/// A finite self-similar IFS `(g_i)_{i=1}^N` on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfSimilarIfs {
    dim: usize,
    maps: Vec<Similarity>,
}

impl SelfSimilarIfs {
    /// Requires at least two maps sharing one ambient dimension.
    pub fn new(maps: Vec<Similarity>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidSystem(format!("need at least 2 maps, got {}", maps.len())));
        }
        let dim = maps[0].dim();
        if let Some(bad) = maps.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        Ok(Self { dim, maps })
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The maps in order.
    pub fn maps(&self) -> &[Similarity] {
        &self.maps
    }

    /// Contraction ratios in map order.
    pub fn ratios(&self) -> Vec<f64> {
        self.maps.iter().map(Similarity::ratio).collect()
    }

    /// The common ratio if all maps share it (within `1e-12`).
    pub fn equal_ratio(&self) -> Option<f64> {
        let r = self.maps[0].ratio;
        self.maps.iter().all(|m| (m.ratio - r).abs() <= 1e-12).then_some(r)
    }

    /// True when no map carries a rotation or reflection.
    pub fn is_rotation_free(&self) -> bool {
        self.maps.iter().all(Similarity::is_rotation_free)
    }
}

/// One edge `source → target` of a graph-directed IFS, carrying `g_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Source vertex (0-based).
    pub source: usize,
    /// Target vertex (0-based).
    pub target: usize,
    /// The similarity attached to the edge.
    pub map: Similarity,
}

/// A graph-directed IFS over a strongly connected digraph with vertices
/// `0..vertex_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDirectedIfs {
    dim: usize,
    vertex_count: usize,
    edges: Vec<Edge>,
}

impl GraphDirectedIfs {
    /// Checks vertex ranges, dimensions, out-degrees and strong connectivity.
    pub fn new(vertex_count: usize, edges: Vec<Edge>) -> Result<Self> {
        if vertex_count == 0 || edges.is_empty() {
            return Err(Error::InvalidSystem("graph-directed system needs vertices and edges".to_string()));
        }
        let dim = edges[0].map.dim();
        for e in &edges {
            if e.map.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.map.dim() });
            }
            if e.source >= vertex_count || e.target >= vertex_count {
                return Err(Error::InvalidSystem(format!("edge {}→{} outside 0..{vertex_count}", e.source, e.target)));
            }
        }
        for v in 0..vertex_count {
            if !edges.iter().any(|e| e.source == v) {
                return Err(Error::Structure(format!("vertex {v} has no outgoing edge")));
            }
        }
        let forward = reachable(vertex_count, &edges, false);
        let backward = reachable(vertex_count, &edges, true);
        if !(forward.iter().all(|&r| r) && backward.iter().all(|&r| r)) {
            return Err(Error::Structure("digraph is not strongly connected".to_string()));
        }
        Ok(Self { dim, vertex_count, edges })
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of vertices.
    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// The edges in order; a [`SymbolWord`] indexes into this list.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }
}

fn reachable(n: usize, edges: &[Edge], reverse: bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for e in edges {
            let (from, to) = if reverse { (e.target, e.source) } else { (e.source, e.target) };
            if from == v && !seen[to] {
                seen[to] = true;
                queue.push_back(to);
            }
        }
    }
    seen
}

/// Either kind of system.
#[derive(Debug, Clone, PartialEq)]
pub enum System {
    /// A self-similar IFS.
    SelfSimilar(SelfSimilarIfs),
    /// A graph-directed IFS.
    GraphDirected(GraphDirectedIfs),
}

impl From<SelfSimilarIfs> for System {
    fn from(s: SelfSimilarIfs) -> Self {
        System::SelfSimilar(s)
    }
}

impl From<GraphDirectedIfs> for System {
    fn from(s: GraphDirectedIfs) -> Self {
        System::GraphDirected(s)
    }
}

/// A ball containing every attractor component.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBall {
    /// Center.
    pub center: Vec<f64>,
    /// Radius.
    pub radius: f64,
}

impl System {
    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            System::SelfSimilar(s) => s.dim,
            System::GraphDirected(g) => g.dim,
        }
    }

    /// Number of vertices (1 for a self-similar system).
    pub fn vertex_count(&self) -> usize {
        match self {
            System::SelfSimilar(_) => 1,
            System::GraphDirected(g) => g.vertex_count,
        }
    }

    /// Number of letters: maps for a self-similar system, edges otherwise.
    pub fn letter_count(&self) -> usize {
        match self {
            System::SelfSimilar(s) => s.maps.len(),
            System::GraphDirected(g) => g.edges.len(),
        }
    }

    /// Similarity attached to `letter`.
    pub fn letter_map(&self, letter: usize) -> &Similarity {
        match self {
            System::SelfSimilar(s) => &s.maps[letter],
            System::GraphDirected(g) => &g.edges[letter].map,
        }
    }

    /// `(source, target)` of a letter; `(0, 0)` for self-similar maps.
    pub fn letter_endpoints(&self, letter: usize) -> (usize, usize) {
        match self {
            System::SelfSimilar(_) => (0, 0),
            System::GraphDirected(g) => (g.edges[letter].source, g.edges[letter].target),
        }
    }

    fn letters_from(&self, vertex: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.letter_count()).filter(move |&l| self.letter_endpoints(l).0 == vertex)
    }

    fn max_ratio(&self) -> f64 {
        (0..self.letter_count()).map(|l| self.letter_map(l).ratio).fold(0.0, f64::max)
    }

    /// A ball `B(c, R)` with `g_e(B) ⊆ B` for every letter, hence containing
    /// every attractor component. The center is the mean of the letter fixed
    /// points and `R = max_e ‖g_e(c) - c‖ / (1 - max_e a_e)`.
    pub fn bounding_ball(&self) -> BoundingBall {
        let n = self.dim();
        let count = self.letter_count();
        let mut center = vec![0.0; n];
        for l in 0..count {
            for (c, f) in center.iter_mut().zip(self.letter_map(l).fixed_point()) {
                *c += f / count as f64;
            }
        }
        let spread = (0..count)
            .map(|l| linalg::dist(&self.letter_map(l).apply(&center), &center))
            .fold(0.0, f64::max);
        BoundingBall { center, radius: spread / (1.0 - self.max_ratio()) }
    }

    /// Upper bound `2R` on the diameter of every attractor component.
    pub fn diameter_bound(&self) -> f64 {
        2.0 * self.bounding_ball().radius
    }

    /// A point of each attractor component `K_v`: the fixed point of the
    /// composed map along a shortest cycle through `v`.
    pub fn anchors(&self) -> Vec<Vec<f64>> {
        match self {
            System::SelfSimilar(s) => vec![s.maps[0].fixed_point()],
            System::GraphDirected(_) => (0..self.vertex_count())
                .map(|v| {
                    let cycle = self.shortest_cycle(v);
                    let mut g = Similarity::identity(self.dim());
                    for l in cycle {
                        g = g.compose(self.letter_map(l));
                    }
                    g.fixed_point()
                })
                .collect(),
        }
    }

    fn shortest_cycle(&self, v: usize) -> Vec<usize> {
        // BFS over vertices from the targets of v's outgoing edges back to v.
        let nv = self.vertex_count();
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; nv];
        let mut queue = VecDeque::new();
        for l in self.letters_from(v) {
            let (_, t) = self.letter_endpoints(l);
            if t == v {
                return vec![l];
            }
            if parent[t].is_none() {
                parent[t] = Some((v, l));
                queue.push_back(t);
            }
        }
        while let Some(u) = queue.pop_front() {
            for l in self.letters_from(u) {
                let (_, t) = self.letter_endpoints(l);
                if t == v {
                    let mut path = vec![l];
                    let mut cur = u;
                    while cur != v {
                        let (p, pl) = parent[cur].expect("bfs parent");
                        path.push(pl);
                        cur = p;
                    }
                    path.reverse();
                    return path;
                }
                if parent[t].is_none() && t != v {
                    parent[t] = Some((u, l));
                    queue.push_back(t);
                }
            }
        }
        unreachable!("strongly connected graph has a cycle through every vertex")
    }

    /// Checks that consecutive letters of `word` form a path.
    pub fn check_word(&self, word: &SymbolWord) -> Result<()> {
        for (i, &l) in word.letters().iter().enumerate() {
            if l as usize >= self.letter_count() {
                return Err(Error::Path { position: i });
            }
            if i > 0 {
                let prev = word.letters()[i - 1] as usize;
                if self.letter_endpoints(prev).1 != self.letter_endpoints(l as usize).0 {
                    return Err(Error::Path { position: i });
                }
            }
        }
        Ok(())
    }

    /// Product of the ratios along `word`.
    pub fn word_ratio(&self, word: &SymbolWord) -> f64 {
        word.letters().iter().map(|&l| self.letter_map(l as usize).ratio).product()
    }

    /// Composite map `g_{w_1} ∘ ⋯ ∘ g_{w_m}`.
    pub fn word_map(&self, word: &SymbolWord) -> Result<Similarity> {
        self.check_word(word)?;
        let mut g = Similarity::identity(self.dim());
        for &l in word.letters() {
            g = g.compose(self.letter_map(l as usize));
        }
        Ok(g)
    }
}

/// A finite word over the letters of a system: map indices for a
/// self-similar IFS, edge indices (a path) for a graph-directed one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SymbolWord(Vec<u32>);

impl SymbolWord {
    /// Wraps the letters.
    pub fn new(letters: Vec<u32>) -> Self {
        Self(letters)
    }

    /// The empty word.
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    /// `letter` repeated `depth` times.
    pub fn constant(letter: u32, depth: usize) -> Self {
        Self(vec![letter; depth])
    }

    /// Letters in order.
    pub fn letters(&self) -> &[u32] {
        &self.0
    }

    /// Word length.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// True for the empty word.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First letter, if any.
    pub fn first(&self) -> Option<u32> {
        self.0.first().copied()
    }

    fn pushed(&self, l: u32) -> Self {
        let mut v = self.0.clone();
        v.push(l);
        Self(v)
    }
}

impl core::fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Finite-depth symbolic point `g_{w_1} ∘ ⋯ ∘ g_{w_m}(0)`.
///
/// The distance to the limit point of any infinite extension of `word` is at
/// most `word_ratio · (‖c‖ + R)` for the [`BoundingBall`] `B(c, R)`.
pub fn symbol_point(system: &System, word: &SymbolWord) -> Result<Vec<f64>> {
    system.check_word(word)?;
    let mut x = vec![0.0; system.dim()];
    for &l in word.letters().iter().rev() {
        x = system.letter_map(l as usize).apply(&x);
    }
    Ok(x)
}

/// Upper bound on `‖Π(ω) - g_{ω^m}(0)‖` for a word of ratio product `word_ratio`.
pub fn truncation_bound(system: &System, word_ratio: f64) -> f64 {
    let ball = system.bounding_ball();
    word_ratio * (linalg::norm(&ball.center) + ball.radius)
}

/// A finite sample of an attractor at resolution `δ`.
#[derive(Debug, Clone)]
pub struct PointCloud {
    dim: usize,
    resolution: f64,
    points: Vec<Vec<f64>>,
    words: Option<Vec<SymbolWord>>,
    source: Option<Arc<System>>,
}

impl PointCloud {
    /// Cloud from raw points with no symbolic provenance.
    pub fn from_points(dim: usize, resolution: f64, points: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
        }
        Ok(Self { dim, resolution, points, words: None, source: None })
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cover radius `δ`.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Points.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// True when the cloud has no points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Symbolic word of each point, if generated from a system.
    pub fn words(&self) -> Option<&[SymbolWord]> {
        self.words.as_deref()
    }

    /// The generating system, if any.
    pub fn source(&self) -> Option<&Arc<System>> {
        self.source.as_ref()
    }

    /// Sub-cloud of the points at `indices`, keeping provenance.
    pub fn subset(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            dim: self.dim,
            resolution: self.resolution,
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            words: self.words.as_ref().map(|w| indices.iter().map(|&i| w[i].clone()).collect()),
            source: self.source.clone(),
        }
    }
}

/// Options for [`attractor_cloud_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudOptions {
    /// Attractor component to sample (graph-directed systems).
    pub vertex: usize,
    /// Maximum number of points.
    pub budget: usize,
}

impl Default for CloudOptions {
    fn default() -> Self {
        Self { vertex: 0, budget: DEFAULT_POINT_BUDGET }
    }
}

const CYLINDER_SLACK: f64 = 1e-9;

/// Cover of the attractor (component 0) at resolution `delta` with the
/// default point budget.
pub fn attractor_cloud(system: &Arc<System>, delta: f64) -> Result<PointCloud> {
    attractor_cloud_with(system, delta, CloudOptions::default())
}

/// Enumerates every word starting at `options.vertex` whose cylinder diameter
/// bound `ratio_w · 2R` first drops to `delta` or below, and emits
/// `g_w(anchor)` for each. Every attractor point lies within `delta` of the
/// cloud and every cloud point lies on the attractor.
pub fn attractor_cloud_with(system: &Arc<System>, delta: f64, options: CloudOptions) -> Result<PointCloud> {
    if !(delta > 0.0) {
        return Err(Error::Precondition(format!("resolution must be positive, got {delta}")));
    }
    if options.vertex >= system.vertex_count() {
        return Err(Error::Precondition(format!("vertex {} out of range", options.vertex)));
    }
    let diam = system.diameter_bound();
    let count = count_cylinders(system, options.vertex, diam, delta, options.budget);
    if count > options.budget {
        let feasible = feasible_resolution(system, options.vertex, diam, delta, options.budget);
        return Err(Error::Budget { budget: options.budget, feasible_delta: feasible });
    }
    let anchors = system.anchors();
    let start = Similarity::identity(system.dim());
    let mut points = Vec::with_capacity(count);
    let mut words = Vec::with_capacity(count);
    if diam <= delta * (1.0 + CYLINDER_SLACK) {
        points.push(anchors[options.vertex].clone());
        words.push(SymbolWord::empty());
    } else {
        let ctx = Enumeration { system, anchors: &anchors, threshold: delta * (1.0 + CYLINDER_SLACK) / diam };
        let firsts: Vec<usize> = system.letters_from(options.vertex).collect();
        #[cfg(feature = "parallel")]
        let parts: Vec<(Vec<Vec<f64>>, Vec<SymbolWord>)> = {
            use rayon::prelude::*;
            firsts
                .par_iter()
                .map(|&l| {
                    let mut out = (Vec::new(), Vec::new());
                    ctx.descend(&start, &SymbolWord::empty(), l, &mut out);
                    out
                })
                .collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<(Vec<Vec<f64>>, Vec<SymbolWord>)> = firsts
            .iter()
            .map(|&l| {
                let mut out = (Vec::new(), Vec::new());
                ctx.descend(&start, &SymbolWord::empty(), l, &mut out);
                out
            })
            .collect();
        for (p, w) in parts {
            points.extend(p);
            words.extend(w);
        }
    }
    Ok(PointCloud { dim: system.dim(), resolution: delta, points, words: Some(words), source: Some(Arc::clone(system)) })
}

/// Resolution-`delta` cover of the attractor whose size tracks `N(K, δ)`:
/// a greedy maximal `3δ/4`-separated subset of the cover at `δ/4`. Every
/// attractor point is within `δ` of a kept point, and kept points are
/// attractor points, so the size moves smoothly with `δ` instead of jumping
/// at the cylinder scales.
pub fn attractor_net(system: &Arc<System>, delta: f64) -> Result<PointCloud> {
    let fine = attractor_cloud(system, delta / 4.0)?;
    let sep = 0.75 * delta;
    let n = system.dim();
    let cell = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| libm::floor(v / sep) as i64).collect() };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut keep = Vec::new();
    let neighbours = 3usize.pow(n as u32);
    for (i, p) in fine.points.iter().enumerate() {
        let base = cell(p);
        let mut clear = true;
        'scan: for code in 0..neighbours {
            let mut c = code;
            let key: Vec<i64> = base
                .iter()
                .map(|b| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    b + o
                })
                .collect();
            if let Some(members) = grid.get(&key) {
                for &j in members {
                    if linalg::dist(p, &fine.points[j]) <= sep {
                        clear = false;
                        break 'scan;
                    }
                }
            }
        }
        if clear {
            grid.entry(base).or_default().push(i);
            keep.push(i);
        }
    }
    let mut net = fine.subset(&keep);
    net.resolution = delta;
    Ok(net)
}

struct Enumeration<'a> {
    system: &'a System,
    anchors: &'a [Vec<f64>],
    /// Cylinder ratio at or below which a word is emitted.
    threshold: f64,
}

impl Enumeration<'_> {
    fn descend(&self, prefix: &Similarity, word: &SymbolWord, letter: usize, out: &mut (Vec<Vec<f64>>, Vec<SymbolWord>)) {
        let g = prefix.compose(self.system.letter_map(letter));
        let w = word.pushed(letter as u32);
        let (_, target) = self.system.letter_endpoints(letter);
        if g.ratio <= self.threshold {
            out.0.push(g.apply(&self.anchors[target]));
            out.1.push(w);
            return;
        }
        for next in self.system.letters_from(target) {
            self.descend(&g, &w, next, out);
        }
    }
}

fn count_cylinders(system: &System, vertex: usize, diam: f64, delta: f64, budget: usize) -> usize {
    if diam <= delta * (1.0 + CYLINDER_SLACK) {
        return 1;
    }
    let threshold = delta * (1.0 + CYLINDER_SLACK) / diam;
    let mut count = 0usize;
    let mut stack: Vec<(usize, f64)> = system.letters_from(vertex).map(|l| (l, 1.0)).collect();
    while let Some((l, r)) = stack.pop() {
        let r = r * system.letter_map(l).ratio;
        if r <= threshold {
            count += 1;
            if count > budget {
                return count;
            }
        } else {
            let (_, t) = system.letter_endpoints(l);
            stack.extend(system.letters_from(t).map(|m| (m, r)));
        }
    }
    count
}

fn feasible_resolution(system: &System, vertex: usize, diam: f64, delta: f64, budget: usize) -> f64 {
    // The cylinder count is nonincreasing in the resolution; bisect in log scale.
    let (mut lo, mut hi) = (delta, diam);
    for _ in 0..60 {
        let mid = libm::sqrt(lo * hi);
        if count_cylinders(system, vertex, diam, mid, budget) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Certified lower bound on `min_{i≠j} dist(g_i(K), g_j(K))` from the
/// bounding balls of the depth-`depth` cylinders.
pub fn separation_bound_at_depth(ifs: &SelfSimilarIfs, depth: usize) -> f64 {
    let system = System::SelfSimilar(ifs.clone());
    let ball = system.bounding_ball();
    // (first letter, center, radius) of each depth-`depth` cylinder.
    let mut cylinders: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    let mut stack: Vec<(usize, Similarity, usize)> =
        (0..ifs.maps.len()).map(|i| (i, ifs.maps[i].clone(), 1)).collect();
    while let Some((first, g, d)) = stack.pop() {
        if d >= depth.max(1) {
            cylinders.push((first, g.apply(&ball.center), g.ratio * ball.radius));
        } else {
            for m in &ifs.maps {
                stack.push((first, g.compose(m), d + 1));
            }
        }
    }
    let mut best = f64::INFINITY;
    for (a, (fa, ca, ra)) in cylinders.iter().enumerate() {
        for (fb, cb, rb) in &cylinders[a + 1..] {
            if fa != fb {
                best = best.min(linalg::dist(ca, cb) - ra - rb);
            }
        }
    }
    best
}

/// Separation witness `c` with `dist(g_i(K), g_j(K)) ≥ c > 0` for `i ≠ j`,
/// certified at some cylinder depth up to `max_depth`. Returns `None` if the
/// best bound stays non-positive (strong separation not certified).
///
/// The bound is the best over depths `1..=max_depth`, so it is nondecreasing
/// in `max_depth`. Depths with more than 4096 cylinders are skipped.
pub fn separation_constant(ifs: &SelfSimilarIfs, max_depth: usize) -> Option<f64> {
    let n = ifs.maps.len() as f64;
    let mut best = f64::NEG_INFINITY;
    for depth in 1..=max_depth.max(1) {
        if libm::pow(n, depth as f64) > 4096.0 && depth > 1 {
            break;
        }
        best = best.max(separation_bound_at_depth(ifs, depth));
    }
    (best > 1e-12).then_some(best)
}

/// Unique `σ ≥ 0` with `Σ r_i^σ = 1`, by bisection to absolute tolerance
/// `1e-12`.
pub fn similarity_dimension_of_ratios(ratios: &[f64]) -> f64 {
    let f = |s: f64| ratios.iter().map(|r| libm::pow(*r, s)).sum::<f64>() - 1.0;
    if f(0.0) <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    bisect_decreasing(f, 0.0, hi, 1e-13)
}

/// Similarity dimension of a self-similar IFS.
pub fn similarity_dimension(ifs: &SelfSimilarIfs) -> f64 {
    similarity_dimension_of_ratios(&ifs.ratios())
}

fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Perron root of a nonnegative irreducible matrix, by power iteration on
/// `M + I` with Collatz-Wielandt bounds; stops once the bracket is narrower
/// than `tol` (relative).
pub fn perron_root(m: &Mat, tol: f64) -> f64 {
    let n = m.rows();
    let mut x = vec![1.0; n];
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let mut y = m.mul_vec(&x);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += xi;
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (yi, xi) in y.iter().zip(&x) {
            let q = yi / xi;
            lo = lo.min(q);
            hi = hi.max(q);
        }
        estimate = 0.5 * (lo + hi) - 1.0;
        if hi - lo <= tol * hi {
            break;
        }
        let s: f64 = y.iter().sum();
        x = y.into_iter().map(|v| v / s).collect();
    }
    estimate
}

/// Matrix `M(σ)_{ij} = Σ_{e: i→j} a_e^σ`.
pub fn ratio_matrix(gd: &GraphDirectedIfs, sigma: f64) -> Mat {
    let mut m = Mat::zeros(gd.vertex_count, gd.vertex_count);
    for e in &gd.edges {
        m[(e.source, e.target)] += libm::pow(e.map.ratio, sigma);
    }
    m
}

/// `σ` with spectral radius `ρ(M(σ)) = 1`, by bisection on `σ` with the
/// spectral radius from [`perron_root`]; tolerance `1e-10`.
pub fn graph_directed_dimension(gd: &GraphDirectedIfs) -> f64 {
    let f = |s: f64| perron_root(&ratio_matrix(gd, s), 1e-14) - 1.0;
    if f(0.0) <= 0.0 {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    bisect_decreasing(f, 0.0, hi, 1e-12)
}

/// Dimension of either kind of system.
pub fn system_dimension(system: &System) -> f64 {
    match system {
        System::SelfSimilar(s) => similarity_dimension(s),
        System::GraphDirected(g) => graph_directed_dimension(g),
    }
}

/// Outcome of closing the transformation group under composition.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupClosure {
    /// The closure stabilized; every element is listed once.
    Finite(Vec<Mat>),
    /// More than `budget` distinct elements were found (group possibly infinite).
    BudgetExceeded {
        /// The budget that was exceeded.
        budget: usize,
    },
}

impl GroupClosure {
    /// Group order, if finite.
    pub fn order(&self) -> Option<usize> {
        match self {
            GroupClosure::Finite(v) => Some(v.len()),
            GroupClosure::BudgetExceeded { .. } => None,
        }
    }
}

/// Group generated by the orthogonal parts `T_{e_1} ∘ ⋯ ∘ T_{e_ℓ}` of cycles
/// through `vertex` (every map, for a self-similar system).
///
/// Path products from `vertex` to every other vertex are closed under
/// extension by edges; if all sets stay finite, the cycle products form a
/// finite multiplicatively closed subset of `O(n)`, hence a group.
pub fn transformation_group(system: &System, vertex: Option<usize>, max_elements: usize) -> Result<GroupClosure> {
    let vertex = match (system, vertex) {
        (System::SelfSimilar(_), _) => 0,
        (System::GraphDirected(_), Some(v)) if v < system.vertex_count() => v,
        (System::GraphDirected(_), Some(v)) => return Err(Error::Precondition(format!("vertex {v} out of range"))),
        (System::GraphDirected(_), None) => {
            return Err(Error::Precondition("graph-directed systems need a vertex".to_string()))
        }
    };
    let n = system.dim();
    let mut sets: Vec<Vec<Mat>> = vec![Vec::new(); system.vertex_count()];
    sets[vertex].push(Mat::identity(n));
    let mut total = 1usize;
    let mut queue = VecDeque::from([(vertex, 0usize)]);
    while let Some((u, idx)) = queue.pop_front() {
        let g = sets[u][idx].clone();
        for l in system.letters_from(u) {
            let (_, t) = system.letter_endpoints(l);
            let h = g.mul(system.letter_map(l).orthogonal());
            if !sets[t].iter().any(|m| m.approx_eq(&h, GROUP_DEDUP_TOL)) {
                sets[t].push(h);
                total += 1;
                if total > max_elements {
                    return Ok(GroupClosure::BudgetExceeded { budget: max_elements });
                }
                queue.push_back((t, sets[t].len() - 1));
            }
        }
    }
    Ok(GroupClosure::Finite(core::mem::take(&mut sets[vertex])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cantor() -> SelfSimilarIfs {
        SelfSimilarIfs::new(vec![
            Similarity::homothety(1.0 / 3.0, vec![0.0]).unwrap(),
            Similarity::homothety(1.0 / 3.0, vec![2.0 / 3.0]).unwrap(),
        ])
        .unwrap()
    }

    fn sierpinski() -> SelfSimilarIfs {
        let h = libm::sqrt(3.0) / 2.0;
        SelfSimilarIfs::new(vec![
            Similarity::homothety(0.5, vec![0.0, 0.0]).unwrap(),
            Similarity::homothety(0.5, vec![0.5, 0.0]).unwrap(),
            Similarity::homothety(0.5, vec![0.25, h / 2.0]).unwrap(),
        ])
        .unwrap()
    }

    fn four_corner() -> SelfSimilarIfs {
        let t = [[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]];
        SelfSimilarIfs::new(t.iter().map(|b| Similarity::homothety(0.25, b.to_vec()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_similarities() {
        assert!(Similarity::homothety(1.0, vec![0.0]).is_err());
        assert!(Similarity::homothety(0.0, vec![0.0]).is_err());
        let skew = Mat::from_row_major(2, 2, vec![1.0, 0.1, 0.0, 1.0]).unwrap();
        assert!(matches!(Similarity::new(0.5, skew, vec![0.0, 0.0]), Err(Error::InvalidSystem(_))));
    }

    #[test]
    fn cantor_fixed_point_word() {
        let sys = System::from(cantor());
        let m = 30;
        let p = symbol_point(&sys, &SymbolWord::constant(1, m)).unwrap();
        // 2/3 · (1 + 1/3 + ... + 1/3^{m-1}) = 1 - 3^{-m}
        assert!((p[0] - (1.0 - libm::pow(3.0, -(m as f64)))).abs() < 1e-15);
        assert_eq!(symbol_point(&sys, &SymbolWord::empty()).unwrap(), vec![0.0]);
    }

    #[test]
    fn sierpinski_two_letter_word() {
        let sys = System::from(sierpinski());
        // g_1(g_2(0)) with letters 0-based: word (0, 1).
        let p = symbol_point(&sys, &SymbolWord::new(vec![0, 1])).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && p[1].abs() < 1e-15);
    }

    #[test]
    fn bounding_ball_is_tight_for_symmetric_examples() {
        let ball = System::from(cantor()).bounding_ball();
        assert!((ball.center[0] - 0.5).abs() < 1e-15 && (ball.radius - 0.5).abs() < 1e-15);
        let ball = System::from(four_corner()).bounding_ball();
        assert!((ball.radius - libm::sqrt(2.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cylinder_counts() {
        let sys = Arc::new(System::from(cantor()));
        for m in 0..8 {
            let cloud = attractor_cloud(&sys, libm::pow(3.0, -(m as f64))).unwrap();
            assert_eq!(cloud.len(), 1 << m);
        }
        let sys = Arc::new(System::from(sierpinski()));
        let diam = sys.diameter_bound();
        for m in 0..6 {
            let cloud = attractor_cloud(&sys, libm::pow(2.0, -(m as f64)) * diam).unwrap();
            assert_eq!(cloud.len(), 3usize.pow(m));
        }
    }

    #[test]
    fn cantor_cloud_is_separated() {
        let sys = Arc::new(System::from(cantor()));
        let m = 6;
        let d = libm::pow(3.0, -(m as f64));
        let cloud = attractor_cloud(&sys, d).unwrap();
        let mut xs: Vec<f64> = cloud.points().iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!(xs.windows(2).all(|w| w[1] - w[0] >= d - 1e-12));
    }

    #[test]
    fn budget_error_names_feasible_resolution() {
        let sys = Arc::new(System::from(four_corner()));
        let err = attractor_cloud_with(&sys, 1e-6, CloudOptions { vertex: 0, budget: 1000 }).unwrap_err();
        match err {
            Error::Budget { budget, feasible_delta } => {
                assert_eq!(budget, 1000);
                let ok = attractor_cloud_with(&sys, feasible_delta, CloudOptions { vertex: 0, budget: 1000 }).unwrap();
                assert!(ok.len() <= 1000);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn separation_examples() {
        let c = separation_bound_at_depth(&cantor(), 1);
        assert!((c - 1.0 / 3.0).abs() < 1e-12);
        assert!(separation_bound_at_depth(&four_corner(), 1) >= 0.25);
        let touching = SelfSimilarIfs::new(vec![
            Similarity::homothety(0.5, vec![0.0]).unwrap(),
            Similarity::homothety(0.5, vec![0.5]).unwrap(),
        ])
        .unwrap();
        assert_eq!(separation_constant(&touching, 8), None);
        let mut prev = f64::NEG_INFINITY;
        for m in 1..6 {
            let c = separation_constant(&four_corner(), m).unwrap();
            assert!(c >= prev);
            prev = c;
        }
    }

    #[test]
    fn similarity_dimension_closed_forms() {
        let ln = libm::log;
        assert!((similarity_dimension(&cantor()) - ln(2.0) / ln(3.0)).abs() < 1e-12);
        assert!((similarity_dimension(&sierpinski()) - ln(3.0) / ln(2.0)).abs() < 1e-12);
        assert!((similarity_dimension_of_ratios(&[0.5, 0.25, 0.25]) - 1.0).abs() < 1e-12);
        // More maps than the ambient dimension allows still bracket correctly.
        assert!((similarity_dimension_of_ratios(&[0.5; 64]) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn graph_directed_examples() {
        let third = |b: f64| Similarity::homothety(1.0 / 3.0, vec![b]).unwrap();
        let loops = GraphDirectedIfs::new(
            1,
            vec![Edge { source: 0, target: 0, map: third(0.0) }, Edge { source: 0, target: 0, map: third(2.0 / 3.0) }],
        )
        .unwrap();
        let ln = libm::log;
        assert!((graph_directed_dimension(&loops) - ln(2.0) / ln(3.0)).abs() < 1e-10);

        let golden = GraphDirectedIfs::new(
            2,
            vec![
                Edge { source: 0, target: 0, map: third(0.0) },
                Edge { source: 0, target: 1, map: third(2.0 / 3.0) },
                Edge { source: 1, target: 0, map: third(0.0) },
            ],
        )
        .unwrap();
        let phi = (1.0 + libm::sqrt(5.0)) / 2.0;
        assert!((graph_directed_dimension(&golden) - ln(phi) / ln(3.0)).abs() < 1e-10);
    }

    #[test]
    fn graph_structure_is_checked() {
        let m = Similarity::homothety(0.5, vec![0.0]).unwrap();
        let one_way = GraphDirectedIfs::new(
            2,
            vec![Edge { source: 0, target: 1, map: m.clone() }, Edge { source: 1, target: 1, map: m.clone() }],
        );
        assert!(matches!(one_way, Err(Error::Structure(_))));
        let sink = GraphDirectedIfs::new(2, vec![Edge { source: 0, target: 1, map: m.clone() }]);
        assert!(matches!(sink, Err(Error::Structure(_))));
    }

    #[test]
    fn graph_words_must_compose() {
        let m = |b: f64| Similarity::homothety(1.0 / 3.0, vec![b]).unwrap();
        let sys = System::from(
            GraphDirectedIfs::new(
                2,
                vec![
                    Edge { source: 0, target: 0, map: m(0.0) },
                    Edge { source: 0, target: 1, map: m(2.0 / 3.0) },
                    Edge { source: 1, target: 0, map: m(0.0) },
                ],
            )
            .unwrap(),
        );
        assert!(symbol_point(&sys, &SymbolWord::new(vec![1, 2, 0])).is_ok());
        assert_eq!(symbol_point(&sys, &SymbolWord::new(vec![1, 1])), Err(Error::Path { position: 1 }));
    }

    #[test]
    fn groups() {
        let rot = |a: f64, b: f64| Similarity::new(0.25, Mat::rotation2(a), vec![b, 0.0]).unwrap();
        let id = System::from(four_corner());
        assert_eq!(transformation_group(&id, None, DEFAULT_GROUP_BUDGET).unwrap().order(), Some(1));
        let quarter = System::from(
            SelfSimilarIfs::new(vec![rot(core::f64::consts::FRAC_PI_2, 0.0), rot(core::f64::consts::FRAC_PI_2, 0.7)])
                .unwrap(),
        );
        assert_eq!(transformation_group(&quarter, None, DEFAULT_GROUP_BUDGET).unwrap().order(), Some(4));
        let irrational = System::from(SelfSimilarIfs::new(vec![rot(1.0, 0.0), rot(1.0, 0.7)]).unwrap());
        assert_eq!(
            transformation_group(&irrational, None, 500).unwrap(),
            GroupClosure::BudgetExceeded { budget: 500 }
        );
    }
}
