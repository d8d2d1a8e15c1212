//! Transversality of the family of hyperplane projections of a rotation-free
//! self-similar set.
//!
//! For `g_i(x) = a_i x + b_i` on `R^n` and a unit vector `e`, projecting along
//! `e` with `ρ_e(x) = x − (x·e)e` gives the induced system
//! `f_i(ξ; e) = a_i ξ + ρ_e(b_i)` on `e^⊥`, whose limit points are
//! `Π_e(ω) = ρ_e(Π(ω))`. The derivative of `e ↦ ρ_e(z)` at `u`, restricted to
//! the tangent space `u^⊥`, is `−(z·u) I_{n−1}`, so transversality reduces to
//! `|z·u| > c/√2` whenever `‖ρ_u(z)‖ < c/√2`, with `c` the first-level gap.

use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::ifs::{self, SelfSimilarIfs, SymbolWord, System};
use crate::linalg::{self, Mat};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// Tolerance on `‖e‖ = 1`.
pub const UNIT_TOL: f64 = 1e-12;

/// Tolerance of the `Π_e(ω) = ρ_e(Π(ω))` consistency check.
pub const LIMIT_TOL: f64 = 1e-10;

fn check_unit(e: &[f64]) -> Result<()> {
    let n = linalg::norm(e);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Precondition(alloc::format!("direction must be a unit vector, |e| = {n}")));
    }
    Ok(())
}

/// `ρ_e(x) = x − (x·e)e`, the orthogonal projection onto `e^⊥` as an
/// `n`-vector.
pub fn rho(e: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if e.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: e.len(), found: x.len() });
    }
    check_unit(e)?;
    Ok(rho_unchecked(e, x))
}

fn rho_unchecked(e: &[f64], x: &[f64]) -> Vec<f64> {
    let t = linalg::dot(x, e);
    x.iter().zip(e).map(|(xi, ei)| xi - t * ei).collect()
}

/// Orthonormal basis of `u^⊥` (deterministic completion).
pub fn tangent_frame(u: &[f64]) -> Vec<Vec<f64>> {
    linalg::orthogonal_complement(&[u.to_vec()], u.len())
}

/// The projected family `{f_i(·; e)}` of a rotation-free self-similar system.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFamily {
    base: SelfSimilarIfs,
}

impl ProjectedFamily {
    /// Wraps `base`; systems with rotations or reflections are unsupported.
    pub fn new(base: SelfSimilarIfs) -> Result<Self> {
        if !base.is_rotation_free() {
            return Err(Error::Unsupported("projected family needs maps of the form a·x + b".into()));
        }
        if base.dim() < 2 {
            return Err(Error::Unsupported("projected family needs ambient dimension ≥ 2".into()));
        }
        Ok(Self { base })
    }

    /// The base system.
    pub fn base(&self) -> &SelfSimilarIfs {
        &self.base
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `(a_i, ρ_e(b_i))`.
    pub fn induced_map(&self, letter: usize, e: &[f64]) -> Result<(f64, Vec<f64>)> {
        let g = self.base.maps().get(letter).ok_or(Error::Path { position: 0 })?;
        Ok((g.ratio(), rho(e, g.translation())?))
    }

    /// `f_i(ξ; e) = a_i ξ + ρ_e(b_i)`.
    pub fn apply(&self, letter: usize, e: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let (a, b) = self.induced_map(letter, e)?;
        Ok(xi.iter().zip(&b).map(|(x, bi)| a * x + bi).collect())
    }
}

/// `Π_e(ω^m) = f_{ω^m}(0; e)`, checked against `ρ_e(g_{ω^m}(0))` to `1e-10`.
pub fn family_limit(family: &ProjectedFamily, e: &[f64], word: &SymbolWord) -> Result<Vec<f64>> {
    let n = family.dim();
    if e.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: e.len() });
    }
    check_unit(e)?;
    let system = System::SelfSimilar(family.base.clone());
    system.check_word(word)?;
    let mut xi = alloc::vec![0.0; n];
    for &l in word.letters().iter().rev() {
        xi = family.apply(l as usize, e, &xi)?;
    }
    let direct = rho_unchecked(e, &ifs::symbol_point(&system, word)?);
    let err = linalg::dist(&xi, &direct);
    if err > LIMIT_TOL * (1.0 + linalg::norm(&direct)) {
        return Err(Error::Consistency(alloc::format!("projected limit differs from ρ_e(Π(ω)) by {err:.3e}")));
    }
    Ok(xi)
}

/// The tangent Jacobian of `e ↦ ρ_e(z)` at `u` in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticJacobian {
    /// `−(z·u) I_{n−1}` in any orthonormal frame of `u^⊥`.
    pub matrix: Mat,
    /// `(−z·u)^{n−1}`.
    pub determinant: f64,
}

/// Closed-form tangent Jacobian `−(z·u) I_{n−1}` and its determinant.
pub fn jacobian_analytic(z: &[f64], u: &[f64]) -> Result<AnalyticJacobian> {
    if z.len() != u.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: z.len() });
    }
    if linalg::norm(z) == 0.0 {
        return Err(Error::Precondition("z must be nonzero".into()));
    }
    check_unit(u)?;
    let m = u.len() - 1;
    let zn = -linalg::dot(z, u);
    Ok(AnalyticJacobian { matrix: Mat::identity(m).scaled(zn), determinant: libm::pow(zn, m as f64) })
}

/// Central differences of `e ↦ ρ_e(z)` along the curves
/// `e_j(h) = (u + h t_j)/sqrt(1 + h²)` for the [`tangent_frame`] `t_j` of `u`,
/// projected back onto the frame. Agrees with [`jacobian_analytic`] to `O(h²)`.
pub fn jacobian_fd(z: &[f64], u: &[f64], h: f64) -> Result<Mat> {
    if z.len() != u.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), found: z.len() });
    }
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::Precondition(alloc::format!("step must lie in (0, 1e-3], got {h}")));
    }
    check_unit(u)?;
    let frame = tangent_frame(u);
    let m = frame.len();
    let scale = 1.0 / libm::sqrt(1.0 + h * h);
    let mut data = alloc::vec![0.0; m * m];
    for (j, t) in frame.iter().enumerate() {
        let plus: Vec<f64> = u.iter().zip(t).map(|(a, b)| (a + h * b) * scale).collect();
        let minus: Vec<f64> = u.iter().zip(t).map(|(a, b)| (a - h * b) * scale).collect();
        let d: Vec<f64> = rho_unchecked(&plus, z)
            .iter()
            .zip(rho_unchecked(&minus, z))
            .map(|(p, q)| (p - q) / (2.0 * h))
            .collect();
        for (i, ti) in frame.iter().enumerate() {
            data[i * m + j] = linalg::dot(ti, &d);
        }
    }
    Ok(Mat::from_row_major(m, m, data).expect("square"))
}

/// Max entrywise difference between [`jacobian_fd`] and
/// [`jacobian_analytic`], relative to `‖z‖`.
pub fn jacobian_relative_error(z: &[f64], u: &[f64], h: f64) -> Result<f64> {
    let a = jacobian_analytic(z, u)?;
    let f = jacobian_fd(z, u, h)?;
    Ok(a.matrix.max_abs_diff(&f) / linalg::norm(z))
}

/// `count` unit vectors at angles `2πi/count` in the plane.
pub fn circle_directions(count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|i| {
            let t = 2.0 * core::f64::consts::PI * i as f64 / count as f64;
            alloc::vec![libm::cos(t), libm::sin(t)]
        })
        .collect()
}

/// `count` seeded uniform directions on `S^{n−1}`.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeededRng::new(seed);
    (0..count).map(|_| rng.unit_vector(n)).collect()
}

/// Scan options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    /// Word depth `m`.
    pub word_depth: usize,
    /// Cap on candidate pairs examined over the whole scan.
    pub pair_budget: u64,
    /// Replaces the certified gap `c` (harness self-test).
    pub c_override: Option<f64>,
    /// Depth used to certify `c`.
    pub certify_depth: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { word_depth: 6, pair_budget: 4_000_000_000, c_override: None, certify_depth: 8 }
    }
}

/// One examined word pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    /// Index of the direction in the input list.
    pub direction_index: usize,
    /// Direction `u`.
    pub direction: Vec<f64>,
    /// First word `ω`.
    pub omega: SymbolWord,
    /// Second word `κ`.
    pub kappa: SymbolWord,
    /// `‖Π_u(ω) − Π_u(κ)‖` at the truncated words.
    pub lhs: f64,
    /// `|det D| = |z·u|^{n−1}`.
    pub det_abs: f64,
    /// `|z·u| − c/√2`.
    pub margin: f64,
    /// True for a certain violation (survives the truncation slack).
    pub violation: bool,
}

/// Result of [`transversality_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransversalityReport {
    /// First-level gap `c` used.
    pub c: f64,
    /// `L = c/√2`.
    pub threshold: f64,
    /// Required `|det|`, `c^{n−1}/2^{(n−1)/2}`.
    pub det_threshold: f64,
    /// Truncation slack `2τ` applied to both sides.
    pub slack: f64,
    /// Word depth.
    pub word_depth: usize,
    /// Directions scanned.
    pub direction_count: usize,
    /// Candidate pairs examined.
    pub pairs_checked: u64,
    /// Pairs whose antecedent may hold (`‖ρ_u z‖ − 2τ < L`).
    pub close_pairs: u64,
    /// Worst close pair per direction (smallest margin), if any.
    pub worst_per_direction: Vec<PairRecord>,
    /// Certain violations.
    pub violations: Vec<PairRecord>,
    /// Smallest margin over close pairs.
    pub min_margin: Option<f64>,
    /// The pair budget ran out before all directions were scanned.
    pub truncated: bool,
}

/// Exhaustive check of the transversality implication over all pairs of
/// depth-`m` words with different first letters, for every direction.
///
/// A pair is a certain violation when `‖ρ_u z‖ + 2τ < c/√2` and
/// `|z·u| + 2τ ≤ c/√2`, where `z = g_ω(0) − g_κ(0)` and `τ` bounds the
/// distance from a truncated word's point to any limit point of its cylinder.
/// Pairs whose projections are farther apart than `c/√2 + 2τ` are skipped
/// (the implication holds vacuously).
pub fn transversality_scan(family: &ProjectedFamily, directions: &[Vec<f64>], options: ScanOptions) -> Result<TransversalityReport> {
    let n = family.dim();
    for u in directions {
        if u.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: u.len() });
        }
        check_unit(u)?;
    }
    let certified = ifs::separation_constant(&family.base, options.certify_depth);
    let c = match (options.c_override, certified) {
        (Some(c), _) => c,
        (None, Some(c)) => c,
        (None, None) => return Err(Error::Precondition("strong separation is not certified".into())),
    };
    if !(c > 0.0) {
        return Err(Error::Precondition("gap c must be positive".into()));
    }
    let system = System::SelfSimilar(family.base.clone());
    let letters = family.base.maps().len() as u32;
    let depth = options.word_depth.max(1);
    let words = all_words(letters, depth);
    let points: Vec<Vec<f64>> = words.iter().map(|w| ifs::symbol_point(&system, w)).collect::<Result<_>>()?;
    let tau = words
        .iter()
        .map(|w| ifs::truncation_bound(&system, system.word_ratio(w)))
        .fold(0.0, f64::max);
    let slack = 2.0 * tau;
    let threshold = c / core::f64::consts::SQRT_2;
    let m = (n - 1) as f64;
    let det_threshold = libm::pow(c, m) / libm::pow(2.0, m / 2.0);
    let window = threshold + slack;

    let mut report = TransversalityReport {
        c,
        threshold,
        det_threshold,
        slack,
        word_depth: depth,
        direction_count: directions.len(),
        pairs_checked: 0,
        close_pairs: 0,
        worst_per_direction: Vec::new(),
        violations: Vec::new(),
        min_margin: None,
        truncated: false,
    };
    let first: Vec<Option<u32>> = words.iter().map(|w| w.first()).collect();
    for (di, u) in directions.iter().enumerate() {
        let frame = tangent_frame(u);
        let dims = frame.len();
        // `|ρ_u(z)|` is the norm of `z` in a basis of `u^⊥`.
        let coords: Vec<f64> = points.iter().flat_map(|p| frame.iter().map(move |t| linalg::dot(t, p))).collect();
        let along: Vec<f64> = points.iter().map(|p| linalg::dot(p, u)).collect();
        let key = |c: &[f64]| -> Vec<i64> { c.iter().map(|x| libm::floor(x / window) as i64).collect() };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for i in 0..points.len() {
            buckets.entry(key(&coords[i * dims..(i + 1) * dims])).or_default().push(i);
        }
        let mut worst: Option<(f64, usize, usize, f64)> = None;
        let neighbours = 3usize.pow(dims as u32);
        'points: for i in 0..points.len() {
            let ci = &coords[i * dims..(i + 1) * dims];
            let base = key(ci);
            for code in 0..neighbours {
                let mut cc = code;
                let cell: Vec<i64> = base
                    .iter()
                    .map(|b| {
                        let o = (cc % 3) as i64 - 1;
                        cc /= 3;
                        b + o
                    })
                    .collect();
                let Some(bucket) = buckets.get(&cell) else { continue };
                for &j in bucket {
                    if j <= i || first[i] == first[j] {
                        continue;
                    }
                    if report.pairs_checked >= options.pair_budget {
                        report.truncated = true;
                        break 'points;
                    }
                    report.pairs_checked += 1;
                    let cj = &coords[j * dims..(j + 1) * dims];
                    let lhs = libm::sqrt(ci.iter().zip(cj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
                    if !(lhs - slack < threshold) {
                        continue;
                    }
                    report.close_pairs += 1;
                    let a = (along[i] - along[j]).abs();
                    let margin = a - threshold;
                    if lhs + slack < threshold && a + slack <= threshold {
                        report.violations.push(pair_record(di, u, &words, i, j, lhs, a, margin, m, true));
                    }
                    if worst.is_none_or(|w| margin < w.0) {
                        worst = Some((margin, i, j, lhs));
                    }
                }
            }
        }
        if let Some((margin, i, j, lhs)) = worst {
            let a = margin + threshold;
            let violation = lhs + slack < threshold && a + slack <= threshold;
            report.min_margin = Some(report.min_margin.map_or(margin, |mm: f64| mm.min(margin)));
            report.worst_per_direction.push(pair_record(di, u, &words, i, j, lhs, a, margin, m, violation));
        }
        if report.truncated {
            break;
        }
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn pair_record(
    di: usize,
    u: &[f64],
    words: &[SymbolWord],
    i: usize,
    j: usize,
    lhs: f64,
    along: f64,
    margin: f64,
    m: f64,
    violation: bool,
) -> PairRecord {
    PairRecord {
        direction_index: di,
        direction: u.to_vec(),
        omega: words[i].clone(),
        kappa: words[j].clone(),
        lhs,
        det_abs: libm::pow(along, m),
        margin,
        violation,
    }
}

fn all_words(letters: u32, depth: usize) -> Vec<SymbolWord> {
    let mut words: Vec<Vec<u32>> = alloc::vec![Vec::new()];
    for _ in 0..depth {
        words = words
            .into_iter()
            .flat_map(|w| {
                (0..letters).map(move |l| {
                    let mut v = w.clone();
                    v.push(l);
                    v
                })
            })
            .collect();
    }
    words.into_iter().map(SymbolWord::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::Similarity;
    use alloc::vec;

    fn four_corner() -> SelfSimilarIfs {
        let t = [[0.0, 0.0], [0.75, 0.0], [0.0, 0.75], [0.75, 0.75]];
        SelfSimilarIfs::new(t.iter().map(|b| Similarity::homothety(0.25, b.to_vec()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho(&[0.0, 0.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 0.0]);
        let e = [0.6, 0.8];
        let p = rho(&e, &[1.2, 1.6]).unwrap();
        assert!(linalg::norm(&p) < 1e-15);
        assert!(rho(&[1.0, 1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn limit_at_fixed_point() {
        let fam = ProjectedFamily::new(four_corner()).unwrap();
        let e = [libm::cos(0.3), libm::sin(0.3)];
        let w = SymbolWord::constant(3, 40);
        let got = family_limit(&fam, &e, &w).unwrap();
        let want = rho(&e, &[1.0, 1.0]).unwrap();
        assert!(linalg::dist(&got, &want) < 1e-10);
    }

    #[test]
    fn rotations_unsupported() {
        let r = Similarity::new(0.5, Mat::rotation2(0.5), vec![0.0, 0.0]).unwrap();
        let s = Similarity::homothety(0.5, vec![1.0, 0.0]).unwrap();
        let ifs = SelfSimilarIfs::new(vec![r, s]).unwrap();
        assert!(matches!(ProjectedFamily::new(ifs), Err(Error::Unsupported(_))));
    }

    #[test]
    fn jacobian_examples() {
        let u = [0.0, 0.0, 1.0];
        let j = jacobian_analytic(&u, &u).unwrap();
        assert!(j.matrix.approx_eq(&Mat::identity(2).scaled(-1.0), 0.0));
        assert_eq!(j.determinant, 1.0);
        let j = jacobian_analytic(&[1.0, 0.0, 0.0], &u).unwrap();
        assert_eq!(j.determinant, 0.0);
        assert!(jacobian_analytic(&[0.0; 3], &u).is_err());
        let fd = jacobian_fd(&u, &u, 1e-4).unwrap();
        assert!(fd.approx_eq(&Mat::identity(2).scaled(-1.0), 10.0 * 1e-8));
    }

    #[test]
    fn small_scan_passes_and_self_test_flags() {
        let fam = ProjectedFamily::new(four_corner()).unwrap();
        let dirs = circle_directions(24);
        let opts = ScanOptions { word_depth: 3, ..ScanOptions::default() };
        let r = transversality_scan(&fam, &dirs, opts).unwrap();
        assert!(r.violations.is_empty());
        assert!(r.close_pairs > 0);
        let fake = transversality_scan(&fam, &dirs, ScanOptions { c_override: Some(10.0), ..opts }).unwrap();
        assert!(!fake.violations.is_empty());
    }
}
