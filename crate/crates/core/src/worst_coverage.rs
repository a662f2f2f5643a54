//! Worst coverage of a threshold rule over slab, halfspace and ball shifts.
//!
//! For a direction (or ball center) the rows are ordered along one axis:
//! projections `vᵀx` for slabs (ascending) and halfspaces (descending), and
//! distances `‖x − c‖` for balls (ascending). Ties keep row order. Regions
//! then act on sorted positions:
//!
//! * slab: any contiguous window of at least `L = ⌈δn⌉` positions,
//! * halfspace and ball: any prefix of at least `L` positions.
//!
//! The worst coverage is the smallest fraction of covered rows (`S ≤ q`)
//! over those regions. For slabs this is a minimum-density segment problem
//! with a width floor, solved after the sort by an upper-hull scan over
//! prefix sums. All comparisons are done on integer counts, so the result
//! matches the quadratic oracle exactly, including the tie rule: the first
//! minimizing window when scanning right ends ascending, then left ends
//! ascending.

use serde::{Deserialize, Serialize};

use crate::conformal::ceil_rank;
use crate::error::{check_open_probability, invalid, Error, Result};

/// Upper limit on `n` accepted by [`brute_force_worst_coverage`].
pub const BRUTE_FORCE_MAX_N: usize = 5000;

/// Features (row-major `n × d`) with one score per row: the empirical `Q̂_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    features: Vec<f64>,
    scores: Vec<f64>,
    dim: usize,
}

impl TabularDataset {
    pub fn from_row_major(features: Vec<f64>, dim: usize, scores: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("feature dimension must be at least 1");
        }
        if features.len() != dim * scores.len() {
            return invalid(format!(
                "{} feature values do not form {} rows of dimension {dim}",
                features.len(),
                scores.len()
            ));
        }
        if features.iter().chain(scores.iter()).any(|v| v.is_nan()) {
            return invalid("dataset contains NaN");
        }
        Ok(Self { features, scores, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>], scores: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != scores.len() {
            return invalid(format!("{} feature rows but {} scores", rows.len(), scores.len()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return invalid(format!("row {i} has dimension {}, expected {dim}", rows[i].len()));
        }
        Self::from_row_major(rows.concat(), dim, scores)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Rows picked by `indices`, repeats allowed.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            scores: indices.iter().map(|&i| self.scores[i]).collect(),
            dim: self.dim,
        }
    }

    pub fn with_scores(&self, scores: Vec<f64>) -> Result<Self> {
        Self::from_row_major(self.features.clone(), self.dim, scores)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionFamily {
    Slab,
    Halfspace,
    Ball,
}

impl std::str::FromStr for RegionFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slab" => Ok(Self::Slab),
            "halfspace" => Ok(Self::Halfspace),
            "ball" => Ok(Self::Ball),
            other => invalid(format!("unknown region family `{other}`")),
        }
    }
}

/// A region family indexed by a unit direction (slab, halfspace) or a
/// center (ball), with mass floor `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionQuery {
    pub family: RegionFamily,
    pub vector: Vec<f64>,
    pub delta: f64,
}

impl RegionQuery {
    pub fn new(family: RegionFamily, vector: Vec<f64>, delta: f64) -> Result<Self> {
        check_open_probability("delta", delta)?;
        if vector.is_empty() || vector.iter().any(|v| !v.is_finite()) {
            return invalid("region vector must be nonempty and finite");
        }
        if family != RegionFamily::Ball {
            let norm = norm(&vector);
            if norm == 0.0 {
                return invalid("direction is zero");
            }
            if (norm - 1.0).abs() > 1e-9 {
                return invalid(format!("direction must have unit norm, got {norm}"));
            }
        }
        Ok(Self { family, vector, delta })
    }

    /// Like [`RegionQuery::new`] but rescales slab and halfspace directions to unit norm.
    pub fn normalized(family: RegionFamily, mut vector: Vec<f64>, delta: f64) -> Result<Self> {
        if family != RegionFamily::Ball {
            let n = norm(&vector);
            if n == 0.0 || !n.is_finite() {
                return invalid("direction is zero");
            }
            vector.iter_mut().for_each(|v| *v /= n);
        }
        Self::new(family, vector, delta)
    }
}

/// The minimizing region, in the coordinates of the sorted axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Region {
    /// `{lo ≤ vᵀx ≤ hi}`
    Slab { lo: f64, hi: f64 },
    /// `{vᵀx ≥ threshold}`
    Halfspace { threshold: f64 },
    /// `{‖x − c‖ ≤ radius}`
    Ball { radius: f64 },
}

impl Region {
    /// `(lo, hi)` interval on the sorted axis, as printed by audits.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Region::Slab { lo, hi } => (lo, hi),
            Region::Halfspace { threshold } => (threshold, f64::INFINITY),
            Region::Ball { radius } => (0.0, radius),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCoverageResult {
    pub coverage: f64,
    pub region: Region,
    /// Empirical mass `|R ∩ sample| / n` of the minimizing region.
    pub mass: f64,
    pub covered: usize,
    pub size: usize,
    /// First sorted position of the minimizing region.
    pub start: usize,
}

/// Rows ordered along the axis of one region query; reusable across thresholds.
#[derive(Debug, Clone)]
pub struct SortedAxis {
    family: RegionFamily,
    keys: Vec<f64>,
    scores: Vec<f64>,
    min_size: usize,
}

impl SortedAxis {
    pub fn new(data: &TabularDataset, query: &RegionQuery) -> Result<Self> {
        let n = data.len();
        if n == 0 {
            return invalid("dataset is empty");
        }
        if query.vector.len() != data.dim() {
            return invalid(format!(
                "region vector has dimension {}, features have {}",
                query.vector.len(),
                data.dim()
            ));
        }
        let min_size = ceil_rank(query.delta * n as f64).max(1);
        if min_size > n {
            return invalid(format!("mass floor δ = {} needs more than n = {n} rows", query.delta));
        }
        let raw: Vec<f64> = match query.family {
            RegionFamily::Slab | RegionFamily::Halfspace => {
                data.rows().map(|x| dot(x, &query.vector)).collect()
            }
            RegionFamily::Ball => data
                .rows()
                .map(|x| {
                    x.iter()
                        .zip(&query.vector)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect(),
        };
        let mut order: Vec<usize> = (0..n).collect();
        // stable: ties stay in row order
        match query.family {
            RegionFamily::Halfspace => order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a])),
            _ => order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b])),
        }
        Ok(Self {
            family: query.family,
            keys: order.iter().map(|&i| raw[i]).collect(),
            scores: order.iter().map(|&i| data.scores()[i]).collect(),
            min_size,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn min_size(&self) -> usize {
        self.min_size
    }

    /// Scores in axis order.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    fn prefix_covered(&self, q: f64) -> Vec<i64> {
        let mut prefix = Vec::with_capacity(self.len() + 1);
        prefix.push(0i64);
        let mut acc = 0i64;
        for &s in &self.scores {
            acc += i64::from(s <= q);
            prefix.push(acc);
        }
        prefix
    }

    /// Worst coverage of `{S ≤ q}` over the regions of this axis.
    pub fn worst_coverage(&self, q: f64) -> WorstCoverageResult {
        let prefix = self.prefix_covered(q);
        let (start, end) = match self.family {
            RegionFamily::Slab => min_density_window(&prefix, self.min_size),
            RegionFamily::Halfspace | RegionFamily::Ball => min_density_prefix(&prefix, self.min_size),
        };
        self.result(&prefix, start, end)
    }

    /// Exhaustive enumeration of every admissible region, `O(n²)` for slabs.
    pub fn brute_force_worst_coverage(&self, q: f64) -> WorstCoverageResult {
        let prefix = self.prefix_covered(q);
        let n = self.len();
        let l = self.min_size;
        let mut best: Option<(usize, usize)> = None;
        let better = |c: i64, w: i64, best: Option<(usize, usize)>| match best {
            None => true,
            Some((i, j)) => c * ((j - i) as i64) < (prefix[j] - prefix[i]) * w,
        };
        match self.family {
            RegionFamily::Slab => {
                for j in l..=n {
                    for i in 0..=(j - l) {
                        if better(prefix[j] - prefix[i], (j - i) as i64, best) {
                            best = Some((i, j));
                        }
                    }
                }
            }
            RegionFamily::Halfspace | RegionFamily::Ball => {
                for (k, &covered) in prefix.iter().enumerate().skip(l) {
                    if better(covered, k as i64, best) {
                        best = Some((0, k));
                    }
                }
            }
        }
        let (start, end) = best.expect("at least one admissible region");
        self.result(&prefix, start, end)
    }

    fn result(&self, prefix: &[i64], start: usize, end: usize) -> WorstCoverageResult {
        let covered = (prefix[end] - prefix[start]) as usize;
        let size = end - start;
        let region = match self.family {
            RegionFamily::Slab => Region::Slab {
                lo: self.keys[start],
                hi: self.keys[end - 1],
            },
            RegionFamily::Halfspace => Region::Halfspace {
                threshold: self.keys[end - 1],
            },
            RegionFamily::Ball => Region::Ball {
                radius: self.keys[end - 1],
            },
        };
        WorstCoverageResult {
            coverage: covered as f64 / size as f64,
            region,
            mass: size as f64 / self.len() as f64,
            covered,
            size,
            start,
        }
    }

    /// Smallest score `q` whose worst coverage reaches `1 − α`.
    ///
    /// Worst coverage is nondecreasing in `q`, so this bisects over the
    /// distinct sorted scores.
    pub fn worst_quantile(&self, alpha: f64) -> Result<f64> {
        check_open_probability("alpha", alpha)?;
        let mut candidates = self.scores.clone();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let meets = |q: f64| {
            let wc = self.worst_coverage(q);
            meets_level(wc.covered, wc.size, 1.0 - alpha)
        };
        let (mut lo, mut hi) = (0usize, candidates.len() - 1);
        if !meets(candidates[hi]) {
            return Err(Error::Numerical(
                "worst coverage below target even at the largest score".to_string(),
            ));
        }
        // invariant: candidates[hi] meets, everything below lo fails
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if meets(candidates[mid]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(candidates[hi])
    }
}

/// `covered / size ≥ level`, read as `covered ≥ ⌈level · size⌉`.
pub fn meets_level(covered: usize, size: usize, level: f64) -> bool {
    covered >= ceil_rank(level * size as f64)
}

/// Minimum-density window `[i, j)` with `j − i ≥ min_size` over `prefix`.
///
/// First pass: the minimum slope from any admissible start to each end is
/// attained on the upper hull of the start points, found by bisection on the
/// hull. Second pass: with the global minimum `a/b` known, every admissible
/// pair satisfies `key(i) ≤ key(j)` for `key(t) = b·P[t] − a·t`, and equality
/// marks a minimizer, so the first one is found with a running maximum.
fn min_density_window(prefix: &[i64], min_size: usize) -> (usize, usize) {
    let n = prefix.len() - 1;
    let point = |t: usize| (t as i64, prefix[t]);
    // slope(a → q) < slope(b → q), both starts left of q
    let steeper = |a: (i64, i64), b: (i64, i64), q: (i64, i64)| {
        (q.1 - a.1) * (q.0 - b.0) < (q.1 - b.1) * (q.0 - a.0)
    };

    let mut hull: Vec<(i64, i64)> = Vec::new();
    // any window density is ≤ 1
    let mut best = (2i64, 1i64);
    for j in min_size..=n {
        let p = point(j - min_size);
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
            if cross >= 0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);

        let q = point(j);
        // first hull index k where moving to k + 1 no longer lowers the slope
        let (mut lo, mut hi) = (0usize, hull.len() - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if steeper(hull[mid + 1], hull[mid], q) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let h = hull[lo];
        let (num, den) = (q.1 - h.1, q.0 - h.0);
        if num * best.1 < best.0 * den {
            best = (num, den);
        }
    }

    let (a, b) = best;
    let key = |t: usize| b * prefix[t] - a * t as i64;
    let mut running: Option<(i64, usize)> = None;
    for j in min_size..=n {
        let t = j - min_size;
        let kt = key(t);
        if running.map_or(true, |(m, _)| kt > m) {
            running = Some((kt, t));
        }
        let (m, first) = running.expect("start inserted");
        if m == key(j) {
            return (first, j);
        }
    }
    unreachable!("global minimum is attained by some window")
}

fn min_density_prefix(prefix: &[i64], min_size: usize) -> (usize, usize) {
    let n = prefix.len() - 1;
    let mut best = min_size;
    for k in (min_size + 1)..=n {
        if prefix[k] * (best as i64) < prefix[best] * k as i64 {
            best = k;
        }
    }
    (0, best)
}

/// `WC(C^{(q)}, R_v, δ; Q̂_n)` for the family and vector in `query`.
pub fn worst_coverage(data: &TabularDataset, query: &RegionQuery, q: f64) -> Result<WorstCoverageResult> {
    Ok(SortedAxis::new(data, query)?.worst_coverage(q))
}

/// Quadratic reference implementation of [`worst_coverage`].
pub fn brute_force_worst_coverage(
    data: &TabularDataset,
    query: &RegionQuery,
    q: f64,
) -> Result<WorstCoverageResult> {
    if data.len() > BRUTE_FORCE_MAX_N {
        return Err(Error::SizeGuard {
            n: data.len(),
            max: BRUTE_FORCE_MAX_N,
        });
    }
    Ok(SortedAxis::new(data, query)?.brute_force_worst_coverage(q))
}

/// `q̂_n(v, δ)`: the smallest score whose worst coverage along `query` is at least `1 − α`.
pub fn worst_quantile_for_direction(data: &TabularDataset, query: &RegionQuery, alpha: f64) -> Result<f64> {
    SortedAxis::new(data, query)?.worst_quantile(alpha)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn line_data(scores: Vec<f64>) -> TabularDataset {
        let rows: Vec<Vec<f64>> = (1..=scores.len()).map(|i| vec![i as f64]).collect();
        TabularDataset::from_rows(&rows, scores).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (TabularDataset, Vec<f64>) {
        let features: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        // coarse scores so ties and equal-density windows occur
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect();
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        (TabularDataset::from_row_major(features, d, scores).unwrap(), v)
    }

    #[test]
    fn six_point_slab_example() {
        // q = 0.5 covers the rows with score 0
        let data = line_data(vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let query = RegionQuery::new(RegionFamily::Slab, vec![1.0], 1.0 / 3.0).unwrap();
        let wc = worst_coverage(&data, &query, 0.5).unwrap();
        assert_eq!(wc.coverage, 0.0);
        assert_eq!(wc.region, Region::Slab { lo: 3.0, hi: 4.0 });
        assert_eq!(wc.size, 2);
        assert_eq!(wc, brute_force_worst_coverage(&data, &query, 0.5).unwrap());
    }

    #[test]
    fn full_coverage_for_every_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (data, v) = random_instance(&mut rng, 40, 3);
        for family in [RegionFamily::Slab, RegionFamily::Halfspace, RegionFamily::Ball] {
            let query = RegionQuery::new(family, v.clone(), 0.2).unwrap();
            assert_eq!(worst_coverage(&data, &query, 10.0).unwrap().coverage, 1.0);
        }
    }

    #[test]
    fn singleton_window_finds_uncovered_point() {
        let data = line_data(vec![0.0, 0.0, 3.0, 0.0]);
        let query = RegionQuery::new(RegionFamily::Slab, vec![1.0], 0.1).unwrap();
        let wc = brute_force_worst_coverage(&data, &query, 1.0).unwrap();
        assert_eq!(wc.coverage, 0.0);
        assert_eq!(wc.start, 2);
    }

    #[test]
    fn single_feasible_window_is_overall_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (data, v) = random_instance(&mut rng, 30, 2);
        let query = RegionQuery::new(RegionFamily::Slab, v, 0.99).unwrap();
        let q = 2.0;
        let mean = data.scores().iter().filter(|&&s| s <= q).count() as f64 / 30.0;
        assert_eq!(brute_force_worst_coverage(&data, &query, q).unwrap().coverage, mean);
        assert_eq!(worst_coverage(&data, &query, q).unwrap().coverage, mean);
    }

    #[test]
    fn seeded_slab_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (data, v) = random_instance(&mut rng, 200, 3);
        let q = f64::from(rng.random_range(0..6u8));
        let query = RegionQuery::new(RegionFamily::Slab, v, 0.25).unwrap();
        assert_eq!(
            worst_coverage(&data, &query, q).unwrap(),
            brute_force_worst_coverage(&data, &query, q).unwrap()
        );
    }

    #[test]
    fn argument_errors() {
        let data = line_data(vec![0.0, 1.0]);
        assert!(RegionQuery::new(RegionFamily::Slab, vec![0.0], 0.5).is_err());
        assert!(RegionQuery::new(RegionFamily::Slab, vec![2.0], 0.5).is_err());
        assert!(RegionQuery::new(RegionFamily::Slab, vec![1.0], 1.0).is_err());
        let wrong_dim = RegionQuery::new(RegionFamily::Ball, vec![0.0, 0.0], 0.5).unwrap();
        assert!(worst_coverage(&data, &wrong_dim, 0.0).is_err());
        let big = TabularDataset::from_row_major(vec![0.0; 5001], 1, vec![0.0; 5001]).unwrap();
        let q = RegionQuery::new(RegionFamily::Slab, vec![1.0], 0.5).unwrap();
        assert!(matches!(
            brute_force_worst_coverage(&big, &q, 0.0),
            Err(Error::SizeGuard { n: 5001, .. })
        ));
    }

    #[test]
    fn halfspace_uses_descending_projection() {
        // uncovered rows sit at the top of the axis
        let data = line_data(vec![0.0, 0.0, 0.0, 1.0, 1.0]);
        let query = RegionQuery::new(RegionFamily::Halfspace, vec![1.0], 0.4).unwrap();
        let wc = worst_coverage(&data, &query, 0.5).unwrap();
        assert_eq!(wc.coverage, 0.0);
        assert_eq!(wc.region, Region::Halfspace { threshold: 4.0 });
        let ball = RegionQuery::new(RegionFamily::Ball, vec![5.0], 0.4).unwrap();
        let wc = worst_coverage(&data, &ball, 0.5).unwrap();
        assert_eq!(wc.region, Region::Ball { radius: 1.0 });
    }

    // max over admissible windows of the window's ⌈(1 − α)|w|⌉-th order statistic
    fn window_quantile_oracle(axis: &SortedAxis, alpha: f64) -> f64 {
        let s = axis.scores();
        let n = s.len();
        let l = axis.min_size();
        let mut best = f64::NEG_INFINITY;
        let mut visit = |w: &[f64]| {
            let mut w = w.to_vec();
            w.sort_by(f64::total_cmp);
            let k = ceil_rank((1.0 - alpha) * w.len() as f64).max(1);
            best = best.max(w[k - 1]);
        };
        match axis.family {
            RegionFamily::Slab => {
                for i in 0..n {
                    for j in (i + l)..=n {
                        visit(&s[i..j]);
                    }
                }
            }
            _ => (l..=n).for_each(|k| visit(&s[..k])),
        }
        best
    }

    #[test]
    fn worst_quantile_matches_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 50;
        let features: Vec<f64> = (0..n * 2).map(|_| rng.sample(StandardNormal)).collect();
        let scores: Vec<f64> = (0..n)
            .map(|i| {
                let e: f64 = rng.sample(StandardNormal);
                (features[2 * i].exp() * e).abs()
            })
            .collect();
        let data = TabularDataset::from_row_major(features, 2, scores).unwrap();
        for family in [RegionFamily::Slab, RegionFamily::Halfspace, RegionFamily::Ball] {
            let query = RegionQuery::new(family, vec![1.0, 0.0], 1.0 / 3.0).unwrap();
            let axis = SortedAxis::new(&data, &query).unwrap();
            for alpha in [0.05, 0.1, 0.3] {
                assert_eq!(axis.worst_quantile(alpha).unwrap(), window_quantile_oracle(&axis, alpha));
            }
        }
    }

    #[test]
    fn worst_quantile_with_single_window_is_plain_quantile() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (data, v) = random_instance(&mut rng, 40, 2);
        let query = RegionQuery::new(RegionFamily::Slab, v, 0.999).unwrap();
        let scores = crate::conformal::EmpiricalScores::from_slice(data.scores()).unwrap();
        let plain = crate::conformal::empirical_quantile(&scores, 0.9).unwrap();
        assert_eq!(worst_quantile_for_direction(&data, &query, 0.1).unwrap(), plain);
    }

    #[test]
    fn worst_quantile_is_minimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (data, v) = random_instance(&mut rng, 120, 3);
        let query = RegionQuery::new(RegionFamily::Slab, v, 0.3).unwrap();
        let axis = SortedAxis::new(&data, &query).unwrap();
        let q = axis.worst_quantile(0.2).unwrap();
        let wc = axis.worst_coverage(q);
        assert!(meets_level(wc.covered, wc.size, 0.8));
        let below = data.scores().iter().copied().filter(|&s| s < q).fold(f64::NEG_INFINITY, f64::max);
        if below.is_finite() {
            let wc = axis.worst_coverage(below);
            assert!(!meets_level(wc.covered, wc.size, 0.8));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fast_scan_equals_oracle(seed in any::<u64>(), n in 1usize..120, d in 1usize..5,
                                   delta in 0.01f64..0.99, q in 0u8..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (data, v) = random_instance(&mut rng, n, d);
            for family in [RegionFamily::Slab, RegionFamily::Halfspace, RegionFamily::Ball] {
                let query = RegionQuery::new(family, v.clone(), delta).unwrap();
                let axis = SortedAxis::new(&data, &query).unwrap();
                prop_assert_eq!(axis.worst_coverage(f64::from(q)), axis.brute_force_worst_coverage(f64::from(q)));
            }
        }

        #[test]
        fn monotone_in_threshold_and_floor(seed in any::<u64>(), n in 5usize..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (data, v) = random_instance(&mut rng, n, 2);
            for family in [RegionFamily::Slab, RegionFamily::Halfspace, RegionFamily::Ball] {
                let lo = RegionQuery::new(family, v.clone(), 0.2).unwrap();
                let hi = RegionQuery::new(family, v.clone(), 0.5).unwrap();
                for q in 0..5 {
                    let a = worst_coverage(&data, &lo, f64::from(q)).unwrap().coverage;
                    let b = worst_coverage(&data, &lo, f64::from(q + 1)).unwrap().coverage;
                    prop_assert!(a <= b);
                    let c = worst_coverage(&data, &hi, f64::from(q)).unwrap().coverage;
                    prop_assert!(a <= c);
                    // WC(δ₁) − (δ₁ − δ₀)/δ₁ ≤ WC(δ₀)
                    let (d0, d1) = (ceil_rank(0.2 * n as f64) as f64, ceil_rank(0.5 * n as f64) as f64);
                    prop_assert!(c - (d1 - d0) / d1 <= a + 1e-12);
                }
            }
        }
    }
}
