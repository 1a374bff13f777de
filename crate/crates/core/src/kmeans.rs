//! Clustering as a disjunctive program: exact branch-and-bound, Lloyd upper
//! bounds, point partitioners, the partition lower bound, and MIQCP text
//! exporters.

use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;

use crate::gen::stream_rng;
use crate::la;
use crate::partition::Limits;

/// Exact solves are refused above this many points.
pub const EXACT_POINT_CAP: usize = 25;

#[derive(Debug, thiserror::Error)]
pub enum KMeansError {
    #[error("invalid clustering problem: {0}")]
    BadProblem(String),
    #[error("{n} points exceed the exact-solve cap of {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("partition does not cover the points: {0}")]
    PartitionMismatch(String),
    #[error("bounds out of order: lb {lb} vs ub {ub}")]
    BadGap { lb: f64, ub: f64 },
}

/// Points in the unit hypercube plus a cluster count.
#[derive(Debug, Clone)]
pub struct KMeansProblem {
    pub points: Vec<Vec<f64>>,
    pub k: usize,
}

impl KMeansProblem {
    pub fn new(points: Vec<Vec<f64>>, k: usize) -> Result<Self, KMeansError> {
        let n = points.len();
        if k == 0 || n < k {
            return Err(KMeansError::BadProblem(format!(
                "need n >= k >= 1, got n = {n}, k = {k}"
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(KMeansError::BadProblem("zero-dimensional points".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(KMeansError::BadProblem(format!(
                    "point {i} has dimension {} instead of {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !(-1e-9..=1.0 + 1e-9).contains(x)) {
                return Err(KMeansError::BadProblem(format!(
                    "point {i} leaves the unit hypercube"
                )));
            }
        }
        Ok(KMeansProblem { points, k })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// A point-to-cluster assignment with its centroids and objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster index per point, in 0..k.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Total squared distance of points to their assigned centroids.
    pub sse: f64,
}

/// Disjoint point-index blocks covering 0..n.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl SubproblemPartition {
    fn validate_for(&self, n: usize) -> Result<(), KMeansError> {
        let mut seen = vec![false; n];
        for (bi, block) in self.blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(KMeansError::PartitionMismatch(format!("empty block {bi}")));
            }
            for &i in block {
                if i >= n {
                    return Err(KMeansError::PartitionMismatch(format!(
                        "point index {i} out of range"
                    )));
                }
                if seen[i] {
                    return Err(KMeansError::PartitionMismatch(format!(
                        "point {i} appears twice"
                    )));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(KMeansError::PartitionMismatch(
                "some points are unassigned".into(),
            ));
        }
        Ok(())
    }
}

fn centroids_and_sse(points: &[Vec<f64>], assignment: &[usize], k: usize) -> (Vec<Vec<f64>>, f64) {
    let dim = points[0].len();
    let mut centroids = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        la::axpy(&mut centroids[a], 1.0, p);
        counts[a] += 1;
    }
    for (c, &m) in centroids.iter_mut().zip(&counts) {
        if m > 0 {
            for x in c.iter_mut() {
                *x /= m as f64;
            }
        }
    }
    let sse = points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| la::dist_sq(p, &centroids[a]))
        .sum();
    (centroids, sse)
}

// One seeded replication: k-means++ start, then Lloyd to a fixpoint. Returns
// the clustering and the SSE after every iteration.
fn lloyd_once(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> (Clustering, Vec<f64>) {
    let n = points.len();
    let dim = points[0].len();
    // k-means++ seeding: weight new centers by squared distance to the set.
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| la::dist_sq(p, &centroids[0])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // Every remaining point coincides with a center already.
            Err(_) => rng.gen_range(0..n),
        };
        centroids.push(points[next].clone());
        for (di, p) in d2.iter_mut().zip(points) {
            *di = di.min(la::dist_sq(p, centroids.last().unwrap()));
        }
    }

    let mut assignment = vec![0usize; n];
    let mut history = Vec::new();
    for _ in 0..500 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = la::dist_sq(p, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        // Reseed an empty cluster to the point farthest from its centroid.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .max_by(|&a, &b| {
                    la::dist_sq(&points[a], &centroids[assignment[a]])
                        .total_cmp(&la::dist_sq(&points[b], &centroids[assignment[b]]))
                })
                .unwrap();
            counts[assignment[far]] -= 1;
            assignment[far] = c;
            counts[c] = 1;
            changed = true;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            la::axpy(&mut sums[a], 1.0, p);
        }
        for (c, (s, &m)) in sums.into_iter().zip(&counts).enumerate() {
            if m > 0 {
                centroids[c] = s.into_iter().map(|x| x / m as f64).collect();
            }
        }
        history.push(
            points
                .iter()
                .zip(&assignment)
                .map(|(p, &a)| la::dist_sq(p, &centroids[a]))
                .sum(),
        );
        if !changed {
            break;
        }
    }
    let (centroids, sse) = centroids_and_sse(points, &assignment, k);
    (
        Clustering {
            assignment,
            centroids,
            sse,
        },
        history,
    )
}

/// Best Lloyd run over seeded k-means++ replications.
pub fn lloyd(problem: &KMeansProblem, replications: usize, seed: u64) -> Clustering {
    let reps = replications.max(1);
    let mut best: Option<Clustering> = None;
    for rep in 0..reps {
        let mut rng = stream_rng(seed, 6, rep as u64, 0);
        let (cl, history) = lloyd_once(&problem.points, problem.k, &mut rng);
        debug_assert!(
            history.windows(2).all(|w| w[1] <= w[0] + 1e-9),
            "objective rose between iterations"
        );
        if best.as_ref().is_none_or(|b| cl.sse < b.sse) {
            best = Some(cl);
        }
    }
    best.unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactStatus {
    Optimal,
    TimeLimit,
}

/// Outcome of the exact search: sandwich bounds and the best clustering.
#[derive(Debug, Clone)]
pub struct ExactKMeans {
    pub lb: f64,
    pub ub: f64,
    pub clustering: Clustering,
    pub status: ExactStatus,
    pub nodes: u64,
}

struct Search<'a> {
    points: &'a [Vec<f64>],
    k: usize,
    deadline: Option<Instant>,
    node_cap: Option<u64>,
    counts: Vec<usize>,
    means: Vec<Vec<f64>>,
    partial: f64,
    assign: Vec<usize>,
    best_sse: f64,
    best_assign: Vec<usize>,
    /// Smallest bound among subtrees abandoned by an early stop.
    open_min: f64,
    stopped: bool,
    nodes: u64,
}

impl Search<'_> {
    fn dfs(&mut self, i: usize, max_used: usize) {
        self.nodes += 1;
        if self.node_cap.is_some_and(|cap| self.nodes >= cap)
            || self.deadline.is_some_and(|d| Instant::now() >= d)
        {
            self.stopped = true;
        }
        if self.stopped {
            // The caller folds this subtree's bound into open_min.
            return;
        }
        if i == self.points.len() {
            if self.partial < self.best_sse {
                self.best_sse = self.partial;
                self.best_assign = self.assign.clone();
            }
            return;
        }
        let p = &self.points[i];
        // Adding p to a cluster of m points raises the objective by
        // m/(m+1) * dist(p, mean)^2; unused clusters beyond the first are
        // interchangeable, so only one fresh index is tried.
        let top = (max_used + 1).min(self.k - 1);
        let mut children: Vec<(f64, usize)> = (0..=top)
            .map(|c| {
                let m = self.counts[c] as f64;
                let cost = if self.counts[c] == 0 {
                    0.0
                } else {
                    m / (m + 1.0) * la::dist_sq(p, &self.means[c])
                };
                (self.partial + cost, c)
            })
            .collect();
        children.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (pos, &(bound, c)) in children.iter().enumerate() {
            if self.stopped {
                for &(b, _) in &children[pos..] {
                    self.open_min = self.open_min.min(b);
                }
                return;
            }
            if bound >= self.best_sse {
                // Children are sorted, so the rest are pruned with this one.
                break;
            }
            let old_mean = self.means[c].clone();
            let old_partial = self.partial;
            let m = self.counts[c] as f64;
            for (mj, pj) in self.means[c].iter_mut().zip(p) {
                *mj += (pj - *mj) / (m + 1.0);
            }
            self.counts[c] += 1;
            self.partial = bound;
            self.assign[i] = c;
            self.dfs(i + 1, max_used.max(c as isize as usize).max(c));
            self.counts[c] -= 1;
            self.means[c] = old_mean;
            self.partial = old_partial;
        }
    }
}

/// Exact minimum-SSE clustering by branch-and-bound in fixed point order,
/// warm-started from a Lloyd incumbent. On an early stop the returned lb is
/// still a valid global lower bound.
pub fn exact_kmeans(problem: &KMeansProblem, limits: &Limits) -> Result<ExactKMeans, KMeansError> {
    let n = problem.n();
    if n > EXACT_POINT_CAP {
        return Err(KMeansError::CapExceeded {
            n,
            cap: EXACT_POINT_CAP,
        });
    }
    let warm = lloyd(problem, 10, 1);
    let dim = problem.dim();
    let mut search = Search {
        points: &problem.points,
        k: problem.k,
        deadline: limits.time.map(|t| Instant::now() + t),
        node_cap: limits.nodes,
        counts: vec![0; problem.k],
        means: vec![vec![0.0; dim]; problem.k],
        partial: 0.0,
        assign: vec![0; n],
        best_sse: warm.sse + 1e-12,
        best_assign: warm.assignment.clone(),
        open_min: f64::INFINITY,
        stopped: false,
        nodes: 0,
    };
    search.dfs(0, 0);
    // Point 0 always opens cluster 0; dfs starts with max_used = 0 to match.
    let (centroids, sse) = centroids_and_sse(&problem.points, &search.best_assign, problem.k);
    let ub = sse;
    let (lb, status) = if search.stopped {
        (search.open_min.min(ub), ExactStatus::TimeLimit)
    } else {
        (ub, ExactStatus::Optimal)
    };
    Ok(ExactKMeans {
        lb,
        ub,
        clustering: Clustering {
            assignment: search.best_assign,
            centroids,
            sse,
        },
        status,
        nodes: search.nodes,
    })
}

/// Deals each warm cluster's points round-robin to `s` blocks, the dealing
/// counter persisting across clusters; empty blocks are dropped.
pub fn det_partition(warm: &Clustering, s: usize) -> SubproblemPartition {
    let s = s.max(1);
    let k = warm.centroids.len();
    let mut blocks = vec![Vec::new(); s];
    let mut counter = 0usize;
    for cluster in 0..k {
        for (i, &a) in warm.assignment.iter().enumerate() {
            if a == cluster {
                blocks[counter % s].push(i);
                counter += 1;
            }
        }
    }
    blocks.retain(|b| !b.is_empty());
    for b in &mut blocks {
        b.sort_unstable();
    }
    SubproblemPartition { blocks }
}

/// Draws a uniform key per point, sorts, and chunks runs of `block_size`;
/// the last block keeps the remainder.
pub fn rand_partition(n: usize, block_size: usize, seed: u64) -> SubproblemPartition {
    let bs = block_size.max(1);
    let mut rng = stream_rng(seed, 5, n as u64, 0);
    let mut keyed: Vec<(f64, usize)> = (0..n).map(|i| (rng.gen::<f64>(), i)).collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let blocks = keyed
        .chunks(bs)
        .map(|chunk| {
            let mut b: Vec<usize> = chunk.iter().map(|&(_, i)| i).collect();
            b.sort_unstable();
            b
        })
        .collect();
    SubproblemPartition { blocks }
}

/// Per-block outcome inside `kmeans_lower_bound`.
#[derive(Debug, Clone)]
pub struct BlockBound {
    pub lb: f64,
    pub ub: f64,
    pub status: ExactStatus,
}

/// Partition lower bound and its per-block pieces.
#[derive(Debug, Clone)]
pub struct KMeansBound {
    /// Sum of block lower bounds in block order; a valid bound on the
    /// full-instance optimum.
    pub lb: f64,
    pub per_block: Vec<BlockBound>,
}

/// Solves K-means exactly on every block and sums the lower bounds. Blocks
/// see the full cluster budget (capped by their size), which relaxes the
/// shared-centroid coupling and keeps the sum a valid global bound.
pub fn kmeans_lower_bound(
    problem: &KMeansProblem,
    partition: &SubproblemPartition,
    per_block_limits: &Limits,
) -> Result<KMeansBound, KMeansError> {
    partition.validate_for(problem.n())?;
    for block in &partition.blocks {
        if block.len() > EXACT_POINT_CAP {
            return Err(KMeansError::CapExceeded {
                n: block.len(),
                cap: EXACT_POINT_CAP,
            });
        }
    }
    let per_block: Vec<BlockBound> = partition
        .blocks
        .par_iter()
        .map(|block| {
            let pts: Vec<Vec<f64>> = block.iter().map(|&i| problem.points[i].clone()).collect();
            let k = problem.k.min(pts.len());
            let sub = KMeansProblem { points: pts, k };
            exact_kmeans(&sub, per_block_limits).map(|ex| BlockBound {
                lb: ex.lb,
                ub: ex.ub,
                status: ex.status,
            })
        })
        .collect::<Result<_, _>>()?;
    let lb = per_block.iter().map(|b| b.lb).sum();
    Ok(KMeansBound { lb, per_block })
}

/// Fraction of the gap between 0 and `ub` closed by `lb`.
pub fn gap_closed(lb: f64, ub: f64) -> Result<f64, KMeansError> {
    if lb < -1e-9 || lb > ub + 1e-9 || ub <= 0.0 {
        return Err(KMeansError::BadGap { lb, ub });
    }
    Ok((lb / ub).clamp(0.0, 1.0))
}

/// Largest squared distance from each point to any other point.
pub fn pairwise_m(points: &[Vec<f64>]) -> Vec<f64> {
    points
        .iter()
        .map(|p| {
            points
                .iter()
                .map(|q| la::dist_sq(p, q))
                .fold(0.0, f64::max)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiqcpFormat {
    BigM,
    Hull,
}

/// Optional strengthening rows for the exporters.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOpts {
    /// Order centroids by their first coordinate.
    pub symmetry: bool,
    /// Require every cluster to hold at least one point.
    pub nonempty: bool,
}

/// Counts declared by an export and recoverable from its text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportStats {
    pub binaries: usize,
    pub continuous: usize,
    pub linear_rows: usize,
    pub quad_rows: usize,
}

/// An emitted LP-format model.
#[derive(Debug, Clone)]
pub struct MiqcpExport {
    pub format: MiqcpFormat,
    pub text: String,
    pub stats: ExportStats,
    /// Per-point constants for the BigM format, empty for Hull.
    pub big_m: Vec<f64>,
    /// Shared variable bounds for the Hull format.
    pub bounds: Option<(f64, f64)>,
}

fn push_term(row: &mut String, coef: f64, name: &str) {
    if coef == 0.0 {
        return;
    }
    if row.is_empty() {
        if coef == 1.0 {
            *row = name.to_string();
        } else if coef == -1.0 {
            *row = format!("- {name}");
        } else {
            *row = format!("{coef} {name}");
        }
        return;
    }
    let (sign, mag) = if coef < 0.0 { ('-', -coef) } else { ('+', coef) };
    if mag == 1.0 {
        row.push_str(&format!(" {sign} {name}"));
    } else {
        row.push_str(&format!(" {sign} {mag} {name}"));
    }
}

/// Writes the clustering problem as an MIQCP in LP text format, either with
/// per-point big-M distance rows or as the disaggregated formulation with
/// rotated-cone rows and unit-interval bounds.
pub fn export_miqcp(
    problem: &KMeansProblem,
    format: MiqcpFormat,
    opts: &ExportOpts,
) -> MiqcpExport {
    let n = problem.n();
    let k = problem.k;
    let dim = problem.dim();
    let p = &problem.points;
    let mut rows: Vec<String> = Vec::new();
    let mut bounds_sec: Vec<String> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();
    let mut quad_rows = 0usize;

    for i in 1..=n {
        for c in 1..=k {
            binaries.push(format!("y_{i}_{c}"));
        }
    }
    let obj = (1..=n).map(|i| format!("d_{i}")).collect::<Vec<_>>().join(" + ");

    let mut continuous = n + k * dim;
    let big_m;
    let mut bounds = None;
    match format {
        MiqcpFormat::BigM => {
            let ms = pairwise_m(p);
            for (i, mi) in ms.iter().enumerate() {
                let i1 = i + 1;
                for c in 1..=k {
                    // d_i >= sum_j (p_ij - c_cj)^2 - M_i (1 - y_ic), expanded
                    // so the quadratic part sits alone in the bracket.
                    let mut row = String::new();
                    push_term(&mut row, 1.0, &format!("d_{i1}"));
                    push_term(&mut row, -mi, &format!("y_{i1}_{c}"));
                    for j in 1..=dim {
                        push_term(&mut row, 2.0 * p[i][j - 1], &format!("c_{c}_{j}"));
                    }
                    let mut quad = String::new();
                    for j in 1..=dim {
                        quad.push_str(&format!(" - c_{c}_{j} ^2"));
                    }
                    let rhs: f64 = p[i].iter().map(|x| x * x).sum::<f64>() - mi;
                    rows.push(format!("dist_{i1}_{c}: {row} + [{quad} ] >= {rhs}"));
                    quad_rows += 1;
                }
            }
            for c in 1..=k {
                for j in 1..=dim {
                    bounds_sec.push(format!("c_{c}_{j} free"));
                }
            }
            big_m = ms;
        }
        MiqcpFormat::Hull => {
            // Disaggregated copies with the tighter unit-interval bounds.
            continuous += 2 * k * n * dim + n * k + k * n * dim;
            for i in 1..=n {
                let mut row = String::new();
                push_term(&mut row, 1.0, &format!("d_{i}"));
                for c in 1..=k {
                    push_term(&mut row, -1.0, &format!("dp_{i}_{c}"));
                }
                rows.push(format!("dsum_{i}: {row} = 0"));
            }
            for c in 1..=k {
                for i in 1..=n {
                    for j in 1..=dim {
                        let mut row = String::new();
                        push_term(&mut row, 1.0, &format!("c_{c}_{j}"));
                        push_term(&mut row, -1.0, &format!("cp0_{c}_{i}_{j}"));
                        push_term(&mut row, -1.0, &format!("cp1_{c}_{i}_{j}"));
                        rows.push(format!("csum_{c}_{i}_{j}: {row} = 0"));
                    }
                }
            }
            for i in 1..=n {
                for c in 1..=k {
                    // sum_j (p_ij^2 y_ic - 2 p_ij cp1 + t) - dp_ic <= 0.
                    let mut row = String::new();
                    let psq: f64 = p[i - 1].iter().map(|x| x * x).sum();
                    push_term(&mut row, psq, &format!("y_{i}_{c}"));
                    for j in 1..=dim {
                        push_term(&mut row, -2.0 * p[i - 1][j - 1], &format!("cp1_{c}_{i}_{j}"));
                        push_term(&mut row, 1.0, &format!("t_{c}_{i}_{j}"));
                    }
                    push_term(&mut row, -1.0, &format!("dp_{i}_{c}"));
                    rows.push(format!("dcopy_{i}_{c}: {row} <= 0"));
                }
            }
            for c in 1..=k {
                for i in 1..=n {
                    for j in 1..=dim {
                        rows.push(format!(
                            "cone_{c}_{i}_{j}: [ cp1_{c}_{i}_{j} ^2 - t_{c}_{i}_{j} * y_{i}_{c} ] <= 0"
                        ));
                        quad_rows += 1;
                        // With unit-interval copies only the upper side of the
                        // off-assignment bound survives.
                        rows.push(format!(
                            "off_{c}_{i}_{j}: cp0_{c}_{i}_{j} + y_{i}_{c} <= 1"
                        ));
                    }
                }
            }
            for c in 1..=k {
                for j in 1..=dim {
                    bounds_sec.push(format!("c_{c}_{j} <= 1"));
                }
            }
            for i in 1..=n {
                bounds_sec.push(format!("d_{i} <= 1"));
                for c in 1..=k {
                    bounds_sec.push(format!("dp_{i}_{c} <= 1"));
                }
            }
            for c in 1..=k {
                for i in 1..=n {
                    for j in 1..=dim {
                        bounds_sec.push(format!("cp0_{c}_{i}_{j} <= 1"));
                        bounds_sec.push(format!("cp1_{c}_{i}_{j} <= 1"));
                    }
                }
            }
            big_m = Vec::new();
            bounds = Some((0.0, 1.0));
        }
    }

    for i in 1..=n {
        let terms = (1..=k)
            .map(|c| format!("y_{i}_{c}"))
            .collect::<Vec<_>>()
            .join(" + ");
        rows.push(format!("assign_{i}: {terms} = 1"));
    }
    if opts.symmetry {
        for c in 2..=k {
            rows.push(format!("sym_{c}: c_{}_1 - c_{c}_1 <= 0", c - 1));
        }
    }
    if opts.nonempty {
        for c in 1..=k {
            let terms = (1..=n)
                .map(|i| format!("y_{i}_{c}"))
                .collect::<Vec<_>>()
                .join(" + ");
            rows.push(format!("cover_{c}: {terms} >= 1"));
        }
    }

    let mut text = String::new();
    text.push_str(&format!(
        "\\ clustering model: n={n} k={k} dim={dim} format={format:?}\n"
    ));
    text.push_str("Minimize\n obj: ");
    text.push_str(&obj);
    text.push_str("\nSubject To\n");
    for r in &rows {
        text.push(' ');
        text.push_str(r);
        text.push('\n');
    }
    if !bounds_sec.is_empty() {
        text.push_str("Bounds\n");
        for b in &bounds_sec {
            text.push(' ');
            text.push_str(b);
            text.push('\n');
        }
    }
    text.push_str("Binaries\n ");
    text.push_str(&binaries.join(" "));
    text.push_str("\nEnd\n");

    let stats = ExportStats {
        binaries: binaries.len(),
        continuous,
        linear_rows: rows.len() - quad_rows,
        quad_rows,
    };
    MiqcpExport {
        format,
        text,
        stats,
        big_m,
        bounds,
    }
}

/// Recounts an export's statistics from its emitted text.
pub fn reparse_stats(text: &str) -> ExportStats {
    let mut section = "";
    let mut binaries = 0usize;
    let mut linear_rows = 0usize;
    let mut quad_rows = 0usize;
    let mut names = std::collections::BTreeSet::new();
    for line in text.lines() {
        let t = line.trim();
        match t {
            "Minimize" | "Subject To" | "Bounds" | "Binaries" | "End" => {
                section = t;
                continue;
            }
            _ => {}
        }
        if t.is_empty() || t.starts_with('\\') {
            continue;
        }
        for tok in t.split_whitespace() {
            let tok = tok.trim_end_matches(':');
            if tok
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic())
                && tok.contains('_')
            {
                names.insert(tok.to_string());
            }
        }
        match section {
            "Subject To" => {
                if t.contains('[') {
                    quad_rows += 1;
                } else {
                    linear_rows += 1;
                }
            }
            "Binaries" => binaries += t.split_whitespace().count(),
            _ => {}
        }
    }
    // Row names share the variable token shape; subtract them along with the
    // binaries to get the continuous count.
    let row_names = linear_rows + quad_rows;
    ExportStats {
        binaries,
        continuous: names.len() - binaries - row_names,
        linear_rows,
        quad_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> KMeansProblem {
        KMeansProblem::new(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 1.0],
            ],
            1,
        )
        .unwrap()
    }

    // Three tight blobs in the unit square, four points each.
    fn blobs() -> Vec<Vec<f64>> {
        let centers = [[0.1, 0.1], [0.9, 0.15], [0.5, 0.9]];
        let mut pts = Vec::new();
        for c in centers {
            for (dx, dy) in [(0.0, 0.0), (0.02, 0.01), (-0.01, 0.02), (0.01, -0.02)] {
                pts.push(vec![c[0] + dx, c[1] + dy]);
            }
        }
        pts
    }

    fn brute_force_sse(points: &[Vec<f64>], k: usize) -> f64 {
        fn rec(points: &[Vec<f64>], k: usize, i: usize, assign: &mut Vec<usize>, used: usize, best: &mut f64) {
            if i == points.len() {
                let (_, sse) = centroids_and_sse(points, assign, k);
                if sse < *best {
                    *best = sse;
                }
                return;
            }
            for c in 0..=used.min(k - 1) {
                assign[i] = c;
                rec(points, k, i + 1, assign, used.max(c + 1).min(k), best);
            }
        }
        let mut best = f64::INFINITY;
        rec(points, k, 0, &mut vec![0; points.len()], 0, &mut best);
        best
    }

    #[test]
    fn one_cluster_of_the_unit_square_is_four_half_distances() {
        // Mean (0.5, 0.5); each corner sits at squared distance 0.5.
        let ex = exact_kmeans(&square(), &Limits::default()).unwrap();
        assert_eq!(ex.status, ExactStatus::Optimal);
        assert!((ex.ub - 2.0).abs() < 1e-12);
        assert_eq!(ex.lb, ex.ub);
        assert!(ex
            .clustering
            .centroids[0]
            .iter()
            .all(|&x| (x - 0.5).abs() < 1e-12));
    }

    #[test]
    fn as_many_clusters_as_points_costs_nothing() {
        let pts = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.3]];
        let problem = KMeansProblem::new(pts, 3).unwrap();
        let ex = exact_kmeans(&problem, &Limits::default()).unwrap();
        assert_eq!(ex.ub, 0.0);
        let cl = lloyd(&problem, 5, 42);
        assert!(cl.sse < 1e-18);
    }

    #[test]
    fn lloyd_recovers_separated_blobs() {
        let problem = KMeansProblem::new(blobs(), 3).unwrap();
        let cl = lloyd(&problem, 30, 7);
        let ex = exact_kmeans(&problem, &Limits::default()).unwrap();
        assert!((cl.sse - ex.ub).abs() < 1e-9, "{} vs {}", cl.sse, ex.ub);
        // The recovered grouping separates the three generating blobs.
        for chunk in cl.assignment.chunks(4) {
            assert!(chunk.iter().all(|&a| a == chunk[0]));
        }
    }

    #[test]
    fn exact_search_matches_brute_force_on_seeded_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for case in 0..15 {
            let n = rng.gen_range(4..=8);
            let k = rng.gen_range(1..=3usize.min(n));
            let d = rng.gen_range(1..=3);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.gen::<f64>()).collect())
                .collect();
            let oracle = brute_force_sse(&pts, k);
            let problem = KMeansProblem::new(pts, k).unwrap();
            let ex = exact_kmeans(&problem, &Limits::default()).unwrap();
            assert!(
                (ex.ub - oracle).abs() < 1e-9,
                "case {case}: {} vs {oracle}",
                ex.ub
            );
        }
    }

    #[test]
    fn node_cap_still_returns_a_valid_sandwich() {
        let problem = KMeansProblem::new(blobs(), 3).unwrap();
        let full = exact_kmeans(&problem, &Limits::default()).unwrap();
        let cut = exact_kmeans(
            &problem,
            &Limits {
                nodes: Some(5),
                ..Limits::default()
            },
        )
        .unwrap();
        assert_eq!(cut.status, ExactStatus::TimeLimit);
        assert!(cut.lb <= full.ub + 1e-12);
        assert!(cut.lb <= cut.ub + 1e-12);
    }

    #[test]
    fn the_cap_is_enforced() {
        let pts = vec![vec![0.5]; EXACT_POINT_CAP + 1];
        let problem = KMeansProblem::new(pts, 1).unwrap();
        assert!(matches!(
            exact_kmeans(&problem, &Limits::default()),
            Err(KMeansError::CapExceeded { .. })
        ));
    }

    #[test]
    fn deterministic_dealing_follows_the_warm_clusters() {
        let mk = |assignment: Vec<usize>| Clustering {
            centroids: vec![vec![0.0]; 2],
            sse: 0.0,
            assignment,
        };
        // Two clusters of two points each, dealt to two blocks.
        let p = det_partition(&mk(vec![0, 0, 1, 1]), 2);
        assert_eq!(p.blocks, vec![vec![0, 2], vec![1, 3]]);
        // The counter persists across the cluster boundary.
        let p = det_partition(&mk(vec![0, 0, 0, 1]), 2);
        assert_eq!(p.blocks, vec![vec![0, 2], vec![1, 3]]);
        // One block swallows everything.
        let p = det_partition(&mk(vec![0, 0, 1, 1]), 1);
        assert_eq!(p.blocks, vec![vec![0, 1, 2, 3]]);
        // Block sizes never differ by more than one.
        let p = det_partition(&mk(vec![0, 1, 0, 1, 0, 1, 0]), 3);
        let sizes: Vec<usize> = p.blocks.iter().map(|b| b.len()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn random_dealing_is_seeded_and_sized() {
        let a = rand_partition(5, 2, 3);
        let sizes: Vec<usize> = a.blocks.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        assert_eq!(a, rand_partition(5, 2, 3));
        a.validate_for(5).unwrap();
        let b = rand_partition(5, 2, 4);
        b.validate_for(5).unwrap();
    }

    #[test]
    fn partition_bound_stays_below_the_exact_optimum() {
        let pts: Vec<Vec<f64>> = blobs().into_iter().take(8).collect();
        let problem = KMeansProblem::new(pts, 2).unwrap();
        let full = exact_kmeans(&problem, &Limits::default()).unwrap();
        let warm = lloyd(&problem, 10, 5);
        for partition in [
            det_partition(&warm, 2),
            rand_partition(problem.n(), 4, 9),
            SubproblemPartition {
                blocks: vec![(0..problem.n()).collect()],
            },
            SubproblemPartition {
                blocks: (0..problem.n()).map(|i| vec![i]).collect(),
            },
        ] {
            let bound = kmeans_lower_bound(&problem, &partition, &Limits::default()).unwrap();
            assert!(bound.lb >= -1e-12);
            assert!(bound.lb <= full.ub + 1e-9, "{} vs {}", bound.lb, full.ub);
        }
        // The whole-instance block reproduces the optimum exactly.
        let one = kmeans_lower_bound(
            &problem,
            &SubproblemPartition {
                blocks: vec![(0..problem.n()).collect()],
            },
            &Limits::default(),
        )
        .unwrap();
        assert!((one.lb - full.ub).abs() < 1e-12);
        // Single-point blocks know nothing.
        let zero = kmeans_lower_bound(
            &problem,
            &SubproblemPartition {
                blocks: (0..problem.n()).map(|i| vec![i]).collect(),
            },
            &Limits::default(),
        )
        .unwrap();
        assert_eq!(zero.lb, 0.0);
    }

    #[test]
    fn gap_fractions() {
        assert_eq!(gap_closed(0.0, 3.0).unwrap(), 0.0);
        assert_eq!(gap_closed(3.0, 3.0).unwrap(), 1.0);
        assert!((gap_closed(2.93, 3.2).unwrap() - 0.916).abs() < 1e-3);
        assert!(gap_closed(3.2, 3.0).is_err());
    }

    #[test]
    fn pairwise_constants_on_a_collinear_trio() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]];
        assert_eq!(pairwise_m(&pts), vec![9.0, 4.0, 9.0]);
    }

    #[test]
    fn bigm_export_counts_are_forced_by_the_shape() {
        let problem = KMeansProblem::new(
            vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 0.2]],
            2,
        )
        .unwrap();
        let ex = export_miqcp(&problem, MiqcpFormat::BigM, &ExportOpts::default());
        assert_eq!(ex.stats.binaries, 6);
        assert_eq!(ex.stats.quad_rows, 6);
        assert_eq!(ex.stats.linear_rows, 3);
        assert_eq!(ex.big_m.len(), 3);
        assert_eq!(reparse_stats(&ex.text), ex.stats);
    }

    #[test]
    fn hull_export_has_its_cones_and_reparses() {
        let problem = KMeansProblem::new(
            vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 0.2]],
            2,
        )
        .unwrap();
        let opts = ExportOpts {
            symmetry: true,
            nonempty: true,
        };
        let ex = export_miqcp(&problem, MiqcpFormat::Hull, &opts);
        // One rotated cone per cluster-point-coordinate triple.
        assert_eq!(ex.stats.quad_rows, 2 * 3 * 2);
        assert!(ex.text.contains("cone_1_1_1: [ cp1_1_1_1 ^2 - t_1_1_1 * y_1_1 ] <= 0"));
        assert!(ex.text.contains("sym_2: c_1_1 - c_2_1 <= 0"));
        assert!(ex.text.contains("cover_2:"));
        assert_eq!(ex.bounds, Some((0.0, 1.0)));
        assert_eq!(reparse_stats(&ex.text), ex.stats);
        // The big-M side also reparses with the optional rows on.
        let bm = export_miqcp(&problem, MiqcpFormat::BigM, &opts);
        assert_eq!(reparse_stats(&bm.text), bm.stats);
    }
}
