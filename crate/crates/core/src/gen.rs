//! Seeded generation of random programs, random partitions, clustering point
//! sets, and the small two-variable example used throughout the tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::kernels::ellipsoid_geometry;
use crate::model::{
    BoxBounds, Cqdp, Disjunction, DisjunctionId, Partition, QForm, QuadConstraint,
};

/// Attempts allowed when resampling an empty disjunct.
const RESAMPLE_BUDGET: u64 = 1000;

/// Coefficient ranges for random programs.
#[derive(Debug, Clone)]
pub struct GenRanges {
    pub c_lo: f64,
    pub c_hi: f64,
    pub q_lo: f64,
    pub q_hi: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub g_lo: f64,
    pub g_hi: f64,
    pub box_lo: f64,
    pub box_hi: f64,
}

impl Default for GenRanges {
    fn default() -> Self {
        GenRanges {
            c_lo: -1000.0,
            c_hi: 1000.0,
            q_lo: 0.1,
            q_hi: 1.0,
            b_lo: -1.0,
            b_hi: 1.0,
            g_lo: 0.0,
            g_hi: 2.0,
            box_lo: -100.0,
            box_hi: 100.0,
        }
    }
}

/// Shape and seed of a random program.
#[derive(Debug, Clone)]
pub struct GenSpec {
    pub n: usize,
    /// Number of disjunctions.
    pub k: usize,
    /// Disjuncts per disjunction.
    pub d: usize,
    pub seed: u64,
    pub ranges: GenRanges,
}

impl GenSpec {
    pub fn new(n: usize, k: usize, d: usize, seed: u64) -> Self {
        GenSpec {
            n,
            k,
            d,
            seed,
            ranges: GenRanges::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generation spec: {0}")]
    BadSpec(String),
    #[error("resample budget exhausted for disjunction {0}, disjunct {1}")]
    ResampleBudget(usize, usize),
    #[error("no block count satisfies min_merges {min_merges} and max_block {max_block} for k {k}")]
    BadPartitionOptions {
        k: usize,
        min_merges: usize,
        max_block: usize,
    },
}

// Draw streams are split by purpose so adding draws in one place never shifts
// another: stream id = kind << 40 | major << 20 | minor, with kind 1 for the
// objective, 2 for disjunct coefficients (minor = disjunct * 1024 + attempt),
// 3 for partitions, 4 for point sets, 5 and 6 for clustering helpers.
pub(crate) fn stream_rng(seed: u64, kind: u64, major: u64, minor: u64) -> ChaCha8Rng {
    debug_assert!(kind < 16 && major < (1 << 20) && minor < (1 << 20));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind << 40 | major << 20 | minor);
    rng
}

/// Generates a random program: diagonal single-constraint disjuncts with
/// coefficients drawn uniformly from the configured ranges, the objective
/// from [c_lo, c_hi]^n, and the global box. Empty disjuncts are resampled.
pub fn gen_cqdp(spec: &GenSpec) -> Result<Cqdp, GenError> {
    if spec.n == 0 || spec.k == 0 || spec.d == 0 {
        return Err(GenError::BadSpec("n, k, d must be positive".into()));
    }
    if spec.ranges.q_lo <= 0.0 {
        return Err(GenError::BadSpec("q_lo must be positive".into()));
    }
    if spec.ranges.box_lo >= spec.ranges.box_hi {
        return Err(GenError::BadSpec("box_lo must be below box_hi".into()));
    }
    if spec.d > 1024 {
        return Err(GenError::BadSpec("at most 1024 disjuncts per disjunction".into()));
    }
    let r = &spec.ranges;
    let mut rng = stream_rng(spec.seed, 1, 0, 0);
    let c: Vec<f64> = (0..spec.n).map(|_| rng.gen_range(r.c_lo..=r.c_hi)).collect();
    let mut disjunctions = Vec::with_capacity(spec.k);
    for k in 0..spec.k {
        let mut disjuncts = Vec::with_capacity(spec.d);
        for i in 0..spec.d {
            let mut found = None;
            for attempt in 0..RESAMPLE_BUDGET {
                let mut rng = stream_rng(spec.seed, 2, k as u64, i as u64 * 1024 + attempt);
                let q: Vec<f64> = (0..spec.n).map(|_| rng.gen_range(r.q_lo..=r.q_hi)).collect();
                let b: Vec<f64> = (0..spec.n).map(|_| rng.gen_range(r.b_lo..=r.b_hi)).collect();
                let gamma = rng.gen_range(r.g_lo..=r.g_hi);
                let con = QuadConstraint::new(QForm::Diag(q), b, gamma);
                let geo = ellipsoid_geometry(&con).expect("generated Q is positive definite");
                if geo.radius_sq >= 0.0 {
                    found = Some(con);
                    break;
                }
            }
            match found {
                Some(con) => disjuncts.push(vec![con]),
                None => return Err(GenError::ResampleBudget(k, i)),
            }
        }
        disjunctions.push(Disjunction::new(DisjunctionId(k as u32 + 1), disjuncts));
    }
    Ok(Cqdp::new(
        spec.n,
        c,
        Some(BoxBounds {
            lo: vec![r.box_lo; spec.n],
            hi: vec![r.box_hi; spec.n],
        }),
        disjunctions,
    ))
}

/// Uniformly shuffles the ids 1..=k and cuts them into consecutive blocks so
/// that at least `min_merges` merges happen and no block exceeds `max_block`.
pub fn gen_random_partition(
    k: usize,
    min_merges: usize,
    max_block: usize,
    seed: u64,
) -> Result<Partition, GenError> {
    if k == 0 || max_block == 0 || min_merges + 1 > k {
        return Err(GenError::BadPartitionOptions {
            k,
            min_merges,
            max_block,
        });
    }
    // Block count p must satisfy: p >= ceil(k / max_block) (size cap) and
    // p <= k - min_merges (merge quota, since merges = k - p).
    let p_min = k.div_ceil(max_block.min(k));
    let p_max = k - min_merges;
    if p_min > p_max {
        return Err(GenError::BadPartitionOptions {
            k,
            min_merges,
            max_block,
        });
    }
    let mut rng = stream_rng(seed, 3, k as u64, 0);
    let p = rng.gen_range(p_min..=p_max);
    // Start from singleton blocks and grow random ones below the cap.
    let mut sizes = vec![1usize; p];
    let mut remaining = k - p;
    while remaining > 0 {
        let idx = rng.gen_range(0..p);
        if sizes[idx] < max_block {
            sizes[idx] += 1;
            remaining -= 1;
        }
    }
    let mut ids: Vec<u32> = (1..=k as u32).collect();
    ids.shuffle(&mut rng);
    let mut blocks = Vec::with_capacity(p);
    let mut at = 0;
    for size in sizes {
        blocks.push(
            ids[at..at + size]
                .iter()
                .map(|&id| DisjunctionId(id))
                .collect(),
        );
        at += size;
    }
    Ok(Partition::new(blocks))
}

/// The two-variable worked example: minimize 0.2 x1 + x2 over three
/// disjunctions of flat ellipses (x - cx)^2 + (y - cy)^2 / 4 <= 1 in the box
/// [-20, 20]^2. Disjunction 1 is centered at (0,5) and (5,2), disjunction 2
/// at (0,2) and (5,5), disjunction 3 at (0,3.5) and (5,3.5).
pub fn example_instance() -> Cqdp {
    let ellipse = |cx: f64, cy: f64| {
        QuadConstraint::new(
            QForm::Diag(vec![1.0, 0.25]),
            vec![-2.0 * cx, -0.5 * cy],
            cx * cx + 0.25 * cy * cy - 1.0,
        )
    };
    let centers = [
        [(0.0, 5.0), (5.0, 2.0)],
        [(0.0, 2.0), (5.0, 5.0)],
        [(0.0, 3.5), (5.0, 3.5)],
    ];
    let disjunctions = centers
        .iter()
        .enumerate()
        .map(|(k, pair)| {
            Disjunction::new(
                DisjunctionId(k as u32 + 1),
                pair.iter().map(|&(x, y)| vec![ellipse(x, y)]).collect(),
            )
        })
        .collect();
    Cqdp::new(
        2,
        vec![0.2, 1.0],
        Some(BoxBounds::symmetric(2, 20.0)),
        disjunctions,
    )
}

/// Points in the unit hypercube for clustering experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub points: Vec<Vec<f64>>,
}

impl PointSet {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    /// One row per point, 17-significant-digit decimals, comma separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<PointSet, GenError> {
        let mut points = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse()).collect();
            match row {
                Ok(p) => points.push(p),
                Err(e) => return Err(GenError::BadSpec(format!("csv line {}: {e}", ln + 1))),
            }
        }
        Ok(PointSet { points })
    }
}

/// Samples `k_true` isotropic Gaussian blobs with uniform-random centers in
/// the unit cube, truncates draws at four standard deviations, and min-max
/// normalizes each coordinate into [0, 1]. Point i belongs to blob i mod
/// k_true. Deterministic per seed.
pub fn gen_points(n: usize, dim: usize, k_true: usize, spread: f64, seed: u64) -> PointSet {
    assert!(k_true >= 1 && n >= k_true, "need n >= k_true >= 1");
    let mut centers = Vec::with_capacity(k_true);
    for k in 0..k_true {
        let mut rng = stream_rng(seed, 4, k as u64, 0);
        centers.push((0..dim).map(|_| rng.gen::<f64>()).collect::<Vec<f64>>());
    }
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(seed, 4, k_true as u64 + 1, i as u64);
        let center = &centers[i % k_true];
        let p: Vec<f64> = center
            .iter()
            .map(|ci| {
                let z: f64 = rng.sample(StandardNormal);
                ci + spread * z.clamp(-4.0, 4.0)
            })
            .collect();
        points.push(p);
    }
    // Min-max normalize each coordinate; a degenerate range maps to 0.5.
    for j in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &points {
            lo = lo.min(p[j]);
            hi = hi.max(p[j]);
        }
        let range = hi - lo;
        for p in &mut points {
            p[j] = if range > 0.0 { (p[j] - lo) / range } else { 0.5 };
        }
    }
    PointSet { points }
}
