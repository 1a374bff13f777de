//! Partition relaxations over disjunction blocks: branch-and-bound block
//! solves, pair-merge bound improvements, full optimization, and the bound
//! chain report.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dual::{dual_ascent, evaluate_lr, AscentConfig, DualError, SUM_TOL};
use crate::kernels::{
    best_disjunct, disjunct_linmin, linmin_box, linmin_intersection, KernelError, KernelStatus,
    SolverConfig,
};
use crate::model::{Cqdp, DisjunctionId, ModelError, MultiplierSet, Partition};

#[derive(Debug, thiserror::Error)]
pub enum PartitionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("bound chain violated: {what} ({lhs} vs {rhs})")]
    ChainViolation { what: String, lhs: f64, rhs: f64 },
}

/// Work budget for a block solve; `None` means unlimited.
#[derive(Debug, Clone, Copy, Default)]
pub struct Limits {
    pub time: Option<Duration>,
    /// Cap on subproblem solves inside one block.
    pub nodes: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockStatus {
    Optimal,
    TimeLimit,
    Infeasible,
}

/// Result of minimizing mu' v over the intersection of a block's
/// disjunctions (one disjunct chosen per disjunction).
#[derive(Debug, Clone)]
pub struct BlockSolve {
    pub block: Vec<DisjunctionId>,
    pub mu: Vec<f64>,
    /// Valid lower bound on the block optimum, also on early termination.
    pub value: f64,
    /// Objective of the best selection found (+inf when none).
    pub incumbent_value: f64,
    pub incumbent_point: Option<Vec<f64>>,
    /// Winning disjunct index per disjunction at the incumbent.
    pub chosen: BTreeMap<DisjunctionId, usize>,
    pub status: BlockStatus,
    pub nodes_explored: u64,
}

/// Block solves for a full partition and their ordered total.
#[derive(Debug, Clone)]
pub struct PartitionBound {
    pub partition: Partition,
    pub blocks: Vec<BlockSolve>,
    pub total: f64,
    pub wall_time_s: f64,
}

/// Bound improvement from merging one pair of disjunctions.
#[derive(Debug, Clone)]
pub struct PairBound {
    /// Partition-relaxation total minus the plain relaxation value.
    pub delta_lb: f64,
    pub detail: PartitionBound,
}

/// Outcome of the trivial single-block partition, i.e. a global solve.
#[derive(Debug, Clone)]
pub struct GlobalSolve {
    /// Global optimum when Optimal, else a valid lower bound.
    pub value: f64,
    pub point: Option<Vec<f64>>,
    pub status: BlockStatus,
}

/// The four-bound inequality chain around one partition.
#[derive(Debug, Clone)]
pub struct BoundReport {
    /// Global optimum; absent when the guarded solve did not finish.
    pub z_star: Option<f64>,
    /// Dual value of the program after actually merging each block.
    pub z_post_bs_dual: Option<f64>,
    pub l_partition: f64,
    pub lr_plain: f64,
    /// Dual ascent value on the original program.
    pub lr_hull: Option<f64>,
    /// |l_partition − lr_hull| / |z_post_bs_dual − lr_hull|, 1 when the
    /// denominator vanishes.
    pub improvement_fraction: Option<f64>,
    pub detail: PartitionBound,
}

struct Node {
    bound: f64,
    seq: u64,
    choices: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.bound.total_cmp(&other.bound) == Ordering::Equal && self.seq == other.seq
    }
}
impl Eq for Node {}
impl Ord for Node {
    // Reversed so the max-heap pops the smallest bound, then insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.seq.cmp(&self.seq))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn to_block_status(s: KernelStatus) -> BlockStatus {
    match s {
        KernelStatus::Optimal => BlockStatus::Optimal,
        KernelStatus::Infeasible => BlockStatus::Infeasible,
        KernelStatus::IterationLimit => BlockStatus::TimeLimit,
    }
}

/// Minimizes mu' v over the intersection of the block's disjunctions by
/// best-first branch-and-bound over disjunct selections.
pub fn solve_block(
    program: &Cqdp,
    block: &[DisjunctionId],
    mu: &[f64],
    limits: &Limits,
    cfg: &SolverConfig,
) -> Result<BlockSolve, PartitionError> {
    if block.is_empty() {
        return Err(ModelError::DimensionMismatch("empty block".into()).into());
    }
    if mu.len() != program.n {
        return Err(ModelError::DimensionMismatch(format!(
            "mu has length {}, program has n = {}",
            mu.len(),
            program.n
        ))
        .into());
    }
    let mut ids = block.to_vec();
    ids.sort_unstable();
    let disjunctions: Vec<_> = ids
        .iter()
        .map(|id| {
            program
                .disjunction(*id)
                .ok_or(ModelError::UnknownDisjunction(*id))
        })
        .collect::<Result<_, _>>()?;
    let bb = program.box_bounds.as_ref();

    // One disjunction needs no branching; route through the same helper the
    // relaxation evaluator uses so singleton blocks reproduce it bit-exactly.
    if ids.len() == 1 {
        let (idx, res) = best_disjunct(mu, &disjunctions[0].disjuncts, bb, cfg)?;
        let status = to_block_status(res.status);
        let mut chosen = BTreeMap::new();
        let (value, incumbent_value, incumbent_point) = match status {
            BlockStatus::Infeasible => (f64::INFINITY, f64::INFINITY, None),
            BlockStatus::Optimal => {
                chosen.insert(ids[0], idx);
                (res.value, res.value, Some(res.argmin))
            }
            BlockStatus::TimeLimit => {
                chosen.insert(ids[0], idx);
                (res.bound(), res.value, Some(res.argmin))
            }
        };
        return Ok(BlockSolve {
            block: ids,
            mu: mu.to_vec(),
            value,
            incumbent_value,
            incumbent_point,
            chosen,
            status,
            nodes_explored: disjunctions[0].disjuncts.len() as u64,
        });
    }

    // Children are tried cheapest-first by their single-disjunct minima.
    let mut child_order: Vec<Vec<usize>> = Vec::with_capacity(ids.len());
    for dj in &disjunctions {
        let mut vals = Vec::with_capacity(dj.disjuncts.len());
        for (i, d) in dj.disjuncts.iter().enumerate() {
            vals.push((i, disjunct_linmin(mu, d, bb, cfg)?.value));
        }
        vals.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        child_order.push(vals.into_iter().map(|(i, _)| i).collect());
    }

    let start = Instant::now();
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: match bb {
            Some(bb) => linmin_box(mu, bb).value,
            None => f64::NEG_INFINITY,
        },
        seq,
        choices: Vec::new(),
    });
    let mut nodes_explored = 0u64;
    let mut incumbent_value = f64::INFINITY;
    let mut incumbent_point = None;
    let mut chosen = BTreeMap::new();
    let mut timed_out = false;

    while let Some(node) = heap.peek() {
        let over_nodes = limits.nodes.is_some_and(|cap| nodes_explored >= cap);
        let over_time = limits.time.is_some_and(|t| start.elapsed() >= t);
        if over_nodes || over_time {
            timed_out = true;
            break;
        }
        if node.bound >= incumbent_value {
            // Best remaining bound cannot improve the incumbent: done.
            heap.clear();
            break;
        }
        let node = heap.pop().unwrap();
        let depth = node.choices.len();
        let mut cons = Vec::new();
        for (d, &choice) in node.choices.iter().enumerate() {
            cons.extend_from_slice(&disjunctions[d].disjuncts[choice].constraints);
        }
        for &choice in &child_order[depth] {
            let mut child_cons = cons.clone();
            child_cons.extend_from_slice(&disjunctions[depth].disjuncts[choice].constraints);
            let res = linmin_intersection(mu, &child_cons, bb, cfg)?;
            nodes_explored += 1;
            if res.status == KernelStatus::Infeasible {
                continue;
            }
            let mut choices = node.choices.clone();
            choices.push(choice);
            if depth + 1 == ids.len() {
                if res.value < incumbent_value {
                    incumbent_value = res.value;
                    incumbent_point = Some(res.argmin);
                    chosen = ids.iter().copied().zip(choices.iter().copied()).collect();
                }
            } else if res.bound() < incumbent_value {
                seq += 1;
                heap.push(Node {
                    bound: res.bound(),
                    seq,
                    choices,
                });
            }
        }
    }

    let open_min = heap
        .iter()
        .map(|n| n.bound)
        .fold(f64::INFINITY, f64::min);
    let value = incumbent_value.min(open_min);
    let status = if timed_out {
        BlockStatus::TimeLimit
    } else if incumbent_point.is_none() {
        BlockStatus::Infeasible
    } else {
        BlockStatus::Optimal
    };
    Ok(BlockSolve {
        block: ids,
        mu: mu.to_vec(),
        value,
        incumbent_value,
        incumbent_point,
        chosen,
        status,
        nodes_explored,
    })
}

/// Solves every block with its summed multipliers; the total is reduced in
/// block order so thread count cannot change the result.
pub fn partition_relaxation(
    program: &Cqdp,
    multipliers: &MultiplierSet,
    partition: &Partition,
    limits: &Limits,
    cfg: &SolverConfig,
) -> Result<PartitionBound, PartitionError> {
    partition.validate_for(program)?;
    let dev = multipliers.sum_deviation_inf(&program.c);
    if dev > SUM_TOL {
        return Err(DualError::SumViolation(dev).into());
    }
    let start = Instant::now();
    let blocks: Vec<BlockSolve> = partition
        .blocks
        .par_iter()
        .map(|block| {
            let mu = multipliers.block_sum(block, program.n);
            solve_block(program, block, &mu, limits, cfg)
        })
        .collect::<Result<_, _>>()?;
    let total = blocks.iter().map(|b| b.value).sum();
    Ok(PartitionBound {
        partition: partition.clone(),
        blocks,
        total,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Bound improvement guaranteed by merging disjunctions `k` and `l`, holding
/// the multipliers fixed.
pub fn pseudo_basic_step_pair(
    program: &Cqdp,
    multipliers: &MultiplierSet,
    k: DisjunctionId,
    l: DisjunctionId,
    limits: &Limits,
    cfg: &SolverConfig,
) -> Result<PairBound, PartitionError> {
    if k == l {
        return Err(ModelError::SameDisjunction(k).into());
    }
    let partition = Partition::pair_merge(program, k, l);
    let lr = evaluate_lr(program, multipliers, cfg)?;
    let detail = partition_relaxation(program, multipliers, &partition, limits, cfg)?;
    Ok(PairBound {
        delta_lb: detail.total - lr.total,
        detail,
    })
}

/// Global solve through the single-block partition with mu = c.
pub fn solve_to_optimality(
    program: &Cqdp,
    limits: &Limits,
    cfg: &SolverConfig,
) -> Result<GlobalSolve, PartitionError> {
    let ids = program.ids();
    let bs = solve_block(program, &ids, &program.c, limits, cfg)?;
    Ok(GlobalSolve {
        value: bs.value,
        point: bs.incumbent_point,
        status: bs.status,
    })
}

/// Options for `bound_chain_report`.
#[derive(Debug, Clone, Default)]
pub struct ChainOpts {
    pub limits: Limits,
    pub ascent: AscentConfig,
    /// Skip the global solve on instances too large for it.
    pub skip_z_star: bool,
}

fn chain_tol(cfg: &SolverConfig, scale: f64) -> f64 {
    1e-6 + cfg.gap_tol * (1.0 + scale.abs())
}

/// Computes the relaxation-value chain around one partition: plain
/// relaxation, partition relaxation, dual value after actually merging each
/// block, and optionally the global optimum. A chain violation beyond
/// tolerance is an error, never a silent report.
pub fn bound_chain_report(
    program: &Cqdp,
    multipliers: &MultiplierSet,
    partition: &Partition,
    opts: &ChainOpts,
) -> Result<BoundReport, PartitionError> {
    let cfg = &opts.ascent.solver;
    let lr_plain = evaluate_lr(program, multipliers, cfg)?.total;
    let detail = partition_relaxation(program, multipliers, partition, &opts.limits, cfg)?;
    let l_partition = detail.total;

    // Realize each merged block by actual basic steps, pruning empty pieces.
    let mut post = program.clone();
    let mut post_lambdas = BTreeMap::new();
    for block in &partition.blocks {
        let target = block[0];
        for id in &block[1..] {
            post = post.apply_basic_step(target, *id, true)?;
        }
        post_lambdas.insert(target, multipliers.block_sum(block, program.n));
    }
    let post_ms = MultiplierSet {
        lambdas: post_lambdas,
    };
    let post_trace = dual_ascent(
        &post,
        &AscentConfig {
            start: Some(post_ms),
            ..opts.ascent.clone()
        },
    )?;
    let z_post_bs_dual = post_trace.best_value;

    let hull_trace = dual_ascent(
        program,
        &AscentConfig {
            start: Some(multipliers.clone()),
            ..opts.ascent.clone()
        },
    )?;
    let lr_hull = hull_trace.best_value;

    let z_star = if opts.skip_z_star {
        None
    } else {
        let gs = solve_to_optimality(program, &opts.limits, cfg)?;
        (gs.status == BlockStatus::Optimal).then_some(gs.value)
    };

    if let Some(z) = z_star {
        if z + chain_tol(cfg, z) < z_post_bs_dual {
            return Err(PartitionError::ChainViolation {
                what: "optimum >= post-merge dual value".into(),
                lhs: z,
                rhs: z_post_bs_dual,
            });
        }
    }
    if z_post_bs_dual + chain_tol(cfg, z_post_bs_dual) < l_partition {
        return Err(PartitionError::ChainViolation {
            what: "post-merge dual value >= partition relaxation".into(),
            lhs: z_post_bs_dual,
            rhs: l_partition,
        });
    }
    if l_partition + chain_tol(cfg, l_partition) < lr_plain {
        return Err(PartitionError::ChainViolation {
            what: "partition relaxation >= plain relaxation".into(),
            lhs: l_partition,
            rhs: lr_plain,
        });
    }

    let den = (z_post_bs_dual - lr_hull).abs();
    let improvement_fraction = if den < 1e-9 {
        1.0
    } else {
        (l_partition - lr_hull).abs() / den
    };
    Ok(BoundReport {
        z_star,
        z_post_bs_dual: Some(z_post_bs_dual),
        l_partition,
        lr_plain,
        lr_hull: Some(lr_hull),
        improvement_fraction: Some(improvement_fraction),
        detail,
    })
}
