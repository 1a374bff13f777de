//! Lower-bound machinery for conic-quadratic disjunctive programs:
//! Lagrangian decomposition with projected subgradient ascent, partition
//! relaxations solved by branch-and-bound over disjunct selections, and an
//! exact k-means decomposition that yields certified clustering bounds.

pub mod dual;
pub mod gen;
pub mod kernels;
pub mod kmeans;
pub mod model;
pub mod partition;

pub(crate) mod la;

pub use dual::{
    dual_ascent, evaluate_lr, AscentConfig, DisjunctionMin, DualError, DualTrace, LrValue,
    StepRule, TracePoint,
};
pub use kmeans::{
    det_partition, exact_kmeans, export_miqcp, gap_closed, kmeans_lower_bound, lloyd, pairwise_m,
    rand_partition, reparse_stats, BlockBound, Clustering, ExactKMeans, ExactStatus, ExportOpts,
    ExportStats, KMeansBound, KMeansError, KMeansProblem, MiqcpExport, MiqcpFormat,
    SubproblemPartition, EXACT_POINT_CAP,
};
pub use kernels::{
    disjunct_linmin, ellipsoid_geometry, feasibility, linmin_intersection, linmin_single,
    EllipsoidGeometry, Feasibility, KernelError, KernelStatus, SolveResult, SolverConfig,
};
pub use partition::{
    bound_chain_report, partition_relaxation, pseudo_basic_step_pair, solve_block,
    solve_to_optimality, BlockSolve, BlockStatus, BoundReport, ChainOpts, GlobalSolve, Limits,
    PairBound, PartitionBound, PartitionError,
};
pub use model::{
    project_multipliers, BoxBounds, Cqdp, Disjunct, Disjunction, DisjunctionId, ModelError,
    MultiplierSet, Partition, QForm, QuadConstraint, ValidationReport, Violation,
};
