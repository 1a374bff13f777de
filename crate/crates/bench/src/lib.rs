//! Pinned fixtures for the criterion benches so every run measures
//! identical work.

use pbskit_core::gen::{example_instance, gen_cqdp, gen_points, GenSpec};
use pbskit_core::Cqdp;

/// The two-variable worked example with three disjunctions.
pub fn worked_example() -> Cqdp {
    example_instance()
}

/// Seeded six-variable program with five disjunctions of three disjuncts.
pub fn medium_program() -> Cqdp {
    let mut spec = GenSpec::new(6, 5, 3, 42);
    spec.ranges.c_lo = -2.0;
    spec.ranges.c_hi = 2.0;
    gen_cqdp(&spec).unwrap()
}

/// Seeded planar points drawn from three tight blobs.
pub fn blob_points(n: usize) -> Vec<Vec<f64>> {
    gen_points(n, 2, 3, 0.05, 9).points
}
