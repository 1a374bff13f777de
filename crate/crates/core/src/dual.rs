//! Lagrangian relaxation values and projected subgradient ascent.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::kernels::{best_disjunct, KernelError, SolverConfig};
use crate::la;
use crate::model::{project_multipliers, Cqdp, DisjunctionId, ModelError, MultiplierSet};

/// Largest tolerated deviation of summed multipliers from the objective.
pub const SUM_TOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum DualError {
    #[error("multiplier sum deviates from the objective by {0:.3e}")]
    SumViolation(f64),
    #[error("multipliers do not match the program: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Minimum of one decomposed subproblem and where it is attained.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjunctionMin {
    pub value: f64,
    pub argmin: Vec<f64>,
    /// Index of the winning disjunct; ties keep the lowest index.
    pub disjunct: usize,
}

/// Value of the decomposed relaxation at one multiplier set.
#[derive(Debug, Clone, PartialEq)]
pub struct LrValue {
    /// Sum of the per-disjunction minima in ascending id order.
    pub total: f64,
    pub per_disjunction: BTreeMap<DisjunctionId, DisjunctionMin>,
}

/// Evaluates the decomposed relaxation: for every disjunction k, the minimum
/// of lambda_k' v over (union of disjuncts) intersected with the box.
pub fn evaluate_lr(
    program: &Cqdp,
    multipliers: &MultiplierSet,
    cfg: &SolverConfig,
) -> Result<LrValue, DualError> {
    let dev = multipliers.sum_deviation_inf(&program.c);
    if dev > SUM_TOL {
        return Err(DualError::SumViolation(dev));
    }
    if multipliers.lambdas.len() != program.k() {
        return Err(DualError::Mismatch(format!(
            "{} multiplier blocks for {} disjunctions",
            multipliers.lambdas.len(),
            program.k()
        )));
    }
    let mut per = BTreeMap::new();
    for dj in &program.disjunctions {
        let lam = multipliers
            .lambdas
            .get(&dj.id)
            .ok_or_else(|| DualError::Mismatch(format!("no multiplier for disjunction {}", dj.id)))?;
        if lam.len() != program.n {
            return Err(DualError::Mismatch(format!(
                "multiplier for disjunction {} has length {}",
                dj.id,
                lam.len()
            )));
        }
        let (idx, res) = best_disjunct(lam, &dj.disjuncts, program.box_bounds.as_ref(), cfg)?;
        per.insert(
            dj.id,
            DisjunctionMin {
                value: res.value,
                argmin: res.argmin,
                disjunct: idx,
            },
        );
    }
    // BTreeMap iteration gives the ascending-id reduction order.
    let total = per.values().map(|m| m.value).sum();
    Ok(LrValue {
        total,
        per_disjunction: per,
    })
}

/// Step-size rule for the subgradient ascent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// a / (b + t) with a = ‖c‖ / √n and b = 10.
    Diminishing,
    /// (upper_bound − current) / ‖subgradient‖²; stops once the bound is hit.
    Polyak { upper_bound: f64 },
}

#[derive(Debug, Clone)]
pub struct AscentConfig {
    pub max_iter: usize,
    pub step: StepRule,
    /// Stop once the projected subgradient norm falls below this.
    pub tol: f64,
    /// Optional warm start; projected onto the multiplier hyperplane first.
    pub start: Option<MultiplierSet>,
    pub solver: SolverConfig,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            max_iter: 2000,
            step: StepRule::Diminishing,
            tol: 1e-9,
            start: None,
            solver: SolverConfig::default(),
        }
    }
}

/// One recorded ascent iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub value: f64,
    /// Step size applied after this evaluation (0 on the final iterate).
    pub step: f64,
}

/// Ascent history plus the best multipliers found.
#[derive(Debug, Clone)]
pub struct DualTrace {
    pub best_value: f64,
    pub best_multipliers: MultiplierSet,
    pub iterates: Vec<TracePoint>,
}

impl DualTrace {
    /// CSV with one row per iterate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,value,step\n");
        for p in &self.iterates {
            writeln!(out, "{},{},{}", p.iteration, p.value, p.step).unwrap();
        }
        out
    }
}

/// Maximizes the decomposed relaxation over multipliers summing to c by
/// projected subgradient ascent from lambda_k = c / K (or a warm start).
pub fn dual_ascent(program: &Cqdp, cfg: &AscentConfig) -> Result<DualTrace, DualError> {
    let n = program.n;
    let k = program.k();
    if k == 0 {
        return Err(DualError::Mismatch("program has no disjunctions".into()));
    }
    let mut lambda = match &cfg.start {
        Some(ms) => project_multipliers(&ms.lambdas, &program.c)?.lambdas,
        None => MultiplierSet::uniform(program).lambdas,
    };
    let diminishing_a = la::norm2(&program.c) / (n as f64).sqrt();
    let mut best_value = f64::NEG_INFINITY;
    let mut best_multipliers = MultiplierSet {
        lambdas: lambda.clone(),
    };
    let mut iterates = Vec::new();
    for t in 0..cfg.max_iter {
        let ms = MultiplierSet {
            lambdas: lambda.clone(),
        };
        let lr = evaluate_lr(program, &ms, &cfg.solver)?;
        if lr.total > best_value {
            best_value = lr.total;
            best_multipliers = ms;
        }
        // Projected subgradient: each block's argmin minus their average.
        let mut avg = vec![0.0; n];
        for m in lr.per_disjunction.values() {
            la::axpy(&mut avg, 1.0 / k as f64, &m.argmin);
        }
        let mut norm_sq = 0.0;
        for m in lr.per_disjunction.values() {
            norm_sq += m
                .argmin
                .iter()
                .zip(&avg)
                .map(|(v, a)| (v - a) * (v - a))
                .sum::<f64>();
        }
        if norm_sq.sqrt() <= cfg.tol {
            iterates.push(TracePoint {
                iteration: t,
                value: lr.total,
                step: 0.0,
            });
            break;
        }
        let step = match cfg.step {
            StepRule::Diminishing => diminishing_a / (10.0 + t as f64),
            StepRule::Polyak { upper_bound } => {
                let s = (upper_bound - lr.total) / norm_sq;
                if s <= 0.0 {
                    iterates.push(TracePoint {
                        iteration: t,
                        value: lr.total,
                        step: 0.0,
                    });
                    break;
                }
                s
            }
        };
        iterates.push(TracePoint {
            iteration: t,
            value: lr.total,
            step,
        });
        for (id, m) in &lr.per_disjunction {
            la::axpy(lambda.get_mut(id).unwrap(), step, &m.argmin);
        }
        // Re-projection after every step keeps the sum drift at rounding level.
        lambda = project_multipliers(&lambda, &program.c)?.lambdas;
    }
    Ok(DualTrace {
        best_value,
        best_multipliers,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::example_instance;
    use crate::model::{Disjunction, QForm, QuadConstraint};

    fn table_multipliers() -> MultiplierSet {
        let mut lambdas = BTreeMap::new();
        lambdas.insert(DisjunctionId(1), vec![0.200, 0.334]);
        lambdas.insert(DisjunctionId(2), vec![0.0, 0.0]);
        lambdas.insert(DisjunctionId(3), vec![0.0, 0.666]);
        MultiplierSet { lambdas }
    }

    fn unit_disk_program() -> Cqdp {
        let con = QuadConstraint::new(QForm::Diag(vec![1.0, 1.0]), vec![0.0, 0.0], -1.0);
        Cqdp {
            n: 2,
            c: vec![1.0, 0.0],
            box_bounds: None,
            disjunctions: vec![Disjunction::new(DisjunctionId(1), vec![vec![con]])],
        }
    }

    #[test]
    fn lr_on_the_example_matches_hand_geometry() {
        // Hand derivation with the reference multipliers: every winning
        // disjunct is a single ellipse whose free minimum lies in the box, so
        // each block value is lam'center - sqrt(lam' Q^-1 lam) with Q^-1 =
        // diag(1, 4) and unit radius.
        let program = example_instance();
        let lr = evaluate_lr(&program, &table_multipliers(), &SolverConfig::default()).unwrap();

        let norm1 = (0.2f64 * 0.2 + 4.0 * 0.334 * 0.334).sqrt();
        let k1 = &lr.per_disjunction[&DisjunctionId(1)];
        // The (5, 2) ellipse beats the (0, 5) one: 1.668 - norm < 1.67 - norm.
        assert_eq!(k1.disjunct, 1);
        assert!((k1.value - (1.668 - norm1)).abs() < 1e-9);

        // Zero multipliers cost nothing; the tie keeps disjunct 0.
        let k2 = &lr.per_disjunction[&DisjunctionId(2)];
        assert_eq!(k2.disjunct, 0);
        assert!(k2.value.abs() < 1e-12);

        // Both ellipses of disjunction 3 give 0.666 * (3.5 - 2) = 0.999.
        let k3 = &lr.per_disjunction[&DisjunctionId(3)];
        assert_eq!(k3.disjunct, 0);
        assert!((k3.value - 0.999).abs() < 1e-9);

        assert!((lr.total - (1.668 - norm1 + 0.999)).abs() < 1e-9);
        // Published hull value for this instance.
        assert!((lr.total - 1.97).abs() < 0.02);
    }

    #[test]
    fn uniform_multipliers_stay_below_the_hull_value() {
        let program = example_instance();
        let uni = MultiplierSet::uniform(&program);
        let lr = evaluate_lr(&program, &uni, &SolverConfig::default()).unwrap();
        assert!(lr.total <= 1.97 + 1e-9);
    }

    #[test]
    fn sum_violations_are_rejected() {
        let program = example_instance();
        let mut ms = table_multipliers();
        ms.lambdas.get_mut(&DisjunctionId(2)).unwrap()[0] += 0.5;
        let err = evaluate_lr(&program, &ms, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, DualError::SumViolation(d) if (d - 0.5).abs() < 1e-12));
    }

    #[test]
    fn ascent_on_the_example_reaches_the_hull_value() {
        let program = example_instance();
        let trace = dual_ascent(&program, &AscentConfig::default()).unwrap();
        assert!((trace.best_value - 1.97).abs() < 0.02, "{}", trace.best_value);
        // Every iterate respects the multiplier-sum invariant after projection.
        assert!(trace.best_multipliers.sum_deviation_inf(&program.c) <= 1e-9);
        // best_value is the max over the recorded iterates.
        let max = trace
            .iterates
            .iter()
            .map(|p| p.value)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(trace.best_value, max);
    }

    #[test]
    fn warm_start_at_good_multipliers_never_loses_them() {
        let program = example_instance();
        let lr = evaluate_lr(&program, &table_multipliers(), &SolverConfig::default()).unwrap();
        let cfg = AscentConfig {
            max_iter: 50,
            start: Some(table_multipliers()),
            ..AscentConfig::default()
        };
        let trace = dual_ascent(&program, &cfg).unwrap();
        assert!(trace.best_value >= lr.total - 1e-9);
    }

    #[test]
    fn single_disjunction_converges_at_iteration_zero() {
        let program = unit_disk_program();
        let trace = dual_ascent(&program, &AscentConfig::default()).unwrap();
        assert_eq!(trace.iterates.len(), 1);
        assert_eq!(trace.iterates[0].iteration, 0);
        assert_eq!(trace.iterates[0].step, 0.0);
        assert!((trace.best_value - (-1.0)).abs() < 1e-9);
        assert_eq!(
            trace.best_multipliers.lambdas[&DisjunctionId(1)],
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn polyak_steps_converge_quickly_near_the_target() {
        let program = example_instance();
        let cfg = AscentConfig {
            max_iter: 400,
            step: StepRule::Polyak { upper_bound: 1.97 },
            ..AscentConfig::default()
        };
        let trace = dual_ascent(&program, &cfg).unwrap();
        assert!(trace.best_value > 1.90, "{}", trace.best_value);
        // Overshooting targets switch the rule off instead of diverging.
        let stopped = dual_ascent(
            &program,
            &AscentConfig {
                max_iter: 400,
                step: StepRule::Polyak { upper_bound: -10.0 },
                ..AscentConfig::default()
            },
        )
        .unwrap();
        assert_eq!(stopped.iterates.len(), 1);
    }

    #[test]
    fn best_value_is_monotone_in_the_iteration_budget() {
        let program = example_instance();
        let short = dual_ascent(
            &program,
            &AscentConfig {
                max_iter: 100,
                ..AscentConfig::default()
            },
        )
        .unwrap();
        let long = dual_ascent(
            &program,
            &AscentConfig {
                max_iter: 800,
                ..AscentConfig::default()
            },
        )
        .unwrap();
        assert!(long.best_value >= short.best_value - 1e-12);
    }

    #[test]
    fn trace_csv_has_one_row_per_iterate() {
        let program = unit_disk_program();
        let trace = dual_ascent(&program, &AscentConfig::default()).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iteration,value,step"));
        assert_eq!(lines.count(), trace.iterates.len());
    }
}
