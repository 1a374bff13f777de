//! Problem representation: conic-quadratic disjunctive programs of the form
//! min cᵀx over the intersection of disjunctions, each disjunction a union of
//! disjuncts, each disjunct an intersection of convex quadratic constraints
//! xᵀQx + bᵀx + γ ≤ 0 with Q symmetric positive definite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

use crate::la;

/// Default cap on the disjunct count produced by [`Cqdp::to_dnf`].
pub const DEFAULT_MAX_DNF: usize = 10_000;

/// Feasibility slack used when deciding that a point satisfies a constraint.
pub const MEMBERSHIP_TOL: f64 = 1e-7;

/// Stable integer label of a disjunction, preserved across basic steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DisjunctionId(pub u32);

impl fmt::Display for DisjunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Symmetric positive-definite quadratic form; diagonal storage is the common
/// case and keeps the closed-form paths allocation-light.
#[derive(Debug, Clone, PartialEq)]
pub enum QForm {
    Diag(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

impl QForm {
    pub fn dim(&self) -> usize {
        match self {
            QForm::Diag(d) => d.len(),
            QForm::Dense(m) => m.len(),
        }
    }

    /// Q v.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            QForm::Diag(d) => d.iter().zip(v).map(|(q, x)| q * x).collect(),
            QForm::Dense(m) => m.iter().map(|row| la::dot(row, v)).collect(),
        }
    }

    /// vᵀ Q v.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            QForm::Diag(d) => d.iter().zip(v).map(|(q, x)| q * x * x).sum(),
            QForm::Dense(m) => m
                .iter()
                .zip(v)
                .map(|(row, x)| x * la::dot(row, v))
                .sum(),
        }
    }

    /// Solves Q x = rhs; `None` when Q is not positive definite.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        match self {
            QForm::Diag(d) => {
                if d.iter().any(|&q| q <= 0.0) {
                    return None;
                }
                Some(d.iter().zip(rhs).map(|(q, x)| x / q).collect())
            }
            QForm::Dense(m) => {
                let n = m.len();
                let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
                let chol = mat.cholesky()?;
                let sol = chol.solve(&DVector::from_column_slice(rhs));
                Some(sol.as_slice().to_vec())
            }
        }
    }

    #[allow(clippy::needless_range_loop)]
    pub fn is_symmetric(&self) -> bool {
        match self {
            QForm::Diag(_) => true,
            QForm::Dense(m) => {
                let n = m.len();
                if m.iter().any(|row| row.len() != n) {
                    return false;
                }
                for i in 0..n {
                    for j in (i + 1)..n {
                        let scale = 1.0f64.max(m[i][j].abs()).max(m[j][i].abs());
                        if (m[i][j] - m[j][i]).abs() > 1e-12 * scale {
                            return false;
                        }
                    }
                }
                true
            }
        }
    }

    pub fn is_pd(&self) -> bool {
        match self {
            QForm::Diag(d) => !d.is_empty() && d.iter().all(|&q| q > 0.0 && q.is_finite()),
            QForm::Dense(m) => {
                if m.is_empty() || !self.is_symmetric() {
                    return false;
                }
                let n = m.len();
                let mat = DMatrix::from_fn(n, n, |i, j| m[i][j]);
                mat.cholesky().is_some()
            }
        }
    }
}

/// One convex quadratic constraint g(x) = xᵀQx + bᵀx + γ ≤ 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub q: QForm,
    pub b: Vec<f64>,
    pub gamma: f64,
}

impl QuadConstraint {
    pub fn new(q: QForm, b: Vec<f64>, gamma: f64) -> Self {
        QuadConstraint { q, b, gamma }
    }

    /// Constraint value g(v); feasible points have g(v) ≤ 0.
    pub fn g(&self, v: &[f64]) -> f64 {
        self.q.quad_form(v) + la::dot(&self.b, v) + self.gamma
    }

    /// Gradient ∇g(v) = 2Qv + b.
    pub fn grad(&self, v: &[f64]) -> Vec<f64> {
        let mut g = self.q.mul_vec(v);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi = 2.0 * *gi + bi;
        }
        g
    }
}

/// Intersection of quadratic constraints together with the labels of the
/// original (disjunction, disjunct) pairs it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Disjunct {
    pub constraints: Vec<QuadConstraint>,
    pub provenance: Vec<(DisjunctionId, usize)>,
}

/// Union of disjuncts, labelled by a stable id.
#[derive(Debug, Clone, PartialEq)]
pub struct Disjunction {
    pub id: DisjunctionId,
    pub disjuncts: Vec<Disjunct>,
}

impl Disjunction {
    /// Builds a disjunction where disjunct `i` carries provenance `(id, i)`.
    pub fn new(id: DisjunctionId, disjuncts: Vec<Vec<QuadConstraint>>) -> Self {
        let disjuncts = disjuncts
            .into_iter()
            .enumerate()
            .map(|(i, constraints)| Disjunct {
                constraints,
                provenance: vec![(id, i)],
            })
            .collect();
        Disjunction { id, disjuncts }
    }
}

/// Global variable bounds lo ≤ x ≤ hi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxBounds {
    /// Symmetric box [-r, r]ⁿ.
    pub fn symmetric(n: usize, r: f64) -> Self {
        BoxBounds {
            lo: vec![-r; n],
            hi: vec![r; n],
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }
}

/// A conic-quadratic disjunctive program: min cᵀx over the intersection of
/// `disjunctions`, optionally restricted to a global box.
#[derive(Debug, Clone, PartialEq)]
pub struct Cqdp {
    pub n: usize,
    pub c: Vec<f64>,
    pub box_bounds: Option<BoxBounds>,
    pub disjunctions: Vec<Disjunction>,
}

/// One structural defect found by [`Cqdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Every invariant violation in a program, in a stable traversal order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown disjunction id {0}")]
    UnknownDisjunction(DisjunctionId),
    #[error("basic step requires two distinct disjunctions, got {0} twice")]
    SameDisjunction(DisjunctionId),
    #[error("all {0} combined disjuncts are empty; the program is infeasible")]
    AllPairsEmpty(usize),
    #[error("DNF would need {needed} disjuncts, cap is {cap}")]
    DnfTooLarge { needed: usize, cap: usize },
    #[error("program has no disjunctions")]
    NoDisjunctions,
    #[error("multiplier projection needs at least one block")]
    EmptyMultipliers,
    #[error("dimension mismatch at {0}")]
    DimensionMismatch(String),
    #[error("invalid program:\n{0}")]
    Invalid(ValidationReport),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Cqdp {
    pub fn new(
        n: usize,
        c: Vec<f64>,
        box_bounds: Option<BoxBounds>,
        disjunctions: Vec<Disjunction>,
    ) -> Self {
        Cqdp {
            n,
            c,
            box_bounds,
            disjunctions,
        }
    }

    /// Number of disjunctions.
    pub fn k(&self) -> usize {
        self.disjunctions.len()
    }

    pub fn ids(&self) -> Vec<DisjunctionId> {
        self.disjunctions.iter().map(|d| d.id).collect()
    }

    pub fn disjunction(&self, id: DisjunctionId) -> Option<&Disjunction> {
        self.disjunctions.iter().find(|d| d.id == id)
    }

    /// True when `v` lies in the feasible set: inside the box and, for every
    /// disjunction, inside at least one disjunct (all constraints within `tol`).
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        if let Some(bb) = &self.box_bounds {
            if !bb.contains(v, tol) {
                return false;
            }
        }
        self.disjunctions.iter().all(|d| {
            d.disjuncts
                .iter()
                .any(|dj| dj.constraints.iter().all(|c| c.g(v) <= tol))
        })
    }

    /// Collects every structural defect: dimension mismatches, non-PD or
    /// asymmetric Q, inverted box bounds, empty lists, duplicate ids, and
    /// malformed provenance.
    pub fn validate(&self) -> ValidationReport {
        let mut out = Vec::new();
        let mut push = |location: String, message: String| {
            out.push(Violation { location, message });
        };

        if self.c.len() != self.n {
            push(
                "objective".into(),
                format!("c has length {}, expected n = {}", self.c.len(), self.n),
            );
        }
        if let Some(bb) = &self.box_bounds {
            if bb.lo.len() != self.n || bb.hi.len() != self.n {
                push(
                    "box".into(),
                    format!(
                        "bounds have lengths {}/{}, expected n = {}",
                        bb.lo.len(),
                        bb.hi.len(),
                        self.n
                    ),
                );
            }
            for (j, (l, h)) in bb.lo.iter().zip(&bb.hi).enumerate() {
                if l > h {
                    push(format!("box[{j}]"), format!("lo {l} exceeds hi {h}"));
                }
            }
        }
        if self.disjunctions.is_empty() {
            push("disjunctions".into(), "program has no disjunctions".into());
        }
        let mut seen = BTreeSet::new();
        for d in &self.disjunctions {
            let dloc = format!("disjunction {}", d.id);
            if !seen.insert(d.id) {
                push(dloc.clone(), "duplicate id".into());
            }
            if d.disjuncts.is_empty() {
                push(dloc.clone(), "has no disjuncts".into());
            }
            for (i, dj) in d.disjuncts.iter().enumerate() {
                let djloc = format!("{dloc} / disjunct {i}");
                if dj.constraints.is_empty() {
                    push(djloc.clone(), "has no constraints".into());
                }
                if dj.provenance.is_empty() {
                    push(djloc.clone(), "has empty provenance".into());
                }
                let mut prov = BTreeSet::new();
                for p in &dj.provenance {
                    if !prov.insert(*p) {
                        push(
                            djloc.clone(),
                            format!("duplicate provenance entry ({}, {})", p.0, p.1),
                        );
                    }
                }
                for (ci, con) in dj.constraints.iter().enumerate() {
                    let cloc = format!("{djloc} / constraint {ci}");
                    if con.b.len() != self.n {
                        push(
                            cloc.clone(),
                            format!("b has length {}, expected {}", con.b.len(), self.n),
                        );
                    }
                    if con.q.dim() != self.n {
                        push(
                            cloc.clone(),
                            format!("Q has dimension {}, expected {}", con.q.dim(), self.n),
                        );
                    } else if !con.q.is_symmetric() {
                        push(cloc.clone(), "Q is not symmetric".into());
                    } else if !con.q.is_pd() {
                        push(cloc.clone(), "Q is not positive definite".into());
                    }
                    if !con.gamma.is_finite() {
                        push(cloc, format!("gamma is not finite: {}", con.gamma));
                    }
                }
            }
        }
        ValidationReport { violations: out }
    }

    /// Replaces disjunctions `a` and `b` with their pairwise-intersection
    /// disjunction (outer loop over `a`'s disjuncts, inner over `b`'s). The
    /// merged disjunction keeps the smaller of the two ids and the position of
    /// the earlier operand. With `prune_empty`, disjuncts whose intersection
    /// is certified empty within the program box are dropped; undecided ones
    /// are kept.
    pub fn apply_basic_step(
        &self,
        a: DisjunctionId,
        b: DisjunctionId,
        prune_empty: bool,
    ) -> Result<Cqdp, ModelError> {
        if a == b {
            return Err(ModelError::SameDisjunction(a));
        }
        let pa = self
            .disjunctions
            .iter()
            .position(|d| d.id == a)
            .ok_or(ModelError::UnknownDisjunction(a))?;
        let pb = self
            .disjunctions
            .iter()
            .position(|d| d.id == b)
            .ok_or(ModelError::UnknownDisjunction(b))?;

        let da = &self.disjunctions[pa];
        let db = &self.disjunctions[pb];
        let total = da.disjuncts.len() * db.disjuncts.len();
        let mut merged = Vec::with_capacity(total);
        for di in &da.disjuncts {
            for dj in &db.disjuncts {
                let mut constraints = di.constraints.clone();
                constraints.extend(dj.constraints.iter().cloned());
                if prune_empty {
                    let feas = crate::kernels::feasibility(
                        &constraints,
                        self.box_bounds.as_ref(),
                        &crate::kernels::SolverConfig::default(),
                    );
                    if matches!(feas, crate::kernels::Feasibility::Empty) {
                        continue;
                    }
                }
                let mut provenance = di.provenance.clone();
                provenance.extend(dj.provenance.iter().cloned());
                provenance.sort_unstable();
                merged.push(Disjunct {
                    constraints,
                    provenance,
                });
            }
        }
        if merged.is_empty() {
            return Err(ModelError::AllPairsEmpty(total));
        }

        let new_disjunction = Disjunction {
            id: a.min(b),
            disjuncts: merged,
        };
        let (keep_pos, drop_pos) = (pa.min(pb), pa.max(pb));
        let mut disjunctions = Vec::with_capacity(self.k() - 1);
        for (pos, d) in self.disjunctions.iter().enumerate() {
            if pos == keep_pos {
                disjunctions.push(new_disjunction.clone());
            } else if pos != drop_pos {
                disjunctions.push(d.clone());
            }
        }
        Ok(Cqdp {
            n: self.n,
            c: self.c.clone(),
            box_bounds: self.box_bounds.clone(),
            disjunctions,
        })
    }

    /// Folds all disjunctions into one by sequential basic steps with pruning.
    /// A single-disjunction program is returned unchanged. Errors when the
    /// unpruned disjunct count would exceed `max_disjuncts`.
    pub fn to_dnf(&self, max_disjuncts: usize) -> Result<Disjunction, ModelError> {
        if self.disjunctions.is_empty() {
            return Err(ModelError::NoDisjunctions);
        }
        if self.k() == 1 {
            return Ok(self.disjunctions[0].clone());
        }
        let mut needed: usize = 1;
        for d in &self.disjunctions {
            needed = needed.saturating_mul(d.disjuncts.len());
        }
        if needed > max_disjuncts {
            return Err(ModelError::DnfTooLarge {
                needed,
                cap: max_disjuncts,
            });
        }
        let mut cur = self.clone();
        while cur.k() > 1 {
            let a = cur.disjunctions[0].id;
            let b = cur.disjunctions[1].id;
            cur = cur.apply_basic_step(a, b, true)?;
        }
        Ok(cur.disjunctions.into_iter().next().unwrap())
    }
}

/// Multipliers λ_k per disjunction; valid sets satisfy Σ_k λ_k = c.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSet {
    pub lambdas: BTreeMap<DisjunctionId, Vec<f64>>,
}

impl MultiplierSet {
    /// The uniform starting point λ_k = c / K.
    pub fn uniform(program: &Cqdp) -> Self {
        let k = program.k().max(1) as f64;
        let share: Vec<f64> = program.c.iter().map(|ci| ci / k).collect();
        MultiplierSet {
            lambdas: program
                .disjunctions
                .iter()
                .map(|d| (d.id, share.clone()))
                .collect(),
        }
    }

    /// ‖Σ_k λ_k − c‖_∞.
    pub fn sum_deviation_inf(&self, c: &[f64]) -> f64 {
        let mut sum = vec![0.0; c.len()];
        for lam in self.lambdas.values() {
            la::axpy(&mut sum, 1.0, lam);
        }
        sum.iter()
            .zip(c)
            .fold(0.0, |m, (s, ci)| m.max((s - ci).abs()))
    }

    /// Sum of λ_k over a set of disjunction ids.
    pub fn block_sum(&self, block: &[DisjunctionId], n: usize) -> Vec<f64> {
        let mut mu = vec![0.0; n];
        for id in block {
            if let Some(lam) = self.lambdas.get(id) {
                la::axpy(&mut mu, 1.0, lam);
            }
        }
        mu
    }

    pub fn to_json_string(&self) -> String {
        let mirror: BTreeMap<String, &Vec<f64>> = self
            .lambdas
            .iter()
            .map(|(id, v)| (id.to_string(), v))
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "lambdas": mirror })).unwrap()
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Mirror {
            lambdas: BTreeMap<String, Vec<f64>>,
        }
        let m: Mirror = serde_json::from_str(s)?;
        let mut lambdas = BTreeMap::new();
        for (k, v) in m.lambdas {
            let id = k
                .parse::<u32>()
                .map_err(|_| ModelError::DimensionMismatch(format!("multiplier key '{k}'")))?;
            lambdas.insert(DisjunctionId(id), v);
        }
        Ok(MultiplierSet { lambdas })
    }
}

/// Projects raw per-disjunction vectors onto the hyperplane Σ_k λ_k = c by
/// subtracting the average deviation from every block.
pub fn project_multipliers(
    raw: &BTreeMap<DisjunctionId, Vec<f64>>,
    c: &[f64],
) -> Result<MultiplierSet, ModelError> {
    if raw.is_empty() {
        return Err(ModelError::EmptyMultipliers);
    }
    let n = c.len();
    let k = raw.len() as f64;
    let mut dev = vec![0.0; n];
    for (id, v) in raw {
        if v.len() != n {
            return Err(ModelError::DimensionMismatch(format!(
                "multiplier block {id} has length {}, expected {n}",
                v.len()
            )));
        }
        la::axpy(&mut dev, 1.0, v);
    }
    for (d, ci) in dev.iter_mut().zip(c) {
        *d = (*d - ci) / k;
    }
    let lambdas = raw
        .iter()
        .map(|(id, v)| {
            let adj: Vec<f64> = v.iter().zip(&dev).map(|(x, d)| x - d).collect();
            (*id, adj)
        })
        .collect();
    Ok(MultiplierSet { lambdas })
}

/// Grouping of disjunction ids into disjoint blocks; block order is the
/// canonical reduction order for sums.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub blocks: Vec<Vec<DisjunctionId>>,
}

impl Partition {
    /// Sorts ids inside each block; block order is kept as given.
    pub fn new(blocks: Vec<Vec<DisjunctionId>>) -> Self {
        let blocks = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        Partition { blocks }
    }

    pub fn singletons(program: &Cqdp) -> Self {
        Partition {
            blocks: program.ids().into_iter().map(|id| vec![id]).collect(),
        }
    }

    /// The pair `{a, b}` merged, all other disjunctions singleton, blocks
    /// ordered by their smallest id.
    pub fn pair_merge(program: &Cqdp, a: DisjunctionId, b: DisjunctionId) -> Self {
        let mut blocks: Vec<Vec<DisjunctionId>> = vec![{
            let mut p = vec![a.min(b), a.max(b)];
            p.dedup();
            p
        }];
        for id in program.ids() {
            if id != a && id != b {
                blocks.push(vec![id]);
            }
        }
        blocks.sort_by_key(|b| b[0]);
        Partition { blocks }
    }

    /// Number of merges realized, Σ_blocks (|block| − 1).
    pub fn merge_count(&self) -> usize {
        self.blocks.iter().map(|b| b.len().saturating_sub(1)).sum()
    }

    /// Checks that the blocks exactly cover the program's disjunction ids.
    pub fn validate_for(&self, program: &Cqdp) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        for (bi, block) in self.blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(ModelError::DimensionMismatch(format!("empty block {bi}")));
            }
            for id in block {
                if program.disjunction(*id).is_none() {
                    return Err(ModelError::UnknownDisjunction(*id));
                }
                if !seen.insert(*id) {
                    return Err(ModelError::DimensionMismatch(format!(
                        "disjunction {id} appears in more than one block"
                    )));
                }
            }
        }
        if seen.len() != program.k() {
            return Err(ModelError::DimensionMismatch(format!(
                "partition covers {} of {} disjunctions",
                seen.len(),
                program.k()
            )));
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        let blocks: Vec<Vec<u32>> = self
            .blocks
            .iter()
            .map(|b| b.iter().map(|id| id.0).collect())
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "blocks": blocks })).unwrap()
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Mirror {
            blocks: Vec<Vec<u32>>,
        }
        let m: Mirror = serde_json::from_str(s)?;
        Ok(Partition::new(
            m.blocks
                .into_iter()
                .map(|b| b.into_iter().map(DisjunctionId).collect())
                .collect(),
        ))
    }
}

mod schema {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    pub struct InstanceJson {
        pub n: usize,
        pub c: Vec<f64>,
        #[serde(rename = "box", skip_serializing_if = "Option::is_none")]
        pub box_bounds: Option<super::BoxBounds>,
        pub disjunctions: Vec<DisjunctionJson>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct DisjunctionJson {
        pub id: u32,
        pub disjuncts: Vec<DisjunctJson>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct DisjunctJson {
        pub constraints: Vec<ConstraintJson>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct ConstraintJson {
        #[serde(rename = "Q_diag", skip_serializing_if = "Option::is_none")]
        pub q_diag: Option<Vec<f64>>,
        #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
        pub q_dense: Option<Vec<Vec<f64>>>,
        pub b: Vec<f64>,
        pub gamma: f64,
    }
}

impl Cqdp {
    /// Serializes to the instance JSON schema; finite doubles round-trip
    /// bit-exactly. Provenance is not part of the wire format.
    pub fn to_json_string(&self) -> String {
        let mirror = schema::InstanceJson {
            n: self.n,
            c: self.c.clone(),
            box_bounds: self.box_bounds.clone(),
            disjunctions: self
                .disjunctions
                .iter()
                .map(|d| schema::DisjunctionJson {
                    id: d.id.0,
                    disjuncts: d
                        .disjuncts
                        .iter()
                        .map(|dj| schema::DisjunctJson {
                            constraints: dj
                                .constraints
                                .iter()
                                .map(|c| match &c.q {
                                    QForm::Diag(diag) => schema::ConstraintJson {
                                        q_diag: Some(diag.clone()),
                                        q_dense: None,
                                        b: c.b.clone(),
                                        gamma: c.gamma,
                                    },
                                    QForm::Dense(m) => schema::ConstraintJson {
                                        q_diag: None,
                                        q_dense: Some(m.clone()),
                                        b: c.b.clone(),
                                        gamma: c.gamma,
                                    },
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&mirror).unwrap()
    }

    /// Parses and validates an instance; rejects programs with structural
    /// defects, including non-positive-definite Q.
    pub fn from_json_str(s: &str) -> Result<Cqdp, ModelError> {
        let mirror: schema::InstanceJson = serde_json::from_str(s)?;
        let mut disjunctions = Vec::with_capacity(mirror.disjunctions.len());
        for d in mirror.disjunctions {
            let id = DisjunctionId(d.id);
            let mut disjuncts = Vec::with_capacity(d.disjuncts.len());
            for (i, dj) in d.disjuncts.into_iter().enumerate() {
                let mut constraints = Vec::with_capacity(dj.constraints.len());
                for (ci, con) in dj.constraints.into_iter().enumerate() {
                    let q = match (con.q_diag, con.q_dense) {
                        (Some(diag), None) => QForm::Diag(diag),
                        (None, Some(m)) => QForm::Dense(m),
                        _ => {
                            return Err(ModelError::DimensionMismatch(format!(
                                "disjunction {id} / disjunct {i} / constraint {ci}: \
                                 exactly one of Q_diag and Q is required"
                            )))
                        }
                    };
                    constraints.push(QuadConstraint::new(q, con.b, con.gamma));
                }
                disjuncts.push(Disjunct {
                    constraints,
                    provenance: vec![(id, i)],
                });
            }
            disjunctions.push(Disjunction { id, disjuncts });
        }
        let program = Cqdp {
            n: mirror.n,
            c: mirror.c,
            box_bounds: mirror.box_bounds,
            disjunctions,
        };
        let report = program.validate();
        if !report.is_ok() {
            return Err(ModelError::Invalid(report));
        }
        Ok(program)
    }
}
