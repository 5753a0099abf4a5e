//! Cardinality and degree constraints, instance validation, and the
//! dependency graph that decides which variable orders are compatible.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::relation::{filter, project, JoinQuery, Relation, Tuple, VarId, VarSet};

/// `(A, B, N)` guarded by the hyperedge `guard ⊇ B`: for every assignment
/// of `A`, a guard relation has at most `N` distinct `B`-projections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeConstraint {
    lhs: VarSet,
    rhs: VarSet,
    bound: u64,
    guard: VarSet,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("constraint {0}: A is not a subset of B")]
    LhsNotInRhs(usize),
    #[error("constraint {0}: B is not a subset of its guard")]
    RhsNotInGuard(usize),
    #[error("constraint {0}: bound must be at least 1")]
    ZeroBound(usize),
    #[error("constraint {0}: guard is not a hyperedge")]
    UnknownGuard(usize),
    #[error("constraint {index} mentions variable {var} outside the query")]
    UnknownVariable { index: usize, var: VarId },
    #[error("variable {0} is not covered by any hyperedge")]
    UncoveredVariable(VarId),
}

impl DegreeConstraint {
    /// Checks `A ⊆ B ⊆ guard` and `N ≥ 1`; errors carry index 0.
    pub fn new(
        lhs: VarSet,
        rhs: VarSet,
        bound: u64,
        guard: VarSet,
    ) -> Result<Self, ConstraintError> {
        let c = Self {
            lhs,
            rhs,
            bound,
            guard,
        };
        c.check(0)?;
        Ok(c)
    }

    /// `(∅, e, N)`.
    pub fn cardinality(edge: VarSet, bound: u64) -> Result<Self, ConstraintError> {
        Self::new(VarSet::new(), edge.clone(), bound, edge)
    }

    /// `X → y`, stored as `(X, X ∪ {y}, 1)`.
    pub fn functional_dependency(
        from: VarSet,
        to: VarId,
        guard: VarSet,
    ) -> Result<Self, ConstraintError> {
        let mut rhs = from.clone();
        rhs.insert(to);
        Self::new(from, rhs, 1, guard)
    }

    fn check(&self, index: usize) -> Result<(), ConstraintError> {
        if !self.lhs.is_subset(&self.rhs) {
            return Err(ConstraintError::LhsNotInRhs(index));
        }
        if !self.rhs.is_subset(&self.guard) {
            return Err(ConstraintError::RhsNotInGuard(index));
        }
        if self.bound == 0 {
            return Err(ConstraintError::ZeroBound(index));
        }
        Ok(())
    }

    pub fn lhs(&self) -> &VarSet {
        &self.lhs
    }

    pub fn rhs(&self) -> &VarSet {
        &self.rhs
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    pub fn guard(&self) -> &VarSet {
        &self.guard
    }

    pub fn is_cardinality(&self) -> bool {
        self.lhs.is_empty()
    }

    /// Variables of `B ∖ A`.
    pub fn free_vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.rhs.difference(&self.lhs).copied()
    }
}

/// Degree constraints over a hypergraph `(X, E)`; `X` is `0..var_names.len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintSet {
    var_names: Vec<String>,
    edges: Vec<VarSet>,
    constraints: Vec<DegreeConstraint>,
}

impl ConstraintSet {
    pub fn new(
        var_names: Vec<String>,
        edges: Vec<VarSet>,
        constraints: Vec<DegreeConstraint>,
    ) -> Result<Self, ConstraintError> {
        let n = var_names.len();
        let mut covered = vec![false; n];
        for v in edges.iter().flatten() {
            if v.index() < n {
                covered[v.index()] = true;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(ConstraintError::UncoveredVariable(VarId(i as u32)));
        }
        for (i, c) in constraints.iter().enumerate() {
            c.check(i)?;
            if let Some(&var) = c.guard.iter().find(|v| v.index() >= n) {
                return Err(ConstraintError::UnknownVariable { index: i, var });
            }
            if !edges.contains(&c.guard) {
                return Err(ConstraintError::UnknownGuard(i));
            }
        }
        Ok(Self {
            var_names,
            edges,
            constraints,
        })
    }

    /// Constraint set over the hypergraph of `q` (one edge per distinct
    /// relation variable set).
    pub fn for_query(
        q: &JoinQuery,
        constraints: Vec<DegreeConstraint>,
    ) -> Result<Self, ConstraintError> {
        let mut edges: Vec<VarSet> = Vec::new();
        for r in q.relations() {
            let e = r.var_set();
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
        Self::new(q.var_names().to_vec(), edges, constraints)
    }

    /// One `(∅, e, |R_e|)` per distinct edge, sized by its guard relation.
    pub fn cardinalities_of(q: &JoinQuery) -> Self {
        let mut edges: Vec<VarSet> = Vec::new();
        for r in q.relations() {
            if !edges.contains(&r.var_set()) {
                edges.push(r.var_set());
            }
        }
        let constraints = edges
            .into_iter()
            .map(|e| {
                let (_, r) = guard_relation(q, &e).expect("edge of q");
                DegreeConstraint::cardinality(e, r.len().max(1) as u64).expect("well formed")
            })
            .collect();
        Self::for_query(q, constraints).expect("query hypergraph covers its variables")
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn edges(&self) -> &[VarSet] {
        &self.edges
    }

    pub fn constraints(&self) -> &[DegreeConstraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Edges that carry no cardinality constraint.
    pub fn edges_without_cardinality(&self) -> Vec<&VarSet> {
        self.edges
            .iter()
            .filter(|e| {
                !self
                    .constraints
                    .iter()
                    .any(|c| c.is_cardinality() && &c.guard == *e && &c.rhs == *e)
            })
            .collect()
    }

    /// First variable lying in no `B ∖ A`; the covering program is
    /// infeasible exactly when one exists.
    pub fn uncovered_variable(&self) -> Option<VarId> {
        let mut covered = vec![false; self.num_vars()];
        for c in &self.constraints {
            for v in c.free_vars() {
                covered[v.index()] = true;
            }
        }
        covered.iter().position(|c| !c).map(|i| VarId(i as u32))
    }

    pub(crate) fn from_parts_unchecked(
        var_names: Vec<String>,
        edges: Vec<VarSet>,
        constraints: Vec<DegreeConstraint>,
    ) -> Self {
        Self {
            var_names,
            edges,
            constraints,
        }
    }
}

/// First relation of `q` whose variable set equals `guard`.
pub fn guard_relation<'q>(q: &'q JoinQuery, guard: &VarSet) -> Option<(usize, &'q Relation)> {
    q.relations()
        .iter()
        .enumerate()
        .find(|(_, r)| r.vars().iter().copied().eq(guard.iter().copied()))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckOutcome {
    /// `at` is an `A`-assignment reaching `max_degree` (absent on empty relations).
    Pass {
        max_degree: u64,
        at: Option<Tuple>,
    },
    Fail {
        max_degree: u64,
        witness: Tuple,
    },
    NoGuardRelation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintCheck {
    pub index: usize,
    pub outcome: CheckOutcome,
}

impl ConstraintCheck {
    pub fn passed(&self) -> bool {
        matches!(self.outcome, CheckOutcome::Pass { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(ConstraintCheck::passed)
    }
}

/// Largest `|R[τ]|_B|` over the `A`-assignments `τ` occurring in `r`, with
/// the first assignment reaching it.
pub fn max_degree(r: &Relation, lhs: &VarSet, rhs: &VarSet) -> (u64, Option<Tuple>) {
    let mut best: (u64, Option<Tuple>) = (0, None);
    for tau in project(r, lhs).tuples() {
        let deg = project(&filter(r, &tau), rhs).len() as u64;
        if best.1.is_none() || deg > best.0 {
            best = (deg, Some(tau));
        }
    }
    best
}

/// Checks every constraint against its guard relation in `q`.
pub fn validate(q: &JoinQuery, cs: &ConstraintSet) -> ValidationReport {
    let checks = cs
        .constraints
        .iter()
        .enumerate()
        .map(|(index, c)| {
            let outcome = match guard_relation(q, &c.guard) {
                None => CheckOutcome::NoGuardRelation,
                Some((_, r)) => {
                    let (max_degree, at) = max_degree(r, &c.lhs, &c.rhs);
                    if max_degree <= c.bound {
                        CheckOutcome::Pass { max_degree, at }
                    } else {
                        CheckOutcome::Fail {
                            max_degree,
                            witness: at.expect("a failing degree has an assignment"),
                        }
                    }
                }
            };
            ConstraintCheck { index, outcome }
        })
        .collect();
    ValidationReport { checks }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DependencyGraph {
    num_vars: usize,
    edges: BTreeSet<(VarId, VarId)>,
}

impl DependencyGraph {
    pub fn edges(&self) -> &BTreeSet<(VarId, VarId)> {
        &self.edges
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    fn successors(&self) -> Vec<Vec<VarId>> {
        let mut succ = vec![Vec::new(); self.num_vars];
        for &(u, v) in &self.edges {
            succ[u.index()].push(v);
        }
        succ
    }
}

/// Edge `u → v` whenever some constraint has `u ∈ A` and `v ∈ B ∖ A`.
pub fn dependency_graph(cs: &ConstraintSet) -> DependencyGraph {
    let mut edges = BTreeSet::new();
    for c in &cs.constraints {
        for &u in &c.lhs {
            for v in c.free_vars() {
                edges.insert((u, v));
            }
        }
    }
    DependencyGraph {
        num_vars: cs.num_vars(),
        edges,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("dependency graph has a cycle through {}", .names.join(" -> "))]
pub struct CyclicDependency {
    pub cycle: Vec<VarId>,
    pub names: Vec<String>,
}

/// Topological sort of the dependency graph, smallest variable name first
/// among the available ones.
pub fn compatible_order(cs: &ConstraintSet) -> Result<Vec<VarId>, CyclicDependency> {
    let g = dependency_graph(cs);
    let succ = g.successors();
    let mut indegree = vec![0usize; g.num_vars];
    for &(_, v) in &g.edges {
        indegree[v.index()] += 1;
    }
    let name = |v: VarId| cs.var_names[v.index()].as_str();
    let mut ready: BTreeMap<(&str, VarId), ()> = BTreeMap::new();
    for (i, &d) in indegree.iter().enumerate() {
        if d == 0 {
            let v = VarId(i as u32);
            ready.insert((name(v), v), ());
        }
    }
    let mut order = Vec::with_capacity(g.num_vars);
    while let Some(((_, v), ())) = ready.pop_first() {
        order.push(v);
        for &w in &succ[v.index()] {
            indegree[w.index()] -= 1;
            if indegree[w.index()] == 0 {
                ready.insert((name(w), w), ());
            }
        }
    }
    if order.len() == g.num_vars {
        return Ok(order);
    }
    let cycle = find_cycle(&g.edges, &indegree);
    Err(CyclicDependency {
        names: cycle.iter().map(|&v| name(v).to_owned()).collect(),
        cycle,
    })
}

/// A cycle among the vertices left with positive in-degree after Kahn's
/// algorithm, rotated to start at its smallest vertex. Every such vertex
/// keeps a remaining predecessor, so walking predecessors must revisit one.
fn find_cycle(edges: &BTreeSet<(VarId, VarId)>, indegree: &[usize]) -> Vec<VarId> {
    let alive = |v: VarId| indegree[v.index()] > 0;
    let mut pred: Vec<Option<VarId>> = vec![None; indegree.len()];
    for &(u, v) in edges {
        if alive(u) && alive(v) && pred[v.index()].is_none() {
            pred[v.index()] = Some(u);
        }
    }
    let start = (0..indegree.len())
        .map(|i| VarId(i as u32))
        .find(|&v| alive(v))
        .expect("a remaining vertex exists");
    let mut seen: BTreeMap<VarId, usize> = BTreeMap::new();
    let mut path = Vec::new();
    let mut v = start;
    while !seen.contains_key(&v) {
        seen.insert(v, path.len());
        path.push(v);
        v = pred[v.index()].expect("remaining vertices keep a remaining predecessor");
    }
    let mut cycle = path.split_off(seen[&v]);
    cycle.reverse();
    let min_at = cycle
        .iter()
        .enumerate()
        .min_by_key(|&(_, &x)| x)
        .map_or(0, |(i, _)| i);
    cycle.rotate_left(min_at);
    cycle
}

/// Whether every dependency edge `u → v` has `u` before `v` in `order`.
pub fn check_compatible(cs: &ConstraintSet, order: &[VarId]) -> bool {
    let mut pos = vec![usize::MAX; cs.num_vars()];
    for (i, v) in order.iter().enumerate() {
        if let Some(p) = pos.get_mut(v.index()) {
            *p = i;
        }
    }
    dependency_graph(cs)
        .edges
        .iter()
        .all(|&(u, v)| pos[u.index()] < pos[v.index()])
}
