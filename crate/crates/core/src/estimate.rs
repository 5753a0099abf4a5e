//! Upper-bound estimators on the answers below a trace-tree node.
//!
//! Each term is a projection `R'_δ = R_δ|B_δ` with a weight `ω_δ` and a
//! static bound `N_δ`. Below a node `τ` a term contributes its live count
//! `|R'_δ[τ]|` once all of `A_δ` is bound and `N_δ` before that; the
//! estimate is `∏ contribution^ω`. The AGM estimator is the case `A = ∅`
//! with one term per relation.

use num_traits::Float;
use thiserror::Error;

use crate::constraints::{
    check_compatible, compatible_order, guard_relation, ConstraintSet, CyclicDependency,
};
use crate::index::{IndexedQuery, OrderError, PrefixState};
use crate::lp::{card_program, degree_program, LpError, LpScalar};
use crate::relation::{project, Code, JoinQuery, VarId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EstimatorError {
    #[error(transparent)]
    Cover(#[from] LpError),
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error(transparent)]
    Cyclic(#[from] CyclicDependency),
    #[error("order is not compatible with the degree constraints")]
    IncompatibleOrder,
    #[error("constraint {0} has no guard relation in the query")]
    NoGuardRelation(usize),
    #[error("expected {expected} weights, got {got}")]
    WrongLength { expected: usize, got: usize },
}

#[derive(Clone, Debug)]
struct Term<F> {
    weight: F,
    ln_bound: F,
    /// Prefix length from which every variable of `A` is bound.
    activation_depth: usize,
}

/// Immutable data shared by every walk over one query and order.
#[derive(Clone, Debug)]
pub struct EstimatorContext<F> {
    query: IndexedQuery,
    /// The projections `R'_δ`, indexed like `terms`.
    projections: IndexedQuery,
    terms: Vec<Term<F>>,
}

fn to_float<F: Float, T: LpScalar>(t: &T) -> F {
    F::from(t.to_f64().unwrap_or(f64::NAN)).expect("representable weight")
}

impl<F: Float> EstimatorContext<F> {
    /// AGM estimator with one weight per relation of `q`, checked to be a
    /// fractional edge cover.
    pub fn agm<T: LpScalar>(
        q: &JoinQuery,
        order: &[VarId],
        weights: &[T],
    ) -> Result<Self, EstimatorError> {
        let edges: Vec<_> = q.relations().iter().map(|r| r.var_set()).collect();
        let lp = card_program(q.num_vars(), &edges, &vec![1; edges.len()])?;
        lp.check(weights)?;
        Self::agm_unchecked(q, order, weights.iter().map(to_float).collect())
    }

    /// AGM estimator without the coverage check. With too little weight
    /// the result is no longer an upper bound.
    pub fn agm_unchecked(
        q: &JoinQuery,
        order: &[VarId],
        weights: Vec<F>,
    ) -> Result<Self, EstimatorError> {
        if weights.len() != q.relations().len() {
            return Err(EstimatorError::WrongLength {
                expected: q.relations().len(),
                got: weights.len(),
            });
        }
        let terms = q
            .relations()
            .iter()
            .zip(weights)
            .map(|(r, weight)| Term {
                weight,
                ln_bound: F::from(r.len().max(1)).unwrap().ln(),
                activation_depth: 0,
            })
            .collect();
        Ok(Self {
            query: IndexedQuery::new(q, order)?,
            projections: IndexedQuery::new(q, order)?,
            terms,
        })
    }

    /// Polymatroid estimator with one weight per constraint of `cs`.
    /// `order` must be compatible with `cs`, and every constraint needs a
    /// guard relation in `q`.
    pub fn polymatroid<T: LpScalar>(
        q: &JoinQuery,
        cs: &ConstraintSet,
        order: &[VarId],
        weights: &[T],
    ) -> Result<Self, EstimatorError> {
        degree_program(cs)?.check(weights)?;
        compatible_order(cs)?;
        if !check_compatible(cs, order) {
            return Err(EstimatorError::IncompatibleOrder);
        }
        Self::polymatroid_unchecked(q, cs, order, weights.iter().map(to_float).collect())
    }

    /// Polymatroid estimator without coverage or order checks.
    pub fn polymatroid_unchecked(
        q: &JoinQuery,
        cs: &ConstraintSet,
        order: &[VarId],
        weights: Vec<F>,
    ) -> Result<Self, EstimatorError> {
        if weights.len() != cs.len() {
            return Err(EstimatorError::WrongLength {
                expected: cs.len(),
                got: weights.len(),
            });
        }
        let query = IndexedQuery::new(q, order)?;
        let mut position = vec![0; q.num_vars()];
        for (i, v) in order.iter().enumerate() {
            position[v.index()] = i;
        }
        let mut projected = Vec::with_capacity(cs.len());
        let mut terms = Vec::with_capacity(cs.len());
        for (i, (c, weight)) in cs.constraints().iter().zip(weights).enumerate() {
            let (_, guard) =
                guard_relation(q, c.guard()).ok_or(EstimatorError::NoGuardRelation(i))?;
            projected.push(project(guard, c.rhs()));
            terms.push(Term {
                weight,
                ln_bound: F::from(c.bound()).unwrap().ln(),
                activation_depth: c
                    .lhs()
                    .iter()
                    .map(|v| position[v.index()] + 1)
                    .max()
                    .unwrap_or(0),
            });
        }
        let projections = IndexedQuery::new(&q.replace_relations(projected), order)?;
        Ok(Self {
            query,
            projections,
            terms,
        })
    }

    pub fn index(&self) -> &IndexedQuery {
        &self.query
    }

    pub fn num_vars(&self) -> usize {
        self.query.num_vars()
    }

    pub fn weights(&self) -> Vec<F> {
        self.terms.iter().map(|t| t.weight).collect()
    }

    pub fn walker(&self) -> TraceWalker<'_, F> {
        TraceWalker::new(self)
    }

    /// Estimate at the root.
    pub fn root_estimate(&self) -> F {
        self.walker().estimate()
    }
}

/// A position in the trace tree with its cursors.
#[derive(Clone, Debug)]
pub struct TraceWalker<'c, F> {
    ctx: &'c EstimatorContext<F>,
    query: PrefixState<'c>,
    projections: PrefixState<'c>,
}

impl<'c, F: Float> TraceWalker<'c, F> {
    pub fn new(ctx: &'c EstimatorContext<F>) -> Self {
        Self {
            ctx,
            query: PrefixState::new(&ctx.query),
            projections: PrefixState::new(&ctx.projections),
        }
    }

    pub fn context(&self) -> &'c EstimatorContext<F> {
        self.ctx
    }

    pub fn depth(&self) -> usize {
        self.query.depth()
    }

    pub fn is_full(&self) -> bool {
        self.query.is_full()
    }

    pub fn is_consistent(&self) -> bool {
        self.query.is_consistent()
    }

    /// Codes of the bound prefix in order positions.
    pub fn prefix(&self) -> &[Code] {
        self.query.prefix()
    }

    /// Assignment indexed by `VarId`.
    pub fn assignment(&self) -> &[Code] {
        self.query.assignment()
    }

    pub fn domain_size(&self) -> usize {
        self.ctx.query.domain_size()
    }

    pub fn bind(&mut self, value: Code) {
        self.query.bind(value);
        self.projections.bind(value);
    }

    pub fn unbind(&mut self) {
        self.query.unbind();
        self.projections.unbind();
    }

    /// Estimator value at the current node: 0 when inconsistent, exactly 1
    /// when every contributing count is 1.
    pub fn estimate(&self) -> F {
        if !self.is_consistent() {
            return F::zero();
        }
        let depth = self.depth();
        let mut log = F::zero();
        for (i, t) in self.ctx.terms.iter().enumerate() {
            let ln = if depth >= t.activation_depth {
                let count = self.projections.cursor(i).count();
                if count == 0 {
                    return F::zero();
                }
                F::from(count).unwrap().ln()
            } else {
                t.ln_bound
            };
            log = log + t.weight * ln;
        }
        log.exp()
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum<F: Float>(values: impl IntoIterator<Item = F>) -> F {
    let mut sum = F::zero();
    let mut c = F::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c = c + ((sum - t) + v);
        } else {
            c = c + ((v - t) + sum);
        }
        sum = t;
    }
    sum + c
}

/// Relative slack allowed when children sum above their parent.
pub const SUPERADDITIVITY_SLACK: f64 = 1e-9;

/// Outcome of an exhaustive trace-tree check.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimatorReport {
    pub nodes: u64,
    pub answers: u64,
    pub superadditivity_violations: u64,
    /// Largest `(Σ children − parent) / parent` seen, violating or not.
    pub max_relative_excess: f64,
    /// Prefix (order positions) of the worst superadditivity violation.
    pub worst: Option<Vec<Code>>,
    /// Answers whose value is not exactly 1.
    pub answer_violations: u64,
    /// Inconsistent nodes with a nonzero value, or consistent ones with 0.
    pub zero_violations: u64,
    pub root_value: f64,
}

impl EstimatorReport {
    pub fn is_clean(&self) -> bool {
        self.superadditivity_violations == 0
            && self.answer_violations == 0
            && self.zero_violations == 0
    }
}

/// Walks the whole trace tree of `ctx` and checks that its estimator is
/// superadditive, 1 on answers, and 0 exactly on inconsistent nodes.
pub fn verify_estimator<F: Float>(ctx: &EstimatorContext<F>) -> EstimatorReport {
    let mut report = EstimatorReport {
        max_relative_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut w = ctx.walker();
    let root = w.estimate();
    report.root_value = root.to_f64().unwrap_or(f64::NAN);
    visit(&mut w, root, &mut report);
    report
}

fn visit<F: Float>(w: &mut TraceWalker<'_, F>, value: F, report: &mut EstimatorReport) {
    report.nodes += 1;
    if !w.is_consistent() {
        if value != F::zero() {
            report.zero_violations += 1;
        }
        return;
    }
    if value <= F::zero() {
        report.zero_violations += 1;
    }
    if w.is_full() {
        report.answers += 1;
        if value != F::one() {
            report.answer_violations += 1;
        }
        return;
    }
    let mut children = Vec::with_capacity(w.domain_size());
    for d in 0..w.domain_size() as Code {
        w.bind(d);
        children.push(w.estimate());
        w.unbind();
    }
    let sum = compensated_sum(children.iter().copied());
    let excess = ((sum - value) / value).to_f64().unwrap_or(f64::INFINITY);
    if excess > report.max_relative_excess {
        report.max_relative_excess = excess;
    }
    if excess > SUPERADDITIVITY_SLACK {
        report.superadditivity_violations += 1;
        if report.worst.is_none() {
            report.worst = Some(w.prefix().to_vec());
        }
    }
    for (d, child) in children.into_iter().enumerate() {
        w.bind(d as Code);
        visit(w, child, report);
        w.unbind();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarise::{bin_constraints, bin_query};
    use crate::constraints::tests::fd_example;
    use crate::lp::{solve_cover_card, solve_cover_degree, FractionalCover};
    use crate::oracle::nested_loop_join;
    use crate::relation::tests::triangle_example;
    use crate::relation::{encode_instance, RawTable};
    use num_rational::BigRational;

    fn half() -> Vec<BigRational> {
        vec![BigRational::new(1.into(), 2.into()); 3]
    }

    #[test]
    fn agm_on_triangle_example() {
        let q = triangle_example();
        let ctx = EstimatorContext::<f64>::agm(&q, &q.order(), &half()).unwrap();
        let mut w = ctx.walker();
        assert!((w.estimate() - 8.0).abs() < 1e-12);
        w.bind(0);
        assert!((w.estimate() - 2.0).abs() < 1e-12);
        w.bind(0);
        w.bind(3);
        assert_eq!(w.estimate(), 1.0);
        w.unbind();
        w.bind(2);
        assert_eq!(w.estimate(), 0.0);
    }

    #[test]
    fn agm_on_triangle_example_is_a_leaf_estimator() {
        let q = triangle_example();
        let ctx = EstimatorContext::<f64>::agm(&q, &q.order(), &half()).unwrap();
        let report = verify_estimator(&ctx);
        assert!(report.is_clean(), "{report:?}");
        assert_eq!(report.answers, 4);

        let bq = bin_query(&q);
        let border = bq.layout.binarised_order(&q.order());
        let bctx = EstimatorContext::<f64>::agm(&bq.query, &border, &half()).unwrap();
        let report = verify_estimator(&bctx);
        assert!(report.is_clean(), "{report:?}");
        assert!((report.root_value - 8.0).abs() < 1e-12);
    }

    #[test]
    fn halved_weights_break_coverage() {
        let q = triangle_example();
        let quarter = vec![BigRational::new(1.into(), 4.into()); 3];
        assert!(matches!(
            EstimatorContext::<f64>::agm(&q, &q.order(), &quarter),
            Err(EstimatorError::Cover(LpError::Undercovered(_)))
        ));
        let ctx = EstimatorContext::<f64>::agm_unchecked(&q, &q.order(), vec![0.25; 3]).unwrap();
        let report = verify_estimator(&ctx);
        assert!(report.superadditivity_violations > 0, "{report:?}");
        assert!(report.max_relative_excess > SUPERADDITIVITY_SLACK);
    }

    #[test]
    fn agm_from_solved_cover_bounds_answers() {
        let q = triangle_example();
        let edges: Vec<_> = q.relations().iter().map(|r| r.var_set()).collect();
        let sizes: Vec<u64> = q.relations().iter().map(|r| r.len() as u64).collect();
        let cover: FractionalCover<BigRational> = solve_cover_card(3, &edges, &sizes).unwrap();
        let ctx = EstimatorContext::<f32>::agm(&q, &q.order(), &cover.weights).unwrap();
        let root = ctx.root_estimate() as f64;
        assert!(root >= nested_loop_join(&q).unwrap().len() as f64);
        assert!(root <= cover.bound() * (1.0 + 1e-6));
    }

    /// `R = S = {(i, i)}`: after `x3` every projection has one row.
    fn diagonal(n: usize) -> JoinQuery {
        let vals: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let rows: Vec<[&str; 2]> = vals.iter().map(|v| [v.as_str(), v.as_str()]).collect();
        let rows: Vec<&[&str]> = rows.iter().map(|r| r.as_slice()).collect();
        let r = RawTable::new("R", &["x3", "x1"], &rows);
        let s = RawTable::new("S", &["x3", "x2"], &rows);
        let order: Vec<String> = ["x1", "x2", "x3"].iter().map(|s| s.to_string()).collect();
        encode_instance(&[r, s], &order).unwrap()
    }

    #[test]
    fn polymatroid_on_fd_class() {
        let n = 5;
        let q = diagonal(n);
        let cs = fd_example(n as u64);
        let cover: FractionalCover<BigRational> = solve_cover_degree(&cs).unwrap();
        let order = compatible_order(&cs).unwrap();
        let ctx = EstimatorContext::<f64>::polymatroid(&q, &cs, &order, &cover.weights).unwrap();
        assert!((ctx.root_estimate() - n as f64).abs() < 1e-9);
        let mut w = ctx.walker();
        w.bind(2);
        assert!((w.estimate() - 1.0).abs() < 1e-12);
        w.bind(2);
        w.bind(2);
        assert_eq!(w.estimate(), 1.0);
        let report = verify_estimator(&ctx);
        assert!(report.is_clean(), "{report:?}");
        assert_eq!(report.answers, n as u64);

        assert_eq!(
            EstimatorContext::<f64>::polymatroid(&q, &cs, &q.order(), &cover.weights).unwrap_err(),
            EstimatorError::IncompatibleOrder
        );
    }

    #[test]
    fn polymatroid_binarised() {
        let q = diagonal(6);
        let cs = fd_example(6);
        let cover: FractionalCover<BigRational> = solve_cover_degree(&cs).unwrap();
        let order = compatible_order(&cs).unwrap();
        let bq = bin_query(&q);
        let bcs = bin_constraints(&cs, &bq.layout);
        let border = bq.layout.binarised_order(&order);
        let ctx =
            EstimatorContext::<f64>::polymatroid(&bq.query, &bcs, &border, &cover.weights).unwrap();
        let report = verify_estimator(&ctx);
        assert!(report.is_clean(), "{report:?}");
        assert_eq!(report.answers, 6);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
        assert_eq!(compensated_sum(Vec::<f64>::new()), 0.0);
    }
}
