//! Branch-and-bound join enumeration.
//!
//! The search binds variables one at a time in a fixed order, tries every
//! code of the domain for the next variable, and backtracks as soon as some
//! relation has no row left under the current prefix. Run directly it pays
//! an extra `|D|` factor per node; run on the binarised query it branches
//! on bits and is worst-case optimal.

use serde::Serialize;
use thiserror::Error;

use crate::binarise::bin_query;
use crate::constraints::{check_compatible, compatible_order, ConstraintSet, CyclicDependency};
use crate::index::{IndexedQuery, OrderError, PrefixState};
use crate::relation::{Code, JoinQuery, VarId};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EnumerationStats {
    pub recursive_calls: u64,
    pub consistent_calls: u64,
    pub answers_emitted: u64,
    /// Calls per prefix length `0..=n`.
    pub per_depth_calls: Vec<u64>,
}

struct Search<'a, 'q, O, S> {
    state: PrefixState<'q>,
    stats: &'a mut EnumerationStats,
    observer: O,
    sink: S,
}

impl<O, S> Search<'_, '_, O, S>
where
    O: FnMut(&[Code], bool),
    S: FnMut(&[Code]),
{
    fn call(&mut self) {
        let depth = self.state.depth();
        self.stats.recursive_calls += 1;
        self.stats.per_depth_calls[depth] += 1;
        let consistent = self.state.is_consistent();
        (self.observer)(self.state.prefix(), consistent);
        if !consistent {
            return;
        }
        self.stats.consistent_calls += 1;
        if self.state.is_full() {
            self.stats.answers_emitted += 1;
            (self.sink)(self.state.assignment());
            return;
        }
        for d in 0..self.state.index().domain_size() as Code {
            self.state.bind(d);
            self.call();
            self.state.unbind();
        }
    }
}

/// Runs the search over `index`, passing each answer to `sink` as codes
/// indexed by `VarId`. Answers arrive in lexicographic order of the
/// index's variable order.
pub fn wcj(index: &IndexedQuery, sink: impl FnMut(&[Code])) -> EnumerationStats {
    wcj_observed(index, |_, _| {}, sink)
}

/// Like [`wcj`], also reporting every call's prefix (codes in order
/// positions) and whether it was consistent.
pub fn wcj_observed(
    index: &IndexedQuery,
    observer: impl FnMut(&[Code], bool),
    sink: impl FnMut(&[Code]),
) -> EnumerationStats {
    let mut stats = EnumerationStats {
        per_depth_calls: vec![0; index.num_vars() + 1],
        ..Default::default()
    };
    let mut search = Search {
        state: PrefixState::new(index),
        stats: &mut stats,
        observer,
        sink,
    };
    search.call();
    stats
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum JoinError {
    #[error(transparent)]
    Cyclic(#[from] CyclicDependency),
    #[error("order is not compatible with the degree constraints")]
    IncompatibleOrder,
    #[error(transparent)]
    Order(#[from] OrderError),
}

/// Picks the variable order for a run: the given one (checked against `cs`
/// when present), else a compatible order of `cs`, else the declared order.
pub fn resolve_order(
    q: &JoinQuery,
    cs: Option<&ConstraintSet>,
    order: Option<&[VarId]>,
) -> Result<Vec<VarId>, JoinError> {
    match (cs, order) {
        (Some(cs), Some(order)) => {
            compatible_order(cs)?;
            if !check_compatible(cs, order) {
                return Err(JoinError::IncompatibleOrder);
            }
            Ok(order.to_vec())
        }
        (Some(cs), None) => Ok(compatible_order(cs)?),
        (None, Some(order)) => Ok(order.to_vec()),
        (None, None) => Ok(q.order()),
    }
}

/// Runs the search on `bin(q)` with each variable's bits kept contiguous,
/// and passes de-binarised answers (codes indexed by `VarId`) to `sink`.
pub fn wcj_binarised(
    q: &JoinQuery,
    cs: Option<&ConstraintSet>,
    order: Option<&[VarId]>,
    mut sink: impl FnMut(&[Code]),
) -> Result<EnumerationStats, JoinError> {
    let order = resolve_order(q, cs, order)?;
    let bq = bin_query(q);
    let index = IndexedQuery::new(&bq.query, &bq.layout.binarised_order(&order))?;
    let mut codes = Vec::with_capacity(q.num_vars());
    Ok(wcj(&index, |bits| {
        bq.layout.fold_into(bits, &mut codes);
        sink(&codes);
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarise::bin_query;
    use crate::constraints::tests::fd_example;
    use crate::oracle::{nested_loop_join, prefix_counts};
    use crate::relation::tests::triangle_example;

    fn collect(index: &IndexedQuery) -> (Vec<Vec<Code>>, EnumerationStats) {
        let mut out = Vec::new();
        let stats = wcj(index, |a| out.push(a.to_vec()));
        (out, stats)
    }

    #[test]
    fn triangle_example_answers_in_order() {
        let q = triangle_example();
        let (answers, stats) = collect(&IndexedQuery::new(&q, &q.order()).unwrap());
        assert_eq!(
            answers,
            vec![vec![0, 0, 3], vec![1, 0, 2], vec![1, 1, 0], vec![1, 1, 2]]
        );
        assert_eq!(stats.answers_emitted, 4);
        assert!(stats.answers_emitted <= stats.consistent_calls);
        assert!(stats.consistent_calls <= stats.recursive_calls);
    }

    #[test]
    fn triangle_example_call_bound() {
        let q = triangle_example();
        let prefix = prefix_counts(&q, &q.order()).unwrap();
        assert_eq!(prefix, vec![3, 4, 4]);
        let (_, stats) = collect(&IndexedQuery::new(&q, &q.order()).unwrap());
        let bound = (1 + q.domain_size() as u64) * prefix.iter().sum::<u64>();
        assert_eq!(bound, 55);
        assert!(
            stats.recursive_calls <= bound,
            "{} > {bound}",
            stats.recursive_calls
        );
        // root + |D| per consistent non-full node
        assert_eq!(stats.recursive_calls, 1 + 4 * (1 + 3 + 4));
    }

    #[test]
    fn empty_relation_stops_at_root() {
        let q = triangle_example().with_relation_rows("S", vec![]).unwrap();
        let (answers, stats) = collect(&IndexedQuery::new(&q, &q.order()).unwrap());
        assert!(answers.is_empty());
        assert_eq!(stats.recursive_calls, 1);
    }

    #[test]
    fn binarised_matches_plain() {
        let q = triangle_example();
        let mut answers = Vec::new();
        let stats = wcj_binarised(&q, None, None, |a| answers.push(a.to_vec())).unwrap();
        assert_eq!(
            answers,
            vec![vec![0, 0, 3], vec![1, 0, 2], vec![1, 1, 0], vec![1, 1, 2]]
        );
        assert_eq!(stats.per_depth_calls.len(), 7);
    }

    /// Every call below the root is a child of a consistent node at the
    /// previous depth, so calls at depth `k` are `2 · |ans(bin Q|X_{k-1})|`.
    #[test]
    fn binarised_per_depth_calls_match_prefix_counts() {
        let q = triangle_example();
        let bq = bin_query(&q);
        let border = bq.layout.binarised_order(&q.order());
        let counts = prefix_counts(&bq.query, &border).unwrap();
        let stats = wcj_binarised(&q, None, None, |_| {}).unwrap();
        let mut expected = vec![1];
        expected.push(2);
        expected.extend(counts[..counts.len() - 1].iter().map(|c| 2 * c));
        assert_eq!(stats.per_depth_calls, expected);
    }

    /// After `x1 = 0` (bits 00) the first bit of `x2` set to 1 is refuted
    /// immediately, so no call ever extends the prefix `0 0 1`.
    #[test]
    fn binarised_skips_useless_values() {
        let q = triangle_example();
        let bq = bin_query(&q);
        let index = IndexedQuery::new(&bq.query, &bq.layout.binarised_order(&q.order())).unwrap();
        let mut seen = Vec::new();
        wcj_observed(&index, |p, ok| seen.push((p.to_vec(), ok)), |_| {});
        assert!(seen.contains(&(vec![0, 0, 1], false)));
        assert!(seen.contains(&(vec![0, 0, 0], true)));
        assert!(!seen.iter().any(|(p, _)| p.len() > 3 && p[..3] == [0, 0, 1]));
        // plain search tries all four x2 values under x1 = 0
        let plain = IndexedQuery::new(&q, &q.order()).unwrap();
        let mut under_zero = 0;
        wcj_observed(
            &plain,
            |p, _| {
                if p.len() == 2 && p[0] == 0 {
                    under_zero += 1;
                }
            },
            |_| {},
        );
        assert_eq!(under_zero, 4);
    }

    #[test]
    fn orders_from_constraints() {
        let cs = fd_example(4);
        let r = crate::relation::RawTable::new("R", &["x3", "x1"], &[&["1", "1"], &["2", "2"]]);
        let s = crate::relation::RawTable::new("S", &["x3", "x2"], &[&["1", "1"], &["2", "2"]]);
        let order: Vec<String> = ["x1", "x2", "x3"].iter().map(|s| s.to_string()).collect();
        let q = crate::relation::encode_instance(&[r, s], &order).unwrap();
        assert_eq!(
            resolve_order(&q, Some(&cs), None).unwrap(),
            vec![VarId(2), VarId(0), VarId(1)]
        );
        assert_eq!(
            resolve_order(&q, Some(&cs), Some(&q.order())),
            Err(JoinError::IncompatibleOrder)
        );
        let mut answers = Vec::new();
        wcj_binarised(&q, Some(&cs), None, |a| answers.push(a.to_vec())).unwrap();
        let oracle: Vec<_> = nested_loop_join(&q).unwrap().into_iter().collect();
        answers.sort();
        assert_eq!(answers, oracle);
    }
}
