//! Lexicographically sorted relations and pointer-pair cursors.
//!
//! A relation is stored with its columns rearranged to follow a global
//! variable order, so that binding a prefix `x_1..x_i` of that order always
//! restricts a contiguous block of rows. That block is a [`RangeCursor`];
//! binding the next variable narrows it with two binary searches.

use thiserror::Error;

use crate::relation::{Code, JoinQuery, Relation, VarId};

/// Rows sorted lexicographically with columns in global-order order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortedRelation {
    vars: Vec<VarId>,
    data: Vec<Code>,
    len: usize,
}

/// Row range `[lo, hi]` of a [`SortedRelation`] whose first `depth` columns
/// are fixed. Stored half-open as `lo..end`, so `end == lo` is empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RangeCursor {
    pub lo: usize,
    pub end: usize,
    pub depth: usize,
}

impl RangeCursor {
    /// Inclusive upper row index; `lo - 1` when empty.
    pub fn hi(&self) -> isize {
        self.end as isize - 1
    }

    pub fn count(&self) -> usize {
        self.end - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.lo
    }
}

impl SortedRelation {
    /// Sorts `r` for `order`. Every variable of `r` must occur in `order`.
    pub fn build(r: &Relation, order: &[VarId]) -> Self {
        let mut cols: Vec<(usize, usize)> =
            r.vars()
                .iter()
                .enumerate()
                .map(|(col, v)| {
                    let pos = order.iter().position(|o| o == v).unwrap_or_else(|| {
                        panic!("variable {v} of `{}` missing from order", r.name())
                    });
                    (pos, col)
                })
                .collect();
        cols.sort_unstable();
        let vars: Vec<VarId> = cols.iter().map(|&(_, c)| r.vars()[c]).collect();
        let mut rows: Vec<Vec<Code>> = r
            .rows()
            .iter()
            .map(|row| cols.iter().map(|&(_, c)| row[c]).collect())
            .collect();
        rows.sort_unstable();
        rows.dedup();
        let len = rows.len();
        Self {
            vars,
            data: rows.into_iter().flatten().collect(),
            len,
        }
    }

    /// Variables in column order (consistent with the build order).
    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn row(&self, i: usize) -> &[Code] {
        let a = self.arity();
        &self.data[i * a..(i + 1) * a]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Code]> + '_ {
        (0..self.len).map(move |i| self.row(i))
    }

    pub fn full_cursor(&self) -> RangeCursor {
        RangeCursor {
            lo: 0,
            end: self.len,
            depth: 0,
        }
    }

    #[inline]
    fn cell(&self, row: usize, col: usize) -> Code {
        self.data[row * self.vars.len() + col]
    }

    /// Rows of `c` whose column `c.depth` equals `value`.
    pub fn narrow(&self, c: RangeCursor, value: Code) -> RangeCursor {
        debug_assert!(c.depth < self.arity());
        let col = c.depth;
        let (mut a, mut b) = (c.lo, c.end);
        while a < b {
            let mid = a + (b - a) / 2;
            if self.cell(mid, col) < value {
                a = mid + 1;
            } else {
                b = mid;
            }
        }
        let lo = a;
        b = c.end;
        while a < b {
            let mid = a + (b - a) / 2;
            if self.cell(mid, col) <= value {
                a = mid + 1;
            } else {
                b = mid;
            }
        }
        RangeCursor {
            lo,
            end: a,
            depth: c.depth + 1,
        }
    }
}

/// Per-relation stack of cursors, one entry per bound variable of the
/// relation plus the full range at the bottom.
#[derive(Clone, Debug)]
pub struct CursorStack(Vec<RangeCursor>);

impl CursorStack {
    pub fn new(sr: &SortedRelation) -> Self {
        let mut v = Vec::with_capacity(sr.arity() + 1);
        v.push(sr.full_cursor());
        Self(v)
    }

    pub fn top(&self) -> RangeCursor {
        *self.0.last().expect("cursor stack never empties")
    }

    pub fn push(&mut self, c: RangeCursor) {
        self.0.push(c);
    }

    pub fn pop(&mut self) {
        debug_assert!(self.0.len() > 1);
        self.0.pop();
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("order has {found} variables, query has {expected}")]
    Length { found: usize, expected: usize },
    #[error("variable {0} appears twice or is out of range in the order")]
    NotAPermutation(VarId),
}

/// Checks that `order` is a permutation of `0..n`.
pub fn check_permutation(order: &[VarId], n: usize) -> Result<(), OrderError> {
    if order.len() != n {
        return Err(OrderError::Length {
            found: order.len(),
            expected: n,
        });
    }
    let mut seen = vec![false; n];
    for &v in order {
        if v.index() >= n || std::mem::replace(&mut seen[v.index()], true) {
            return Err(OrderError::NotAPermutation(v));
        }
    }
    Ok(())
}

/// The relations of a query, each sorted for one fixed variable order.
#[derive(Clone, Debug)]
pub struct IndexedQuery {
    order: Vec<VarId>,
    domain_size: usize,
    relations: Vec<SortedRelation>,
    /// For every depth `i`, the relations that contain `order[i]`.
    binders: Vec<Vec<usize>>,
}

impl IndexedQuery {
    pub fn new(q: &JoinQuery, order: &[VarId]) -> Result<Self, OrderError> {
        check_permutation(order, q.num_vars())?;
        let relations: Vec<SortedRelation> = q
            .relations()
            .iter()
            .map(|r| SortedRelation::build(r, order))
            .collect();
        let binders = binders_for(&relations, order);
        Ok(Self {
            order: order.to_vec(),
            domain_size: q.domain_size(),
            relations,
            binders,
        })
    }

    pub fn order(&self) -> &[VarId] {
        &self.order
    }

    pub fn num_vars(&self) -> usize {
        self.order.len()
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn relations(&self) -> &[SortedRelation] {
        &self.relations
    }

    pub fn binders(&self, depth: usize) -> &[usize] {
        &self.binders[depth]
    }
}

pub(crate) fn binders_for(relations: &[SortedRelation], order: &[VarId]) -> Vec<Vec<usize>> {
    order
        .iter()
        .map(|v| {
            relations
                .iter()
                .enumerate()
                .filter(|(_, r)| r.vars().contains(v))
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}

/// Mutable per-run state: the current prefix and every relation's cursor
/// stack. Binding pushes, unbinding pops.
#[derive(Clone, Debug)]
pub struct PrefixState<'a> {
    index: &'a IndexedQuery,
    stacks: Vec<CursorStack>,
    /// Codes of the bound prefix, in order positions.
    prefix: Vec<Code>,
    /// Full assignment indexed by `VarId`; only bound entries are meaningful.
    assignment: Vec<Code>,
}

impl<'a> PrefixState<'a> {
    pub fn new(index: &'a IndexedQuery) -> Self {
        Self {
            index,
            stacks: index.relations.iter().map(CursorStack::new).collect(),
            prefix: Vec::with_capacity(index.num_vars()),
            assignment: vec![0; index.num_vars()],
        }
    }

    pub fn index(&self) -> &'a IndexedQuery {
        self.index
    }

    pub fn depth(&self) -> usize {
        self.prefix.len()
    }

    pub fn is_full(&self) -> bool {
        self.prefix.len() == self.index.num_vars()
    }

    pub fn prefix(&self) -> &[Code] {
        &self.prefix
    }

    /// Assignment indexed by `VarId`; entries of unbound variables are stale.
    pub fn assignment(&self) -> &[Code] {
        &self.assignment
    }

    /// No relation has an empty range under the current prefix.
    pub fn is_consistent(&self) -> bool {
        self.stacks.iter().all(|s| !s.top().is_empty())
    }

    /// Binds the next variable of the order to `value`.
    pub fn bind(&mut self, value: Code) {
        let depth = self.depth();
        for &r in &self.index.binders[depth] {
            let c = self.stacks[r].top();
            let next = if c.is_empty() {
                RangeCursor {
                    lo: c.lo,
                    end: c.lo,
                    depth: c.depth + 1,
                }
            } else {
                self.index.relations[r].narrow(c, value)
            };
            self.stacks[r].push(next);
        }
        self.assignment[self.index.order[depth].index()] = value;
        self.prefix.push(value);
    }

    /// Undoes the last [`PrefixState::bind`].
    pub fn unbind(&mut self) {
        self.prefix.pop().expect("unbind at root");
        let depth = self.depth();
        for &r in &self.index.binders[depth] {
            self.stacks[r].pop();
        }
    }

    pub fn cursor(&self, relation: usize) -> RangeCursor {
        self.stacks[relation].top()
    }
}
